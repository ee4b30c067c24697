//! Scenario scripts: parties, variant, settings and an ordered action list,
//! written as TOML.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Deserialize;

use crate::actors::{Role, Settings, Variant};
use crate::crypto::ParamSet;
use crate::ledger::ReusePolicy;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Test,
    Desk,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsSpec {
    pub interval_ticks: Option<u64>,
    pub timely_period: Option<u64>,
    pub max_lag: Option<u64>,
    pub challenge_window: Option<u64>,
    pub prefix_bits: Option<u64>,
    pub reuse: Option<String>,
    /// Probability that a delivery attempt is lost and retried.
    pub loss_rate: Option<f64>,
    /// Deliver queued messages in seeded random order instead of FIFO.
    pub shuffle: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartySpec {
    pub id: String,
    pub role: String,
    #[serde(default)]
    pub categories: Vec<String>,
    /// CP interval keys to create (V4).
    pub intervals: Option<u64>,
    /// Default key count for this user's enrolments.
    pub keys_per_interval: Option<usize>,
    /// Category a service requires.
    pub policy: Option<String>,
    /// Whether this user passes identity checks (default true).
    pub kyc: Option<bool>,
    /// Overrides the derived per-party seed.
    pub seed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "do", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActionSpec {
    Enroll {
        user: String,
        cp: String,
        ap: Option<String>,
        keys: Option<usize>,
        intervals: Option<Vec<u64>>,
        category: Option<String>,
        service: Option<String>,
        expect: Option<String>,
    },
    Authorize { user: String, service: String, ap: String, expect: Option<String> },
    Prefetch { user: String, ap: String, service: Option<String>, category: Option<String>, expect: Option<String> },
    Redeem { user: String, service: String, expect: Option<String> },
    Replay { user: String, service: String, expect: Option<String> },
    Spend { user: String, service: String, ap: String, expect: Option<String> },
    Respend { user: String, service: String, ap: String, expect: Option<String> },
    Revoke {
        cp: String,
        scope: String,
        category: Option<String>,
        interval: Option<u64>,
        user: Option<String>,
        slot: Option<usize>,
        expect: Option<String>,
    },
    Advance { ticks: Option<u64> },
    Partition { ap: String },
    Unpartition { ap: String },
    Parallel { tasks: Vec<ActionSpec> },
}

impl ActionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSpec::Enroll { .. } => "enroll",
            ActionSpec::Authorize { .. } => "authorize",
            ActionSpec::Prefetch { .. } => "prefetch",
            ActionSpec::Redeem { .. } => "redeem",
            ActionSpec::Replay { .. } => "replay",
            ActionSpec::Spend { .. } => "spend",
            ActionSpec::Respend { .. } => "respend",
            ActionSpec::Revoke { .. } => "revoke",
            ActionSpec::Advance { .. } => "advance",
            ActionSpec::Partition { .. } => "partition",
            ActionSpec::Unpartition { .. } => "unpartition",
            ActionSpec::Parallel { .. } => "parallel",
        }
    }

    pub fn expect(&self) -> Option<&str> {
        match self {
            ActionSpec::Enroll { expect, .. }
            | ActionSpec::Authorize { expect, .. }
            | ActionSpec::Prefetch { expect, .. }
            | ActionSpec::Redeem { expect, .. }
            | ActionSpec::Replay { expect, .. }
            | ActionSpec::Spend { expect, .. }
            | ActionSpec::Respend { expect, .. }
            | ActionSpec::Revoke { expect, .. } => expect.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    variant: String,
    scale: Scale,
    params: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    settings: SettingsSpec,
    #[serde(default, rename = "party")]
    parties: Vec<PartySpec>,
    #[serde(default, rename = "action")]
    actions: Vec<ActionSpec>,
}

/// What a task is expected to end with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Success,
    Rejected(Option<String>),
}

impl FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "accepted" || s == "completed" || s == "success" => Ok(Expectation::Success),
            None if s == "rejected" => Ok(Expectation::Rejected(None)),
            Some(("rejected", reason)) if !reason.is_empty() => Ok(Expectation::Rejected(Some(reason.to_string()))),
            _ => Err(format!("bad expectation {s:?} (expected accepted, rejected or rejected:<reason>)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Party {
    pub id: String,
    pub role: Role,
    pub categories: Vec<String>,
    pub intervals: u64,
    pub keys_per_interval: usize,
    pub policy: String,
    pub kyc: bool,
    pub seed: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub variant: Variant,
    pub scale: Scale,
    pub params: Option<ParamSet>,
    pub seed: u64,
    pub settings: Settings,
    pub loss_rate: f64,
    pub shuffle: bool,
    pub parties: Vec<Party>,
    pub actions: Vec<ActionSpec>,
}

pub const DEFAULT_CATEGORY: &str = "general";

pub fn parse_params(s: &str) -> Result<ParamSet, String> {
    ParamSet::from_str(s).map_err(|e| format!("{e} (expected toy, compact or desk)"))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, HarnessError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let bad = |m: String| HarnessError::Parse(m);
        let variant = Variant::from_str(&raw.variant).map_err(bad)?;
        let params = raw.params.as_deref().map(parse_params).transpose().map_err(bad)?;
        let s = &raw.settings;
        let defaults = Settings::default();
        let reuse = match &s.reuse {
            Some(r) => ReusePolicy::from_str(r).map_err(bad)?,
            None => defaults.reuse,
        };
        let settings = Settings {
            interval_ticks: s.interval_ticks.unwrap_or(defaults.interval_ticks).max(1),
            timely_period: s.timely_period.unwrap_or(defaults.timely_period).max(1),
            max_lag: s.max_lag.unwrap_or(defaults.max_lag),
            challenge_window: s.challenge_window.unwrap_or(defaults.challenge_window),
            prefix_bits: s.prefix_bits.unwrap_or(defaults.prefix_bits),
            reuse,
        };
        let loss_rate = s.loss_rate.unwrap_or(0.0);
        if !(0.0..1.0).contains(&loss_rate) {
            return Err(bad(format!("loss_rate must be in [0, 1), got {loss_rate}")));
        }
        let mut parties = Vec::new();
        let mut ids = BTreeSet::new();
        for p in raw.parties {
            let role = Role::from_str(&p.role).map_err(bad)?;
            if p.id.is_empty() || p.id.contains(char::is_whitespace) || p.id == crate::actors::LEDGER {
                return Err(bad(format!("invalid party id {:?}", p.id)));
            }
            if !ids.insert(p.id.clone()) {
                return Err(bad(format!("duplicate party id {:?}", p.id)));
            }
            let categories = if p.categories.is_empty() { vec![DEFAULT_CATEGORY.to_string()] } else { p.categories };
            parties.push(Party {
                id: p.id,
                role,
                categories,
                intervals: p.intervals.unwrap_or(1).max(1),
                keys_per_interval: p.keys_per_interval.unwrap_or(1).max(1),
                policy: p.policy.unwrap_or_else(|| DEFAULT_CATEGORY.to_string()),
                kyc: p.kyc.unwrap_or(true),
                seed: p.seed,
            });
        }
        let scenario = Scenario {
            name: raw.name,
            variant,
            scale: raw.scale,
            params,
            seed: raw.seed.unwrap_or(0),
            settings,
            loss_rate,
            shuffle: s.shuffle.unwrap_or(false),
            parties,
            actions: raw.actions,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn party(&self, id: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.id == id)
    }

    /// Parameter set to run with, honouring an override. Toy and compact
    /// keys are refused unless the scenario is tagged test-scale.
    pub fn effective_params(&self, requested: Option<ParamSet>) -> Result<ParamSet, HarnessError> {
        let p = requested.or(self.params).unwrap_or(match self.scale {
            Scale::Test => ParamSet::Compact,
            Scale::Desk => ParamSet::Desk,
        });
        if p.is_test_only() && self.scale != Scale::Test {
            return Err(HarnessError::Parse(format!(
                "parameter set {} is only permitted for scenarios with scale = \"test\"",
                p.name()
            )));
        }
        Ok(p)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        for a in &self.actions {
            self.validate_action(a, false)?;
        }
        Ok(())
    }

    fn want(&self, id: &str, role: Role, what: &str) -> Result<(), HarnessError> {
        match self.party(id) {
            Some(p) if p.role == role => Ok(()),
            Some(p) => Err(HarnessError::Parse(format!("{what} {id:?} is a {}, expected a {}", p.role, role))),
            None => Err(HarnessError::Parse(format!("{what} {id:?} is not a configured party"))),
        }
    }

    fn validate_action(&self, a: &ActionSpec, nested: bool) -> Result<(), HarnessError> {
        use ActionSpec::*;
        if let Some(e) = a.expect() {
            Expectation::from_str(e).map_err(HarnessError::Parse)?;
        }
        match a {
            Enroll { user, cp, ap, service, .. } => {
                self.want(user, Role::User, "user")?;
                self.want(cp, Role::Cp, "cp")?;
                if let Some(ap) = ap {
                    self.want(ap, Role::Ap, "ap")?;
                }
                if let Some(s) = service {
                    self.want(s, Role::Service, "service")?;
                }
                if matches!(self.variant, Variant::V1 | Variant::V2) && ap.is_none() {
                    return Err(HarnessError::Parse(format!("{} enrolment needs an ap", self.variant)));
                }
            }
            Authorize { user, service, ap, .. } | Spend { user, service, ap, .. } | Respend { user, service, ap, .. } => {
                self.want(user, Role::User, "user")?;
                self.want(service, Role::Service, "service")?;
                self.want(ap, Role::Ap, "ap")?;
            }
            Prefetch { user, ap, service, .. } => {
                self.want(user, Role::User, "user")?;
                self.want(ap, Role::Ap, "ap")?;
                if let Some(s) = service {
                    self.want(s, Role::Service, "service")?;
                }
            }
            Redeem { user, service, .. } | Replay { user, service, .. } => {
                self.want(user, Role::User, "user")?;
                self.want(service, Role::Service, "service")?;
            }
            Revoke { cp, scope, user, .. } => {
                self.want(cp, Role::Cp, "cp")?;
                match scope.as_str() {
                    "all" => {}
                    "one" => {
                        let Some(u) = user else {
                            return Err(HarnessError::Parse("revoke scope \"one\" needs a user".into()));
                        };
                        self.want(u, Role::User, "user")?;
                    }
                    other => return Err(HarnessError::Parse(format!("unknown revoke scope {other:?} (expected all or one)"))),
                }
            }
            Advance { .. } => {
                if nested {
                    return Err(HarnessError::Parse("advance is not allowed inside parallel".into()));
                }
            }
            Partition { ap } | Unpartition { ap } => self.want(ap, Role::Ap, "ap")?,
            Parallel { tasks } => {
                if nested {
                    return Err(HarnessError::Parse("parallel blocks do not nest".into()));
                }
                for t in tasks {
                    self.validate_action(t, true)?;
                }
            }
        }
        Ok(())
    }
}
