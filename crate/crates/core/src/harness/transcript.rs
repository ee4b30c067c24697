//! Line-oriented transcript: one canonical frame per line, plus decisions,
//! private observations, ground truth and the final ledger.
//!
//! ```text
//! E <idx> <tick> <from> <to> <channel> <step> <frame hex>
//! D <idx> <tick> <party> <kind> accepted|rejected <reason> as_of=<seq|-> synced=<tick> input=<idx> chain=<label@seq,..|->
//! O <event idx> <party> <hex>
//! G identify <event idx> <user>
//! G session <decision idx> <user>
//! L <ledger entry hex>
//! ```
//!
//! `E` and `D` lines share one index space. `G` lines are ground truth for
//! scoring and are never part of an adversary view.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::actors::{
    ChainRef, ChannelId, Decision, DecisionKind, PartyId, ProtocolMessage, Role, Settings, Variant, Verdict, LEDGER,
};
use crate::crypto::ParamSet;
use crate::ledger::{Ledger, LedgerConfig, LedgerEntry, ReusePolicy};

use super::HarnessError;

pub const MAGIC: &str = "unlinkid-transcript v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub idx: u64,
    pub tick: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub channel: ChannelId,
    pub step: u8,
    pub msg: ProtocolMessage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub idx: u64,
    pub tick: u64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line {
    Event(Event),
    Decision(DecisionRecord),
    Observe { event: u64, party: PartyId, value: Vec<u8> },
    Identify { event: u64, user: PartyId },
    Session { decision: u64, user: PartyId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyInfo {
    pub id: PartyId,
    pub role: Role,
    pub categories: Vec<String>,
    pub policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub scenario: String,
    pub variant: Variant,
    pub seed: u64,
    pub params: ParamSet,
    pub settings: Settings,
    pub config: LedgerConfig,
    pub parties: Vec<PartyInfo>,
    pub lines: Vec<Line>,
    pub ledger: Vec<LedgerEntry>,
}

impl Transcript {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.lines.iter().filter_map(|l| match l {
            Line::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.lines.iter().filter_map(|l| match l {
            Line::Decision(d) => Some(d),
            _ => None,
        })
    }

    pub fn event(&self, idx: u64) -> Option<&Event> {
        self.events().find(|e| e.idx == idx)
    }

    pub fn decision(&self, idx: u64) -> Option<&DecisionRecord> {
        self.decisions().find(|d| d.idx == idx)
    }

    /// Number of `E` and `D` lines, i.e. the next free index.
    pub fn len(&self) -> u64 {
        self.lines.iter().filter(|l| matches!(l, Line::Event(_) | Line::Decision(_))).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn role_of(&self, party: &str) -> Option<Role> {
        self.parties.iter().find(|p| p.id == party).map(|p| p.role)
    }

    pub fn party(&self, id: &str) -> Option<&PartyInfo> {
        self.parties.iter().find(|p| p.id == id)
    }

    pub fn users(&self) -> Vec<PartyId> {
        self.parties.iter().filter(|p| p.role == Role::User).map(|p| p.id.clone()).collect()
    }

    /// Rebuilds and re-validates the embedded ledger.
    pub fn ledger(&self) -> Result<Ledger, HarnessError> {
        let mut l = Ledger::new(self.config.clone()).map_err(|e| HarnessError::Transcript(e.to_string()))?;
        for e in &self.ledger {
            l.replicate(e).map_err(|err| HarnessError::Transcript(format!("ledger entry {}: {err}", e.seq)))?;
        }
        Ok(l)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let s = &self.settings;
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "scenario {}", self.scenario);
        let _ = writeln!(out, "variant {}", self.variant);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "params {}", self.params);
        let _ = writeln!(
            out,
            "settings interval_ticks={} timely_period={} max_lag={} challenge_window={} prefix_bits={} reuse={}",
            s.interval_ticks,
            s.timely_period,
            s.max_lag,
            s.challenge_window,
            s.prefix_bits,
            s.reuse.name()
        );
        let _ = writeln!(out, "config {}", hex::encode(self.config.encode()));
        for p in &self.parties {
            let _ = write!(out, "party {} {} categories={}", p.id, p.role, p.categories.join(","));
            if let Some(policy) = &p.policy {
                let _ = write!(out, " policy={policy}");
            }
            out.push('\n');
        }
        for l in &self.lines {
            render_line(&mut out, l);
        }
        for e in &self.ledger {
            let _ = writeln!(out, "L {}", hex::encode(e.encode()));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Transcript, HarnessError> {
        let mut lines = text.lines().enumerate();
        let err = |n: usize, m: &str| HarnessError::Transcript(format!("line {}: {m}", n + 1));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(HarnessError::Transcript(format!("missing {MAGIC:?} header"))),
        }
        let mut header = |key: &str| -> Result<String, HarnessError> {
            let (n, l) = lines.next().ok_or_else(|| HarnessError::Transcript(format!("missing {key} line")))?;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| err(n, &format!("expected {key}")))
        };
        let scenario = header("scenario")?;
        let variant = Variant::from_str(&header("variant")?).map_err(HarnessError::Transcript)?;
        let seed = header("seed")?.parse().map_err(|_| HarnessError::Transcript("bad seed".into()))?;
        let params = ParamSet::from_str(&header("params")?).map_err(|e| HarnessError::Transcript(e.to_string()))?;
        let settings = parse_settings(&header("settings")?)?;
        let config = hex::decode(header("config")?)
            .ok()
            .and_then(|b| LedgerConfig::decode(&b).ok())
            .ok_or_else(|| HarnessError::Transcript("bad config".into()))?;
        let mut t = Transcript {
            scenario,
            variant,
            seed,
            params,
            settings,
            config,
            parties: vec![],
            lines: vec![],
            ledger: vec![],
        };
        let mut next_idx = 0u64;
        for (n, l) in lines {
            let f: Vec<&str> = l.split(' ').collect();
            let bad = |m: &str| err(n, m);
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad("bad number"));
            match f.as_slice() {
                ["party", id, role, rest @ ..] => {
                    let role = Role::from_str(role).map_err(|e| bad(&e))?;
                    let mut categories = vec![];
                    let mut policy = None;
                    for kv in rest {
                        match kv.split_once('=') {
                            Some(("categories", v)) => {
                                categories = v.split(',').filter(|c| !c.is_empty()).map(str::to_string).collect()
                            }
                            Some(("policy", v)) => policy = Some(v.to_string()),
                            _ => return Err(bad("unknown party field")),
                        }
                    }
                    t.parties.push(PartyInfo { id: id.to_string(), role, categories, policy });
                }
                ["E", idx, tick, from, to, channel, step, frame] => {
                    let idx = num(idx)?;
                    if idx != next_idx {
                        return Err(bad("index out of sequence"));
                    }
                    next_idx += 1;
                    let bytes = hex::decode(frame).map_err(|_| bad("bad hex"))?;
                    let msg = ProtocolMessage::decode(&bytes).map_err(|e| bad(&format!("frame: {e}")))?;
                    t.lines.push(Line::Event(Event {
                        idx,
                        tick: num(tick)?,
                        from: from.to_string(),
                        to: to.to_string(),
                        channel: ChannelId::from_str(channel).map_err(|e| bad(&e))?,
                        step: step.parse().map_err(|_| bad("bad step"))?,
                        msg,
                    }));
                }
                ["D", idx, tick, party, kind, verdict, reason, as_of, synced, input, chain] => {
                    let idx = num(idx)?;
                    if idx != next_idx {
                        return Err(bad("index out of sequence"));
                    }
                    next_idx += 1;
                    let kv = |s: &str, k: &str| s.strip_prefix(k).and_then(|r| r.strip_prefix('=')).map(str::to_string);
                    let as_of = match kv(as_of, "as_of").ok_or_else(|| bad("as_of"))?.as_str() {
                        "-" => None,
                        v => Some(num(v)?),
                    };
                    let synced_at = num(&kv(synced, "synced").ok_or_else(|| bad("synced"))?)?;
                    let input = num(&kv(input, "input").ok_or_else(|| bad("input"))?)?;
                    let chain = parse_chain(&kv(chain, "chain").ok_or_else(|| bad("chain"))?).ok_or_else(|| bad("chain"))?;
                    let accepted = match *verdict {
                        "accepted" => true,
                        "rejected" => false,
                        _ => return Err(bad("verdict")),
                    };
                    t.lines.push(Line::Decision(DecisionRecord {
                        idx,
                        tick: num(tick)?,
                        decision: Decision {
                            party: party.to_string(),
                            kind: DecisionKind::parse(kind).ok_or_else(|| bad("decision kind"))?,
                            input,
                            as_of,
                            synced_at,
                            verdict: Verdict { accepted, reason: reason.to_string(), chain },
                        },
                    }));
                }
                ["O", event, party, value] => t.lines.push(Line::Observe {
                    event: num(event)?,
                    party: party.to_string(),
                    value: hex::decode(value).map_err(|_| bad("bad hex"))?,
                }),
                ["G", "identify", event, user] => {
                    t.lines.push(Line::Identify { event: num(event)?, user: user.to_string() })
                }
                ["G", "session", decision, user] => {
                    t.lines.push(Line::Session { decision: num(decision)?, user: user.to_string() })
                }
                ["L", entry] => {
                    let bytes = hex::decode(entry).map_err(|_| bad("bad hex"))?;
                    t.ledger.push(LedgerEntry::decode(&bytes).map_err(|e| bad(&format!("entry: {e}")))?);
                }
                [""] => {}
                _ => return Err(bad("unrecognised line")),
            }
        }
        Ok(t)
    }
}

fn render_line(out: &mut String, l: &Line) {
    let _ = match l {
        Line::Event(e) => writeln!(
            out,
            "E {} {} {} {} {} {} {}",
            e.idx,
            e.tick,
            e.from,
            e.to,
            e.channel,
            e.step,
            hex::encode(e.msg.encode())
        ),
        Line::Decision(d) => {
            let v = &d.decision.verdict;
            writeln!(
                out,
                "D {} {} {} {} {} {} as_of={} synced={} input={} chain={}",
                d.idx,
                d.tick,
                d.decision.party,
                d.decision.kind.name(),
                if v.accepted { "accepted" } else { "rejected" },
                v.reason,
                d.decision.as_of.map_or("-".to_string(), |s| s.to_string()),
                d.decision.synced_at,
                d.decision.input,
                render_chain(&v.chain)
            )
        }
        Line::Observe { event, party, value } => writeln!(out, "O {event} {party} {}", hex::encode(value)),
        Line::Identify { event, user } => writeln!(out, "G identify {event} {user}"),
        Line::Session { decision, user } => writeln!(out, "G session {decision} {user}"),
    };
}

pub fn render_chain(chain: &[ChainRef]) -> String {
    if chain.is_empty() {
        return "-".into();
    }
    chain.iter().map(|c| format!("{}@{}", c.label, c.seq)).collect::<Vec<_>>().join(",")
}

fn parse_chain(s: &str) -> Option<Vec<ChainRef>> {
    if s == "-" {
        return Some(vec![]);
    }
    s.split(',')
        .map(|c| {
            let (label, seq) = c.split_once('@')?;
            Some(ChainRef { label: label.to_string(), seq: seq.parse().ok()? })
        })
        .collect()
}

fn parse_settings(s: &str) -> Result<Settings, HarnessError> {
    let mut out = Settings::default();
    let bad = |m: &str| HarnessError::Transcript(format!("settings: {m}"));
    for kv in s.split(' ') {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(kv))?;
        let n = || v.parse::<u64>().map_err(|_| bad(kv));
        match k {
            "interval_ticks" => out.interval_ticks = n()?,
            "timely_period" => out.timely_period = n()?,
            "max_lag" => out.max_lag = n()?,
            "challenge_window" => out.challenge_window = n()?,
            "prefix_bits" => out.prefix_bits = n()?,
            "reuse" => out.reuse = ReusePolicy::from_str(v).map_err(|e| bad(&e))?,
            _ => return Err(bad(kv)),
        }
    }
    Ok(out)
}

/// True if `party` is the ledger pseudo-party.
pub fn is_ledger(party: &str) -> bool {
    party == LEDGER
}
