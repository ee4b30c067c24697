//! The simulated world: a seeded scheduler, a logical clock, the shared
//! ledger and every party's state machine, driven by a scenario's actions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::actors::cp::RevokeScope;
use crate::actors::{
    AuthProvider, CertProvider, ChannelId, Decision, DecisionKind, Envelope, Io, PartyId, Plan, ProtocolMessage, Role,
    ServiceProvider, TaskId, TaskOutcome, Wallet, LEDGER,
};
use crate::crypto::{seeded_rng, ParamSet};
use crate::ledger::{Ledger, LedgerError, Payload, Receipt, SharedLedger, Submission};
use crate::KeyPair;

use super::scenario::{ActionSpec, Expectation, Scenario};
use super::transcript::{DecisionRecord, Event, Line, PartyInfo, Transcript};
use super::HarnessError;

/// Deliveries allowed per drain before the run is declared stuck.
const MAX_DELIVERIES: usize = 200_000;
/// Times a message may be lost before it is delivered regardless.
const MAX_RETRIES: u32 = 16;
/// Secrets shorter than this are too small for a meaningful byte scan.
const MIN_SCAN_LEN: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub params: Option<ParamSet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionOutcome {
    pub label: String,
    pub outcome: TaskOutcome,
    pub expect: Option<Expectation>,
}

impl ActionOutcome {
    /// True if the outcome is a success or matches an explicit expectation.
    pub fn ok(&self) -> bool {
        match &self.expect {
            None | Some(Expectation::Success) => self.outcome.is_success(),
            Some(Expectation::Rejected(None)) => !self.outcome.is_success(),
            Some(Expectation::Rejected(Some(r))) => !self.outcome.is_success() && self.outcome.reason() == r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub transcript: Transcript,
    pub ledger: Ledger,
    pub outcomes: Vec<ActionOutcome>,
    /// Deadlock and step-limit reports.
    pub stalls: Vec<String>,
    /// Wallet secrets found in recorded traffic.
    pub view_leaks: Vec<String>,
}

impl RunResult {
    pub fn success(&self) -> bool {
        self.outcomes.iter().all(ActionOutcome::ok) && self.stalls.is_empty() && self.view_leaks.is_empty()
    }

    pub fn sessions(&self) -> usize {
        self.transcript
            .decisions()
            .filter(|d| d.decision.kind == DecisionKind::ServiceAccept && d.decision.verdict.accepted)
            .count()
    }

    pub fn authorisations(&self) -> usize {
        self.transcript
            .decisions()
            .filter(|d| {
                matches!(
                    d.decision.kind,
                    DecisionKind::ApAssert | DecisionKind::ApAuthorize | DecisionKind::ApVoucher | DecisionKind::ApSpend
                ) && d.decision.verdict.accepted
            })
            .count()
    }

    pub fn summary(&self) -> String {
        let t = &self.transcript;
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", t.scenario);
        let _ = writeln!(out, "variant {}", t.variant);
        let _ = writeln!(out, "seed {}", t.seed);
        let _ = writeln!(out, "params {}", t.params);
        let _ = writeln!(out, "ticks {}", t.events().map(|e| e.tick).max().unwrap_or(0));
        let _ = writeln!(out, "events {}", t.events().count());
        let _ = writeln!(out, "decisions {}", t.decisions().count());
        let _ = writeln!(out, "ledger-entries {}", self.ledger.len());
        let _ = writeln!(out, "sessions {}", self.sessions());
        let _ = writeln!(out, "authorisations {}", self.authorisations());
        let rejected: Vec<&ActionOutcome> = self.outcomes.iter().filter(|o| !o.outcome.is_success()).collect();
        let _ = writeln!(out, "rejections {}", rejected.len());
        let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
        for o in &rejected {
            *reasons.entry(o.outcome.reason()).or_default() += 1;
        }
        for (r, n) in reasons {
            let _ = writeln!(out, "  reason {r} {n}");
        }
        let _ = writeln!(out, "outcomes");
        for o in &self.outcomes {
            let expect = match &o.expect {
                None => String::new(),
                Some(Expectation::Success) => " expect=success".into(),
                Some(Expectation::Rejected(None)) => " expect=rejected".into(),
                Some(Expectation::Rejected(Some(r))) => format!(" expect=rejected:{r}"),
            };
            let verdict = match &o.outcome {
                TaskOutcome::Rejected(r) => format!("rejected:{r}"),
                other => other.reason().to_string(),
            };
            let _ = writeln!(out, "  {} => {verdict}{expect} [{}]", o.label, if o.ok() { "ok" } else { "FAIL" });
        }
        for s in &self.stalls {
            let _ = writeln!(out, "stall {s}");
        }
        for l in &self.view_leaks {
            let _ = writeln!(out, "view-leak {l}");
        }
        let _ = writeln!(out, "status {}", if self.success() { "ok" } else { "failed" });
        out
    }
}

struct Queued {
    env: Envelope,
    attempts: u32,
}

/// Everything actors reach through [`Io`].
struct Net {
    now: u64,
    ledger: SharedLedger,
    rng: ChaCha20Rng,
    loss_rate: f64,
    queue: VecDeque<Queued>,
    lines: Vec<Line>,
    next_idx: u64,
    current: u64,
    current_from: Option<PartyId>,
    roles: BTreeMap<PartyId, Role>,
    outcomes: BTreeMap<TaskId, TaskOutcome>,
}

impl Net {
    fn record(&mut self, from: &str, to: &str, channel: ChannelId, step: u8, msg: ProtocolMessage) -> u64 {
        let idx = self.next_idx;
        self.next_idx += 1;
        let identify = matches!(msg, ProtocolMessage::Identify { .. }) && self.roles.get(from) == Some(&Role::User);
        self.lines.push(Line::Event(Event {
            idx,
            tick: self.now,
            from: from.to_string(),
            to: to.to_string(),
            channel,
            step,
            msg,
        }));
        if identify {
            self.lines.push(Line::Identify { event: idx, user: from.to_string() });
        }
        idx
    }
}

impl Io for Net {
    fn now(&self) -> u64 {
        self.now
    }

    fn ledger(&self) -> &SharedLedger {
        &self.ledger
    }

    fn new_channel(&mut self) -> ChannelId {
        ChannelId(self.rng.gen())
    }

    fn send(&mut self, from: &str, to: &str, task: Option<TaskId>, channel: ChannelId, step: u8, msg: ProtocolMessage) {
        let env = Envelope { task, from: from.to_string(), to: to.to_string(), channel, step, msg };
        self.queue.push_back(Queued { env, attempts: 0 });
    }

    fn append(&mut self, from: &str, _task: Option<TaskId>, step: u8, sub: &Submission) -> Result<Receipt, LedgerError> {
        let ch = self.new_channel();
        self.record(from, LEDGER, ch, step, ProtocolMessage::LedgerWrite { payload: sub.payload.clone() });
        let r = self.ledger.append(sub, self.now);
        if let Err(e) = &r {
            self.record(LEDGER, from, ch, 0, ProtocolMessage::Rejected { reason: e.to_string() });
        }
        r
    }

    fn from_ledger(&mut self, to: &str, _task: Option<TaskId>, step: u8, msg: ProtocolMessage) {
        let ch = self.new_channel();
        self.record(LEDGER, to, ch, step, msg);
    }

    fn decide(&mut self, decision: Decision) -> u64 {
        let idx = self.next_idx;
        self.next_idx += 1;
        let session = decision.kind == DecisionKind::ServiceAccept && decision.verdict.accepted;
        self.lines.push(Line::Decision(DecisionRecord { idx, tick: self.now, decision }));
        if session {
            if let Some(user) = self.current_from.clone().filter(|u| self.roles.get(u) == Some(&Role::User)) {
                self.lines.push(Line::Session { decision: idx, user });
            }
        }
        idx
    }

    fn observe(&mut self, party: &str, value: Vec<u8>) {
        self.lines.push(Line::Observe { event: self.current, party: party.to_string(), value });
    }

    fn finish(&mut self, task: TaskId, outcome: TaskOutcome) {
        self.outcomes.entry(task).or_insert(outcome);
    }

    fn current_event(&self) -> u64 {
        self.current
    }
}

enum Actor {
    Cp(Box<CertProvider>),
    Ap(Box<AuthProvider>),
    User(Box<Wallet>),
    Service(Box<ServiceProvider>),
}

enum Pending {
    Task { task: TaskId, user: PartyId },
    Done(TaskOutcome),
}

struct Slot {
    label: String,
    pending: Pending,
    expect: Option<Expectation>,
}

struct World<'s> {
    scenario: &'s Scenario,
    net: Net,
    order: Vec<PartyId>,
    actors: BTreeMap<PartyId, Actor>,
    next_task: TaskId,
    slots: Vec<Slot>,
    stalls: Vec<String>,
}

/// Runs a scenario to completion and returns its transcript and outcomes.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunResult, HarnessError> {
    let params = scenario.effective_params(opts.params)?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let setup = |e: String| HarnessError::Setup(e);
    let genesis = KeyPair::generate(format!("genesis/{seed}").as_bytes(), params).map_err(|e| setup(e.to_string()))?;
    let config = scenario.variant.ledger_config(genesis.public.to_bytes(), scenario.settings.reuse);
    let ledger = Ledger::new(config.clone()).map_err(|e| setup(e.to_string()))?;
    let net = Net {
        now: 0,
        ledger: SharedLedger::new(ledger),
        rng: seeded_rng(format!("net/{seed}").as_bytes()),
        loss_rate: scenario.loss_rate,
        queue: VecDeque::new(),
        lines: Vec::new(),
        next_idx: 0,
        current: 0,
        current_from: None,
        roles: scenario.parties.iter().map(|p| (p.id.clone(), p.role)).collect(),
        outcomes: BTreeMap::new(),
    };
    let mut world = World {
        scenario,
        net,
        order: Vec::new(),
        actors: BTreeMap::new(),
        next_task: 1,
        slots: Vec::new(),
        stalls: Vec::new(),
    };
    world.setup(seed, params, &genesis, &config)?;
    for (i, a) in scenario.actions.iter().enumerate() {
        world.action(a, &format!("#{}", i + 1))?;
    }
    world.drain(false);
    world.finish(seed, params, config)
}

impl World<'_> {
    fn setup(
        &mut self,
        seed: u64,
        params: ParamSet,
        genesis: &KeyPair,
        config: &crate::ledger::LedgerConfig,
    ) -> Result<(), HarnessError> {
        let sc = self.scenario;
        let v = sc.variant;
        let err = |id: &str, e: crate::CryptoError| HarnessError::Setup(format!("{id}: {e}"));
        for p in &sc.parties {
            let party_seed = p.seed.clone().unwrap_or_else(|| format!("{seed}/{}", p.id));
            let s = party_seed.as_bytes();
            let actor = match p.role {
                Role::Cp => Actor::Cp(Box::new(
                    CertProvider::new(&p.id, v, sc.settings, s, params, &p.categories, p.intervals)
                        .map_err(|e| err(&p.id, e))?,
                )),
                Role::Ap => {
                    let replica = Ledger::new(config.clone()).map_err(|e| HarnessError::Setup(e.to_string()))?;
                    Actor::Ap(Box::new(
                        AuthProvider::new(&p.id, v, sc.settings, s, params, &p.categories, replica)
                            .map_err(|e| err(&p.id, e))?,
                    ))
                }
                Role::User => Actor::User(Box::new(Wallet::new(&p.id, v, sc.settings, s, params))),
                Role::Service => Actor::Service(Box::new(ServiceProvider::new(&p.id, v, &p.policy, s))),
            };
            self.order.push(p.id.clone());
            self.actors.insert(p.id.clone(), actor);
        }
        let mut registrations = Vec::new();
        for role in [Role::Cp, Role::Ap] {
            for id in &self.order {
                match (&self.actors[id], role) {
                    (Actor::Cp(c), Role::Cp) => registrations.extend(c.registrations().into_iter().map(|r| (id.clone(), r))),
                    (Actor::Ap(a), Role::Ap) => registrations.extend(a.registrations().into_iter().map(|r| (id.clone(), r))),
                    _ => {}
                }
            }
        }
        for (owner, record) in registrations {
            let sub = Submission::new(&Payload::KeyRegistry(record), genesis);
            self.net
                .append(&owner, None, 0, &sub)
                .map_err(|e| HarnessError::Setup(format!("registering {owner}'s key: {e}")))?;
        }
        let cps: Vec<(PartyId, crate::PublicKey)> = self
            .order
            .iter()
            .filter_map(|id| match &self.actors[id] {
                Actor::Cp(c) => Some((id.clone(), c.intake_public().clone())),
                _ => None,
            })
            .collect();
        let aps: Vec<PartyId> = self.parties_with(Role::Ap);
        let kyc_users: Vec<PartyId> = sc.parties.iter().filter(|p| p.role == Role::User && p.kyc).map(|p| p.id.clone()).collect();
        for id in self.order.clone() {
            match self.actors.get_mut(&id).expect("created") {
                Actor::Ap(a) => {
                    for (cp, intake) in &cps {
                        a.add_cp(intake.key_id(), cp);
                    }
                }
                Actor::User(w) => {
                    for (cp, intake) in &cps {
                        w.add_cp(cp, intake.clone());
                    }
                }
                Actor::Cp(c) => {
                    for u in &kyc_users {
                        c.allow_identity(u);
                    }
                    for ap in &aps {
                        c.add_push_target(ap);
                    }
                }
                Actor::Service(_) => {}
            }
        }
        self.start_of_tick();
        self.drain(false);
        Ok(())
    }

    fn parties_with(&self, role: Role) -> Vec<PartyId> {
        self.scenario.parties.iter().filter(|p| p.role == role).map(|p| p.id.clone()).collect()
    }

    fn start_of_tick(&mut self) {
        for id in self.parties_with(Role::Ap) {
            if let Some(Actor::Ap(a)) = self.actors.get_mut(&id) {
                a.start_of_tick(&mut self.net);
            }
        }
    }

    fn advance(&mut self) {
        for id in self.parties_with(Role::Cp) {
            if let Some(Actor::Cp(c)) = self.actors.get_mut(&id) {
                c.end_of_tick(&mut self.net);
            }
        }
        self.drain(false);
        self.net.now += 1;
        self.start_of_tick();
        self.drain(false);
    }

    fn service(&mut self, id: &str) -> &mut ServiceProvider {
        match self.actors.get_mut(id) {
            Some(Actor::Service(s)) => s,
            _ => unreachable!("scenario validation checks roles"),
        }
    }

    fn user_category(&self, user: &str) -> String {
        self.scenario.party(user).map(|p| p.categories[0].clone()).unwrap_or_default()
    }

    /// Starts a wallet task and, for session plans, the service request.
    fn start(&mut self, user: &str, plan: Plan, service: Option<&str>) -> TaskId {
        let task = self.next_task;
        self.next_task += 1;
        let net = &mut self.net;
        match self.actors.get_mut(user) {
            Some(Actor::User(w)) => w.begin(net, task, plan),
            _ => unreachable!("scenario validation checks roles"),
        }
        if let Some(s) = service {
            let net = &mut self.net;
            match self.actors.get_mut(s) {
                Some(Actor::Service(sp)) => {
                    sp.start(net, user, task);
                }
                _ => unreachable!("scenario validation checks roles"),
            }
        }
        task
    }

    /// Begins one action. Returns the pending outcome for actions that run
    /// a task, `None` for clock and network controls.
    fn begin(&mut self, a: &ActionSpec) -> Option<Pending> {
        use ActionSpec::*;
        let task = |user: &str, task| Some(Pending::Task { task, user: user.to_string() });
        match a {
            Enroll { user, cp, ap, keys, intervals, category, service, .. } => {
                let keys = keys.unwrap_or_else(|| self.scenario.party(user).map_or(1, |p| p.keys_per_interval));
                let category = category.clone().unwrap_or_else(|| self.user_category(user));
                let plan = Plan::Enroll {
                    cp: cp.clone(),
                    ap: ap.clone(),
                    keys,
                    intervals: intervals.clone().unwrap_or_default(),
                    category,
                    service: service.clone(),
                };
                let id = self.start(user, plan, None);
                if let (Some(s), true) = (service, self.scenario.variant.tokens()) {
                    let net = &mut self.net;
                    let sent = match self.actors.get_mut(s.as_str()) {
                        Some(Actor::Service(sp)) => sp.send_details(net, user, id),
                        _ => None,
                    };
                    if sent.is_none() {
                        self.net.finish(id, TaskOutcome::Rejected("unknown-cp-key".into()));
                    }
                }
                task(user, id)
            }
            Authorize { user, service, ap, .. } => {
                let id = self.start(user, Plan::Authorize { ap: ap.clone() }, Some(service));
                task(user, id)
            }
            Prefetch { user, ap, service, category, .. } => {
                let category = category
                    .clone()
                    .or_else(|| service.as_ref().map(|s| self.service(s).policy.clone()))
                    .unwrap_or_else(|| self.user_category(user));
                let plan = Plan::Prefetch { ap: ap.clone(), service: service.clone(), category };
                let id = self.start(user, plan, None);
                task(user, id)
            }
            Redeem { user, service, .. } => {
                let id = self.start(user, Plan::Redeem, Some(service));
                task(user, id)
            }
            Replay { user, service, .. } => {
                let id = self.start(user, Plan::Replay, Some(service));
                task(user, id)
            }
            Spend { user, service, ap, .. } => {
                let id = self.start(user, Plan::Spend { ap: ap.clone() }, Some(service));
                task(user, id)
            }
            Respend { user, service, ap, .. } => {
                let id = self.start(user, Plan::Respend { ap: ap.clone() }, Some(service));
                task(user, id)
            }
            Revoke { cp, scope, category, interval, user, slot, .. } => {
                let scope = match scope.as_str() {
                    "one" => RevokeScope::One { user: user.clone().unwrap_or_default(), slot: slot.unwrap_or(0) },
                    _ => RevokeScope::All {
                        category: category
                            .clone()
                            .or_else(|| self.scenario.party(cp).map(|p| p.categories[0].clone()))
                            .unwrap_or_default(),
                        interval: *interval,
                    },
                };
                let net = &mut self.net;
                let r = match self.actors.get_mut(cp.as_str()) {
                    Some(Actor::Cp(c)) => c.revoke(net, &scope),
                    _ => unreachable!("scenario validation checks roles"),
                };
                Some(Pending::Done(match r {
                    Ok(()) => TaskOutcome::Completed,
                    Err(e) => TaskOutcome::Rejected(e),
                }))
            }
            Advance { ticks } => {
                for _ in 0..ticks.unwrap_or(1) {
                    self.advance();
                }
                None
            }
            Partition { ap } | Unpartition { ap } => {
                let on = matches!(a, Partition { .. });
                let net = &mut self.net;
                if let Some(Actor::Ap(x)) = self.actors.get_mut(ap.as_str()) {
                    x.set_partitioned(net, on);
                }
                None
            }
            Parallel { .. } => unreachable!("handled by action"),
        }
    }

    fn label(a: &ActionSpec, prefix: &str) -> String {
        use ActionSpec::*;
        let who = match a {
            Enroll { user, cp, .. } => format!("{user} with {cp}"),
            Authorize { user, service, .. }
            | Redeem { user, service, .. }
            | Replay { user, service, .. }
            | Spend { user, service, .. }
            | Respend { user, service, .. } => format!("{user} at {service}"),
            Prefetch { user, ap, .. } => format!("{user} from {ap}"),
            Revoke { cp, scope, .. } => format!("{cp} {scope}"),
            _ => String::new(),
        };
        format!("{prefix} {} {who}", a.name())
    }

    fn action(&mut self, a: &ActionSpec, prefix: &str) -> Result<(), HarnessError> {
        let expect = |a: &ActionSpec| a.expect().map(Expectation::from_str).transpose().map_err(HarnessError::Parse);
        if let ActionSpec::Parallel { tasks } = a {
            let mut started = Vec::new();
            for (j, t) in tasks.iter().enumerate() {
                let label = Self::label(t, &format!("{prefix}.{}", j + 1));
                let e = expect(t)?;
                if let Some(p) = self.begin(t) {
                    started.push(Slot { label, pending: p, expect: e });
                }
            }
            self.drain(true);
            for s in started {
                self.settle(s);
            }
            return Ok(());
        }
        let label = Self::label(a, prefix);
        let e = expect(a)?;
        if let Some(p) = self.begin(a) {
            self.drain(self.scenario.shuffle);
            self.settle(Slot { label, pending: p, expect: e });
        }
        Ok(())
    }

    fn settle(&mut self, slot: Slot) {
        if let Pending::Task { task, user } = &slot.pending {
            if !self.net.outcomes.contains_key(task) {
                self.stalls.push(format!("{}: task {task} of {user} never finished", slot.label));
                self.net.outcomes.insert(*task, TaskOutcome::Rejected("deadlock".into()));
            }
        }
        self.slots.push(slot);
    }

    fn drain(&mut self, random: bool) {
        let mut deliveries = 0;
        while !self.net.queue.is_empty() {
            deliveries += 1;
            if deliveries > MAX_DELIVERIES {
                let pending: Vec<String> = self
                    .net
                    .queue
                    .iter()
                    .take(8)
                    .map(|q| format!("{}->{} {}", q.env.from, q.env.to, q.env.msg.kind()))
                    .collect();
                self.stalls.push(format!(
                    "delivery limit reached with {} messages pending: {}",
                    self.net.queue.len(),
                    pending.join(", ")
                ));
                self.net.queue.clear();
                return;
            }
            let i = if random || self.scenario.shuffle { self.net.rng.gen_range(0..self.net.queue.len()) } else { 0 };
            let mut q = self.net.queue.remove(i).expect("index in range");
            if self.net.loss_rate > 0.0 && q.attempts < MAX_RETRIES && self.net.rng.gen_bool(self.net.loss_rate) {
                q.attempts += 1;
                self.net.queue.push_back(q);
                continue;
            }
            self.deliver(q.env);
        }
    }

    fn deliver(&mut self, env: Envelope) {
        let idx = self.net.record(&env.from, &env.to, env.channel, env.step, env.msg.clone());
        self.net.current = idx;
        self.net.current_from = Some(env.from.clone());
        let net = &mut self.net;
        match self.actors.get_mut(&env.to) {
            Some(Actor::Cp(c)) => c.handle(net, &env),
            Some(Actor::Ap(a)) => a.handle(net, &env),
            Some(Actor::User(w)) => w.handle(net, &env),
            Some(Actor::Service(s)) => s.handle(net, &env),
            None => {}
        }
        self.net.current_from = None;
    }

    /// Wallet-private byte strings: key components and blinding factors.
    fn wallet_secrets(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for (id, a) in &self.actors {
            let Actor::User(w) = a else { continue };
            for k in w.keys() {
                out.extend(k.private.secret_material().into_iter().map(|s| (format!("{id} private key"), s)));
            }
            for s in w.slots() {
                if let Some((_, f)) = &s.blinded {
                    out.push((format!("{id} blinding factor"), f.value().to_bytes_be()));
                }
            }
            for n in w.notes() {
                out.push((format!("{id} note blinding factor"), n.factor.value().to_bytes_be()));
            }
        }
        out.retain(|(_, s)| s.len() >= MIN_SCAN_LEN);
        out
    }

    fn view_scan(&self) -> Vec<String> {
        let secrets = self.wallet_secrets();
        let mut leaks = Vec::new();
        for l in &self.net.lines {
            let (idx, bytes) = match l {
                Line::Event(e) => (e.idx, e.msg.encode()),
                Line::Observe { event, value, .. } => (*event, value.clone()),
                _ => continue,
            };
            for (what, s) in &secrets {
                if bytes.windows(s.len()).any(|w| w == s.as_slice()) {
                    leaks.push(format!("event {idx} carries {what}"));
                }
            }
        }
        leaks
    }

    fn finish(mut self, seed: u64, params: ParamSet, config: crate::ledger::LedgerConfig) -> Result<RunResult, HarnessError> {
        let view_leaks = self.view_scan();
        let mut outcomes = Vec::new();
        for s in std::mem::take(&mut self.slots) {
            let outcome = match s.pending {
                Pending::Done(o) => o,
                Pending::Task { task, .. } => self.net.outcomes.get(&task).cloned().expect("settled"),
            };
            outcomes.push(ActionOutcome { label: s.label, outcome, expect: s.expect });
        }
        let ledger = self.net.ledger.snapshot();
        let sc = self.scenario;
        let transcript = Transcript {
            scenario: sc.name.clone(),
            variant: sc.variant,
            seed,
            params,
            settings: sc.settings,
            config,
            parties: sc
                .parties
                .iter()
                .map(|p| PartyInfo {
                    id: p.id.clone(),
                    role: p.role,
                    categories: p.categories.clone(),
                    policy: (p.role == Role::Service).then(|| p.policy.clone()),
                })
                .collect(),
            lines: std::mem::take(&mut self.net.lines),
            ledger: ledger.entries().iter().map(|e| (**e).clone()).collect(),
        };
        Ok(RunResult { transcript, ledger, outcomes, stalls: self.stalls, view_leaks })
    }
}
