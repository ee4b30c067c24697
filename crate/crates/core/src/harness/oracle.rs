//! Linkage oracle: the strongest compare-notes attacker for a coalition.
//!
//! Every event the coalition saw, every ledger entry, every linkable value
//! and every channel is a node in a union-find forest. Events are joined to
//! their channel and to each linkable value they carry, so anything tied by
//! an exact value ends up in one component. User endpoints are treated as
//! anonymous and never join anything. Attributes (category, interval, key
//! labels) are collected per component and only narrow the candidate set.
//!
//! Each accepted session is scored against each user: 2 if it shares a
//! component with one of the user's enrolment anchors, 1 if the attributes
//! are compatible, 0 otherwise. The pairing maximises the total score,
//! exhaustively over all permutations when sessions and users are equally
//! many and few.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::actors::message::{payload_fields, ATTR_AP_KEY, ATTR_CATEGORY, ATTR_CP_KEY, ATTR_INTERVAL, ATTR_SERVICE};
use crate::actors::{identity_digest, service_account, ChannelId, DecisionKind, FieldClass, PartyId, Role, LEDGER};
use crate::crypto::{seeded_rng, KeyId};
use crate::ledger::{chain_step, Ledger, Receipt};

use super::transcript::{Line, Transcript};
use super::HarnessError;

/// Largest user count for which every pairing is enumerated.
pub const MAX_EXACT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoalitionRole {
    Cp,
    Ap,
    Service,
    Ledger,
}

impl CoalitionRole {
    pub const ALL: [CoalitionRole; 4] = [CoalitionRole::Cp, CoalitionRole::Ap, CoalitionRole::Service, CoalitionRole::Ledger];

    pub const fn name(self) -> &'static str {
        match self {
            CoalitionRole::Cp => "cp",
            CoalitionRole::Ap => "ap",
            CoalitionRole::Service => "service",
            CoalitionRole::Ledger => "ledger",
        }
    }

    fn party_role(self) -> Option<Role> {
        match self {
            CoalitionRole::Cp => Some(Role::Cp),
            CoalitionRole::Ap => Some(Role::Ap),
            CoalitionRole::Service => Some(Role::Service),
            CoalitionRole::Ledger => None,
        }
    }
}

/// Colluding roles. Every party holding a member role contributes its view;
/// the full ledger is always visible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coalition(pub BTreeSet<CoalitionRole>);

impl Coalition {
    pub fn full() -> Self {
        Coalition(CoalitionRole::ALL.into_iter().collect())
    }

    pub fn contains(&self, r: CoalitionRole) -> bool {
        self.0.contains(&r)
    }

    fn sees_party(&self, role: Role) -> bool {
        self.0.iter().any(|r| r.party_role() == Some(role))
    }
}

impl FromStr for Coalition {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let valid = || CoalitionRole::ALL.iter().map(|r| r.name()).join(", ");
        let mut out = BTreeSet::new();
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            let r = match part.to_ascii_lowercase().as_str() {
                "cp" => CoalitionRole::Cp,
                "ap" => CoalitionRole::Ap,
                "service" | "sp" => CoalitionRole::Service,
                "ledger" | "ledger-reader" => CoalitionRole::Ledger,
                "all" | "full" => {
                    out.extend(CoalitionRole::ALL);
                    continue;
                }
                _ => {
                    return Err(HarnessError::Analysis(format!(
                        "invalid coalition role {part:?} (valid roles: {})",
                        valid()
                    )))
                }
            };
            out.insert(r);
        }
        if out.is_empty() {
            return Err(HarnessError::Analysis(format!("empty coalition (valid roles: {})", valid())));
        }
        Ok(Coalition(out))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.iter().map(|r| r.name()).join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleOptions {
    /// Join events and entries whose ticks differ by at most one.
    pub include_timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionGuess {
    /// Index of the accepting decision.
    pub decision: u64,
    pub service: PartyId,
    pub truth: PartyId,
    pub guess: PartyId,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageResult {
    pub coalition: Coalition,
    pub include_timing: bool,
    pub users: Vec<PartyId>,
    pub sessions: Vec<SessionGuess>,
    /// Every pairing was enumerated.
    pub exact: bool,
    /// Number of pairings sharing the best score (exact mode only).
    pub optimal_pairings: usize,
    /// Accuracy of the reported pairing.
    pub accuracy: f64,
    /// Mean accuracy over all best-scoring pairings.
    pub expected_accuracy: f64,
    /// Expected accuracy of a uniformly random pairing.
    pub baseline: f64,
    /// Pairs of one user's sessions that fall in one component.
    pub linked_session_pairs: usize,
    /// Sessions that share a component with their user's enrolment.
    pub enrolment_links: usize,
}

type Attrs = BTreeMap<&'static str, BTreeSet<Vec<u8>>>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Event(u64),
    Entry(u64),
    Value(Vec<u8>),
    Channel(ChannelId),
}

#[derive(Default)]
struct Forest {
    ids: BTreeMap<Node, usize>,
    parent: Vec<usize>,
    attrs: Vec<Attrs>,
}

impl Forest {
    fn id(&mut self, n: Node) -> usize {
        if let Some(&i) = self.ids.get(&n) {
            return i;
        }
        let i = self.parent.len();
        self.parent.push(i);
        self.attrs.push(Attrs::new());
        self.ids.insert(n, i);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        let moved = std::mem::take(&mut self.attrs[gone]);
        for (k, v) in moved {
            self.attrs[keep].entry(k).or_default().extend(v);
        }
    }

    fn attr(&mut self, i: usize, kind: &'static str, value: Vec<u8>) {
        self.attrs[i].entry(kind).or_default().insert(value);
    }
}

/// Runs the oracle for one coalition over a transcript.
pub fn link(t: &Transcript, coalition: &Coalition, opts: OracleOptions) -> Result<LinkageResult, HarnessError> {
    let users = t.users();
    let truth: BTreeMap<u64, PartyId> = t
        .lines
        .iter()
        .filter_map(|l| match l {
            Line::Session { decision, user } => Some((*decision, user.clone())),
            _ => None,
        })
        .collect();
    let sessions: Vec<(u64, u64, PartyId)> = t
        .decisions()
        .filter(|d| d.decision.kind == DecisionKind::ServiceAccept && truth.contains_key(&d.idx))
        .map(|d| (d.idx, d.decision.input, d.decision.party.clone()))
        .collect();
    if users.len() < 2 || sessions.len() < 2 {
        return Err(HarnessError::Analysis(format!(
            "linkage needs at least 2 users and 2 accepted sessions, found {} and {}",
            users.len(),
            sessions.len()
        )));
    }
    let ledger = t.ledger()?;
    let mut f = Forest::default();
    let visible = |party: &str| -> bool {
        if party == LEDGER {
            return coalition.contains(CoalitionRole::Ledger);
        }
        t.role_of(party).is_some_and(|r| coalition.sees_party(r))
    };
    let targets: BTreeSet<u64> = sessions.iter().map(|s| s.1).collect();
    let mut ticks: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for e in t.events() {
        if !(visible(&e.from) || visible(&e.to) || targets.contains(&e.idx)) {
            continue;
        }
        let n = f.id(Node::Event(e.idx));
        let c = f.id(Node::Channel(e.channel));
        f.union(n, c);
        for field in e.msg.fields() {
            match field.class {
                FieldClass::Linkable => {
                    let v = f.id(Node::Value(field.value));
                    f.union(n, v);
                }
                FieldClass::Attribute(kind) => f.attr(n, kind, field.value),
                FieldClass::Public | FieldClass::Sealed => {}
            }
        }
        ticks.entry(e.tick).or_default().push(n);
    }
    for l in &t.lines {
        if let Line::Observe { event, party, value } = l {
            if visible(party) {
                let n = f.id(Node::Event(*event));
                let v = f.id(Node::Value(value.clone()));
                f.union(n, v);
            }
        }
    }
    let mut head = ledger.genesis_hash();
    for e in ledger.entries() {
        head = chain_step(&head, &e.encode());
        let n = f.id(Node::Entry(e.seq));
        for field in payload_fields(&e.payload) {
            match field.class {
                FieldClass::Linkable => {
                    let v = f.id(Node::Value(field.value));
                    f.union(n, v);
                }
                FieldClass::Attribute(kind) => f.attr(n, kind, field.value),
                FieldClass::Public | FieldClass::Sealed => {}
            }
        }
        let receipt = Receipt { entry_seq: e.seq, ledger_head_hash: head };
        let v = f.id(Node::Value(receipt.encode()));
        f.union(n, v);
        ticks.entry(e.timestamp).or_default().push(n);
    }
    if opts.include_timing {
        let mut prev: Option<(u64, usize)> = None;
        for (tick, nodes) in &ticks {
            for w in nodes.windows(2) {
                f.union(w[0], w[1]);
            }
            if let Some((pt, pn)) = prev {
                if tick - pt <= 1 {
                    f.union(pn, nodes[0]);
                }
            }
            prev = Some((*tick, nodes[0]));
        }
    }

    // Anchors: each user's enrolment messages and identity digest.
    let mut anchors: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for u in &users {
        let mut set = BTreeSet::new();
        let digest = f.id(Node::Value(identity_digest(u)));
        set.insert(digest);
        for l in &t.lines {
            if let Line::Identify { event, user } = l {
                if user == u {
                    set.insert(f.id(Node::Event(*event)));
                }
            }
        }
        anchors.insert(u, set);
    }
    let services: BTreeMap<Vec<u8>, Vec<u8>> = t
        .parties
        .iter()
        .filter(|p| p.role == Role::Service)
        .map(|p| (service_account(&p.id).as_bytes().to_vec(), p.id.as_bytes().to_vec()))
        .collect();
    let attrs_of = |f: &mut Forest, roots: &BTreeSet<usize>| -> Attrs {
        let mut out = Attrs::new();
        for &r in roots {
            for (k, v) in &f.attrs[r] {
                out.entry(k).or_default().extend(v.iter().cloned());
            }
        }
        enrich(&mut out, &ledger, &services);
        out
    };
    let mut user_roots = Vec::new();
    let mut user_attrs = Vec::new();
    for u in &users {
        let roots: BTreeSet<usize> = anchors[u.as_str()].clone().into_iter().map(|i| f.find(i)).collect();
        user_attrs.push(attrs_of(&mut f, &roots));
        user_roots.push(roots);
    }
    let mut scores = Vec::new();
    let mut session_roots = Vec::new();
    for (_, input, _) in &sessions {
        let n = f.id(Node::Event(*input));
        let root = f.find(n);
        session_roots.push(root);
        let a = attrs_of(&mut f, &BTreeSet::from([root]));
        let row: Vec<u8> = (0..users.len())
            .map(|u| {
                if user_roots[u].contains(&root) {
                    2
                } else if compatible(&a, &user_attrs[u]) {
                    1
                } else {
                    0
                }
            })
            .collect();
        scores.push(row);
    }
    let truth_idx: Vec<usize> = sessions
        .iter()
        .map(|(d, _, _)| users.iter().position(|u| *u == truth[d]).expect("ground truth names a user"))
        .collect();

    let mut rng = seeded_rng(format!("oracle/{}/{coalition}/{}", t.seed, opts.include_timing).as_bytes());
    let k = users.len();
    let n = sessions.len();
    let exact = n == k && k <= MAX_EXACT;
    let (pairing, expected, optimal) = if exact {
        let mut best = -1i64;
        let mut best_set: Vec<Vec<usize>> = Vec::new();
        for perm in (0..k).permutations(k) {
            let s: i64 = perm.iter().enumerate().map(|(i, &u)| scores[i][u] as i64).sum();
            if s > best {
                best = s;
                best_set.clear();
            }
            if s == best {
                best_set.push(perm);
            }
        }
        let expected = best_set
            .iter()
            .map(|p| p.iter().enumerate().filter(|(i, &u)| truth_idx[*i] == u).count() as f64 / n as f64)
            .sum::<f64>()
            / best_set.len() as f64;
        let chosen = best_set.choose(&mut rng).expect("at least one permutation").clone();
        let count = best_set.len();
        (chosen, expected, count)
    } else {
        let mut chosen = Vec::new();
        let mut expected = 0.0;
        for (i, row) in scores.iter().enumerate() {
            let top = *row.iter().max().expect("users exist");
            let arg: Vec<usize> = (0..k).filter(|&u| row[u] == top).collect();
            if arg.contains(&truth_idx[i]) {
                expected += 1.0 / arg.len() as f64;
            }
            chosen.push(arg[rng.gen_range(0..arg.len())]);
        }
        (chosen, expected / n as f64, 0)
    };
    let correct = pairing.iter().enumerate().filter(|(i, &u)| truth_idx[*i] == u).count();
    let mut linked_pairs = 0;
    for i in 0..n {
        for j in i + 1..n {
            if truth_idx[i] == truth_idx[j] && session_roots[i] == session_roots[j] {
                linked_pairs += 1;
            }
        }
    }
    let enrolment_links = (0..n).filter(|&i| user_roots[truth_idx[i]].contains(&session_roots[i])).count();
    Ok(LinkageResult {
        coalition: coalition.clone(),
        include_timing: opts.include_timing,
        sessions: sessions
            .iter()
            .enumerate()
            .map(|(i, (d, _, service))| SessionGuess {
                decision: *d,
                service: service.clone(),
                truth: users[truth_idx[i]].clone(),
                guess: users[pairing[i]].clone(),
                score: scores[i][pairing[i]],
            })
            .collect(),
        users,
        exact,
        optimal_pairings: optimal,
        accuracy: correct as f64 / n as f64,
        expected_accuracy: expected,
        baseline: 1.0 / k as f64,
        linked_session_pairs: linked_pairs,
        enrolment_links,
    })
}

/// Adds the category and interval of any registered key named by a key
/// attribute, and maps service accounts to service names.
fn enrich(a: &mut Attrs, ledger: &Ledger, services: &BTreeMap<Vec<u8>, Vec<u8>>) {
    let mut extra: Vec<(&'static str, Vec<u8>)> = Vec::new();
    for kind in [ATTR_CP_KEY, ATTR_AP_KEY] {
        for v in a.get(kind).into_iter().flatten() {
            let Some(id) = KeyId::from_slice(v) else { continue };
            if let Some(k) = ledger.state().key(&id) {
                extra.push((ATTR_CATEGORY, k.record.category.as_bytes().to_vec()));
                if let Some(i) = k.record.interval {
                    extra.push((ATTR_INTERVAL, i.to_be_bytes().to_vec()));
                }
            }
        }
    }
    if let Some(s) = a.get_mut(ATTR_SERVICE) {
        let mapped: BTreeSet<Vec<u8>> = s.iter().map(|v| services.get(v).cloned().unwrap_or_else(|| v.clone())).collect();
        *s = mapped;
    }
    for (k, v) in extra {
        a.entry(k).or_default().insert(v);
    }
}

/// Attribute sets are compatible unless some label kind known on both
/// sides has no value in common.
fn compatible(a: &Attrs, b: &Attrs) -> bool {
    [ATTR_CATEGORY, ATTR_INTERVAL, ATTR_SERVICE]
        .into_iter()
        .all(|k| match (a.get(k), b.get(k)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => true,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalition_parsing() {
        let c: Coalition = "CP, ap+service".parse().unwrap();
        assert_eq!(c.to_string(), "cp,ap,service");
        assert_eq!("all".parse::<Coalition>().unwrap(), Coalition::full());
        let err = "Mallory".parse::<Coalition>().unwrap_err().to_string();
        assert!(err.contains("cp, ap, service, ledger"), "{err}");
        assert!("".parse::<Coalition>().is_err());
    }

    #[test]
    fn forest_merges_attributes() {
        let mut f = Forest::default();
        let a = f.id(Node::Event(1));
        let b = f.id(Node::Value(vec![7]));
        f.attr(a, ATTR_CATEGORY, b"x".to_vec());
        f.attr(b, ATTR_CATEGORY, b"y".to_vec());
        f.union(a, b);
        let r = f.find(a);
        assert_eq!(f.find(b), r);
        assert_eq!(f.attrs[r][ATTR_CATEGORY].len(), 2);
    }

    #[test]
    fn compatibility_needs_overlap_on_shared_kinds() {
        let mut a = Attrs::new();
        let mut b = Attrs::new();
        a.entry(ATTR_CATEGORY).or_default().insert(b"adult".to_vec());
        assert!(compatible(&a, &b));
        b.entry(ATTR_CATEGORY).or_default().insert(b"student".to_vec());
        assert!(!compatible(&a, &b));
        b.entry(ATTR_CATEGORY).or_default().insert(b"adult".to_vec());
        assert!(compatible(&a, &b));
    }
}
