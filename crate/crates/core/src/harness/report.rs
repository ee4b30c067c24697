//! Constraint report and anonymity-set accounting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::actors::{PartyId, ProtocolMessage, Role, LEDGER};
use crate::ledger::{KeyPurpose, Payload};

use super::oracle::LinkageResult;
use super::transcript::{Line, Transcript};
use super::HarnessError;

/// Slack above the random-pairing baseline tolerated by the surveillance check.
pub const ACCURACY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotEvaluated,
    Governance,
}

impl Status {
    pub const fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotEvaluated => "not-evaluated",
            Status::Governance => "governance: not machine-checkable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub id: u8,
    pub title: &'static str,
    pub status: Status,
    pub evidence: Vec<String>,
}

/// Undirected party graph built from recorded messages. The ledger is
/// replicated infrastructure rather than a party and is left out.
fn message_graph(t: &Transcript) -> BTreeMap<PartyId, BTreeSet<PartyId>> {
    let mut g: BTreeMap<PartyId, BTreeSet<PartyId>> = BTreeMap::new();
    for e in t.events() {
        if e.from == LEDGER || e.to == LEDGER || e.from == e.to {
            continue;
        }
        g.entry(e.from.clone()).or_default().insert(e.to.clone());
        g.entry(e.to.clone()).or_default().insert(e.from.clone());
    }
    g
}

fn reachable(g: &BTreeMap<PartyId, BTreeSet<PartyId>>, from: &str, to: &str, removed: &str) -> bool {
    let mut seen = BTreeSet::from([from.to_string()]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            return true;
        }
        for m in g.get(&n).into_iter().flatten() {
            if m != removed && seen.insert(m.clone()) {
                queue.push_back(m.clone());
            }
        }
    }
    false
}

fn edges_between(t: &Transcript, a: Role, b: Role) -> usize {
    t.events()
        .filter(|e| {
            let (x, y) = (t.role_of(&e.from), t.role_of(&e.to));
            (x == Some(a) && y == Some(b)) || (x == Some(b) && y == Some(a))
        })
        .count()
}

/// (service, user) for each accepted session, with the presentation's
/// event index and channel window start.
fn sessions(t: &Transcript) -> Vec<(PartyId, PartyId, u64)> {
    t.lines
        .iter()
        .filter_map(|l| match l {
            Line::Session { decision, user } => {
                let d = t.decision(*decision)?;
                Some((d.decision.party.clone(), user.clone(), d.decision.input))
            }
            _ => None,
        })
        .collect()
}

/// Non-user parties a user had to reach between a service's request and
/// the presentation that answered it.
fn control_points(t: &Transcript, service: &str, user: &str, presentation: u64) -> BTreeSet<PartyId> {
    let Some(p) = t.event(presentation) else { return BTreeSet::new() };
    let start = t
        .events()
        .find(|e| e.from == service && e.channel == p.channel && matches!(e.msg, ProtocolMessage::Request { .. }))
        .map_or(presentation, |e| e.idx);
    t.events()
        .filter(|e| e.idx > start && e.idx < presentation && e.from == user && e.to != service)
        .filter(|e| !matches!(t.role_of(&e.to), Some(Role::User) | None))
        .map(|e| e.to.clone())
        .collect()
}

pub fn constraint_report(t: &Transcript, linkage: &Result<LinkageResult, HarnessError>) -> Vec<Finding> {
    let g = message_graph(t);
    let sess = sessions(t);
    let mut out = Vec::new();

    // 1: control points.
    let pairs: BTreeSet<(PartyId, PartyId)> = sess.iter().map(|(s, u, _)| (u.clone(), s.clone())).collect();
    let mut cut = BTreeSet::new();
    for (u, s) in &pairs {
        for v in g.keys().filter(|v| t.role_of(v).is_some_and(|r| r != Role::User) && *v != s) {
            if !reachable(&g, u, s, v) {
                cut.insert(v.clone());
            }
        }
    }
    let mut ev = vec![format!("user-service pairs checked: {}", pairs.len())];
    ev.push(if cut.is_empty() {
        "no non-user vertex lies on every user-service path".into()
    } else {
        format!("vertices on every user-service path: {}", cut.iter().cloned().collect::<Vec<_>>().join(", "))
    });
    let mut reached: BTreeMap<PartyId, usize> = BTreeMap::new();
    for (s, u, p) in &sess {
        for c in control_points(t, s, u, *p) {
            *reached.entry(c).or_default() += 1;
        }
    }
    if reached.is_empty() {
        ev.push("session control points: none (no party contacted between request and presentation)".into());
    } else {
        for (c, n) in &reached {
            ev.push(format!("session control point: {c} contacted in {n} of {} sessions", sess.len()));
        }
    }
    out.push(Finding {
        id: 1,
        title: "control points",
        status: if pairs.is_empty() {
            Status::NotEvaluated
        } else if cut.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        },
        evidence: ev,
    });

    out.push(governance(2, "processes and practices", "depends on legal and institutional process around the system"));

    // 3: mass surveillance, via the linkage oracle.
    out.push(match linkage {
        Ok(l) => {
            let pass = l.expected_accuracy <= l.baseline + ACCURACY_TOLERANCE;
            Finding {
                id: 3,
                title: "mass surveillance",
                status: if pass { Status::Pass } else { Status::Fail },
                evidence: vec![
                    format!("coalition {} timing {}", l.coalition, if l.include_timing { "included" } else { "excluded" }),
                    format!(
                        "expected accuracy {:.4} vs baseline {:.4} (tolerance {:.2})",
                        l.expected_accuracy, l.baseline, ACCURACY_TOLERANCE
                    ),
                ],
            }
        }
        Err(e) => Finding { id: 3, title: "mass surveillance", status: Status::NotEvaluated, evidence: vec![e.to_string()] },
    });

    // 4: no mandated relationship between providers and services.
    let cp_s = edges_between(t, Role::Cp, Role::Service);
    let ap_s = edges_between(t, Role::Ap, Role::Service);
    out.push(Finding {
        id: 4,
        title: "non-consensual trust",
        status: if cp_s + ap_s == 0 { Status::Pass } else { Status::Fail },
        evidence: vec![format!("cp-service messages {cp_s}, ap-service messages {ap_s}")],
    });

    // 5: linkage management.
    out.push(match linkage {
        Ok(l) => {
            let n = l.linked_session_pairs + l.enrolment_links;
            Finding {
                id: 5,
                title: "linkages",
                status: if n == 0 { Status::Pass } else { Status::Fail },
                evidence: vec![
                    format!("linked same-user session pairs {}", l.linked_session_pairs),
                    format!("sessions linked to enrolment {}", l.enrolment_links),
                ],
            }
        }
        Err(e) => Finding { id: 5, title: "linkages", status: Status::NotEvaluated, evidence: vec![e.to_string()] },
    });

    // 6: structural decentralisation.
    let cp_ap = edges_between(t, Role::Cp, Role::Ap);
    let mut by_role: BTreeMap<&str, usize> = BTreeMap::new();
    let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &t.ledger {
        if let Payload::KeyRegistry(r) = &e.payload {
            let role = match r.purpose {
                KeyPurpose::Credential | KeyPurpose::Token => "cp",
                KeyPurpose::Authorise | KeyPurpose::Timely => "ap",
            };
            *by_role.entry(role).or_default() += 1;
            owners.entry(role).or_default().insert(&r.owner);
        }
    }
    let count = |r: &str| by_role.get(r).copied().unwrap_or(0);
    let owned = |r: &str| owners.get(r).map_or(0, BTreeSet::len);
    out.push(Finding {
        id: 6,
        title: "monopoly position",
        status: if cp_ap == 0 { Status::Pass } else { Status::Fail },
        evidence: vec![
            format!("cp-ap messages {cp_ap}"),
            format!("registry entries cp {} ap {}", count("cp"), count("ap")),
            format!("registered parties cp {} ap {}", owned("cp"), owned("ap")),
        ],
    });

    out.push(governance(7, "trust relationships", "depends on how businesses choose their providers"));
    out.push(governance(8, "business practices", "depends on service operators' own policies"));
    out
}

fn governance(id: u8, title: &'static str, why: &str) -> Finding {
    Finding { id, title, status: Status::Governance, evidence: vec![why.to_string()] }
}

/// Users enrolled per (category, interval).
pub fn anonymity_sets(t: &Transcript) -> BTreeMap<(String, Option<u64>), usize> {
    let mut sets: BTreeMap<(String, Option<u64>), BTreeSet<&str>> = BTreeMap::new();
    for l in &t.lines {
        let Line::Identify { event, user } = l else { continue };
        let Some(e) = t.event(*event) else { continue };
        let ProtocolMessage::Identify { intervals, category, .. } = &e.msg else { continue };
        if intervals.is_empty() {
            sets.entry((category.clone(), None)).or_default().insert(user);
        }
        for i in intervals {
            sets.entry((category.clone(), Some(*i))).or_default().insert(user);
        }
    }
    sets.into_iter().map(|(k, v)| (k, v.len())).collect()
}

/// Full analysis text: oracle result, anonymity sets and constraint table.
pub fn render_analysis(t: &Transcript, linkage: &Result<LinkageResult, HarnessError>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", t.scenario);
    let _ = writeln!(out, "variant {}", t.variant);
    let _ = writeln!(out, "seed {}", t.seed);
    let _ = writeln!(out, "[linkage]");
    match linkage {
        Ok(l) => {
            let _ = writeln!(out, "coalition {}", l.coalition);
            let _ = writeln!(out, "timing {}", if l.include_timing { "included" } else { "excluded" });
            let _ = writeln!(out, "users {}", l.users.len());
            let _ = writeln!(out, "sessions {}", l.sessions.len());
            let _ = writeln!(out, "matching {}", if l.exact { "exhaustive" } else { "per-session" });
            if l.exact {
                let _ = writeln!(out, "optimal-pairings {}", l.optimal_pairings);
            }
            let _ = writeln!(out, "accuracy {:.4}", l.accuracy);
            let _ = writeln!(out, "expected-accuracy {:.4}", l.expected_accuracy);
            let _ = writeln!(out, "baseline {:.4}", l.baseline);
            for s in &l.sessions {
                let _ = writeln!(
                    out,
                    "  session {} at {}: guess {} truth {} score {}",
                    s.decision, s.service, s.guess, s.truth, s.score
                );
            }
        }
        Err(e) => {
            let _ = writeln!(out, "error {e}");
        }
    }
    let _ = writeln!(out, "[anonymity-sets]");
    for ((category, interval), n) in anonymity_sets(t) {
        let i = interval.map_or("-".to_string(), |i| i.to_string());
        let _ = writeln!(out, "category {category} interval {i} users {n}");
    }
    let _ = writeln!(out, "[constraints]");
    for f in constraint_report(t, linkage) {
        let _ = writeln!(out, "c{} {}: {}", f.id, f.title, f.status.name());
        for e in &f.evidence {
            let _ = writeln!(out, "    {e}");
        }
    }
    out
}
