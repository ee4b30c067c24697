//! Service provider: issues fresh nonces and accepts or rejects what users
//! present against the current ledger.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{seeded_rng, KeyId};
use crate::ledger::KeyPurpose;

use super::decide::{service_accept, ServiceInputs};
use super::message::ProtocolMessage;
use super::{service_account, ChannelId, Decision, DecisionKind, Envelope, Io, PartyId, TaskId, Variant};

pub struct ServiceProvider {
    pub id: PartyId,
    variant: Variant,
    /// Category a user must prove.
    pub policy: String,
    rng: ChaCha20Rng,
    issued: BTreeMap<ChannelId, [u8; 32]>,
    seen_nonces: BTreeSet<[u8; 32]>,
    accepted_ids: BTreeSet<[u8; 32]>,
    accepted_receipts: BTreeSet<u64>,
}

impl ServiceProvider {
    pub fn new(id: &str, variant: Variant, policy: &str, seed: &[u8]) -> Self {
        ServiceProvider {
            id: id.to_string(),
            variant,
            policy: policy.to_string(),
            rng: seeded_rng(&[seed, b"/rng"].concat()),
            issued: BTreeMap::new(),
            seen_nonces: BTreeSet::new(),
            accepted_ids: BTreeSet::new(),
            accepted_receipts: BTreeSet::new(),
        }
    }

    fn fresh_nonce(&mut self) -> [u8; 32] {
        loop {
            let mut n = [0u8; 32];
            self.rng.fill_bytes(&mut n);
            if self.seen_nonces.insert(n) {
                return n;
            }
        }
    }

    /// Opens a session with `user` by sending `request y`.
    pub fn start(&mut self, io: &mut dyn Io, user: &str, task: TaskId) -> ChannelId {
        let ch = io.new_channel();
        let nonce = self.fresh_nonce();
        self.issued.insert(ch, nonce);
        let msg = ProtocolMessage::Request { service: self.id.clone(), nonce, category: self.policy.clone() };
        io.send(&self.id, user, Some(task), ch, self.variant.steps().request, msg);
        ch
    }

    /// Token variants: tells `user` which token key this service accepts and
    /// which account to pay. Returns `None` if no such key is registered.
    pub fn send_details(&mut self, io: &mut dyn Io, user: &str, task: TaskId) -> Option<KeyId> {
        let token_key = io.ledger().read(|l| {
            l.state()
                .keys_in_order()
                .into_iter()
                .find(|k| k.record.purpose == KeyPurpose::Token && k.record.category == self.policy)
                .map(|k| k.key_id)
        })?;
        let ch = io.new_channel();
        let msg = ProtocolMessage::ServiceDetails {
            service: self.id.clone(),
            account: service_account(&self.id),
            token_key,
        };
        io.send(&self.id, user, Some(task), ch, 1, msg);
        Some(token_key)
    }

    pub fn handle(&mut self, io: &mut dyn Io, env: &Envelope) {
        if !env.msg.is_presentation() {
            io.send(&self.id, &env.from, env.task, env.channel, 0, ProtocolMessage::Rejected {
                reason: "unexpected-message".into(),
            });
            return;
        }
        let now = io.now();
        let issued_nonce = self.issued.remove(&env.channel);
        let (as_of, verdict) = io.ledger().read(|l| {
            let inp = ServiceInputs {
                service: &self.id,
                policy: &self.policy,
                now,
                ledger: l,
                issued_nonce,
                accepted_ids: &self.accepted_ids,
                accepted_receipts: &self.accepted_receipts,
            };
            (l.head_seq(), service_accept(&inp, &env.msg))
        });
        let input = io.current_event();
        io.decide(Decision {
            party: self.id.clone(),
            kind: DecisionKind::ServiceAccept,
            input,
            as_of,
            synced_at: now,
            verdict: verdict.clone(),
        });
        if verdict.accepted {
            match &env.msg {
                ProtocolMessage::Voucher(v) => {
                    self.accepted_ids.insert(v.one_time_id);
                }
                ProtocolMessage::SignedReceipt { receipt, .. } => {
                    self.accepted_receipts.insert(receipt.entry_seq);
                }
                ProtocolMessage::Object { one_time_id, receipt, .. } => {
                    self.accepted_ids.insert(*one_time_id);
                    self.accepted_receipts.insert(receipt.entry_seq);
                }
                _ => {}
            }
        }
        let msg = ProtocolMessage::Outcome { accepted: verdict.accepted, reason: verdict.reason };
        io.send(&self.id, &env.from, env.task, env.channel, 0, msg);
    }
}
