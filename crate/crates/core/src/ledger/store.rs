use std::sync::Arc;

use parking_lot::RwLock;

use crate::wire::Decoder;

use super::entry::{chain_step, EntryKind, LedgerConfig, LedgerEntry, Receipt, Submission, TAG_CERTIFICATE};
use super::state::LedgerState;
use super::LedgerError;

const DUMP_MAGIC: &str = "unlinkid-ledger v1";

/// The authoritative log: entries, their hash chain and the derived state.
#[derive(Debug, Clone)]
pub struct Ledger {
    entries: Vec<Arc<LedgerEntry>>,
    /// `heads[k]` is the chain head after entry `k`.
    heads: Vec<[u8; 32]>,
    genesis_hash: [u8; 32],
    state: LedgerState,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Result<Self, LedgerError> {
        Ok(Ledger {
            entries: Vec::new(),
            heads: Vec::new(),
            genesis_hash: config.genesis_hash(),
            state: LedgerState::new(config)?,
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        self.state.config()
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn genesis_hash(&self) -> [u8; 32] {
        self.genesis_hash
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_seq(&self) -> Option<u64> {
        self.state.head_seq()
    }

    pub fn head_hash(&self) -> [u8; 32] {
        self.heads.last().copied().unwrap_or(self.genesis_hash)
    }

    pub fn entries(&self) -> &[Arc<LedgerEntry>] {
        &self.entries
    }

    pub fn entry(&self, seq: u64) -> Option<&LedgerEntry> {
        self.entries.get(seq as usize).map(|e| e.as_ref())
    }

    pub fn append(&mut self, sub: &Submission, now: u64) -> Result<Receipt, LedgerError> {
        let entry = self.state.apply(sub, now)?;
        let head = chain_step(&self.head_hash(), &entry.encode());
        self.heads.push(head);
        self.entries.push(Arc::new(entry));
        Ok(Receipt { entry_seq: self.len() - 1, ledger_head_hash: head })
    }

    /// Appends an entry copied from another ledger, re-validating it.
    pub fn replicate(&mut self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        if entry.seq != self.len() {
            return Err(LedgerError::SeqMismatch { expected: self.len(), found: entry.seq });
        }
        if entry.author_key_id != entry.author_sig.signer {
            return Err(LedgerError::BadAuthorSignature);
        }
        self.append(&entry.submission(), entry.timestamp).map(|_| ())
    }

    /// A copy holding only entries `0..=as_of` (nothing for `None`).
    pub fn prefix(&self, as_of: Option<u64>) -> Ledger {
        let mut out = Ledger::new(self.config().clone()).expect("config was accepted at genesis");
        let end = as_of.map_or(0, |a| (a + 1).min(self.len()));
        for e in &self.entries[..end as usize] {
            out.replicate(e).expect("stored entries replay");
        }
        out
    }

    /// Entries with `seq > cursor`, in order.
    pub fn updates_since(&self, cursor: u64) -> Result<Vec<Arc<LedgerEntry>>, LedgerError> {
        match self.head_seq() {
            Some(h) if cursor <= h => Ok(self.entries[cursor as usize + 1..].to_vec()),
            _ => Err(LedgerError::CursorBeyondHead { cursor }),
        }
    }

    /// Entries with `seq >= start`; an empty list once `start` passes the head.
    pub fn entries_from(&self, start: u64) -> Vec<Arc<LedgerEntry>> {
        self.entries.get(start as usize..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn verify_receipt(&self, receipt: &Receipt) -> bool {
        self.heads.get(receipt.entry_seq as usize) == Some(&receipt.ledger_head_hash)
    }

    /// Recomputes the chain from genesis and checks every stored head.
    pub fn verify_chain(&self) -> bool {
        let mut head = self.genesis_hash;
        for (entry, stored) in self.entries.iter().zip(&self.heads) {
            head = chain_step(&head, &entry.encode());
            if head != *stored {
                return false;
            }
        }
        true
    }

    /// Rebuilds the derived state of the prefix `0..=as_of` (or the empty
    /// prefix for `None`).
    pub fn state_at(&self, as_of: Option<u64>) -> LedgerState {
        let mut s = LedgerState::new(self.config().clone()).expect("config was accepted at genesis");
        let end = as_of.map_or(0, |a| (a + 1).min(self.len()));
        for e in &self.entries[..end as usize] {
            s.replay(e).expect("stored entries replay");
        }
        s
    }

    pub fn dump(&self) -> String {
        let mut out = format!(
            "{DUMP_MAGIC} genesis={} config={}\n",
            hex::encode(self.genesis_hash),
            hex::encode(self.config().encode())
        );
        for e in &self.entries {
            out.push_str(&hex::encode(e.encode()));
            out.push('\n');
        }
        out
    }

    /// Parses a dump and re-validates every entry from genesis.
    pub fn load(text: &str) -> Result<Ledger, LedgerError> {
        let bad = |m: &str| LedgerError::BadDump(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty dump"))?;
        let rest = header.strip_prefix(DUMP_MAGIC).ok_or_else(|| bad("missing header"))?;
        let mut genesis = None;
        let mut config = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("genesis", v)) => genesis = Some(hex::decode(v).map_err(|_| bad("genesis hex"))?),
                Some(("config", v)) => config = Some(hex::decode(v).map_err(|_| bad("config hex"))?),
                _ => return Err(bad("unknown header field")),
            }
        }
        let config = LedgerConfig::decode(&config.ok_or_else(|| bad("missing config"))?)
            .map_err(|e| LedgerError::BadDump(format!("config: {e}")))?;
        let mut ledger = Ledger::new(config)?;
        if genesis.as_deref() != Some(&ledger.genesis_hash[..]) {
            return Err(bad("genesis hash does not match config"));
        }
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bytes = hex::decode(line.trim()).map_err(|_| LedgerError::BadDump(format!("line {}: hex", i + 2)))?;
            let entry = LedgerEntry::decode(&bytes).map_err(|e| LedgerError::BadDump(format!("line {}: {e}", i + 2)))?;
            if entry.seq != ledger.len() {
                return Err(LedgerError::SeqMismatch { expected: ledger.len(), found: entry.seq });
            }
            if entry.author_key_id != entry.author_sig.signer {
                return Err(LedgerError::BadAuthorSignature);
            }
            ledger.append(&entry.submission(), entry.timestamp)?;
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataViolation {
    pub seq: u64,
    pub field_count: usize,
}

/// Structural scan: every certificate payload must hold exactly two fields,
/// the key value and the signature. Reads raw bytes, so it also works on
/// entries that bypassed the typed encoder.
pub fn scan_certificate_metadata<'a>(payloads: impl IntoIterator<Item = (u64, &'a [u8])>) -> Vec<MetadataViolation> {
    payloads
        .into_iter()
        .filter(|(_, p)| EntryKind::of_payload(p) == Some(EntryKind::Certificate))
        .filter_map(|(seq, p)| {
            let n = Decoder::tagged(p, TAG_CERTIFICATE).and_then(|d| d.count_fields()).unwrap_or(usize::MAX);
            (n != 2).then_some(MetadataViolation { seq, field_count: n })
        })
        .collect()
}

/// Thread-safe handle: appends serialise on the write lock, readers take
/// consistent snapshots under the read lock.
#[derive(Debug, Clone)]
pub struct SharedLedger(Arc<RwLock<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        SharedLedger(Arc::new(RwLock::new(ledger)))
    }

    pub fn append(&self, sub: &Submission, now: u64) -> Result<Receipt, LedgerError> {
        self.0.write().append(sub, now)
    }

    pub fn read<T>(&self, f: impl FnOnce(&Ledger) -> T) -> T {
        f(&self.0.read())
    }

    pub fn snapshot(&self) -> Ledger {
        self.0.read().clone()
    }

    pub fn entries_from(&self, start: u64) -> Vec<Arc<LedgerEntry>> {
        self.0.read().entries_from(start)
    }

    pub fn len(&self) -> u64 {
        self.0.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.read().is_empty()
    }
}
