//! Wire vocabulary exchanged between parties.
//!
//! Every message can list its fields with a visibility class. The linkage
//! oracle treats `Linkable` values as exact-match evidence, `Attribute`
//! values as anonymity-set labels, and ignores `Public` ones.

use crate::crypto::{Challenge, KeyId, OwnershipProof, SealedBox, Signature};
use crate::ledger::Receipt;
use crate::wire::{signature_bytes, Decoder, Encoder, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldClass {
    /// Unique per use; equal values on two events tie them together.
    Linkable,
    /// Shared label such as a category or signing key; partitions users
    /// into anonymity sets but never singles one out on its own.
    Attribute(&'static str),
    /// Carried for protocol reasons; carries no linkage signal.
    Public,
    /// Ciphertext. Opaque bytes to everyone but the recipient.
    Sealed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: &'static str,
    pub class: FieldClass,
    pub value: Vec<u8>,
}

fn linkable(name: &'static str, value: impl Into<Vec<u8>>) -> Field {
    Field { name, class: FieldClass::Linkable, value: value.into() }
}

fn attribute(name: &'static str, kind: &'static str, value: impl Into<Vec<u8>>) -> Field {
    Field { name, class: FieldClass::Attribute(kind), value: value.into() }
}

fn public(name: &'static str, value: impl Into<Vec<u8>>) -> Field {
    Field { name, class: FieldClass::Public, value: value.into() }
}

pub const ATTR_CATEGORY: &str = "category";
pub const ATTR_CP_KEY: &str = "cp-key";
pub const ATTR_AP_KEY: &str = "ap-key";
pub const ATTR_SERVICE: &str = "service";
pub const ATTR_INTERVAL: &str = "interval";

/// What an AP signs for: a blinded nonce online, a one-time id offline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthPayload {
    BlindedNonce(Vec<u8>),
    OneTimeId([u8; 32]),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineVoucher {
    pub one_time_id: [u8; 32],
    pub category: String,
    pub expiry_tick: u64,
    /// `AP_T(u_i)`, over [`voucher_message`].
    pub sig: Signature,
}

/// Bytes an `AP_T` key signs for a voucher.
pub fn voucher_message(one_time_id: &[u8; 32], category: &str, expiry_tick: u64) -> Vec<u8> {
    Encoder::tagged("voucher:").bytes(one_time_id).text(category).u64(expiry_tick).finish()
}

/// Bytes an AP key signs for an offline token object.
pub fn object_message(one_time_id: &[u8; 32], receipt: &Receipt) -> Vec<u8> {
    Encoder::tagged("object:").bytes(one_time_id).bytes(&receipt.encode()).finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertListing {
    pub seq: u64,
    pub key_value: Vec<u8>,
    pub sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// Service tells the user which issuer's tokens it takes and where to pay.
    ServiceDetails { service: String, account: KeyId, token_key: KeyId },
    /// `request y`: a fresh nonce and the category the service requires.
    Request { service: String, nonce: [u8; 32], category: String },
    /// `identify` plus the user's keys (plain, blinded, or none).
    Identify { sealed: SealedBox, keys: Vec<Vec<u8>>, intervals: Vec<u64>, category: String, service: Option<String> },
    /// `CP(u)`.
    Issued { identifier: Vec<u8>, sig: Signature },
    /// `request u`.
    RequestIdentifier { identifier: Vec<u8>, sig: Signature, service: String },
    /// `AP(u')`.
    Assertion { identifier: Vec<u8>, sig: Signature, service: String },
    /// `CP(x_1), ..., CP(x_n)` handed to the user and then to the AP.
    Certificates { certs: Vec<(Vec<u8>, Signature)> },
    /// `request-certs A`, optionally narrowed to a bit prefix of `[x_i]`.
    RequestCerts { signer: KeyId, prefix_bits: u64, prefix: Vec<u8> },
    CertList { signer: KeyId, certs: Vec<CertListing> },
    RequestChallenge,
    Challenge { challenge: Challenge },
    /// `prove-owner x*_i, request x_i, [y]` or `..., u_i`.
    Authorize { proof: Option<OwnershipProof>, key: Vec<u8>, cert: Option<Signature>, payload: AuthPayload },
    /// `AP([y])`.
    BlindSignature { sig: Signature },
    /// `AP_T(u_i)`.
    Voucher(OfflineVoucher),
    /// `AP(y)`.
    Authorization { nonce: [u8; 32], sig: Signature },
    /// `CP(x_i), x_i(Service)`.
    Spend { key: Vec<u8>, cp_sig: Signature, endorsement: Signature, account: KeyId, one_time_id: Option<[u8; 32]> },
    /// An entry submitted to the ledger.
    LedgerWrite { payload: Vec<u8> },
    LedgerReceipt { receipt: Receipt },
    /// `AP(receipt)`.
    SignedReceipt { receipt: Receipt, sig: Signature },
    /// Offline token object: a receipt bound to a one-time id.
    Object { one_time_id: [u8; 32], receipt: Receipt, sig: Signature },
    /// `CP([x_1]), ..., CP([x_n])`.
    TokenNotes { notes: Vec<(Vec<u8>, Signature)> },
    /// CP-to-AP revocation push (pre-ledger variants only).
    RevocationPush { revoked: Vec<Vec<u8>> },
    /// Ledger update feed delivered to a replica.
    Sync { from_seq: u64, to_seq: u64 },
    Rejected { reason: String },
    Outcome { accepted: bool, reason: String },
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::ServiceDetails { .. } => "service-details",
            ProtocolMessage::Request { .. } => "request",
            ProtocolMessage::Identify { .. } => "identify",
            ProtocolMessage::Issued { .. } => "issued",
            ProtocolMessage::RequestIdentifier { .. } => "request-u",
            ProtocolMessage::Assertion { .. } => "assertion",
            ProtocolMessage::Certificates { .. } => "certificates",
            ProtocolMessage::RequestCerts { .. } => "request-certs",
            ProtocolMessage::CertList { .. } => "cert-list",
            ProtocolMessage::RequestChallenge => "request-challenge",
            ProtocolMessage::Challenge { .. } => "challenge",
            ProtocolMessage::Authorize { .. } => "authorize",
            ProtocolMessage::BlindSignature { .. } => "blind-signature",
            ProtocolMessage::Voucher(_) => "voucher",
            ProtocolMessage::Authorization { .. } => "authorization",
            ProtocolMessage::Spend { .. } => "spend",
            ProtocolMessage::LedgerWrite { .. } => "ledger-write",
            ProtocolMessage::LedgerReceipt { .. } => "receipt",
            ProtocolMessage::SignedReceipt { .. } => "signed-receipt",
            ProtocolMessage::Object { .. } => "object",
            ProtocolMessage::TokenNotes { .. } => "token-notes",
            ProtocolMessage::RevocationPush { .. } => "revocation-push",
            ProtocolMessage::Sync { .. } => "sync",
            ProtocolMessage::Rejected { .. } => "rejected",
            ProtocolMessage::Outcome { .. } => "outcome",
        }
    }

    /// Artifacts a service accepts as proof of authorisation or payment.
    pub fn is_presentation(&self) -> bool {
        matches!(
            self,
            ProtocolMessage::Assertion { .. }
                | ProtocolMessage::Authorization { .. }
                | ProtocolMessage::Voucher(_)
                | ProtocolMessage::SignedReceipt { .. }
                | ProtocolMessage::Object { .. }
        )
    }

    pub fn fields(&self) -> Vec<Field> {
        let sig = |name, s: &Signature| {
            vec![linkable(name, signature_bytes(s))]
        };
        let signer = |s: &Signature, kind| attribute("signer", kind, s.signer.as_bytes().to_vec());
        match self {
            ProtocolMessage::ServiceDetails { service, account, token_key } => vec![
                attribute("service", ATTR_SERVICE, service.as_bytes()),
                public("account", account.as_bytes().to_vec()),
                attribute("token-key", ATTR_CP_KEY, token_key.as_bytes().to_vec()),
            ],
            ProtocolMessage::Request { service, nonce, category } => vec![
                attribute("service", ATTR_SERVICE, service.as_bytes()),
                linkable("nonce", nonce.to_vec()),
                attribute("category", ATTR_CATEGORY, category.as_bytes()),
            ],
            ProtocolMessage::Identify { sealed, keys, intervals, category, service } => {
                let mut f = vec![Field { name: "identify", class: FieldClass::Sealed, value: sealed.to_bytes() }];
                f.extend(keys.iter().map(|k| linkable("key", k.clone())));
                f.extend(intervals.iter().map(|i| attribute("interval", ATTR_INTERVAL, i.to_be_bytes().to_vec())));
                f.push(attribute("category", ATTR_CATEGORY, category.as_bytes()));
                if let Some(s) = service {
                    f.push(attribute("service", ATTR_SERVICE, s.as_bytes()));
                }
                f
            }
            ProtocolMessage::Issued { identifier, sig: s } => {
                let mut f = vec![linkable("identifier", identifier.clone())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_CP_KEY));
                f
            }
            ProtocolMessage::RequestIdentifier { identifier, sig: s, service } => {
                let mut f = vec![linkable("identifier", identifier.clone())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_CP_KEY));
                f.push(attribute("service", ATTR_SERVICE, service.as_bytes()));
                f
            }
            ProtocolMessage::Assertion { identifier, sig: s, service } => {
                let mut f = vec![linkable("identifier", identifier.clone())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_AP_KEY));
                f.push(attribute("service", ATTR_SERVICE, service.as_bytes()));
                f
            }
            ProtocolMessage::Certificates { certs } | ProtocolMessage::TokenNotes { notes: certs } => certs
                .iter()
                .flat_map(|(k, s)| {
                    let mut f = vec![linkable("key", k.clone())];
                    f.extend(sig("sig", s));
                    f.push(signer(s, ATTR_CP_KEY));
                    f
                })
                .collect(),
            ProtocolMessage::RequestCerts { signer: k, prefix_bits, prefix } => vec![
                attribute("signer", ATTR_CP_KEY, k.as_bytes().to_vec()),
                public("prefix-bits", prefix_bits.to_be_bytes().to_vec()),
                public("prefix", prefix.clone()),
            ],
            ProtocolMessage::CertList { signer: k, certs } => {
                let mut f = vec![attribute("signer", ATTR_CP_KEY, k.as_bytes().to_vec())];
                f.extend(certs.iter().map(|c| public("cert", c.key_value.clone())));
                f
            }
            ProtocolMessage::RequestChallenge => vec![],
            ProtocolMessage::Challenge { challenge } => vec![linkable("challenge", challenge.0.to_vec())],
            ProtocolMessage::Authorize { proof, key, cert, payload } => {
                let mut f = vec![linkable("key", key.clone())];
                if let Some(p) = proof {
                    f.push(linkable("challenge", p.challenge.0.to_vec()));
                    f.extend(sig("proof", &p.response));
                }
                if let Some(c) = cert {
                    f.extend(sig("cert", c));
                    f.push(signer(c, ATTR_CP_KEY));
                }
                match payload {
                    AuthPayload::BlindedNonce(b) => f.push(linkable("blinded-nonce", b.clone())),
                    AuthPayload::OneTimeId(u) => f.push(linkable("one-time-id", u.to_vec())),
                }
                f
            }
            ProtocolMessage::BlindSignature { sig: s } => {
                let mut f = sig("sig", s);
                f.push(signer(s, ATTR_AP_KEY));
                f
            }
            ProtocolMessage::Voucher(v) => {
                let mut f = vec![
                    linkable("one-time-id", v.one_time_id.to_vec()),
                    attribute("category", ATTR_CATEGORY, v.category.as_bytes()),
                    public("expiry", v.expiry_tick.to_be_bytes().to_vec()),
                ];
                f.extend(sig("sig", &v.sig));
                f.push(signer(&v.sig, ATTR_AP_KEY));
                f
            }
            ProtocolMessage::Authorization { nonce, sig: s } => {
                let mut f = vec![linkable("nonce", nonce.to_vec())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_AP_KEY));
                f
            }
            ProtocolMessage::Spend { key, cp_sig, endorsement, account, one_time_id } => {
                let mut f = vec![linkable("key", key.clone())];
                f.extend(sig("cp-sig", cp_sig));
                f.push(signer(cp_sig, ATTR_CP_KEY));
                f.extend(sig("endorsement", endorsement));
                f.push(attribute("account", ATTR_SERVICE, account.as_bytes().to_vec()));
                if let Some(u) = one_time_id {
                    f.push(linkable("one-time-id", u.to_vec()));
                }
                f
            }
            ProtocolMessage::LedgerWrite { payload } => crate::ledger::Payload::decode(payload)
                .map(|p| payload_fields(&p))
                .unwrap_or_default(),
            ProtocolMessage::LedgerReceipt { receipt } => vec![linkable("receipt", receipt.encode())],
            ProtocolMessage::SignedReceipt { receipt, sig: s } => {
                let mut f = vec![linkable("receipt", receipt.encode())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_AP_KEY));
                f
            }
            ProtocolMessage::Object { one_time_id, receipt, sig: s } => {
                let mut f = vec![linkable("one-time-id", one_time_id.to_vec()), linkable("receipt", receipt.encode())];
                f.extend(sig("sig", s));
                f.push(signer(s, ATTR_AP_KEY));
                f
            }
            ProtocolMessage::RevocationPush { revoked } => revoked.iter().map(|r| linkable("revoked", r.clone())).collect(),
            ProtocolMessage::Sync { from_seq, to_seq } => vec![
                public("from", from_seq.to_be_bytes().to_vec()),
                public("to", to_seq.to_be_bytes().to_vec()),
            ],
            ProtocolMessage::Rejected { reason } => vec![public("reason", reason.as_bytes())],
            ProtocolMessage::Outcome { accepted, reason } => vec![
                public("accepted", vec![*accepted as u8]),
                public("reason", reason.as_bytes()),
            ],
        }
    }
}

/// Visibility classes for ledger entry payload fields.
pub fn payload_fields(p: &crate::ledger::Payload) -> Vec<Field> {
    use crate::ledger::Payload;
    match p {
        Payload::Certificate(c) => vec![
            linkable("key", c.key_value.clone()),
            linkable("sig", signature_bytes(&c.signature)),
            attribute("signer", ATTR_CP_KEY, c.signature.signer.as_bytes().to_vec()),
        ],
        Payload::RevokeOne { cert_seq } => vec![public("cert-seq", cert_seq.to_be_bytes().to_vec())],
        Payload::RevokeAll { key_id } => vec![attribute("key", ATTR_CP_KEY, key_id.as_bytes().to_vec())],
        Payload::KeyRegistry(r) => vec![
            public("owner", r.owner.as_bytes()),
            public("category", r.category.as_bytes()),
            public("key", r.public_key.clone()),
        ],
        Payload::TokenIssue { amount } => vec![public("amount", amount.to_be_bytes().to_vec())],
        Payload::TokenTransfer(t) => vec![
            linkable("key", t.note_key.clone()),
            linkable("cp-sig", signature_bytes(&t.cp_sig)),
            linkable("endorsement", signature_bytes(&t.endorsement)),
            attribute("account", ATTR_SERVICE, t.to.as_bytes().to_vec()),
        ],
        Payload::PresentedSignature { cert_sig } => vec![
            linkable("cert", signature_bytes(cert_sig)),
            attribute("signer", ATTR_CP_KEY, cert_sig.signer.as_bytes().to_vec()),
        ],
    }
}

// ----- canonical encoding ------------------------------------------------

fn put_proof(e: &mut Encoder, p: &OwnershipProof) {
    e.key_id(&p.key_id).bytes(&p.challenge.0).signature(&p.response);
}

fn get_proof(d: &mut Decoder) -> Result<OwnershipProof, WireError> {
    Ok(OwnershipProof { key_id: d.key_id()?, challenge: Challenge(d.array32()?), response: d.signature()? })
}

fn put_receipt(e: &mut Encoder, r: &Receipt) {
    e.bytes(&r.encode());
}

fn get_receipt(d: &mut Decoder) -> Result<Receipt, WireError> {
    Receipt::decode(d.bytes()?)
}

fn put_sealed(e: &mut Encoder, s: &SealedBox) {
    e.bytes(&s.to_bytes());
}

fn get_sealed(d: &mut Decoder) -> Result<SealedBox, WireError> {
    SealedBox::from_bytes(d.bytes()?).ok_or(WireError::BadWidth)
}

impl ProtocolMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.text(self.kind());
        match self {
            ProtocolMessage::ServiceDetails { service, account, token_key } => {
                e.text(service).key_id(account).key_id(token_key);
            }
            ProtocolMessage::Request { service, nonce, category } => {
                e.text(service).bytes(nonce).text(category);
            }
            ProtocolMessage::Identify { sealed, keys, intervals, category, service } => {
                put_sealed(&mut e, sealed);
                e.list(keys, |e, k| {
                    e.bytes(k);
                });
                e.list(intervals, |e, i| {
                    e.u64(*i);
                });
                e.text(category);
                e.text(service.as_deref().unwrap_or(""));
            }
            ProtocolMessage::Issued { identifier, sig } => {
                e.bytes(identifier).signature(sig);
            }
            ProtocolMessage::RequestIdentifier { identifier, sig, service }
            | ProtocolMessage::Assertion { identifier, sig, service } => {
                e.bytes(identifier).signature(sig).text(service);
            }
            ProtocolMessage::Certificates { certs } | ProtocolMessage::TokenNotes { notes: certs } => {
                e.list(certs, |e, (k, s)| {
                    e.bytes(k).signature(s);
                });
            }
            ProtocolMessage::RequestCerts { signer, prefix_bits, prefix } => {
                e.key_id(signer).u64(*prefix_bits).bytes(prefix);
            }
            ProtocolMessage::CertList { signer, certs } => {
                e.key_id(signer);
                e.list(certs, |e, c| {
                    e.u64(c.seq).bytes(&c.key_value).signature(&c.sig);
                });
            }
            ProtocolMessage::RequestChallenge => {}
            ProtocolMessage::Challenge { challenge } => {
                e.bytes(&challenge.0);
            }
            ProtocolMessage::Authorize { proof, key, cert, payload } => {
                e.flag(proof.is_some());
                if let Some(p) = proof {
                    put_proof(&mut e, p);
                }
                e.bytes(key);
                e.flag(cert.is_some());
                if let Some(c) = cert {
                    e.signature(c);
                }
                match payload {
                    AuthPayload::BlindedNonce(b) => e.u64(0).bytes(b),
                    AuthPayload::OneTimeId(u) => e.u64(1).bytes(u),
                };
            }
            ProtocolMessage::BlindSignature { sig } => {
                e.signature(sig);
            }
            ProtocolMessage::Voucher(v) => {
                e.bytes(&v.one_time_id).text(&v.category).u64(v.expiry_tick).signature(&v.sig);
            }
            ProtocolMessage::Authorization { nonce, sig } => {
                e.bytes(nonce).signature(sig);
            }
            ProtocolMessage::Spend { key, cp_sig, endorsement, account, one_time_id } => {
                e.bytes(key).signature(cp_sig).signature(endorsement).key_id(account);
                e.bytes(one_time_id.as_ref().map_or(&[][..], |u| &u[..]));
            }
            ProtocolMessage::LedgerWrite { payload } => {
                e.bytes(payload);
            }
            ProtocolMessage::LedgerReceipt { receipt } => put_receipt(&mut e, receipt),
            ProtocolMessage::SignedReceipt { receipt, sig } => {
                put_receipt(&mut e, receipt);
                e.signature(sig);
            }
            ProtocolMessage::Object { one_time_id, receipt, sig } => {
                e.bytes(one_time_id);
                put_receipt(&mut e, receipt);
                e.signature(sig);
            }
            ProtocolMessage::RevocationPush { revoked } => {
                e.list(revoked, |e, r| {
                    e.bytes(r);
                });
            }
            ProtocolMessage::Sync { from_seq, to_seq } => {
                e.u64(*from_seq).u64(*to_seq);
            }
            ProtocolMessage::Rejected { reason } => {
                e.text(reason);
            }
            ProtocolMessage::Outcome { accepted, reason } => {
                e.flag(*accepted).text(reason);
            }
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
        let mut d = Decoder::new(bytes);
        let kind = d.text()?;
        let m = match kind.as_str() {
            "service-details" => ProtocolMessage::ServiceDetails {
                service: d.text()?,
                account: d.key_id()?,
                token_key: d.key_id()?,
            },
            "request" => ProtocolMessage::Request { service: d.text()?, nonce: d.array32()?, category: d.text()? },
            "identify" => ProtocolMessage::Identify {
                sealed: get_sealed(&mut d)?,
                keys: d.list(|d| d.vec())?,
                intervals: d.list(|d| d.u64())?,
                category: d.text()?,
                service: Some(d.text()?).filter(|s| !s.is_empty()),
            },
            "issued" => ProtocolMessage::Issued { identifier: d.vec()?, sig: d.signature()? },
            "request-u" => ProtocolMessage::RequestIdentifier {
                identifier: d.vec()?,
                sig: d.signature()?,
                service: d.text()?,
            },
            "assertion" => ProtocolMessage::Assertion { identifier: d.vec()?, sig: d.signature()?, service: d.text()? },
            "certificates" => ProtocolMessage::Certificates { certs: d.list(|d| Ok((d.vec()?, d.signature()?)))? },
            "token-notes" => ProtocolMessage::TokenNotes { notes: d.list(|d| Ok((d.vec()?, d.signature()?)))? },
            "request-certs" => ProtocolMessage::RequestCerts { signer: d.key_id()?, prefix_bits: d.u64()?, prefix: d.vec()? },
            "cert-list" => ProtocolMessage::CertList {
                signer: d.key_id()?,
                certs: d.list(|d| Ok(CertListing { seq: d.u64()?, key_value: d.vec()?, sig: d.signature()? }))?,
            },
            "request-challenge" => ProtocolMessage::RequestChallenge,
            "challenge" => ProtocolMessage::Challenge { challenge: Challenge(d.array32()?) },
            "authorize" => {
                let proof = if d.flag()? { Some(get_proof(&mut d)?) } else { None };
                let key = d.vec()?;
                let cert = if d.flag()? { Some(d.signature()?) } else { None };
                let payload = match d.u64()? {
                    0 => AuthPayload::BlindedNonce(d.vec()?),
                    1 => AuthPayload::OneTimeId(d.array32()?),
                    other => return Err(WireError::UnknownVariant(format!("auth payload {other}"))),
                };
                ProtocolMessage::Authorize { proof, key, cert, payload }
            }
            "blind-signature" => ProtocolMessage::BlindSignature { sig: d.signature()? },
            "voucher" => ProtocolMessage::Voucher(OfflineVoucher {
                one_time_id: d.array32()?,
                category: d.text()?,
                expiry_tick: d.u64()?,
                sig: d.signature()?,
            }),
            "authorization" => ProtocolMessage::Authorization { nonce: d.array32()?, sig: d.signature()? },
            "spend" => {
                let key = d.vec()?;
                let cp_sig = d.signature()?;
                let endorsement = d.signature()?;
                let account = d.key_id()?;
                let u = d.bytes()?;
                let one_time_id = match u.len() {
                    0 => None,
                    32 => Some(u.try_into().unwrap()),
                    _ => return Err(WireError::BadWidth),
                };
                ProtocolMessage::Spend { key, cp_sig, endorsement, account, one_time_id }
            }
            "ledger-write" => ProtocolMessage::LedgerWrite { payload: d.vec()? },
            "receipt" => ProtocolMessage::LedgerReceipt { receipt: get_receipt(&mut d)? },
            "signed-receipt" => ProtocolMessage::SignedReceipt { receipt: get_receipt(&mut d)?, sig: d.signature()? },
            "object" => ProtocolMessage::Object {
                one_time_id: d.array32()?,
                receipt: get_receipt(&mut d)?,
                sig: d.signature()?,
            },
            "revocation-push" => ProtocolMessage::RevocationPush { revoked: d.list(|d| d.vec())? },
            "sync" => ProtocolMessage::Sync { from_seq: d.u64()?, to_seq: d.u64()? },
            "rejected" => ProtocolMessage::Rejected { reason: d.text()? },
            "outcome" => ProtocolMessage::Outcome { accepted: d.flag()?, reason: d.text()? },
            other => return Err(WireError::UnknownVariant(other.to_string())),
        };
        d.finish()?;
        Ok(m)
    }
}
