//! Cryptographic layer.
//!
//! Public-key mode: the management entity certifies each master-capable
//! node's ANNOUNCE dataset together with its Ed25519 verification key; the
//! certificate rides in every extended ANNOUNCE. The elected master signs
//! each FOLLOW_UP over the full encoded message (header included, signature
//! field zero-filled), so the signature also covers the sequence ID.
//!
//! Symmetric mode models the group-key scheme: a 16-byte HMAC-SHA256 ICV
//! keyed by a secret every legitimate node holds. Any key holder can tag a
//! message under any source identity, which is the insider weakness the
//! public-key mode removes.

use std::collections::BTreeMap;
use std::time::Instant;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

use crate::wire::{
    self, AnnounceBody, AnnounceExtension, Body, ClockIdentity, FollowUpBody, PtpHeader,
    PtpMessage, Signature, Timestamp, WireError, WireMode, ICV_LEN, PUBLIC_KEY_LEN,
};

pub type PublicKeyBytes = [u8; PUBLIC_KEY_LEN];

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("message is not a {0}")]
    WrongMessageType(&'static str),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("benchmark needs at least 100 iterations, got {0}")]
    TooFewIterations(usize),
    #[error("key file line {line}: {reason}")]
    KeyFile { line: usize, reason: String },
}

/// Ed25519 signing key with its 32-byte verification key.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair(pub={})", hex::encode(self.public_key()))
    }
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public_key(&self) -> PublicKeyBytes {
        self.signing.verifying_key().to_bytes()
    }

    pub fn sign(&self, data: &[u8]) -> Signature {
        Signature(self.signing.sign(data).to_bytes())
    }
}

pub fn verify_signature(public_key: &PublicKeyBytes, data: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(public_key) else {
        return false;
    };
    vk.verify(data, &ed25519_dalek::Signature::from_bytes(&sig.0))
        .is_ok()
}

/// ANNOUNCE dataset bound to a master key by the management signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MasterCertificate {
    /// Canonical body: volatile fields zeroed, no extension.
    pub announce_fields: AnnounceBody,
    pub master_public_key: PublicKeyBytes,
    pub management_signature: Signature,
}

/// Zeroes the fields that do not take part in the election
/// (`originTimestamp`, `stepsRemoved`; the reserved byte is always zero)
/// and strips the extension.
pub fn canonical_announce(body: &AnnounceBody) -> AnnounceBody {
    AnnounceBody {
        origin_timestamp: Timestamp::ZERO,
        steps_removed: 0,
        extension: None,
        ..*body
    }
}

fn certificate_image(fields: &AnnounceBody, master_pub: &PublicKeyBytes) -> Vec<u8> {
    let mut img = canonical_announce(fields).fields_bytes();
    img.extend_from_slice(master_pub);
    img
}

impl MasterCertificate {
    /// Signed bytes: canonical 30-byte body followed by the master key.
    pub fn signed_bytes(&self) -> Vec<u8> {
        certificate_image(&self.announce_fields, &self.master_public_key)
    }

    /// Reads the certificate carried by an extended ANNOUNCE.
    pub fn from_announce(body: &AnnounceBody) -> Option<Self> {
        let ext = body.extension?;
        Some(Self {
            announce_fields: canonical_announce(body),
            master_public_key: ext.public_key,
            management_signature: ext.management_signature,
        })
    }

    pub fn extension(&self) -> AnnounceExtension {
        AnnounceExtension {
            public_key: self.master_public_key,
            management_signature: self.management_signature,
        }
    }
}

pub fn make_certificate(
    body: &AnnounceBody,
    master_pub: &PublicKeyBytes,
    management: &KeyPair,
) -> MasterCertificate {
    let announce_fields = canonical_announce(body);
    let management_signature = management.sign(&certificate_image(&announce_fields, master_pub));
    MasterCertificate {
        announce_fields,
        master_public_key: *master_pub,
        management_signature,
    }
}

pub fn verify_certificate(cert: &MasterCertificate, management_pub: &PublicKeyBytes) -> bool {
    verify_signature(
        management_pub,
        &cert.signed_bytes(),
        &cert.management_signature,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertVerdict {
    Verified(PublicKeyBytes),
    Rejected,
}

#[derive(Debug, Clone)]
struct CachedCert {
    image: Vec<u8>,
    signature: Signature,
    verdict: CertVerdict,
}

/// Certificate checks with a per-sender cache: a full signature check on
/// first sight or whenever the certified content changes, otherwise a
/// byte comparison.
#[derive(Debug, Clone)]
pub struct CertificateVerifier {
    management_pub: PublicKeyBytes,
    cache: BTreeMap<ClockIdentity, CachedCert>,
    verifications: u64,
}

impl CertificateVerifier {
    pub fn new(management_pub: PublicKeyBytes) -> Self {
        Self {
            management_pub,
            cache: BTreeMap::new(),
            verifications: 0,
        }
    }

    /// Number of cryptographic verifications performed so far.
    pub fn verifications(&self) -> u64 {
        self.verifications
    }

    pub fn check(&mut self, sender: ClockIdentity, announce: &AnnounceBody) -> CertVerdict {
        let Some(cert) = MasterCertificate::from_announce(announce) else {
            return CertVerdict::Rejected;
        };
        let image = cert.signed_bytes();
        if let Some(c) = self.cache.get(&sender) {
            if c.image == image && c.signature == cert.management_signature {
                return c.verdict;
            }
        }
        self.verifications += 1;
        let verdict = if verify_certificate(&cert, &self.management_pub) {
            CertVerdict::Verified(cert.master_public_key)
        } else {
            CertVerdict::Rejected
        };
        self.cache.insert(
            sender,
            CachedCert {
                image,
                signature: cert.management_signature,
                verdict,
            },
        );
        verdict
    }
}

fn followup_image(msg: &PtpMessage) -> Result<Vec<u8>, SecurityError> {
    let Body::FollowUp(fu) = msg.body else {
        return Err(SecurityError::WrongMessageType("FOLLOW_UP"));
    };
    let canonical = PtpMessage {
        header: msg.header,
        body: Body::FollowUp(FollowUpBody {
            signature: Some(Signature::ZERO),
            ..fu
        }),
        icv: None,
    };
    Ok(wire::encode(&canonical, WireMode::Extended)?)
}

/// Signs the extended encoding of a FOLLOW_UP with its signature field
/// zero-filled.
pub fn sign_followup(msg: &PtpMessage, master: &KeyPair) -> Result<Signature, SecurityError> {
    Ok(master.sign(&followup_image(msg)?))
}

pub fn verify_followup(msg: &PtpMessage, master_pub: &PublicKeyBytes) -> bool {
    let Body::FollowUp(FollowUpBody {
        signature: Some(sig),
        ..
    }) = msg.body
    else {
        return false;
    };
    match followup_image(msg) {
        Ok(img) => verify_signature(master_pub, &img, &sig),
        Err(_) => false,
    }
}

/// Shared symmetric secret of the group-key mode.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupKey(pub [u8; 32]);

impl std::fmt::Debug for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GroupKey(..)")
    }
}

type HmacSha256 = Hmac<Sha256>;

fn icv_input(msg: &PtpMessage, mode: WireMode) -> Result<Vec<u8>, WireError> {
    let mut m = *msg;
    m.icv = Some([0; ICV_LEN]);
    let mut bytes = wire::encode(&m, mode)?;
    bytes.truncate(bytes.len() - ICV_LEN);
    Ok(bytes)
}

fn keyed(key: &GroupKey) -> HmacSha256 {
    <HmacSha256 as Mac>::new_from_slice(&key.0).expect("HMAC accepts any key length")
}

/// HMAC-SHA256-128 over the encoded message up to the ICV value.
pub fn hmac_tag(msg: &PtpMessage, mode: WireMode, key: &GroupKey) -> Result<[u8; ICV_LEN], WireError> {
    let mut mac = keyed(key);
    mac.update(&icv_input(msg, mode)?);
    let full = mac.finalize().into_bytes();
    let mut tag = [0u8; ICV_LEN];
    tag.copy_from_slice(&full[..ICV_LEN]);
    Ok(tag)
}

pub fn hmac_check(msg: &PtpMessage, mode: WireMode, key: &GroupKey) -> bool {
    let Some(tag) = msg.icv else {
        return false;
    };
    let Ok(input) = icv_input(msg, mode) else {
        return false;
    };
    let mut mac = keyed(key);
    mac.update(&input);
    mac.verify_truncated_left(&tag).is_ok()
}

/// Attaches a fresh ICV.
pub fn apply_hmac(msg: &mut PtpMessage, mode: WireMode, key: &GroupKey) -> Result<(), WireError> {
    msg.icv = Some(hmac_tag(msg, mode, key)?);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CryptoBench {
    pub sign_median_ns: u64,
    pub verify_median_ns: u64,
}

impl CryptoBench {
    /// Fraction of one core spent signing `rate` messages per second.
    pub fn sign_cpu_share(&self, rate: u64) -> f64 {
        (self.sign_median_ns * rate) as f64 / 1e9
    }
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Wall-clock medians for signing and verifying a 44-byte FOLLOW_UP image.
pub fn benchmark_crypto(iterations: usize) -> Result<CryptoBench, SecurityError> {
    if iterations < 100 {
        return Err(SecurityError::TooFewIterations(iterations));
    }
    let key = KeyPair::from_seed([0x42; 32]);
    let pubkey = key.public_key();
    let msg = PtpMessage::new(
        PtpHeader::new(ClockIdentity([0, 1, 2, 0xFF, 0xFE, 3, 4, 5]), 1),
        Body::FollowUp(FollowUpBody {
            precise_origin_timestamp: Timestamp::new(1_700_000_000, 0)?,
            signature: None,
        }),
    );
    let mut payload = wire::encode(&msg, WireMode::Baseline)?;
    debug_assert_eq!(payload.len(), 44);

    let mut sign_times = Vec::with_capacity(iterations);
    let mut verify_times = Vec::with_capacity(iterations);
    for i in 0..iterations {
        payload[43] = i as u8;
        let t = Instant::now();
        let sig = key.sign(&payload);
        sign_times.push(t.elapsed().as_nanos() as u64);
        let t = Instant::now();
        let ok = verify_signature(&pubkey, &payload, &sig);
        verify_times.push(t.elapsed().as_nanos() as u64);
        assert!(ok);
    }
    Ok(CryptoBench {
        sign_median_ns: median(sign_times),
        verify_median_ns: median(verify_times),
    })
}

/// Public verification keys, one `name hex` pair per line.
pub fn parse_key_file(text: &str) -> Result<BTreeMap<String, PublicKeyBytes>, SecurityError> {
    let mut keys = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| SecurityError::KeyFile {
            line: idx + 1,
            reason,
        };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(hexkey), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `<name> <hex key>`".into()));
        };
        let bytes = hex::decode(hexkey).map_err(|e| err(e.to_string()))?;
        let key: PublicKeyBytes = bytes
            .try_into()
            .map_err(|b: Vec<u8>| err(format!("key is {} bytes, want 32", b.len())))?;
        if keys.insert(name.to_string(), key).is_some() {
            return Err(err(format!("duplicate entry for {name}")));
        }
    }
    Ok(keys)
}

pub fn format_key_file(keys: &BTreeMap<String, PublicKeyBytes>) -> String {
    keys.iter()
        .map(|(name, k)| format!("{name} {}\n", hex::encode(k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn announce() -> AnnounceBody {
        AnnounceBody {
            origin_timestamp: Timestamp::new(1_700_000_123, 456).unwrap(),
            current_utc_offset: 37,
            priority1: 128,
            clock_class: 6,
            clock_accuracy: 0x21,
            offset_scaled_log_variance: 0x4E5D,
            priority2: 128,
            grandmaster_identity: ClockIdentity([2, 0, 0, 0xFF, 0xFE, 0, 0, 1]),
            steps_removed: 3,
            time_source: 0x20,
            extension: None,
        }
    }

    fn followup(seq: u32, ts: u64) -> PtpMessage {
        PtpMessage::new(
            PtpHeader::new(ClockIdentity([2, 0, 0, 0xFF, 0xFE, 0, 0, 1]), seq),
            Body::FollowUp(FollowUpBody {
                precise_origin_timestamp: Timestamp::new(ts, 0).unwrap(),
                signature: None,
            }),
        )
    }

    fn signed(msg: &PtpMessage, key: &KeyPair) -> PtpMessage {
        let sig = sign_followup(msg, key).unwrap();
        let mut m = *msg;
        if let Body::FollowUp(ref mut f) = m.body {
            f.signature = Some(sig);
        }
        m
    }

    #[test]
    fn certificate_round_trip() {
        let mgmt = KeyPair::from_seed([1; 32]);
        let master = KeyPair::from_seed([2; 32]);
        let cert = make_certificate(&announce(), &master.public_key(), &mgmt);
        assert!(verify_certificate(&cert, &mgmt.public_key()));
        assert!(!verify_certificate(&cert, &master.public_key()));
    }

    #[test]
    fn volatile_fields_do_not_change_certificate() {
        let mgmt = KeyPair::from_seed([1; 32]);
        let pk = KeyPair::from_seed([2; 32]).public_key();
        let mut later = announce();
        later.origin_timestamp = Timestamp::new(1_800_000_000, 0).unwrap();
        later.steps_removed = 9;
        let a = make_certificate(&announce(), &pk, &mgmt);
        let b = make_certificate(&later, &pk, &mgmt);
        assert_eq!(a, b);
        assert_eq!(a.signed_bytes(), b.signed_bytes());
    }

    #[test]
    fn tampered_certificate_rejected() {
        let mgmt = KeyPair::from_seed([1; 32]);
        let pk = KeyPair::from_seed([2; 32]).public_key();
        let mut cert = make_certificate(&announce(), &pk, &mgmt);
        cert.announce_fields.priority1 ^= 0x80;
        assert!(!verify_certificate(&cert, &mgmt.public_key()));
    }

    #[test]
    fn self_signed_certificate_rejected() {
        let mgmt = KeyPair::from_seed([1; 32]);
        let insider = KeyPair::from_seed([66; 32]);
        let cert = make_certificate(&announce(), &insider.public_key(), &insider);
        assert!(!verify_certificate(&cert, &mgmt.public_key()));
    }

    #[test]
    fn verifier_caches_per_sender() {
        let mgmt = KeyPair::from_seed([1; 32]);
        let master = KeyPair::from_seed([2; 32]);
        let cert = make_certificate(&announce(), &master.public_key(), &mgmt);
        let mut body = announce();
        body.extension = Some(cert.extension());
        let sender = body.grandmaster_identity;

        let mut v = CertificateVerifier::new(mgmt.public_key());
        for i in 0..100u64 {
            body.origin_timestamp = Timestamp::new(1_700_000_000 + i, 0).unwrap();
            assert_eq!(v.check(sender, &body), CertVerdict::Verified(master.public_key()));
        }
        assert_eq!(v.verifications(), 1);

        // new key in the same slot forces a fresh (failing) verification
        let mut swapped = body;
        swapped.extension = Some(AnnounceExtension {
            public_key: [9; 32],
            ..cert.extension()
        });
        assert_eq!(v.check(sender, &swapped), CertVerdict::Rejected);
        assert_eq!(v.verifications(), 2);
        assert_eq!(v.check(sender, &swapped), CertVerdict::Rejected);
        assert_eq!(v.verifications(), 2);

        let mut bare = body;
        bare.extension = None;
        assert_eq!(v.check(sender, &bare), CertVerdict::Rejected);
    }

    #[test]
    fn followup_sign_verify() {
        let key = KeyPair::from_seed([7; 32]);
        let m = signed(&followup(10, 1_700_000_000), &key);
        assert!(verify_followup(&m, &key.public_key()));
        assert!(!verify_followup(&m, &KeyPair::from_seed([8; 32]).public_key()));
        assert!(!verify_followup(&followup(10, 1), &key.public_key()));
    }

    #[test]
    fn followup_signature_binds_sequence_and_timestamp() {
        let key = KeyPair::from_seed([7; 32]);
        let a = sign_followup(&followup(10, 1_700_000_000), &key).unwrap();
        let b = sign_followup(&followup(11, 1_700_000_000), &key).unwrap();
        assert_ne!(a, b);

        let mut m = signed(&followup(10, 1_700_000_000), &key);
        if let Body::FollowUp(ref mut f) = m.body {
            f.precise_origin_timestamp = Timestamp::new(1_700_000_000, 1).unwrap();
        }
        assert!(!verify_followup(&m, &key.public_key()));
    }

    #[test]
    fn sign_requires_followup() {
        let key = KeyPair::from_seed([7; 32]);
        let mut m = followup(1, 1);
        m.body = Body::Announce(announce());
        assert!(matches!(
            sign_followup(&m, &key),
            Err(SecurityError::WrongMessageType(_))
        ));
    }

    #[test]
    fn group_key_round_trip_and_insider_forgery() {
        let key = GroupKey([5; 32]);
        let mut m = followup(1, 1_700_000_000);
        m.body = Body::FollowUp(FollowUpBody {
            precise_origin_timestamp: Timestamp::new(1_700_000_030, 0).unwrap(),
            signature: None,
        });
        apply_hmac(&mut m, WireMode::Baseline, &key).unwrap();
        assert!(hmac_check(&m, WireMode::Baseline, &key));
        // any holder can tag under the master's identity; the check cannot tell
        assert!(hmac_check(&m, WireMode::Baseline, &GroupKey([5; 32])));
        assert!(!hmac_check(&m, WireMode::Baseline, &GroupKey([6; 32])));
        m.icv = Some([0xAA; ICV_LEN]);
        assert!(!hmac_check(&m, WireMode::Baseline, &key));
        m.icv = None;
        assert!(!hmac_check(&m, WireMode::Baseline, &key));
    }

    #[test]
    fn key_file_round_trip_and_errors() {
        let mut keys = BTreeMap::new();
        keys.insert("management".to_string(), [1u8; 32]);
        keys.insert("gm".to_string(), [2u8; 32]);
        let text = format_key_file(&keys);
        assert_eq!(parse_key_file(&text).unwrap(), keys);

        let bad = "gm 0102\n";
        assert!(matches!(
            parse_key_file(bad),
            Err(SecurityError::KeyFile { line: 1, .. })
        ));
        let dup = format!("# keys\n{text}{text}");
        assert!(matches!(
            parse_key_file(&dup),
            Err(SecurityError::KeyFile { line: 4, .. })
        ));
    }

    #[test]
    fn benchmark_needs_iterations() {
        assert!(matches!(
            benchmark_crypto(10),
            Err(SecurityError::TooFewIterations(10))
        ));
    }
}
