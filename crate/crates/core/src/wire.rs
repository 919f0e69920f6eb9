//! Byte-exact PTP message codec.
//!
//! Two encodings share one 34-byte header layout:
//!
//! * **Baseline** is the IEEE 1588-2008 layout with a 16-bit `sequenceId`.
//! * **Extended** sets the `SECURITY` flag, stores the two most significant
//!   bytes of a 32-bit `sequenceId` in header bytes 16..18 (the first half of
//!   the reserved word) and appends the certificate fields to ANNOUNCE and a
//!   signature to FOLLOW_UP.
//!
//! A baseline-only reader of an extended message still sees a well formed
//! header whose `sequenceId` is the low 16 bits of the logical value; see
//! [`decode_legacy`].
//!
//! All multi-byte fields are big-endian.

use std::fmt;

use thiserror::Error;

pub const HEADER_LEN: usize = 34;
pub const TIMESTAMP_LEN: usize = 10;
pub const PORT_IDENTITY_LEN: usize = 10;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const ICV_LEN: usize = 16;
/// TLV type of the group-key integrity trailer.
pub const ICV_TLV_TYPE: u16 = 0x8000;
pub const ICV_TRAILER_LEN: usize = 4 + ICV_LEN;

/// `flagField` bit reused as the extended-mode marker.
pub const FLAG_SECURITY: u16 = 0x8000;
pub const PTP_VERSION: u8 = 2;

const MAX_SECONDS: u64 = (1 << 48) - 1;
const NANOS_PER_SEC: i64 = 1_000_000_000;

const ANNOUNCE_BODY_LEN: usize = 30;
const MGMT_BODY_LEN: usize = PORT_IDENTITY_LEN + 2 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("sequenceId {0:#x} does not fit the 16-bit baseline field")]
    SequenceOverflow(u32),
    #[error("field out of range: {0}")]
    FieldRange(&'static str),
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type nibble {0:#x}")]
    UnknownMessageType(u8),
    #[error("messageLength {declared} inconsistent with {expected} byte body")]
    BadLengthField { declared: usize, expected: usize },
    #[error("line {line}: {reason}")]
    Fixture { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireMode {
    Baseline,
    Extended,
}

/// 48-bit seconds plus nanoseconds; 10 bytes on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    seconds: u64,
    nanoseconds: u32,
}

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp {
        seconds: 0,
        nanoseconds: 0,
    };

    pub fn new(seconds: u64, nanoseconds: u32) -> Result<Self, WireError> {
        if seconds > MAX_SECONDS {
            return Err(WireError::FieldRange("timestamp seconds exceed 48 bits"));
        }
        if nanoseconds >= 1_000_000_000 {
            return Err(WireError::FieldRange("timestamp nanoseconds >= 10^9"));
        }
        Ok(Self {
            seconds,
            nanoseconds,
        })
    }

    /// Converts a non-negative nanosecond count since the PTP epoch.
    pub fn from_nanos(ns: i64) -> Result<Self, WireError> {
        if ns < 0 {
            return Err(WireError::FieldRange("negative timestamp"));
        }
        Self::new(
            (ns / NANOS_PER_SEC) as u64,
            (ns % NANOS_PER_SEC) as u32,
        )
    }

    /// Nanoseconds since the epoch, or `None` if that overflows an `i64`.
    pub fn to_nanos(&self) -> Option<i64> {
        i64::try_from(self.seconds)
            .ok()?
            .checked_mul(NANOS_PER_SEC)?
            .checked_add(self.nanoseconds as i64)
    }

    pub fn seconds(&self) -> u64 {
        self.seconds
    }

    pub fn nanoseconds(&self) -> u32 {
        self.nanoseconds
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.seconds.to_be_bytes()[2..]);
        out.extend_from_slice(&self.nanoseconds.to_be_bytes());
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let mut secs = [0u8; 8];
        secs[2..].copy_from_slice(r.take(6)?);
        let nanos = r.u32()?;
        if nanos >= 1_000_000_000 {
            return Err(WireError::FieldRange("timestamp nanoseconds >= 10^9"));
        }
        Ok(Self {
            seconds: u64::from_be_bytes(secs),
            nanoseconds: nanos,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockIdentity(pub [u8; 8]);

impl fmt::Display for ClockIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

impl Signature {
    pub const ZERO: Signature = Signature([0; SIGNATURE_LEN]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageType {
    Sync,
    DelayReq,
    FollowUp,
    DelayResp,
    Announce,
    MgmtSet,
}

impl MessageType {
    pub fn nibble(self) -> u8 {
        match self {
            MessageType::Sync => 0x0,
            MessageType::DelayReq => 0x1,
            MessageType::FollowUp => 0x8,
            MessageType::DelayResp => 0x9,
            MessageType::Announce => 0xB,
            MessageType::MgmtSet => 0xD,
        }
    }

    pub fn from_nibble(n: u8) -> Result<Self, WireError> {
        Ok(match n {
            0x0 => MessageType::Sync,
            0x1 => MessageType::DelayReq,
            0x8 => MessageType::FollowUp,
            0x9 => MessageType::DelayResp,
            0xB => MessageType::Announce,
            0xD => MessageType::MgmtSet,
            other => return Err(WireError::UnknownMessageType(other)),
        })
    }

    fn control_field(self) -> u8 {
        match self {
            MessageType::Sync => 0,
            MessageType::DelayReq => 1,
            MessageType::FollowUp => 2,
            MessageType::DelayResp => 3,
            MessageType::MgmtSet => 4,
            MessageType::Announce => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Sync => "SYNC",
            MessageType::DelayReq => "DELAY_REQ",
            MessageType::FollowUp => "FOLLOW_UP",
            MessageType::DelayResp => "DELAY_RESP",
            MessageType::Announce => "ANNOUNCE",
            MessageType::MgmtSet => "MGMT_SET",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header fields that are not derived from the body or the encoding mode.
///
/// `messageType` comes from the body variant and `messageLength` is computed
/// by the encoder. `flag_field` must not carry [`FLAG_SECURITY`]; the encoder
/// owns that bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtpHeader {
    pub version: u8,
    pub domain_number: u8,
    pub flag_field: u16,
    pub correction_field: i64,
    pub source_clock_identity: ClockIdentity,
    pub source_port_number: u16,
    pub sequence_id: u32,
    pub log_message_interval: i8,
}

impl PtpHeader {
    pub fn new(source: ClockIdentity, sequence_id: u32) -> Self {
        Self {
            version: PTP_VERSION,
            domain_number: 0,
            flag_field: 0,
            correction_field: 0,
            source_clock_identity: source,
            source_port_number: 1,
            sequence_id,
            log_message_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncBody {
    pub origin_timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayReqBody {
    pub origin_timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FollowUpBody {
    pub precise_origin_timestamp: Timestamp,
    /// Present exactly in extended mode.
    pub signature: Option<Signature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayRespBody {
    pub receive_timestamp: Timestamp,
    pub requesting_clock_identity: ClockIdentity,
    pub requesting_port_number: u16,
}

/// Master public key plus the management signature over the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnounceExtension {
    pub public_key: [u8; PUBLIC_KEY_LEN],
    pub management_signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnounceBody {
    pub origin_timestamp: Timestamp,
    pub current_utc_offset: i16,
    pub priority1: u8,
    pub clock_class: u8,
    pub clock_accuracy: u8,
    pub offset_scaled_log_variance: u16,
    pub priority2: u8,
    pub grandmaster_identity: ClockIdentity,
    pub steps_removed: u16,
    pub time_source: u8,
    /// Present exactly in extended mode.
    pub extension: Option<AnnounceExtension>,
}

impl AnnounceBody {
    fn write_fields(&self, out: &mut Vec<u8>) {
        self.origin_timestamp.write(out);
        out.extend_from_slice(&self.current_utc_offset.to_be_bytes());
        out.push(0); // reserved
        out.push(self.priority1);
        out.push(self.clock_class);
        out.push(self.clock_accuracy);
        out.extend_from_slice(&self.offset_scaled_log_variance.to_be_bytes());
        out.push(self.priority2);
        out.extend_from_slice(&self.grandmaster_identity.0);
        out.extend_from_slice(&self.steps_removed.to_be_bytes());
        out.push(self.time_source);
    }

    /// The 30-byte baseline body image (extension fields excluded).
    pub fn fields_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ANNOUNCE_BODY_LEN);
        self.write_fields(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MgmtAction {
    SetClockAccuracy,
    SetPriority1,
    SetPriority2,
    SetTime,
}

impl MgmtAction {
    fn code(self) -> u8 {
        match self {
            MgmtAction::SetClockAccuracy => 1,
            MgmtAction::SetPriority1 => 2,
            MgmtAction::SetPriority2 => 3,
            MgmtAction::SetTime => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self, WireError> {
        Ok(match code {
            1 => MgmtAction::SetClockAccuracy,
            2 => MgmtAction::SetPriority1,
            3 => MgmtAction::SetPriority2,
            4 => MgmtAction::SetTime,
            _ => return Err(WireError::FieldRange("management action")),
        })
    }
}

/// Simplified SET management message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MgmtSetBody {
    pub target_clock_identity: ClockIdentity,
    pub target_port_number: u16,
    pub action: MgmtAction,
    pub value: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    Sync(SyncBody),
    DelayReq(DelayReqBody),
    FollowUp(FollowUpBody),
    DelayResp(DelayRespBody),
    Announce(AnnounceBody),
    MgmtSet(MgmtSetBody),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtpMessage {
    pub header: PtpHeader,
    pub body: Body,
    /// Group-key integrity check value carried in a trailing TLV.
    pub icv: Option<[u8; ICV_LEN]>,
}

impl PtpMessage {
    pub fn new(header: PtpHeader, body: Body) -> Self {
        Self {
            header,
            body,
            icv: None,
        }
    }

    pub fn message_type(&self) -> MessageType {
        match self.body {
            Body::Sync(_) => MessageType::Sync,
            Body::DelayReq(_) => MessageType::DelayReq,
            Body::FollowUp(_) => MessageType::FollowUp,
            Body::DelayResp(_) => MessageType::DelayResp,
            Body::Announce(_) => MessageType::Announce,
            Body::MgmtSet(_) => MessageType::MgmtSet,
        }
    }

    /// Total encoded size in the given mode, trailer included.
    pub fn encoded_len(&self, mode: WireMode) -> usize {
        let trailer = if self.icv.is_some() { ICV_TRAILER_LEN } else { 0 };
        HEADER_LEN + body_len(self.message_type(), mode) + trailer
    }
}

fn body_len(ty: MessageType, mode: WireMode) -> usize {
    let ext = mode == WireMode::Extended;
    match ty {
        MessageType::Sync | MessageType::DelayReq => TIMESTAMP_LEN,
        MessageType::FollowUp => TIMESTAMP_LEN + if ext { SIGNATURE_LEN } else { 0 },
        MessageType::DelayResp => TIMESTAMP_LEN + PORT_IDENTITY_LEN,
        MessageType::Announce => {
            ANNOUNCE_BODY_LEN
                + if ext {
                    PUBLIC_KEY_LEN + SIGNATURE_LEN
                } else {
                    0
                }
        }
        MessageType::MgmtSet => MGMT_BODY_LEN,
    }
}

pub fn encode(msg: &PtpMessage, mode: WireMode) -> Result<Vec<u8>, WireError> {
    let h = &msg.header;
    if h.flag_field & FLAG_SECURITY != 0 {
        return Err(WireError::FieldRange("flagField carries the SECURITY bit"));
    }
    if h.version > 0x0F {
        return Err(WireError::FieldRange("version exceeds 4 bits"));
    }
    if mode == WireMode::Baseline && h.sequence_id > u16::MAX as u32 {
        return Err(WireError::SequenceOverflow(h.sequence_id));
    }
    let extended = mode == WireMode::Extended;
    match &msg.body {
        Body::FollowUp(f) if f.signature.is_some() != extended => {
            return Err(WireError::FieldRange(
                "FOLLOW_UP signature must be present exactly in extended mode",
            ))
        }
        Body::Announce(a) if a.extension.is_some() != extended => {
            return Err(WireError::FieldRange(
                "ANNOUNCE certificate must be present exactly in extended mode",
            ))
        }
        _ => {}
    }

    let ty = msg.message_type();
    let total = msg.encoded_len(mode);
    let mut out = Vec::with_capacity(total);
    out.push(ty.nibble());
    out.push(h.version);
    out.extend_from_slice(&(total as u16).to_be_bytes());
    out.push(h.domain_number);
    out.push(0);
    let flags = if extended {
        h.flag_field | FLAG_SECURITY
    } else {
        h.flag_field
    };
    out.extend_from_slice(&flags.to_be_bytes());
    out.extend_from_slice(&h.correction_field.to_be_bytes());
    let msb = if extended {
        (h.sequence_id >> 16) as u16
    } else {
        0
    };
    out.extend_from_slice(&msb.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&h.source_clock_identity.0);
    out.extend_from_slice(&h.source_port_number.to_be_bytes());
    out.extend_from_slice(&(h.sequence_id as u16).to_be_bytes());
    out.push(ty.control_field());
    out.push(h.log_message_interval as u8);
    debug_assert_eq!(out.len(), HEADER_LEN);

    match &msg.body {
        Body::Sync(b) => b.origin_timestamp.write(&mut out),
        Body::DelayReq(b) => b.origin_timestamp.write(&mut out),
        Body::FollowUp(b) => {
            b.precise_origin_timestamp.write(&mut out);
            if let Some(sig) = &b.signature {
                out.extend_from_slice(&sig.0);
            }
        }
        Body::DelayResp(b) => {
            b.receive_timestamp.write(&mut out);
            out.extend_from_slice(&b.requesting_clock_identity.0);
            out.extend_from_slice(&b.requesting_port_number.to_be_bytes());
        }
        Body::Announce(b) => {
            b.write_fields(&mut out);
            if let Some(ext) = &b.extension {
                out.extend_from_slice(&ext.public_key);
                out.extend_from_slice(&ext.management_signature.0);
            }
        }
        Body::MgmtSet(b) => {
            out.extend_from_slice(&b.target_clock_identity.0);
            out.extend_from_slice(&b.target_port_number.to_be_bytes());
            out.push(b.action.code());
            out.push(0);
            out.extend_from_slice(&b.value.to_be_bytes());
        }
    }
    if let Some(icv) = &msg.icv {
        out.extend_from_slice(&ICV_TLV_TYPE.to_be_bytes());
        out.extend_from_slice(&(ICV_LEN as u16).to_be_bytes());
        out.extend_from_slice(icv);
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

/// Decodes a message, inferring the mode from the `SECURITY` flag.
pub fn decode(bytes: &[u8]) -> Result<(PtpMessage, WireMode), WireError> {
    decode_with(bytes, false)
}

/// Decodes as a reader that predates the extension: the `SECURITY` flag and
/// the reserved header bytes are not interpreted, so `sequenceId` is the
/// legacy 16-bit field and trailing extension bytes are not parsed.
pub fn decode_legacy(bytes: &[u8]) -> Result<PtpMessage, WireError> {
    decode_with(bytes, true).map(|(m, _)| m)
}

fn decode_with(bytes: &[u8], legacy: bool) -> Result<(PtpMessage, WireMode), WireError> {
    let mut r = Reader::new(bytes);
    let b0 = r.u8()?;
    let ty = MessageType::from_nibble(b0 & 0x0F)?;
    let version = r.u8()? & 0x0F;
    let declared = r.u16()? as usize;
    let domain_number = r.u8()?;
    r.skip(1)?;
    let raw_flags = r.u16()?;
    let correction_field = r.u64()? as i64;
    let seq_msb = r.u16()?;
    r.skip(2)?;
    let mut clock = [0u8; 8];
    clock.copy_from_slice(r.take(8)?);
    let source_port_number = r.u16()?;
    let seq_low = r.u16()?;
    r.skip(1)?; // controlField
    let log_message_interval = r.u8()? as i8;

    let (mode, flag_field, sequence_id) = if !legacy && raw_flags & FLAG_SECURITY != 0 {
        (
            WireMode::Extended,
            raw_flags & !FLAG_SECURITY,
            ((seq_msb as u32) << 16) | seq_low as u32,
        )
    } else {
        (WireMode::Baseline, raw_flags, seq_low as u32)
    };

    let expected = HEADER_LEN + body_len(ty, mode);
    if declared > bytes.len() {
        return Err(WireError::Truncated {
            needed: declared,
            available: bytes.len(),
        });
    }
    if bytes.len() < expected {
        return Err(WireError::Truncated {
            needed: expected,
            available: bytes.len(),
        });
    }
    if declared < expected {
        return Err(WireError::BadLengthField { declared, expected });
    }
    if !legacy && declared != expected && declared != expected + ICV_TRAILER_LEN {
        return Err(WireError::BadLengthField { declared, expected });
    }

    let extended = mode == WireMode::Extended;
    let body = match ty {
        MessageType::Sync => Body::Sync(SyncBody {
            origin_timestamp: Timestamp::read(&mut r)?,
        }),
        MessageType::DelayReq => Body::DelayReq(DelayReqBody {
            origin_timestamp: Timestamp::read(&mut r)?,
        }),
        MessageType::FollowUp => {
            let precise_origin_timestamp = Timestamp::read(&mut r)?;
            let signature = if extended {
                Some(Signature(r.array()?))
            } else {
                None
            };
            Body::FollowUp(FollowUpBody {
                precise_origin_timestamp,
                signature,
            })
        }
        MessageType::DelayResp => Body::DelayResp(DelayRespBody {
            receive_timestamp: Timestamp::read(&mut r)?,
            requesting_clock_identity: ClockIdentity(r.array()?),
            requesting_port_number: r.u16()?,
        }),
        MessageType::Announce => {
            let origin_timestamp = Timestamp::read(&mut r)?;
            let current_utc_offset = r.u16()? as i16;
            r.skip(1)?;
            let priority1 = r.u8()?;
            let clock_class = r.u8()?;
            let clock_accuracy = r.u8()?;
            let offset_scaled_log_variance = r.u16()?;
            let priority2 = r.u8()?;
            let grandmaster_identity = ClockIdentity(r.array()?);
            let steps_removed = r.u16()?;
            let time_source = r.u8()?;
            let extension = if extended {
                Some(AnnounceExtension {
                    public_key: r.array()?,
                    management_signature: Signature(r.array()?),
                })
            } else {
                None
            };
            Body::Announce(AnnounceBody {
                origin_timestamp,
                current_utc_offset,
                priority1,
                clock_class,
                clock_accuracy,
                offset_scaled_log_variance,
                priority2,
                grandmaster_identity,
                steps_removed,
                time_source,
                extension,
            })
        }
        MessageType::MgmtSet => {
            let target_clock_identity = ClockIdentity(r.array()?);
            let target_port_number = r.u16()?;
            let action = MgmtAction::from_code(r.u8()?)?;
            r.skip(1)?;
            Body::MgmtSet(MgmtSetBody {
                target_clock_identity,
                target_port_number,
                action,
                value: r.u64()?,
            })
        }
    };

    let icv = if !legacy && declared == expected + ICV_TRAILER_LEN {
        let tlv_type = r.u16()?;
        let tlv_len = r.u16()? as usize;
        if tlv_type != ICV_TLV_TYPE || tlv_len != ICV_LEN {
            return Err(WireError::BadLengthField { declared, expected });
        }
        Some(r.array()?)
    } else {
        None
    };

    let header = PtpHeader {
        version,
        domain_number,
        flag_field,
        correction_field,
        source_clock_identity: ClockIdentity(clock),
        source_port_number,
        sequence_id,
        log_message_interval,
    };
    Ok((PtpMessage { header, body, icv }, mode))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(WireError::Truncated {
                needed: end,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn skip(&mut self, n: usize) -> Result<(), WireError> {
        self.take(n).map(|_| ())
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }
}

/// Parses the hex fixture format: one message per line, `#` starts a
/// comment, blank lines ignored.
pub fn parse_hex_fixture(text: &str) -> Result<Vec<Vec<u8>>, WireError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let compact: String = line.split_whitespace().collect();
        let bytes = hex::decode(&compact).map_err(|e| WireError::Fixture {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(bytes);
    }
    Ok(out)
}

pub fn format_hex_fixture<'a>(messages: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut s = String::new();
    for m in messages {
        s.push_str(&hex::encode(m));
        s.push('\n');
    }
    s
}
