//! PTP ordinary-clock state machine.
//!
//! A node is both master-capable and a slave; the election decides which
//! role it plays. Every received message produces exactly one
//! [`NodeVerdict`]. Slave-side checks run in a fixed order, each enabled by
//! the configured [`SecurityMode`]:
//!
//! 1. binding of the claimed clock ID to the observed network address
//! 2. session window (or challenge echo for DELAY_RESP)
//! 3. group-key ICV or public-key signature/certificate
//! 4. servo update
//!
//! All enabled gates are evaluated and reported; the first failing one in
//! that order decides the verdict.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bmc::{self, CertState, Election, ForeignMasterRecord, Role};
use crate::identity::{self, NetworkAddress};
use crate::rng::{self, SimRng};
use crate::security::{
    self, CertVerdict, CertificateVerifier, GroupKey, KeyPair, MasterCertificate, PublicKeyBytes,
};
use crate::session::{self, ChallengeState, IdSpace, SequenceWindow};
use crate::timemath::{self, ExchangeSample, ServoAction, ServoState, SimClock};
use crate::wire::{
    self, AnnounceBody, Body, ClockIdentity, DelayReqBody, DelayRespBody, FollowUpBody,
    MessageType, MgmtAction, PtpHeader, PtpMessage, Signature, SyncBody, Timestamp, WireMode,
};

/// Arms-race defense tiers. Each tier includes the checks of the tiers
/// before it, except that `PublicKey` replaces the group-key ICV of
/// `Symmetric` with signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityMode {
    None,
    Binding,
    Session16,
    Session32,
    Symmetric,
    PublicKey,
}

impl SecurityMode {
    pub fn binding(self) -> bool {
        self >= SecurityMode::Binding
    }

    pub fn sessions(self) -> bool {
        self >= SecurityMode::Session16
    }

    pub fn wire_mode(self) -> WireMode {
        if self >= SecurityMode::Session32 {
            WireMode::Extended
        } else {
            WireMode::Baseline
        }
    }

    pub fn default_id_bits(self) -> u8 {
        if self >= SecurityMode::Session32 {
            32
        } else {
            16
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SecurityMode::None => "none",
            SecurityMode::Binding => "binding",
            SecurityMode::Session16 => "session16",
            SecurityMode::Session32 => "session32",
            SecurityMode::Symmetric => "symmetric",
            SecurityMode::PublicKey => "public_key",
        }
    }

    pub const ALL: [SecurityMode; 6] = [
        SecurityMode::None,
        SecurityMode::Binding,
        SecurityMode::Session16,
        SecurityMode::Session32,
        SecurityMode::Symmetric,
        SecurityMode::PublicKey,
    ];
}

/// The announced part of a node's default dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockQuality {
    pub priority1: u8,
    pub clock_class: u8,
    pub clock_accuracy: u8,
    pub offset_scaled_log_variance: u16,
    pub priority2: u8,
    pub time_source: u8,
    pub current_utc_offset: i16,
}

impl Default for ClockQuality {
    fn default() -> Self {
        Self {
            priority1: 128,
            clock_class: 248,
            clock_accuracy: 0xFE,
            offset_scaled_log_variance: 0xFFFF,
            priority2: 128,
            time_source: 0xA0,
            current_utc_offset: 37,
        }
    }
}

impl ClockQuality {
    pub fn announce(&self, gm: ClockIdentity) -> AnnounceBody {
        AnnounceBody {
            origin_timestamp: Timestamp::ZERO,
            current_utc_offset: self.current_utc_offset,
            priority1: self.priority1,
            clock_class: self.clock_class,
            clock_accuracy: self.clock_accuracy,
            offset_scaled_log_variance: self.offset_scaled_log_variance,
            priority2: self.priority2,
            grandmaster_identity: gm,
            steps_removed: 0,
            time_source: self.time_source,
            extension: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NodeKeys {
    pub group_key: Option<GroupKey>,
    pub signing: Option<KeyPair>,
    pub certificate: Option<MasterCertificate>,
    pub management_public: Option<PublicKeyBytes>,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub name: String,
    pub address: NetworkAddress,
    pub quality: ClockQuality,
    pub master_capable: bool,
    pub security: SecurityMode,
    pub window_size: u32,
    /// Overrides the ID-space width implied by the security mode.
    pub session_bits: Option<u8>,
    pub keys: NodeKeys,
    /// `None` accepts management from anyone.
    pub mgmt_whitelist: Option<BTreeSet<NetworkAddress>>,
    pub sync_interval_log: i8,
    pub announce_interval_log: i8,
    pub delay_req_interval_log: i8,
    pub initial_offset_ns: i64,
    pub drift_ppb: i64,
    pub servo: ServoState,
    pub seed: u64,
}

impl NodeConfig {
    pub fn new(name: &str, address: NetworkAddress) -> Self {
        Self {
            name: name.to_string(),
            address,
            quality: ClockQuality::default(),
            master_capable: false,
            security: SecurityMode::None,
            window_size: session::DEFAULT_WINDOW,
            session_bits: None,
            keys: NodeKeys::default(),
            mgmt_whitelist: None,
            sync_interval_log: 0,
            announce_interval_log: 1,
            delay_req_interval_log: 0,
            initial_offset_ns: 0,
            drift_ppb: 0,
            servo: ServoState::default(),
            seed: 0,
        }
    }

    pub fn id_space(&self) -> Result<IdSpace, NodeError> {
        let bits = self
            .session_bits
            .unwrap_or_else(|| self.security.default_id_bits());
        IdSpace::with_bits(bits).ok_or(NodeError::BadSessionBits(bits))
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let space = self.id_space()?;
        if self.security.wire_mode() == WireMode::Baseline && space.bits() > 16 {
            return Err(NodeError::BadSessionBits(space.bits()));
        }
        SequenceWindow::new(0, self.window_size, space)
            .map_err(|_| NodeError::BadWindow(self.window_size))?;
        match self.security {
            SecurityMode::Symmetric if self.keys.group_key.is_none() => {
                Err(NodeError::MissingKeys("group key"))
            }
            SecurityMode::PublicKey if self.keys.management_public.is_none() => {
                Err(NodeError::MissingKeys("management public key"))
            }
            SecurityMode::PublicKey
                if self.master_capable
                    && (self.keys.signing.is_none() || self.keys.certificate.is_none()) =>
            {
                Err(NodeError::MissingKeys("master key pair and certificate"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("security mode needs a {0}")]
    MissingKeys(&'static str),
    #[error("unsupported sequence id width {0}")]
    BadSessionBits(u8),
    #[error("window size {0} does not fit the id space")]
    BadWindow(u32),
}

pub fn interval_ns(log: i8) -> u64 {
    let base = timemath::NANOS_PER_SEC as u64;
    if log >= 0 {
        base << log
    } else {
        base >> (-(log as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Accepted,
    Dropped,
    Ignored,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Dropped => "dropped",
            Verdict::Ignored => "ignored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reason {
    Ok,
    Step,
    Slew,
    Malformed,
    NotForUs,
    RoleMismatch,
    NotFromParent,
    BindingMismatch,
    CompatibilityMismatch,
    WindowReject,
    ChallengeMismatch,
    WrongRequester,
    MissingIcv,
    BadIcv,
    BadSignature,
    CertificateRejected,
    NoMatchingSync,
    NegativeDelay,
    RejectDelay,
    NotWhitelisted,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ok => "ok",
            Reason::Step => "step",
            Reason::Slew => "slew",
            Reason::Malformed => "malformed",
            Reason::NotForUs => "not_for_us",
            Reason::RoleMismatch => "role_mismatch",
            Reason::NotFromParent => "not_from_parent",
            Reason::BindingMismatch => "binding_mismatch",
            Reason::CompatibilityMismatch => "compatibility_mismatch",
            Reason::WindowReject => "window_reject",
            Reason::ChallengeMismatch => "challenge_mismatch",
            Reason::WrongRequester => "wrong_requester",
            Reason::MissingIcv => "missing_icv",
            Reason::BadIcv => "bad_icv",
            Reason::BadSignature => "bad_signature",
            Reason::CertificateRejected => "certificate_rejected",
            Reason::NoMatchingSync => "no_matching_sync",
            Reason::NegativeDelay => "negative_delay",
            Reason::RejectDelay => "reject_delay",
            Reason::NotWhitelisted => "not_whitelisted",
        }
    }
}

/// Outcome of each enabled gate; `None` means the gate is off or was not
/// applicable to this message type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateReport {
    pub binding: Option<bool>,
    pub window: Option<bool>,
    pub crypto: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeVerdict {
    pub msg_type: Option<MessageType>,
    pub seq_id: Option<u32>,
    pub verdict: Verdict,
    pub reason: Reason,
    pub gates: GateReport,
    pub servo: Option<ServoAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Multicast,
    Unicast(NetworkAddress),
}

#[derive(Debug, Clone)]
pub struct Outgoing {
    pub dst: Destination,
    pub msg: PtpMessage,
    pub mode: WireMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeTimer {
    Sync,
    Announce,
    DelayReq,
}

/// Everything a node wants the simulator to do after one input.
#[derive(Debug, Default)]
pub struct NodeOutput {
    pub sends: Vec<Outgoing>,
    pub timers: Vec<(u64, NodeTimer)>,
    pub verdicts: Vec<NodeVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortState {
    Listening,
    Master,
    Slave,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentDataset {
    pub master_clock_id: ClockIdentity,
    pub master_addr: NetworkAddress,
    pub master_public_key: Option<PublicKeyBytes>,
    /// Fixed by the first message of the session; a master does not
    /// change format mid-session.
    pub extended_seq_capable: Option<bool>,
}

#[derive(Debug, Clone, Copy)]
struct PendingSync {
    t2: i64,
}

#[derive(Debug, Clone, Copy)]
struct SyncPair {
    t1: i64,
    t2: i64,
}

#[derive(Debug, Clone, Copy)]
struct PendingDelayReq {
    seq: u32,
    t3: i64,
}

#[derive(Debug, Clone, Default)]
pub struct NodeStats {
    /// Sequence IDs emitted per message type, in order.
    pub emitted: BTreeMap<MessageType, Vec<u32>>,
    pub steps: u64,
    pub slews: u64,
    pub role_changes: u64,
}

const MAX_PENDING_SYNCS: usize = 16;

#[derive(Debug)]
pub struct PtpNode {
    cfg: NodeConfig,
    clock_id: ClockIdentity,
    space: IdSpace,
    clock: SimClock,
    servo: ServoState,
    state: PortState,
    parent: Option<ParentDataset>,
    foreign: BTreeMap<ClockIdentity, ForeignMasterRecord>,
    verifier: Option<CertificateVerifier>,
    windows: BTreeMap<(ClockIdentity, MessageType), SequenceWindow>,
    sync_seq: u32,
    announce_seq: u32,
    delay_req_seq: u32,
    pending_syncs: BTreeMap<u32, PendingSync>,
    last_pair: Option<SyncPair>,
    path_delay: Option<i64>,
    challenges: ChallengeState,
    pending_delay_req: Option<PendingDelayReq>,
    last_servo_at: Option<u64>,
    rng: SimRng,
    stats: NodeStats,
}

impl PtpNode {
    pub fn new(cfg: NodeConfig) -> Result<Self, NodeError> {
        cfg.validate()?;
        let space = cfg.id_space()?;
        let clock_id = identity::clock_id_from_network(&cfg.address);
        let (sync_seq, announce_seq) = if cfg.security.sessions() {
            (
                session::init_counter(rng::derive_seed(cfg.seed, "counter:sync"), space),
                session::init_counter(rng::derive_seed(cfg.seed, "counter:announce"), space),
            )
        } else {
            (0, 0)
        };
        let verifier = match (cfg.security, cfg.keys.management_public) {
            (SecurityMode::PublicKey, Some(pk)) => Some(CertificateVerifier::new(pk)),
            _ => None,
        };
        Ok(Self {
            clock: SimClock::new(cfg.initial_offset_ns, cfg.drift_ppb),
            servo: cfg.servo,
            rng: rng::stream(cfg.seed, "node"),
            cfg,
            clock_id,
            space,
            state: PortState::Listening,
            parent: None,
            foreign: BTreeMap::new(),
            verifier,
            windows: BTreeMap::new(),
            sync_seq,
            announce_seq,
            delay_req_seq: 0,
            pending_syncs: BTreeMap::new(),
            last_pair: None,
            path_delay: None,
            challenges: ChallengeState::new(),
            pending_delay_req: None,
            last_servo_at: None,
            stats: NodeStats::default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.cfg.name
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn clock_id(&self) -> ClockIdentity {
        self.clock_id
    }

    pub fn address(&self) -> NetworkAddress {
        self.cfg.address
    }

    pub fn state(&self) -> PortState {
        self.state
    }

    pub fn parent(&self) -> Option<&ParentDataset> {
        self.parent.as_ref()
    }

    pub fn servo(&self) -> &ServoState {
        &self.servo
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    pub fn quality(&self) -> &ClockQuality {
        &self.cfg.quality
    }

    pub fn foreign_masters(&self) -> impl Iterator<Item = &ForeignMasterRecord> {
        self.foreign.values()
    }

    pub fn path_delay(&self) -> Option<i64> {
        self.path_delay
    }

    pub fn certificate_verifications(&self) -> u64 {
        self.verifier.as_ref().map_or(0, |v| v.verifications())
    }

    /// Ground-truth clock error at simulation time `now`.
    pub fn true_offset(&self, now: u64) -> i64 {
        self.clock.offset_at(now)
    }

    pub fn local_time(&self, now: u64) -> i64 {
        self.clock.read(now)
    }

    fn wire_mode(&self) -> WireMode {
        self.cfg.security.wire_mode()
    }

    fn sync_interval(&self) -> u64 {
        interval_ns(self.cfg.sync_interval_log)
    }

    fn announce_interval(&self) -> u64 {
        interval_ns(self.cfg.announce_interval_log)
    }

    /// Schedules the periodic timers. Phases are staggered per node so that
    /// runs do not depend on same-instant ordering between nodes.
    pub fn start(&mut self, now: u64, out: &mut NodeOutput) {
        use rand::Rng;
        let sync = self.sync_interval();
        let announce = self.announce_interval();
        let delay = interval_ns(self.cfg.delay_req_interval_log);
        let phase = |rng: &mut SimRng, span: u64| rng.gen_range(span / 4..span / 2 + 1);
        out.timers.push((now + phase(&mut self.rng, sync), NodeTimer::Sync));
        out.timers
            .push((now + phase(&mut self.rng, announce), NodeTimer::Announce));
        out.timers
            .push((now + sync + phase(&mut self.rng, delay), NodeTimer::DelayReq));
    }

    pub fn on_timer(&mut self, now: u64, timer: NodeTimer, out: &mut NodeOutput) {
        match timer {
            NodeTimer::Sync => {
                if self.state == PortState::Master {
                    self.master_tick(now, out);
                }
                out.timers.push((now + self.sync_interval(), NodeTimer::Sync));
            }
            NodeTimer::Announce => {
                self.state_decision(now);
                if self.state == PortState::Master {
                    self.announce_tick(now, out);
                }
                out.timers
                    .push((now + self.announce_interval(), NodeTimer::Announce));
            }
            NodeTimer::DelayReq => {
                self.delay_cycle(now, out);
                out.timers.push((
                    now + interval_ns(self.cfg.delay_req_interval_log),
                    NodeTimer::DelayReq,
                ));
            }
        }
    }

    fn header(&self, seq: u32, log_interval: i8) -> PtpHeader {
        let mut h = PtpHeader::new(self.clock_id, seq);
        h.log_message_interval = log_interval;
        h
    }

    fn record_emit(&mut self, ty: MessageType, seq: u32) {
        self.stats.emitted.entry(ty).or_default().push(seq);
    }

    fn protect(&self, msg: &mut PtpMessage, mode: WireMode) {
        if self.cfg.security == SecurityMode::Symmetric {
            if let Some(key) = &self.cfg.keys.group_key {
                security::apply_hmac(msg, mode, key).expect("node messages encode");
            }
        }
    }

    /// Two-step SYNC followed by FOLLOW_UP carrying the egress timestamp.
    pub fn master_tick(&mut self, now: u64, out: &mut NodeOutput) {
        let mode = self.wire_mode();
        let seq = self.sync_seq;
        let log = self.cfg.sync_interval_log;

        let mut sync = PtpMessage::new(
            self.header(seq, log),
            Body::Sync(SyncBody {
                origin_timestamp: Timestamp::ZERO,
            }),
        );
        self.protect(&mut sync, mode);
        // t1 is the (simulated hardware) egress timestamp of the SYNC.
        let t1 = self.clock.timestamp(now);

        let signature = (mode == WireMode::Extended).then_some(Signature::ZERO);
        let mut follow = PtpMessage::new(
            self.header(seq, log),
            Body::FollowUp(FollowUpBody {
                precise_origin_timestamp: t1,
                signature,
            }),
        );
        if self.cfg.security == SecurityMode::PublicKey {
            if let Some(key) = &self.cfg.keys.signing {
                let sig = security::sign_followup(&follow, key).expect("FOLLOW_UP signs");
                if let Body::FollowUp(ref mut f) = follow.body {
                    f.signature = Some(sig);
                }
            }
        }
        self.protect(&mut follow, mode);

        out.sends.push(Outgoing {
            dst: Destination::Multicast,
            msg: sync,
            mode,
        });
        out.sends.push(Outgoing {
            dst: Destination::Multicast,
            msg: follow,
            mode,
        });
        self.record_emit(MessageType::Sync, seq);
        self.record_emit(MessageType::FollowUp, seq);
        self.sync_seq = self.space.wrap(seq as u64 + 1);
    }

    pub fn own_announce(&self) -> AnnounceBody {
        self.cfg.quality.announce(self.clock_id)
    }

    pub fn announce_tick(&mut self, now: u64, out: &mut NodeOutput) {
        let mode = self.wire_mode();
        let seq = self.announce_seq;
        let mut body = self.own_announce();
        body.origin_timestamp = self.clock.timestamp(now);
        if mode == WireMode::Extended {
            body.extension = Some(match &self.cfg.keys.certificate {
                Some(cert) => cert.extension(),
                None => wire::AnnounceExtension {
                    public_key: [0; 32],
                    management_signature: Signature::ZERO,
                },
            });
        }
        let mut msg = PtpMessage::new(
            self.header(seq, self.cfg.announce_interval_log),
            Body::Announce(body),
        );
        self.protect(&mut msg, mode);
        out.sends.push(Outgoing {
            dst: Destination::Multicast,
            msg,
            mode,
        });
        self.record_emit(MessageType::Announce, seq);
        self.announce_seq = self.space.wrap(seq as u64 + 1);
    }

    /// Sends a DELAY_REQ to the parent. In session modes its sequence ID is
    /// a fresh random challenge.
    pub fn delay_cycle(&mut self, now: u64, out: &mut NodeOutput) {
        if self.state != PortState::Slave || self.last_pair.is_none() {
            return;
        }
        let Some(parent) = &self.parent else {
            return;
        };
        let dst = parent.master_addr;
        let seq = if self.cfg.security.sessions() {
            self.challenges
                .issue(MessageType::DelayReq, &mut self.rng, self.space)
        } else {
            let s = self.delay_req_seq;
            self.delay_req_seq = self.space.wrap(s as u64 + 1);
            self.challenges.issue_fixed(MessageType::DelayReq, s);
            s
        };
        let mode = self.wire_mode();
        let t3 = self.clock.read(now);
        let mut msg = PtpMessage::new(
            self.header(seq, 0x7F),
            Body::DelayReq(DelayReqBody {
                origin_timestamp: Timestamp::ZERO,
            }),
        );
        self.protect(&mut msg, mode);
        out.sends.push(Outgoing {
            dst: Destination::Unicast(dst),
            msg,
            mode,
        });
        self.record_emit(MessageType::DelayReq, seq);
        self.pending_delay_req = Some(PendingDelayReq { seq, t3 });
    }

    /// Prunes stale foreign masters and re-runs the election.
    pub fn state_decision(&mut self, now: u64) {
        let interval = self.announce_interval();
        self.foreign
            .retain(|_, r| bmc::is_fresh(r, now, interval));
        self.elect();
    }

    fn elect(&mut self) {
        let require = self.cfg.security == SecurityMode::PublicKey;
        let own = self.own_announce();
        let Election {
            role,
            chosen_master,
        } = bmc::run_election(self.foreign.values(), &own, require);
        match (role, chosen_master) {
            (Role::Slave, Some(id)) => {
                if self.state != PortState::Slave
                    || self.parent.as_ref().map(|p| p.master_clock_id) != Some(id)
                {
                    self.become_slave(id);
                }
            }
            _ => {
                let next = if self.cfg.master_capable {
                    PortState::Master
                } else {
                    PortState::Listening
                };
                if next != self.state {
                    self.stats.role_changes += 1;
                    self.state = next;
                    self.parent = None;
                    self.reset_sync_state();
                }
            }
        }
    }

    fn become_slave(&mut self, master: ClockIdentity) {
        let record = self.foreign[&master];
        let master_addr = if self.cfg.security.binding() {
            identity::network_from_clock_id(&master, self.cfg.address.kind())
                .unwrap_or(record.source_addr)
        } else {
            record.source_addr
        };
        let master_public_key = record.announce.extension.map(|e| e.public_key);
        self.stats.role_changes += 1;
        self.state = PortState::Slave;
        self.parent = Some(ParentDataset {
            master_clock_id: master,
            master_addr,
            master_public_key,
            extended_seq_capable: None,
        });
        self.reset_sync_state();
        self.windows.retain(|(id, ty), _| !(*id == master && *ty == MessageType::Sync));
    }

    fn reset_sync_state(&mut self) {
        self.pending_syncs.clear();
        self.last_pair = None;
        self.path_delay = None;
        self.pending_delay_req = None;
        self.last_servo_at = None;
        self.challenges = ChallengeState::new();
    }

    fn apply_correction(&mut self, now: u64, correction: i64) {
        if correction == 0 {
            return;
        }
        self.clock.adjust(now, correction);
        for p in self.pending_syncs.values_mut() {
            p.t2 += correction;
        }
        if let Some(pair) = &mut self.last_pair {
            pair.t2 += correction;
        }
        if let Some(req) = &mut self.pending_delay_req {
            req.t3 += correction;
        }
    }

    // ---- receive path ----

    pub fn on_receive(
        &mut self,
        now: u64,
        bytes: &[u8],
        observed: NetworkAddress,
        out: &mut NodeOutput,
    ) {
        let verdict = match wire::decode(bytes) {
            Ok((msg, mode)) => self.handle(now, &msg, mode, observed, out),
            Err(_) => NodeVerdict {
                msg_type: None,
                seq_id: None,
                verdict: Verdict::Dropped,
                reason: Reason::Malformed,
                gates: GateReport::default(),
                servo: None,
            },
        };
        out.verdicts.push(verdict);
    }

    /// Handles one decoded message. Exposed for tests that bypass the codec.
    pub fn handle(
        &mut self,
        now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
        out: &mut NodeOutput,
    ) -> NodeVerdict {
        let mut v = match msg.message_type() {
            MessageType::Announce => self.on_announce(now, msg, mode, observed),
            MessageType::Sync => self.on_sync(now, msg, mode, observed),
            MessageType::FollowUp => self.on_follow_up(now, msg, mode, observed),
            MessageType::DelayResp => self.on_delay_resp(now, msg, mode, observed),
            MessageType::DelayReq => self.on_delay_req(now, msg, mode, observed, out),
            MessageType::MgmtSet => self.handle_mgmt(now, msg, observed),
        };
        v.msg_type = Some(msg.message_type());
        v.seq_id = Some(msg.header.sequence_id);
        v
    }

    fn verdict(verdict: Verdict, reason: Reason, gates: GateReport) -> NodeVerdict {
        NodeVerdict {
            msg_type: None,
            seq_id: None,
            verdict,
            reason,
            gates,
            servo: None,
        }
    }

    fn binding_gate(&self, msg: &PtpMessage, observed: &NetworkAddress) -> Option<bool> {
        self.cfg
            .security
            .binding()
            .then(|| identity::verify_binding(&msg.header.source_clock_identity, observed))
    }

    fn icv_gate(&self, msg: &PtpMessage, mode: WireMode) -> Option<bool> {
        if self.cfg.security != SecurityMode::Symmetric {
            return None;
        }
        Some(
            self.cfg
                .keys
                .group_key
                .as_ref()
                .is_some_and(|k| security::hmac_check(msg, mode, k)),
        )
    }

    fn crypto_failure(&self, msg: &PtpMessage) -> Reason {
        match self.cfg.security {
            SecurityMode::Symmetric if msg.icv.is_none() => Reason::MissingIcv,
            SecurityMode::Symmetric => Reason::BadIcv,
            _ => Reason::BadSignature,
        }
    }

    /// First failing gate in the fixed order, if any.
    fn first_failure(
        &self,
        gates: &GateReport,
        compat_ok: bool,
        window_reason: Reason,
        msg: &PtpMessage,
    ) -> Option<Reason> {
        if gates.binding == Some(false) {
            return Some(Reason::BindingMismatch);
        }
        if !compat_ok {
            return Some(Reason::CompatibilityMismatch);
        }
        if gates.window == Some(false) {
            return Some(window_reason);
        }
        if gates.crypto == Some(false) {
            return Some(self.crypto_failure(msg));
        }
        None
    }

    fn window_admits(&self, source: ClockIdentity, ty: MessageType, seq: u32) -> Option<bool> {
        if !self.cfg.security.sessions() {
            return None;
        }
        Some(
            self.windows
                .get(&(source, ty))
                .is_none_or(|w| w.contains(seq)),
        )
    }

    fn window_commit(&mut self, source: ClockIdentity, ty: MessageType, seq: u32) {
        if !self.cfg.security.sessions() {
            return;
        }
        match self.windows.get_mut(&(source, ty)) {
            Some(w) => {
                w.advance(seq);
            }
            None => {
                if let Ok(w) = SequenceWindow::after(seq, self.cfg.window_size, self.space) {
                    self.windows.insert((source, ty), w);
                }
            }
        }
    }

    /// Session-format consistency for the parent master.
    fn compat_ok(&self, mode: WireMode) -> bool {
        if !self.cfg.security.sessions() {
            return true;
        }
        match self.parent.as_ref().and_then(|p| p.extended_seq_capable) {
            Some(ext) => ext == (mode == WireMode::Extended),
            None => true,
        }
    }

    fn note_compat(&mut self, mode: WireMode) {
        if let Some(p) = &mut self.parent {
            p.extended_seq_capable
                .get_or_insert(mode == WireMode::Extended);
        }
    }

    fn on_announce(
        &mut self,
        now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
    ) -> NodeVerdict {
        let Body::Announce(body) = msg.body else {
            unreachable!()
        };
        let source = msg.header.source_clock_identity;
        if source == self.clock_id {
            return Self::verdict(Verdict::Ignored, Reason::NotForUs, GateReport::default());
        }
        let mut cert_state = CertState::Unverified;
        let crypto = match self.cfg.security {
            SecurityMode::PublicKey => {
                let verdict = self
                    .verifier
                    .as_mut()
                    .map_or(CertVerdict::Rejected, |v| v.check(source, &body));
                let ok = matches!(verdict, CertVerdict::Verified(_));
                cert_state = if ok {
                    CertState::Verified
                } else {
                    CertState::Rejected
                };
                Some(ok)
            }
            _ => self.icv_gate(msg, mode),
        };
        let gates = GateReport {
            binding: self.binding_gate(msg, &observed),
            window: self.window_admits(source, MessageType::Announce, msg.header.sequence_id),
            crypto,
        };
        if let Some(reason) = self.first_failure(&gates, true, Reason::WindowReject, msg) {
            let reason = if reason == Reason::BadSignature {
                Reason::CertificateRejected
            } else {
                reason
            };
            // A failed certificate still registers the candidate as
            // Rejected so it can never win the election.
            if reason == Reason::CertificateRejected && gates.binding != Some(false) {
                self.foreign.insert(
                    source,
                    ForeignMasterRecord {
                        source,
                        announce: body,
                        source_addr: observed,
                        last_seen: now,
                        cert_state,
                    },
                );
            }
            return Self::verdict(Verdict::Dropped, reason, gates);
        }
        self.window_commit(source, MessageType::Announce, msg.header.sequence_id);
        self.foreign.insert(
            source,
            ForeignMasterRecord {
                source,
                announce: body,
                source_addr: observed,
                last_seen: now,
                cert_state,
            },
        );
        // Without binding the master's address is learned from whoever last
        // announced under its clock ID.
        if let Some(p) = &mut self.parent {
            if p.master_clock_id == source && !self.cfg.security.binding() {
                p.master_addr = observed;
            }
        }
        self.elect();
        Self::verdict(Verdict::Accepted, Reason::Ok, gates)
    }

    fn parent_gate(&self, msg: &PtpMessage) -> Result<(), NodeVerdict> {
        if self.state != PortState::Slave {
            return Err(Self::verdict(
                Verdict::Ignored,
                Reason::RoleMismatch,
                GateReport::default(),
            ));
        }
        match &self.parent {
            Some(p) if p.master_clock_id == msg.header.source_clock_identity => Ok(()),
            _ => Err(Self::verdict(
                Verdict::Dropped,
                Reason::NotFromParent,
                GateReport::default(),
            )),
        }
    }

    fn on_sync(
        &mut self,
        now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
    ) -> NodeVerdict {
        if let Err(v) = self.parent_gate(msg) {
            return v;
        }
        let source = msg.header.source_clock_identity;
        let seq = msg.header.sequence_id;
        let gates = GateReport {
            binding: self.binding_gate(msg, &observed),
            window: self.window_admits(source, MessageType::Sync, seq),
            crypto: self.icv_gate(msg, mode),
        };
        if let Some(reason) =
            self.first_failure(&gates, self.compat_ok(mode), Reason::WindowReject, msg)
        {
            return Self::verdict(Verdict::Dropped, reason, gates);
        }
        self.note_compat(mode);
        // An unsigned SYNC only bookmarks t2; in public-key mode the window
        // advances once the matching signed FOLLOW_UP verifies.
        if self.cfg.security != SecurityMode::PublicKey {
            self.window_commit(source, MessageType::Sync, seq);
        }
        let t2 = self.clock.read(now);
        self.pending_syncs.insert(seq, PendingSync { t2 });
        while self.pending_syncs.len() > MAX_PENDING_SYNCS {
            let oldest = *self.pending_syncs.keys().next().unwrap();
            self.pending_syncs.remove(&oldest);
        }
        Self::verdict(Verdict::Accepted, Reason::Ok, gates)
    }

    fn on_follow_up(
        &mut self,
        now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
    ) -> NodeVerdict {
        if let Err(v) = self.parent_gate(msg) {
            return v;
        }
        let Body::FollowUp(fu) = msg.body else {
            unreachable!()
        };
        let source = msg.header.source_clock_identity;
        let seq = msg.header.sequence_id;
        let window = if self.cfg.security == SecurityMode::PublicKey {
            self.window_admits(source, MessageType::Sync, seq)
        } else if self.cfg.security.sessions() {
            // the paired SYNC already advanced the window
            Some(
                self.windows
                    .get(&(source, MessageType::Sync))
                    .is_some_and(|w| self.space.wrap(w.expected() as u64 + self.space.size() - 1) == seq),
            )
        } else {
            None
        };
        let crypto = match self.cfg.security {
            SecurityMode::PublicKey => Some(
                self.parent
                    .as_ref()
                    .and_then(|p| p.master_public_key)
                    .is_some_and(|pk| security::verify_followup(msg, &pk)),
            ),
            _ => self.icv_gate(msg, mode),
        };
        let gates = GateReport {
            binding: self.binding_gate(msg, &observed),
            window,
            crypto,
        };
        if let Some(reason) =
            self.first_failure(&gates, self.compat_ok(mode), Reason::WindowReject, msg)
        {
            return Self::verdict(Verdict::Dropped, reason, gates);
        }
        let Some(pending) = self.pending_syncs.remove(&seq) else {
            return Self::verdict(Verdict::Dropped, Reason::NoMatchingSync, gates);
        };
        self.note_compat(mode);
        if self.cfg.security == SecurityMode::PublicKey {
            self.window_commit(source, MessageType::Sync, seq);
        }
        let Some(t1) = fu.precise_origin_timestamp.to_nanos() else {
            return Self::verdict(Verdict::Dropped, Reason::Malformed, gates);
        };
        self.last_pair = Some(SyncPair { t1, t2: pending.t2 });

        let Some(delay) = self.path_delay else {
            return Self::verdict(Verdict::Accepted, Reason::Ok, gates);
        };
        let offset = timemath::offset_from_path_delay(t1, pending.t2, delay);
        let elapsed = self
            .last_servo_at
            .map_or(self.sync_interval(), |t| now.saturating_sub(t).max(1));
        let (next, action) = self.servo.update(offset, delay, elapsed);
        self.servo = next;
        self.last_servo_at = Some(now);
        let reason = match action {
            ServoAction::Step { .. } => {
                self.stats.steps += 1;
                Reason::Step
            }
            ServoAction::Slew { .. } => {
                self.stats.slews += 1;
                Reason::Slew
            }
            ServoAction::RejectDelay => Reason::RejectDelay,
        };
        self.apply_correction(now, action.correction());
        let mut v = Self::verdict(Verdict::Accepted, reason, gates);
        v.servo = Some(action);
        v
    }

    fn on_delay_resp(
        &mut self,
        _now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
    ) -> NodeVerdict {
        if let Err(v) = self.parent_gate(msg) {
            return v;
        }
        let Body::DelayResp(resp) = msg.body else {
            unreachable!()
        };
        if resp.requesting_clock_identity != self.clock_id {
            return Self::verdict(Verdict::Ignored, Reason::WrongRequester, GateReport::default());
        }
        let seq = msg.header.sequence_id;
        let gates = GateReport {
            binding: self.binding_gate(msg, &observed),
            window: Some(self.challenges.outstanding(MessageType::DelayReq) == Some(seq)),
            crypto: self.icv_gate(msg, mode),
        };
        if let Some(reason) =
            self.first_failure(&gates, self.compat_ok(mode), Reason::ChallengeMismatch, msg)
        {
            return Self::verdict(Verdict::Dropped, reason, gates);
        }
        self.challenges.check(MessageType::DelayReq, seq);
        let (Some(req), Some(pair)) = (self.pending_delay_req.take(), self.last_pair) else {
            return Self::verdict(Verdict::Dropped, Reason::ChallengeMismatch, gates);
        };
        debug_assert_eq!(req.seq, seq);
        let Some(t4) = resp.receive_timestamp.to_nanos() else {
            return Self::verdict(Verdict::Dropped, Reason::Malformed, gates);
        };
        let sample = ExchangeSample {
            t1: Timestamp::from_nanos(pair.t1).unwrap_or_default(),
            t2: Timestamp::from_nanos(pair.t2).unwrap_or_default(),
            t3: Timestamp::from_nanos(req.t3).unwrap_or_default(),
            t4: resp.receive_timestamp,
        };
        let _ = t4;
        let delay = match timemath::compute_delay(&sample) {
            Ok(d) => d,
            Err(_) => return Self::verdict(Verdict::Dropped, Reason::Malformed, gates),
        };
        if delay < 0 {
            return Self::verdict(Verdict::Dropped, Reason::NegativeDelay, gates);
        }
        if !self.servo.delay_acceptable(delay) {
            return Self::verdict(Verdict::Dropped, Reason::RejectDelay, gates);
        }
        self.path_delay = Some(delay);
        Self::verdict(Verdict::Accepted, Reason::Ok, gates)
    }

    fn on_delay_req(
        &mut self,
        now: u64,
        msg: &PtpMessage,
        mode: WireMode,
        observed: NetworkAddress,
        out: &mut NodeOutput,
    ) -> NodeVerdict {
        if self.state != PortState::Master {
            return Self::verdict(Verdict::Ignored, Reason::RoleMismatch, GateReport::default());
        }
        let gates = GateReport {
            binding: self.binding_gate(msg, &observed),
            window: None,
            crypto: self.icv_gate(msg, mode),
        };
        if let Some(reason) = self.first_failure(&gates, true, Reason::WindowReject, msg) {
            return Self::verdict(Verdict::Dropped, reason, gates);
        }
        let t4 = self.clock.timestamp(now);
        let mut resp = PtpMessage::new(
            self.header(msg.header.sequence_id, 0x7F),
            Body::DelayResp(DelayRespBody {
                receive_timestamp: t4,
                requesting_clock_identity: msg.header.source_clock_identity,
                requesting_port_number: msg.header.source_port_number,
            }),
        );
        let out_mode = self.wire_mode();
        if out_mode == WireMode::Baseline && resp.header.sequence_id > u16::MAX as u32 {
            return Self::verdict(Verdict::Dropped, Reason::Malformed, gates);
        }
        self.protect(&mut resp, out_mode);
        out.sends.push(Outgoing {
            dst: Destination::Unicast(observed),
            msg: resp,
            mode: out_mode,
        });
        self.record_emit(MessageType::DelayResp, msg.header.sequence_id);
        Self::verdict(Verdict::Accepted, Reason::Ok, gates)
    }

    /// Applies a SET management action if the sender passes the whitelist.
    pub fn handle_mgmt(&mut self, now: u64, msg: &PtpMessage, observed: NetworkAddress) -> NodeVerdict {
        let Body::MgmtSet(set) = msg.body else {
            unreachable!()
        };
        if set.target_clock_identity != self.clock_id {
            return Self::verdict(Verdict::Ignored, Reason::NotForUs, GateReport::default());
        }
        if let Some(list) = &self.cfg.mgmt_whitelist {
            if !list.contains(&observed) {
                return Self::verdict(
                    Verdict::Dropped,
                    Reason::NotWhitelisted,
                    GateReport::default(),
                );
            }
        }
        match set.action {
            MgmtAction::SetClockAccuracy => self.cfg.quality.clock_accuracy = set.value as u8,
            MgmtAction::SetPriority1 => self.cfg.quality.priority1 = set.value as u8,
            MgmtAction::SetPriority2 => self.cfg.quality.priority2 = set.value as u8,
            MgmtAction::SetTime => {
                let before = self.clock.read(now);
                let correction = (set.value as i64).saturating_sub(before);
                self.apply_correction(now, correction);
                self.stats.steps += 1;
            }
        }
        if set.action != MgmtAction::SetTime {
            self.elect();
        }
        Self::verdict(Verdict::Accepted, Reason::Ok, GateReport::default())
    }
}
