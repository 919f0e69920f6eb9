//! Attack generators. Each one only emits actions through [`AttackCtx`];
//! whether the adversary may perform them is decided by the simulator.

use serde::Deserialize;
use thiserror::Error;

use crate::identity::NetworkAddress;
use crate::node::Destination;
use crate::security::{self, make_certificate, GroupKey, KeyPair};
use crate::session::IdSpace;
use crate::simnet::{Attack, AttackCtx, AttackReport, Observed, Peer, TapAction};
use crate::wire::{
    self, AnnounceBody, Body, ClockIdentity, DelayRespBody, FollowUpBody, MessageType, MgmtAction,
    MgmtSetBody, PtpHeader, PtpMessage, Signature, SyncBody, Timestamp, WireMode,
};

/// What an attacker knows about the network it targets.
#[derive(Debug, Clone, Copy)]
pub struct NetProfile {
    pub mode: WireMode,
    pub space: IdSpace,
    pub window: u32,
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("unknown attack `{0}`")]
    UnknownKind(String),
    #[error("bad parameters for {kind}: {source}")]
    Params {
        kind: String,
        source: toml::de::Error,
    },
    #[error("attack refers to unknown node `{0}`")]
    UnknownPeer(String),
    #[error("{0}")]
    Invalid(String),
}

pub const KINDS: &[&str] = &[
    "delay_spoof",
    "sync_spoof",
    "blind_window_snatch",
    "naive_window_sweep",
    "rogue_master",
    "proxy_grandmaster",
    "insider_sync_masquerade",
    "replay",
    "mitm",
];

fn parse<T: for<'de> Deserialize<'de>>(kind: &str, params: toml::Table) -> Result<T, AttackError> {
    toml::Value::Table(params)
        .try_into()
        .map_err(|source| AttackError::Params {
            kind: kind.to_string(),
            source,
        })
}

fn peer(peers: &[Peer], name: &str) -> Result<Peer, AttackError> {
    peers
        .iter()
        .find(|p| p.name == name)
        .cloned()
        .ok_or_else(|| AttackError::UnknownPeer(name.to_string()))
}

fn period_ns(rate_pps: f64) -> Result<u64, AttackError> {
    if !(rate_pps.is_finite() && rate_pps > 0.0 && rate_pps <= 1e6) {
        return Err(AttackError::Invalid(format!("rate {rate_pps} pps out of range")));
    }
    Ok((1e9 / rate_pps).round() as u64)
}

pub fn build(
    kind: &str,
    params: toml::Table,
    peers: &[Peer],
    net: NetProfile,
) -> Result<Box<dyn Attack>, AttackError> {
    Ok(match kind {
        "delay_spoof" => Box::new(DelaySpoof::new(parse(kind, params)?, peers, net)?),
        "sync_spoof" => Box::new(SyncSpoof::new(parse(kind, params)?, peers, net)?),
        "blind_window_snatch" => Box::new(BlindWindowSnatch::new(parse(kind, params)?, peers, net)?),
        "naive_window_sweep" => Box::new(NaiveWindowSweep::new(parse(kind, params)?, peers, net)?),
        "rogue_master" => Box::new(RogueMaster::new(parse(kind, params)?, net)?),
        "proxy_grandmaster" => Box::new(ProxyGrandmaster::new(parse(kind, params)?, peers)?),
        "insider_sync_masquerade" => {
            Box::new(InsiderSyncMasquerade::new(parse(kind, params)?, peers, net)?)
        }
        "replay" => Box::new(Replay::new(parse(kind, params)?, peers)?),
        "mitm" => Box::new(Mitm::new(parse(kind, params)?)),
        other => return Err(AttackError::UnknownKind(other.to_string())),
    })
}

fn report(pairs: &[(&str, u64)]) -> AttackReport {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Builds a SYNC/FOLLOW_UP pair claiming `source`, optionally signed with an
/// arbitrary key and tagged with a group key.
fn forged_pair(
    source: ClockIdentity,
    seq: u32,
    t1_ns: i64,
    mode: WireMode,
    signer: Option<&KeyPair>,
    group_key: Option<&GroupKey>,
) -> (PtpMessage, PtpMessage) {
    let mut sync = PtpMessage::new(
        PtpHeader::new(source, seq),
        Body::Sync(SyncBody {
            origin_timestamp: Timestamp::ZERO,
        }),
    );
    let mut fu = PtpMessage::new(
        PtpHeader::new(source, seq),
        Body::FollowUp(FollowUpBody {
            precise_origin_timestamp: Timestamp::from_nanos(t1_ns).unwrap_or_default(),
            signature: (mode == WireMode::Extended).then_some(Signature::ZERO),
        }),
    );
    if let (WireMode::Extended, Some(key)) = (mode, signer) {
        let sig = security::sign_followup(&fu, key).expect("FOLLOW_UP signs");
        if let Body::FollowUp(ref mut f) = fu.body {
            f.signature = Some(sig);
        }
    }
    if let Some(k) = group_key {
        security::apply_hmac(&mut sync, mode, k).expect("encodes");
        security::apply_hmac(&mut fu, mode, k).expect("encodes");
    }
    (sync, fu)
}

fn fits(mode: WireMode, seq: u32) -> u32 {
    match mode {
        WireMode::Baseline => seq & 0xFFFF,
        WireMode::Extended => seq,
    }
}

// ---- delay_spoof ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpoofParams {
    pub master: String,
    pub target: String,
    pub shift_ns: i64,
    /// Guess challenge IDs at `rate_pps` instead of answering observed
    /// requests.
    #[serde(default)]
    pub blind: bool,
    #[serde(default = "one")]
    pub rate_pps: f64,
}

fn one() -> f64 {
    1.0
}

/// Bends the target's DELAY_REQs to the attacker by replaying the master's
/// ANNOUNCE from the attacker's address, then answers them with a shifted
/// receive timestamp.
pub struct DelaySpoof {
    p: DelaySpoofParams,
    master: Peer,
    target: Peer,
    net: NetProfile,
    period: u64,
    replays: u64,
    responses: u64,
    guesses: u64,
}

impl DelaySpoof {
    pub fn new(p: DelaySpoofParams, peers: &[Peer], net: NetProfile) -> Result<Self, AttackError> {
        Ok(Self {
            master: peer(peers, &p.master)?,
            target: peer(peers, &p.target)?,
            period: period_ns(p.rate_pps)?,
            p,
            net,
            replays: 0,
            responses: 0,
            guesses: 0,
        })
    }

    fn response(&self, seq: u32, t4: i64, requester: ClockIdentity, port: u16) -> PtpMessage {
        PtpMessage::new(
            PtpHeader::new(self.master.clock_id, seq),
            Body::DelayResp(DelayRespBody {
                receive_timestamp: Timestamp::from_nanos(t4).unwrap_or_default(),
                requesting_clock_identity: requester,
                requesting_port_number: port,
            }),
        )
    }
}

impl Attack for DelaySpoof {
    fn name(&self) -> &'static str {
        "delay_spoof"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        if self.p.blind {
            ctx.timer(ctx.now, 0);
        }
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        let seq = fits(self.net.mode, self.net.space.random(ctx.rng));
        let t4 = ctx.true_time_ns() + self.p.shift_ns;
        let msg = self.response(seq, t4, self.target.clock_id, 1);
        ctx.send(
            Destination::Unicast(self.target.address),
            self.master.address,
            &msg,
            self.net.mode,
        );
        self.guesses += 1;
        ctx.timer(ctx.now + self.period, 0);
    }

    fn on_observe(&mut self, frame: &Observed, ctx: &mut AttackCtx) {
        if self.p.blind {
            return;
        }
        let Some(msg) = frame.msg() else { return };
        let src = msg.header.source_clock_identity;
        match msg.message_type() {
            MessageType::Announce if src == self.master.clock_id && frame.claimed_src == self.master.address => {
                ctx.send_raw(Destination::Multicast, ctx.own_addr, frame.bytes.to_vec());
                self.replays += 1;
            }
            MessageType::DelayReq
                if src == self.target.clock_id && frame.dst == Destination::Unicast(ctx.own_addr) =>
            {
                let t4 = ctx.true_time_ns() + self.p.shift_ns;
                let resp = self.response(
                    msg.header.sequence_id,
                    t4,
                    src,
                    msg.header.source_port_number,
                );
                ctx.send(
                    Destination::Unicast(frame.claimed_src),
                    ctx.own_addr,
                    &resp,
                    frame.mode().unwrap_or(self.net.mode),
                );
                self.responses += 1;
            }
            _ => {}
        }
    }

    fn report(&self) -> AttackReport {
        report(&[
            ("announce_replays", self.replays),
            ("delay_responses", self.responses),
            ("blind_guesses", self.guesses),
        ])
    }
}

// ---- sync_spoof ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdStrategy {
    Sequential,
    Random,
    /// Master's last observed SYNC ID plus one.
    Sniff,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSpoofParams {
    pub master: String,
    /// Unicast target; multicast when absent.
    #[serde(default)]
    pub target: Option<String>,
    pub shift_ns: i64,
    #[serde(default = "one")]
    pub rate_pps: f64,
    #[serde(default)]
    pub spoof_addr: bool,
    #[serde(default = "sequential")]
    pub ids: IdStrategy,
    /// Delay of the first pair after the attack starts.
    #[serde(default)]
    pub phase_ns: u64,
}

fn sequential() -> IdStrategy {
    IdStrategy::Sequential
}

/// Emits SYNC/FOLLOW_UP pairs impersonating the master with a shifted
/// origin timestamp.
pub struct SyncSpoof {
    p: SyncSpoofParams,
    master: Peer,
    dst: Destination,
    net: NetProfile,
    period: u64,
    next_seq: u32,
    sniffed: Option<u32>,
    pairs: u64,
}

impl SyncSpoof {
    pub fn new(p: SyncSpoofParams, peers: &[Peer], net: NetProfile) -> Result<Self, AttackError> {
        let dst = match &p.target {
            Some(t) => Destination::Unicast(peer(peers, t)?.address),
            None => Destination::Multicast,
        };
        Ok(Self {
            master: peer(peers, &p.master)?,
            period: period_ns(p.rate_pps)?,
            dst,
            p,
            net,
            next_seq: 0,
            sniffed: None,
            pairs: 0,
        })
    }
}

impl Attack for SyncSpoof {
    fn name(&self) -> &'static str {
        "sync_spoof"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        ctx.timer(ctx.now + self.p.phase_ns, 0);
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        ctx.timer(ctx.now + self.period, 0);
        let seq = match self.p.ids {
            IdStrategy::Sequential => {
                let s = self.next_seq;
                self.next_seq = self.net.space.wrap(s as u64 + 1);
                s
            }
            IdStrategy::Random => self.net.space.random(ctx.rng),
            IdStrategy::Sniff => match self.sniffed {
                Some(s) => self.net.space.wrap(s as u64 + 1),
                None => return,
            },
        };
        let claimed = if self.p.spoof_addr {
            self.master.address
        } else {
            ctx.own_addr
        };
        let t1 = ctx.true_time_ns() + self.p.shift_ns;
        let (sync, fu) = forged_pair(
            self.master.clock_id,
            fits(self.net.mode, seq),
            t1,
            self.net.mode,
            Some(ctx.own_key),
            ctx.group_key,
        );
        ctx.send(self.dst, claimed, &sync, self.net.mode);
        ctx.send(self.dst, claimed, &fu, self.net.mode);
        self.pairs += 1;
    }

    fn on_observe(&mut self, frame: &Observed, _ctx: &mut AttackCtx) {
        if let Some(msg) = frame.msg() {
            if msg.message_type() == MessageType::Sync
                && msg.header.source_clock_identity == self.master.clock_id
                && frame.claimed_src == self.master.address
            {
                self.sniffed = Some(msg.header.sequence_id);
            }
        }
    }

    fn report(&self) -> AttackReport {
        report(&[("sync_sent", self.pairs), ("follow_up_sent", self.pairs)])
    }
}

// ---- blind window snatching ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnatchParams {
    pub master: String,
    pub target: String,
    #[serde(default = "ten")]
    pub rate_pps: f64,
    /// Probe passes over the ID space; a second pass catches a window that
    /// moved during the first.
    #[serde(default = "one_pass")]
    pub passes: u32,
    /// Hostile shift applied after the snatch.
    #[serde(default)]
    pub shift_ns: i64,
    /// Hostile SYNC/FOLLOW_UP pairs sent after the snatch (0 = none).
    #[serde(default)]
    pub follow_on: u64,
}

fn ten() -> f64 {
    10.0
}

fn one_pass() -> u32 {
    1
}

/// Walks the ID space with SYNC probes `i * w + (w - 1)` so that some probe
/// lands in the target's window and then drags the window ahead of the
/// master, after which forged pairs continue from the last probe.
pub struct BlindWindowSnatch {
    p: SnatchParams,
    master: Peer,
    target: Peer,
    net: NetProfile,
    period: u64,
    per_pass: u64,
    cursor: u64,
    next_id: u32,
    probes_sent: u64,
    follow_on_sent: u64,
}

impl BlindWindowSnatch {
    pub fn new(p: SnatchParams, peers: &[Peer], net: NetProfile) -> Result<Self, AttackError> {
        if p.passes == 0 {
            return Err(AttackError::Invalid("snatch needs at least one pass".into()));
        }
        let per_pass = net.space.size() / net.window as u64 - 1;
        Ok(Self {
            master: peer(peers, &p.master)?,
            target: peer(peers, &p.target)?,
            period: period_ns(p.rate_pps)?,
            p,
            net,
            per_pass,
            cursor: 0,
            next_id: 0,
            probes_sent: 0,
            follow_on_sent: 0,
        })
    }
}

impl Attack for BlindWindowSnatch {
    fn name(&self) -> &'static str {
        "blind_window_snatch"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        ctx.timer(ctx.now, 0);
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        let dst = Destination::Unicast(self.target.address);
        if self.cursor < self.per_pass * self.p.passes as u64 {
            let w = self.net.window as u64;
            // same sequence as session::snatch_ids, repeated per pass
            let id = ((self.cursor % self.per_pass) * w + w - 1) as u32;
            self.cursor += 1;
            let sync = PtpMessage::new(
                PtpHeader::new(self.master.clock_id, id),
                Body::Sync(SyncBody {
                    origin_timestamp: Timestamp::ZERO,
                }),
            );
            ctx.send(dst, self.master.address, &sync, self.net.mode);
            self.probes_sent += 1;
            self.next_id = self.net.space.wrap(id as u64 + 1);
            ctx.timer(ctx.now + self.period, 0);
            return;
        }
        if self.follow_on_sent >= self.p.follow_on {
            return;
        }
        let t1 = ctx.true_time_ns() + self.p.shift_ns;
        let (sync, fu) = forged_pair(
            self.master.clock_id,
            self.next_id,
            t1,
            self.net.mode,
            None,
            None,
        );
        ctx.send(dst, self.master.address, &sync, self.net.mode);
        ctx.send(dst, self.master.address, &fu, self.net.mode);
        self.next_id = self.net.space.wrap(self.next_id as u64 + 1);
        self.follow_on_sent += 1;
        ctx.timer(ctx.now + self.period, 0);
    }

    fn report(&self) -> AttackReport {
        report(&[
            ("probes_sent", self.probes_sent),
            ("follow_on_sent", self.follow_on_sent),
            ("total_sent", self.probes_sent + self.follow_on_sent),
        ])
    }
}

// ---- naive sweep ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub master: String,
    pub target: String,
    /// Messages sent into each window-sized block.
    pub k: u32,
    #[serde(default = "ten")]
    pub rate_pps: f64,
    #[serde(default)]
    pub shift_ns: i64,
}

/// Baseline without the snatch trick: K forged pairs per block of `w` IDs,
/// covering the whole space.
pub struct NaiveWindowSweep {
    p: SweepParams,
    master: Peer,
    target: Peer,
    net: NetProfile,
    period: u64,
    block: u64,
    within: u32,
    attempts: u64,
}

impl NaiveWindowSweep {
    pub fn new(p: SweepParams, peers: &[Peer], net: NetProfile) -> Result<Self, AttackError> {
        if p.k == 0 || p.k > net.window {
            return Err(AttackError::Invalid(format!("k must be in 1..={}", net.window)));
        }
        Ok(Self {
            master: peer(peers, &p.master)?,
            target: peer(peers, &p.target)?,
            period: period_ns(p.rate_pps)?,
            p,
            net,
            block: 0,
            within: 0,
            attempts: 0,
        })
    }
}

impl Attack for NaiveWindowSweep {
    fn name(&self) -> &'static str {
        "naive_window_sweep"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        ctx.timer(ctx.now, 0);
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        let blocks = self.net.space.size() / self.net.window as u64;
        if self.block >= blocks {
            return;
        }
        let id = (self.block * self.net.window as u64 + self.within as u64) as u32;
        let t1 = ctx.true_time_ns() + self.p.shift_ns;
        let (sync, fu) = forged_pair(self.master.clock_id, id, t1, self.net.mode, None, None);
        let dst = Destination::Unicast(self.target.address);
        ctx.send(dst, self.master.address, &sync, self.net.mode);
        ctx.send(dst, self.master.address, &fu, self.net.mode);
        self.attempts += 1;
        self.within += 1;
        if self.within == self.p.k {
            self.within = 0;
            self.block += 1;
        }
        ctx.timer(ctx.now + self.period, 0);
    }

    fn report(&self) -> AttackReport {
        report(&[("attempts", self.attempts)])
    }
}

// ---- rogue master ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RogueParams {
    #[serde(default)]
    pub shift_ns: i64,
    #[serde(default = "announce_log")]
    pub announce_interval_log: i8,
    #[serde(default)]
    pub sync_interval_log: i8,
}

fn announce_log() -> i8 {
    1
}

const ROGUE_ANNOUNCE: u64 = 0;
const ROGUE_SYNC: u64 = 1;

/// Announces the best possible dataset under the attacker's own identity and
/// serves shifted time to whoever follows it. Tags with the group key when
/// the adversary holds it; in extended mode carries a self-signed
/// certificate.
pub struct RogueMaster {
    p: RogueParams,
    net: NetProfile,
    announce_seq: u32,
    sync_seq: u32,
    announces: u64,
    syncs: u64,
    responses: u64,
}

impl RogueMaster {
    pub fn new(p: RogueParams, net: NetProfile) -> Result<Self, AttackError> {
        Ok(Self {
            p,
            net,
            announce_seq: 0,
            sync_seq: 0,
            announces: 0,
            syncs: 0,
            responses: 0,
        })
    }

    /// priority1 0, class 6, accuracy 25 ns, ATOMIC_CLOCK time source.
    pub fn best_dataset(gm: ClockIdentity) -> AnnounceBody {
        AnnounceBody {
            origin_timestamp: Timestamp::ZERO,
            current_utc_offset: 37,
            priority1: 0,
            clock_class: 6,
            clock_accuracy: 0x20,
            offset_scaled_log_variance: 0,
            priority2: 0,
            grandmaster_identity: gm,
            steps_removed: 0,
            time_source: 0x10,
            extension: None,
        }
    }

    fn interval(log: i8) -> u64 {
        crate::node::interval_ns(log)
    }
}

impl Attack for RogueMaster {
    fn name(&self) -> &'static str {
        "rogue_master"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        self.announce_seq = self.net.space.random(ctx.rng);
        self.sync_seq = self.net.space.random(ctx.rng);
        if self.net.mode == WireMode::Baseline {
            self.announce_seq &= 0xFFFF;
            self.sync_seq &= 0xFFFF;
        }
        ctx.timer(ctx.now, ROGUE_ANNOUNCE);
        ctx.timer(ctx.now + Self::interval(self.p.sync_interval_log) / 2, ROGUE_SYNC);
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AttackCtx) {
        let me = ctx.own_clock_id();
        let mode = self.net.mode;
        match token {
            ROGUE_ANNOUNCE => {
                let mut body = Self::best_dataset(me);
                body.origin_timestamp =
                    Timestamp::from_nanos(ctx.true_time_ns() + self.p.shift_ns).unwrap_or_default();
                if mode == WireMode::Extended {
                    // no management key: the best it can do is sign itself
                    let cert = make_certificate(&body, &ctx.own_key.public_key(), ctx.own_key);
                    body.extension = Some(cert.extension());
                }
                let mut msg = PtpMessage::new(PtpHeader::new(me, self.announce_seq), Body::Announce(body));
                if let Some(k) = ctx.group_key {
                    security::apply_hmac(&mut msg, mode, k).expect("encodes");
                }
                ctx.send(Destination::Multicast, ctx.own_addr, &msg, mode);
                self.announce_seq = self.net.space.wrap(self.announce_seq as u64 + 1);
                self.announces += 1;
                ctx.timer(ctx.now + Self::interval(self.p.announce_interval_log), ROGUE_ANNOUNCE);
            }
            _ => {
                let t1 = ctx.true_time_ns() + self.p.shift_ns;
                let (sync, fu) = forged_pair(me, self.sync_seq, t1, mode, Some(ctx.own_key), ctx.group_key);
                ctx.send(Destination::Multicast, ctx.own_addr, &sync, mode);
                ctx.send(Destination::Multicast, ctx.own_addr, &fu, mode);
                self.sync_seq = self.net.space.wrap(self.sync_seq as u64 + 1);
                self.syncs += 1;
                ctx.timer(ctx.now + Self::interval(self.p.sync_interval_log), ROGUE_SYNC);
            }
        }
    }

    fn on_observe(&mut self, frame: &Observed, ctx: &mut AttackCtx) {
        let Some(msg) = frame.msg() else { return };
        if msg.message_type() != MessageType::DelayReq || frame.dst != Destination::Unicast(ctx.own_addr) {
            return;
        }
        let mode = frame.mode().unwrap_or(self.net.mode);
        let mut resp = PtpMessage::new(
            PtpHeader::new(ctx.own_clock_id(), msg.header.sequence_id),
            Body::DelayResp(DelayRespBody {
                receive_timestamp: Timestamp::from_nanos(ctx.true_time_ns() + self.p.shift_ns)
                    .unwrap_or_default(),
                requesting_clock_identity: msg.header.source_clock_identity,
                requesting_port_number: msg.header.source_port_number,
            }),
        );
        if let Some(k) = ctx.group_key {
            security::apply_hmac(&mut resp, mode, k).expect("encodes");
        }
        ctx.send(Destination::Unicast(frame.claimed_src), ctx.own_addr, &resp, mode);
        self.responses += 1;
    }

    fn report(&self) -> AttackReport {
        report(&[
            ("announces", self.announces),
            ("syncs", self.syncs),
            ("delay_responses", self.responses),
        ])
    }
}

// ---- proxy grandmaster ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyParams {
    pub target: String,
    /// Address to claim, e.g. a whitelisted management station.
    #[serde(default)]
    pub spoof_addr: Option<String>,
    pub shift_ns: i64,
    #[serde(default = "retry")]
    pub retry_ns: u64,
}

fn retry() -> u64 {
    5_000_000_000
}

/// Upgrades a chosen node's dataset over management until it wins the
/// election, then sets its time.
pub struct ProxyGrandmaster {
    p: ProxyParams,
    target: Peer,
    claimed: Option<NetworkAddress>,
    boosts: u64,
    set_times: u64,
}

impl ProxyGrandmaster {
    pub fn new(p: ProxyParams, peers: &[Peer]) -> Result<Self, AttackError> {
        let claimed = match &p.spoof_addr {
            Some(a) => Some(
                a.parse()
                    .map_err(|e| AttackError::Invalid(format!("spoof_addr: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            target: peer(peers, &p.target)?,
            claimed,
            p,
            boosts: 0,
            set_times: 0,
        })
    }

    fn set(&self, ctx: &mut AttackCtx, action: MgmtAction, value: u64) {
        let msg = PtpMessage::new(
            PtpHeader::new(ctx.own_clock_id(), 0),
            Body::MgmtSet(MgmtSetBody {
                target_clock_identity: self.target.clock_id,
                target_port_number: 1,
                action,
                value,
            }),
        );
        let claimed = self.claimed.unwrap_or(ctx.own_addr);
        ctx.send(
            Destination::Unicast(self.target.address),
            claimed,
            &msg,
            WireMode::Baseline,
        );
    }
}

impl Attack for ProxyGrandmaster {
    fn name(&self) -> &'static str {
        "proxy_grandmaster"
    }

    fn start(&mut self, ctx: &mut AttackCtx) {
        ctx.timer(ctx.now, 0);
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        if self.set_times > 0 {
            return;
        }
        self.set(ctx, MgmtAction::SetPriority1, 0);
        self.set(ctx, MgmtAction::SetPriority2, 0);
        self.set(ctx, MgmtAction::SetClockAccuracy, 0x20);
        self.boosts += 3;
        ctx.timer(ctx.now + self.p.retry_ns, 0);
    }

    fn on_observe(&mut self, frame: &Observed, ctx: &mut AttackCtx) {
        if self.set_times > 0 {
            return;
        }
        let Some(msg) = frame.msg() else { return };
        if let Body::Announce(a) = &msg.body {
            // the target announcing our dataset means it won the election
            if msg.header.source_clock_identity == self.target.clock_id && a.priority1 == 0 {
                let when = ctx.true_time_ns() + self.p.shift_ns;
                self.set(ctx, MgmtAction::SetTime, when as u64);
                self.set_times += 1;
            }
        }
    }

    fn report(&self) -> AttackReport {
        report(&[("boost_sets", self.boosts), ("set_time", self.set_times)])
    }
}

// ---- insider masquerade ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasqueradeParams {
    pub master: String,
    #[serde(default)]
    pub target: Option<String>,
    pub shift_ns: i64,
    /// How long after each sniffed master SYNC the forged pair follows.
    #[serde(default = "lead")]
    pub lead_ns: u64,
}

fn lead() -> u64 {
    100_000_000
}

/// Sniffs the master's SYNC IDs and sends group-key-tagged pairs as the
/// master using the next ID, so the forged pair always wins the window.
pub struct InsiderSyncMasquerade {
    p: MasqueradeParams,
    master: Peer,
    dst: Destination,
    net: NetProfile,
    pending: Option<u32>,
    pairs: u64,
}

impl InsiderSyncMasquerade {
    pub fn new(p: MasqueradeParams, peers: &[Peer], net: NetProfile) -> Result<Self, AttackError> {
        let dst = match &p.target {
            Some(t) => Destination::Unicast(peer(peers, t)?.address),
            None => Destination::Multicast,
        };
        Ok(Self {
            master: peer(peers, &p.master)?,
            dst,
            p,
            net,
            pending: None,
            pairs: 0,
        })
    }
}

impl Attack for InsiderSyncMasquerade {
    fn name(&self) -> &'static str {
        "insider_sync_masquerade"
    }

    fn start(&mut self, _ctx: &mut AttackCtx) {}

    fn on_observe(&mut self, frame: &Observed, ctx: &mut AttackCtx) {
        let Some(msg) = frame.msg() else { return };
        if msg.message_type() == MessageType::Sync
            && msg.header.source_clock_identity == self.master.clock_id
            && frame.claimed_src == self.master.address
            && frame.dst == Destination::Multicast
        {
            if self.pending.is_none() {
                ctx.timer(ctx.now + self.p.lead_ns, 0);
            }
            self.pending = Some(self.net.space.wrap(msg.header.sequence_id as u64 + 1));
        }
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        let Some(seq) = self.pending.take() else { return };
        let t1 = ctx.true_time_ns() + self.p.shift_ns;
        let (sync, fu) = forged_pair(
            self.master.clock_id,
            fits(self.net.mode, seq),
            t1,
            self.net.mode,
            Some(ctx.own_key),
            ctx.group_key,
        );
        ctx.send(self.dst, self.master.address, &sync, self.net.mode);
        ctx.send(self.dst, self.master.address, &fu, self.net.mode);
        self.pairs += 1;
    }

    fn report(&self) -> AttackReport {
        report(&[("pairs_sent", self.pairs)])
    }
}

// ---- replay ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayParams {
    pub master: String,
    pub target: String,
    /// Simulated time between capture and re-injection.
    pub replay_after_ns: u64,
}

/// Records the master's first SYNC/FOLLOW_UP pair after the attack starts
/// and re-injects both frames verbatim later.
pub struct Replay {
    p: ReplayParams,
    master: Peer,
    target: Peer,
    sync: Option<(u32, Vec<u8>)>,
    captured: Option<(Vec<u8>, Vec<u8>)>,
    replayed: u64,
}

impl Replay {
    pub fn new(p: ReplayParams, peers: &[Peer]) -> Result<Self, AttackError> {
        Ok(Self {
            master: peer(peers, &p.master)?,
            target: peer(peers, &p.target)?,
            p,
            sync: None,
            captured: None,
            replayed: 0,
        })
    }
}

impl Attack for Replay {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn start(&mut self, _ctx: &mut AttackCtx) {}

    fn on_observe(&mut self, frame: &Observed, ctx: &mut AttackCtx) {
        if self.captured.is_some() {
            return;
        }
        let Some(msg) = frame.msg() else { return };
        if msg.header.source_clock_identity != self.master.clock_id
            || frame.claimed_src != self.master.address
        {
            return;
        }
        match msg.message_type() {
            MessageType::Sync => self.sync = Some((msg.header.sequence_id, frame.bytes.to_vec())),
            MessageType::FollowUp => {
                if let Some((seq, sync)) = self.sync.take() {
                    if seq == msg.header.sequence_id {
                        self.captured = Some((sync, frame.bytes.to_vec()));
                        ctx.timer(ctx.now + self.p.replay_after_ns, 0);
                    }
                }
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AttackCtx) {
        if let Some((sync, fu)) = self.captured.clone() {
            let dst = Destination::Unicast(self.target.address);
            ctx.send_raw(dst, self.master.address, sync);
            ctx.send_raw(dst, self.master.address, fu);
            self.replayed += 1;
        }
    }

    fn report(&self) -> AttackReport {
        report(&[
            ("captured", self.captured.is_some() as u64),
            ("replayed", self.replayed),
        ])
    }
}

// ---- man in the middle ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitmAction {
    Pass,
    Drop,
    Delay,
    /// Shift the FOLLOW_UP origin timestamp, keeping any signature or ICV.
    ModifyTimestamp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitmParams {
    pub action: MitmAction,
    #[serde(default)]
    pub delay_ns: u64,
    #[serde(default)]
    pub shift_ns: i64,
}

/// Acts on every frame crossing the adversary's tapped links.
pub struct Mitm {
    p: MitmParams,
    touched: u64,
}

impl Mitm {
    pub fn new(p: MitmParams) -> Self {
        Self { p, touched: 0 }
    }
}

impl Attack for Mitm {
    fn name(&self) -> &'static str {
        "mitm"
    }

    fn start(&mut self, _ctx: &mut AttackCtx) {}

    fn intercept(&mut self, frame: &Observed, _ctx: &mut AttackCtx) -> TapAction {
        let action = match self.p.action {
            MitmAction::Pass => TapAction::Pass,
            MitmAction::Drop => TapAction::Drop,
            MitmAction::Delay => TapAction::Delay(self.p.delay_ns),
            MitmAction::ModifyTimestamp => {
                let Some((msg, mode)) = &frame.decoded else {
                    return TapAction::Pass;
                };
                let mut msg = *msg;
                let Body::FollowUp(ref mut fu) = msg.body else {
                    return TapAction::Pass;
                };
                let t = fu.precise_origin_timestamp.to_nanos().unwrap_or(0) + self.p.shift_ns;
                fu.precise_origin_timestamp = Timestamp::from_nanos(t).unwrap_or_default();
                match wire::encode(&msg, *mode) {
                    Ok(bytes) => TapAction::Modify(bytes),
                    Err(_) => TapAction::Pass,
                }
            }
        };
        if action != TapAction::Pass {
            self.touched += 1;
        }
        action
    }

    fn report(&self) -> AttackReport {
        report(&[("frames_touched", self.touched)])
    }
}

/// Expected wall-clock time to complete one blind snatch pass over a space
/// of `2^bits` IDs with window `w` at `rate_pps`.
pub fn snatch_duration_secs(bits: u8, window: u32, rate_pps: f64) -> f64 {
    let probes = (1u64 << bits) / window as u64 - 1;
    probes as f64 / rate_pps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peers() -> Vec<Peer> {
        ["gm", "s1"]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let address = NetworkAddress::Mac6([2, 0, 0, 0, 0, i as u8 + 1]);
                Peer {
                    name: n.to_string(),
                    address,
                    clock_id: crate::identity::clock_id_from_network(&address),
                }
            })
            .collect()
    }

    fn net() -> NetProfile {
        NetProfile {
            mode: WireMode::Baseline,
            space: IdSpace::BITS16,
            window: 50,
        }
    }

    fn table(s: &str) -> toml::Table {
        s.parse().unwrap()
    }

    #[test]
    fn registry_builds_every_kind() {
        let params = [
            "master='gm'\ntarget='s1'\nshift_ns=1",
            "master='gm'\nshift_ns=1",
            "master='gm'\ntarget='s1'",
            "master='gm'\ntarget='s1'\nk=3",
            "",
            "target='s1'\nshift_ns=1",
            "master='gm'\nshift_ns=1",
            "master='gm'\ntarget='s1'\nreplay_after_ns=5",
            "action='drop'",
        ];
        for (kind, p) in KINDS.iter().zip(params) {
            let a = build(kind, table(p), &peers(), net()).unwrap();
            assert_eq!(a.name(), *kind);
        }
    }

    #[test]
    fn bad_params_are_reported() {
        let e = build("sync_spoof", table("master='gm'"), &peers(), net()).err().unwrap();
        assert!(e.to_string().contains("shift_ns"), "{e}");
        let e = build("sync_spoof", table("master='nobody'\nshift_ns=1"), &peers(), net())
            .err()
            .unwrap();
        assert!(matches!(e, AttackError::UnknownPeer(_)));
        assert!(matches!(
            build("teleport", toml::Table::new(), &peers(), net()),
            Err(AttackError::UnknownKind(_))
        ));
        let e = build("sync_spoof", table("master='gm'\nshift_ns=1\nrate_pps=0.0"), &peers(), net());
        assert!(matches!(e, Err(AttackError::Invalid(_))));
    }

    #[test]
    fn probe_order_matches_schedule() {
        let space = IdSpace::with_bits(12).unwrap();
        let p = SnatchParams {
            master: "gm".into(),
            target: "s1".into(),
            rate_pps: 10.0,
            passes: 2,
            shift_ns: 0,
            follow_on: 0,
        };
        let a = BlindWindowSnatch::new(p, &peers(), NetProfile { mode: WireMode::Baseline, space, window: 16 }).unwrap();
        assert_eq!(a.per_pass, crate::session::snatch_ids(space, 16).count() as u64);
    }

    #[test]
    fn session32_snatch_is_infeasible() {
        let secs = snatch_duration_secs(32, 16, 1000.0);
        assert!(secs > 3.0 * 86_400.0);
        assert_eq!(snatch_duration_secs(16, 50, 10.0), 130.9);
    }
}
