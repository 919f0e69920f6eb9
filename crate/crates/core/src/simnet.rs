//! Deterministic discrete-event network simulator.
//!
//! Honest nodes and adversaries exchange encoded frames over directed links
//! with a base latency plus uniform jitter; each link is FIFO. Multicast
//! reaches every other entity. Unicast reaches its addressee, and a copy goes
//! to adversaries whose capability includes seeing unicast traffic.
//! Adversaries act only through [`AttackCtx`], and every action is checked
//! against their [`Capability`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::identity::{self, NetworkAddress};
use crate::node::{Destination, NodeOutput, NodeTimer, PtpNode, Reason, Verdict, GateReport};
use crate::rng::{self, SimRng};
use crate::security::{GroupKey, KeyPair};
use crate::timemath::{ServoAction, SIM_EPOCH_PTP_NS};
use crate::wire::{self, ClockIdentity, MessageType, PtpMessage, WireMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryClass {
    OobApplicative,
    OobNetwork,
    InBand,
    /// An in-band attacker that also holds the group key and a legitimate
    /// slave identity.
    InsiderSlave,
}

impl fmt::Display for AdversaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryClass::OobApplicative => "oob_applicative",
            AdversaryClass::OobNetwork => "oob_network",
            AdversaryClass::InBand => "in_band",
            AdversaryClass::InsiderSlave => "insider_slave",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capability {
    pub class: AdversaryClass,
    pub can_spoof_net_addr: bool,
    pub sees_unicast: bool,
    pub can_drop_modify_delay: bool,
    pub holds_group_key: bool,
}

impl Capability {
    pub fn of(class: AdversaryClass) -> Self {
        let (spoof, unicast, mitm, key) = match class {
            AdversaryClass::OobApplicative => (false, false, false, false),
            AdversaryClass::OobNetwork => (true, false, false, false),
            AdversaryClass::InBand => (true, true, true, false),
            AdversaryClass::InsiderSlave => (true, true, true, true),
        };
        Self {
            class,
            can_spoof_net_addr: spoof,
            sees_unicast: unicast,
            can_drop_modify_delay: mitm,
            holds_group_key: key,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkModel {
    pub base_delay_ns: u64,
    pub jitter_ns: u64,
}

impl LinkModel {
    pub fn fixed(base_delay_ns: u64) -> Self {
        Self {
            base_delay_ns,
            jitter_ns: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityId {
    Node(usize),
    Adversary(usize),
}

/// Ground truth about who produced a frame; nodes never see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Honest,
    Adversary,
    /// Emitted by an honest node, then modified in flight.
    Tampered,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Honest => "honest",
            Origin::Adversary => "adversary",
            Origin::Tampered => "tampered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TapAction {
    Pass,
    Drop,
    Modify(Vec<u8>),
    Delay(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("adversary {adversary} ({class}) cannot {action}")]
    CapabilityViolation {
        adversary: String,
        class: AdversaryClass,
        action: &'static str,
    },
    #[error("{0}")]
    Config(String),
}

/// A frame as seen by an adversary.
#[derive(Debug, Clone)]
pub struct Observed<'a> {
    pub bytes: &'a [u8],
    pub claimed_src: NetworkAddress,
    pub dst: Destination,
    pub decoded: Option<(PtpMessage, WireMode)>,
}

impl Observed<'_> {
    pub fn msg(&self) -> Option<&PtpMessage> {
        self.decoded.as_ref().map(|(m, _)| m)
    }

    pub fn mode(&self) -> Option<WireMode> {
        self.decoded.as_ref().map(|(_, m)| *m)
    }
}

#[derive(Debug, Clone)]
pub struct Peer {
    pub name: String,
    pub address: NetworkAddress,
    pub clock_id: ClockIdentity,
}

#[derive(Debug, Clone)]
pub enum AttackAction {
    Send {
        dst: Destination,
        claimed_src: NetworkAddress,
        bytes: Vec<u8>,
    },
    Timer {
        at: u64,
        token: u64,
    },
}

/// The adversary's view of the world and its only way to act.
pub struct AttackCtx<'a> {
    pub now: u64,
    pub own_addr: NetworkAddress,
    pub capability: Capability,
    pub group_key: Option<&'a GroupKey>,
    pub own_key: &'a KeyPair,
    pub rng: &'a mut SimRng,
    pub peers: &'a [Peer],
    actions: Vec<AttackAction>,
}

impl AttackCtx<'_> {
    pub fn own_clock_id(&self) -> ClockIdentity {
        identity::clock_id_from_network(&self.own_addr)
    }

    /// True PTP time, for adversaries that carry a perfect clock.
    pub fn true_time_ns(&self) -> i64 {
        SIM_EPOCH_PTP_NS + self.now as i64
    }

    pub fn peer(&self, name: &str) -> Option<&Peer> {
        self.peers.iter().find(|p| p.name == name)
    }

    pub fn send(&mut self, dst: Destination, claimed_src: NetworkAddress, msg: &PtpMessage, mode: WireMode) {
        let bytes = wire::encode(msg, mode).expect("attack frames encode");
        self.send_raw(dst, claimed_src, bytes);
    }

    pub fn send_raw(&mut self, dst: Destination, claimed_src: NetworkAddress, bytes: Vec<u8>) {
        self.actions.push(AttackAction::Send {
            dst,
            claimed_src,
            bytes,
        });
    }

    pub fn timer(&mut self, at: u64, token: u64) {
        self.actions.push(AttackAction::Timer { at, token });
    }
}

/// Counters an attack reports at the end of a run, keyed by name.
pub type AttackReport = BTreeMap<String, u64>;

pub trait Attack {
    fn name(&self) -> &'static str;
    fn start(&mut self, ctx: &mut AttackCtx);
    fn on_timer(&mut self, _token: u64, _ctx: &mut AttackCtx) {}
    fn on_observe(&mut self, _frame: &Observed, _ctx: &mut AttackCtx) {}
    /// Called for frames on links tapped by this adversary.
    fn intercept(&mut self, _frame: &Observed, _ctx: &mut AttackCtx) -> TapAction {
        TapAction::Pass
    }
    fn report(&self) -> AttackReport {
        AttackReport::new()
    }
}

pub struct AdversarySpec {
    pub name: String,
    pub address: NetworkAddress,
    pub capability: Capability,
    pub attack: Box<dyn Attack>,
    pub start_ns: u64,
    pub stop_ns: Option<u64>,
    /// Directed node-to-node links this adversary sits on.
    pub taps: Vec<(usize, usize)>,
    pub group_key: Option<GroupKey>,
    pub seed: u64,
}

struct AdversaryState {
    name: String,
    address: NetworkAddress,
    capability: Capability,
    attack: Box<dyn Attack>,
    start_ns: u64,
    stop_ns: Option<u64>,
    group_key: Option<GroupKey>,
    own_key: KeyPair,
    rng: SimRng,
}

impl AdversaryState {
    fn active(&self, now: u64) -> bool {
        now >= self.start_ns && self.stop_ns.is_none_or(|s| now < s)
    }
}

#[derive(Debug, Clone)]
pub struct NetConfig {
    pub default_link: LinkModel,
    /// Overrides keyed by (from, to).
    pub links: BTreeMap<(EntityId, EntityId), LinkModel>,
    pub sample_interval_ns: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            default_link: LinkModel {
                base_delay_ns: 100_000,
                jitter_ns: 0,
            },
            links: BTreeMap::new(),
            sample_interval_ns: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetSample {
    pub time_ns: u64,
    pub node: usize,
    pub true_offset_ns: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerdictRecord {
    pub time_ns: u64,
    pub node: usize,
    pub msg_type: Option<MessageType>,
    pub seq_id: Option<u32>,
    pub origin: Origin,
    pub verdict: Verdict,
    pub reason: Reason,
    pub gates: GateReport,
    pub servo: Option<ServoAction>,
}

/// Frame accounting. Every copy of a frame is either delivered, dropped by a
/// tap, or still in flight when the run ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conservation {
    pub emitted: u64,
    pub copies: u64,
    pub delivered: u64,
    pub tap_dropped: u64,
    pub in_flight: u64,
    pub undeliverable: u64,
    pub node_deliveries: u64,
}

impl Conservation {
    pub fn balanced(&self) -> bool {
        self.copies == self.delivered + self.tap_dropped + self.in_flight
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub node_names: Vec<String>,
    pub offsets: Vec<OffsetSample>,
    pub verdicts: Vec<VerdictRecord>,
    pub counters: Conservation,
    pub attack_reports: BTreeMap<String, AttackReport>,
}

impl MetricsLog {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn offsets_of(&self, node: usize) -> impl Iterator<Item = &OffsetSample> {
        self.offsets.iter().filter(move |s| s.node == node)
    }

    pub fn verdicts_of(&self, node: usize) -> impl Iterator<Item = &VerdictRecord> {
        self.verdicts.iter().filter(move |v| v.node == node)
    }
}

#[derive(Debug, Clone)]
struct Frame {
    from: EntityId,
    claimed_src: NetworkAddress,
    dst: Destination,
    bytes: Vec<u8>,
    origin: Origin,
}

#[derive(Debug)]
enum Event {
    Deliver { to: EntityId, frame: Frame },
    NodeTimer { node: usize, timer: NodeTimer },
    AdversaryStart { adv: usize },
    AdversaryTimer { adv: usize, token: u64 },
    Sample,
}

struct Scheduled {
    at: u64,
    order: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

pub struct Simulation {
    now: u64,
    order: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    nodes: Vec<PtpNode>,
    adversaries: Vec<AdversaryState>,
    taps: BTreeMap<(usize, usize), usize>,
    peers: Vec<Peer>,
    net: NetConfig,
    link_tail: BTreeMap<(EntityId, EntityId), u64>,
    rng: SimRng,
    log: MetricsLog,
}

impl Simulation {
    pub fn new(
        nodes: Vec<PtpNode>,
        adversaries: Vec<AdversarySpec>,
        net: NetConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        let mut addrs = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if addrs.insert(n.address(), i).is_some() {
                return Err(SimError::Config(format!("duplicate address {}", n.address())));
            }
        }
        let mut taps = BTreeMap::new();
        for (a, spec) in adversaries.iter().enumerate() {
            if addrs.contains_key(&spec.address) {
                return Err(SimError::Config(format!(
                    "adversary {} reuses address {}",
                    spec.name, spec.address
                )));
            }
            for &(from, to) in &spec.taps {
                if from >= nodes.len() || to >= nodes.len() {
                    return Err(SimError::Config(format!("tap of {} names an unknown node", spec.name)));
                }
                if taps.insert((from, to), a).is_some() {
                    return Err(SimError::Config("two taps on one link".into()));
                }
            }
        }
        let peers = nodes
            .iter()
            .map(|n| Peer {
                name: n.name().to_string(),
                address: n.address(),
                clock_id: n.clock_id(),
            })
            .collect();
        let log = MetricsLog {
            node_names: nodes.iter().map(|n| n.name().to_string()).collect(),
            ..MetricsLog::default()
        };
        let adversaries = adversaries
            .into_iter()
            .map(|s| AdversaryState {
                own_key: KeyPair::generate(&mut rng::stream(s.seed, &format!("adv-key:{}", s.name))),
                rng: rng::stream(s.seed, &format!("adv:{}", s.name)),
                name: s.name,
                address: s.address,
                capability: s.capability,
                attack: s.attack,
                start_ns: s.start_ns,
                stop_ns: s.stop_ns,
                group_key: s.group_key.filter(|_| s.capability.holds_group_key),
            })
            .collect();
        Ok(Self {
            now: 0,
            order: 0,
            queue: BinaryHeap::new(),
            nodes,
            adversaries,
            taps,
            peers,
            net,
            link_tail: BTreeMap::new(),
            rng: rng::stream(seed, "net"),
            log,
        })
    }

    pub fn nodes(&self) -> &[PtpNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&PtpNode> {
        self.nodes.iter().find(|n| n.name() == name)
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.order += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            order: self.order,
            event,
        }));
    }

    /// Runs until `horizon_ns` of simulated time and returns the metrics.
    pub fn run(mut self, horizon_ns: u64) -> Result<(MetricsLog, Vec<PtpNode>), SimError> {
        self.run_until(horizon_ns)?;
        Ok(self.finish())
    }

    pub fn run_until(&mut self, horizon_ns: u64) -> Result<(), SimError> {
        if self.order == 0 {
            for i in 0..self.nodes.len() {
                let mut out = NodeOutput::default();
                self.nodes[i].start(0, &mut out);
                self.apply_node_output(i, out)?;
            }
            for a in 0..self.adversaries.len() {
                let at = self.adversaries[a].start_ns;
                self.schedule(at, Event::AdversaryStart { adv: a });
            }
            self.schedule(0, Event::Sample);
        }
        while let Some(Reverse(top)) = self.queue.peek() {
            if top.at > horizon_ns {
                break;
            }
            let Reverse(ev) = self.queue.pop().unwrap();
            self.now = ev.at;
            self.dispatch(ev.event)?;
        }
        self.now = horizon_ns;
        Ok(())
    }

    pub fn finish(mut self) -> (MetricsLog, Vec<PtpNode>) {
        self.log.counters.in_flight = self
            .queue
            .iter()
            .filter(|Reverse(s)| matches!(s.event, Event::Deliver { .. }))
            .count() as u64;
        for a in &self.adversaries {
            self.log
                .attack_reports
                .insert(a.name.clone(), a.attack.report());
        }
        (self.log, self.nodes)
    }

    fn dispatch(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::Sample => {
                for (i, n) in self.nodes.iter().enumerate() {
                    self.log.offsets.push(OffsetSample {
                        time_ns: self.now,
                        node: i,
                        true_offset_ns: n.true_offset(self.now),
                    });
                }
                let next = self.now + self.net.sample_interval_ns;
                self.schedule(next, Event::Sample);
            }
            Event::NodeTimer { node, timer } => {
                let mut out = NodeOutput::default();
                self.nodes[node].on_timer(self.now, timer, &mut out);
                self.apply_node_output(node, out)?;
            }
            Event::Deliver { to, frame } => {
                self.log.counters.delivered += 1;
                match to {
                    EntityId::Node(i) => {
                        self.log.counters.node_deliveries += 1;
                        let mut out = NodeOutput::default();
                        self.nodes[i].on_receive(self.now, &frame.bytes, frame.claimed_src, &mut out);
                        debug_assert_eq!(out.verdicts.len(), 1);
                        for v in &out.verdicts {
                            self.log.verdicts.push(VerdictRecord {
                                time_ns: self.now,
                                node: i,
                                msg_type: v.msg_type,
                                seq_id: v.seq_id,
                                origin: frame.origin,
                                verdict: v.verdict,
                                reason: v.reason,
                                gates: v.gates,
                                servo: v.servo,
                            });
                        }
                        self.apply_node_output(i, out)?;
                    }
                    EntityId::Adversary(a) => {
                        if self.adversaries[a].active(self.now) {
                            let observed = Observed {
                                bytes: &frame.bytes,
                                claimed_src: frame.claimed_src,
                                dst: frame.dst,
                                decoded: wire::decode(&frame.bytes).ok(),
                            };
                            let actions = self.with_ctx(a, |attack, ctx| attack.on_observe(&observed, ctx));
                            self.apply_attack_actions(a, actions)?;
                        }
                    }
                }
            }
            Event::AdversaryStart { adv } => {
                let actions = self.with_ctx(adv, |attack, ctx| attack.start(ctx));
                self.apply_attack_actions(adv, actions)?;
            }
            Event::AdversaryTimer { adv, token } => {
                if self.adversaries[adv].active(self.now) {
                    let actions = self.with_ctx(adv, |attack, ctx| attack.on_timer(token, ctx));
                    self.apply_attack_actions(adv, actions)?;
                }
            }
        }
        Ok(())
    }

    fn with_ctx<R>(
        &mut self,
        adv: usize,
        f: impl FnOnce(&mut dyn Attack, &mut AttackCtx) -> R,
    ) -> (R, Vec<AttackAction>) {
        let a = &mut self.adversaries[adv];
        let mut ctx = AttackCtx {
            now: self.now,
            own_addr: a.address,
            capability: a.capability,
            group_key: a.group_key.as_ref(),
            own_key: &a.own_key,
            rng: &mut a.rng,
            peers: &self.peers,
            actions: Vec::new(),
        };
        let r = f(a.attack.as_mut(), &mut ctx);
        (r, ctx.actions)
    }

    fn apply_node_output(&mut self, node: usize, out: NodeOutput) -> Result<(), SimError> {
        for (at, timer) in out.timers {
            self.schedule(at, Event::NodeTimer { node, timer });
        }
        let src = self.nodes[node].address();
        for s in out.sends {
            let bytes = wire::encode(&s.msg, s.mode).expect("node frames encode");
            let frame = Frame {
                from: EntityId::Node(node),
                claimed_src: src,
                dst: s.dst,
                bytes,
                origin: Origin::Honest,
            };
            // a tap on the link may still raise a violation
            self.transmit(frame)?;
        }
        Ok(())
    }

    fn apply_attack_actions<R>(&mut self, adv: usize, (_, actions): (R, Vec<AttackAction>)) -> Result<(), SimError> {
        for act in actions {
            match act {
                AttackAction::Timer { at, token } => {
                    self.schedule(at.max(self.now), Event::AdversaryTimer { adv, token })
                }
                AttackAction::Send {
                    dst,
                    claimed_src,
                    bytes,
                } => {
                    let a = &self.adversaries[adv];
                    if claimed_src != a.address && !a.capability.can_spoof_net_addr {
                        return Err(self.violation(adv, "spoof a network source address"));
                    }
                    self.transmit(Frame {
                        from: EntityId::Adversary(adv),
                        claimed_src,
                        dst,
                        bytes,
                        origin: Origin::Adversary,
                    })?;
                }
            }
        }
        Ok(())
    }

    fn violation(&self, adv: usize, action: &'static str) -> SimError {
        let a = &self.adversaries[adv];
        SimError::CapabilityViolation {
            adversary: a.name.clone(),
            class: a.capability.class,
            action,
        }
    }

    fn recipients(&self, frame: &Frame) -> Vec<EntityId> {
        let mut out = Vec::new();
        let nodes = (0..self.nodes.len()).map(EntityId::Node);
        let advs = (0..self.adversaries.len()).map(EntityId::Adversary);
        match frame.dst {
            Destination::Multicast => {
                out.extend(nodes.chain(advs).filter(|&e| e != frame.from));
            }
            Destination::Unicast(addr) => {
                for e in nodes.chain(advs) {
                    if e == frame.from {
                        continue;
                    }
                    let hit = match e {
                        EntityId::Node(i) => self.nodes[i].address() == addr,
                        EntityId::Adversary(a) => {
                            let adv = &self.adversaries[a];
                            adv.address == addr || adv.capability.sees_unicast
                        }
                    };
                    if hit {
                        out.push(e);
                    }
                }
            }
        }
        out
    }

    fn link(&self, from: EntityId, to: EntityId) -> LinkModel {
        self.net
            .links
            .get(&(from, to))
            .copied()
            .unwrap_or(self.net.default_link)
    }

    fn transmit(&mut self, frame: Frame) -> Result<(), SimError> {
        self.log.counters.emitted += 1;
        let targets = self.recipients(&frame);
        let addressed = match frame.dst {
            Destination::Multicast => !targets.is_empty(),
            Destination::Unicast(addr) => targets.iter().any(|&e| match e {
                EntityId::Node(i) => self.nodes[i].address() == addr,
                EntityId::Adversary(a) => self.adversaries[a].address == addr,
            }),
        };
        if !addressed {
            self.log.counters.undeliverable += 1;
        }
        for to in targets {
            self.log.counters.copies += 1;
            let mut copy = frame.clone();
            let mut extra = 0;
            if let (EntityId::Node(f), EntityId::Node(t)) = (frame.from, to) {
                if let Some(&adv) = self.taps.get(&(f, t)) {
                    match self.tap(adv, &copy)? {
                        TapAction::Pass => {}
                        TapAction::Drop => {
                            self.log.counters.tap_dropped += 1;
                            continue;
                        }
                        TapAction::Modify(bytes) => {
                            copy.bytes = bytes;
                            copy.origin = Origin::Tampered;
                        }
                        TapAction::Delay(d) => extra = d,
                    }
                }
            }
            let link = self.link(frame.from, to);
            let jitter = if link.jitter_ns > 0 {
                self.rng.gen_range(0..=link.jitter_ns)
            } else {
                0
            };
            let mut at = self.now + link.base_delay_ns + jitter + extra;
            let tail = self.link_tail.entry((frame.from, to)).or_insert(0);
            at = at.max(*tail);
            *tail = at;
            self.schedule(at, Event::Deliver { to, frame: copy });
        }
        Ok(())
    }

    fn tap(&mut self, adv: usize, frame: &Frame) -> Result<TapAction, SimError> {
        if !self.adversaries[adv].active(self.now) {
            return Ok(TapAction::Pass);
        }
        let observed = Observed {
            bytes: &frame.bytes,
            claimed_src: frame.claimed_src,
            dst: frame.dst,
            decoded: wire::decode(&frame.bytes).ok(),
        };
        let (action, actions) = self.with_ctx(adv, |attack, ctx| attack.intercept(&observed, ctx));
        if action != TapAction::Pass && !self.adversaries[adv].capability.can_drop_modify_delay {
            return Err(self.violation(adv, "drop, modify or delay frames"));
        }
        self.apply_attack_actions(adv, ((), actions))?;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{NodeConfig, PortState};

    fn mac(last: u8) -> NetworkAddress {
        NetworkAddress::Mac6([0x02, 0, 0, 0, 0, last])
    }

    fn honest_pair(offset: i64) -> Vec<PtpNode> {
        let mut gm = NodeConfig::new("gm", mac(1));
        gm.master_capable = true;
        gm.quality.priority1 = 10;
        let mut s = NodeConfig::new("s1", mac(2));
        s.initial_offset_ns = offset;
        s.seed = 5;
        vec![PtpNode::new(gm).unwrap(), PtpNode::new(s).unwrap()]
    }

    struct Spoofer;
    impl Attack for Spoofer {
        fn name(&self) -> &'static str {
            "spoofer"
        }
        fn start(&mut self, ctx: &mut AttackCtx) {
            let m = PtpMessage::new(
                wire::PtpHeader::new(ctx.own_clock_id(), 0),
                wire::Body::Sync(wire::SyncBody {
                    origin_timestamp: wire::Timestamp::ZERO,
                }),
            );
            ctx.send(Destination::Multicast, mac(1), &m, WireMode::Baseline);
        }
    }

    fn adversary(class: AdversaryClass, attack: Box<dyn Attack>) -> AdversarySpec {
        AdversarySpec {
            name: "eve".into(),
            address: mac(0x66),
            capability: Capability::of(class),
            attack,
            start_ns: 1_000_000_000,
            stop_ns: None,
            taps: vec![],
            group_key: None,
            seed: 1,
        }
    }

    #[test]
    fn honest_pair_converges() {
        let sim = Simulation::new(honest_pair(3_000_000), vec![], NetConfig::default(), 1).unwrap();
        let (log, nodes) = sim.run(60_000_000_000).unwrap();
        assert_eq!(nodes[0].state(), PortState::Master);
        assert_eq!(nodes[1].state(), PortState::Slave);
        let last = log.offsets_of(1).last().unwrap();
        assert!(last.true_offset_ns.abs() < 10_000, "{last:?}");
        assert!(log.counters.balanced());
        assert_eq!(log.counters.node_deliveries, log.verdicts.len() as u64);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut net = NetConfig::default();
        net.default_link.jitter_ns = 20_000;
        let run = || {
            let sim = Simulation::new(honest_pair(1_000_000), vec![], net.clone(), 9).unwrap();
            sim.run(20_000_000_000).unwrap().0
        };
        let (a, b) = (run(), run());
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.verdicts, b.verdicts);
    }

    #[test]
    fn applicative_adversary_cannot_spoof() {
        let sim = Simulation::new(
            honest_pair(0),
            vec![adversary(AdversaryClass::OobApplicative, Box::new(Spoofer))],
            NetConfig::default(),
            1,
        )
        .unwrap();
        let err = sim.run(5_000_000_000).err().unwrap();
        assert!(matches!(err, SimError::CapabilityViolation { .. }), "{err}");
        let sim = Simulation::new(
            honest_pair(0),
            vec![adversary(AdversaryClass::OobNetwork, Box::new(Spoofer))],
            NetConfig::default(),
            1,
        )
        .unwrap();
        assert!(sim.run(5_000_000_000).is_ok());
    }

    struct Dropper;
    impl Attack for Dropper {
        fn name(&self) -> &'static str {
            "dropper"
        }
        fn start(&mut self, _ctx: &mut AttackCtx) {}
        fn intercept(&mut self, _frame: &Observed, _ctx: &mut AttackCtx) -> TapAction {
            TapAction::Drop
        }
    }

    #[test]
    fn tap_needs_in_band_capability() {
        let mut spec = adversary(AdversaryClass::OobNetwork, Box::new(Dropper));
        spec.taps = vec![(0, 1)];
        let sim = Simulation::new(honest_pair(0), vec![spec], NetConfig::default(), 1).unwrap();
        assert!(matches!(sim.run(5_000_000_000), Err(SimError::CapabilityViolation { .. })));

        let mut spec = adversary(AdversaryClass::InBand, Box::new(Dropper));
        spec.taps = vec![(0, 1)];
        let sim = Simulation::new(honest_pair(0), vec![spec], NetConfig::default(), 1).unwrap();
        let (log, _) = sim.run(5_000_000_000).unwrap();
        assert!(log.counters.tap_dropped > 0);
        assert!(log.counters.balanced());
    }

    #[test]
    fn unicast_visibility_follows_capability() {
        for (class, sees) in [
            (AdversaryClass::OobNetwork, false),
            (AdversaryClass::InBand, true),
        ] {
            let sim = Simulation::new(
                honest_pair(0),
                vec![adversary(class, Box::new(Counter::default()))],
                NetConfig::default(),
                1,
            )
            .unwrap();
            let (log, _) = sim.run(10_000_000_000).unwrap();
            let r = &log.attack_reports["eve"];
            assert_eq!(r["unicast_seen"] > 0, sees, "{class:?}");
            assert!(r["multicast_seen"] > 0);
        }
    }

    #[derive(Default)]
    struct Counter {
        unicast: u64,
        multicast: u64,
    }
    impl Attack for Counter {
        fn name(&self) -> &'static str {
            "counter"
        }
        fn start(&mut self, _ctx: &mut AttackCtx) {}
        fn on_observe(&mut self, frame: &Observed, _ctx: &mut AttackCtx) {
            match frame.dst {
                Destination::Multicast => self.multicast += 1,
                Destination::Unicast(_) => self.unicast += 1,
            }
        }
        fn report(&self) -> AttackReport {
            [
                ("unicast_seen".to_string(), self.unicast),
                ("multicast_seen".to_string(), self.multicast),
            ]
            .into_iter()
            .collect()
        }
    }
}
