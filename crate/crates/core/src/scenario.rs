//! Scenario files: a TOML description of nodes, links and an optional
//! adversary, plus the runner and the CSV/summary writers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::attacks::{self, AttackError, NetProfile};
use crate::identity::NetworkAddress;
use crate::node::{NodeConfig, NodeError, PtpNode, SecurityMode, Verdict};
use crate::rng;
use crate::security::{make_certificate, GroupKey, KeyPair};
use crate::simnet::{
    AdversaryClass, AdversarySpec, Capability, EntityId, LinkModel, MetricsLog, NetConfig, Origin,
    Peer, SimError, Simulation,
};
use crate::timemath::{Gain, ServoState, NANOS_PER_SEC};
use crate::wire::MessageType;

const NS_PER_US: f64 = 1e3;
const NS_PER_MS: f64 = 1e6;
const NS_PER_S: f64 = 1e9;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub horizon_s: f64,
    #[serde(default = "default_security")]
    pub security: SecurityMode,
    #[serde(default = "default_window")]
    pub window: u32,
    #[serde(default)]
    pub session_bits: Option<u8>,
    #[serde(default = "default_sample_ms")]
    pub sample_interval_ms: f64,
    #[serde(default)]
    pub servo: ServoSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub links: Vec<LinkOverride>,
    pub nodes: Vec<NodeSection>,
    #[serde(default)]
    pub adversary: Option<AdversarySection>,
    /// Offset magnitude after the attack starts that counts as success.
    #[serde(default = "default_success_ms")]
    pub success_threshold_ms: f64,
}

fn default_security() -> SecurityMode {
    SecurityMode::None
}
fn default_window() -> u32 {
    crate::session::DEFAULT_WINDOW
}
fn default_sample_ms() -> f64 {
    100.0
}
fn default_success_ms() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSection {
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_panic_ms")]
    pub panic_threshold_ms: f64,
    /// 0 disables the slew cap.
    #[serde(default = "default_slew")]
    pub max_slew_us_per_s: f64,
    #[serde(default)]
    pub max_delay_ms: Option<f64>,
}

fn default_gain() -> f64 {
    0.1
}
fn default_panic_ms() -> f64 {
    1000.0
}
fn default_slew() -> f64 {
    500.0
}

impl Default for ServoSection {
    fn default() -> Self {
        Self {
            gain: default_gain(),
            panic_threshold_ms: default_panic_ms(),
            max_slew_us_per_s: default_slew(),
            max_delay_ms: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    #[serde(default = "default_delay_us")]
    pub delay_us: f64,
    #[serde(default)]
    pub jitter_us: f64,
}

fn default_delay_us() -> f64 {
    100.0
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            delay_us: default_delay_us(),
            jitter_us: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub from: String,
    pub to: String,
    pub delay_us: f64,
    #[serde(default)]
    pub jitter_us: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub name: String,
    #[serde(default)]
    pub address: Option<String>,
    #[serde(default)]
    pub master_capable: bool,
    #[serde(default = "p128")]
    pub priority1: u8,
    #[serde(default = "class248")]
    pub clock_class: u8,
    #[serde(default = "acc_unknown")]
    pub clock_accuracy: u8,
    #[serde(default = "var_max")]
    pub offset_scaled_log_variance: u16,
    #[serde(default = "p128")]
    pub priority2: u8,
    #[serde(default = "src_internal")]
    pub time_source: u8,
    #[serde(default)]
    pub initial_offset_us: f64,
    #[serde(default)]
    pub drift_ppb: i64,
    #[serde(default)]
    pub sync_interval_log: i8,
    #[serde(default = "one_i8")]
    pub announce_interval_log: i8,
    #[serde(default)]
    pub delay_req_interval_log: i8,
    #[serde(default)]
    pub mgmt_whitelist: Option<Vec<String>>,
}

fn p128() -> u8 {
    128
}
fn class248() -> u8 {
    248
}
fn acc_unknown() -> u8 {
    0xFE
}
fn var_max() -> u16 {
    0xFFFF
}
fn src_internal() -> u8 {
    0xA0
}
fn one_i8() -> i8 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default = "eve")]
    pub name: String,
    pub class: AdversaryClass,
    pub attack: String,
    #[serde(default)]
    pub address: Option<String>,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub stop_s: Option<f64>,
    /// Directed node links the adversary sits on, as `[from, to]` pairs.
    #[serde(default)]
    pub taps: Vec<[String; 2]>,
    #[serde(default)]
    pub params: toml::Table,
}

fn eve() -> String {
    "eve".into()
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("node {node}: {source}")]
    Node { node: String, source: NodeError },
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ScenarioError {
    pub fn is_capability_violation(&self) -> bool {
        matches!(self, ScenarioError::Sim(SimError::CapabilityViolation { .. }))
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

impl ScenarioConfig {
    pub fn parse(src: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| ScenarioError::Parse {
            line: e.span().map_or(1, |s| line_of(src, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn horizon_ns(&self) -> u64 {
        (self.horizon_s * NS_PER_S).round() as u64
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("scenario name `{}` must be [A-Za-z0-9_-]+", self.name));
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return bad("horizon_s must be positive".into());
        }
        if !(self.sample_interval_ms > 0.0 && self.sample_interval_ms.is_finite()) {
            return bad("sample_interval_ms must be positive".into());
        }
        if self.nodes.is_empty() {
            return bad("at least one node is required".into());
        }
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return bad(format!("duplicate node name `{}`", n.name));
            }
        }
        Ok(())
    }
}

fn ns(value: f64, unit: f64) -> i64 {
    (value * unit).round() as i64
}

fn parse_addr(s: &str) -> Result<NetworkAddress, ScenarioError> {
    s.parse()
        .map_err(|e| ScenarioError::Invalid(format!("address `{s}`: {e}")))
}

fn auto_addr(i: usize) -> NetworkAddress {
    let n = i + 1;
    NetworkAddress::Mac6([0x02, 0, 0, 0, (n >> 8) as u8, n as u8])
}

const ADVERSARY_ADDR: NetworkAddress = NetworkAddress::Mac6([0x02, 0, 0, 0, 0x0A, 0x66]);

/// Everything a run needs, derived deterministically from config and seed.
pub struct Built {
    pub sim: Simulation,
    pub horizon_ns: u64,
}

pub fn build(cfg: &ScenarioConfig) -> Result<Built, ScenarioError> {
    let seed = cfg.seed;
    let mgmt = KeyPair::generate(&mut rng::stream(seed, "management"));
    let group = {
        use rand::RngCore;
        let mut k = [0u8; 32];
        rng::stream(seed, "group-key").fill_bytes(&mut k);
        GroupKey(k)
    };
    let gain = Gain::from_f64(cfg.servo.gain)
        .ok_or_else(|| ScenarioError::Invalid(format!("servo gain {} not in (0, 1]", cfg.servo.gain)))?;
    let servo = ServoState {
        gain,
        panic_threshold_ns: ns(cfg.servo.panic_threshold_ms, NS_PER_MS),
        max_slew_ns_per_s: if cfg.servo.max_slew_us_per_s > 0.0 {
            ns(cfg.servo.max_slew_us_per_s, NS_PER_US)
        } else {
            i64::MAX
        },
        max_delay_ns: cfg.servo.max_delay_ms.map(|v| ns(v, NS_PER_MS)),
        ..ServoState::default()
    };

    let mut nodes = Vec::new();
    for (i, n) in cfg.nodes.iter().enumerate() {
        let address = match &n.address {
            Some(a) => parse_addr(a)?,
            None => auto_addr(i),
        };
        let mut c = NodeConfig::new(&n.name, address);
        c.master_capable = n.master_capable;
        c.quality.priority1 = n.priority1;
        c.quality.clock_class = n.clock_class;
        c.quality.clock_accuracy = n.clock_accuracy;
        c.quality.offset_scaled_log_variance = n.offset_scaled_log_variance;
        c.quality.priority2 = n.priority2;
        c.quality.time_source = n.time_source;
        c.security = cfg.security;
        c.window_size = cfg.window;
        c.session_bits = cfg.session_bits;
        c.sync_interval_log = n.sync_interval_log;
        c.announce_interval_log = n.announce_interval_log;
        c.delay_req_interval_log = n.delay_req_interval_log;
        c.initial_offset_ns = ns(n.initial_offset_us, NS_PER_US);
        c.drift_ppb = n.drift_ppb;
        c.servo = servo;
        c.seed = rng::derive_seed(seed, &format!("node:{}", n.name));
        if let Some(list) = &n.mgmt_whitelist {
            c.mgmt_whitelist = Some(list.iter().map(|a| parse_addr(a)).collect::<Result<_, _>>()?);
        }
        match cfg.security {
            SecurityMode::Symmetric => c.keys.group_key = Some(group),
            SecurityMode::PublicKey => {
                c.keys.management_public = Some(mgmt.public_key());
                if c.master_capable {
                    let key = KeyPair::generate(&mut rng::stream(seed, &format!("key:{}", n.name)));
                    let clock_id = crate::identity::clock_id_from_network(&address);
                    c.keys.certificate =
                        Some(make_certificate(&c.quality.announce(clock_id), &key.public_key(), &mgmt));
                    c.keys.signing = Some(key);
                }
            }
            _ => {}
        }
        nodes.push(PtpNode::new(c).map_err(|source| ScenarioError::Node {
            node: n.name.clone(),
            source,
        })?);
    }

    let index: BTreeMap<&str, usize> = cfg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown node `{name}`")))
    };

    let mut net = NetConfig {
        default_link: LinkModel {
            base_delay_ns: ns(cfg.link.delay_us, NS_PER_US) as u64,
            jitter_ns: ns(cfg.link.jitter_us, NS_PER_US) as u64,
        },
        links: BTreeMap::new(),
        sample_interval_ns: ns(cfg.sample_interval_ms, NS_PER_MS) as u64,
    };
    for l in &cfg.links {
        net.links.insert(
            (EntityId::Node(lookup(&l.from)?), EntityId::Node(lookup(&l.to)?)),
            LinkModel {
                base_delay_ns: ns(l.delay_us, NS_PER_US) as u64,
                jitter_ns: ns(l.jitter_us, NS_PER_US) as u64,
            },
        );
    }

    let mut adversaries = Vec::new();
    if let Some(a) = &cfg.adversary {
        let peers: Vec<Peer> = nodes
            .iter()
            .map(|n| Peer {
                name: n.name().to_string(),
                address: n.address(),
                clock_id: n.clock_id(),
            })
            .collect();
        let profile = NetProfile {
            mode: cfg.security.wire_mode(),
            space: nodes[0]
                .config()
                .id_space()
                .map_err(|source| ScenarioError::Node {
                    node: cfg.nodes[0].name.clone(),
                    source,
                })?,
            window: cfg.window,
        };
        let attack = attacks::build(&a.attack, a.params.clone(), &peers, profile)?;
        let capability = Capability::of(a.class);
        let mut taps = Vec::new();
        for [from, to] in &a.taps {
            taps.push((lookup(from)?, lookup(to)?));
        }
        if !taps.is_empty() && !capability.can_drop_modify_delay {
            return Err(ScenarioError::Invalid(format!(
                "adversary class {:?} cannot sit on a link",
                a.class
            )));
        }
        adversaries.push(AdversarySpec {
            name: a.name.clone(),
            address: match &a.address {
                Some(s) => parse_addr(s)?,
                None => ADVERSARY_ADDR,
            },
            capability,
            attack,
            start_ns: ns(a.start_s, NS_PER_S) as u64,
            stop_ns: a.stop_s.map(|s| ns(s, NS_PER_S) as u64),
            taps,
            group_key: (cfg.security == SecurityMode::Symmetric).then_some(group),
            seed,
        });
    }

    Ok(Built {
        sim: Simulation::new(nodes, adversaries, net, seed)?,
        horizon_ns: cfg.horizon_ns(),
    })
}

pub struct RunResult {
    pub log: MetricsLog,
    pub nodes: Vec<PtpNode>,
    pub summary: Summary,
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, ScenarioError> {
    let built = build(cfg)?;
    let (log, nodes) = built.sim.run(built.horizon_ns)?;
    let summary = Summary::compute(cfg, &log, &nodes);
    Ok(RunResult { log, nodes, summary })
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub security: SecurityMode,
    pub horizon_ns: u64,
    pub attack: Option<String>,
    pub attack_start_ns: u64,
    pub attack_success: bool,
    pub max_abs_offset_ns: i64,
    pub max_abs_offset_after_start_ns: i64,
    pub final_offsets_ns: Vec<(String, i64)>,
    pub drops_by_reason: BTreeMap<&'static str, u64>,
    pub messages: BTreeMap<(&'static str, &'static str, &'static str), u64>,
    pub attack_report: BTreeMap<String, u64>,
    pub conservation: crate::simnet::Conservation,
    pub final_roles: Vec<(String, &'static str, Option<String>)>,
}

impl Summary {
    pub fn compute(cfg: &ScenarioConfig, log: &MetricsLog, nodes: &[PtpNode]) -> Self {
        let start = cfg
            .adversary
            .as_ref()
            .map_or(0, |a| ns(a.start_s, NS_PER_S) as u64);
        let max_abs = |from: u64| {
            log.offsets
                .iter()
                .filter(|s| s.time_ns >= from)
                .map(|s| s.true_offset_ns.saturating_abs())
                .max()
                .unwrap_or(0)
        };
        let after = max_abs(start);
        let threshold = ns(cfg.success_threshold_ms, NS_PER_MS);
        let mut drops = BTreeMap::new();
        let mut messages = BTreeMap::new();
        for v in &log.verdicts {
            if v.verdict == Verdict::Dropped {
                *drops.entry(v.reason.as_str()).or_insert(0) += 1;
            }
            let ty = v.msg_type.map_or("MALFORMED", MessageType::as_str);
            *messages
                .entry((ty, v.origin.as_str(), v.verdict.as_str()))
                .or_insert(0) += 1;
        }
        let final_offsets_ns = log
            .node_names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (
                    n.clone(),
                    log.offsets_of(i).last().map_or(0, |s| s.true_offset_ns),
                )
            })
            .collect();
        let final_roles = nodes
            .iter()
            .map(|n| {
                let parent = n.parent().map(|p| {
                    nodes
                        .iter()
                        .find(|m| m.clock_id() == p.master_clock_id)
                        .map_or_else(|| p.master_clock_id.to_string(), |m| m.name().to_string())
                });
                let role = match n.state() {
                    crate::node::PortState::Master => "master",
                    crate::node::PortState::Slave => "slave",
                    crate::node::PortState::Listening => "listening",
                };
                (n.name().to_string(), role, parent)
            })
            .collect();
        Summary {
            name: cfg.name.clone(),
            seed: cfg.seed,
            security: cfg.security,
            horizon_ns: cfg.horizon_ns(),
            attack: cfg.adversary.as_ref().map(|a| a.attack.clone()),
            attack_start_ns: start,
            attack_success: cfg.adversary.is_some() && after > threshold,
            max_abs_offset_ns: max_abs(0),
            max_abs_offset_after_start_ns: after,
            final_offsets_ns,
            drops_by_reason: drops,
            messages,
            attack_report: log.attack_reports.values().flatten().map(|(k, v)| (k.clone(), *v)).collect(),
            conservation: log.counters,
            final_roles,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let ms = |v: i64| v as f64 / NS_PER_MS;
        let _ = writeln!(s, "scenario: {}", self.name);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "security: {}", self.security.as_str());
        let _ = writeln!(s, "horizon_s: {}", self.horizon_ns as f64 / NANOS_PER_SEC as f64);
        let _ = writeln!(s, "attack: {}", self.attack.as_deref().unwrap_or("none"));
        if self.attack.is_some() {
            let _ = writeln!(s, "attack_start_s: {}", self.attack_start_ns as f64 / NS_PER_S);
        }
        let _ = writeln!(s, "attack_success: {}", self.attack_success);
        let _ = writeln!(s, "max_abs_offset_ms: {:.6}", ms(self.max_abs_offset_ns));
        let _ = writeln!(
            s,
            "max_abs_offset_after_attack_start_ms: {:.6}",
            ms(self.max_abs_offset_after_start_ns)
        );
        let _ = writeln!(s, "\n[final]");
        for ((name, off), (_, role, parent)) in self.final_offsets_ns.iter().zip(&self.final_roles) {
            let _ = writeln!(
                s,
                "{name}: offset_ms={:.6} role={role}{}",
                ms(*off),
                parent.as_ref().map_or(String::new(), |p| format!(" parent={p}"))
            );
        }
        let _ = writeln!(s, "\n[drops_by_reason]");
        for (r, n) in &self.drops_by_reason {
            let _ = writeln!(s, "{r}: {n}");
        }
        let _ = writeln!(s, "\n[messages]  type origin verdict count");
        for ((t, o, v), n) in &self.messages {
            let _ = writeln!(s, "{t} {o} {v} {n}");
        }
        if !self.attack_report.is_empty() {
            let _ = writeln!(s, "\n[attack_counters]");
            for (k, v) in &self.attack_report {
                let _ = writeln!(s, "{k}: {v}");
            }
        }
        let c = &self.conservation;
        let _ = writeln!(s, "\n[frames]");
        let _ = writeln!(s, "emitted: {}", c.emitted);
        let _ = writeln!(s, "copies: {}", c.copies);
        let _ = writeln!(s, "delivered: {}", c.delivered);
        let _ = writeln!(s, "tap_dropped: {}", c.tap_dropped);
        let _ = writeln!(s, "in_flight: {}", c.in_flight);
        let _ = writeln!(s, "undeliverable: {}", c.undeliverable);
        s
    }
}

pub fn write_offsets_csv<W: Write>(log: &MetricsLog, mut w: W) -> io::Result<()> {
    writeln!(w, "time_ns,node,true_offset_ns")?;
    for s in &log.offsets {
        writeln!(w, "{},{},{}", s.time_ns, log.node_names[s.node], s.true_offset_ns)?;
    }
    Ok(())
}

pub fn write_verdicts_csv<W: Write>(log: &MetricsLog, mut w: W) -> io::Result<()> {
    writeln!(w, "time_ns,node,msg_type,seq_id,origin,verdict,reason")?;
    for v in &log.verdicts {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            v.time_ns,
            log.node_names[v.node],
            v.msg_type.map_or("MALFORMED", MessageType::as_str),
            v.seq_id.map_or(String::new(), |s| s.to_string()),
            v.origin.as_str(),
            v.verdict.as_str(),
            v.reason.as_str()
        )?;
    }
    Ok(())
}

/// Writes `<name>_offsets.csv`, `<name>_verdicts.csv` and
/// `<name>_summary.txt` into `dir`.
pub fn write_outputs(result: &RunResult, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = &result.summary.name;
    let file = |suffix: &str| -> io::Result<io::BufWriter<std::fs::File>> {
        Ok(io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}_{suffix}")))?))
    };
    let mut o = file("offsets.csv")?;
    write_offsets_csv(&result.log, &mut o)?;
    o.flush()?;
    let mut v = file("verdicts.csv")?;
    write_verdicts_csv(&result.log, &mut v)?;
    v.flush()?;
    std::fs::write(dir.join(format!("{name}_summary.txt")), result.summary.render())
}

/// Attack-origin frames a node accepted, by message type.
pub fn accepted_attack_frames(log: &MetricsLog, ty: MessageType) -> u64 {
    log.verdicts
        .iter()
        .filter(|v| v.origin == Origin::Adversary && v.msg_type == Some(ty) && v.verdict == Verdict::Accepted)
        .count() as u64
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// Scenario files shipped in `scenarios/`, embedded at build time.
        pub const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../../scenarios/", $name, ".toml"))),)*
        ];
    };
}

bundled!(
    "baseline",
    "delay_spoof",
    "delay_spoof_binding",
    "sync_spoof",
    "duplicate_master",
    "sync_spoof_binding",
    "network_spoof_binding",
    "snatch_session16",
    "snatch_session32",
    "rogue_master",
    "insider_rogue_symmetric",
    "insider_rogue_public_key",
    "insider_masquerade_symmetric",
    "insider_masquerade_public_key",
    "proxy_gm_open",
    "proxy_gm_whitelist",
    "proxy_gm_whitelist_spoofed",
    "replay_signed",
    "mitm_asymmetry",
    "telecom_128hz",
);

pub fn bundled(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let (_, src) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
    ScenarioConfig::parse(src)
}
