//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any failed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptpsec::attacks::snatch_duration_secs;
use ptpsec::node::{Reason, Verdict};
use ptpsec::scenario::{self, accepted_attack_frames, RunResult, ScenarioConfig};
use ptpsec::security::{
    benchmark_crypto, make_certificate, sign_followup, verify_followup, CertVerdict, CertificateVerifier,
    KeyPair,
};
use ptpsec::session::{snatch_ids, IdSpace};
use ptpsec::simnet::{MetricsLog, Origin};
use ptpsec::timemath::{compute_delay, compute_offset, ExchangeSample};
use ptpsec::wire::{
    encode, AnnounceBody, Body, ClockIdentity, FollowUpBody, MessageType, PtpHeader, PtpMessage, Signature,
    Timestamp, WireMode, HEADER_LEN,
};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn bundled(name: &str) -> ScenarioConfig {
    scenario::bundled(name).unwrap()
}

fn run(cfg: &ScenarioConfig) -> RunResult {
    scenario::run(cfg).unwrap_or_else(|e| panic!("{}: {e}", cfg.name))
}

fn set_param(cfg: &mut ScenarioConfig, key: &str, value: impl Into<toml::Value>) {
    cfg.adversary.as_mut().unwrap().params.insert(key.into(), value.into());
}

fn node(log: &MetricsLog, name: &str) -> usize {
    log.node_index(name).unwrap()
}

/// (adversary SYNCs seen, accepted, 1-based index of the first accepted).
fn forged_syncs(log: &MetricsLog, node: usize) -> (u64, u64, Option<u64>) {
    let mut seen = 0;
    let mut accepted = 0;
    let mut first = None;
    for v in log.verdicts_of(node) {
        if v.origin != Origin::Adversary || v.msg_type != Some(MessageType::Sync) {
            continue;
        }
        seen += 1;
        if v.verdict == Verdict::Accepted {
            accepted += 1;
            first.get_or_insert(seen);
        }
    }
    (seen, accepted, first)
}

/// Frames that change slave state; SYNC alone does not under signatures.
fn effective_attack_frames(log: &MetricsLog) -> u64 {
    [
        MessageType::FollowUp,
        MessageType::Announce,
        MessageType::DelayResp,
        MessageType::MgmtSet,
    ]
    .into_iter()
    .map(|t| accepted_attack_frames(log, t))
    .sum()
}

fn final_offset_ms(r: &RunResult, name: &str) -> f64 {
    let (_, ns) = r.summary.final_offsets_ns.iter().find(|(n, _)| n == name).unwrap();
    *ns as f64 / 1e6
}

fn inversion(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts = |n: i64| Timestamp::from_nanos(n).unwrap();
    let start = Instant::now();
    let mut exact = 0u32;
    for _ in 0..100_000 {
        let offset = rng.gen_range(-1_000_000_000i64..=1_000_000_000);
        let delay = rng.gen_range(0i64..=10_000_000);
        let t1 = 1_700_000_000_000_000_000 + rng.gen_range(0i64..1_000_000_000_000);
        let t2 = t1 + delay + offset;
        let t3 = t2 + rng.gen_range(0i64..1_000_000_000);
        let t4 = t3 + delay - offset;
        let s = ExchangeSample { t1: ts(t1), t2: ts(t2), t3: ts(t3), t4: ts(t4) };
        if compute_offset(&s) == Ok(offset) && compute_delay(&s) == Ok(delay) {
            exact += 1;
        }
    }
    let took = start.elapsed();
    rep.line(
        "inversion",
        exact == 100_000 && took < Duration::from_secs(1),
        format!("{exact}/100000 exact in {took:.2?}"),
    );
}

fn session16_binomial() -> (u64, u64, f64, f64) {
    let mut cfg = bundled("network_spoof_binding");
    cfg.name = "session16_blind_spoof".into();
    cfg.security = ptpsec::node::SecurityMode::Session16;
    cfg.horizon_s = 45.0;
    let adv = cfg.adversary.as_mut().unwrap();
    adv.start_s = 21.0;
    adv.stop_s = Some(41.0);
    set_param(&mut cfg, "ids", "random");
    set_param(&mut cfg, "rate_pps", 1000.0);
    set_param(&mut cfg, "phase_ns", 0);
    let r = run(&cfg);
    let (n, k, _) = forged_syncs(&r.log, node(&r.log, "s1"));
    let p = cfg.window as f64 / 65536.0;
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    (n, k, mean, sigma)
}

fn snatch_4096(seed: u64) -> (u64, Option<u64>) {
    let mut cfg = bundled("snatch_session16");
    cfg.name = "snatch_4096".into();
    cfg.seed = seed;
    cfg.session_bits = Some(12);
    cfg.window = 16;
    cfg.horizon_s = 50.0;
    set_param(&mut cfg, "follow_on", 0);
    let r = run(&cfg);
    let probes = r.log.attack_reports.values().next().unwrap()["probes_sent"];
    let (_, _, first) = forged_syncs(&r.log, node(&r.log, "s1"));
    (probes, first)
}

fn matrix(rep: &mut Report) {
    let start = Instant::now();

    let none = run(&bundled("sync_spoof"));
    let binding = run(&bundled("sync_spoof_binding"));
    let binding_forged = accepted_attack_frames(&binding.log, MessageType::Sync)
        + accepted_attack_frames(&binding.log, MessageType::FollowUp);
    rep.line(
        "matrix sync_spoof none/binding",
        none.summary.attack_success && !binding.summary.attack_success && binding_forged == 0,
        format!(
            "none max {:.1} ms, binding accepted {binding_forged} forged frames",
            none.summary.max_abs_offset_after_start_ns as f64 / 1e6
        ),
    );

    let net = run(&bundled("network_spoof_binding"));
    let (n, k, mean, sigma) = session16_binomial();
    rep.line(
        "matrix network spoof binding/session16",
        net.summary.attack_success && n >= 10_000 && (k as f64 - mean).abs() <= 3.0 * sigma,
        format!(
            "binding success {}, session16 accepted {k}/{n} vs {mean:.1} +- {:.1} (3 sigma)",
            net.summary.attack_success,
            3.0 * sigma
        ),
    );

    let s16 = bundled("snatch_session16");
    let snatch = run(&s16);
    let (_, _, first) = forged_syncs(&snatch.log, node(&snatch.log, "s1"));
    let budget = 65536 / s16.window as u64 + s16.window as u64;
    rep.line(
        "matrix snatch session16",
        snatch.summary.attack_success && first.is_some_and(|f| f <= budget),
        format!("captured at probe {first:?} of budget {budget}, success {}", snatch.summary.attack_success),
    );

    let days = snatch_duration_secs(32, 16, 1000.0) / 86_400.0;
    let s32 = run(&bundled("snatch_session32"));
    let (seen, acc, _) = forged_syncs(&s32.log, node(&s32.log, "s1"));
    rep.line(
        "matrix snatch session32",
        days > 3.0 && acc == 0 && !s32.summary.attack_success,
        format!("full pass {days:.1} days at 1000 pps; simulated {seen} probes, {acc} accepted"),
    );

    for attack in ["masquerade", "rogue"] {
        let sym = run(&bundled(&format!("insider_{attack}_symmetric")));
        let pk = run(&bundled(&format!("insider_{attack}_public_key")));
        let blocked = effective_attack_frames(&pk.log);
        rep.line(
            &format!("matrix insider {attack} symmetric/public_key"),
            sym.summary.attack_success && !pk.summary.attack_success && blocked == 0,
            format!(
                "symmetric max {:.1} ms, public_key accepted {blocked} attack frames",
                sym.summary.max_abs_offset_after_start_ns as f64 / 1e6
            ),
        );
    }

    let took = start.elapsed();
    rep.line("matrix runtime", took < Duration::from_secs(60), format!("{took:.2?}"));
}

fn delay_spoof_corridor(rep: &mut Report) {
    let cfg = bundled("delay_spoof");
    let r = run(&cfg);
    let rep_counts = r.log.attack_reports.values().next().unwrap();
    let packets = rep_counts["announce_replays"] + rep_counts["delay_responses"];
    let attack_s = cfg.horizon_s - cfg.adversary.as_ref().unwrap().start_s;
    let off = final_offset_ms(&r, "s1");
    let servo_ok = cfg.servo.max_slew_us_per_s == 500.0 && cfg.servo.panic_threshold_ms == 1000.0;
    rep.line(
        "delay spoof corridor",
        servo_ok && (15.0..=30.0).contains(&off) && packets <= 90 && attack_s == 60.0,
        format!("offset {off:.2} ms after {packets} packets over {attack_s} s"),
    );
}

fn duplicate_master_averaging(rep: &mut Report) {
    let cfg = bundled("duplicate_master");
    let r = run(&cfg);
    let start_ns = (cfg.adversary.as_ref().unwrap().start_s * 1e9) as u64;
    let s1 = node(&r.log, "s1");
    let samples: Vec<_> = r.log.offsets_of(s1).filter(|s| s.time_ns >= start_ns).collect();
    let inside = |ns: i64| (360e6..=440e6).contains(&(ns as f64));
    let settled = samples
        .iter()
        .rposition(|s| !inside(s.true_offset_ns))
        .map_or(Some(start_ns), |i| samples.get(i + 1).map(|s| s.time_ns));
    let within = settled.map(|t| (t - start_ns) as f64 / 1e9);
    rep.line(
        "duplicate master averaging",
        within.is_some_and(|s| s <= 120.0),
        format!("settled after {within:?} s at {:.1} ms", final_offset_ms(&r, "s1")),
    );
}

fn snatch_counts(rep: &mut Report) {
    let space = IdSpace::with_bits(12).unwrap();
    let schedule = snatch_ids(space, 16).count() as u64;
    let mut worst = 0;
    let mut ok = schedule == 255;
    for seed in 1..=8 {
        let (probes, first) = snatch_4096(seed);
        ok &= probes == 255 && first.is_some_and(|f| f <= 255 + 16);
        worst = worst.max(first.unwrap_or(u64::MAX));
    }
    rep.line(
        "snatch cost R=4096 w=16",
        ok,
        format!("{schedule} probes per pass, latest capture at probe {worst} over 8 seeds"),
    );

    let mut cfg = bundled("snatch_session16");
    cfg.name = "naive_sweep_4096".into();
    cfg.session_bits = Some(12);
    cfg.window = 16;
    cfg.horizon_s = 30.0;
    let adv = cfg.adversary.as_mut().unwrap();
    adv.attack = "naive_window_sweep".into();
    adv.params = toml::Table::new();
    set_param(&mut cfg, "master", "gm");
    set_param(&mut cfg, "target", "s1");
    set_param(&mut cfg, "k", 10);
    set_param(&mut cfg, "rate_pps", 1000.0);
    let r = run(&cfg);
    let attempts = r.log.attack_reports.values().next().unwrap()["attempts"];
    rep.line(
        "naive sweep K=10",
        attempts >= 256 * 10,
        format!("{attempts} pairs for a full sweep, {}x the snatch", attempts / 255),
    );
}

fn wire_sizes(rep: &mut Report) {
    let id = ClockIdentity([2, 0, 0, 0xFF, 0xFE, 0, 0, 1]);
    let ann = |ext| {
        let body = AnnounceBody {
            origin_timestamp: Timestamp::ZERO,
            current_utc_offset: 37,
            priority1: 128,
            clock_class: 248,
            clock_accuracy: 0xFE,
            offset_scaled_log_variance: 0xFFFF,
            priority2: 128,
            grandmaster_identity: id,
            steps_removed: 0,
            time_source: 0xA0,
            extension: None,
        };
        let key = KeyPair::from_seed([1; 32]);
        let body = if ext {
            let cert = make_certificate(&body, &key.public_key(), &key);
            AnnounceBody { extension: Some(cert.extension()), ..body }
        } else {
            body
        };
        PtpMessage::new(PtpHeader::new(id, 1), Body::Announce(body))
    };
    let fu = |sig: Option<Signature>| {
        PtpMessage::new(
            PtpHeader::new(id, 1),
            Body::FollowUp(FollowUpBody { precise_origin_timestamp: Timestamp::ZERO, signature: sig }),
        )
    };
    let sizes = [
        encode(&ann(false), WireMode::Baseline).unwrap().len(),
        encode(&ann(true), WireMode::Extended).unwrap().len(),
        encode(&fu(None), WireMode::Baseline).unwrap().len(),
        encode(&fu(Some(Signature::ZERO)), WireMode::Extended).unwrap().len(),
        HEADER_LEN,
    ];
    rep.line(
        "wire sizes",
        sizes == [64, 160, 44, 108, 34],
        format!("announce {}/{}, follow_up {}/{}, header {}", sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]),
    );
}

fn replay(rep: &mut Report) {
    let cfg = bundled("replay_signed");
    let r = run(&cfg);
    let s1 = node(&r.log, "s1");
    let v = r
        .log
        .verdicts_of(s1)
        .find(|v| v.origin == Origin::Adversary && v.msg_type == Some(MessageType::FollowUp));
    let after_ns = cfg.adversary.as_ref().unwrap().params["replay_after_ns"].as_integer().unwrap();
    let windows = after_ns as f64 / 1e9 * 8.0 / cfg.window as f64;
    let ok = v.is_some_and(|v| {
        v.verdict == Verdict::Dropped
            && v.reason == Reason::WindowReject
            && v.gates.crypto == Some(true)
            && v.gates.window == Some(false)
    });
    rep.line(
        "replay",
        ok && windows >= 100.0,
        format!(
            "replayed {windows:.0} windows later: {:?}",
            v.map(|v| (v.verdict, v.reason, v.gates))
        ),
    );
}

fn cert_cache(rep: &mut Report) {
    let mgmt = KeyPair::from_seed([3; 32]);
    let master = KeyPair::from_seed([4; 32]);
    let id = ClockIdentity([2, 0, 0, 0xFF, 0xFE, 0, 0, 1]);
    let mut body = AnnounceBody {
        origin_timestamp: Timestamp::ZERO,
        current_utc_offset: 37,
        priority1: 10,
        clock_class: 6,
        clock_accuracy: 0x21,
        offset_scaled_log_variance: 0x4E5D,
        priority2: 128,
        grandmaster_identity: id,
        steps_removed: 0,
        time_source: 0x20,
        extension: None,
    };
    body.extension = Some(make_certificate(&body, &master.public_key(), &mgmt).extension());
    let mut verifier = CertificateVerifier::new(mgmt.public_key());
    let verified = (0..100)
        .filter(|_| verifier.check(id, &body) == CertVerdict::Verified(master.public_key()))
        .count();

    let r = run(&bundled("telecom_128hz"));
    let per_node: Vec<u64> = r
        .nodes
        .iter()
        .filter(|n| n.name() != "gm")
        .map(|n| n.certificate_verifications())
        .collect();
    rep.line(
        "certificate cache",
        verified == 100 && verifier.verifications() == 1 && per_node.iter().all(|&v| v == 1),
        format!(
            "100 announces, {} verification; simulated slaves {per_node:?}",
            verifier.verifications()
        ),
    );
}

fn crypto(rep: &mut Report) {
    let b = benchmark_crypto(1000).unwrap();
    let (sign_ms, verify_ms) = (b.sign_median_ns as f64 / 1e6, b.verify_median_ns as f64 / 1e6);
    rep.line(
        "crypto bench",
        sign_ms < 2.0 && verify_ms < 2.0,
        format!("sign {sign_ms:.4} ms, verify {verify_ms:.4} ms median"),
    );

    // ten seconds of 128 Hz traffic, signed and verified back to back
    let key = KeyPair::from_seed([5; 32]);
    let id = ClockIdentity([2, 0, 0, 0xFF, 0xFE, 0, 0, 1]);
    let start = Instant::now();
    let mut good = 0;
    for seq in 0..1280u32 {
        let mut m = PtpMessage::new(
            PtpHeader::new(id, seq),
            Body::FollowUp(FollowUpBody {
                precise_origin_timestamp: Timestamp::from_nanos(seq as i64 * 7_812_500).unwrap(),
                signature: Some(Signature::ZERO),
            }),
        );
        let sig = sign_followup(&m, &key).unwrap();
        if let Body::FollowUp(f) = &mut m.body {
            f.signature = Some(sig);
        }
        good += verify_followup(&m, &key.public_key()) as u32;
    }
    let took = start.elapsed();

    let r = run(&bundled("telecom_128hz"));
    let s1 = node(&r.log, "s1");
    let fus = r
        .log
        .verdicts_of(s1)
        .filter(|v| v.msg_type == Some(MessageType::FollowUp))
        .collect::<Vec<_>>();
    let accepted = fus.iter().filter(|v| v.verdict == Verdict::Accepted).count();
    rep.line(
        "128 Hz signed follow_up",
        good == 1280 && took < Duration::from_secs(10) && accepted == fus.len() && accepted >= 128 * 29,
        format!(
            "1280 sign+verify in {took:.2?} (budget 10 s); simulated {accepted}/{} accepted, cpu share {:.4}",
            fus.len(),
            b.sign_cpu_share(128)
        ),
    );
}

fn determinism(rep: &mut Report) {
    let mut diverged = Vec::new();
    for (name, _) in scenario::BUNDLED {
        let cfg = bundled(name);
        let csv = |r: &RunResult| {
            let mut a = Vec::new();
            let mut b = Vec::new();
            scenario::write_offsets_csv(&r.log, &mut a).unwrap();
            scenario::write_verdicts_csv(&r.log, &mut b).unwrap();
            (a, b)
        };
        if csv(&run(&cfg)) != csv(&run(&cfg)) {
            diverged.push(*name);
        }
    }
    rep.line(
        "determinism",
        diverged.is_empty(),
        format!("{} scenarios, diverged {diverged:?}", scenario::BUNDLED.len()),
    );
}

fn main() {
    let mut rep = Report { failed: 0 };
    inversion(&mut rep);
    matrix(&mut rep);
    delay_spoof_corridor(&mut rep);
    duplicate_master_averaging(&mut rep);
    snatch_counts(&mut rep);
    wire_sizes(&mut rep);
    replay(&mut rep);
    cert_cache(&mut rep);
    crypto(&mut rep);
    determinism(&mut rep);
    if rep.failed > 0 {
        println!("{} criteria failed", rep.failed);
        std::process::exit(1);
    }
}
