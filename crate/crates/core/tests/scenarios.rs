use ptpsec::node::{Reason, Verdict};
use ptpsec::scenario::{self, RunResult};
use ptpsec::simnet::Origin;
use ptpsec::wire::MessageType;

fn run(name: &str) -> RunResult {
    scenario::run(&scenario::bundled(name).unwrap()).unwrap()
}

fn final_ms(r: &RunResult, node: &str) -> f64 {
    r.summary.final_offsets_ns.iter().find(|(n, _)| n == node).unwrap().1 as f64 / 1e6
}

fn drops(r: &RunResult, reason: Reason) -> u64 {
    r.summary.drops_by_reason.get(reason.as_str()).copied().unwrap_or(0)
}

#[test]
fn baseline_converges_and_conserves_frames() {
    let r = run("baseline");
    assert!(!r.summary.attack_success);
    for (name, ns) in &r.summary.final_offsets_ns {
        assert!(ns.abs() < 100_000, "{name} at {ns} ns");
    }
    assert!(r.summary.conservation.balanced());
}

#[test]
fn binding_stops_delay_spoof() {
    let r = run("delay_spoof_binding");
    assert!(!r.summary.attack_success);
    assert!(drops(&r, Reason::BindingMismatch) > 0);
    assert!(final_ms(&r, "s1").abs() < 1.0);
}

#[test]
fn rogue_master_time_spreads_through_the_grandmaster() {
    let r = run("rogue_master");
    // the original grandmaster followed the rogue and keeps serving its time
    for node in ["gm", "s1", "s2"] {
        assert!((final_ms(&r, node) - 2000.0).abs() < 1.0, "{node}");
    }
    let gm = r.nodes.iter().find(|n| n.name() == "gm").unwrap();
    assert!(gm.stats().role_changes >= 2);
}

#[test]
fn proxy_grandmaster_needs_a_whitelisted_address() {
    let open = run("proxy_gm_open");
    let closed = run("proxy_gm_whitelist");
    let spoofed = run("proxy_gm_whitelist_spoofed");
    assert!(open.summary.attack_success);
    assert!(!closed.summary.attack_success);
    assert!(drops(&closed, Reason::NotWhitelisted) > 0);
    assert!(spoofed.summary.attack_success);
    assert!((final_ms(&open, "s1") - 5000.0).abs() < 1.0);
}

#[test]
fn mitm_delay_shifts_by_half_the_asymmetry() {
    let r = run("mitm_asymmetry");
    let off = final_ms(&r, "s1");
    assert!((-2.6..=-2.4).contains(&off), "{off}");
    // signatures were intact throughout
    let s1 = r.log.node_index("s1").unwrap();
    assert!(r
        .log
        .verdicts_of(s1)
        .filter(|v| v.msg_type == Some(MessageType::FollowUp))
        .all(|v| v.verdict == Verdict::Accepted));
}

#[test]
fn snatch_leaves_the_real_master_outside_the_window() {
    let r = run("snatch_session16");
    let s1 = r.log.node_index("s1").unwrap();
    let honest_dropped = r
        .log
        .verdicts_of(s1)
        .filter(|v| v.origin == Origin::Honest && v.msg_type == Some(MessageType::Sync))
        .filter(|v| v.verdict == Verdict::Dropped && v.reason == Reason::WindowReject)
        .count();
    assert!(honest_dropped > 0);
    assert!((final_ms(&r, "s1") - 30_000.0).abs() < 1.0);
}
