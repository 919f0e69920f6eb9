//! Flat best-master-clock comparison and election.

use std::cmp::Ordering;

use crate::identity::NetworkAddress;
use crate::wire::{AnnounceBody, ClockIdentity};

/// Announce intervals without news before a foreign master is forgotten.
pub const ANNOUNCE_TIMEOUT_INTERVALS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertState {
    Unverified,
    Verified,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForeignMasterRecord {
    pub source: ClockIdentity,
    pub announce: AnnounceBody,
    pub source_addr: NetworkAddress,
    pub last_seen: u64,
    pub cert_state: CertState,
}

fn dataset_key(a: &AnnounceBody) -> (u8, u8, u8, u16, u8, ClockIdentity) {
    (
        a.priority1,
        a.clock_class,
        a.clock_accuracy,
        a.offset_scaled_log_variance,
        a.priority2,
        a.grandmaster_identity,
    )
}

/// `Less` means `a` is the better clock. Lexicographic on priority1, clock
/// class, accuracy, variance, priority2, then grandmaster identity.
pub fn bmc_compare(a: &AnnounceBody, b: &AnnounceBody) -> Ordering {
    dataset_key(a).cmp(&dataset_key(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Master,
    Slave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Election {
    pub role: Role,
    pub chosen_master: Option<ClockIdentity>,
}

/// Picks the best eligible record and compares it with the local dataset.
/// With `require_certs` only records whose certificate verified compete.
/// Records are expected to be fresh; see [`is_fresh`].
pub fn run_election<'a>(
    records: impl IntoIterator<Item = &'a ForeignMasterRecord>,
    own: &AnnounceBody,
    require_certs: bool,
) -> Election {
    let best = records
        .into_iter()
        .filter(|r| !require_certs || r.cert_state == CertState::Verified)
        .filter(|r| r.announce.grandmaster_identity != own.grandmaster_identity)
        .min_by(|a, b| bmc_compare(&a.announce, &b.announce).then(a.source.cmp(&b.source)));
    match best {
        Some(r) if bmc_compare(&r.announce, own) == Ordering::Less => Election {
            role: Role::Slave,
            chosen_master: Some(r.source),
        },
        _ => Election {
            role: Role::Master,
            chosen_master: None,
        },
    }
}

pub fn is_fresh(record: &ForeignMasterRecord, now: u64, announce_interval_ns: u64) -> bool {
    now.saturating_sub(record.last_seen) <= ANNOUNCE_TIMEOUT_INTERVALS * announce_interval_ns
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Timestamp;

    fn body(p1: u8, class: u8, id: u8) -> AnnounceBody {
        AnnounceBody {
            origin_timestamp: Timestamp::ZERO,
            current_utc_offset: 37,
            priority1: p1,
            clock_class: class,
            clock_accuracy: 0x21,
            offset_scaled_log_variance: 0x4E5D,
            priority2: 128,
            grandmaster_identity: ClockIdentity([0, 0, 0, 0xFF, 0xFE, 0, 0, id]),
            steps_removed: 0,
            time_source: 0xA0,
            extension: None,
        }
    }

    fn record(b: AnnounceBody, cert_state: CertState) -> ForeignMasterRecord {
        ForeignMasterRecord {
            source: b.grandmaster_identity,
            announce: b,
            source_addr: NetworkAddress::Ipv4([10, 0, 0, b.grandmaster_identity.0[7]]),
            last_seen: 0,
            cert_state,
        }
    }

    #[test]
    fn priority1_dominates() {
        assert_eq!(bmc_compare(&body(0, 248, 9), &body(128, 6, 1)), Ordering::Less);
    }

    #[test]
    fn identity_breaks_ties() {
        assert_eq!(bmc_compare(&body(128, 6, 1), &body(128, 6, 2)), Ordering::Less);
        assert_eq!(bmc_compare(&body(128, 6, 2), &body(128, 6, 2)), Ordering::Equal);
    }

    #[test]
    fn atomic_rogue_beats_ordinary_clock() {
        let mut rogue = body(0, 6, 66);
        rogue.time_source = 0x10; // ATOMIC_CLOCK
        rogue.clock_accuracy = 0x20;
        rogue.priority2 = 0;
        let honest = body(128, 248, 1);
        assert_eq!(bmc_compare(&rogue, &honest), Ordering::Less);
        let e = run_election([&record(rogue, CertState::Unverified)], &honest, false);
        assert_eq!(e.role, Role::Slave);
        assert_eq!(e.chosen_master, Some(rogue.grandmaster_identity));
    }

    #[test]
    fn no_records_means_master() {
        let e = run_election(std::iter::empty(), &body(128, 248, 1), true);
        assert_eq!(e, Election { role: Role::Master, chosen_master: None });
    }

    #[test]
    fn rejected_certificate_cannot_win() {
        let honest = record(body(128, 6, 1), CertState::Verified);
        let rogue = record(body(0, 6, 66), CertState::Rejected);
        let own = body(128, 248, 5);
        let e = run_election([&honest, &rogue], &own, true);
        assert_eq!(e.chosen_master, Some(honest.source));
        let e = run_election([&honest, &rogue], &own, false);
        assert_eq!(e.chosen_master, Some(rogue.source));
    }

    #[test]
    fn own_echo_ignored() {
        let own = body(128, 6, 1);
        let e = run_election([&record(own, CertState::Verified)], &own, false);
        assert_eq!(e.role, Role::Master);
    }

    #[test]
    fn freshness_window() {
        let r = record(body(1, 1, 1), CertState::Verified);
        assert!(is_fresh(&r, 3_000, 1_000));
        assert!(!is_fresh(&r, 3_001, 1_000));
    }
}
