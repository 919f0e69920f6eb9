//! Sequence-ID session semantics: random initial counters, the acceptance
//! window that advances on accept, and delay-request challenges.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use thiserror::Error;

use crate::rng::SimRng;
use crate::wire::MessageType;

/// A power-of-two sequence ID space of 1..=32 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IdSpace(u8);

impl IdSpace {
    pub const BITS16: IdSpace = IdSpace(16);
    pub const BITS32: IdSpace = IdSpace(32);

    pub fn with_bits(bits: u8) -> Option<Self> {
        (1..=32).contains(&bits).then_some(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Number of distinct IDs, `2^bits`.
    pub fn size(self) -> u64 {
        1u64 << self.0
    }

    fn mask(self) -> u64 {
        self.size() - 1
    }

    pub fn wrap(self, v: u64) -> u32 {
        (v & self.mask()) as u32
    }

    /// `(a - b) mod size`.
    pub fn distance(self, from: u32, to: u32) -> u64 {
        (to as u64).wrapping_sub(from as u64) & self.mask()
    }

    pub fn random<R: RngCore + ?Sized>(self, rng: &mut R) -> u32 {
        self.wrap(rng.next_u64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("window size {size} outside [1, {max}]")]
    BadSize { size: u32, max: u64 },
    #[error("expected id {0} outside the id space")]
    BadExpected(u32),
}

/// The contiguous, modular range `[expected, expected + size)` of IDs a
/// receiver accepts from one (master, message type) session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceWindow {
    expected: u32,
    size: u32,
    space: IdSpace,
}

pub const DEFAULT_WINDOW: u32 = 50;

impl SequenceWindow {
    pub fn new(expected: u32, size: u32, space: IdSpace) -> Result<Self, WindowError> {
        let max = space.size() / 2;
        if size == 0 || size as u64 > max {
            return Err(WindowError::BadSize { size, max });
        }
        if expected as u64 >= space.size() {
            return Err(WindowError::BadExpected(expected));
        }
        Ok(Self {
            expected,
            size,
            space,
        })
    }

    /// Window opened by the first accepted message of a session.
    pub fn after(first_id: u32, size: u32, space: IdSpace) -> Result<Self, WindowError> {
        Self::new(space.wrap(first_id as u64 + 1), size, space)
    }

    pub fn expected(&self) -> u32 {
        self.expected
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn space(&self) -> IdSpace {
        self.space
    }

    /// Membership test without advancing.
    pub fn contains(&self, received: u32) -> bool {
        (received as u64) < self.space.size()
            && self.space.distance(self.expected, received) < self.size as u64
    }

    /// Accept-and-advance: on accept the window restarts at `received + 1`,
    /// on reject it is returned unchanged.
    pub fn accept(&self, received: u32) -> (bool, SequenceWindow) {
        if self.contains(received) {
            let mut next = *self;
            next.expected = self.space.wrap(received as u64 + 1);
            (true, next)
        } else {
            (false, *self)
        }
    }

    /// In-place form of [`SequenceWindow::accept`].
    pub fn advance(&mut self, received: u32) -> bool {
        let (ok, next) = self.accept(received);
        *self = next;
        ok
    }
}

/// Initial value of a master counter drawn uniformly from the ID space.
pub fn init_counter(seed: u64, space: IdSpace) -> u32 {
    let mut rng = SimRng::seed_from_u64(seed);
    space.random(&mut rng)
}

/// Outstanding challenges, at most one per message type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChallengeState {
    outstanding: BTreeMap<MessageType, u32>,
}

impl ChallengeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a fresh uniformly random challenge for `ty`, replacing any
    /// previous one.
    pub fn issue<R: Rng + ?Sized>(&mut self, ty: MessageType, rng: &mut R, space: IdSpace) -> u32 {
        let id = space.random(rng);
        self.outstanding.insert(ty, id);
        id
    }

    /// Records a caller-chosen ID (sequential counters in unsecured modes).
    pub fn issue_fixed(&mut self, ty: MessageType, id: u32) {
        self.outstanding.insert(ty, id);
    }

    pub fn outstanding(&self, ty: MessageType) -> Option<u32> {
        self.outstanding.get(&ty).copied()
    }

    /// Accepts iff `echoed` equals the outstanding challenge; clears it on
    /// accept so the same echo cannot be used twice.
    pub fn check(&mut self, ty: MessageType, echoed: u32) -> bool {
        match self.outstanding.get(&ty) {
            Some(&id) if id == echoed => {
                self.outstanding.remove(&ty);
                true
            }
            _ => false,
        }
    }
}

pub fn issue_challenge<R: Rng + ?Sized>(
    state: &mut ChallengeState,
    ty: MessageType,
    rng: &mut R,
    space: IdSpace,
) -> u32 {
    state.issue(ty, rng, space)
}

pub fn check_challenge(state: &mut ChallengeState, ty: MessageType, echoed: u32) -> bool {
    state.check(ty, echoed)
}

/// The blind snatch probe sequence: `i * w + (w - 1)` for `i` in
/// `0 .. R / w - 1`.
pub fn snatch_ids(space: IdSpace, window: u32) -> impl Iterator<Item = u32> {
    let blocks = space.size() / window as u64;
    let w = window as u64;
    (0..blocks.saturating_sub(1)).map(move |i| (i * w + w - 1) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(expected: u32, size: u32, space: IdSpace) -> SequenceWindow {
        SequenceWindow::new(expected, size, space).unwrap()
    }

    #[test]
    fn accept_advances() {
        let w = win(100, 50, IdSpace::BITS16);
        let (ok, next) = w.accept(120);
        assert!(ok);
        assert_eq!(next.expected(), 121);
    }

    #[test]
    fn upper_boundary_rejects() {
        let w = win(100, 50, IdSpace::BITS16);
        assert!(w.accept(149).0);
        let (ok, next) = w.accept(150);
        assert!(!ok);
        assert_eq!(next, w);
        assert!(!w.accept(99).0);
    }

    #[test]
    fn wraps_modulo_space() {
        // brute-force the accepted set for expected = 65530, w = 50
        let w = win(65530, 50, IdSpace::BITS16);
        let accepted: Vec<u32> = (0..65536u32).filter(|&id| w.contains(id)).collect();
        let mut want: Vec<u32> = (65530..65536).chain(0..44).collect();
        want.sort();
        assert_eq!(accepted, want);
        let (ok, next) = w.accept(10);
        assert!(ok);
        assert_eq!(next.expected(), 11);
    }

    #[test]
    fn construction_limits() {
        assert!(SequenceWindow::new(0, 0, IdSpace::BITS16).is_err());
        assert!(SequenceWindow::new(0, 32769, IdSpace::BITS16).is_err());
        assert!(SequenceWindow::new(65536, 10, IdSpace::BITS16).is_err());
        assert!(SequenceWindow::new(0, 32768, IdSpace::BITS16).is_ok());
        assert!(IdSpace::with_bits(0).is_none());
        assert!(IdSpace::with_bits(33).is_none());
        assert_eq!(SequenceWindow::after(u32::MAX, 16, IdSpace::BITS32).unwrap().expected(), 0);
    }

    #[test]
    fn out_of_space_id_rejected() {
        let w = win(0, 16, IdSpace::with_bits(12).unwrap());
        assert!(!w.contains(4096));
    }

    #[test]
    fn counter_is_reproducible() {
        assert_eq!(
            init_counter(99, IdSpace::BITS16),
            init_counter(99, IdSpace::BITS16)
        );
        assert!(init_counter(99, IdSpace::BITS16) < 65536);
    }

    #[test]
    fn challenges() {
        let mut rng = SimRng::seed_from_u64(3);
        let mut st = ChallengeState::new();
        assert!(!check_challenge(&mut st, MessageType::DelayResp, 5));
        let id = issue_challenge(&mut st, MessageType::DelayResp, &mut rng, IdSpace::BITS32);
        assert!(!st.check(MessageType::DelayResp, id.wrapping_add(1)));
        assert!(st.check(MessageType::DelayResp, id));
        // cleared after use
        assert!(!st.check(MessageType::DelayResp, id));
    }

    #[test]
    fn snatch_sequence_shape() {
        let ids: Vec<u32> = snatch_ids(IdSpace::BITS16, 50).collect();
        assert_eq!(ids.len(), 1309);
        assert_eq!(ids[0], 49);
        assert!(ids.windows(2).all(|p| p[1] - p[0] == 50));
        assert_eq!(snatch_ids(IdSpace::with_bits(12).unwrap(), 16).count(), 255);
    }
}
