//! Four-timestamp delay/offset arithmetic, the slave servo and the
//! simulated node clock. Everything is integer nanoseconds.

use thiserror::Error;

use crate::wire::Timestamp;

pub const NANOS_PER_SEC: i64 = 1_000_000_000;

/// PTP time of simulation instant zero. Keeps every clock reading positive
/// even after an attacker drags a clock years into the past.
pub const SIM_EPOCH_PTP_NS: i64 = 1_700_000_000 * NANOS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TimeMathError {
    #[error("arithmetic overflow in timestamp math")]
    ArithmeticOverflow,
}

/// t1 master send, t2 slave receive, t3 slave send, t4 master receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeSample {
    pub t1: Timestamp,
    pub t2: Timestamp,
    pub t3: Timestamp,
    pub t4: Timestamp,
}

impl ExchangeSample {
    fn legs(&self) -> Result<(i64, i64), TimeMathError> {
        let ns = |t: &Timestamp| t.to_nanos().ok_or(TimeMathError::ArithmeticOverflow);
        let ms = ns(&self.t2)?
            .checked_sub(ns(&self.t1)?)
            .ok_or(TimeMathError::ArithmeticOverflow)?;
        let sm = ns(&self.t4)?
            .checked_sub(ns(&self.t3)?)
            .ok_or(TimeMathError::ArithmeticOverflow)?;
        Ok((ms, sm))
    }
}

/// Mean path delay `((t2 - t1) + (t4 - t3)) / 2`, truncated toward zero.
pub fn compute_delay(s: &ExchangeSample) -> Result<i64, TimeMathError> {
    let (ms, sm) = s.legs()?;
    ms.checked_add(sm)
        .map(|sum| sum / 2)
        .ok_or(TimeMathError::ArithmeticOverflow)
}

/// Slave offset from master `((t2 - t1) - (t4 - t3)) / 2`, truncated toward
/// zero. Positive means the slave clock is ahead.
pub fn compute_offset(s: &ExchangeSample) -> Result<i64, TimeMathError> {
    let (ms, sm) = s.legs()?;
    ms.checked_sub(sm)
        .map(|diff| diff / 2)
        .ok_or(TimeMathError::ArithmeticOverflow)
}

/// Per-sync offset `(t2 - t1) - delay` against a previously measured mean
/// path delay. Equals [`compute_offset`] when all four timestamps come from
/// the same exchange.
pub fn offset_from_path_delay(t1: i64, t2: i64, delay: i64) -> i64 {
    t2.saturating_sub(t1).saturating_sub(delay)
}

/// Proportional gain expressed in parts per million, in `(0, 1_000_000]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gain(u32);

impl Gain {
    pub const ONE: Gain = Gain(1_000_000);

    pub fn from_ppm(ppm: u32) -> Option<Self> {
        (ppm > 0 && ppm <= 1_000_000).then_some(Self(ppm))
    }

    pub fn from_f64(g: f64) -> Option<Self> {
        if !(g > 0.0 && g <= 1.0) {
            return None;
        }
        Self::from_ppm((g * 1e6).round() as u32)
    }

    pub fn ppm(self) -> u32 {
        self.0
    }

    fn apply(self, v: i64) -> i64 {
        (v as i128 * self.0 as i128 / 1_000_000) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServoAction {
    /// Clock jumped by `correction` ns.
    Step { correction: i64 },
    /// Clock slewed by `correction` ns (bounded by the slew cap).
    Slew { correction: i64 },
    /// Delay measurement over the configured limit; nothing changed.
    RejectDelay,
}

impl ServoAction {
    pub fn correction(&self) -> i64 {
        match *self {
            ServoAction::Step { correction } | ServoAction::Slew { correction } => correction,
            ServoAction::RejectDelay => 0,
        }
    }
}

/// Gain-capped proportional servo with the panic (step) and slew thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServoState {
    /// Total offset the servo has removed from the clock so far.
    pub current_offset: i64,
    /// Held constant; frequency discipline is not modelled.
    pub rate_adjust_ppb: i64,
    pub gain: Gain,
    pub panic_threshold_ns: i64,
    pub max_slew_ns_per_s: i64,
    pub max_delay_ns: Option<i64>,
}

impl Default for ServoState {
    fn default() -> Self {
        Self {
            current_offset: 0,
            rate_adjust_ppb: 0,
            gain: Gain(100_000),
            panic_threshold_ns: NANOS_PER_SEC,
            max_slew_ns_per_s: 500_000,
            max_delay_ns: None,
        }
    }
}

impl ServoState {
    /// Whether a path-delay measurement passes the delay filter.
    pub fn delay_acceptable(&self, delay: i64) -> bool {
        self.max_delay_ns.is_none_or(|limit| delay <= limit)
    }

    pub fn update(&self, measured_offset: i64, measured_delay: i64, elapsed_ns: u64) -> (ServoState, ServoAction) {
        servo_update(self, measured_offset, measured_delay, elapsed_ns)
    }
}

pub fn servo_update(
    state: &ServoState,
    measured_offset: i64,
    measured_delay: i64,
    elapsed_ns: u64,
) -> (ServoState, ServoAction) {
    if !state.delay_acceptable(measured_delay) {
        return (*state, ServoAction::RejectDelay);
    }
    let mut next = *state;
    if measured_offset.unsigned_abs() > state.panic_threshold_ns.unsigned_abs() {
        next.current_offset = next.current_offset.saturating_add(measured_offset);
        return (
            next,
            ServoAction::Step {
                correction: measured_offset.saturating_neg(),
            },
        );
    }
    let cap = (state.max_slew_ns_per_s as i128 * elapsed_ns as i128 / NANOS_PER_SEC as i128)
        .min(i64::MAX as i128) as i64;
    let movement = state.gain.apply(measured_offset).clamp(-cap, cap);
    next.current_offset = next.current_offset.saturating_add(movement);
    (next, ServoAction::Slew { correction: -movement })
}

/// A node's free-running clock in simulation time.
///
/// `read(t)` is the local PTP time at simulation instant `t`; the
/// ground-truth error is `read(t) - (SIM_EPOCH_PTP_NS + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    offset_at_ref: i64,
    ref_time: u64,
    drift_ppb: i64,
}

impl SimClock {
    pub fn new(initial_offset_ns: i64, drift_ppb: i64) -> Self {
        Self {
            offset_at_ref: initial_offset_ns,
            ref_time: 0,
            drift_ppb,
        }
    }

    pub fn offset_at(&self, now: u64) -> i64 {
        let dt = now.saturating_sub(self.ref_time) as i128;
        self.offset_at_ref
            .saturating_add((self.drift_ppb as i128 * dt / NANOS_PER_SEC as i128) as i64)
    }

    pub fn read(&self, now: u64) -> i64 {
        SIM_EPOCH_PTP_NS
            .saturating_add(now as i64)
            .saturating_add(self.offset_at(now))
    }

    pub fn timestamp(&self, now: u64) -> Timestamp {
        Timestamp::from_nanos(self.read(now).max(0)).unwrap_or(Timestamp::ZERO)
    }

    pub fn adjust(&mut self, now: u64, delta: i64) {
        self.offset_at_ref = self.offset_at(now).saturating_add(delta);
        self.ref_time = now;
    }

    /// Sets the local time outright (management SET_TIME).
    pub fn set_time(&mut self, now: u64, ptp_ns: i64) {
        self.offset_at_ref = ptp_ns - SIM_EPOCH_PTP_NS - now as i64;
        self.ref_time = now;
    }
}
