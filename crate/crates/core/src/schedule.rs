//! Closed-form scheduling and confidence functions shared by every player.
//!
//! Everything here is a pure function of `(n, ConfidenceParams)`:
//!
//! * `conf_log(n)    = ln(4 n² M K / δ)`, the log factor of the confidence width
//! * `conf_width(n)  = sqrt(2 conf_log(n) / n)`, the Hoeffding width after n pulls
//! * `lil_bound(n,δ') = 2 ln ln(2n) + ln(5.2/δ')`, the iterated-logarithm boundary
//! * `comm_block_len`, the per-arm length of one communication block: the smallest
//!   integer m with `m / lil_bound(m, δ/(4K²M)) ≥ 24 sqrt(s / (2 conf_log(s)))`
//!   where s is the per-arm pull count
//! * power-trigger predicates over `floor(s / conf_log(s))`, used to line up
//!   communicating and listening players without a shared clock
//! * boundary thresholds past which the above functions are monotone enough
//!   for the trigger arithmetic to be reliable.

use serde::{Deserialize, Serialize};

/// Base of the synchronization code. Trigger cycles fire when
/// `floor(s / conf_log(s))` first reaches a power of this base; the width-9
/// trigger window guarantees exactly one power lands in it.
pub const TRIGGER_BASE: u64 = 9;

/// Largest admissible `delta` without an explicit override.
pub const DELTA_STRICT_MAX: f64 = 1.0 / 162.0;

/// Hard cap on `delta` even with an override; past this the ratio
/// `s / conf_log(s)` is no longer increasing from s = 1 and the trigger
/// arithmetic breaks down.
pub const DELTA_OVERRIDE_MAX: f64 = 0.5;

/// Scan cap for `comm_block_len` (values of m).
pub const BLOCK_LEN_SCAN_CAP: u64 = 1_000_000_000;

/// Scan cap for boundary-threshold searches (in cycles).
pub const BOUNDARY_SCAN_CAP: u64 = 10_000_000;

/// Stability window: a threshold is declared once this many consecutive
/// indices satisfy the condition. The underlying ratios are eventually
/// monotone, so a long window stands in for the "for all n ≥ …" quantifier.
pub const STABILITY_WINDOW: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleError {
    ZeroPulls,
    BadDelta(f64),
    BadCounts { players: u32, arms: u32 },
    NotMultipleOfArms { t: u64, arms: u32 },
    ScanCapExceeded { cap: u64, what: &'static str },
}

impl std::fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleError::ZeroPulls => write!(f, "pull count must be at least 1"),
            ScheduleError::BadDelta(d) => write!(f, "delta {d} outside admissible range"),
            ScheduleError::BadCounts { players, arms } => {
                write!(f, "need 1 <= players ({players}) <= arms ({arms}) and arms >= 2")
            }
            ScheduleError::NotMultipleOfArms { t, arms } => {
                write!(f, "round {t} is not a multiple of the arm count {arms}")
            }
            ScheduleError::ScanCapExceeded { cap, what } => {
                write!(f, "{what} scan exceeded cap {cap}")
            }
        }
    }
}

impl std::error::Error for ScheduleError {}

/// Shared constants of one problem instance: player count M, arm count K and
/// the failure probability delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    num_players: u32,
    num_arms: u32,
    delta: f64,
}

impl ConfidenceParams {
    /// Strict constructor: requires `delta <= 1/162`, the regime every
    /// downstream threshold lemma assumes.
    pub fn new(num_players: u32, num_arms: u32, delta: f64) -> Result<Self, ScheduleError> {
        if !(delta > 0.0 && delta <= DELTA_STRICT_MAX) {
            return Err(ScheduleError::BadDelta(delta));
        }
        Self::check_counts(num_players, num_arms)?;
        Ok(ConfidenceParams { num_players, num_arms, delta })
    }

    /// Relaxed constructor for runs that explicitly acknowledge leaving the
    /// analyzed regime. Still capped so the trigger ratio stays monotone.
    pub fn with_relaxed_delta(
        num_players: u32,
        num_arms: u32,
        delta: f64,
    ) -> Result<Self, ScheduleError> {
        if !(delta > 0.0 && delta < DELTA_OVERRIDE_MAX) {
            return Err(ScheduleError::BadDelta(delta));
        }
        Self::check_counts(num_players, num_arms)?;
        Ok(ConfidenceParams { num_players, num_arms, delta })
    }

    fn check_counts(num_players: u32, num_arms: u32) -> Result<(), ScheduleError> {
        if num_players < 1 || num_arms < 2 || num_players > num_arms {
            return Err(ScheduleError::BadCounts { players: num_players, arms: num_arms });
        }
        Ok(())
    }

    pub fn num_players(&self) -> u32 {
        self.num_players
    }

    pub fn num_arms(&self) -> u32 {
        self.num_arms
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `4 M K / delta`, the constant inside `conf_log`.
    fn log_const(&self) -> f64 {
        4.0 * self.num_players as f64 * self.num_arms as f64 / self.delta
    }

    /// Failure budget of a single communication block test: `δ / (4 K² M)`.
    pub fn block_test_delta(&self) -> f64 {
        self.delta / (4.0 * (self.num_arms as f64).powi(2) * self.num_players as f64)
    }
}

/// `ln(4 n² M K / δ)` for n >= 1 pulls.
pub fn conf_log(n: u64, p: &ConfidenceParams) -> f64 {
    debug_assert!(n >= 1);
    (p.log_const()).ln() + 2.0 * (n as f64).ln()
}

/// Checked variant of [`conf_log`].
pub fn conf_log_checked(n: u64, p: &ConfidenceParams) -> Result<f64, ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::ZeroPulls);
    }
    Ok(conf_log(n, p))
}

/// Confidence interval diameter after n pulls: `sqrt(2 conf_log(n) / n)`.
pub fn conf_width(n: u64, p: &ConfidenceParams) -> f64 {
    debug_assert!(n >= 1);
    (2.0 * conf_log(n, p) / n as f64).sqrt()
}

/// Checked variant of [`conf_width`].
pub fn conf_width_checked(n: u64, p: &ConfidenceParams) -> Result<f64, ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::ZeroPulls);
    }
    Ok(conf_width(n, p))
}

/// Iterated-logarithm boundary `2 ln ln(2n) + ln(5.2 / δ')`.
pub fn lil_bound(n: u64, delta_prime: f64) -> f64 {
    debug_assert!(n >= 1);
    debug_assert!(delta_prime > 0.0);
    2.0 * (2.0 * n as f64).ln().ln() + (5.2 / delta_prime).ln()
}

/// Per-arm block length for a communication starting when every arm has
/// `pulls` samples: smallest m with
/// `m / lil_bound(m, δ/(4K²M)) >= 24 sqrt(pulls / (2 conf_log(pulls)))`.
///
/// Forward scan from m = 1; `m / lil_bound(m, ·)` is increasing for the delta
/// range admitted by [`ConfidenceParams`], so the first hit is the minimum.
pub fn comm_block_len_pulls(pulls: u64, p: &ConfidenceParams) -> Result<u64, ScheduleError> {
    if pulls == 0 {
        return Err(ScheduleError::ZeroPulls);
    }
    let target = block_len_target(pulls, p);
    let dp = p.block_test_delta();
    let mut m = 1u64;
    while (m as f64) / lil_bound(m, dp) < target {
        m += 1;
        if m > BLOCK_LEN_SCAN_CAP {
            return Err(ScheduleError::ScanCapExceeded {
                cap: BLOCK_LEN_SCAN_CAP,
                what: "comm_block_len",
            });
        }
    }
    Ok(m)
}

/// Block length as a function of the round index t (a multiple of K); the
/// per-arm pull count is t / K.
pub fn comm_block_len(t: u64, p: &ConfidenceParams) -> Result<u64, ScheduleError> {
    let k = p.num_arms as u64;
    if t == 0 || !t.is_multiple_of(k) {
        return Err(ScheduleError::NotMultipleOfArms { t, arms: p.num_arms });
    }
    comm_block_len_pulls(t / k, p)
}

fn block_len_target(pulls: u64, p: &ConfidenceParams) -> f64 {
    24.0 * (pulls as f64 / (2.0 * conf_log(pulls, p))).sqrt()
}

/// The unique integer exponent a with `base^a` in `[x, base*x)`.
///
/// Existence and uniqueness hold for every positive x over integer exponents
/// (negative for x below 1/base); both are asserted. The protocol itself only
/// consumes x >= 1, where the exponent is nonnegative.
pub fn unique_power_in_interval(x: f64, base: u64) -> i32 {
    assert!(x > 0.0 && x.is_finite(), "x must be positive and finite");
    assert!(base >= 2, "base must be at least 2");
    let hi = base as f64 * x;
    let mut hit: Option<i32> = None;
    for a in -320..=320i32 {
        let pw = (base as f64).powi(a);
        if pw >= x && pw < hi {
            assert!(hit.is_none(), "two powers of {base} in [{x}, {hi})");
            hit = Some(a);
        }
        if pw >= hi {
            break;
        }
    }
    hit.unwrap_or_else(|| panic!("no power of {base} in [{x}, {hi})"))
}

/// `floor(s / conf_log(s))` with a snap guard: values within 1e-9 of an
/// integer are snapped to it before flooring, so trigger cycles do not depend
/// on the platform's last-bit rounding.
pub fn floor_ratio(s: u64, p: &ConfidenceParams) -> u64 {
    debug_assert!(s >= 1);
    floor_ratio_value(s, conf_log(s, p))
}

/// [`floor_ratio`] with the log term already in hand.
#[inline]
pub fn floor_ratio_value(s: u64, conf_log_s: f64) -> u64 {
    let r = s as f64 / conf_log_s;
    let nearest = r.round();
    if (r - nearest).abs() < 1e-9 {
        nearest as u64
    } else {
        r.floor() as u64
    }
}

/// `Some(w)` iff v equals `TRIGGER_BASE^w`, by exact integer arithmetic.
pub fn trigger_power(v: u64) -> Option<u32> {
    if v == 0 {
        return None;
    }
    let mut pw = 1u64;
    let mut w = 0u32;
    loop {
        if pw == v {
            return Some(w);
        }
        if pw > v / TRIGGER_BASE {
            return None;
        }
        pw *= TRIGGER_BASE;
        w += 1;
    }
}

/// Trigger predicate: `Some(w)` iff `floor_ratio(s)` equals `9^w` and the
/// predecessor cycle's floor does not (a fresh crossing). `s = 1` treats the
/// predecessor clause as satisfied.
pub fn power_trigger_cycle(s: u64, p: &ConfidenceParams) -> Option<u32> {
    debug_assert!(s >= 1);
    let prev = if s > 1 { floor_ratio(s - 1, p) } else { u64::MAX };
    power_trigger_from(floor_ratio(s, p), prev)
}

/// [`power_trigger_cycle`] with the current and predecessor floors in hand;
/// pass `u64::MAX` as `prev_floor` when there is no predecessor.
#[inline]
pub fn power_trigger_from(floor: u64, prev_floor: u64) -> Option<u32> {
    let w = trigger_power(floor)?;
    (prev_floor != floor).then_some(w)
}

/// First cycle s whose floor ratio reaches `9^w`. Scan helper used by tests
/// and feasibility analysis; errors past the scan cap.
pub fn crossing_cycle(w: u32, p: &ConfidenceParams) -> Result<u64, ScheduleError> {
    let want = TRIGGER_BASE.pow(w);
    let mut s = 1u64;
    while floor_ratio(s, p) < want {
        s += 1;
        if s > BOUNDARY_SCAN_CAP * 100 {
            return Err(ScheduleError::ScanCapExceeded {
                cap: BOUNDARY_SCAN_CAP * 100,
                what: "crossing_cycle",
            });
        }
    }
    Ok(s)
}

/// Thresholds past which the scheduling functions behave monotonically.
/// Round-valued fields are in units of the original K-arm problem; the
/// cycle-valued accessor [`BoundaryThresholds::guard_cycles`] is what the
/// players consult inside sub-problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryThresholds {
    /// Least multiple-of-K round with `(f(n)-1)/lil_bound(f(n)-1, ·) >= 1` thereafter.
    pub t_boundary1: u64,
    /// Least cycle with `conf_width` non-increasing thereafter.
    pub s_boundary2: u64,
    /// Least multiple-of-K round with `f(n) <= n/K` thereafter.
    pub t_boundary3: u64,
    /// First multiple of K at least as large as all three above.
    pub t_first_boundary: u64,
}

impl BoundaryThresholds {
    /// The guard in cycle units: power triggers are only accepted at cycles
    /// >= this value.
    pub fn guard_cycles(&self, arms: u64) -> u64 {
        self.t_first_boundary.div_ceil(arms)
    }
}

/// Locate the boundary thresholds by forward scan with a stability window.
pub fn boundary_thresholds(p: &ConfidenceParams) -> Result<BoundaryThresholds, ScheduleError> {
    let k = p.num_arms as u64;
    let dp = p.block_test_delta();

    // s_boundary2: conf_width(s+1) <= conf_width(s) for a full window.
    let s_boundary2 = {
        let mut s = 1u64;
        let mut run_start = 1u64;
        let mut run = 0u64;
        loop {
            if conf_width(s + 1, p) <= conf_width(s, p) {
                if run == 0 {
                    run_start = s;
                }
                run += 1;
                if run >= STABILITY_WINDOW {
                    break run_start;
                }
            } else {
                run = 0;
            }
            s += 1;
            if s > BOUNDARY_SCAN_CAP {
                return Err(ScheduleError::ScanCapExceeded {
                    cap: BOUNDARY_SCAN_CAP,
                    what: "s_boundary2",
                });
            }
        }
    };

    // Conditions 1 and 3 share the forward scan over pull counts. The scan
    // tracks f incrementally: the target is increasing in s (guaranteed by the
    // delta cap), so f never moves backwards; a decrease would mean the
    // incremental start is invalid and the scan restarts from 1.
    let mut cond1_start = 0u64; // first pull count of the current run, 0 = no run
    let mut cond1_run = 0u64;
    let mut cond1_found: Option<u64> = None;
    let mut cond3_start = 0u64;
    let mut cond3_run = 0u64;
    let mut cond3_found: Option<u64> = None;
    let mut f_prev = 1u64;
    let mut s = 1u64;
    loop {
        let target = block_len_target(s, p);
        let mut m = f_prev.max(1);
        if (m as f64) / lil_bound(m, dp) >= target {
            // Re-establish minimality in case the incremental start overshot.
            while m > 1 && ((m - 1) as f64) / lil_bound(m - 1, dp) >= target {
                m -= 1;
            }
        } else {
            while (m as f64) / lil_bound(m, dp) < target {
                m += 1;
                if m > BLOCK_LEN_SCAN_CAP {
                    return Err(ScheduleError::ScanCapExceeded {
                        cap: BLOCK_LEN_SCAN_CAP,
                        what: "boundary f scan",
                    });
                }
            }
        }
        f_prev = m;

        let cond1 = m >= 2 && ((m - 1) as f64) / lil_bound(m - 1, dp) >= 1.0;
        if cond1_found.is_none() {
            if cond1 {
                if cond1_run == 0 {
                    cond1_start = s;
                }
                cond1_run += 1;
                if cond1_run >= STABILITY_WINDOW {
                    cond1_found = Some(cond1_start);
                }
            } else {
                cond1_run = 0;
            }
        }

        let cond3 = m <= s;
        if cond3_found.is_none() {
            if cond3 {
                if cond3_run == 0 {
                    cond3_start = s;
                }
                cond3_run += 1;
                if cond3_run >= STABILITY_WINDOW {
                    cond3_found = Some(cond3_start);
                }
            } else {
                cond3_run = 0;
            }
        }

        if cond1_found.is_some() && cond3_found.is_some() {
            break;
        }
        s += 1;
        if s > BOUNDARY_SCAN_CAP {
            return Err(ScheduleError::ScanCapExceeded {
                cap: BOUNDARY_SCAN_CAP,
                what: "boundary conditions 1/3",
            });
        }
    }

    let t_boundary1 = cond1_found.unwrap() * k;
    let t_boundary3 = cond3_found.unwrap() * k;
    let raw_max = t_boundary1.max(k * s_boundary2).max(t_boundary3);
    let t_first_boundary = raw_max.div_ceil(k) * k;

    Ok(BoundaryThresholds { t_boundary1, s_boundary2, t_boundary3, t_first_boundary })
}
