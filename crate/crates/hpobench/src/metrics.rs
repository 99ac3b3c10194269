//! Final-score metrics (MAPE, R², RMSE) and runtime capture.
//!
//! Runtime can be measured two ways: an ordinary monotonic wall clock, or a
//! counted clock that converts the boosted-tree work counter into synthetic
//! seconds. The counted clock makes runtimes a pure function of the work
//! performed, so whole experiment runs become byte-reproducible; because the
//! downstream comparisons are rank-based they are unaffected by the clock's
//! arbitrary scale factor.

use std::cell::Cell;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::Variate;
use crate::gbt;

/// One scored experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub algorithm: String,
    pub variate: Variate,
    pub sample_size: usize,
    pub mape: f64,
    pub r2: f64,
    pub runtime_seconds: f64,
}

fn check_lengths(actual: &[f64], predicted: &[f64], min: usize) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} actuals vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < min {
        return Err(Error::Metric(format!("need at least {min} points, got {}", actual.len())));
    }
    Ok(())
}

/// Mean absolute percentage error as a fraction (0.10 means 10%).
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted, 1)?;
    let mut sum = 0.0;
    for (&a, &p) in actual.iter().zip(predicted) {
        if a == 0.0 {
            return Err(Error::Metric("MAPE undefined for a zero actual".into()));
        }
        sum += ((a - p) / a).abs();
    }
    Ok(sum / actual.len() as f64)
}

/// Coefficient of determination `1 - SS_res/SS_tot`. May be negative when
/// the predictor underperforms the mean.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted, 2)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("R² undefined for a constant actual vector".into()));
    }
    let ss_res: f64 =
        actual.iter().zip(predicted).map(|(&a, &p)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted, 1)?;
    let ss: f64 = actual.iter().zip(predicted).map(|(&a, &p)| (a - p) * (a - p)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

/// Which clock [`timed`] and [`Stopwatch`] read on this thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Monotonic wall time.
    Wall,
    /// Synthetic seconds derived from the model-fit work counter.
    Counted,
}

impl Clock {
    pub fn parse(s: &str) -> Result<Clock> {
        match s {
            "wall" => Ok(Clock::Wall),
            "counted" => Ok(Clock::Counted),
            other => Err(Error::Config(format!("unknown clock '{other}' (wall|counted)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Clock::Wall => "wall",
            Clock::Counted => "counted",
        }
    }
}

/// Nominal seconds per work unit for the counted clock. The absolute scale
/// is arbitrary; only relative magnitudes reach any comparison.
const SECONDS_PER_UNIT: f64 = 2e-9;

thread_local! {
    static CURRENT_CLOCK: Cell<Clock> = const { Cell::new(Clock::Wall) };
}

/// Runs `f` with the given clock active on this thread, restoring the
/// previous clock afterwards.
pub fn with_clock<T>(clock: Clock, f: impl FnOnce() -> T) -> T {
    struct Restore(Clock);
    impl Drop for Restore {
        fn drop(&mut self) {
            CURRENT_CLOCK.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(CURRENT_CLOCK.with(|c| c.replace(clock)));
    f()
}

pub fn current_clock() -> Clock {
    CURRENT_CLOCK.with(|c| c.get())
}

/// Elapsed-time probe honoring the thread's active [`Clock`].
pub struct Stopwatch {
    started: Instant,
    units_at_start: u64,
    clock: Clock,
}

impl Stopwatch {
    pub fn start() -> Stopwatch {
        Stopwatch {
            started: Instant::now(),
            units_at_start: gbt::work_units(),
            clock: current_clock(),
        }
    }

    /// Seconds since start, clamped positive so durations can serve as
    /// strictly-positive runtime records even for no-op intervals.
    pub fn elapsed_seconds(&self) -> f64 {
        let raw = match self.clock {
            Clock::Wall => self.started.elapsed().as_secs_f64(),
            Clock::Counted => {
                (gbt::work_units() - self.units_at_start) as f64 * SECONDS_PER_UNIT
            }
        };
        raw.max(1e-9)
    }
}

/// Runs `f` and returns its result with the elapsed seconds under the
/// thread's active clock.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let sw = Stopwatch::start();
    let out = f();
    let secs = sw.elapsed_seconds();
    (out, secs)
}
