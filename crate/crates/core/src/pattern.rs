//! 24-hour disturbance patterns learned from per-day bias estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{DayMarkers, MINUTES_PER_DAY};

/// Days whose mean normalized daylight intensity is at or below this are
/// discarded by [`weighted_pattern`].
pub const SOLAR_GATE: f64 = 0.35;

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("day {day} has {got} minutes, expected {MINUTES_PER_DAY}")]
    IncompleteDay { day: usize, got: usize },
    #[error("no days to learn from")]
    NoDays,
    #[error("no pattern learned: all {days} days below the solar gate")]
    NoPattern { days: usize },
    #[error("r_max must be positive, got {0}")]
    BadIntensity(f64),
    #[error("invalid day markers on day {0}")]
    BadMarkers(usize),
    #[error("{traces} traces but {summaries} solar summaries")]
    Misaligned { traces: usize, summaries: usize },
    #[error("missing forecast summary for day {0}")]
    MissingForecast(usize),
    #[error("zone count mismatch: expected {expected}, got {got}")]
    ZoneMismatch { expected: usize, got: usize },
}

/// One day of bias estimates, `[minute][zone]`.
pub type DayTrace = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    UniformAverage,
    SolarWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbancePattern {
    /// `[minute][zone]`, degrees per minute.
    pub values: Vec<Vec<f64>>,
    pub kind: PatternKind,
    pub days_used: usize,
    pub days_discarded: usize,
    /// Zero for uniform patterns.
    pub r_max: f64,
}

impl DisturbancePattern {
    pub fn zones(&self) -> usize {
        self.values.first().map_or(0, |r| r.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarDaySummary {
    pub markers: DayMarkers,
    pub morning: f64,
    pub afternoon: f64,
}

impl SolarDaySummary {
    pub fn mean_intensity(&self) -> f64 {
        0.5 * (self.morning + self.afternoon)
    }
}

/// Which weighting applies at a minute of a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Night,
    Morning,
    Afternoon,
}

pub fn slot(minute: usize, markers: &DayMarkers) -> Slot {
    if minute < markers.dawn || minute >= markers.dusk {
        Slot::Night
    } else if minute < markers.midday {
        Slot::Morning
    } else {
        Slot::Afternoon
    }
}

fn check_days(traces: &[DayTrace]) -> Result<usize, PatternError> {
    let first = traces.first().ok_or(PatternError::NoDays)?;
    let zones = first.first().map_or(0, |r| r.len());
    for (day, t) in traces.iter().enumerate() {
        if t.len() != MINUTES_PER_DAY {
            return Err(PatternError::IncompleteDay { day, got: t.len() });
        }
        if let Some(row) = t.iter().find(|r| r.len() != zones) {
            return Err(PatternError::ZoneMismatch {
                expected: zones,
                got: row.len(),
            });
        }
    }
    Ok(zones)
}

/// Slot-wise mean of the day traces.
pub fn uniform_average(traces: &[DayTrace]) -> Result<DisturbancePattern, PatternError> {
    let zones = check_days(traces)?;
    let n = traces.len() as f64;
    let values = (0..MINUTES_PER_DAY)
        .map(|k| {
            (0..zones)
                .map(|z| traces.iter().map(|t| t[k][z]).sum::<f64>() / n)
                .collect()
        })
        .collect();
    Ok(DisturbancePattern {
        values,
        kind: PatternKind::UniformAverage,
        days_used: traces.len(),
        days_discarded: 0,
        r_max: 0.0,
    })
}

/// Half-day mean intensities normalized by `r_max`.
pub fn summarize_solar_day(solar: &[f64], markers: DayMarkers, r_max: f64) -> Result<SolarDaySummary, PatternError> {
    if !(r_max > 0.0) {
        return Err(PatternError::BadIntensity(r_max));
    }
    if !markers.is_valid() || markers.dusk > solar.len() {
        return Err(PatternError::BadMarkers(0));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(SolarDaySummary {
        markers,
        morning: mean(&solar[markers.dawn..markers.midday]) / r_max,
        afternoon: mean(&solar[markers.midday..markers.dusk]) / r_max,
    })
}

/// Weight applied to a slot, or `None` when the slot is treated as night.
fn slot_weight(s: Slot, summary: &SolarDaySummary) -> Option<f64> {
    let w = match s {
        Slot::Night => return None,
        Slot::Morning => summary.morning,
        Slot::Afternoon => summary.afternoon,
    };
    // a dark half on an otherwise bright day is handled as night
    (w > 0.0).then_some(w)
}

/// Solar-normalized pattern. Daylight slots accumulate `b / weight`, night
/// slots accumulate raw `b`; the sum is divided by the surviving day count.
pub fn weighted_pattern(
    traces: &[DayTrace],
    summaries: &[SolarDaySummary],
    r_max: f64,
) -> Result<DisturbancePattern, PatternError> {
    let zones = check_days(traces)?;
    if traces.len() != summaries.len() {
        return Err(PatternError::Misaligned {
            traces: traces.len(),
            summaries: summaries.len(),
        });
    }
    if !(r_max > 0.0) {
        return Err(PatternError::BadIntensity(r_max));
    }
    let mut values = vec![vec![0.0; zones]; MINUTES_PER_DAY];
    let mut used = 0;
    for (day, (trace, summary)) in traces.iter().zip(summaries).enumerate() {
        if !summary.markers.is_valid() {
            return Err(PatternError::BadMarkers(day));
        }
        if summary.mean_intensity() <= SOLAR_GATE {
            continue;
        }
        used += 1;
        for (k, row) in trace.iter().enumerate() {
            let w = slot_weight(slot(k, &summary.markers), summary).unwrap_or(1.0);
            for (acc, b) in values[k].iter_mut().zip(row) {
                *acc += b / w;
            }
        }
    }
    if used == 0 {
        return Err(PatternError::NoPattern { days: traces.len() });
    }
    for row in &mut values {
        for v in row.iter_mut() {
            *v /= used as f64;
        }
    }
    Ok(DisturbancePattern {
        values,
        kind: PatternKind::SolarWeighted,
        days_used: used,
        days_discarded: traces.len() - used,
        r_max,
    })
}

/// Expand a pattern into a per-minute bias series for the forecast days.
/// Uniform patterns ignore the summaries but still need one per day.
pub fn predicted_disturbance(
    pattern: &DisturbancePattern,
    forecast: &[SolarDaySummary],
    days: usize,
) -> Result<Vec<Vec<f64>>, PatternError> {
    let mut out = Vec::with_capacity(days * MINUTES_PER_DAY);
    for day in 0..days {
        let summary = forecast.get(day);
        if pattern.kind == PatternKind::SolarWeighted && summary.is_none() {
            return Err(PatternError::MissingForecast(day));
        }
        for (k, row) in pattern.values.iter().enumerate() {
            let w = match (pattern.kind, summary) {
                (PatternKind::SolarWeighted, Some(s)) => match slot(k, &s.markers) {
                    Slot::Night => 1.0,
                    Slot::Morning => s.morning,
                    Slot::Afternoon => s.afternoon,
                },
                _ => 1.0,
            };
            out.push(row.iter().map(|d| d * w).collect());
        }
    }
    Ok(out)
}

/// Split a flat `[step][zone]` trace into whole days, dropping a trailing
/// partial day.
pub fn split_days(trace: &[Vec<f64>]) -> Vec<DayTrace> {
    trace.chunks_exact(MINUTES_PER_DAY).map(|c| c.to_vec()).collect()
}
