//! Open-loop temperature prediction and its error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimationError, ThermalModel};
use crate::pattern::{predicted_disturbance, DisturbancePattern, PatternError, SolarDaySummary};
use crate::simulator::MINUTES_PER_DAY;

#[derive(Debug, Error, PartialEq)]
pub enum PredictionError {
    #[error("prediction diverged at lead {lead}")]
    Diverged { lead: usize },
    #[error("external series has {got} samples, horizon needs {need}")]
    ShortInput { need: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Model(#[from] EstimationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    /// Zone temperatures at the prediction start.
    pub initial_temps: Vec<f64>,
    /// Minute of day of the start.
    pub start_minute: usize,
    pub horizon: usize,
    /// Estimated parameters in the model's representation.
    pub params: Vec<f64>,
    /// Without a pattern the disturbance is taken as zero.
    pub pattern: Option<DisturbancePattern>,
    /// One summary per calendar day touched, starting with the start day.
    pub forecast: Vec<SolarDaySummary>,
    /// External temperature from the start step onward.
    pub external: Vec<f64>,
}

impl PredictionRun {
    /// Per-step bias for leads `0..horizon`, zero without a pattern.
    pub fn disturbance(&self, zones: usize) -> Result<Vec<Vec<f64>>, PredictionError> {
        let Some(pattern) = &self.pattern else {
            return Ok(vec![vec![0.0; zones]; self.horizon]);
        };
        if pattern.zones() != zones {
            return Err(PredictionError::Shape(format!(
                "pattern has {} zones, model has {zones}",
                pattern.zones()
            )));
        }
        let days = (self.start_minute + self.horizon).div_ceil(MINUTES_PER_DAY);
        let series = predicted_disturbance(pattern, &self.forecast, days)?;
        Ok(series[self.start_minute..self.start_minute + self.horizon].to_vec())
    }
}

/// Euler roll-out. Row `h` is the state `h + 1` steps after the start.
pub fn predict(run: &PredictionRun, model: &ThermalModel) -> Result<Vec<Vec<f64>>, PredictionError> {
    if run.external.len() < run.horizon {
        return Err(PredictionError::ShortInput {
            need: run.horizon,
            got: run.external.len(),
        });
    }
    if run.initial_temps.len() != model.zones() {
        return Err(PredictionError::Shape(format!(
            "{} initial temperatures for {} zones",
            run.initial_temps.len(),
            model.zones()
        )));
    }
    let bias = run.disturbance(model.zones())?;
    let mut t = run.initial_temps.clone();
    let mut out = Vec::with_capacity(run.horizon);
    for h in 0..run.horizon {
        let input = vec![run.external[h]; model.externals()];
        t = model.step_temperatures(&t, &run.params, &bias[h], &input, 1.0)?;
        if t.iter().any(|v| !v.is_finite()) {
            return Err(PredictionError::Diverged { lead: h + 1 });
        }
        out.push(t.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub zone_rms: Vec<f64>,
    /// Pooled RMS across zones at each lead.
    pub leadtime: Vec<f64>,
    pub max_abs: f64,
}

impl ErrorReport {
    /// Pooled RMS over all zones and leads.
    pub fn overall_rms(&self) -> f64 {
        if self.leadtime.is_empty() {
            return 0.0;
        }
        (self.leadtime.iter().map(|v| v * v).sum::<f64>() / self.leadtime.len() as f64).sqrt()
    }
}

pub fn rms_error(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<ErrorReport, PredictionError> {
    if pred.len() != truth.len() {
        return Err(PredictionError::Shape(format!("{} vs {} rows", pred.len(), truth.len())));
    }
    let zones = pred.first().map_or(0, |r| r.len());
    let mut sq = vec![0.0; zones];
    let mut leadtime = Vec::with_capacity(pred.len());
    let mut max_abs: f64 = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != zones || t.len() != zones {
            return Err(PredictionError::Shape("ragged rows".into()));
        }
        let mut row = 0.0;
        for z in 0..zones {
            let e = p[z] - t[z];
            sq[z] += e * e;
            row += e * e;
            max_abs = max_abs.max(e.abs());
        }
        leadtime.push((row / zones.max(1) as f64).sqrt());
    }
    let n = pred.len().max(1) as f64;
    Ok(ErrorReport {
        zone_rms: sq.into_iter().map(|s| (s / n).sqrt()).collect(),
        leadtime,
        max_abs,
    })
}

/// Pooled RMS across runs at each lead.
pub fn pool_leadtime(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|h| (curves.iter().map(|c| c[h] * c[h]).sum::<f64>() / curves.len() as f64).sqrt())
        .collect()
}
