//! Simulated datasets described by a run configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::simulator::{add_measurement_noise, simulate_truth, Dataset, SimError, MINUTES_PER_DAY};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub struct Generated {
    /// Noisy measurements over the learning days.
    pub measured: Dataset,
    /// Noise-free truth over the learning and holdout days.
    pub clean: Dataset,
}

impl Generated {
    pub fn holdout(&self) -> Dataset {
        self.clean.slice_days(self.measured.days(), self.clean.days() - self.measured.days())
    }
}

/// Simulate `days + holdout_days` days and add measurement noise to the first
/// `days`. Everything is driven by one ChaCha8 stream seeded with `seed`.
pub fn generate(cfg: &RunConfig, seed: u64, days: usize, holdout_days: usize) -> Result<Generated, ScenarioError> {
    let net = cfg.network()?;
    let truth = cfg.truth_config()?;
    let noise = cfg.truth_section()?.measurement_noise_std_deg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clean = simulate_truth(&net, &truth, days + holdout_days, &mut rng)?;
    // the CSV does not carry the RC products; they go to the truth sidecar
    clean.truth_rc = None;
    let noisy = add_measurement_noise(&clean, noise, &mut rng);
    Ok(Generated {
        measured: noisy.slice_days(0, days),
        clean,
    })
}

/// Append `b` to `a`; `b` must start on the day after `a` ends.
pub fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset, String> {
    if a.zone_names != b.zone_names {
        return Err("zone columns differ".into());
    }
    if a.steps() % MINUTES_PER_DAY != 0 || b.first_day != a.first_day + a.days() {
        return Err(format!(
            "second file starts on day {}, expected {}",
            b.first_day,
            a.first_day + a.days()
        ));
    }
    let mut out = a.clone();
    out.temps.extend(b.temps.iter().cloned());
    out.external.extend(&b.external);
    out.solar.extend(&b.solar);
    out.day_markers.extend(&b.day_markers);
    out.truth_disturbance = match (&a.truth_disturbance, &b.truth_disturbance) {
        (Some(x), Some(y)) => Some(x.iter().chain(y).cloned().collect()),
        _ => None,
    };
    Ok(out)
}
