//! Truth-model simulation on a one-minute Euler grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_system_matrix, GraphError, RcProduct, ThermalNetwork};

pub const MINUTES_PER_DAY: usize = 1440;
/// Bound on the accumulated random-walk component of the external forcing.
pub const FORCING_WALK_CLIP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("non-finite temperature at step {step}")]
    NonFinite { step: usize },
    #[error("invalid simulation input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub peak_to_peak: f64,
    /// Minutes.
    pub period: f64,
    /// Minutes.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub mean: f64,
    pub components: Vec<Sinusoid>,
    /// Standard deviation of the random-walk increment per step.
    pub noise_std: f64,
}

impl ForcingSpec {
    /// Daily 40-degree swing plus a 10-degree, four-hour ripple.
    pub fn reference(mean: f64, noise_std: f64) -> Self {
        Self {
            mean,
            components: vec![
                Sinusoid {
                    peak_to_peak: 40.0,
                    period: 1440.0,
                    phase: 0.0,
                },
                Sinusoid {
                    peak_to_peak: 10.0,
                    period: 240.0,
                    phase: 0.0,
                },
            ],
            noise_std,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for c in &self.components {
            if !(c.peak_to_peak >= 0.0) || !(c.period > 0.0) {
                return Err(SimError::Input(format!("bad forcing component {c:?}")));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(SimError::Input("forcing noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Noise-free part of the forcing at a step.
    pub fn deterministic(&self, step: usize) -> f64 {
        let t = step as f64;
        self.mean
            + self
                .components
                .iter()
                .map(|c| 0.5 * c.peak_to_peak * (2.0 * PI * (t + c.phase) / c.period).sin())
                .sum::<f64>()
    }

    /// Sum of the half-amplitudes; the forcing stays within
    /// `mean ± (envelope + FORCING_WALK_CLIP)`.
    pub fn envelope(&self) -> f64 {
        self.components.iter().map(|c| 0.5 * c.peak_to_peak).sum()
    }
}

/// Stateful external forcing: sinusoids plus a clipped random walk that lets
/// the temperature drift from day to day.
#[derive(Debug, Clone)]
pub struct ExternalForcing {
    spec: ForcingSpec,
    walk: f64,
}

impl ExternalForcing {
    pub fn new(spec: ForcingSpec) -> Self {
        Self { spec, walk: 0.0 }
    }

    /// Forcing value at `step`; advances the random walk afterwards.
    pub fn sample<R: Rng + ?Sized>(&mut self, step: usize, rng: &mut R) -> f64 {
        let value = self.spec.deterministic(step) + self.walk;
        if self.spec.noise_std > 0.0 {
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            self.walk = (self.walk + self.spec.noise_std * n).clamp(-FORCING_WALK_CLIP, FORCING_WALK_CLIP);
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceWindow {
    /// Minute of day, inclusive.
    pub start: usize,
    /// Minute of day, exclusive.
    pub end: usize,
    /// `b_i / C_i` in degrees per minute.
    pub magnitude: f64,
}

/// Where a zone's glazing faces; shapes how its solar gain is spread over the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    East,
    West,
    South,
}

impl Facing {
    /// Relative aperture at fraction `phi` of the way from dawn to dusk.
    pub fn aperture(self, phi: f64) -> f64 {
        match self {
            Facing::East => (1.0 - phi).clamp(0.0, 1.0),
            Facing::West => phi.clamp(0.0, 1.0),
            Facing::South => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarGain {
    pub facing: Facing,
    /// Degrees per minute at full aperture and full intensity.
    pub gain: f64,
}

/// Daily-repeating disturbances per zone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSchedule {
    pub windows: Vec<Vec<DisturbanceWindow>>,
    /// Optional solar-driven gain per zone.
    #[serde(default)]
    pub solar: Vec<Option<SolarGain>>,
}

impl DisturbanceSchedule {
    pub fn none(zones: usize) -> Self {
        Self {
            windows: vec![Vec::new(); zones],
            solar: vec![None; zones],
        }
    }

    pub fn validate(&self, zones: usize) -> Result<(), SimError> {
        if self.windows.len() != zones || (!self.solar.is_empty() && self.solar.len() != zones) {
            return Err(SimError::Input(format!(
                "disturbance schedule covers {} zones, network has {zones}",
                self.windows.len()
            )));
        }
        for w in self.windows.iter().flatten() {
            if !(w.start < w.end && w.end <= MINUTES_PER_DAY) {
                return Err(SimError::Input(format!("bad disturbance window {w:?}")));
            }
        }
        Ok(())
    }

    /// Scheduled (non-solar) disturbance for a zone at a minute of the day.
    pub fn scheduled(&self, zone: usize, minute: usize) -> f64 {
        self.windows[zone]
            .iter()
            .filter(|w| minute >= w.start && minute < w.end)
            .map(|w| w.magnitude)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.iter().all(|w| w.is_empty()) && self.solar.iter().all(|s| s.is_none())
    }
}

/// Dawn, midday and dusk as minutes of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayMarkers {
    pub dawn: usize,
    pub midday: usize,
    pub dusk: usize,
}

impl Default for DayMarkers {
    fn default() -> Self {
        Self {
            dawn: 360,
            midday: 720,
            dusk: 1080,
        }
    }
}

impl DayMarkers {
    pub fn is_valid(&self) -> bool {
        self.dawn < self.midday && self.midday < self.dusk && self.dusk <= MINUTES_PER_DAY
    }

    /// Fraction of daylight elapsed at `minute`, or `None` at night.
    pub fn daylight_fraction(&self, minute: usize) -> Option<f64> {
        (minute >= self.dawn && minute < self.dusk)
            .then(|| (minute - self.dawn) as f64 / (self.dusk - self.dawn) as f64)
    }
}

/// Overcast spell: `days` consecutive days starting at `start_day` with the
/// given cloud factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvercastSpell {
    pub start_day: usize,
    pub days: usize,
    pub cloud_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolarSpec {
    pub r_max: f64,
    /// Dawn at the equinox, minutes.
    pub dawn_mean: usize,
    /// Seasonal swing of dawn (and, mirrored about noon, dusk), minutes.
    pub dawn_swing: usize,
    /// Day of year at which days are longest.
    pub longest_day: usize,
    /// Clear-day cloud factors are drawn uniformly from this range.
    pub clear_range: (f64, f64),
    #[serde(default)]
    pub overcast: Vec<OvercastSpell>,
    /// Day of year of dataset day 0.
    #[serde(default)]
    pub first_day_of_year: usize,
}

impl SolarSpec {
    pub fn markers_for(&self, day: usize) -> DayMarkers {
        let doy = (self.first_day_of_year + day) as f64;
        let shift = (self.dawn_swing as f64 * (2.0 * PI * (doy - self.longest_day as f64) / 365.0).cos()).round();
        let dawn = (self.dawn_mean as f64 - shift).max(1.0) as usize;
        let midday = MINUTES_PER_DAY / 2;
        let dusk = 2 * midday - dawn;
        DayMarkers { dawn, midday, dusk }
    }

    pub fn cloud_factors<R: Rng + ?Sized>(&self, days: usize, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.clear_range;
        let mut out: Vec<f64> = (0..days)
            .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect();
        for spell in &self.overcast {
            for d in spell.start_day..(spell.start_day + spell.days).min(days) {
                out[d] = spell.cloud_factor;
            }
        }
        out
    }
}

/// Half-sine solar intensity between dawn and dusk, scaled per day by the
/// cloud factor. Peak is `r_max` at midday on a clear (factor 1) day.
pub fn synth_solar(markers: &[DayMarkers], r_max: f64, cloud_factor_per_day: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(markers.len() * MINUTES_PER_DAY);
    for (m, cloud) in markers.iter().zip(cloud_factor_per_day) {
        for minute in 0..MINUTES_PER_DAY {
            let r = match m.daylight_fraction(minute) {
                Some(phi) => r_max * cloud.clamp(0.0, 1.0) * (PI * phi).sin(),
                None => 0.0,
            };
            out.push(r);
        }
    }
    out
}

/// Timestamped measurement series on a one-minute grid starting at midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub zone_names: Vec<String>,
    /// `temps[step][zone]`.
    pub temps: Vec<Vec<f64>>,
    pub external: Vec<f64>,
    pub solar: Vec<f64>,
    pub day_markers: Vec<DayMarkers>,
    pub truth_disturbance: Option<Vec<Vec<f64>>>,
    pub truth_rc: Option<BTreeMap<RcProduct, f64>>,
    /// Day index (within a longer run) of this dataset's day 0.
    #[serde(default)]
    pub first_day: usize,
}

impl Dataset {
    pub fn steps(&self) -> usize {
        self.temps.len()
    }

    pub fn zones(&self) -> usize {
        self.zone_names.len()
    }

    pub fn days(&self) -> usize {
        self.steps() / MINUTES_PER_DAY
    }

    pub fn markers(&self, day: usize) -> DayMarkers {
        self.day_markers.get(day).copied().unwrap_or_default()
    }

    /// Whole days `[start_day, start_day + days)`.
    pub fn slice_days(&self, start_day: usize, days: usize) -> Dataset {
        let a = (start_day * MINUTES_PER_DAY).min(self.steps());
        let b = ((start_day + days) * MINUTES_PER_DAY).min(self.steps());
        let dm_end = (start_day + days).min(self.day_markers.len());
        Dataset {
            zone_names: self.zone_names.clone(),
            temps: self.temps[a..b].to_vec(),
            external: self.external[a..b].to_vec(),
            solar: self.solar[a..b].to_vec(),
            day_markers: self.day_markers[start_day.min(dm_end)..dm_end].to_vec(),
            truth_disturbance: self.truth_disturbance.as_ref().map(|d| d[a..b].to_vec()),
            truth_rc: self.truth_rc.clone(),
            first_day: self.first_day + start_day,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.steps();
        if self.external.len() != n || self.solar.len() != n {
            return Err(SimError::Input("series lengths differ".into()));
        }
        if self.temps.iter().any(|r| r.len() != self.zones()) {
            return Err(SimError::Input("temperature row width differs from zone count".into()));
        }
        if let Some(d) = &self.truth_disturbance {
            if d.len() != n || d.iter().any(|r| r.len() != self.zones()) {
                return Err(SimError::Input("truth disturbance shape mismatch".into()));
            }
        }
        if self.solar.iter().any(|&s| !(s >= 0.0)) {
            return Err(SimError::Input("negative solar intensity".into()));
        }
        if self.day_markers.iter().any(|m| !m.is_valid()) {
            return Err(SimError::Input("day markers not increasing".into()));
        }
        Ok(())
    }
}

/// `T' = T + dt (A T + b)`.
pub fn euler_step(a: &DMatrix<f64>, t: &DVector<f64>, b: &DVector<f64>, dt: f64) -> DVector<f64> {
    t + (a * t + b) * dt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub forcing: ForcingSpec,
    pub schedule: DisturbanceSchedule,
    pub solar: Option<SolarSpec>,
    /// Initial zone temperatures; defaults to the forcing mean.
    pub initial_temps: Option<Vec<f64>>,
    /// Conductance of external edges grows as `1 + mismatch |dT|`. Zero gives
    /// a plant that is structurally identical to the estimation model.
    #[serde(default)]
    pub mismatch: f64,
}

/// Integrate the network at one-minute steps and record a dataset.
///
/// All external nodes follow the same forcing series. Zone columns are the
/// finite nodes in ascending index order.
pub fn simulate_truth<R: Rng + ?Sized>(
    net: &ThermalNetwork,
    cfg: &TruthConfig,
    days: usize,
    rng: &mut R,
) -> Result<Dataset, SimError> {
    cfg.forcing.validate()?;
    let zones = net.finite_nodes();
    let externals = net.external_nodes();
    cfg.schedule.validate(zones.len())?;
    let truth_rc = net.rc_products();
    let a = build_system_matrix(net, &truth_rc)?;
    let n = net.node_count();
    let steps = days * MINUTES_PER_DAY;

    let (markers, solar, r_max) = match &cfg.solar {
        Some(spec) => {
            let markers: Vec<DayMarkers> = (0..days).map(|d| spec.markers_for(d)).collect();
            let clouds = spec.cloud_factors(days, rng);
            let solar = synth_solar(&markers, spec.r_max, &clouds);
            (markers, solar, spec.r_max)
        }
        None => (vec![DayMarkers::default(); days], vec![0.0; steps], 1.0),
    };

    // external edges for the mismatch term: (zone node, external node, 1/(R C))
    let ext_edges: Vec<(usize, usize, f64)> = if cfg.mismatch != 0.0 {
        net.edges()
            .iter()
            .enumerate()
            .filter_map(|(e, edge)| {
                let (i, x) = if net.is_finite(edge.a) { (edge.a, edge.b) } else { (edge.b, edge.a) };
                (!net.is_finite(x)).then(|| (i, x, 1.0 / truth_rc[&RcProduct { node: i, edge: e }]))
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut forcing = ExternalForcing::new(cfg.forcing.clone());
    let mut t = DVector::zeros(n);
    let init = cfg
        .initial_temps
        .clone()
        .unwrap_or_else(|| vec![cfg.forcing.mean; zones.len()]);
    if init.len() != zones.len() {
        return Err(SimError::Input("initial_temps length differs from zone count".into()));
    }
    for (z, &node) in zones.iter().enumerate() {
        t[node] = init[z];
    }

    let mut temps = Vec::with_capacity(steps);
    let mut external = Vec::with_capacity(steps);
    let mut disturbance = Vec::with_capacity(steps);
    let mut b = DVector::zeros(n);
    for step in 0..steps {
        let ext = forcing.sample(step, rng);
        for &x in &externals {
            t[x] = ext;
        }
        let day = step / MINUTES_PER_DAY;
        let minute = step % MINUTES_PER_DAY;
        let m = markers[day];
        let mut row_b = Vec::with_capacity(zones.len());
        for (z, &node) in zones.iter().enumerate() {
            let mut bz = cfg.schedule.scheduled(z, minute);
            if let Some(Some(sg)) = cfg.schedule.solar.get(z) {
                if let Some(phi) = m.daylight_fraction(minute) {
                    bz += sg.gain * sg.facing.aperture(phi) * solar[step] / r_max;
                }
            }
            b[node] = bz;
            row_b.push(bz);
        }
        temps.push(zones.iter().map(|&i| t[i]).collect::<Vec<f64>>());
        external.push(ext);
        disturbance.push(row_b);

        let mut next = euler_step(&a, &t, &b, 1.0);
        for &(i, x, rate) in &ext_edges {
            let dt = t[x] - t[i];
            next[i] += rate * cfg.mismatch * dt * dt.abs();
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { step: step + 1 });
        }
        t = next;
    }

    Ok(Dataset {
        zone_names: zones.iter().map(|&i| net.nodes()[i].name.clone()).collect(),
        temps,
        external,
        solar,
        day_markers: markers,
        truth_disturbance: Some(disturbance),
        truth_rc: Some(truth_rc),
        first_day: 0,
    })
}

/// Add i.i.d. zero-mean Gaussian noise to the temperature channel only.
pub fn add_measurement_noise<R: Rng + ?Sized>(ds: &Dataset, std: f64, rng: &mut R) -> Dataset {
    let mut out = ds.clone();
    if std > 0.0 {
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        for row in &mut out.temps {
            for v in row.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    out
}
