//! Two-mode learning schedule.
//!
//! Acquisition days learn RC parameters from night-time data with the bias
//! states frozen. Monitoring days learn parameters and biases jointly, with
//! bias covariance inflated around expected disturbance transitions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::estimators::{
    filter_step, EstimationError, FilterKind, GaussianBelief, NoiseModel, SigmaPointConfig, ThermalModel,
};
use crate::simulator::{Dataset, DayMarkers, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Acquisition,
    Monitoring,
}

/// Minutes of day during which acquisition-mode updates are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NightWindow {
    /// `[start, end)`, wrapping past midnight when `start > end`.
    Fixed { start_minute: usize, end_minute: usize },
    /// `[dusk + after_dusk, dawn - before_dawn)` from each day's markers.
    Markers { after_dusk: usize, before_dawn: usize },
}

impl Default for NightWindow {
    fn default() -> Self {
        NightWindow::Markers {
            after_dusk: 30,
            before_dawn: 30,
        }
    }
}

/// Used when a dataset carries no day markers.
pub const FALLBACK_NIGHT: NightWindow = NightWindow::Fixed {
    start_minute: 22 * 60,
    end_minute: 5 * 60,
};

/// True when `minute` lies in `[start, end)` on a 24-hour circle.
pub fn in_circular(minute: usize, start: usize, end: usize) -> bool {
    if start <= end {
        minute >= start && minute < end
    } else {
        minute >= start || minute < end
    }
}

impl NightWindow {
    pub fn bounds(&self, markers: &DayMarkers) -> (usize, usize) {
        match *self {
            NightWindow::Fixed {
                start_minute,
                end_minute,
            } => (start_minute, end_minute),
            NightWindow::Markers {
                after_dusk,
                before_dawn,
            } => (
                (markers.dusk + after_dusk) % MINUTES_PER_DAY,
                markers.dawn.saturating_sub(before_dawn),
            ),
        }
    }

    pub fn contains(&self, minute: usize, markers: &DayMarkers) -> bool {
        let (s, e) = self.bounds(markers);
        in_circular(minute, s, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePlan {
    pub acquisition_days: usize,
    pub monitoring_days: usize,
    #[serde(default)]
    pub night_window: NightWindow,
}

impl ModePlan {
    pub fn total_days(&self) -> usize {
        self.acquisition_days + self.monitoring_days
    }
}

pub fn mode_for(step: usize, plan: &ModePlan) -> Mode {
    if step / MINUTES_PER_DAY < plan.acquisition_days {
        Mode::Acquisition
    } else {
        Mode::Monitoring
    }
}

/// Window edge: a fixed minute of day or an offset from dawn or dusk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Minute(usize),
    Dawn(i64),
    Dusk(i64),
}

impl Anchor {
    pub fn resolve(&self, markers: &DayMarkers) -> usize {
        let m = match *self {
            Anchor::Minute(m) => return m.min(MINUTES_PER_DAY),
            Anchor::Dawn(off) => markers.dawn as i64 + off,
            Anchor::Dusk(off) => markers.dusk as i64 + off,
        };
        m.clamp(0, MINUTES_PER_DAY as i64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostWindow {
    pub start: Anchor,
    pub end: Anchor,
    /// Bias indices affected; empty means all.
    #[serde(default)]
    pub zones: Vec<usize>,
    /// Added to the bias variance on window entry.
    pub p_boost: f64,
    /// Multiplies the bias process variance inside the window.
    pub q_boost: f64,
}

impl BoostWindow {
    pub fn bounds(&self, markers: &DayMarkers) -> (usize, usize) {
        (self.start.resolve(markers), self.end.resolve(markers))
    }

    pub fn contains(&self, minute: usize, markers: &DayMarkers) -> bool {
        let (s, e) = self.bounds(markers);
        minute >= s && minute < e
    }

    pub fn targets(&self, zone: usize) -> bool {
        self.zones.is_empty() || self.zones.contains(&zone)
    }
}

pub const DEFAULT_Q_BOOST: f64 = 100.0;
pub const DEFAULT_P_BOOST: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSchedule {
    pub windows: Vec<BoostWindow>,
    /// Per-bias process variance outside windows. Empty keeps the base model's.
    #[serde(default)]
    pub nominal_bias_q: Vec<f64>,
}

impl VarianceSchedule {
    pub fn empty() -> Self {
        Self {
            windows: Vec::new(),
            nominal_bias_q: Vec::new(),
        }
    }

    /// Two hours from dawn and the two hours ending 20 minutes after dusk.
    pub fn solar(p_boost: f64, q_boost: f64) -> Self {
        let w = |start, end| BoostWindow {
            start,
            end,
            zones: Vec::new(),
            p_boost,
            q_boost,
        };
        Self {
            windows: vec![
                w(Anchor::Dawn(0), Anchor::Dawn(120)),
                w(Anchor::Dusk(-100), Anchor::Dusk(20)),
            ],
            nominal_bias_q: Vec::new(),
        }
    }

    /// A window `[edge - before, edge + after)` around each fixed minute.
    pub fn around(edges: &[usize], before: usize, after: usize, zones: Vec<usize>, p_boost: f64, q_boost: f64) -> Self {
        Self {
            windows: edges
                .iter()
                .map(|&e| BoostWindow {
                    start: Anchor::Minute(e.saturating_sub(before)),
                    end: Anchor::Minute((e + after).min(MINUTES_PER_DAY)),
                    zones: zones.clone(),
                    p_boost,
                    q_boost,
                })
                .collect(),
            nominal_bias_q: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for w in &self.windows {
            if !(w.p_boost >= 0.0 && w.q_boost >= 1.0) {
                return Err(format!("boost window needs p_boost >= 0 and q_boost >= 1: {w:?}"));
            }
            if let (Anchor::Minute(s), Anchor::Minute(e)) = (w.start, w.end) {
                if s >= e || e > MINUTES_PER_DAY {
                    return Err(format!("boost window [{s}, {e}) outside the day"));
                }
            }
        }
        if self.nominal_bias_q.iter().any(|q| !(*q >= 0.0)) {
            return Err("nominal bias variance must be non-negative".into());
        }
        Ok(())
    }
}

/// Noise model for a minute of day: nominal bias variance, multiplied by
/// `q_boost` for each active window that targets the bias.
pub fn effective_noise(minute: usize, markers: &DayMarkers, schedule: &VarianceSchedule, base: &NoiseModel, zones: usize, bias_start: usize) -> NoiseModel {
    let mut out = base.clone();
    for z in 0..zones {
        let i = bias_start + z;
        if let Some(&q) = schedule.nominal_bias_q.get(z) {
            out.q[(i, i)] = q;
        }
        for w in &schedule.windows {
            if w.targets(z) && w.contains(minute, markers) {
                out.q[(i, i)] *= w.q_boost;
            }
        }
    }
    out
}

/// Add `p_boost` to targeted bias variances at the first minute of each window.
pub fn boost_belief(belief: &mut GaussianBelief, schedule: &VarianceSchedule, minute: usize, markers: &DayMarkers) {
    let layout = belief.layout();
    let b0 = layout.bias_range().start;
    for w in &schedule.windows {
        let (s, e) = w.bounds(markers);
        if minute != s || s >= e {
            continue;
        }
        for z in 0..layout.biases {
            if w.targets(z) {
                belief.covariance[(b0 + z, b0 + z)] += w.p_boost;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instability {
    pub step: usize,
    pub error: EstimationError,
}

#[derive(Debug, Clone)]
pub struct ScheduleRun {
    /// Belief after the last completed step.
    pub belief: GaussianBelief,
    /// Posterior parameter means, one row per step.
    pub param_trace: Vec<Vec<f64>>,
    /// Posterior bias means, one row per step.
    pub bias_trace: Vec<Vec<f64>>,
    /// Posterior bias variances, one row per step.
    pub bias_variance: Vec<Vec<f64>>,
    /// Number of measurement updates applied.
    pub updates: usize,
    /// Night-window entries at which temperatures were re-anchored.
    pub reanchors: usize,
    pub failure: Option<Instability>,
}

impl ScheduleRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

pub struct ScheduleSpec<'a> {
    pub kind: FilterKind,
    pub plan: &'a ModePlan,
    pub schedule: &'a VarianceSchedule,
    pub base_noise: &'a NoiseModel,
    pub sigma: SigmaPointConfig,
}

/// Restart the temperature states from a measurement: mean set to `z`,
/// covariance rows and columns replaced by the measurement covariance.
///
/// Acquisition mode predicts without updates through the day, when
/// unmodelled gains carry the temperatures away from the model; without a
/// restart the first night update would push that error into the parameters.
pub fn reanchor(belief: &mut GaussianBelief, z: &[f64], r: &nalgebra::DMatrix<f64>) {
    let n = belief.layout().temps;
    for (i, &v) in z.iter().enumerate().take(n) {
        belief.state.mean[i] = v;
    }
    let p = &mut belief.covariance;
    for i in 0..n {
        p.row_mut(i).fill(0.0);
        p.column_mut(i).fill(0.0);
    }
    p.view_mut((0, 0), (n, n)).copy_from(r);
}

/// Step the filter across the dataset.
///
/// Row `k` of the dataset is the state at step `k`; the first row is taken
/// as already absorbed into `init`. Each later step predicts with the
/// previous row's external temperature and then updates with row `k`, except
/// that acquisition-mode updates happen only inside the night window. Each
/// return to the night window after the first starts with [`reanchor`].
pub fn run_schedule(model: &ThermalModel, data: &Dataset, spec: &ScheduleSpec, init: GaussianBelief) -> ScheduleRun {
    let layout = init.layout();
    let bias = layout.bias_range();
    let zones = layout.biases;
    let night = if data.day_markers.is_empty() {
        FALLBACK_NIGHT
    } else {
        spec.plan.night_window
    };
    let mut frozen = vec![false; layout.len()];
    for i in bias.clone() {
        frozen[i] = true;
    }

    let mut belief = init;
    let mut held = None;
    let mut run = ScheduleRun {
        belief: belief.clone(),
        param_trace: Vec::with_capacity(data.steps()),
        bias_trace: Vec::with_capacity(data.steps()),
        bias_variance: Vec::with_capacity(data.steps()),
        updates: 0,
        reanchors: 0,
        failure: None,
    };
    let record = |run: &mut ScheduleRun, b: &GaussianBelief| {
        run.param_trace.push(b.state.params().to_vec());
        run.bias_trace.push(b.state.biases().to_vec());
        run.bias_variance.push(bias.clone().map(|i| b.variance(i)).collect());
    };

    let mut mode = Mode::Monitoring;
    let mut in_night = true;
    for k in 0..data.steps() {
        let step_mode = mode_for(k, spec.plan);
        if k == 0 || step_mode != mode {
            match step_mode {
                Mode::Acquisition => {
                    // hold the bias block aside; zero rows and columns keep the
                    // biases exactly fixed through both filter types
                    let p = &mut belief.covariance;
                    held = Some(p.view((bias.start, bias.start), (zones, zones)).into_owned());
                    for i in bias.clone() {
                        p.row_mut(i).fill(0.0);
                        p.column_mut(i).fill(0.0);
                    }
                }
                Mode::Monitoring => {
                    if let Some(h) = held.take() {
                        belief.covariance.view_mut((bias.start, bias.start), (zones, zones)).copy_from(&h);
                    }
                }
            }
            mode = step_mode;
        }
        if k == 0 {
            record(&mut run, &belief);
            continue;
        }

        let minute = k % MINUTES_PER_DAY;
        let markers = data.markers(k / MINUTES_PER_DAY);
        let input = vec![data.external[k - 1]; model.externals()];
        let z = DVector::from_row_slice(&data.temps[k]);
        let result = match mode {
            Mode::Acquisition => {
                let mut noise = spec.base_noise.clone();
                for i in bias.clone() {
                    noise.q[(i, i)] = 0.0;
                }
                let update = night.contains(minute, &markers);
                if update && !in_night && k > 1 {
                    reanchor(&mut belief, &data.temps[k - 1], &spec.base_noise.r);
                    run.reanchors += 1;
                }
                in_night = update;
                run.updates += update as usize;
                filter_step(
                    spec.kind,
                    &mut belief,
                    model,
                    &input,
                    update.then_some(&z),
                    &noise,
                    1.0,
                    &spec.sigma,
                    Some(&frozen),
                )
            }
            Mode::Monitoring => {
                boost_belief(&mut belief, spec.schedule, minute, &markers);
                let noise = effective_noise(minute, &markers, spec.schedule, spec.base_noise, zones, bias.start);
                run.updates += 1;
                filter_step(spec.kind, &mut belief, model, &input, Some(&z), &noise, 1.0, &spec.sigma, None)
            }
        };
        if let Err(error) = result {
            run.failure = Some(Instability { step: k, error });
            break;
        }
        record(&mut run, &belief);
    }
    // a run ending in acquisition hands back the bias block it held aside
    if let Some(h) = held.take() {
        belief.covariance.view_mut((bias.start, bias.start), (zones, zones)).copy_from(&h);
    }
    run.belief = belief;
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::StateLayout;
    use crate::graph::presets::pair;
    use crate::graph::{minimal_parameter_set, Capacitance, Representation};
    use crate::simulator::{simulate_truth, DisturbanceSchedule, DisturbanceWindow, ForcingSpec, TruthConfig};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(a: usize, m: usize) -> ModePlan {
        ModePlan {
            acquisition_days: a,
            monitoring_days: m,
            night_window: NightWindow::default(),
        }
    }

    #[test]
    fn modes_follow_day_counts() {
        let p = plan(3, 4);
        assert_eq!(mode_for(2 * MINUTES_PER_DAY + 5, &p), Mode::Acquisition);
        assert_eq!(mode_for(5 * MINUTES_PER_DAY, &p), Mode::Monitoring);
        assert_eq!(mode_for(0, &plan(0, 2)), Mode::Monitoring);
    }

    #[test]
    fn night_window_wraps_midnight() {
        let m = DayMarkers::default();
        let n = NightWindow::default();
        assert_eq!(n.bounds(&m), (1110, 330));
        assert!(n.contains(1200, &m));
        assert!(n.contains(0, &m));
        assert!(!n.contains(720, &m));
        assert!(FALLBACK_NIGHT.contains(23 * 60, &m));
        assert!(!FALLBACK_NIGHT.contains(6 * 60, &m));
    }

    fn bias_base(zones: usize) -> NoiseModel {
        let layout = StateLayout {
            temps: zones,
            params: 1,
            biases: zones,
        };
        NoiseModel::block_diagonal(layout, 1e-3, 1e-6, 1e-4, 0.01)
    }

    #[test]
    fn solar_windows_inflate_bias_noise() {
        let m = DayMarkers::default();
        let s = VarianceSchedule::solar(DEFAULT_P_BOOST, DEFAULT_Q_BOOST);
        let base = bias_base(1);
        let dawn = effective_noise(m.dawn + 30, &m, &s, &base, 1, 2);
        assert_eq!(dawn.q[(2, 2)], 1e-4 * 100.0);
        assert_eq!(dawn.q[(0, 0)], 1e-3);
        let noon = effective_noise(m.midday, &m, &s, &base, 1, 2);
        assert_eq!(noon.q, base.q);
        let dusk = effective_noise(m.dusk + 10, &m, &s, &base, 1, 2);
        assert_eq!(dusk.q[(2, 2)], 1e-2);
    }

    #[test]
    fn fixed_windows_bracket_edges() {
        let m = DayMarkers::default();
        let s = VarianceSchedule::around(&[600, 720], 10, 30, Vec::new(), 25.0, 100.0);
        let base = bias_base(1);
        for minute in [595, 620, 715, 745] {
            assert_eq!(effective_noise(minute, &m, &s, &base, 1, 2).q[(2, 2)], 1e-2, "{minute}");
        }
        assert_eq!(effective_noise(660, &m, &s, &base, 1, 2).q[(2, 2)], 1e-4);
    }

    fn two_zone_belief() -> GaussianBelief {
        let layout = StateLayout {
            temps: 2,
            params: 1,
            biases: 2,
        };
        GaussianBelief::new(
            layout,
            Representation::RcReciprocal,
            DVector::zeros(5),
            DMatrix::identity(5, 5),
        )
    }

    #[test]
    fn boost_fires_once_on_entry_and_only_for_targets() {
        let m = DayMarkers::default();
        let s = VarianceSchedule::around(&[600], 10, 30, vec![1], 25.0, 100.0);
        let mut b = two_zone_belief();
        boost_belief(&mut b, &s, 589, &m);
        assert_eq!(b.variance(4), 1.0);
        boost_belief(&mut b, &s, 590, &m);
        assert_eq!(b.variance(4), 26.0);
        assert_eq!(b.variance(3), 1.0);
        boost_belief(&mut b, &s, 591, &m);
        assert_eq!(b.variance(4), 26.0);
        let mut c = two_zone_belief();
        boost_belief(&mut c, &VarianceSchedule::empty(), 590, &m);
        assert_eq!(c, two_zone_belief());
    }

    fn pair_setup(disturbed: bool, days: usize) -> (ThermalModel, Dataset) {
        let net = pair(50.0, 2.0, Capacitance::Infinite);
        let mut schedule = DisturbanceSchedule::none(1);
        if disturbed {
            schedule.windows[0].push(DisturbanceWindow {
                start: 600,
                end: 720,
                magnitude: 0.05,
            });
        }
        let cfg = TruthConfig {
            forcing: ForcingSpec::reference(20.0, 0.0),
            schedule,
            solar: None,
            initial_temps: Some(vec![20.0]),
            mismatch: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = simulate_truth(&net, &cfg, days, &mut rng).unwrap();
        let pm = minimal_parameter_set(&net).unwrap();
        (ThermalModel::new(&net, pm, true), data)
    }

    fn pair_init(data: &Dataset) -> GaussianBelief {
        let layout = StateLayout {
            temps: 1,
            params: 1,
            biases: 1,
        };
        GaussianBelief::new(
            layout,
            Representation::Rc,
            DVector::from_vec(vec![data.temps[0][0], 150.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 50.0 * 50.0, 1e-4])),
        )
    }

    fn pair_noise() -> NoiseModel {
        let layout = StateLayout {
            temps: 1,
            params: 1,
            biases: 1,
        };
        NoiseModel::block_diagonal(layout, 1e-4, 1e-4, 1e-6, 1e-4)
    }

    #[test]
    fn acquisition_freezes_biases_bitwise_and_gates_updates() {
        let (model, data) = pair_setup(true, 2);
        let p = plan(2, 0);
        let noise = pair_noise();
        let sched = VarianceSchedule::solar(25.0, 100.0);
        let init = pair_init(&data);
        let b0 = init.mean()[2];
        let run = run_schedule(
            &model,
            &data,
            &ScheduleSpec {
                kind: FilterKind::Ukf,
                plan: &p,
                schedule: &sched,
                base_noise: &noise,
                sigma: SigmaPointConfig::default(),
            },
            init,
        );
        assert!(run.completed(), "{:?}", run.failure);
        assert!(run.bias_trace.iter().all(|b| b[0].to_bits() == b0.to_bits()));
        let night = p.night_window;
        let m = DayMarkers::default();
        let expected = (1..data.steps())
            .filter(|k| night.contains(k % MINUTES_PER_DAY, &m))
            .count();
        assert_eq!(run.updates, expected);
    }

    #[test]
    fn calm_monitoring_biases_stay_near_zero() {
        let (model, data) = pair_setup(false, 2);
        let p = plan(0, 2);
        let noise = pair_noise();
        let sched = VarianceSchedule::empty();
        let run = run_schedule(
            &model,
            &data,
            &ScheduleSpec {
                kind: FilterKind::Ukf,
                plan: &p,
                schedule: &sched,
                base_noise: &noise,
                sigma: SigmaPointConfig::default(),
            },
            pair_init(&data),
        );
        assert!(run.completed());
        let b = run.belief.mean()[2];
        let sd = run.belief.variance(2).sqrt();
        assert!(b.abs() < 3.0 * sd, "bias {b} sd {sd}");
    }

    #[test]
    fn acquisition_then_monitoring_restores_bias_variance() {
        let (model, data) = pair_setup(false, 2);
        let p = plan(1, 1);
        let noise = pair_noise();
        let sched = VarianceSchedule::empty();
        let run = run_schedule(
            &model,
            &data,
            &ScheduleSpec {
                kind: FilterKind::Ekf,
                plan: &p,
                schedule: &sched,
                base_noise: &noise,
                sigma: SigmaPointConfig::default(),
            },
            pair_init(&data).clone(),
        );
        // EKF refuses the RC representation
        assert!(matches!(
            run.failure,
            Some(Instability {
                error: EstimationError::RepresentationMismatch,
                ..
            })
        ));
        let run = run_schedule(
            &model,
            &data,
            &ScheduleSpec {
                kind: FilterKind::Ukf,
                plan: &p,
                schedule: &sched,
                base_noise: &noise,
                sigma: SigmaPointConfig::default(),
            },
            pair_init(&data),
        );
        assert!(run.completed());
        assert_eq!(run.bias_variance[MINUTES_PER_DAY - 1][0], 0.0);
        assert!(run.bias_variance[MINUTES_PER_DAY][0] > 0.0);
    }
}
