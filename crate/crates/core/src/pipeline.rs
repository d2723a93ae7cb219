//! Learn-then-predict runs and the rolling year study.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::estimators::{EstimationError, FilterKind, GaussianBelief, NoiseModel, SigmaPointConfig, ThermalModel};
use crate::graph::{minimal_parameter_set, GraphError, Representation, ThermalNetwork};
use crate::multimode::{run_schedule, ModePlan, ScheduleRun, ScheduleSpec, VarianceSchedule};
use crate::pattern::{
    split_days, summarize_solar_day, uniform_average, weighted_pattern, DisturbancePattern, PatternError,
    SolarDaySummary,
};
use crate::prediction::{pool_leadtime, predict, rms_error, ErrorReport, PredictionError, PredictionRun};
use crate::simulator::{Dataset, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    None,
    Uniform,
    SolarWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnSettings {
    pub kind: FilterKind,
    pub representation: Representation,
    pub rc_init_mean: f64,
    pub rc_init_std: f64,
    pub temp_q: f64,
    pub param_q: f64,
    pub bias_q: f64,
    pub bias_init_var: f64,
    pub meas_var: f64,
    pub plan: ModePlan,
    pub schedule: VarianceSchedule,
    pub sigma: SigmaPointConfig,
    pub pattern: PatternMode,
    /// Peak solar intensity used to normalize daily summaries.
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    NegativeParameter,
    CovarianceCollapse,
    NoPattern,
    NonFinite,
}

impl FailureClass {
    pub const ALL: [FailureClass; 4] = [
        FailureClass::NegativeParameter,
        FailureClass::CovarianceCollapse,
        FailureClass::NoPattern,
        FailureClass::NonFinite,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureClass::NegativeParameter => "negative-parameter",
            FailureClass::CovarianceCollapse => "covariance-collapse",
            FailureClass::NoPattern => "no-pattern",
            FailureClass::NonFinite => "non-finite",
        }
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub class: FailureClass,
    pub detail: String,
}

impl Failure {
    fn new(class: FailureClass, detail: impl Into<String>) -> Self {
        Self {
            class,
            detail: detail.into(),
        }
    }
}

impl From<&EstimationError> for FailureClass {
    fn from(e: &EstimationError) -> Self {
        match e {
            EstimationError::SingularUpdate | EstimationError::SquareRootFailed | EstimationError::Indefinite => {
                FailureClass::CovarianceCollapse
            }
            _ => FailureClass::NonFinite,
        }
    }
}

pub struct Learned {
    pub model: ThermalModel,
    pub initial: GaussianBelief,
    pub run: ScheduleRun,
    pub pattern: Option<DisturbancePattern>,
}

impl Learned {
    pub fn params(&self) -> &[f64] {
        self.run.belief.state.params()
    }
}

pub fn build_model(net: &ThermalNetwork, rep: Representation) -> Result<ThermalModel, GraphError> {
    let pm = minimal_parameter_set(net)?.with_representation(rep);
    Ok(ThermalModel::new(net, pm, true))
}

pub fn initial_belief(model: &ThermalModel, first_temps: &[f64], s: &LearnSettings) -> GaussianBelief {
    let layout = crate::estimators::ProcessModel::layout(model);
    let rep = model.parameter_map().representation;
    let (p_mean, p_var) = match rep {
        Representation::Rc => (s.rc_init_mean, s.rc_init_std * s.rc_init_std),
        // first-order transform of the RC prior
        Representation::RcReciprocal => {
            let m = 1.0 / s.rc_init_mean;
            let sd = s.rc_init_std / (s.rc_init_mean * s.rc_init_mean);
            (m, sd * sd)
        }
    };
    let mut mean = DVector::zeros(layout.len());
    let mut var = DVector::zeros(layout.len());
    for (z, &t) in first_temps.iter().enumerate() {
        mean[z] = t;
        var[z] = s.meas_var;
    }
    for i in layout.param_range() {
        mean[i] = p_mean;
        var[i] = p_var;
    }
    for i in layout.bias_range() {
        var[i] = s.bias_init_var;
    }
    GaussianBelief::new(layout, rep, mean, DMatrix::from_diagonal(&var))
}

pub fn noise_model(model: &ThermalModel, s: &LearnSettings) -> NoiseModel {
    let layout = crate::estimators::ProcessModel::layout(model);
    let param_q = match model.parameter_map().representation {
        Representation::Rc => s.param_q,
        Representation::RcReciprocal => s.param_q / s.rc_init_mean.powi(4),
    };
    NoiseModel::block_diagonal(layout, s.temp_q, param_q, s.bias_q, s.meas_var)
}

pub fn solar_summaries(data: &Dataset, r_max: f64) -> Result<Vec<SolarDaySummary>, PatternError> {
    (0..data.days())
        .map(|d| {
            let a = d * MINUTES_PER_DAY;
            summarize_solar_day(&data.solar[a..a + MINUTES_PER_DAY], data.markers(d), r_max)
        })
        .collect()
}

/// Run the schedule over `data` and learn a pattern from the monitoring days.
pub fn learn(net: &ThermalNetwork, data: &Dataset, s: &LearnSettings) -> Result<Learned, (Failure, Option<Learned>)> {
    let model = build_model(net, s.representation)
        .map_err(|e| (Failure::new(FailureClass::NonFinite, e.to_string()), None))?;
    let init = initial_belief(&model, &data.temps[0], s);
    let noise = noise_model(&model, s);
    let spec = ScheduleSpec {
        kind: s.kind,
        plan: &s.plan,
        schedule: &s.schedule,
        base_noise: &noise,
        sigma: s.sigma,
    };
    let run = run_schedule(&model, data, &spec, init.clone());
    let mut learned = Learned {
        model,
        initial: init,
        run,
        pattern: None,
    };
    if let Some(f) = &learned.run.failure {
        let failure = Failure::new(FailureClass::from(&f.error), format!("step {}: {}", f.step, f.error));
        return Err((failure, Some(learned)));
    }
    if let Some(check) = check_posterior(&learned) {
        return Err((check, Some(learned)));
    }
    let monitoring: Vec<_> = split_days(&learned.run.bias_trace)
        .into_iter()
        .skip(s.plan.acquisition_days)
        .collect();
    let pattern = match s.pattern {
        PatternMode::None => None,
        _ if monitoring.is_empty() => None,
        PatternMode::Uniform => Some(uniform_average(&monitoring)),
        PatternMode::SolarWeighted => {
            let summaries = solar_summaries(data, s.r_max)
                .map_err(|e| (Failure::new(FailureClass::NonFinite, e.to_string()), None))?;
            Some(weighted_pattern(&monitoring, &summaries[s.plan.acquisition_days..], s.r_max))
        }
    };
    match pattern {
        None => Ok(learned),
        Some(Ok(p)) => {
            learned.pattern = Some(p);
            Ok(learned)
        }
        Some(Err(e)) => {
            let class = match e {
                PatternError::NoPattern { .. } => FailureClass::NoPattern,
                _ => FailureClass::NonFinite,
            };
            Err((Failure::new(class, e.to_string()), Some(learned)))
        }
    }
}

/// Posterior sanity at the end of learning.
fn check_posterior(l: &Learned) -> Option<Failure> {
    let b = &l.run.belief;
    if let Some((i, v)) = b.state.params().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Some(Failure::new(
            FailureClass::NegativeParameter,
            format!("parameter {i} ended at {v}"),
        ));
    }
    let p0 = &l.initial.covariance;
    for i in 0..b.layout().len() {
        if b.variance(i) < 1e-15 * p0[(i, i)] {
            return Some(Failure::new(
                FailureClass::CovarianceCollapse,
                format!("variance of state {i} collapsed to {}", b.variance(i)),
            ));
        }
    }
    None
}

/// Predict `horizon` steps from dataset step `start` with learned parameters.
pub fn predict_from(
    model: &ThermalModel,
    params: &[f64],
    pattern: Option<&DisturbancePattern>,
    data: &Dataset,
    start: usize,
    horizon: usize,
    r_max: f64,
) -> Result<(Vec<Vec<f64>>, ErrorReport), PredictionError> {
    if start + horizon >= data.steps() {
        return Err(PredictionError::ShortInput {
            need: start + horizon + 1,
            got: data.steps(),
        });
    }
    let first_day = start / MINUTES_PER_DAY;
    let last_day = (start + horizon).div_ceil(MINUTES_PER_DAY).min(data.days());
    let forecast = (first_day..last_day)
        .map(|d| {
            let a = d * MINUTES_PER_DAY;
            summarize_solar_day(&data.solar[a..a + MINUTES_PER_DAY], data.markers(d), r_max)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let run = PredictionRun {
        initial_temps: data.temps[start].clone(),
        start_minute: start % MINUTES_PER_DAY,
        horizon,
        params: params.to_vec(),
        pattern: pattern.cloned(),
        forecast,
        external: data.external[start..start + horizon].to_vec(),
    };
    let pred = predict(&run, model)?;
    let truth = &data.temps[start + 1..start + 1 + horizon];
    let report = rms_error(&pred, truth)?;
    Ok((pred, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub acquisition_days: usize,
    pub monitoring_days: usize,
    pub predict_days: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            acquisition_days: 3,
            monitoring_days: 4,
            predict_days: 1,
        }
    }
}

impl Protocol {
    pub fn learn_days(&self) -> usize {
        self.acquisition_days + self.monitoring_days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRun {
    pub start_day: usize,
    pub failure: Option<(FailureClass, String)>,
    pub rms: Option<f64>,
    pub leadtime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub runs: Vec<StudyRun>,
    pub successes: usize,
    pub failures: Vec<(FailureClass, usize)>,
    /// Pooled over successful runs.
    pub leadtime: Vec<f64>,
}

impl StudyReport {
    pub fn success_fraction(&self) -> f64 {
        self.successes as f64 / self.runs.len().max(1) as f64
    }

    pub fn failure_count(&self, class: FailureClass) -> usize {
        self.failures.iter().find(|(c, _)| *c == class).map_or(0, |(_, n)| *n)
    }

    /// Pooled RMS over the first `minutes` leads.
    pub fn rms_within(&self, minutes: usize) -> f64 {
        let c = &self.leadtime[..minutes.min(self.leadtime.len())];
        (c.iter().map(|v| v * v).sum::<f64>() / c.len().max(1) as f64).sqrt()
    }
}

/// One learn-and-predict run per start day, each on its own slice of `data`.
pub fn year_study(
    net: &ThermalNetwork,
    data: &Dataset,
    base: &LearnSettings,
    protocol: Protocol,
    start_days: &[usize],
) -> StudyReport {
    let mut settings = base.clone();
    settings.plan.acquisition_days = protocol.acquisition_days;
    settings.plan.monitoring_days = protocol.monitoring_days;
    let span = protocol.learn_days() + protocol.predict_days;
    let runs: Vec<StudyRun> = start_days
        .par_iter()
        .map(|&start_day| {
            let slice = data.slice_days(start_day, span);
            study_run(net, &slice, &settings, protocol, start_day)
        })
        .collect();

    let successes = runs.iter().filter(|r| r.failure.is_none()).count();
    let failures = FailureClass::ALL
        .iter()
        .map(|&c| (c, runs.iter().filter(|r| matches!(r.failure, Some((k, _)) if k == c)).count()))
        .collect();
    let curves: Vec<Vec<f64>> = runs
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.leadtime.clone())
        .collect();
    StudyReport {
        leadtime: pool_leadtime(&curves),
        runs,
        successes,
        failures,
    }
}

fn study_run(net: &ThermalNetwork, slice: &Dataset, s: &LearnSettings, p: Protocol, start_day: usize) -> StudyRun {
    let fail = |class: FailureClass, detail: String| StudyRun {
        start_day,
        failure: Some((class, detail)),
        rms: None,
        leadtime: Vec::new(),
    };
    let learn_steps = p.learn_days() * MINUTES_PER_DAY;
    let horizon = p.predict_days * MINUTES_PER_DAY;
    if slice.steps() < learn_steps + horizon {
        return fail(FailureClass::NonFinite, "dataset too short".into());
    }
    let learn_data = slice.slice_days(0, p.learn_days());
    let learned = match learn(net, &learn_data, s) {
        Ok(l) => l,
        Err((f, _)) => return fail(f.class, f.detail),
    };
    // the prediction starts from the last learned step, so one lead short
    match predict_from(
        &learned.model,
        learned.params(),
        learned.pattern.as_ref(),
        slice,
        learn_steps - 1,
        horizon,
        s.r_max,
    ) {
        Ok((_, report)) => StudyRun {
            start_day,
            failure: None,
            rms: Some(report.overall_rms()),
            leadtime: report.leadtime,
        },
        Err(e) => fail(FailureClass::NonFinite, e.to_string()),
    }
}
