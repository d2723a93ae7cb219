//! TOML run configuration. Key names carry their units.
//!
//! Time is in minutes throughout; a node's `capacitance` times an edge's
//! `resistance` is the RC product in minutes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{FilterKind, SigmaPointConfig};
use crate::graph::{validate_network, Capacitance, Representation, ThermalNetwork};
use crate::montecarlo::Rectify;
use crate::multimode::{Anchor, BoostWindow, ModePlan, NightWindow, VarianceSchedule};
use crate::pipeline::{LearnSettings, PatternMode, Protocol};
use crate::simulator::{
    DisturbanceSchedule, DisturbanceWindow, Facing, ForcingSpec, OvercastSpell, SolarGain, SolarSpec, Sinusoid,
    TruthConfig, MINUTES_PER_DAY,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    /// Finite capacitance; omit for an external (infinite-capacitance) node.
    pub capacitance_kj_per_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub a: String,
    pub b: String,
    pub resistance_deg_min_per_kj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: Vec<NodeConfig>,
    pub edges: Vec<EdgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    pub peak_to_peak_deg: f64,
    pub period_min: f64,
    #[serde(default)]
    pub phase_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub mean_deg: f64,
    #[serde(default)]
    pub walk_std_deg: f64,
    #[serde(default)]
    pub components: Vec<SinusoidConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub zone: String,
    pub start_minute: usize,
    pub end_minute: usize,
    pub magnitude_deg_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarGainConfig {
    pub zone: String,
    pub facing: Facing,
    pub gain_deg_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvercastConfig {
    pub start_day: usize,
    pub days: usize,
    pub cloud_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarConfig {
    pub r_max_w_per_m2: f64,
    pub dawn_mean_minute: usize,
    #[serde(default)]
    pub dawn_swing_min: usize,
    #[serde(default = "default_longest_day")]
    pub longest_day: usize,
    pub clear_min: f64,
    pub clear_max: f64,
    #[serde(default)]
    pub first_day_of_year: usize,
    #[serde(default)]
    pub overcast: Vec<OvercastConfig>,
}

fn default_longest_day() -> usize {
    172
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Days written to the learning dataset.
    pub days: usize,
    /// Further simulated days kept aside as ground truth for prediction.
    #[serde(default)]
    pub holdout_days: usize,
    #[serde(default)]
    pub mismatch_per_deg: f64,
    #[serde(default)]
    pub measurement_noise_std_deg: f64,
    pub initial_temps_deg: Option<Vec<f64>>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceConfig>,
    #[serde(default)]
    pub solar_gains: Vec<SolarGainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_filter")]
    pub filter: FilterKind,
    #[serde(default = "default_representation")]
    pub representation: RepresentationName,
    pub rc_init_mean_min: f64,
    pub rc_init_std_min: f64,
    pub temp_process_var_deg2: f64,
    pub param_process_var_min2: f64,
    pub bias_process_var: f64,
    pub bias_init_var: f64,
    pub measurement_var_deg2: f64,
    #[serde(default = "default_pattern")]
    pub pattern: PatternMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_filter() -> FilterKind {
    FilterKind::Ukf
}
fn default_representation() -> RepresentationName {
    RepresentationName::Rc
}
fn default_pattern() -> PatternMode {
    PatternMode::Uniform
}
fn default_alpha() -> f64 {
    1e-3
}
fn default_beta() -> f64 {
    2.0
}

/// Command-line spelling of a parameter representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepresentationName {
    #[serde(rename = "rc")]
    Rc,
    #[serde(rename = "rc-inv")]
    RcInv,
}

impl From<RepresentationName> for Representation {
    fn from(r: RepresentationName) -> Self {
        match r {
            RepresentationName::Rc => Representation::Rc,
            RepresentationName::RcInv => Representation::RcReciprocal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NightConfig {
    pub start_minute: Option<usize>,
    pub end_minute: Option<usize>,
    pub after_dusk_min: Option<usize>,
    pub before_dawn_min: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub acquisition_days: usize,
    pub monitoring_days: usize,
    pub night: Option<NightConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostWindowConfig {
    /// `"minute:590"`, `"dawn+0"`, `"dusk-100"`.
    pub start: String,
    pub end: String,
    #[serde(default)]
    pub zones: Vec<String>,
    pub p_boost_var: f64,
    pub q_boost_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceScheduleConfig {
    #[serde(default)]
    pub nominal_bias_var: Vec<f64>,
    #[serde(default)]
    pub windows: Vec<BoostWindowConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub horizon_min: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearStudyConfig {
    pub year_days: usize,
    pub start_days: usize,
    #[serde(default = "default_acq")]
    pub acquisition_days: usize,
    #[serde(default = "default_mon")]
    pub monitoring_days: usize,
    #[serde(default = "default_predict_days")]
    pub predict_days: usize,
}

fn default_acq() -> usize {
    3
}
fn default_mon() -> usize {
    4
}
fn default_predict_days() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub rectify: Rectify,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterKind>,
}

fn default_trials() -> usize {
    2000
}
fn default_steps() -> usize {
    crate::montecarlo::DEFAULT_TRIAL_STEPS
}
fn default_filters() -> Vec<FilterKind> {
    vec![FilterKind::Ekf, FilterKind::Ukf]
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            steps: default_steps(),
            rectify: Rectify::Abs,
            filters: default_filters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_unit")]
    pub unit_label: String,
    pub network: Option<NetworkConfig>,
    pub forcing: Option<ForcingConfig>,
    pub solar: Option<SolarConfig>,
    pub truth: Option<TruthSection>,
    pub estimation: Option<EstimationConfig>,
    pub plan: Option<PlanConfig>,
    pub variance_schedule: Option<VarianceScheduleConfig>,
    pub predict: Option<PredictConfig>,
    pub year_study: Option<YearStudyConfig>,
    pub montecarlo: Option<MonteCarloConfig>,
}

fn default_unit() -> String {
    "degC".into()
}

/// A parsed configuration plus the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        text: text.to_string(),
    })
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
    s.as_ref()
        .ok_or_else(|| ConfigError::Invalid(format!("missing [{name}] section")))
}

/// Parse `"minute:590"`, `"dawn+30"`, `"dusk-100"` or `"dawn"`.
pub fn parse_anchor(s: &str) -> Result<Anchor, ConfigError> {
    let s = s.trim();
    if let Some(m) = s.strip_prefix("minute:") {
        return m
            .trim()
            .parse()
            .map(Anchor::Minute)
            .or_else(|_| invalid(format!("bad minute anchor {s:?}")));
    }
    let (base, rest) = if let Some(r) = s.strip_prefix("dawn") {
        (Anchor::Dawn(0), r)
    } else if let Some(r) = s.strip_prefix("dusk") {
        (Anchor::Dusk(0), r)
    } else {
        return invalid(format!("anchor {s:?} must start with minute:, dawn or dusk"));
    };
    let off: i64 = if rest.trim().is_empty() {
        0
    } else {
        rest.trim()
            .trim_start_matches('+')
            .parse()
            .or_else(|_| invalid(format!("bad anchor offset in {s:?}")))?
    };
    Ok(match base {
        Anchor::Dawn(_) => Anchor::Dawn(off),
        _ => Anchor::Dusk(off),
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(net) = &self.network {
            let built = self.build_network_from(net)?;
            let report = validate_network(&built);
            if !report.is_valid() {
                let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
                return invalid(format!("network: {}", msgs.join("; ")));
            }
        }
        if let Some(t) = &self.truth {
            for d in &t.disturbances {
                self.zone_index(&d.zone)?;
                if d.start_minute >= d.end_minute || d.end_minute > MINUTES_PER_DAY {
                    return invalid(format!(
                        "disturbance window [{}, {}) outside the day",
                        d.start_minute, d.end_minute
                    ));
                }
            }
            for g in &t.solar_gains {
                self.zone_index(&g.zone)?;
            }
            if !(t.measurement_noise_std_deg >= 0.0) {
                return invalid("measurement_noise_std_deg must be >= 0");
            }
            if !t.solar_gains.is_empty() && self.solar.is_none() {
                return invalid("solar_gains need a [solar] section");
            }
        }
        if let Some(s) = &self.solar {
            if !(s.r_max_w_per_m2 > 0.0) || !(0.0..=1.0).contains(&s.clear_min) || s.clear_max < s.clear_min {
                return invalid("solar needs r_max_w_per_m2 > 0 and 0 <= clear_min <= clear_max");
            }
        }
        if let Some(e) = &self.estimation {
            let vars = [
                e.rc_init_std_min,
                e.temp_process_var_deg2,
                e.param_process_var_min2,
                e.bias_process_var,
                e.bias_init_var,
            ];
            if vars.iter().any(|v| !(*v >= 0.0)) || !(e.rc_init_mean_min > 0.0) || !(e.measurement_var_deg2 > 0.0) {
                return invalid("estimation variances must be >= 0, rc_init_mean_min and measurement_var_deg2 > 0");
            }
            if !(e.alpha > 0.0) {
                return invalid("alpha must be > 0");
            }
        }
        if let Some(v) = &self.variance_schedule {
            self.variance_schedule_from(v)?
                .validate()
                .map_err(ConfigError::Invalid)?;
        }
        if let Some(p) = &self.plan {
            self.night_from(p)?;
        }
        Ok(())
    }

    fn build_network_from(&self, cfg: &NetworkConfig) -> Result<ThermalNetwork, ConfigError> {
        let mut net = ThermalNetwork::new();
        let mut ids = BTreeMap::new();
        for n in &cfg.nodes {
            let cap = match n.capacitance_kj_per_deg {
                Some(c) => Capacitance::Finite(c),
                None => Capacitance::Infinite,
            };
            if ids.insert(n.name.clone(), net.add_node(&n.name, cap)).is_some() {
                return invalid(format!("duplicate node name {:?}", n.name));
            }
        }
        for e in &cfg.edges {
            let a = *ids
                .get(&e.a)
                .ok_or_else(|| ConfigError::Invalid(format!("edge refers to unknown node {:?}", e.a)))?;
            let b = *ids
                .get(&e.b)
                .ok_or_else(|| ConfigError::Invalid(format!("edge refers to unknown node {:?}", e.b)))?;
            net.add_edge(a, b, e.resistance_deg_min_per_kj);
        }
        Ok(net)
    }

    pub fn network(&self) -> Result<ThermalNetwork, ConfigError> {
        self.build_network_from(section(&self.network, "network")?)
    }

    /// Zone names in state order (finite nodes, ascending index).
    pub fn zone_names(&self) -> Result<Vec<String>, ConfigError> {
        let net = self.network()?;
        Ok(net.finite_nodes().iter().map(|&i| net.nodes()[i].name.clone()).collect())
    }

    pub fn zone_index(&self, name: &str) -> Result<usize, ConfigError> {
        self.zone_names()?
            .iter()
            .position(|z| z == name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown zone {name:?}")))
    }

    pub fn forcing_spec(&self) -> Result<ForcingSpec, ConfigError> {
        let f = section(&self.forcing, "forcing")?;
        Ok(ForcingSpec {
            mean: f.mean_deg,
            components: f
                .components
                .iter()
                .map(|c| Sinusoid {
                    peak_to_peak: c.peak_to_peak_deg,
                    period: c.period_min,
                    phase: c.phase_min,
                })
                .collect(),
            noise_std: f.walk_std_deg,
        })
    }

    pub fn solar_spec(&self) -> Option<SolarSpec> {
        self.solar.as_ref().map(|s| SolarSpec {
            r_max: s.r_max_w_per_m2,
            dawn_mean: s.dawn_mean_minute,
            dawn_swing: s.dawn_swing_min,
            longest_day: s.longest_day,
            clear_range: (s.clear_min, s.clear_max),
            overcast: s
                .overcast
                .iter()
                .map(|o| OvercastSpell {
                    start_day: o.start_day,
                    days: o.days,
                    cloud_factor: o.cloud_factor,
                })
                .collect(),
            first_day_of_year: s.first_day_of_year,
        })
    }

    /// Solar normalization; 1 when no solar section is present.
    pub fn r_max(&self) -> f64 {
        self.solar.as_ref().map_or(1.0, |s| s.r_max_w_per_m2)
    }

    pub fn truth_section(&self) -> Result<&TruthSection, ConfigError> {
        section(&self.truth, "truth")
    }

    pub fn truth_config(&self) -> Result<TruthConfig, ConfigError> {
        let t = self.truth_section()?;
        let zones = self.zone_names()?.len();
        let mut schedule = DisturbanceSchedule::none(zones);
        for d in &t.disturbances {
            schedule.windows[self.zone_index(&d.zone)?].push(DisturbanceWindow {
                start: d.start_minute,
                end: d.end_minute,
                magnitude: d.magnitude_deg_per_min,
            });
        }
        for g in &t.solar_gains {
            schedule.solar[self.zone_index(&g.zone)?] = Some(SolarGain {
                facing: g.facing,
                gain: g.gain_deg_per_min,
            });
        }
        Ok(TruthConfig {
            forcing: self.forcing_spec()?,
            schedule,
            solar: self.solar_spec(),
            initial_temps: t.initial_temps_deg.clone(),
            mismatch: t.mismatch_per_deg,
        })
    }

    fn night_from(&self, p: &PlanConfig) -> Result<NightWindow, ConfigError> {
        let Some(n) = &p.night else {
            return Ok(NightWindow::default());
        };
        match (n.start_minute, n.end_minute, n.after_dusk_min, n.before_dawn_min) {
            (Some(s), Some(e), None, None) if s < MINUTES_PER_DAY && e <= MINUTES_PER_DAY => Ok(NightWindow::Fixed {
                start_minute: s,
                end_minute: e,
            }),
            (None, None, a, b) => Ok(NightWindow::Markers {
                after_dusk: a.unwrap_or(30),
                before_dawn: b.unwrap_or(30),
            }),
            _ => invalid("[plan.night] takes either start_minute/end_minute or after_dusk_min/before_dawn_min"),
        }
    }

    pub fn mode_plan(&self) -> Result<ModePlan, ConfigError> {
        let p = section(&self.plan, "plan")?;
        Ok(ModePlan {
            acquisition_days: p.acquisition_days,
            monitoring_days: p.monitoring_days,
            night_window: self.night_from(p)?,
        })
    }

    fn variance_schedule_from(&self, v: &VarianceScheduleConfig) -> Result<VarianceSchedule, ConfigError> {
        let mut windows = Vec::new();
        for w in &v.windows {
            let zones = w
                .zones
                .iter()
                .map(|z| self.zone_index(z))
                .collect::<Result<Vec<_>, _>>()?;
            windows.push(BoostWindow {
                start: parse_anchor(&w.start)?,
                end: parse_anchor(&w.end)?,
                zones,
                p_boost: w.p_boost_var,
                q_boost: w.q_boost_factor,
            });
        }
        Ok(VarianceSchedule {
            windows,
            nominal_bias_q: v.nominal_bias_var.clone(),
        })
    }

    pub fn variance_schedule(&self) -> Result<VarianceSchedule, ConfigError> {
        match &self.variance_schedule {
            Some(v) => self.variance_schedule_from(v),
            None => Ok(VarianceSchedule::empty()),
        }
    }

    pub fn learn_settings(&self) -> Result<LearnSettings, ConfigError> {
        let e = section(&self.estimation, "estimation")?;
        Ok(LearnSettings {
            kind: e.filter,
            representation: e.representation.into(),
            rc_init_mean: e.rc_init_mean_min,
            rc_init_std: e.rc_init_std_min,
            temp_q: e.temp_process_var_deg2,
            param_q: e.param_process_var_min2,
            bias_q: e.bias_process_var,
            bias_init_var: e.bias_init_var,
            meas_var: e.measurement_var_deg2,
            plan: self.mode_plan()?,
            schedule: self.variance_schedule()?,
            sigma: SigmaPointConfig {
                alpha: e.alpha,
                kappa: e.kappa,
                beta: e.beta,
            },
            pattern: e.pattern,
            r_max: self.r_max(),
        })
    }

    pub fn protocol(&self) -> Result<Protocol, ConfigError> {
        let y = section(&self.year_study, "year_study")?;
        Ok(Protocol {
            acquisition_days: y.acquisition_days,
            monitoring_days: y.monitoring_days,
            predict_days: y.predict_days,
        })
    }
}
