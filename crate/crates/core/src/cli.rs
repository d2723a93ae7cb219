//! Command-line front end. Every command works inside one run directory.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{self, ConfigError, LoadedConfig, RunConfig};
use crate::estimators::FilterKind;
use crate::graph::Representation;
use crate::io::{self, IoError, Manifest, RunDir, Snapshot, TruthSidecar};
use crate::montecarlo::{run_campaign, CampaignSettings};
use crate::pipeline::{build_model, learn, predict_from, year_study, FailureClass, PatternMode};
use crate::plot::{line_chart, Series};
use crate::scenario::{concat, generate, ScenarioError};
use crate::simulator::{SimError, MINUTES_PER_DAY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => c.into(),
            ScenarioError::Sim(SimError::NonFinite { step }) => {
                CliError::Numerical(format!("simulation diverged at step {step}"))
            }
            ScenarioError::Sim(s) => CliError::Config(s.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "graybox", version, about = "Gray-box RC thermal model identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset, its holdout days and a truth sidecar.
    Generate(Args),
    /// Learn parameters, bias traces and a disturbance pattern from dataset.csv.
    Estimate(Args),
    /// Roll the learned model forward and score it against the holdout.
    Predict(Args),
    /// Paired EKF/UKF Monte Carlo campaign on the two-parameter benchmark.
    Montecarlo(Args),
    /// Learn-and-predict runs over start days of a simulated year.
    Yearstudy(Args),
    /// Summarize the artefacts in a run directory.
    Report(Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Ekf,
    Ukf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepresentationArg {
    Rc,
    #[value(name = "rc-inv")]
    RcInv,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    #[arg(long, value_enum, alias = "filters")]
    pub filter: Option<FilterArg>,
    #[arg(long, value_enum)]
    pub representation: Option<RepresentationArg>,
    #[arg(long)]
    pub no_pattern: bool,
    /// Prediction horizon in minutes.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Monte Carlo trials, or year-study start days.
    #[arg(long)]
    pub trials: Option<usize>,
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
        Command::Yearstudy(a) => cmd_yearstudy(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Cap rayon's worker count from `GRAYBOX_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GRAYBOX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("GRAYBOX_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn load_config(a: &Args) -> Result<LoadedConfig, CliError> {
    let path = a
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    config::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn seed_of(a: &Args, cfg: &RunConfig) -> u64 {
    a.seed.unwrap_or(cfg.seed)
}

fn filter_kind(f: FilterArg) -> FilterKind {
    match f {
        FilterArg::Ekf => FilterKind::Ekf,
        FilterArg::Ukf => FilterKind::Ukf,
    }
}

fn start_run(a: &Args, command: &str, loaded: &LoadedConfig) -> RunDir {
    let seed = seed_of(a, &loaded.config);
    let mut m = Manifest::new(command, seed, &loaded.text);
    if let Some(f) = a.filter {
        m.option("filter", filter_kind(f));
    }
    if let Some(r) = a.representation {
        m.option("representation", format!("{r:?}").to_lowercase());
    }
    if a.no_pattern {
        m.option("no_pattern", true);
    }
    if let Some(h) = a.horizon {
        m.option("horizon_min", h);
    }
    if let Some(t) = a.trials {
        m.option("trials", t);
    }
    RunDir::new(&a.out, m)
}

fn cmd_generate(a: &Args) -> Result<String, CliError> {
    let loaded = load_config(a)?;
    let cfg = &loaded.config;
    let seed = seed_of(a, cfg);
    let t = cfg.truth_section()?;
    let mut dir = start_run(a, "generate", &loaded);
    let g = generate(cfg, seed, t.days, t.holdout_days)?;
    dir.write("dataset.csv", &io::dataset_to_csv(&g.measured))?;
    if t.holdout_days > 0 {
        dir.write("holdout.csv", &io::dataset_to_csv(&g.holdout()))?;
    }
    let net = cfg.network()?;
    let pm = crate::graph::minimal_parameter_set(&net).map_err(|e| CliError::Config(e.to_string()))?;
    let sidecar = TruthSidecar {
        zone_names: cfg.zone_names()?,
        parameter_labels: io::parameter_labels(&net, &pm),
        rc_minutes: pm.true_values(&net),
        mismatch_per_deg: t.mismatch_per_deg,
        measurement_noise_std_deg: t.measurement_noise_std_deg,
        days: t.days,
        holdout_days: t.holdout_days,
    };
    dir.write("truth.json", &io::to_json(&sidecar))?;
    dir.finish()?;
    Ok(format!(
        "wrote {} rows ({} days) to {}",
        g.measured.steps(),
        t.days,
        a.out.join("dataset.csv").display()
    ))
}

fn learn_settings(a: &Args, cfg: &RunConfig) -> Result<crate::pipeline::LearnSettings, CliError> {
    let mut s = cfg.learn_settings()?;
    if let Some(f) = a.filter {
        s.kind = filter_kind(f);
    }
    if let Some(r) = a.representation {
        s.representation = match r {
            RepresentationArg::Rc => Representation::Rc,
            RepresentationArg::RcInv => Representation::RcReciprocal,
        };
    }
    if a.no_pattern {
        s.pattern = PatternMode::None;
    }
    if s.kind == FilterKind::Ekf && s.representation == Representation::Rc {
        return Err(CliError::Config(
            "the EKF needs the rc-inv representation (pass --representation rc-inv)".into(),
        ));
    }
    Ok(s)
}

fn cmd_estimate(a: &Args) -> Result<String, CliError> {
    let loaded = load_config(a)?;
    let cfg = &loaded.config;
    let s = learn_settings(a, cfg)?;
    let net = cfg.network()?;
    let zones = cfg.zone_names()?;
    let mut dir = start_run(a, "estimate", &loaded);
    let text = dir.input("dataset.csv")?;
    let data = io::dataset_from_csv(&text, &dir.path("dataset.csv").display().to_string())?;
    if data.zone_names != zones {
        return Err(CliError::Data(format!(
            "dataset zones {:?} differ from the config network {:?}",
            data.zone_names, zones
        )));
    }
    let learn_days = s.plan.acquisition_days + s.plan.monitoring_days;
    if learn_days == 0 || data.days() < learn_days {
        return Err(CliError::Data(format!(
            "plan needs {learn_days} whole days, dataset has {}",
            data.days()
        )));
    }
    let learn_data = data.slice_days(0, learn_days);
    let _ = std::fs::remove_file(dir.path("pattern.csv"));

    let (learned, failure) = match learn(&net, &learn_data, &s) {
        Ok(l) => (Some(l), None),
        Err((f, l)) => (l, Some(f)),
    };
    if let Some(l) = &learned {
        let labels = io::parameter_labels(&net, l.model.parameter_map());
        dir.write("params.csv", &io::param_trace_csv(&l.run, &labels))?;
        dir.write("biases.csv", &io::bias_trace_csv(&l.run, &zones))?;
        let b = &l.run.belief;
        let layout = b.layout();
        let rep = l.model.parameter_map().representation;
        let snap = Snapshot {
            filter: s.kind,
            representation: rep,
            zone_names: zones.clone(),
            parameter_labels: labels,
            params: b.state.params().to_vec(),
            rc_minutes: b.state.params().iter().map(|&p| rep.to_rc(p)).collect(),
            param_variance: layout.param_range().map(|i| b.variance(i)).collect(),
            temps: b.state.temps().to_vec(),
            biases: b.state.biases().to_vec(),
            steps: l.run.param_trace.len(),
            updates: l.run.updates,
            reanchors: l.run.reanchors,
            covariance: (0..layout.len())
                .map(|i| (0..layout.len()).map(|j| b.covariance[(i, j)]).collect())
                .collect(),
        };
        dir.write("snapshot.json", &io::to_json(&snap))?;
        match &l.pattern {
            Some(p) => dir.write("pattern.csv", &io::pattern_to_csv(p, &zones))?,
            None if failure.is_none() => dir.manifest.notes.push("no pattern requested".into()),
            None => {}
        }
    }
    if let Some(f) = failure {
        dir.manifest.status = "failed".into();
        dir.manifest.failure_class = Some(f.class.label().into());
        dir.manifest.notes.push(f.detail.clone());
        dir.finish()?;
        return Err(CliError::Numerical(format!("{}: {}", f.class.label(), f.detail)));
    }
    let l = learned.expect("success carries a result");
    dir.finish()?;
    Ok(format!(
        "learned {} parameters over {} steps ({} updates){}",
        l.params().len(),
        l.run.param_trace.len(),
        l.run.updates,
        if l.pattern.is_some() { ", pattern written" } else { "" }
    ))
}

fn cmd_predict(a: &Args) -> Result<String, CliError> {
    let loaded = load_config(a)?;
    let cfg = &loaded.config;
    let net = cfg.network()?;
    let zones = cfg.zone_names()?;
    let mut dir = start_run(a, "predict", &loaded);
    let snap: Snapshot = serde_json::from_str(&dir.input("snapshot.json")?)
        .map_err(|e| CliError::Data(format!("snapshot.json: {e}")))?;
    let dataset_path = dir.path("dataset.csv").display().to_string();
    let mut data = io::dataset_from_csv(&dir.input("dataset.csv")?, &dataset_path)?;
    if dir.path("holdout.csv").exists() {
        let holdout_path = dir.path("holdout.csv").display().to_string();
        let holdout = io::dataset_from_csv(&dir.input("holdout.csv")?, &holdout_path)?;
        data = concat(&data, &holdout).map_err(|e| CliError::Data(format!("holdout.csv: {e}")))?;
    }
    if snap.zone_names != zones || data.zone_names != zones {
        return Err(CliError::Data("zone names differ between config, snapshot and dataset".into()));
    }
    let pattern = if a.no_pattern || !dir.path("pattern.csv").exists() {
        None
    } else {
        let path = dir.path("pattern.csv").display().to_string();
        let (p, pz) = io::pattern_from_csv(&dir.input("pattern.csv")?, &path)?;
        if pz != zones {
            return Err(CliError::Data("pattern zones differ from the network".into()));
        }
        Some(p)
    };
    dir.manifest.option("pattern", if pattern.is_some() { "learned" } else { "none" });
    let horizon = a
        .horizon
        .or(cfg.predict.as_ref().map(|p| p.horizon_min))
        .unwrap_or(2 * MINUTES_PER_DAY);
    if snap.steps == 0 {
        return Err(CliError::Data("snapshot covers no steps".into()));
    }
    let start = snap.steps - 1;
    if start + horizon >= data.steps() {
        return Err(CliError::Data(format!(
            "horizon {horizon} needs {} steps of truth, dataset and holdout have {}",
            start + horizon + 1,
            data.steps()
        )));
    }
    let model = build_model(&net, snap.representation).map_err(|e| CliError::Config(e.to_string()))?;
    if model.parameter_map().len() != snap.params.len() {
        return Err(CliError::Data("snapshot parameter count does not match the network".into()));
    }
    let (pred, report) = predict_from(&model, &snap.params, pattern.as_ref(), &data, start, horizon, cfg.r_max())
        .map_err(|e| match e {
            crate::prediction::PredictionError::Diverged { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.to_string()),
        })?;
    let truth = &data.temps[start + 1..start + 1 + horizon];
    dir.write("prediction.csv", &io::prediction_csv(start, &pred, truth, &zones))?;
    let mut rows: Vec<Vec<String>> = zones
        .iter()
        .zip(&report.zone_rms)
        .map(|(z, v)| vec![z.clone(), v.to_string()])
        .collect();
    rows.push(vec!["all".into(), report.overall_rms().to_string()]);
    dir.write("prediction_rms.csv", &io::table_csv(&["zone", "rms_deg"], &rows))?;
    dir.write("prediction_leadtime.csv", &io::leadtime_csv(&report.leadtime))?;
    let cols: Vec<Vec<f64>> = (0..zones.len()).map(|z| pred.iter().map(|r| r[z]).collect()).collect();
    let tcols: Vec<Vec<f64>> = (0..zones.len()).map(|z| truth.iter().map(|r| r[z]).collect()).collect();
    let labels: Vec<(String, String)> = zones.iter().map(|z| (format!("{z} pred"), format!("{z} truth"))).collect();
    let mut series = Vec::new();
    for z in 0..zones.len() {
        series.push(Series { label: &labels[z].0, y: &cols[z] });
        series.push(Series { label: &labels[z].1, y: &tcols[z] });
    }
    let unit = &cfg.unit_label;
    dir.write(
        "prediction.svg",
        &line_chart("Prediction vs truth", "lead (min)", unit, 1.0, 1.0, &series),
    )?;
    dir.finish()?;
    Ok(format!(
        "{horizon}-minute prediction: overall RMS {:.4} {unit}, max abs {:.4} {unit}",
        report.overall_rms(),
        report.max_abs
    ))
}

fn cmd_montecarlo(a: &Args) -> Result<String, CliError> {
    let loaded = match &a.config {
        Some(_) => load_config(a)?,
        None => {
            let seed = a
                .seed
                .ok_or_else(|| CliError::Config("montecarlo needs --seed or --config".into()))?;
            config::parse(&format!("seed = {seed}\n"))?
        }
    };
    let cfg = &loaded.config;
    let mc = cfg.montecarlo.clone().unwrap_or_default();
    let kinds = match a.filter {
        Some(f) => vec![filter_kind(f)],
        None => mc.filters.clone(),
    };
    let settings = CampaignSettings {
        trials: a.trials.unwrap_or(mc.trials),
        steps: mc.steps,
        seed: seed_of(a, cfg),
        kinds,
        rectify: mc.rectify,
    };
    if settings.trials == 0 || settings.kinds.is_empty() {
        return Err(CliError::Config("montecarlo needs at least one trial and one filter".into()));
    }
    let mut dir = start_run(a, "montecarlo", &loaded);
    let result = run_campaign(&settings);
    let rows: Vec<Vec<String>> = result
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.kind.to_string(),
                s.trials.to_string(),
                s.unstable.to_string(),
                s.instability_fraction().to_string(),
                s.mean_p1_error.to_string(),
                s.mean_p2_error.to_string(),
            ]
        })
        .collect();
    dir.write(
        "montecarlo_summary.csv",
        &io::table_csv(
            &["filter", "trials", "unstable", "instability_fraction", "mean_abs_p1_error", "mean_abs_p2_error"],
            &rows,
        ),
    )?;
    let mut trows = Vec::new();
    for t in &result.trials {
        for o in &t.outcomes {
            trows.push(vec![
                t.index.to_string(),
                o.kind.to_string(),
                t.config.p1.to_string(),
                t.config.p2.to_string(),
                t.config.meas_std.to_string(),
                o.unstable.to_string(),
                o.failed_at.map_or(String::new(), |s| s.to_string()),
                o.p1_error.to_string(),
                o.p2_error.to_string(),
            ]);
        }
    }
    dir.write(
        "montecarlo_trials.csv",
        &io::table_csv(
            &["trial", "filter", "p1", "p2", "meas_std", "unstable", "failed_at", "p1_error", "p2_error"],
            &trows,
        ),
    )?;
    dir.finish()?;
    let mut out = format!(
        "{:<6} {:>7} {:>9} {:>10} {:>14} {:>14}\n",
        "filter", "trials", "unstable", "fraction", "mean|p1 err|", "mean|p2 err|"
    );
    for s in &result.summaries {
        out.push_str(&format!(
            "{:<6} {:>7} {:>9} {:>10.4} {:>14.5} {:>14.5}\n",
            s.kind.to_string(),
            s.trials,
            s.unstable,
            s.instability_fraction(),
            s.mean_p1_error,
            s.mean_p2_error
        ));
    }
    Ok(out.trim_end().to_string())
}

/// `n` start days spread evenly over the `max` available.
pub fn spread_starts(n: usize, max: usize) -> Vec<usize> {
    let n = n.min(max);
    (0..n).map(|i| i * max / n).collect()
}

fn cmd_yearstudy(a: &Args) -> Result<String, CliError> {
    let loaded = load_config(a)?;
    let cfg = &loaded.config;
    let y = cfg
        .year_study
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [year_study] section".into()))?;
    let protocol = cfg.protocol()?;
    let s = learn_settings(a, cfg)?;
    let span = protocol.learn_days() + protocol.predict_days;
    if y.year_days < span {
        return Err(CliError::Config(format!("year_days must be at least {span}")));
    }
    let max_starts = y.year_days - span + 1;
    let starts = spread_starts(a.trials.unwrap_or(y.start_days), max_starts);
    if starts.is_empty() {
        return Err(CliError::Config("no start days".into()));
    }
    let net = cfg.network()?;
    let mut dir = start_run(a, "yearstudy", &loaded);
    let g = generate(cfg, seed_of(a, cfg), y.year_days, 0)?;
    let report = year_study(&net, &g.measured, &s, protocol, &starts);

    let rows: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|r| {
            let (class, detail) = match &r.failure {
                Some((c, d)) => (c.label().to_string(), d.clone()),
                None => (String::new(), String::new()),
            };
            vec![
                r.start_day.to_string(),
                if r.failure.is_none() { "ok" } else { "failed" }.into(),
                class,
                r.rms.map_or(String::new(), |v| v.to_string()),
                detail,
            ]
        })
        .collect();
    dir.write(
        "yearstudy_runs.csv",
        &io::table_csv(&["start_day", "status", "failure_class", "rms_deg", "detail"], &rows),
    )?;
    let frows: Vec<Vec<String>> = FailureClass::ALL
        .iter()
        .map(|c| vec![c.label().to_string(), report.failure_count(*c).to_string()])
        .collect();
    dir.write("yearstudy_failures.csv", &io::table_csv(&["failure_class", "count"], &frows))?;
    dir.write("yearstudy_leadtime.csv", &io::leadtime_csv(&report.leadtime))?;
    dir.write(
        "yearstudy_leadtime.svg",
        &line_chart(
            "RMS error vs lead time",
            "lead (min)",
            &cfg.unit_label,
            1.0,
            1.0,
            &[Series {
                label: "pooled RMS",
                y: &report.leadtime,
            }],
        ),
    )?;
    let summary = serde_json::json!({
        "runs": report.runs.len(),
        "successes": report.successes,
        "success_fraction": report.success_fraction(),
        "rms_12h": report.rms_within(720),
        "rms_24h": report.rms_within(1440),
        "failures": FailureClass::ALL.iter().map(|c| (c.label(), report.failure_count(*c))).collect::<std::collections::BTreeMap<_, _>>(),
    });
    dir.write("yearstudy_summary.json", &io::to_json(&summary))?;
    dir.finish()?;
    let mut out = format!(
        "{}/{} runs succeeded ({:.1}%), 12-h RMS {:.3}, 24-h RMS {:.3}\n",
        report.successes,
        report.runs.len(),
        100.0 * report.success_fraction(),
        report.rms_within(720),
        report.rms_within(1440)
    );
    for c in FailureClass::ALL {
        out.push_str(&format!("  {:<20} {}\n", c.label(), report.failure_count(c)));
    }
    Ok(out.trim_end().to_string())
}

fn cmd_report(a: &Args) -> Result<String, CliError> {
    let loaded = match &a.config {
        Some(_) => load_config(a)?,
        None => config::parse(&format!("seed = {}\n", a.seed.unwrap_or(0)))?,
    };
    let mut dir = start_run(a, "report", &loaded);
    let mut names: Vec<String> = std::fs::read_dir(&a.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.starts_with("manifest_") && n.ends_with(".json") && n != "manifest_report.json")
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Data(format!("no manifests in {}", a.out.display())));
    }
    let mut md = String::from("# Run report\n\n| command | status | failure class | seed | outputs |\n|---|---|---|---|---|\n");
    for n in &names {
        let m: Manifest = serde_json::from_str(&dir.input(n)?).map_err(|e| CliError::Data(format!("{n}: {e}")))?;
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            m.command,
            m.status,
            m.failure_class.as_deref().unwrap_or("-"),
            m.seed,
            m.outputs.keys().cloned().collect::<Vec<_>>().join(", ")
        ));
    }
    if dir.path("snapshot.json").exists() {
        let snap: Snapshot = serde_json::from_str(&dir.input("snapshot.json")?)
            .map_err(|e| CliError::Data(format!("snapshot.json: {e}")))?;
        let truth: Option<TruthSidecar> = if dir.path("truth.json").exists() {
            Some(
                serde_json::from_str(&dir.input("truth.json")?)
                    .map_err(|e| CliError::Data(format!("truth.json: {e}")))?,
            )
        } else {
            None
        };
        md.push_str(&format!(
            "\n## Learned RC products ({} filter, {} parameters)\n\n| product | learned (min) | truth (min) | rel. error |\n|---|---|---|---|\n",
            snap.filter,
            snap.params.len()
        ));
        for (i, label) in snap.parameter_labels.iter().enumerate() {
            let t = truth.as_ref().and_then(|t| t.rc_minutes.get(i)).copied();
            md.push_str(&format!(
                "| {label} | {:.1} | {} | {} |\n",
                snap.rc_minutes[i],
                t.map_or("-".into(), |v| format!("{v:.1}")),
                t.map_or("-".into(), |v| format!("{:.3}", (snap.rc_minutes[i] - v) / v))
            ));
        }
    }
    for (file, title) in [
        ("prediction_rms.csv", "Prediction RMS"),
        ("montecarlo_summary.csv", "Monte Carlo summary"),
        ("yearstudy_failures.csv", "Year-study failures"),
    ] {
        if dir.path(file).exists() {
            let text = dir.input(file)?;
            md.push_str(&format!("\n## {title}\n\n"));
            md.push_str(&csv_to_markdown(&text));
        }
    }
    dir.write("report.md", &md)?;
    dir.finish()?;
    Ok(md.trim_end().to_string())
}

fn csv_to_markdown(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            out.push_str(&format!("|{}\n", "---|".repeat(cells.len())));
        }
    }
    out
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("graybox: {e}");
        return e.exit_code();
    }
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("graybox: {e}");
            e.exit_code()
        }
    }
}
