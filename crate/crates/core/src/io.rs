//! File formats: dataset CSV, pattern CSV, traces, snapshots and manifests.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so read-then-write reproduces a file byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimators::FilterKind;
use crate::graph::{ParameterMap, Representation, ThermalNetwork};
use crate::pattern::{DisturbancePattern, PatternKind};
use crate::multimode::ScheduleRun;
use crate::simulator::{Dataset, DayMarkers, MINUTES_PER_DAY};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn fmt_err(path: &str, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(false)
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn record<I: IntoIterator<Item = String>>(w: &mut csv::Writer<Vec<u8>>, fields: I) {
    w.write_record(fields.into_iter().collect::<Vec<_>>())
        .expect("in-memory writer");
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn parse_f64(path: &str, line: usize, s: &str) -> Result<f64, IoError> {
    s.parse::<f64>()
        .map_err(|_| fmt_err(path, line, format!("{s:?} is not a number")))
}

fn parse_usize(path: &str, line: usize, s: &str) -> Result<usize, IoError> {
    s.parse::<usize>()
        .map_err(|_| fmt_err(path, line, format!("{s:?} is not a non-negative integer")))
}

// ---------------------------------------------------------------- dataset

const MARKER_FLAGS: [&str; 3] = ["dawn", "midday", "dusk"];

pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut w = csv_writer();
    let mut header = vec!["step".to_string(), "minute_of_day".into(), "day".into()];
    header.extend(ds.zone_names.iter().map(|z| format!("T_{z}")));
    header.push("T_ext".into());
    header.push("solar".into());
    if ds.truth_disturbance.is_some() {
        header.extend(ds.zone_names.iter().map(|z| format!("b_true_{z}")));
    }
    header.push("flags".into());
    record(&mut w, header);
    for k in 0..ds.steps() {
        let day = k / MINUTES_PER_DAY;
        let minute = k % MINUTES_PER_DAY;
        let mut row = vec![k.to_string(), minute.to_string(), (ds.first_day + day).to_string()];
        row.extend(ds.temps[k].iter().map(|v| v.to_string()));
        row.push(ds.external[k].to_string());
        row.push(ds.solar[k].to_string());
        if let Some(b) = &ds.truth_disturbance {
            row.extend(b[k].iter().map(|v| v.to_string()));
        }
        let m = ds.markers(day);
        let flags: Vec<&str> = [m.dawn, m.midday, m.dusk]
            .iter()
            .zip(MARKER_FLAGS)
            .filter(|(at, _)| **at == minute)
            .map(|(_, name)| name)
            .collect();
        row.push(flags.join("|"));
        record(&mut w, row);
    }
    finish(w)
}

pub fn dataset_from_csv(text: &str, path: &str) -> Result<Dataset, IoError> {
    let mut r = csv_reader(text);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| fmt_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 6 || header[..3] != ["step", "minute_of_day", "day"] || header.last().map(String::as_str) != Some("flags") {
        return Err(fmt_err(path, 1, "header must be step,minute_of_day,day,T_<zone>...,T_ext,solar,...,flags"));
    }
    let ext_col = header
        .iter()
        .position(|h| h == "T_ext")
        .ok_or_else(|| fmt_err(path, 1, "missing T_ext column"))?;
    let zone_names: Vec<String> = header[3..ext_col]
        .iter()
        .map(|h| {
            h.strip_prefix("T_")
                .map(str::to_string)
                .ok_or_else(|| fmt_err(path, 1, format!("unexpected column {h:?}")))
        })
        .collect::<Result<_, _>>()?;
    let zones = zone_names.len();
    if zones == 0 {
        return Err(fmt_err(path, 1, "no zone columns"));
    }
    if header.get(ext_col + 1).map(String::as_str) != Some("solar") {
        return Err(fmt_err(path, 1, "T_ext must be followed by solar"));
    }
    let extra = header.len() - (ext_col + 3);
    let has_bias = match extra {
        0 => false,
        n if n == zones => {
            for (h, z) in header[ext_col + 2..ext_col + 2 + zones].iter().zip(&zone_names) {
                if *h != format!("b_true_{z}") {
                    return Err(fmt_err(path, 1, format!("expected b_true_{z}, found {h:?}")));
                }
            }
            true
        }
        _ => return Err(fmt_err(path, 1, "b_true columns must match the zone columns")),
    };

    let mut ds = Dataset {
        zone_names,
        temps: Vec::new(),
        external: Vec::new(),
        solar: Vec::new(),
        day_markers: Vec::new(),
        truth_disturbance: has_bias.then(Vec::new),
        truth_rc: None,
        first_day: 0,
    };
    let mut marks: Vec<[Option<usize>; 3]> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| fmt_err(path, line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(fmt_err(path, line, format!("{} fields, header has {}", rec.len(), header.len())));
        }
        let step = parse_usize(path, line, &rec[0])?;
        let minute = parse_usize(path, line, &rec[1])?;
        let day = parse_usize(path, line, &rec[2])?;
        if k == 0 {
            ds.first_day = day;
        }
        if step != k || minute != k % MINUTES_PER_DAY || day != ds.first_day + k / MINUTES_PER_DAY {
            return Err(fmt_err(path, line, "step, minute_of_day and day must follow the one-minute grid from midnight"));
        }
        let temps = (0..zones)
            .map(|z| parse_f64(path, line, &rec[3 + z]))
            .collect::<Result<Vec<_>, _>>()?;
        ds.temps.push(temps);
        ds.external.push(parse_f64(path, line, &rec[ext_col])?);
        ds.solar.push(parse_f64(path, line, &rec[ext_col + 1])?);
        if let Some(b) = &mut ds.truth_disturbance {
            b.push(
                (0..zones)
                    .map(|z| parse_f64(path, line, &rec[ext_col + 2 + z]))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let local_day = k / MINUTES_PER_DAY;
        if marks.len() <= local_day {
            marks.push([None; 3]);
        }
        let flags = &rec[header.len() - 1];
        for flag in flags.split('|').filter(|f| !f.is_empty()) {
            let i = MARKER_FLAGS
                .iter()
                .position(|m| *m == flag)
                .ok_or_else(|| fmt_err(path, line, format!("unknown flag {flag:?}")))?;
            if marks[local_day][i].replace(minute).is_some() {
                return Err(fmt_err(path, line, format!("second {flag} flag on day {day}")));
            }
        }
    }
    for (d, m) in marks.iter().enumerate() {
        match m {
            [Some(dawn), Some(midday), Some(dusk)] => ds.day_markers.push(DayMarkers {
                dawn: *dawn,
                midday: *midday,
                dusk: *dusk,
            }),
            _ => {
                return Err(fmt_err(
                    path,
                    d * MINUTES_PER_DAY + 2,
                    format!("day {} lacks a dawn, midday or dusk flag", ds.first_day + d),
                ))
            }
        }
    }
    ds.validate().map_err(|e| fmt_err(path, 1, e.to_string()))?;
    Ok(ds)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    dataset_from_csv(&read_text(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- pattern

/// Long format: one `minute_of_day,zone,value` row per slot and zone.
pub fn pattern_to_csv(p: &DisturbancePattern, zone_names: &[String]) -> String {
    let kind = match p.kind {
        PatternKind::UniformAverage => "uniform_average",
        PatternKind::SolarWeighted => "solar_weighted",
    };
    let mut out = format!(
        "# kind={kind} r_max={} days_used={} days_discarded={}\n",
        p.r_max, p.days_used, p.days_discarded
    );
    let mut w = csv_writer();
    record(&mut w, ["minute_of_day", "zone", "value"].map(String::from));
    for (m, row) in p.values.iter().enumerate() {
        for (z, v) in zone_names.iter().zip(row) {
            record(&mut w, [m.to_string(), z.clone(), v.to_string()]);
        }
    }
    out.push_str(&finish(w));
    out
}

pub fn pattern_from_csv(text: &str, path: &str) -> Result<(DisturbancePattern, Vec<String>), IoError> {
    let meta_line = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| fmt_err(path, 1, "missing '# kind=...' line"))?;
    let meta: BTreeMap<&str, &str> = meta_line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let get = |k: &str| meta.get(k).copied().ok_or_else(|| fmt_err(path, 1, format!("missing {k}")));
    let kind = match get("kind")? {
        "uniform_average" => PatternKind::UniformAverage,
        "solar_weighted" => PatternKind::SolarWeighted,
        other => return Err(fmt_err(path, 1, format!("unknown pattern kind {other:?}"))),
    };
    let r_max = parse_f64(path, 1, get("r_max")?)?;
    let days_used = parse_usize(path, 1, get("days_used")?)?;
    let days_discarded = parse_usize(path, 1, get("days_discarded")?)?;

    let mut r = csv_reader(text);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| fmt_err(path, 2, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["minute_of_day", "zone", "value"] {
        return Err(fmt_err(path, 2, "header must be minute_of_day,zone,value"));
    }
    let mut zones: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(MINUTES_PER_DAY);
    for (k, rec) in r.records().enumerate() {
        let line = k + 3;
        let rec = rec.map_err(|e| fmt_err(path, line, e.to_string()))?;
        let minute = parse_usize(path, line, &rec[0])?;
        let zone = &rec[1];
        let value = parse_f64(path, line, &rec[2])?;
        if minute == 0 && values.len() <= 1 && !zones.iter().any(|z| z == zone) {
            zones.push(zone.to_string());
        }
        let z = k % zones.len().max(1);
        if minute != k / zones.len().max(1) || zones.get(z).map(String::as_str) != Some(zone) {
            return Err(fmt_err(path, line, "rows must run minute by minute with zones in a fixed order"));
        }
        if z == 0 {
            values.push(Vec::with_capacity(zones.len()));
        }
        values.last_mut().expect("row pushed above").push(value);
    }
    if values.len() != MINUTES_PER_DAY || values.iter().any(|r| r.len() != zones.len()) {
        return Err(fmt_err(path, text.lines().count(), format!("{} minutes, expected 1440", values.len())));
    }
    Ok((
        DisturbancePattern {
            values,
            kind,
            days_used,
            days_discarded,
            r_max,
        },
        zones,
    ))
}

// ---------------------------------------------------------------- traces

/// `zone~neighbour` names for each estimated RC product.
pub fn parameter_labels(net: &ThermalNetwork, pm: &ParameterMap) -> Vec<String> {
    pm.estimated
        .iter()
        .map(|p| {
            let other = net.edges()[p.edge].other(p.node);
            format!("{}~{}", net.nodes()[p.node].name, net.nodes()[other].name)
        })
        .collect()
}

pub fn param_trace_csv(run: &ScheduleRun, labels: &[String]) -> String {
    let mut w = csv_writer();
    record(
        &mut w,
        ["step", "day", "minute_of_day"]
            .map(String::from)
            .into_iter()
            .chain(labels.iter().cloned()),
    );
    for (k, row) in run.param_trace.iter().enumerate() {
        let lead = [k, k / MINUTES_PER_DAY, k % MINUTES_PER_DAY].map(|v| v.to_string());
        record(&mut w, lead.into_iter().chain(row.iter().map(|v| v.to_string())));
    }
    finish(w)
}

/// Long format: one `day,minute_of_day,zone,estimate,variance` row per step and zone.
pub fn bias_trace_csv(run: &ScheduleRun, zone_names: &[String]) -> String {
    let mut w = csv_writer();
    record(&mut w, ["day", "minute_of_day", "zone", "estimate", "variance"].map(String::from));
    for (k, (b, v)) in run.bias_trace.iter().zip(&run.bias_variance).enumerate() {
        for (z, name) in zone_names.iter().enumerate() {
            record(
                &mut w,
                [
                    (k / MINUTES_PER_DAY).to_string(),
                    (k % MINUTES_PER_DAY).to_string(),
                    name.clone(),
                    b[z].to_string(),
                    v[z].to_string(),
                ],
            );
        }
    }
    finish(w)
}

/// Prediction rows next to the truth they are scored against.
pub fn prediction_csv(start_step: usize, pred: &[Vec<f64>], truth: &[Vec<f64>], zone_names: &[String]) -> String {
    let mut w = csv_writer();
    record(
        &mut w,
        ["lead_min", "step", "minute_of_day"]
            .map(String::from)
            .into_iter()
            .chain(zone_names.iter().map(|z| format!("pred_{z}")))
            .chain(zone_names.iter().map(|z| format!("truth_{z}"))),
    );
    for (h, (p, t)) in pred.iter().zip(truth).enumerate() {
        let step = start_step + h + 1;
        let lead = [h + 1, step, step % MINUTES_PER_DAY].map(|v| v.to_string());
        record(
            &mut w,
            lead.into_iter()
                .chain(p.iter().map(|x| x.to_string()))
                .chain(t.iter().map(|x| x.to_string())),
        );
    }
    finish(w)
}

/// Two-column CSV from a header pair and rows.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv_writer();
    record(&mut w, header.iter().map(|s| s.to_string()));
    for r in rows {
        record(&mut w, r.iter().cloned());
    }
    finish(w)
}

pub fn leadtime_csv(curve: &[f64]) -> String {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .enumerate()
        .map(|(h, v)| vec![(h + 1).to_string(), v.to_string()])
        .collect();
    table_csv(&["lead_min", "rms_deg"], &rows)
}

// ---------------------------------------------------------------- json

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub filter: FilterKind,
    pub representation: Representation,
    pub zone_names: Vec<String>,
    pub parameter_labels: Vec<String>,
    /// Estimated parameters in `representation`.
    pub params: Vec<f64>,
    /// The same parameters as RC products in minutes.
    pub rc_minutes: Vec<f64>,
    pub param_variance: Vec<f64>,
    pub temps: Vec<f64>,
    pub biases: Vec<f64>,
    pub steps: usize,
    pub updates: usize,
    pub reanchors: usize,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub zone_names: Vec<String>,
    pub parameter_labels: Vec<String>,
    /// True values of the estimated RC products, minutes.
    pub rc_minutes: Vec<f64>,
    pub mismatch_per_deg: f64,
    pub measurement_noise_std_deg: f64,
    pub days: usize,
    pub holdout_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub options: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub status: String,
    pub failure_class: Option<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            options: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            status: "ok".into(),
            failure_class: None,
            notes: Vec::new(),
        }
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.options.insert(key.to_string(), value.to_string());
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Files written by one command, hashed into its manifest.
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    pub fn new(root: &Path, manifest: Manifest) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        write_text(&self.path(name), text)?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    /// Read an input relative to the run directory and record its digest.
    pub fn input(&mut self, name: &str) -> Result<String, IoError> {
        let text = read_text(&self.path(name))?;
        self.manifest.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn finish(self) -> Result<Manifest, IoError> {
        let name = format!("manifest_{}.json", self.manifest.command);
        write_text(&self.root.join(name), &to_json(&self.manifest))?;
        Ok(self.manifest)
    }
}
