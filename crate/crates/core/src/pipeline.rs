//! Config-driven batch runs: each command reads the run config and the
//! artifacts of earlier commands from the output directory, processes every
//! station, and records what it wrote in `manifest.json`.
//!
//! Stations are processed in parallel; files are written afterwards in
//! station order so that reruns produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    aggregate_by_class, aggregate_scenarios_by_class, compare_weather, comparison_series, estimate_reduction,
    fit_mixture, hypothetical_scenario, mixture_over_time, previous_year, write_alpha_csv, write_reduction_csv,
    write_scenario_csv, write_weather_csv, AlphaPoint, MixtureFit, ReductionReport, ScenarioReport, WeatherStat,
    DEFAULT_MIXTURE_WINDOW_DAYS,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, generate_synthetic, make_pre_ld_folds, summarize, CvConfig, CvModel, CvReport, DateRange, Protocol,
    SynthConfig, DEFAULT_TRAIN_LENGTHS,
};
use crate::features::{build_design, default_candidates, FeaturePlan, FeatureSpec, Source};
use crate::gam::{fit_with_plan, FitConfig, GamModel};
use crate::ingest::{
    aggregate_daily, parse_observations, parse_stations, slice_period, write_observations, write_stations,
    AggregateConfig, DailySeries, Field, Observation, Region, StationMeta,
};
use crate::plot::{line_chart, Line};
use crate::selection::{ensure_weekday, forward_select, SelectionConfig, SelectionTrace, DEFAULT_VIF_THRESHOLD};
use crate::transfer::{ld_validate, transfer_design, transfer_fit, TransferConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default)]
    pub utc_offset_hours: i32,
    pub lockdown_start: NaiveDate,
    pub lockdown_end: NaiveDate,
    /// Post-lockdown period for mixtures; defaults to the day after the
    /// lockdown through the end of the data.
    #[serde(default)]
    pub post_start: Option<NaiveDate>,
    #[serde(default)]
    pub post_end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStation {
    pub region: String,
    pub class_label: String,
    #[serde(default)]
    pub generator: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub stations: Vec<SynthStation>,
}

fn default_coverage() -> f64 {
    0.75
}
fn default_vif() -> f64 {
    DEFAULT_VIF_THRESHOLD
}
fn default_train_years() -> u32 {
    2
}
fn default_window() -> usize {
    DEFAULT_MIXTURE_WINDOW_DAYS
}
fn default_lengths() -> Vec<u32> {
    DEFAULT_TRAIN_LENGTHS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Hourly observation CSV, relative to the config file.
    pub observations: String,
    /// Station metadata CSV, relative to the config file.
    pub stations: String,
    pub target: Field,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_coverage")]
    pub coverage_threshold: f64,
    #[serde(default = "default_vif")]
    pub vif_threshold: f64,
    /// Candidate pool for selection; the default pool when absent.
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
    /// Fit exactly these features instead of running selection.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_train_years")]
    pub train_years: u32,
    #[serde(default)]
    pub eval_year: Option<i32>,
    #[serde(default)]
    pub scenario_year: Option<i32>,
    #[serde(default = "default_lengths")]
    pub train_lengths_months: Vec<u32>,
    #[serde(default = "default_window")]
    pub mixture_window_days: usize,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    pub regions: BTreeMap<String, RegionConfig>,
    #[serde(default)]
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() || self.stations.is_empty() {
            return Err(Error::Config("data paths must not be empty".into()));
        }
        if !self.target.is_pollutant() {
            return Err(Error::Config(format!("target {} is not a pollutant", self.target)));
        }
        for (name, r) in &self.regions {
            if r.lockdown_start >= r.lockdown_end {
                return Err(Error::Config(format!("region {name}: lockdown start must precede end")));
            }
        }
        if self.train_years == 0 {
            return Err(Error::Config("train_years must be positive".into()));
        }
        if !(self.vif_threshold > 1.0) {
            return Err(Error::Config("vif_threshold must exceed 1".into()));
        }
        self.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.transfer.validate()?;
        self.pool()?;
        self.fixed_features()?;
        Ok(())
    }

    fn parse_specs(names: &[String]) -> Result<Vec<FeatureSpec>> {
        names
            .iter()
            .map(|n| {
                n.parse::<FeatureSpec>()
                    .map_err(|e| Error::Config(format!("feature {n:?}: {e}")))
            })
            .collect()
    }

    pub fn pool(&self) -> Result<Vec<FeatureSpec>> {
        match &self.candidates {
            Some(names) => Self::parse_specs(names),
            None => Ok(default_candidates()),
        }
    }

    pub fn fixed_features(&self) -> Result<Option<Vec<FeatureSpec>>> {
        self.features.as_deref().map(Self::parse_specs).transpose()
    }

    pub fn region(&self, region: &Region) -> Option<&RegionConfig> {
        self.regions
            .iter()
            .find(|(name, _)| name.parse::<Region>().is_ok_and(|r| r.name() == region.name()))
            .map(|(_, c)| c)
    }
}

/// Command-line level options that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Fit,
    Validate(Protocol),
    Reduce,
    Transfer,
    Mix,
    Scenario,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Fit => "fit",
            Command::Validate(Protocol::PreLd) => "validate-pre-ld",
            Command::Validate(Protocol::Ld) => "validate-ld",
            Command::Reduce => "reduce",
            Command::Transfer => "transfer",
            Command::Mix => "mix",
            Command::Scenario => "scenario",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub station_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
    pub failures: Vec<Failure>,
    pub stations_ok: usize,
}

/// Per-command provenance; timings are kept in a separate file so that the
/// manifest is byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timings_file: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub stations_ok: usize,
    pub failures: Vec<Failure>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// 0 on success or partial success, 3 when every station failed.
    pub fn exit_code(&self) -> i32 {
        if self.stations_ok == 0 && !self.failures.is_empty() {
            3
        } else {
            0
        }
    }
}

/// Exit code for an error that aborted a command.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::MalformedHeader(_) | Error::Row { .. } => 2,
        _ => 3,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<FileHash>,
}

impl Output {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }
}

struct Context {
    config: RunConfig,
    config_dir: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    inputs: Vec<FileHash>,
    timings: BTreeMap<String, f64>,
}

impl Context {
    fn load(options: &Options) -> Result<Self> {
        let text = fs::read_to_string(&options.config)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", options.config.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let config_dir = options
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let out_dir = match (&options.out, &config.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => config_dir.join(o),
            (None, None) => {
                return Err(Error::Config(
                    "no output directory: pass --out or set output_dir".into(),
                ))
            }
        };
        let seed = options.seed.unwrap_or(config.seed);
        Ok(Context {
            config,
            config_dir,
            out_dir,
            seed,
            inputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    fn input_path(&self, rel: &str) -> PathBuf {
        self.config_dir.join(rel)
    }

    fn read_input(&mut self, rel: &str) -> Result<Vec<u8>> {
        let path = self.input_path(rel);
        let bytes = fs::read(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(FileHash {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn read_artifact(&mut self, name: &str) -> Result<Vec<u8>> {
        let path = self.out_dir.join(name);
        let bytes = fs::read(&path).map_err(|_| Error::MissingArtifact(path.clone()))?;
        self.inputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn load_model(&mut self, name: &str) -> Result<GamModel> {
        let bytes = self.read_artifact(name)?;
        GamModel::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::InvalidInput(e.to_string()))?)
    }

    fn time<T>(&mut self, step: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.insert(step.to_string(), start.elapsed().as_secs_f64());
        out
    }

    fn config_echo(&self) -> Result<serde_json::Value> {
        let mut echo = self.config.clone();
        // output location and parallelism do not affect results
        echo.output_dir = None;
        echo.jobs = None;
        Ok(serde_json::to_value(echo)?)
    }
}

/// Stations with metadata and their daily series, in station order.
pub struct StationData {
    pub meta: StationMeta,
    pub region: Option<RegionConfig>,
    pub daily: DailySeries,
}

fn load_data(ctx: &mut Context) -> Result<(Vec<StationMeta>, Vec<StationData>, Vec<Failure>)> {
    let stations_rel = ctx.config.stations.clone();
    let obs_rel = ctx.config.observations.clone();
    let meta = parse_stations(ctx.read_input(&stations_rel)?.as_slice())?;
    let parsed = parse_observations(ctx.read_input(&obs_rel)?.as_slice())?;
    for issue in &parsed.row_errors {
        log::warn!("observations line {}: {}", issue.line, issue.message);
    }
    let mut by_offset: BTreeMap<i32, Vec<Observation>> = BTreeMap::new();
    let mut unknown = 0usize;
    for o in parsed.observations {
        match meta.iter().find(|m| m.station_id == o.station_id) {
            Some(m) => {
                let offset = ctx.config.region(&m.region).map(|r| r.utc_offset_hours).unwrap_or(0);
                by_offset.entry(offset).or_default().push(o);
            }
            None => unknown += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} observation rows belong to stations without metadata");
    }
    let mut daily: BTreeMap<String, DailySeries> = BTreeMap::new();
    for (offset, obs) in by_offset {
        let agg = AggregateConfig {
            coverage_threshold: ctx.config.coverage_threshold,
            utc_offset_hours: offset,
        };
        for s in aggregate_daily(&obs, &agg)? {
            daily.insert(s.station_id.clone(), s);
        }
    }
    let mut data = Vec::new();
    let mut failures = Vec::new();
    for m in &meta {
        match daily.remove(&m.station_id) {
            Some(d) => data.push(StationData {
                meta: m.clone(),
                region: ctx.config.region(&m.region).cloned(),
                daily: d,
            }),
            None => failures.push(Failure {
                station_id: m.station_id.clone(),
                error: "no observations".into(),
            }),
        }
    }
    Ok((meta, data, failures))
}

fn require_region(s: &StationData) -> Result<&RegionConfig> {
    s.region
        .as_ref()
        .ok_or_else(|| Error::Config(format!("no lockdown period configured for region {}", s.meta.region)))
}

fn lockdown(r: &RegionConfig) -> DateRange {
    DateRange {
        start: r.lockdown_start,
        end: r.lockdown_end,
    }
}

/// Pool entries whose weather inputs are measured in `daily`.
fn available(pool: &[FeatureSpec], daily: &DailySeries) -> Vec<FeatureSpec> {
    let needs = |s: &FeatureSpec| -> Vec<Field> {
        match s.source {
            Source::Ws => vec![Field::Ws],
            Source::WdX | Source::WdY => vec![Field::Wd],
            Source::T => vec![Field::T],
            Source::Rh => vec![Field::Rh],
            Source::Dp => vec![Field::Dp],
            Source::P => vec![Field::P],
            Source::Pca => vec![Field::P, Field::Rh, Field::Dp, Field::T],
            Source::Dy | Source::Month | Source::Weekday => vec![],
        }
    };
    pool.iter()
        .filter(|s| needs(s).iter().all(|f| daily.measures(*f)))
        .copied()
        .collect()
}

fn train_window(config: &RunConfig, region: &RegionConfig) -> Result<DateRange> {
    let start = region
        .lockdown_start
        .checked_sub_months(Months::new(12 * config.train_years))
        .ok_or_else(|| Error::Config("training window out of range".into()))?;
    Ok(DateRange {
        start,
        end: region.lockdown_start - Duration::days(1),
    })
}

/// Pre-lockdown model for one station: selection (or the configured fixed
/// features) on the training window, then the weekday term.
pub fn fit_station(config: &RunConfig, s: &StationData) -> Result<(GamModel, Option<SelectionTrace>)> {
    let region = require_region(s)?;
    let window = train_window(config, region)?;
    let train_daily = slice_period(&s.daily, window.start, window.end);
    if !train_daily.measures(config.target) {
        return Err(Error::InvalidInput(format!(
            "{} not measured in the training window",
            config.target
        )));
    }
    let fixed = config.fixed_features()?;
    let pool = available(
        fixed.as_deref().map_or(config.pool()?, |f| f.to_vec()).as_slice(),
        &train_daily,
    );
    if pool.is_empty() {
        return Err(Error::InvalidInput("no candidate feature is measured".into()));
    }
    let plan = FeaturePlan::fit(&train_daily, &pool)?;
    let design = build_design(&s.daily, config.target, &plan)?.slice(window.start, window.end);
    match fixed {
        Some(_) => Ok((fit_with_plan(&design, &pool, &plan, &config.fit)?, None)),
        None => {
            let sel = SelectionConfig {
                fit: config.fit.clone(),
                vif_threshold: config.vif_threshold,
            };
            let (model, trace) = forward_select(&design, &plan, &sel)?;
            Ok((ensure_weekday(&model, &design)?, Some(trace)))
        }
    }
}

fn model_name(id: &str) -> String {
    format!("{}.model.json", sanitize(id))
}

fn ld_model_name(id: &str) -> String {
    format!("{}.ld.model.json", sanitize(id))
}

/// Runs `command` and updates the manifest in the output directory.
pub fn run(command: Command, options: &Options) -> Result<RunOutcome> {
    let mut ctx = Context::load(options)?;
    fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", ctx.out_dir.display())))?;
    let mut out = Output {
        dir: ctx.out_dir.clone(),
        artifacts: Vec::new(),
    };
    let jobs = options.jobs.or(ctx.config.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let (ok, failures) = pool.install(|| match command {
        Command::Synth => cmd_synth(&mut ctx, &mut out),
        Command::Fit => cmd_fit(&mut ctx, &mut out),
        Command::Validate(p) => cmd_validate(&mut ctx, &mut out, p),
        Command::Reduce => cmd_reduce(&mut ctx, &mut out),
        Command::Transfer => cmd_transfer(&mut ctx, &mut out),
        Command::Mix => cmd_mix(&mut ctx, &mut out),
        Command::Scenario => cmd_scenario(&mut ctx, &mut out),
    })?;
    for f in &failures {
        log::warn!("station {}: {}", f.station_id, f.error);
    }
    write_manifest(&ctx, command, out.artifacts, &failures, ok)?;
    Ok(RunOutcome {
        stations_ok: ok,
        failures,
        out_dir: ctx.out_dir,
    })
}

fn write_manifest(
    ctx: &Context,
    command: Command,
    mut artifacts: Vec<FileHash>,
    failures: &[Failure],
    ok: usize,
) -> Result<()> {
    let manifest_path = ctx.out_dir.join(MANIFEST_FILE);
    let mut manifest = match fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => RunManifest {
            tool: "airgam".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timings_file: TIMINGS_FILE.into(),
            commands: BTreeMap::new(),
        },
    };
    artifacts.sort();
    let mut inputs = ctx.inputs.clone();
    inputs.sort();
    inputs.dedup();
    let mut failures = failures.to_vec();
    failures.sort();
    manifest.commands.insert(
        command.name().to_string(),
        CommandRecord {
            config: ctx.config_echo()?,
            seed: ctx.seed,
            inputs,
            artifacts,
            failures,
            stations_ok: ok,
        },
    );
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text)?;

    let timings_path = ctx.out_dir.join(TIMINGS_FILE);
    let mut timings: BTreeMap<String, BTreeMap<String, f64>> = fs::read_to_string(&timings_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    timings.insert(command.name().to_string(), ctx.timings.clone());
    fs::write(&timings_path, serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

type Outcome = Result<(usize, Vec<Failure>)>;

/// Runs `f` for every station in parallel, keeping results in station order.
fn per_station<T: Send>(
    data: &[StationData],
    f: impl Fn(&StationData) -> Result<T> + Sync,
) -> Vec<(String, Result<T>)> {
    data.par_iter().map(|s| (s.meta.station_id.clone(), f(s))).collect()
}

fn split<T>(results: Vec<(String, Result<T>)>, failures: &mut Vec<Failure>) -> Vec<(String, T)> {
    let mut ok = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => failures.push(Failure {
                station_id: id,
                error: e.to_string(),
            }),
        }
    }
    ok
}

fn cmd_synth(ctx: &mut Context, out: &mut Output) -> Outcome {
    let section = ctx.config.synth.clone();
    if section.stations.is_empty() {
        return Err(Error::Config("[synth] lists no stations".into()));
    }
    let mut meta = Vec::new();
    let mut observations = Vec::new();
    for (i, st) in section.stations.iter().enumerate() {
        let mut generator = st.generator.clone();
        generator.seed = ctx.seed.wrapping_add(i as u64);
        let region = st
            .region
            .parse::<Region>()
            .map_err(|e: Error| Error::Config(e.to_string()))?;
        if let Some(classes) = region.classes() {
            if !classes.contains(&st.class_label.as_str()) {
                return Err(Error::Config(format!(
                    "class `{}` is not declared for region {region}",
                    st.class_label
                )));
            }
        }
        let offset = ctx.config.region(&region).map(|r| r.utc_offset_hours).unwrap_or(0);
        let (series, truth) = ctx.time(&format!("generate {}", generator.station_id), |_| {
            generate_synthetic(&generator)
        })?;
        out.write_json(&format!("{}.truth.json", sanitize(&generator.station_id)), &truth)?;
        meta.push(StationMeta {
            station_id: generator.station_id.clone(),
            region,
            class_label: st.class_label.clone(),
            latitude: None,
            longitude: None,
        });
        for row in &series.rows {
            let midnight: DateTime<Utc> =
                Utc.from_utc_datetime(&row.date.and_hms_opt(0, 0, 0).unwrap()) - Duration::hours(offset as i64);
            for h in 0..24 {
                observations.push(Observation {
                    station_id: generator.station_id.clone(),
                    timestamp: midnight + Duration::hours(h),
                    values: row.values,
                    situation: None,
                });
            }
        }
    }
    let obs_name = ctx.config.observations.clone();
    let st_name = ctx.config.stations.clone();
    // data files go next to the config so later commands find them
    let mut data_out = Output {
        dir: ctx.config_dir.clone(),
        artifacts: Vec::new(),
    };
    data_out.write_csv(&obs_name, |b| write_observations(b, &observations))?;
    data_out.write_csv(&st_name, |b| write_stations(b, &meta))?;
    for a in data_out.artifacts {
        let copy = format!("data/{}", Path::new(&a.path).file_name().unwrap().to_string_lossy());
        out.write(&copy, &fs::read(ctx.config_dir.join(&a.path))?)?;
    }
    Ok((meta.len(), Vec::new()))
}

fn cmd_fit(ctx: &mut Context, out: &mut Output) -> Outcome {
    let (_, data, mut failures) = ctx.time("load", load_data)?;
    let config = ctx.config.clone();
    let results = ctx.time("fit", |_| Ok(per_station(&data, |s| fit_station(&config, s))))?;
    let ok = split(results, &mut failures);
    for (id, (model, trace)) in &ok {
        out.write(&model_name(id), format!("{}\n", model.to_json()?).as_bytes())?;
        if let Some(trace) = trace {
            out.write_json(&format!("{}.trace.json", sanitize(id)), trace)?;
            out.write(&format!("{}.trace.txt", sanitize(id)), trace.table().as_bytes())?;
        }
    }
    Ok((ok.len(), failures))
}

fn load_models(
    ctx: &mut Context,
    data: &[StationData],
    name: fn(&str) -> String,
    failures: &mut Vec<Failure>,
) -> BTreeMap<String, GamModel> {
    let mut models = BTreeMap::new();
    for s in data {
        match ctx.load_model(&name(&s.meta.station_id)) {
            Ok(m) => {
                models.insert(s.meta.station_id.clone(), m);
            }
            Err(e) => failures.push(Failure {
                station_id: s.meta.station_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    models
}

fn cmd_validate(ctx: &mut Context, out: &mut Output, protocol: Protocol) -> Outcome {
    let (_, data, mut failures) = ctx.time("load", load_data)?;
    let config = ctx.config.clone();
    let results = match protocol {
        Protocol::PreLd => {
            // fixed features of the fitted model when available, selection otherwise
            let mut specs = BTreeMap::new();
            for s in &data {
                if let Ok(m) = ctx.load_model(&model_name(&s.meta.station_id)) {
                    specs.insert(s.meta.station_id.clone(), m.specs());
                }
            }
            ctx.time("cross-validate", |_| {
                Ok(per_station(&data, |s| {
                    let region = require_region(s)?;
                    let eval_year = config.eval_year.unwrap_or(region.lockdown_start.year() - 1);
                    let start = s.daily.first_date().ok_or(Error::EmptyDesign)?;
                    let folds = make_pre_ld_folds(eval_year, &config.train_lengths_months, start)?;
                    let model = match specs.get(&s.meta.station_id) {
                        Some(sp) => CvModel::Fixed { specs: sp.clone() },
                        None => CvModel::Select {
                            pool: available(&config.pool()?, &s.daily),
                            selection: SelectionConfig {
                                fit: config.fit.clone(),
                                vif_threshold: config.vif_threshold,
                            },
                        },
                    };
                    let cv = CvConfig {
                        target: config.target,
                        model,
                        fit: config.fit.clone(),
                    };
                    Ok(cross_validate(&s.daily, &folds, Protocol::PreLd, &cv))
                }))
            })?
        }
        Protocol::Ld => {
            let models = load_models(ctx, &data, model_name, &mut failures);
            let data: Vec<&StationData> = data
                .iter()
                .filter(|s| models.contains_key(&s.meta.station_id))
                .collect();
            ctx.time("cross-validate", |_| {
                Ok(data
                    .par_iter()
                    .map(|s| {
                        let r = (|| {
                            let pre = &models[&s.meta.station_id];
                            let period = lockdown(require_region(s)?);
                            let design = transfer_design(pre, &s.daily)?;
                            ld_validate(pre, &design, period, &config.transfer)
                        })();
                        (s.meta.station_id.clone(), r)
                    })
                    .collect())
            })?
        }
    };
    let ok = split(results, &mut failures);
    let label = protocol.label();
    for (id, report) in &ok {
        out.write_json(&format!("{}.{label}.cv.json", sanitize(id)), report)?;
        out.write_csv(&format!("{}.{label}.cv.csv", sanitize(id)), |b| report.write_csv(b))?;
    }
    let reports: Vec<CvReport> = ok.iter().map(|(_, r)| r.clone()).collect();
    out.write_json(&format!("summary.{label}.cv.json"), &summarize(protocol, &reports))?;
    Ok((ok.len(), failures))
}

#[derive(Debug, Clone, Serialize)]
struct ReduceOutput {
    stations: Vec<ReductionReport>,
    classes: Vec<ReductionReport>,
    weather: BTreeMap<String, WeatherComparison>,
}

#[derive(Debug, Clone, Serialize)]
struct WeatherComparison {
    reference: DateRange,
    period: DateRange,
    variables: Vec<WeatherStat>,
}

fn cmd_reduce(ctx: &mut Context, out: &mut Output) -> Outcome {
    let (meta, data, mut failures) = ctx.time("load", load_data)?;
    let models = load_models(ctx, &data, model_name, &mut failures);
    let results = ctx.time("reduce", |_| {
        Ok(per_station(&data, |s| {
            let pre = models.get(&s.meta.station_id).ok_or(Error::NoViableModel)?;
            let period = lockdown(require_region(s)?);
            let mut report = estimate_reduction(pre, &s.daily, period)?;
            report.region = Some(s.meta.region.name().to_string());
            let reference = previous_year(period);
            let weather = WeatherComparison {
                reference,
                period,
                variables: compare_weather(
                    &slice_period(&s.daily, reference.start, reference.end),
                    &slice_period(&s.daily, period.start, period.end),
                ),
            };
            let series = comparison_series(pre, pre, &s.daily, period)?;
            Ok((report, weather, series))
        }))
    })?;
    let results: Vec<_> = results.into_iter().filter(|(id, _)| models.contains_key(id)).collect();
    let ok = split(results, &mut failures);
    let stations: Vec<ReductionReport> = ok.iter().map(|(_, (r, _, _))| r.clone()).collect();
    let classes = aggregate_by_class(&stations, &meta)?;
    for (id, (_, weather, series)) in &ok {
        out.write_csv(&format!("{}.weather.report.csv", sanitize(id)), |b| {
            write_weather_csv(b, &weather.variables)
        })?;
        let svg = line_chart(
            &format!("{id}: measured vs pre-lockdown model"),
            ctx.config.target.label(),
            &series.dates,
            &[
                Line {
                    label: "measured",
                    values: &series.measured,
                    color: "#222222",
                },
                Line {
                    label: "pre-LD model",
                    values: &series.pre_ld,
                    color: "#1f77b4",
                },
            ],
        );
        out.write(&format!("{}.reduce.svg", sanitize(id)), svg.as_bytes())?;
    }
    let report = ReduceOutput {
        weather: ok.iter().map(|(id, (_, w, _))| (id.clone(), w.clone())).collect(),
        stations,
        classes,
    };
    out.write_json("reduce.report.json", &report)?;
    let mut rows = report.stations.clone();
    rows.extend(report.classes.iter().cloned());
    out.write_csv("reduce.report.csv", |b| write_reduction_csv(b, &rows))?;
    Ok((ok.len(), failures))
}

fn cmd_transfer(ctx: &mut Context, out: &mut Output) -> Outcome {
    let (_, data, mut failures) = ctx.time("load", load_data)?;
    let models = load_models(ctx, &data, model_name, &mut failures);
    let config = ctx.config.clone();
    let results = ctx.time("transfer", |_| {
        Ok(per_station(&data, |s| {
            let pre = models.get(&s.meta.station_id).ok_or(Error::NoViableModel)?;
            let period = lockdown(require_region(s)?);
            let design = transfer_design(pre, &s.daily)?.slice(period.start, period.end);
            transfer_fit(pre, &design, &config.transfer)
        }))
    })?;
    let results: Vec<_> = results.into_iter().filter(|(id, _)| models.contains_key(id)).collect();
    let ok = split(results, &mut failures);
    for (id, model) in &ok {
        out.write(&ld_model_name(id), format!("{}\n", model.to_json()?).as_bytes())?;
    }
    Ok((ok.len(), failures))
}

#[derive(Debug, Clone, Serialize)]
struct MixStation {
    station_id: String,
    period: DateRange,
    fit: MixtureFit,
    window_days: usize,
    alpha_series: Vec<AlphaPoint>,
}

fn cmd_mix(ctx: &mut Context, out: &mut Output) -> Outcome {
    let (_, data, mut failures) = ctx.time("load", load_data)?;
    let pre_models = load_models(ctx, &data, model_name, &mut failures);
    let ld_models = load_models(ctx, &data, ld_model_name, &mut failures);
    let window = ctx.config.mixture_window_days;
    let results = ctx.time("mix", |_| {
        Ok(per_station(&data, |s| {
            let id = &s.meta.station_id;
            let (Some(pre), Some(ld)) = (pre_models.get(id), ld_models.get(id)) else {
                return Err(Error::NoViableModel);
            };
            let region = require_region(s)?;
            let start = region.post_start.unwrap_or(region.lockdown_end + Duration::days(1));
            let end = match region.post_end {
                Some(e) => e,
                None => s.daily.last_date().ok_or(Error::NoOverlap)?,
            };
            let period = DateRange::new(start, end)?;
            let series = comparison_series(pre, ld, &s.daily, period)?;
            let fit = fit_mixture(&series.ld, &series.pre_ld, &series.measured)?;
            let alpha_series = mixture_over_time(&series.dates, &series.ld, &series.pre_ld, &series.measured, window)?;
            Ok((
                MixStation {
                    station_id: id.clone(),
                    period,
                    fit,
                    window_days: window,
                    alpha_series,
                },
                series,
            ))
        }))
    })?;
    let results: Vec<_> = results
        .into_iter()
        .filter(|(id, _)| pre_models.contains_key(id) && ld_models.contains_key(id))
        .collect();
    let ok = split(results, &mut failures);
    let label = ctx.config.target.label().to_string();
    for (id, (mix, series)) in &ok {
        let svg = line_chart(
            &format!("{id}: measured vs pre-LD and LD models"),
            &label,
            &series.dates,
            &[
                Line {
                    label: "measured",
                    values: &series.measured,
                    color: "#222222",
                },
                Line {
                    label: "pre-LD model",
                    values: &series.pre_ld,
                    color: "#1f77b4",
                },
                Line {
                    label: "LD model",
                    values: &series.ld,
                    color: "#d62728",
                },
            ],
        );
        out.write(&format!("{}.mix.svg", sanitize(id)), svg.as_bytes())?;
        let dates: Vec<NaiveDate> = mix.alpha_series.iter().map(|p| p.date).collect();
        let alpha: Vec<Option<f64>> = mix.alpha_series.iter().map(|p| Some(p.alpha)).collect();
        let svg = line_chart(
            &format!("{id}: contribution of the LD model ({window}-day window)"),
            "alpha",
            &dates,
            &[Line {
                label: "alpha",
                values: &alpha,
                color: "#2ca02c",
            }],
        );
        out.write(&format!("{}.alpha.svg", sanitize(id)), svg.as_bytes())?;
        out.write_csv(&format!("{}.alpha.report.csv", sanitize(id)), |b| {
            write_alpha_csv(b, &mix.alpha_series)
        })?;
    }
    let stations: Vec<MixStation> = ok.iter().map(|(_, (m, _))| m.clone()).collect();
    out.write_json("mix.report.json", &stations)?;
    out.write_csv("mix.report.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "station_id",
            "period_start",
            "period_end",
            "alpha",
            "objective",
            "n_days",
            "breakpoints_examined",
        ])?;
        for m in &stations {
            w.write_record([
                m.station_id.clone(),
                m.period.start.to_string(),
                m.period.end.to_string(),
                m.fit.alpha.to_string(),
                m.fit.objective.to_string(),
                m.fit.n_days.to_string(),
                m.fit.breakpoints_examined.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok((ok.len(), failures))
}

#[derive(Debug, Clone, Serialize)]
struct ScenarioOutput {
    stations: Vec<ScenarioReport>,
    classes: Vec<ScenarioReport>,
}

fn cmd_scenario(ctx: &mut Context, out: &mut Output) -> Outcome {
    let (meta, data, mut failures) = ctx.time("load", load_data)?;
    let ld_models = load_models(ctx, &data, ld_model_name, &mut failures);
    let config = ctx.config.clone();
    let results = ctx.time("scenario", |_| {
        Ok(per_station(&data, |s| {
            let ld = ld_models.get(&s.meta.station_id).ok_or(Error::NoViableModel)?;
            let region = require_region(s)?;
            let year = config.scenario_year.unwrap_or(region.lockdown_start.year() - 1);
            let mut report = hypothetical_scenario(ld, &s.daily, year)?;
            report.region = Some(s.meta.region.name().to_string());
            Ok(report)
        }))
    })?;
    let results: Vec<_> = results
        .into_iter()
        .filter(|(id, _)| ld_models.contains_key(id))
        .collect();
    let ok = split(results, &mut failures);
    let stations: Vec<ScenarioReport> = ok.into_iter().map(|(_, r)| r).collect();
    let classes = aggregate_scenarios_by_class(&stations, &meta)?;
    let n = stations.len();
    let report = ScenarioOutput { stations, classes };
    out.write_json("scenario.report.json", &report)?;
    let mut rows = report.stations.clone();
    rows.extend(report.classes.iter().cloned());
    out.write_csv("scenario.report.csv", |b| write_scenario_csv(b, &rows))?;
    Ok((n, failures))
}
