//! Executes scenarios: calibration, measurement runs, sweeps and output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, RunSummary};
use crate::bench::{build_bench, BenchConfig, BenchError, ReadoutModel};
use crate::dsp::{calibrate, CalibrationScale};
use crate::pipeline::{calibrate_rf, run_rf, PipelineError};
use crate::scenario::{Scenario, ScenarioError, Tier, TraceFormat};
use crate::seed::{derive_seed, tag};
use crate::synth::{simulate_baseband, RfSynthesizer, SampleRecord, SynthError};
use crate::trajectory::{TrajectoryError, TrajectorySpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Physics(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema { .. } => 2,
            RunError::Physics(_) => 3,
            RunError::Io { .. } => 4,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { path, source } => RunError::Io { path, source },
            ScenarioError::Schema { path, message } => RunError::Schema { path, message },
        }
    }
}

macro_rules! physics {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Physics(e.to_string())
            }
        }
    )*};
}
physics!(BenchError, TrajectoryError, PipelineError, SynthError, AnalysisError, crate::dsp::DspError);

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tier: Option<Tier>,
}

impl Overrides {
    pub fn apply(&self, mut scenario: Scenario) -> Scenario {
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if let Some(tier) = self.tier {
            scenario.tier = tier;
        }
        scenario
    }
}

/// Endpoints and spread of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub seed: u64,
    pub product_inferred: f64,
    pub rms_x: Option<f64>,
    pub rms_y: Option<f64>,
    /// `(t, x_inferred, y_inferred)` of the first and last records.
    pub first: (f64, f64, f64),
    pub last: (f64, f64, f64),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: ReadoutModel,
    pub calibration: CalibrationScale,
    /// Calibrated records of the first repetition.
    pub records: Vec<SampleRecord>,
    pub summary: RunSummary,
    pub repeats: Vec<RepeatSummary>,
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: &'a Scenario,
    calibration: CalibrationScale,
    summary: &'a RunSummary,
    repeats: &'a [RepeatSummary],
}

/// Seed of repetition `index`; the first repetition uses the master seed itself.
pub fn repeat_seed(master: u64, index: usize) -> u64 {
    if index == 0 {
        master
    } else {
        derive_seed(master, tag::REPEAT, index as u64)
    }
}

/// Entanglement-off variant used for the shot-noise reference.
pub fn vacuum_model(bench: &BenchConfig) -> Result<ReadoutModel, RunError> {
    Ok(build_bench(&bench.without_entanglement())?)
}

/// Vacuum-normalising calibration for the scenario's tier. `base_dir` resolves a
/// relative calibration file.
pub fn calibration_for(scenario: &Scenario, base_dir: &Path) -> Result<CalibrationScale, RunError> {
    if scenario.tier == Tier::Baseband {
        return Ok(CalibrationScale::UNITY);
    }
    if let Some(file) = &scenario.calibration.file {
        let path = base_dir.join(file);
        let text = std::fs::read_to_string(&path).map_err(RunError::io(&path))?;
        let scale: CalibrationScale = serde_json::from_str(&text).map_err(|e| RunError::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if !(scale.scale_u > 0.0 && scale.scale_v > 0.0) {
            return Err(RunError::Physics("calibration scales must be positive".into()));
        }
        return Ok(scale);
    }
    measure_calibration(scenario)
}

/// Runs the entanglement-off, zero-displacement variant and derives the scale.
pub fn measure_calibration(scenario: &Scenario) -> Result<CalibrationScale, RunError> {
    let vacuum = vacuum_model(&scenario.bench)?;
    let duration = scenario.calibration.duration;
    match scenario.tier {
        Tier::Rf => Ok(calibrate_rf(&scenario.dsp, &vacuum, scenario.seed, duration)?),
        Tier::Baseband => {
            let spec = TrajectorySpec::zero(duration)?;
            let seed = derive_seed(scenario.seed, tag::CALIBRATION, 0);
            Ok(calibrate(&simulate_baseband(&vacuum, &spec, scenario.dt(), seed)?)?)
        }
    }
}

/// Calibrated records of one run.
pub fn measure(
    scenario: &Scenario,
    model: &ReadoutModel,
    seed: u64,
    calibration: &CalibrationScale,
) -> Result<Vec<SampleRecord>, RunError> {
    let n = scenario.record_count();
    match scenario.tier {
        Tier::Baseband => {
            let mut recs = simulate_baseband(model, &scenario.trajectory, scenario.dt(), seed)?;
            recs.truncate(n);
            Ok(recs)
        }
        Tier::Rf => {
            let raw = run_rf(model, &scenario.trajectory, scenario.duration, seed, &scenario.dsp)?;
            Ok(calibration.apply(&raw))
        }
    }
}

fn analyse(scenario: &Scenario, model: &ReadoutModel, records: &[SampleRecord]) -> Result<RunSummary, RunError> {
    let spec = scenario.known_mean().then_some(&scenario.trajectory);
    Ok(analysis::summarize(records, model, spec, scenario.analysis.window)?)
}

fn repeat_summary(seed: u64, summary: &RunSummary, records: &[SampleRecord], model: &ReadoutModel) -> Result<RepeatSummary, RunError> {
    let inferred = analysis::infer(records, model)?;
    let point = |i: usize| (records[i].t, inferred[i].0, inferred[i].1);
    Ok(RepeatSummary {
        seed,
        product_inferred: summary.product_inferred,
        rms_x: summary.tracking.as_ref().map(|t| t.rms_x),
        rms_y: summary.tracking.as_ref().map(|t| t.rms_y),
        first: point(0),
        last: point(records.len() - 1),
    })
}

/// Runs a scenario in memory; no files are written.
pub fn execute(scenario: &Scenario, base_dir: &Path) -> Result<RunOutput, RunError> {
    scenario.trajectory.validate()?;
    let model = build_bench(&scenario.bench)?;
    if scenario.tier == Tier::Rf {
        scenario.dsp.validate()?;
    }
    let calibration = calibration_for(scenario, base_dir)?;
    let mut first = None;
    let mut repeats = Vec::with_capacity(scenario.repeats);
    for index in 0..scenario.repeats {
        let seed = repeat_seed(scenario.seed, index);
        let records = measure(scenario, &model, seed, &calibration)?;
        let summary = analyse(scenario, &model, &records)?;
        repeats.push(repeat_summary(seed, &summary, &records, &model)?);
        if first.is_none() {
            first = Some((records, summary));
        }
    }
    let (records, summary) = first.expect("at least one repeat");
    Ok(RunOutput {
        model,
        calibration,
        records,
        summary,
        repeats,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(RunError::io(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(RunError::io(path))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), RunError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(RunError::io(path))
}

/// Writes records, summary and any optional outputs under `out_dir`.
pub fn write_outputs(scenario: &Scenario, output: &RunOutput, out_dir: &Path) -> Result<(), RunError> {
    let outs = &scenario.outputs;
    write_with(&out_dir.join(&outs.records), |w| {
        analysis::write_records_csv(w, &output.records, &output.model.gain)
    })?;
    if let Some(path) = &outs.windows {
        write_with(&out_dir.join(path), |w| {
            analysis::write_windows_csv(w, &output.summary.per_window_variances)
        })?;
    }
    if let Some(path) = &outs.residuals {
        let error = analysis::trajectory_error(&output.records, &scenario.trajectory, &output.model)?;
        write_with(&out_dir.join(path), |w| analysis::write_residuals_csv(w, &error))?;
    }
    if let Some(path) = &outs.fir_taps {
        let fir = scenario.dsp.demod.fir.design()?;
        write_with(&out_dir.join(path), |w| fir.write_taps_csv(w))?;
    }
    if let (Some(trace), Tier::Rf) = (&outs.trace, scenario.tier) {
        let synth = RfSynthesizer::new(
            &output.model,
            &scenario.trajectory,
            scenario.duration,
            scenario.seed,
            &scenario.dsp.synth,
        )?;
        let trace_data = synth.trace();
        write_with(&out_dir.join(&trace.path), |w| match trace.format {
            TraceFormat::Raw => trace_data.write_raw(w),
            TraceFormat::Csv => trace_data.write_csv(w),
        })?;
    }
    let doc = SummaryFile {
        tool: env!("CARGO_PKG_NAME"),
        version: TOOL_VERSION,
        scenario,
        calibration: output.calibration,
        summary: &output.summary,
        repeats: &output.repeats,
    };
    write_with(&out_dir.join(&outs.summary), |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `run <file>`: load, apply overrides, execute and write outputs.
pub fn run(path: &Path, overrides: &Overrides, out_dir: &Path) -> Result<RunOutput, RunError> {
    let scenario = overrides.apply(Scenario::load(path)?);
    let output = execute(&scenario, &base_dir(path))?;
    write_outputs(&scenario, &output, out_dir)?;
    Ok(output)
}

/// `calibrate <file>`: measure and persist the calibration as `calibration.json`.
pub fn calibrate_cmd(path: &Path, overrides: &Overrides, out_dir: &Path) -> Result<CalibrationScale, RunError> {
    let scenario = overrides.apply(Scenario::load(path)?);
    let scale = measure_calibration(&scenario)?;
    let file = out_dir.join("calibration.json");
    write_with(&file, |w| {
        serde_json::to_writer_pretty(&mut *w, &scale)?;
        writeln!(w)
    })?;
    Ok(scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Both arm transmissions.
    Loss,
    /// Both squeezers.
    #[value(name = "squeezing_db")]
    SqueezingDb,
    /// Both splitter visibilities.
    Visibility,
}

impl SweepParam {
    pub fn apply(self, bench: &BenchConfig, value: f64) -> BenchConfig {
        let mut b = bench.clone();
        match self {
            SweepParam::Loss => {
                b.arm_loss_a = value;
                b.arm_loss_b = value;
            }
            SweepParam::SqueezingDb => {
                b.squeezer1_db = value;
                b.squeezer2_db = value;
            }
            SweepParam::Visibility => {
                b.bs1_visibility = value;
                b.bs3_visibility = value;
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub var_u: f64,
    pub var_v: f64,
    pub product: f64,
    pub factor: f64,
    pub db_u: f64,
    pub db_v: f64,
    pub predicted_product: f64,
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>, RunError> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(RunError::Schema {
            path: "grid".into(),
            message: format!("expected comma-separated numbers, got `{text}`"),
        }),
    }
}

/// Runs every grid point with the scenario's seed (points differ only in the
/// swept parameter). Points run in parallel; results keep grid order.
pub fn sweep_scenario(scenario: &Scenario, param: SweepParam, grid: &[f64], base: &Path) -> Result<Vec<SweepPoint>, RunError> {
    scenario.trajectory.validate()?;
    // Entanglement-off noise is the identity whatever the losses, so one
    // calibration serves every point.
    let calibration = calibration_for(scenario, base)?;
    grid.par_iter()
        .map(|&value| {
            let point = Scenario {
                bench: param.apply(&scenario.bench, value),
                ..scenario.clone()
            };
            let model = build_bench(&point.bench)?;
            let records = measure(&point, &model, point.seed, &calibration)?;
            let s = analyse(&point, &model, &records)?;
            Ok(SweepPoint {
                value,
                var_u: s.var_u,
                var_v: s.var_v,
                product: s.product_inferred,
                factor: s.violation_factor_eq2,
                db_u: s.squeezing_db.0,
                db_v: s.squeezing_db.1,
                predicted_product: s.predicted.product_inferred,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "value,var_u,var_v,product,factor,db_u,db_v,predicted_product")?;
    for p in points {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.value, p.var_u, p.var_v, p.product, p.factor, p.db_u, p.db_v, p.predicted_product
        )?;
    }
    Ok(())
}

/// `sweep <param> <grid> <file>`: writes `sweep.csv`.
pub fn sweep(path: &Path, param: SweepParam, grid: &str, overrides: &Overrides, out_dir: &Path) -> Result<Vec<SweepPoint>, RunError> {
    let grid = parse_grid(grid)?;
    let scenario = overrides.apply(Scenario::load(path)?);
    let points = sweep_scenario(&scenario, param, &grid, &base_dir(path))?;
    write_with(&out_dir.join("sweep.csv"), |w| write_sweep_csv(w, &points))?;
    Ok(points)
}
