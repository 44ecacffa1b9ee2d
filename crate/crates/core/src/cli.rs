//! Configuration loading, run orchestration and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_decay_with, classify_limit, DecayReport, EnvelopeTolerance, LimitClass, SigmaSign, TolPack};
use crate::error::{Error, Result};
use crate::extrinsic::{extrinsic_field, gauss_band, gauss_residual};
use crate::flow::{check_curvature_hypothesis, run_observed, FlowConfig, Termination, Trajectory};
use crate::mapfield::{jacobian_quantities, singular_at, GridSpec, MapFamily, MapState, StencilOrder};
use crate::oracle::u_via_hodge;
use crate::surface::SurfaceModel;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceBlock {
    FlatTorus {
        /// Lattice generators as a list of two vectors.
        #[serde(default = "square_generators")]
        generators: [[f64; 2]; 2],
    },
    RoundSphere {
        #[serde(default = "one")]
        kappa: f64,
    },
    WarpedSphere {
        a: f64,
    },
}

fn square_generators() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

fn one() -> f64 {
    1.0
}

impl SurfaceBlock {
    pub fn build(&self) -> Result<SurfaceModel> {
        match self {
            SurfaceBlock::FlatTorus { generators: [a, b] } => {
                SurfaceModel::flat_torus(Matrix2::new(a[0], b[0], a[1], b[1]))
            }
            SurfaceBlock::RoundSphere { kappa } => SurfaceModel::round_sphere(*kappa),
            SurfaceBlock::WarpedSphere { a } => SurfaceModel::warped_sphere(*a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n1: usize,
    pub n2: usize,
    #[serde(default)]
    pub stencil: StencilOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub record_every: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("graphflow_out"),
            record_every: 10,
        }
    }
}

/// Overrides for the limit classification; unset values come from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyBlock {
    pub tol_diam: f64,
    pub tol_a: Option<f64>,
    pub tol_h: Option<f64>,
}

impl Default for ClassifyBlock {
    fn default() -> Self {
        Self {
            tol_diam: TolPack::DEFAULT_DIAM,
            tol_a: None,
            tol_h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub domain: SurfaceBlock,
    pub target: SurfaceBlock,
    pub initial_map: MapFamily,
    pub grid: GridBlock,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub bounds: EnvelopeTolerance,
    #[serde(default)]
    pub classify: ClassifyBlock,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigRejected(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Schema checks plus everything needed to build the initial state,
    /// including the curvature hypothesis.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::ConfigRejected(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.output.record_every == 0 {
            return Err(Error::ConfigRejected("output.record_every must be at least 1".into()));
        }
        self.flow.validate()?;
        let state = self.initial_state()?;
        check_curvature_hypothesis(&state)
    }

    pub fn initial_state(&self) -> Result<MapState> {
        self.state_on_grid(self.grid.n1, self.grid.n2)
    }

    fn state_on_grid(&self, n1: usize, n2: usize) -> Result<MapState> {
        let domain = self.domain.build()?;
        let target = self.target.build()?;
        let grid = GridSpec::for_domain(&domain, n1, n2)?;
        Ok(MapState::from_family(domain, target, grid, &self.initial_map)?.with_stencil(self.grid.stencil))
    }
}

/// Everything a finished run reports.
#[derive(Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub classification: LimitClass,
    pub tolerances: TolPack,
    pub report: DecayReport,
    pub wall_time_s: f64,
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let initial = cfg.initial_state()?;
    let sigma = initial.domain.curvature_bounds().0;
    let trajectory = run_observed(initial, &cfg.flow, cfg.output.record_every, |_| {})?;
    let gr0 = trajectory.records[0].gauss_residual_max;
    let run_tol = TolPack::for_run(gr0, cfg.flow.h_tol);
    let tolerances = TolPack {
        tol_diam: cfg.classify.tol_diam,
        tol_a: cfg.classify.tol_a.unwrap_or(run_tol.tol_a),
        tol_h: cfg.classify.tol_h.unwrap_or(run_tol.tol_h),
    };
    let classification = classify_limit(&trajectory.final_state, &tolerances)?;
    let report = check_decay_with(&trajectory, SigmaSign::of(sigma), &cfg.bounds);
    Ok(RunOutcome {
        trajectory,
        classification,
        tolerances,
        report,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub schema_version: u32,
    pub termination: Termination,
    pub classification: LimitClass,
    pub steps: usize,
    pub final_t: f64,
    pub dt0: f64,
    pub records: usize,
    pub image_diameter: f64,
    pub tolerances: TolPack,
    pub decay_report: &'a DecayReport,
    pub config: &'a RunConfig,
    pub wall_time_s: f64,
}

pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
    for r in &out.trajectory.records {
        w.serialize(r)?;
    }
    w.flush()?;
    let tr = &out.trajectory;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        termination: tr.termination,
        classification: out.classification,
        steps: tr.steps,
        final_t: tr.final_state.t,
        dt0: tr.dt0,
        records: tr.records.len(),
        image_diameter: tr.final_state.image_diameter(),
        tolerances: out.tolerances,
        decay_report: &out.report,
        config: cfg,
        wall_time_s: out.wall_time_s,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ConfigRejected(_)
        | Error::PoleProximity { .. }
        | Error::NotStrictlyDecreasing { .. }
        | Error::InvalidEnvelope(_) => EXIT_CONFIG,
        Error::GraphicalityLoss { .. }
        | Error::NonFiniteValue { .. }
        | Error::LiftAmbiguity { .. }
        | Error::EndpointViolation { .. } => EXIT_GUARD,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
    }
}

fn report_error(err: &Error) -> i32 {
    eprintln!("graphflow: {err}");
    exit_code(err)
}

fn run_to(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let out = execute(cfg)?;
    write_outputs(dir, cfg, &out)?;
    Ok(out)
}

fn run_exit(out: &RunOutcome) -> i32 {
    if out.trajectory.termination.is_guard_trip() {
        EXIT_GUARD
    } else {
        EXIT_OK
    }
}

pub fn cmd_run(config_path: &Path) -> i32 {
    let result = RunConfig::load(config_path).and_then(|cfg| {
        let out = run_to(&cfg, &cfg.output.dir)?;
        println!(
            "termination {:?}, classification {:?}, {} steps, t = {:.6}, results in {}",
            out.trajectory.termination,
            out.classification,
            out.trajectory.steps,
            out.trajectory.final_state.t,
            cfg.output.dir.display()
        );
        Ok(out)
    });
    match result {
        Ok(out) => run_exit(&out),
        Err(e) => report_error(&e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
    pub message: String,
}

pub const HODGE_TOL: f64 = 1e-11;
pub const VELOCITY_TOL: f64 = 1e-8;
pub const REFINEMENT_RATIO: (f64, f64) = (3.5, 4.5);
/// Residuals this small count as exact and skip the ratio test.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

fn max_residual(state: &MapState) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..state.grid.n1 {
        if !gauss_band(state, i) {
            continue;
        }
        for j in 0..state.grid.n2 {
            worst = worst.max(gauss_residual(state, i, j)?);
        }
    }
    Ok(worst)
}

/// Oracle cross-checks on the initial state.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let state = cfg.initial_state()?;
    let mut hodge = 0.0f64;
    for i in 0..state.grid.n1 {
        for j in 0..state.grid.n2 {
            let (u1, u2) = u_via_hodge(&state, i, j);
            let q = jacobian_quantities(&singular_at(&state, i, j)?);
            hodge = hodge.max((u1 - q.u1).abs()).max((u2 - q.u2).abs());
        }
    }
    let velocity = extrinsic_field(&state)?.max_velocity_residual;
    let coarse = max_residual(&state)?;
    let fine = max_residual(&cfg.state_on_grid(2 * cfg.grid.n1, 2 * cfg.grid.n2)?)?;
    let ratio = coarse / fine;
    let exact = coarse.max(fine) <= RESIDUAL_FLOOR;
    let in_band = ratio >= REFINEMENT_RATIO.0 && ratio <= REFINEMENT_RATIO.1;
    let refine_msg = if exact {
        format!("residuals {coarse:.3e} and {fine:.3e} at machine precision")
    } else if in_band {
        format!("residual {coarse:.3e} -> {fine:.3e} under doubling")
    } else {
        format!(
            "residual {coarse:.3e} -> {fine:.3e}: ratio {ratio:.3} outside [{}, {}], grid {}x{} is under-resolved for this map",
            REFINEMENT_RATIO.0, REFINEMENT_RATIO.1, cfg.grid.n1, cfg.grid.n2
        )
    };
    Ok(vec![
        CheckRow {
            name: "u_via_hodge",
            value: hodge,
            threshold: format!("<= {HODGE_TOL:e}"),
            pass: hodge <= HODGE_TOL,
            message: "max |u_hodge - u_singular| over all points".into(),
        },
        CheckRow {
            name: "graphical_velocity",
            value: velocity,
            threshold: format!("<= {VELOCITY_TOL:e}"),
            pass: velocity <= VELOCITY_TOL,
            message: "normal residual of the map velocity relative to 1 + |A|".into(),
        },
        CheckRow {
            name: "gauss_refinement",
            value: if exact { 0.0 } else { ratio },
            threshold: format!("in [{}, {}]", REFINEMENT_RATIO.0, REFINEMENT_RATIO.1),
            pass: exact || in_band,
            message: refine_msg,
        },
    ])
}

pub fn print_checks(rows: &[CheckRow]) {
    println!("{:<20} {:>12} {:>16}  {:<6} detail", "check", "value", "threshold", "result");
    for r in rows {
        println!(
            "{:<20} {:>12.4e} {:>16}  {:<6} {}",
            r.name,
            r.value,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" },
            r.message
        );
    }
}

pub fn cmd_check(config_path: &Path) -> i32 {
    match RunConfig::load(config_path).and_then(|cfg| run_checks(&cfg)) {
        Ok(rows) => {
            print_checks(&rows);
            if rows.iter().all(|r| r.pass) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => report_error(&e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Grid,
    Dt,
    Amplitude,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grid" => Ok(SweepAxis::Grid),
            "dt" => Ok(SweepAxis::Dt),
            "amplitude" => Ok(SweepAxis::Amplitude),
            _ => Err(format!("unknown sweep axis '{s}' (expected grid, dt or amplitude)")),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Grid => "grid",
            SweepAxis::Dt => "dt",
            SweepAxis::Amplitude => "amplitude",
        }
    }

    /// Copy of `base` with the swept parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Grid => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::ConfigRejected(format!("grid value {value} is not a positive integer")));
                }
                // keep the aspect ratio of the base grid
                let n1 = value as usize;
                cfg.grid.n2 = (n1 * base.grid.n2) / base.grid.n1;
                cfg.grid.n1 = n1;
            }
            SweepAxis::Dt => cfg.flow.fixed_dt = Some(value),
            SweepAxis::Amplitude => cfg.initial_map = base.initial_map.with_amplitude(value)?,
        }
        cfg.output.dir = base.output.dir.join(format!("{}_{value}", self.name()));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub metric: f64,
    pub order: Option<f64>,
}

/// Observed orders `ln(e_k / e_{k+1}) / ln(r_k)`, where `r_k` is the
/// refinement factor between successive sweep values.
pub fn observed_orders(values: &[f64], errors: &[f64], axis: SweepAxis) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for k in 1..errors.len() {
        let r = match axis {
            SweepAxis::Grid => values[k] / values[k - 1],
            SweepAxis::Dt => values[k - 1] / values[k],
            SweepAxis::Amplitude => values[k - 1] / values[k],
        };
        let order = (errors[k - 1] / errors[k]).ln() / r.ln();
        out.push(order.is_finite().then_some(order));
    }
    out
}

/// Run the sweep and return one row per value. The metric is
/// `gauss_residual_max` at the final record for grid sweeps, the distance
/// to the next finer run's final state for dt sweeps, and the initial
/// `max‖A‖²` for amplitude sweeps.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<(Vec<SweepRow>, Vec<RunOutcome>)> {
    let mut outcomes = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = axis.apply(base, v)?;
        outcomes.push(run_to(&cfg, &cfg.output.dir)?);
    }
    let metrics: Vec<f64> = match axis {
        SweepAxis::Grid => outcomes
            .iter()
            .map(|o| o.trajectory.records.last().unwrap().gauss_residual_max)
            .collect(),
        SweepAxis::Dt => outcomes
            .windows(2)
            .map(|w| w[0].trajectory.final_state.max_distance(&w[1].trajectory.final_state))
            .collect(),
        SweepAxis::Amplitude => outcomes.iter().map(|o| o.trajectory.records[0].max_norm_a2).collect(),
    };
    let orders = observed_orders(values, &metrics, axis);
    let rows = values
        .iter()
        .enumerate()
        .map(|(k, &value)| SweepRow {
            value,
            metric: metrics.get(k).copied().unwrap_or(f64::NAN),
            order: orders.get(k).copied().flatten(),
        })
        .collect();
    Ok((rows, outcomes))
}

pub fn print_sweep(axis: SweepAxis, rows: &[SweepRow]) {
    let metric = match axis {
        SweepAxis::Grid => "gauss_residual_max",
        SweepAxis::Dt => "diff_to_next",
        SweepAxis::Amplitude => "max_normA2(t=0)",
    };
    println!("{:>12} {:>20} {:>8}", axis.name(), metric, "order");
    for r in rows {
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
        println!("{:>12} {:>20.6e} {:>8}", r.value, r.metric, order);
    }
}

pub fn cmd_sweep(config_path: &Path, axis: SweepAxis, values: &[f64]) -> i32 {
    let base = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    if values.len() == 1 {
        let result = axis.apply(&base, values[0]).and_then(|cfg| run_to(&cfg, &cfg.output.dir));
        return match result {
            Ok(out) => run_exit(&out),
            Err(e) => report_error(&e),
        };
    }
    match sweep(&base, axis, values) {
        Ok((rows, outcomes)) => {
            print_sweep(axis, &rows);
            if outcomes.iter().any(|o| o.trajectory.termination.is_guard_trip()) {
                EXIT_GUARD
            } else {
                EXIT_OK
            }
        }
        Err(e) => report_error(&e),
    }
}

/// Cap the global worker pool from `GRAPHFLOW_THREADS`, if set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("GRAPHFLOW_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS_ID: &str = r#"
schema_version = 1
[domain]
kind = "flat_torus"
[target]
kind = "flat_torus"
[initial_map]
family = "identity"
[grid]
n1 = 16
n2 = 16
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_toml(TORUS_ID).unwrap();
        assert_eq!(cfg.flow, FlowConfig::default());
        assert_eq!(cfg.output.record_every, 10);
        assert_eq!(cfg.grid.stencil, StencilOrder::Second);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            TORUS_ID.replace("schema_version = 1", "schema_version = 2"),
            TORUS_ID.replace("n1 = 16", "n1 = 16\nbogus = 3"),
            TORUS_ID.replace("[target]\nkind = \"flat_torus\"", "[target]\nkind = \"round_sphere\""),
            TORUS_ID.replace("n2 = 16", "n2 = 4"),
            format!("{TORUS_ID}[output]\nrecord_every = 0\n"),
            format!("{TORUS_ID}[flow]\ncfl = 3.0\n"),
        ];
        for c in &cases {
            assert!(matches!(RunConfig::from_toml(c), Err(Error::ConfigRejected(_))), "{c}");
        }
    }

    #[test]
    fn orders_from_ratios() {
        let o = observed_orders(&[32.0, 64.0, 128.0], &[1.6e-3, 4e-4, 1e-4], SweepAxis::Grid);
        assert!(o[0].is_none());
        assert!((o[1].unwrap() - 2.0).abs() < 1e-12 && (o[2].unwrap() - 2.0).abs() < 1e-12);
        let o = observed_orders(&[1e-3, 5e-4], &[8e-6, 1e-6], SweepAxis::Dt);
        assert!((o[1].unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_axis_keeps_aspect() {
        let base = RunConfig::from_toml(&TORUS_ID.replace("n2 = 16", "n2 = 32")).unwrap();
        let c = SweepAxis::Grid.apply(&base, 24.0).unwrap();
        assert_eq!((c.grid.n1, c.grid.n2), (24, 48));
        assert!(SweepAxis::Grid.apply(&base, 24.5).is_err());
        assert!(SweepAxis::Amplitude.apply(&base, 0.1).is_err());
    }
}
