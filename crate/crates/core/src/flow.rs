//! Explicit time stepping of the nonparametric graphical flow.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bounds::{envelope, fit_c0, EnvelopeParams};
use crate::error::{Error, Result};
use crate::extrinsic::{extrinsic_field, ExtrinsicField, InequalitySlacks};
use crate::mapfield::{induced_metric, point_jet, GridLayout, MapState};
use crate::target::TargetPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Heun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub cfl: f64,
    pub t_max: f64,
    pub u1_floor: f64,
    pub h_tol: f64,
    pub blowup_guard: f64,
    pub integrator: Integrator,
    /// Use this step size instead of the CFL estimate.
    pub fixed_dt: Option<f64>,
    /// Damp longitude modes that the latitude spacing cannot resolve.
    pub polar_filter: bool,
    pub max_steps: Option<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            t_max: 1.0,
            u1_floor: 0.01,
            h_tol: 1e-5,
            blowup_guard: 1e6,
            integrator: Integrator::Heun,
            fixed_dt: None,
            polar_filter: true,
            max_steps: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigRejected(m));
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl = {} outside (0, 0.5]", self.cfl));
        }
        if !(self.u1_floor > 0.0 && self.u1_floor <= 0.1) {
            return bad(format!("u1_floor = {} outside (0, 0.1]", self.u1_floor));
        }
        for (name, v) in [
            ("t_max", self.t_max),
            ("h_tol", self.h_tol),
            ("blowup_guard", self.blowup_guard),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("fixed_dt = {dt} must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-row longitude filter for latitude-longitude grids.
struct PolarFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PolarFilter {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn apply(&self, state: &MapState, v: &mut [Vector3<f64>]) {
        let n2 = state.grid.n2;
        let mut buf = vec![Complex::new(0.0, 0.0); n2];
        for i in 0..state.grid.n1 {
            let cut = state.domain_row(i as isize).mode_cut;
            if cut >= n2 / 2 {
                continue;
            }
            let row = &mut v[i * n2..(i + 1) * n2];
            for c in 0..3 {
                for (b, x) in buf.iter_mut().zip(row.iter()) {
                    *b = Complex::new(x[c], 0.0);
                }
                self.forward.process(&mut buf);
                for (k, b) in buf.iter_mut().enumerate() {
                    if k.min(n2 - k) > cut {
                        *b = Complex::new(0.0, 0.0);
                    }
                }
                self.inverse.process(&mut buf);
                for (x, b) in row.iter_mut().zip(&buf) {
                    x[c] = b.re / n2 as f64;
                }
            }
        }
    }
}

/// Velocity of one stage together with the scalars the guards need.
pub struct StageEval {
    pub velocity: Vec<Vector3<f64>>,
    pub max_norm_h2: f64,
    pub max_norm_a2: f64,
    pub min_u1: f64,
    /// Largest explicit-stability rate, see [`stable_dt`].
    pub max_rate: f64,
}

/// Squared effective wavenumber of the highest longitude mode kept on row `i`.
fn k2_eff(state: &MapState, i: isize, filtered: bool) -> f64 {
    let h2 = state.grid.h2;
    let k = match state.grid.layout {
        GridLayout::LatLong if filtered => {
            let half = (0.5 * state.domain_row(i).mode_cut as f64 * h2).min(std::f64::consts::FRAC_PI_2);
            2.0 * half.sin() / h2
        }
        _ => 2.0 / h2,
    };
    k * k
}

#[inline]
fn rate(g_inv: &Matrix2<f64>, h1: f64, h2: f64, k2: f64) -> f64 {
    g_inv[(0, 0)] / (h1 * h1) + g_inv[(1, 1)] * k2 / 4.0 + g_inv[(0, 1)].abs() / (2.0 * h1 * h2)
}

/// Tension-field velocity at every grid point, unfiltered. `filtered` only
/// affects the reported stability rate.
pub fn velocity_field(state: &MapState, filtered: bool) -> Result<StageEval> {
    let (h1, h2) = (state.grid.h1, state.grid.h2);
    let per_point: Vec<(Vector3<f64>, f64, f64, f64, f64)> = state
        .indices()
        .map(|(i, j)| {
            let jet = point_jet(state, i as isize, j as isize)?;
            let gm = &state.domain_row(i as isize).metric;
            let g = induced_metric(gm, &jet.df);
            let det_g = g.determinant();
            let g_inv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det_g;
            // normal-projection form on target vectors
            let q = Matrix2::identity() - jet.df * g_inv * jet.df.transpose();
            let mut v = nalgebra::Vector2::zeros();
            let mut qb = [[nalgebra::Vector2::zeros(); 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    v += jet.hess[a][b] * g_inv[(a, b)];
                    qb[a][b] = q * jet.hess[a][b];
                }
            }
            let mut a2 = 0.0;
            for i1 in 0..2 {
                for j1 in 0..2 {
                    for k1 in 0..2 {
                        for l1 in 0..2 {
                            a2 += g_inv[(i1, k1)] * g_inv[(j1, l1)] * jet.hess[i1][j1].dot(&qb[k1][l1]);
                        }
                    }
                }
            }
            let hh = v.dot(&(q * v));
            let u1 = (gm.determinant() / det_g).sqrt();
            let r = rate(&g_inv, h1, h2, k2_eff(state, i as isize, filtered));
            Ok((jet.ambient(&v), hh, a2, u1, r))
        })
        .collect::<Result<_>>()?;
    let mut out = StageEval {
        velocity: Vec::with_capacity(per_point.len()),
        max_norm_h2: 0.0,
        max_norm_a2: 0.0,
        min_u1: f64::INFINITY,
        max_rate: 0.0,
    };
    for (v, h2, a2, u1, r) in per_point {
        out.max_rate = out.max_rate.max(r);
        out.velocity.push(v);
        out.max_norm_h2 = out.max_norm_h2.max(h2);
        out.max_norm_a2 = out.max_norm_a2.max(a2);
        out.min_u1 = out.min_u1.min(u1);
    }
    Ok(out)
}

/// Largest stable step: `cfl / max(g¹¹/h1² + g²²k²/4 + |g¹²|/(2 h1 h2))`
/// with `k = 2 sin(m h2 / 2)/h2` for the highest kept longitude mode `m`.
pub fn stable_dt(state: &MapState, cfg: &FlowConfig) -> Result<f64> {
    let e = velocity_field(state, cfg.polar_filter)?;
    Ok(dt_from_rate(e.max_rate, state, cfg))
}

fn dt_from_rate(rate: f64, state: &MapState, cfg: &FlowConfig) -> f64 {
    let dt = if rate > 0.0 { cfg.cfl / rate } else { f64::INFINITY };
    dt.min(cfg.t_max - state.t)
}

struct Stepper {
    filter: Option<PolarFilter>,
    filtered: bool,
}

impl Stepper {
    fn new(state: &MapState, cfg: &FlowConfig) -> Self {
        let filter = (cfg.polar_filter && state.grid.layout == GridLayout::LatLong)
            .then(|| PolarFilter::new(state.grid.n2));
        Self {
            filter,
            filtered: cfg.polar_filter,
        }
    }

    fn stage(&self, state: &MapState) -> Result<StageEval> {
        let mut e = velocity_field(state, self.filtered)?;
        if let Some(f) = &self.filter {
            f.apply(state, &mut e.velocity);
        }
        Ok(e)
    }

    fn advance(&self, state: &MapState, v: &[Vector3<f64>], dt: f64, t: f64) -> Result<MapState> {
        let values: Vec<TargetPoint> = state
            .values
            .par_iter()
            .zip(v.par_iter())
            .map(|(q, v)| state.space.retract(q, &(v * dt)))
            .collect();
        if let Some(k) = values.iter().position(|q| !q.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteValue {
                i: k / state.grid.n2,
                j: k % state.grid.n2,
            });
        }
        Ok(state.with_values(values, t))
    }

    /// One step given the already evaluated first stage.
    fn step_from(&self, state: &MapState, first: &StageEval, dt: f64, integrator: Integrator) -> Result<MapState> {
        let t = state.t + dt;
        match integrator {
            Integrator::Euler => self.advance(state, &first.velocity, dt, t),
            Integrator::Heun => {
                let predictor = self.advance(state, &first.velocity, dt, t)?;
                let second = self.stage(&predictor)?;
                let avg: Vec<Vector3<f64>> = first
                    .velocity
                    .iter()
                    .zip(&second.velocity)
                    .map(|(a, b)| (a + b) * 0.5)
                    .collect();
                self.advance(state, &avg, dt, t)
            }
        }
    }
}

/// Advance `state` by `dt`.
pub fn step(state: &MapState, dt: f64, cfg: &FlowConfig) -> Result<MapState> {
    let stepper = Stepper::new(state, cfg);
    let first = stepper.stage(state)?;
    stepper.step_from(state, &first, dt, cfg.integrator)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxTime,
    GraphicalityLoss,
    BlowupGuard,
}

impl Termination {
    pub fn is_guard_trip(self) -> bool {
        matches!(self, Termination::GraphicalityLoss | Termination::BlowupGuard)
    }
}

/// One row of the diagnostics series. Field order is the CSV column order.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub min_rho: f64,
    pub min_gap: f64,
    pub min_u1: f64,
    #[serde(rename = "max_normA2")]
    pub max_norm_a2: f64,
    #[serde(rename = "max_normH2")]
    pub max_norm_h2: f64,
    pub area: f64,
    #[serde(rename = "dArea_dt_est")]
    pub darea_dt_est: f64,
    #[serde(rename = "int_normA2_gt")]
    pub int_norm_a2_gt: f64,
    #[serde(rename = "int_normA2_gM")]
    pub int_norm_a2_gm: f64,
    pub gauss_residual_max: f64,
    pub envelope_value: f64,
    pub envelope_margin: f64,
    #[serde(rename = "int_normH2_gt")]
    pub int_norm_h2_gt: f64,
    #[serde(skip)]
    pub slacks: InequalitySlacks,
    #[serde(skip)]
    pub max_velocity_residual: f64,
}

impl DiagnosticsRecord {
    pub fn from_field(t: f64, dt: f64, f: &ExtrinsicField, env: Option<&EnvelopeParams>) -> Self {
        let (envelope_value, envelope_margin) = match env {
            Some(p) => {
                let e = envelope(t, p);
                (e, f.min_rho - e)
            }
            None => (f64::NAN, f64::NAN),
        };
        Self {
            t,
            dt,
            min_rho: f.min_rho,
            min_gap: f.min_gap,
            min_u1: f.min_u1,
            max_norm_a2: f.max_norm_a2,
            max_norm_h2: f.max_norm_h2,
            area: f.area,
            darea_dt_est: f64::NAN,
            int_norm_a2_gt: f.int_norm_a2_g,
            int_norm_a2_gm: f.int_norm_a2_m,
            gauss_residual_max: f.gauss_residual_max,
            envelope_value,
            envelope_margin,
            int_norm_h2_gt: f.int_norm_h2_g,
            slacks: f.slacks,
            max_velocity_residual: f.max_velocity_residual,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    pub final_state: MapState,
    /// Envelope fitted at `t = 0`, when the initial map is strictly area decreasing.
    pub envelope: Option<EnvelopeParams>,
    /// First step size taken (0 when no step was taken).
    pub dt0: f64,
    pub steps: usize,
}

/// Reject geometries violating `min σ_M ≥ sup σ_N`.
pub fn check_curvature_hypothesis(state: &MapState) -> Result<()> {
    let (min_m, _) = state.domain.curvature_bounds();
    let (_, sup_n) = state.target.curvature_bounds();
    if min_m + 1e-12 < sup_n {
        return Err(Error::ConfigRejected(format!(
            "curvature hypothesis violated: min sigma_M = {min_m} < sup sigma_N = {sup_n}"
        )));
    }
    Ok(())
}

/// Fill `darea_dt_est` by centered differences on the (possibly nonuniform)
/// record times, one-sided at the ends.
pub fn estimate_area_rate(records: &mut [DiagnosticsRecord]) {
    let n = records.len();
    if n < 2 {
        return;
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let a: Vec<f64> = records.iter().map(|r| r.area).collect();
    for k in 0..n {
        records[k].darea_dt_est = if k == 0 {
            (a[1] - a[0]) / (t[1] - t[0])
        } else if k == n - 1 {
            (a[k] - a[k - 1]) / (t[k] - t[k - 1])
        } else {
            let hm = t[k] - t[k - 1];
            let hp = t[k + 1] - t[k];
            (hm * hm * (a[k + 1] - a[k]) + hp * hp * (a[k] - a[k - 1])) / (hm * hp * (hm + hp))
        };
    }
}

/// Run the flow from `initial`, recording diagnostics at `t = 0`, every
/// `record_every` steps, and at termination.
pub fn run(initial: MapState, cfg: &FlowConfig, record_every: usize) -> Result<Trajectory> {
    run_observed(initial, cfg, record_every, |_| {})
}

/// [`run`] with a callback invoked on every record as it is produced.
pub fn run_observed<F>(initial: MapState, cfg: &FlowConfig, record_every: usize, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(&DiagnosticsRecord),
{
    cfg.validate()?;
    check_curvature_hypothesis(&initial)?;
    let record_every = record_every.max(1);
    let sigma = initial.domain.curvature_bounds().0;
    let stepper = Stepper::new(&initial, cfg);

    let field0 = extrinsic_field(&initial)?;
    let env = fit_c0(field0.min_rho, sigma).ok();
    let mut records = vec![DiagnosticsRecord::from_field(initial.t, 0.0, &field0, env.as_ref())];
    observe(&records[0]);

    let mut state = initial;
    let mut steps = 0usize;
    let mut dt0 = 0.0;
    let mut last_dt = 0.0;
    let mut last_recorded_step = 0usize;
    let h_tol2 = cfg.h_tol * cfg.h_tol;
    let termination = loop {
        let first = stepper.stage(&state)?;
        if first.max_norm_h2 <= h_tol2 {
            break Termination::Converged;
        }
        if first.min_u1 <= cfg.u1_floor {
            break Termination::GraphicalityLoss;
        }
        if first.max_norm_a2 >= cfg.blowup_guard {
            break Termination::BlowupGuard;
        }
        if state.t >= cfg.t_max * (1.0 - 1e-12) || cfg.max_steps.is_some_and(|m| steps >= m) {
            break Termination::MaxTime;
        }
        let dt = match cfg.fixed_dt {
            Some(dt) => dt.min(cfg.t_max - state.t),
            None => dt_from_rate(first.max_rate, &state, cfg),
        };
        state = stepper.step_from(&state, &first, dt, cfg.integrator)?;
        steps += 1;
        last_dt = dt;
        if steps == 1 {
            dt0 = dt;
        }
        if steps % record_every == 0 {
            let f = extrinsic_field(&state)?;
            records.push(DiagnosticsRecord::from_field(state.t, dt, &f, env.as_ref()));
            observe(records.last().unwrap());
            last_recorded_step = steps;
        }
    };
    if last_recorded_step != steps {
        let f = extrinsic_field(&state)?;
        records.push(DiagnosticsRecord::from_field(state.t, last_dt, &f, env.as_ref()));
        observe(records.last().unwrap());
    }
    estimate_area_rate(&mut records);
    Ok(Trajectory {
        records,
        termination,
        final_state: state,
        envelope: env,
        dt0,
        steps,
    })
}
