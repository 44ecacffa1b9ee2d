//! Slow reference computations used to cross-check the main pipeline.
//!
//! Only raw stored values of a [`MapState`] are read here: neighbour lookup,
//! lattice lifting, finite differences and the Jacobian formulas are all
//! recomputed locally.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mapfield::{MapState, StencilOrder};
use crate::surface::{SurfaceKind, SurfaceModel};

/// `(u1, u2)` at grid point `(i, j)` as Hodge duals of the pulled-back area
/// forms of the two factors.
pub fn u_via_hodge(state: &MapState, i: usize, j: usize) -> (f64, f64) {
    let [d1, d2] = first_derivatives(state, i as isize, j as isize);
    let q = state.values[i * state.grid.n2 + j];
    let (a, b, omega_n) = match &state.target.kind {
        SurfaceKind::FlatTorus { .. } => (d1, d2, d1.x * d2.y - d1.y * d2.x),
        _ => {
            let n = q / q.norm();
            let a = d1 - n * n.dot(&d1);
            let b = d2 - n * n.dot(&d2);
            (a, b, n.dot(&d1.cross(&d2)))
        }
    };
    let gm = domain_metric(&state.domain, grid_x1(state, i as isize));
    let g = Matrix2::new(
        gm[(0, 0)] + a.dot(&a),
        gm[(0, 1)] + a.dot(&b),
        gm[(1, 0)] + b.dot(&a),
        gm[(1, 1)] + b.dot(&b),
    );
    let area_g = g.determinant().sqrt();
    (gm.determinant().sqrt() / area_g, omega_n / area_g)
}

fn grid_x1(state: &MapState, i: isize) -> f64 {
    if state.domain.is_spherical() {
        (i as f64 + 0.5) * PI / state.grid.n1 as f64
    } else {
        i as f64 / state.grid.n1 as f64
    }
}

fn domain_metric(domain: &SurfaceModel, x1: f64) -> Matrix2<f64> {
    match &domain.kind {
        SurfaceKind::FlatTorus { lattice } => lattice.transpose() * lattice,
        _ => domain.metric_formula(x1),
    }
}

/// Value at an extended index, following pole reflection on sphere domains.
fn lookup(state: &MapState, i: isize, j: isize) -> Vector3<f64> {
    let (n1, n2) = (state.grid.n1 as isize, state.grid.n2 as isize);
    let (row, col) = if state.domain.is_spherical() {
        if i < 0 {
            (-i - 1, j + n2 / 2)
        } else if i >= n1 {
            (2 * n1 - i - 1, j + n2 / 2)
        } else {
            (i, j)
        }
    } else {
        (i.rem_euclid(n1), j)
    };
    state.values[(row * n2 + col.rem_euclid(n2)) as usize]
}

/// `p - c` lifted to the nearest lattice translate for torus targets.
fn difference(target: &SurfaceModel, c: &Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    match &target.kind {
        SurfaceKind::FlatTorus { lattice } => {
            let inv = lattice.try_inverse().expect("validated lattice");
            let d = Vector2::new(p.x - c.x, p.y - c.y);
            let s = inv * d;
            let mut best = d;
            for a in -1..=1 {
                for b in -1..=1 {
                    let k = Vector2::new(s.x.round() + a as f64, s.y.round() + b as f64);
                    let cand = d - lattice * k;
                    if cand.norm_squared() < best.norm_squared() {
                        best = cand;
                    }
                }
            }
            Vector3::new(best.x, best.y, 0.0)
        }
        _ => p - c,
    }
}

fn first_derivatives(state: &MapState, i: isize, j: isize) -> [Vector3<f64>; 2] {
    let (offsets, weights): (&[isize], &[f64]) = match state.stencil {
        StencilOrder::Second => (&[-1, 1], &[-0.5, 0.5]),
        StencilOrder::Fourth => (&[-2, -1, 1, 2], &[1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0]),
    };
    let c = lookup(state, i, j);
    let mut d1 = Vector3::zeros();
    let mut d2 = Vector3::zeros();
    for (o, w) in offsets.iter().zip(weights) {
        d1 += difference(&state.target, &c, &lookup(state, i + o, j)) * *w;
        d2 += difference(&state.target, &c, &lookup(state, i, j + o)) * *w;
    }
    [d1 / state.grid.h1, d2 / state.grid.h2]
}

/// Colatitude profile `h(x1)` of a sphere-to-sphere state along the meridian
/// through column `j`, as `(x1, h)` pairs at the grid rows.
pub fn meridian_profile(state: &MapState, j: usize) -> Vec<(f64, f64)> {
    (0..state.grid.n1)
        .map(|i| {
            let q = state.values[i * state.grid.n2 + j];
            (grid_x1(state, i as isize), (q.z / q.norm()).clamp(-1.0, 1.0).acos())
        })
        .collect()
}

/// Sampled colatitude profile of an equivariant sphere map `(x1, x2) -> (h(x1), x2)`
/// on the nodes `x1 = k π / n`, `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct RotSymProfile {
    pub h: Vec<f64>,
}

impl RotSymProfile {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let p = Self {
            h: (0..=n).map(|k| f(k as f64 * PI / n as f64)).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.h.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        PI / self.n() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n()).map(|k| k as f64 * self.spacing()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.h.len() < 3 || self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigRejected("1-D profile needs at least 3 finite samples".into()));
        }
        let end = *self.h.last().unwrap();
        if self.h[0].abs() > 1e-12 || (end.abs() > 1e-12 && (end - PI).abs() > 1e-12) {
            return Err(Error::ConfigRejected(
                "1-D profile must satisfy h(0) = 0 and h(π) ∈ {0, π}".into(),
            ));
        }
        Ok(())
    }

    /// Linear interpolation at colatitude `x1`.
    pub fn at(&self, x1: f64) -> f64 {
        let s = (x1 / self.spacing()).clamp(0.0, self.n() as f64);
        let k = (s.floor() as usize).min(self.n() - 1);
        let w = s - k as f64;
        self.h[k] * (1.0 - w) + self.h[k + 1] * w
    }
}

/// Settings of the reduced 1-D solve.
#[derive(Debug, Clone)]
pub struct ReducedRun {
    pub domain_kappa: f64,
    /// Output times in increasing order; the last one ends the run.
    pub output_times: Vec<f64>,
    /// Step size; defaults to `Δ² R_M² / 4`.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReducedSnapshot {
    pub t: f64,
    pub profile: RotSymProfile,
    /// Interior minimum of `ρ` from `λ = h'`, `μ = sin h / sin x1` (scaled by the radii).
    pub min_rho: f64,
}

#[derive(Debug, Clone)]
pub struct RotSymTrajectory {
    pub snapshots: Vec<ReducedSnapshot>,
    pub steps: usize,
}

/// Heun integration of the equivariant reduction
/// `h_t = h''/(R_M² + R_N² h'²) + (sin x cos x h' R_M² - R_N² sin h cos h)/(R_M² sin² x + R_N² sin² h)`
/// with Dirichlet ends.
pub fn rotsym_reduce(profile: &RotSymProfile, target_kappa: f64, run: &ReducedRun) -> Result<RotSymTrajectory> {
    profile.validate()?;
    if !(target_kappa > 0.0 && run.domain_kappa > 0.0) {
        return Err(Error::ConfigRejected("1-D reduction needs positive curvatures".into()));
    }
    let rm2 = 1.0 / run.domain_kappa;
    let rn2 = 1.0 / target_kappa;
    let n = profile.n();
    let dx = profile.spacing();
    let dt = run.dt.unwrap_or(0.25 * dx * dx * rm2);
    let trig: Vec<(f64, f64)> = (0..=n).map(|k| (k as f64 * dx).sin_cos()).collect();
    let ends = (profile.h[0], profile.h[n]);

    let rhs = |h: &[f64], out: &mut [f64]| {
        for k in 1..n {
            let d1 = (h[k + 1] - h[k - 1]) / (2.0 * dx);
            let d2 = (h[k + 1] - 2.0 * h[k] + h[k - 1]) / (dx * dx);
            let (s, c) = trig[k];
            let (sh, ch) = h[k].sin_cos();
            out[k] = d2 / (rm2 + rn2 * d1 * d1)
                + (rm2 * s * c * d1 - rn2 * sh * ch) / (rm2 * s * s + rn2 * sh * sh);
        }
    };

    let mut h = profile.h.clone();
    let mut k1 = vec![0.0; n + 1];
    let mut k2 = vec![0.0; n + 1];
    let mut stage = h.clone();
    let mut t = 0.0;
    let mut steps = 0;
    let mut snapshots = Vec::with_capacity(run.output_times.len());
    for &target_t in &run.output_times {
        while t < target_t - 1e-15 {
            let tau = dt.min(target_t - t);
            rhs(&h, &mut k1);
            for k in 1..n {
                stage[k] = h[k] + tau * k1[k];
            }
            rhs(&stage, &mut k2);
            for k in 1..n {
                h[k] += 0.5 * tau * (k1[k] + k2[k]);
            }
            t += tau;
            steps += 1;
            let drift = (h[0] - ends.0).abs().max((h[n] - ends.1).abs());
            if drift > 1e-8 || h.iter().any(|v| !v.is_finite()) {
                return Err(Error::EndpointViolation {
                    drift: if drift.is_finite() { drift } else { f64::INFINITY },
                });
            }
        }
        let profile = RotSymProfile { h: h.clone() };
        let min_rho = reduced_min_rho(&profile, rm2, rn2);
        snapshots.push(ReducedSnapshot {
            t: target_t,
            profile,
            min_rho,
        });
    }
    Ok(RotSymTrajectory { snapshots, steps })
}

fn reduced_min_rho(p: &RotSymProfile, rm2: f64, rn2: f64) -> f64 {
    let n = p.n();
    let dx = p.spacing();
    let scale = (rn2 / rm2).sqrt();
    (1..n)
        .map(|k| {
            let lam = scale * ((p.h[k + 1] - p.h[k - 1]) / (2.0 * dx)).abs();
            let mu = scale * (p.h[k].sin() / (k as f64 * dx).sin()).abs();
            (1.0 - lam * lam * mu * mu) / ((1.0 + lam * lam) * (1.0 + mu * mu))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Predicted per-step decay factor of a small Fourier perturbation of the
/// identity between equal unit-square tori, `exp(-2π²|k|² dt)`.
pub fn linearized_mode_decay(amplitude: f64, k: [i32; 2], dt: f64) -> Result<f64> {
    if amplitude.abs() > 1e-3 {
        return Err(Error::ConfigRejected(format!(
            "linearized decay needs amplitude <= 1e-3, got {amplitude}"
        )));
    }
    let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
    Ok((-2.0 * PI * PI * k2 * dt).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapfield::{GridSpec, MapFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn hodge_examples() {
        let t = SurfaceModel::unit_square_torus();
        let g = GridSpec::for_domain(&t, 16, 16).unwrap();
        let c = MapState::from_family(t.clone(), t.clone(), g, &MapFamily::Constant { point: [0.3, 0.4] }).unwrap();
        let (u1, u2) = u_via_hodge(&c, 3, 5);
        assert_abs_diff_eq!(u1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(u2, 0.0, epsilon = 1e-14);
        let id = MapState::from_family(t.clone(), t, g, &MapFamily::Identity).unwrap();
        for (i, j) in [(0, 0), (15, 15), (7, 0)] {
            let (u1, u2) = u_via_hodge(&id, i, j);
            assert_abs_diff_eq!(u1, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(u2, 0.5, epsilon = 1e-12);
        }
        let s = SurfaceModel::round_sphere(1.0).unwrap();
        let g = GridSpec::for_domain(&s, 16, 16).unwrap();
        let id = MapState::from_family(s.clone(), s, g, &MapFamily::Identity).unwrap();
        // chordal differences shrink the identity slightly, so only O(h²) here
        let (u1, u2) = u_via_hodge(&id, 8, 3);
        assert_abs_diff_eq!(u1, 0.5, epsilon = 1e-2);
        assert_abs_diff_eq!(u2, 0.5, epsilon = 1e-2);
    }

    #[test]
    fn reduction_fixed_points() {
        let run = ReducedRun {
            domain_kappa: 1.0,
            output_times: vec![0.01],
            dt: None,
        };
        for f in [|x: f64| x, |_: f64| 0.0] {
            let p = RotSymProfile::from_fn(64, f).unwrap();
            let tr = rotsym_reduce(&p, 1.0, &run).unwrap();
            let last = &tr.snapshots[0].profile;
            let err = last.h.iter().zip(&p.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "drift {err}");
        }
    }

    #[test]
    fn reduction_contracts_fold() {
        let p = RotSymProfile::from_fn(128, |x| 0.5 * x.sin()).unwrap();
        let run = ReducedRun {
            domain_kappa: 1.0,
            output_times: vec![0.1, 0.5],
            dt: None,
        };
        let tr = rotsym_reduce(&p, 1.0, &run).unwrap();
        let amp = |s: &ReducedSnapshot| s.profile.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp(&tr.snapshots[1]) < amp(&tr.snapshots[0]));
        assert!(amp(&tr.snapshots[0]) < 0.5);
        assert!(tr.snapshots[1].min_rho > tr.snapshots[0].min_rho);
    }

    #[test]
    fn profile_endpoints_checked() {
        assert!(RotSymProfile::from_fn(16, |x| x + 0.1).is_err());
        assert!(RotSymProfile::from_fn(16, |x| 0.5 * x).is_err());
        assert!(RotSymProfile::from_fn(16, |x| x + 0.2 * (2.0 * x).sin()).is_ok());
    }

    #[test]
    fn mode_decay_examples() {
        let f = linearized_mode_decay(1e-4, [1, 0], 1e-4).unwrap();
        assert_abs_diff_eq!(f, (-2.0 * PI * PI * 1e-4).exp(), epsilon = 1e-15);
        assert_eq!(linearized_mode_decay(1e-4, [0, 0], 0.3).unwrap(), 1.0);
        let a = linearized_mode_decay(1e-4, [1, 1], 1e-3).unwrap().ln();
        let b = linearized_mode_decay(1e-4, [1, 0], 1e-3).unwrap().ln();
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-12);
        assert!(linearized_mode_decay(0.01, [1, 0], 1e-3).is_err());
    }
}
