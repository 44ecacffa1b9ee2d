//! Domain and target Riemann surfaces as parametric charts.
//!
//! Three geometries are built in: flat tori with an arbitrary lattice, round
//! spheres of constant curvature `kappa`, and warped spheres with metric
//! `dx1² + w(x1)² dx2²`. Spherical charts use colatitude `x1 ∈ (0, π)` and
//! longitude `x2 ∈ [0, 2π)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of samples used by [`SurfaceModel::curvature_bounds`] for
/// variable-curvature surfaces.
pub const CURVATURE_SAMPLES: usize = 4096;

/// Christoffel symbols `gamma[k][i][j] = Γ^k_{ij}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub x1: f64,
    pub x2: f64,
}

impl ChartCoords {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

/// Warp profile `w(x) = sin(x) (1 + a sin²(x))`, `|a| <= 0.2`.
///
/// `a = 0` is the round unit sphere. Every member satisfies the pole
/// conditions `w(0) = w(π) = 0`, `w'(0) = 1`, `w'(π) = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile {
    pub a: f64,
}

impl WarpProfile {
    pub const MAX_A: f64 = 0.2;

    pub fn new(a: f64) -> Result<Self> {
        if !(a.abs() <= Self::MAX_A) {
            return Err(Error::ConfigRejected(format!(
                "warp parameter a = {a} outside [-{0}, {0}]",
                Self::MAX_A
            )));
        }
        Ok(Self { a })
    }

    pub fn w(&self, x: f64) -> f64 {
        let s = x.sin();
        s * (1.0 + self.a * s * s)
    }

    pub fn dw(&self, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        c * (1.0 + 3.0 * self.a * s * s)
    }

    pub fn ddw(&self, x: f64) -> f64 {
        let s = x.sin();
        -s + 6.0 * self.a * s - 9.0 * self.a * s * s * s
    }

    /// Gauss curvature `-w''/w`, written in a form that stays finite at the poles.
    pub fn curvature(&self, x: f64) -> f64 {
        let s2 = x.sin().powi(2);
        (1.0 - 6.0 * self.a + 9.0 * self.a * s2) / (1.0 + self.a * s2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SurfaceKind {
    /// Columns of `lattice` are the lattice generators.
    FlatTorus { lattice: Matrix2<f64> },
    RoundSphere { kappa: f64 },
    WarpedSphere { warp: WarpProfile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    /// Width of the excluded band next to each pole of a spherical chart.
    pub pole_guard: f64,
}

impl SurfaceModel {
    pub fn flat_torus(lattice: Matrix2<f64>) -> Result<Self> {
        let det = lattice.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::ConfigRejected(
                "torus lattice generators are linearly dependent".into(),
            ));
        }
        Ok(Self {
            kind: SurfaceKind::FlatTorus { lattice },
            pole_guard: 0.0,
        })
    }

    pub fn unit_square_torus() -> Self {
        Self {
            kind: SurfaceKind::FlatTorus {
                lattice: Matrix2::identity(),
            },
            pole_guard: 0.0,
        }
    }

    pub fn round_sphere(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::ConfigRejected(format!(
                "sphere curvature kappa = {kappa} must be positive"
            )));
        }
        Ok(Self {
            kind: SurfaceKind::RoundSphere { kappa },
            pole_guard: 1e-9,
        })
    }

    pub fn warped_sphere(a: f64) -> Result<Self> {
        Ok(Self {
            kind: SurfaceKind::WarpedSphere {
                warp: WarpProfile::new(a)?,
            },
            pole_guard: 1e-9,
        })
    }

    pub fn with_pole_guard(mut self, eps: f64) -> Self {
        self.pole_guard = eps;
        self
    }

    pub fn is_spherical(&self) -> bool {
        !matches!(self.kind, SurfaceKind::FlatTorus { .. })
    }

    /// Euclidean radius of a round sphere, `1/sqrt(kappa)`.
    pub fn sphere_radius(&self) -> Option<f64> {
        match self.kind {
            SurfaceKind::RoundSphere { kappa } => Some(1.0 / kappa.sqrt()),
            _ => None,
        }
    }

    fn check(&self, p: ChartCoords) -> Result<()> {
        if self.is_spherical() && (p.x1 < self.pole_guard || p.x1 > PI - self.pole_guard) {
            return Err(Error::PoleProximity {
                x1: p.x1,
                guard: self.pole_guard,
            });
        }
        Ok(())
    }

    pub fn metric_at(&self, p: ChartCoords) -> Result<Matrix2<f64>> {
        self.check(p)?;
        Ok(self.metric_formula(p.x1))
    }

    pub fn christoffel_at(&self, p: ChartCoords) -> Result<Christoffel> {
        self.check(p)?;
        Ok(self.christoffel_formula(p.x1))
    }

    pub fn curvature_at(&self, p: ChartCoords) -> Result<f64> {
        self.check(p)?;
        Ok(self.curvature_formula(p.x1))
    }

    /// Chart metric as an analytic function of `x1` only. No pole check: the
    /// formulas stay valid on the reflected chart `x1 < 0`, `x1 > π` used by
    /// ghost rows.
    pub(crate) fn metric_formula(&self, x1: f64) -> Matrix2<f64> {
        match &self.kind {
            SurfaceKind::FlatTorus { .. } => Matrix2::identity(),
            SurfaceKind::RoundSphere { kappa } => {
                let s = x1.sin();
                Matrix2::new(1.0, 0.0, 0.0, s * s) / *kappa
            }
            SurfaceKind::WarpedSphere { warp } => {
                let w = warp.w(x1);
                Matrix2::new(1.0, 0.0, 0.0, w * w)
            }
        }
    }

    pub(crate) fn christoffel_formula(&self, x1: f64) -> Christoffel {
        let mut gamma = [[[0.0; 2]; 2]; 2];
        let (w, dw) = match &self.kind {
            SurfaceKind::FlatTorus { .. } => return gamma,
            SurfaceKind::RoundSphere { .. } => (x1.sin(), x1.cos()),
            SurfaceKind::WarpedSphere { warp } => (warp.w(x1), warp.dw(x1)),
        };
        gamma[0][1][1] = -w * dw;
        gamma[1][0][1] = dw / w;
        gamma[1][1][0] = dw / w;
        gamma
    }

    pub(crate) fn curvature_formula(&self, x1: f64) -> f64 {
        match &self.kind {
            SurfaceKind::FlatTorus { .. } => 0.0,
            SurfaceKind::RoundSphere { kappa } => *kappa,
            SurfaceKind::WarpedSphere { warp } => warp.curvature(x1),
        }
    }

    /// `(min σ, sup σ)` over the surface.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match &self.kind {
            SurfaceKind::FlatTorus { .. } => (0.0, 0.0),
            SurfaceKind::RoundSphere { kappa } => (*kappa, *kappa),
            SurfaceKind::WarpedSphere { warp } => {
                let n = CURVATURE_SAMPLES;
                (0..n)
                    .map(|k| warp.curvature((k as f64 + 0.5) * PI / n as f64))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                        (lo.min(k), hi.max(k))
                    })
            }
        }
    }

    /// Reduce chart coordinates into the fundamental domain.
    pub fn reduce(&self, p: ChartCoords) -> ChartCoords {
        match &self.kind {
            SurfaceKind::FlatTorus { lattice } => {
                let inv = lattice.try_inverse().expect("validated lattice");
                let s = inv * Vector2::new(p.x1, p.x2);
                let x = lattice * s.map(|c| c - c.floor());
                ChartCoords::new(x.x, x.y)
            }
            _ => ChartCoords::new(p.x1, p.x2.rem_euclid(2.0 * PI)),
        }
    }

    /// Total area of the surface.
    pub fn total_area(&self) -> f64 {
        match &self.kind {
            SurfaceKind::FlatTorus { lattice } => lattice.determinant().abs(),
            SurfaceKind::RoundSphere { kappa } => 4.0 * PI / kappa,
            SurfaceKind::WarpedSphere { warp } => {
                // ∫ w = 2 + (4/3) a
                2.0 * PI * (2.0 + 4.0 * warp.a / 3.0)
            }
        }
    }
}

/// Project `v` onto the tangent plane of the embedded target at `q`.
///
/// Sphere targets remove the radial component; torus targets live in their
/// chart plane, so only the third coordinate is dropped.
pub fn tangent_project(surface: &SurfaceModel, q: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    if surface.is_spherical() {
        let n = q.normalize();
        v - n * n.dot(v)
    } else {
        Vector3::new(v.x, v.y, 0.0)
    }
}

/// First and second partial derivatives of a metric `E du² + 2F du dv + G dv²`,
/// as needed by the Brioschi formula.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricJet {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub f_u: f64,
    pub f_v: f64,
    pub g_u: f64,
    pub g_v: f64,
    pub e_vv: f64,
    pub f_uv: f64,
    pub g_uu: f64,
}

/// Gauss curvature from the Brioschi formula.
pub fn brioschi(m: &MetricJet) -> f64 {
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let first = det3([
        [
            -0.5 * m.e_vv + m.f_uv - 0.5 * m.g_uu,
            0.5 * m.e_u,
            m.f_u - 0.5 * m.e_v,
        ],
        [m.f_v - 0.5 * m.g_u, m.e, m.f],
        [0.5 * m.g_v, m.f, m.g],
    ]);
    let second = det3([
        [0.0, 0.5 * m.e_v, 0.5 * m.g_u],
        [0.5 * m.e_v, m.e, m.f],
        [0.5 * m.g_u, m.f, m.g],
    ]);
    let d = m.e * m.g - m.f * m.f;
    (first - second) / (d * d)
}

/// Second-order central-difference metric jet of a metric field given as a
/// closure in chart coordinates.
pub fn metric_jet_fd<F>(metric: F, u: f64, v: f64, h: f64) -> MetricJet
where
    F: Fn(f64, f64) -> Matrix2<f64>,
{
    let c = metric(u, v);
    let up = metric(u + h, v);
    let um = metric(u - h, v);
    let vp = metric(u, v + h);
    let vm = metric(u, v - h);
    let pp = metric(u + h, v + h);
    let pm = metric(u + h, v - h);
    let mp = metric(u - h, v + h);
    let mm = metric(u - h, v - h);
    let d1 = |a: Matrix2<f64>, b: Matrix2<f64>, r, s| (a[(r, s)] - b[(r, s)]) / (2.0 * h);
    MetricJet {
        e: c[(0, 0)],
        f: c[(0, 1)],
        g: c[(1, 1)],
        e_u: d1(up, um, 0, 0),
        e_v: d1(vp, vm, 0, 0),
        f_u: d1(up, um, 0, 1),
        f_v: d1(vp, vm, 0, 1),
        g_u: d1(up, um, 1, 1),
        g_v: d1(vp, vm, 1, 1),
        e_vv: (vp[(0, 0)] - 2.0 * c[(0, 0)] + vm[(0, 0)]) / (h * h),
        f_uv: (pp[(0, 1)] - pm[(0, 1)] - mp[(0, 1)] + mm[(0, 1)]) / (4.0 * h * h),
        g_uu: (up[(1, 1)] - 2.0 * c[(1, 1)] + um[(1, 1)]) / (h * h),
    }
}
