//! Finite-difference jets of the map at a grid point.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::MapState;
use crate::error::{Error, Result};
use crate::target::TargetPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilOrder {
    #[default]
    Second,
    Fourth,
}

const D1_2: [f64; 3] = [-0.5, 0.0, 0.5];
const D2_2: [f64; 3] = [1.0, -2.0, 1.0];
const D1_4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2_4: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

impl StencilOrder {
    pub fn radius(self) -> isize {
        match self {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 2,
        }
    }

    fn weights(self) -> (&'static [f64], &'static [f64]) {
        match self {
            StencilOrder::Second => (&D1_2, &D2_2),
            StencilOrder::Fourth => (&D1_4, &D2_4),
        }
    }
}

/// First and covariant second derivatives of the map at one grid point,
/// expressed in an orthonormal target frame `(t1, t2)`.
#[derive(Debug, Clone, Copy)]
pub struct PointJet {
    pub point: TargetPoint,
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
    /// `df[(α, a)] = t_α · ∂_a f`
    pub df: Matrix2<f64>,
    /// Covariant Hessian `(∇df)(∂_a, ∂_b)` in frame components.
    pub hess: [[Vector2<f64>; 2]; 2],
}

impl PointJet {
    pub fn ambient(&self, v: &Vector2<f64>) -> Vector3<f64> {
        self.t1 * v.x + self.t2 * v.y
    }
}

/// Raw chart derivatives in the embedding: `(∂1 f, ∂2 f, ∂11 f, ∂12 f, ∂22 f)`.
fn ambient_derivatives(state: &MapState, i: isize, j: isize) -> Result<[Vector3<f64>; 5]> {
    let grid = &state.grid;
    let r = state.stencil.radius();
    let (w1, w2) = state.stencil.weights();
    let n2 = grid.n2 as isize;
    let q = state.value_ext(i, j);
    let limit = state.space.lift_limit();
    let width = (2 * r + 1) as usize;
    let mut block = [[Vector3::zeros(); 5]; 5];
    for a in -r..=r {
        let (row, shift) = grid.row_source(i + a);
        let base = row * grid.n2;
        for b in -r..=r {
            if a == 0 && b == 0 {
                continue;
            }
            let mut col = j + b + shift as isize;
            if col < 0 {
                col += n2;
            }
            while col >= n2 {
                col -= n2;
            }
            let d = state.space.displacement(q, &state.values[base + col as usize]);
            if d.norm_squared() > limit * limit {
                let (si, sj) = grid.source(i + a, j + b);
                return Err(Error::LiftAmbiguity {
                    i: si,
                    j: sj,
                    displacement: d.norm(),
                    limit,
                });
            }
            block[(a + r) as usize][(b + r) as usize] = d;
        }
    }
    let c = r as usize;
    let mut out = [Vector3::zeros(); 5];
    for k in 0..width {
        out[0] += block[k][c] * w1[k];
        out[1] += block[c][k] * w1[k];
        out[2] += block[k][c] * w2[k];
        out[4] += block[c][k] * w2[k];
        for l in 0..width {
            out[3] += block[k][l] * (w1[k] * w1[l]);
        }
    }
    let (h1, h2) = (grid.h1, grid.h2);
    out[0] /= h1;
    out[1] /= h2;
    out[2] /= h1 * h1;
    out[3] /= h1 * h2;
    out[4] /= h2 * h2;
    Ok(out)
}

/// Jet at an extended grid index (ghost rows allowed on sphere grids).
pub fn point_jet(state: &MapState, i: isize, j: isize) -> Result<PointJet> {
    let [f1, f2, f11, f12, f22] = ambient_derivatives(state, i, j)?;
    let point = *state.value_ext(i, j);
    let (t1, t2) = state.space.tangent_frame(&point);
    let df = Matrix2::new(t1.dot(&f1), t1.dot(&f2), t2.dot(&f1), t2.dot(&f2));
    let gamma = state.geometry.row(i).christoffel;
    let second = [[f11, f12], [f12, f22]];
    let mut hess = [[Vector2::zeros(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let s = &second[a][b];
            let mut h = Vector2::new(t1.dot(s), t2.dot(s));
            for k in 0..2 {
                h -= df.column(k) * gamma[k][a][b];
            }
            hess[a][b] = h;
        }
    }
    Ok(PointJet {
        point,
        t1,
        t2,
        df,
        hess,
    })
}

/// Induced metric `g = g_M + f*g_N` with an orthonormal target frame.
pub fn induced_metric(gm: &Matrix2<f64>, df: &Matrix2<f64>) -> Matrix2<f64> {
    gm + df.transpose() * df
}

/// Inner product of the normal projections of `(0 ⊕ a)` and `(0 ⊕ b)`.
#[inline]
pub fn normal_inner(a: &Vector2<f64>, b: &Vector2<f64>, df: &Matrix2<f64>, g_inv: &Matrix2<f64>) -> f64 {
    let pa = df.transpose() * a;
    let pb = df.transpose() * b;
    a.dot(b) - pa.dot(&(g_inv * pb))
}

/// Tension field `g^{ab} (∇df)_{ab}` and the induced metric inverse.
#[inline]
pub fn tension(jet: &PointJet, gm: &Matrix2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let g = induced_metric(gm, &jet.df);
    let g_inv = g.try_inverse().unwrap_or_else(Matrix2::zeros);
    let mut v = Vector2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            v += jet.hess[a][b] * g_inv[(a, b)];
        }
    }
    (v, g_inv)
}
