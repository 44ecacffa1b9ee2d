use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// Relative tolerance below which two singular values count as tied, or a
/// singular value as zero.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularData {
    pub lambda: f64,
    pub mu: f64,
    /// g_M-orthonormal, positively oriented.
    pub alpha1: Vector2<f64>,
    pub alpha2: Vector2<f64>,
    /// g_N-orthonormal.
    pub beta1: Vector2<f64>,
    pub beta2: Vector2<f64>,
    pub orientation_sign: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianQuantities {
    pub u1: f64,
    pub u2: f64,
    pub phi: f64,
    pub theta: f64,
    pub rho: f64,
    pub jac: f64,
}

/// Classification of a point by its Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaBehaviour {
    Decreasing,
    Preserving,
    Increasing,
}

impl JacobianQuantities {
    pub fn from_singular_values(lambda: f64, mu: f64, sign: f64) -> Self {
        let u1 = 1.0 / ((1.0 + lambda * lambda) * (1.0 + mu * mu)).sqrt();
        let u2 = sign * lambda * mu * u1;
        let phi = u1 - u2;
        let theta = u1 + u2;
        Self {
            u1,
            u2,
            phi,
            theta,
            rho: phi * theta,
            jac: u2 / u1,
        }
    }

    /// `u1 - |u2|`, nonnegative exactly when the point is area decreasing.
    pub fn gap(&self) -> f64 {
        self.u1 - self.u2.abs()
    }

    pub fn behaviour(&self, tol: f64) -> AreaBehaviour {
        let j = self.jac.abs();
        if j < 1.0 - tol {
            AreaBehaviour::Decreasing
        } else if j > 1.0 + tol {
            AreaBehaviour::Increasing
        } else {
            AreaBehaviour::Preserving
        }
    }
}

pub fn jacobian_quantities(sd: &SingularData) -> JacobianQuantities {
    JacobianQuantities::from_singular_values(sd.lambda, sd.mu, sd.orientation_sign)
}

/// Lower Cholesky factor of a 2×2 SPD matrix.
fn cholesky(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = m[(0, 0)].sqrt();
    let l21 = m[(1, 0)] / l11;
    let l22 = (m[(1, 1)] - l21 * l21).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

fn lower_inverse(l: &Matrix2<f64>) -> Matrix2<f64> {
    let (a, b, c) = (l[(0, 0)], l[(1, 0)], l[(1, 1)]);
    Matrix2::new(1.0 / a, 0.0, -b / (a * c), 1.0 / c)
}

/// Orthonormal pair for the metric with Cholesky factor `l`, starting from a
/// given unit vector `a` and completed with positive orientation.
fn complete(l: &Matrix2<f64>, linv_t: &Matrix2<f64>, a: Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let w = l.transpose() * a;
    let w = w / w.norm();
    let w2 = Vector2::new(-w.y, w.x);
    (linv_t * w, linv_t * w2)
}

/// Singular decomposition of `df` with respect to the metrics `gm` (domain)
/// and `gn` (target).
pub fn singular_decomposition(df: &Matrix2<f64>, gm: &Matrix2<f64>, gn: &Matrix2<f64>) -> SingularData {
    let l = cholesky(gm);
    let linv = lower_inverse(&l);
    let linv_t = linv.transpose();
    let p = df.transpose() * gn * df;
    let c = linv * p * linv_t;
    let (c11, c12, c22) = (c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]);
    let mean = 0.5 * (c11 + c22);
    let disc = (0.25 * (c11 - c22).powi(2) + c12 * c12).sqrt();
    let lo = (mean - disc).max(0.0);
    let hi = (mean + disc).max(0.0);
    let scale = 1.0 + hi;

    let (alpha1, alpha2) = if disc <= TIE_TOL * scale {
        complete(&l, &linv_t, Vector2::new(1.0 / gm[(0, 0)].sqrt(), 0.0))
    } else {
        let a = Vector2::new(c12, lo - c11);
        let b = Vector2::new(lo - c22, c12);
        let mut w = if a.norm_squared() >= b.norm_squared() { a } else { b };
        w /= w.norm();
        if w.x < 0.0 || (w.x == 0.0 && w.y < 0.0) {
            w = -w;
        }
        complete(&l, &linv_t, linv_t * w)
    };

    let lambda = lo.sqrt();
    let mu = hi.sqrt();
    let ln = cholesky(gn);
    let ln_inv_t = lower_inverse(&ln).transpose();
    let zero = |s: f64| s <= TIE_TOL * (1.0 + mu);
    let (beta1, beta2) = if zero(mu) {
        complete(&ln, &ln_inv_t, Vector2::new(1.0 / gn[(0, 0)].sqrt(), 0.0))
    } else if zero(lambda) {
        let b2 = df * alpha2 / mu;
        // b1 is the complement for which (b1, b2) is positively oriented
        let (c1, c2) = complete(&ln, &ln_inv_t, b2);
        debug_assert!((c1 - b2).norm() < 1e-6);
        (-c2, b2)
    } else {
        (df * alpha1 / lambda, df * alpha2 / mu)
    };
    let det = df.determinant();
    SingularData {
        lambda,
        mu,
        alpha1,
        alpha2,
        beta1,
        beta2,
        orientation_sign: if det >= 0.0 || zero(mu) { 1.0 } else { -1.0 },
        degenerate: zero(lambda) || (mu - lambda) <= TIE_TOL.sqrt() * (1.0 + mu),
    }
}
