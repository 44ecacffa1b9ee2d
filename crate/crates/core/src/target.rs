//! Singularity-free representation of target points.
//!
//! Sphere targets are stored as points of the round sphere of radius
//! `1/sqrt(kappa)` in Euclidean 3-space. Torus targets are stored as chart
//! coordinates reduced modulo the lattice, in the first two components.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::surface::{ChartCoords, SurfaceKind, SurfaceModel};

/// Embedded target point. Torus targets leave the third coordinate at zero.
pub type TargetPoint = Vector3<f64>;

#[derive(Debug, Clone)]
pub enum TargetSpace {
    Torus {
        lattice: Matrix2<f64>,
        inverse: Matrix2<f64>,
        /// Largest distance between two points of the torus.
        diameter: f64,
        /// Half the shortest lattice vector; shorter lifts are unique.
        packing: f64,
    },
    Sphere {
        radius: f64,
    },
}

impl TargetSpace {
    pub fn from_surface(surface: &SurfaceModel) -> Result<Self> {
        match &surface.kind {
            SurfaceKind::FlatTorus { lattice } => {
                let inverse = lattice.try_inverse().ok_or_else(|| {
                    Error::ConfigRejected("singular target lattice".into())
                })?;
                Ok(TargetSpace::Torus {
                    lattice: *lattice,
                    inverse,
                    diameter: covering_radius(lattice),
                    packing: 0.5 * shortest_vector(lattice),
                })
            }
            SurfaceKind::RoundSphere { kappa } => Ok(TargetSpace::Sphere {
                radius: 1.0 / kappa.sqrt(),
            }),
            SurfaceKind::WarpedSphere { .. } => Err(Error::ConfigRejected(
                "warped spheres are supported as domains only, not as map targets".into(),
            )),
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, TargetSpace::Sphere { .. })
    }

    /// Target point for chart coordinates (colatitude/longitude on spheres).
    pub fn from_chart(&self, c: ChartCoords) -> TargetPoint {
        match self {
            TargetSpace::Torus { .. } => self.normalize(&Vector3::new(c.x1, c.x2, 0.0)),
            TargetSpace::Sphere { radius } => {
                let (s, co) = c.x1.sin_cos();
                Vector3::new(s * c.x2.cos(), s * c.x2.sin(), co) * *radius
            }
        }
    }

    /// Colatitude/longitude of a sphere point, or chart coordinates of a torus point.
    pub fn to_chart(&self, q: &TargetPoint) -> ChartCoords {
        match self {
            TargetSpace::Torus { .. } => ChartCoords::new(q.x, q.y),
            TargetSpace::Sphere { radius } => {
                let z = (q.z / radius).clamp(-1.0, 1.0);
                ChartCoords::new(z.acos(), q.y.atan2(q.x).rem_euclid(2.0 * PI))
            }
        }
    }

    /// Re-impose the representation constraint: `|q| = radius` or reduction
    /// modulo the lattice.
    pub fn normalize(&self, q: &TargetPoint) -> TargetPoint {
        match self {
            TargetSpace::Torus {
                lattice, inverse, ..
            } => {
                let s = inverse * Vector2::new(q.x, q.y);
                let x = lattice * s.map(|c| c - c.floor());
                Vector3::new(x.x, x.y, 0.0)
            }
            TargetSpace::Sphere { radius } => q * (*radius / q.norm()),
        }
    }

    /// Oriented orthonormal tangent frame at `q`. On spheres `t1 × t2` is the
    /// outward normal.
    pub fn tangent_frame(&self, q: &TargetPoint) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            TargetSpace::Torus { .. } => (Vector3::x(), Vector3::y()),
            TargetSpace::Sphere { .. } => {
                let n = q.normalize();
                let axis = if n.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
                let t1 = (axis - n * n.dot(&axis)).normalize();
                let t2 = n.cross(&t1);
                (t1, t2)
            }
        }
    }

    /// Displacement from `center` to `p`. Torus targets use the nearest lift
    /// of `p` relative to `center`.
    pub fn displacement(&self, center: &TargetPoint, p: &TargetPoint) -> Vector3<f64> {
        match self {
            TargetSpace::Torus {
                lattice,
                inverse,
                packing,
                ..
            } => {
                let d = Vector2::new(p.x - center.x, p.y - center.y);
                let d = nearest_lift(lattice, inverse, *packing, d);
                Vector3::new(d.x, d.y, 0.0)
            }
            TargetSpace::Sphere { .. } => p - center,
        }
    }

    /// Largest displacement accepted by a nearest-lift difference.
    pub fn lift_limit(&self) -> f64 {
        match self {
            TargetSpace::Torus { diameter, .. } => 0.5 * diameter,
            TargetSpace::Sphere { .. } => f64::INFINITY,
        }
    }

    /// Move `q` by the ambient vector `v` and return to the constraint set.
    pub fn retract(&self, q: &TargetPoint, v: &Vector3<f64>) -> TargetPoint {
        self.normalize(&(q + v))
    }

    /// Intrinsic distance: great-circle distance on spheres, nearest-lift
    /// Euclidean distance on tori.
    pub fn distance(&self, a: &TargetPoint, b: &TargetPoint) -> f64 {
        match self {
            TargetSpace::Torus { .. } => self.displacement(a, b).norm(),
            TargetSpace::Sphere { radius } => {
                let chord = (a - b).norm();
                2.0 * radius * (0.5 * chord / radius).min(1.0).asin()
            }
        }
    }

    /// Oriented area form `Ω_N(x, y)` for tangent vectors at `q`.
    pub fn area_form(&self, q: &TargetPoint, x: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
        match self {
            TargetSpace::Torus { .. } => x.x * y.y - x.y * y.x,
            TargetSpace::Sphere { .. } => q.normalize().dot(&x.cross(y)),
        }
    }
}

fn nearest_lift(lattice: &Matrix2<f64>, inverse: &Matrix2<f64>, packing: f64, d: Vector2<f64>) -> Vector2<f64> {
    let s = inverse * d;
    let base = Vector2::new(s.x.round(), s.y.round());
    let mut best = d - lattice * base;
    let mut best_norm = best.norm_squared();
    if best_norm < packing * packing {
        return best;
    }
    // rounding is only nearest for orthogonal lattices; scan the neighbours
    for a in -1..=1 {
        for b in -1..=1 {
            if a == 0 && b == 0 {
                continue;
            }
            let cand = d - lattice * (base + Vector2::new(a as f64, b as f64));
            let n = cand.norm_squared();
            if n < best_norm {
                best = cand;
                best_norm = n;
            }
        }
    }
    best
}

fn reduced_basis(lattice: &Matrix2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let mut b1 = lattice.column(0).into_owned();
    let mut b2 = lattice.column(1).into_owned();
    loop {
        if b2.norm_squared() < b1.norm_squared() {
            std::mem::swap(&mut b1, &mut b2);
        }
        let m = (b1.dot(&b2) / b1.norm_squared()).round();
        if m == 0.0 {
            break;
        }
        b2 -= b1 * m;
    }
    (b1, b2)
}

fn shortest_vector(lattice: &Matrix2<f64>) -> f64 {
    reduced_basis(lattice).0.norm()
}

/// Covering radius of the lattice, which is the diameter of the flat torus:
/// the circumradius of the acute triangle spanned by a reduced basis.
fn covering_radius(lattice: &Matrix2<f64>) -> f64 {
    let (b1, mut b2) = reduced_basis(lattice);
    if b1.dot(&b2) < 0.0 {
        b2 = -b2;
    }
    let area = lattice.determinant().abs();
    b1.norm() * b2.norm() * (b1 - b2).norm() / (2.0 * area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sphere_frame_is_oriented_and_tangent() {
        let t = TargetSpace::Sphere { radius: 2.0 };
        for q in [
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::new(1.2, -0.4, 0.3).normalize() * 2.0,
        ] {
            let (t1, t2) = t.tangent_frame(&q);
            assert_abs_diff_eq!(t1.dot(&q), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t2.dot(&q), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t1.norm(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t1.dot(&t2), 0.0, epsilon = 1e-14);
            assert!((t1.cross(&t2) - q.normalize()).norm() < 1e-14);
        }
    }

    #[test]
    fn torus_nearest_lift_on_skew_lattice() {
        let lattice = Matrix2::new(1.0, 0.9, 0.0, 0.3);
        let surface = SurfaceModel::flat_torus(lattice).unwrap();
        let t = TargetSpace::from_surface(&surface).unwrap();
        let a = Vector3::new(0.05, 0.02, 0.0);
        let b = t.normalize(&Vector3::new(0.05 - 0.04, 0.02 + 0.01, 0.0));
        let d = t.displacement(&a, &b);
        assert_abs_diff_eq!(d.x, -0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(d.y, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn sphere_embedding_constraint_after_retraction() {
        let t = TargetSpace::Sphere { radius: 0.5 };
        let q = t.from_chart(ChartCoords::new(0.7, 1.1));
        let q2 = t.retract(&q, &Vector3::new(0.3, -0.1, 0.2));
        assert_abs_diff_eq!(q2.norm(), 0.5, epsilon = 1e-12);
        let c = t.to_chart(&q);
        assert_abs_diff_eq!(c.x1, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(c.x2, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn distances() {
        let t = TargetSpace::Sphere { radius: 1.0 };
        let a = Vector3::new(0.0, 0.0, 1.0);
        let b = Vector3::new(0.0, 0.0, -1.0);
        assert_abs_diff_eq!(t.distance(&a, &b), PI, epsilon = 1e-12);
        let t = TargetSpace::from_surface(&SurfaceModel::unit_square_torus()).unwrap();
        let a = Vector3::new(0.05, 0.5, 0.0);
        let b = Vector3::new(0.95, 0.5, 0.0);
        assert_abs_diff_eq!(t.distance(&a, &b), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn torus_diameter() {
        let sq = TargetSpace::from_surface(&SurfaceModel::unit_square_torus()).unwrap();
        assert_abs_diff_eq!(sq.lift_limit(), 0.5 * 0.5f64.sqrt(), epsilon = 1e-15);
        // hexagonal lattice: covering radius 1/sqrt(3)
        let hex = Matrix2::new(1.0, 0.5, 0.0, 0.75f64.sqrt());
        let t = TargetSpace::from_surface(&SurfaceModel::flat_torus(hex).unwrap()).unwrap();
        assert_abs_diff_eq!(t.lift_limit(), 0.5 / 3f64.sqrt(), epsilon = 1e-12);
        // same lattice, skewed basis
        let skew = Matrix2::new(1.0, 2.5, 0.0, 0.75f64.sqrt());
        let t = TargetSpace::from_surface(&SurfaceModel::flat_torus(skew).unwrap()).unwrap();
        assert_abs_diff_eq!(t.lift_limit(), 0.5 / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn warped_target_rejected() {
        let s = SurfaceModel::warped_sphere(0.1).unwrap();
        assert!(matches!(TargetSpace::from_surface(&s), Err(Error::ConfigRejected(_))));
    }
}
