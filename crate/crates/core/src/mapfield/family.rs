//! Built-in initial-map families.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{ChartCoords, SurfaceKind, SurfaceModel};
use crate::target::{TargetPoint, TargetSpace};

/// Colatitude profile of a rotationally symmetric sphere map
/// `(x1, x2) -> (h(x1), x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `h = x1 + a sin(x1)`, degree 1.
    Shift,
    /// `h = x1 + a sin(2 x1)`, degree 1.
    Shift2,
    /// `h = a sin(x1)`, degree 0; folds the sphere onto a cap.
    Fold,
}

impl Profile {
    pub fn eval(self, a: f64, x1: f64) -> f64 {
        match self {
            Profile::Shift => x1 + a * x1.sin(),
            Profile::Shift2 => x1 + a * (2.0 * x1).sin(),
            Profile::Fold => a * x1.sin(),
        }
    }

    pub fn derivative(self, a: f64, x1: f64) -> f64 {
        match self {
            Profile::Shift => 1.0 + a * x1.cos(),
            Profile::Shift2 => 1.0 + 2.0 * a * (2.0 * x1).cos(),
            Profile::Fold => a * x1.cos(),
        }
    }

    /// Value at the south pole, `h(π)`.
    pub fn end_value(self) -> f64 {
        match self {
            Profile::Fold => 0.0,
            _ => PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    /// Wavenumber in lattice coordinates of the domain.
    pub k: [i32; 2],
    /// Displacement direction in target chart coordinates.
    pub direction: [f64; 2],
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

fn identity_matrix() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapFamily {
    /// Constant map onto a target chart point (colatitude/longitude on spheres).
    Constant { point: [f64; 2] },
    Identity,
    /// `f(x) = A x` between flat tori; rows of `matrix` are rows of `A`.
    Linear { matrix: [[f64; 2]; 2] },
    /// `f(x) = A x + amplitude Σ weight·direction·sin(2π k·s + phase)`.
    PerturbedLinear {
        #[serde(default = "identity_matrix")]
        matrix: [[f64; 2]; 2],
        amplitude: f64,
        modes: Vec<FourierMode>,
    },
    RotSym { profile: Profile, a: f64 },
    /// `z -> c z` in stereographic coordinates.
    Mobius { c: f64 },
}

impl MapFamily {
    /// Replace the family's amplitude parameter (sweep support).
    pub fn with_amplitude(&self, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            MapFamily::PerturbedLinear { amplitude, .. } => *amplitude = value,
            MapFamily::RotSym { a, .. } => *a = value,
            MapFamily::Mobius { c } => *c = value,
            _ => {
                return Err(Error::ConfigRejected(
                    "map family has no amplitude parameter".into(),
                ))
            }
        }
        Ok(out)
    }

    fn matrix(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
        Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    /// Check that the family is defined between the given surfaces.
    pub fn validate(&self, domain: &SurfaceModel, target: &SurfaceModel) -> Result<()> {
        let reject = |msg: &str| Err(Error::ConfigRejected(msg.to_string()));
        match self {
            MapFamily::Constant { .. } => Ok(()),
            MapFamily::Identity => match (&domain.kind, &target.kind) {
                (SurfaceKind::FlatTorus { lattice: a }, SurfaceKind::FlatTorus { lattice: b }) => {
                    if (a - b).abs().max() > 1e-12 {
                        reject("identity map needs equal torus lattices")
                    } else {
                        Ok(())
                    }
                }
                (SurfaceKind::FlatTorus { .. }, _) | (_, SurfaceKind::FlatTorus { .. }) => {
                    reject("identity map needs domain and target of the same topology")
                }
                _ => Ok(()),
            },
            MapFamily::Linear { matrix } | MapFamily::PerturbedLinear { matrix, .. } => {
                match (&domain.kind, &target.kind) {
                    (SurfaceKind::FlatTorus { lattice: lm }, SurfaceKind::FlatTorus { lattice: ln }) => {
                        let k = ln.try_inverse().unwrap() * Self::matrix(matrix) * lm;
                        if k.iter().any(|c| (c - c.round()).abs() > 1e-9) {
                            reject("linear map does not carry the domain lattice into the target lattice")
                        } else {
                            Ok(())
                        }
                    }
                    _ => reject("linear map families need torus domain and target"),
                }
            }
            MapFamily::RotSym { profile, a } => {
                if !domain.is_spherical() || !target.is_spherical() {
                    return reject("rotationally symmetric maps need sphere domain and target");
                }
                let ok = match profile {
                    Profile::Shift => a.abs() < 1.0,
                    Profile::Shift2 => a.abs() < 0.5,
                    Profile::Fold => a.is_finite(),
                };
                if ok {
                    Ok(())
                } else {
                    reject("rotationally symmetric profile parameter out of range")
                }
            }
            MapFamily::Mobius { c } => {
                if !domain.is_spherical() || !target.is_spherical() {
                    reject("Möbius contraction needs sphere domain and target")
                } else if !(*c > 0.0) {
                    reject("Möbius factor must be positive")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Evaluate the map at grid coordinates `(u, v)`: lattice coordinates on
    /// tori, colatitude/longitude on spheres.
    pub fn eval(&self, domain: &SurfaceModel, space: &TargetSpace, u: f64, v: f64) -> TargetPoint {
        let chart = |x1: f64, x2: f64| space.from_chart(ChartCoords::new(x1, x2));
        match self {
            MapFamily::Constant { point } => chart(point[0], point[1]),
            MapFamily::Identity => match &domain.kind {
                SurfaceKind::FlatTorus { lattice } => {
                    let x = lattice * Vector2::new(u, v);
                    chart(x.x, x.y)
                }
                _ => chart(u, v),
            },
            MapFamily::Linear { matrix } => {
                let x = torus_chart(domain, u, v);
                let y = Self::matrix(matrix) * x;
                chart(y.x, y.y)
            }
            MapFamily::PerturbedLinear {
                matrix,
                amplitude,
                modes,
            } => {
                let x = torus_chart(domain, u, v);
                let mut y = Self::matrix(matrix) * x;
                for m in modes {
                    let arg = 2.0 * PI * (m.k[0] as f64 * u + m.k[1] as f64 * v) + m.phase;
                    y += Vector2::new(m.direction[0], m.direction[1]) * (amplitude * m.weight * arg.sin());
                }
                chart(y.x, y.y)
            }
            MapFamily::RotSym { profile, a } => chart(profile.eval(*a, u), v),
            MapFamily::Mobius { c } => {
                let half = 0.5 * u;
                chart(2.0 * (c * half.sin()).atan2(half.cos()), v)
            }
        }
    }
}

fn torus_chart(domain: &SurfaceModel, u: f64, v: f64) -> Vector2<f64> {
    match &domain.kind {
        SurfaceKind::FlatTorus { lattice } => lattice * Vector2::new(u, v),
        _ => Vector2::new(u, v),
    }
}

/// Embedded point for sphere targets given colatitude and longitude.
pub fn sphere_point(radius: f64, colatitude: f64, longitude: f64) -> Vector3<f64> {
    let (s, c) = colatitude.sin_cos();
    Vector3::new(s * longitude.cos(), s * longitude.sin(), c) * radius
}
