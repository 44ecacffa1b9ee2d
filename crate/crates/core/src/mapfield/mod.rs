//! Discretized maps between surfaces and their first-order invariants.

mod family;
mod grid;
mod jet;
mod singular;

use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;

pub use family::{sphere_point, FourierMode, MapFamily, Profile};
pub use grid::{DomainGeometry, DomainRow, GridLayout, GridSpec};
pub use jet::{induced_metric, normal_inner, point_jet, tension, PointJet, StencilOrder};
pub use singular::{
    jacobian_quantities, singular_decomposition, AreaBehaviour, JacobianQuantities, SingularData, TIE_TOL,
};


use crate::error::{Error, Result};
use crate::surface::{SurfaceKind, SurfaceModel};
use crate::target::{TargetPoint, TargetSpace};

/// A map `f: M -> N` sampled on a structured grid at flow time `t`.
#[derive(Debug, Clone)]
pub struct MapState {
    pub domain: SurfaceModel,
    pub target: SurfaceModel,
    pub grid: GridSpec,
    pub space: TargetSpace,
    pub geometry: Arc<DomainGeometry>,
    pub values: Vec<TargetPoint>,
    pub t: f64,
    pub stencil: StencilOrder,
}

impl MapState {
    /// Sample `f(u, v)` at every grid point; `(u, v)` are lattice coordinates
    /// on tori and colatitude/longitude on spheres.
    pub fn from_fn<F>(domain: SurfaceModel, target: SurfaceModel, grid: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> TargetPoint,
    {
        let space = TargetSpace::from_surface(&target)?;
        let domain = if domain.is_spherical() {
            domain.with_pole_guard(0.5 * grid.h1)
        } else {
            domain
        };
        let geometry = Arc::new(DomainGeometry::new(&domain, &grid));
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let (u, v) = grid.coords(i as isize, j as isize);
                let q = f(u, v);
                if !q.iter().all(|c| c.is_finite()) {
                    return Err(Error::NonFiniteValue { i, j });
                }
                values.push(space.normalize(&q));
            }
        }
        Ok(Self {
            domain,
            target,
            grid,
            space,
            geometry,
            values,
            t: 0.0,
            stencil: StencilOrder::Second,
        })
    }

    pub fn from_family(domain: SurfaceModel, target: SurfaceModel, grid: GridSpec, family: &MapFamily) -> Result<Self> {
        family.validate(&domain, &target)?;
        let space = TargetSpace::from_surface(&target)?;
        let d = domain.clone();
        Self::from_fn(domain, target, grid, |u, v| family.eval(&d, &space, u, v))
    }

    pub fn with_stencil(mut self, stencil: StencilOrder) -> Self {
        self.stencil = stencil;
        self
    }

    /// New state sharing this state's grid and geometry.
    pub fn with_values(&self, values: Vec<TargetPoint>, t: f64) -> Self {
        debug_assert_eq!(values.len(), self.grid.len());
        Self {
            values,
            t,
            ..self.clone_shallow()
        }
    }

    fn clone_shallow(&self) -> Self {
        Self {
            domain: self.domain.clone(),
            target: self.target.clone(),
            grid: self.grid,
            space: self.space.clone(),
            geometry: Arc::clone(&self.geometry),
            values: Vec::new(),
            t: self.t,
            stencil: self.stencil,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> &TargetPoint {
        &self.values[self.grid.index(i, j)]
    }

    /// Value at an extended index, following the periodic and pole rules.
    #[inline]
    pub fn value_ext(&self, i: isize, j: isize) -> &TargetPoint {
        let (a, b) = self.grid.source(i, j);
        &self.values[a * self.grid.n2 + b]
    }

    pub fn domain_row(&self, i: isize) -> &DomainRow {
        self.geometry.row(i)
    }

    /// Gauss curvature of the target.
    pub fn target_curvature(&self) -> f64 {
        match self.target.kind {
            SurfaceKind::RoundSphere { kappa } => kappa,
            _ => 0.0,
        }
    }

    pub fn max_distance(&self, other: &MapState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| self.space.distance(a, b))
            .fold(0.0, f64::max)
    }

    /// Largest pairwise intrinsic distance between grid values.
    pub fn image_diameter(&self) -> f64 {
        let vals = &self.values;
        (0..vals.len())
            .into_par_iter()
            .map(|a| {
                let mut m: f64 = 0.0;
                for b in a + 1..vals.len() {
                    m = m.max(self.space.distance(&vals[a], &vals[b]));
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Index pairs of all stored grid points in storage order.
    pub fn indices(&self) -> impl IndexedParallelIterator<Item = (usize, usize)> {
        let n2 = self.grid.n2;
        (0..self.grid.len()).into_par_iter().map(move |k| (k / n2, k % n2))
    }
}

/// First derivative of the map in chart bases, with the target frame used.
#[derive(Debug, Clone, Copy)]
pub struct Differential {
    pub df: Matrix2<f64>,
    pub point: TargetPoint,
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
}

pub fn differential_at(state: &MapState, i: usize, j: usize) -> Result<Differential> {
    let jet = point_jet(state, i as isize, j as isize)?;
    Ok(Differential {
        df: jet.df,
        point: jet.point,
        t1: jet.t1,
        t2: jet.t2,
    })
}

/// Singular data at a grid point, with an orthonormal target frame.
pub fn singular_at(state: &MapState, i: usize, j: usize) -> Result<SingularData> {
    let d = differential_at(state, i, j)?;
    let gm = state.domain_row(i as isize).metric;
    Ok(singular_decomposition(&d.df, &gm, &Matrix2::identity()))
}

/// Graph area `∫ sqrt((1+λ²)(1+μ²)) Ω_M`.
pub fn area_functional(state: &MapState) -> Result<f64> {
    let cell = state.grid.h1 * state.grid.h2;
    let parts: Vec<f64> = state
        .indices()
        .map(|(i, j)| {
            let d = differential_at(state, i, j)?;
            let gm = state.domain_row(i as isize).metric;
            Ok(induced_metric(&gm, &d.df).determinant().sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() * cell)
}

#[derive(Debug, Clone)]
pub struct FieldQuantities {
    pub points: Vec<JacobianQuantities>,
    pub min_rho: f64,
    /// `min (u1 - |u2|)`
    pub min_gap: f64,
    pub min_u1: f64,
}

/// Jacobian quantities at every grid point plus their minima. Fails with
/// `GraphicalityLoss` when `min u1 <= u1_floor`.
pub fn field_quantities(state: &MapState, u1_floor: f64) -> Result<FieldQuantities> {
    let points: Vec<JacobianQuantities> = state
        .indices()
        .map(|(i, j)| singular_at(state, i, j).map(|sd| jacobian_quantities(&sd)))
        .collect::<Result<_>>()?;
    let mut out = FieldQuantities {
        min_rho: f64::INFINITY,
        min_gap: f64::INFINITY,
        min_u1: f64::INFINITY,
        points,
    };
    for q in &out.points {
        out.min_rho = out.min_rho.min(q.rho);
        out.min_gap = out.min_gap.min(q.gap());
        out.min_u1 = out.min_u1.min(q.u1);
    }
    if out.min_u1 <= u1_floor {
        return Err(Error::GraphicalityLoss {
            min_u1: out.min_u1,
            floor: u1_floor,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn torus_state(family: MapFamily, n: usize) -> MapState {
        let t = SurfaceModel::unit_square_torus();
        let g = GridSpec::for_domain(&t, n, n).unwrap();
        MapState::from_family(t.clone(), t, g, &family).unwrap()
    }

    #[test]
    fn identity_and_constant_differentials() {
        let s = torus_state(MapFamily::Identity, 16);
        for (i, j) in [(0, 0), (3, 15), (15, 7)] {
            assert_abs_diff_eq!(differential_at(&s, i, j).unwrap().df, Matrix2::identity(), epsilon = 1e-12);
        }
        let s = torus_state(MapFamily::Constant { point: [0.3, 0.4] }, 16);
        assert_abs_diff_eq!(differential_at(&s, 5, 5).unwrap().df, Matrix2::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn linear_map_is_exact() {
        let s = torus_state(
            MapFamily::Linear {
                matrix: [[1.0, 1.0], [0.0, 1.0]],
            },
            16,
        );
        let a = Matrix2::new(1.0, 1.0, 0.0, 1.0);
        for i in 0..16 {
            for j in 0..16 {
                assert_abs_diff_eq!(differential_at(&s, i, j).unwrap().df, a, epsilon = 1e-11);
            }
        }
        let s = s.with_stencil(StencilOrder::Fourth);
        assert_abs_diff_eq!(differential_at(&s, 0, 0).unwrap().df, a, epsilon = 1e-11);
    }

    #[test]
    fn under_resolved_map_reports_lift_ambiguity() {
        let s = torus_state(
            MapFamily::PerturbedLinear {
                matrix: [[1.0, 0.0], [0.0, 1.0]],
                amplitude: 0.3,
                modes: vec![FourierMode {
                    k: [4, 0],
                    direction: [1.0, 0.0],
                    weight: 1.0,
                    phase: 0.5 * PI,
                }],
            },
            8,
        );
        assert!(matches!(field_quantities(&s, 0.01), Err(Error::LiftAmbiguity { .. })));
    }

    #[test]
    fn area_examples() {
        let s = torus_state(MapFamily::Constant { point: [0.1, 0.1] }, 16);
        assert_abs_diff_eq!(area_functional(&s).unwrap(), 1.0, epsilon = 1e-12);
        let s = torus_state(MapFamily::Identity, 16);
        assert_abs_diff_eq!(area_functional(&s).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn field_minima() {
        let s = torus_state(MapFamily::Identity, 16);
        let fq = field_quantities(&s, 0.01).unwrap();
        assert_abs_diff_eq!(fq.min_rho, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fq.min_gap, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fq.min_u1, 0.5, epsilon = 1e-12);

        let s = torus_state(MapFamily::Constant { point: [0.5, 0.5] }, 16);
        let fq = field_quantities(&s, 0.01).unwrap();
        assert_eq!(fq.min_rho, 1.0);
        assert_eq!(fq.min_u1, 1.0);

        let t = SurfaceModel::unit_square_torus();
        let small = SurfaceModel::flat_torus(Matrix2::identity() * 0.5).unwrap();
        let g = GridSpec::for_domain(&t, 16, 16).unwrap();
        let s = MapState::from_family(
            t,
            small,
            g,
            &MapFamily::Linear {
                matrix: [[0.5, 0.0], [0.0, 0.5]],
            },
        )
        .unwrap();
        let fq = field_quantities(&s, 0.01).unwrap();
        for q in &fq.points {
            assert_abs_diff_eq!(q.u1, 0.8, epsilon = 1e-12);
            assert_abs_diff_eq!(q.u2, 0.2, epsilon = 1e-12);
            assert_abs_diff_eq!(q.rho, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_identity_is_isometric() {
        let s = SurfaceModel::round_sphere(1.0).unwrap();
        let g = GridSpec::for_domain(&s, 32, 64).unwrap();
        let st = MapState::from_family(s.clone(), s, g, &MapFamily::Identity).unwrap();
        for i in [0usize, 5, 16, 31] {
            let sd = singular_at(&st, i, 3).unwrap();
            let x1 = (i as f64 + 0.5) * PI / 32.0;
            // second-order truncation in both directions
            assert!((sd.lambda - 1.0).abs() < 5e-3, "row {i} x1 {x1} {}", sd.lambda);
            assert!((sd.mu - 1.0).abs() < 5e-3);
        }
    }
}
