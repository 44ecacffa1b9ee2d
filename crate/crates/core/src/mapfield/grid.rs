use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{Christoffel, SurfaceKind, SurfaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridLayout {
    /// Periodic in both axes, grid coordinates are lattice coordinates in `[0, 1)²`.
    Periodic,
    /// Latitude-longitude grid offset by half a cell from the poles, periodic
    /// in longitude, with ghost rows across each pole.
    LatLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub layout: GridLayout,
    pub h1: f64,
    pub h2: f64,
}

impl GridSpec {
    pub const MIN_POINTS: usize = 8;

    pub fn for_domain(domain: &SurfaceModel, n1: usize, n2: usize) -> Result<Self> {
        if n1 < Self::MIN_POINTS || n2 < Self::MIN_POINTS {
            return Err(Error::ConfigRejected(format!(
                "grid {n1}x{n2} below the minimum of {} points per axis",
                Self::MIN_POINTS
            )));
        }
        if domain.is_spherical() {
            if n2 % 2 != 0 {
                return Err(Error::ConfigRejected(
                    "latitude-longitude grids need an even longitude count".into(),
                ));
            }
            Ok(Self {
                n1,
                n2,
                layout: GridLayout::LatLong,
                h1: PI / n1 as f64,
                h2: 2.0 * PI / n2 as f64,
            })
        } else {
            Ok(Self {
                n1,
                n2,
                layout: GridLayout::Periodic,
                h1: 1.0 / n1 as f64,
                h2: 1.0 / n2 as f64,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// Grid coordinates of an extended index (may lie on a ghost row).
    pub fn coords(&self, i: isize, j: isize) -> (f64, f64) {
        match self.layout {
            GridLayout::Periodic => (i as f64 * self.h1, j as f64 * self.h2),
            GridLayout::LatLong => ((i as f64 + 0.5) * self.h1, j as f64 * self.h2),
        }
    }

    /// Storage index holding the value of an extended index.
    ///
    /// Across a pole, `value(-x1, x2) = value(x1, x2 + π)`.
    pub fn source(&self, i: isize, j: isize) -> (usize, usize) {
        let (n1, n2) = (self.n1 as isize, self.n2 as isize);
        match self.layout {
            GridLayout::Periodic => (i.rem_euclid(n1) as usize, j.rem_euclid(n2) as usize),
            GridLayout::LatLong => {
                let (ii, shift) = if i < 0 {
                    (-1 - i, n2 / 2)
                } else if i >= n1 {
                    (2 * n1 - 1 - i, n2 / 2)
                } else {
                    (i, 0)
                };
                debug_assert!((0..n1).contains(&ii), "ghost depth exceeds grid");
                (ii as usize, (j + shift).rem_euclid(n2) as usize)
            }
        }
    }

    /// Stored row of an extended row index, and the longitude shift applied
    /// to column indices on that row.
    #[inline]
    pub fn row_source(&self, i: isize) -> (usize, usize) {
        let n1 = self.n1 as isize;
        match self.layout {
            GridLayout::Periodic => (i.rem_euclid(n1) as usize, 0),
            GridLayout::LatLong => {
                if i < 0 {
                    ((-1 - i) as usize, self.n2 / 2)
                } else if i >= n1 {
                    ((2 * n1 - 1 - i) as usize, self.n2 / 2)
                } else {
                    (i as usize, 0)
                }
            }
        }
    }

    /// Same grid layout with both resolutions multiplied by `factor`.
    pub fn refined(&self, domain: &SurfaceModel, factor: usize) -> Result<Self> {
        Self::for_domain(domain, self.n1 * factor, self.n2 * factor)
    }
}

/// Domain geometry of one grid row, expressed in grid coordinates.
#[derive(Debug, Clone, Copy)]
pub struct DomainRow {
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    pub christoffel: Christoffel,
    pub sqrt_det: f64,
    pub curvature: f64,
    /// Number of longitude modes kept by the polar filter on this row.
    pub mode_cut: usize,
}

/// Rows `-GHOST..n1+GHOST` of domain geometry. Torus domains are homogeneous
/// so every row is identical.
#[derive(Debug, Clone)]
pub struct DomainGeometry {
    rows: Vec<DomainRow>,
    n1: usize,
}

impl DomainGeometry {
    pub const GHOST: usize = 4;

    pub fn new(domain: &SurfaceModel, grid: &GridSpec) -> Self {
        let rows = (-(Self::GHOST as isize)..(grid.n1 + Self::GHOST) as isize)
            .map(|i| domain_row(domain, grid, i))
            .collect();
        Self { rows, n1: grid.n1 }
    }

    pub fn row(&self, i: isize) -> &DomainRow {
        let k = i + Self::GHOST as isize;
        debug_assert!(k >= 0 && (k as usize) < self.n1 + 2 * Self::GHOST);
        &self.rows[k as usize]
    }
}

fn domain_row(domain: &SurfaceModel, grid: &GridSpec, i: isize) -> DomainRow {
    match &domain.kind {
        SurfaceKind::FlatTorus { lattice } => {
            // x = L s, so the pulled-back metric is Lᵀ L
            let metric = lattice.transpose() * lattice;
            DomainRow {
                metric,
                metric_inv: metric.try_inverse().expect("validated lattice"),
                christoffel: [[[0.0; 2]; 2]; 2],
                sqrt_det: metric.determinant().sqrt(),
                curvature: 0.0,
                mode_cut: grid.n2 / 2,
            }
        }
        _ => {
            let (x1, _) = grid.coords(i, 0);
            let metric = domain.metric_formula(x1);
            let g22 = metric[(1, 1)];
            let g11 = metric[(0, 0)];
            // keep physical longitudinal wavenumbers m / sqrt(g22) below 2 / (sqrt(g11) h1)
            let resolvable = (2.0 * (g22 / g11).sqrt() / grid.h1).floor() as usize;
            DomainRow {
                metric,
                metric_inv: Matrix2::new(1.0 / g11, 0.0, 0.0, 1.0 / g22),
                christoffel: domain.christoffel_formula(x1),
                sqrt_det: (g11 * g22).sqrt(),
                curvature: domain.curvature_formula(x1),
                mode_cut: resolvable.clamp(1, grid.n2 / 2),
            }
        }
    }
}
