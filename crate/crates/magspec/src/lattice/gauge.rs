use num_complex::Complex64;

use super::LatticeError;
use crate::geometry::{GeometryField, TorusGrid};

/// Order in which the discrete Landau gauge accumulates plaquette flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GaugeKind {
    /// Flux is accumulated along the first axis of each plane; the winding
    /// links sit on the last column.
    #[default]
    FirstAxis,
    /// Flux is accumulated along the second axis of each plane.
    SecondAxis,
}

/// Unitary link variables `U_j(x)` for `L^k`.
///
/// Sections are functions on sites, and the covariant difference is
/// `D_j u(x) = (U_j(x) u(x + e_j) - u(x)) / a`. Around every plaquette of the
/// plane `(a, b)` the ordered product
/// `U_a(x) U_b(x + e_a) conj(U_a(x + e_b)) conj(U_b(x))` equals `exp(-i Phi_p)`
/// with `Phi_p = k int_p omega_ab`.
#[derive(Debug, Clone)]
pub struct GaugeLattice {
    pub grid: TorusGrid,
    pub k: u32,
    /// `links[axis][site]`.
    pub links: Vec<Vec<Complex64>>,
    /// `(axes, k * plaquette flux)` per active plane.
    pub fluxes: Vec<((usize, usize), Vec<f64>)>,
}

fn cis(t: f64) -> Complex64 {
    Complex64::new(t.cos(), t.sin())
}

/// Builds the discrete Landau gauge for `L^k`.
pub fn build_gauge(geom: &GeometryField, k: u32) -> Result<GaugeLattice, LatticeError> {
    build_gauge_with(geom, k, GaugeKind::FirstAxis)
}

pub fn build_gauge_with(
    geom: &GeometryField,
    k: u32,
    kind: GaugeKind,
) -> Result<GaugeLattice, LatticeError> {
    let grid = geom.grid;
    let dim = grid.dim();
    let n = grid.n;
    let sites = grid.num_sites();
    let mut theta = vec![vec![0.0f64; sites]; dim];
    let mut fluxes = Vec::new();
    for plane in &geom.planes {
        let (a0, b0) = plane.axes;
        let kf: Vec<f64> = plane.plaquette.iter().map(|p| k as f64 * p).collect();
        let total: f64 = plane_total(&grid, plane.axes, &kf);
        let expected = 2.0 * std::f64::consts::PI * k as f64 * plane.degree as f64;
        if (total - expected).abs() > 1e-6 * expected.abs().max(1.0) {
            return Err(LatticeError::FluxMismatch { total, expected });
        }
        fluxes.push((plane.axes, kf.clone()));
        // Work in the oriented pair (p, q); swapping the roles flips the sign
        // of the flux seen by the construction.
        let (p, q, sign) = match kind {
            GaugeKind::FirstAxis => (a0, b0, 1.0),
            GaugeKind::SecondAxis => (b0, a0, -1.0),
        };
        // Plaquette flux in the (p, q) orientation at in-plane indices (i, j).
        let flux_at = |i: usize, j: usize| -> f64 {
            let mut m = vec![0usize; dim];
            m[p] = i;
            m[q] = j;
            sign * kf[grid.site(&m)]
        };
        let mut tq = vec![vec![0.0; n]; n];
        let mut tp_last = vec![0.0; n];
        let mut row_totals = vec![0.0; n];
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                tq[i][j] = -acc;
                acc += flux_at(i, j);
            }
            row_totals[j] = acc;
        }
        let mut acc = 0.0;
        for j in 0..n {
            tp_last[j] = acc;
            acc += row_totals[j];
        }
        for s in 0..sites {
            let m = grid.multi_index(s);
            let (i, j) = (m[p], m[q]);
            theta[q][s] += tq[i][j];
            if i == n - 1 {
                theta[p][s] += tp_last[j];
            }
        }
    }
    let links = theta
        .into_iter()
        .map(|t| t.into_iter().map(cis).collect())
        .collect();
    Ok(GaugeLattice {
        grid,
        k,
        links,
        fluxes,
    })
}

fn plane_total(grid: &TorusGrid, axes: (usize, usize), f: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..grid.n {
        for j in 0..grid.n {
            let mut m = vec![0usize; grid.dim()];
            m[axes.0] = i;
            m[axes.1] = j;
            total += f[grid.site(&m)];
        }
    }
    total
}

impl GaugeLattice {
    pub fn link(&self, axis: usize, site: usize) -> Complex64 {
        self.links[axis][site]
    }

    /// Ordered link product around the plaquette at `site` in plane `(a, b)`.
    pub fn plaquette_product(&self, a: usize, b: usize, site: usize) -> Complex64 {
        let g = &self.grid;
        let xa = g.shift(site, a, 1);
        let xb = g.shift(site, b, 1);
        self.links[a][site] * self.links[b][xa] * self.links[a][xb].conj() * self.links[b][site].conj()
    }

    /// Multiplies the winding links of each axis by `exp(i t_j)`, i.e. imposes
    /// twisted boundary conditions.
    pub fn twisted(&self, twist: &[f64]) -> GaugeLattice {
        let mut out = self.clone();
        for (axis, &t) in twist.iter().enumerate() {
            let phase = cis(t);
            for s in 0..self.grid.num_sites() {
                if self.grid.multi_index(s)[axis] == self.grid.n - 1 {
                    out.links[axis][s] *= phase;
                }
            }
        }
        out
    }

    /// Gauge transform by `exp(i chi)`: sections map to `exp(i chi) u`.
    pub fn gauge_transform(&self, chi: &[f64]) -> GaugeLattice {
        let mut out = self.clone();
        for axis in 0..self.grid.dim() {
            for s in 0..self.grid.num_sites() {
                let t = self.grid.shift(s, axis, 1);
                out.links[axis][s] = cis(chi[s]) * self.links[axis][s] * cis(-chi[t]);
            }
        }
        out
    }

    /// Ordered product of link variables along a lattice path. Forward steps
    /// along axis `j` from `s` contribute `U_j(s)`, backward steps contribute
    /// `conj(U_j(s - e_j))`.
    pub fn path_product(&self, start: usize, steps: &[(usize, i64)]) -> Complex64 {
        let g = &self.grid;
        let mut s = start;
        let mut acc = Complex64::new(1.0, 0.0);
        for &(axis, count) in steps {
            for _ in 0..count.unsigned_abs() {
                if count > 0 {
                    acc *= self.links[axis][s];
                    s = g.shift(s, axis, 1);
                } else {
                    let t = g.shift(s, axis, -1);
                    acc *= self.links[axis][t].conj();
                    s = t;
                }
            }
        }
        acc
    }

    /// Link product along the axis-ordered staircase from `from` to `to`
    /// using the shortest periodic displacement in each axis.
    pub fn transport_frame(&self, from: usize, to: usize) -> Complex64 {
        let d = self.grid.displacement(from, to);
        let steps: Vec<(usize, i64)> = d.into_iter().enumerate().collect();
        self.path_product(from, &steps)
    }
}
