//! Pointwise model operators `sum_i B_i (a_i^+ a_i + 1/2) + V(y)` acting on
//! antiholomorphic polynomials of bounded degree tensored with the fibre of `A`,
//! and the sets derived from their spectra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, GeometryField, PointFrame};
use crate::intervals::{Interval, IntervalUnion};

/// Two model eigenvalues closer than this count as one point of the spectrum.
pub const MERGE_TOL: f64 = 1e-9;
/// Minimum clearance between an interval endpoint and the model spectrum.
pub const ENDPOINT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("interval endpoint {endpoint} is within {gap:.3e} of the model spectrum {value} at site {site}")]
    EndpointOnSpectrum {
        endpoint: f64,
        value: f64,
        gap: f64,
        site: usize,
    },
    #[error("projector rank changes from {left} to {right} between sites {site_a} and {site_b}")]
    RankJump {
        site_a: usize,
        site_b: usize,
        left: usize,
        right: usize,
    },
    #[error("degree cap {cap} is too small; at least {needed} is required")]
    CapTooSmall { cap: usize, needed: usize },
}

/// Multi-indices `alpha` with `|alpha| <= cap`, graded, then lexicographically
/// descending inside each degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OscillatorBasis {
    pub half_dim: usize,
    pub cap: usize,
    pub indices: Vec<Vec<u32>>,
}

fn push_degree(n: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == n - 1 {
        prefix.push(deg);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=deg).rev() {
        prefix.push(first);
        push_degree(n, deg - first, prefix, out);
        prefix.pop();
    }
}

impl OscillatorBasis {
    pub fn new(half_dim: usize, cap: usize) -> Self {
        let mut indices = Vec::new();
        for deg in 0..=cap as u32 {
            push_degree(half_dim, deg, &mut Vec::new(), &mut indices);
        }
        OscillatorBasis {
            half_dim,
            cap,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.indices.iter().position(|a| a.as_slice() == alpha)
    }
}

/// Model operator at one point, diagonal in the basis `zbar^alpha (x) zeta_l`
/// with flat index `alpha_index * rank + l`.
#[derive(Debug, Clone)]
pub struct ModelOperator {
    pub basis: OscillatorBasis,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub zeta: DMatrix<Complex64>,
}

impl ModelOperator {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The operator written in the basis `|alpha> (x) e_m`, where `e_m` is the
    /// standard frame of the fibre of `A`.
    pub fn standard_frame_matrix(&self) -> DMatrix<Complex64> {
        let r = self.rank;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for a in 0..self.basis.len() {
            for m in 0..r {
                for m2 in 0..r {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..r {
                        acc += self.zeta[(m, l)] * self.eigenvalues[a * r + l] * self.zeta[(m2, l)].conj();
                    }
                    out[(a * r + m, a * r + m2)] = acc;
                }
            }
        }
        out
    }

    /// Sorted eigenvalues.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

fn level(frame: &PointFrame, alpha: &[u32], l: usize) -> f64 {
    frame
        .b
        .iter()
        .zip(alpha)
        .map(|(b, &a)| b * (a as f64 + 0.5))
        .sum::<f64>()
        + frame.v_eigenvalues[l]
}

/// Model operator on `D_{<=cap} (x) A_y`.
pub fn box_operator(frame: &PointFrame, cap: usize) -> ModelOperator {
    let basis = OscillatorBasis::new(frame.half_dim(), cap);
    let r = frame.rank();
    let mut eigenvalues = Vec::with_capacity(basis.len() * r);
    for alpha in &basis.indices {
        for l in 0..r {
            eigenvalues.push(level(frame, alpha, l));
        }
    }
    ModelOperator {
        basis,
        rank: r,
        eigenvalues,
        zeta: frame.zeta.clone(),
    }
}

/// Smallest degree cap that captures every model eigenvalue up to `cutoff`.
pub fn required_cap(frame: &PointFrame, cutoff: f64) -> usize {
    let head = cutoff - frame.v_eigenvalues[0] - 0.5 * frame.b.iter().sum::<f64>();
    if head < 0.0 {
        0
    } else {
        (head / frame.b[0]).floor() as usize + 1
    }
}

/// Distinct model eigenvalues strictly below `cutoff`, with multiplicities.
pub fn sigma_y(frame: &PointFrame, cutoff: f64) -> Vec<(f64, usize)> {
    let op = box_operator(frame, required_cap(frame, cutoff));
    let vals: Vec<f64> = op
        .sorted_eigenvalues()
        .into_iter()
        .filter(|&v| v < cutoff)
        .collect();
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in vals {
        match out.last_mut() {
            Some((w, m)) if (v - *w).abs() <= MERGE_TOL * (1.0 + w.abs()) => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Number of model eigenvalues `<= lambda` at one point.
pub fn model_count(frame: &PointFrame, lambda: f64) -> usize {
    let op = box_operator(frame, required_cap(frame, lambda));
    op.eigenvalues
        .iter()
        .filter(|&&v| v <= lambda + MERGE_TOL * (1.0 + lambda.abs()))
        .count()
}

/// Sampled union of all model spectra, truncated at `cutoff`.
///
/// Each sorted eigenvalue branch contributes the hull of its samples over the
/// grid; the union's `resolution` records the largest jump of a branch
/// between neighbouring sites.
pub fn sigma_envelope(geom: &GeometryField, cutoff: f64) -> Result<IntervalUnion, ModelError> {
    let frames: Vec<PointFrame> = (0..geom.num_sites())
        .map(|s| geom.frame_at(s))
        .collect::<Result<_, _>>()?;
    let cap = frames
        .iter()
        .map(|f| required_cap(f, cutoff))
        .max()
        .unwrap_or(0);
    let spectra: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| box_operator(f, cap).sorted_eigenvalues())
        .collect();
    let branches = spectra[0].len();
    let mut pieces = Vec::new();
    let mut resolution: f64 = 0.0;
    for j in 0..branches {
        let lo = spectra.iter().map(|s| s[j]).fold(f64::INFINITY, f64::min);
        if lo > cutoff {
            break;
        }
        let hi = spectra.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max);
        pieces.push(Interval::new(lo, hi.min(cutoff)));
        for s in 0..geom.num_sites() {
            if spectra[s][j] > cutoff {
                continue;
            }
            for axis in 0..geom.grid.dim() {
                let t = geom.grid.shift(s, axis, 1);
                let jump = (spectra[s][j] - spectra[t][j].min(cutoff)).abs();
                resolution = resolution.max(jump);
            }
        }
    }
    let mut u = IntervalUnion::from_intervals(pieces);
    u.resolution = resolution;
    Ok(u)
}

/// Integrated density `v(lambda) = int N_y(lambda) dmu_L` by grid quadrature.
pub fn weyl_density(geom: &GeometryField, lambda: f64) -> Result<f64, ModelError> {
    let cell = geom.spacing().powi(geom.grid.dim() as i32);
    let mut acc = 0.0;
    for s in 0..geom.num_sites() {
        let f = geom.frame_at(s)?;
        acc += model_count(&f, lambda) as f64 * geom.density[s];
    }
    Ok(acc * cell)
}

/// Tabulates `v` at the given energies.
pub fn write_weyl_csv<W: std::io::Write>(
    geom: &GeometryField,
    energies: &[f64],
    w: W,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["lambda", "density"])?;
    for &e in energies {
        wr.write_record([format!("{e:.12e}"), format!("{:.12e}", weyl_density(geom, e)?)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Index set `I_y` of basis elements whose model eigenvalue lies in `interval`.
pub fn selected_indices(
    op: &ModelOperator,
    interval: Interval,
    site: usize,
) -> Result<Vec<usize>, ModelError> {
    let mut sel = Vec::new();
    for (i, &v) in op.eigenvalues.iter().enumerate() {
        for endpoint in [interval.lo, interval.hi] {
            let gap = (v - endpoint).abs();
            if gap < ENDPOINT_TOL {
                return Err(ModelError::EndpointOnSpectrum {
                    endpoint,
                    value: v,
                    gap,
                    site,
                });
            }
        }
        if interval.contains(v) {
            sel.push(i);
        }
    }
    Ok(sel)
}

/// Orthogonal projector onto the span of `zbar^alpha (x) zeta_l` with model
/// eigenvalue in `interval`, written in the basis `|alpha> (x) e_m`.
pub fn projector_symbol(
    frame: &PointFrame,
    interval: Interval,
    cap: usize,
) -> Result<DMatrix<Complex64>, ModelError> {
    let needed = required_cap(frame, interval.hi);
    if cap < needed {
        return Err(ModelError::CapTooSmall { cap, needed });
    }
    let op = box_operator(frame, cap);
    let sel = selected_indices(&op, interval, 0)?;
    Ok(projector_from_selection(&op, &sel))
}

fn projector_from_selection(op: &ModelOperator, sel: &[usize]) -> DMatrix<Complex64> {
    let r = op.rank;
    let d = op.dim();
    let mut p = DMatrix::zeros(d, d);
    for &i in sel {
        let a = i / r;
        let l = i % r;
        for m in 0..r {
            for m2 in 0..r {
                p[(a * r + m, a * r + m2)] += op.zeta[(m, l)] * op.zeta[(m2, l)].conj();
            }
        }
    }
    p
}

/// Projector symbols over every grid site.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectorField {
    pub interval: Interval,
    pub cap: usize,
    pub rank: usize,
    pub dims: Vec<usize>,
    #[serde(skip)]
    pub projectors: Vec<DMatrix<Complex64>>,
}

/// Builds the projector field of the cluster selected by `interval`.
///
/// Endpoints must clear every sampled model eigenvalue by three times the
/// sampled resolution (and by `ENDPOINT_TOL`), and the rank must be constant.
pub fn cluster_bundle(
    geom: &GeometryField,
    interval: Interval,
    cap: Option<usize>,
) -> Result<ProjectorField, ModelError> {
    let frames: Vec<PointFrame> = (0..geom.num_sites())
        .map(|s| geom.frame_at(s))
        .collect::<Result<_, _>>()?;
    let needed = frames
        .iter()
        .map(|f| required_cap(f, interval.hi))
        .max()
        .unwrap_or(0);
    let cap = match cap {
        Some(c) if c < needed => return Err(ModelError::CapTooSmall { cap: c, needed }),
        Some(c) => c,
        None => needed,
    };
    let ops: Vec<ModelOperator> = frames.iter().map(|f| box_operator(f, cap)).collect();
    let mut resolution: f64 = 0.0;
    let sorted: Vec<Vec<f64>> = ops.iter().map(|o| o.sorted_eigenvalues()).collect();
    for s in 0..geom.num_sites() {
        for axis in 0..geom.grid.dim() {
            let t = geom.grid.shift(s, axis, 1);
            for (a, b) in sorted[s].iter().zip(&sorted[t]) {
                if *a <= interval.hi || *b <= interval.hi {
                    resolution = resolution.max((a - b).abs());
                }
            }
        }
    }
    let clearance = (3.0 * resolution).max(ENDPOINT_TOL);
    let mut projectors = Vec::with_capacity(ops.len());
    let mut ranks = Vec::with_capacity(ops.len());
    for (s, op) in ops.iter().enumerate() {
        for &v in &op.eigenvalues {
            for endpoint in [interval.lo, interval.hi] {
                let gap = (v - endpoint).abs();
                if gap < clearance {
                    return Err(ModelError::EndpointOnSpectrum {
                        endpoint,
                        value: v,
                        gap,
                        site: s,
                    });
                }
            }
        }
        let sel = selected_indices(op, interval, s)?;
        ranks.push(sel.len());
        projectors.push(projector_from_selection(op, &sel));
    }
    for s in 0..geom.num_sites() {
        for axis in 0..geom.grid.dim() {
            let t = geom.grid.shift(s, axis, 1);
            if ranks[s] != ranks[t] {
                return Err(ModelError::RankJump {
                    site_a: s,
                    site_b: t,
                    left: ranks[s],
                    right: ranks[t],
                });
            }
        }
    }
    Ok(ProjectorField {
        interval,
        cap,
        rank: ranks[0],
        dims: vec![geom.grid.n; geom.grid.dim()],
        projectors,
    })
}
