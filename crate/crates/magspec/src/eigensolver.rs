//! Lowest eigenpairs of `k^{-1} H` for weighted-Hermitian sparse operators.
//!
//! Both solvers work with `S = W^{1/2} H W^{-1/2}`, which is Hermitian in the
//! plain inner product; eigenvectors are mapped back by `v = W^{-1/2} y` so that
//! they are orthonormal for the weighted product.

use std::io::{self, Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TorusGrid;
use crate::lattice::{LatticeSection, SparseHermitian};

pub const DEFAULT_DENSE_CAP: usize = 6000;
const CACHE_MAGIC: &[u8; 8] = b"MSPEIG01";
pub const CACHE_VERSION: u32 = 1;
/// Vectors are split into chunks of this length for parallel dot products;
/// partial sums are combined in chunk order so results do not depend on the
/// thread count.
const CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("dimension {dim} exceeds the dense cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("Lanczos did not converge within {max_iters} steps per restart")]
    NoConvergence { max_iters: usize },
    #[error("independent starts disagree on the count below {cutoff}: {first} vs {second}")]
    ClusterUnresolved {
        cutoff: f64,
        first: usize,
        second: usize,
    },
    #[error("{lambda} is above the certified cutoff {cutoff}")]
    AboveCertifiedCutoff { lambda: f64, cutoff: f64 },
    #[error("cache file: {0}")]
    Cache(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub method: SolverMethod,
    /// Total number of Lanczos steps over all restarts (0 for dense).
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Residual tolerance in units of `H` (not `k^{-1} H`).
    pub tol: f64,
    /// Count below `cutoff + margin`, which the reported spectrum is a subset of.
    pub count_with_margin: usize,
    pub margin: f64,
}

/// Eigenpairs of `k^{-1} H` below `cutoff`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub k: u32,
    pub cutoff: f64,
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors of `H`, orthonormal for the weighted inner product.
    pub vectors: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
    /// `||H v - k lambda v||_W` per pair.
    pub residuals: Vec<f64>,
    pub info: SolverInfo,
}

fn scale_of(k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        k as f64
    }
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn section(&self, i: usize, grid: TorusGrid) -> LatticeSection {
        let rank = self.weights.len() / grid.num_sites();
        LatticeSection {
            grid,
            rank,
            values: self.vectors[i].clone(),
            weights: self.weights.clone(),
        }
    }

    /// Largest deviation of the weighted Gram matrix of the eigenvectors from
    /// the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.vectors.len();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in i..m {
                let g: Complex64 = self.vectors[i]
                    .iter()
                    .zip(&self.vectors[j])
                    .zip(&self.weights)
                    .map(|((a, b), w)| a.conj() * b * *w)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    /// Writes the eigen-data cache. Layout (little endian): magic `MSPEIG01`,
    /// `version: u32`, `config_hash: [u8; 32]`, `k: u32`, `grid: u32`,
    /// `cutoff: f64`, `tol: f64`, `seed: u64`, `count: u64`, `dim: u64`,
    /// `has_vectors: u8`, eigenvalues and residuals (`count x f64` each),
    /// weights (`dim x f64`), then `count x dim` complex vectors as `(re, im)`
    /// pairs when present, followed by the JSON-encoded `SolverInfo` with a
    /// `u64` length prefix.
    pub fn write_cache<W: Write>(
        &self,
        mut w: W,
        config_hash: &[u8; 32],
        grid: u32,
        with_vectors: bool,
    ) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(config_hash)?;
        w.write_all(&self.k.to_le_bytes())?;
        w.write_all(&grid.to_le_bytes())?;
        w.write_all(&self.cutoff.to_le_bytes())?;
        w.write_all(&self.info.tol.to_le_bytes())?;
        w.write_all(&self.info.seed.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.weights.len() as u64).to_le_bytes())?;
        let has = with_vectors && !self.vectors.is_empty();
        w.write_all(&[has as u8])?;
        for x in self.eigenvalues.iter().chain(&self.residuals).chain(&self.weights) {
            w.write_all(&x.to_le_bytes())?;
        }
        if has {
            for v in &self.vectors {
                for c in v {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
            }
        }
        let info = serde_json::to_vec(&self.info).map_err(io::Error::other)?;
        w.write_all(&(info.len() as u64).to_le_bytes())?;
        w.write_all(&info)?;
        Ok(())
    }

    /// Reads a cache file, returning the stored config hash and grid size.
    pub fn read_cache<R: Read>(mut r: R) -> io::Result<(EigenSystem, [u8; 32], u32)> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(bad("not an eigen-data cache"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != CACHE_VERSION {
            return Err(bad("unsupported cache version"));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        r.read_exact(&mut b4)?;
        let k = u32::from_le_bytes(b4);
        r.read_exact(&mut b4)?;
        let grid = u32::from_le_bytes(b4);
        let mut f64s = |r: &mut R, n: usize| -> io::Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    r.read_exact(&mut b8)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let head = f64s(&mut r, 2)?;
        let mut u = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> io::Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let _seed = read_u64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let dim = read_u64(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let eigenvalues = f64s(&mut r, count)?;
        let residuals = f64s(&mut r, count)?;
        let weights = f64s(&mut r, dim)?;
        let mut vectors = Vec::new();
        if flag[0] == 1 {
            for _ in 0..count {
                let raw = f64s(&mut r, 2 * dim)?;
                vectors.push(raw.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
            }
        }
        let len = read_u64(&mut r)? as usize;
        let mut info = vec![0u8; len];
        r.read_exact(&mut info)?;
        let info: SolverInfo = serde_json::from_slice(&info).map_err(io::Error::other)?;
        Ok((
            EigenSystem {
                k,
                cutoff: head[0],
                eigenvalues,
                vectors,
                weights,
                residuals,
                info,
            },
            hash,
            grid,
        ))
    }
}

/// `N(lambda, k)`: number of reported eigenvalues `<= lambda`.
pub fn counting_function(es: &EigenSystem, lambda: f64) -> Result<usize, EigenError> {
    if lambda > es.cutoff {
        return Err(EigenError::AboveCertifiedCutoff {
            lambda,
            cutoff: es.cutoff,
        });
    }
    Ok(es.eigenvalues.partition_point(|&e| e <= lambda))
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // conj(a) . b
    let partial: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum())
        .collect();
    partial.into_iter().sum()
}

fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).re.sqrt()
}

/// Classical Gram-Schmidt against `basis`, repeated once when the first pass
/// removes most of the norm.
fn orthogonalize(w: &mut [Complex64], basis: &[&[Complex64]]) {
    if basis.is_empty() {
        return;
    }
    let before = norm(w);
    for pass in 0..2 {
        if pass == 1 && norm(w) > 0.7 * before {
            break;
        }
        let coeffs: Vec<Complex64> = basis.par_iter().map(|q| dot(q, w)).collect();
        w.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let off = ci * CHUNK;
            for (i, x) in chunk.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (q, c) in basis.iter().zip(&coeffs) {
                    acc += q[off + i] * c;
                }
                *x -= acc;
            }
        });
    }
}

fn to_weighted(h: &SparseHermitian, y: &[Complex64]) -> Vec<Complex64> {
    y.iter()
        .zip(&h.weights)
        .map(|(v, w)| v / w.sqrt())
        .collect()
}

/// All eigenpairs by dense diagonalization of `S`.
pub fn dense_eig(h: &SparseHermitian, k: u32, cap: usize) -> Result<EigenSystem, EigenError> {
    dense_eig_below(h, k, f64::INFINITY, cap)
}

/// Dense diagonalization, keeping eigenvalues of `k^{-1} H` that are `<= cutoff`.
pub fn dense_eig_below(
    h: &SparseHermitian,
    k: u32,
    cutoff: f64,
    cap: usize,
) -> Result<EigenSystem, EigenError> {
    if h.dim > cap {
        return Err(EigenError::DimensionTooLarge { dim: h.dim, cap });
    }
    let s = h.symmetrized_dense();
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..h.dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = scale_of(k);
    let mut es = EigenSystem {
        k,
        cutoff,
        eigenvalues: Vec::new(),
        vectors: Vec::new(),
        weights: h.weights.clone(),
        residuals: Vec::new(),
        info: SolverInfo {
            method: SolverMethod::Dense,
            iterations: 0,
            restarts: 0,
            seed: 0,
            tol: 1e-9 * h.norm_bound(),
            count_with_margin: 0,
            margin: 0.0,
        },
    };
    for i in order {
        let lam = eig.eigenvalues[i] / scale;
        if lam > cutoff {
            break;
        }
        let y: Vec<Complex64> = eig.eigenvectors.column(i).iter().copied().collect();
        es.residuals.push(residual(h, &y, eig.eigenvalues[i]));
        es.eigenvalues.push(lam);
        es.vectors.push(to_weighted(h, &y));
    }
    es.info.count_with_margin = es.len();
    Ok(es)
}

fn residual(h: &SparseHermitian, y: &[Complex64], theta: f64) -> f64 {
    let mut sy = vec![Complex64::new(0.0, 0.0); h.dim];
    h.apply_symmetrized(y, &mut sy);
    for (a, b) in sy.iter_mut().zip(y) {
        *a -= b * theta;
    }
    norm(&sy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Residual tolerance for locking, relative to the Gershgorin bound of `S`.
    pub rel_tol: f64,
    pub seed: u64,
    /// Extra search range above the cutoff, in units of `k^{-1} H`.
    pub margin: f64,
    /// Lanczos steps per restart.
    pub max_iters: usize,
    /// Run a second, independently seeded solve and compare counts.
    pub certify: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            rel_tol: 1e-10,
            seed: 0,
            margin: 0.5,
            max_iters: 1200,
            certify: true,
        }
    }
}

struct Locked {
    theta: Vec<f64>,
    vecs: Vec<Vec<Complex64>>,
    iterations: usize,
    restarts: usize,
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Polynomial filter `A = -T_d((S - center) / half)`. Eigenvalues of `S`
/// below `center - half` (the search target) map below -1 in decreasing
/// order; the rest of the spectrum maps into [-1, 1].
#[derive(Debug, Clone, Copy)]
struct Filter {
    degree: usize,
    center: f64,
    half: f64,
}

impl Filter {
    /// `None` when the target is above the spectrum bound, where the plain
    /// operator is used.
    fn new(target: f64, lower: f64, upper: f64) -> Option<Filter> {
        if target >= upper {
            return None;
        }
        let half = 0.5 * (upper - target);
        let span = (target - lower).max(1e-3 * half);
        let delta = 0.5 * span / (upper - target);
        let d = (3.0 / (1.0 + 2.0 * delta).acosh()).ceil() as usize;
        let degree = (d + d % 2).clamp(2, 400);
        Some(Filter {
            degree,
            center: target + half,
            half,
        })
    }

    fn value(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.half;
        let t = if y.abs() <= 1.0 {
            (self.degree as f64 * y.acos()).cos()
        } else {
            let c = (self.degree as f64 * y.abs().acosh()).cosh();
            if y < 0.0 && self.degree % 2 == 1 {
                -c
            } else {
                c
            }
        };
        -t
    }

    fn apply(&self, h: &SparseHermitian, x: &[Complex64], out: &mut [Complex64]) {
        let dim = x.len();
        let scale = 1.0 / self.half;
        let shift = self.center / self.half;
        let mut prev = x.to_vec();
        let mut tmp = vec![Complex64::new(0.0, 0.0); dim];
        // T_1 = (S - c) / e applied to x.
        h.apply_symmetrized(x, &mut tmp);
        let mut cur: Vec<Complex64> = tmp.iter().zip(x).map(|(s, v)| s * scale - v * shift).collect();
        for _ in 1..self.degree {
            h.apply_symmetrized(&cur, &mut tmp);
            for i in 0..dim {
                let next = (tmp[i] * scale - cur[i] * shift) * 2.0 - prev[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        for (o, c) in out.iter_mut().zip(&cur) {
            *o = -c;
        }
    }
}

/// One Lanczos run on the filtered operator deflated by `locked`; returns the
/// number of newly locked pairs below `target`.
#[allow(clippy::too_many_arguments)]
fn lanczos_run(
    h: &SparseHermitian,
    filter: Option<Filter>,
    target: f64,
    cutoff: f64,
    spread: f64,
    tol: f64,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
    locked: &mut Locked,
) -> Result<usize, EigenError> {
    let dim = h.dim;
    let free = dim - locked.vecs.len();
    let steps = max_iters.min(free);
    // Thresholds in the spectrum of the Lanczos operator: values below
    // `wanted_below` are locked when they converge, values below `needed`
    // (the image of the cutoff) must converge. Values in between come from
    // the margin and are optional.
    let (wanted_below, needed, edge_gap) = match filter {
        Some(f) => {
            let needed = f.value(cutoff);
            (-1.0, needed, (needed.abs() - 1.0).max(0.0))
        }
        None => (target, cutoff, 0.0),
    };
    let res_tol = |theta: f64| match filter {
        Some(_) => tol * (theta.abs() - 1.0).max(0.0) / spread,
        None => tol,
    };
    let mut q = random_unit(dim, rng);
    {
        let basis: Vec<&[Complex64]> = locked.vecs.iter().map(|v| v.as_slice()).collect();
        orthogonalize(&mut q, &basis);
    }
    let nq = norm(&q);
    for x in q.iter_mut() {
        *x /= nq;
    }
    let mut qs: Vec<Vec<Complex64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut next_check = 8usize;
    let mut bottom_at: Option<usize> = None;
    let mut tighten = 1.0;
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut sy = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..steps {
        match filter {
            Some(f) => f.apply(h, &qs[j], &mut w),
            None => h.apply_symmetrized(&qs[j], &mut w),
        }
        let a = dot(&qs[j], &w).re;
        alpha.push(a);
        {
            let basis: Vec<&[Complex64]> = locked
                .vecs
                .iter()
                .chain(qs.iter())
                .map(|v| v.as_slice())
                .collect();
            orthogonalize(&mut w, &basis);
        }
        let b = norm(&w);
        locked.iterations += 1;
        let m = j + 1;
        let invariant = b <= 1e-14 * alpha.iter().fold(1e-300, |acc: f64, x| acc.max(x.abs()));
        let exhausted = invariant || m == steps;
        if m >= next_check || exhausted {
            next_check = m + (m / 8).max(8);
            let last = if invariant { 0.0 } else { b };
            let est = ritz_estimates(&alpha, &beta, wanted_below);
            let (t0, z0) = est[0];
            let bottom_done = if t0 < needed {
                last * z0 <= tighten * res_tol(t0)
            } else if filter.is_some() {
                // Nothing needed in sight; the bottom must be resolved well
                // enough to exclude values below the cutoff.
                last * z0 <= 0.01 * edge_gap.max(1e-12)
            } else {
                last * z0 <= tol
            };
            let below_done = est
                .iter()
                .all(|&(t, z)| t >= needed || last * z <= tighten * res_tol(t));
            // Degenerate copies only enter a single Krylov space through
            // rounding, so waiting for them is slower than restarting.
            if bottom_done && bottom_at.is_none() {
                bottom_at = Some(m);
            }
            let patience = bottom_at.is_some_and(|b0| 2 * m >= 3 * b0);
            if (bottom_done && (below_done || patience)) || exhausted {
                let (theta, s) = tridiagonal_eig(&alpha, &beta);
                let mut accepted: Vec<(f64, Vec<Complex64>)> = Vec::new();
                let mut unresolved = false;
                for i in 0..m {
                    if theta[i] >= wanted_below {
                        break;
                    }
                    if last * s[(m - 1, i)].abs() > tighten * res_tol(theta[i]) {
                        continue;
                    }
                    let mut y = vec![Complex64::new(0.0, 0.0); dim];
                    y.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
                        let off = ci * CHUNK;
                        for (r, x) in chunk.iter_mut().enumerate() {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for (l, ql) in qs.iter().enumerate() {
                                acc += ql[off + r] * s[(l, i)];
                            }
                            *x = acc;
                        }
                    });
                    let ny = norm(&y);
                    for x in y.iter_mut() {
                        *x /= ny;
                    }
                    h.apply_symmetrized(&y, &mut sy);
                    let rq = dot(&y, &sy).re;
                    let r = sy.iter().zip(&y).map(|(a, b)| (a - b * rq).norm_sqr()).sum::<f64>().sqrt();
                    if r <= tol {
                        if rq < target {
                            accepted.push((rq, y));
                        }
                    } else if theta[i] < needed {
                        unresolved = true;
                    }
                }
                if unresolved && !exhausted {
                    tighten *= 0.01;
                    continue_run(&mut beta, &mut qs, &w, b);
                    continue;
                }
                let added = accepted.len();
                for (rq, mut y) in accepted {
                    let basis: Vec<&[Complex64]> = locked.vecs.iter().map(|v| v.as_slice()).collect();
                    orthogonalize(&mut y, &basis);
                    let ny = norm(&y);
                    for x in y.iter_mut() {
                        *x /= ny;
                    }
                    locked.theta.push(rq);
                    locked.vecs.push(y);
                }
                locked.restarts += 1;
                if added == 0 && theta[0] < needed {
                    return Err(EigenError::NoConvergence { max_iters });
                }
                return Ok(added);
            }
        }
        continue_run(&mut beta, &mut qs, &w, b);
    }
    unreachable!("the final step always triggers a convergence check")
}

fn continue_run(beta: &mut Vec<f64>, qs: &mut Vec<Vec<Complex64>>, w: &[Complex64], b: f64) {
    beta.push(b);
    qs.push(w.iter().map(|x| x / b).collect());
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta` (Sturm sequence).
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut q = alpha[0] - x;
    let mut neg = (q < 0.0) as usize;
    for i in 1..alpha.len() {
        let prev = if q == 0.0 { f64::EPSILON * (beta[i - 1].abs() + 1e-300) } else { q };
        q = alpha[i] - x - beta[i - 1] * beta[i - 1] / prev;
        neg += (q < 0.0) as usize;
    }
    neg
}

/// Solves `(T - x) y = rhs` for tridiagonal `T` by Gaussian elimination with
/// partial pivoting.
fn tridiagonal_solve(alpha: &[f64], beta: &[f64], x: f64, rhs: &mut [f64]) {
    let m = alpha.len();
    // Rows hold (diag, up1, up2) after pivoting.
    let mut d: Vec<f64> = alpha.iter().map(|a| a - x).collect();
    let mut u1: Vec<f64> = (0..m).map(|i| if i + 1 < m { beta[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; m];
    let mut l: Vec<f64> = (0..m).map(|i| if i + 1 < m { beta[i] } else { 0.0 }).collect();
    let scale = alpha.iter().chain(beta).fold(0.0f64, |a, v| a.max(v.abs())) + x.abs();
    let tiny = f64::EPSILON * scale.max(1e-300);
    for i in 0..m.saturating_sub(1) {
        // Row i+1 has (l[i], d[i+1], u1[i+1]) in columns (i, i+1, i+2).
        if l[i].abs() > d[i].abs() {
            let (a0, a1, a2) = (l[i], d[i + 1], u1[i + 1]);
            let (b0, b1, b2) = (d[i], u1[i], u2[i]);
            d[i] = a0;
            u1[i] = a1;
            u2[i] = a2;
            rhs.swap(i, i + 1);
            let f = b0 / a0;
            d[i + 1] = b1 - f * a1;
            u1[i + 1] = b2 - f * a2;
            rhs[i + 1] -= f * rhs[i];
        } else {
            let piv = if d[i].abs() < tiny { tiny } else { d[i] };
            d[i] = piv;
            let f = l[i] / piv;
            d[i + 1] -= f * u1[i];
            if i + 2 < m {
                u1[i + 1] -= f * u2[i];
            }
            rhs[i + 1] -= f * rhs[i];
        }
        l[i] = 0.0;
    }
    if d[m - 1].abs() < tiny {
        d[m - 1] = tiny;
    }
    for i in (0..m).rev() {
        let mut v = rhs[i];
        if i + 1 < m {
            v -= u1[i] * rhs[i + 1];
        }
        if i + 2 < m {
            v -= u2[i] * rhs[i + 2];
        }
        rhs[i] = v / d[i];
    }
}

/// Lowest Ritz values (all below `target`, and at least one) with the modulus
/// of the last component of their normalized eigenvectors.
fn ritz_estimates(alpha: &[f64], beta: &[f64], target: f64) -> Vec<(f64, f64)> {
    let m = alpha.len();
    let radius = (0..m)
        .map(|i| {
            alpha[i].abs()
                + if i > 0 { beta[i - 1].abs() } else { 0.0 }
                + if i + 1 < m { beta[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let wanted = sturm_count(alpha, beta, target).max(1).min(m);
    (0..wanted)
        .map(|idx| {
            let (mut lo, mut hi) = (-radius - 1.0, radius + 1.0);
            while hi - lo > 4.0 * f64::EPSILON * (lo.abs().max(hi.abs())) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(alpha, beta, mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            let mut y = vec![1.0; m];
            for _ in 0..3 {
                tridiagonal_solve(alpha, beta, theta, &mut y);
                let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in y.iter_mut() {
                    *v /= n;
                }
            }
            (theta, y[m - 1].abs())
        })
        .collect()
}

/// Eigenvalues and eigenvectors of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta`, ascending.
fn tridiagonal_eig(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let s = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (theta, s)
}

fn lanczos_pass(
    h: &SparseHermitian,
    target: f64,
    cutoff: f64,
    tol: f64,
    opts: &LanczosOptions,
    seed: u64,
) -> Result<Locked, EigenError> {
    let (lower, upper) = h.spectrum_bounds();
    let filter = Filter::new(target, lower, upper);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked = Locked {
        theta: Vec::new(),
        vecs: Vec::new(),
        iterations: 0,
        restarts: 0,
    };
    let mut idle = 0;
    while idle < 2 && locked.vecs.len() < h.dim {
        let added = lanczos_run(
            h,
            filter,
            target,
            cutoff,
            upper - lower,
            tol,
            opts.max_iters,
            &mut rng,
            &mut locked,
        )?;
        idle = if added == 0 { idle + 1 } else { 0 };
    }
    Ok(locked)
}

/// All eigenvalues of `k^{-1} H` up to `cutoff`, with multiplicities.
///
/// Converged Ritz pairs are locked and the search restarts from a random
/// vector orthogonal to them until two consecutive restarts lock nothing
/// below `cutoff + margin`. With `certify`, a second pass from an unrelated
/// seed must reproduce the count below `cutoff`.
pub fn lanczos_lowest(
    h: &SparseHermitian,
    k: u32,
    cutoff: f64,
    opts: &LanczosOptions,
) -> Result<EigenSystem, EigenError> {
    let scale = scale_of(k);
    let tol = opts.rel_tol * h.norm_bound();
    let target = (cutoff + opts.margin) * scale;
    let first = lanczos_pass(h, target, cutoff * scale, tol, opts, opts.seed)?;
    let below = |l: &Locked| l.theta.iter().filter(|&&t| t <= cutoff * scale).count();
    let count = below(&first);
    if opts.certify {
        let second = lanczos_pass(
            h,
            target,
            cutoff * scale,
            tol,
            opts,
            opts.seed ^ 0x9E37_79B9_7F4A_7C15,
        )?;
        let other = below(&second);
        if other != count {
            return Err(EigenError::ClusterUnresolved {
                cutoff,
                first: count,
                second: other,
            });
        }
    }
    let mut order: Vec<usize> = (0..first.theta.len()).collect();
    order.sort_by(|&a, &b| first.theta[a].total_cmp(&first.theta[b]));
    let mut es = EigenSystem {
        k,
        cutoff,
        eigenvalues: Vec::new(),
        vectors: Vec::new(),
        weights: h.weights.clone(),
        residuals: Vec::new(),
        info: SolverInfo {
            method: SolverMethod::Lanczos,
            iterations: first.iterations,
            restarts: first.restarts,
            seed: opts.seed,
            tol,
            count_with_margin: first.theta.len(),
            margin: opts.margin,
        },
    };
    for i in order {
        let theta = first.theta[i];
        if theta > cutoff * scale {
            break;
        }
        es.residuals.push(residual(h, &first.vecs[i], theta));
        es.eigenvalues.push(theta / scale);
        es.vectors.push(to_weighted(h, &first.vecs[i]));
    }
    Ok(es)
}

/// Dense below `dense_cap`, Lanczos above.
pub fn lowest_spectrum(
    h: &SparseHermitian,
    k: u32,
    cutoff: f64,
    dense_cap: usize,
    opts: &LanczosOptions,
) -> Result<EigenSystem, EigenError> {
    if h.dim <= dense_cap {
        dense_eig_below(h, k, cutoff, dense_cap)
    } else {
        lanczos_lowest(h, k, cutoff, opts)
    }
}
