use std::io::{self, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::LatticeError;

const SPARSE_MAGIC: &[u8; 8] = b"MSPCSR01";

/// Operator `H = W^{-1} K` in compressed sparse rows, where `K` is Hermitian
/// and `W = diag(weights)` is the quadrature weight of each unknown. `H` is
/// self-adjoint for `<u, v>_W = sum_i w_i u_i conj(v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl SparseHermitian {
    /// Builds `W^{-1} K` from unsorted triplets of `K`; duplicates are summed.
    pub fn from_form_triplets(
        dim: usize,
        mut triplets: Vec<(usize, usize, Complex64)>,
        weights: Vec<f64>,
    ) -> Self {
        triplets.par_sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        for r in 0..dim {
            let w = weights[r];
            for v in &mut vals[row_ptr[r]..row_ptr[r + 1]] {
                *v /= w;
            }
        }
        SparseHermitian {
            dim,
            row_ptr,
            cols,
            vals,
            weights,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(i) => self.vals[self.row_ptr[r] + i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *out = acc;
        });
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LatticeError> {
        if x.len() != self.dim {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut y);
        Ok(y)
    }

    /// `S = W^{1/2} H W^{-1/2}` applied to `x`; `S` is Hermitian in the
    /// standard inner product and has the spectrum of `H`.
    pub fn apply_symmetrized(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[i];
                acc += self.vals[i] * x[c] / self.weights[c].sqrt();
            }
            *out = acc * self.weights[r].sqrt();
        });
    }

    /// Dense copy of `S`.
    pub fn symmetrized_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[i];
                m[(r, c)] = self.vals[i] * (self.weights[r] / self.weights[c]).sqrt();
            }
        }
        m
    }

    /// Largest `|K_rc - conj(K_cr)|` relative to `max |K|`, with `K = W H`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..self.dim {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[i];
                let k_rc = self.vals[i] * self.weights[r];
                let k_cr = self.get(c, r) * self.weights[c];
                worst = worst.max((k_rc - k_cr.conj()).norm());
                scale = scale.max(k_rc.norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Gershgorin bound on the spectral radius of `S`.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|i| {
                        let c = self.cols[i];
                        self.vals[i].norm() * (self.weights[r] / self.weights[c]).sqrt()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin interval `[lower, upper]` containing the spectrum of `S`.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut diag = 0.0;
            let mut off = 0.0;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[i];
                let v = self.vals[i] * (self.weights[r] / self.weights[c]).sqrt();
                if c == r {
                    diag = v.re;
                } else {
                    off += v.norm();
                }
            }
            lo = lo.min(diag - off);
            hi = hi.max(diag + off);
        }
        (lo, hi)
    }

    /// Writes `H` in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "% weights of the inner product are stored separately")?;
        writeln!(w, "{} {} {}", self.dim, self.dim, self.nnz())?;
        for r in 0..self.dim {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.vals[i];
                writeln!(w, "{} {} {:.17e} {:.17e}", r + 1, self.cols[i] + 1, v.re, v.im)?;
            }
        }
        Ok(())
    }

    /// Binary layout, little endian: magic `MSPCSR01`, `dim: u64`, `nnz: u64`,
    /// `row_ptr: (dim + 1) x u64`, `cols: nnz x u64`, `vals: nnz x (f64, f64)`,
    /// `weights: dim x f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(SPARSE_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        for &p in &self.row_ptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.cols {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for v in &self.vals {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        for x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SPARSE_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a sparse operator file"));
        }
        let rd_u64 = |r: &mut R| -> io::Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let dim = rd_u64(&mut r)? as usize;
        let nnz = rd_u64(&mut r)? as usize;
        let row_ptr = (0..=dim).map(|_| rd_u64(&mut r).map(|v| v as usize)).collect::<io::Result<_>>()?;
        let cols = (0..nnz).map(|_| rd_u64(&mut r).map(|v| v as usize)).collect::<io::Result<_>>()?;
        let rd_f64 = |r: &mut R| -> io::Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut vals = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let re = rd_f64(&mut r)?;
            let im = rd_f64(&mut r)?;
            vals.push(Complex64::new(re, im));
        }
        let weights = (0..dim).map(|_| rd_f64(&mut r)).collect::<io::Result<_>>()?;
        Ok(SparseHermitian {
            dim,
            row_ptr,
            cols,
            vals,
            weights,
        })
    }
}
