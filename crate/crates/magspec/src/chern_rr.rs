//! First Chern numbers of projector fields on a periodic 2D grid and the
//! Riemann-Roch count `rank(F) k d + c_1(F)` on the two-torus.
//!
//! Orientation: `dx ^ dy` is positive and the degree `d` of `L` is positive.
//! With that orientation `c_1 = (i / 2 pi) int tr(P [d_1 P, d_2 P])`, which the
//! loop-product formula evaluates as `-(1 / 2 pi) sum_p arg(loop_p)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::model_spectrum::ProjectorField;

/// Smallest acceptable `|det|` of a normalized link overlap.
pub const MIN_OVERLAP: f64 = 1e-3;
/// A raw Chern sum must be this close to an integer.
pub const INTEGER_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ChernError {
    #[error("link overlap determinant {det:.3e} at cell {cell} along axis {axis}; refine the grid")]
    SingularOverlap { cell: usize, axis: usize, det: f64 },
    #[error("Chern sum {value} is not within {INTEGER_TOL} of an integer")]
    NotInteger { value: f64 },
    #[error("frames have inconsistent ranks")]
    RankMismatch,
    #[error("Riemann-Roch counts are implemented for the two-torus only (half dimension {half_dim})")]
    UnsupportedDimension { half_dim: usize },
    #[error("grid shape {0:?} is not two-dimensional")]
    GridShape(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChernData {
    pub c1: i64,
    /// Unrounded sum.
    pub raw: f64,
    pub rank: usize,
    pub dims: (usize, usize),
    /// `-arg(loop_p)` per plaquette, lower corner at `i + dims.0 * j`.
    pub curvature: Vec<f64>,
}

impl ChernData {
    /// CSV rows `i, j, curvature`.
    pub fn write_curvature_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "curvature"])?;
        for j in 0..self.dims.1 {
            for i in 0..self.dims.0 {
                let c = self.curvature[i + self.dims.0 * j];
                wr.write_record([i.to_string(), j.to_string(), format!("{c:.15e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Orthonormal basis of the range of a Hermitian projector.
pub fn projector_frame(p: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(p.clone());
    let cols: Vec<usize> = (0..p.nrows()).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(p.nrows(), cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

fn overlap_phase(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    let m = a.adjoint() * b;
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.determinant()
}

/// Loop-product Chern number of a field of orthonormal frames on an
/// `l1 x l2` periodic grid (index `i + l1 * j`).
pub fn fhs_chern_frames(
    frames: &[DMatrix<Complex64>],
    l1: usize,
    l2: usize,
) -> Result<ChernData, ChernError> {
    let rank = frames[0].ncols();
    if frames.iter().any(|f| f.ncols() != rank) {
        return Err(ChernError::RankMismatch);
    }
    let idx = |i: usize, j: usize| (i % l1) + l1 * (j % l2);
    let mut links = [vec![Complex64::new(0.0, 0.0); l1 * l2], vec![Complex64::new(0.0, 0.0); l1 * l2]];
    for j in 0..l2 {
        for i in 0..l1 {
            let s = idx(i, j);
            for (axis, t) in [idx(i + 1, j), idx(i, j + 1)].into_iter().enumerate() {
                let d = overlap_phase(&frames[s], &frames[t]);
                if d.norm() < MIN_OVERLAP {
                    return Err(ChernError::SingularOverlap {
                        cell: s,
                        axis,
                        det: d.norm(),
                    });
                }
                links[axis][s] = d / d.norm();
            }
        }
    }
    let mut curvature = vec![0.0; l1 * l2];
    for j in 0..l2 {
        for i in 0..l1 {
            let s = idx(i, j);
            let lp = links[0][s] * links[1][idx(i + 1, j)] * links[0][idx(i, j + 1)].conj() * links[1][s].conj();
            curvature[s] = -lp.arg();
        }
    }
    let raw = curvature.iter().sum::<f64>() / (2.0 * std::f64::consts::PI);
    let c1 = raw.round();
    if (raw - c1).abs() > INTEGER_TOL {
        return Err(ChernError::NotInteger { value: raw });
    }
    Ok(ChernData {
        c1: c1 as i64,
        raw,
        rank,
        dims: (l1, l2),
        curvature,
    })
}

/// Loop-product Chern number of a projector field over the 2D grid.
pub fn fhs_chern(field: &ProjectorField) -> Result<ChernData, ChernError> {
    if field.dims.len() != 2 {
        return Err(ChernError::GridShape(field.dims.clone()));
    }
    let frames: Vec<DMatrix<Complex64>> = field.projectors.iter().map(projector_frame).collect();
    fhs_chern_frames(&frames, field.dims[0], field.dims[1])
}

/// `rank(F) k d + c_1(F)`: the predicted number of eigenvalues in the cluster
/// whose bundle is `F`.
pub fn riemann_roch(k: u32, degree: i64, field: &ProjectorField) -> Result<i64, ChernError> {
    if field.dims.len() != 2 {
        return Err(ChernError::UnsupportedDimension {
            half_dim: field.dims.len() / 2,
        });
    }
    let chern = fhs_chern(field)?;
    Ok(riemann_roch_count(k, degree, field.rank, chern.c1))
}

pub fn riemann_roch_count(k: u32, degree: i64, rank: usize, c1: i64) -> i64 {
    rank as i64 * k as i64 * degree + c1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, TorusConfig};
    use crate::intervals::Interval;
    use crate::model_spectrum::cluster_bundle;
    use std::f64::consts::PI;

    /// Lower-band projector of `d(x) . sigma` with the two-band lattice vector
    /// `d = (sin x, sin y, m + cos x + cos y)`.
    fn two_band_projector(x: f64, y: f64, m: f64, upper: bool) -> DMatrix<Complex64> {
        let d = [x.sin(), y.sin(), m + x.cos() + y.cos()];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let s = if upper { 1.0 } else { -1.0 };
        let h = |re: f64, im: f64| Complex64::new(re, im);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                h(0.5 * (1.0 + s * d[2] / n), 0.0),
                h(0.5 * s * d[0] / n, -0.5 * s * d[1] / n),
                h(0.5 * s * d[0] / n, 0.5 * s * d[1] / n),
                h(0.5 * (1.0 - s * d[2] / n), 0.0),
            ],
        )
    }

    fn field_of(l: usize, f: impl Fn(f64, f64) -> DMatrix<Complex64>) -> Vec<DMatrix<Complex64>> {
        (0..l * l)
            .map(|s| {
                let (i, j) = (s % l, s / l);
                f(2.0 * PI * i as f64 / l as f64, 2.0 * PI * j as f64 / l as f64)
            })
            .collect()
    }

    /// `(i / 2 pi) int tr(P [d_1 P, d_2 P])` with central differences on a
    /// fine grid over the unit square of parameters.
    fn berry_oracle(f: impl Fn(f64, f64) -> DMatrix<Complex64>, l: usize) -> f64 {
        let h = 1.0 / l as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for j in 0..l {
            for i in 0..l {
                let (u, v) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let p = f(u, v);
                let e = 1e-5;
                let d1 = (f(u + e, v) - f(u - e, v)) / Complex64::new(2.0 * e, 0.0);
                let d2 = (f(u, v + e) - f(u, v - e)) / Complex64::new(2.0 * e, 0.0);
                let comm = &d1 * &d2 - &d2 * &d1;
                total += (&p * comm).trace() * h * h;
            }
        }
        (Complex64::new(0.0, 1.0) * total / (2.0 * PI)).re
    }

    #[test]
    fn constant_and_full_fields_are_flat() {
        let p = DMatrix::from_fn(3, 3, |i, j| Complex64::new(if i == j && i < 2 { 1.0 } else { 0.0 }, 0.0));
        let frames = vec![projector_frame(&p); 36];
        assert_eq!(fhs_chern_frames(&frames, 6, 6).unwrap().c1, 0);
        let id = DMatrix::<Complex64>::identity(3, 3);
        let frames = vec![projector_frame(&id); 36];
        let data = fhs_chern_frames(&frames, 6, 6).unwrap();
        assert_eq!((data.c1, data.rank), (0, 3));
    }

    #[test]
    fn two_band_matches_berry_quadrature() {
        for m in [1.0, -1.0, 3.0] {
            let frames: Vec<_> = field_of(24, |x, y| two_band_projector(x, y, m, false))
                .iter()
                .map(projector_frame)
                .collect();
            let fhs = fhs_chern_frames(&frames, 24, 24).unwrap();
            let oracle = berry_oracle(|u, v| two_band_projector(2.0 * PI * u, 2.0 * PI * v, m, false), 200);
            assert!((oracle - oracle.round()).abs() < 1e-2, "oracle {oracle}");
            assert_eq!(fhs.c1, oracle.round() as i64, "m = {m}");
            if m.abs() < 2.0 {
                assert_eq!(fhs.c1.abs(), 1);
            } else {
                assert_eq!(fhs.c1, 0);
            }
        }
    }

    #[test]
    fn additivity_and_deformation() {
        let lower = |m: f64| -> Vec<_> {
            field_of(20, |x, y| two_band_projector(x, y, m, false))
                .iter()
                .map(projector_frame)
                .collect()
        };
        let upper: Vec<_> = field_of(20, |x, y| two_band_projector(x, y, 1.0, true))
            .iter()
            .map(projector_frame)
            .collect();
        let cl = fhs_chern_frames(&lower(1.0), 20, 20).unwrap().c1;
        let cu = fhs_chern_frames(&upper, 20, 20).unwrap().c1;
        let both: Vec<_> = field_of(20, |x, y| two_band_projector(x, y, 1.0, false) + two_band_projector(x, y, 1.0, true))
            .iter()
            .map(projector_frame)
            .collect();
        let cb = fhs_chern_frames(&both, 20, 20).unwrap().c1;
        assert_eq!(cl + cu, cb);
        assert_eq!(cb, 0);
        for m in [0.4, 0.8, 1.2, 1.6] {
            assert_eq!(fhs_chern_frames(&lower(m), 20, 20).unwrap().c1, cl);
        }
    }

    #[test]
    fn singular_overlap_is_reported() {
        let a = DMatrix::from_row_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let b = DMatrix::from_row_slice(2, 1, &[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let frames: Vec<_> = (0..16).map(|s| if s % 2 == 0 { a.clone() } else { b.clone() }).collect();
        assert!(matches!(fhs_chern_frames(&frames, 4, 4), Err(ChernError::SingularOverlap { .. })));
    }

    #[test]
    fn riemann_roch_formula() {
        assert_eq!(riemann_roch_count(6, 1, 1, 0), 6);
        assert_eq!(riemann_roch_count(4, 1, 2, 0), 8);
        let g = build_geometry(&TorusConfig::modulated_field(12, 1, 0.15)).unwrap();
        let field = cluster_bundle(&g, Interval::new(0.5, 4.5), None).unwrap();
        assert_eq!(fhs_chern(&field).unwrap().c1, 0);
        for k in [2, 6, 12] {
            let rr = riemann_roch(k, 1, &field).unwrap();
            assert_eq!(rr, k as i64);
            // Leading term: RR / ((k / 2 pi) vol) tends to the rank.
            let ratio = rr as f64 / (k as f64 / (2.0 * PI) * 2.0 * PI);
            assert!((ratio - 1.0).abs() < 1e-12);
        }
        let cfg: TorusConfig =
            serde_json::from_str(r#"{"half_dim": 2, "grid": 3, "omega": {"x1y1": "2*pi", "x2y2": "2*pi"}}"#).unwrap();
        let g4 = build_geometry(&cfg).unwrap();
        let f4 = cluster_bundle(&g4, Interval::new(0.5, 4.0), None).unwrap();
        assert!(matches!(riemann_roch(2, 1, &f4), Err(ChernError::UnsupportedDimension { half_dim: 2 })));
    }

    #[test]
    fn curvature_csv() {
        let frames = vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)); 4];
        let data = fhs_chern_frames(&frames, 2, 2).unwrap();
        let mut out = Vec::new();
        data.write_curvature_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("i,j,curvature\n0,0,"));
    }
}
