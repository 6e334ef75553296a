use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::{sym_sqrt_pair, GeometryError};

/// Smallest admissible magnetic intensity.
pub const MIN_INTENSITY: f64 = 1e-8;

const TIE_TOL: f64 = 1e-8;

/// Normal form of `(g, omega, V)` at one point.
///
/// `u[i]` are complex vectors in real coordinates with `j_B u_i = i B_i u_i`
/// and `h(u_i, u_j) = delta_ij`, where `h(u, v) = -i omega(u, conj v)`.
/// Complex coordinates of a tangent vector are `z_i(xi) = -i omega(xi, conj u_i)`.
/// Columns of `zeta` are the eigenvectors of `V`, ordered like `v_eigenvalues`.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub metric: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub potential: DMatrix<Complex64>,
    pub b: Vec<f64>,
    pub j_b: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub u: Vec<DVector<Complex64>>,
    pub v_eigenvalues: Vec<f64>,
    pub zeta: DMatrix<Complex64>,
}

/// Orthonormal basis of each eigenspace, made deterministic by projecting
/// the standard basis in index order. Eigenvalues ascend; columns follow.
pub(crate) fn canonical_eigenbasis(
    h: &DMatrix<Complex64>,
    tol: f64,
) -> (Vec<f64>, DMatrix<Complex64>) {
    let d = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut out = DMatrix::<Complex64>::zeros(d, d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (vals[end] - vals[start]).abs() <= tol * (1.0 + vals[start].abs()) {
            end += 1;
        }
        let cols: Vec<DVector<Complex64>> = order[start..end]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let mut chosen: Vec<DVector<Complex64>> = Vec::new();
        for r in 0..d {
            if chosen.len() == cols.len() {
                break;
            }
            // Projection of e_r onto the eigenspace.
            let mut v = DVector::<Complex64>::zeros(d);
            for c in &cols {
                v += c * c[r].conj();
            }
            for q in &chosen {
                let ov = q.dotc(&v);
                v -= q * ov;
            }
            let nrm = v.norm();
            if nrm > 1e-6 {
                chosen.push(v / Complex64::new(nrm, 0.0));
            }
        }
        for (k, v) in chosen.into_iter().enumerate() {
            out.set_column(start + k, &v);
        }
        start = end;
    }
    (vals, out)
}

impl PointFrame {
    /// Builds the frame from `g`, `Omega` (with `Omega_ab = omega(e_a, e_b)`) and `V`.
    pub fn from_matrices(
        metric: &DMatrix<f64>,
        omega: &DMatrix<f64>,
        potential: &DMatrix<Complex64>,
    ) -> Result<Self, GeometryError> {
        let dim = metric.nrows();
        let n = dim / 2;
        let (g_half, g_inv_half) = sym_sqrt_pair(metric);
        // A = G^{1/2} j_B G^{-1/2} = -G^{-1/2} Omega G^{-1/2}, real antisymmetric.
        let a = -(&g_inv_half * omega * &g_inv_half);
        let herm = a.map(|v| Complex64::new(0.0, -v));
        let (vals, vecs) = canonical_eigenbasis(&herm, TIE_TOL);
        let b: Vec<f64> = vals[n..].to_vec();
        let min_b = b[0];
        if !(min_b >= MIN_INTENSITY) {
            return Err(GeometryError::DegenerateForm { min_b });
        }
        let gih_c = g_inv_half.map(|v| Complex64::new(v, 0.0));
        let u: Vec<DVector<Complex64>> = (0..n)
            .map(|i| &gih_c * vecs.column(n + i) / Complex64::new(b[i].sqrt(), 0.0))
            .collect();

        let ata = a.transpose() * &a;
        let abs_inv = {
            let eig = SymmetricEigen::new(ata);
            let q = &eig.eigenvectors;
            let d = eig.eigenvalues.map(|v| 1.0 / v.max(0.0).sqrt());
            q * DMatrix::from_diagonal(&d) * q.transpose()
        };
        let j_sym = abs_inv * &a;
        let j = &g_inv_half * j_sym * &g_half;
        let j_b = -(metric.clone().try_inverse().expect("metric is invertible") * omega);

        let (v_eigenvalues, zeta) = canonical_eigenbasis(potential, 1e-10);
        Ok(PointFrame {
            metric: metric.clone(),
            omega: omega.clone(),
            potential: potential.clone(),
            b,
            j_b,
            j,
            u,
            v_eigenvalues,
            zeta,
        })
    }

    pub fn half_dim(&self) -> usize {
        self.b.len()
    }

    pub fn rank(&self) -> usize {
        self.v_eigenvalues.len()
    }

    pub fn min_intensity(&self) -> f64 {
        self.b[0]
    }

    /// `omega(xi, eta)`.
    pub fn omega_form(&self, xi: &[f64], eta: &[f64]) -> f64 {
        let d = xi.len();
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                acc += xi[a] * self.omega[(a, b)] * eta[b];
            }
        }
        acc
    }

    /// Complex coordinates `z_i(xi)`.
    pub fn z_coords(&self, xi: &[f64]) -> Vec<Complex64> {
        let d = xi.len();
        self.u
            .iter()
            .map(|ui| {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..d {
                    for b in 0..d {
                        acc += xi[a] * self.omega[(a, b)] * ui[b].conj();
                    }
                }
                Complex64::new(0.0, -1.0) * acc
            })
            .collect()
    }

    /// `|xi|_y^2 = omega(xi, j xi)`.
    pub fn norm_sq(&self, xi: &[f64]) -> f64 {
        let d = xi.len();
        let jxi: Vec<f64> = (0..d)
            .map(|a| (0..d).map(|b| self.j[(a, b)] * xi[b]).sum())
            .collect();
        self.omega_form(xi, &jxi)
    }

    /// `h(u, v) = -i omega(u, conj v)` for complex vectors.
    pub fn hermitian_form(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
        let d = u.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                acc += u[a] * self.omega[(a, b)] * v[b].conj();
            }
        }
        Complex64::new(0.0, -1.0) * acc
    }
}
