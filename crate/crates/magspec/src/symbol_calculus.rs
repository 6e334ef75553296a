//! Polynomial symbols on a tangent space and their quantization on the
//! Bargmann space.
//!
//! Polynomials live in `C[z, zbar]` with `n` complex variables. The Bargmann
//! inner product is `<f, g> = (2 pi)^{-n} int e^{-|z|^2} f conj(g)`, taken
//! against `prod dz_i dzbar_i`, so that `|alpha> = zbar^alpha / sqrt(alpha!)`
//! is orthonormal. Ladder operators are `a_i = d/dzbar_i` and
//! `a_i^+ = zbar_i - d/dz_i`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::PointFrame;
use crate::intervals::Interval;
use crate::model_spectrum::{box_operator, required_cap, selected_indices, ModelError, OscillatorBasis};

/// Largest supported degree cap.
pub const MAX_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("symbol degree ({hol}, {anti}) exceeds the cap {cap}")]
    CapExceeded { hol: usize, anti: usize, cap: usize },
    #[error("rank mismatch: symbol has rank {symbol}, expected {expected}")]
    RankMismatch { symbol: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Multi = Vec<u32>;

/// The monomial `z^hol zbar^anti`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub hol: Multi,
    pub anti: Multi,
}

impl Monomial {
    pub fn new(hol: &[u32], anti: &[u32]) -> Self {
        Monomial {
            hol: hol.to_vec(),
            anti: anti.to_vec(),
        }
    }

    pub fn degree(&self) -> (usize, usize) {
        (
            self.hol.iter().sum::<u32>() as usize,
            self.anti.iter().sum::<u32>() as usize,
        )
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (i, zi) in z.iter().enumerate() {
            acc *= zi.powu(self.hol[i]) * zi.conj().powu(self.anti[i]);
        }
        acc
    }
}

pub fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

fn multi_factorial(a: &[u32]) -> f64 {
    a.iter().map(|&v| factorial(v)).product()
}

/// Scalar polynomial in `z, zbar`.
pub type Poly = BTreeMap<Monomial, Complex64>;

fn poly_add_scaled(acc: &mut Poly, other: &Poly, c: Complex64) {
    for (m, v) in other {
        let e = acc.entry(m.clone()).or_insert(Complex64::new(0.0, 0.0));
        *e += c * v;
    }
    acc.retain(|_, v| v.norm() > 1e-300);
}

/// Applies `zbar_i - d/dz_i` to a polynomial.
fn apply_raise(p: &Poly, i: usize) -> Poly {
    let mut out = Poly::new();
    for (m, c) in p {
        let mut up = m.clone();
        up.anti[i] += 1;
        *out.entry(up).or_insert(Complex64::new(0.0, 0.0)) += c;
        if m.hol[i] > 0 {
            let mut down = m.clone();
            down.hol[i] -= 1;
            *out.entry(down).or_insert(Complex64::new(0.0, 0.0)) -= c * m.hol[i] as f64;
        }
    }
    out.retain(|_, v| *v != Complex64::new(0.0, 0.0));
    out
}

/// `p_{alpha beta} = (alpha! beta!)^{-1/2} (zbar - d/dz)^alpha (-z)^beta`.
pub fn pab_polynomial(alpha: &[u32], beta: &[u32]) -> Poly {
    let n = alpha.len();
    let sign = if beta.iter().sum::<u32>() % 2 == 0 { 1.0 } else { -1.0 };
    let mut p = Poly::new();
    p.insert(Monomial::new(beta, &vec![0; n]), Complex64::new(sign, 0.0));
    for i in 0..n {
        for _ in 0..alpha[i] {
            p = apply_raise(&p, i);
        }
    }
    let norm = 1.0 / (multi_factorial(alpha) * multi_factorial(beta)).sqrt();
    for v in p.values_mut() {
        *v *= norm;
    }
    p
}

/// Coefficients `c_{alpha beta}` with `poly = sum c_{alpha beta} p_{alpha beta}`.
pub fn expand_in_pab(poly: &Poly) -> BTreeMap<(Multi, Multi), Complex64> {
    let mut rest = poly.clone();
    let mut out = BTreeMap::new();
    while let Some(top) = rest
        .keys()
        .max_by_key(|m| {
            let (h, a) = m.degree();
            (h + a, (*m).clone())
        })
        .cloned()
    {
        let c = rest[&top];
        let (alpha, beta) = (top.anti.clone(), top.hol.clone());
        let lead_sign = if beta.iter().sum::<u32>() % 2 == 0 { 1.0 } else { -1.0 };
        let lead = lead_sign / (multi_factorial(&alpha) * multi_factorial(&beta)).sqrt();
        let coef = c / lead;
        poly_add_scaled(&mut rest, &pab_polynomial(&alpha, &beta), -coef);
        rest.remove(&top);
        *out.entry((alpha, beta)).or_insert(Complex64::new(0.0, 0.0)) += coef;
    }
    out
}

/// Polynomial with values in `r x r` complex matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPolynomial {
    pub half_dim: usize,
    pub rank: usize,
    pub terms: BTreeMap<Monomial, DMatrix<Complex64>>,
}

impl SymbolPolynomial {
    pub fn zero(half_dim: usize, rank: usize) -> Self {
        SymbolPolynomial {
            half_dim,
            rank,
            terms: BTreeMap::new(),
        }
    }

    /// `poly (x) m`.
    pub fn tensor(poly: &Poly, m: &DMatrix<Complex64>) -> Self {
        let half_dim = poly.keys().next().map(|k| k.hol.len()).unwrap_or(1);
        let mut out = Self::zero(half_dim, m.nrows());
        out.add_tensor(poly, m);
        out
    }

    pub fn scalar(poly: &Poly) -> Self {
        Self::tensor(poly, &DMatrix::identity(1, 1))
    }

    pub fn add_tensor(&mut self, poly: &Poly, m: &DMatrix<Complex64>) {
        for (mono, c) in poly {
            let e = self
                .terms
                .entry(mono.clone())
                .or_insert_with(|| DMatrix::zeros(m.nrows(), m.ncols()));
            *e += m * *c;
        }
    }

    pub fn degree(&self) -> (usize, usize) {
        self.terms.keys().fold((0, 0), |(h, a), m| {
            let (mh, ma) = m.degree();
            (h.max(mh), a.max(ma))
        })
    }

    pub fn eval(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        let mut acc = DMatrix::zeros(self.rank, self.rank);
        for (m, c) in &self.terms {
            acc += c * m.eval(z);
        }
        acc
    }
}

/// Space of polynomials with `|hol| <= cap_hol` and `|anti| <= cap_anti`.
#[derive(Debug, Clone)]
pub struct PolySpace {
    pub half_dim: usize,
    pub cap_hol: usize,
    pub cap_anti: usize,
    pub monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl PolySpace {
    pub fn new(half_dim: usize, cap_hol: usize, cap_anti: usize) -> Self {
        let hol = OscillatorBasis::new(half_dim, cap_hol);
        let anti = OscillatorBasis::new(half_dim, cap_anti);
        let mut monomials = Vec::new();
        for h in &hol.indices {
            for a in &anti.indices {
                monomials.push(Monomial::new(h, a));
            }
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        PolySpace {
            half_dim,
            cap_hol,
            cap_anti,
            monomials,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Bargmann Gram matrix `G[i][j] = <m_i, m_j>`.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.len();
        DMatrix::from_fn(d, d, |i, j| {
            let (mi, mj) = (&self.monomials[i], &self.monomials[j]);
            let mut acc = 1.0;
            for c in 0..self.half_dim {
                let left = mi.hol[c] + mj.anti[c];
                if left != mi.anti[c] + mj.hol[c] {
                    return 0.0;
                }
                acc *= factorial(left);
            }
            acc
        })
    }

    /// Coefficient vector of a polynomial; `None` if it leaves the space.
    pub fn coefficients(&self, p: &Poly) -> Option<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for (m, c) in p {
            out[self.position(m)?] += c;
        }
        Some(out)
    }
}

/// Integer matrices of `a_i` and `a_i^+` in the monomial basis of a
/// [`PolySpace`]; column `j` holds the image of monomial `j`. Raising past
/// `cap_anti` is truncated.
#[derive(Debug, Clone)]
pub struct LadderOps {
    pub lower: Vec<DMatrix<i64>>,
    pub raise: Vec<DMatrix<i64>>,
}

pub fn ladder_matrices(space: &PolySpace) -> LadderOps {
    let d = space.len();
    let mut lower = Vec::new();
    let mut raise = Vec::new();
    for i in 0..space.half_dim {
        let mut lo = DMatrix::<i64>::zeros(d, d);
        let mut up = DMatrix::<i64>::zeros(d, d);
        for (j, m) in space.monomials.iter().enumerate() {
            if m.anti[i] > 0 {
                let mut t = m.clone();
                t.anti[i] -= 1;
                lo[(space.position(&t).unwrap(), j)] += m.anti[i] as i64;
            }
            let mut t = m.clone();
            t.anti[i] += 1;
            if let Some(k) = space.position(&t) {
                up[(k, j)] += 1;
            }
            if m.hol[i] > 0 {
                let mut t = m.clone();
                t.hol[i] -= 1;
                up[(space.position(&t).unwrap(), j)] -= m.hol[i] as i64;
            }
        }
        lower.push(lo);
        raise.push(up);
    }
    LadderOps { lower, raise }
}

impl LadderOps {
    /// `[a_i, a_j^+]` as an integer matrix.
    pub fn commutator(&self, i: usize, j: usize) -> DMatrix<i64> {
        &self.lower[i] * &self.raise[j] - &self.raise[j] * &self.lower[i]
    }

    pub fn to_f64(m: &DMatrix<i64>) -> DMatrix<f64> {
        m.map(|v| v as f64)
    }
}

/// Matrix of `Op(q)` on `D_{<=cap} (x) C^r` in the basis `|alpha> (x) e_m`.
pub fn op_quantize(q: &SymbolPolynomial, cap: usize) -> Result<DMatrix<Complex64>, SymbolError> {
    let (hol, anti) = q.degree();
    if hol > cap || anti > cap || cap > MAX_CAP {
        return Err(SymbolError::CapExceeded { hol, anti, cap });
    }
    let basis = OscillatorBasis::new(q.half_dim, cap);
    let r = q.rank;
    let pos: HashMap<&Multi, usize> = basis.indices.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut out = DMatrix::zeros(basis.len() * r, basis.len() * r);
    for (mono, coef) in &q.terms {
        let mut single = Poly::new();
        single.insert(mono.clone(), Complex64::new(1.0, 0.0));
        for ((alpha, beta), c) in expand_in_pab(&single) {
            let (Some(&ia), Some(&ib)) = (pos.get(&alpha), pos.get(&beta)) else {
                continue;
            };
            for m in 0..r {
                for m2 in 0..r {
                    out[(ia * r + m, ib * r + m2)] += c * coef[(m, m2)];
                }
            }
        }
    }
    Ok(out)
}

/// Symbol `sigma^I(y) = sum_{(alpha, l) in I_y} p_{alpha alpha} (x) |zeta_l><zeta_l|`.
pub fn projector_symbol_polynomial(
    frame: &PointFrame,
    interval: Interval,
) -> Result<SymbolPolynomial, SymbolError> {
    let op = box_operator(frame, required_cap(frame, interval.hi));
    let sel = selected_indices(&op, interval, 0)?;
    let r = op.rank;
    let mut sym = SymbolPolynomial::zero(frame.half_dim(), r);
    for i in sel {
        let alpha = &op.basis.indices[i / r];
        let l = i % r;
        let zeta = op.zeta.column(l);
        let proj = &zeta * zeta.adjoint();
        sym.add_tensor(&pab_polynomial(alpha, alpha), &proj);
    }
    Ok(sym)
}

/// Model projector kernel `P^I_y(eta + xi, eta)` with respect to the Liouville
/// measure of `T_y M`, as an `r x r` matrix.
pub fn model_projector_kernel(
    frame: &PointFrame,
    interval: Interval,
    xi: &[f64],
    eta: &[f64],
) -> Result<DMatrix<Complex64>, SymbolError> {
    let sym = projector_symbol_polynomial(frame, interval)?;
    Ok(kernel_from_symbol(frame, &sym, xi, eta))
}

/// Kernel value for a precomputed symbol.
pub fn kernel_from_symbol(
    frame: &PointFrame,
    sym: &SymbolPolynomial,
    xi: &[f64],
    eta: &[f64],
) -> DMatrix<Complex64> {
    let n = frame.half_dim();
    let z = frame.z_coords(xi);
    let phase = Complex64::new(0.0, 0.5 * frame.omega_form(eta, xi)).exp();
    let gauss = (-0.25 * frame.norm_sq(xi)).exp();
    let pref = (2.0 * std::f64::consts::PI).powi(-(n as i32));
    sym.eval(&z) * (phase * gauss * pref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_spectrum::projector_symbol;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn pab_low_orders() {
        let p = pab_polynomial(&[1], &[0]);
        assert_eq!(p.len(), 1);
        assert_eq!(p[&Monomial::new(&[0], &[1])], c(1.0));
        let p = pab_polynomial(&[1], &[1]);
        assert_eq!(p[&Monomial::new(&[1], &[1])], c(-1.0));
        assert_eq!(p[&Monomial::new(&[0], &[0])], c(1.0));
        let p = pab_polynomial(&[0, 0], &[0, 0]);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn expansion_round_trips() {
        let mut poly = Poly::new();
        poly.insert(Monomial::new(&[2, 1], &[1, 0]), Complex64::new(0.3, -1.0));
        poly.insert(Monomial::new(&[0, 0], &[0, 2]), c(2.0));
        poly.insert(Monomial::new(&[1, 0], &[0, 0]), c(-0.5));
        let coeffs = expand_in_pab(&poly);
        let mut rebuilt = Poly::new();
        for ((a, b), v) in &coeffs {
            poly_add_scaled(&mut rebuilt, &pab_polynomial(a, b), *v);
        }
        for (m, v) in &poly {
            assert!((rebuilt.get(m).copied().unwrap_or_default() - v).norm() < 1e-12);
        }
        for (m, v) in &rebuilt {
            assert!((poly.get(m).copied().unwrap_or_default() - v).norm() < 1e-12);
        }
    }

    #[test]
    fn quantization_examples() {
        let mut zbar = Poly::new();
        zbar.insert(Monomial::new(&[0], &[1]), c(1.0));
        let m = op_quantize(&SymbolPolynomial::scalar(&zbar), 2).unwrap();
        let mut expect = DMatrix::zeros(3, 3);
        expect[(1, 0)] = c(1.0);
        assert!((m - expect).norm() < 1e-14);
        let p00 = SymbolPolynomial::scalar(&pab_polynomial(&[0], &[0]));
        let m = op_quantize(&p00, 2).unwrap();
        let mut expect = DMatrix::zeros(3, 3);
        expect[(0, 0)] = c(1.0);
        assert!((m - expect).norm() < 1e-14);
        let mut big = Poly::new();
        big.insert(Monomial::new(&[0], &[3]), c(1.0));
        assert!(matches!(
            op_quantize(&SymbolPolynomial::scalar(&big), 2),
            Err(SymbolError::CapExceeded { .. })
        ));
    }

    #[test]
    fn pab_quantizes_to_rank_one() {
        let basis = OscillatorBasis::new(2, 3);
        for (i, a) in basis.indices.iter().enumerate() {
            for (j, b) in basis.indices.iter().enumerate() {
                let m = op_quantize(&SymbolPolynomial::scalar(&pab_polynomial(a, b)), 3).unwrap();
                for r in 0..m.nrows() {
                    for s in 0..m.ncols() {
                        let e = if (r, s) == (i, j) { 1.0 } else { 0.0 };
                        assert!((m[(r, s)] - c(e)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn ccr_is_exact_below_cap() {
        for n in 1..=2 {
            for cap in 1..=6 {
                let space = PolySpace::new(n, cap, cap);
                let ops = ladder_matrices(&space);
                for i in 0..n {
                    for j in 0..n {
                        let comm = ops.commutator(i, j);
                        for (col, m) in space.monomials.iter().enumerate() {
                            if m.degree().1 >= cap {
                                continue;
                            }
                            for row in 0..space.len() {
                                let e = i64::from(i == j && row == col);
                                assert_eq!(comm[(row, col)], e);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn number_operator_on_antiholomorphic_part() {
        let space = PolySpace::new(2, 0, 4);
        let ops = ladder_matrices(&space);
        for i in 0..2 {
            let num = &ops.raise[i] * &ops.lower[i];
            for (k, m) in space.monomials.iter().enumerate() {
                for row in 0..space.len() {
                    let e = if row == k { m.anti[i] as i64 } else { 0 };
                    assert_eq!(num[(row, k)], e);
                }
            }
        }
    }

    #[test]
    fn raising_is_adjoint_of_lowering() {
        let space = PolySpace::new(1, 3, 4);
        let g = space.gram();
        let ops = ladder_matrices(&space);
        let lo = LadderOps::to_f64(&ops.lower[0]);
        let up = LadderOps::to_f64(&ops.raise[0]);
        // <a f, g> = <f, a^+ g> for monomials away from the caps.
        for (i, mi) in space.monomials.iter().enumerate() {
            for (j, mj) in space.monomials.iter().enumerate() {
                if mj.degree().1 >= space.cap_anti || mi.degree().0 >= space.cap_hol {
                    continue;
                }
                let lhs: f64 = (0..space.len()).map(|k| lo[(k, i)] * g[(k, j)]).sum();
                let rhs: f64 = (0..space.len()).map(|k| up[(k, j)] * g[(i, k)]).sum();
                assert!((lhs - rhs).abs() < 1e-12, "{mi:?} {mj:?}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gram_on_antiholomorphic_monomials_is_factorial() {
        let space = PolySpace::new(2, 0, 3);
        let g = space.gram();
        for (i, m) in space.monomials.iter().enumerate() {
            for j in 0..space.len() {
                let e = if i == j { multi_factorial(&m.anti) } else { 0.0 };
                assert_eq!(g[(i, j)], e);
            }
        }
    }

    fn frame_b(b: &[f64], v: &[f64]) -> PointFrame {
        let n = b.len();
        let mut w = DMatrix::zeros(2 * n, 2 * n);
        for (i, &bi) in b.iter().enumerate() {
            w[(2 * i, 2 * i + 1)] = bi;
            w[(2 * i + 1, 2 * i)] = -bi;
        }
        let pot = DMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { c(v[i]) } else { c(0.0) });
        PointFrame::from_matrices(&DMatrix::identity(2 * n, 2 * n), &w, &pot).unwrap()
    }

    #[test]
    fn reconstruction_matches_projector() {
        for (b, v, lo, hi) in [
            (vec![1.0], vec![0.0], 0.0, 1.0),
            (vec![1.0, 1.0], vec![0.0], 1.5, 2.5),
            (vec![1.0, 2.0], vec![0.0, 0.3], 1.4, 3.6),
            (vec![2.0 * std::f64::consts::PI], vec![0.0], 2.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI),
        ] {
            let f = frame_b(&b, &v);
            let iv = Interval::new(lo, hi);
            let sym = projector_symbol_polynomial(&f, iv).unwrap();
            let cap = required_cap(&f, hi).max(sym.degree().0);
            let a = op_quantize(&sym, cap).unwrap();
            let p = projector_symbol(&f, iv, cap).unwrap();
            assert!((a - p).norm() < 1e-10);
        }
    }

    #[test]
    fn kernel_at_origin() {
        let f = frame_b(&[1.0], &[0.0]);
        let k = model_projector_kernel(&f, Interval::new(0.0, 1.0), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((k[(0, 0)] - c(1.0 / (2.0 * std::f64::consts::PI))).norm() < 1e-14);
        let f = frame_b(&[1.0, 1.0], &[0.0]);
        let k = model_projector_kernel(&f, Interval::new(1.5, 2.5), &[0.0; 4], &[0.3, 0.1, 0.0, 0.2]).unwrap();
        let expect = 2.0 / (2.0 * std::f64::consts::PI).powi(2);
        assert!((k[(0, 0)] - c(expect)).norm() < 1e-14);
    }

    #[test]
    fn kernel_gaussian_decay_at_three_magnetic_lengths() {
        let b = 2.0 * std::f64::consts::PI;
        let f = frame_b(&[b], &[0.0]);
        let iv = Interval::new(0.0, 2.0 * b / 2.0);
        let r = 3.0 / b.sqrt();
        let k0 = model_projector_kernel(&f, iv, &[0.0, 0.0], &[0.0, 0.0]).unwrap()[(0, 0)].norm();
        let k3 = model_projector_kernel(&f, iv, &[r, 0.0], &[0.0, 0.0]).unwrap()[(0, 0)].norm();
        assert!(k3 / k0 < (-9.0f64 / 4.0).exp() * 1.3);
        assert!((k3 / k0 - (-9.0f64 / 4.0).exp()).abs() < 1e-12);
    }
}
