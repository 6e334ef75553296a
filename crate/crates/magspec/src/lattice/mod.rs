//! Finite-difference discretization of `1/2 nabla* nabla + k V` on the torus
//! grid, with link variables carrying the connection of `L^k`.

mod gauge;
mod sparse;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    coordinate_names, ComplexFieldSpec, FieldSpec, GeometryError, GeometryField, PointFrame,
    ScalarField, TorusGrid,
};

pub use gauge::{build_gauge, build_gauge_with, GaugeKind, GaugeLattice};
pub use sparse::SparseHermitian;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("total plaquette flux {total:.12} differs from 2 pi k d = {expected:.12}")]
    FluxMismatch { total: f64, expected: f64 },
    #[error("assembled operator is not Hermitian (relative defect {defect:.3e})")]
    NonHermitianAssembly { defect: f64 },
    #[error("vector has length {got}, operator dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cutoff radius {radius} is below the minimum {minimum:.4} for k = {k}")]
    CutoffTooSmall { radius: f64, minimum: f64, k: u32 },
    #[error("cutoff radius {radius} does not fit inside the unit torus")]
    CutoffExceedsTorus { radius: f64 },
    #[error("gauge lattice and geometry use different grids")]
    GridMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Lower-order terms `sum_j a_j nabla_j + b`, entered in symmetrized form.
/// Keys of `first_order` are coordinate names; coefficients act as scalars on
/// the fibre of `A`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Perturbation {
    #[serde(default)]
    pub first_order: BTreeMap<String, ComplexFieldSpec>,
    #[serde(default)]
    pub zeroth_order: Option<FieldSpec>,
}

impl Perturbation {
    pub fn is_empty(&self) -> bool {
        self.first_order.is_empty() && self.zeroth_order.is_none()
    }
}

fn complex_field(
    spec: &ComplexFieldSpec,
    half_dim: usize,
    grid: usize,
) -> Result<(ScalarField, ScalarField), GeometryError> {
    Ok(match spec {
        ComplexFieldSpec::Real(f) => (
            ScalarField::from_spec(f, half_dim, grid)?,
            ScalarField::Const(0.0),
        ),
        ComplexFieldSpec::Complex { re, im } => (
            ScalarField::from_spec(re, half_dim, grid)?,
            ScalarField::from_spec(im, half_dim, grid)?,
        ),
    })
}

/// Assembles `H = W^{-1} K` for `1/2 nabla* nabla + k V` (plus lower-order
/// terms) with `W = rho_L a^{2n}` per site.
///
/// The quadratic form `K` sums `1/2 g^{jj} |D_j u|^2` with weights at link
/// midpoints, `1/2 g^{ij} conj(D_i u) D_j u` for `i != j` at sites, and
/// `k <u, V u>`. First-order terms enter as `(T + T^dagger) / 2` with
/// `T = a_j D_j`.
pub fn assemble_laplacian(
    gauge: &GaugeLattice,
    geom: &GeometryField,
    perturbation: Option<&Perturbation>,
) -> Result<SparseHermitian, LatticeError> {
    if gauge.grid != geom.grid {
        return Err(LatticeError::GridMismatch);
    }
    let grid = geom.grid;
    let dim = grid.dim();
    let r = geom.rank;
    let a = grid.spacing();
    let cell = a.powi(dim as i32);
    let sites = grid.num_sites();
    let k = gauge.k as f64;

    let inv_metric: Vec<_> = geom
        .metric
        .iter()
        .map(|g| g.clone().try_inverse().expect("metric is positive definite"))
        .collect();
    let weight: Vec<f64> = geom.density.iter().map(|rho| rho * cell).collect();

    let mut first_order: Vec<Option<(ScalarField, ScalarField)>> = vec![None; dim];
    let mut zeroth: Option<ScalarField> = None;
    if let Some(p) = perturbation {
        let names = coordinate_names(grid.half_dim);
        for (key, spec) in &p.first_order {
            let axis = names.iter().position(|nm| nm == key).ok_or_else(|| {
                GeometryError::InvalidConfig(format!("unknown perturbation axis `{key}`"))
            })?;
            first_order[axis] = Some(complex_field(spec, grid.half_dim, grid.n)?);
        }
        if let Some(b) = &p.zeroth_order {
            zeroth = Some(ScalarField::from_spec(b, grid.half_dim, grid.n)?);
        }
    }

    let mut trip: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sites * r * (4 * dim * dim + r));
    let c = |v: f64| Complex64::new(v, 0.0);
    for s in 0..sites {
        let x = grid.coords(s);
        for j in 0..dim {
            let t = grid.shift(s, j, 1);
            let u = gauge.links[j][s];
            let m = 0.5 * (weight[s] * inv_metric[s][(j, j)] + weight[t] * inv_metric[t][(j, j)]);
            let cf = 0.5 * m / (a * a);
            for l in 0..r {
                let (ps, pt) = (s * r + l, t * r + l);
                trip.push((ps, ps, c(cf)));
                trip.push((pt, pt, c(cf)));
                trip.push((ps, pt, -u * cf));
                trip.push((pt, ps, -u.conj() * cf));
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                let gij = inv_metric[s][(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let w = 0.5 * weight[s] * gij / (a * a);
                // D_i u(s) has coefficient U_i(s) at s + e_i and -1 at s.
                let di = [(grid.shift(s, i, 1), gauge.links[i][s]), (s, c(-1.0))];
                let dj = [(grid.shift(s, j, 1), gauge.links[j][s]), (s, c(-1.0))];
                for &(p, cp) in &di {
                    for &(q, cq) in &dj {
                        for l in 0..r {
                            trip.push((p * r + l, q * r + l, cp.conj() * cq * w));
                        }
                    }
                }
            }
        }
        if k != 0.0 {
            let v = &geom.potential[s];
            for l in 0..r {
                for m2 in 0..r {
                    let e = v[(l, m2)];
                    if e != Complex64::new(0.0, 0.0) {
                        trip.push((s * r + l, s * r + m2, e * (k * weight[s])));
                    }
                }
            }
        }
        for (j, coeff) in first_order.iter().enumerate() {
            let Some((re, im)) = coeff else { continue };
            let aj = Complex64::new(re.eval(&x), im.eval(&x));
            let t = grid.shift(s, j, 1);
            // (W T)[s, t] = w_s a_j U / a and (W T)[s, s] = -w_s a_j / a; add half
            // of it and half of its adjoint.
            let off = aj * gauge.links[j][s] * (weight[s] / a);
            let diag = -aj * (weight[s] / a);
            for l in 0..r {
                let (ps, pt) = (s * r + l, t * r + l);
                trip.push((ps, pt, off * 0.5));
                trip.push((pt, ps, off.conj() * 0.5));
                trip.push((ps, ps, c(diag.re)));
            }
        }
        if let Some(b) = &zeroth {
            let bv = b.eval(&x) * weight[s];
            for l in 0..r {
                trip.push((s * r + l, s * r + l, c(bv)));
            }
        }
    }
    let weights: Vec<f64> = (0..sites * r).map(|i| weight[i / r]).collect();
    let h = SparseHermitian::from_form_triplets(sites * r, trip, weights);
    let defect = h.hermiticity_defect();
    if defect > 1e-12 {
        return Err(LatticeError::NonHermitianAssembly { defect });
    }
    Ok(h)
}

/// A section of `L^k (x) A` sampled on the grid, with its quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSection {
    pub grid: TorusGrid,
    pub rank: usize,
    pub values: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl LatticeSection {
    pub fn inner(&self, other: &LatticeSection) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.weights)
            .map(|((u, v), w)| u * v.conj() * *w)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Writes `site, coordinates..., component, re, im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["site".to_string()];
        header.extend(coordinate_names(self.grid.half_dim));
        header.extend(["component".into(), "re".into(), "im".into()]);
        wr.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let s = i / self.rank;
            let mut rec = vec![s.to_string()];
            rec.extend(self.grid.coords(s).iter().map(|c| format!("{c:.10}")));
            rec.push((i % self.rank).to_string());
            rec.push(format!("{:.15e}", v.re));
            rec.push(format!("{:.15e}", v.im));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `H` applied to a section.
pub fn matvec(h: &SparseHermitian, u: &LatticeSection) -> Result<LatticeSection, LatticeError> {
    let values = h.matvec(&u.values)?;
    Ok(LatticeSection {
        values,
        ..u.clone()
    })
}

/// Value at `to` of the unit section that is flat along the straight segment
/// from `from`, normalized to 1 at `from`.
///
/// The staircase transport is corrected by the flux of the frozen form
/// `omega_y` between the staircase and the segment, which is exact when
/// `omega` is constant near `from`.
pub fn radial_section(gauge: &GaugeLattice, frame: &PointFrame, from: usize, to: usize) -> Complex64 {
    let grid = &gauge.grid;
    let a = grid.spacing();
    let disp = grid.displacement(from, to);
    let stair = gauge.transport_frame(from, to).conj();
    let mut pos = vec![0.0; disp.len()];
    let mut flux = 0.0;
    for (c, &d) in disp.iter().enumerate() {
        let t = d as f64 * a;
        let w: f64 = (0..pos.len()).map(|b| pos[b] * frame.omega[(b, c)]).sum();
        flux += 0.5 * t * w;
        pos[c] += t;
    }
    stair * Complex64::new(0.0, -(gauge.k as f64) * flux).exp()
}

/// Antiholomorphic polynomial `f(zbar) = sum_alpha zbar^alpha c_alpha` with
/// values in the fibre of `A` (standard frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FibrePolynomial {
    pub terms: Vec<(Vec<u32>, Vec<Complex64>)>,
}

impl FibrePolynomial {
    /// `zbar_1^m` times the given fibre vector.
    pub fn monomial(alpha: &[u32], fibre: &[Complex64]) -> Self {
        FibrePolynomial {
            terms: vec![(alpha.to_vec(), fibre.to_vec())],
        }
    }

    pub fn eval(&self, z: &[Complex64], rank: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); rank];
        for (alpha, c) in &self.terms {
            let mut m = Complex64::new(1.0, 0.0);
            for (zi, &p) in z.iter().zip(alpha) {
                m *= zi.conj().powu(p);
            }
            for (o, ci) in out.iter_mut().zip(c) {
                *o += m * ci;
            }
        }
        out
    }
}

fn bump(t: f64) -> f64 {
    if t <= 0.5 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let s = 2.0 * (t - 0.5);
    let h = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    h(1.0 - s) / (h(1.0 - s) + h(s))
}

/// Peaked section `k^{n/2} F^k e^{-k |xi|_y^2 / 4} f(sqrt(k) xi) psi(xi)` at the
/// grid site `center`. `psi` equals 1 for Euclidean `|xi| <= radius / 2` and
/// vanishes beyond `radius`; the radius must satisfy
/// `sqrt(B_min) radius >= 5 / sqrt(k)` and `radius < 1/2`.
pub fn peaked_section(
    gauge: &GaugeLattice,
    geom: &GeometryField,
    center: usize,
    f: &FibrePolynomial,
    radius: f64,
) -> Result<LatticeSection, LatticeError> {
    let frame = geom.frame_at(center)?;
    let k = gauge.k;
    let minimum = 5.0 / ((k.max(1) as f64) * frame.min_intensity()).sqrt();
    if radius < minimum {
        return Err(LatticeError::CutoffTooSmall { radius, minimum, k });
    }
    if radius >= 0.5 {
        return Err(LatticeError::CutoffExceedsTorus { radius });
    }
    let grid = geom.grid;
    let a = grid.spacing();
    let r = geom.rank;
    let n = grid.half_dim;
    let sk = (k as f64).sqrt();
    let cell = a.powi(grid.dim() as i32);
    let mut values = vec![Complex64::new(0.0, 0.0); grid.num_sites() * r];
    for s in 0..grid.num_sites() {
        let xi: Vec<f64> = grid
            .displacement(center, s)
            .iter()
            .map(|&d| d as f64 * a)
            .collect();
        let e = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let psi = bump(e / radius);
        if psi == 0.0 {
            continue;
        }
        let gauss = (-0.25 * k as f64 * frame.norm_sq(&xi)).exp();
        let scaled: Vec<f64> = xi.iter().map(|v| v * sk).collect();
        let fz = f.eval(&frame.z_coords(&scaled), r);
        let phase = radial_section(gauge, &frame, center, s);
        let pref = phase * (sk.powi(n as i32) * gauss * psi);
        for l in 0..r {
            values[s * r + l] = pref * fz[l];
        }
    }
    let weights = (0..grid.num_sites() * r)
        .map(|i| geom.density[i / r] * cell)
        .collect();
    Ok(LatticeSection {
        grid,
        rank: r,
        values,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, TorusConfig};
    use std::f64::consts::PI;

    #[test]
    fn zero_k_links_are_trivial() {
        let g = build_geometry(&TorusConfig::constant_field(4, 1)).unwrap();
        let gauge = build_gauge(&g, 0).unwrap();
        for axis in &gauge.links {
            for u in axis {
                assert!((u - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn plaquette_fluxes_constant_field() {
        let g = build_geometry(&TorusConfig::constant_field(4, 1)).unwrap();
        for kind in [GaugeKind::FirstAxis, GaugeKind::SecondAxis] {
            let gauge = build_gauge_with(&g, 3, kind).unwrap();
            let phi = 2.0 * PI * 3.0 / 16.0;
            for s in 0..16 {
                let p = gauge.plaquette_product(0, 1, s);
                assert!((p - Complex64::new(0.0, -phi).exp()).norm() < 1e-12, "{kind:?} site {s}");
            }
        }
    }

    #[test]
    fn plaquette_fluxes_modulated_field() {
        let g = build_geometry(&TorusConfig::modulated_field(12, 2, 0.15)).unwrap();
        let gauge = build_gauge(&g, 5).unwrap();
        let flux = &gauge.fluxes[0].1;
        for s in 0..g.num_sites() {
            let p = gauge.plaquette_product(0, 1, s);
            assert!((p - Complex64::new(0.0, -flux[s]).exp()).norm() < 1e-12);
        }
        // Loops traced with path products agree with plaquette products.
        let loop_ = gauge.path_product(7, &[(0, 1), (1, 1), (0, -1), (1, -1)]);
        assert!((loop_ - gauge.plaquette_product(0, 1, 7)).norm() < 1e-14);
    }

    #[test]
    fn four_torus_gauge() {
        let cfg: TorusConfig = serde_json::from_str(
            r#"{"half_dim": 2, "grid": 3, "omega": {"x1y1": "2*pi", "x2y2": "4*pi", "x1x2": "2*pi*cos(2*pi*x2)"}}"#,
        )
        .unwrap();
        let g = build_geometry(&cfg).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        for (axes, flux) in &gauge.fluxes {
            for s in 0..g.num_sites() {
                let p = gauge.plaquette_product(axes.0, axes.1, s);
                assert!((p - Complex64::new(0.0, -flux[s]).exp()).norm() < 1e-12);
            }
        }
        // Planes without flux have trivial plaquettes.
        for s in 0..g.num_sites() {
            assert!((gauge.plaquette_product(1, 3, s) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn free_laplacian_stencil() {
        let g = build_geometry(&TorusConfig::constant_field(4, 1)).unwrap();
        let gauge = build_gauge(&g, 0).unwrap();
        let h = assemble_laplacian(&gauge, &g, None).unwrap();
        let a2 = 1.0 / 16.0;
        for s in 0..16 {
            assert!((h.get(s, s).re - 2.0 / a2).abs() < 1e-10);
            for axis in 0..2 {
                let t = g.grid.shift(s, axis, 1);
                assert!((h.get(s, t).re + 0.5 / a2).abs() < 1e-10);
            }
        }
        assert_eq!(h.nnz(), 16 * 5);
    }

    #[test]
    fn dimension_mismatch() {
        let g = build_geometry(&TorusConfig::constant_field(4, 1)).unwrap();
        let gauge = build_gauge(&g, 1).unwrap();
        let h = assemble_laplacian(&gauge, &g, None).unwrap();
        assert!(matches!(h.matvec(&[Complex64::new(0.0, 0.0); 3]), Err(LatticeError::DimensionMismatch { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let g = build_geometry(&TorusConfig::modulated_field(6, 1, 0.15)).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        let h = assemble_laplacian(&gauge, &g, None).unwrap();
        let mut buf = Vec::new();
        h.write_binary(&mut buf).unwrap();
        assert_eq!(SparseHermitian::read_binary(&buf[..]).unwrap(), h);
        let mut mm = Vec::new();
        h.write_matrix_market(&mut mm).unwrap();
        let text = String::from_utf8(mm).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("36 36 "));
    }

    #[test]
    fn bump_is_smooth_partition() {
        assert_eq!(bump(0.3), 1.0);
        assert_eq!(bump(1.2), 0.0);
        assert!((bump(0.75) - 0.5).abs() < 1e-12);
        assert!(bump(0.9) < bump(0.6));
    }

    fn random_vec(dim: usize, seed: u64) -> Vec<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn weighted_inner(w: &[f64], u: &[Complex64], v: &[Complex64]) -> Complex64 {
        u.iter().zip(v).zip(w).map(|((a, b), w)| a * b.conj() * *w).sum()
    }

    #[test]
    fn weighted_self_adjointness() {
        let mut cfg = TorusConfig::modulated_field(8, 1, 0.15);
        cfg.metric.insert("xx".into(), FieldSpec::Expr("1.2 + 0.1*cos(2*pi*y)".into()));
        cfg.metric.insert("xy".into(), FieldSpec::Number(0.3));
        let g = build_geometry(&cfg).unwrap();
        let gauge = build_gauge(&g, 3).unwrap();
        let pert = Perturbation {
            first_order: BTreeMap::from([(
                "x".to_string(),
                ComplexFieldSpec::Complex {
                    re: FieldSpec::Number(0.2),
                    im: FieldSpec::Expr("sin(2*pi*y)".into()),
                },
            )]),
            zeroth_order: Some(FieldSpec::Expr("cos(2*pi*x)".into())),
        };
        let h = assemble_laplacian(&gauge, &g, Some(&pert)).unwrap();
        let u = random_vec(h.dim, 1);
        let v = random_vec(h.dim, 2);
        let hu = h.matvec(&u).unwrap();
        let hv = h.matvec(&v).unwrap();
        let lhs = weighted_inner(&h.weights, &hu, &v);
        let rhs = weighted_inner(&h.weights, &u, &hv);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        // Row patterns are symmetric.
        for r in 0..h.dim {
            for i in h.row_ptr[r]..h.row_ptr[r + 1] {
                let c = h.cols[i];
                assert!(h.cols[h.row_ptr[c]..h.row_ptr[c + 1]].binary_search(&r).is_ok());
            }
        }
    }

    #[test]
    fn matvec_trivial_cases() {
        let g = build_geometry(&TorusConfig::constant_field(4, 1)).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        let h = assemble_laplacian(&gauge, &g, None).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); h.dim];
        assert!(h.matvec(&zero).unwrap().iter().all(|v| v.norm() == 0.0));
        let ident = SparseHermitian::from_form_triplets(
            3,
            (0..3).map(|i| (i, i, Complex64::new(2.0, 0.0))).collect(),
            vec![2.0; 3],
        );
        let v = random_vec(3, 5);
        assert_eq!(ident.matvec(&v).unwrap(), v);
        // Row-sum bound.
        let u = random_vec(h.dim, 9);
        let hu = h.matvec(&u).unwrap();
        let norm = |x: &[Complex64]| weighted_inner(&h.weights, x, x).re.sqrt();
        assert!(norm(&hu) <= h.norm_bound() * norm(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn constant_potential_shifts_diagonal() {
        let base = TorusConfig::modulated_field(6, 1, 0.15);
        let mut shifted = base.clone();
        shifted
            .potential
            .insert("1,1".into(), ComplexFieldSpec::Real(FieldSpec::Number(0.7)));
        let g0 = build_geometry(&base).unwrap();
        let g1 = build_geometry(&shifted).unwrap();
        let k = 3;
        let h0 = assemble_laplacian(&build_gauge(&g0, k).unwrap(), &g0, None).unwrap();
        let h1 = assemble_laplacian(&build_gauge(&g1, k).unwrap(), &g1, None).unwrap();
        for r in 0..h0.dim {
            for c in 0..h0.dim {
                let expect = h0.get(r, c) + if r == c { 0.7 * k as f64 } else { 0.0 };
                assert!((h1.get(r, c) - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn gauge_transform_conjugates_operator() {
        let g = build_geometry(&TorusConfig::modulated_field(6, 1, 0.15)).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        let chi: Vec<f64> = (0..g.num_sites()).map(|s| (s as f64 * 0.37).sin() * 3.0).collect();
        let moved = gauge.gauge_transform(&chi);
        let h0 = assemble_laplacian(&gauge, &g, None).unwrap();
        let h1 = assemble_laplacian(&moved, &g, None).unwrap();
        for r in 0..h0.dim {
            for c in 0..h0.dim {
                let expect = Complex64::from_polar(1.0, chi[r]) * h0.get(r, c) * Complex64::from_polar(1.0, -chi[c]);
                assert!((h1.get(r, c) - expect).norm() < 1e-10);
            }
        }
        for s in 0..g.num_sites() {
            assert!((moved.plaquette_product(0, 1, s) - gauge.plaquette_product(0, 1, s)).norm() < 1e-12);
        }
    }

    #[test]
    fn transport_frame_basics() {
        let g = build_geometry(&TorusConfig::modulated_field(8, 1, 0.15)).unwrap();
        let gauge = build_gauge(&g, 3).unwrap();
        assert_eq!(gauge.transport_frame(10, 10), Complex64::new(1.0, 0.0));
        for to in 0..g.num_sites() {
            assert!((gauge.transport_frame(5, to).norm() - 1.0).abs() < 1e-14);
        }
        let trivial = build_gauge(&g, 0).unwrap();
        assert!((trivial.transport_frame(3, 42) - 1.0).norm() < 1e-15);
    }

    /// `int exp(-|xi|_y^2 / 2) dmu_y` for `f = 1`: a Gaussian integral against
    /// the Liouville density, evaluated from the quadratic form directly.
    fn gaussian_mass(frame: &PointFrame) -> f64 {
        let dim = frame.omega.nrows();
        let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let mut ea = vec![0.0; dim];
                let mut eb = vec![0.0; dim];
                ea[a] += 1.0;
                eb[b] += 1.0;
                let mut sum = ea.clone();
                for (s, e) in sum.iter_mut().zip(&eb) {
                    *s += e;
                }
                m[(a, b)] = 0.5 * (frame.norm_sq(&sum) - frame.norm_sq(&ea) - frame.norm_sq(&eb));
            }
        }
        let pf = if dim == 2 {
            frame.omega[(0, 1)]
        } else {
            let o = &frame.omega;
            o[(0, 1)] * o[(2, 3)] - o[(0, 2)] * o[(1, 3)] + o[(0, 3)] * o[(1, 2)]
        };
        pf * (2.0 * PI).powi(dim as i32 / 2) / m.determinant().sqrt()
    }

    #[test]
    fn peaked_section_norm_matches_gaussian_mass() {
        let cfg = TorusConfig::modulated_field(96, 4, 0.15);
        let g = build_geometry(&cfg).unwrap();
        let k = 8;
        let gauge = build_gauge(&g, k).unwrap();
        let center = g.grid.site(&[17, 40]);
        let frame = g.frame_at(center).unwrap();
        let f = FibrePolynomial::monomial(&[0], &[Complex64::new(1.0, 0.0)]);
        let sec = peaked_section(&gauge, &g, center, &f, 0.45).unwrap();
        let expect = gaussian_mass(&frame);
        let got = sec.norm().powi(2);
        assert!((got - expect).abs() < 0.03 * expect, "{got} vs {expect}");
    }

    #[test]
    fn peaked_ground_state_is_quasimode() {
        // Constant field of degree 16 has B = 32 pi; the lowest level of k^{-1} H
        // is 16 pi. The Gaussian is below 1e-4 where the cutoff starts to bend.
        let g = build_geometry(&TorusConfig::constant_field(192, 16)).unwrap();
        let k = 8;
        let gauge = build_gauge(&g, k).unwrap();
        let h = assemble_laplacian(&gauge, &g, None).unwrap();
        let f = FibrePolynomial::monomial(&[0], &[Complex64::new(1.0, 0.0)]);
        let center = g.grid.site(&[60, 99]);
        let sec = peaked_section(&gauge, &g, center, &f, 0.45).unwrap();
        let hs = matvec(&h, &sec).unwrap();
        let lambda = 16.0 * PI;
        let mut res = sec.clone();
        for (r, (hv, v)) in res.values.iter_mut().zip(hs.values.iter().zip(&sec.values)) {
            *r = hv / k as f64 - v * lambda;
        }
        let rel = res.norm() / sec.norm() / lambda;
        assert!(rel < 0.01, "relative residual {rel}");
        // A wrong transport phase leaves an O(1) residual.
        let stair: Vec<Complex64> = (0..g.num_sites())
            .map(|s| gauge.transport_frame(center, s).conj() * sec.values[s].norm())
            .collect();
        let bad = LatticeSection { values: stair, ..sec.clone() };
        let hb = matvec(&h, &bad).unwrap();
        let mut rb = bad.clone();
        for (r, (hv, v)) in rb.values.iter_mut().zip(hb.values.iter().zip(&bad.values)) {
            *r = hv / k as f64 - v * lambda;
        }
        assert!(rb.norm() / bad.norm() / lambda > 10.0 * rel);
    }

    #[test]
    fn cutoff_validation() {
        let g = build_geometry(&TorusConfig::constant_field(16, 1)).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        let f = FibrePolynomial::monomial(&[0], &[Complex64::new(1.0, 0.0)]);
        assert!(matches!(
            peaked_section(&gauge, &g, 0, &f, 0.2),
            Err(LatticeError::CutoffTooSmall { .. })
        ));
        let g = build_geometry(&TorusConfig::constant_field(16, 20)).unwrap();
        let gauge = build_gauge(&g, 2).unwrap();
        assert!(matches!(
            peaked_section(&gauge, &g, 0, &f, 0.6),
            Err(LatticeError::CutoffExceedsTorus { .. })
        ));
    }

    #[test]
    fn section_csv_layout() {
        let g = build_geometry(&TorusConfig::constant_field(2, 1)).unwrap();
        let sec = LatticeSection {
            grid: g.grid,
            rank: 1,
            values: vec![Complex64::new(1.0, -2.0); 4],
            weights: vec![0.25; 4],
        };
        let mut out = Vec::new();
        sec.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "site,x,y,component,re,im");
        assert!(lines.next().unwrap().starts_with("0,0.0000000000,0.0000000000,0,1.0"));
        assert!((sec.norm() - 5f64.sqrt()).abs() < 1e-14);
    }
}
