//! Torus geometry: metric, symplectic form and potential sampled on a
//! periodic grid, plus the pointwise normal-form frames used by the model
//! operators.
//!
//! Configuration fields are closed-form expressions (see [`expr`]) or inline
//! grid arrays. Coordinates are ordered `(x, y)` for `n = 1` and
//! `(x1, y1, x2, y2)` for `n = 2`; the torus is `[0, 1)^{2n}`.

pub mod expr;
mod frame;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{coordinate_names, Expr, ExprError};
pub use frame::PointFrame;

/// Relative tolerance for snapping a computed flux to its integer value.
pub const FLUX_SNAP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error("metric is not positive definite at site {site}")]
    NonPositiveMetric { site: usize },
    #[error("symplectic form is degenerate or negatively oriented at site {site} (volume density {density:.3e})")]
    NonSymplectic { site: usize, density: f64 },
    #[error("flux through plane {plane} is {flux_quanta:.9} quanta, not an integer")]
    NonIntegralFlux { plane: String, flux_quanta: f64 },
    #[error("potential is not Hermitian: {0}")]
    NonHermitianPotential(String),
    #[error("form component {plane} must depend only on its own plane coordinates when n = 2")]
    UnsupportedForm { plane: String },
    #[error("magnetic intensities degenerate: smallest B = {min_b:.3e}")]
    DegenerateForm { min_b: f64 },
}

/// A real scalar field given in a configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Expr(String),
    Grid(Vec<f64>),
}

/// A complex scalar field: either real, or explicit real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexFieldSpec {
    Complex { re: FieldSpec, im: FieldSpec },
    Real(FieldSpec),
}

/// User-facing torus description.
///
/// * `metric` maps coordinate pairs (`"xx"`, `"xy"`, `"x1y2"`, ...) to the
///   entries of `g`; missing entries default to the identity.
/// * `omega` maps ordered pairs to the coefficient of `dx_a ^ dx_b`.
/// * `potential` maps `"i,j"` (1-based) to entries of the Hermitian `V`;
///   the lower triangle is filled by conjugation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TorusConfig {
    pub half_dim: usize,
    pub grid: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub metric: BTreeMap<String, FieldSpec>,
    pub omega: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub potential: BTreeMap<String, ComplexFieldSpec>,
}

fn default_rank() -> usize {
    1
}

impl TorusConfig {
    /// `g = Id`, `omega = 2 pi d dx^dy`, `V = 0` on the unit two-torus.
    pub fn constant_field(grid: usize, degree: i64) -> Self {
        let mut omega = BTreeMap::new();
        omega.insert("xy".to_string(), FieldSpec::Number(2.0 * std::f64::consts::PI * degree as f64));
        TorusConfig {
            half_dim: 1,
            grid,
            rank: 1,
            metric: BTreeMap::new(),
            omega,
            potential: BTreeMap::new(),
        }
    }

    /// Two-torus with `omega = 2 pi d (1 + eps cos 2 pi x cos 2 pi y) dx^dy`.
    pub fn modulated_field(grid: usize, degree: i64, eps: f64) -> Self {
        let mut cfg = Self::constant_field(grid, degree);
        cfg.omega.insert(
            "xy".to_string(),
            FieldSpec::Expr(format!(
                "2*pi*{degree}*(1 + {eps}*cos(2*pi*x)*cos(2*pi*y))"
            )),
        );
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        serde_json::from_str(text).map_err(|e| GeometryError::InvalidConfig(e.to_string()))
    }
}

/// A scalar field that can be evaluated anywhere on the torus.
#[derive(Debug, Clone)]
pub enum ScalarField {
    Const(f64),
    Expr(Expr),
    /// Periodic samples on the grid, multilinearly interpolated.
    Grid { values: Vec<f64>, n: usize, dim: usize },
}

impl ScalarField {
    pub fn from_spec(spec: &FieldSpec, half_dim: usize, grid: usize) -> Result<Self, GeometryError> {
        let dim = 2 * half_dim;
        match spec {
            FieldSpec::Number(v) => Ok(ScalarField::Const(*v)),
            FieldSpec::Expr(s) => {
                let e = Expr::parse(s, half_dim)?;
                if e.variables().is_empty() {
                    Ok(ScalarField::Const(e.eval(&vec![0.0; dim])))
                } else {
                    Ok(ScalarField::Expr(e))
                }
            }
            FieldSpec::Grid(values) => {
                let expected = grid.pow(dim as u32);
                if values.len() != expected {
                    return Err(GeometryError::InvalidConfig(format!(
                        "inline grid has {} values, expected {expected}",
                        values.len()
                    )));
                }
                Ok(ScalarField::Grid {
                    values: values.clone(),
                    n: grid,
                    dim,
                })
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Const(v) => *v,
            ScalarField::Expr(e) => e.eval(x),
            ScalarField::Grid { values, n, dim } => {
                let n = *n;
                let mut base = vec![0usize; *dim];
                let mut frac = vec![0.0; *dim];
                for c in 0..*dim {
                    let t = x[c].rem_euclid(1.0) * n as f64;
                    let i = t.floor();
                    base[c] = (i as usize) % n;
                    frac[c] = t - i;
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << dim) {
                    let mut w = 1.0;
                    let mut idx = 0usize;
                    let mut stride = 1usize;
                    for c in 0..*dim {
                        let bit = (corner >> c) & 1;
                        w *= if bit == 1 { frac[c] } else { 1.0 - frac[c] };
                        idx += ((base[c] + bit) % n) * stride;
                        stride *= n;
                    }
                    if w != 0.0 {
                        acc += w * values[idx];
                    }
                }
                acc
            }
        }
    }

    /// Coordinates the field may depend on.
    pub fn dependencies(&self, dim: usize) -> Vec<usize> {
        match self {
            ScalarField::Const(_) => vec![],
            ScalarField::Expr(e) => e.variables(),
            ScalarField::Grid { .. } => (0..dim).collect(),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, ScalarField::Const(_))
    }
}

/// Periodic grid bookkeeping: `N^{2n}` sites, coordinate 0 fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    pub half_dim: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn dim(&self) -> usize {
        2 * self.half_dim
    }

    pub fn num_sites(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn multi_index(&self, site: usize) -> Vec<usize> {
        let mut s = site;
        (0..self.dim())
            .map(|_| {
                let i = s % self.n;
                s /= self.n;
                i
            })
            .collect()
    }

    pub fn site(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &i in multi {
            idx += (i % self.n) * stride;
            stride *= self.n;
        }
        idx
    }

    /// Site reached from `site` by moving `steps` along axis `axis`.
    pub fn shift(&self, site: usize, axis: usize, steps: i64) -> usize {
        let stride = self.n.pow(axis as u32);
        let i = (site / stride) % self.n;
        let j = (i as i64 + steps).rem_euclid(self.n as i64) as usize;
        site - i * stride + j * stride
    }

    pub fn coords(&self, site: usize) -> Vec<f64> {
        self.multi_index(site)
            .into_iter()
            .map(|i| i as f64 / self.n as f64)
            .collect()
    }

    /// Shortest periodic displacement `to - from` in lattice steps.
    pub fn displacement(&self, from: usize, to: usize) -> Vec<i64> {
        let a = self.multi_index(from);
        let b = self.multi_index(to);
        let n = self.n as i64;
        a.iter()
            .zip(&b)
            .map(|(&i, &j)| {
                let mut d = (j as i64 - i as i64).rem_euclid(n);
                if 2 * d > n {
                    d -= n;
                }
                d
            })
            .collect()
    }
}

/// Flux data for one coordinate plane `(a, b)`, `a < b`.
#[derive(Debug, Clone)]
pub struct PlaneFlux {
    pub axes: (usize, usize),
    /// Integral of `omega_ab` over the plaquette with lower corner at each site.
    pub plaquette: Vec<f64>,
    pub degree: i64,
}

/// Geometry sampled on the grid.
#[derive(Debug, Clone)]
pub struct GeometryField {
    pub config: TorusConfig,
    pub grid: TorusGrid,
    pub rank: usize,
    /// `g_ab` per site.
    pub metric: Vec<DMatrix<f64>>,
    /// `Omega_ab = omega(e_a, e_b)` per site.
    pub omega: Vec<DMatrix<f64>>,
    pub potential: Vec<DMatrix<Complex64>>,
    /// Density of the Liouville measure with respect to Lebesgue measure.
    pub density: Vec<f64>,
    pub planes: Vec<PlaneFlux>,
    metric_fields: Vec<Vec<ScalarField>>,
    omega_fields: Vec<Vec<(ScalarField, f64)>>,
    potential_fields: Vec<Vec<PotentialEntry>>,
}

/// Real part, imaginary part, and whether the entry is the conjugate mirror.
type PotentialEntry = (ScalarField, ScalarField, bool);

fn eval_potential(e: &PotentialEntry, x: &[f64]) -> Complex64 {
    let im = e.1.eval(x);
    Complex64::new(e.0.eval(x), if e.2 { -im } else { im })
}

fn pair_key(key: &str, names: &[String]) -> Option<(usize, usize)> {
    for (a, na) in names.iter().enumerate() {
        for (b, nb) in names.iter().enumerate() {
            if format!("{na}{nb}") == key {
                return Some((a, b));
            }
        }
    }
    None
}

fn pfaffian(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        2 => m[(0, 1)],
        4 => m[(0, 1)] * m[(2, 3)] - m[(0, 2)] * m[(1, 3)] + m[(0, 3)] * m[(1, 2)],
        _ => f64::NAN,
    }
}

/// Parses and samples a torus configuration.
pub fn build_geometry(config: &TorusConfig) -> Result<GeometryField, GeometryError> {
    let n = config.half_dim;
    if n != 1 && n != 2 {
        return Err(GeometryError::InvalidConfig(format!(
            "half_dim must be 1 or 2, got {n}"
        )));
    }
    if config.grid < 2 {
        return Err(GeometryError::InvalidConfig("grid must be at least 2".into()));
    }
    if config.rank == 0 {
        return Err(GeometryError::InvalidConfig("rank must be positive".into()));
    }
    let dim = 2 * n;
    let names = coordinate_names(n);
    let grid = TorusGrid { half_dim: n, n: config.grid };

    let mut metric_fields: Vec<Vec<ScalarField>> = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| ScalarField::Const(if a == b { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for (key, spec) in &config.metric {
        let (a, b) = pair_key(key, &names)
            .ok_or_else(|| GeometryError::InvalidConfig(format!("unknown metric entry `{key}`")))?;
        let f = ScalarField::from_spec(spec, n, config.grid)?;
        metric_fields[a][b] = f.clone();
        metric_fields[b][a] = f;
    }

    let mut omega_fields: Vec<Vec<(ScalarField, f64)>> = (0..dim)
        .map(|_| (0..dim).map(|_| (ScalarField::Const(0.0), 1.0)).collect())
        .collect();
    for (key, spec) in &config.omega {
        let (a, b) = pair_key(key, &names)
            .ok_or_else(|| GeometryError::InvalidConfig(format!("unknown form entry `{key}`")))?;
        if a == b {
            return Err(GeometryError::InvalidConfig(format!(
                "form entry `{key}` lies on the diagonal"
            )));
        }
        let f = ScalarField::from_spec(spec, n, config.grid)?;
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        if n == 2 {
            let deps = f.dependencies(dim);
            if deps.iter().any(|&c| c != lo && c != hi) {
                return Err(GeometryError::UnsupportedForm { plane: key.clone() });
            }
        }
        omega_fields[lo][hi] = (f, sign);
    }

    let r = config.rank;
    let zero = || (ScalarField::Const(0.0), ScalarField::Const(0.0), false);
    let mut potential_fields: Vec<Vec<PotentialEntry>> =
        (0..r).map(|_| (0..r).map(|_| zero()).collect()).collect();
    let mut given = vec![vec![false; r]; r];
    for (key, spec) in &config.potential {
        let bad = || GeometryError::InvalidConfig(format!("bad potential index `{key}`"));
        let parts: Vec<&str> = key.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<usize>().ok().filter(|&i| i >= 1 && i <= r);
        let (i, j) = match parts.as_slice() {
            [a, b] => match (parse(a), parse(b)) {
                (Some(i), Some(j)) => (i - 1, j - 1),
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        };
        let (re, im) = match spec {
            ComplexFieldSpec::Real(f) => (
                ScalarField::from_spec(f, n, config.grid)?,
                ScalarField::Const(0.0),
            ),
            ComplexFieldSpec::Complex { re, im } => (
                ScalarField::from_spec(re, n, config.grid)?,
                ScalarField::from_spec(im, n, config.grid)?,
            ),
        };
        if i == j && !matches!(im, ScalarField::Const(v) if v == 0.0) {
            return Err(GeometryError::NonHermitianPotential(format!(
                "diagonal entry `{key}` has an imaginary part"
            )));
        }
        if given[j][i] && i != j {
            return Err(GeometryError::NonHermitianPotential(format!(
                "both `{key}` and its transpose are given"
            )));
        }
        given[i][j] = true;
        potential_fields[j][i] = (re.clone(), im.clone(), i != j);
        potential_fields[i][j] = (re, im, false);
    }

    let sites = grid.num_sites();
    let mut metric = Vec::with_capacity(sites);
    let mut omega = Vec::with_capacity(sites);
    let mut potential = Vec::with_capacity(sites);
    let mut density = Vec::with_capacity(sites);
    for s in 0..sites {
        let x = grid.coords(s);
        let g = DMatrix::from_fn(dim, dim, |a, b| metric_fields[a][b].eval(&x));
        if g.clone().cholesky().is_none() {
            return Err(GeometryError::NonPositiveMetric { site: s });
        }
        let mut w = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in (a + 1)..dim {
                let (f, sign) = &omega_fields[a][b];
                let v = sign * f.eval(&x);
                w[(a, b)] = v;
                w[(b, a)] = -v;
            }
        }
        let rho = pfaffian(&w);
        if !(rho > 1e-12) {
            return Err(GeometryError::NonSymplectic { site: s, density: rho });
        }
        let v = DMatrix::from_fn(r, r, |i, j| eval_potential(&potential_fields[i][j], &x));
        metric.push(g);
        omega.push(w);
        potential.push(v);
        density.push(rho);
    }

    let mut geom = GeometryField {
        config: config.clone(),
        grid,
        rank: r,
        metric,
        omega,
        potential,
        density,
        planes: Vec::new(),
        metric_fields,
        omega_fields,
        potential_fields,
    };
    geom.compute_fluxes()?;
    Ok(geom)
}

impl GeometryField {
    pub fn half_dim(&self) -> usize {
        self.grid.half_dim
    }

    pub fn num_sites(&self) -> usize {
        self.grid.num_sites()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// `omega_ab` at an arbitrary point (after flux snapping).
    pub fn omega_component(&self, a: usize, b: usize, x: &[f64]) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let (f, sign) = &self.omega_fields[lo][hi];
        s * sign * f.eval(x)
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.grid.dim();
        DMatrix::from_fn(d, d, |a, b| self.metric_fields[a][b].eval(x))
    }

    pub fn omega_at(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.grid.dim();
        DMatrix::from_fn(d, d, |a, b| self.omega_component(a, b, x))
    }

    pub fn potential_at(&self, x: &[f64]) -> DMatrix<Complex64> {
        let r = self.rank;
        DMatrix::from_fn(r, r, |i, j| eval_potential(&self.potential_fields[i][j], x))
    }

    fn compute_fluxes(&mut self) -> Result<(), GeometryError> {
        let dim = self.grid.dim();
        let h = self.spacing();
        let g1 = 0.5 - 0.5 / 3f64.sqrt();
        let g2 = 0.5 + 0.5 / 3f64.sqrt();
        let names = coordinate_names(self.half_dim());
        let sites = self.num_sites();
        let mut planes = Vec::new();
        for a in 0..dim {
            for b in (a + 1)..dim {
                let active = !matches!(self.omega_fields[a][b].0, ScalarField::Const(v) if v == 0.0);
                if !active && self.half_dim() == 2 {
                    continue;
                }
                let mut plaq = vec![0.0; sites];
                for (s, p) in plaq.iter_mut().enumerate() {
                    let x = self.grid.coords(s);
                    let mut acc = 0.0;
                    for ta in [g1, g2] {
                        for tb in [g1, g2] {
                            let mut y = x.clone();
                            y[a] += ta * h;
                            y[b] += tb * h;
                            acc += self.omega_component(a, b, &y);
                        }
                    }
                    *p = acc * h * h / 4.0;
                }
                // Flux through the coordinate 2-torus through the origin.
                let mut total = 0.0;
                for ia in 0..self.grid.n {
                    for ib in 0..self.grid.n {
                        let mut m = vec![0usize; dim];
                        m[a] = ia;
                        m[b] = ib;
                        total += plaq[self.grid.site(&m)];
                    }
                }
                let quanta = total / (2.0 * std::f64::consts::PI);
                let d = quanta.round();
                let plane = format!("{}{}", names[a], names[b]);
                if (quanta - d).abs() > FLUX_SNAP_TOL * d.abs().max(1.0) {
                    return Err(GeometryError::NonIntegralFlux {
                        plane,
                        flux_quanta: quanta,
                    });
                }
                if d != 0.0 && quanta != d {
                    let scale = d / quanta;
                    self.omega_fields[a][b].1 *= scale;
                    for p in plaq.iter_mut() {
                        *p *= scale;
                    }
                    for s in 0..sites {
                        self.omega[s][(a, b)] *= scale;
                        self.omega[s][(b, a)] *= scale;
                    }
                }
                planes.push(PlaneFlux {
                    axes: (a, b),
                    plaquette: plaq,
                    degree: d as i64,
                });
            }
        }
        for s in 0..sites {
            self.density[s] = pfaffian(&self.omega[s]);
        }
        self.planes = planes;
        Ok(())
    }

    /// Degree of the line bundle on the coordinate plane `(a, b)`.
    pub fn degree(&self, a: usize, b: usize) -> i64 {
        self.planes
            .iter()
            .find(|p| p.axes == (a.min(b), a.max(b)))
            .map(|p| if a < b { p.degree } else { -p.degree })
            .unwrap_or(0)
    }

    /// Normal-form frame at a grid site.
    pub fn frame_at(&self, site: usize) -> Result<PointFrame, GeometryError> {
        PointFrame::from_matrices(&self.metric[site], &self.omega[site], &self.potential[site])
    }

    /// Normal-form frame at an arbitrary point.
    pub fn frame_at_point(&self, x: &[f64]) -> Result<PointFrame, GeometryError> {
        PointFrame::from_matrices(&self.metric_at(x), &self.omega_at(x), &self.potential_at(x))
    }

    /// Largest magnetic intensity over the grid.
    pub fn max_intensity(&self) -> Result<f64, GeometryError> {
        let mut m: f64 = 0.0;
        for s in 0..self.num_sites() {
            let f = self.frame_at(s)?;
            m = m.max(*f.b.last().unwrap());
        }
        Ok(m)
    }
}

/// Total Liouville volume `int omega^n / n!` by grid quadrature.
pub fn liouville_volume(geom: &GeometryField) -> f64 {
    let cell = geom.spacing().powi(geom.grid.dim() as i32);
    geom.density.iter().sum::<f64>() * cell
}

pub(crate) fn sym_sqrt_pair(g: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g.clone());
    let q = &eig.eigenvectors;
    let s = eig.eigenvalues.map(f64::sqrt);
    let si = s.map(|v| 1.0 / v);
    (
        q * DMatrix::from_diagonal(&s) * q.transpose(),
        q * DMatrix::from_diagonal(&si) * q.transpose(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_volume_and_degree() {
        let g = build_geometry(&TorusConfig::constant_field(8, 1)).unwrap();
        assert!((liouville_volume(&g) - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.degree(0, 1), 1);
        assert_eq!(g.degree(1, 0), -1);
    }

    #[test]
    fn modulated_field_flux_is_integral() {
        let g = build_geometry(&TorusConfig::modulated_field(16, 1, 0.15)).unwrap();
        assert!((liouville_volume(&g) - 2.0 * PI).abs() < 1e-9);
        let total: f64 = g.planes[0].plaquette.iter().sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_fractional_flux() {
        let mut cfg = TorusConfig::constant_field(8, 1);
        cfg.omega.insert("xy".into(), FieldSpec::Number(2.0 * PI * 3.7));
        assert!(matches!(
            build_geometry(&cfg),
            Err(GeometryError::NonIntegralFlux { .. })
        ));
    }

    #[test]
    fn snaps_nearly_integral_flux() {
        let mut cfg = TorusConfig::constant_field(8, 1);
        cfg.omega.insert("xy".into(), FieldSpec::Number(2.0 * PI * (1.0 + 3e-7)));
        let g = build_geometry(&cfg).unwrap();
        let total: f64 = g.planes[0].plaquette.iter().sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
        assert!((g.omega[3][(0, 1)] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_metric_and_form() {
        let mut cfg = TorusConfig::constant_field(4, 1);
        cfg.metric.insert("xx".into(), FieldSpec::Number(-1.0));
        assert!(matches!(
            build_geometry(&cfg),
            Err(GeometryError::NonPositiveMetric { .. })
        ));
        let mut cfg = TorusConfig::constant_field(4, 1);
        cfg.omega.insert("xy".into(), FieldSpec::Expr("cos(2*pi*x)".into()));
        assert!(matches!(
            build_geometry(&cfg),
            Err(GeometryError::NonSymplectic { .. })
        ));
    }

    #[test]
    fn grid_shift_and_displacement() {
        let g = TorusGrid { half_dim: 1, n: 5 };
        let s = g.site(&[4, 2]);
        assert_eq!(g.multi_index(g.shift(s, 0, 1)), vec![0, 2]);
        assert_eq!(g.multi_index(g.shift(s, 1, -3)), vec![4, 4]);
        assert_eq!(g.displacement(g.site(&[0, 0]), s), vec![-1, 2]);
    }

    #[test]
    fn inline_grid_fields_interpolate() {
        let n = 4;
        let values: Vec<f64> = (0..n * n).map(|i| 1.0 + (i % n) as f64).collect();
        let f = ScalarField::Grid { values, n, dim: 2 };
        assert!((f.eval(&[0.125, 0.0]) - 1.5).abs() < 1e-14);
        assert!((f.eval(&[0.875, 0.5]) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn four_torus_product_volume() {
        let cfg: TorusConfig = serde_json::from_str(
            r#"{"half_dim": 2, "grid": 3, "omega": {"x1y1": "2*pi", "x2y2": "2*pi"}}"#,
        )
        .unwrap();
        let g = build_geometry(&cfg).unwrap();
        assert!((liouville_volume(&g) - (2.0 * PI).powi(2)).abs() < 1e-10);
        assert_eq!(g.degree(0, 1), 1);
        assert_eq!(g.degree(2, 3), 1);
        let bad: TorusConfig = serde_json::from_str(
            r#"{"half_dim": 2, "grid": 3, "omega": {"x1y1": "2*pi*(1+0.1*cos(2*pi*x2))", "x2y2": "2*pi"}}"#,
        )
        .unwrap();
        assert!(matches!(
            build_geometry(&bad),
            Err(GeometryError::UnsupportedForm { .. })
        ));
    }
}
