//! Comparisons between computed spectra of `k^{-1} H` and the predictions
//! built from the pointwise model operators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::EigenSystem;
use crate::geometry::{GeometryError, GeometryField};
use crate::intervals::{Interval, IntervalUnion};
use crate::lattice::{matvec, peaked_section, FibrePolynomial, GaugeLattice, LatticeError, SparseHermitian};
use crate::model_spectrum::{box_operator, required_cap, ModelError, ENDPOINT_TOL};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cutoff {cutoff} lies inside the envelope")]
    CutoffInsideSigma { cutoff: f64 },
    #[error("a scaling fit needs at least {needed} values of k, got {got}")]
    InsufficientKGrid { needed: usize, got: usize },
    #[error("{lambda} lies on the envelope; the Weyl law is stated at continuity points")]
    LambdaOnSigma { lambda: f64 },
    #[error("window endpoint {endpoint} is within {gap:.3e} of the model spectrum at site {site}")]
    EndpointOnSigmaY { endpoint: f64, gap: f64, site: usize },
    #[error("eigenvectors are required but the eigen-system has none")]
    MissingEigenvectors,
    #[error("the Gaussian fit needs at least {needed} distinct radii, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("kernel profile is not Gaussian: {0}")]
    NoGaussianRegime(String),
    #[error("function support reaches {support}, beyond the certified cutoff {cutoff}")]
    SupportExceedsCertifiedRange { support: f64, cutoff: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Tolerance for attaching an eigenvalue to a component of the envelope:
/// the larger of a discretization term `5 a^2 k max B` and
/// `3 k^{-1/2} (0.1 min_gap)`, capped at `0.45 min_gap` so that no eigenvalue
/// can be attached across a gap.
pub fn cluster_tolerance(spacing: f64, k: u32, max_b: f64, min_gap: f64) -> f64 {
    let kf = k.max(1) as f64;
    let disc = 5.0 * spacing * spacing * kf * max_b;
    let semiclassical = 3.0 * kf.powf(-0.5) * 0.1 * min_gap;
    disc.max(semiclassical).min(0.45 * min_gap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub component: Interval,
    pub count: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub max_distance: f64,
    pub predicted: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: u32,
    pub cutoff: f64,
    pub tolerance: f64,
    pub sigma: IntervalUnion,
    pub clusters: Vec<ClusterRecord>,
    pub orphans: Vec<f64>,
}

impl ClusterReport {
    pub fn total(&self) -> usize {
        self.clusters.iter().map(|c| c.count).sum::<usize>() + self.orphans.len()
    }
}

/// Assigns every eigenvalue `<= cutoff` to the nearest component of `sigma`
/// within `tolerance`; the rest are orphans.
pub fn detect_clusters(
    eigenvalues: &[f64],
    k: u32,
    sigma: &IntervalUnion,
    cutoff: f64,
    tolerance: f64,
) -> Result<ClusterReport, AnalysisError> {
    if sigma.distance(cutoff) < ENDPOINT_TOL {
        return Err(AnalysisError::CutoffInsideSigma { cutoff });
    }
    let components: Vec<Interval> = sigma.below(cutoff);
    let mut clusters: Vec<ClusterRecord> = components
        .iter()
        .map(|&c| ClusterRecord {
            component: c,
            count: 0,
            min: None,
            max: None,
            max_distance: 0.0,
            predicted: None,
        })
        .collect();
    let mut orphans = Vec::new();
    for &e in eigenvalues.iter().filter(|&&e| e <= cutoff) {
        let nearest = components
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.distance(e)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, d)) if d <= tolerance => {
                let c = &mut clusters[i];
                c.count += 1;
                c.min = Some(c.min.map_or(e, |m| m.min(e)));
                c.max = Some(c.max.map_or(e, |m| m.max(e)));
                c.max_distance = c.max_distance.max(d);
            }
            _ => orphans.push(e),
        }
    }
    Ok(ClusterReport {
        k,
        cutoff,
        tolerance,
        sigma: sigma.clone(),
        clusters,
        orphans,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrCheck {
    pub component: Interval,
    pub count: usize,
    pub predicted: Option<i64>,
    pub pass: bool,
}

/// Exact comparison of cluster counts with predicted Riemann-Roch numbers.
/// Components without a prediction fail.
pub fn counting_vs_rr(report: &ClusterReport, predicted: &[Option<i64>]) -> Vec<RrCheck> {
    report
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = predicted.get(i).copied().flatten();
            RrCheck {
                component: c.component,
                count: c.count,
                predicted: p,
                pass: p == Some(c.count as i64),
            }
        })
        .collect()
}

/// Number of eigenvalues in `window` (both ends closed).
pub fn count_in(eigenvalues: &[f64], window: Interval) -> usize {
    eigenvalues.iter().filter(|&&e| window.contains(e)).count()
}

/// `max dist(lambda, sigma)` over eigenvalues `<= cutoff`.
pub fn max_distance(eigenvalues: &[f64], sigma: &IntervalUnion, cutoff: f64) -> f64 {
    eigenvalues
        .iter()
        .filter(|&&e| e <= cutoff)
        .map(|&e| sigma.distance(e))
        .fold(0.0, f64::max)
}

/// `max_{s in sigma, s <= cutoff} dist(s, eigenvalues)`, sampling each
/// component at `samples_per_component` equispaced points (endpoints
/// included).
pub fn envelope_coverage(eigenvalues: &[f64], sigma: &IntervalUnion, cutoff: f64, samples_per_component: usize) -> f64 {
    let below: Vec<f64> = eigenvalues.iter().copied().filter(|&e| e <= cutoff).collect();
    if below.is_empty() {
        return f64::INFINITY;
    }
    let n = samples_per_component.max(2);
    let mut worst: f64 = 0.0;
    for c in sigma.below(cutoff) {
        let hi = c.hi.min(cutoff);
        for i in 0..n {
            let s = c.lo + (hi - c.lo) * i as f64 / (n - 1) as f64;
            let d = below.iter().map(|e| (e - s).abs()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

/// Two-sided distance between the eigenvalues below `cutoff` and the part of
/// `sigma` below `cutoff`.
pub fn hausdorff_distance(eigenvalues: &[f64], sigma: &IntervalUnion, cutoff: f64) -> f64 {
    max_distance(eigenvalues, sigma, cutoff).max(envelope_coverage(eigenvalues, sigma, cutoff, 200))
}

/// Least-squares fit of `log10(value) = intercept + slope log10(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub ks: Vec<u32>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log10 units.
    pub residual: f64,
}

pub const MIN_SCALING_POINTS: usize = 4;

pub fn fit_power_law(ks: &[u32], values: &[f64], min_points: usize) -> Result<ScalingFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&k, &v)| ((k as f64).log10(), v.log10()))
        .collect();
    if pts.len() < min_points.max(2) {
        return Err(AnalysisError::InsufficientKGrid {
            needed: min_points.max(2),
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        ks: ks.to_vec(),
        values: values.to_vec(),
        slope,
        intercept,
        residual,
    })
}

/// Power-law fit of the largest distance to `sigma` across runs at several k.
pub fn distance_scaling(
    runs: &[(u32, &[f64])],
    sigma: &IntervalUnion,
    cutoff: f64,
) -> Result<ScalingFit, AnalysisError> {
    let ks: Vec<u32> = runs.iter().map(|r| r.0).collect();
    let values: Vec<f64> = runs.iter().map(|r| max_distance(r.1, sigma, cutoff)).collect();
    fit_power_law(&ks, &values, MIN_SCALING_POINTS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylRatio {
    pub lambda: f64,
    pub count: usize,
    pub predicted: f64,
    /// `count / predicted`; NaN when the prediction vanishes.
    pub ratio: f64,
    pub degenerate: bool,
}

/// `N(lambda, k) / ((k / 2 pi)^n v(lambda))`.
pub fn global_weyl(
    eigenvalues: &[f64],
    k: u32,
    geom: &GeometryField,
    sigma: &IntervalUnion,
    lambda: f64,
) -> Result<WeylRatio, AnalysisError> {
    if sigma.distance(lambda) < ENDPOINT_TOL {
        return Err(AnalysisError::LambdaOnSigma { lambda });
    }
    let count = eigenvalues.iter().filter(|&&e| e <= lambda).count();
    let v = crate::model_spectrum::weyl_density(geom, lambda)?;
    let predicted = (k as f64 / (2.0 * PI)).powi(geom.half_dim() as i32) * v;
    let degenerate = predicted == 0.0;
    Ok(WeylRatio {
        lambda,
        count,
        predicted,
        ratio: if degenerate { f64::NAN } else { count as f64 / predicted },
        degenerate,
    })
}

fn site_density(es: &EigenSystem, i: usize, site: usize, rank: usize) -> f64 {
    (0..rank).map(|l| es.vectors[i][site * rank + l].norm_sqr()).sum()
}

/// Number of model eigenvalues (with multiplicity) in `window` at `site`,
/// after checking the endpoints clear the model spectrum.
pub fn model_multiplicity(geom: &GeometryField, site: usize, window: Interval) -> Result<usize, AnalysisError> {
    let frame = geom.frame_at(site)?;
    let op = box_operator(&frame, required_cap(&frame, window.hi));
    let mut m = 0;
    for &v in &op.eigenvalues {
        for endpoint in [window.lo, window.hi] {
            let gap = (v - endpoint).abs();
            if gap < ENDPOINT_TOL {
                return Err(AnalysisError::EndpointOnSigmaY { endpoint, gap, site });
            }
        }
        m += window.contains(v) as usize;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWeyl {
    pub site: usize,
    pub window: Interval,
    /// `sum_{lambda_i in window} |Psi_i(y)|^2`.
    pub value: f64,
    /// Model multiplicity `m_0` in the window.
    pub multiplicity: usize,
    /// `(k / 2 pi)^n m_0`.
    pub leading: f64,
}

impl LocalWeyl {
    /// `(2 pi / k)^n` times the value, to be compared with `m_0`.
    pub fn normalized(&self, k: u32, half_dim: usize) -> f64 {
        self.value * (2.0 * PI / k as f64).powi(half_dim as i32)
    }
}

pub fn local_weyl(
    es: &EigenSystem,
    geom: &GeometryField,
    site: usize,
    window: Interval,
) -> Result<LocalWeyl, AnalysisError> {
    if es.vectors.len() != es.eigenvalues.len() {
        return Err(AnalysisError::MissingEigenvectors);
    }
    let multiplicity = model_multiplicity(geom, site, window)?;
    let value = es
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| window.contains(e))
        .map(|(i, _)| site_density(es, i, site, geom.rank))
        .fold(0.0, |acc, v| acc + v);
    Ok(LocalWeyl {
        site,
        window,
        value,
        multiplicity,
        leading: (es.k as f64 / (2.0 * PI)).powi(geom.half_dim() as i32) * multiplicity as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub direction: usize,
    pub steps: i64,
    pub xi: Vec<f64>,
    /// `|xi|_x^2 = omega_x(xi, j_x xi)`.
    pub norm_sq: f64,
    /// Frobenius norm of the `r x r` kernel block `Pi_k(x + xi, x)`.
    pub value: f64,
}

/// `|Pi_k(x + xi, x)|` for the spectral projector onto eigenvalues in
/// `window`, sampled along lattice rays `t * direction` with Euclidean
/// `|xi| <= radius`.
pub fn projector_kernel_slice(
    es: &EigenSystem,
    geom: &GeometryField,
    window: Interval,
    site: usize,
    directions: &[Vec<i64>],
    radius: f64,
) -> Result<Vec<KernelSample>, AnalysisError> {
    if es.vectors.len() != es.eigenvalues.len() {
        return Err(AnalysisError::MissingEigenvectors);
    }
    let frame = geom.frame_at(site)?;
    let grid = geom.grid;
    let r = geom.rank;
    let a = grid.spacing();
    let selected: Vec<usize> = (0..es.len()).filter(|&i| window.contains(es.eigenvalues[i])).collect();
    let mut out = Vec::new();
    for (di, dir) in directions.iter().enumerate() {
        let len = dir.iter().map(|&d| (d as f64 * a).powi(2)).sum::<f64>().sqrt();
        let steps = if len > 0.0 { (radius / len).floor() as i64 } else { 0 };
        for t in 0..=steps {
            let mut target = site;
            for (axis, &d) in dir.iter().enumerate() {
                target = grid.shift(target, axis, d * t);
            }
            let xi: Vec<f64> = dir.iter().map(|&d| (d * t) as f64 * a).collect();
            let mut block = vec![Complex64::new(0.0, 0.0); r * r];
            for &i in &selected {
                let v = &es.vectors[i];
                for l in 0..r {
                    for m in 0..r {
                        block[l * r + m] += v[target * r + l] * v[site * r + m].conj();
                    }
                }
            }
            out.push(KernelSample {
                direction: di,
                steps: t,
                norm_sq: frame.norm_sq(&xi),
                xi,
                value: block.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
            });
        }
    }
    Ok(out)
}

pub const MIN_FIT_RADII: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    /// Decay coefficient `c` in `|Pi_k| ~ exp(-c k |xi|_x^2)`.
    pub c: f64,
    pub peak: f64,
    pub radii: usize,
    /// RMS residual of `ln |Pi_k|`.
    pub residual: f64,
}

/// Fits `ln |Pi| = ln peak - c k |xi|_x^2` over samples within two magnetic
/// lengths (`k |xi|_x^2 <= 4`).
pub fn gaussian_profile_fit(samples: &[KernelSample], k: u32) -> Result<GaussianFit, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::NoGaussianRegime("k = 0 has no magnetic length".into()));
    }
    let kf = k as f64;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| kf * s.norm_sq <= 4.0 + 1e-12 && s.value > 0.0)
        .map(|s| (kf * s.norm_sq, s.value.ln()))
        .collect();
    let mut radii: Vec<f64> = pts.iter().map(|p| p.0).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if radii.len() < MIN_FIT_RADII {
        return Err(AnalysisError::InsufficientSamples {
            needed: MIN_FIT_RADII,
            got: radii.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    let c = -slope;
    if c <= 0.0 || residual > 0.5 {
        return Err(AnalysisError::NoGaussianRegime(format!(
            "decay {c:.4}, log residual {residual:.3}"
        )));
    }
    Ok(GaussianFit {
        c,
        peak: intercept.exp(),
        radii: radii.len(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCalculus {
    pub site: usize,
    /// `(2 pi / k)^n sum_i g(lambda_i) |Psi_i(y)|^2`.
    pub lattice: f64,
    /// `tr g(box_y)` over model eigenvalues `<= support`.
    pub model: f64,
    pub relative_deviation: f64,
}

/// Diagonal of `g(k^{-1} H)` at a site against `tr g(box_y)`, for `g`
/// supported in `(-inf, support]`.
pub fn functional_calculus_diag(
    es: &EigenSystem,
    geom: &GeometryField,
    g: &dyn Fn(f64) -> f64,
    support: f64,
    site: usize,
) -> Result<FunctionalCalculus, AnalysisError> {
    if support > es.cutoff {
        return Err(AnalysisError::SupportExceedsCertifiedRange {
            support,
            cutoff: es.cutoff,
        });
    }
    if es.vectors.len() != es.eigenvalues.len() {
        return Err(AnalysisError::MissingEigenvectors);
    }
    let scale = (2.0 * PI / es.k.max(1) as f64).powi(geom.half_dim() as i32);
    let lattice = scale
        * es
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &e)| e <= support)
            .map(|(i, &e)| g(e) * site_density(es, i, site, geom.rank))
            .sum::<f64>();
    let frame = geom.frame_at(site)?;
    let op = box_operator(&frame, required_cap(&frame, support));
    let model: f64 = op.eigenvalues.iter().filter(|&&v| v <= support).map(|&v| g(v)).sum();
    let relative_deviation = if model == 0.0 {
        lattice.abs()
    } else {
        (lattice - model).abs() / model.abs()
    };
    Ok(FunctionalCalculus {
        site,
        lattice,
        model,
        relative_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GardingCheck {
    pub window: Interval,
    /// `min_y` of the smallest model eigenvalue in the window.
    pub lower: f64,
    /// `max_y` of the largest model eigenvalue in the window.
    pub upper: f64,
    pub margin: f64,
    /// Largest distance of a computed eigenvalue in the window outside
    /// `[lower, upper]`.
    pub excursion: f64,
    pub outside: Vec<f64>,
}

/// Checks that eigenvalues in `window` lie in `[lower - margin, upper + margin]`.
pub fn garding_bounds(
    eigenvalues: &[f64],
    geom: &GeometryField,
    window: Interval,
    margin: f64,
) -> Result<GardingCheck, AnalysisError> {
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for s in 0..geom.num_sites() {
        let frame = geom.frame_at(s)?;
        let op = box_operator(&frame, required_cap(&frame, window.hi));
        for &v in op.eigenvalues.iter().filter(|&&v| window.contains(v)) {
            lower = lower.min(v);
            upper = upper.max(v);
        }
    }
    let mut excursion: f64 = 0.0;
    let mut outside = Vec::new();
    for &e in eigenvalues.iter().filter(|&&e| window.contains(e)) {
        let d = if e < lower {
            lower - e
        } else if e > upper {
            e - upper
        } else {
            0.0
        };
        excursion = excursion.max(d);
        if d > margin {
            outside.push(e);
        }
    }
    Ok(GardingCheck {
        window,
        lower,
        upper,
        margin,
        excursion,
        outside,
    })
}

/// `||(k^{-1} H - lambda) Phi_k(f)|| / ||Phi_k(f)||` for the peaked section at
/// `site`.
pub fn peaked_residual(
    h: &SparseHermitian,
    gauge: &GaugeLattice,
    geom: &GeometryField,
    site: usize,
    f: &FibrePolynomial,
    lambda: f64,
    radius: f64,
) -> Result<f64, AnalysisError> {
    let sec = peaked_section(gauge, geom, site, f, radius)?;
    let hs = matvec(h, &sec)?;
    let k = gauge.k.max(1) as f64;
    let mut res = sec.clone();
    for (r, (hv, v)) in res.values.iter_mut().zip(hs.values.iter().zip(&sec.values)) {
        *r = hv / k - v * lambda;
    }
    Ok(res.norm() / sec.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(v: &[f64]) -> IntervalUnion {
        IntervalUnion::from_intervals(v.iter().map(|&x| Interval::new(x, x)).collect())
    }

    #[test]
    fn cluster_examples() {
        let sigma = points(&[0.5, 1.5]);
        let rep = detect_clusters(&[0.49, 0.51, 1.48], 1, &sigma, 2.0, 0.1).unwrap();
        assert_eq!(rep.clusters.iter().map(|c| c.count).collect::<Vec<_>>(), vec![2, 1]);
        assert!(rep.orphans.is_empty());
        assert_eq!(rep.total(), 3);
        let rep = detect_clusters(&[1.0], 1, &sigma, 2.0, 0.1).unwrap();
        assert_eq!(rep.orphans, vec![1.0]);
        assert!(matches!(
            detect_clusters(&[1.0], 1, &sigma, 1.5, 0.1),
            Err(AnalysisError::CutoffInsideSigma { .. })
        ));
    }

    #[test]
    fn coverage_measures_the_converse_direction() {
        let sigma = IntervalUnion::from_intervals(vec![Interval::new(1.0, 2.0)]);
        assert_eq!(max_distance(&[1.2, 1.4], &sigma, 3.0), 0.0);
        assert!((envelope_coverage(&[1.2, 1.4], &sigma, 3.0, 11) - 0.6).abs() < 1e-12);
        // Worst point sits midway between 0.9 and 1.5, up to the sampling step.
        assert!((hausdorff_distance(&[0.9, 1.5, 2.0], &sigma, 3.0) - 0.3).abs() < 3e-3);
        assert!(envelope_coverage(&[], &sigma, 3.0, 11).is_infinite());
    }

    #[test]
    fn rr_table() {
        let sigma = points(&[0.5, 1.5]);
        let rep = detect_clusters(&[0.5, 0.5, 1.5], 2, &sigma, 2.0, 0.1).unwrap();
        let checks = counting_vs_rr(&rep, &[Some(2), Some(2)]);
        assert!(checks[0].pass);
        assert!(!checks[1].pass);
        assert_eq!(count_in(&[0.5, 0.5, 1.5], Interval::new(0.8, 1.2)), 0);
    }

    #[test]
    fn scaling_fits() {
        let ks = [4, 6, 8, 12];
        let v: Vec<f64> = ks.iter().map(|&k| 3.0 / k as f64).collect();
        let fit = fit_power_law(&ks, &v, 4).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && fit.residual < 1e-12);
        let flat = fit_power_law(&ks, &[0.2; 4], 4).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(flat.slope > -0.7);
        assert!(matches!(
            fit_power_law(&ks[..3], &v[..3], 4),
            Err(AnalysisError::InsufficientKGrid { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn tolerance_is_capped_by_gaps() {
        let t = cluster_tolerance(1.0 / 48.0, 12, 2.0 * PI, 2.0 * PI);
        assert!(t <= 0.45 * 2.0 * PI && t > 0.0);
        let coarse = cluster_tolerance(0.5, 12, 2.0 * PI, 1.0);
        assert!((coarse - 0.45).abs() < 1e-15);
    }

    fn gaussian_samples(c: f64, k: u32) -> Vec<KernelSample> {
        (0..12)
            .map(|i| {
                let r2 = 0.04 * i as f64;
                KernelSample {
                    direction: 0,
                    steps: i,
                    xi: vec![r2.sqrt(), 0.0],
                    norm_sq: r2,
                    value: 1.7 * (-c * k as f64 * r2).exp(),
                }
            })
            .collect()
    }

    #[test]
    fn gaussian_fit_recovers_exact_profile() {
        let fit = gaussian_profile_fit(&gaussian_samples(0.25, 12), 12).unwrap();
        assert!((fit.c - 0.25).abs() < 1e-12);
        assert!((fit.peak - 1.7).abs() < 1e-12);
        assert!(matches!(
            gaussian_profile_fit(&gaussian_samples(0.25, 12), 0),
            Err(AnalysisError::NoGaussianRegime(_))
        ));
        assert!(matches!(
            gaussian_profile_fit(&gaussian_samples(0.25, 12)[..3], 12),
            Err(AnalysisError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn garding_flags_outliers() {
        let g = crate::geometry::build_geometry(&crate::geometry::TorusConfig::modulated_field(8, 1, 0.15)).unwrap();
        let check = garding_bounds(&[2.8, 3.2, 4.5], &g, Interval::new(2.0, 5.0), 0.05).unwrap();
        assert!(check.lower >= 0.85 * PI - 1e-9 && check.upper <= 1.15 * PI + 1e-9);
        assert_eq!(check.outside, vec![4.5]);
        let flat = crate::geometry::build_geometry(&crate::geometry::TorusConfig::constant_field(4, 1)).unwrap();
        let check = garding_bounds(&[3.1, 3.2], &flat, Interval::new(2.0, 5.0), 0.1).unwrap();
        assert!((check.lower - PI).abs() < 1e-12 && (check.upper - PI).abs() < 1e-12);
        assert!(check.outside.is_empty());
        assert!((check.excursion - (3.2 - PI)).abs() < 1e-12);
    }

    #[test]
    fn weyl_guards() {
        let g = crate::geometry::build_geometry(&crate::geometry::TorusConfig::constant_field(4, 1)).unwrap();
        let sigma = points(&[PI, 3.0 * PI]);
        let below = global_weyl(&[], 4, &g, &sigma, 1.0).unwrap();
        assert!(below.degenerate && below.ratio.is_nan());
        let w = global_weyl(&[3.0, 3.1, 3.2, 3.3], 4, &g, &sigma, 2.0 * PI).unwrap();
        assert!((w.ratio - 1.0).abs() < 1e-12);
        assert!(matches!(
            global_weyl(&[], 4, &g, &sigma, PI),
            Err(AnalysisError::LambdaOnSigma { .. })
        ));
    }
}
