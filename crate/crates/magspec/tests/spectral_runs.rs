use std::f64::consts::PI;
use std::sync::OnceLock;

use magspec::chern_rr::riemann_roch;
use magspec::eigensolver::{dense_eig, dense_eig_below, EigenSystem};
use magspec::geometry::{build_geometry, GeometryField, TorusConfig};
use magspec::intervals::Interval;
use magspec::lattice::{assemble_laplacian, build_gauge, radial_section};
use magspec::model_spectrum::{cluster_bundle, sigma_envelope};
use magspec::spectral_analysis::{
    cluster_tolerance, count_in, counting_vs_rr, detect_clusters, functional_calculus_diag, garding_bounds,
    gaussian_profile_fit, global_weyl, local_weyl, projector_kernel_slice, AnalysisError, KernelSample,
};
use magspec::symbol_calculus::model_projector_kernel;
use num_complex::Complex64;

const GRID: usize = 24;
const K: u32 = 6;

fn solve(cfg: &TorusConfig, k: u32, cutoff: f64) -> (GeometryField, EigenSystem) {
    let geom = build_geometry(cfg).unwrap();
    let h = assemble_laplacian(&build_gauge(&geom, k).unwrap(), &geom, None).unwrap();
    let es = dense_eig_below(&h, k, cutoff, h.dim).unwrap();
    (geom, es)
}

/// Constant unit-degree field, `k = 6`, eigenpairs up to `6 pi`.
fn landau() -> &'static (GeometryField, EigenSystem) {
    static RUN: OnceLock<(GeometryField, EigenSystem)> = OnceLock::new();
    RUN.get_or_init(|| solve(&TorusConfig::constant_field(GRID, 1), K, 6.0 * PI))
}

fn centre(geom: &GeometryField) -> usize {
    geom.grid.site(&[GRID / 2, GRID / 2])
}

#[test]
fn landau_levels_hold_k_states_each() {
    let (geom, es) = landau();
    let cutoff = 6.0 * PI;
    let sigma = sigma_envelope(geom, cutoff).unwrap();
    let tol = cluster_tolerance(geom.spacing(), K, geom.max_intensity().unwrap(), 2.0 * PI);
    let report = detect_clusters(&es.eigenvalues, K, &sigma, cutoff, tol).unwrap();
    let counts: Vec<usize> = report.clusters.iter().map(|c| c.count).collect();
    assert_eq!(counts, vec![6, 6, 6]);
    assert!(report.orphans.is_empty());
    assert_eq!(report.total(), es.eigenvalues.len());

    let predicted: Vec<Option<i64>> = (0..3)
        .map(|i| {
            let window = Interval::new(2.0 * PI * i as f64 + 0.5, 2.0 * PI * (i + 1) as f64);
            Some(riemann_roch(K, 1, &cluster_bundle(geom, window, None).unwrap()).unwrap())
        })
        .collect();
    assert!(counting_vs_rr(&report, &predicted).iter().all(|c| c.pass));

    let wrong = counting_vs_rr(&report, &[Some(6), Some(7), None]);
    assert_eq!(wrong.iter().map(|c| c.pass).collect::<Vec<_>>(), vec![true, false, false]);
}

#[test]
fn cutoff_on_a_level_is_rejected() {
    let (geom, es) = landau();
    let sigma = sigma_envelope(geom, 6.0 * PI).unwrap();
    assert!(matches!(
        detect_clusters(&es.eigenvalues, K, &sigma, 3.0 * PI, 0.1),
        Err(AnalysisError::CutoffInsideSigma { .. })
    ));
    assert!(matches!(
        global_weyl(&es.eigenvalues, K, geom, &sigma, PI),
        Err(AnalysisError::LambdaOnSigma { .. })
    ));
}

#[test]
fn global_weyl_ratio_is_one_in_every_gap() {
    let (geom, es) = landau();
    let sigma = sigma_envelope(geom, 6.0 * PI).unwrap();
    for (levels, lambda) in [(1usize, 2.0 * PI), (2, 4.0 * PI)] {
        let w = global_weyl(&es.eigenvalues, K, geom, &sigma, lambda).unwrap();
        assert_eq!(w.count, levels * K as usize);
        assert!((w.ratio - 1.0).abs() < 1e-9, "ratio {}", w.ratio);
        assert!(!w.degenerate);
    }
    let below = global_weyl(&es.eigenvalues, K, geom, &sigma, 0.5).unwrap();
    assert!(below.degenerate && below.ratio.is_nan());
    assert_eq!(below.count, 0);
}

#[test]
fn local_density_tracks_the_model_multiplicity() {
    let (geom, es) = landau();
    let site = centre(geom);
    let gap = local_weyl(es, geom, site, Interval::new(1.75 * PI, 2.25 * PI)).unwrap();
    assert_eq!(gap.multiplicity, 0);
    assert!(gap.value <= 1e-6 * K as f64 / (2.0 * PI));

    let level = local_weyl(es, geom, site, Interval::new(0.5 * PI, 1.5 * PI)).unwrap();
    assert_eq!(level.multiplicity, 1);
    assert!((level.normalized(K, 1) - 1.0).abs() < 0.1, "{}", level.normalized(K, 1));

    let a = local_weyl(es, geom, site, Interval::new(0.5 * PI, 2.0 * PI)).unwrap();
    let b = local_weyl(es, geom, site, Interval::new(2.0 * PI, 3.5 * PI)).unwrap();
    let ab = local_weyl(es, geom, site, Interval::new(0.5 * PI, 3.5 * PI)).unwrap();
    assert!((a.value + b.value - ab.value).abs() < 1e-12);
    assert_eq!(ab.multiplicity, 2);
}

#[test]
fn projector_trace_equals_the_count() {
    let (geom, es) = landau();
    let window = Interval::new(0.5 * PI, 3.5 * PI);
    let trace: f64 = (0..geom.num_sites())
        .map(|s| local_weyl(es, geom, s, window).unwrap().value * es.weights[s])
        .sum();
    assert!((trace - count_in(&es.eigenvalues, window) as f64).abs() < 1e-8, "trace {trace}");
}

#[test]
fn complete_eigenbasis_resolves_the_identity_at_each_site() {
    let geom = build_geometry(&TorusConfig::modulated_field(10, 1, 0.15)).unwrap();
    let h = assemble_laplacian(&build_gauge(&geom, 2).unwrap(), &geom, None).unwrap();
    let es = dense_eig(&h, 2, h.dim).unwrap();
    assert_eq!(es.len(), h.dim);
    for s in [0, 17, 55, 99] {
        let sum: f64 = es.vectors.iter().map(|v| v[s].norm_sqr()).sum();
        assert!((sum * es.weights[s] - 1.0).abs() < 1e-10, "site {s}: {sum}");
    }
    assert!(es.orthonormality_defect() < 1e-10);
}

#[test]
fn lowest_level_kernel_is_a_gaussian_of_the_magnetic_length() {
    let (geom, es) = landau();
    let site = centre(geom);
    let window = Interval::new(0.0, 2.0 * PI);
    let magnetic_length = 1.0 / (K as f64 * 2.0 * PI).sqrt();
    let dirs = vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1]];
    // The unit torus is only about six magnetic lengths across at k = 6, so
    // the periodic images are felt beyond two of them.
    let samples = projector_kernel_slice(es, geom, window, site, &dirs, 2.1 * magnetic_length).unwrap();

    let peak = samples[0].value;
    assert!((peak * 2.0 * PI / K as f64 - 1.0).abs() < 0.1, "peak {peak}");
    for s in samples.iter().filter(|s| K as f64 * s.norm_sq > 1.0) {
        let ratio = s.value / peak;
        assert!(ratio < (-0.25 * K as f64 * s.norm_sq).exp() * 1.3, "{s:?}");
    }
    let reach = samples.iter().map(|s| K as f64 * s.norm_sq).fold(0.0, f64::max);
    assert!(reach > 3.5, "reach {reach}");

    let fit = gaussian_profile_fit(&samples, K).unwrap();
    assert!((0.2..=0.3).contains(&fit.c), "c = {}", fit.c);
}

#[test]
fn model_kernel_has_decay_one_quarter() {
    let (geom, _) = landau();
    let frame = geom.frame_at(0).unwrap();
    let window = Interval::new(0.0, 2.0 * PI);
    let samples: Vec<KernelSample> = (0..10)
        .map(|t| {
            let xi = vec![0.05 * t as f64, 0.02 * t as f64];
            let value = model_projector_kernel(&frame, window, &xi, &[0.0, 0.0]).unwrap().norm();
            KernelSample {
                direction: 0,
                steps: t,
                norm_sq: frame.norm_sq(&xi),
                xi,
                value,
            }
        })
        .collect();
    let fit = gaussian_profile_fit(&samples, 1).unwrap();
    assert!((fit.c - 0.25).abs() < 1e-6, "c = {}", fit.c);
    assert!((fit.peak - 1.0 / (2.0 * PI)).abs() < 1e-6);
    assert!(fit.residual < 1e-9);
}

#[test]
fn heat_kernel_diagonal_matches_the_model() {
    let (geom, es) = landau();
    let site = centre(geom);
    let heat = functional_calculus_diag(es, geom, &|t| (-t).exp(), 4.0 * PI, site).unwrap();
    let model: f64 = [PI, 3.0 * PI].iter().map(|v| (-v).exp()).sum();
    assert!((heat.model - model).abs() < 1e-12);
    assert!(heat.relative_deviation < 0.1, "{heat:?}");

    let zero = functional_calculus_diag(es, geom, &|_| 0.0, 4.0 * PI, site).unwrap();
    assert_eq!((zero.lattice, zero.model, zero.relative_deviation), (0.0, 0.0, 0.0));

    assert!(matches!(
        functional_calculus_diag(es, geom, &|t| t, 7.0 * PI, site),
        Err(AnalysisError::SupportExceedsCertifiedRange { .. })
    ));
}

#[test]
fn varying_field_band_stays_within_the_pointwise_model_range() {
    let cfg = TorusConfig::modulated_field(GRID, 1, 0.15);
    let (geom, es) = solve(&cfg, 8, 4.0 * PI);
    let sigma = sigma_envelope(&geom, 4.0 * PI).unwrap();
    let gap = sigma.gaps_below(4.0 * PI)[0];
    let window = Interval::new(0.0, gap.midpoint());
    let margin = cluster_tolerance(geom.spacing(), 8, geom.max_intensity().unwrap(), gap.width());
    let check = garding_bounds(&es.eigenvalues, &geom, window, margin).unwrap();
    assert!((check.lower - sigma.components[0].lo).abs() < 1e-9);
    assert!((check.upper - sigma.components[0].hi).abs() < 1e-9);
    assert!(check.outside.is_empty(), "{check:?}");
    assert_eq!(count_in(&es.eigenvalues, window), 8);
}

#[test]
fn kernel_phase_follows_the_straight_segment_transport() {
    let (geom, es) = landau();
    let gauge = build_gauge(geom, K).unwrap();
    let x = centre(geom);
    let frame = geom.frame_at(x).unwrap();
    for (dx, dy) in [(3i64, 0i64), (0, 3), (3, 3), (3, -3), (5, 2), (-4, 1)] {
        let y = geom.grid.shift(geom.grid.shift(x, 0, dx), 1, dy);
        let kernel: Complex64 = es
            .eigenvalues
            .iter()
            .zip(&es.vectors)
            .filter(|(e, _)| **e < 2.0 * PI)
            .map(|(_, v)| v[y] * v[x].conj())
            .sum();
        // Along an axis the staircase is the segment itself.
        if dx == 0 || dy == 0 {
            assert!((kernel * gauge.transport_frame(x, y)).arg().abs() < 1e-10);
        }
        let phase = (kernel * radial_section(&gauge, &frame, x, y).conj()).arg();
        assert!(phase.abs() < 0.02, "({dx}, {dy}): {phase}");
    }
}
