use std::f64::consts::PI;

use magspec::acceptance::two_band;
use magspec::chern_rr::{fhs_chern, fhs_chern_frames, riemann_roch};
use magspec::eigensolver::{dense_eig, lanczos_lowest, LanczosOptions};
use magspec::geometry::{build_geometry, GeometryField, TorusConfig};
use magspec::intervals::Interval;
use magspec::lattice::{assemble_laplacian, build_gauge, GaugeLattice};
use magspec::model_spectrum::{cluster_bundle, sigma_envelope};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Lowest eigenvector of the twisted operator, normalised in the plain
/// Euclidean norm (the weights are constant for a constant field).
fn lowest_state(gauge: &GaugeLattice, geom: &GeometryField, twist: [f64; 2]) -> DMatrix<Complex64> {
    let h = assemble_laplacian(&gauge.twisted(&twist), geom, None).unwrap();
    let es = dense_eig(&h, gauge.k, h.dim).unwrap();
    let v = &es.vectors[0];
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    DMatrix::from_iterator(v.len(), 1, v.iter().map(|c| c / norm))
}

fn projector(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    v * v.adjoint()
}

#[test]
fn lowest_landau_band_over_twists_has_unit_chern_number() {
    let geom = build_geometry(&TorusConfig::constant_field(10, 1)).unwrap();
    let gauge = build_gauge(&geom, 1).unwrap();
    let l = 8;
    let frames: Vec<DMatrix<Complex64>> = (0..l * l)
        .map(|s| {
            let (i, j) = (s % l, s / l);
            lowest_state(&gauge, &geom, [2.0 * PI * i as f64 / l as f64, 2.0 * PI * j as f64 / l as f64])
        })
        .collect();
    let fhs = fhs_chern_frames(&frames, l, l).unwrap();

    // Berry-curvature quadrature over the twist torus, with the projector
    // differentiated by central differences.
    let m = 6;
    let h = 2.0 * PI / m as f64;
    let e = 1e-4;
    let p = |a: f64, b: f64| projector(&lowest_state(&gauge, &geom, [a, b]));
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..m {
        for i in 0..m {
            let (a, b) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let d1 = (p(a + e, b) - p(a - e, b)) / Complex64::new(2.0 * e, 0.0);
            let d2 = (p(a, b + e) - p(a, b - e)) / Complex64::new(2.0 * e, 0.0);
            total += (p(a, b) * (&d1 * &d2 - &d2 * &d1)).trace() * h * h;
        }
    }
    let oracle = (Complex64::new(0.0, 1.0) * total / (2.0 * PI)).re;
    assert!((oracle - oracle.round()).abs() < 0.05, "oracle {oracle}");
    assert_eq!(fhs.c1, oracle.round() as i64);
    assert_eq!(fhs.c1.abs(), 1);
}

#[test]
fn rank_two_cluster_count_includes_the_chern_correction() {
    let cfg = two_band(32);
    let geom = build_geometry(&cfg).unwrap();
    let sigma = sigma_envelope(&geom, 8.0).unwrap();
    let gaps = sigma.gaps_below(8.0);
    let window = Interval::new(sigma.components[0].lo - 1.0, gaps[0].midpoint());
    let field = cluster_bundle(&geom, window, None).unwrap();
    let c1 = fhs_chern(&field).unwrap().c1;
    assert_eq!(c1, -1);
    for k in [6u32, 8] {
        let h = assemble_laplacian(&build_gauge(&geom, k).unwrap(), &geom, None).unwrap();
        let es = lanczos_lowest(&h, k, gaps[0].hi, &LanczosOptions::default()).unwrap();
        let count = es.eigenvalues.iter().filter(|&&v| window.contains(v)).count() as i64;
        let rr = riemann_roch(k, 1, &field).unwrap();
        assert_eq!(rr, k as i64 - 1);
        assert_eq!(count, rr, "k = {k}");
    }
}
