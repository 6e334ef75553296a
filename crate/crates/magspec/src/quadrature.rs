//! Gauss-Hermite rules for integrals against `exp(-t^2)`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of the `n`-point rule, exact for polynomials of degree
/// `< 2n`, computed from the Jacobi matrix of the Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j {
            (j as f64 / 2.0).sqrt()
        } else if j + 1 == i {
            (i as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let (x, w) = gauss_hermite(20);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - pi_sqrt).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - pi_sqrt / 2.0).abs() < 1e-13);
        // int t^10 e^{-t^2} = 945 sqrt(pi) / 32
        assert!((m(10) - 945.0 * pi_sqrt / 32.0).abs() < 1e-10);
    }

    #[test]
    fn two_point_rule() {
        let (x, w) = gauss_hermite(2);
        let node = 0.5f64.sqrt();
        assert!((x[0] + node).abs() < 1e-15 && (x[1] - node).abs() < 1e-15);
        assert!((w[0] - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
    }
}
