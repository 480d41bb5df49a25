//! Björck–Bowie orthonormalization, written against the autodiff tape so
//! the training path can backpropagate through the unrolled iterations.

use crate::error::{Error, Result};
use crate::math::{Graph, Matrix, Var};

/// Default number of first-order iterations.
pub const DEFAULT_ITERATIONS: usize = 15;
/// Power-iteration steps for the spectral-norm prescale.
pub const POWER_ITERATIONS: usize = 25;
/// Multiplier applied to the spectral-norm estimate before dividing.
pub const PRESCALE_SAFETY: f64 = 1.01;

/// Fixed, non-symmetric start vector for power iteration.
fn power_start(n: usize) -> Matrix {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i + 1) as f64).sin()).collect();
    let nv = crate::math::matrix::norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    Matrix::col_vector(&v)
}

/// Divides `w` by `safety` times a power-iteration estimate of its largest
/// singular value. The estimate is differentiated through. A matrix the
/// iteration cannot see (zero, or orthogonal to the start vector) is
/// returned unscaled.
pub fn prescale(g: &mut Graph, w: Var, steps: usize, safety: f64) -> Result<Var> {
    let inp = g.shape(w).1;
    let mut v = g.constant(power_start(inp));
    for _ in 0..steps {
        let u = g.matmul(w, v)?;
        let t = g.matmul_t(w, true, u, false)?;
        let n = g.norm(t);
        if !(g.value(n).item() > 0.0) {
            return Ok(w);
        }
        v = g.div_scalar(t, n)?;
    }
    let wv = g.matmul(w, v)?;
    let sigma = g.norm(wv);
    if !(g.value(sigma).item() > 0.0) {
        return Ok(w);
    }
    let s = g.scale(sigma, safety);
    g.div_scalar(w, s)
}

/// Unrolled iteration `A <- 3/2 A - 1/2 A AᵀA`, arranged so the Gram
/// matrix is formed on the smaller dimension.
pub fn bjorck_graph(g: &mut Graph, w: Var, iterations: usize) -> Result<Var> {
    let (rows, cols) = g.shape(w);
    let tall = rows >= cols;
    let mut a = w;
    for _ in 0..iterations {
        let y = if tall {
            let gram = g.matmul_t(a, true, a, false)?;
            g.matmul(a, gram)?
        } else {
            let gram = g.matmul_t(a, false, a, true)?;
            g.matmul(gram, a)?
        };
        a = g.lincomb(a, 1.5, y, -0.5)?;
    }
    check_bounded(g.value(a))?;
    Ok(a)
}

/// Singular values stay at most 1 once the iteration is stable, so growth
/// beyond `sqrt(min(rows, cols))` in Frobenius norm means divergence.
fn check_bounded(a: &Matrix) -> Result<()> {
    let k = a.rows().min(a.cols()) as f64;
    let f = a.frobenius_norm();
    if !a.all_finite() || f > k.sqrt() * (1.0 + 1e-6) + 1e-9 {
        return Err(Error::Numerical(format!(
            "Björck iteration diverged (Frobenius norm {f:.3e} for a rank-{k} target)"
        )));
    }
    Ok(())
}

/// Björck orthonormalization of an already prescaled matrix.
pub fn bjorck_orthonormalize(w: &Matrix, iterations: usize) -> Result<Matrix> {
    if !w.all_finite() {
        return Err(Error::Numerical("non-finite weight matrix".into()));
    }
    let mut g = Graph::new();
    let a = g.constant(w.clone());
    let out = bjorck_graph(&mut g, a, iterations)?;
    Ok(g.value(out).clone())
}

/// `‖ŴᵀŴ − I‖_F` for tall matrices, `‖ŴŴᵀ − I‖_F` for wide ones.
pub fn orthonormality_residual(w: &Matrix) -> f64 {
    let tall = w.rows() >= w.cols();
    let gram = if tall {
        crate::math::matrix::gemm(w, true, w, false)
    } else {
        crate::math::matrix::gemm(w, false, w, true)
    }
    .expect("gram shapes agree by construction");
    let n = gram.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = gram.get(i, j) - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    /// Orthonormal columns via modified Gram–Schmidt (test oracle).
    fn random_orthogonal(rng: &mut Rng, n: usize) -> Matrix {
        let mut m = Matrix::from_vec(n, n, rng.gaussian(n * n)).unwrap();
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| m.get(i, j) * m.get(i, k)).sum();
                for i in 0..n {
                    let v = m.get(i, j) - dot * m.get(i, k);
                    m.set(i, j, v);
                }
            }
            let nrm: f64 = (0..n).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt();
            for i in 0..n {
                let v = m.get(i, j) / nrm;
                m.set(i, j, v);
            }
        }
        m
    }

    fn prescaled(w: &Matrix) -> Matrix {
        let mut g = Graph::new();
        let v = g.constant(w.clone());
        let s = prescale(&mut g, v, POWER_ITERATIONS, PRESCALE_SAFETY).unwrap();
        g.value(s).clone()
    }

    #[test]
    fn orthogonal_is_a_fixed_point() {
        let mut rng = Rng::new(2);
        let q = random_orthogonal(&mut rng, 6);
        let out = bjorck_orthonormalize(&q, 15).unwrap();
        for (a, b) in q.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_iterates_follow_the_cubic_map() {
        // x <- x (3 - x^2) / 2 from 0.5
        let mut x = 0.5_f64;
        let mut expected = vec![];
        for _ in 0..15 {
            x = x * (3.0 - x * x) / 2.0;
            expected.push(x);
        }
        assert!((expected[0] - 0.6875).abs() < 1e-12);
        assert!((expected[1] - 0.8687744140625).abs() < 1e-15);
        let m = Matrix::scalar(0.5);
        for (k, e) in expected.iter().enumerate() {
            let v = bjorck_orthonormalize(&m, k + 1).unwrap().item();
            assert!((v - e).abs() < 1e-15);
        }
        assert!((expected[14] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn well_conditioned_square_converges_in_fifteen() {
        // Random singular vectors, singular values spread over [0.1, 1].
        let mut rng = Rng::new(4);
        let n = 100;
        let u = random_orthogonal(&mut rng, n);
        let v = random_orthogonal(&mut rng, n);
        let s: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.1, 1.0)).collect();
        let mut us = u.clone();
        for i in 0..n {
            for j in 0..n {
                us.set(i, j, u.get(i, j) * s[j]);
            }
        }
        let w = us.matmul(&v.transpose()).unwrap();
        let a = bjorck_orthonormalize(&prescaled(&w), 15).unwrap();
        assert!(orthonormality_residual(&a) <= 1e-6, "{}", orthonormality_residual(&a));
    }

    #[test]
    fn gaussian_square_needs_more_than_fifteen() {
        // A raw Gaussian 100x100 has condition number in the thousands;
        // 15 steps leave a visible residual, 40 converge.
        let mut rng = Rng::new(0);
        let w = Matrix::from_vec(100, 100, rng.gaussian(10_000)).unwrap();
        let p = prescaled(&w);
        let r15 = orthonormality_residual(&bjorck_orthonormalize(&p, 15).unwrap());
        let r40 = orthonormality_residual(&bjorck_orthonormalize(&p, 40).unwrap());
        assert!(r40 <= 1e-6, "{r40}");
        assert!(r15 > r40);
    }

    #[test]
    fn rectangular_orientations() {
        let mut rng = Rng::new(8);
        for &(r, c) in &[(10usize, 3usize), (3, 10)] {
            let w = Matrix::from_vec(r, c, rng.gaussian(r * c)).unwrap();
            let a = bjorck_orthonormalize(&prescaled(&w), 30).unwrap();
            assert!(orthonormality_residual(&a) <= 1e-6);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let w = Matrix::scalar(3.0);
        assert!(matches!(bjorck_orthonormalize(&w, 10), Err(Error::Numerical(_))));
    }

    #[test]
    fn gradient_through_unrolled_iterations() {
        let mut rng = Rng::new(12);
        let w0 = Matrix::from_vec(5, 3, rng.gaussian(15)).unwrap();
        let probe = Matrix::from_vec(5, 3, rng.gaussian(15)).unwrap();
        let f = |w: &Matrix, grad: bool| {
            let mut g = Graph::new();
            let wv = if grad { g.param(w.clone()) } else { g.constant(w.clone()) };
            let p = g.constant(probe.clone());
            let s = prescale(&mut g, wv, POWER_ITERATIONS, PRESCALE_SAFETY).unwrap();
            let a = bjorck_graph(&mut g, s, 15).unwrap();
            let m = g.mul(a, p).unwrap();
            let out = g.sum_all(m);
            let val = g.value(out).item();
            let gr = if grad { Some(g.backward(out).unwrap().wrt(wv)) } else { None };
            (val, gr)
        };
        let (_, grad) = f(&w0, true);
        let grad = grad.unwrap();
        let h = 1e-5;
        for k in 0..w0.len() {
            let mut wp = w0.clone();
            wp.as_mut_slice()[k] += h;
            let mut wm = w0.clone();
            wm.as_mut_slice()[k] -= h;
            let fd = (f(&wp, false).0 - f(&wm, false).0) / (2.0 * h);
            let an = grad.as_slice()[k];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
            assert!(rel <= 1e-4, "entry {k}: {an} vs {fd}");
        }
    }
}
