//! Independent oracles shared by the integration tests. Nothing here calls
//! the solver or gradient code under test.

#![allow(dead_code)]

use kselect::kernels::{self, KernelKind};
use kselect::qp::{self, SolverOptions};
use kselect::Histogram;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [KernelKind; 3] = [KernelKind::Linear, KernelKind::ChiSquare, KernelKind::Intersection];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_histogram(rng: &mut impl Rng, d: usize) -> Histogram {
    Histogram::new((0..d).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap()
}

/// Labels with both classes present.
pub fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    y
}

/// Dual objective `Σα − ½ Σ_ij α_i α_j y_i y_j K_ij`, by direct double sum.
pub fn objective(alpha: &[f64], k: &Array2<f64>, y: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let g = |lambda: f64| -> f64 { at(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    // g is non-increasing in λ.
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    while hi - lo > 1e-15 * span {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected-gradient ascent on the SVM dual with adaptive restart.
/// Returns `(α, objective)`.
pub fn pg_qp(k: &Array2<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * k[[i, j]]);
    let lip = max_eigenvalue(&q).max(1e-12);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[[i, j]] * a[j]).sum::<f64>())
            .collect()
    };
    let f = |a: &[f64]| objective(a, k, y);
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t: f64 = 1.0;
    let mut fx = f(&x);
    for _ in 0..200_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&v, y, c);
        let f_next = f(&next);
        if f_next < fx {
            if t == 1.0 {
                // A plain step from x only loses to rounding: converged.
                break;
            }
            // Restart momentum when the objective decreases.
            t = 1.0;
            z = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = next;
        fx = f_next;
        t = t_next;
        if moved < 1e-11 {
            break;
        }
    }
    (x, fx)
}

pub fn max_eigenvalue(m: &Array2<f64>) -> f64 {
    eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eigenvalue(m: &Array2<f64>) -> f64 {
    eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    SymmetricEigen::new(dm).eigenvalues.iter().copied().collect()
}

/// Bin scatter by an explicit sum over ordered same-class pairs.
pub fn brute_scatter(xs: &[Histogram], y: &[f64], kind: KernelKind) -> Vec<f64> {
    let d = xs[0].dim();
    let mut a = vec![0.0; d];
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if y[i] != y[j] {
                continue;
            }
            for (k, ak) in a.iter_mut().enumerate() {
                let kap = |u: f64, v: f64| kernels::kappa(kind, u, v).unwrap();
                *ak += kap(xs[i][k], xs[i][k]) - 2.0 * kap(xs[i][k], xs[j][k]) + kap(xs[j][k], xs[j][k]);
            }
        }
    }
    a
}

/// Bag kernel `s_iᵀ K(B_i, B_j) s_j` by a direct double sum over instances.
pub fn brute_bag_gram(kind: KernelKind, bags: &[Vec<Histogram>], s: &[Vec<f64>]) -> Array2<f64> {
    let n = bags.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let mut v = 0.0;
        for (a, ha) in bags[i].iter().enumerate() {
            for (b, hb) in bags[j].iter().enumerate() {
                v += s[i][a] * s[j][b] * kernels::combined_kernel(kind, &vec![1.0; ha.dim()], ha, hb).unwrap();
            }
        }
        v
    })
}

/// Solver options tight enough for finite-difference probes.
pub fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        max_updates: 1_000_000,
    }
}

/// Optimal dual objective for a weighted per-bin kernel.
pub fn j_of_p(per_bin: &[Array2<f64>], p: &[f64], y: &[f64], c: f64) -> f64 {
    let k = kernels::weighted_sum(per_bin, p);
    qp::solve_dual(&k, y, c, &tight()).unwrap().objective
}

/// Optimal dual objective for bag weights `s`.
pub fn j_of_s(kind: KernelKind, bags: &[Vec<Histogram>], s: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let k = brute_bag_gram(kind, bags, s);
    qp::solve_dual(&k, y, c, &tight()).unwrap().objective
}

/// Central difference of `f` along coordinate `k` of `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// `max_k |g_k − f_k| / max(max_k |f_k|, floor)`.
pub fn relative_error(g: &[f64], f: &[f64], floor: f64) -> f64 {
    let scale = f.iter().map(|v| v.abs()).fold(floor, f64::max);
    g.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}
