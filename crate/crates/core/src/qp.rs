//! Solver for the box- and equality-constrained SVM dual
//!
//! ```text
//! max_α  Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij
//! s.t.   Σ α_i y_i = 0,   0 ≤ α_i ≤ C
//! ```
//!
//! for a fixed kernel matrix. The primal hyperplane is never formed; every
//! consumer works with the dual expansion `f(x) = Σ_j α_j y_j K(x, x_j) + b`.
//!
//! The solver is a two-variable decomposition method: each step picks the
//! maximal-violating index `i` and the partner `j` with the best second-order
//! gain, then solves the two-variable subproblem analytically.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

/// Threshold on α for reporting support indices.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the maximal KKT violation falls below this value.
    pub tol: f64,
    /// Cap on pair updates; reaching it returns the current iterate unconverged.
    pub max_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-4,
            max_updates: 100_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }

    /// Inner solves of the weight-learning loops: tolerance 1e-6, 10⁷ updates.
    pub fn training() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_updates: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective value, recomputed from `alpha`.
    pub objective: f64,
    /// Indices with `alpha > SUPPORT_THRESHOLD`.
    pub support_indices: Vec<usize>,
    pub converged: bool,
    /// Pair updates performed.
    pub updates: usize,
    /// Set when every α is zero and the bias could only be chosen from class counts.
    pub degenerate_bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bias {
    pub value: f64,
    pub degenerate: bool,
}

/// Checks that labels are ±1 and that both classes occur.
pub fn validate_labels(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Input(format!("labels must be +1 or -1 (got {v})")));
    }
    let has_pos = y.iter().any(|v| *v > 0.0);
    let has_neg = y.iter().any(|v| *v < 0.0);
    match (has_pos, has_neg) {
        (true, true) => Ok(()),
        (true, false) => Err(Error::SingleClass(1)),
        (false, _) => Err(Error::SingleClass(-1)),
    }
}

fn validate_problem(k: &Array2<f64>, y: &[f64], c: f64) -> Result<()> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: if k.nrows() != n { k.nrows() } else { k.ncols() },
        });
    }
    validate_labels(y)?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Input(format!("C must be finite and non-negative (got {c})")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (k[[i, j]], k[[j, i]]);
            if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Solves the dual from a zero start.
pub fn solve_dual(k: &Array2<f64>, y: &[f64], c: f64, opts: &SolverOptions) -> Result<DualSolution> {
    solve_dual_warm(k, y, c, opts, None)
}

/// Solves the dual, optionally starting from a previous `alpha`.
///
/// An initial point that is not feasible for this `C` is ignored.
pub fn solve_dual_warm(
    k: &Array2<f64>,
    y: &[f64],
    c: f64,
    opts: &SolverOptions,
    init: Option<&[f64]>,
) -> Result<DualSolution> {
    validate_problem(k, y, c)?;
    let n = y.len();

    let mut alpha = match init {
        Some(a0) if a0.len() == n && is_feasible(a0, y, c) => a0.to_vec(),
        _ => vec![0.0; n],
    };

    let mut updates = 0;
    let mut converged = true;
    if c > 0.0 {
        let mut grad = vec![-1.0; n];
        for (j, &aj) in alpha.iter().enumerate() {
            if aj != 0.0 {
                for t in 0..n {
                    grad[t] += y[t] * y[j] * k[[t, j]] * aj;
                }
            }
        }
        converged = false;
        while updates < opts.max_updates {
            let Some((i, j)) = select_working_set(k, y, c, &alpha, &grad, opts.tol) else {
                converged = true;
                break;
            };
            update_pair(k, y, c, &mut alpha, &mut grad, i, j);
            updates += 1;
        }
    }

    let bias = compute_bias(&alpha, k, y, c)?;
    let objective = dual_objective(&alpha, k, y)?;
    let support_indices = alpha
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > SUPPORT_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    Ok(DualSolution {
        alpha,
        bias: bias.value,
        objective,
        support_indices,
        converged,
        updates,
        degenerate_bias: bias.degenerate,
    })
}

fn is_feasible(alpha: &[f64], y: &[f64], c: f64) -> bool {
    let in_box = alpha.iter().all(|a| *a >= 0.0 && *a <= c);
    let balance: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
    in_box && balance.abs() <= 1e-10 * (1.0 + c)
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating `i`, then the second-order-best `j`. `None` once the
/// violation is below `tol`.
fn select_working_set(
    k: &Array2<f64>,
    y: &[f64],
    c: f64,
    alpha: &[f64],
    grad: &[f64],
    tol: f64,
) -> Option<(usize, usize)> {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        if in_up(y[t], alpha[t], c) {
            let v = -y[t] * grad[t];
            if v > gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let i = i_sel?;

    let mut gmin = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut j_sel = None;
    for t in 0..n {
        if !in_low(y[t], alpha[t], c) {
            continue;
        }
        let v = -y[t] * grad[t];
        gmin = gmin.min(v);
        let b = gmax - v;
        if b > 0.0 {
            let mut a = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
            if a <= 0.0 {
                a = TAU;
            }
            let gain = -(b * b) / a;
            if gain < best {
                best = gain;
                j_sel = Some(t);
            }
        }
    }
    if gmax - gmin < tol {
        return None;
    }
    j_sel.map(|j| (i, j))
}

fn update_pair(
    k: &Array2<f64>,
    y: &[f64],
    c: f64,
    alpha: &mut [f64],
    grad: &mut [f64],
    i: usize,
    j: usize,
) {
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let q_ii = k[[i, i]];
    let q_jj = k[[j, j]];
    let q_ij = y[i] * y[j] * k[[i, j]];

    if y[i] != y[j] {
        let mut quad = q_ii + q_jj + 2.0 * q_ij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let mut quad = q_ii + q_jj - 2.0 * q_ij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
    alpha[i] = alpha[i].clamp(0.0, c);
    alpha[j] = alpha[j].clamp(0.0, c);

    let d_i = alpha[i] - old_i;
    let d_j = alpha[j] - old_j;
    for t in 0..y.len() {
        grad[t] += y[t] * (y[i] * k[[t, i]] * d_i + y[j] * k[[t, j]] * d_j);
    }
}

/// `g_i = Σ_j α_j y_j K_ij`, the decision value without the bias.
pub fn decision_values(alpha: &[f64], k: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut g = vec![0.0; n];
    for (j, &aj) in alpha.iter().enumerate() {
        if aj != 0.0 {
            let w = aj * y[j];
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += w * k[[i, j]];
            }
        }
    }
    g
}

/// Bias from the KKT conditions: the mean over free support vectors, or the
/// midpoint of the interval allowed by the bounded ones.
pub fn compute_bias(alpha: &[f64], k: &Array2<f64>, y: &[f64], c: f64) -> Result<Bias> {
    let n = y.len();
    if alpha.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: alpha.len(),
        });
    }
    if alpha.iter().all(|a| *a == 0.0) {
        let balance: f64 = y.iter().sum();
        return Ok(Bias {
            value: if balance > 0.0 {
                1.0
            } else if balance < 0.0 {
                -1.0
            } else {
                0.0
            },
            degenerate: true,
        });
    }
    let g = decision_values(alpha, k, y);
    let eps = 1e-12 * c.max(f64::MIN_POSITIVE);

    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in 0..n {
        let target = y[t] - g[t];
        let a = alpha[t];
        if a > eps && a < c - eps {
            free_sum += target;
            free_count += 1;
        } else {
            let at_lower = a <= eps;
            // α = 0 needs y·f ≥ 1, α = C needs y·f ≤ 1.
            if (y[t] > 0.0) == at_lower {
                lower = lower.max(target);
            } else {
                upper = upper.min(target);
            }
        }
    }
    let value = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    };
    Ok(Bias {
        value,
        degenerate: false,
    })
}

/// `Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], k: &Array2<f64>, y: &[f64]) -> Result<f64> {
    let n = y.len();
    if alpha.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: alpha.len(),
        });
    }
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: k.nrows(),
        });
    }
    let support: Vec<usize> = (0..n).filter(|&i| alpha[i] != 0.0).collect();
    let mut quad = 0.0;
    for &i in &support {
        let wi = alpha[i] * y[i];
        for &j in &support {
            quad += wi * alpha[j] * y[j] * k[[i, j]];
        }
    }
    Ok(alpha.iter().sum::<f64>() - 0.5 * quad)
}
