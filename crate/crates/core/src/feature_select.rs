//! Normalized-margin SVM with additive kernels.
//!
//! Learns a non-negative weight per histogram bin on the data-driven simplex
//! `Σ a_k p_k = 1`, where `a_k` is the same-class scatter of bin `k` in kernel
//! space. Each outer iteration solves the SVM dual for the combined kernel
//! `Σ p_k κ`, takes the reduced gradient of the dual optimum with respect to
//! `p`, and line-searches along the projected descent direction.

use std::ops::Deref;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};
use crate::kernels::{self, check_dim, Histogram, KernelKind};
use crate::qp::{self, DualSolution, SolverOptions};
use crate::simplex::{self, Direction, LineSearchOptions};

/// Relative threshold below which a bin weight counts as unselected.
pub const SELECTION_THRESHOLD: f64 = 1e-6;

const FORMAT: &str = "kselect.feature-select.v1";

/// Same-class scatter of each bin in kernel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinScatter(pub Vec<f64>);

impl Deref for BinScatter {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl BinScatter {
    /// Number of bins with positive scatter; the others are frozen at zero weight.
    pub fn active(&self) -> usize {
        self.0.iter().filter(|a| **a > 0.0).count()
    }
}

/// `a_k = Σ_{i,j} (1 + y_i y_j)/2 · [κ(x_ik, x_ik) − 2κ(x_ik, x_jk) + κ(x_jk, x_jk)]`
/// over all ordered pairs.
pub fn compute_bin_scatter(xs: &[Histogram], y: &[f64], kind: KernelKind) -> Result<BinScatter> {
    check_dim(xs.len(), y.len())?;
    let Some(first) = xs.first() else {
        return Err(Error::Input("empty dataset".into()));
    };
    let d = first.dim();
    for x in xs {
        check_dim(d, x.dim())?;
    }
    // Within one class of size m the ordered-pair sum collapses to
    // 2m Σ_i κ(x_i, x_i) − 2 Σ_{i,j} κ(x_i, x_j).
    let mut a = vec![0.0; d];
    for class in [1.0, -1.0] {
        let members: Vec<&Histogram> = xs
            .iter()
            .zip(y)
            .filter(|(_, l)| **l == class)
            .map(|(x, _)| x)
            .collect();
        let m = members.len() as f64;
        for (k, ak) in a.iter_mut().enumerate() {
            let mut diag = 0.0;
            let mut cross = 0.0;
            for (i, xi) in members.iter().enumerate() {
                diag += kind.eval(xi[k], xi[k]);
                for xj in &members[i + 1..] {
                    cross += kind.eval(xi[k], xj[k]);
                }
            }
            let all_pairs = diag + 2.0 * cross;
            *ak += (2.0 * m * diag - 2.0 * all_pairs).max(0.0);
        }
    }
    Ok(BinScatter(a))
}

/// `p_k = 1 / Σ a` on bins with positive scatter, zero elsewhere.
pub fn init_weights(a: &BinScatter) -> Result<Vec<f64>> {
    let total: f64 = a.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoDiscriminableBins);
    }
    Ok(a.iter()
        .map(|&ak| if ak > 0.0 { 1.0 / total } else { 0.0 })
        .collect())
}

/// `∂J/∂p_k = −½ Σ_ij α_i α_j y_i y_j κ(x_ik, x_jk)`.
pub fn grad_j_p(alpha: &[f64], y: &[f64], per_bin: &[Array2<f64>]) -> Vec<f64> {
    let support: Vec<(usize, f64)> = alpha
        .iter()
        .zip(y)
        .enumerate()
        .filter(|(_, (a, _))| **a != 0.0)
        .map(|(i, (a, l))| (i, a * l))
        .collect();
    per_bin
        .iter()
        .map(|g| {
            let mut quad = 0.0;
            for &(i, wi) in &support {
                for &(j, wj) in &support {
                    quad += wi * wj * g[[i, j]];
                }
            }
            -0.5 * quad
        })
        .collect()
}

/// Reduced gradient and descent direction for bin weights.
pub fn reduced_gradient_direction(grad: &[f64], p: &[f64], a: &BinScatter) -> Result<Direction> {
    simplex::reduced_gradient_direction(grad, p, a)
}

/// Golden-section line search of `J(p + γ r)` over the feasible range of `γ`.
///
/// Returns the accepted step, or zero if no probe lowers `J`.
pub fn line_search<F>(mut j_at: F, p: &[f64], r: &[f64], opts: &LineSearchOptions) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if r.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let gamma_max = simplex::max_step(p, r).map_or(f64::INFINITY, |(g, _)| g);
    let j0 = j_at(p)?;
    let mut probe = vec![0.0; p.len()];
    let out = simplex::line_search(
        |g| {
            for ((q, pk), rk) in probe.iter_mut().zip(p).zip(r) {
                *q = (pk + g * rk).max(0.0);
            }
            j_at(&probe)
        },
        j0,
        gamma_max,
        opts,
    )?;
    Ok(out.step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectOptions {
    /// Stop once the largest budget change `max_k |a_k γ r_k|` falls below this.
    pub step_tol: f64,
    pub max_outer: usize,
    pub solver: SolverOptions,
    #[serde(skip)]
    pub line_search: LineSearchOptions,
}

impl Default for FeatureSelectOptions {
    fn default() -> Self {
        FeatureSelectOptions {
            step_tol: 1e-5,
            max_outer: 200,
            solver: SolverOptions::training(),
            line_search: LineSearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The step fell below the step tolerance.
    StepTolerance,
    /// The reduced gradient vanished on the feasible face.
    Stationary,
    /// No probed step lowered the objective.
    NoDescent,
    MaxOuter,
}

/// One entry of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Dual objective at the iterate.
    pub objective: f64,
    /// Step that produced this iterate (`0` for the starting point).
    pub step_norm: f64,
    /// Selected-feature (or selected-instance) count at the iterate.
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelectModel {
    pub kind: KernelKind,
    pub c: f64,
    pub p: Vec<f64>,
    pub a: BinScatter,
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub train_x: Vec<Histogram>,
    pub train_y: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
}

/// Number of bins with `p_k > 1e-6 · max_k p_k`.
pub fn selected_count(p: &[f64]) -> usize {
    let max = p.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    p.iter().filter(|v| **v > SELECTION_THRESHOLD * max).count()
}

/// Trains bin weights with the scatter computed from the data.
pub fn train_feature_selection(
    xs: &[Histogram],
    y: &[f64],
    kind: KernelKind,
    c: f64,
    opts: &FeatureSelectOptions,
) -> Result<FeatureSelectModel> {
    train_feature_selection_with(xs, y, kind, c, opts, |_, _| {})
}

/// Like [`train_feature_selection`], calling `observer(p, record)` at every iterate.
pub fn train_feature_selection_with<O>(
    xs: &[Histogram],
    y: &[f64],
    kind: KernelKind,
    c: f64,
    opts: &FeatureSelectOptions,
    observer: O,
) -> Result<FeatureSelectModel>
where
    O: FnMut(&[f64], &IterationRecord),
{
    check_dim(xs.len(), y.len())?;
    qp::validate_labels(y)?;
    let a = compute_bin_scatter(xs, y, kind)?;
    train_on_simplex(xs, y, kind, c, a, opts, observer)
}

/// Runs the reduced-gradient loop on `{p ≥ 0, Σ a_k p_k = 1}` for a caller-supplied
/// constraint vector. With `a ≡ 1` this is plain multiple kernel learning
/// over the per-bin kernels.
pub fn train_on_simplex<O>(
    xs: &[Histogram],
    y: &[f64],
    kind: KernelKind,
    c: f64,
    a: BinScatter,
    opts: &FeatureSelectOptions,
    mut observer: O,
) -> Result<FeatureSelectModel>
where
    O: FnMut(&[f64], &IterationRecord),
{
    check_dim(xs.len(), y.len())?;
    qp::validate_labels(y)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Input(format!("C must be positive (got {c})")));
    }
    let per_bin = kernels::per_bin_grams(kind, xs)?;
    check_dim(per_bin.len(), a.len())?;
    if a.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("bin scatter must be non-negative".into()));
    }
    let mut p = init_weights(&a)?;

    let solve = |k: &Array2<f64>, warm: Option<&[f64]>, iteration: usize| -> Result<DualSolution> {
        let sol = qp::solve_dual_warm(k, y, c, &opts.solver, warm)?;
        if sol.converged {
            Ok(sol)
        } else {
            Err(Error::NotConverged {
                iteration,
                updates: sol.updates,
            })
        }
    };

    let mut k_p = kernels::weighted_sum(&per_bin, &p);
    let mut sol = solve(&k_p, None, 0)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        objective: sol.objective,
        step_norm: 0.0,
        active: selected_count(&p),
    }];
    observer(&p, &history[0]);

    let mut stop = StopReason::MaxOuter;
    let mut k_probe = Array2::<f64>::zeros(k_p.raw_dim());
    for iteration in 1..=opts.max_outer {
        let grad = grad_j_p(&sol.alpha, y, &per_bin);
        let p_start = p.clone();
        let mut any_direction = false;
        let mut moved = false;
        // Boundary steps that lower J are taken outright, zeroing one weight
        // each, with the direction recomputed from the same gradient. The
        // first direction whose boundary does not lower J gets a line search.
        for _ in 0..=p.len() {
            let dir = reduced_gradient_direction(&grad, &p, &a)?;
            if dir.is_zero() {
                break;
            }
            any_direction = true;
            let bound = simplex::max_step(&p, &dir.r);
            let gamma_max = bound.map_or(f64::INFINITY, |(g, _)| g);
            let k_r = kernels::weighted_sum(&per_bin, &dir.r);
            let probe_at = |gamma: f64, k_probe: &mut Array2<f64>| -> Result<DualSolution> {
                k_probe.assign(&k_p);
                k_probe.scaled_add(gamma, &k_r);
                solve(k_probe, Some(&sol.alpha), iteration)
            };

            if let Some((g, blocking)) = bound {
                let probe = probe_at(g, &mut k_probe)?;
                if probe.objective < sol.objective {
                    simplex::apply_step(&mut p, &dir.r, &a, g, Some(blocking));
                    k_p = kernels::weighted_sum(&per_bin, &p);
                    sol = probe;
                    moved = true;
                    continue;
                }
            }

            let mut best: Option<(f64, DualSolution)> = None;
            let outcome = simplex::line_search(
                |gamma| {
                    let probe = probe_at(gamma, &mut k_probe)?;
                    let value = probe.objective;
                    if best.as_ref().map_or(true, |(_, b)| value < b.objective) {
                        best = Some((gamma, probe));
                    }
                    Ok(value)
                },
                sol.objective,
                gamma_max,
                &opts.line_search,
            )?;
            if outcome.step > 0.0 {
                let (gamma, next) = best.expect("accepted step has a stored solution");
                debug_assert_eq!(gamma, outcome.step);
                let blocking = if outcome.at_bound { bound.map(|(_, k)| k) } else { None };
                simplex::apply_step(&mut p, &dir.r, &a, gamma, blocking);
                k_p = kernels::weighted_sum(&per_bin, &p);
                sol = next;
                moved = true;
            }
            break;
        }
        if !moved {
            stop = if any_direction {
                StopReason::NoDescent
            } else {
                StopReason::Stationary
            };
            break;
        }

        let step_norm = p
            .iter()
            .zip(&p_start)
            .zip(a.iter())
            .map(|((new, old), ak)| (ak * (new - old)).abs())
            .fold(0.0, f64::max);
        let record = IterationRecord {
            iteration,
            objective: sol.objective,
            step_norm,
            active: selected_count(&p),
        };
        observer(&p, &record);
        history.push(record);
        if step_norm < opts.step_tol {
            stop = StopReason::StepTolerance;
            break;
        }
    }

    // Refresh the bias against the final kernel; α is already optimal for it.
    let bias = qp::compute_bias(&sol.alpha, &k_p, y, c)?.value;
    Ok(FeatureSelectModel {
        kind,
        c,
        p,
        a,
        alpha: sol.alpha,
        bias,
        train_x: xs.to_vec(),
        train_y: y.to_vec(),
        history,
        stop,
    })
}

/// `f(z) = Σ_i y_i α_i Σ_k p_k κ(z_k, x_ik) + b`.
pub fn predict_fs(model: &FeatureSelectModel, z: &[f64]) -> Result<f64> {
    check_dim(model.p.len(), z.len())?;
    if z.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("histogram entries must be non-negative".into()));
    }
    let mut score = model.bias;
    for ((x, &yi), &ai) in model.train_x.iter().zip(&model.train_y).zip(&model.alpha) {
        if ai != 0.0 {
            let k: f64 = model
                .p
                .iter()
                .zip(z.iter().zip(x.iter()))
                .filter(|(p, _)| **p != 0.0)
                .map(|(p, (zk, xk))| p * model.kind.eval(*zk, *xk))
                .sum();
            score += yi * ai * k;
        }
    }
    Ok(score)
}

impl FeatureSelectModel {
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn objective(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn selected_features(&self) -> usize {
        selected_count(&self.p)
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        predict_fs(self, z)
    }

    pub fn to_file(&self) -> FeatureSelectFile {
        let support: Vec<usize> = (0..self.alpha.len()).filter(|&i| self.alpha[i] != 0.0).collect();
        FeatureSelectFile {
            format: FORMAT.to_string(),
            kernel: self.kind,
            c: self.c,
            p: self.p.clone(),
            a: self.a.0.clone(),
            bias: self.bias,
            alpha: support.iter().map(|&i| self.alpha[i]).collect(),
            support_y: support.iter().map(|&i| self.train_y[i]).collect(),
            support_x: support.iter().map(|&i| self.train_x[i].to_vec()).collect(),
            metadata: TrainingMetadata {
                n_train: self.train_x.len(),
                dim: self.dim(),
                iterations: self.history.len().saturating_sub(1),
                objective: self.objective(),
                selected: self.selected_features(),
                stop: self.stop,
            },
        }
    }

    pub fn from_file(file: FeatureSelectFile) -> Result<Self> {
        if file.format != FORMAT {
            return Err(Error::Model(format!(
                "unsupported model format '{}' (expected '{FORMAT}')",
                file.format
            )));
        }
        let d = file.p.len();
        check_dim(d, file.a.len())?;
        check_dim(file.alpha.len(), file.support_y.len())?;
        check_dim(file.alpha.len(), file.support_x.len())?;
        let train_x = file
            .support_x
            .into_iter()
            .map(|x| {
                check_dim(d, x.len())?;
                Histogram::new(x)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSelectModel {
            kind: file.kernel,
            c: file.c,
            p: file.p,
            a: BinScatter(file.a),
            alpha: file.alpha,
            bias: file.bias,
            train_x,
            train_y: file.support_y,
            history: vec![IterationRecord {
                iteration: file.metadata.iterations,
                objective: file.metadata.objective,
                step_norm: 0.0,
                active: file.metadata.selected,
            }],
            stop: file.metadata.stop,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_file())?;
        text.push('\n');
        write_file(path.as_ref(), text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = read_file(path.as_ref())?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// On-disk form of a feature-selection model. Only support vectors are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectFile {
    pub format: String,
    pub kernel: KernelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub support_y: Vec<f64>,
    pub support_x: Vec<Vec<f64>>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_train: usize,
    pub dim: usize,
    pub iterations: usize,
    pub objective: f64,
    pub selected: usize,
    pub stop: StopReason,
}
