//! Weakly-supervised region selection.
//!
//! Each positive bag (an image, say) is represented by a convex combination
//! `Σ_k s_ik φ(h_ik)` of its instances (regions); every instance of a negative
//! bag must score negative on its own, so negative bags are expanded into
//! singleton bags. Training alternates SVM dual solves on the bag kernel
//! `K_ij = s_iᵀ K̃(i, j) s_j` with per-bag reduced-gradient steps on the
//! probability simplex of each `s_i`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};
use crate::feature_select::{selected_count, IterationRecord, StopReason};
use crate::kernels::{self, check_dim, BlockGram, Histogram, KernelKind};
use crate::qp::{self, DualSolution, SolverOptions};
use crate::simplex::{self, LineSearchOptions};

const FORMAT: &str = "kselect.region-select.v1";

/// A labelled set of instance histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub bag_id: String,
    /// `+1` or `-1`.
    pub label: f64,
    pub instances: Vec<Histogram>,
}

impl Bag {
    pub fn new(bag_id: impl Into<String>, label: f64, instances: Vec<Histogram>) -> Result<Self> {
        let bag_id = bag_id.into();
        if label != 1.0 && label != -1.0 {
            return Err(Error::Input(format!("bag '{bag_id}': label must be +1 or -1")));
        }
        let Some(first) = instances.first() else {
            return Err(Error::Input(format!("bag '{bag_id}' has no instances")));
        };
        let d = first.dim();
        for h in &instances {
            check_dim(d, h.dim())?;
        }
        Ok(Bag {
            bag_id,
            label,
            instances,
        })
    }

    pub fn dim(&self) -> usize {
        self.instances[0].dim()
    }

    pub fn is_positive(&self) -> bool {
        self.label > 0.0
    }
}

/// Where an effective training bag came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub bag_id: String,
    /// Index of the original bag in the training list.
    pub bag: usize,
    /// Instance index for singletons split off a negative bag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedBags {
    pub bags: Vec<Vec<Histogram>>,
    pub labels: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// Positive bags pass through; each instance of a negative bag becomes its own
/// negative singleton bag. Original order is preserved.
pub fn expand_negative_bags(bags: &[Bag]) -> ExpandedBags {
    let mut out = ExpandedBags {
        bags: Vec::new(),
        labels: Vec::new(),
        provenance: Vec::new(),
    };
    for (b, bag) in bags.iter().enumerate() {
        if bag.is_positive() {
            out.bags.push(bag.instances.clone());
            out.labels.push(bag.label);
            out.provenance.push(Provenance {
                bag_id: bag.bag_id.clone(),
                bag: b,
                instance: None,
            });
        } else {
            for (k, h) in bag.instances.iter().enumerate() {
                out.bags.push(vec![h.clone()]);
                out.labels.push(bag.label);
                out.provenance.push(Provenance {
                    bag_id: bag.bag_id.clone(),
                    bag: b,
                    instance: Some(k),
                });
            }
        }
    }
    out
}

/// `∂J/∂s_ik = −Σ_j α_i α_j y_i y_j Σ_l s_jl K(h_ik, h_jl)`.
///
/// The bag kernel is quadratic in `s_i` (bag `i` enters both row and column
/// `i`), so the envelope derivative carries a factor of one, not one half.
pub fn grad_j_s(alpha: &[f64], y: &[f64], s: &[Vec<f64>], block: &BlockGram) -> Result<Vec<Vec<f64>>> {
    let n = block.n_bags();
    check_dim(n, alpha.len())?;
    check_dim(n, y.len())?;
    check_dim(n, s.len())?;
    let offsets = block.offsets();
    let kt = block.instance_gram();
    // Expansion coefficient of each instance in w: α_j y_j s_jl.
    let mut coef: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        check_dim(block.bag_size(j), s[j].len())?;
        if alpha[j] != 0.0 {
            for (l, &sjl) in s[j].iter().enumerate() {
                if sjl != 0.0 {
                    coef.push((offsets[j] + l, alpha[j] * y[j] * sjl));
                }
            }
        }
    }
    Ok((0..n)
        .map(|i| {
            let m = block.bag_size(i);
            if alpha[i] == 0.0 {
                return vec![0.0; m];
            }
            let scale = -alpha[i] * y[i];
            (0..m)
                .map(|k| {
                    let t = offsets[i] + k;
                    scale * coef.iter().map(|&(u, c)| c * kt[[t, u]]).sum::<f64>()
                })
                .collect()
        })
        .collect())
}

/// Descent direction for one bag's weights on the probability simplex.
pub fn bag_descent_direction(grad: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    check_dim(s.len(), grad.len())?;
    if s.len() == 1 {
        return Ok(vec![0.0]);
    }
    let ones = vec![1.0; s.len()];
    Ok(simplex::reduced_gradient_direction(grad, s, &ones)?.r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSelectOptions {
    /// Stop once the largest weight change `max_i ‖γ_i r_i‖∞` falls below this.
    pub step_tol: f64,
    pub max_outer: usize,
    pub solver: SolverOptions,
    #[serde(skip)]
    pub line_search: LineSearchOptions,
}

impl Default for RegionSelectOptions {
    fn default() -> Self {
        RegionSelectOptions {
            step_tol: 1e-5,
            max_outer: 200,
            solver: SolverOptions::training(),
            line_search: LineSearchOptions::default(),
        }
    }
}

/// One training bag after negative expansion, with its learned state.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBag {
    pub source: Provenance,
    pub label: f64,
    pub instances: Vec<Histogram>,
    pub s: Vec<f64>,
    pub alpha: f64,
}

/// Learned instance weights of one positive training bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagWeights {
    pub bag_id: String,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSelectModel {
    pub kind: KernelKind,
    pub c: f64,
    pub bias: f64,
    pub bags: Vec<EffectiveBag>,
    pub weights: Vec<BagWeights>,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
}

fn selected_instances(s: &[Vec<f64>], y: &[f64]) -> usize {
    s.iter()
        .zip(y)
        .filter(|(_, l)| **l > 0.0)
        .map(|(si, _)| selected_count(si))
        .sum()
}

pub fn train_region_selection(
    bags: &[Bag],
    kind: KernelKind,
    c: f64,
    opts: &RegionSelectOptions,
) -> Result<RegionSelectModel> {
    train_region_selection_with(bags, kind, c, opts, |_, _| {})
}

/// Like [`train_region_selection`], calling `observer(s, record)` at every
/// iterate with the weights of every effective bag.
pub fn train_region_selection_with<O>(
    bags: &[Bag],
    kind: KernelKind,
    c: f64,
    opts: &RegionSelectOptions,
    mut observer: O,
) -> Result<RegionSelectModel>
where
    O: FnMut(&[Vec<f64>], &IterationRecord),
{
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Input(format!("C must be positive (got {c})")));
    }
    let Some(first) = bags.first() else {
        return Err(Error::Input("no bags given".into()));
    };
    let d = first.dim();
    let mut seen = std::collections::HashSet::new();
    for bag in bags {
        check_dim(d, bag.dim())?;
        for h in &bag.instances {
            check_dim(d, h.dim())?;
        }
        if !seen.insert(bag.bag_id.as_str()) {
            return Err(Error::Input(format!("duplicate bag id '{}'", bag.bag_id)));
        }
    }
    let expanded = expand_negative_bags(bags);
    let y = &expanded.labels;
    qp::validate_labels(y)?;
    let block = kernels::block_gram(kind, &expanded.bags)?;
    let n = y.len();

    let mut s: Vec<Vec<f64>> = expanded
        .bags
        .iter()
        .map(|b| vec![1.0 / b.len() as f64; b.len()])
        .collect();
    let mut k = kernels::bag_gram(&block, &s)?;

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
    let mut sol = solve(&k, None, 0)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        objective: sol.objective,
        step_norm: 0.0,
        active: selected_instances(&s, y),
    }];
    observer(&s, &history[0]);

    // u[j] = K̃(i, j) s_j for the bag currently being moved.
    let mut u = vec![Vec::new(); n];
    let mut k_probe = Array2::<f64>::zeros((n, n));
    let mut probe_s = Vec::new();
    let mut stop = StopReason::MaxOuter;
    for iteration in 1..=opts.max_outer {
        let grads = grad_j_s(&sol.alpha, y, &s, &block)?;
        let mut moved = false;
        let mut any_direction = false;
        let mut step_norm: f64 = 0.0;
        for i in 0..n {
            if y[i] < 0.0 || s[i].len() < 2 {
                continue;
            }
            let r = bag_descent_direction(&grads[i], &s[i])?;
            if r.iter().all(|v| *v == 0.0) {
                continue;
            }
            any_direction = true;
            let bound = simplex::max_step(&s[i], &r);
            let gamma_max = bound.map_or(f64::INFINITY, |(g, _)| g);
            for (j, uj) in u.iter_mut().enumerate() {
                *uj = block.block(i, j).dot(&ndarray::ArrayView1::from(&s[j][..])).to_vec();
            }
            let kii = block.block(i, i).to_owned();

            let mut best: Option<(f64, DualSolution)> = None;
            let outcome = simplex::line_search(
                |gamma| {
                    probe_s.clear();
                    probe_s.extend(s[i].iter().zip(&r).map(|(a, b)| (a + gamma * b).max(0.0)));
                    k_probe.assign(&k);
                    set_bag_row(&mut k_probe, i, &probe_s, &u, &kii);
                    let probe = solve(&k_probe, Some(&sol.alpha), iteration)?;
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
            if outcome.step == 0.0 {
                continue;
            }
            let (gamma, next) = best.expect("accepted step has a stored solution");
            let ones = vec![1.0; r.len()];
            let blocking = if outcome.at_bound { bound.map(|(_, b)| b) } else { None };
            simplex::apply_step(&mut s[i], &r, &ones, gamma, blocking);
            step_norm = step_norm.max(r.iter().map(|v| (gamma * v).abs()).fold(0.0, f64::max));
            set_bag_row(&mut k, i, &s[i], &u, &kii);
            sol = next;
            moved = true;
        }

        let record = IterationRecord {
            iteration,
            objective: sol.objective,
            step_norm,
            active: selected_instances(&s, y),
        };
        if !moved {
            stop = if any_direction {
                StopReason::NoDescent
            } else {
                StopReason::Stationary
            };
            break;
        }
        observer(&s, &record);
        history.push(record);
        if step_norm < opts.step_tol {
            stop = StopReason::StepTolerance;
            break;
        }
    }

    let bias = qp::compute_bias(&sol.alpha, &k, y, c)?.value;
    let weights = expanded
        .provenance
        .iter()
        .zip(&s)
        .filter(|(p, _)| p.instance.is_none())
        .map(|(p, si)| BagWeights {
            bag_id: p.bag_id.clone(),
            s: si.clone(),
        })
        .collect();
    let effective = expanded
        .bags
        .into_iter()
        .zip(expanded.provenance)
        .zip(s)
        .zip(sol.alpha.iter().zip(y))
        .map(|(((instances, source), s), (&alpha, &label))| EffectiveBag {
            source,
            label,
            instances,
            s,
            alpha,
        })
        .collect();
    Ok(RegionSelectModel {
        kind,
        c,
        bias,
        bags: effective,
        weights,
        history,
        stop,
    })
}

/// Rewrites row and column `i` of the bag kernel for weights `si`, given
/// `u[j] = K̃(i, j) s_j` and the diagonal block `K̃(i, i)`.
fn set_bag_row(k: &mut Array2<f64>, i: usize, si: &[f64], u: &[Vec<f64>], kii: &Array2<f64>) {
    for (j, uj) in u.iter().enumerate() {
        let v = if j == i {
            let mut q = 0.0;
            for (a, &sa) in si.iter().enumerate() {
                for (b, &sb) in si.iter().enumerate() {
                    q += sa * sb * kii[[a, b]];
                }
            }
            q
        } else {
            si.iter().zip(uj).map(|(a, b)| a * b).sum()
        };
        k[[i, j]] = v;
        k[[j, i]] = v;
    }
}

/// Decision value of a single instance: `Σ_j α_j y_j Σ_l s_jl K(h, h_jl) + b`.
pub fn score_instance(model: &RegionSelectModel, h: &[f64]) -> Result<f64> {
    if let Some(d) = model.dim() {
        check_dim(d, h.len())?;
    }
    if h.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("histogram entries must be non-negative".into()));
    }
    let mut score = model.bias;
    for bag in &model.bags {
        if bag.alpha != 0.0 {
            let k: f64 = bag
                .instances
                .iter()
                .zip(&bag.s)
                .filter(|(_, w)| **w != 0.0)
                .map(|(x, w)| w * model.kind.full(h, x))
                .sum();
            score += bag.alpha * bag.label * k;
        }
    }
    Ok(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BagScoreMode {
    /// Learned instance weights; only for positive training bags.
    Weighted,
    Mean,
    Max,
}

impl std::str::FromStr for BagScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(BagScoreMode::Weighted),
            "mean" => Ok(BagScoreMode::Mean),
            "max" => Ok(BagScoreMode::Max),
            other => Err(Error::Input(format!("unknown bag score mode '{other}'"))),
        }
    }
}

pub fn score_bag(model: &RegionSelectModel, bag: &Bag, mode: BagScoreMode) -> Result<f64> {
    let scores = bag
        .instances
        .iter()
        .map(|h| score_instance(model, h))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        BagScoreMode::Mean => Ok(scores.iter().sum::<f64>() / scores.len() as f64),
        BagScoreMode::Max => Ok(scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        BagScoreMode::Weighted => {
            let w = model.bag_weights(&bag.bag_id).ok_or_else(|| {
                Error::Input(format!(
                    "no learned weights for bag '{}'; use mean or max scoring",
                    bag.bag_id
                ))
            })?;
            check_dim(w.len(), scores.len())?;
            Ok(w.iter().zip(&scores).map(|(a, b)| a * b).sum())
        }
    }
}

impl RegionSelectModel {
    pub fn dim(&self) -> Option<usize> {
        self.bags
            .first()
            .and_then(|b| b.instances.first())
            .map(|h| h.dim())
    }

    pub fn objective(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.bags.iter().map(|b| b.alpha).collect()
    }

    /// Learned `s` of a positive training bag.
    pub fn bag_weights(&self, bag_id: &str) -> Option<&[f64]> {
        self.weights
            .iter()
            .find(|w| w.bag_id == bag_id)
            .map(|w| w.s.as_slice())
    }

    pub fn score_instance(&self, h: &[f64]) -> Result<f64> {
        score_instance(self, h)
    }

    pub fn score_bag(&self, bag: &Bag, mode: BagScoreMode) -> Result<f64> {
        score_bag(self, bag, mode)
    }

    pub fn to_file(&self) -> RegionSelectFile {
        RegionSelectFile {
            format: FORMAT.to_string(),
            kernel: self.kind,
            c: self.c,
            bias: self.bias,
            weights: self.weights.clone(),
            support: self
                .bags
                .iter()
                .filter(|b| b.alpha != 0.0)
                .map(|b| SupportRecord {
                    source: b.source.clone(),
                    label: b.label,
                    alpha: b.alpha,
                    s: b.s.clone(),
                    instances: b.instances.iter().map(|h| h.to_vec()).collect(),
                })
                .collect(),
            metadata: RegionMetadata {
                n_effective: self.bags.len(),
                dim: self.dim().unwrap_or(0),
                iterations: self.history.len().saturating_sub(1),
                objective: self.objective(),
                selected: self.history.last().map_or(0, |r| r.active),
                stop: self.stop,
            },
        }
    }

    pub fn from_file(file: RegionSelectFile) -> Result<Self> {
        if file.format != FORMAT {
            return Err(Error::Model(format!(
                "unsupported model format '{}' (expected '{FORMAT}')",
                file.format
            )));
        }
        let bags = file
            .support
            .into_iter()
            .map(|rec| {
                check_dim(rec.instances.len(), rec.s.len())?;
                let instances = rec
                    .instances
                    .into_iter()
                    .map(|x| {
                        check_dim(file.metadata.dim, x.len())?;
                        Histogram::new(x)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(EffectiveBag {
                    source: rec.source,
                    label: rec.label,
                    instances,
                    s: rec.s,
                    alpha: rec.alpha,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionSelectModel {
            kind: file.kernel,
            c: file.c,
            bias: file.bias,
            bags,
            weights: file.weights,
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

/// On-disk form of a region-selection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSelectFile {
    pub format: String,
    pub kernel: KernelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub bias: f64,
    /// Learned weights of every positive training bag.
    pub weights: Vec<BagWeights>,
    /// Effective bags with non-zero α.
    pub support: Vec<SupportRecord>,
    pub metadata: RegionMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub source: Provenance,
    pub label: f64,
    pub alpha: f64,
    pub s: Vec<f64>,
    pub instances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMetadata {
    pub n_effective: usize,
    pub dim: usize,
    pub iterations: usize,
    pub objective: f64,
    pub selected: usize,
    pub stop: StopReason,
}
