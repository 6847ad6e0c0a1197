//! Reduced-gradient steps on a weighted simplex `{p ≥ 0, Σ a_k p_k = 1}`.
//!
//! Feature selection uses the data-driven weights `a` (bin scatter); region
//! selection uses `a ≡ 1`, the probability simplex of each positive bag.

use crate::error::{Error, Result};

/// Reduced gradient and descent direction at a feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub reduced_gradient: Vec<f64>,
    pub r: Vec<f64>,
    /// Eliminated coordinate: the largest weight among active coordinates.
    pub pivot: usize,
}

impl Direction {
    pub fn is_zero(&self) -> bool {
        self.r.iter().all(|v| *v == 0.0)
    }
}

/// Index of the largest `p_k` among coordinates with `a_k > 0`; ties go to the
/// smallest index.
pub fn pivot_index(p: &[f64], a: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for k in 0..p.len() {
        if a[k] > 0.0 && best.map_or(true, |b| p[k] > p[b]) {
            best = Some(k);
        }
    }
    best
}

/// Reduced gradient of `J` on `Σ a_k p_k = 1` and the projected descent direction.
///
/// Coordinates with `a_k = 0` are frozen: their direction entry is always zero.
/// A coordinate at zero whose reduced gradient is positive is held at zero.
/// The pivot entry compensates every other entry so that `Σ a_k r_k = 0`.
pub fn reduced_gradient_direction(grad: &[f64], p: &[f64], a: &[f64]) -> Result<Direction> {
    let d = grad.len();
    if p.len() != d {
        return Err(Error::Dimension { expected: d, got: p.len() });
    }
    if a.len() != d {
        return Err(Error::Dimension { expected: d, got: a.len() });
    }
    let mu = pivot_index(p, a)
        .ok_or_else(|| Error::Domain("no coordinate with positive constraint weight".into()))?;
    let a_mu = a[mu];
    let g_mu = grad[mu];

    let mut red = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut red_mu = 0.0;
    let mut r_mu = 0.0;
    for k in 0..d {
        if k == mu || a[k] <= 0.0 {
            continue;
        }
        let ratio = a[k] / a_mu;
        red[k] = grad[k] - ratio * g_mu;
        red_mu -= ratio * red[k];
        if !(p[k] == 0.0 && red[k] > 0.0) {
            r[k] = -red[k];
            r_mu -= ratio * r[k];
        }
    }
    red[mu] = red_mu;
    r[mu] = r_mu;
    Ok(Direction {
        reduced_gradient: red,
        r,
        pivot: mu,
    })
}

/// Largest `γ` keeping `p + γ r ≥ 0`, with the coordinate that reaches zero.
/// `None` when no entry of `r` is negative.
pub fn max_step(p: &[f64], r: &[f64]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (k, (&pk, &rk)) in p.iter().zip(r).enumerate() {
        if rk < 0.0 {
            let g = pk / -rk;
            if best.map_or(true, |(b, _)| g < b) {
                best = Some((g, k));
            }
        }
    }
    best
}

/// Moves `p` by `γ r`, snapping the blocking coordinate to exactly zero when
/// the full step is taken, clamping round-off negatives, and rescaling so
/// `Σ a_k p_k = 1` holds to machine precision.
pub fn apply_step(p: &mut [f64], r: &[f64], a: &[f64], gamma: f64, blocking: Option<usize>) {
    for (pk, rk) in p.iter_mut().zip(r) {
        *pk += gamma * rk;
        if *pk < 0.0 {
            *pk = 0.0;
        }
    }
    if let Some(k) = blocking {
        p[k] = 0.0;
    }
    let budget: f64 = p.iter().zip(a).map(|(pk, ak)| pk * ak).sum();
    if budget > 0.0 {
        for pk in p.iter_mut() {
            *pk /= budget;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    /// Golden-section iterations (one evaluation each).
    pub max_iter: usize,
    /// Initial trial step when the direction has no upper bound.
    pub initial_step: f64,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            max_iter: 20,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    /// Objective at the returned step (`j0` when the step is zero).
    pub value: f64,
    /// True when the returned step is the upper bound itself.
    pub at_bound: bool,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for `min_γ J(γ)` over `[0, gamma_max]`.
///
/// `j0` is `J(0)`. With an unbounded range (`gamma_max = ∞`) a doubling
/// bracket is grown from `initial_step` first. The upper bound is always
/// probed, so a minimizer on the boundary is returned exactly. A step is only
/// accepted if it strictly lowers `J`; otherwise `γ = 0` is returned.
pub fn line_search<F>(
    mut j_at: F,
    j0: f64,
    gamma_max: f64,
    opts: &LineSearchOptions,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut evaluations = 0;
    let mut best = (0.0, j0);
    let consider = |g: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 {
            *best = (g, v);
        }
    };

    if !(gamma_max > 0.0) {
        return Ok(LineSearchOutcome {
            step: 0.0,
            value: j0,
            at_bound: false,
            evaluations,
        });
    }

    let (mut lo, mut hi) = if gamma_max.is_finite() {
        let v = j_at(gamma_max)?;
        evaluations += 1;
        consider(gamma_max, v, &mut best);
        (0.0, gamma_max)
    } else {
        // Double until J stops decreasing; the minimizer then lies in [prev/2, t].
        let mut prev = 0.0;
        let mut prev_v = j0;
        let mut t = opts.initial_step;
        let mut lower = 0.0;
        loop {
            let v = j_at(t)?;
            evaluations += 1;
            consider(t, v, &mut best);
            if v >= prev_v || evaluations >= 60 {
                break (lower, t);
            }
            lower = prev;
            prev = t;
            prev_v = v;
            t *= 2.0;
        }
    };

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = j_at(x1)?;
    let mut f2 = j_at(x2)?;
    evaluations += 2;
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    for _ in 2..opts.max_iter {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = j_at(x1)?;
            consider(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = j_at(x2)?;
            consider(x2, f2, &mut best);
        }
        evaluations += 1;
    }

    Ok(LineSearchOutcome {
        step: best.0,
        value: best.1,
        at_bound: gamma_max.is_finite() && best.0 == gamma_max,
        evaluations,
    })
}
