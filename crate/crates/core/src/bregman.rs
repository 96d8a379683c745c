//! KL divergence, the entropic mirror-descent step and convexity probes.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::market::{ln, normalize_log, Market, SpendingState};

const DEGENERATE: f64 = 1e-14;
const SAMPLE_FLOOR: f64 = 1e-9;

/// KL(x‖y) = Σ x ln(x/y), 0 ln 0 = 0.
///
/// Evaluated termwise as Σ [x ln(x/y) − x + y], which agrees when the totals
/// match and keeps every term nonnegative under rounding.
pub fn kl(x: &[f64], y: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (j, (&a, &b)) in x.iter().zip(y).enumerate() {
        if a == 0.0 {
            s += b;
        } else if b <= 0.0 {
            return Err(Error::SupportMismatch { index: j });
        } else {
            let d = (b - a) / a;
            s += (a * (d - d.ln_1p())).max(0.0);
        }
    }
    Ok(s)
}

/// Σ_i KL(x_i‖y_i) over buyer rows.
pub fn kl_rows(x: &SpendingState, y: &SpendingState) -> Result<f64> {
    x.rows().iter().zip(y.rows()).map(|(a, b)| kl(a, b)).sum()
}

/// Minimizer over {b ≥ 0, Σb = budget} of ⟨grad, b − current⟩ + KL(b‖current)/step.
pub fn entropic_md_step(grad: &[f64], current: &[f64], step: f64, budget: f64) -> Vec<f64> {
    let logw: Vec<f64> = grad
        .iter()
        .zip(current)
        .map(|(&g, &c)| if c > 0.0 { c.ln() - step * g } else { f64::NEG_INFINITY })
        .collect();
    normalize_log(&logw, budget)
}

/// Exponentiated-gradient minimization of a convex objective over the scaled
/// simplex with backtracking on the step, run until the weighted first-order
/// residual drops below 1e-11.
pub fn numeric_argmin_oracle<F>(objective: F, budget: f64, start: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MAX_ITERS: usize = 200_000;
    const TARGET: f64 = 1e-11;
    let mut b = start.to_vec();
    let (_, mut g) = objective(&b);
    let mut eta = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let lambda: f64 = b.iter().zip(&g).map(|(b, g)| b * g).sum::<f64>() / budget;
        residual = b
            .iter()
            .zip(&g)
            .map(|(b, g)| b / budget * (g - lambda).abs())
            .fold(0.0, f64::max);
        if residual <= TARGET {
            return Ok(b);
        }
        loop {
            let shifted: Vec<f64> = g.iter().map(|g| g - lambda).collect();
            let cand = entropic_md_step(&shifted, &b, eta, budget);
            let (fc, gc) = objective(&cand);
            // Accept when the symmetrized relative-smoothness test at step eta holds.
            // Gradient differences avoid the cancellation in comparing values near the optimum.
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for ((c, b), (gc, g)) in cand.iter().zip(&b).zip(gc.iter().zip(&g)) {
                lhs += (gc - g) * (c - b);
                if *c > 0.0 && *b > 0.0 {
                    rhs += (c.ln() - b.ln()) * (c - b);
                }
            }
            if fc.is_finite() && lhs <= rhs / eta {
                b = cand;
                g = gc;
                eta = (eta * 1.5).min(1e12);
                break;
            }
            eta *= 0.5;
            if eta < 1e-300 {
                return Err(Error::NoConvergence { iters: 0, residual });
            }
        }
    }
    Err(Error::NoConvergence { iters: MAX_ITERS, residual })
}

/// A composite Bregman divergence over buyer rows.
pub trait BregmanKernel {
    /// Generator h(b).
    fn value(&self, b: &SpendingState) -> f64;
    fn gradient(&self, b: &SpendingState) -> Vec<Vec<f64>>;
    /// d(x, y) = h(x) − h(y) − ⟨∇h(y), x − y⟩.
    fn divergence(&self, x: &SpendingState, y: &SpendingState) -> Result<f64>;
}

/// Σ_i γ_i KL(x_i‖y_i), generated by h(b) = Σ_i γ_i Σ_j (b_ij ln b_ij − b_ij).
#[derive(Debug, Clone, PartialEq)]
pub struct KlKernel {
    pub scales: Vec<f64>,
}

impl KlKernel {
    pub fn new(scales: Vec<f64>) -> Self {
        Self { scales }
    }
}

impl BregmanKernel for KlKernel {
    fn value(&self, b: &SpendingState) -> f64 {
        b.rows()
            .iter()
            .zip(&self.scales)
            .map(|(r, g)| g * r.iter().map(|&v| if v > 0.0 { v * v.ln() - v } else { 0.0 }).sum::<f64>())
            .sum()
    }

    fn gradient(&self, b: &SpendingState) -> Vec<Vec<f64>> {
        b.rows()
            .iter()
            .zip(&self.scales)
            .map(|(r, g)| r.iter().map(|&v| g * ln(v)).collect())
            .collect()
    }

    fn divergence(&self, x: &SpendingState, y: &SpendingState) -> Result<f64> {
        let mut s = 0.0;
        for ((a, b), g) in x.rows().iter().zip(y.rows()).zip(&self.scales) {
            s += g * kl(a, b)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongConvexityEstimate {
    pub sigma_hat: f64,
    pub l_hat: f64,
    pub sample_count: usize,
}

/// Random spending: each row Dirichlet(1,…,1) over the buyer's support, scaled
/// to its budget, entries floored at 1e-9.
pub fn sample_interior<R: Rng + ?Sized>(market: &Market, rng: &mut R) -> SpendingState {
    let rows = market
        .buyers()
        .iter()
        .map(|b| {
            let raw: Vec<f64> = b
                .weights
                .iter()
                .map(|&w| if w > 0.0 { rng.sample::<f64, _>(Exp1) } else { 0.0 })
                .collect();
            let s: f64 = raw.iter().sum();
            let floored: Vec<f64> = b
                .weights
                .iter()
                .zip(&raw)
                .map(|(&w, &r)| if w > 0.0 { (r / s).max(SAMPLE_FLOOR) } else { 0.0 })
                .collect();
            let t: f64 = floored.iter().sum();
            floored.iter().map(|v| v / t * b.budget).collect()
        })
        .collect();
    SpendingState::from_rows_unchecked(rows)
}

/// Ratios (f(x) − f(y) − ⟨∇f(y), x − y⟩) / d(x, y) over random pairs.
/// Pairs closer than 1e-14 in divergence are skipped.
pub fn strong_bregman_probe<F, S, R>(
    f: F,
    kernel: &dyn BregmanKernel,
    mut sampler: S,
    samples: usize,
    rng: &mut R,
) -> Result<StrongConvexityEstimate>
where
    F: Fn(&SpendingState) -> Result<(f64, Vec<Vec<f64>>)>,
    S: FnMut(&mut R) -> SpendingState,
    R: Rng,
{
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut count = 0;
    for _ in 0..samples {
        let x = sampler(rng);
        let y = sampler(rng);
        let d = kernel.divergence(&x, &y)?;
        if d < DEGENERATE {
            log::debug!("{}", Error::DegeneratePair(d));
            continue;
        }
        let (fx, _) = f(&x)?;
        let (fy, gy) = f(&y)?;
        let lin: f64 = gy
            .iter()
            .flatten()
            .zip(x.rows().iter().flatten().zip(y.rows().iter().flatten()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        let r = (fx - fy - lin) / d;
        lo = lo.min(r);
        hi = hi.max(r);
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegeneratePair(0.0));
    }
    Ok(StrongConvexityEstimate { sigma_hat: lo, l_hat: hi, sample_count: count })
}
