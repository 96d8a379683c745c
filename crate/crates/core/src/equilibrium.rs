//! Equilibrium oracle and first-order verification.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::damped_pr_step;
use crate::error::{Error, Result};
use crate::market::{Market, SpendingState, UtilityClass};
use crate::potential::phi;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub spending: SpendingState,
    pub prices: Vec<f64>,
    /// max_j |Σ_i x_ij − 1| over goods with positive price.
    pub clearing_residual: f64,
    /// Largest ∞-norm distance from a buyer's row to a best-response-consistent row.
    pub br_residual: f64,
    pub lambda: Vec<f64>,
    pub valid: bool,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl EquilibriumCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Φ is stagnant when successive values differ by less than phi_tol·(1+|Φ|).
    pub phi_tol: f64,
    pub verify_tol: f64,
    pub max_iters: usize,
    /// Consecutive stagnant rounds required.
    pub window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { phi_tol: 1e-12, verify_tol: 1e-6, max_iters: 200_000, window: 50 }
    }
}

/// Damped PR from uniform spending until Φ stagnates, then verification.
pub fn solve(market: &Market, tol: f64) -> Result<EquilibriumCertificate> {
    solve_with(market, &SolveOptions { phi_tol: tol, ..Default::default() })
}

pub fn solve_with(market: &Market, opts: &SolveOptions) -> Result<EquilibriumCertificate> {
    let mut b = market.uniform_spending();
    let mut last = phi(market, &b)?.phi;
    let mut calm = 0;
    for t in 1..=opts.max_iters {
        let next = damped_pr_step(&b, market).and_then(|n| Ok((phi(market, &n)?.phi, n)));
        let v = match next {
            Ok((v, n)) => {
                b = n;
                v
            }
            // A good whose equilibrium price is zero underflows; stop at the last iterate.
            Err(Error::ZeroPrice { good }) => {
                log::debug!("price of good {good} underflowed after {t} iterations");
                let mut cert = verify(market, &b, opts.verify_tol)?;
                cert.iterations = Some(t - 1);
                return if cert.valid { Ok(cert) } else { Err(Error::NotConverged(Box::new(cert))) };
            }
            Err(e) => return Err(e),
        };
        if (v - last).abs() < opts.phi_tol * (1.0 + v.abs()) {
            calm += 1;
        } else {
            calm = 0;
        }
        last = v;
        if calm >= opts.window {
            let mut cert = verify(market, &b, opts.verify_tol)?;
            if cert.valid {
                log::debug!("solve converged after {t} iterations");
                cert.iterations = Some(t);
                return Ok(cert);
            }
            // Φ is flat but the conditions are not met yet; keep going.
            calm = 0;
        }
    }
    let mut cert = verify(market, &b, opts.verify_tol)?;
    cert.iterations = Some(opts.max_iters);
    if cert.valid {
        Ok(cert)
    } else {
        Err(Error::NotConverged(Box::new(cert)))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Checks market clearing and each buyer's optimality condition at `spending`.
pub fn verify(market: &Market, spending: &SpendingState, tol: f64) -> Result<EquilibriumCertificate> {
    spending.check_against(market)?;
    let p = spending.prices()?;
    let mut clearing = 0.0f64;
    for (j, &pj) in p.iter().enumerate() {
        if pj > 0.0 {
            let demand: f64 = spending.rows().iter().map(|r| r[j] / pj).sum();
            clearing = clearing.max((demand - 1.0).abs());
        }
    }
    let mut br = 0.0f64;
    let mut lambda = Vec::with_capacity(market.num_buyers());
    for (buyer, row) in market.buyers().iter().zip(spending.rows()) {
        let a = &buyer.weights;
        let (res, lam) = match buyer.class {
            UtilityClass::Linear => {
                let best = a.iter().zip(&p).map(|(a, p)| a / p).fold(f64::NEG_INFINITY, f64::max);
                let top: Vec<bool> = a.iter().zip(&p).map(|(a, p)| a / p >= best - tol).collect();
                let k = top.iter().filter(|t| **t).count() as f64;
                let off: Vec<f64> = row.iter().zip(&top).filter(|(_, t)| !**t).map(|(b, _)| *b).collect();
                let spread = off.iter().sum::<f64>() / k;
                (off.iter().copied().fold(spread, f64::max), best)
            }
            UtilityClass::CobbDouglas => {
                let res = row
                    .iter()
                    .zip(a)
                    .map(|(b, a)| (b - buyer.budget * a).abs())
                    .fold(0.0, f64::max);
                let ratios = row.iter().zip(a).filter(|(_, a)| **a > 0.0).map(|(b, a)| b / a).collect();
                (res, median(ratios))
            }
            UtilityClass::Leontief => {
                // The scale fixed by the budget; per-good ratios are unreliable near zero prices.
                let lam = buyer.budget / a.iter().zip(&p).map(|(c, p)| c * p).sum::<f64>();
                let res = row
                    .iter()
                    .zip(a)
                    .zip(&p)
                    .map(|((b, c), p)| (b - lam * c * p).abs())
                    .fold(0.0, f64::max);
                (res, lam)
            }
            UtilityClass::SubstitutesCes(r) | UtilityClass::ComplementsCes(r) => {
                let target = buyer.best_response(&p);
                let res = row.iter().zip(&target).map(|(b, t)| (b - t).abs()).fold(0.0, f64::max);
                let lam = median(
                    row.iter()
                        .zip(a)
                        .zip(&p)
                        .filter(|((b, a), _)| **a > 0.0 && **b > 0.0)
                        .map(|((b, a), p)| b / (a * (b / p).powf(r)))
                        .collect(),
                );
                (res, lam)
            }
        };
        br = br.max(res);
        lambda.push(lam);
    }
    Ok(EquilibriumCertificate {
        spending: spending.clone(),
        prices: p,
        clearing_residual: clearing,
        br_residual: br,
        lambda,
        valid: clearing <= tol && br <= tol,
        tol,
        iterations: None,
    })
}
