//! Eisenberg-Gale objective Ψ, its dual Υ, and dominance of their gaps by the Φ gap.

use std::io::Write;

use crate::dynamics::fmt_f64;
use crate::error::{Error, Result};
use crate::market::{Block, Market, SpendingState, UtilityClass};
use crate::potential::phi_gap;

const SLACK: f64 = 1e-9;

/// Ψ(x) = Σ_i e_i log u_i(x_i).
pub fn eg_objective(market: &Market, allocation: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for (i, (buyer, x)) in market.buyers().iter().zip(allocation).enumerate() {
        let u = buyer.utility(x);
        if !(u > 0.0) {
            return Err(Error::ZeroUtility { buyer: i });
        }
        s += buyer.budget * u.ln();
    }
    Ok(s)
}

/// Υ(p): Ψ at the best-response allocation plus Σ_j p_j − Σ_i e_i.
pub fn eg_dual(market: &Market, prices: &[f64]) -> Result<f64> {
    let b = market.best_response_spending(prices)?;
    let x: Vec<Vec<f64>> = b
        .rows()
        .iter()
        .map(|r| r.iter().zip(prices).map(|(b, p)| b / p).collect())
        .collect();
    Ok(eg_objective(market, &x)? + prices.iter().sum::<f64>() - market.total_budget())
}

/// Lower bound on Ψ(x(b)) from concavity of log, for markets without ρ<0 buyers.
/// Tight when a_ij b_ij^{ρ−1}/p_j^ρ is constant across each buyer's goods.
pub fn psi_lower_bound(market: &Market, b: &SpendingState) -> Result<f64> {
    if market.has_block(Block::Complements) {
        return Err(Error::WrongDomain {
            theorem: "psi lower bound".into(),
            reason: "complements buyers present".into(),
        });
    }
    let p = b.prices()?;
    let mut s = 0.0;
    for (buyer, row) in market.buyers().iter().zip(b.rows()) {
        let e = buyer.budget;
        for ((&v, &a), &pj) in row.iter().zip(&buyer.weights).zip(&p) {
            if v == 0.0 {
                continue;
            }
            s += match buyer.class {
                UtilityClass::CobbDouglas => e * a * (v / pj).ln(),
                _ => {
                    let r = buyer.rho();
                    v * (a.ln() + (r - 1.0) * v.ln() - r * pj.ln()) / r
                }
            };
        }
        if buyer.class != UtilityClass::CobbDouglas {
            s += e * e.ln() / buyer.rho();
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceRow {
    pub iter: usize,
    pub phi_gap: f64,
    pub psi_gap: Option<f64>,
    pub upsilon_gap: Option<f64>,
    pub dominates: bool,
}

fn allocation(b: &SpendingState) -> Result<Vec<Vec<f64>>> {
    b.allocation()
}

/// Compares the Ψ gap (markets without ρ<0 buyers) or Υ gap (markets without
/// ρ>0 buyers) to the Φ gap at every state, Cobb-Douglas rows pinned at the reference.
pub fn dominance_check(
    market: &Market,
    states: &[(usize, SpendingState)],
    reference: &SpendingState,
) -> Result<Vec<DominanceRow>> {
    let substitutes = !market.has_block(Block::Complements);
    let complements = !market.has_block(Block::Substitutes);
    if !substitutes && !complements {
        return Err(Error::WrongDomain {
            theorem: "dominance".into(),
            reason: "market has both rho>0 and rho<0 buyers".into(),
        });
    }
    let psi_star = eg_objective(market, &allocation(reference)?)?;
    let p_star = reference.prices()?;
    let ups_star = eg_dual(market, &p_star)?;
    let mut out = Vec::with_capacity(states.len());
    for (iter, b) in states {
        let pinned = b.with_block_from(market, Block::CobbDouglas, reference);
        let row = if substitutes {
            let gap = phi_gap(market, &pinned, reference)?;
            let psi = psi_star - eg_objective(market, &allocation(&pinned)?)?;
            DominanceRow {
                iter: *iter,
                phi_gap: gap,
                psi_gap: Some(psi),
                upsilon_gap: None,
                dominates: psi <= gap + SLACK,
            }
        } else {
            let gap = -phi_gap(market, &pinned, reference)?;
            let ups = eg_dual(market, &pinned.prices()?)? - ups_star;
            DominanceRow {
                iter: *iter,
                phi_gap: gap,
                psi_gap: None,
                upsilon_gap: Some(ups),
                dominates: ups <= gap + SLACK,
            }
        };
        out.push(row);
    }
    Ok(out)
}

pub fn write_dominance_csv<W: Write>(rows: &[DominanceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "phi_gap", "psi_gap", "upsilon_gap", "dominates"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            fmt_f64(r.phi_gap),
            r.psi_gap.map(fmt_f64).unwrap_or_default(),
            r.upsilon_gap.map(fmt_f64).unwrap_or_default(),
            r.dominates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
