//! The potential Φ, its gradient and the Bregman sandwich bounds.

use crate::bregman::kl;
use crate::error::{Error, Result};
use crate::market::{ln, Block, Market, SpendingState, UtilityClass};

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialValue {
    pub phi: f64,
    pub per_buyer_terms: Vec<f64>,
    /// Set when Cobb-Douglas rows contribute their Σ b log p term.
    pub price_term_included: bool,
}

/// Φ(b), using the extended form whenever Cobb-Douglas buyers are present.
pub fn phi(market: &Market, b: &SpendingState) -> Result<PotentialValue> {
    phi_form(market, b, market.has_block(Block::CobbDouglas))
}

/// Φ(b) in the requested form. The base form is undefined for Cobb-Douglas buyers.
pub fn phi_form(market: &Market, b: &SpendingState, extended: bool) -> Result<PotentialValue> {
    if !extended && market.has_block(Block::CobbDouglas) {
        return Err(Error::CobbDouglasRequiresExtended);
    }
    let terms = entries(market, b)?;
    let per_buyer_terms: Vec<f64> = terms.iter().map(|r| r.iter().sum()).collect();
    Ok(PotentialValue {
        phi: per_buyer_terms.iter().sum(),
        per_buyer_terms,
        price_term_included: extended,
    })
}

/// Φ(b) − Φ(reference), summed entry by entry to limit cancellation.
pub fn phi_gap(market: &Market, b: &SpendingState, reference: &SpendingState) -> Result<f64> {
    let x = entries(market, b)?;
    let y = entries(market, reference)?;
    Ok(x.iter()
        .flatten()
        .zip(y.iter().flatten())
        .map(|(a, b)| a - b)
        .sum())
}

/// Per (buyer, good) contributions to Φ.
fn entries(market: &Market, b: &SpendingState) -> Result<Vec<Vec<f64>>> {
    b.check_against(market)?;
    let p = b.prices()?;
    let mut out = Vec::with_capacity(market.num_buyers());
    for (i, buyer) in market.buyers().iter().enumerate() {
        let mut row = Vec::with_capacity(p.len());
        for (j, &pj) in p.iter().enumerate() {
            let (w, v) = (buyer.weights[j], b.row(i)[j]);
            let t = if v == 0.0 {
                if matches!(buyer.class, UtilityClass::ComplementsCes(_)) && w > 0.0 {
                    return Err(Error::InvalidSpending(format!(
                        "complements buyer {i} has zero spending on desired good {j}"
                    )));
                }
                0.0
            } else {
                match buyer.class {
                    UtilityClass::CobbDouglas => v * pj.ln(),
                    UtilityClass::Leontief => -v * (v.ln() - ln(w) - pj.ln()),
                    _ => {
                        let r = buyer.rho();
                        -v * (ln(w) + (r - 1.0) * v.ln() - r * pj.ln()) / r
                    }
                }
            };
            row.push(t);
        }
        out.push(row);
    }
    Ok(out)
}

/// ∇Φ(b) as an m×n matrix.
pub fn grad_phi(market: &Market, b: &SpendingState) -> Result<Vec<Vec<f64>>> {
    b.check_against(market)?;
    let p = b.prices()?;
    Ok(market
        .buyers()
        .iter()
        .zip(b.rows())
        .map(|(buyer, row)| {
            row.iter()
                .zip(&buyer.weights)
                .zip(&p)
                .map(|((&v, &w), &pj)| match buyer.class {
                    UtilityClass::CobbDouglas => 1.0 + pj.ln(),
                    UtilityClass::Leontief => -(ln(v) - ln(w) - pj.ln()),
                    _ => {
                        let r = buyer.rho();
                        (1.0 - (ln(w) + (r - 1.0) * ln(v) - r * pj.ln())) / r
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub gap: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Bregman gap Φ(b) − Φ(b′) − ⟨∇Φ(b′), b − b′⟩ with its KL lower and upper bounds.
pub fn sandwich_gap(market: &Market, b: &SpendingState, b_prime: &SpendingState) -> Result<Sandwich> {
    let diff = phi_gap(market, b, b_prime)?;
    let g = grad_phi(market, b_prime)?;
    let lin: f64 = g
        .iter()
        .flatten()
        .zip(b.rows().iter().flatten().zip(b_prime.rows().iter().flatten()))
        .map(|(g, (x, y))| g * (x - y))
        .sum();
    let (mut lower, mut upper) = (0.0, 0.0);
    for (i, buyer) in market.buyers().iter().enumerate() {
        let d = kl(b.row(i), b_prime.row(i))?;
        match buyer.class {
            UtilityClass::CobbDouglas => upper += d,
            UtilityClass::Leontief => lower -= d,
            _ => {
                let r = buyer.rho();
                lower += (1.0 - r) / r * d;
                upper += d / r;
            }
        }
    }
    Ok(Sandwich { gap: diff - lin, lower, upper })
}

/// The exact value of the Bregman gap: Σ (1/ρ−1) KL_i − Σ_Leontief KL_i + KL(p‖p′).
pub fn bregman_gap_identity(market: &Market, b: &SpendingState, b_prime: &SpendingState) -> Result<f64> {
    let mut s = kl(&b.prices()?, &b_prime.prices()?)?;
    for (i, buyer) in market.buyers().iter().enumerate() {
        let d = kl(b.row(i), b_prime.row(i))?;
        s += match buyer.class {
            UtilityClass::CobbDouglas => 0.0,
            UtilityClass::Leontief => -d,
            _ => (1.0 / buyer.rho() - 1.0) * d,
        };
    }
    Ok(s)
}
