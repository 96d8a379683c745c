//! Theoretical convergence bounds as functions of T, checked against trajectories.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bregman::kl;
use crate::dynamics::{fmt_f64, Rule};
use crate::error::{Error, Result};
use crate::market::{Block, Market, SpendingState, UtilityClass};
use crate::potential::phi_gap;

/// Relative slack granted to every bound.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TheoremId {
    SubstLinear1T,
    SubstStrong,
    CompLinear1T,
    CompStrong,
    SaddleSublinear,
    SaddleLinear,
    CobbSubst1T,
    CobbSubstStrong,
    CobbComp1T,
    CobbCompStrong,
    FullRange1T,
    FullRangeLinear,
    CobbKlHalving,
    ZhangKL,
    SpendingKLBounds,
}

const NAMES: [(TheoremId, &str); 15] = [
    (TheoremId::SubstLinear1T, "subst-1t"),
    (TheoremId::SubstStrong, "subst-strong"),
    (TheoremId::CompLinear1T, "comp-1t"),
    (TheoremId::CompStrong, "comp-strong"),
    (TheoremId::SaddleSublinear, "saddle-sublinear"),
    (TheoremId::SaddleLinear, "saddle-linear"),
    (TheoremId::CobbSubst1T, "cobb-subst-1t"),
    (TheoremId::CobbSubstStrong, "cobb-subst-strong"),
    (TheoremId::CobbComp1T, "cobb-comp-1t"),
    (TheoremId::CobbCompStrong, "cobb-comp-strong"),
    (TheoremId::FullRange1T, "full-range-1t"),
    (TheoremId::FullRangeLinear, "full-range-linear"),
    (TheoremId::CobbKlHalving, "cobb-kl-halving"),
    (TheoremId::ZhangKL, "zhang-kl"),
    (TheoremId::SpendingKLBounds, "spending-kl"),
];

impl TheoremId {
    pub fn all() -> impl Iterator<Item = TheoremId> {
        NAMES.iter().map(|(t, _)| *t)
    }

    pub fn name(&self) -> &'static str {
        NAMES.iter().find(|(t, _)| t == self).map(|(_, n)| *n).expect("every id is named")
    }

    /// The dynamics the bound is stated for.
    pub fn rule(&self, market: &Market) -> Rule {
        use TheoremId::*;
        match self {
            SaddleSublinear | SaddleLinear | FullRange1T | FullRangeLinear | CobbKlHalving => Rule::DampedPr,
            SpendingKLBounds if market.is_mixed() => Rule::DampedPr,
            _ => Rule::Pr,
        }
    }
}

impl From<TheoremId> for String {
    fn from(t: TheoremId) -> Self {
        t.name().to_string()
    }
}

impl TryFrom<String> for TheoremId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NAMES
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(t, _)| *t)
            .ok_or_else(|| Error::InvalidParams(format!("unknown theorem {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub theorem_id: TheoremId,
    /// Distinguishes several inequalities reported under one id.
    pub label: String,
    pub sigma: Option<f64>,
    pub ts: Vec<usize>,
    pub bound_series: Vec<f64>,
    pub empirical_series: Vec<f64>,
    pub holds: bool,
    /// max over the series of empirical − bound.
    pub max_violation: f64,
}

impl RateCertificate {
    fn new(
        theorem_id: TheoremId,
        label: &str,
        sigma: Option<f64>,
        ts: Vec<usize>,
        bound_series: Vec<f64>,
        empirical_series: Vec<f64>,
    ) -> Self {
        let mut holds = true;
        let mut max_violation = f64::NEG_INFINITY;
        for (b, e) in bound_series.iter().zip(&empirical_series) {
            max_violation = max_violation.max(e - b);
            if !(*e <= b + SLACK * (1.0 + b.abs())) {
                holds = false;
            }
        }
        Self { theorem_id, label: label.to_string(), sigma, ts, bound_series, empirical_series, holds, max_violation }
    }

    pub fn t_max(&self) -> usize {
        self.ts.last().copied().unwrap_or(0)
    }

    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "bound", "empirical"])?;
        for ((t, b), e) in self.ts.iter().zip(&self.bound_series).zip(&self.empirical_series) {
            w.write_record([t.to_string(), fmt_f64(*b), fmt_f64(*e)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn wrong(theorem: TheoremId, reason: &str) -> Error {
    Error::WrongDomain { theorem: theorem.name().into(), reason: reason.into() }
}

fn require(theorem: TheoremId, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(wrong(theorem, reason))
    }
}

fn check_trace(theorem: TheoremId, trace: &[SpendingState]) -> Result<()> {
    require(theorem, trace.len() >= 2, "trace needs at least b^0 and b^1")
}

/// Σ_i w(class_i) KL(b*_i ‖ b_i); buyers where w returns None are skipped.
fn weighted_kl(
    market: &Market,
    reference: &SpendingState,
    b: &SpendingState,
    w: impl Fn(&UtilityClass) -> Option<f64>,
) -> Result<f64> {
    let mut s = 0.0;
    for (i, buyer) in market.buyers().iter().enumerate() {
        if let Some(c) = w(&buyer.class) {
            s += c * kl(reference.row(i), b.row(i))?;
        }
    }
    Ok(s)
}

fn inv_rho(c: &UtilityClass) -> Option<f64> {
    (c.block() == Block::Substitutes).then(|| 1.0 / c.rho())
}

fn min_over(market: &Market, f: impl Fn(&UtilityClass) -> Option<f64>) -> Option<f64> {
    market.buyers().iter().filter_map(|b| f(&b.class)).reduce(f64::min)
}

fn strong_factor(sigma: f64, t: usize) -> f64 {
    let q = (1.0 - sigma).powi(t as i32);
    sigma * q / (1.0 - q)
}

/// (σ−1)/(σ^T−1) for σ > 1.
fn geometric_factor(sigma: f64, t: usize) -> f64 {
    (sigma - 1.0) / (sigma.powi(t as i32) - 1.0)
}

fn is_linear(c: &UtilityClass) -> bool {
    *c == UtilityClass::Linear
}

fn is_leontief(c: &UtilityClass) -> bool {
    *c == UtilityClass::Leontief
}

/// Φ(b^T) − Φ(b*) under PR in a pure substitutes market: the 1/T bound, or the
/// geometric bound with σ = min(1−ρ_i) when there are no linear buyers.
pub fn bound_substitutes(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    strong: bool,
) -> Result<RateCertificate> {
    let id = if strong { TheoremId::SubstStrong } else { TheoremId::SubstLinear1T };
    check_trace(id, trace)?;
    require(id, market.all_classes(|c| c.block() == Block::Substitutes), "needs rho in (0, 1] for every buyer")?;
    if strong {
        require(id, !market.has_class(is_linear), "linear buyers present")?;
    }
    let d0 = weighted_kl(market, reference, &trace[0], inv_rho)?;
    let sigma = min_over(market, |c| Some(1.0 - c.rho())).expect("nonempty market");
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    for (t, b) in trace.iter().enumerate().skip(1) {
        ts.push(t);
        bound.push(if strong { strong_factor(sigma, t) * d0 } else { d0 / t as f64 });
        emp.push(phi_gap(market, b, reference)?);
    }
    Ok(RateCertificate::new(id, id.name(), strong.then_some(sigma), ts, bound, emp))
}

/// Φ(b*) − Φ(b^T) under PR in a pure complements market; Leontief buyers
/// weigh 1 in the divergence and rule out the geometric bound.
pub fn bound_complements(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    strong: bool,
) -> Result<RateCertificate> {
    let id = if strong { TheoremId::CompStrong } else { TheoremId::CompLinear1T };
    check_trace(id, trace)?;
    require(id, market.all_classes(|c| c.block() == Block::Complements), "needs rho < 0 for every buyer")?;
    if strong {
        require(id, !market.has_class(is_leontief), "Leontief buyers present")?;
    }
    let d0 = weighted_kl(market, reference, &trace[0], |c| c.complements_weight())?;
    let sigma = min_over(market, |c| Some(1.0 / (1.0 - c.rho()))).expect("nonempty market");
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    for (t, b) in trace.iter().enumerate().skip(1) {
        ts.push(t);
        bound.push(if strong { strong_factor(sigma, t) * d0 } else { d0 / t as f64 });
        emp.push(-phi_gap(market, b, reference)?);
    }
    Ok(RateCertificate::new(id, id.name(), strong.then_some(sigma), ts, bound, emp))
}

/// Σ_i (1/ρ_i) KL(b*_i‖b^t_i) ≤ (max ρ)^t · (same at t = 0), pure substitutes without linear buyers.
pub fn zhang_kl_check(market: &Market, trace: &[SpendingState], reference: &SpendingState) -> Result<RateCertificate> {
    let id = TheoremId::ZhangKL;
    require(
        id,
        market.all_classes(|c| matches!(c, UtilityClass::SubstitutesCes(_))),
        "needs rho in (0, 1) for every buyer",
    )?;
    let rmax = market.buyers().iter().map(|b| b.rho()).fold(f64::NEG_INFINITY, f64::max);
    let d0 = weighted_kl(market, reference, &trace[0], inv_rho)?;
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    for (t, b) in trace.iter().enumerate() {
        ts.push(t);
        bound.push(rmax.powi(t as i32) * d0);
        emp.push(weighted_kl(market, reference, b, inv_rho)?);
    }
    Ok(RateCertificate::new(id, id.name(), Some(1.0 - rmax), ts, bound, emp))
}

/// Saddle residual Φ(b_{>0}, b*_{=0}, b*_{<0}) − Φ(b*_{>0}, b*_{=0}, b_{<0}).
pub fn saddle_residual(market: &Market, b: &SpendingState, reference: &SpendingState) -> Result<f64> {
    let x = reference.with_block_from(market, Block::Substitutes, b);
    let y = reference.with_block_from(market, Block::Complements, b);
    Ok(phi_gap(market, &x, reference)? - phi_gap(market, &y, reference)?)
}

fn residual_series(market: &Market, trace: &[SpendingState], reference: &SpendingState) -> Result<Vec<f64>> {
    trace.iter().skip(1).map(|b| saddle_residual(market, b, reference)).collect()
}

/// The residual itself must stay nonnegative.
fn nonneg_certificate(id: TheoremId, residuals: &[f64]) -> RateCertificate {
    let ts = (1..=residuals.len()).collect();
    let neg = residuals.iter().map(|r| -r).collect();
    RateCertificate::new(id, "residual-nonnegative", None, ts, vec![0.0; residuals.len()], neg)
}

/// Damped PR on a market without Cobb-Douglas buyers: cumulative residual
/// bound, or the geometric bound when there are no linear or Leontief buyers.
/// Returns the bound certificate followed by the residual-sign certificate.
pub fn bound_saddle(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    linear: bool,
) -> Result<Vec<RateCertificate>> {
    let id = if linear { TheoremId::SaddleLinear } else { TheoremId::SaddleSublinear };
    check_trace(id, trace)?;
    require(id, market.is_mixed(), "needs buyers with rho > 0 and with rho < 0")?;
    require(id, !market.has_block(Block::CobbDouglas), "Cobb-Douglas buyers present; use the full-range bounds")?;
    if linear {
        require(id, !market.has_class(|c| is_linear(c) || is_leontief(c)), "linear or Leontief buyers present")?;
    }
    let b0 = &trace[0];
    let dg = weighted_kl(market, reference, b0, inv_rho)?;
    let dh = weighted_kl(market, reference, b0, |c| c.complements_weight())?;
    let res = residual_series(market, trace, reference)?;
    let ts: Vec<usize> = (1..trace.len()).collect();
    let cert = if linear {
        let sx = min_over(market, |c| (c.block() == Block::Substitutes).then(|| 1.0 - c.rho()));
        let sy = min_over(market, |c| (c.block() == Block::Complements).then(|| 1.0 / (1.0 - c.rho())));
        let s = sx.unwrap_or(f64::INFINITY).min(sy.unwrap_or(f64::INFINITY));
        let c0 = (2.0 - sx.unwrap_or(0.0)) * dg + (2.0 - sy.unwrap_or(0.0)) * dh;
        let bound = ts.iter().map(|&t| (1.0 - s / 2.0).powi(t as i32 - 1) * c0).collect();
        RateCertificate::new(id, id.name(), Some(s), ts, bound, res.clone())
    } else {
        let total = 2.0 * dg + 2.0 * dh;
        let cum = res
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        RateCertificate::new(id, id.name(), None, ts, vec![total; res.len()], cum)
    };
    Ok(vec![cert, nonneg_certificate(id, &res)])
}

/// Both forms of the Cobb-Douglas KL-halving under damped PR:
/// KL(b*_i‖b^{t+1}_i) ≤ ½ KL(b*_i‖b^t_i) per step and buyer, and
/// KL(b^T_{=0}‖b*_{=0}) ≤ 2^{−T} KL(b^0_{=0}‖b*_{=0}).
pub fn cobb_kl_halving(market: &Market, trace: &[SpendingState], reference: &SpendingState) -> Result<Vec<RateCertificate>> {
    let id = TheoremId::CobbKlHalving;
    check_trace(id, trace)?;
    require(id, market.has_block(Block::CobbDouglas), "no Cobb-Douglas buyers")?;
    let cd: Vec<usize> = (0..market.num_buyers())
        .filter(|&i| market.buyer(i).class == UtilityClass::CobbDouglas)
        .collect();
    let forward = |b: &SpendingState| -> Result<f64> { cd.iter().map(|&i| kl(b.row(i), reference.row(i))).sum() };
    let f0 = forward(&trace[0])?;
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    let (mut sts, mut sbound, mut semp) = (vec![], vec![], vec![]);
    for t in 1..trace.len() {
        ts.push(t);
        bound.push(f0 * 0.5f64.powi(t as i32));
        emp.push(forward(&trace[t])?);
        for &i in &cd {
            sts.push(t);
            sbound.push(0.5 * kl(reference.row(i), trace[t - 1].row(i))?);
            semp.push(kl(reference.row(i), trace[t].row(i))?);
        }
    }
    Ok(vec![
        RateCertificate::new(id, id.name(), Some(2.0), ts, bound, emp),
        RateCertificate::new(id, "per-step-halving", Some(2.0), sts, sbound, semp),
    ])
}

/// Damped PR over the whole CES range with Cobb-Douglas buyers: cumulative
/// residual bound, or (no linear/Leontief buyers) the σ^{−(T−1)} bound.
/// Returns the bound certificate followed by the residual-sign certificate.
pub fn bound_full_range(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    linear: bool,
) -> Result<Vec<RateCertificate>> {
    let id = if linear { TheoremId::FullRangeLinear } else { TheoremId::FullRange1T };
    check_trace(id, trace)?;
    require(id, market.has_block(Block::CobbDouglas), "no Cobb-Douglas buyers; use the saddle bounds")?;
    if linear {
        require(id, !market.has_class(|c| is_linear(c) || is_leontief(c)), "linear or Leontief buyers present")?;
    }
    let b0 = &trace[0];
    let res = residual_series(market, trace, reference)?;
    let ts: Vec<usize> = (1..trace.len()).collect();
    let cert = if linear {
        let sigma = min_over(market, |c| match c.block() {
            Block::Substitutes => Some(2.0 / (1.0 + c.rho())),
            Block::Complements => Some(2.0 * (c.rho() - 1.0) / (2.0 * c.rho() - 1.0)),
            Block::CobbDouglas => None,
        })
        .unwrap_or(2.0);
        let c0 = weighted_kl(market, reference, b0, |c| {
            let r = c.rho();
            Some(match c.block() {
                Block::CobbDouglas => 4.0 / (2.0 - sigma),
                Block::Complements => (2.0 * r - 1.0) / r,
                Block::Substitutes => (1.0 + r) / r,
            })
        })?;
        let bound = ts.iter().map(|&t| c0 / sigma.powi(t as i32 - 1)).collect();
        RateCertificate::new(id, id.name(), Some(sigma), ts, bound, res.clone())
    } else {
        let total = weighted_kl(market, reference, b0, |c| {
            let r = c.rho();
            Some(match c {
                UtilityClass::CobbDouglas => 4.0,
                UtilityClass::Leontief => 1.0,
                UtilityClass::ComplementsCes(_) => 2.0 * (r - 1.0) / r,
                _ => 2.0 / r,
            })
        })?;
        let cum = res
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        RateCertificate::new(id, id.name(), None, ts, vec![total; res.len()], cum)
    };
    Ok(vec![cert, nonneg_certificate(id, &res)])
}

/// PR with Cobb-Douglas buyers on the substitutes side (no ρ<0 buyers):
/// Φ(b^T_{>0}, b*_{=0}) − Φ(b*).
pub fn bound_cobb_substitutes(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    strong: bool,
) -> Result<RateCertificate> {
    let id = if strong { TheoremId::CobbSubstStrong } else { TheoremId::CobbSubst1T };
    check_trace(id, trace)?;
    require(id, !market.has_block(Block::Complements), "rho < 0 buyers present")?;
    let b0 = &trace[0];
    let (sigma, d0) = if strong {
        require(id, !market.has_class(is_linear), "linear buyers present")?;
        let s = min_over(market, |c| (c.block() == Block::Substitutes).then(|| 1.0 / c.rho()))
            .ok_or_else(|| wrong(id, "no rho > 0 buyers"))?;
        (Some(s), weighted_kl(market, reference, b0, |_| Some(1.0))?)
    } else {
        let d = weighted_kl(market, reference, b0, |c| match c.block() {
            Block::CobbDouglas => Some(1.0),
            _ => Some(1.0 / c.rho()),
        })?;
        (None, d)
    };
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    for (t, b) in trace.iter().enumerate().skip(1) {
        let pinned = b.with_block_from(market, Block::CobbDouglas, reference);
        ts.push(t);
        bound.push(match sigma {
            Some(s) => geometric_factor(s, t) * d0,
            None => d0 / t as f64,
        });
        emp.push(phi_gap(market, &pinned, reference)?);
    }
    Ok(RateCertificate::new(id, id.name(), sigma, ts, bound, emp))
}

/// PR with Cobb-Douglas buyers on the complements side (no ρ>0 buyers):
/// Φ(b*) − Φ(b*_{=0}, b^T_{<0}).
pub fn bound_cobb_complements(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
    strong: bool,
) -> Result<RateCertificate> {
    let id = if strong { TheoremId::CobbCompStrong } else { TheoremId::CobbComp1T };
    check_trace(id, trace)?;
    require(id, !market.has_block(Block::Substitutes), "rho > 0 buyers present")?;
    let b0 = &trace[0];
    let (sigma, d0) = if strong {
        require(id, !market.has_class(is_leontief), "Leontief buyers present")?;
        let s = min_over(market, |c| match c {
            UtilityClass::ComplementsCes(r) => Some((r - 1.0) / r),
            _ => None,
        })
        .ok_or_else(|| wrong(id, "no rho < 0 buyers"))?;
        (Some(s), weighted_kl(market, reference, b0, |_| Some(1.0))?)
    } else {
        let d = weighted_kl(market, reference, b0, |c| c.complements_weight().or(Some(1.0)))?;
        (None, d)
    };
    let (mut ts, mut bound, mut emp) = (vec![], vec![], vec![]);
    for (t, b) in trace.iter().enumerate().skip(1) {
        let pinned = b.with_block_from(market, Block::CobbDouglas, reference);
        ts.push(t);
        bound.push(match sigma {
            Some(s) => geometric_factor(s, t) * d0,
            None => d0 / t as f64,
        });
        emp.push(-phi_gap(market, &pinned, reference)?);
    }
    Ok(RateCertificate::new(id, id.name(), sigma, ts, bound, emp))
}

/// Spending- and price-KL distances to equilibrium bounded by Φ gaps, at every state.
pub fn spending_kl_bounds(
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
) -> Result<Vec<RateCertificate>> {
    let id = TheoremId::SpendingKLBounds;
    require(id, !market.has_block(Block::CobbDouglas), "Cobb-Douglas buyers present")?;
    let p_star = reference.prices()?;
    let ts: Vec<usize> = (0..trace.len()).collect();
    let rows_kl = |b: &SpendingState, pick: &dyn Fn(&UtilityClass) -> Option<f64>| -> Result<f64> {
        let mut s = 0.0;
        for (i, buyer) in market.buyers().iter().enumerate() {
            if let Some(w) = pick(&buyer.class) {
                s += w * kl(b.row(i), reference.row(i))?;
            }
        }
        Ok(s)
    };
    let price_kl = |b: &SpendingState| -> Result<f64> { kl(&b.prices()?, &p_star) };
    let mut out = Vec::new();
    if market.all_classes(|c| c.block() == Block::Substitutes) {
        let gaps: Vec<f64> = trace.iter().map(|b| phi_gap(market, b, reference)).collect::<Result<_>>()?;
        let pk: Vec<f64> = trace.iter().map(price_kl).collect::<Result<_>>()?;
        out.push(RateCertificate::new(id, "price-kl-substitutes", None, ts.clone(), gaps.clone(), pk.clone()));
        if !market.has_class(is_linear) {
            let c = market.buyers().iter().map(|b| b.rho() / (1.0 - b.rho())).fold(0.0, f64::max);
            let bound: Vec<f64> = gaps.iter().map(|g| c * g).collect();
            let sk = trace.iter().map(|b| rows_kl(b, &|_| Some(1.0))).collect::<Result<_>>()?;
            out.push(RateCertificate::new(id, "spending-kl", Some(c), ts.clone(), bound.clone(), sk));
            out.push(RateCertificate::new(id, "price-kl", Some(c), ts, bound, pk));
        }
    } else if market.all_classes(|c| c.block() == Block::Complements) {
        require(id, !market.has_class(is_leontief), "Leontief buyers present")?;
        let c = market.buyers().iter().map(|b| -b.rho()).fold(0.0, f64::max);
        let bound: Vec<f64> = trace
            .iter()
            .map(|b| Ok(-c * phi_gap(market, b, reference)?))
            .collect::<Result<_>>()?;
        let sk = trace.iter().map(|b| rows_kl(b, &|_| Some(1.0))).collect::<Result<_>>()?;
        let pk = trace.iter().map(price_kl).collect::<Result<_>>()?;
        out.push(RateCertificate::new(id, "spending-kl", Some(c), ts.clone(), bound.clone(), sk));
        out.push(RateCertificate::new(id, "price-kl", Some(c), ts, bound, pk));
    } else {
        require(id, !market.has_class(|c| is_linear(c) || is_leontief(c)), "linear or Leontief buyers present")?;
        let mut bound = Vec::with_capacity(trace.len());
        let mut lhs = Vec::with_capacity(trace.len());
        for b in trace {
            let x = reference.with_block_from(market, Block::Substitutes, b);
            let y = reference.with_block_from(market, Block::Complements, b);
            bound.push(phi_gap(market, &x, reference)? - phi_gap(market, &y, reference)?);
            lhs.push(rows_kl(b, &|c| match c.block() {
                Block::Substitutes => Some((1.0 - c.rho()) / c.rho()),
                _ => Some(-1.0 / c.rho()),
            })?);
        }
        out.push(RateCertificate::new(id, "mixed-two-block", None, ts, bound, lhs));
    }
    Ok(out)
}

/// Runs the checker for `theorem`. Several certificates come back for theorems
/// that bundle side conditions.
pub fn certify(
    theorem: TheoremId,
    market: &Market,
    trace: &[SpendingState],
    reference: &SpendingState,
) -> Result<Vec<RateCertificate>> {
    use TheoremId::*;
    match theorem {
        SubstLinear1T => Ok(vec![bound_substitutes(market, trace, reference, false)?]),
        SubstStrong => Ok(vec![bound_substitutes(market, trace, reference, true)?]),
        CompLinear1T => Ok(vec![bound_complements(market, trace, reference, false)?]),
        CompStrong => Ok(vec![bound_complements(market, trace, reference, true)?]),
        SaddleSublinear => bound_saddle(market, trace, reference, false),
        SaddleLinear => bound_saddle(market, trace, reference, true),
        CobbSubst1T => Ok(vec![bound_cobb_substitutes(market, trace, reference, false)?]),
        CobbSubstStrong => Ok(vec![bound_cobb_substitutes(market, trace, reference, true)?]),
        CobbComp1T => Ok(vec![bound_cobb_complements(market, trace, reference, false)?]),
        CobbCompStrong => Ok(vec![bound_cobb_complements(market, trace, reference, true)?]),
        FullRange1T => bound_full_range(market, trace, reference, false),
        FullRangeLinear => bound_full_range(market, trace, reference, true),
        CobbKlHalving => cobb_kl_halving(market, trace, reference),
        ZhangKL => Ok(vec![zhang_kl_check(market, trace, reference)?]),
        SpendingKLBounds => spending_kl_bounds(market, trace, reference),
    }
}
