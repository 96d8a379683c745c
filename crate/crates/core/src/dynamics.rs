//! Proportional response update rules and the trajectory runner.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bregman::{kl, kl_rows};
use crate::error::{Error, Result};
use crate::market::{ln, normalize_log, Block, Buyer, Market, SpendingState, UtilityClass};
use crate::potential::{phi, phi_gap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Substitutes rule on ρ>0 rows, best response on ρ<0 rows, e·a on ρ=0 rows.
    Pr,
    /// Geometric mean of the current row and its undamped target.
    DampedPr,
    /// The substitutes-form rule applied to every buyer regardless of sign.
    GeneralizedPr,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Pr => "pr",
            Rule::DampedPr => "damped-pr",
            Rule::GeneralizedPr => "generalized-pr",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pr" => Ok(Rule::Pr),
            "damped-pr" => Ok(Rule::DampedPr),
            "generalized-pr" => Ok(Rule::GeneralizedPr),
            _ => Err(Error::InvalidParams(format!("unknown rule {s:?}"))),
        }
    }
}

/// Unnormalized log-weights of the substitutes rule a (b/p)^ρ.
fn substitutes_target(buyer: &Buyer, row: &[f64], p: &[f64]) -> Vec<f64> {
    let r = buyer.rho();
    row.iter()
        .zip(&buyer.weights)
        .zip(p)
        .map(|((&b, &a), &pj)| ln(a) + r * (ln(b) - pj.ln()))
        .collect()
}

/// Unnormalized log-weights of the best response (ρ<0 CES, Leontief) or e·a (Cobb-Douglas).
fn response_target(buyer: &Buyer, p: &[f64]) -> Vec<f64> {
    let a = &buyer.weights;
    match buyer.class {
        UtilityClass::Leontief => a.iter().zip(p).map(|(&c, &pj)| ln(c) + pj.ln()).collect(),
        UtilityClass::CobbDouglas => a.iter().map(|&w| ln(w)).collect(),
        _ => {
            let r = buyer.rho();
            a.iter().zip(p).map(|(&w, &pj)| (ln(w) - r * pj.ln()) / (1.0 - r)).collect()
        }
    }
}

fn undamped_target(buyer: &Buyer, row: &[f64], p: &[f64]) -> Vec<f64> {
    match buyer.class.block() {
        Block::Substitutes => substitutes_target(buyer, row, p),
        _ => response_target(buyer, p),
    }
}

fn apply<F>(b: &SpendingState, market: &Market, mut f: F) -> Result<SpendingState>
where
    F: FnMut(&Buyer, &[f64], &[f64]) -> Option<Vec<f64>>,
{
    b.check_against(market)?;
    let p = b.prices()?;
    let mut next = b.clone();
    for (i, buyer) in market.buyers().iter().enumerate() {
        if let Some(logw) = f(buyer, b.row(i), &p) {
            *next.row_mut(i) = normalize_log(&logw, buyer.budget);
        }
    }
    Ok(next)
}

/// Substitutes rule on rows with ρ ∈ (0, 1]; other rows are left as they are.
pub fn pr_substitutes_step(b: &SpendingState, market: &Market) -> Result<SpendingState> {
    apply(b, market, |buyer, row, p| {
        (buyer.class.block() == Block::Substitutes).then(|| substitutes_target(buyer, row, p))
    })
}

/// Best response on rows with ρ < 0 (Leontief included); other rows are left as they are.
pub fn pr_complements_step(b: &SpendingState, market: &Market) -> Result<SpendingState> {
    apply(b, market, |buyer, _, p| {
        (buyer.class.block() == Block::Complements).then(|| response_target(buyer, p))
    })
}

/// One round of PR on every buyer class.
pub fn pr_step(b: &SpendingState, market: &Market) -> Result<SpendingState> {
    let mut next = apply(b, market, |buyer, row, p| {
        (buyer.class != UtilityClass::CobbDouglas).then(|| undamped_target(buyer, row, p))
    })?;
    for (i, buyer) in market.buyers().iter().enumerate() {
        if buyer.class == UtilityClass::CobbDouglas {
            *next.row_mut(i) = buyer.weights.iter().map(|a| buyer.budget * a).collect();
        }
    }
    Ok(next)
}

/// Substitutes-form rule for every buyer, whatever the sign of ρ.
pub fn generalized_pr_step(b: &SpendingState, market: &Market) -> Result<SpendingState> {
    check_rule(market, Rule::GeneralizedPr)?;
    apply(b, market, |buyer, row, p| Some(substitutes_target(buyer, row, p)))
}

pub fn damped_pr_step(b: &SpendingState, market: &Market) -> Result<SpendingState> {
    apply(b, market, |buyer, row, p| {
        let t = undamped_target(buyer, row, p);
        Some(row.iter().zip(t).map(|(&v, t)| 0.5 * (ln(v) + t)).collect())
    })
}

pub fn step(rule: Rule, b: &SpendingState, market: &Market) -> Result<SpendingState> {
    match rule {
        Rule::Pr => pr_step(b, market),
        Rule::DampedPr => damped_pr_step(b, market),
        Rule::GeneralizedPr => generalized_pr_step(b, market),
    }
}

/// Errors for rules that cannot run on `market`; returns a warning when the
/// rule runs but carries no convergence guarantee.
pub fn check_rule(market: &Market, rule: Rule) -> Result<Option<String>> {
    match rule {
        Rule::GeneralizedPr
            if market.has_class(|c| matches!(c, UtilityClass::CobbDouglas | UtilityClass::Leontief)) =>
        {
            Err(Error::IncompatibleRule {
                rule: rule.to_string(),
                reason: "needs every rho outside {0, -inf}".into(),
            })
        }
        Rule::Pr if market.is_mixed() => Ok(Some("no guarantee; use damped-pr".into())),
        Rule::GeneralizedPr if market.has_block(Block::Complements) => {
            Ok(Some("substitutes-form rule on complements buyers may cycle".into()))
        }
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Uniform,
    Given(SpendingState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub rule: Rule,
    pub max_iters: usize,
    /// Stop once |Φ(b) − Φ(b*)| falls below this (only with a reference).
    pub stop_phi_gap: f64,
    pub record_every: usize,
    pub initial: Initial,
    /// Keep a copy of the spending matrix in each record.
    pub keep_spending: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            rule: Rule::DampedPr,
            max_iters: 1000,
            stop_phi_gap: 1e-12,
            record_every: 1,
            initial: Initial::Uniform,
            keep_spending: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phi: f64,
    pub phi_gap: Option<f64>,
    /// Σ_i KL(b*_i ‖ b_i).
    pub kl_spend: Option<f64>,
    /// KL(p* ‖ p).
    pub kl_price: Option<f64>,
    /// max_j |z_j| with the tatonnement excess demand z_j = p_j^{t} / p_j^{t-1} − 1.
    pub max_excess_demand: f64,
    pub spending: Option<SpendingState>,
}

/// Iterates `config.rule` and records the trace. Iteration 0 is the initial state.
pub fn run(market: &Market, config: &DynamicsConfig, reference: Option<&SpendingState>) -> Result<Vec<TraceRecord>> {
    if config.max_iters == 0 || config.record_every == 0 || !(config.stop_phi_gap >= 0.0) {
        return Err(Error::InvalidParams("max_iters and record_every must be positive".into()));
    }
    if let Some(w) = check_rule(market, config.rule)? {
        log::warn!("{}: {w}", config.rule);
    }
    let mut b = match &config.initial {
        Initial::Uniform => market.uniform_spending(),
        Initial::Given(s) => {
            s.check_against(market)?;
            s.clone()
        }
    };
    let ref_prices = reference.map(|r| r.prices()).transpose()?;
    let record = |iter: usize, b: &SpendingState, z: f64| -> Result<TraceRecord> {
        let (gap, ks, kp) = match (reference, &ref_prices) {
            (Some(r), Some(rp)) => (
                Some(phi_gap(market, b, r)?),
                Some(kl_rows(r, b)?),
                Some(kl(rp, &b.prices()?)?),
            ),
            _ => (None, None, None),
        };
        Ok(TraceRecord {
            iter,
            phi: phi(market, b)?.phi,
            phi_gap: gap,
            kl_spend: ks,
            kl_price: kp,
            max_excess_demand: z,
            spending: config.keep_spending.then(|| b.clone()),
        })
    };
    let mut out = vec![record(0, &b, 0.0)?];
    let mut p = b.prices()?;
    for t in 1..=config.max_iters {
        let next = step(config.rule, &b, market)?;
        let q = next.prices()?;
        let z = q.iter().zip(&p).map(|(q, p)| (q / p - 1.0).abs()).fold(0.0, f64::max);
        b = next;
        p = q;
        let stop = match reference {
            Some(r) => phi_gap(market, &b, r)?.abs() < config.stop_phi_gap,
            None => false,
        };
        if t % config.record_every == 0 || t == config.max_iters || stop {
            out.push(record(t, &b, z)?);
        }
        if stop {
            log::debug!("stopped at iteration {t}: phi gap below {}", config.stop_phi_gap);
            break;
        }
    }
    Ok(out)
}

/// b⁰, b¹, …, b^T under `rule`.
pub fn trajectory(market: &Market, rule: Rule, start: &SpendingState, iters: usize) -> Result<Vec<SpendingState>> {
    let mut out = Vec::with_capacity(iters + 1);
    out.push(start.clone());
    for _ in 0..iters {
        let next = step(rule, out.last().expect("nonempty"), market)?;
        out.push(next);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "phi", "phi_gap", "kl_spend", "kl_price", "max_excess_demand"])?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            fmt_f64(r.phi),
            fmt_opt(r.phi_gap),
            fmt_opt(r.kl_spend),
            fmt_opt(r.kl_price),
            fmt_f64(r.max_excess_demand),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub spending: SpendingState,
}

/// One JSON object per recorded iteration that kept its spending.
pub fn write_snapshots_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        if let Some(s) = &r.spending {
            let line = serde_json::to_string(&Snapshot { iter: r.iter, spending: s.clone() })?;
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn read_snapshots_jsonl(text: &str) -> Result<Vec<Snapshot>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// (iter, phi) pairs from a trace CSV.
pub fn read_trace_phi(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |k: usize| rec.get(k).unwrap_or("");
        let iter = parse(0).parse().map_err(|_| Error::InvalidParams(format!("bad iter {:?}", parse(0))))?;
        let phi = parse(1).parse().map_err(|_| Error::InvalidParams(format!("bad phi {:?}", parse(1))))?;
        out.push((iter, phi));
    }
    Ok(out)
}
