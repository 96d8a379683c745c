//! Fisher market data: buyers with CES-family utilities, spending states,
//! prices and random instance generation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CD_SUM_TOL: f64 = 1e-12;
const BUDGET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityClass {
    Linear,
    SubstitutesCes(f64),
    CobbDouglas,
    ComplementsCes(f64),
    Leontief,
}

/// Which side of the saddle a buyer sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Substitutes,
    CobbDouglas,
    Complements,
}

impl UtilityClass {
    /// Maps a raw exponent onto its class. `1` is linear, `0` Cobb-Douglas,
    /// `-inf` Leontief.
    pub fn from_rho(rho: f64) -> Option<Self> {
        if rho == 1.0 {
            Some(Self::Linear)
        } else if rho == 0.0 {
            Some(Self::CobbDouglas)
        } else if rho == f64::NEG_INFINITY {
            Some(Self::Leontief)
        } else if rho > 0.0 && rho < 1.0 {
            Some(Self::SubstitutesCes(rho))
        } else if rho < 0.0 && rho.is_finite() {
            Some(Self::ComplementsCes(rho))
        } else {
            None
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            Self::Linear => 1.0,
            Self::SubstitutesCes(r) | Self::ComplementsCes(r) => r,
            Self::CobbDouglas => 0.0,
            Self::Leontief => f64::NEG_INFINITY,
        }
    }

    pub fn block(&self) -> Block {
        match self {
            Self::Linear | Self::SubstitutesCes(_) => Block::Substitutes,
            Self::CobbDouglas => Block::CobbDouglas,
            Self::ComplementsCes(_) | Self::Leontief => Block::Complements,
        }
    }

    /// (ρ−1)/ρ for complements buyers, with the Leontief limit taken as 1.
    pub fn complements_weight(&self) -> Option<f64> {
        match *self {
            Self::ComplementsCes(r) => Some((r - 1.0) / r),
            Self::Leontief => Some(1.0),
            _ => None,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::SubstitutesCes(_) => "substitutes",
            Self::CobbDouglas => "cobb_douglas",
            Self::ComplementsCes(_) => "complements",
            Self::Leontief => "leontief",
        }
    }
}

impl fmt::Display for UtilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SubstitutesCes(r) | Self::ComplementsCes(r) => write!(f, "{}(rho={r})", self.tag()),
            _ => f.write_str(self.tag()),
        }
    }
}

/// A buyer. For Leontief buyers `weights` holds the coefficients c_ij.
#[derive(Debug, Clone, PartialEq)]
pub struct Buyer {
    pub class: UtilityClass,
    pub weights: Vec<f64>,
    pub budget: f64,
}

impl Buyer {
    pub fn new(class: UtilityClass, weights: Vec<f64>, budget: f64) -> Self {
        Self { class, weights, budget }
    }

    pub fn rho(&self) -> f64 {
        self.class.rho()
    }

    /// u_i(x). Zero quantities are handled through their limits.
    pub fn utility(&self, x: &[f64]) -> f64 {
        let a = &self.weights;
        match self.class {
            UtilityClass::Linear => a.iter().zip(x).map(|(a, x)| a * x).sum(),
            UtilityClass::CobbDouglas => a
                .iter()
                .zip(x)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, x)| x.powf(*a))
                .product(),
            UtilityClass::Leontief => a
                .iter()
                .zip(x)
                .filter(|(c, _)| **c > 0.0)
                .map(|(c, x)| x / c)
                .fold(f64::INFINITY, f64::min),
            UtilityClass::SubstitutesCes(r) | UtilityClass::ComplementsCes(r) => {
                let s: f64 = a
                    .iter()
                    .zip(x)
                    .filter(|(a, _)| **a > 0.0)
                    .map(|(a, x)| a * x.powf(r))
                    .sum();
                s.powf(1.0 / r)
            }
        }
    }

    /// Spending row of a utility-maximizing bundle at `prices`.
    pub fn best_response(&self, prices: &[f64]) -> Vec<f64> {
        let a = &self.weights;
        let e = self.budget;
        let n = a.len();
        match self.class {
            UtilityClass::CobbDouglas => a.iter().map(|a| e * a).collect(),
            UtilityClass::Linear => {
                let best = (0..n).map(|j| a[j] / prices[j]).fold(f64::NEG_INFINITY, f64::max);
                let ties: Vec<bool> = (0..n).map(|j| a[j] > 0.0 && a[j] / prices[j] == best).collect();
                let k = ties.iter().filter(|t| **t).count() as f64;
                ties.iter().map(|&t| if t { e / k } else { 0.0 }).collect()
            }
            UtilityClass::Leontief => {
                let logw: Vec<f64> = (0..n).map(|j| ln(a[j]) + prices[j].ln()).collect();
                normalize_log(&logw, e)
            }
            UtilityClass::SubstitutesCes(r) | UtilityClass::ComplementsCes(r) => {
                let logw: Vec<f64> = (0..n)
                    .map(|j| (ln(a[j]) - r * prices[j].ln()) / (1.0 - r))
                    .collect();
                normalize_log(&logw, e)
            }
        }
    }
}

/// ln with ln(0) = -inf and no NaN for zero weights.
pub(crate) fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// e · softmax(logw). Entries at -inf map to exactly 0.
pub(crate) fn normalize_log(logw: &[f64], total: f64) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logw.iter().map(|l| (l - max).exp()).sum();
    let lse = max + s.ln();
    logw.iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { total * (l - lse).exp() })
        .collect()
}

/// A validated market.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    goods: usize,
    buyers: Vec<Buyer>,
}

impl Market {
    pub fn new(goods: usize, buyers: Vec<Buyer>) -> Result<Self> {
        if goods == 0 || buyers.is_empty() {
            return Err(Error::Schema("need at least one buyer and one good".into()));
        }
        for (i, b) in buyers.iter().enumerate() {
            if b.weights.len() != goods {
                return Err(Error::DimensionMismatch(format!(
                    "buyer {i} has {} weights, market has {goods} goods",
                    b.weights.len()
                )));
            }
            if !(b.budget > 0.0 && b.budget.is_finite()) {
                return Err(Error::NegativeBudget { buyer: i, budget: b.budget });
            }
            if let Some(j) = b.weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidWeight { buyer: i, good: j, value: b.weights[j] });
            }
            if !b.weights.iter().any(|w| *w > 0.0) {
                return Err(Error::EmptySupport { buyer: i });
            }
            match b.class {
                UtilityClass::SubstitutesCes(r) if !(r > 0.0 && r < 1.0) => {
                    return Err(Error::RhoOutOfRange { buyer: i, rho: r })
                }
                UtilityClass::ComplementsCes(r) if !(r < 0.0 && r.is_finite()) => {
                    return Err(Error::RhoOutOfRange { buyer: i, rho: r })
                }
                UtilityClass::CobbDouglas => {
                    let sum: f64 = b.weights.iter().sum();
                    if (sum - 1.0).abs() > CD_SUM_TOL {
                        return Err(Error::CobbDouglasWeightsNotNormalized { buyer: i, sum });
                    }
                }
                _ => {}
            }
        }
        for j in 0..goods {
            if !buyers.iter().any(|b| b.weights[j] > 0.0) {
                return Err(Error::UndesiredGood { good: j });
            }
        }
        Ok(Self { goods, buyers })
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn num_buyers(&self) -> usize {
        self.buyers.len()
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn buyer(&self, i: usize) -> &Buyer {
        &self.buyers[i]
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.buyers.iter().map(|b| b.budget).collect()
    }

    pub fn total_budget(&self) -> f64 {
        self.buyers.iter().map(|b| b.budget).sum()
    }

    pub fn has_block(&self, block: Block) -> bool {
        self.buyers.iter().any(|b| b.class.block() == block)
    }

    pub fn has_class(&self, pred: impl Fn(&UtilityClass) -> bool) -> bool {
        self.buyers.iter().any(|b| pred(&b.class))
    }

    pub fn all_classes(&self, pred: impl Fn(&UtilityClass) -> bool) -> bool {
        self.buyers.iter().all(|b| pred(&b.class))
    }

    /// Both ρ>0 and ρ<0 buyers are present.
    pub fn is_mixed(&self) -> bool {
        self.has_block(Block::Substitutes) && self.has_block(Block::Complements)
    }

    /// Spending b_ij = e_i / n.
    pub fn uniform_spending(&self) -> SpendingState {
        let n = self.goods as f64;
        SpendingState {
            rows: self.buyers.iter().map(|b| vec![b.budget / n; self.goods]).collect(),
        }
    }

    /// Best-response spending of every buyer at `prices`.
    pub fn best_response_spending(&self, prices: &[f64]) -> Result<SpendingState> {
        check_prices(prices, self.goods)?;
        Ok(SpendingState {
            rows: self.buyers.iter().map(|b| b.best_response(prices)).collect(),
        })
    }

    /// Rescales every budget by `factor` (weights untouched).
    pub fn scale_budgets(&self, factor: f64) -> Result<Self> {
        let buyers = self
            .buyers
            .iter()
            .map(|b| Buyer::new(b.class, b.weights.clone(), b.budget * factor))
            .collect();
        Self::new(self.goods, buyers)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: MarketFile = serde_json::from_str(s)?;
        file.into_market()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MarketFile::from(self)).expect("market serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

fn check_prices(prices: &[f64], goods: usize) -> Result<()> {
    if prices.len() != goods {
        return Err(Error::DimensionMismatch(format!("{} prices for {goods} goods", prices.len())));
    }
    match prices.iter().position(|p| !(*p > 0.0)) {
        Some(good) => Err(Error::ZeroPrice { good }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ClassTag {
    Linear,
    Substitutes,
    CobbDouglas,
    Complements,
    Leontief,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuyerRecord {
    class: ClassTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    weights: Vec<f64>,
    budget: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketFile {
    goods: usize,
    buyers: Vec<BuyerRecord>,
}

impl MarketFile {
    fn into_market(self) -> Result<Market> {
        let mut buyers = Vec::with_capacity(self.buyers.len());
        for (i, r) in self.buyers.into_iter().enumerate() {
            let class = match (r.class, r.rho) {
                (ClassTag::Linear, None) => UtilityClass::Linear,
                (ClassTag::CobbDouglas, None) => UtilityClass::CobbDouglas,
                (ClassTag::Leontief, None) => UtilityClass::Leontief,
                (ClassTag::Substitutes, Some(r)) => UtilityClass::SubstitutesCes(r),
                (ClassTag::Complements, Some(r)) => UtilityClass::ComplementsCes(r),
                (tag, rho) => {
                    return Err(Error::Schema(format!(
                        "buyer {i}: class {tag:?} with rho {rho:?}"
                    )))
                }
            };
            buyers.push(Buyer::new(class, r.weights, r.budget));
        }
        Market::new(self.goods, buyers)
    }
}

impl From<&Market> for MarketFile {
    fn from(m: &Market) -> Self {
        let buyers = m
            .buyers
            .iter()
            .map(|b| {
                let (class, rho) = match b.class {
                    UtilityClass::Linear => (ClassTag::Linear, None),
                    UtilityClass::SubstitutesCes(r) => (ClassTag::Substitutes, Some(r)),
                    UtilityClass::CobbDouglas => (ClassTag::CobbDouglas, None),
                    UtilityClass::ComplementsCes(r) => (ClassTag::Complements, Some(r)),
                    UtilityClass::Leontief => (ClassTag::Leontief, None),
                };
                BuyerRecord { class, rho, weights: b.weights.clone(), budget: b.budget }
            })
            .collect();
        MarketFile { goods: m.goods, buyers }
    }
}

/// m×n spending matrix b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpendingState {
    rows: Vec<Vec<f64>>,
}

impl SpendingState {
    /// Checks shape, finiteness and nonnegativity only.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("spending matrix is empty or ragged".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if let Some(j) = r.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidSpending(format!("b[{i}][{j}] = {}", r[j])));
            }
        }
        Ok(Self { rows })
    }

    /// As `from_rows`, plus shape and budget checks against `market`.
    pub fn for_market(market: &Market, rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self::from_rows(rows)?;
        s.check_against(market)?;
        Ok(s)
    }

    pub fn check_against(&self, market: &Market) -> Result<()> {
        if self.rows.len() != market.num_buyers() || self.goods() != market.goods() {
            return Err(Error::DimensionMismatch(format!(
                "spending is {}x{}, market is {}x{}",
                self.rows.len(),
                self.goods(),
                market.num_buyers(),
                market.goods()
            )));
        }
        for (i, (r, b)) in self.rows.iter().zip(market.buyers()).enumerate() {
            let s: f64 = r.iter().sum();
            if (s - b.budget).abs() > BUDGET_TOL * b.budget * r.len().max(1) as f64 {
                return Err(Error::InvalidSpending(format!(
                    "row {i} sums to {s}, budget is {}",
                    b.budget
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.rows[i]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn num_buyers(&self) -> usize {
        self.rows.len()
    }

    pub fn goods(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Column sums in buyer order.
    pub fn price_sums(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.goods()];
        for r in &self.rows {
            for (pj, b) in p.iter_mut().zip(r) {
                *pj += b;
            }
        }
        p
    }

    /// p_j = Σ_i b_ij; errors if some price is zero.
    pub fn prices(&self) -> Result<Vec<f64>> {
        let p = self.price_sums();
        match p.iter().position(|v| *v <= 0.0) {
            Some(good) => Err(Error::ZeroPrice { good }),
            None => Ok(p),
        }
    }

    /// x_ij = b_ij / p_j.
    pub fn allocation(&self) -> Result<Vec<Vec<f64>>> {
        let p = self.prices()?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.iter().zip(&p).map(|(b, p)| b / p).collect())
            .collect())
    }

    /// z_j = Σ_i x_ij − 1.
    pub fn excess_demand(&self) -> Result<Vec<f64>> {
        let x = self.allocation()?;
        let mut z = vec![-1.0; self.goods()];
        for r in &x {
            for (zj, v) in z.iter_mut().zip(r) {
                *zj += v;
            }
        }
        Ok(z)
    }

    /// Copy of `self` with the rows of buyers in `block` replaced from `other`.
    pub fn with_block_from(&self, market: &Market, block: Block, other: &SpendingState) -> Self {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .zip(market.buyers())
            .map(|((mine, theirs), b)| {
                if b.class.block() == block {
                    theirs.clone()
                } else {
                    mine.clone()
                }
            })
            .collect();
        Self { rows }
    }

    pub fn max_abs_diff(&self, other: &SpendingState) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// How exponents are drawn by [`generate_random`].
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSpec {
    /// ρ uniform on [lo, hi] ⊂ (0, 1]; a draw of exactly 1 is linear.
    Substitutes { lo: f64, hi: f64 },
    /// ρ uniform on [lo, hi] ⊂ (−∞, 0).
    Complements { lo: f64, hi: f64 },
    /// Alternating substitutes and complements buyers.
    Mixed,
    /// Cycles substitutes, Cobb-Douglas, complements buyers.
    FullRange,
    /// ρ drawn uniformly from a finite list (1 linear, 0 Cobb-Douglas, -inf Leontief).
    Grid(Vec<f64>),
    Fixed(f64),
    Linear,
    CobbDouglas,
    Leontief,
}

const MIXED_SUBST: (f64, f64) = (0.2, 0.9);
const MIXED_COMP: (f64, f64) = (-2.0, -0.2);

impl FromStr for RhoSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find([':', '(']) {
            Some(k) => (&s[..k], s[k + 1..].trim_end_matches(')')),
            None => (s, ""),
        };
        let bad = || Error::InvalidParams(format!("cannot parse rho spec {s:?}"));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .map(|t| match t.trim() {
                    "-inf" => Ok(f64::NEG_INFINITY),
                    t => t.parse::<f64>().map_err(|_| bad()),
                })
                .collect()
        };
        let pair = || -> Result<(f64, f64)> {
            match nums()?.as_slice() {
                [lo, hi] if lo <= hi => Ok((*lo, *hi)),
                _ => Err(bad()),
            }
        };
        let spec = match name {
            "substitutes" => {
                let (lo, hi) = pair()?;
                if !(lo > 0.0 && hi <= 1.0) {
                    return Err(bad());
                }
                Self::Substitutes { lo, hi }
            }
            "complements" => {
                let (lo, hi) = pair()?;
                if !(hi < 0.0 && lo.is_finite()) {
                    return Err(bad());
                }
                Self::Complements { lo, hi }
            }
            "mixed" => Self::Mixed,
            "full-range" | "full_range" => Self::FullRange,
            "linear" => Self::Linear,
            "cobb-douglas" | "cobb_douglas" => Self::CobbDouglas,
            "leontief" => Self::Leontief,
            "grid" => {
                let v = nums()?;
                if v.is_empty() || v.iter().any(|r| UtilityClass::from_rho(*r).is_none()) {
                    return Err(bad());
                }
                Self::Grid(v)
            }
            "fixed" => match nums()?.as_slice() {
                [r] if UtilityClass::from_rho(*r).is_some() => Self::Fixed(*r),
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub buyers: usize,
    pub goods: usize,
    pub rho: RhoSpec,
    pub seed: u64,
}

/// Seeded random market: weights log-uniform on [0.1, 10] (Cobb-Douglas
/// rows normalized), budgets uniform on [0.5, 2].
pub fn generate_random(params: &GenParams) -> Result<Market> {
    let (m, n) = (params.buyers, params.goods);
    if m == 0 || n == 0 {
        return Err(Error::InvalidParams("m and n must be at least 1".into()));
    }
    match params.rho {
        RhoSpec::Mixed if m < 2 => {
            return Err(Error::InvalidParams("mixed markets need at least 2 buyers".into()))
        }
        RhoSpec::FullRange if m < 3 => {
            return Err(Error::InvalidParams("full-range markets need at least 3 buyers".into()))
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut buyers = Vec::with_capacity(m);
    for i in 0..m {
        let rho = draw_rho(&params.rho, i, &mut rng);
        let class = UtilityClass::from_rho(rho)
            .ok_or_else(|| Error::InvalidParams(format!("rho {rho} has no utility class")))?;
        let mut weights: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.random_range(-1.0..=1.0)))
            .collect();
        if class == UtilityClass::CobbDouglas {
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
        }
        let budget = rng.random_range(0.5..=2.0);
        buyers.push(Buyer::new(class, weights, budget));
    }
    Market::new(n, buyers)
}

fn draw_rho(spec: &RhoSpec, i: usize, rng: &mut ChaCha8Rng) -> f64 {
    match spec {
        RhoSpec::Substitutes { lo, hi } | RhoSpec::Complements { lo, hi } => {
            if lo == hi {
                *lo
            } else {
                rng.random_range(*lo..=*hi)
            }
        }
        RhoSpec::Mixed => {
            let (lo, hi) = if i % 2 == 0 { MIXED_SUBST } else { MIXED_COMP };
            rng.random_range(lo..=hi)
        }
        RhoSpec::FullRange => match i % 3 {
            0 => rng.random_range(MIXED_SUBST.0..=MIXED_SUBST.1),
            1 => 0.0,
            _ => rng.random_range(MIXED_COMP.0..=MIXED_COMP.1),
        },
        RhoSpec::Grid(v) => v[rng.random_range(0..v.len())],
        RhoSpec::Fixed(r) => *r,
        RhoSpec::Linear => 1.0,
        RhoSpec::CobbDouglas => 0.0,
        RhoSpec::Leontief => f64::NEG_INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycling_market() -> Market {
        let b = |_| Buyer::new(UtilityClass::ComplementsCes(-1.0), vec![0.5, 0.5], 1.0);
        Market::new(2, (0..2).map(b).collect()).unwrap()
    }

    #[test]
    fn validates_cycling_market() {
        let m = cycling_market();
        assert_eq!(m.num_buyers(), 2);
    }

    #[test]
    fn rejects_bad_markets() {
        let cd = Buyer::new(UtilityClass::CobbDouglas, vec![0.6, 0.3], 1.0);
        assert!(matches!(
            Market::new(2, vec![cd]),
            Err(Error::CobbDouglasWeightsNotNormalized { .. })
        ));
        let neg = Buyer::new(UtilityClass::Linear, vec![1.0, 1.0], -1.0);
        assert!(matches!(Market::new(2, vec![neg]), Err(Error::NegativeBudget { .. })));
        let empty = Buyer::new(UtilityClass::Linear, vec![0.0, 0.0], 1.0);
        assert!(matches!(Market::new(2, vec![empty]), Err(Error::EmptySupport { .. })));
        let half = Buyer::new(UtilityClass::Linear, vec![1.0, 0.0], 1.0);
        assert!(matches!(Market::new(2, vec![half]), Err(Error::UndesiredGood { good: 1 })));
        let rho = Buyer::new(UtilityClass::SubstitutesCes(1.5), vec![1.0, 1.0], 1.0);
        assert!(matches!(Market::new(2, vec![rho]), Err(Error::RhoOutOfRange { .. })));
    }

    #[test]
    fn uniform_spending_splits_budget() {
        let m = Market::new(
            4,
            vec![Buyer::new(UtilityClass::Linear, vec![1.0; 4], 2.0)],
        )
        .unwrap();
        assert_eq!(m.uniform_spending().row(0), &[0.5; 4]);
        let c = cycling_market();
        assert_eq!(c.uniform_spending().rows(), &[vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn prices_of_cycling_start() {
        let b = SpendingState::from_rows(vec![vec![0.25, 0.75], vec![0.75, 0.25]]).unwrap();
        assert_eq!(b.prices().unwrap(), vec![1.0, 1.0]);
        let lone = SpendingState::from_rows(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(lone.prices(), Err(Error::ZeroPrice { good: 1 })));
    }

    #[test]
    fn utility_examples() {
        let ces = Buyer::new(UtilityClass::SubstitutesCes(0.5), vec![0.5, 0.5], 1.0);
        assert!((ces.utility(&[1.0, 1.0]) - 1.0).abs() < 1e-15);
        let leo = Buyer::new(UtilityClass::Leontief, vec![1.0, 2.0], 1.0);
        assert_eq!(leo.utility(&[2.0, 2.0]), 1.0);
        let cd = Buyer::new(UtilityClass::CobbDouglas, vec![0.5, 0.5], 1.0);
        assert!((cd.utility(&[4.0, 1.0]) - 2.0).abs() < 1e-15);
        let comp = Buyer::new(UtilityClass::ComplementsCes(-1.0), vec![0.5, 0.5], 1.0);
        assert_eq!(comp.utility(&[0.0, 1.0]), 0.0);
    }

    #[test]
    fn best_response_examples() {
        let comp = Buyer::new(UtilityClass::ComplementsCes(-1.0), vec![0.5, 0.5], 1.0);
        assert_eq!(comp.best_response(&[1.0, 1.0]), vec![0.5, 0.5]);
        let leo = Buyer::new(UtilityClass::Leontief, vec![1.0, 3.0], 4.0);
        let b = leo.best_response(&[1.0, 1.0]);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 3.0).abs() < 1e-14);
        let lin = Buyer::new(UtilityClass::Linear, vec![1.0, 2.0, 2.0], 1.0);
        assert_eq!(lin.best_response(&[1.0, 1.0, 1.0]), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let m = generate_random(&GenParams { buyers: 2, goods: 3, rho: RhoSpec::FullRange, seed: 3 })
            .unwrap_err();
        assert!(matches!(m, Error::InvalidParams(_)));
        let m = generate_random(&GenParams { buyers: 6, goods: 3, rho: RhoSpec::FullRange, seed: 3 })
            .unwrap();
        let back = Market::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"goods":1,"buyers":[{"class":"linear","weights":[1],"budget":1,"x":2}]}"#;
        assert!(Market::from_json(bad).is_err());
        let rho_on_linear = r#"{"goods":1,"buyers":[{"class":"linear","rho":1,"weights":[1],"budget":1}]}"#;
        assert!(matches!(Market::from_json(rho_on_linear), Err(Error::Schema(_))));
    }

    #[test]
    fn rho_spec_parsing() {
        assert_eq!(
            "substitutes(0.2,0.8)".parse::<RhoSpec>().unwrap(),
            RhoSpec::Substitutes { lo: 0.2, hi: 0.8 }
        );
        assert_eq!(
            "substitutes:0.2,0.8".parse::<RhoSpec>().unwrap(),
            RhoSpec::Substitutes { lo: 0.2, hi: 0.8 }
        );
        assert_eq!(
            "grid:1,0,-inf".parse::<RhoSpec>().unwrap(),
            RhoSpec::Grid(vec![1.0, 0.0, f64::NEG_INFINITY])
        );
        assert!("complements:0.1,0.5".parse::<RhoSpec>().is_err());
        assert!("wobbly".parse::<RhoSpec>().is_err());
    }

    #[test]
    fn generation_respects_spec() {
        let p = GenParams {
            buyers: 6,
            goods: 4,
            rho: RhoSpec::Substitutes { lo: 0.2, hi: 0.8 },
            seed: 42,
        };
        let m = generate_random(&p).unwrap();
        assert_eq!(m, generate_random(&p).unwrap());
        assert!(m.buyers().iter().all(|b| (0.2..=0.8).contains(&b.rho())));
        let mixed = generate_random(&GenParams { rho: RhoSpec::Mixed, ..p.clone() }).unwrap();
        assert!(mixed.is_mixed());
        let one = GenParams { buyers: 1, rho: RhoSpec::Mixed, ..p };
        assert!(generate_random(&one).is_err());
    }
}
