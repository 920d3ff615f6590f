//! E-variables and e-collections.
//!
//! Finite problems carry exact e-value tables ([`EValueTable`]); continuous
//! models use float evaluators. The normal location e-collection is
//! evaluated in log space from the closed form
//! `ln S_θ = −nU²/2 + ln cosh(n(θ̂−θ)U)`.

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{check_level, invalid, GnpError, Result};
use crate::gnp::{fmt_rat, rat_to_f64, Pmf, Rational};

/// One exact e-value.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactEValue {
    Finite(Rational),
    /// `1/√p − 1` for the stored p-value, compared exactly without roots.
    Calibrated(Rational),
    Infinite,
}

impl ExactEValue {
    /// True iff `loss ≤ self`.
    pub fn admits(&self, loss: &Rational) -> bool {
        match self {
            ExactEValue::Finite(v) => loss <= v,
            ExactEValue::Calibrated(p) => calibrated_admits(p, loss),
            ExactEValue::Infinite => true,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExactEValue::Finite(v) => rat_to_f64(v),
            ExactEValue::Calibrated(p) => calibrate_pvalue(rat_to_f64(p)).unwrap_or(f64::NAN),
            ExactEValue::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExactEValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactEValue::Finite(v) => f.write_str(&fmt_rat(v)),
            ExactEValue::Calibrated(p) => write!(f, "1/sqrt({}) - 1", fmt_rat(p)),
            ExactEValue::Infinite => f.write_str("inf"),
        }
    }
}

/// `loss ≤ 1/√p − 1` ⟺ `p·(loss+1)² ≤ 1` for `loss ≥ 0`, `p > 0`.
pub fn calibrated_admits(p: &Rational, loss: &Rational) -> bool {
    if !p.is_positive() {
        return true;
    }
    if loss.is_negative() {
        return true;
    }
    let t = loss + Rational::one();
    p * &t * &t <= Rational::one()
}

/// E-variable on a finite outcome space, one value per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EValueTable {
    values: Vec<ExactEValue>,
}

impl EValueTable {
    pub fn new(values: Vec<ExactEValue>) -> Result<Self> {
        for v in &values {
            let bad = match v {
                ExactEValue::Finite(r) => r.is_negative(),
                ExactEValue::Calibrated(p) => p.is_negative() || *p > Rational::one(),
                ExactEValue::Infinite => false,
            };
            if bad {
                return Err(invalid("evariable", format!("value {v} is not a valid e-value")));
            }
        }
        Ok(EValueTable { values })
    }

    pub fn from_rationals(values: Vec<Rational>) -> Self {
        EValueTable::new(values.into_iter().map(ExactEValue::Finite).collect()).expect("nonnegative e-values")
    }

    /// `1/√p − 1` at each p-value.
    pub fn calibrated(pvals: &[Rational]) -> Result<Self> {
        EValueTable::new(
            pvals
                .iter()
                .map(|p| if p.is_zero() { ExactEValue::Infinite } else { ExactEValue::Calibrated(p.clone()) })
                .collect(),
        )
    }

    pub fn np(alpha: &Rational, pvals: &[Rational]) -> Result<Self> {
        if !(alpha.is_positive() && *alpha < Rational::one()) {
            return Err(invalid("alpha", format!("{} is not in (0, 1)", fmt_rat(alpha))));
        }
        Ok(EValueTable::from_rationals(pvals.iter().map(|p| np_evalue_exact(alpha, p)).collect()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, y: usize) -> &ExactEValue {
        &self.values[y]
    }

    pub fn values(&self) -> &[ExactEValue] {
        &self.values
    }

    /// All values as rationals; errors if some value is not rational.
    pub fn exact_values(&self) -> Result<Vec<Rational>> {
        self.values
            .iter()
            .map(|v| match v {
                ExactEValue::Finite(r) => Ok(r.clone()),
                other => Err(GnpError::Structural(format!("e-value {other} is not an exact rational"))),
            })
            .collect()
    }

    /// `E_P[S]` exactly; `None` if some value with positive mass is not rational.
    pub fn expectation(&self, pmf: &Pmf) -> Option<Rational> {
        let mut total = Rational::zero();
        for (v, m) in self.values.iter().zip(&pmf.p) {
            if m.is_zero() {
                continue;
            }
            match v {
                ExactEValue::Finite(r) => total += m * r,
                _ => return None,
            }
        }
        Some(total)
    }

    /// `E_P[S]` in floats, for tables with irrational entries.
    pub fn expectation_f64(&self, pmf: &Pmf) -> f64 {
        self.values
            .iter()
            .zip(&pmf.p)
            .filter(|(_, m)| !m.is_zero())
            .map(|(v, m)| rat_to_f64(m) * v.to_f64())
            .sum()
    }
}

/// The Neyman-Pearson e-variable `1/α · 1{pval ≤ α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpEVariable {
    alpha: f64,
}

pub fn np_evariable(alpha: f64) -> Result<NpEVariable> {
    check_level("alpha", alpha)?;
    Ok(NpEVariable { alpha })
}

impl NpEVariable {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, pval: f64) -> f64 {
        if pval <= self.alpha {
            1.0 / self.alpha
        } else {
            0.0
        }
    }

    pub fn codomain(&self) -> [f64; 2] {
        [0.0, 1.0 / self.alpha]
    }
}

pub fn np_evalue_exact(alpha: &Rational, pval: &Rational) -> Rational {
    if pval <= alpha {
        alpha.recip()
    } else {
        Rational::zero()
    }
}

/// Likelihood ratio `p1(y)/p0(y)` of two densities.
pub struct LrEVariable<F0, F1> {
    p0: F0,
    p1: F1,
}

pub fn lr_evariable<F0, F1>(p0: F0, p1: F1) -> LrEVariable<F0, F1>
where
    F0: Fn(f64) -> f64,
    F1: Fn(f64) -> f64,
{
    LrEVariable { p0, p1 }
}

impl<F0, F1> LrEVariable<F0, F1>
where
    F0: Fn(f64) -> f64,
    F1: Fn(f64) -> f64,
{
    pub fn eval(&self, y: f64) -> Result<f64> {
        let (d0, d1) = ((self.p0)(y), (self.p1)(y));
        if d1 == 0.0 {
            return Ok(0.0);
        }
        if d0 == 0.0 {
            return Err(GnpError::UndefinedRatio { at: y });
        }
        Ok(d1 / d0)
    }
}

/// Likelihood ratio of `N(θ₁, 1)` against `N(θ₀, 1)` for `n` observations
/// with mean `mean`, evaluated in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLr {
    pub theta0: f64,
    pub theta1: f64,
}

impl NormalLr {
    pub fn ln_eval(&self, summary: SampleSummary) -> f64 {
        let n = summary.n as f64;
        let d = self.theta1 - self.theta0;
        n * (d * summary.mean - 0.5 * (self.theta1 * self.theta1 - self.theta0 * self.theta0))
    }

    pub fn eval(&self, summary: SampleSummary) -> f64 {
        self.ln_eval(summary).exp()
    }
}

/// The calibrator `p ↦ 1/√p − 1`; `+∞` at `p = 0`.
pub fn calibrate_pvalue(p: f64) -> Result<f64> {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("{p} is not in (0, 1]")));
    }
    if p == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / p.sqrt() - 1.0)
}

/// Mean and length of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub n: u64,
}

impl SampleSummary {
    pub fn new(mean: f64, n: u64) -> Self {
        SampleSummary { mean, n }
    }

    pub fn of(xs: &[f64]) -> Self {
        SampleSummary { mean: xs.iter().sum::<f64>() / xs.len() as f64, n: xs.len() as u64 }
    }
}

/// A θ-indexed family of e-variables.
pub trait ECollection {
    fn ln_e_value(&self, theta: f64, summary: SampleSummary) -> f64;

    fn e_value(&self, theta: f64, summary: SampleSummary) -> f64 {
        self.ln_e_value(theta, summary).exp()
    }
}

/// Which half of the mixture is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    TwoSided,
    /// `S⁺_θ`, powered against `θ + U`.
    Upper,
    /// `S⁻_θ`, powered against `θ − U`.
    Lower,
}

/// The normal location e-collection tuned to `(n*, α*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalECollection {
    n_star: f64,
    alpha_star: f64,
    side: Side,
}

pub fn normal_ecollection(n_star: f64, alpha_star: f64) -> Result<NormalECollection> {
    NormalECollection::new(n_star, alpha_star, Side::TwoSided)
}

impl NormalECollection {
    pub fn new(n_star: f64, alpha_star: f64, side: Side) -> Result<Self> {
        if !(n_star >= 1.0 && n_star.is_finite()) {
            return Err(invalid("n_star", format!("{n_star} is not a finite number ≥ 1")));
        }
        check_level("alpha_star", alpha_star)?;
        Ok(NormalECollection { n_star, alpha_star, side })
    }

    pub fn n_star(&self) -> f64 {
        self.n_star
    }

    pub fn alpha_star(&self) -> f64 {
        self.alpha_star
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// `ln(2/α*)` two-sided, `ln(1/α*)` one-sided.
    pub fn log_level_star(&self) -> f64 {
        match self.side {
            Side::TwoSided => (2.0 / self.alpha_star).ln(),
            Side::Upper | Side::Lower => (1.0 / self.alpha_star).ln(),
        }
    }

    /// Distance `U = θ⁺ − θ = θ − θ⁻`.
    pub fn u(&self) -> f64 {
        (2.0 * self.log_level_star() / self.n_star).sqrt()
    }

    pub fn theta_plus(&self, theta: f64) -> f64 {
        theta + self.u()
    }

    pub fn theta_minus(&self, theta: f64) -> f64 {
        theta - self.u()
    }

    /// `ln S_θ` from `n` and the deviation sum `n(θ̂−θ)`.
    pub fn ln_e_value_from_deviation(&self, n: u64, deviation_sum: f64) -> f64 {
        let u = self.u();
        let base = -(n as f64) * u * u / 2.0;
        let a = deviation_sum * u;
        match self.side {
            Side::Upper => base + a,
            Side::Lower => base - a,
            Side::TwoSided => base + ln_cosh(a),
        }
    }

    /// `c = (n*/n)·ln(2/α)/ln(2/α*)` for a target level α.
    pub fn c(&self, n: f64, alpha: f64) -> f64 {
        (self.n_star / n) * self.log_level(alpha) / self.log_level_star()
    }

    /// `ln(2/α)` two-sided, `ln(1/α)` one-sided.
    pub fn log_level(&self, alpha: f64) -> f64 {
        match self.side {
            Side::TwoSided => (2.0 / alpha).ln(),
            Side::Upper | Side::Lower => (1.0 / alpha).ln(),
        }
    }
}

impl ECollection for NormalECollection {
    fn ln_e_value(&self, theta: f64, summary: SampleSummary) -> f64 {
        let n = summary.n as f64;
        self.ln_e_value_from_deviation(summary.n, n * (summary.mean - theta))
    }
}

/// `g(c) = ½(√c + 1/√c)`.
pub fn g(c: f64) -> f64 {
    0.5 * (c.sqrt() + 1.0 / c.sqrt())
}

/// `ln cosh(a)` without overflow.
pub fn ln_cosh(a: f64) -> f64 {
    let a = a.abs();
    a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
}

/// `S_θ` on every prefix of `xs`.
pub fn eprocess_trace(coll: &NormalECollection, theta: f64, xs: &[f64]) -> Vec<f64> {
    let mut dev = 0.0;
    xs.iter()
        .enumerate()
        .map(|(k, x)| {
            dev += x - theta;
            coll.ln_e_value_from_deviation(k as u64 + 1, dev).exp()
        })
        .collect()
}
