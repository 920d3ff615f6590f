//! Confidence intervals, the e-posterior and the credible-tail curve for the
//! normal location model with unit variance.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::evariables::{g, ECollection, NormalECollection, SampleSummary};
use crate::gnp::RiskBudget;
use crate::normal;

const BISECTION_TOL: f64 = 1e-9;
const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntervalMethod {
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "e-sufficient-bound")]
    ESufficient,
    #[serde(rename = "e-exact")]
    EExact,
}

impl IntervalMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntervalMethod::Standard => "standard",
            IntervalMethod::ESufficient => "e-sufficient-bound",
            IntervalMethod::EExact => "e-exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    /// The α the interval was built for (`1/b` for interval-loss weights).
    pub level: f64,
    pub method: IntervalMethod,
    /// Set when the exact boundary search fell back to the sufficient bound.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn is_subset_of(&self, other: &ConfidenceInterval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("interval serializes")
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "sample size must be at least 1"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is not in (0, 1]")))
    }
}

fn centered(mle: f64, half: f64, level: f64, method: IntervalMethod) -> ConfidenceInterval {
    ConfidenceInterval { lo: mle - half, hi: mle + half, level, method, fallback: false }
}

/// `mle ± z_{α/2}/√n`.
pub fn standard_ci(mle: f64, n: u64, alpha: f64) -> Result<ConfidenceInterval> {
    check_n(n)?;
    check_alpha(alpha)?;
    let z = normal::quantile(1.0 - alpha / 2.0);
    Ok(centered(mle, z / (n as f64).sqrt(), alpha, IntervalMethod::Standard))
}

/// Half-width `√(2/n · ln(2/α))·g(c)` of the sufficient-bound e-interval.
pub fn e_sufficient_half_width(n: u64, alpha: f64, coll: &NormalECollection) -> Result<f64> {
    check_n(n)?;
    check_alpha(alpha)?;
    let nf = n as f64;
    let c = coll.c(nf, alpha);
    Ok((2.0 / nf * coll.log_level(alpha)).sqrt() * g(c))
}

pub fn e_ci_sufficient(mle: f64, n: u64, alpha: f64, coll: &NormalECollection) -> Result<ConfidenceInterval> {
    let half = e_sufficient_half_width(n, alpha, coll)?;
    Ok(centered(mle, half, alpha, IntervalMethod::ESufficient))
}

/// `{θ : S_θ < 1/α}` with the boundary located by bisection.
pub fn e_ci_exact(mle: f64, n: u64, alpha: f64, coll: &NormalECollection) -> Result<ConfidenceInterval> {
    let suff = e_sufficient_half_width(n, alpha, coll)?;
    let summary = SampleSummary::new(mle, n);
    let target = -alpha.ln();
    let f = |delta: f64| coll.ln_e_value(mle + delta, summary) - target;
    let (mut lo, mut hi) = (0.0, 2.0 * suff + 1.0 / (n as f64).sqrt());
    if !(f(lo) < 0.0 && f(hi) >= 0.0) {
        let mut ci = centered(mle, suff, alpha, IntervalMethod::EExact);
        ci.fallback = true;
        return Ok(ci);
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(centered(mle, hi.min(suff), alpha, IntervalMethod::EExact))
}

/// Evaluation points `lo + i·step`, `i = 0..=⌊(hi−lo)/step⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    points: Vec<f64>,
}

impl ThetaGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("grid", format!("[{lo}, {hi}] is not a finite range")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("step", format!("{step} is not a positive step")));
        }
        // absorb representation error in the ratio, e.g. 1.0/0.1
        let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
        Ok(ThetaGrid { points: (0..count).map(|i| lo + i as f64 * step).collect() })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("grid", "grid is empty"));
        }
        if points.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(invalid("grid", "grid is not sorted"));
        }
        Ok(ThetaGrid { points })
    }

    /// Replaces points within `tol` of `anchor` by `anchor` itself.
    pub fn snapped(mut self, anchor: f64, tol: f64) -> Self {
        for p in &mut self.points {
            if (*p - anchor).abs() <= tol {
                *p = anchor;
            }
        }
        self
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EPosteriorCurve {
    pub grid: Vec<f64>,
    /// `1/S_θ(y)`.
    pub values: Vec<f64>,
    /// `min(1, 1/S_θ(y))`.
    pub capped: Vec<f64>,
}

pub fn e_posterior_curve(coll: &NormalECollection, summary: SampleSummary, grid: &ThetaGrid) -> EPosteriorCurve {
    let values: Vec<f64> = grid.points.par_iter().map(|&t| (-coll.ln_e_value(t, summary)).exp()).collect();
    let capped = values.iter().map(|v| v.min(1.0)).collect();
    EPosteriorCurve { grid: grid.points.clone(), values, capped }
}

/// `2·W(θ̄ ≥ θ | y)` mirrored about the MLE, for the `N(mle, 1/n)` posterior.
pub fn cd_tail_curve(mle: f64, n: u64, grid: &ThetaGrid) -> Vec<f64> {
    let rn = (n as f64).sqrt();
    grid.points.par_iter().map(|&t| cd_tail(mle, rn, t)).collect()
}

fn cd_tail(mle: f64, rn: f64, theta: f64) -> f64 {
    (2.0 * normal::sf((theta - mle).abs() * rn)).min(1.0)
}

/// Half-width `A = √(2/n)·√(ln 2b)·g(c)` for interval-loss weight `b`.
pub fn e_ci_halfwidth_for_b(n: u64, b: f64, coll: &NormalECollection) -> Result<f64> {
    if !(b >= 1.0 && b.is_finite()) {
        return Err(invalid("b", format!("{b} is not a finite weight ≥ 1")));
    }
    e_sufficient_half_width(n, 1.0 / b, coll)
}

/// `L_b(θ, [θ_L, θ_R]) = b·1{θ ∉ [θ_L, θ_R]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalLoss {
    b: f64,
}

impl IntervalLoss {
    pub fn new(b: f64) -> Result<Self> {
        if !(b >= 1.0) {
            return Err(invalid("b", format!("{b} is not ≥ 1")));
        }
        Ok(IntervalLoss { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn eval(&self, theta: f64, interval: &ConfidenceInterval) -> f64 {
        if interval.contains(theta) {
            0.0
        } else {
            self.b
        }
    }
}

const REFINEMENT_POINTS: usize = 2000;

/// `b · sup_{θ ∉ interval} 1/S_θ(y) ≤ ℓ`, checked at the interval endpoints
/// and on a grid over ten standard errors either side of it.
pub fn check_eposterior_bound(
    coll: &NormalECollection,
    summary: SampleSummary,
    loss: &IntervalLoss,
    interval: &ConfidenceInterval,
    budget: &RiskBudget,
) -> bool {
    let ell = budget.ell_f64();
    if loss.b <= ell {
        // the constant e-value 1 already certifies this
        return true;
    }
    let reach = 10.0 / (summary.n.max(1) as f64).sqrt();
    let mut probes = vec![interval.lo, interval.hi];
    if !interval.contains(summary.mean) {
        probes.push(summary.mean);
    }
    for i in 1..=REFINEMENT_POINTS {
        let d = reach * i as f64 / REFINEMENT_POINTS as f64;
        probes.push(interval.lo - d);
        probes.push(interval.hi + d);
    }
    let sup = probes
        .iter()
        .map(|&t| (-coll.ln_e_value(t, summary)).exp())
        .fold(0.0f64, f64::max);
    loss.b * sup <= ell
}

/// `%.17g`-style rendering: 17 significant digits, trailing zeros dropped.
pub fn fmt_g17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_curve_csv<W: Write>(mut out: W, curve: &EPosteriorCurve, cd_tail: &[f64]) -> io::Result<()> {
    writeln!(out, "theta,e_posterior_capped,cd_tail")?;
    for ((t, e), c) in curve.grid.iter().zip(&curve.capped).zip(cd_tail) {
        writeln!(out, "{},{},{}", fmt_g17(*t), fmt_g17(*e), fmt_g17(*c))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evariables::normal_ecollection;

    fn coll() -> NormalECollection {
        normal_ecollection(100.0, 0.05).unwrap()
    }

    #[test]
    fn standard_endpoints() {
        let ci = standard_ci(1.0, 100, 0.05).unwrap();
        assert!((ci.hi - 1.196).abs() < 5e-4);
        assert!((ci.lo - 0.804).abs() < 5e-4);
        let unit = standard_ci(0.0, 1, 0.05).unwrap();
        assert!((unit.hi - 1.959_963_984_540_054).abs() < 1e-12);
        let flat = standard_ci(0.3, 10, 1.0).unwrap();
        assert_eq!((flat.lo, flat.hi), (0.3, 0.3));
        assert!(standard_ci(0.0, 0, 0.05).is_err());
    }

    #[test]
    fn sufficient_endpoints() {
        let ci = e_ci_sufficient(1.0, 100, 0.05, &coll()).unwrap();
        assert!((ci.hi - 1.272).abs() < 5e-4);
        assert!((ci.half_width() - 0.271_620_303_148_123_9).abs() < 1e-14);
        let big = e_sufficient_half_width(400, 0.05, &coll()).unwrap();
        assert!((big - 0.169_762_689_467_577_4).abs() < 1e-14);
        assert!((coll().c(400.0, 0.05) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exact_is_inside_sufficient() {
        let c = coll();
        let exact = e_ci_exact(1.0, 100, 0.05, &c).unwrap();
        let suff = e_ci_sufficient(1.0, 100, 0.05, &c).unwrap();
        assert!(exact.is_subset_of(&suff));
        assert!(!exact.fallback);
        assert!((exact.hi - 1.272).abs() < 0.01);
        assert!((exact.hi - 1.271_620_288_766_826_8).abs() < 1e-8);
        let wide = e_ci_exact(1.0, 100, 1.0, &c).unwrap();
        assert!(wide.contains(1.0) && wide.hi > 1.0);
    }

    #[test]
    fn capped_posterior_hits_alpha_at_exact_endpoints() {
        let c = coll();
        let exact = e_ci_exact(1.0, 100, 0.05, &c).unwrap();
        let grid = ThetaGrid::from_points(vec![exact.lo, 1.0, exact.hi]).unwrap();
        let curve = e_posterior_curve(&c, SampleSummary::new(1.0, 100), &grid);
        assert!((curve.capped[0] - 0.05).abs() < 1e-8);
        assert!((curve.capped[2] - 0.05).abs() < 1e-8);
        assert!((curve.values[1] - 40.0).abs() < 1e-12);
        assert_eq!(curve.capped[1], 1.0);
    }

    #[test]
    fn cd_tail_values() {
        let grid = ThetaGrid::from_points(vec![1.0, 1.0 + 0.195_996_398_454_005_4, 1.271_620_303_148_123_9]).unwrap();
        let tail = cd_tail_curve(1.0, 100, &grid);
        assert_eq!(tail[0], 1.0);
        assert!((tail[1] - 0.05).abs() < 1e-12);
        assert!((tail[2] - 0.006_603_540_795_690_008).abs() < 1e-13);
    }

    #[test]
    fn halfwidth_for_b() {
        let c = coll();
        assert!((e_ci_halfwidth_for_b(100, 20.0, &c).unwrap() - 0.271_620_303_148_123_9).abs() < 1e-14);
        assert!((e_ci_halfwidth_for_b(100, 1.0, &c).unwrap() - 0.161_329_126_868_848_7).abs() < 1e-14);
        assert!(e_ci_halfwidth_for_b(100, 0.5, &c).is_err());
    }

    #[test]
    fn eposterior_bound_cases() {
        let c = coll();
        let s = SampleSummary::new(1.0, 100);
        let budget = RiskBudget::default();
        let loss = IntervalLoss::new(20.0).unwrap();
        let a = e_ci_halfwidth_for_b(100, 20.0, &c).unwrap();
        let ok = centered(1.0, a, 0.05, IntervalMethod::ESufficient);
        assert!(check_eposterior_bound(&c, s, &loss, &ok, &budget));
        let point = centered(1.0, 0.0, 0.05, IntervalMethod::ESufficient);
        assert!(!check_eposterior_bound(&c, s, &loss, &point, &budget));
        let unit = IntervalLoss::new(1.0).unwrap();
        assert!(check_eposterior_bound(&c, s, &unit, &point, &budget));
    }

    #[test]
    fn grid_counts() {
        assert_eq!(ThetaGrid::new(0.0, 1.0, 0.1).unwrap().len(), 11);
        assert_eq!(ThetaGrid::new(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert_eq!(ThetaGrid::new(2.0, 2.0, 0.1).unwrap().len(), 1);
        assert!(ThetaGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(ThetaGrid::from_points(vec![]).is_err());
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.272), "1.272");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        for x in [0.123_456_789_012_345_67, 3.0e-300, 12345.678, 1e20] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn interval_json() {
        let ci = e_ci_sufficient(1.0, 100, 0.05, &coll()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&ci.to_json()).unwrap();
        assert_eq!(v["method"], "e-sufficient-bound");
        assert_eq!(v["level"], 0.05);
        assert!(v.get("fallback").is_none());
    }
}
