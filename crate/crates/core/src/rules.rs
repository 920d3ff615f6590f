//! The maximally compatible rule and the two p-value rules it is compared
//! against.

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{invalid, GnpError, Result};
use crate::evariables::calibrated_admits;
use crate::gnp::{fmt_rat, rat_from_f64, rat_to_f64, DecisionRule, GnpProblem, LossShape, Rational, RiskBudget, TypeOneLoss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleTag {
    MaxCompatible,
    NaiveP,
    HalvedP,
}

impl RuleTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleTag::MaxCompatible => "max-compatible",
            RuleTag::NaiveP => "naive-p",
            RuleTag::HalvedP => "halved-p",
        }
    }
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub action: f64,
    /// Index into a finite action list.
    pub action_index: Option<usize>,
    pub loss0_at_action: f64,
    pub statistic_value: f64,
    pub rule: RuleTag,
}

/// Index of the largest action whose loss is admitted. Scans from the top,
/// so ties go to the larger action.
pub fn largest_admitted(loss0: &[Rational], admits: impl Fn(&Rational) -> bool) -> Option<usize> {
    (0..loss0.len()).rev().find(|&i| admits(&loss0[i]))
}

/// Bound on the admissible loss: exact for finite tables, float otherwise.
enum Bound {
    /// `loss ≤ scale⁻¹ · ℓ`, with `scale = 0` admitting everything.
    Scaled(Rational),
    /// `loss ≤ s·ℓ`, `s = ∞` admitting everything.
    Times(Option<Rational>),
}

fn decide(loss: &TypeOneLoss, budget: &RiskBudget, bound: Bound, statistic: f64, rule: RuleTag) -> Result<DecisionOutcome> {
    let ell = budget.ell();
    match loss.shape() {
        LossShape::Finite { actions, loss0 } => {
            let ell_f = budget.ell_f64();
            let idx = match &bound {
                Bound::Scaled(q) => {
                    let q_f = rat_to_f64(q);
                    largest_admitted(loss0, |l| {
                        float_le(q_f * rat_to_f64(l), ell_f).unwrap_or_else(|| &(q * l) <= ell)
                    })
                }
                Bound::Times(Some(s)) => {
                    let s_f = rat_to_f64(s);
                    largest_admitted(loss0, |l| {
                        float_le(rat_to_f64(l), s_f * ell_f).unwrap_or_else(|| *l <= s * ell)
                    })
                }
                Bound::Times(None) => Some(actions.len() - 1),
            };
            let idx = idx.ok_or_else(|| no_feasible(loss, &bound, ell))?;
            Ok(DecisionOutcome {
                action: rat_to_f64(&actions[idx]),
                action_index: Some(idx),
                loss0_at_action: rat_to_f64(&loss0[idx]),
                statistic_value: statistic,
                rule,
            })
        }
        LossShape::Piecewise(pieces) => {
            let limit = match &bound {
                Bound::Scaled(q) if q.is_zero() => f64::INFINITY,
                Bound::Scaled(q) => budget.ell_f64() / rat_to_f64(q),
                Bound::Times(Some(s)) => rat_to_f64(s) * budget.ell_f64(),
                Bound::Times(None) => f64::INFINITY,
            };
            for piece in pieces.iter().rev() {
                let (lo, hi) = (piece.interval.lo, piece.interval.hi);
                if piece.loss(lo) > limit {
                    continue;
                }
                let top = piece.loss(hi);
                let action = if top <= limit {
                    if top.is_infinite() {
                        return Err(GnpError::NoFeasibleAction {
                            loss: loss.id().0.clone(),
                            bound: "unbounded action with infinite loss".into(),
                        });
                    }
                    hi
                } else {
                    let mut a = piece.inverse(limit).clamp(lo, hi);
                    while a > lo && piece.loss(a) > limit {
                        a = a.next_down();
                    }
                    a
                };
                return Ok(DecisionOutcome {
                    action,
                    action_index: None,
                    loss0_at_action: piece.loss(action),
                    statistic_value: statistic,
                    rule,
                });
            }
            Err(GnpError::NoFeasibleAction { loss: loss.id().0.clone(), bound: limit.to_string() })
        }
    }
}

/// `a ≤ b` when the float values settle it beyond rounding error, `None`
/// when the exact comparison is needed.
fn float_le(a: f64, b: f64) -> Option<bool> {
    const MARGIN: f64 = 1e-12;
    if !(a.is_finite() && b.is_finite()) || b <= 0.0 {
        return None;
    }
    if a <= b * (1.0 - MARGIN) {
        Some(true)
    } else if a >= b * (1.0 + MARGIN) {
        Some(false)
    } else {
        None
    }
}

fn no_feasible(loss: &TypeOneLoss, bound: &Bound, ell: &Rational) -> GnpError {
    let text = match bound {
        Bound::Scaled(q) => fmt_rat(&(ell / q)),
        Bound::Times(Some(s)) => fmt_rat(&(s * ell)),
        Bound::Times(None) => "inf".into(),
    };
    GnpError::NoFeasibleAction { loss: loss.id().0.clone(), bound: text }
}

fn check_pval(pval: f64) -> Result<Rational> {
    if pval.is_nan() || !(0.0..=1.0).contains(&pval) {
        return Err(invalid("pval", format!("{pval} is not in [0, 1]")));
    }
    Ok(rat_from_f64(pval).expect("finite"))
}

/// Largest action with `loss0(a) ≤ s·ℓ`.
pub fn max_compatible_decide(s_value: f64, loss: &TypeOneLoss, budget: &RiskBudget) -> Result<DecisionOutcome> {
    if s_value.is_nan() || s_value < 0.0 {
        return Err(invalid("s_value", format!("{s_value} is not a nonnegative e-value")));
    }
    let bound = if s_value.is_infinite() { Bound::Times(None) } else { Bound::Times(rat_from_f64(s_value)) };
    decide(loss, budget, bound, s_value, RuleTag::MaxCompatible)
}

/// Largest action with `pval · loss0(a) ≤ ℓ`.
pub fn naive_p_decide(pval: f64, loss: &TypeOneLoss, budget: &RiskBudget) -> Result<DecisionOutcome> {
    let p = check_pval(pval)?;
    decide(loss, budget, Bound::Scaled(p), pval, RuleTag::NaiveP)
}

/// Naive rule applied to `pval / 2`.
pub fn halved_p_decide(pval: f64, loss: &TypeOneLoss, budget: &RiskBudget) -> Result<DecisionOutcome> {
    let p = check_pval(pval)?;
    let two = Rational::from_integer(2.into());
    decide(loss, budget, Bound::Scaled(p / two), pval, RuleTag::HalvedP)
}

/// Decision rules that look at the data only through a p-value, in exact
/// form, for computing risks under a uniform p-value cell by cell.
#[derive(Debug, Clone, PartialEq)]
pub enum PValueRule {
    Naive,
    Halved,
    /// Classical level-α test: play the largest action iff `pval ≤ α`.
    FixedLevel(Rational),
    /// Maximally compatible with the Neyman-Pearson e-variable at level α.
    MaxCompatibleNp(Rational),
    /// Maximally compatible with the calibrated p-value `1/√p − 1`.
    MaxCompatibleCalibrated,
}

impl PValueRule {
    pub fn name(&self) -> String {
        match self {
            PValueRule::Naive => "naive-p".into(),
            PValueRule::Halved => "halved-p".into(),
            PValueRule::FixedLevel(a) => format!("level-{}", fmt_rat(a)),
            PValueRule::MaxCompatibleNp(a) => format!("max-compatible[np {}]", fmt_rat(a)),
            PValueRule::MaxCompatibleCalibrated => "max-compatible[calibrated]".into(),
        }
    }

    /// Action index for p-value `p` on a loss table already divided by ℓ.
    pub fn decide_exact(&self, p: &Rational, loss0: &[Rational]) -> Result<usize> {
        let one = Rational::one();
        let idx = match self {
            PValueRule::Naive => largest_admitted(loss0, |l| p * l <= one),
            PValueRule::Halved => largest_admitted(loss0, |l| p * l <= Rational::from_integer(2.into())),
            PValueRule::FixedLevel(alpha) => Some(if p <= alpha { loss0.len() - 1 } else { 0 }),
            PValueRule::MaxCompatibleNp(alpha) => {
                let s = if p <= alpha { alpha.recip() } else { Rational::zero() };
                largest_admitted(loss0, |l| *l <= s)
            }
            PValueRule::MaxCompatibleCalibrated => largest_admitted(loss0, |l| calibrated_admits(p, l)),
        };
        idx.ok_or_else(|| GnpError::NoFeasibleAction { loss: "p-value rule".into(), bound: fmt_rat(p) })
    }

    /// P-values at which the decision can change; decisions are constant on
    /// each left-open, right-closed cell between consecutive breakpoints.
    pub fn breakpoints(&self, loss0: &[Rational]) -> Vec<Rational> {
        let positive = loss0.iter().filter(|l| l.is_positive());
        match self {
            PValueRule::Naive => positive.map(|l| l.recip()).collect(),
            PValueRule::Halved => positive.map(|l| Rational::from_integer(2.into()) / l).collect(),
            PValueRule::FixedLevel(a) | PValueRule::MaxCompatibleNp(a) => vec![a.clone()],
            PValueRule::MaxCompatibleCalibrated => loss0
                .iter()
                .map(|l| {
                    let t = l + Rational::one();
                    (&t * &t).recip()
                })
                .collect(),
        }
    }
}

/// Table of a p-value rule on a finite problem whose outcome index `y` has
/// p-value `pvals[y]`.
pub fn pvalue_rule_table(problem: &GnpProblem, pvals: &[Rational], rule: &PValueRule, budget: &RiskBudget) -> Result<DecisionRule> {
    let n = problem.num_outcomes()?;
    if pvals.len() != n {
        return Err(GnpError::Structural(format!("{} p-values for {n} outcomes", pvals.len())));
    }
    if pvals.iter().any(|p| p.is_negative() || *p > Rational::one()) {
        return Err(invalid("pval", "p-values must lie in [0, 1]"));
    }
    let mut table = Vec::new();
    for loss in problem.losses() {
        let (_, loss0) = loss.expect_table()?;
        let scaled: Vec<Rational> = loss0.iter().map(|l| l / budget.ell()).collect();
        table.push(pvals.iter().map(|p| rule.decide_exact(p, &scaled)).collect::<Result<Vec<_>>>()?);
    }
    DecisionRule::new(problem, table)
}
