//! Data-dependent loss selectors and the problems they break.

use num_traits::Zero;

use crate::error::{invalid, GnpError, Result};
use crate::gnp::{int, rat, GnpProblem, NullModel, Pmf, Rational, TypeOneLoss};
use crate::normal;

/// Chooses which loss is presented, as a function of the data.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversarySelector {
    /// Always the loss with this index.
    Constant(usize),
    /// Loss index per outcome index of a finite problem.
    Table(Vec<usize>),
    /// Loss index as a step function of the p-value.
    PvalThreshold(ThresholdSelector),
    /// The loss maximizing the rule's Type-I loss at every outcome.
    WorstCase,
}

impl AdversarySelector {
    pub fn tag(&self) -> &'static str {
        match self {
            AdversarySelector::Constant(_) => "constant",
            AdversarySelector::Table(_) => "table",
            AdversarySelector::PvalThreshold(_) => "pval-threshold",
            AdversarySelector::WorstCase => "worst-case",
        }
    }

    /// Loss index on a finite problem; `None` means worst case. Threshold
    /// selectors read the outcome value as the p-value.
    pub fn pick_finite(&self, problem: &GnpProblem, outcome: &Rational, y: usize) -> Result<Option<usize>> {
        let b = match self {
            AdversarySelector::Constant(b) => *b,
            AdversarySelector::Table(t) => *t
                .get(y)
                .ok_or_else(|| GnpError::Structural(format!("selector table has no entry for outcome {y}")))?,
            AdversarySelector::PvalThreshold(t) => t.pick(outcome),
            AdversarySelector::WorstCase => return Ok(None),
        };
        if b >= problem.losses().len() {
            return Err(GnpError::UnknownLoss(format!("#{b}")));
        }
        Ok(Some(b))
    }

    pub fn pick_pval(&self, p: &Rational) -> Result<Option<usize>> {
        match self {
            AdversarySelector::Constant(b) => Ok(Some(*b)),
            AdversarySelector::PvalThreshold(t) => Ok(Some(t.pick(p))),
            AdversarySelector::WorstCase => Ok(None),
            AdversarySelector::Table(_) => Err(GnpError::Structural("table selectors need a finite outcome space".into())),
        }
    }

    pub fn pval_breakpoints(&self) -> Result<Vec<Rational>> {
        match self {
            AdversarySelector::PvalThreshold(t) => Ok(t.cuts.clone()),
            AdversarySelector::Table(_) => Err(GnpError::Structural("table selectors need a finite outcome space".into())),
            _ => Ok(Vec::new()),
        }
    }
}

/// Presents loss `i` when exactly `i` of the (strictly decreasing) cut points
/// lie at or above the p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSelector {
    cuts: Vec<Rational>,
}

impl ThresholdSelector {
    pub fn new(cuts: Vec<Rational>) -> Result<Self> {
        if cuts.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("cuts", "threshold cut points must be strictly decreasing"));
        }
        Ok(ThresholdSelector { cuts })
    }

    /// Cuts at 0.02 and 0.001.
    pub fn tiered() -> Self {
        ThresholdSelector { cuts: vec![rat(1, 50), rat(1, 1000)] }
    }

    pub fn pick(&self, pval: &Rational) -> usize {
        self.cuts.iter().filter(|c| pval <= *c).count()
    }

    pub fn pick_f64(&self, pval: f64) -> usize {
        self.cuts.iter().filter(|c| pval <= crate::gnp::rat_to_f64(c)).count()
    }
}

/// 1 if `pval > 0.02`, 2 if `0.001 < pval ≤ 0.02`, 3 if `pval ≤ 0.001`.
pub fn threshold_selector(pval: f64) -> u8 {
    if pval > 0.02 {
        1
    } else if pval > 0.001 {
        2
    } else {
        3
    }
}

/// Three two-action losses `L_b` on `{0, b}` with `L_b(0, b)` equal to 20,
/// 100 and 500.
pub fn tiered_losses() -> Vec<TypeOneLoss> {
    [(1, 20), (2, 100), (3, 500)]
        .into_iter()
        .map(|(b, l)| TypeOneLoss::finite(b.to_string(), vec![int(0), int(b)], vec![int(0), int(l)]).expect("valid loss"))
        .collect()
}

/// One loss on actions `{0, 1, 2, 3}` with losses `{0, 20, 100, 500}`.
pub fn four_action_loss() -> TypeOneLoss {
    TypeOneLoss::finite("b", vec![int(0), int(1), int(2), int(3)], vec![int(0), int(20), int(100), int(500)])
        .expect("valid loss")
}

/// A strict p-value on `{1, 1/2, …, 2⁻ᵏ}` with a single loss `L(0, a) = 2a`
/// on actions `{0, 1, 2, 4, …, 2ᵏ}`.
#[derive(Debug, Clone)]
pub struct DyadicProblem {
    pub k: u32,
    pub problem: GnpProblem,
    pub pvals: Vec<Rational>,
    /// Exact risk of the naive rule, `(k+1)/2`.
    pub naive_risk: Rational,
    /// Exact risk of the halved rule, `k+2`.
    pub halved_risk: Rational,
}

pub fn dyadic_problem(k: u32) -> Result<DyadicProblem> {
    if k == 0 || k > 60 {
        return Err(invalid("k", format!("{k} is not in 1..=60")));
    }
    let two = Rational::from_integer(2.into());
    let pvals: Vec<Rational> = (0..=k).map(|c| two.pow(-(c as i32))).collect();
    // P(pval = 2⁻ᶜ) = 2⁻ᶜ⁻¹ for c < k, and 2⁻ᵏ at the bottom, so that
    // P(pval ≤ 2⁻ᶜ) = 2⁻ᶜ exactly.
    let mut p: Vec<Rational> = (0..k).map(|c| two.pow(-(c as i32) - 1)).collect();
    p.push(two.pow(-(k as i32)));
    let mut actions = vec![Rational::zero()];
    actions.extend((0..=k).map(|c| two.pow(c as i32)));
    let loss0: Vec<Rational> = actions.iter().map(|a| a * &two).collect();
    let loss = TypeOneLoss::finite("dyadic", actions, loss0)?;
    let null = NullModel::finite(pvals.clone(), vec![Pmf { id: "P0".into(), p }])?;
    let problem = GnpProblem::new(vec![loss], null)?;
    Ok(DyadicProblem {
        k,
        problem,
        pvals,
        naive_risk: Rational::from_integer((k + 1).into()) / two,
        halved_risk: Rational::from_integer((k + 2).into()),
    })
}

/// Clamp applied to displayed B values.
pub const B_DISPLAY_CLAMP: f64 = 1e15;

/// The loss-weight adversary against the objective-Bayes credible interval:
/// `B(y) = 1/(2Φ(−y + ε²/y))` for `y ≥ ε`, else 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdBreakingAdversary {
    epsilon: f64,
}

impl CdBreakingAdversary {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("{epsilon} is not a positive finite number")));
        }
        Ok(CdBreakingAdversary { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn g0(&self, y: f64) -> f64 {
        self.epsilon * self.epsilon / y
    }

    pub fn ln_b(&self, y: f64) -> f64 {
        if y < self.epsilon {
            return 0.0;
        }
        -std::f64::consts::LN_2 - normal::ln_cdf(-y + self.g0(y))
    }

    pub fn b(&self, y: f64) -> f64 {
        self.ln_b(y).exp()
    }

    /// B clamped at [`B_DISPLAY_CLAMP`], with a flag when clamping happened.
    pub fn b_display(&self, y: f64) -> (f64, bool) {
        let b = self.b(y);
        if b > B_DISPLAY_CLAMP {
            (B_DISPLAY_CLAMP, true)
        } else {
            (b, false)
        }
    }

    /// The `(1 − 1/B)` credible interval `[g0(y), 2y − g0(y)]`; for `y < ε`
    /// (B = 1) the credible set has zero mass and is the point `{y}`.
    pub fn credible_interval(&self, y: f64) -> (f64, f64) {
        if y < self.epsilon {
            (y, y)
        } else {
            let g = self.g0(y);
            (g, 2.0 * y - g)
        }
    }

    /// `φ(y)·B(y)` evaluated in log space.
    pub fn integrand(&self, y: f64) -> f64 {
        (normal::ln_pdf(y) + self.ln_b(y)).exp()
    }

    /// `(y/2)·e^{−ε²}`, the large-y behavior of the integrand.
    pub fn asymptote(&self, y: f64) -> f64 {
        0.5 * y * (-self.epsilon * self.epsilon).exp()
    }

    /// `∫_ε^{ymax} φ(y)B(y) dy` by composite Simpson on `intervals` panels.
    pub fn truncated_integral(&self, ymax: f64, intervals: usize) -> f64 {
        simpson(|y| self.integrand(y), self.epsilon, ymax, intervals)
    }

    /// `½e^{−ε²}∫_ε^{ymax}(y − ε²/y) dy`, a closed-form lower bound on the
    /// truncated integral.
    pub fn integral_lower_bound(&self, ymax: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        0.5 * (-e2).exp() * (0.5 * (ymax * ymax - e2) - e2 * (ymax / self.epsilon).ln())
    }
}

pub fn cd_breaking_b(y: f64, epsilon: f64) -> Result<f64> {
    Ok(CdBreakingAdversary::new(epsilon)?.b(y))
}

/// Composite Simpson rule; `intervals` is rounded up to even.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut odd = Vec::with_capacity(n / 2);
    let mut even = Vec::with_capacity(n / 2);
    for i in 1..n {
        let v = f(a + i as f64 * h);
        if i % 2 == 1 {
            odd.push(v);
        } else {
            even.push(v);
        }
    }
    let inner = 4.0 * crate::rng::pairwise_sum(&odd) + 2.0 * crate::rng::pairwise_sum(&even);
    h / 3.0 * (f(a) + inner + f(b))
}

/// Single-action loss with zero Type-I loss.
pub fn zero_loss() -> TypeOneLoss {
    TypeOneLoss::finite("zero", vec![int(0)], vec![Rational::zero()]).expect("valid loss")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnp::{exact_type_one_risk, exact_uniform_pvalue_risk, RiskBudget, Risk};
    use crate::rules::{pvalue_rule_table, PValueRule};

    #[test]
    fn threshold_cells() {
        assert_eq!(threshold_selector(0.5), 1);
        assert_eq!(threshold_selector(0.01), 2);
        assert_eq!(threshold_selector(0.02), 2);
        assert_eq!(threshold_selector(0.001), 3);
        assert_eq!(threshold_selector(0.0005), 3);
        let t = ThresholdSelector::tiered();
        for p in [0.5, 0.02, 0.01, 0.001, 0.0005, 0.0] {
            assert_eq!(t.pick_f64(p) + 1, threshold_selector(p) as usize);
        }
    }

    #[test]
    fn four_action_naive_risk() {
        let risk = exact_uniform_pvalue_risk(
            &[four_action_loss()],
            &AdversarySelector::Constant(0),
            &PValueRule::Naive,
            &RiskBudget::default(),
        )
        .unwrap();
        assert_eq!(risk, Risk::Finite(rat(13, 5)));
    }

    #[test]
    fn threshold_adversary_risks() {
        let sel = AdversarySelector::PvalThreshold(ThresholdSelector::tiered());
        let b = RiskBudget::default();
        let naive = exact_uniform_pvalue_risk(&tiered_losses(), &sel, &PValueRule::Naive, &b).unwrap();
        assert_eq!(naive, Risk::Finite(int(2)));
        let level = exact_uniform_pvalue_risk(&tiered_losses(), &sel, &PValueRule::FixedLevel(rat(1, 20)), &b).unwrap();
        assert_eq!(level, Risk::Finite(int(3)));
        let e = exact_uniform_pvalue_risk(&tiered_losses(), &sel, &PValueRule::MaxCompatibleNp(rat(1, 20)), &b).unwrap();
        assert_eq!(e, Risk::Finite(rat(3, 5)));
        let worst = exact_uniform_pvalue_risk(&tiered_losses(), &AdversarySelector::WorstCase, &PValueRule::Naive, &b).unwrap();
        assert_eq!(worst, Risk::Finite(rat(13, 5)));
    }

    #[test]
    fn dyadic_closed_forms() {
        for k in 1..=12 {
            let d = dyadic_problem(k).unwrap();
            let b = RiskBudget::default();
            for (rule, want) in [(PValueRule::Naive, &d.naive_risk), (PValueRule::Halved, &d.halved_risk)] {
                let table = pvalue_rule_table(&d.problem, &d.pvals, &rule, &b).unwrap();
                let risk = exact_type_one_risk(&d.problem, &table, &AdversarySelector::Constant(0), "P0", &b).unwrap();
                assert_eq!(risk.finite(), Some(want), "k = {k}, {rule:?}");
            }
        }
        assert!(dyadic_problem(0).is_err());
    }

    #[test]
    fn halved_rule_on_dyadic_pvalues() {
        // q = 2⁻ᶜ admits a ≤ 2ᶜ⁻¹ since q·2a ≤ 1
        let d = dyadic_problem(5).unwrap();
        let (actions, loss0) = d.problem.losses()[0].table().unwrap();
        for c in 1..=5 {
            let p = rat(2, 1 << c);
            let idx = PValueRule::Halved.decide_exact(&p, loss0).unwrap();
            assert_eq!(actions[idx], int(1 << (c - 1)));
        }
    }

    #[test]
    fn cd_breaking_values() {
        let adv = CdBreakingAdversary::new(0.01).unwrap();
        assert_eq!(adv.b(0.01), 1.0);
        assert_eq!(adv.b(0.005), 1.0);
        assert_eq!(adv.b(-2.0), 1.0);
        assert!((adv.b(3.0) - 370.357_814_610_263_7).abs() < 1e-9);
        assert!(adv.b(30.0).is_finite());
        assert!(adv.ln_b(50.0).is_finite());
        assert_eq!(adv.b_display(60.0), (B_DISPLAY_CLAMP, true));
        assert!(CdBreakingAdversary::new(0.0).is_err());
    }

    #[test]
    fn credible_mass_identity() {
        let adv = CdBreakingAdversary::new(0.01).unwrap();
        let mut y = 0.01;
        while y < 8.0 {
            let mass = 2.0 * normal::cdf(adv.g0(y) - y) * adv.b(y);
            assert!((mass - 1.0).abs() < 1e-10, "y = {y}");
            let (lo, hi) = adv.credible_interval(y);
            assert!(lo > 0.0 && lo <= hi);
            y += 0.0731;
        }
    }

    #[test]
    fn truncated_integral_reference() {
        let adv = CdBreakingAdversary::new(0.01).unwrap();
        let integral = adv.truncated_integral(7.0, 20_000);
        assert!((integral - 13.339_996_696_924_96).abs() < 1e-6);
        assert!((adv.integral_lower_bound(7.0) - 12.248_422_542_484_85).abs() < 1e-9);
        assert!((adv.integrand(7.0) / adv.asymptote(7.0) - 1.019_647_369_875_067).abs() < 1e-9);
    }
}
