//! Seeded Monte Carlo audits. Every trial draws from its own counter-based
//! stream (see [`crate::rng`]), so results are bit-identical for any number
//! of worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::adversary::{AdversarySelector, CdBreakingAdversary};
use crate::confidence::{e_ci_halfwidth_for_b, e_ci_sufficient};
use crate::error::{invalid, GnpError, Result};
use crate::evariables::{calibrate_pvalue, ECollection, NormalECollection};
use crate::gnp::{rat_to_f64, DecisionRule, GnpProblem, RiskBudget, TypeOneLoss};
use crate::rng::{blocked_sums, mean_and_stderr, ordered_values, BlockSums, TrialRng, BLOCK_SIZE};
use crate::rules::{halved_p_decide, max_compatible_decide, naive_p_decide, PValueRule};

const STREAM_UNIFORM_PVALUE: u64 = 1;
const STREAM_FINITE: u64 = 2;
const STREAM_STUDIES: u64 = 3;
const STREAM_COVERAGE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskAuditReport {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
    pub diverged: bool,
    pub rule: String,
    pub adversary: String,
}

impl RiskAuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Where the data come from under the null.
#[derive(Debug, Clone, Copy)]
pub enum NullSampler<'a> {
    /// A strict p-value, uniform on (0, 1], presented to the given losses.
    UniformPvalue(&'a [TypeOneLoss]),
    /// An outcome index drawn from one pmf of a finite problem.
    Finite { problem: &'a GnpProblem, pmf_id: &'a str },
}

#[derive(Debug, Clone, Copy)]
pub enum AuditRule<'a> {
    PValue(&'a PValueRule),
    Table(&'a DecisionRule),
}

impl AuditRule<'_> {
    fn name(&self) -> String {
        match self {
            AuditRule::PValue(r) => r.name(),
            AuditRule::Table(_) => "table".into(),
        }
    }
}

/// Type-I loss (divided by ℓ) of a p-value rule at one p-value.
fn pvalue_rule_loss(rule: &PValueRule, p: f64, loss: &TypeOneLoss, budget: &RiskBudget) -> Result<f64> {
    let out = match rule {
        PValueRule::Naive => naive_p_decide(p, loss, budget)?,
        PValueRule::Halved => halved_p_decide(p, loss, budget)?,
        PValueRule::MaxCompatibleNp(alpha) => {
            let s = if p <= rat_to_f64(alpha) { 1.0 / rat_to_f64(alpha) } else { 0.0 };
            max_compatible_decide(s, loss, budget)?
        }
        PValueRule::MaxCompatibleCalibrated => max_compatible_decide(calibrate_pvalue(p)?, loss, budget)?,
        PValueRule::FixedLevel(alpha) => {
            let (_, loss0) = loss.expect_table()?;
            let idx = if p <= rat_to_f64(alpha) { loss0.len() - 1 } else { 0 };
            return Ok(rat_to_f64(&loss0[idx]) / budget.ell_f64());
        }
    };
    Ok(out.loss0_at_action / budget.ell_f64())
}

/// Prefix means keep rising across doublings of the trial count by more
/// than three standard errors overall.
fn growing(blocks: &[BlockSums], stderr: f64) -> bool {
    let total: u64 = blocks.iter().map(|b| b.count).sum();
    let mut marks = Vec::new();
    let mut t = total;
    while t >= BLOCK_SIZE && marks.len() < 4 {
        marks.push(t);
        t /= 2;
    }
    if marks.len() < 4 {
        return false;
    }
    marks.reverse();
    let prefix_mean = |limit: u64| {
        let mut count = 0;
        let mut sums = Vec::new();
        for b in blocks {
            if count >= limit {
                break;
            }
            count += b.count;
            sums.push(b.sum);
        }
        crate::rng::pairwise_sum(&sums) / count as f64
    };
    let means: Vec<f64> = marks.iter().map(|&m| prefix_mean(m)).collect();
    means.windows(2).all(|w| w[1] > w[0]) && means[means.len() - 1] - means[0] > 3.0 * stderr
}

/// Mean Type-I loss (in units of ℓ) over `trials` null draws.
pub fn estimate_type_one_risk(
    sampler: NullSampler<'_>,
    selector: &AdversarySelector,
    rule: AuditRule<'_>,
    budget: &RiskBudget,
    trials: u64,
    seed: u64,
) -> Result<RiskAuditReport> {
    if trials == 0 {
        return Err(invalid("trials", "at least one trial is required"));
    }
    let blocks = match (sampler, rule) {
        (NullSampler::UniformPvalue(losses), AuditRule::PValue(prule)) => {
            if let AdversarySelector::Table(_) = selector {
                return Err(GnpError::Structural("table selectors need a finite outcome space".into()));
            }
            if let AdversarySelector::Constant(b) = selector {
                if *b >= losses.len() {
                    return Err(GnpError::UnknownLoss(format!("#{b}")));
                }
            }
            // surface parameter errors before the parallel section
            for loss in losses {
                pvalue_rule_loss(prule, 0.5, loss, budget)?;
            }
            blocked_sums(trials, seed, STREAM_UNIFORM_PVALUE, |rng, _| {
                let p = 1.0 - rng.random::<f64>();
                let at = |b: usize| pvalue_rule_loss(prule, p, &losses[b], budget).expect("validated");
                match selector {
                    AdversarySelector::Constant(b) => at(*b),
                    AdversarySelector::PvalThreshold(t) => at(t.pick_f64(p)),
                    _ => (0..losses.len()).map(at).fold(0.0, f64::max),
                }
            })
        }
        (NullSampler::Finite { problem, pmf_id }, AuditRule::Table(table)) => {
            let pmf = problem.pmf(pmf_id)?;
            let outcomes = problem.outcomes()?;
            let mut cumulative = Vec::with_capacity(pmf.p.len());
            let mut acc = 0.0;
            for m in &pmf.p {
                acc += rat_to_f64(m);
                cumulative.push(acc);
            }
            let ell = budget.ell_f64();
            let mut per_outcome = Vec::with_capacity(outcomes.len());
            for (y, outcome) in outcomes.iter().enumerate() {
                let loss = match selector.pick_finite(problem, outcome, y)? {
                    Some(b) => rat_to_f64(table.loss_at(problem, b, y)?),
                    None => table.envelope(problem)?.get(y).map(rat_to_f64).unwrap_or(0.0),
                };
                per_outcome.push(loss / ell);
            }
            blocked_sums(trials, seed, STREAM_FINITE, |rng, _| {
                let u = rng.random::<f64>() * acc;
                let y = cumulative.partition_point(|&c| c <= u).min(per_outcome.len() - 1);
                per_outcome[y]
            })
        }
        _ => return Err(GnpError::Structural("rule does not fit the null sampler".into())),
    };
    let (estimate, stderr) = mean_and_stderr(&blocks);
    Ok(RiskAuditReport {
        estimate,
        stderr,
        trials,
        seed,
        diverged: growing(&blocks, stderr),
        rule: rule.name(),
        adversary: selector.tag().into(),
    })
}

/// Plain Monte Carlo mean and standard error of `f` over `trials` draws.
pub fn estimate_mean<F>(trials: u64, seed: u64, stream: u64, f: F) -> (f64, f64)
where
    F: Fn(&mut TrialRng) -> f64 + Sync,
{
    mean_and_stderr(&blocked_sums(trials, seed, stream, |rng, _| f(rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethodKind {
    /// The objective-Bayes credible interval `[g0(y), 2y − g0(y)]`.
    Cd,
    /// `y ± A(B)` from the e-collection.
    E,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductiveConfig {
    pub epsilon: f64,
    pub method: IntervalMethodKind,
    /// Collection used by the e-method, one observation per study.
    pub collection: NormalECollection,
}

impl InductiveConfig {
    pub fn new(epsilon: f64, method: IntervalMethodKind) -> Result<Self> {
        CdBreakingAdversary::new(epsilon)?;
        Ok(InductiveConfig { epsilon, method, collection: NormalECollection::new(1.0, 0.05, crate::evariables::Side::TwoSided)? })
    }
}

/// One study: `Y ~ N(0, 1)`, loss weight `B(Y)`, interval by `method`.
/// Returns `(B, miss)`.
fn study(rng: &mut TrialRng, adv: &CdBreakingAdversary, cfg: &InductiveConfig) -> (f64, bool) {
    let y: f64 = rng.sample(StandardNormal);
    let b = adv.b(y);
    let miss = match cfg.method {
        IntervalMethodKind::Cd => {
            let (lo, hi) = adv.credible_interval(y);
            !(lo <= 0.0 && 0.0 <= hi)
        }
        IntervalMethodKind::E => {
            let a = e_ci_halfwidth_for_b(1, b.min(f64::MAX), &cfg.collection).expect("b ≥ 1");
            y.abs() > a
        }
    };
    (b, miss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InductiveTrace {
    pub running_mean: Vec<f64>,
    pub b: Vec<f64>,
    pub miss: Vec<bool>,
}

impl InductiveTrace {
    pub fn final_mean(&self) -> f64 {
        *self.running_mean.last().expect("nonempty trace")
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::confidence::fmt_g17;
        writeln!(out, "j,running_mean,b_j,miss")?;
        for (j, ((m, b), miss)) in self.running_mean.iter().zip(&self.b).zip(&self.miss).enumerate() {
            writeln!(out, "{},{},{},{}", j + 1, fmt_g17(*m), fmt_g17(*b), u8::from(*miss))?;
        }
        Ok(())
    }
}

/// Prefix means of `B_j·1{0 ∉ interval_j}` over `m` simulated studies.
pub fn simulate_inductive_behavior(m: u64, cfg: &InductiveConfig, seed: u64) -> Result<InductiveTrace> {
    if m == 0 {
        return Err(invalid("m", "at least one study is required"));
    }
    let adv = CdBreakingAdversary::new(cfg.epsilon)?;
    let draws = ordered_values(m, seed, STREAM_STUDIES, |rng, _| {
        let (b, miss) = study(rng, &adv, cfg);
        if miss {
            -b
        } else {
            b
        }
    });
    let mut running_mean = Vec::with_capacity(draws.len());
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut b = Vec::with_capacity(draws.len());
    let mut miss = Vec::with_capacity(draws.len());
    for (j, &d) in draws.iter().enumerate() {
        let loss = if d < 0.0 { -d } else { 0.0 };
        // Neumaier summation
        let t = sum + loss;
        comp += if sum.abs() >= loss { (sum - t) + loss } else { (loss - t) + sum };
        sum = t;
        running_mean.push((sum + comp) / (j + 1) as f64);
        b.push(d.abs());
        miss.push(d < 0.0);
    }
    Ok(InductiveTrace { running_mean, b, miss })
}

/// Final mean of the inductive-behavior average, without keeping the trace.
pub fn inductive_final_mean(m: u64, cfg: &InductiveConfig, seed: u64) -> Result<RiskAuditReport> {
    if m == 0 {
        return Err(invalid("m", "at least one study is required"));
    }
    let adv = CdBreakingAdversary::new(cfg.epsilon)?;
    let blocks = blocked_sums(m, seed, STREAM_STUDIES, |rng, _| {
        let (b, miss) = study(rng, &adv, cfg);
        if miss {
            b
        } else {
            0.0
        }
    });
    let (estimate, stderr) = mean_and_stderr(&blocks);
    let diverged = match cfg.method {
        // infinite variance: the plug-in error is not trusted
        IntervalMethodKind::Cd => true,
        IntervalMethodKind::E => growing(&blocks, stderr),
    };
    Ok(RiskAuditReport {
        estimate,
        stderr,
        trials: m,
        seed,
        diverged,
        rule: match cfg.method {
            IntervalMethodKind::Cd => "cd-interval".into(),
            IntervalMethodKind::E => "e-interval".into(),
        },
        adversary: "cd-breaking".into(),
    })
}

/// The loss weights `B_j` of `m` simulated studies; the same draws as
/// [`simulate_inductive_behavior`] with the same seed.
pub fn sample_b_sequence(m: u64, epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(invalid("m", "at least one study is required"));
    }
    let adv = CdBreakingAdversary::new(epsilon)?;
    Ok(ordered_values(m, seed, STREAM_STUDIES, |rng, _| {
        let y: f64 = rng.sample(StandardNormal);
        adv.b(y)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    FixedN(u64),
    /// Stop at the first `k ≤ n_max` with `S_θ*(X^k) ≥ 1/α`, else at `n_max`.
    FirstCrossing { n_max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub stderr: f64,
    pub replications: u64,
    pub seed: u64,
}

/// Fraction of replications whose sufficient-bound e-interval, built at the
/// stopped sample size, contains `theta_star`.
pub fn coverage_under_stopping(
    coll: &NormalECollection,
    theta_star: f64,
    stopping: StoppingRule,
    alpha: f64,
    replications: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if replications == 0 {
        return Err(invalid("replications", "at least one replication is required"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("{alpha} is not in (0, 1]")));
    }
    let n_max = match stopping {
        StoppingRule::FixedN(n) | StoppingRule::FirstCrossing { n_max: n } => n,
    };
    if n_max == 0 {
        return Err(invalid("n", "stopping index must be at least 1"));
    }
    let threshold = -alpha.ln();
    let blocks = blocked_sums(replications, seed, STREAM_COVERAGE, |rng, _| {
        let mut sum = 0.0;
        let mut k = 0;
        while k < n_max {
            let x: f64 = theta_star + rng.sample::<f64, _>(StandardNormal);
            sum += x;
            k += 1;
            if let StoppingRule::FirstCrossing { .. } = stopping {
                if coll.ln_e_value_from_deviation(k, sum - k as f64 * theta_star) >= threshold {
                    break;
                }
            }
        }
        let ci = e_ci_sufficient(sum / k as f64, k, alpha, coll).expect("validated");
        f64::from(u8::from(ci.contains(theta_star)))
    });
    let (coverage, stderr) = mean_and_stderr(&blocks);
    Ok(CoverageReport { coverage, stderr, replications, seed })
}

/// Monte Carlo check of `E_θ[S_θ]` for the normal collection at sample size
/// `n`, drawing the sufficient statistic `θ̂ ~ N(θ, 1/n)` directly.
pub fn normal_collection_expectation(coll: &NormalECollection, theta: f64, n: u64, trials: u64, seed: u64) -> (f64, f64) {
    let sd = 1.0 / (n as f64).sqrt();
    estimate_mean(trials, seed, STREAM_COVERAGE + 1, |rng| {
        let z: f64 = rng.sample(StandardNormal);
        coll.e_value(theta, crate::evariables::SampleSummary::new(theta + sd * z, n))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{tiered_losses, four_action_loss, ThresholdSelector};
    use crate::gnp::rat;

    #[test]
    fn zero_loss_problem_has_zero_risk() {
        let losses = [crate::adversary::zero_loss()];
        let r = estimate_type_one_risk(
            NullSampler::UniformPvalue(&losses),
            &AdversarySelector::Constant(0),
            AuditRule::PValue(&PValueRule::Naive),
            &RiskBudget::default(),
            10_000,
            3,
        )
        .unwrap();
        assert_eq!((r.estimate, r.stderr), (0.0, 0.0));
        assert!(!r.diverged);
    }

    #[test]
    fn naive_four_action_estimate() {
        let losses = [four_action_loss()];
        let r = estimate_type_one_risk(
            NullSampler::UniformPvalue(&losses),
            &AdversarySelector::Constant(0),
            AuditRule::PValue(&PValueRule::Naive),
            &RiskBudget::default(),
            200_000,
            11,
        )
        .unwrap();
        assert!((r.estimate - 2.6).abs() < 4.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn e_rule_is_safe_under_threshold_adversary() {
        let losses = tiered_losses();
        let sel = AdversarySelector::PvalThreshold(ThresholdSelector::tiered());
        let rule = PValueRule::MaxCompatibleNp(rat(1, 20));
        let r = estimate_type_one_risk(
            NullSampler::UniformPvalue(&losses),
            &sel,
            AuditRule::PValue(&rule),
            &RiskBudget::default(),
            100_000,
            5,
        )
        .unwrap();
        assert!((r.estimate - 0.6).abs() < 4.0 * r.stderr);
        assert_eq!(r.adversary, "pval-threshold");
    }

    #[test]
    fn b_sequence_matches_trace() {
        let cfg = InductiveConfig::new(0.01, IntervalMethodKind::Cd).unwrap();
        let trace = simulate_inductive_behavior(500, &cfg, 9).unwrap();
        let bs = sample_b_sequence(500, 0.01, 9).unwrap();
        assert_eq!(trace.b, bs);
        assert!(bs.iter().all(|&b| b >= 1.0));
        let big = sample_b_sequence(100, 1e6, 9).unwrap();
        assert!(big.iter().all(|&b| b == 1.0));
    }

    #[test]
    fn single_study() {
        for method in [IntervalMethodKind::Cd, IntervalMethodKind::E] {
            let cfg = InductiveConfig::new(0.01, method).unwrap();
            let t = simulate_inductive_behavior(1, &cfg, 1).unwrap();
            let want = if t.miss[0] { t.b[0] } else { 0.0 };
            assert_eq!(t.running_mean, vec![want]);
        }
    }

    #[test]
    fn fixed_n_coverage() {
        let coll = crate::evariables::normal_ecollection(100.0, 0.05).unwrap();
        let r = coverage_under_stopping(&coll, 0.0, StoppingRule::FixedN(100), 0.05, 20_000, 4).unwrap();
        assert!(r.coverage >= 0.95 - 3.0 * r.stderr);
    }

    #[test]
    fn mismatched_sampler_and_rule() {
        let p = crate::adversary::dyadic_problem(2).unwrap();
        let losses = [four_action_loss()];
        let table = crate::rules::pvalue_rule_table(&p.problem, &p.pvals, &PValueRule::Naive, &RiskBudget::default()).unwrap();
        let r = estimate_type_one_risk(
            NullSampler::UniformPvalue(&losses),
            &AdversarySelector::Constant(0),
            AuditRule::Table(&table),
            &RiskBudget::default(),
            10,
            1,
        );
        assert!(r.is_err());
    }
}
