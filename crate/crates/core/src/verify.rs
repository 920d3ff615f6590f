//! Exact, exhaustive checks of safety, dominance and admissibility on finite
//! problems, and a randomized harness for the admissibility theory.

use num_traits::{One, Signed, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::adversary::AdversarySelector;
use crate::error::{GnpError, Result};
use crate::evariables::{ExactEValue, EValueTable};
use crate::gnp::{
    enlarge_with_id, exact_type_one_risk, fmt_rat, int, is_compatible, max_compatible_rule, rat, DecisionRule,
    GnpProblem, NullModel, Pmf, Rational, Risk, RiskBudget, TypeOneLoss,
};
use crate::rng::trial_rng;

/// Rules enumerated by [`brute_force_admissible`] at most.
pub const RULE_ENUMERATION_LIMIT: u128 = 10_000_000;
/// Selector maps searched by [`find_unsafe_witness`] at most.
pub const SELECTOR_SEARCH_LIMIT: u128 = 1_000_000;

/// A finite problem with losses already divided by ℓ, plus an optional
/// candidate e-variable.
#[derive(Debug, Clone)]
pub struct FiniteProblemInstance {
    problem: GnpProblem,
    evariable: Option<EValueTable>,
}

impl FiniteProblemInstance {
    pub fn new(problem: &GnpProblem, evariable: Option<EValueTable>, budget: &RiskBudget) -> Result<Self> {
        let n = problem.num_outcomes()?;
        for loss in problem.losses() {
            loss.expect_table()?;
        }
        if let Some(s) = &evariable {
            if s.len() != n {
                return Err(GnpError::Structural(format!("e-variable has {} values for {n} outcomes", s.len())));
            }
        }
        Ok(FiniteProblemInstance { problem: problem.normalized(budget), evariable })
    }

    pub fn problem(&self) -> &GnpProblem {
        &self.problem
    }

    pub fn evariable(&self) -> Option<&EValueTable> {
        self.evariable.as_ref()
    }

    pub fn full_support(&self) -> bool {
        self.problem.null().full_support()
    }

    fn pmfs(&self) -> &[Pmf] {
        self.problem.pmfs().expect("finite instance")
    }

    /// Outcomes with positive mass under some pmf.
    fn support(&self) -> Vec<bool> {
        let n = self.problem.num_outcomes().expect("finite instance");
        (0..n).map(|y| self.pmfs().iter().any(|p| p.p[y].is_positive())).collect()
    }
}

fn expectation(pmf: &Pmf, values: &[Rational]) -> Rational {
    pmf.p.iter().zip(values).filter(|(m, _)| !m.is_zero()).map(|(m, v)| m * v).sum()
}

/// `max_P E_P[max_b L_b(0, δ_b(Y))]`.
pub fn worst_case_risk(instance: &FiniteProblemInstance, rule: &DecisionRule) -> Result<Rational> {
    let envelope = rule.envelope(&instance.problem)?;
    Ok(instance.pmfs().iter().map(|p| expectation(p, &envelope)).max().unwrap_or_else(Rational::zero))
}

pub fn is_type_one_risk_safe(instance: &FiniteProblemInstance, rule: &DecisionRule) -> Result<bool> {
    Ok(worst_case_risk(instance, rule)? <= Rational::one())
}

/// Type-II strictly better: never a smaller Type-I loss on the support of
/// any pmf, and a larger one somewhere with positive probability.
pub fn is_strictly_better(instance: &FiniteProblemInstance, rule_a: &DecisionRule, rule_b: &DecisionRule) -> Result<bool> {
    let p = &instance.problem;
    let support = instance.support();
    let mut strict = false;
    for b in 0..p.losses().len() {
        for (y, &inside) in support.iter().enumerate() {
            if !inside {
                continue;
            }
            let (la, lb) = (rule_a.loss_at(p, b, y)?, rule_b.loss_at(p, b, y)?);
            if la < lb {
                return Ok(false);
            }
            strict |= la > lb;
        }
    }
    Ok(strict)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityVerdict {
    pub admissible: bool,
    pub safe: bool,
    /// Worst-case risk of the rule under test.
    pub risk: Rational,
    /// Lexicographically first safe, strictly better rule.
    pub witness: Option<DecisionRule>,
    pub witness_risk: Option<Rational>,
}

impl AdmissibilityVerdict {
    /// `{"admissible", "witness", "risk"}` with the witness as a map from
    /// loss id to the action played at each outcome.
    pub fn to_json(&self, problem: &GnpProblem) -> Value {
        let witness = self.witness.as_ref().map(|w| rule_to_json(problem, w)).unwrap_or(Value::Null);
        let risk = self.witness_risk.as_ref().unwrap_or(&self.risk);
        json!({ "admissible": self.admissible, "witness": witness, "risk": fmt_rat(risk) })
    }
}

pub fn rule_to_json(problem: &GnpProblem, rule: &DecisionRule) -> Value {
    let mut map = serde_json::Map::new();
    for (b, loss) in problem.losses().iter().enumerate() {
        let (actions, _) = loss.table().expect("finite loss");
        let row: Vec<Value> = rule.table()[b].iter().map(|&a| Value::String(fmt_rat(&actions[a]))).collect();
        map.insert(loss.id().0.clone(), Value::Array(row));
    }
    Value::Object(map)
}

struct Search<'a> {
    instance: &'a FiniteProblemInstance,
    entries: Vec<(usize, usize)>,
    choices: Vec<Vec<usize>>,
    losses: Vec<Vec<Rational>>,
    table: Vec<Vec<usize>>,
    envelope: Vec<Rational>,
    expected: Vec<Rational>,
    strict: usize,
    base: &'a DecisionRule,
}

impl Search<'_> {
    fn run(&mut self, depth: usize) -> bool {
        if depth == self.entries.len() {
            return self.strict > 0;
        }
        let (b, y) = self.entries[depth];
        let base_loss = self.losses[b][self.base.action_index(b, y)].clone();
        for i in 0..self.choices[depth].len() {
            let a = self.choices[depth][i];
            let loss = self.losses[b][a].clone();
            let old = self.envelope[y].clone();
            let new = if loss > old { loss.clone() } else { old.clone() };
            let delta = &new - &old;
            let mut fits = true;
            if delta.is_positive() {
                for (k, pmf) in self.instance.pmfs().iter().enumerate() {
                    self.expected[k] += &pmf.p[y] * &delta;
                    fits &= self.expected[k] <= Rational::one();
                }
            }
            if fits {
                let raised = loss > base_loss;
                self.table[b][y] = a;
                self.envelope[y] = new;
                self.strict += usize::from(raised);
                if self.run(depth + 1) {
                    return true;
                }
                self.strict -= usize::from(raised);
                self.envelope[y] = old;
            }
            if delta.is_positive() {
                for (k, pmf) in self.instance.pmfs().iter().enumerate() {
                    self.expected[k] -= &pmf.p[y] * &delta;
                }
            }
        }
        self.table[b][y] = self.base.action_index(b, y);
        false
    }
}

/// Exhaustive search, in lexicographic (loss, outcome, action) order, for a
/// safe rule that is Type-II strictly better than `rule`. Only rules that
/// dominate `rule` on the support can be strictly better, and a branch is
/// cut once its partial envelope already has expectation above one.
pub fn brute_force_admissible(instance: &FiniteProblemInstance, rule: &DecisionRule) -> Result<AdmissibilityVerdict> {
    let p = &instance.problem;
    let count = p.rule_count()?;
    if count > RULE_ENUMERATION_LIMIT {
        return Err(GnpError::EnumerationTooLarge { count, limit: RULE_ENUMERATION_LIMIT });
    }
    let risk = worst_case_risk(instance, rule)?;
    if risk > Rational::one() {
        return Ok(AdmissibilityVerdict { admissible: false, safe: false, risk, witness: None, witness_risk: None });
    }
    let losses: Vec<Vec<Rational>> = p.losses().iter().map(|l| l.expect_table().map(|(_, v)| v.to_vec())).collect::<Result<_>>()?;
    let support = instance.support();
    let n = support.len();
    let mut entries = Vec::new();
    let mut choices = Vec::new();
    for (b, row) in losses.iter().enumerate() {
        for y in (0..n).filter(|&y| support[y]) {
            let floor = &row[rule.action_index(b, y)];
            entries.push((b, y));
            choices.push((0..row.len()).filter(|&a| row[a] >= *floor).collect());
        }
    }
    // outcomes outside every support: play the least action
    let table: Vec<Vec<usize>> = (0..losses.len())
        .map(|b| (0..n).map(|y| if support[y] { rule.action_index(b, y) } else { 0 }).collect())
        .collect();
    let base_envelope = DecisionRule::from_table_unchecked(table.clone()).envelope(p)?;
    let mut envelope: Vec<Rational> = vec![Rational::zero(); n];
    for y in (0..n).filter(|&y| !support[y]) {
        envelope[y] = base_envelope[y].clone();
    }
    let expected = vec![Rational::zero(); instance.pmfs().len()];
    let mut search = Search { instance, entries, choices, losses, table, envelope, expected, strict: 0, base: rule };
    if search.run(0) {
        let witness = DecisionRule::from_table_unchecked(search.table);
        let witness_risk = worst_case_risk(instance, &witness)?;
        Ok(AdmissibilityVerdict { admissible: false, safe: true, risk, witness: Some(witness), witness_risk: Some(witness_risk) })
    } else {
        Ok(AdmissibilityVerdict { admissible: true, safe: true, risk, witness: None, witness_risk: None })
    }
}

/// Admissibility by the single-entry argument: a safe, strictly better rule
/// exists iff raising one supported entry to its next larger loss is safe.
pub fn admissible_by_single_raise(instance: &FiniteProblemInstance, rule: &DecisionRule) -> Result<bool> {
    if !is_type_one_risk_safe(instance, rule)? {
        return Ok(false);
    }
    let p = &instance.problem;
    let support = instance.support();
    for (b, loss) in p.losses().iter().enumerate() {
        let (_, row) = loss.expect_table()?;
        for y in (0..support.len()).filter(|&y| support[y]) {
            let current = &row[rule.action_index(b, y)];
            if let Some(next) = (0..row.len()).find(|&a| row[a] > *current) {
                let mut table = rule.table().to_vec();
                table[b][y] = next;
                if is_type_one_risk_safe(instance, &DecisionRule::from_table_unchecked(table))? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// `E_P[S] ≤ 1` for every pmf.
pub fn is_evariable(instance: &FiniteProblemInstance, s: &EValueTable) -> Result<bool> {
    for pmf in instance.pmfs() {
        match s.expectation(pmf) {
            Some(e) if e > Rational::one() => return Ok(false),
            Some(_) => {}
            None => return Err(GnpError::Structural("e-variable has non-rational values with positive mass".into())),
        }
    }
    Ok(true)
}

/// `E_P[S] = 1` for some pmf.
pub fn is_sharp(instance: &FiniteProblemInstance, s: &EValueTable) -> Result<bool> {
    for pmf in instance.pmfs() {
        match s.expectation(pmf) {
            Some(e) if e.is_one() => return Ok(true),
            Some(_) => {}
            None => return Err(GnpError::Structural("e-variable has non-rational values with positive mass".into())),
        }
    }
    Ok(false)
}

/// Closed-form check of `E_θ[S_θ] = 1` for the normal collection: each half
/// of the mixture has `ln E = −nU²/2 + nU²/2`.
pub fn normal_collection_is_sharp(coll: &crate::evariables::NormalECollection, n: u64) -> bool {
    let u = coll.u();
    let half = n as f64 * u * u / 2.0;
    (-half + half) == 0.0
}

/// Every value `S` takes is a Type-I loss value of some action.
pub fn is_rich(instance: &FiniteProblemInstance, s: &EValueTable) -> Result<bool> {
    let mut values = Vec::new();
    for loss in instance.problem.losses() {
        values.extend(loss.expect_table()?.1.iter().cloned());
    }
    Ok(s.values().iter().all(|v| match v {
        ExactEValue::Finite(x) => values.contains(x),
        ExactEValue::Calibrated(p) => values.iter().any(|l| {
            let t = l + Rational::one();
            (p * &t * &t).is_one()
        }),
        ExactEValue::Infinite => false,
    }))
}

/// Loss-level maximal compatibility: every `L_b(0, δ_b(y))` is the largest
/// loss of `L_b` not exceeding `S(y)`.
pub fn is_maximally_compatible(instance: &FiniteProblemInstance, rule: &DecisionRule, s: &EValueTable) -> Result<bool> {
    let p = &instance.problem;
    for (b, loss) in p.losses().iter().enumerate() {
        let (_, row) = loss.expect_table()?;
        for y in 0..s.len() {
            let best = row.iter().filter(|l| s.value(y).admits(l)).max();
            if best != Some(&row[rule.action_index(b, y)]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualizerVerdict {
    /// Some premise fails.
    NotApplicable,
    Holds,
    Violated,
}

/// Premises: full support, `S` a sharp e-variable, `rule` safe, and
/// `L_{B(y)}(0, δ_{B(y)}(y)) = S(y)` for all `y`. Conclusion: `rule` is
/// compatible with `S`.
pub fn check_equalizer_lemma(instance: &FiniteProblemInstance, s: &EValueTable, b_fn: &[usize], rule: &DecisionRule) -> Result<EqualizerVerdict> {
    let p = &instance.problem;
    let n = p.num_outcomes()?;
    if b_fn.len() != n || b_fn.iter().any(|&b| b >= p.losses().len()) {
        return Err(GnpError::Structural("selector map does not fit the problem".into()));
    }
    if !instance.full_support() || !is_evariable(instance, s)? || !is_sharp(instance, s)? {
        return Ok(EqualizerVerdict::NotApplicable);
    }
    if !is_type_one_risk_safe(instance, rule)? {
        return Ok(EqualizerVerdict::NotApplicable);
    }
    let values = s.exact_values()?;
    for y in 0..n {
        if rule.loss_at(p, b_fn[y], y)? != &values[y] {
            return Ok(EqualizerVerdict::NotApplicable);
        }
    }
    if is_compatible(rule, s, p, &RiskBudget::default())? {
        Ok(EqualizerVerdict::Holds)
    } else {
        Ok(EqualizerVerdict::Violated)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeWitness {
    /// Loss index per outcome index.
    pub map: Vec<usize>,
    pub pmf_id: String,
    pub risk: Rational,
}

/// First selector map, in lexicographic order, under which some pmf gives
/// risk above one.
pub fn find_unsafe_witness(instance: &FiniteProblemInstance, rule: &DecisionRule) -> Result<Option<UnsafeWitness>> {
    let p = &instance.problem;
    let n = p.num_outcomes()?;
    let k = p.losses().len();
    let count = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > SELECTOR_SEARCH_LIMIT {
        return Err(GnpError::EnumerationTooLarge { count, limit: SELECTOR_SEARCH_LIMIT });
    }
    let budget = RiskBudget::default();
    let mut map = vec![0usize; n];
    loop {
        let selector = AdversarySelector::Table(map.clone());
        for pmf in instance.pmfs() {
            if let Risk::Finite(r) = exact_type_one_risk(p, rule, &selector, &pmf.id, &budget)? {
                if r > Rational::one() {
                    return Ok(Some(UnsafeWitness { map, pmf_id: pmf.id.clone(), risk: r }));
                }
            }
        }
        // advance the odometer, last outcome fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            map[i] += 1;
            if map[i] < k {
                break;
            }
            map[i] = 0;
        }
    }
}

/// The enlargement example: outcomes {0, 10, 20} with masses 37/40, 1/20,
/// 1/40, one loss on actions {0, 9, 19, 21} with `L(0, a) = a`, and
/// `S(y) = y`.
pub fn example_add() -> (GnpProblem, EValueTable) {
    let null = NullModel::finite(
        vec![int(0), int(10), int(20)],
        vec![Pmf { id: "P0".into(), p: vec![rat(37, 40), rat(1, 20), rat(1, 40)] }],
    )
    .expect("valid null");
    let b1 = TypeOneLoss::identity("b1", vec![int(0), int(9), int(19), int(21)]).expect("valid loss");
    let problem = GnpProblem::new(vec![b1], null).expect("valid problem");
    (problem, EValueTable::from_rationals(vec![int(0), int(10), int(20)]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleAddReport {
    pub original_rich: bool,
    pub enlarged_rich: bool,
    pub sharp: bool,
    pub original: AdmissibilityVerdict,
    pub enlarged_unsafe: Option<UnsafeWitness>,
    pub enlarged: AdmissibilityVerdict,
}

impl ExampleAddReport {
    pub fn summary(&self) -> String {
        let original = match (&self.original.admissible, &self.original.witness_risk) {
            (false, Some(r)) => format!("original: inadmissible (witness risk {})", fmt_rat(r)),
            (true, _) => "original: admissible".into(),
            (false, None) => "original: unsafe".into(),
        };
        let enlarged = match &self.enlarged_unsafe {
            Some(w) => format!("enlarged: witness risk {} unsafe", fmt_rat(&w.risk)),
            None => "enlarged: no unsafe witness".into(),
        };
        let verdict = if self.enlarged.admissible { "admissible" } else { "inadmissible" };
        format!("{original}; {enlarged}\nenlarged delta: {verdict}")
    }

    pub fn reproduces_example(&self) -> bool {
        !self.original_rich
            && self.enlarged_rich
            && self.sharp
            && !self.original.admissible
            && self.original.witness_risk == Some(rat(39, 40))
            && self.enlarged_unsafe.as_ref().map(|w| w.risk.clone()) == Some(rat(41, 40))
            && self.enlarged.admissible
    }
}

/// Runs the enlargement example end to end.
pub fn run_example_add() -> Result<ExampleAddReport> {
    let (problem, s) = example_add();
    let budget = RiskBudget::default();
    let original = FiniteProblemInstance::new(&problem, Some(s.clone()), &budget)?;
    let delta = DecisionRule::new(&problem, vec![vec![0, 1, 2]])?;
    let verdict = brute_force_admissible(&original, &delta)?;

    let big = enlarge_with_id(&problem, &s)?;
    let enlarged = FiniteProblemInstance::new(&big, Some(s.clone()), &budget)?;
    let delta_big = delta.extended(vec![vec![0, 1, 2]]);
    let delta_prime_big = DecisionRule::new(&big, vec![vec![0, 1, 3], vec![0, 1, 2]])?;
    Ok(ExampleAddReport {
        original_rich: is_rich(&original, &s)?,
        enlarged_rich: is_rich(&enlarged, &s)?,
        sharp: is_sharp(&original, &s)?,
        original: verdict,
        enlarged_unsafe: find_unsafe_witness(&enlarged, &delta_prime_big)?,
        enlarged: brute_force_admissible(&enlarged, &delta_big)?,
    })
}

/// A random small instance with a candidate e-variable.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub instance: FiniteProblemInstance,
    pub s: EValueTable,
}

fn random_pmf<R: Rng>(rng: &mut R, id: &str, n: usize, full: bool) -> Pmf {
    let den = rng.random_range(n.max(2)..=40) as i64;
    let mut units = vec![i64::from(full); n];
    let mut left = den - units.iter().sum::<i64>();
    while left > 0 {
        units[rng.random_range(0..n)] += 1;
        left -= 1;
    }
    Pmf { id: id.into(), p: units.into_iter().map(|u| rat(u, den)).collect() }
}

/// Draws one instance: 2–4 outcomes, 1–3 losses with 2–4 actions each,
/// 1–2 pmfs with denominators ≤ 40, a sharp (mostly) e-variable, and loss
/// values drawn from the e-variable's values and small integers. Instances
/// whose rule space exceeds the enumeration limit are redrawn.
pub fn random_instance<R: Rng>(rng: &mut R) -> RandomInstance {
    loop {
        let n = rng.random_range(2..=4);
        let full = rng.random_bool(0.8);
        let pmfs: Vec<Pmf> = (0..rng.random_range(1..=2)).map(|k| random_pmf(rng, &format!("P{k}"), n, full)).collect();
        let raw: Vec<Rational> = (0..n).map(|_| rat(rng.random_range(0..=12), rng.random_range(1..=4))).collect();
        let peak = pmfs.iter().map(|p| expectation(p, &raw)).max().expect("pmfs");
        if peak.is_zero() {
            continue;
        }
        let mut scale = peak.recip();
        if rng.random_bool(0.15) {
            scale *= rat(rng.random_range(1..=3), 4);
        }
        let s_values: Vec<Rational> = raw.iter().map(|v| v * &scale).collect();
        let mut pool: Vec<Rational> = s_values.iter().filter(|v| v.is_positive()).cloned().collect();
        pool.extend([int(1), int(2), int(3), int(5), rat(1, 2)]);
        pool.sort();
        pool.dedup();
        let losses: Vec<TypeOneLoss> = (0..rng.random_range(1..=3))
            .map(|b| {
                let k = rng.random_range(2..=4).min(pool.len() + 1);
                let mut picked: Vec<Rational> = pool.choose_multiple(rng, k - 1).cloned().collect();
                picked.sort();
                let mut loss0 = vec![Rational::zero()];
                loss0.extend(picked);
                let actions = (0..loss0.len() as i64).map(int).collect();
                TypeOneLoss::finite(format!("L{b}"), actions, loss0).expect("valid loss")
            })
            .collect();
        let outcomes = (0..n as i64).map(int).collect();
        let Ok(null) = NullModel::finite(outcomes, pmfs) else { continue };
        let Ok(mut problem) = GnpProblem::new(losses, null) else { continue };
        let s = EValueTable::from_rationals(s_values);
        if rng.random_bool(0.5) {
            problem = enlarge_with_id(&problem, &s).expect("finite problem");
        }
        if problem.rule_count().map_or(true, |c| c > RULE_ENUMERATION_LIMIT) {
            continue;
        }
        let instance = FiniteProblemInstance::new(&problem, Some(s.clone()), &RiskBudget::default()).expect("valid instance");
        return RandomInstance { instance, s };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct HarnessReport {
    pub cases: u64,
    pub seed: u64,
    pub safety_checked: u64,
    pub safety_failures: u64,
    pub equalizer_applicable: u64,
    pub equalizer_failures: u64,
    pub admissible_maximal_checked: u64,
    pub admissible_maximal_failures: u64,
    pub maximal_admissible_applicable: u64,
    pub maximal_admissible_failures: u64,
    pub route_mismatches: u64,
    /// Smallest case index with any failure.
    pub first_failure: Option<u64>,
}

impl HarnessReport {
    pub fn failures(&self) -> u64 {
        self.safety_failures + self.equalizer_failures + self.admissible_maximal_failures + self.maximal_admissible_failures + self.route_mismatches
    }

    fn merge(mut self, other: HarnessReport) -> HarnessReport {
        self.cases += other.cases;
        self.safety_checked += other.safety_checked;
        self.safety_failures += other.safety_failures;
        self.equalizer_applicable += other.equalizer_applicable;
        self.equalizer_failures += other.equalizer_failures;
        self.admissible_maximal_checked += other.admissible_maximal_checked;
        self.admissible_maximal_failures += other.admissible_maximal_failures;
        self.maximal_admissible_applicable += other.maximal_admissible_applicable;
        self.maximal_admissible_failures += other.maximal_admissible_failures;
        self.route_mismatches += other.route_mismatches;
        self.first_failure = match (self.first_failure, other.first_failure) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }
}

fn random_rule<R: Rng>(rng: &mut R, problem: &GnpProblem) -> DecisionRule {
    DecisionRule::from_fn(problem, |b, _| rng.random_range(0..problem.losses()[b].num_actions().expect("finite"))).expect("in range")
}

const STREAM_VERIFY: u64 = 5;

fn check_case(case: u64, seed: u64) -> Result<HarnessReport> {
    let mut rng = trial_rng(seed, STREAM_VERIFY, case);
    let RandomInstance { instance, s } = random_instance(&mut rng);
    let p = instance.problem().clone();
    let mut rep = HarnessReport { cases: 1, seed, ..Default::default() };
    let n = p.num_outcomes()?;
    let k = p.losses().len();

    // safety ⟺ the envelope is an e-variable the rule is compatible with
    let rule = random_rule(&mut rng, &p);
    let safe = is_type_one_risk_safe(&instance, &rule)?;
    let envelope = EValueTable::from_rationals(rule.envelope(&p)?);
    let via_envelope = is_evariable(&instance, &envelope)? && is_compatible(&rule, &envelope, &p, &RiskBudget::default())?;
    let no_witness = find_unsafe_witness(&instance, &rule)?.is_none();
    rep.safety_checked += 1;
    if safe != via_envelope || safe != no_witness {
        rep.safety_failures += 1;
    }
    let s_is_e = is_evariable(&instance, &s)?;
    let star = max_compatible_rule(&p, &s, &RiskBudget::default())?;
    if s_is_e && !is_type_one_risk_safe(&instance, &star)? {
        rep.safety_failures += 1;
    }

    // brute force against the single-raise route
    let brute = brute_force_admissible(&instance, &rule)?;
    if brute.admissible != admissible_by_single_raise(&instance, &rule)? {
        rep.route_mismatches += 1;
    }

    if instance.full_support() {
        // admissible ⟹ maximally compatible with its own envelope, on a rule
        // reached by improving a safe one until no witness is left
        let mut current = if safe { rule.clone() } else { DecisionRule::from_fn(&p, |_, _| 0)? };
        loop {
            let v = brute_force_admissible(&instance, &current)?;
            match v.witness {
                Some(w) => current = w,
                None => break,
            }
        }
        rep.admissible_maximal_checked += 1;
        let env = EValueTable::from_rationals(current.envelope(&p)?);
        if !is_maximally_compatible(&instance, &current, &env)? {
            rep.admissible_maximal_failures += 1;
        }

        // sharp, rich ⟹ the maximally compatible rule is admissible
        if s_is_e && is_sharp(&instance, &s)? && is_rich(&instance, &s)? {
            rep.maximal_admissible_applicable += 1;
            if !brute_force_admissible(&instance, &star)?.admissible {
                rep.maximal_admissible_failures += 1;
            }
        }

        // equalizer check on a rule that attains S along a random B
        let values = s.exact_values()?;
        let mut b_fn = Vec::with_capacity(n);
        let mut table = star.table().to_vec();
        for (y, v) in values.iter().enumerate() {
            let options: Vec<(usize, usize)> = (0..k)
                .flat_map(|b| {
                    let row = p.losses()[b].table().expect("finite").1;
                    row.iter().enumerate().filter(|(_, l)| *l == v).map(move |(a, _)| (b, a))
                })
                .collect();
            if let Some(&(b, a)) = options.choose(&mut rng) {
                b_fn.push(b);
                table[b][y] = a;
            } else {
                b_fn.push(0);
            }
        }
        for (b, row) in table.iter_mut().enumerate() {
            let actions = p.losses()[b].num_actions().expect("finite");
            for (y, entry) in row.iter_mut().enumerate() {
                if b != b_fn[y] && rng.random_bool(0.3) {
                    *entry = rng.random_range(0..actions);
                }
            }
        }
        let candidate = DecisionRule::new(&p, table)?;
        match check_equalizer_lemma(&instance, &s, &b_fn, &candidate)? {
            EqualizerVerdict::NotApplicable => {}
            EqualizerVerdict::Holds => rep.equalizer_applicable += 1,
            EqualizerVerdict::Violated => {
                rep.equalizer_applicable += 1;
                rep.equalizer_failures += 1;
            }
        }
    }
    if rep.failures() > 0 {
        rep.first_failure = Some(case);
    }
    Ok(rep)
}

/// Runs `cases` random instances through the safety equivalence, the
/// equalizer check and both directions of the admissibility
/// characterization. Case `i` draws from its own stream, so the report does
/// not depend on scheduling.
pub fn run_random_harness(cases: u64, seed: u64) -> Result<HarnessReport> {
    let reports: Vec<HarnessReport> = (0..cases).into_par_iter().map(|c| check_case(c, seed)).collect::<Result<_>>()?;
    Ok(reports.into_iter().fold(HarnessReport { seed, ..Default::default() }, HarnessReport::merge))
}
