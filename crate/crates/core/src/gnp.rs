//! Generalized Neyman-Pearson testing problems: Type-I loss families over
//! action spaces, a null model, decision rules, compatibility with an
//! e-variable and exact Type-I risk.
//!
//! All losses are stored normalized to a risk budget of one; [`RiskBudget`]
//! divides through on the way in, so a rule judged under `(L, ℓ)` gets the
//! same verdict as under `(L/ℓ, 1)`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::adversary::AdversarySelector;
use crate::error::{invalid, GnpError, Result};
use crate::evariables::EValueTable;
use crate::rules::{self, PValueRule};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact value of a finite float. Non-finite input is rejected.
pub fn rat_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// `num/den` renders, integers render bare.
pub fn fmt_rat(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"num/den"`, integers and decimal literals (with optional exponent)
/// into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let s = text.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let negative = mantissa.starts_with('-');
    let digits = mantissa.trim_start_matches(['-', '+']);
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{whole}{frac}").parse().unwrap_or_else(|_| BigInt::zero());
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LossId(pub String);

impl LossId {
    pub fn new(id: impl Into<String>) -> Self {
        LossId(id.into())
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The risk bound ℓ.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBudget {
    ell: Rational,
}

impl RiskBudget {
    pub fn new(ell: Rational) -> Result<Self> {
        if ell.is_positive() {
            Ok(RiskBudget { ell })
        } else {
            Err(invalid("ell", format!("{} is not positive", fmt_rat(&ell))))
        }
    }

    pub fn from_f64(ell: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(invalid("ell", format!("{ell} is not a positive finite number")));
        }
        Self::new(rat_from_f64(ell).expect("finite"))
    }

    pub fn ell(&self) -> &Rational {
        &self.ell
    }

    pub fn ell_f64(&self) -> f64 {
        rat_to_f64(&self.ell)
    }
}

impl Default for RiskBudget {
    fn default() -> Self {
        RiskBudget { ell: Rational::one() }
    }
}

/// A closed interval of actions; `hi` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionInterval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Finite(Vec<Rational>),
    IntervalUnion(Vec<ActionInterval>),
}

impl ActionSpace {
    pub fn least(&self) -> f64 {
        match self {
            ActionSpace::Finite(actions) => rat_to_f64(&actions[0]),
            ActionSpace::IntervalUnion(parts) => parts[0].lo,
        }
    }

    pub fn contains(&self, action: f64) -> bool {
        match self {
            ActionSpace::Finite(actions) => actions.iter().any(|a| rat_to_f64(a) == action),
            ActionSpace::IntervalUnion(parts) => parts.iter().any(|p| p.lo <= action && action <= p.hi),
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One interval of a continuous action space with a continuous, strictly
/// increasing Type-I loss and its inverse.
#[derive(Clone)]
pub struct LossPiece {
    pub interval: ActionInterval,
    loss: RealFn,
    inverse: RealFn,
}

impl LossPiece {
    pub fn new(
        interval: ActionInterval,
        loss: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LossPiece { interval, loss: Arc::new(loss), inverse: Arc::new(inverse) }
    }

    pub fn loss(&self, action: f64) -> f64 {
        (self.loss)(action)
    }

    pub fn inverse(&self, value: f64) -> f64 {
        (self.inverse)(value)
    }
}

impl fmt::Debug for LossPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossPiece").field("interval", &self.interval).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum LossShape {
    /// Strictly increasing actions with nondecreasing exact losses.
    Finite { actions: Vec<Rational>, loss0: Vec<Rational> },
    /// Disjoint sorted intervals, loss continuous and increasing on each.
    Piecewise(Vec<LossPiece>),
}

/// The Type-I loss `L_b(0, ·)` of one member of the loss family.
#[derive(Debug, Clone)]
pub struct TypeOneLoss {
    id: LossId,
    shape: LossShape,
}

impl TypeOneLoss {
    pub fn finite(id: impl Into<String>, actions: Vec<Rational>, loss0: Vec<Rational>) -> Result<Self> {
        let id = LossId::new(id);
        if actions.is_empty() {
            return Err(GnpError::Structural(format!("loss `{id}` has no actions")));
        }
        if actions.len() != loss0.len() {
            return Err(GnpError::Structural(format!(
                "loss `{id}`: {} actions but {} loss values",
                actions.len(),
                loss0.len()
            )));
        }
        if actions.iter().any(|a| a.is_negative()) {
            return Err(GnpError::Structural(format!("loss `{id}`: actions must be nonnegative")));
        }
        if actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GnpError::Structural(format!("loss `{id}`: actions must be strictly increasing")));
        }
        if loss0.iter().any(|l| l.is_negative()) {
            return Err(GnpError::Structural(format!("loss `{id}`: losses must be nonnegative")));
        }
        if loss0.windows(2).any(|w| w[0] > w[1]) {
            return Err(GnpError::Structural(format!("loss `{id}`: loss must be nondecreasing in the action")));
        }
        Ok(TypeOneLoss { id, shape: LossShape::Finite { actions, loss0 } })
    }

    /// Loss equal to the action label, `L(0, a) = a`.
    pub fn identity(id: impl Into<String>, actions: Vec<Rational>) -> Result<Self> {
        Self::finite(id, actions.clone(), actions)
    }

    pub fn piecewise(id: impl Into<String>, pieces: Vec<LossPiece>) -> Result<Self> {
        let id = LossId::new(id);
        if pieces.is_empty() {
            return Err(GnpError::Structural(format!("loss `{id}` has no action intervals")));
        }
        for p in &pieces {
            let ActionInterval { lo, hi } = p.interval;
            if !(lo >= 0.0 && lo <= hi) || lo.is_infinite() {
                return Err(GnpError::Structural(format!("loss `{id}`: bad interval [{lo}, {hi}]")));
            }
        }
        if pieces.windows(2).any(|w| w[0].interval.hi >= w[1].interval.lo) {
            return Err(GnpError::Structural(format!("loss `{id}`: intervals must be disjoint and sorted")));
        }
        if pieces.windows(2).any(|w| w[0].loss(w[0].interval.hi) > w[1].loss(w[1].interval.lo)) {
            return Err(GnpError::Structural(format!("loss `{id}`: loss must increase across intervals")));
        }
        Ok(TypeOneLoss { id, shape: LossShape::Piecewise(pieces) })
    }

    pub fn id(&self) -> &LossId {
        &self.id
    }

    pub fn shape(&self) -> &LossShape {
        &self.shape
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.shape {
            LossShape::Finite { actions, .. } => ActionSpace::Finite(actions.clone()),
            LossShape::Piecewise(pieces) => ActionSpace::IntervalUnion(pieces.iter().map(|p| p.interval).collect()),
        }
    }

    /// Exact loss table; `None` for continuous action spaces.
    pub fn table(&self) -> Option<(&[Rational], &[Rational])> {
        match &self.shape {
            LossShape::Finite { actions, loss0 } => Some((actions, loss0)),
            LossShape::Piecewise(_) => None,
        }
    }

    pub(crate) fn expect_table(&self) -> Result<(&[Rational], &[Rational])> {
        self.table()
            .ok_or_else(|| GnpError::Structural(format!("loss `{}` does not have a finite action space", self.id)))
    }

    /// `L(0, a)` as a float; `None` if `a` is not an action.
    pub fn loss_at(&self, action: f64) -> Option<f64> {
        match &self.shape {
            LossShape::Finite { actions, loss0 } => {
                actions.iter().position(|a| rat_to_f64(a) == action).map(|i| rat_to_f64(&loss0[i]))
            }
            LossShape::Piecewise(pieces) => pieces
                .iter()
                .find(|p| p.interval.lo <= action && action <= p.interval.hi)
                .map(|p| p.loss(action)),
        }
    }

    pub fn num_actions(&self) -> Option<usize> {
        self.table().map(|(a, _)| a.len())
    }

    fn rescaled(&self, ell: &Rational) -> TypeOneLoss {
        match &self.shape {
            LossShape::Finite { actions, loss0 } => TypeOneLoss {
                id: self.id.clone(),
                shape: LossShape::Finite { actions: actions.clone(), loss0: loss0.iter().map(|l| l / ell).collect() },
            },
            LossShape::Piecewise(pieces) => {
                let k = rat_to_f64(ell);
                let pieces = pieces
                    .iter()
                    .map(|p| {
                        let (loss, inverse) = (p.loss.clone(), p.inverse.clone());
                        LossPiece::new(p.interval, move |a| loss(a) / k, move |v| inverse(v * k))
                    })
                    .collect();
                TypeOneLoss { id: self.id.clone(), shape: LossShape::Piecewise(pieces) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    pub id: String,
    pub p: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NullModel {
    FiniteDiscrete { outcomes: Vec<Rational>, pmfs: Vec<Pmf> },
    /// i.i.d. N(θ, 1) samples of length `n`, θ restricted to `theta_range`.
    NormalLocation { theta_range: (f64, f64), n: u64 },
}

impl NullModel {
    pub fn finite(outcomes: Vec<Rational>, pmfs: Vec<Pmf>) -> Result<Self> {
        if outcomes.is_empty() || pmfs.is_empty() {
            return Err(GnpError::Structural("null model needs outcomes and at least one pmf".into()));
        }
        let mut ids = BTreeSet::new();
        for pmf in &pmfs {
            if !ids.insert(pmf.id.clone()) {
                return Err(GnpError::Structural(format!("duplicate pmf id `{}`", pmf.id)));
            }
            if pmf.p.len() != outcomes.len() {
                return Err(GnpError::Structural(format!(
                    "pmf `{}` has {} masses for {} outcomes",
                    pmf.id,
                    pmf.p.len(),
                    outcomes.len()
                )));
            }
            if pmf.p.iter().any(|m| m.is_negative()) {
                return Err(GnpError::Structural(format!("pmf `{}` has a negative mass", pmf.id)));
            }
            let total: Rational = pmf.p.iter().sum();
            if !total.is_one() {
                return Err(GnpError::Structural(format!("pmf `{}` sums to {}", pmf.id, fmt_rat(&total))));
            }
        }
        Ok(NullModel::FiniteDiscrete { outcomes, pmfs })
    }

    pub fn full_support(&self) -> bool {
        match self {
            NullModel::FiniteDiscrete { pmfs, .. } => pmfs.iter().all(|p| p.p.iter().all(|m| m.is_positive())),
            NullModel::NormalLocation { .. } => true,
        }
    }
}

/// A GNP testing problem: a family of Type-I losses plus the null.
#[derive(Debug, Clone)]
pub struct GnpProblem {
    losses: Vec<TypeOneLoss>,
    null: NullModel,
}

impl GnpProblem {
    pub fn new(losses: Vec<TypeOneLoss>, null: NullModel) -> Result<Self> {
        if losses.is_empty() {
            return Err(GnpError::Structural("problem has no losses".into()));
        }
        let mut ids = BTreeSet::new();
        for l in &losses {
            if !ids.insert(l.id.clone()) {
                return Err(GnpError::Structural(format!("duplicate loss id `{}`", l.id)));
            }
        }
        Ok(GnpProblem { losses, null })
    }

    /// Same problem with every loss divided by `ℓ`.
    pub fn normalized(&self, budget: &RiskBudget) -> GnpProblem {
        GnpProblem {
            losses: self.losses.iter().map(|l| l.rescaled(budget.ell())).collect(),
            null: self.null.clone(),
        }
    }

    pub fn losses(&self) -> &[TypeOneLoss] {
        &self.losses
    }

    pub fn null(&self) -> &NullModel {
        &self.null
    }

    pub fn loss_index(&self, id: &LossId) -> Result<usize> {
        self.losses.iter().position(|l| &l.id == id).ok_or_else(|| GnpError::UnknownLoss(id.0.clone()))
    }

    pub fn loss(&self, id: &LossId) -> Result<&TypeOneLoss> {
        Ok(&self.losses[self.loss_index(id)?])
    }

    pub fn outcomes(&self) -> Result<&[Rational]> {
        match &self.null {
            NullModel::FiniteDiscrete { outcomes, .. } => Ok(outcomes),
            NullModel::NormalLocation { .. } => Err(GnpError::Structural("null model is not finite".into())),
        }
    }

    pub fn pmfs(&self) -> Result<&[Pmf]> {
        match &self.null {
            NullModel::FiniteDiscrete { pmfs, .. } => Ok(pmfs),
            NullModel::NormalLocation { .. } => Err(GnpError::Structural("null model is not finite".into())),
        }
    }

    pub fn pmf(&self, id: &str) -> Result<&Pmf> {
        self.pmfs()?
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| GnpError::Structural(format!("unknown pmf id `{id}`")))
    }

    pub fn num_outcomes(&self) -> Result<usize> {
        self.outcomes().map(|o| o.len())
    }

    /// Exact loss of action index `a` under loss index `b`.
    pub fn loss_value(&self, b: usize, a: usize) -> Result<&Rational> {
        let (_, loss0) = self.losses[b].expect_table()?;
        loss0.get(a).ok_or_else(|| GnpError::Structural(format!("action index {a} out of range for `{}`", self.losses[b].id)))
    }

    /// Number of deterministic decision rules on a finite problem.
    pub fn rule_count(&self) -> Result<u128> {
        let n = self.num_outcomes()? as u32;
        let mut total: u128 = 1;
        for l in &self.losses {
            let k = l.expect_table()?.0.len() as u128;
            total = total.saturating_mul(k.saturating_pow(n));
        }
        Ok(total)
    }
}

/// Decision rule on a finite problem: `table[b][y]` is the index of the
/// action played when loss `b` is presented and outcome `y` observed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DecisionRule {
    table: Vec<Vec<usize>>,
}

impl DecisionRule {
    pub fn new(problem: &GnpProblem, table: Vec<Vec<usize>>) -> Result<Self> {
        let n = problem.num_outcomes()?;
        if table.len() != problem.losses.len() {
            return Err(GnpError::Structural(format!(
                "rule covers {} losses, problem has {}",
                table.len(),
                problem.losses.len()
            )));
        }
        for (b, row) in table.iter().enumerate() {
            let k = problem.losses[b].expect_table()?.0.len();
            if row.len() != n {
                return Err(GnpError::Structural(format!("rule row for `{}` has {} entries, want {n}", problem.losses[b].id, row.len())));
            }
            if let Some(&bad) = row.iter().find(|&&a| a >= k) {
                return Err(GnpError::Structural(format!("action index {bad} is not in `{}`", problem.losses[b].id)));
            }
        }
        Ok(DecisionRule { table })
    }

    pub fn from_fn(problem: &GnpProblem, mut f: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let n = problem.num_outcomes()?;
        let table = (0..problem.losses.len()).map(|b| (0..n).map(|y| f(b, y)).collect()).collect();
        Self::new(problem, table)
    }

    pub(crate) fn from_table_unchecked(table: Vec<Vec<usize>>) -> Self {
        DecisionRule { table }
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn action_index(&self, b: usize, y: usize) -> usize {
        self.table[b][y]
    }

    /// The action (label) chosen for loss `id` at outcome index `y`.
    pub fn decide<'p>(&self, problem: &'p GnpProblem, id: &LossId, y: usize) -> Result<&'p Rational> {
        let b = problem.loss_index(id)?;
        let (actions, _) = problem.losses[b].expect_table()?;
        let row = self.table.get(b).ok_or_else(|| GnpError::UnknownLoss(id.0.clone()))?;
        let a = *row.get(y).ok_or_else(|| GnpError::Structural(format!("outcome index {y} out of range")))?;
        Ok(&actions[a])
    }

    /// `L_b(0, δ_b(y))`.
    pub fn loss_at<'p>(&self, problem: &'p GnpProblem, b: usize, y: usize) -> Result<&'p Rational> {
        problem.loss_value(b, self.table[b][y])
    }

    /// `U(y) = max_b L_b(0, δ_b(y))`.
    pub fn envelope(&self, problem: &GnpProblem) -> Result<Vec<Rational>> {
        let n = problem.num_outcomes()?;
        (0..n)
            .map(|y| {
                let mut best = Rational::zero();
                for b in 0..problem.losses.len() {
                    let l = self.loss_at(problem, b, y)?;
                    if *l > best {
                        best = l.clone();
                    }
                }
                Ok(best)
            })
            .collect()
    }

    /// Extends the rule to a problem with extra losses appended.
    pub fn extended(&self, extra_rows: Vec<Vec<usize>>) -> DecisionRule {
        let mut table = self.table.clone();
        table.extend(extra_rows);
        DecisionRule { table }
    }
}

/// Exact Type-I risk. `Infinite` arises only from continuous losses that
/// reach `+∞` with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub enum Risk {
    Finite(Rational),
    Infinite,
}

impl Risk {
    pub fn to_f64(&self) -> f64 {
        match self {
            Risk::Finite(r) => rat_to_f64(r),
            Risk::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Risk::Finite(r) => Some(r),
            Risk::Infinite => None,
        }
    }

    pub fn at_most(&self, bound: &Rational) -> bool {
        matches!(self, Risk::Finite(r) if r <= bound)
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Risk::Finite(r) => f.write_str(&fmt_rat(r)),
            Risk::Infinite => f.write_str("inf"),
        }
    }
}

/// True iff `L_b(0, δ_b(y)) ≤ S(y)·ℓ` for every outcome and loss.
pub fn is_compatible(rule: &DecisionRule, s: &EValueTable, problem: &GnpProblem, budget: &RiskBudget) -> Result<bool> {
    let n = problem.num_outcomes()?;
    if s.len() != n {
        return Err(GnpError::Structural(format!("e-variable has {} values for {n} outcomes", s.len())));
    }
    if rule.table.len() != problem.losses.len() {
        return Err(GnpError::Structural("rule does not cover every loss of the problem".into()));
    }
    for b in 0..problem.losses.len() {
        for y in 0..n {
            let normalized = rule.loss_at(problem, b, y)? / budget.ell();
            if !s.value(y).admits(&normalized) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `E_P[L_{B(Y)}(0, δ_{B(Y)}(Y))] / ℓ` computed exactly on a finite problem.
pub fn exact_type_one_risk(
    problem: &GnpProblem,
    rule: &DecisionRule,
    selector: &AdversarySelector,
    pmf_id: &str,
    budget: &RiskBudget,
) -> Result<Risk> {
    let outcomes = problem.outcomes()?;
    let pmf = problem.pmf(pmf_id)?;
    let mut total = Rational::zero();
    for (y, mass) in pmf.p.iter().enumerate() {
        if mass.is_zero() {
            continue;
        }
        let loss = match selector.pick_finite(problem, &outcomes[y], y)? {
            Some(b) => rule.loss_at(problem, b, y)?.clone(),
            None => {
                // worst case over the family
                let mut best = Rational::zero();
                for b in 0..problem.losses.len() {
                    let l = rule.loss_at(problem, b, y)?;
                    if *l > best {
                        best = l.clone();
                    }
                }
                best
            }
        };
        total += mass * loss;
    }
    Ok(Risk::Finite(total / budget.ell()))
}

/// Largest risk over every pmf of the null against the worst-case selector.
pub fn worst_case_risk(problem: &GnpProblem, rule: &DecisionRule, budget: &RiskBudget) -> Result<Rational> {
    let mut worst = Rational::zero();
    for pmf in problem.pmfs()? {
        if let Risk::Finite(r) = exact_type_one_risk(problem, rule, &AdversarySelector::WorstCase, &pmf.id, budget)? {
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(worst)
}

/// Exact Type-I risk when the outcome is a strictly uniform p-value on
/// `[0, 1]`, both the rule and the selector depend on the data only through
/// the p-value, and both are piecewise constant on left-open, right-closed
/// cells. The cell structure is found from the breakpoints of rule and
/// selector, and each cell is evaluated at its right end.
pub fn exact_uniform_pvalue_risk(
    losses: &[TypeOneLoss],
    selector: &AdversarySelector,
    rule: &PValueRule,
    budget: &RiskBudget,
) -> Result<Risk> {
    let tables: Vec<Vec<Rational>> = losses
        .iter()
        .map(|l| l.expect_table().map(|(_, loss0)| loss0.iter().map(|v| v / budget.ell()).collect()))
        .collect::<Result<_>>()?;
    let mut cuts: BTreeSet<Rational> = BTreeSet::new();
    cuts.insert(Rational::zero());
    cuts.insert(Rational::one());
    for c in selector.pval_breakpoints()? {
        cuts.insert(c);
    }
    for t in &tables {
        for c in rule.breakpoints(t) {
            cuts.insert(c);
        }
    }
    let cuts: Vec<Rational> = cuts.into_iter().filter(|c| !c.is_negative() && *c <= Rational::one()).collect();
    let mut total = Rational::zero();
    for w in cuts.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        let width = hi - lo;
        let loss = match selector.pick_pval(hi)? {
            Some(b) => {
                let table = tables.get(b).ok_or_else(|| GnpError::UnknownLoss(format!("#{b}")))?;
                table[rule.decide_exact(hi, table)?].clone()
            }
            None => {
                let mut best = Rational::zero();
                for table in &tables {
                    let l = &table[rule.decide_exact(hi, table)?];
                    if *l > best {
                        best = l.clone();
                    }
                }
                best
            }
        };
        total += width * loss;
    }
    Ok(Risk::Finite(total))
}

/// Appends the loss `id(S)`: actions are the attainable values of `S`, and
/// `L(0, s) = s`. A fresh id is used if `id(S)` is taken.
pub fn enlarge_with_id(problem: &GnpProblem, s: &EValueTable) -> Result<GnpProblem> {
    let n = problem.num_outcomes()?;
    if s.len() != n {
        return Err(GnpError::Structural(format!("e-variable has {} values for {n} outcomes", s.len())));
    }
    let codomain: BTreeSet<Rational> = s.exact_values()?.into_iter().collect();
    let actions: Vec<Rational> = codomain.into_iter().collect();
    let mut id = "id(S)".to_string();
    let mut k = 2;
    while problem.losses.iter().any(|l| l.id.0 == id) {
        id = format!("id(S)#{k}");
        k += 1;
    }
    let mut losses = problem.losses.clone();
    losses.push(TypeOneLoss::identity(id, actions)?);
    GnpProblem::new(losses, problem.null.clone())
}

/// `S(y) = max_b L_b(0, δ_b(y))`, the envelope table as an e-value table.
pub fn envelope_table(problem: &GnpProblem, rule: &DecisionRule) -> Result<EValueTable> {
    Ok(EValueTable::from_rationals(rule.envelope(problem)?))
}

/// Decision table of the maximally compatible rule for `S`.
pub fn max_compatible_rule(problem: &GnpProblem, s: &EValueTable, budget: &RiskBudget) -> Result<DecisionRule> {
    let n = problem.num_outcomes()?;
    let mut table = Vec::with_capacity(problem.losses.len());
    for loss in &problem.losses {
        let (_, loss0) = loss.expect_table()?;
        let mut row = Vec::with_capacity(n);
        for y in 0..n {
            let value = s.value(y);
            let a = rules::largest_admitted(loss0, |l| value.admits(&(l / budget.ell()))).ok_or_else(|| {
                GnpError::NoFeasibleAction { loss: loss.id.0.clone(), bound: value.to_string() }
            })?;
            row.push(a);
        }
        table.push(row);
    }
    Ok(DecisionRule { table })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example_add() -> GnpProblem {
        let null = NullModel::finite(
            vec![int(0), int(10), int(20)],
            vec![Pmf { id: "P0".into(), p: vec![rat(37, 40), rat(1, 20), rat(1, 40)] }],
        )
        .unwrap();
        let b1 = TypeOneLoss::identity("b1", vec![int(0), int(9), int(19), int(21)]).unwrap();
        GnpProblem::new(vec![b1], null).unwrap()
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("1/40"), Some(rat(1, 40)));
        assert_eq!(parse_rational("0.05"), Some(rat(1, 20)));
        assert_eq!(parse_rational("-2.5e1"), Some(int(-25)));
        assert_eq!(parse_rational("12"), Some(int(12)));
        assert_eq!(parse_rational("1e-3"), Some(rat(1, 1000)));
        assert_eq!(parse_rational("3/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("."), None);
    }

    #[test]
    fn rejects_bad_losses() {
        assert!(TypeOneLoss::finite("x", vec![int(1), int(0)], vec![int(0), int(1)]).is_err());
        assert!(TypeOneLoss::finite("x", vec![int(0), int(1)], vec![int(2), int(1)]).is_err());
        assert!(TypeOneLoss::finite("x", vec![int(0)], vec![int(0), int(1)]).is_err());
        assert!(TypeOneLoss::finite("x", vec![], vec![]).is_err());
    }

    #[test]
    fn rejects_bad_null() {
        let bad = NullModel::finite(vec![int(0), int(1)], vec![Pmf { id: "p".into(), p: vec![rat(1, 2), rat(1, 3)] }]);
        assert!(bad.is_err());
        let neg = NullModel::finite(vec![int(0), int(1)], vec![Pmf { id: "p".into(), p: vec![rat(3, 2), rat(-1, 2)] }]);
        assert!(neg.is_err());
    }

    #[test]
    fn duplicate_loss_ids_are_structural_errors() {
        let p = example_add();
        let dup = GnpProblem::new(vec![p.losses[0].clone(), p.losses[0].clone()], p.null.clone());
        assert!(matches!(dup, Err(GnpError::Structural(_))));
    }

    #[test]
    fn compatibility_on_the_enlargement_example() {
        let p = example_add();
        let s = EValueTable::from_rationals(vec![int(0), int(10), int(20)]);
        let budget = RiskBudget::default();
        let delta = DecisionRule::new(&p, vec![vec![0, 1, 2]]).unwrap();
        let delta_prime = DecisionRule::new(&p, vec![vec![0, 1, 3]]).unwrap();
        assert!(is_compatible(&delta, &s, &p, &budget).unwrap());
        assert!(!is_compatible(&delta_prime, &s, &p, &budget).unwrap());
        assert_eq!(max_compatible_rule(&p, &s, &budget).unwrap(), delta);
    }

    #[test]
    fn rule_referencing_unknown_loss_is_rejected() {
        let p = example_add();
        let rule = DecisionRule::new(&p, vec![vec![0, 1, 2]]).unwrap();
        assert!(matches!(rule.decide(&p, &LossId::new("nope"), 0), Err(GnpError::UnknownLoss(_))));
        assert!(DecisionRule::new(&p, vec![vec![0, 1, 2], vec![0, 0, 0]]).is_err());
    }

    #[test]
    fn zero_loss_rule_is_compatible_with_anything() {
        let p = example_add();
        let rule = DecisionRule::new(&p, vec![vec![0, 0, 0]]).unwrap();
        for s in [vec![int(0), int(0), int(0)], vec![int(5), int(1), int(0)]] {
            let s = EValueTable::from_rationals(s);
            assert!(is_compatible(&rule, &s, &p, &RiskBudget::default()).unwrap());
        }
        let risk = exact_type_one_risk(&p, &rule, &AdversarySelector::WorstCase, "P0", &RiskBudget::default()).unwrap();
        assert_eq!(risk, Risk::Finite(Rational::zero()));
    }

    #[test]
    fn exact_risk_of_the_improved_rule() {
        let p = example_add();
        let delta_prime = DecisionRule::new(&p, vec![vec![0, 1, 3]]).unwrap();
        let risk = exact_type_one_risk(&p, &delta_prime, &AdversarySelector::Constant(0), "P0", &RiskBudget::default()).unwrap();
        assert_eq!(risk, Risk::Finite(rat(39, 40)));
    }

    #[test]
    fn enlargement_adds_the_identity_loss() {
        let p = example_add();
        let s = EValueTable::from_rationals(vec![int(0), int(10), int(20)]);
        let big = enlarge_with_id(&p, &s).unwrap();
        assert_eq!(big.losses().len(), 2);
        let (actions, loss0) = big.losses()[1].table().unwrap();
        assert_eq!(actions, &[int(0), int(10), int(20)]);
        assert_eq!(loss0, actions);
        // original loss untouched
        assert_eq!(big.losses()[0].table().unwrap().1, p.losses()[0].table().unwrap().1);

        let again = enlarge_with_id(&big, &s).unwrap();
        assert_eq!(again.losses()[2].id().0, "id(S)#2");

        let one = EValueTable::from_rationals(vec![int(1), int(1), int(1)]);
        let single = enlarge_with_id(&p, &one).unwrap();
        assert_eq!(single.losses()[1].table().unwrap().0, &[int(1)]);
    }

    #[test]
    fn normalization_divides_losses() {
        let p = example_add();
        let budget = RiskBudget::new(int(4)).unwrap();
        let q = p.normalized(&budget);
        assert_eq!(q.losses()[0].table().unwrap().1[3], rat(21, 4));
        assert!(RiskBudget::from_f64(0.0).is_err());
        assert!(RiskBudget::from_f64(f64::NAN).is_err());
    }
}
