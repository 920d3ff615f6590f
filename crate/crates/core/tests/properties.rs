use gnp_core::adversary::{AdversarySelector, CdBreakingAdversary};
use gnp_core::confidence::{cd_tail_curve, e_ci_exact, e_ci_sufficient, e_posterior_curve, standard_ci, ThetaGrid};
use gnp_core::evariables::{calibrate_pvalue, np_evariable, normal_ecollection, EValueTable, SampleSummary};
use gnp_core::gnp::{
    enlarge_with_id, exact_type_one_risk, int, is_compatible, max_compatible_rule, rat, DecisionRule, GnpProblem, Rational, RiskBudget,
    TypeOneLoss,
};
use gnp_core::normal;
use gnp_core::rng::trial_rng;
use gnp_core::rules::{max_compatible_decide, naive_p_decide};
use gnp_core::verify::{is_maximally_compatible, is_rich, is_type_one_risk_safe, random_instance, FiniteProblemInstance};
use num_traits::{One, Signed};
use proptest::prelude::*;

fn instance(seed: u64) -> (GnpProblem, EValueTable) {
    let mut rng = trial_rng(seed, 99, 0);
    let r = random_instance(&mut rng);
    (r.instance.problem().clone(), r.s)
}

fn all_tables(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|t| (0..k).map(move |b| [t.clone(), vec![b]].concat())).collect();
    }
    out
}

fn scaled(problem: &GnpProblem, lambda: &Rational) -> GnpProblem {
    let losses = problem
        .losses()
        .iter()
        .map(|l| {
            let (a, v) = l.table().unwrap();
            TypeOneLoss::finite(l.id().0.clone(), a.to_vec(), v.iter().map(|x| x * lambda).collect()).unwrap()
        })
        .collect();
    GnpProblem::new(losses, problem.null().clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compatible_rules_are_safe_against_every_selector(seed in any::<u64>()) {
        let (p, s) = instance(seed);
        let budget = RiskBudget::default();
        let inst = FiniteProblemInstance::new(&p, Some(s.clone()), &budget).unwrap();
        prop_assume!(gnp_core::verify::is_evariable(&inst, &s).unwrap());
        let rule = max_compatible_rule(&p, &s, &budget).unwrap();
        prop_assert!(is_compatible(&rule, &s, &p, &budget).unwrap());
        for map in all_tables(p.losses().len(), p.num_outcomes().unwrap()) {
            let sel = AdversarySelector::Table(map);
            for pmf in p.pmfs().unwrap() {
                let r = exact_type_one_risk(&p, &rule, &sel, &pmf.id, &budget).unwrap();
                prop_assert!(r.at_most(&Rational::one()));
            }
        }
    }

    #[test]
    fn joint_scaling_of_losses_and_budget(seed in any::<u64>(), num in 1i64..50, den in 1i64..50) {
        let (p, s) = instance(seed);
        let lambda = rat(num, den);
        let q = scaled(&p, &lambda);
        let one = RiskBudget::default();
        let ell = RiskBudget::new(lambda.clone()).unwrap();
        let mut rng = trial_rng(seed, 98, 0);
        let rule = DecisionRule::from_fn(&p, |b, _| {
            use rand::Rng;
            rng.random_range(0..p.losses()[b].num_actions().unwrap())
        }).unwrap();
        prop_assert_eq!(is_compatible(&rule, &s, &p, &one).unwrap(), is_compatible(&rule, &s, &q, &ell).unwrap());
        let a = FiniteProblemInstance::new(&p, None, &one).unwrap();
        let b = FiniteProblemInstance::new(&q, None, &ell).unwrap();
        prop_assert_eq!(is_type_one_risk_safe(&a, &rule).unwrap(), is_type_one_risk_safe(&b, &rule).unwrap());
    }

    #[test]
    fn enlargement_is_rich(seed in any::<u64>()) {
        let (p, s) = instance(seed);
        let big = enlarge_with_id(&p, &s).unwrap();
        let inst = FiniteProblemInstance::new(&big, None, &RiskBudget::default()).unwrap();
        prop_assert!(is_rich(&inst, &s).unwrap());
    }

    #[test]
    fn maximal_rule_is_unique_on_full_support(seed in any::<u64>()) {
        let (p, s) = instance(seed);
        prop_assume!(p.null().full_support());
        let budget = RiskBudget::default();
        let inst = FiniteProblemInstance::new(&p, None, &budget).unwrap();
        let star = max_compatible_rule(&p, &s, &budget).unwrap();
        prop_assert!(is_maximally_compatible(&inst, &star, &s).unwrap());
        for b in 0..p.losses().len() {
            for y in 0..p.num_outcomes().unwrap() {
                for a in 0..p.losses()[b].num_actions().unwrap() {
                    if a == star.action_index(b, y) {
                        continue;
                    }
                    let mut t = star.table().to_vec();
                    t[b][y] = a;
                    let other = DecisionRule::new(&p, t).unwrap();
                    prop_assert!(!is_maximally_compatible(&inst, &other, &s).unwrap());
                }
            }
        }
    }

    #[test]
    fn calibrator_strictly_decreasing(a in 1e-300f64..1.0, b in 1e-300f64..1.0) {
        prop_assume!(a < b);
        prop_assert!(calibrate_pvalue(a).unwrap() >= calibrate_pvalue(b).unwrap());
        if b / a > 1.0 + 1e-12 {
            prop_assert!(calibrate_pvalue(a).unwrap() > calibrate_pvalue(b).unwrap());
        }
    }

    #[test]
    fn decisions_are_monotone_and_compatible(s1 in 0.0f64..600.0, s2 in 0.0f64..600.0, ell in 0.1f64..10.0) {
        let loss = gnp_core::adversary::four_action_loss();
        let budget = RiskBudget::from_f64(ell).unwrap();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let a = max_compatible_decide(lo, &loss, &budget).unwrap();
        let b = max_compatible_decide(hi, &loss, &budget).unwrap();
        prop_assert!(a.action <= b.action);
        let bound = Rational::from_float(lo).unwrap() * budget.ell();
        prop_assert!(Rational::from_float(a.loss0_at_action).unwrap() <= bound);
        let (p, q) = (lo / 600.0, hi / 600.0);
        prop_assume!(p > 0.0);
        prop_assert!(naive_p_decide(p, &loss, &budget).unwrap().action >= naive_p_decide(q, &loss, &budget).unwrap().action);
    }

    #[test]
    fn np_evariable_matches_classical_test(k in 1i32..8, ell in 1i64..20, p in 1e-9f64..=1.0) {
        let alpha = 2f64.powi(-k);
        let budget = RiskBudget::new(int(ell)).unwrap();
        let loss = TypeOneLoss::finite("np", vec![int(0), int(1)], vec![int(0), int(ell) * int(1 << k)]).unwrap();
        let s = np_evariable(alpha).unwrap().eval(p);
        let e = max_compatible_decide(s, &loss, &budget).unwrap();
        let n = naive_p_decide(p, &loss, &budget).unwrap();
        prop_assert_eq!(e.action, n.action);
        prop_assert_eq!(e.action == 1.0, p <= alpha);
    }

    #[test]
    fn e_intervals_nest(a1 in 0.001f64..1.0, a2 in 0.001f64..1.0, n in 1u64..2000, mle in -5.0f64..5.0) {
        let coll = normal_ecollection(100.0, 0.05).unwrap();
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        prop_assert!(e_ci_sufficient(mle, n, hi, &coll).unwrap().is_subset_of(&e_ci_sufficient(mle, n, lo, &coll).unwrap()));
        let wide = e_ci_exact(mle, n, lo, &coll).unwrap();
        let narrow = e_ci_exact(mle, n, hi, &coll).unwrap();
        prop_assert!(narrow.hi <= wide.hi + 1e-8 && narrow.lo >= wide.lo - 1e-8);
    }

    #[test]
    fn cd_tail_is_alpha_at_standard_endpoints(alpha in 0.001f64..0.9, n in 1u64..5000, mle in -3.0f64..3.0) {
        let ci = standard_ci(mle, n, alpha).unwrap();
        let grid = ThetaGrid::from_points(vec![ci.lo, ci.hi]).unwrap();
        for v in cd_tail_curve(mle, n, &grid) {
            prop_assert!((v - alpha).abs() <= 1e-9 * alpha.max(1e-3));
        }
    }

    #[test]
    fn e_posterior_is_alpha_at_exact_endpoints(alpha in 0.001f64..0.5, n in 1u64..1000, mle in -3.0f64..3.0) {
        let coll = normal_ecollection(100.0, 0.05).unwrap();
        let ci = e_ci_exact(mle, n, alpha, &coll).unwrap();
        prop_assume!(!ci.fallback);
        let grid = ThetaGrid::from_points(vec![ci.lo, ci.hi]).unwrap();
        let curve = e_posterior_curve(&coll, SampleSummary::new(mle, n), &grid);
        for v in curve.capped {
            prop_assert!((v - alpha).abs() <= 1e-6 * alpha, "{} vs {}", v, alpha);
        }
    }

    #[test]
    fn credible_interval_excludes_zero(y in 0.01f64..30.0, eps in 0.001f64..0.5) {
        let adv = CdBreakingAdversary::new(eps).unwrap();
        prop_assume!(y >= eps);
        let (lo, hi) = adv.credible_interval(y);
        prop_assert!(lo > 0.0 && lo <= hi);
        if y <= 8.0 {
            let mass = 2.0 * normal::cdf(adv.g0(y) - y) * adv.b(y);
            prop_assert!((mass - 1.0).abs() <= 1e-10, "{}", mass);
        }
    }

    #[test]
    fn grid_rows_and_peak(lo in -5.0f64..5.0, width in 0.01f64..10.0, intervals in 1u32..3000) {
        let hi = lo + width;
        let step = width / intervals as f64;
        let grid = ThetaGrid::new(lo, hi, step).unwrap();
        let expected = ((hi - lo) / step).floor() as usize + 1;
        prop_assert!(grid.len() == expected || grid.len() == expected + 1);
        prop_assert!(grid.points().last().unwrap() <= &(hi + step * 1e-9));
        let mle = lo + width / 3.0;
        let snapped = grid.snapped(mle, step / 2.0 + 1e-15);
        let tail = cd_tail_curve(mle, 100, &snapped);
        let i = snapped.points().iter().position(|&t| t == mle).unwrap();
        prop_assert_eq!(tail[i], 1.0);
    }
}

#[test]
fn scaled_budget_leaves_risk_in_units_of_ell() {
    let (p, _) = instance(3);
    let rule = DecisionRule::from_fn(&p, |_, _| 1).unwrap();
    let lambda = rat(7, 3);
    let q = scaled(&p, &lambda);
    let a = gnp_core::gnp::worst_case_risk(&p, &rule, &RiskBudget::default()).unwrap();
    let b = gnp_core::gnp::worst_case_risk(&q, &rule, &RiskBudget::new(lambda).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(!a.is_negative());
}
