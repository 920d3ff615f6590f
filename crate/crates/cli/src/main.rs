use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gnp_core::adversary::{dyadic_problem, tiered_losses, four_action_loss, AdversarySelector, CdBreakingAdversary, ThresholdSelector};
use gnp_core::confidence::{
    cd_tail_curve, e_ci_exact, e_ci_halfwidth_for_b, e_ci_sufficient, e_posterior_curve, standard_ci, write_curve_csv,
    ConfidenceInterval, IntervalMethod, ThetaGrid,
};
use gnp_core::evariables::{NormalECollection, SampleSummary, Side};
use gnp_core::gnp::{exact_type_one_risk, exact_uniform_pvalue_risk, max_compatible_rule, rat, Risk, RiskBudget};
use gnp_core::montecarlo::{
    estimate_type_one_risk, inductive_final_mean, simulate_inductive_behavior, AuditRule, InductiveConfig, IntervalMethodKind,
    NullSampler,
};
use gnp_core::problem_file;
use gnp_core::rules::{pvalue_rule_table, PValueRule};
use gnp_core::verify::{brute_force_admissible, run_example_add, run_random_harness, FiniteProblemInstance};

/// Type-I risk safe decisions with e-values: demos, interval data and
/// admissibility checks.
#[derive(Parser, Debug)]
#[command(name = "gnp", version)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    #[command(subcommand)]
    Demo(Demo),
    /// e-posterior and CD tail curves as CSV.
    Curves(CurvesArgs),
    /// A confidence interval as JSON.
    Eci(EciArgs),
    #[command(subcommand)]
    Verify(Verify),
}

#[derive(Subcommand, Debug)]
enum Demo {
    /// Exact risks of p-value rules under post-hoc loss choice.
    NaiveRisk {
        /// Largest k in the dyadic table.
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..=60))]
        k: u32,
    },
    /// Monte Carlo risk audit of p-value and e-value rules against the
    /// threshold adversary.
    Adversary {
        #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "1")]
        ell: f64,
    },
    /// Long-run average loss of CD and e intervals under the CD-breaking
    /// loss weights.
    CdFailure {
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[command(flatten)]
        seed: SeedArg,
        /// Write `cd_trace.csv` and `e_trace.csv` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SeedArg {
    #[arg(long, env = "GNP_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 100.0)]
    nstar: f64,
    #[arg(long, default_value_t = 0.05)]
    alphastar: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    mle: f64,
}

#[derive(Args, Debug)]
struct CurvesArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Default: mle − 5/√n.
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Default: mle + 5/√n.
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    /// Default: (hi − lo)/2000.
    #[arg(long)]
    step: Option<f64>,
    /// Default: stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EciMethod {
    /// Sufficient-bound e-interval.
    E,
    /// Exact e-interval boundary by bisection.
    EExact,
    /// `mle ± z/√n`.
    Standard,
}

#[derive(Args, Debug)]
#[group(id = "target", required = false, multiple = false)]
struct EciArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, group = "target")]
    alpha: Option<f64>,
    /// Interval-loss weight; the interval is built at level 1/b.
    #[arg(long, group = "target")]
    b: Option<f64>,
    #[arg(long, value_enum, default_value = "e")]
    method: EciMethod,
    /// Round endpoints to this many decimals.
    #[arg(long)]
    digits: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Verify {
    /// The enlargement example end to end.
    ExampleAdd,
    /// Exhaustive admissibility verdict for a problem file.
    Brute {
        #[arg(long)]
        file: PathBuf,
    },
    /// Randomized checks of the admissibility theory.
    Random {
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        cases: u64,
        #[command(flatten)]
        seed: SeedArg,
    },
}

/// Exit status for a failed check, as opposed to bad input.
struct VerificationFailed;

fn decimal(r: &Risk) -> String {
    match r {
        Risk::Finite(x) => format!("{}", gnp_core::gnp::rat_to_f64(x)),
        Risk::Infinite => "inf".into(),
    }
}

fn demo_naive_risk(k_max: u32, out: &mut impl Write) -> Result<()> {
    let budget = RiskBudget::default();
    let four = exact_uniform_pvalue_risk(&[four_action_loss()], &AdversarySelector::Constant(0), &PValueRule::Naive, &budget)?;
    writeln!(out, "naive-p 4-action risk = {}", decimal(&four))?;
    let threshold = AdversarySelector::PvalThreshold(ThresholdSelector::tiered());
    let losses = tiered_losses();
    for rule in [PValueRule::Naive, PValueRule::FixedLevel(rat(1, 20)), PValueRule::MaxCompatibleNp(rat(1, 20)), PValueRule::MaxCompatibleCalibrated] {
        let risk = exact_uniform_pvalue_risk(&losses, &threshold, &rule, &budget)?;
        writeln!(out, "{} threshold-adversary risk = {}", rule.name(), decimal(&risk))?;
    }
    let worst = exact_uniform_pvalue_risk(&losses, &AdversarySelector::WorstCase, &PValueRule::Naive, &budget)?;
    writeln!(out, "naive-p worst-case risk = {}", decimal(&worst))?;
    writeln!(out, "k,naive_p,halved_p,max_compatible")?;
    for k in 1..=k_max {
        let d = dyadic_problem(k)?;
        let mut row = vec![k.to_string()];
        for rule in [PValueRule::Naive, PValueRule::Halved, PValueRule::MaxCompatibleCalibrated] {
            let table = pvalue_rule_table(&d.problem, &d.pvals, &rule, &budget)?;
            row.push(exact_type_one_risk(&d.problem, &table, &AdversarySelector::Constant(0), "P0", &budget)?.to_string());
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn demo_adversary(trials: u64, seed: u64, ell: f64, out: &mut impl Write) -> Result<()> {
    let budget = RiskBudget::from_f64(ell)?;
    let losses = tiered_losses();
    let selector = AdversarySelector::PvalThreshold(ThresholdSelector::tiered());
    for rule in [
        PValueRule::Naive,
        PValueRule::Halved,
        PValueRule::FixedLevel(rat(1, 20)),
        PValueRule::MaxCompatibleNp(rat(1, 20)),
        PValueRule::MaxCompatibleCalibrated,
    ] {
        let report = estimate_type_one_risk(NullSampler::UniformPvalue(&losses), &selector, AuditRule::PValue(&rule), &budget, trials, seed)?;
        writeln!(out, "{}", report.to_json())?;
    }
    Ok(())
}

fn demo_cd_failure(m: u64, epsilon: f64, seed: u64, out_dir: Option<PathBuf>, out: &mut impl Write) -> Result<()> {
    for (method, file) in [(IntervalMethodKind::Cd, "cd_trace.csv"), (IntervalMethodKind::E, "e_trace.csv")] {
        let cfg = InductiveConfig::new(epsilon, method)?;
        writeln!(out, "{}", inductive_final_mean(m, &cfg, seed)?.to_json())?;
        if let Some(dir) = &out_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file);
            let trace = simulate_inductive_behavior(m, &cfg, seed)?;
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            trace.write_csv(BufWriter::new(f))?;
        }
    }
    let adv = CdBreakingAdversary::new(epsilon)?;
    let ymax = 7.0;
    let integral = adv.truncated_integral(ymax, 20_000);
    let line = json!({
        "ymax": ymax,
        "integral": integral,
        "lower_bound": adv.integral_lower_bound(ymax),
        "integrand_to_asymptote": adv.integrand(ymax) / adv.asymptote(ymax),
    });
    writeln!(out, "{line}")?;
    Ok(())
}

fn collection(m: &ModelArgs) -> Result<NormalECollection> {
    Ok(NormalECollection::new(m.nstar, m.alphastar, Side::TwoSided)?)
}

fn curves(args: CurvesArgs, out: &mut impl Write) -> Result<()> {
    let m = &args.model;
    let coll = collection(m)?;
    let spread = 5.0 / (m.n as f64).sqrt();
    let lo = args.lo.unwrap_or(m.mle - spread);
    let hi = args.hi.unwrap_or(m.mle + spread);
    let step = args.step.unwrap_or((hi - lo) / 2000.0);
    let grid = ThetaGrid::new(lo, hi, step)?.snapped(m.mle, step * 1e-6);
    let curve = e_posterior_curve(&coll, SampleSummary::new(m.mle, m.n), &grid);
    let tail = cd_tail_curve(m.mle, m.n, &grid);
    match args.out {
        Some(path) => {
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_curve_csv(BufWriter::new(f), &curve, &tail)?;
        }
        None => write_curve_csv(out, &curve, &tail)?,
    }
    Ok(())
}

fn eci(args: EciArgs, out: &mut impl Write) -> Result<()> {
    let m = &args.model;
    let coll = collection(m)?;
    let mut ci: ConfidenceInterval = match (args.b, args.method) {
        (Some(b), EciMethod::E) => {
            let half = e_ci_halfwidth_for_b(m.n, b, &coll)?;
            ConfidenceInterval { lo: m.mle - half, hi: m.mle + half, level: 1.0 / b, method: IntervalMethod::ESufficient, fallback: false }
        }
        (Some(b), method) => interval(method, m, 1.0 / b, &coll)?,
        (None, method) => interval(method, m, args.alpha.unwrap_or(0.05), &coll)?,
    };
    if let Some(d) = args.digits {
        let scale = 10f64.powi(d as i32);
        ci.lo = (ci.lo * scale).round() / scale;
        ci.hi = (ci.hi * scale).round() / scale;
    }
    writeln!(out, "{}", ci.to_json())?;
    Ok(())
}

fn interval(method: EciMethod, m: &ModelArgs, alpha: f64, coll: &NormalECollection) -> Result<ConfidenceInterval> {
    Ok(match method {
        EciMethod::E => e_ci_sufficient(m.mle, m.n, alpha, coll)?,
        EciMethod::EExact => e_ci_exact(m.mle, m.n, alpha, coll)?,
        EciMethod::Standard => standard_ci(m.mle, m.n, alpha)?,
    })
}

fn verify(cmd: Verify, out: &mut impl Write) -> Result<std::result::Result<(), VerificationFailed>> {
    match cmd {
        Verify::ExampleAdd => {
            let report = run_example_add()?;
            writeln!(out, "{}", report.summary())?;
            Ok(if report.reproduces_example() { Ok(()) } else { Err(VerificationFailed) })
        }
        Verify::Brute { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let pf = problem_file::parse(&text).with_context(|| file.display().to_string())?;
            let rule = match (&pf.rule, &pf.evariable) {
                (Some(r), _) => r.clone(),
                (None, Some(s)) => max_compatible_rule(&pf.problem, s, &pf.budget)?,
                (None, None) => bail!("{}: the file needs a `rule` or an `evariable`", file.display()),
            };
            let instance = FiniteProblemInstance::new(&pf.problem, pf.evariable.clone(), &pf.budget)?;
            let verdict = brute_force_admissible(&instance, &rule)?;
            writeln!(out, "{}", verdict.to_json(instance.problem()))?;
            Ok(Ok(()))
        }
        Verify::Random { cases, seed } => {
            let report = run_random_harness(cases, seed.seed)?;
            writeln!(out, "{}", serde_json::to_string(&report)?)?;
            Ok(if report.failures() == 0 { Ok(()) } else { Err(VerificationFailed) })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let status = match cli.command {
        Command::Demo(Demo::NaiveRisk { k }) => demo_naive_risk(k, &mut out).map(|_| Ok(()))?,
        Command::Demo(Demo::Adversary { trials, seed, ell }) => demo_adversary(trials, seed.seed, ell, &mut out).map(|_| Ok(()))?,
        Command::Demo(Demo::CdFailure { m, epsilon, seed, out_dir }) => demo_cd_failure(m, epsilon, seed.seed, out_dir, &mut out).map(|_| Ok(()))?,
        Command::Curves(args) => curves(args, &mut out).map(|_| Ok(()))?,
        Command::Eci(args) => eci(args, &mut out).map(|_| Ok(()))?,
        Command::Verify(cmd) => verify(cmd, &mut out)?,
    };
    out.flush()?;
    Ok(match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(VerificationFailed) => ExitCode::from(1),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
