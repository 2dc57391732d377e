//! `ccbound`: command-line front end for the solvers, certificates and
//! closed-form bounds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use ccbound_core::analytic::{
    bound_auto, bound_large_n, bound_small_n_approx, conjectured_bound, refine_alpha_newton, sandwich_upper, solve_z1,
    sweep, write_sweep_csv, SWEEP_HEADER,
};
use ccbound_core::dual::DualOptions;
use ccbound_core::montecarlo::{cap_overlap_check, grid_search_bound, moment_checks};
use ccbound_core::primal::PrimalOptions;
use ccbound_core::{
    born_cbox, certify_lower_bound, check_conditions, extract_certificate, validate_cbox, CBox, DualCertificate, Error,
    GridSpec, HaarSampler, InputPrior, QuantumEnsemble, SimulationPolicy,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Parser, Serialize)]
#[command(
    name = "ccbound",
    version,
    about = "Bounds on the classical cost of simulating quantum communication"
)]
struct Cli {
    /// Units of the human-readable summary; records always carry both.
    #[arg(long, global = true, value_enum, default_value_t = Units::Bits)]
    units: Units,
    /// Worker threads for parallel sweeps and sampling.
    #[arg(long, global = true, env = "RAYON_NUM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Units {
    Bits,
    Nats,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
enum Verb {
    /// Minimize the mutual information over simulation policies.
    SolvePrimal(PrimalArgs),
    /// Maximize the dual objective over certificates.
    SolveDual(DualArgs),
    /// Check a certificate against every constraint and report the bound.
    Certify(CertifyArgs),
    /// Evaluate the optimality conditions for a policy and certificate.
    Check(CheckArgs),
    /// Closed-form bound for two-outcome rank-one measurements in dimension N.
    Analytic(AnalyticArgs),
    /// Tabulate the closed-form bound over a range of N as CSV.
    Sweep(SweepArgs),
    /// Monte Carlo cross-checks of the identities behind the closed form.
    Verify(VerifyArgs),
    /// Upper end of the one-shot sandwich for a given asymptotic cost.
    Sandwich(SandwichArgs),
    /// Conjecture-dependent bound (not proven).
    Conjecture(ConjectureArgs),
}

#[derive(Args, Serialize)]
struct BoxInput {
    /// Box or quantum ensemble (JSON).
    #[arg(long)]
    input: PathBuf,
    /// `uniform` or a JSON file holding the prior.
    #[arg(long, default_value = "uniform")]
    prior: String,
}

#[derive(Args, Serialize)]
struct Record {
    /// Write the machine-readable record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PrimalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: BoxInput,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Write the optimal policy here.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Extract a certificate from the solution and write it here.
    #[arg(long)]
    certificate_out: Option<PathBuf>,
    /// Consistency tolerance for certificate extraction.
    #[arg(long, default_value_t = 1e-4)]
    extract_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
struct DualArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: BoxInput,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long)]
    certificate_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
struct CertifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: BoxInput,
    #[arg(long)]
    certificate: PathBuf,
    /// Allowed slack excess.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
struct CheckArgs {
    /// Box or quantum ensemble (JSON); the prior comes from the policy.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    certificate: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
struct AnalyticArgs {
    #[arg(long)]
    dimension: usize,
    /// Newton-refined small-N solution (large-N branch from 5 on).
    #[arg(long, conflicts_with = "approx")]
    exact: bool,
    /// Closed-form small-N approximation, N ≤ 4 only.
    #[arg(long)]
    approx: bool,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Check {
    Moments,
    Cap,
    Grid,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    dimension: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Check::Moments, Check::Cap])]
    checks: Vec<Check>,
    /// Cap half-angle for the cap check.
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

#[derive(Args, Serialize)]
#[group(required = true, multiple = false)]
struct SandwichArgs {
    /// Asymptotic cost in bits.
    #[arg(long, allow_hyphen_values = true)]
    bits: Option<f64>,
    /// Use the closed-form lower bound in dimension N.
    #[arg(long)]
    dimension: Option<usize>,
}

#[derive(Args, Serialize)]
struct ConjectureArgs {
    #[arg(long)]
    dimension: usize,
    #[command(flatten)]
    #[serde(flatten)]
    record: Record,
}

/// Everything a verb hands back to `main`.
struct Report {
    summary: Vec<String>,
    result: Value,
    passed: bool,
}

struct Run {
    config: Value,
    hasher: Sha256,
}

impl Run {
    fn read(&mut self, path: &Path) -> anyhow::Result<Value> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.hasher.update(&bytes);
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    fn load_box(&mut self, path: &Path) -> anyhow::Result<CBox> {
        let value = self.read(path)?;
        let cbox = if value.get("states").is_some() {
            born_cbox(&QuantumEnsemble::from_json(&value)?)?
        } else {
            CBox::from_json(&value)?
        };
        validate_cbox(&cbox, 1e-9)?;
        Ok(cbox)
    }

    fn load_prior(&mut self, spec: &str, cbox: &CBox) -> anyhow::Result<InputPrior> {
        if spec == "uniform" {
            return Ok(InputPrior::uniform(cbox.num_states()));
        }
        Ok(InputPrior::from_json(&self.read(Path::new(spec))?)?)
    }

    /// Hash of the input file contents and of every setting that can change
    /// a result; destinations and thread count are left out.
    fn digest(&self) -> String {
        let mut settings = self.config.clone();
        if let Some(obj) = settings.as_object_mut() {
            obj.remove("threads");
        }
        if let Some(verb) = settings.get_mut("verb").and_then(Value::as_object_mut) {
            verb.retain(|k, _| !matches!(k.as_str(), "out" | "policy_out" | "certificate_out"));
        }
        let mut h = self.hasher.clone();
        h.update(settings.to_string().as_bytes());
        hex::encode(h.finalize())
    }
}

fn fmt_value(units: Units, nats: f64) -> String {
    match units {
        Units::Bits => format!("{:.6} bits ({:.6} nats)", nats / LN_2, nats),
        Units::Nats => format!("{:.6} nats ({:.6} bits)", nats, nats / LN_2),
    }
}

fn sequence_of(cbox: &CBox, mut k: usize) -> Vec<usize> {
    let s = cbox.num_outcomes();
    (0..cbox.num_measurements())
        .map(|_| {
            let d = k % s;
            k /= s;
            d
        })
        .collect()
}

fn solve_primal_verb(run: &mut Run, args: &PrimalArgs, units: Units) -> anyhow::Result<Report> {
    let cbox = run.load_box(&args.input.input)?;
    let prior = run.load_prior(&args.input.prior, &cbox)?;
    let opts = PrimalOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..PrimalOptions::default()
    };
    let res = ccbound_core::primal::solve_primal_with(&cbox, &prior, &opts)?;
    let mut summary = vec![
        format!("primal value: {}", fmt_value(units, res.value_nats)),
        format!(
            "iterations {}, converged {}, constraint violation {:.2e}, certified gap {:.2e} nats",
            res.iterations, res.converged, res.max_constraint_violation, res.certified_gap
        ),
    ];
    if let Some(path) = &args.policy_out {
        res.policy.save(path)?;
        summary.push(format!("policy written to {}", path.display()));
    }
    let mut extracted = Value::Null;
    if let Some(path) = &args.certificate_out {
        let cert = extract_certificate(&res, &cbox, args.extract_tol)?;
        cert.save(path)?;
        extracted = json!(path);
        summary.push(format!("certificate written to {}", path.display()));
    }
    Ok(Report {
        summary,
        result: json!({
            "value_nats": res.value_nats,
            "value_bits": res.value_bits(),
            "lower_bound_nats": res.lower_bound_nats,
            "certified_gap_nats": res.certified_gap,
            "iterations": res.iterations,
            "converged": res.converged,
            "max_constraint_violation": res.max_constraint_violation,
            "certificate": extracted,
        }),
        passed: res.converged,
    })
}

fn solve_dual_verb(run: &mut Run, args: &DualArgs, units: Units) -> anyhow::Result<Report> {
    let cbox = run.load_box(&args.input.input)?;
    let prior = run.load_prior(&args.input.prior, &cbox)?;
    let opts = DualOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..DualOptions::default()
    };
    let res = ccbound_core::dual::solve_dual_with(&cbox, &prior, &opts)?;
    let mut summary = vec![
        format!("dual value: {}", fmt_value(units, res.value_nats)),
        format!(
            "certified lower bound: {}; iterations {}, converged {}, worst slack {:.12}",
            fmt_value(units, res.certified_bound_nats),
            res.iterations,
            res.converged,
            res.worst_slack
        ),
    ];
    if let Some(path) = &args.certificate_out {
        res.certificate.save(path)?;
        summary.push(format!("certificate written to {}", path.display()));
    }
    Ok(Report {
        summary,
        result: json!({
            "value_nats": res.value_nats,
            "value_bits": res.value_nats / LN_2,
            "bound_nats": res.certified_bound_nats,
            "bound_bits": res.certified_bound_bits(),
            "feasible": res.feasible,
            "worst_slack": res.worst_slack,
            "worst_sequence": sequence_of(&cbox, res.worst_sequence),
            "iterations": res.iterations,
            "converged": res.converged,
        }),
        passed: res.converged && res.feasible,
    })
}

fn certify_verb(run: &mut Run, args: &CertifyArgs, units: Units) -> anyhow::Result<Report> {
    let cbox = run.load_box(&args.input.input)?;
    let prior = run.load_prior(&args.input.prior, &cbox)?;
    let cert = DualCertificate::from_json(&run.read(&args.certificate)?)?;
    let res = certify_lower_bound(&cert, &cbox, &prior, args.tol)?;
    let verdict = if res.feasible { "feasible" } else { "infeasible" };
    Ok(Report {
        summary: vec![
            format!(
                "certificate is {verdict}: worst slack {:.12} at sequence {:?}",
                res.worst_slack,
                sequence_of(&cbox, res.worst_sequence)
            ),
            format!("objective {}", fmt_value(units, res.value_nats)),
            format!("certified lower bound {}", fmt_value(units, res.certified_bound_nats)),
        ],
        result: json!({
            "feasible": res.feasible,
            "bound_nats": res.certified_bound_nats,
            "bound_bits": res.certified_bound_bits(),
            "objective_nats": res.value_nats,
            "worst_sequence": sequence_of(&cbox, res.worst_sequence),
            "worst_slack": res.worst_slack,
        }),
        passed: res.feasible,
    })
}

fn check_verb(run: &mut Run, args: &CheckArgs) -> anyhow::Result<Report> {
    let cbox = run.load_box(&args.input)?;
    let policy = SimulationPolicy::from_json(&run.read(&args.policy)?)?;
    let cert = DualCertificate::from_json(&run.read(&args.certificate)?)?;
    let prior = policy.prior().clone();
    let report = check_conditions(&policy, &cert, &cbox, &prior, args.tol)?;
    Ok(Report {
        summary: vec![
            format!("optimality conditions {}", if report.passed { "hold" } else { "fail" }),
            format!(
                "residuals: map {:.2e}, slack {:.2e}, marginal {:.2e}, nonneg {:.2e}, fixed point {:.2e}",
                report.residual_map_eq,
                report.residual_slack,
                report.residual_marginal,
                report.residual_nonneg,
                report.residual_fixedpoint
            ),
            format!("gap estimate {:.2e} nats", report.gap_estimate(&cert)),
        ],
        result: json!({ "report": report, "gap_estimate_nats": report.gap_estimate(&cert) }),
        passed: report.passed,
    })
}

fn analytic_verb(args: &AnalyticArgs, units: Units) -> anyhow::Result<Report> {
    let n = args.dimension;
    let s = if args.approx {
        bound_small_n_approx(n)?
    } else if args.exact && n <= 4 {
        refine_alpha_newton(n, args.tol)?
    } else if args.exact {
        bound_large_n(n, 1e-7)?
    } else {
        bound_auto(n, args.tol)?
    };
    let value = match units {
        Units::Bits => format!("{:.5} bits", s.bound_bits),
        Units::Nats => format!("{:.5} nats", s.bound_nats),
    };
    Ok(Report {
        summary: vec![
            value,
            format!(
                "N = {n}, branch {}, alpha = {:.10}, beta = {:.10}, theta_m = {:.10}",
                s.branch.as_str(),
                s.alpha,
                s.beta,
                s.theta_m
            ),
        ],
        result: serde_json::to_value(s)?,
        passed: true,
    })
}

fn sweep_verb(run: &Run, args: &SweepArgs) -> anyhow::Result<Report> {
    let rows = sweep(args.from, args.to, args.tol)?;
    let c = solve_z1();
    let comments = vec![
        format!("config: {}", run.config),
        format!("inputs_sha256: {}", run.digest()),
        format!("asymptotic limit: {:.17e} bits (z1 = {:.17e})", c.limit_bits, c.z1),
        "conjectured_bits rests on unproven hypotheses and is not a bound".to_string(),
    ];
    let failed: Vec<usize> = rows.iter().filter(|r| r.solution.is_err()).map(|r| r.n).collect();
    match &args.out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            write_sweep_csv(&mut f, &rows, &comments)?;
            f.flush()?;
        }
        None => write_sweep_csv(&mut std::io::stdout().lock(), &rows, &comments)?,
    }
    let mut summary = vec![format!("{} rows, columns {}", rows.len(), SWEEP_HEADER)];
    if !failed.is_empty() {
        summary.push(format!("failed rows: {failed:?}"));
    }
    Ok(Report {
        summary,
        result: Value::Null,
        passed: failed.is_empty(),
    })
}

fn verify_verb(args: &VerifyArgs) -> anyhow::Result<Report> {
    let n = args.dimension;
    let mut summary = Vec::new();
    let mut result = serde_json::Map::new();
    let mut passed = true;
    if args.checks.contains(&Check::Moments) {
        let m = moment_checks(n, args.samples, args.seed)?;
        summary.push(format!(
            "moments: second z = {:+.2}, fourth z = {:+.2} -> {}",
            m.second.z,
            m.fourth.z,
            if m.passed { "pass" } else { "FAIL" }
        ));
        passed &= m.passed;
        result.insert("moments".into(), serde_json::to_value(m)?);
    }
    if args.checks.contains(&Check::Cap) {
        let mut aux = HaarSampler::with_counter(n, args.seed, 5 << 48)?;
        let chi = aux.sample_state();
        let psi = aux.sample_state();
        let c = cap_overlap_check(args.theta, &chi, &psi, args.samples, args.seed)?;
        summary.push(format!(
            "cap overlap: mean {:.6} vs {:.6}, z = {:+.2} -> {}",
            c.estimate.mean,
            c.estimate.target,
            c.estimate.z,
            if c.passed { "pass" } else { "FAIL" }
        ));
        passed &= c.passed;
        result.insert("cap".into(), serde_json::to_value(c)?);
    }
    if args.checks.contains(&Check::Grid) {
        let g = grid_search_bound(n, &GridSpec::for_dimension(n), args.samples.min(200_000), args.seed)?;
        let analytic = bound_auto(n, 1e-12)?;
        let ok = g.bound_bits <= analytic.bound_bits + 1e-2 && (g.bound_bits - analytic.bound_bits).abs() <= 1e-2;
        let caps_ok = g.cap_checks.iter().all(|c| c.passed);
        summary.push(format!(
            "grid search: {:.6} bits vs closed form {:.6} bits, {} cap checks -> {}",
            g.bound_bits,
            analytic.bound_bits,
            g.cap_checks.len(),
            if ok && caps_ok { "pass" } else { "FAIL" }
        ));
        passed &= ok && caps_ok;
        result.insert("grid".into(), serde_json::to_value(g)?);
        result.insert("closed_form_bits".into(), json!(analytic.bound_bits));
    }
    Ok(Report {
        summary,
        result: Value::Object(result),
        passed,
    })
}

fn sandwich_verb(args: &SandwichArgs) -> anyhow::Result<Report> {
    let lower = match (args.bits, args.dimension) {
        (Some(b), _) => b,
        (None, Some(n)) => bound_auto(n, 1e-12)?.bound_bits,
        (None, None) => return Err(anyhow!("pass --bits or --dimension")),
    };
    let upper = sandwich_upper(lower)?;
    Ok(Report {
        summary: vec![format!(
            "asymptotic cost {lower:.6} bits -> one-shot cost at most {upper:.6} bits"
        )],
        result: json!({ "asymptotic_bits": lower, "upper_bits": upper, "upper_nats": upper * LN_2 }),
        passed: true,
    })
}

fn conjecture_verb(args: &ConjectureArgs) -> anyhow::Result<Report> {
    let c = conjectured_bound(args.dimension)?;
    let mut summary = vec![
        format!(
            "conjectured: {:.6} bits ({:.6} nats), NOT a proven bound",
            c.value_bits, c.value_nats
        ),
        format!("N log2(N) / 2 = {:.6} bits", c.comparison_bits),
    ];
    if let Some((k, v)) = c.power_of_two {
        summary.push(format!("N = 2^{k}: k 2^(k-1) = {v}"));
    }
    summary.push(format!("hypotheses: {}", c.hypotheses));
    Ok(Report {
        summary,
        result: serde_json::to_value(&c)?,
        passed: true,
    })
}

fn record_path(verb: &Verb) -> Option<&Path> {
    match verb {
        Verb::SolvePrimal(a) => a.record.out.as_deref(),
        Verb::SolveDual(a) => a.record.out.as_deref(),
        Verb::Certify(a) => a.record.out.as_deref(),
        Verb::Check(a) => a.record.out.as_deref(),
        Verb::Analytic(a) => a.record.out.as_deref(),
        Verb::Verify(a) => a.record.out.as_deref(),
        Verb::Conjecture(a) => a.record.out.as_deref(),
        Verb::Sweep(_) | Verb::Sandwich(_) => None,
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let mut run = Run {
        config: serde_json::to_value(cli)?,
        hasher: Sha256::new(),
    };
    let report = match &cli.verb {
        Verb::SolvePrimal(a) => solve_primal_verb(&mut run, a, cli.units)?,
        Verb::SolveDual(a) => solve_dual_verb(&mut run, a, cli.units)?,
        Verb::Certify(a) => certify_verb(&mut run, a, cli.units)?,
        Verb::Check(a) => check_verb(&mut run, a)?,
        Verb::Analytic(a) => analytic_verb(a, cli.units)?,
        Verb::Sweep(a) => sweep_verb(&run, a)?,
        Verb::Verify(a) => verify_verb(a)?,
        Verb::Sandwich(a) => sandwich_verb(a)?,
        Verb::Conjecture(a) => conjecture_verb(a)?,
    };
    let to_stdout = !matches!(&cli.verb, Verb::Sweep(a) if a.out.is_none());
    for line in &report.summary {
        if to_stdout {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    if let Some(path) = record_path(&cli.verb) {
        let record = json!({
            "tool": "ccbound",
            "version": env!("CARGO_PKG_VERSION"),
            "config": run.config,
            "inputs_sha256": run.digest(),
            "passed": report.passed,
            "result": report.result,
        });
        let text = serde_json::to_string_pretty(&record)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report.passed)
}

/// Failures of a computation that ran (as opposed to bad input).
fn computed_failure(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<Error>(),
        Some(Error::NoConvergence(_) | Error::ExtractionFailed { .. } | Error::GlobalMinimum { .. } | Error::Branch(_))
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if computed_failure(&e) { 1 } else { 2 })
        }
    }
}
