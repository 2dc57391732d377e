//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, LN_2};
use std::process::ExitCode;
use std::time::Instant;

use ccbound_core::analytic::{
    asymptotic_bound, bound_large_n, bound_small_n_approx, conjectured_bound, refine_alpha_newton, scan_minimum,
    solve_z1, sweep, theta_unit_cap,
};
use ccbound_core::dual::{certify_lower_bound, dual_objective, extract_certificate, solve_dual};
use ccbound_core::montecarlo::{cap_overlap_check, grid_search_bound, moment_checks, GridSpec, HaarSampler};
use ccbound_core::optimality::{check_conditions, check_conditions_reduced};
use ccbound_core::primal::solve_primal;
use ccbound_core::{CBox, DualCertificate, InputPrior, PrimalResult};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn small_n_approx() -> Outcome {
    let start = Instant::now();
    let expect = [1.14227, 1.86776, 2.45238];
    let mut ok = true;
    let mut got = Vec::new();
    for (n, e) in (2..=4).zip(expect) {
        match bound_small_n_approx(n) {
            Ok(s) => {
                ok &= (s.bound_bits - e).abs() <= 5e-5 && s.branch.as_str() == "small_N_approx";
                got.push(format!("{:.6}", s.bound_bits));
            }
            Err(e) => {
                ok = false;
                got.push(e.to_string());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(ok && secs < 1.0, format!("bits [{}] in {secs:.3} s", got.join(", ")))
}

fn newton_refined() -> Outcome {
    let expect = [1.14602, 1.87606, 2.46463];
    let mut ok = true;
    let mut got = Vec::new();
    for (n, e) in (2..=4).zip(expect) {
        match (refine_alpha_newton(n, 1e-12), bound_small_n_approx(n)) {
            (Ok(s), Ok(a)) => {
                ok &= (s.bound_bits - e).abs() <= 5e-5 && s.bound_bits >= a.bound_bits;
                got.push(format!("{:.6} (approx {:.6})", s.bound_bits, a.bound_bits));
            }
            (r, a) => {
                ok = false;
                got.push(format!("{:?} {:?}", r.err(), a.err()));
            }
        }
    }
    outcome(ok, format!("bits [{}]", got.join(", ")))
}

fn asymptotics() -> Outcome {
    let c = solve_z1();
    let mut ok = (c.z1 - 6.895).abs() <= 1e-3 && (c.limit_bits - 6.998).abs() <= 2e-3;
    let mut rel = Vec::new();
    for n in [20, 50, 100] {
        match (bound_large_n(n, 1e-7), asymptotic_bound(n)) {
            (Ok(s), Ok(a)) => {
                let r = (s.bound_nats - a).abs() / a;
                ok &= r <= 0.02;
                rel.push(format!("N={n}: {:.4}%", 100.0 * r));
            }
            (s, a) => {
                ok = false;
                rel.push(format!("N={n}: {:?} {:?}", s.err(), a.err()));
            }
        }
    }
    let start = Instant::now();
    let rows = sweep(2, 100, 1e-12);
    let secs = start.elapsed().as_secs_f64();
    let failed = match &rows {
        Ok(rows) => rows.iter().filter(|r| r.solution.is_err()).count(),
        Err(_) => usize::MAX,
    };
    ok &= secs < 60.0 && failed == 0;
    outcome(
        ok,
        format!(
            "z1 = {:.6}, limit = {:.6} bits, {}; sweep 2..100 in {secs:.2} s with {failed} failed rows",
            c.z1,
            c.limit_bits,
            rel.join(", ")
        ),
    )
}

struct Instance {
    cbox: CBox,
    prior: InputPrior,
    primal: PrimalResult,
    cert: Option<DualCertificate>,
}

fn random_instances() -> Vec<(CBox, InputPrior)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for a in 2..=3 {
        for m in 1..=3 {
            for _ in 0..4 {
                out.push((CBox::random(&mut rng, 2, a, m).unwrap(), InputPrior::uniform(a)));
            }
        }
    }
    out
}

fn strong_duality(instances: &mut Vec<Instance>) -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let (mut worst_gap, mut worst_extract, mut worst_slack) = (0.0f64, 0.0f64, 0.0f64);
    let mut notes = Vec::new();
    for (i, (cbox, prior)) in random_instances().into_iter().enumerate() {
        let primal = match solve_primal(&cbox, &prior, 1e-12, 200_000) {
            Ok(p) => p,
            Err(e) => {
                ok = false;
                notes.push(format!("#{i} primal: {e}"));
                continue;
            }
        };
        match solve_dual(&cbox, &prior, 1e-9, 20_000) {
            Ok(d) => {
                let gap = (primal.value_nats - d.value_nats).abs();
                worst_gap = worst_gap.max(gap);
                ok &= gap <= 1e-3 && d.feasible;
            }
            Err(e) => {
                ok = false;
                notes.push(format!("#{i} dual: {e}"));
            }
        }
        let cert = match extract_certificate(&primal, &cbox, 1e-4) {
            Ok(c) => {
                let r = certify_lower_bound(&c, &cbox, &prior, 1e-6).unwrap();
                let v = dual_objective(&c, &cbox, &prior).unwrap().as_f64();
                worst_extract = worst_extract.max((v - primal.value_nats).abs());
                worst_slack = worst_slack.max(r.worst_slack - 1.0);
                ok &= r.feasible && (v - primal.value_nats).abs() <= 1e-3;
                Some(c)
            }
            Err(e) => {
                ok = false;
                notes.push(format!("#{i} extraction: {e}"));
                None
            }
        };
        instances.push(Instance {
            cbox,
            prior,
            primal,
            cert,
        });
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= instances.len() >= 20 && secs < 300.0;
    outcome(
        ok,
        format!(
            "{} instances, max |primal - dual| = {worst_gap:.2e} nats, extracted: max objective error {worst_extract:.2e}, max excess slack {worst_slack:.2e}, {secs:.2} s{}",
            instances.len(),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

fn optimality(instances: &[Instance]) -> Outcome {
    let mut ok = true;
    let (mut checked, mut worst_pass, mut weakest_fail) = (0, 0.0f64, f64::INFINITY);
    let mut disagreements = 0;
    for inst in instances.iter().filter(|i| i.primal.converged) {
        let Some(cert) = &inst.cert else {
            ok = false;
            continue;
        };
        checked += 1;
        let full = check_conditions(&inst.primal.policy, cert, &inst.cbox, &inst.prior, 1e-6).unwrap();
        let reduced = check_conditions_reduced(inst.primal.policy.mix(), cert, &inst.cbox, &inst.prior, 1e-6).unwrap();
        worst_pass = worst_pass.max(full.max_residual());
        ok &= full.passed;
        if full.passed != reduced.passed {
            disagreements += 1;
        }
        // bump the finite entry carrying the largest probability
        let (ns, na, nm) = inst.cbox.dims();
        let mut pick = (0, 0, 0);
        let mut best = -1.0;
        for s in 0..ns {
            for a in 0..na {
                for b in 0..nm {
                    if cert.get(s, a, b).is_finite() && inst.cbox.get(s, a, b) > best {
                        best = inst.cbox.get(s, a, b);
                        pick = (s, a, b);
                    }
                }
            }
        }
        let mut bumped = cert.clone();
        bumped
            .set(pick.0, pick.1, pick.2, cert.get(pick.0, pick.1, pick.2) + 0.01)
            .unwrap();
        let r = check_conditions(&inst.primal.policy, &bumped, &inst.cbox, &inst.prior, 1e-6).unwrap();
        weakest_fail = weakest_fail.min(r.max_residual());
        ok &= !r.passed && r.max_residual() > 1e-3;
        let rr = check_conditions_reduced(inst.primal.policy.mix(), &bumped, &inst.cbox, &inst.prior, 1e-6).unwrap();
        if rr.passed != r.passed {
            disagreements += 1;
        }
    }
    ok &= checked > 0 && disagreements == 0;
    outcome(
        ok,
        format!(
            "{checked} converged instances, largest residual when solved {worst_pass:.2e}, smallest residual after perturbation {weakest_fail:.2e}, {disagreements} full/reduced disagreements"
        ),
    )
}

fn anchors() -> Outcome {
    let constant = CBox::constant(&[vec![0.3, 0.7], vec![0.55, 0.45], vec![0.1, 0.9]]).unwrap();
    let p1 = InputPrior::uniform(1);
    let identity = CBox::identity(2, 1).unwrap();
    let p2 = InputPrior::uniform(2);
    let cp = solve_primal(&constant, &p1, 1e-12, 1000).unwrap().value_nats;
    let cd = solve_dual(&constant, &p1, 1e-12, 10_000).unwrap().value_nats;
    let ip = solve_primal(&identity, &p2, 1e-12, 1000).unwrap().value_nats;
    let id = solve_dual(&identity, &p2, 1e-12, 10_000).unwrap().value_nats;
    let ok = cp.abs() <= 1e-9 && cd.abs() <= 1e-9 && (ip - LN_2).abs() <= 1e-9 && (id - LN_2).abs() <= 1e-9;
    outcome(
        ok,
        format!(
            "constant box primal {cp:.2e} dual {cd:.2e}; identity box primal - ln2 = {:.2e}, dual - ln2 = {:.2e}",
            ip - LN_2,
            id - LN_2
        ),
    )
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2, 3, 5, 10] {
        let m = moment_checks(n, 1_000_000, 17).unwrap();
        let mut aux = HaarSampler::with_counter(n, 17, 99).unwrap();
        let chi = aux.sample_state();
        let psi = aux.sample_state();
        let cap = cap_overlap_check(0.8, &chi, &psi, 1_000_000, 17).unwrap();
        ok &= m.passed && cap.passed;
        parts.push(format!(
            "N={n}: z = {:+.2}, {:+.2}, cap {:+.2}",
            m.second.z, m.fourth.z, cap.estimate.z
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    outcome(ok, format!("{} in {secs:.2} s", parts.join("; ")))
}

fn landscape() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 2..=4 {
        let s = refine_alpha_newton(n, 1e-12).unwrap();
        let (theta, _) = scan_minimum(n, s.alpha, s.beta, 2000).unwrap();
        let target = theta_unit_cap(n).unwrap();
        ok &= (theta - target).abs() <= 2e-3 && theta < FRAC_PI_2;
        parts.push(format!("N={n}: argmin {theta:.5} vs {target:.5}"));
    }
    outcome(ok, parts.join("; "))
}

fn oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2, 5] {
        let analytic = if n <= 4 {
            refine_alpha_newton(n, 1e-12).unwrap()
        } else {
            bound_large_n(n, 1e-7).unwrap()
        };
        match grid_search_bound(n, &GridSpec::for_dimension(n), 200_000, 5) {
            Ok(g) => {
                let d = (g.bound_bits - analytic.bound_bits).abs();
                ok &= d <= 1e-2;
                parts.push(format!(
                    "N={n}: grid {:.6} vs {:.6} bits",
                    g.bound_bits, analytic.bound_bits
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("N={n}: {e}"));
            }
        }
    }
    outcome(ok, parts.join("; "))
}

fn conjecture() -> Outcome {
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    for n in 2..=(1usize << 20) {
        let c = conjectured_bound(n).unwrap();
        let margin = c.value_bits - c.comparison_bits;
        ok &= c.conjecture_dependent && margin >= -1e-12 * c.comparison_bits;
        if n > 2 {
            worst_margin = worst_margin.min(margin);
        }
    }
    let two = conjectured_bound(2).unwrap();
    let equality = (two.value_bits - two.comparison_bits).abs();
    ok &= equality <= 1e-12;
    outcome(
        ok,
        format!("holds for N in [2, 2^20]; |difference| at N=2 is {equality:.1e}, smallest margin for N>2 is {worst_margin:.4} bits; flagged conjecture-dependent"),
    )
}

type Criterion = Box<dyn FnOnce(&mut Vec<Instance>) -> Outcome>;

fn main() -> ExitCode {
    let mut instances = Vec::new();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("small-N approximate bounds", Box::new(|_| small_n_approx())),
        ("Newton-refined bounds", Box::new(|_| newton_refined())),
        ("asymptotics", Box::new(|_| asymptotics())),
        ("strong duality", Box::new(strong_duality)),
        ("optimality conditions", Box::new(|i| optimality(i))),
        ("trivial anchors", Box::new(|_| anchors())),
        ("Monte Carlo identities", Box::new(|_| monte_carlo())),
        ("F landscape", Box::new(|_| landscape())),
        ("oracle concordance", Box::new(|_| oracle())),
        ("conjectured bound", Box::new(|_| conjecture())),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run(&mut instances);
        if !o.passed {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
