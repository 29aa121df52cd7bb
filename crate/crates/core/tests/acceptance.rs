//! Acceptance run: one line per criterion, non-zero exit if any fails.

use membrane_core::cases;
use membrane_core::mc_oracle::{compare, heat_gaussian, simulate, SimConfig};
use membrane_core::problem::{Atom, InitialFunction, Problem};
use membrane_core::semigroup::SemigroupOperator;
use membrane_core::suites::{a0_spot_check, bump, jump_formula_error, operator, oracle_error};
use membrane_core::{MembraneError, Result};
use std::time::Instant;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Result<Outcome> {
    Ok(Outcome { pass, summary })
}

struct Cases {
    phi: InitialFunction,
    ops: Vec<(&'static str, SemigroupOperator)>,
}

impl Cases {
    fn new() -> Self {
        let named: [(&str, fn() -> Problem); 6] = [
            ("symmetric", cases::symmetric),
            ("skew", cases::skew),
            ("moving-skew", cases::moving_skew),
            ("atomic", cases::atomic),
            ("single-atom", cases::single_atom),
            ("two-diffusions", cases::two_diffusions),
        ];
        Cases {
            phi: InitialFunction::gaussian(1.0, 0.3, 0.6),
            ops: named.iter().map(|(n, p)| (*n, operator(p()))).collect(),
        }
    }

    fn op(&self, name: &str) -> &SemigroupOperator {
        &self.ops.iter().find(|(n, _)| *n == name).expect("known case").1
    }
}

fn sup_dev(op: &SemigroupOperator, s: f64, t: f64, phi: &InitialFunction, target: impl Fn(f64) -> f64) -> Result<f64> {
    let grid = op.audit_grid();
    let u = op.apply(s, t, phi)?.eval_many(&grid)?;
    Ok(grid.iter().zip(&u).fold(0.0f64, |m, (x, v)| m.max((v - target(*x)).abs())))
}

fn heat_recovery(c: &Cases) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let start = Instant::now();
    let err = pool.install(|| {
        let op = operator(cases::symmetric());
        sup_dev(&op, 0.0, 1.0, &c.phi, |x| heat_gaussian(1.0, 0.3, 0.6, 1.0, 1.0, x))
    })?;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err <= 1e-3 && secs <= 60.0,
        format!("sup error {err:.2e} (tol 1e-3), {secs:.2} s single-threaded (limit 60 s)"),
    )
}

fn skew_recovery(c: &Cases) -> Result<Outcome> {
    let op = c.op("skew");
    let err = oracle_error(op, 0.0, 1.0, &c.phi).expect("skew oracle applies")?;
    let cfg = SimConfig::default();
    let field = op.apply(0.0, 1.0, &c.phi)?;
    let mut worst_z = 0.0f64;
    let mut mc_ok = true;
    for x in [-0.5, 0.0, 0.5] {
        let est = simulate(op.problem(), 0.0, x, 1.0, &c.phi, &cfg)?;
        let cmp = compare(field.eval(x)?, est.mean, est.stderr, 3.0);
        worst_z = worst_z.max(cmp.z);
        mc_ok &= cmp.pass;
    }
    outcome(
        err <= 1e-2 && mc_ok,
        format!(
            "sup error vs skew density {err:.2e} (tol 1e-2); MC worst |z| {worst_z:.2} at {} paths (tol 3)",
            cfg.paths
        ),
    )
}

fn conservation(c: &Cases) -> Result<Outcome> {
    let one = InitialFunction::constant_one();
    let mut worst = 0.0f64;
    for name in ["skew", "moving-skew", "atomic"] {
        for (s, t) in [(0.0, 1.0), (0.0, 0.5), (0.5, 1.0)] {
            worst = worst.max(sup_dev(c.op(name), s, t, &one, |_| 1.0)?);
        }
    }
    outcome(
        worst <= 1e-3,
        format!("max |T 1 - 1| {worst:.2e} over (0,1), (0,0.5), (0.5,1) on skew, moving-skew, atomic (tol 1e-3)"),
    )
}

fn chapman_kolmogorov(c: &Cases) -> Result<Outcome> {
    let sym = c.op("symmetric");
    let heat = sym.check_chapman_kolmogorov(0.0, 0.5, 1.0, &c.phi)?;
    let ends = sym
        .check_chapman_kolmogorov(0.0, 0.0, 1.0, &c.phi)?
        .max(sym.check_chapman_kolmogorov(0.0, 1.0, 1.0, &c.phi)?);
    let moving = c.op("moving-skew").check_chapman_kolmogorov(0.0, 0.5, 1.0, &c.phi)?;
    outcome(
        heat <= 2e-3 && ends <= 1e-6 && moving <= 5e-3,
        format!("symmetric {heat:.2e} (tol 2e-3), tau at an end {ends:.2e} (tol 1e-6), moving skew {moving:.2e} (tol 5e-3)"),
    )
}

fn positivity_contraction(c: &Cases) -> Result<Outcome> {
    let norm = c.phi.sup_norm();
    let mut lowest = f64::INFINITY;
    let mut highest = 0.0f64;
    for (_, op) in &c.ops {
        let (min, sup) = op.check_positivity_contraction(0.0, 1.0, &c.phi)?;
        lowest = lowest.min(min);
        highest = highest.max(sup);
    }
    outcome(
        lowest >= -1e-4 * norm && highest <= norm * (1.0 + 1e-3),
        format!("min {lowest:.3e} (>= -1e-4), sup {highest:.6} (<= {:.6}) over {} cases", norm * 1.001, c.ops.len()),
    )
}

fn conjugation(c: &Cases) -> Result<Outcome> {
    let norm = c.phi.sup_norm();
    let (mut b1, mut b2) = (0.0f64, 0.0f64);
    for name in ["skew", "moving-skew", "atomic", "single-atom", "two-diffusions"] {
        let r = c.op(name).check_conjugation(0.0, 1.0, &c.phi)?;
        b1 = b1.max(r.max_b1);
        b2 = b2.max(r.max_b2);
    }
    outcome(
        b1 <= 1e-3 * norm && b2 <= 5e-3 * norm,
        format!("max |B1 u| {b1:.2e} (tol 1e-3), max |B2 u| {b2:.2e} (tol 5e-3), atomic case included"),
    )
}

fn jump_formula(c: &Cases) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for name in ["skew", "moving-skew", "atomic", "two-diffusions"] {
        worst = worst.max(jump_formula_error(c.op(name), 0.0, 1.0, &c.phi, 1e-3)?);
    }
    outcome(worst <= 2e-2, format!("worst relative error {worst:.2e} (tol 2e-2)"))
}

fn moment_identities(_: &Cases) -> Result<Outcome> {
    let op = operator(cases::variable_b());
    let mut worst = 0.0f64;
    let mut halves = true;
    let mut ratios = Vec::new();
    for (i, x) in [(1, -0.2), (2, 0.2)] {
        let g = op.potentials().fundamental(i);
        let coarse = g.check_moment_identities(0.0, x, 1.0)?;
        let fine = g.check_moment_identities_with(0.0, x, 1.0, &g.settings.refined())?;
        let pairs = [
            (coarse.residual_0, fine.residual_0),
            (coarse.residual_1, fine.residual_1),
            (coarse.residual_2, fine.residual_2),
        ];
        for (a, b) in pairs {
            worst = worst.max(a);
            halves &= b <= 0.5 * a;
            ratios.push(b / a);
        }
    }
    let max_ratio = ratios.iter().cloned().fold(0.0f64, f64::max);
    outcome(
        worst <= 1e-3 && halves,
        format!("variable-b worst residual {worst:.2e} (tol 1e-3), worst refined/default ratio {max_ratio:.3} (<= 0.5)"),
    )
}

fn weak_generator(c: &Cases) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["skew", "single-atom"] {
        let op = c.op(name);
        let h = op.problem().h(0.0);
        let wg = op.weak_generator_pairing(0.0, &c.phi, bump(h, 1.0), (h - 1.0, h + 1.0), &[0.04, 0.02, 0.01])?;
        let last = *wg.errors.last().unwrap();
        let tol = 5e-2 * (wg.rhs.abs() + 1.0);
        pass &= wg.monotone() && last <= tol;
        parts.push(format!(
            "{name} errors {:.2e} {:.2e} {:.2e} (tol {tol:.2e})",
            wg.errors[0], wg.errors[1], wg.errors[2]
        ));
    }
    let a0 = a0_spot_check()?;
    pass &= a0 == 1.0;
    outcome(pass, format!("{}; a0 = {a0}", parts.join("; ")))
}

fn first_kind(c: &Cases) -> Result<Outcome> {
    let norm = c.phi.sup_norm();
    let mut worst = 0.0f64;
    let mut solves = 0;
    for (_, op) in &c.ops {
        for s in [0.0, 0.5] {
            let sol = op.solution(s, 1.0, &c.phi)?;
            let res = op.system().first_kind_residual(&sol.densities, &c.phi, 1.0)?;
            worst = res.iter().fold(worst, |m, v| m.max(v.abs()));
            solves += 1;
        }
    }
    outcome(
        worst <= 1e-3 * norm,
        format!("max residual {worst:.2e} over {solves} converged solves (tol 1e-3)"),
    )
}

fn series_contraction(c: &Cases) -> Result<Outcome> {
    let mut worst_onset = 0;
    let mut worst_iters = 0;
    let mut all_geometric = true;
    for (_, op) in &c.ops {
        for s in [0.0, 0.5] {
            let sol = op.solution(s, 1.0, &c.phi)?;
            match sol.geometric_onset(10) {
                Some((k0, _)) => worst_onset = worst_onset.max(k0),
                None => all_geometric = false,
            }
            worst_iters = worst_iters.max(sol.iterations);
        }
    }
    let mut heavy = cases::single_atom();
    heavy.wentzell.atoms.atoms = vec![Atom::relative(1.0, 20.0)];
    let heavy_raises = matches!(
        operator(heavy).solution(0.0, 1.0, &c.phi),
        Err(MembraneError::SeriesDivergence { .. })
    );
    let mut capped = membrane_core::boundary_system::SolverSettings::default();
    capped.k_max = 2;
    let short = SemigroupOperator::new(
        std::sync::Arc::new(cases::atomic()),
        Default::default(),
        Default::default(),
        capped,
    );
    let cap_raises = matches!(
        short.solution(0.0, 1.0, &c.phi),
        Err(MembraneError::SeriesDivergence { .. })
    );
    outcome(
        all_geometric && worst_onset <= 10 && heavy_raises && cap_raises,
        format!(
            "onset k0 <= {worst_onset} (limit 10), at most {worst_iters} iterations; \
             heavy atom raises: {heavy_raises}, k_max = 2 raises: {cap_raises}"
        ),
    )
}

type Criterion = fn(&Cases) -> Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("heat-kernel recovery", heat_recovery),
        ("skew Brownian recovery", skew_recovery),
        ("conservation", conservation),
        ("Chapman-Kolmogorov", chapman_kolmogorov),
        ("positivity and contraction", positivity_contraction),
        ("conjugation residuals", conjugation),
        ("jump formula", jump_formula),
        ("parametrix moment identities", moment_identities),
        ("weak generator", weak_generator),
        ("first-kind residual", first_kind),
        ("series contraction", series_contraction),
    ];
    let cases = Cases::new();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, summary) = match run(&cases) {
            Ok(o) => (o.pass, o.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {summary} ({:.1} s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
