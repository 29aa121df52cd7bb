//! Named check suites shared by the command line and the acceptance tests.

use crate::error::Result;
use crate::mc_oracle::{skew_action, SkewParams};
use crate::problem::{InitialFunction, Problem, TimeFunction};
use crate::report::CheckResult;
use crate::semigroup::SemigroupOperator;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Semigroup,
    Conjugation,
    Generator,
    Parametrix,
}

impl Suite {
    pub fn parse(name: &str) -> Option<Suite> {
        Some(match name {
            "semigroup" => Suite::Semigroup,
            "conjugation" => Suite::Conjugation,
            "generator" => Suite::Generator,
            "parametrix" => Suite::Parametrix,
            _ => return None,
        })
    }
}

pub struct SuiteInput<'a> {
    pub case: &'a str,
    pub s: f64,
    pub t: f64,
    pub phi: &'a InitialFunction,
}

pub fn run(op: &SemigroupOperator, suite: Suite, input: &SuiteInput) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Semigroup => semigroup_suite(op, input),
        Suite::Conjugation => conjugation_suite(op, input),
        Suite::Generator => generator_suite(op, input),
        Suite::Parametrix => parametrix_suite(op, input),
    }
}

fn norm(phi: &InitialFunction) -> f64 {
    phi.sup_norm().max(f64::MIN_POSITIVE)
}

/// Sup error against the skew Brownian oracle when the problem is one
/// (equal constant diffusions, no drift, fixed membrane, no atoms).
pub fn oracle_error(op: &SemigroupOperator, s: f64, t: f64, phi: &InitialFunction) -> Option<Result<f64>> {
    let p = op.problem();
    let h = p.membrane.as_constant()?;
    if !(p.side_is_trivial(1) && p.side_is_trivial(2)) || p.has_measure() || !(s < t) {
        return None;
    }
    let (b1, b2) = (p.b(1, s, h), p.b(2, s, h));
    if b1 != b2 || p.wentzell.q1.as_constant().is_none() || p.wentzell.q2.as_constant().is_none() {
        return None;
    }
    let params = SkewParams::from_problem(p, s);
    let grid = op.audit_grid();
    Some((|| {
        let u = op.apply(s, t, phi)?.eval_many(&grid)?;
        let shifted = ShiftedPhi { phi, h };
        Ok(grid
            .iter()
            .zip(&u)
            .map(|(x, v)| (v - shifted.action(params, t - s, *x)).abs())
            .fold(0.0, f64::max))
    })())
}

struct ShiftedPhi<'a> {
    phi: &'a InitialFunction,
    h: f64,
}

impl ShiftedPhi<'_> {
    fn action(&self, params: SkewParams, dt: f64, x: f64) -> f64 {
        if self.h == 0.0 {
            return skew_action(params, dt, x, self.phi);
        }
        let tab = tabulate_shifted(self.phi, self.h, x, params.sigma * dt.sqrt());
        skew_action(params, dt, x - self.h, &tab)
    }
}

fn tabulate_shifted(phi: &InitialFunction, h: f64, x: f64, scale: f64) -> InitialFunction {
    let reach = (x - h).abs() + 14.0 * scale;
    let n = 4001;
    let vals: Vec<f64> = (0..n)
        .map(|k| phi.eval(h - reach + 2.0 * reach * k as f64 / (n - 1) as f64))
        .collect();
    InitialFunction::tabulated(-reach, reach, &vals).expect("valid table")
}

pub fn semigroup_suite(op: &SemigroupOperator, inp: &SuiteInput) -> Result<Vec<CheckResult>> {
    let (s, t, phi) = (inp.s, inp.t, inp.phi);
    let mut out = Vec::new();
    let grid = op.audit_grid();
    let id = op.apply(s, s, phi)?.eval_many(&grid)?;
    let id_err = grid
        .iter()
        .zip(&id)
        .fold(0.0f64, |m, (x, v)| m.max((v - phi.eval(*x)).abs()));
    out.push(CheckResult::at_most("identity", inp.case, id_err, 0.0));
    let one = InitialFunction::constant_one();
    let mid = 0.5 * (s + t);
    for (a, b) in [(s, t), (s, mid), (mid, t)] {
        let u = op.apply(a, b, &one)?.eval_many(&grid)?;
        let dev = u.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        out.push(CheckResult::at_most("conservation", inp.case, dev, 1e-3).with_detail(format!("s={a} t={b}")));
    }
    let (min, sup) = op.check_positivity_contraction(s, t, phi)?;
    let nonneg = grid.iter().all(|&x| phi.eval(x) >= 0.0);
    if nonneg {
        out.push(CheckResult::at_most("positivity", inp.case, -min, 1e-4 * norm(phi)));
    }
    out.push(CheckResult::at_most("contraction", inp.case, sup, norm(phi) * (1.0 + 1e-3)));
    let ck = op.check_chapman_kolmogorov(s, mid, t, phi)?;
    out.push(CheckResult::at_most("chapman-kolmogorov", inp.case, ck, 5e-3).with_detail(format!("tau={mid}")));
    let cont = op.check_continuity(s, t, phi, &[2, 4, 6])?;
    let decreasing = cont.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last = *cont.last().unwrap_or(&0.0);
    let mut c = CheckResult::at_most("continuity", inp.case, last, 1e-3 * norm(phi))
        .with_detail(format!("sequence {cont:?}"));
    c.pass &= decreasing;
    out.push(c);
    if let Some(err) = oracle_error(op, s, t, phi) {
        let p = op.problem();
        let tol = if p.wentzell.q1 == p.wentzell.q2 { 1e-3 } else { 1e-2 };
        out.push(CheckResult::at_most("closed-form", inp.case, err?, tol));
    }
    Ok(out)
}

/// Worst relative error of the one-sided layer derivatives at h(s) against
/// second-order one-sided differences, over a few mesh nodes.
pub fn jump_formula_error(op: &SemigroupOperator, s: f64, t: f64, phi: &InitialFunction, e: f64) -> Result<f64> {
    let sol = op.solution(s, t, phi)?;
    let pot = op.potentials();
    let p = op.problem();
    let dens = &sol.densities;
    let n = dens.n();
    let mut worst = 0.0f64;
    for k in [n / 4, n / 2, 3 * n / 4] {
        let sk = dens.nodes[k.max(1)];
        let h = p.h(sk);
        for i in [1, 2] {
            let (left, right) = pot.conormal_jump(i, sk, t, dens)?;
            let l = |x: f64| pot.layer(i, sk, x, t, dens);
            let fd_left = (3.0 * l(h)? - 4.0 * l(h - e)? + l(h - 2.0 * e)?) / (2.0 * e);
            let fd_right = (-3.0 * l(h)? + 4.0 * l(h + e)? - l(h + 2.0 * e)?) / (2.0 * e);
            for (an, fd) in [(left, fd_left), (right, fd_right)] {
                let scale = an.abs().max(1e-6);
                worst = worst.max((an - fd).abs() / scale);
            }
        }
    }
    Ok(worst)
}

pub fn conjugation_suite(op: &SemigroupOperator, inp: &SuiteInput) -> Result<Vec<CheckResult>> {
    let (s, t, phi) = (inp.s, inp.t, inp.phi);
    let nrm = norm(phi);
    let c = op.check_conjugation(s, t, phi)?;
    let mut out = vec![
        CheckResult::at_most("conjugation-b1", inp.case, c.max_b1, 1e-3 * nrm),
        CheckResult::at_most("conjugation-b2", inp.case, c.max_b2, 5e-3 * nrm),
    ];
    let sol = op.solution(s, t, phi)?;
    let res = op.system().first_kind_residual(&sol.densities, phi, t)?;
    let worst = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(CheckResult::at_most("first-kind-residual", inp.case, worst, 1e-3 * nrm));
    let onset = sol.geometric_onset(10);
    let mut series = CheckResult::at_most(
        "series-contraction",
        inp.case,
        onset.map_or(f64::INFINITY, |o| o.1),
        1.0,
    )
    .with_detail(format!(
        "iterations {} onset {:?} m_delta {} m_delta_all {}",
        sol.iterations,
        onset.map(|o| o.0),
        sol.m_delta,
        sol.m_delta_all
    ));
    series.pass = onset.is_some();
    out.push(series);
    if sol.densities.max_abs() > 0.0 {
        let jump = jump_formula_error(op, s, t, phi, 1e-3)?;
        out.push(CheckResult::at_most("jump-formula", inp.case, jump, 2e-2));
    }
    Ok(out)
}

/// Compactly supported test function (1 - ((x - c)/r)^2)^3 on |x - c| < r.
pub fn bump(c: f64, r: f64) -> impl Fn(f64) -> f64 + Sync + Copy {
    move |x: f64| {
        let u = (x - c) / r;
        if u.abs() < 1.0 {
            (1.0 - u * u).powi(3)
        } else {
            0.0
        }
    }
}

/// a0 for b = 1 on both sides, q1 = 0, q2 = 1.
pub fn a0_spot_check() -> Result<f64> {
    let mut p = crate::cases::symmetric();
    p.wentzell.q1 = TimeFunction::constant(0.0);
    p.wentzell.q2 = TimeFunction::constant(1.0);
    let op = SemigroupOperator::with_defaults(p);
    Ok(op.effective_coefficients(0.0, 0.0)?.a0)
}

pub fn generator_suite(op: &SemigroupOperator, inp: &SuiteInput) -> Result<Vec<CheckResult>> {
    let (s, phi) = (inp.s, inp.phi);
    let p: &Problem = op.problem();
    let h = p.h(s);
    let mut out = Vec::new();
    let a0 = a0_spot_check()?;
    out.push(CheckResult::at_most("a0-spot-check", "q1=0,q2=1,b=1", (a0 - 1.0).abs(), 0.0));
    if !p.has_measure() {
        let e = op.effective_coefficients(s, h)?;
        out.push(CheckResult::at_most("weights-sum", inp.case, (e.l1 + e.l2 - 1.0).abs(), 1e-15));
    }
    let wg = op.weak_generator_pairing(s, phi, bump(h, 1.0), (h - 1.0, h + 1.0), &[0.04, 0.02, 0.01])?;
    let mut c = CheckResult::at_most(
        "weak-generator",
        inp.case,
        wg.errors[2],
        5e-2 * (wg.rhs.abs() + 1.0),
    )
    .with_detail(format!("errors {:?} rhs {}", wg.errors, wg.rhs));
    c.pass &= wg.monotone();
    out.push(c);
    let pts = [h - 0.5, h + 0.5];
    let dom = op.generator_domain_check(s, phi, 0.01, &pts)?;
    let detail = format!("residuals {} {}", dom.residual_1, dom.residual_2);
    out.push(match dom.limit_error {
        Some(coarse) => {
            let fine = op.generator_domain_check(s, phi, 0.005, &pts)?.limit_error.unwrap_or(f64::NAN);
            // either within the absolute bound or converging at first order
            let mut c = CheckResult::at_most("generator-domain", inp.case, fine, 5e-3)
                .with_detail(format!("{detail}; errors at dt=0.01, 0.005: {coarse} {fine}"));
            c.pass |= fine <= 0.6 * coarse;
            c
        }
        None => CheckResult::at_most("generator-domain", inp.case, 0.0, 5e-3)
            .with_detail(format!("{detail}; limit skipped")),
    });
    if !p.has_measure() {
        let x = h + 0.5;
        let b = p.b(2, s, x);
        let [_, m2, m4] = op.transition_moments(s, x, s + 0.01)?;
        out.push(
            CheckResult::at_most("second-moment", inp.case, (m2 / 0.01 - b).abs() / b, 0.1)
                .with_detail(format!("x={x} dt=0.01")),
        );
        let [_, _, m4_fine] = op.transition_moments(s, x, s + 0.0025)?;
        let ratio = (m4_fine / 0.0025) / (m4 / 0.01);
        out.push(
            CheckResult::at_most("fourth-moment-decay", inp.case, ratio, 0.5)
                .with_detail(format!("m4/dt at dt=0.01, 0.0025: {} {}", m4 / 0.01, m4_fine / 0.0025)),
        );
    }
    Ok(out)
}

pub fn parametrix_suite(op: &SemigroupOperator, inp: &SuiteInput) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let h = op.problem().h(inp.s);
    for (i, x) in [(1, h - 0.2), (2, h + 0.2)] {
        let g = op.potentials().fundamental(i);
        let m = g.check_moment_identities(inp.s, x, inp.t)?;
        let case = format!("{} side {i}", inp.case);
        out.push(CheckResult::at_most("moment-0", &case, m.residual_0, 1e-3));
        out.push(CheckResult::at_most("moment-1", &case, m.residual_1, 1e-3));
        out.push(CheckResult::at_most("moment-2", &case, m.residual_2, 1e-3));
    }
    Ok(out)
}

/// Operator on a shared problem with default settings.
pub fn operator(problem: Problem) -> SemigroupOperator {
    SemigroupOperator::new(
        Arc::new(problem),
        Default::default(),
        Default::default(),
        Default::default(),
    )
}
