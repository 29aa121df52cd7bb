//! Independent oracles: the skew Brownian transition density and a particle
//! simulation of the pasted diffusion.

use crate::error::{MembraneError, Result};
use crate::problem::{InitialFunction, Problem};
use crate::quadrature::{legendre, Neumaier};
use crate::report::CheckResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewParams {
    pub alpha: f64,
    pub sigma: f64,
}

impl SkewParams {
    /// alpha = q2 / (q1 + q2) for equal diffusions b1 = b2 = sigma^2.
    pub fn from_problem(problem: &Problem, s: f64) -> Self {
        let (q1, q2) = (problem.q(1, s), problem.q(2, s));
        SkewParams {
            alpha: q2 / (q1 + q2),
            sigma: problem.b(1, s, problem.h(s)).sqrt(),
        }
    }
}

fn gauss(var: f64, z: f64) -> f64 {
    (-z * z / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Transition density of skew Brownian motion with the membrane at 0.
pub fn skew_density(params: SkewParams, dt: f64, x: f64, y: f64) -> f64 {
    let var = params.sigma * params.sigma * dt;
    let a = params.alpha;
    if x >= 0.0 {
        if y >= 0.0 {
            gauss(var, y - x) + (2.0 * a - 1.0) * gauss(var, y + x)
        } else {
            2.0 * (1.0 - a) * gauss(var, y - x)
        }
    } else if y < 0.0 {
        gauss(var, y - x) + (1.0 - 2.0 * a) * gauss(var, y + x)
    } else {
        2.0 * a * gauss(var, y - x)
    }
}

/// int phi(y) p_skew(dt, x, y) dy.
pub fn skew_action(params: SkewParams, dt: f64, x: f64, phi: &InitialFunction) -> f64 {
    let reach = x.abs() + 12.0 * params.sigma * dt.sqrt();
    let rule = legendre(16);
    let panels = 64;
    let mut breaks: Vec<f64> = (0..=2 * panels)
        .map(|k| -reach + reach * k as f64 / panels as f64)
        .collect();
    breaks.extend(phi.breakpoints(-reach, reach));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut acc = Neumaier::default();
    for win in breaks.windows(2) {
        for (y, w) in rule.mapped(win[0], win[1]) {
            acc.add(w * phi.eval(y) * skew_density(params, dt, x, y));
        }
    }
    acc.total()
}

/// Action of the heat semigroup with diffusion b on a Gaussian bump.
pub fn heat_gaussian(amp: f64, center: f64, width: f64, b: f64, dt: f64, x: f64) -> f64 {
    let v = width * width + b * dt;
    amp * width / v.sqrt() * (-(x - center) * (x - center) / (2.0 * v)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler steps with the skew rule at membrane contacts.
    EulerSkew,
    /// Plain Gaussian increments, membrane ignored.
    ExactGaussianIncrement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            paths: 100_000,
            dt: 1e-3,
            seed: 42,
            scheme: Scheme::EulerSkew,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    /// Fraction of steps that touched the membrane without ending across it.
    pub double_crossing: f64,
    pub jumps: u64,
}

struct PathOutcome {
    x: f64,
    double: u32,
    jumps: u32,
}

/// Terminal positions X_t of paths started at (s, x).
pub fn simulate_endpoints(problem: &Problem, s: f64, x: f64, t: f64, config: &SimConfig) -> Result<(Vec<f64>, f64, u64)> {
    if !(s <= t) {
        return Err(MembraneError::TimeOrder { s, t });
    }
    if config.paths == 0 || !(config.dt > 0.0) {
        return Err(MembraneError::invalid("mc", "paths >= 1 and dt > 0 required"));
    }
    let steps = ((t - s) / config.dt).ceil().max(1.0) as usize;
    let dt = (t - s) / steps as f64;
    let layer = (problem.bounds().b_max * dt).sqrt();
    let out: Vec<PathOutcome> = (0..config.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            run_path(problem, s, x, dt, steps, layer, config.scheme, &mut rng)
        })
        .collect();
    let double: u64 = out.iter().map(|o| o.double as u64).sum();
    let jumps: u64 = out.iter().map(|o| o.jumps as u64).sum();
    let fraction = double as f64 / (steps * config.paths) as f64;
    if config.scheme == Scheme::EulerSkew && fraction > 0.05 {
        return Err(MembraneError::StepTooLarge { fraction });
    }
    Ok((out.into_iter().map(|o| o.x).collect(), fraction, jumps))
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    problem: &Problem,
    s: f64,
    x: f64,
    dt: f64,
    steps: usize,
    eps: f64,
    scheme: Scheme,
    rng: &mut ChaCha8Rng,
) -> PathOutcome {
    let mut pos = x;
    let mut double = 0;
    let mut jumps = 0;
    let sq = dt.sqrt();
    for n in 0..steps {
        let t0 = s + n as f64 * dt;
        let t1 = t0 + dt;
        let (h0, h1) = (problem.h(t0), problem.h(t1));
        let z: f64 = rng.sample(StandardNormal);
        match scheme {
            Scheme::ExactGaussianIncrement => {
                let i = if pos < h0 { 1 } else { 2 };
                pos += problem.a(i, t0, pos) * dt + (problem.b(i, t0, pos) * dt).sqrt() * z;
            }
            Scheme::EulerSkew => {
                let y = pos - h0;
                let i = if y < 0.0 { 1 } else { 2 };
                let bi = problem.b(i, t0, pos);
                // Brownian-scale coordinate relative to the membrane
                let xi = y / bi.sqrt();
                let drift = problem.a(i, t0, pos) / bi.sqrt() - (h1 - h0) / (dt * bi.sqrt());
                let xi1 = xi + drift * dt + sq * z;
                let crossed = (xi1 < 0.0) != (xi < 0.0);
                let touched = crossed || {
                    let p = (-2.0 * xi * xi1 / dt).exp();
                    let u: f64 = rng.gen();
                    u < p
                };
                let end = if touched {
                    if !crossed {
                        double += 1;
                    }
                    let (b1, b2) = (problem.b(1, t1, h1), problem.b(2, t1, h1));
                    let (q1, q2) = (problem.q(1, t1), problem.q(2, t1));
                    let right = q2 * b1.sqrt() / (q2 * b1.sqrt() + q1 * b2.sqrt());
                    let u: f64 = rng.gen();
                    if u < right {
                        xi1.abs() * b2.sqrt()
                    } else {
                        -xi1.abs() * b1.sqrt()
                    }
                } else {
                    xi1 * bi.sqrt()
                };
                pos = h1 + end;
                if problem.has_measure() {
                    if (pos - h1).abs() < eps {
                        let (b1, b2) = (problem.b(1, t1, h1), problem.b(2, t1, h1));
                        let (q1, q2) = (problem.q(1, t1), problem.q(2, t1));
                        let den = q1 * b2.sqrt() + q2 * b1.sqrt();
                        let dsum = (b1 * b2.sqrt() + b2 * b1.sqrt()) / den;
                        let local = dt / (2.0 * eps);
                        for atom in problem.atoms_at(t1) {
                            let p = -(-0.5 * dsum * atom.weight * local).exp_m1();
                            let u: f64 = rng.gen();
                            if u < p {
                                pos = atom.y;
                                jumps += 1;
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    PathOutcome { x: pos, double, jumps }
}

/// Monte Carlo estimate of E phi(X_t) given X_s = x.
pub fn simulate(problem: &Problem, s: f64, x: f64, t: f64, phi: &InitialFunction, config: &SimConfig) -> Result<McEstimate> {
    let (ends, double_crossing, jumps) = simulate_endpoints(problem, s, x, t, config)?;
    let vals: Vec<f64> = ends.iter().map(|&y| phi.eval(y)).collect();
    let n = vals.len() as f64;
    let mut acc = Neumaier::default();
    for &v in &vals {
        acc.add(v);
    }
    let mean = acc.total() / n;
    let mut sq = Neumaier::default();
    for &v in &vals {
        sq.add((v - mean) * (v - mean));
    }
    let var = if vals.len() > 1 { sq.total() / (n - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        paths: vals.len(),
        double_crossing,
        jumps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub z: f64,
    pub pass: bool,
}

/// Pass iff |solver - mc| <= k_sigma * stderr.
pub fn compare(solver: f64, mc: f64, stderr: f64, k_sigma: f64) -> Comparison {
    let diff = (solver - mc).abs();
    let z = if diff == 0.0 { 0.0 } else { diff / stderr };
    Comparison {
        z,
        pass: diff <= k_sigma * stderr,
    }
}

impl Comparison {
    pub fn to_check(&self, check: &str, case: &str, k_sigma: f64) -> CheckResult {
        CheckResult {
            check: check.to_string(),
            case: case.to_string(),
            statistic: self.z,
            tolerance: k_sigma,
            pass: self.pass,
            detail: None,
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and its critical value at level 0.001.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let crit = 1.949 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt();
    (d, crit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn density_special_cases() {
        let half = SkewParams { alpha: 0.5, sigma: 1.0 };
        for &(x, y) in &[(0.3, -0.2), (-1.0, 0.5), (0.0, 1.0)] {
            assert!((skew_density(half, 0.7, x, y) - gauss(0.7, y - x)).abs() < 1e-15);
        }
        let refl = SkewParams { alpha: 1.0, sigma: 1.0 };
        assert_eq!(skew_density(refl, 0.5, 0.4, -0.1), 0.0);
        let p = SkewParams { alpha: 0.75, sigma: 1.0 };
        assert!((skew_density(p, 1.0, 0.0, 0.5) - 1.5 * gauss(1.0, 0.5)).abs() < 1e-15);
        assert!((skew_density(p, 1.0, 0.0, -0.5) - 0.5 * gauss(1.0, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        let one = InitialFunction::constant_one();
        for &alpha in &[0.1, 0.5, 0.75, 1.0] {
            for &dt in &[0.01, 1.0] {
                for &x in &[-0.7, 0.0, 0.2] {
                    let p = SkewParams { alpha, sigma: 1.3 };
                    assert!((skew_action(p, dt, x, &one) - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn compare_examples() {
        let c = compare(1.0, 1.001, 0.002, 3.0);
        assert!(c.pass && (c.z - 0.5).abs() < 1e-9);
        let c = compare(1.0, 1.02, 0.002, 3.0);
        assert!(!c.pass && (c.z - 10.0).abs() < 1e-9);
        assert!(compare(0.0, 0.0, 1e-300, 3.0).pass);
    }

    #[test]
    fn seed_determinism() {
        let p = cases::skew();
        let phi = InitialFunction::gaussian(1.0, 0.3, 0.5);
        let cfg = SimConfig {
            paths: 2000,
            dt: 1e-2,
            ..SimConfig::default()
        };
        let a = simulate(&p, 0.0, 0.5, 0.5, &phi, &cfg).unwrap();
        let b = simulate(&p, 0.0, 0.5, 0.5, &phi, &cfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn symmetric_matches_heat() {
        let p = cases::symmetric();
        let phi = InitialFunction::gaussian(1.0, 0.2, 0.6);
        let cfg = SimConfig {
            paths: 20_000,
            ..SimConfig::default()
        };
        let est = simulate(&p, 0.0, 0.1, 1.0, &phi, &cfg).unwrap();
        let exact = heat_gaussian(1.0, 0.2, 0.6, 1.0, 1.0, 0.1);
        assert!(compare(exact, est.mean, est.stderr, 3.0).pass, "{est:?} {exact}");
    }

    #[test]
    fn skew_exit_probability() {
        let p = cases::skew();
        let right = InitialFunction::tabulated(-1e-9, 1e-9, &[0.0, 1.0]).unwrap();
        let est = simulate(&p, 0.0, 0.0, 1.0, &right, &SimConfig::default()).unwrap();
        assert!(compare(0.75, est.mean, est.stderr, 3.0).pass, "{est:?}");
    }

    #[test]
    fn half_skew_agrees_with_plain_gaussian() {
        let p = cases::symmetric();
        let base = SimConfig {
            paths: 10_000,
            ..SimConfig::default()
        };
        let (a, _, _) = simulate_endpoints(&p, 0.0, 0.1, 1.0, &base).unwrap();
        let plain = SimConfig {
            scheme: Scheme::ExactGaussianIncrement,
            seed: 7,
            ..base
        };
        let (b, _, _) = simulate_endpoints(&p, 0.0, 0.1, 1.0, &plain).unwrap();
        let (d, crit) = ks_two_sample(&a, &b);
        assert!(d < crit, "{d} {crit}");
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let p = cases::skew();
        let cfg = SimConfig {
            paths: 2000,
            dt: 0.1,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate(&p, 0.0, 0.0, 1.0, &InitialFunction::constant_one(), &cfg),
            Err(MembraneError::StepTooLarge { .. })
        ));
    }
}
