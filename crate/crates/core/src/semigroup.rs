//! The two-parameter semigroup T_st and checks of its defining properties.

use crate::boundary_system::{BoundarySystem, Solution, SolverSettings};
use crate::error::{MembraneError, Result};
use crate::parametrix::ParametrixSettings;
use crate::potentials::{PotentialSettings, Potentials};
use crate::problem::{side_of, InitialFunction, Problem, Segment, Side};
use crate::quadrature::{legendre, Neumaier};
use parking_lot::Mutex;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

type MemoKey = (u64, u64, u64);

pub struct SemigroupOperator {
    pot: Arc<Potentials>,
    system: BoundarySystem,
    memo: Mutex<HashMap<MemoKey, Arc<Solution>>>,
    /// Spacing of the re-tabulation grid used by Chapman–Kolmogorov.
    pub retab_step: f64,
}

impl SemigroupOperator {
    pub fn new(
        problem: Arc<Problem>,
        parametrix: ParametrixSettings,
        potential: PotentialSettings,
        solver: SolverSettings,
    ) -> Self {
        let pot = Arc::new(Potentials::new(problem, parametrix, potential));
        let system = BoundarySystem::new(pot.clone(), solver);
        SemigroupOperator {
            pot,
            system,
            memo: Mutex::new(HashMap::new()),
            retab_step: 0.01,
        }
    }

    pub fn with_defaults(problem: Problem) -> Self {
        Self::new(
            Arc::new(problem),
            ParametrixSettings::default(),
            PotentialSettings::default(),
            SolverSettings::default(),
        )
    }

    pub fn problem(&self) -> &Problem {
        self.pot.problem()
    }

    pub fn system(&self) -> &BoundarySystem {
        &self.system
    }

    pub fn potentials(&self) -> &Arc<Potentials> {
        &self.pot
    }

    /// Equispaced audit points of the problem's validation grid.
    pub fn audit_grid(&self) -> Vec<f64> {
        let v = &self.problem().validation;
        let n = v.resolution.max(2);
        (0..n)
            .map(|k| v.x_min + (v.x_max - v.x_min) * k as f64 / (n - 1) as f64)
            .collect()
    }

    /// Densities for (phi, t) on a mesh over [s_min, t), solved once.
    pub fn solution(&self, s_min: f64, t: f64, phi: &InitialFunction) -> Result<Arc<Solution>> {
        let key = (s_min.to_bits(), t.to_bits(), phi.id());
        if let Some(sol) = self.memo.lock().get(&key) {
            return Ok(sol.clone());
        }
        let sol = Arc::new(self.system.solve_densities(phi, t, s_min)?);
        self.memo.lock().insert(key, sol.clone());
        Ok(sol)
    }

    pub fn apply(&self, s: f64, t: f64, phi: &InitialFunction) -> Result<Field> {
        if !(s <= t) {
            return Err(MembraneError::TimeOrder { s, t });
        }
        let sol = if s < t {
            Some(self.solution(s, t, phi)?)
        } else {
            None
        };
        Ok(Field {
            s,
            t,
            phi: phi.clone(),
            pot: self.pot.clone(),
            sol,
        })
    }

    /// sup over the audit grid of |T_st phi - T_s tau (T_tau t phi)|.
    pub fn check_chapman_kolmogorov(&self, s: f64, tau: f64, t: f64, phi: &InitialFunction) -> Result<f64> {
        if !(s <= tau && tau <= t) {
            return Err(MembraneError::TimeOrder { s, t: tau });
        }
        let inner = self.apply(tau, t, phi)?;
        let psi = self.retabulate(&inner, s)?;
        let direct = self.apply(s, t, phi)?.eval_many(&self.audit_grid())?;
        let composed = self.apply(s, tau, &psi)?.eval_many(&self.audit_grid())?;
        Ok(direct
            .iter()
            .zip(&composed)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Cubic re-tabulation of a field on both sides of h(field.s), wide
    /// enough for a later application over [s, field.s].
    pub fn retabulate(&self, field: &Field, s: f64) -> Result<InitialFunction> {
        let p = self.problem();
        let v = &p.validation;
        let h = p.h(field.s);
        let reach = v.x_min.abs().max(v.x_max.abs()) + h.abs() + self.pot.window((field.s - s).max(0.0)) + 1.0;
        let n = (reach / self.retab_step).ceil() as usize + 1;
        let left: Vec<f64> = (0..n).map(|k| h - reach + reach * k as f64 / (n - 1) as f64).collect();
        let right: Vec<f64> = (0..n).map(|k| h + reach * k as f64 / (n - 1) as f64).collect();
        let lv = left
            .par_iter()
            .map(|&x| field.side_value(1, x, 0))
            .collect::<Result<Vec<_>>>()?;
        let rv = right
            .par_iter()
            .map(|&x| field.side_value(2, x, 0))
            .collect::<Result<Vec<_>>>()?;
        Ok(InitialFunction::split_tabulated(
            h,
            Segment {
                x0: h - reach,
                x1: h,
                values: lv,
            },
            Segment {
                x0: h,
                x1: h + reach,
                values: rv,
            },
        ))
    }

    /// sup over the audit grid of |T_st phi_n - T_st phi| for piecewise
    /// linear interpolants phi_n of phi with spacing 2^-n.
    pub fn check_continuity(&self, s: f64, t: f64, phi: &InitialFunction, levels: &[u32]) -> Result<Vec<f64>> {
        let v = &self.problem().validation;
        let reach = self.pot.window((t - s).max(0.0)) + 1.0;
        let (lo, hi) = (v.x_min - reach, v.x_max + reach);
        let grid = self.audit_grid();
        let exact = self.apply(s, t, phi)?.eval_many(&grid)?;
        let mut out = Vec::with_capacity(levels.len());
        for &n in levels {
            let cells = ((hi - lo) * 2f64.powi(n as i32)).ceil() as usize;
            let vals: Vec<f64> = (0..=cells)
                .map(|k| phi.eval(lo + (hi - lo) * k as f64 / cells as f64))
                .collect();
            let phi_n = InitialFunction::tabulated(lo, hi, &vals)?;
            let u = self.apply(s, t, &phi_n)?.eval_many(&grid)?;
            out.push(u.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        }
        Ok(out)
    }

    /// (min, sup norm) of T_st phi over the audit grid.
    pub fn check_positivity_contraction(&self, s: f64, t: f64, phi: &InitialFunction) -> Result<(f64, f64)> {
        let u = self.apply(s, t, phi)?.eval_many(&self.audit_grid())?;
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((min, sup))
    }

    /// Residuals of both conjugation conditions at the mesh nodes of the
    /// solve over [s_min, t).
    pub fn check_conjugation(&self, s_min: f64, t: f64, phi: &InitialFunction) -> Result<Conjugation> {
        let field = self.apply(s_min, t, phi)?;
        let nodes = match &field.sol {
            Some(sol) => sol.rhs.nodes.clone(),
            None => vec![],
        };
        let p = self.problem();
        let rows = nodes
            .par_iter()
            .map(|&s| {
                let f = field.at(s);
                let h = p.h(s);
                let u1 = f.side_value(1, h, 0)?;
                let u2 = f.side_value(2, h, 0)?;
                let uh = 0.5 * (u1 + u2);
                let mut b2 = p.q(1, s) * f.one_sided_derivative(1)? - p.q(2, s) * f.one_sided_derivative(2)?;
                for a in p.atoms_at(s) {
                    b2 += a.weight * (uh - f.side_value(a.side, a.y, 0)?);
                }
                Ok((u1 - u2, b2))
            })
            .collect::<Result<Vec<_>>>()?;
        let (b1, b2): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        Ok(Conjugation {
            max_b1: b1.iter().fold(0.0, |m, v| m.max(v.abs())),
            max_b2: b2.iter().fold(0.0, |m, v| m.max(v.abs())),
            nodes,
            b1,
            b2,
        })
    }

    /// lhs(dt) = int f (T_{s,s+dt} phi - phi) / dt dx for each dt, and the
    /// limit predicted by the generator.
    pub fn weak_generator_pairing<F: Fn(f64) -> f64 + Sync>(
        &self,
        s: f64,
        phi: &InitialFunction,
        f: F,
        support: (f64, f64),
        dts: &[f64],
    ) -> Result<WeakGenerator> {
        let p = self.problem();
        let h = p.h(s);
        let mut lhs = Vec::with_capacity(dts.len());
        for &dt in dts {
            let field = self.apply(s, s + dt, phi)?;
            let mut br = vec![support.0, support.1];
            for k in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
                br.push(h - k * dt.sqrt());
                br.push(h + k * dt.sqrt());
            }
            let pts = pairing_nodes(&br, support);
            let vals = pts
                .par_iter()
                .map(|&(x, w)| Ok(w * f(x) * (field.eval(x)? - phi.eval(x)) / dt))
                .collect::<Result<Vec<_>>>()?;
            lhs.push(neumaier(&vals));
        }
        let pts = pairing_nodes(&[support.0, support.1, h], support);
        let bulk: Vec<f64> = pts
            .iter()
            .map(|&(x, w)| {
                let i = if x < h { 1 } else { 2 };
                let [_, d1, d2] = phi.eval_d(x);
                w * f(x) * (0.5 * p.b(i, s, x) * d2 + p.a(i, s, x) * d1)
            })
            .collect();
        let d = self.system.d(1, s) + self.system.d(2, s);
        let mut jump = (p.q(2, s) - p.q(1, s)) * phi.derivative(h, 1);
        for a in p.atoms_at(s) {
            jump += a.weight * (phi.eval(a.y) - phi.eval(h));
        }
        let rhs = neumaier(&bulk) + 0.5 * d * jump * f(h);
        let errors = lhs.iter().map(|l| (l - rhs).abs()).collect();
        Ok(WeakGenerator {
            dts: dts.to_vec(),
            lhs,
            rhs,
            errors,
        })
    }

    pub fn effective_coefficients(&self, s: f64, x: f64) -> Result<EffectiveCoefficients> {
        let p = self.problem();
        if p.has_measure() {
            return Err(MembraneError::MeasureNotNull);
        }
        let h = p.h(s);
        let (b1, b2) = (p.b(1, s, h), p.b(2, s, h));
        let (q1, q2) = (p.q(1, s), p.q(2, s));
        let den = q1 * b2.sqrt() + q2 * b1.sqrt();
        let l1 = q1 * b2.sqrt() / den;
        let l2 = q2 * b1.sqrt() / den;
        let (d1, d2) = (self.system.d(1, s), self.system.d(2, s));
        let a0 = 0.5 * (d1 + d2) * (q2 - q1);
        let (b, a, a0_here) = match side_of(p, s, x) {
            Side::Left => (p.b(1, s, x), p.a(1, s, x), 0.0),
            Side::Right => (p.b(2, s, x), p.a(2, s, x), 0.0),
            Side::Membrane => (l1 * b1 + l2 * b2, l1 * p.a(1, s, h) + l2 * p.a(2, s, h), a0),
        };
        Ok(EffectiveCoefficients {
            l1,
            l2,
            d1,
            d2,
            a0,
            b,
            a,
            a0_at_x: a0_here,
        })
    }

    /// Domain residuals of the ordinary generator at h(s) and, when both
    /// vanish, the pointwise error of (T_{s,s+dt} phi - phi)/dt against L_s phi.
    pub fn generator_domain_check(&self, s: f64, phi: &InitialFunction, dt: f64, points: &[f64]) -> Result<DomainCheck> {
        let p = self.problem();
        let h = p.h(s);
        let [_, d1, d2] = phi.eval_d(h);
        let l = |i: usize| 0.5 * p.b(i, s, h) * d2 + p.a(i, s, h) * d1;
        let residual_1 = (l(1) - l(2)).abs();
        let mut r2 = (p.q(2, s) - p.q(1, s)) * d1;
        for a in p.atoms_at(s) {
            r2 += a.weight * (phi.eval(a.y) - phi.eval(h));
        }
        let residual_2 = r2.abs();
        let tol = 1e-8 * (1.0 + phi.sup_norm());
        let limit_error = if residual_1 <= tol && residual_2 <= tol {
            let field = self.apply(s, s + dt, phi)?;
            let errs = points
                .par_iter()
                .map(|&x| {
                    let i = if x < h { 1 } else { 2 };
                    let [v, g1, g2] = phi.eval_d(x);
                    let lx = 0.5 * p.b(i, s, x) * g2 + p.a(i, s, x) * g1;
                    Ok(((field.eval(x)? - v) / dt - lx).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(errs.into_iter().fold(0.0, f64::max))
        } else {
            None
        };
        Ok(DomainCheck {
            residual_1,
            residual_2,
            limit_error,
        })
    }

    /// Moments of y - x of order 1, 2 and 4 under P(s, x, t, dy), from
    /// clamped monomials.
    pub fn transition_moments(&self, s: f64, x: f64, t: f64) -> Result<[f64; 3]> {
        let p = self.problem();
        if p.has_measure() {
            return Err(MembraneError::MeasureNotNull);
        }
        let w = 6.0 * (p.bounds().b_max * (t - s)).sqrt();
        let mut out = [0.0; 3];
        for (slot, k) in [1usize, 2, 4].into_iter().enumerate() {
            // (y - x)^k expanded in powers of y
            let coeffs: Vec<f64> = (0..=k)
                .map(|j| binomial(k, j) * (-x).powi((k - j) as i32))
                .collect();
            let phi = InitialFunction::polynomial_clamped(x - w, x + w, &coeffs);
            out[slot] = self.apply(s, t, &phi)?.eval(x)?;
        }
        Ok(out)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn neumaier(v: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for &x in v {
        acc.add(x);
    }
    acc.total()
}

fn pairing_nodes(breaks: &[f64], support: (f64, f64)) -> Vec<(f64, f64)> {
    let mut br: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x >= support.0 && x <= support.1)
        .collect();
    let panels = 16;
    for k in 0..=panels {
        br.push(support.0 + (support.1 - support.0) * k as f64 / panels as f64);
    }
    br.sort_by(|a, b| a.total_cmp(b));
    br.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let rule = legendre(12);
    br.windows(2)
        .flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>())
        .collect()
}

/// x -> T_st phi(x) with the densities already solved.
#[derive(Clone)]
pub struct Field {
    pub s: f64,
    pub t: f64,
    phi: InitialFunction,
    pot: Arc<Potentials>,
    sol: Option<Arc<Solution>>,
}

impl Field {
    pub fn solution(&self) -> Option<&Solution> {
        self.sol.as_deref()
    }

    /// The same solve evaluated at another start time covered by its mesh.
    pub fn at(&self, s: f64) -> Field {
        Field {
            s,
            ..self.clone()
        }
    }

    /// D_x^p of u_i(s, x), the formula of side i continued to any x.
    pub fn side_value(&self, i: usize, x: f64, p: usize) -> Result<f64> {
        match &self.sol {
            Some(sol) if self.s < self.t => Ok(self.pot.poisson_d(i, self.s, x, self.t, &self.phi, p)?
                + self.pot.layer_d(i, self.s, x, self.t, &sol.densities, p)?),
            _ => Ok(self.phi.derivative(x, p)),
        }
    }

    /// du_i/dx at h(s) approached from side i.
    pub fn one_sided_derivative(&self, i: usize) -> Result<f64> {
        let h = self.pot.problem().h(self.s);
        match &self.sol {
            Some(sol) if self.s < self.t => {
                let (left, right) = self.pot.conormal_jump(i, self.s, self.t, &sol.densities)?;
                let layer = if i == 1 { left } else { right };
                Ok(self.pot.poisson_d(i, self.s, h, self.t, &self.phi, 1)? + layer)
            }
            _ => Ok(self.phi.derivative(h, 1)),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match side_of(self.pot.problem(), self.s, x) {
            Side::Left => self.side_value(1, x, 0),
            Side::Right => self.side_value(2, x, 0),
            Side::Membrane => Ok(0.5 * (self.side_value(1, x, 0)? + self.side_value(2, x, 0)?)),
        }
    }

    pub fn eval_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.par_iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Conjugation {
    pub nodes: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub max_b1: f64,
    pub max_b2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakGenerator {
    pub dts: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: f64,
    pub errors: Vec<f64>,
}

impl WeakGenerator {
    pub fn monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveCoefficients {
    pub l1: f64,
    pub l2: f64,
    pub d1: f64,
    pub d2: f64,
    pub a0: f64,
    pub b: f64,
    pub a: f64,
    /// a0 if x lies on the membrane, 0 otherwise.
    pub a0_at_x: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DomainCheck {
    pub residual_1: f64,
    pub residual_2: f64,
    pub limit_error: Option<f64>,
}
