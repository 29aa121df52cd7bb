//! Second-kind Volterra system for the layer densities and its solution by
//! successive approximations.

use crate::error::{MembraneError, Result};
use crate::parametrix::{z0, Mode};
use crate::potentials::{graded_mesh, DensityPair, Potentials};
use crate::problem::{AtomState, InitialFunction, Problem};
use crate::quadrature::{legendre, Neumaier, SqrtSplit};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Mesh intervals N of the graded density mesh.
    pub nodes: usize,
    pub min_nodes: usize,
    pub tol_v: f64,
    pub k_max: usize,
    /// Radius of the near-atom split; defaults to half the minimal atom
    /// distance to the membrane.
    pub delta: Option<f64>,
    /// Panels and grading of the left half of each row (towards tau = s).
    pub left: SqrtSplit,
    /// Gauss–Legendre order per density cell on the right half.
    pub right_order: usize,
    /// Rule of the rho-integrals in R_j.
    pub kernel: SqrtSplit,
    /// Rule of the Holmgren transform of Phi0.
    pub holmgren: SqrtSplit,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            nodes: 64,
            min_nodes: 8,
            tol_v: 1e-8,
            k_max: 200,
            delta: None,
            left: SqrtSplit {
                order: 8,
                panels: 2,
                grading: 5,
            },
            right_order: 4,
            kernel: SqrtSplit {
                order: 8,
                panels: 2,
                grading: 4,
            },
            holmgren: SqrtSplit::default(),
        }
    }
}

/// Holmgren transform
/// (1/sqrt(2 pi)) int_s^t (rho-s)^{-3/2} [f(rho) - f(s)] drho - sqrt(2/pi) (t-s)^{-1/2} f(s)
/// with a refinement check on the hypersingular integral.
pub fn holmgren<F: Fn(f64) -> f64 + Sync>(f: F, s: f64, t: f64) -> Result<f64> {
    if !(s < t) {
        return Err(MembraneError::TimeOrder { s, t });
    }
    let coarse = holmgren_with(&SqrtSplit::default(), &f, s, t);
    let fine_rule = SqrtSplit {
        order: 16,
        panels: 8,
        grading: 10,
    };
    let fine = holmgren_with(&fine_rule, &f, s, t);
    let scale = f(s).abs() / (t - s).sqrt() + fine.abs();
    if !fine.is_finite() || (fine - coarse).abs() > 1e-3 * scale + 1e-12 {
        return Err(MembraneError::SingularIntegrand { coarse, fine });
    }
    Ok(fine)
}

pub fn holmgren_with<F: Fn(f64) -> f64>(rule: &SqrtSplit, f: &F, s: f64, t: f64) -> f64 {
    let fs = f(s);
    let mut acc = Neumaier::default();
    for (rho, w) in rule.nodes(s, t, None, &[]) {
        let r = rho - s;
        acc.add(w * (f(rho) - fs) / (r * r.sqrt()));
    }
    acc.total() / (2.0 * PI).sqrt() - (2.0 / PI).sqrt() * fs / (t - s).sqrt()
}

/// int_0^1 exp(-A(theta)/kappa) dtheta for A linear from p (theta=0) to q.
pub fn theta_integral(p: f64, q: f64, kappa: f64) -> f64 {
    let d = (p - q).abs() / kappa;
    let base = (-p.min(q) / kappa).exp();
    if d < 1e-12 {
        base
    } else {
        base * (-(-d).exp_m1()) / d
    }
}

/// Right-hand sides on the mesh nodes s_1..s_N.
#[derive(Debug, Clone, Serialize)]
pub struct RightHandSide {
    pub t: f64,
    pub nodes: Vec<f64>,
    pub phi0: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
}

/// Strongly singular part of K_j in factored form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SingularFactor {
    /// -1 / (2 sqrt(2 pi) (b_j(tau, h(tau)) (tau - s))^{3/2})
    pub prefactor: f64,
    /// sum over near atoms of w (y - h(s))^2
    pub moment: f64,
    /// sum over near atoms of w (y - h(s))^2 times the theta-integral
    pub weighted_theta: f64,
}

impl SingularFactor {
    pub fn value(&self) -> f64 {
        self.prefactor * self.weighted_theta
    }
}

/// Tabulated kernels of one mesh row.
#[derive(Debug, Clone, Serialize)]
pub struct KernelRow {
    pub s: f64,
    pub tau: Vec<f64>,
    pub weight: Vec<f64>,
    /// N_ij^(1) at the row nodes, indexed [2(i-1) + (j-1)].
    pub regular: [Vec<f64>; 4],
    /// Factored singular parts of K_1 and K_2.
    pub singular: [Vec<SingularFactor>; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelTable {
    pub t: f64,
    pub s_min: f64,
    pub delta: f64,
    pub d: Vec<[f64; 2]>,
    pub rows: Vec<KernelRow>,
}

impl KernelTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub densities: DensityPair,
    pub rhs: RightHandSide,
    /// Sup norms of the successive increments W^(k), k = 0, 1, ...
    pub history: Vec<f64>,
    pub iterations: usize,
    pub delta: f64,
    /// Smallness witness for the near-atom split actually used.
    pub m_delta: f64,
    /// Witness with every atom counted as near.
    pub m_delta_all: f64,
}

impl Solution {
    /// Largest ratio of successive increments from iteration k0 on.
    pub fn contraction_ratio(&self, k0: usize) -> f64 {
        self.history
            .windows(2)
            .skip(k0)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }

    /// Smallest k0 <= k0_max from which the increments shrink by a fixed
    /// ratio < 1, with that ratio.
    pub fn geometric_onset(&self, k0_max: usize) -> Option<(usize, f64)> {
        (0..=k0_max).find_map(|k0| {
            let rho = self.contraction_ratio(k0);
            (rho < 1.0).then_some((k0, rho))
        })
    }
}

pub struct BoundarySystem {
    pot: Arc<Potentials>,
    pub settings: SolverSettings,
    delta: f64,
}

impl BoundarySystem {
    pub fn new(pot: Arc<Potentials>, settings: SolverSettings) -> Self {
        let delta = settings.delta.unwrap_or_else(|| pot.problem().delta());
        BoundarySystem {
            pot,
            settings,
            delta,
        }
    }

    pub fn potentials(&self) -> &Potentials {
        &self.pot
    }

    fn problem(&self) -> &Problem {
        self.pot.problem()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// d_i(s).
    pub fn d(&self, i: usize, s: f64) -> f64 {
        let p = self.problem();
        let h = p.h(s);
        let (b1, b2) = (p.b(1, s, h), p.b(2, s, h));
        let den = p.q(1, s) * b2.sqrt() + p.q(2, s) * b1.sqrt();
        if i == 1 {
            b1 * b2.sqrt() / den
        } else {
            b2 * b1.sqrt() / den
        }
    }

    /// (-1)^i q_{3-i}(s) / sqrt(b_{3-i}(s, h(s))).
    pub fn c(&self, i: usize, s: f64) -> f64 {
        let p = self.problem();
        let o = 3 - i;
        let v = p.q(o, s) / p.b(o, s, p.h(s)).sqrt();
        if i == 1 {
            -v
        } else {
            v
        }
    }

    pub fn rhs_phi0(&self, s: f64, t: f64, phi: &InitialFunction) -> Result<f64> {
        let p = self.problem();
        if p.left == p.right {
            if !(s < t) {
                return Err(MembraneError::TimeOrder { s, t });
            }
            return Ok(0.0);
        }
        let h = p.h(s);
        Ok(self.pot.poisson(2, s, h, t, phi)? - self.pot.poisson(1, s, h, t, phi)?)
    }

    /// Psi(s, t).
    pub fn rhs_psi(&self, s: f64, t: f64, phi: &InitialFunction) -> Result<f64> {
        let p = self.problem();
        let h = p.h(s);
        let mut v = p.q(2, s) * self.pot.poisson_d(2, s, h, t, phi, 1)?
            - p.q(1, s) * self.pot.poisson_d(1, s, h, t, phi, 1)?;
        for a in p.atoms_at(s) {
            let i = a.side;
            v += a.weight * (self.pot.poisson(i, s, a.y, t, phi)? - self.pot.poisson(i, s, h, t, phi)?);
        }
        Ok(v)
    }

    fn is_near(&self, s: f64, a: &AtomState) -> bool {
        (a.y - self.problem().h(s)).abs() < self.delta
    }

    /// K_j(s, tau) from its defining formula.
    pub fn kernel_k(&self, j: usize, s: f64, tau: f64) -> Result<f64> {
        if !(s < tau) {
            return Err(MembraneError::TimeOrder { s, t: tau });
        }
        let p = self.problem();
        let (hs, ht) = (p.h(s), p.h(tau));
        let sign = if j == 1 { -1.0 } else { 1.0 };
        let mut v = sign * p.q(j, s) * self.pot.g(j, s, hs, tau, ht, 1)?;
        let atoms: Vec<_> = p.atoms_at(s).into_iter().filter(|a| a.side == j).collect();
        if !atoms.is_empty() {
            let g_h = self.pot.g(j, s, hs, tau, ht, 0)?;
            for a in atoms {
                v += a.weight * (self.pot.g(j, s, a.y, tau, ht, 0)? - g_h);
            }
        }
        Ok(v)
    }

    /// K_j split into the part with at most (tau-s)^{-1+alpha/2} growth and the
    /// factored strongly singular near-atom part.
    pub fn kernel_k_parts(&self, j: usize, s: f64, tau: f64) -> Result<(f64, SingularFactor)> {
        if !(s < tau) {
            return Err(MembraneError::TimeOrder { s, t: tau });
        }
        let p = self.problem();
        let g = self.pot.fundamental(j);
        let (hs, ht) = (p.h(s), p.h(tau));
        let r = tau - s;
        let beta = p.b(j, tau, ht);
        let kappa = 2.0 * beta * r;
        let sign = if j == 1 { -1.0 } else { 1.0 };
        let mut reg = sign * p.q(j, s) * self.pot.g(j, s, hs, tau, ht, 1)?;
        let mut sing = SingularFactor {
            prefactor: -1.0 / (2.0 * (2.0 * PI).sqrt() * (beta * r).powf(1.5)),
            moment: 0.0,
            weighted_theta: 0.0,
        };
        let atoms: Vec<_> = p.atoms_at(s).into_iter().filter(|a| a.side == j).collect();
        if atoms.is_empty() {
            return Ok((reg, sing));
        }
        let g_h = self.pot.g(j, s, hs, tau, ht, 0)?;
        let z1_h = if g.mode() == Mode::Trivial {
            0.0
        } else {
            g.z1(s, hs, tau, ht, 0)?
        };
        let i31 = (ht - hs) / ((2.0 * PI).sqrt() * (beta * r).powf(1.5));
        let qq = (hs - ht) * (hs - ht);
        for a in atoms {
            if self.is_near(s, &a) {
                let dy = a.y - hs;
                let pp = (a.y - ht) * (a.y - ht);
                let theta = theta_integral(pp, qq, kappa);
                if g.mode() != Mode::Trivial {
                    reg += a.weight * (g.z1(s, a.y, tau, ht, 0)? - z1_h);
                }
                reg += i31 * a.weight * dy * theta;
                sing.moment += a.weight * dy * dy;
                sing.weighted_theta += a.weight * dy * dy * theta;
            } else {
                reg += a.weight * (self.pot.g(j, s, a.y, tau, ht, 0)? - g_h);
            }
        }
        Ok((reg, sing))
    }

    /// R_j(s, tau): the rho-integral of the three increments plus the
    /// boundary term.
    pub fn kernel_r(&self, j: usize, s: f64, tau: f64) -> Result<f64> {
        if !(s < tau) {
            return Err(MembraneError::TimeOrder { s, t: tau });
        }
        let p = self.problem();
        let g = self.pot.fundamental(j);
        let trivial = g.mode() == Mode::Trivial;
        if trivial && p.membrane.as_constant().is_some() {
            return Ok(0.0);
        }
        let (hs, ht) = (p.h(s), p.h(tau));
        let z1 = |rho: f64| -> Result<f64> {
            if trivial {
                Ok(0.0)
            } else {
                g.z1(rho, ht, tau, ht, 0)
            }
        };
        let gg = |rho: f64, x: f64| g.eval_g(rho, x, tau, ht, 0);
        let z1_s = z1(s)?;
        let g_s_ht = gg(s, ht)?;
        let g_s_hs = gg(s, hs)?;
        let mut acc = Neumaier::default();
        for (rho, w) in self.settings.kernel.nodes(s, tau, None, &[]) {
            if rho >= tau || rho <= s {
                continue;
            }
            let hr = p.h(rho);
            let g_s_hr = gg(s, hr)?;
            let d_z1 = z1(rho)? - z1_s;
            let dd_g = (gg(rho, hr)? - gg(rho, ht)?) - (g_s_hr - g_s_ht);
            let dh_g = g_s_hr - g_s_hs;
            let r = rho - s;
            acc.add(w * (d_z1 + dd_g + dh_g) / (r * r.sqrt()));
        }
        let sign = if j == 1 { -1.0 } else { 1.0 };
        let r1 = sign * acc.total() / (2.0 * PI).sqrt();
        let r2 = -sign * (2.0 / PI).sqrt() / (tau - s).sqrt() * (z1_s + g_s_hs - g_s_ht);
        Ok(r1 + r2)
    }

    /// (N_ij^(1), N_ij^(2)) at (s, tau).
    pub fn kernel_n(&self, i: usize, j: usize, s: f64, tau: f64) -> Result<(f64, f64)> {
        let (k_reg, sing) = self.kernel_k_parts(j, s, tau)?;
        let r = self.kernel_r(j, s, tau)?;
        let d = self.d(i, s);
        Ok((d * (k_reg + self.c(i, s) * r), d * sing.value()))
    }

    fn atom_scales(&self, s: f64) -> Vec<f64> {
        let p = self.problem();
        let h = p.h(s);
        let sb = self.pot.sqrt_b_max();
        p.atoms_at(s).iter().map(|a| (a.y - h).abs() / sb).collect()
    }

    /// Quadrature nodes of one row over (s, t): graded panels in sqrt(tau-s)
    /// on the left half, one panel per density cell in sqrt(t-tau) on the right.
    pub fn row_nodes(&self, s: f64, t: f64, dens: &DensityPair) -> Vec<(f64, f64)> {
        let half = (0.5 * (t - s)).sqrt();
        let st = &self.settings;
        let mut out = Vec::new();
        let mut lb: Vec<f64> = (0..=st.left.panels)
            .map(|k| half * k as f64 / st.left.panels as f64)
            .collect();
        let first = half / st.left.panels as f64;
        for g in 1..=st.left.grading {
            lb.push(first * 0.5f64.powi(g as i32));
        }
        for e in self.atom_scales(s) {
            for f in [0.125, 0.25, 0.5, 1.0, 2.0, 4.0] {
                if f * e < half {
                    lb.push(f * e);
                }
            }
        }
        sort_dedup(&mut lb);
        let lrule = legendre(st.left.order);
        for win in lb.windows(2) {
            for (v, w) in lrule.mapped(win[0], win[1]) {
                out.push((s + v * v, 2.0 * v * w));
            }
        }
        let mut rb = vec![0.0, half];
        rb.extend(dens.sigma_breaks(half));
        if rb.len() < 4 {
            rb.push(0.5 * half);
        }
        sort_dedup(&mut rb);
        let rrule = legendre(st.right_order);
        for win in rb.windows(2) {
            for (v, w) in rrule.mapped(win[0], win[1]) {
                out.push((t - v * v, 2.0 * v * w));
            }
        }
        out
    }

    /// Right-hand sides on the mesh.
    pub fn assemble_rhs(&self, phi: &InitialFunction, t: f64, nodes: &[f64]) -> Result<RightHandSide> {
        let rows: Vec<Result<[f64; 5]>> = nodes[1..]
            .par_iter()
            .map(|&s| {
                let phi0 = self.rhs_phi0(s, t, phi)?;
                let phi_e = if self.problem().left == self.problem().right {
                    0.0
                } else {
                    let f = |rho: f64| {
                        if rho >= t {
                            0.0
                        } else {
                            self.rhs_phi0(rho, t, phi).unwrap_or(f64::NAN)
                        }
                    };
                    let v = holmgren_with(&self.settings.holmgren, &f, s, t);
                    if !v.is_finite() {
                        return Err(MembraneError::SingularIntegrand {
                            coarse: v,
                            fine: v,
                        });
                    }
                    v
                };
                let psi = self.rhs_psi(s, t, phi)?;
                let psi1 = self.d(1, s) * (psi + self.c(1, s) * phi_e);
                let psi2 = self.d(2, s) * (psi + self.c(2, s) * phi_e);
                Ok([phi0, phi_e, psi, psi1, psi2])
            })
            .collect();
        let mut out = RightHandSide {
            t,
            nodes: nodes[1..].to_vec(),
            phi0: vec![],
            phi: vec![],
            psi: vec![],
            psi1: vec![],
            psi2: vec![],
        };
        for r in rows {
            let [a, b, c, d, e] = r?;
            out.phi0.push(a);
            out.phi.push(b);
            out.psi.push(c);
            out.psi1.push(d);
            out.psi2.push(e);
        }
        Ok(out)
    }

    /// Kernel table on the mesh of `dens`.
    pub fn kernel_table(&self, t: f64, s_min: f64) -> Result<KernelTable> {
        let n = self.settings.nodes;
        if n < self.settings.min_nodes {
            return Err(MembraneError::MeshTooCoarse {
                nodes: n,
                min: self.settings.min_nodes,
            });
        }
        if !(s_min < t) {
            return Err(MembraneError::TimeOrder { s: s_min, t });
        }
        let dens = DensityPair::zero(t, s_min, n);
        let rows: Vec<Result<KernelRow>> = dens.nodes[1..]
            .par_iter()
            .map(|&s| self.kernel_row(s, t, &dens))
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(KernelTable {
            t,
            s_min,
            delta: self.delta,
            d: dens.nodes[1..].iter().map(|&s| [self.d(1, s), self.d(2, s)]).collect(),
            rows,
        })
    }

    fn kernel_row(&self, s: f64, t: f64, dens: &DensityPair) -> Result<KernelRow> {
        let nodes = self.row_nodes(s, t, dens);
        let mut row = KernelRow {
            s,
            tau: Vec::with_capacity(nodes.len()),
            weight: Vec::with_capacity(nodes.len()),
            regular: Default::default(),
            singular: Default::default(),
        };
        let (d1, d2) = (self.d(1, s), self.d(2, s));
        let (c1, c2) = (self.c(1, s), self.c(2, s));
        for (tau, w) in nodes {
            if tau <= s || tau >= t {
                continue;
            }
            let (k1, s1) = self.kernel_k_parts(1, s, tau)?;
            let (k2, s2) = self.kernel_k_parts(2, s, tau)?;
            let r1 = self.kernel_r(1, s, tau)?;
            let r2 = self.kernel_r(2, s, tau)?;
            row.tau.push(tau);
            row.weight.push(w);
            row.regular[0].push(d1 * (k1 + c1 * r1));
            row.regular[1].push(d1 * (k2 + c1 * r2));
            row.regular[2].push(d2 * (k1 + c2 * r1));
            row.regular[3].push(d2 * (k2 + c2 * r2));
            row.singular[0].push(s1);
            row.singular[1].push(s2);
        }
        Ok(row)
    }

    /// Nystrom matrix A with W_i(s_k) = sigma_k Psi_i(s_k) + sum A W.
    fn nystrom(&self, table: &KernelTable, dens: &DensityPair) -> Vec<Vec<f64>> {
        let n = dens.n();
        let d = &table.d;
        let mut a = vec![vec![0.0; 2 * n]; 2 * n];
        for (k, row) in table.rows.iter().enumerate() {
            let sig = (table.t - row.s).sqrt();
            for q in 0..row.tau.len() {
                let tau = row.tau[q];
                let f = sig * row.weight[q] / (table.t - tau).sqrt();
                let (l0, c) = dens.stencil(tau);
                for i in 0..2 {
                    for j in 0..2 {
                        let nij = row.regular[2 * i + j][q] + d[k][i] * row.singular[j][q].value();
                        for (m, cm) in c.iter().enumerate() {
                            let l = l0 + m - 1;
                            a[i * n + k][j * n + l] += f * nij * cm;
                        }
                    }
                }
            }
        }
        a
    }

    /// Solve for the densities on the graded mesh over [s_min, t).
    pub fn solve_densities(&self, phi: &InitialFunction, t: f64, s_min: f64) -> Result<Solution> {
        let (sol, _) = self.solve_with_table(phi, t, s_min)?;
        Ok(sol)
    }

    pub fn solve_with_table(&self, phi: &InitialFunction, t: f64, s_min: f64) -> Result<(Solution, KernelTable)> {
        let table = self.kernel_table(t, s_min)?;
        let n = self.settings.nodes;
        let mut dens = DensityPair::zero(t, s_min, n);
        let rhs = self.assemble_rhs(phi, t, &dens.nodes)?;
        let p = self.problem();
        let m_delta = p.m_delta(self.delta);
        let m_delta_all = p.m_delta(f64::INFINITY);
        let a = self.nystrom(&table, &dens);
        let mut incr: Vec<f64> = (0..2 * n)
            .map(|r| {
                let k = r % n;
                let sig = (t - dens.nodes[k + 1]).sqrt();
                sig * if r < n { rhs.psi1[k] } else { rhs.psi2[k] }
            })
            .collect();
        let mut total = incr.clone();
        let norm = if phi.sup_norm() > 0.0 { phi.sup_norm() } else { 1.0 };
        let tol = self.settings.tol_v * norm;
        let mut history = vec![sup(&incr)];
        let mut iterations = 0;
        while *history.last().unwrap() > tol {
            if iterations >= self.settings.k_max {
                return Err(divergence(&history, iterations, m_delta_all));
            }
            incr = a
                .par_iter()
                .map(|row| row.iter().zip(&incr).map(|(x, y)| x * y).sum())
                .collect();
            for (a, b) in total.iter_mut().zip(&incr) {
                *a += b;
            }
            iterations += 1;
            let s = sup(&incr);
            history.push(s);
            if !s.is_finite() || diverging(&history) {
                return Err(divergence(&history, iterations, m_delta_all));
            }
        }
        for k in 0..n {
            dens.w1[k + 1] = total[k];
            dens.w2[k + 1] = total[n + k];
        }
        dens.close();
        Ok((
            Solution {
                densities: dens,
                rhs,
                history,
                iterations,
                delta: self.delta,
                m_delta,
                m_delta_all,
            },
            table,
        ))
    }

    /// sum_i (-1)^{i-1} int G_i(s,h(s),tau,h(tau)) V_i dtau - Phi0(s, t) on the mesh.
    pub fn first_kind_residual(&self, dens: &DensityPair, phi: &InitialFunction, t: f64) -> Result<Vec<f64>> {
        dens.nodes[1..]
            .par_iter()
            .map(|&s| {
                let h = self.problem().h(s);
                let u1 = self.pot.layer(1, s, h, t, dens)?;
                let u2 = self.pot.layer(2, s, h, t, dens)?;
                Ok(u1 - u2 - self.rhs_phi0(s, t, phi)?)
            })
            .collect()
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Increments growing over the last five iterations.
fn diverging(h: &[f64]) -> bool {
    let n = h.len();
    n > 12 && h[n - 1] > h[n - 6] && h[n - 6] > h[n - 11]
}

fn divergence(h: &[f64], iterations: usize, m_delta: f64) -> MembraneError {
    let n = h.len();
    let ratio = if n >= 2 && h[n - 2] > 0.0 {
        h[n - 1] / h[n - 2]
    } else {
        f64::NAN
    };
    MembraneError::SeriesDivergence {
        iterations,
        ratio,
        m_delta,
    }
}

/// Mesh used by the solver for (t, s_min).
pub fn solver_mesh(t: f64, s_min: f64, n: usize) -> Vec<f64> {
    graded_mesh(t, s_min, n)
}

/// Closed-form Z0 for constant diffusion, used by tests.
pub fn heat(beta: f64, r: f64, d: f64) -> f64 {
    z0(beta, r, d)
}
