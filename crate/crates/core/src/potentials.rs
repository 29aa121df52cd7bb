//! Poisson and simple-layer potentials of the two fundamental solutions.

use crate::error::{MembraneError, Result};
use crate::parametrix::{FundamentalSolution, ParametrixSettings};
use crate::problem::{InitialFunction, Problem};
use crate::quadrature::{legendre, uniform_stencil, window_breaks, Neumaier, SqrtSplit};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Layer densities V_i(s, t) = (t - s)^{-1/2} W_i(s, t) on the graded mesh
/// s_k = t - (t - s_min) (k / n)^2, k = 0..=n. Index 0 is s = t, where W is
/// only an extrapolated value kept for output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub t: f64,
    pub s_min: f64,
    pub nodes: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl DensityPair {
    pub fn zero(t: f64, s_min: f64, n: usize) -> Self {
        let nodes = graded_mesh(t, s_min, n);
        DensityPair {
            t,
            s_min,
            w1: vec![0.0; n + 1],
            w2: vec![0.0; n + 1],
            nodes,
        }
    }

    /// Densities from a closure W_i(tau), mainly for tests.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(t: f64, s_min: f64, n: usize, w: F) -> Self {
        let mut d = Self::zero(t, s_min, n);
        for k in 0..=n {
            let s = d.nodes[k];
            d.w1[k] = w(1, s);
            d.w2[k] = w(2, s);
        }
        d
    }

    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Spacing of the mesh in sigma = sqrt(t - s).
    pub fn dsig(&self) -> f64 {
        (self.t - self.s_min).sqrt() / self.n() as f64
    }

    pub fn w(&self, i: usize) -> &[f64] {
        if i == 1 {
            &self.w1
        } else {
            &self.w2
        }
    }

    pub fn w_mut(&mut self, i: usize) -> &mut Vec<f64> {
        if i == 1 {
            &mut self.w1
        } else {
            &mut self.w2
        }
    }

    /// First unknown index (1-based) and the Lagrange weights of W at tau.
    pub fn stencil(&self, tau: f64) -> (usize, [f64; 4]) {
        let h = self.dsig();
        let sig = (self.t - tau).max(0.0).sqrt();
        let (i0, w) = uniform_stencil(h, h, self.n(), sig);
        (i0 + 1, w)
    }

    pub fn w_at(&self, i: usize, tau: f64) -> f64 {
        let (k0, c) = self.stencil(tau);
        let w = self.w(i);
        c[0] * w[k0] + c[1] * w[k0 + 1] + c[2] * w[k0 + 2] + c[3] * w[k0 + 3]
    }

    pub fn v_at(&self, i: usize, tau: f64) -> f64 {
        self.w_at(i, tau) / (self.t - tau).sqrt()
    }

    /// Breakpoints of the interpolant in sqrt(t - tau) below `limit`.
    pub fn sigma_breaks(&self, limit: f64) -> Vec<f64> {
        let h = self.dsig();
        (1..=self.n())
            .map(|k| k as f64 * h)
            .take_while(|&v| v < limit)
            .collect()
    }

    /// Refill the extrapolated value at s = t.
    pub fn close(&mut self) {
        for i in [1, 2] {
            let v = self.w_at(i, self.t);
            self.w_mut(i)[0] = v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.w1[1..]
            .iter()
            .chain(&self.w2[1..])
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn covers(&self, s: f64) -> Result<()> {
        if s < self.s_min - 1e-14 * (1.0 + self.s_min.abs()) || s >= self.t {
            return Err(MembraneError::MeshMismatch {
                s,
                s_min: self.s_min,
                t: self.t,
            });
        }
        Ok(())
    }
}

pub fn graded_mesh(t: f64, s_min: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let u = k as f64 / n as f64;
            t - (t - s_min) * u * u
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PotentialSettings {
    pub r_cut: f64,
    /// Gauss–Legendre order of the space panels.
    pub order: usize,
    /// Space panels across the truncated window.
    pub panels: usize,
    pub time: SqrtSplit,
}

impl Default for PotentialSettings {
    fn default() -> Self {
        PotentialSettings {
            r_cut: 8.0,
            order: 16,
            panels: 8,
            time: SqrtSplit {
                order: 8,
                panels: 4,
                grading: 6,
            },
        }
    }
}

/// Both fundamental solutions together with potential quadrature settings.
#[derive(Debug)]
pub struct Potentials {
    problem: Arc<Problem>,
    g: [FundamentalSolution; 2],
    pub settings: PotentialSettings,
    sqrt_b: f64,
    a_max: f64,
}

impl Potentials {
    pub fn new(problem: Arc<Problem>, parametrix: ParametrixSettings, settings: PotentialSettings) -> Self {
        let g = [
            FundamentalSolution::new(problem.clone(), 1, parametrix.clone()),
            FundamentalSolution::new(problem.clone(), 2, parametrix),
        ];
        let bounds = problem.bounds();
        Potentials {
            sqrt_b: bounds.b_max.sqrt(),
            a_max: bounds.a_max,
            problem,
            g,
            settings,
        }
    }

    pub fn with_defaults(problem: Arc<Problem>) -> Self {
        Self::new(problem, ParametrixSettings::default(), PotentialSettings::default())
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn problem_arc(&self) -> Arc<Problem> {
        self.problem.clone()
    }

    pub fn fundamental(&self, i: usize) -> &FundamentalSolution {
        &self.g[i - 1]
    }

    /// D_x^p G_i(s, x, t, y).
    #[inline]
    pub fn g(&self, i: usize, s: f64, x: f64, t: f64, y: f64, p: usize) -> Result<f64> {
        self.g[i - 1].eval_g(s, x, t, y, p)
    }

    pub fn sqrt_b_max(&self) -> f64 {
        self.sqrt_b
    }

    /// Half-width of the space window at lag r.
    pub fn window(&self, r: f64) -> f64 {
        self.settings.r_cut * self.sqrt_b * r.sqrt() + self.a_max * r
    }

    /// D_x^p of the Poisson potential u_i0(s, x, t) = int G_i(s,x,t,y) phi(y) dy.
    pub fn poisson_d(&self, i: usize, s: f64, x: f64, t: f64, phi: &InitialFunction, p: usize) -> Result<f64> {
        if !(s < t) {
            return Err(MembraneError::TimeOrder { s, t });
        }
        let half = self.window(t - s);
        let (lo, hi) = (x - half, x + half);
        let breaks = window_breaks(lo, hi, self.settings.panels, &phi.breakpoints(lo, hi));
        let rule = legendre(self.settings.order);
        let mut acc = Neumaier::default();
        for win in breaks.windows(2) {
            for (y, w) in rule.mapped(win[0], win[1]) {
                acc.add(w * self.g(i, s, x, t, y, p)? * phi.eval(y));
            }
        }
        Ok(acc.total())
    }

    pub fn poisson(&self, i: usize, s: f64, x: f64, t: f64, phi: &InitialFunction) -> Result<f64> {
        self.poisson_d(i, s, x, t, phi, 0)
    }

    /// Time nodes for a layer integral over (s, t) evaluated at x.
    fn layer_nodes(&self, s: f64, x: f64, t: f64, dens: &DensityPair) -> Vec<(f64, f64)> {
        let gap = (x - self.problem.h(s)).abs();
        let scale = (gap > 0.0).then(|| gap / self.sqrt_b);
        let limit = (0.5 * (t - s)).sqrt();
        self.settings
            .time
            .nodes(s, t, scale, &dens.sigma_breaks(limit))
    }

    /// D_x^p of the simple-layer potential u_i1(s, x, t).
    pub fn layer_d(&self, i: usize, s: f64, x: f64, t: f64, dens: &DensityPair, p: usize) -> Result<f64> {
        if !(s < t) {
            return Err(MembraneError::TimeOrder { s, t });
        }
        dens.covers(s)?;
        let w = dens.w(i);
        if w.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let mut acc = Neumaier::default();
        for (tau, wt) in self.layer_nodes(s, x, t, dens) {
            let g = self.g(i, s, x, tau, self.problem.h(tau), p)?;
            acc.add(wt * g * dens.v_at(i, tau));
        }
        Ok(acc.total())
    }

    pub fn layer(&self, i: usize, s: f64, x: f64, t: f64, dens: &DensityPair) -> Result<f64> {
        self.layer_d(i, s, x, t, dens, 0)
    }

    /// int_s^t dG_i/dx(s, h(s), tau, h(tau)) V_i(tau, t) dtau.
    pub fn direct_value(&self, i: usize, s: f64, t: f64, dens: &DensityPair) -> Result<f64> {
        self.layer_d(i, s, self.problem.h(s), t, dens, 1)
    }

    /// Limits of du_i1/dx at x = h(s) from the left and from the right.
    pub fn conormal_jump(&self, i: usize, s: f64, t: f64, dens: &DensityPair) -> Result<(f64, f64)> {
        if !(s < t) {
            return Err(MembraneError::TimeOrder { s, t });
        }
        let direct = self.direct_value(i, s, t, dens)?;
        let jump = dens.v_at(i, s) / self.problem.b(i, s, self.problem.h(s));
        Ok((jump + direct, -jump + direct))
    }
}
