//! Quadrature rules, interpolation stencils and compensated summation.

use gauss_quad::{GaussJacobi, GaussLegendre};
use parking_lot::Mutex;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights affinely mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mut acc = Neumaier::default();
        for (x, w) in self.mapped(a, b) {
            acc.add(w * f(x));
        }
        acc.total()
    }

    /// Composite rule over consecutive breakpoints.
    pub fn composite<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        let mut acc = Neumaier::default();
        for win in breaks.windows(2) {
            if win[1] > win[0] {
                for (x, w) in self.mapped(win[0], win[1]) {
                    acc.add(w * f(x));
                }
            }
        }
        acc.total()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum RuleKey {
    Legendre(usize),
    Jacobi(usize, u64, u64),
}

fn cache() -> &'static Mutex<HashMap<RuleKey, Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre rule with `n` nodes (n >= 2).
pub fn legendre(n: usize) -> Arc<Rule> {
    let n = n.max(2);
    let key = RuleKey::Legendre(n);
    if let Some(r) = cache().lock().get(&key) {
        return r.clone();
    }
    let gl = GaussLegendre::new(n).expect("degree >= 2");
    let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rule = Arc::new(Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    });
    cache().lock().insert(key, rule.clone());
    rule
}

/// Gauss–Jacobi rule for the weight (1-x)^alpha (1+x)^beta on [-1, 1].
pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Arc<Rule> {
    let n = n.max(2);
    let key = RuleKey::Jacobi(n, alpha.to_bits(), beta.to_bits());
    if let Some(r) = cache().lock().get(&key) {
        return r.clone();
    }
    let gj = GaussJacobi::new(n, alpha, beta).expect("valid Jacobi parameters");
    let mut pairs: Vec<(f64, f64)> = gj.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rule = Arc::new(Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    });
    cache().lock().insert(key, rule.clone());
    rule
}

/// Neumaier compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Neumaier::default();
    for x in it {
        acc.add(x);
    }
    acc.total()
}

/// Lagrange weights of the stencil `xs` at `x`.
pub fn lagrange_weights<const N: usize>(xs: &[f64; N], x: f64) -> [f64; N] {
    let mut w = [1.0; N];
    for i in 0..N {
        for j in 0..N {
            if i != j {
                w[i] *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
    }
    w
}

/// Four-point stencil on the uniform grid x_k = x0 + k h, k = 0..n-1.
/// Returns the first index and the weights; extrapolates outside the grid.
pub fn uniform_stencil(x0: f64, h: f64, n: usize, x: f64) -> (usize, [f64; 4]) {
    debug_assert!(n >= 4);
    let u = (x - x0) / h;
    let i0 = (u.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let v = u - i0 as f64;
    (i0, lagrange_weights(&[0.0, 1.0, 2.0, 3.0], v))
}

/// Interpolate `ys` (uniform grid) at `x` with a four-point stencil.
pub fn interp_uniform(x0: f64, h: f64, ys: &[f64], x: f64) -> f64 {
    let (i0, w) = uniform_stencil(x0, h, ys.len(), x);
    w[0] * ys[i0] + w[1] * ys[i0 + 1] + w[2] * ys[i0 + 2] + w[3] * ys[i0 + 3]
}

/// Product rule for integrals over (a, b) whose integrand may blow up like
/// an inverse square root at either end. The interval is split at the
/// midpoint; the left half is integrated in v = sqrt(tau - a), the right half
/// in w = sqrt(b - tau), both with composite Gauss–Legendre panels.
#[derive(Debug, Clone)]
pub struct SqrtSplit {
    pub order: usize,
    pub panels: usize,
    /// Geometric grading levels towards both endpoints.
    pub grading: usize,
}

impl Default for SqrtSplit {
    fn default() -> Self {
        SqrtSplit {
            order: 8,
            panels: 4,
            grading: 4,
        }
    }
}

impl SqrtSplit {
    /// Nodes and weights (Jacobians included) for the plain integral of
    /// f over (a, b). `left_scale` adds breakpoints around a feature at
    /// v ~ left_scale; `right_breaks` are extra breakpoints in w.
    pub fn nodes(
        &self,
        a: f64,
        b: f64,
        left_scale: Option<f64>,
        right_breaks: &[f64],
    ) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if b <= a {
            return out;
        }
        let rule = legendre(self.order);
        let half = (0.5 * (b - a)).sqrt();
        let mut lb = self.base_breaks(half);
        if let Some(eps) = left_scale {
            for f in [0.125, 0.25, 0.5, 1.0, 2.0, 4.0] {
                let v = f * eps;
                if v > 0.0 && v < half {
                    lb.push(v);
                }
            }
        }
        finish(&mut lb);
        for win in lb.windows(2) {
            for (v, w) in rule.mapped(win[0], win[1]) {
                out.push((a + v * v, 2.0 * v * w));
            }
        }
        let mut rb = self.base_breaks(half);
        rb.extend(right_breaks.iter().copied().filter(|&w| w > 0.0 && w < half));
        finish(&mut rb);
        for win in rb.windows(2) {
            for (v, w) in rule.mapped(win[0], win[1]) {
                out.push((b - v * v, 2.0 * v * w));
            }
        }
        // nodes that round onto an endpoint carry negligible weight
        out.retain(|&(x, _)| x > a && x < b);
        out
    }

    fn base_breaks(&self, half: f64) -> Vec<f64> {
        let mut br: Vec<f64> = (0..=self.panels)
            .map(|k| half * k as f64 / self.panels as f64)
            .collect();
        let first = half / self.panels as f64;
        for g in 1..=self.grading {
            br.push(first * 0.5f64.powi(g as i32));
        }
        br
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mut acc = Neumaier::default();
        for (x, w) in self.nodes(a, b, None, &[]) {
            acc.add(w * f(x));
        }
        acc.total()
    }
}

fn finish(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
}

/// Breakpoints for a Gaussian-dominated integral over [c - half, c + half]
/// refined near `extra` points (kinks of the integrand) that fall inside.
pub fn window_breaks(lo: f64, hi: f64, panels: usize, extra: &[f64]) -> Vec<f64> {
    let mut br: Vec<f64> = (0..=panels)
        .map(|k| lo + (hi - lo) * k as f64 / panels as f64)
        .collect();
    br.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    finish(&mut br);
    br
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = legendre(6);
        let v = r.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-9);
    }

    #[test]
    fn jacobi_chebyshev_weight() {
        // int_{-1}^1 (1-x^2)^{-1/2} dx = pi
        let r = jacobi(10, -0.5, -0.5);
        let v: f64 = r.weights.iter().sum();
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn sqrt_split_beta_integral() {
        // int_0^1 x^{-1/2} (1-x)^{-1/2} dx = pi
        let q = SqrtSplit::default();
        let v = q.integrate(0.0, 1.0, |x| 1.0 / (x * (1.0 - x)).sqrt());
        assert!((v - PI).abs() < 1e-12, "{v}");
        // int_0^1 x^{-1/2}(1-x) dx = 4/3
        let v = q.integrate(0.0, 1.0, |x| (1.0 - x) / x.sqrt());
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_split_weak_power() {
        // int_0^1 x^{-0.7} dx = 10/3
        let q = SqrtSplit {
            grading: 12,
            ..SqrtSplit::default()
        };
        let v = q.integrate(0.0, 1.0, |x| x.powf(-0.7));
        assert!((v - 10.0 / 3.0).abs() < 2e-3, "{v}");
    }

    #[test]
    fn lagrange_is_exact_on_cubics() {
        let ys: Vec<f64> = (0..10).map(|k| {
            let x = 0.3 * k as f64;
            x * x * x - 2.0 * x + 1.0
        }).collect();
        for &x in &[0.05, 1.1, 2.6, 2.95, 3.2] {
            let v = interp_uniform(0.0, 0.3, &ys, x);
            assert!((v - (x * x * x - 2.0 * x + 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let v = neumaier_sum([1e16, 1.0, -1e16]);
        assert_eq!(v, 1.0);
    }
}
