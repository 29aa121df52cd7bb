//! Problem instances: coefficients, membrane path, Wentzell data, initial
//! functions, validation and side classification.

use crate::error::{MembraneError, Result};
use crate::quadrature::lagrange_weights;
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    Constant,
    AffineInX,
    SinusoidalInSAndX,
    Tabulated,
}

/// A coefficient a(s, x) or b(s, x).
///
/// * `constant`: `[c]`
/// * `affine-in-x`: `[c0, c1]` or `[c0, c1, lo, hi]` (clamped to `[lo, hi]`)
/// * `sinusoidal-in-s-and-x`: `[c0, amp, ws, wx, phase]`,
///   value `c0 + amp sin(ws s + wx x + phase)`
/// * `tabulated`: `[ns, nx, s0, s1, x0, x1, v...]`, bilinear on a uniform
///   grid, values row-major in s, constant extension outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientField {
    pub kind: CoefficientKind,
    pub params: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(c: f64) -> Self {
        CoefficientField {
            kind: CoefficientKind::Constant,
            params: vec![c],
        }
    }

    pub fn sinusoidal(c0: f64, amp: f64, ws: f64, wx: f64, phase: f64) -> Self {
        CoefficientField {
            kind: CoefficientKind::SinusoidalInSAndX,
            params: vec![c0, amp, ws, wx, phase],
        }
    }

    pub fn check(&self, key: &str) -> Result<()> {
        let p = &self.params;
        let ok = match self.kind {
            CoefficientKind::Constant => p.len() == 1,
            CoefficientKind::AffineInX => p.len() == 2 || (p.len() == 4 && p[2] <= p[3]),
            CoefficientKind::SinusoidalInSAndX => p.len() == 5,
            CoefficientKind::Tabulated => {
                p.len() >= 6 && {
                    let ns = p[0] as usize;
                    let nx = p[1] as usize;
                    ns >= 1
                        && nx >= 1
                        && p[0].fract() == 0.0
                        && p[1].fract() == 0.0
                        && p.len() == 6 + ns * nx
                }
            }
        };
        if !ok {
            return Err(MembraneError::invalid(
                format!("{key}.params"),
                format!("wrong parameter list for kind {:?}", self.kind),
            ));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MembraneError::invalid(
                format!("{key}.params"),
                "non-finite parameter",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, s: f64, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            CoefficientKind::Constant => p[0],
            CoefficientKind::AffineInX => {
                let v = p[0] + p[1] * x;
                if p.len() == 4 {
                    v.clamp(p[2], p[3])
                } else {
                    v
                }
            }
            CoefficientKind::SinusoidalInSAndX => p[0] + p[1] * (p[2] * s + p[3] * x + p[4]).sin(),
            CoefficientKind::Tabulated => {
                let ns = p[0] as usize;
                let nx = p[1] as usize;
                let vals = &p[6..];
                let (is, fs) = grid_pos(p[2], p[3], ns, s);
                let (ix, fx) = grid_pos(p[4], p[5], nx, x);
                let at = |a: usize, b: usize| vals[a * nx + b];
                let is1 = (is + 1).min(ns - 1);
                let ix1 = (ix + 1).min(nx - 1);
                let v0 = at(is, ix) * (1.0 - fx) + at(is, ix1) * fx;
                let v1 = at(is1, ix) * (1.0 - fx) + at(is1, ix1) * fx;
                v0 * (1.0 - fs) + v1 * fs
            }
        }
    }

    /// The value if the field does not depend on (s, x).
    pub fn as_constant(&self) -> Option<f64> {
        let p = &self.params;
        match self.kind {
            CoefficientKind::Constant => Some(p[0]),
            CoefficientKind::AffineInX if p[1] == 0.0 => {
                Some(if p.len() == 4 { p[0].clamp(p[2], p[3]) } else { p[0] })
            }
            CoefficientKind::SinusoidalInSAndX if p[1] == 0.0 => Some(p[0]),
            CoefficientKind::SinusoidalInSAndX if p[2] == 0.0 && p[3] == 0.0 => {
                Some(p[0] + p[1] * p[4].sin())
            }
            CoefficientKind::Tabulated => {
                let first = p[6];
                p[6..].iter().all(|&v| v == first).then_some(first)
            }
            _ => None,
        }
    }
}

fn grid_pos(lo: f64, hi: f64, n: usize, x: f64) -> (usize, f64) {
    if n <= 1 || hi <= lo {
        return (0, 0.0);
    }
    let u = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeKind {
    Constant,
    Linear,
    Sinusoidal,
    Tabulated,
}

/// A function of time: membrane path h(s), q_i(s), atom offsets and weights.
///
/// * `constant`: `[c]`
/// * `linear`: `[c0, c1]`, value `c0 + c1 s`
/// * `sinusoidal`: `[c0, amp, omega, phase]`, value `c0 + amp sin(omega s + phase)`
/// * `tabulated`: `[s0, s1, v0, ..., vn]`, piecewise linear on a uniform grid
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeFunction {
    pub kind: TimeKind,
    pub params: Vec<f64>,
}

pub type MembranePath = TimeFunction;

impl TimeFunction {
    pub fn constant(c: f64) -> Self {
        TimeFunction {
            kind: TimeKind::Constant,
            params: vec![c],
        }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        TimeFunction {
            kind: TimeKind::Linear,
            params: vec![c0, c1],
        }
    }

    pub fn sinusoidal(c0: f64, amp: f64, omega: f64, phase: f64) -> Self {
        TimeFunction {
            kind: TimeKind::Sinusoidal,
            params: vec![c0, amp, omega, phase],
        }
    }

    pub fn check(&self, key: &str) -> Result<()> {
        let p = &self.params;
        let ok = match self.kind {
            TimeKind::Constant => p.len() == 1,
            TimeKind::Linear => p.len() == 2,
            TimeKind::Sinusoidal => p.len() == 4,
            TimeKind::Tabulated => p.len() >= 4 && p[1] > p[0],
        };
        if !ok {
            return Err(MembraneError::invalid(
                format!("{key}.params"),
                format!("wrong parameter list for kind {:?}", self.kind),
            ));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MembraneError::invalid(
                format!("{key}.params"),
                "non-finite parameter",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            TimeKind::Constant => p[0],
            TimeKind::Linear => p[0] + p[1] * s,
            TimeKind::Sinusoidal => p[0] + p[1] * (p[2] * s + p[3]).sin(),
            TimeKind::Tabulated => {
                let vals = &p[2..];
                let (i, f) = grid_pos(p[0], p[1], vals.len(), s);
                let i1 = (i + 1).min(vals.len() - 1);
                vals[i] * (1.0 - f) + vals[i1] * f
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        let p = &self.params;
        match self.kind {
            TimeKind::Constant => Some(p[0]),
            TimeKind::Linear if p[1] == 0.0 => Some(p[0]),
            TimeKind::Sinusoidal if p[1] == 0.0 => Some(p[0]),
            TimeKind::Sinusoidal if p[2] == 0.0 => Some(p[0] + p[1] * p[3].sin()),
            TimeKind::Tabulated => {
                let first = p[2];
                p[2..].iter().all(|&v| v == first).then_some(first)
            }
            _ => None,
        }
    }
}

fn default_holder() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideSpec {
    pub drift: CoefficientField,
    pub diffusion: CoefficientField,
    #[serde(default = "default_holder")]
    pub holder_exponent: f64,
    /// Declared bounds `[b, B]` on the diffusion coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_bounds: Option<[f64; 2]>,
}

impl SideSpec {
    pub fn constant(a: f64, b: f64) -> Self {
        SideSpec {
            drift: CoefficientField::constant(a),
            diffusion: CoefficientField::constant(b),
            holder_exponent: default_holder(),
            diffusion_bounds: None,
        }
    }
}

fn default_relative() -> bool {
    true
}

/// One atom of the jump measure: position y(s) (absolute, or relative to
/// the membrane) and weight w(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub offset: TimeFunction,
    #[serde(default = "default_relative")]
    pub relative: bool,
    pub weight: TimeFunction,
}

impl Atom {
    pub fn relative(offset: f64, weight: f64) -> Self {
        Atom {
            offset: TimeFunction::constant(offset),
            relative: true,
            weight: TimeFunction::constant(weight),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JumpMeasure {
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WentzellData {
    pub q1: TimeFunction,
    pub q2: TimeFunction,
    #[serde(default)]
    pub atoms: JumpMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationGrid {
    pub resolution: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            resolution: 64,
            x_min: -6.0,
            x_max: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub left: SideSpec,
    pub right: SideSpec,
    pub membrane: MembranePath,
    pub wentzell: WentzellData,
    pub horizon: f64,
    #[serde(default)]
    pub validation: ValidationGrid,
}

/// Position of an atom at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub y: f64,
    pub weight: f64,
    /// 1 if the atom lies left of the membrane, 2 otherwise.
    pub side: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub b_min: f64,
    pub b_max: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Membrane,
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Membrane => "membrane",
            Side::Right => "right",
        }
    }
}

impl Problem {
    pub fn from_json_str(text: &str) -> Result<Problem> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let p: Problem = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            MembraneError::invalid(path, e.into_inner().to_string())
        })?;
        p.check()?;
        Ok(p)
    }

    /// Structural checks on parameter lists.
    pub fn check(&self) -> Result<()> {
        for (name, side) in [("left", &self.left), ("right", &self.right)] {
            side.drift.check(&format!("{name}.drift"))?;
            side.diffusion.check(&format!("{name}.diffusion"))?;
            if !(side.holder_exponent > 0.0 && side.holder_exponent < 1.0) {
                return Err(MembraneError::invalid(
                    format!("{name}.holder_exponent"),
                    "must lie in (0, 1)",
                ));
            }
            if let Some([lo, hi]) = side.diffusion_bounds {
                if !(lo > 0.0 && lo <= hi) {
                    return Err(MembraneError::invalid(
                        format!("{name}.diffusion_bounds"),
                        "need 0 < b <= B",
                    ));
                }
            }
        }
        self.membrane.check("membrane")?;
        self.wentzell.q1.check("wentzell.q1")?;
        self.wentzell.q2.check("wentzell.q2")?;
        for (k, a) in self.wentzell.atoms.atoms.iter().enumerate() {
            a.offset.check(&format!("wentzell.atoms[{k}].offset"))?;
            a.weight.check(&format!("wentzell.atoms[{k}].weight"))?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(MembraneError::invalid("horizon", "must be positive"));
        }
        let v = &self.validation;
        if v.resolution < 2 || !(v.x_min < v.x_max) {
            return Err(MembraneError::invalid(
                "validation",
                "need resolution >= 2 and x_min < x_max",
            ));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn side(&self, i: usize) -> &SideSpec {
        if i == 1 {
            &self.left
        } else {
            &self.right
        }
    }

    #[inline]
    pub fn h(&self, s: f64) -> f64 {
        self.membrane.eval(s)
    }

    #[inline]
    pub fn a(&self, i: usize, s: f64, x: f64) -> f64 {
        self.side(i).drift.eval(s, x)
    }

    #[inline]
    pub fn b(&self, i: usize, s: f64, x: f64) -> f64 {
        self.side(i).diffusion.eval(s, x)
    }

    #[inline]
    pub fn q(&self, i: usize, s: f64) -> f64 {
        if i == 1 {
            self.wentzell.q1.eval(s)
        } else {
            self.wentzell.q2.eval(s)
        }
    }

    pub fn has_measure(&self) -> bool {
        !self.wentzell.atoms.atoms.is_empty()
    }

    pub fn atoms_at(&self, s: f64) -> Vec<AtomState> {
        let h = self.h(s);
        self.wentzell
            .atoms
            .atoms
            .iter()
            .map(|a| {
                let off = a.offset.eval(s);
                let y = if a.relative { h + off } else { off };
                AtomState {
                    y,
                    weight: a.weight.eval(s),
                    side: if y < h { 1 } else { 2 },
                }
            })
            .collect()
    }

    fn time_samples(&self) -> Vec<f64> {
        let n = self.validation.resolution;
        (0..=n)
            .map(|k| self.horizon * k as f64 / n as f64)
            .collect()
    }

    fn x_samples(&self) -> Vec<f64> {
        let v = &self.validation;
        (0..=v.resolution)
            .map(|k| v.x_min + (v.x_max - v.x_min) * k as f64 / v.resolution as f64)
            .collect()
    }

    /// Diffusion bounds (declared when available, sampled otherwise) and
    /// the sampled drift bound.
    pub fn bounds(&self) -> Bounds {
        let mut b_min = f64::INFINITY;
        let mut b_max = 0.0f64;
        let mut a_max = 0.0f64;
        let ts = self.time_samples();
        let xs = self.x_samples();
        for i in 1..=2 {
            let side = self.side(i);
            let (lo, hi) = sampled_range(&side.diffusion, &ts, &xs);
            let (alo, ahi) = sampled_range(&side.drift, &ts, &xs);
            a_max = a_max.max(alo.abs()).max(ahi.abs());
            match side.diffusion_bounds {
                Some([dl, dh]) => {
                    b_min = b_min.min(dl.min(lo));
                    b_max = b_max.max(dh.max(hi));
                }
                None => {
                    b_min = b_min.min(lo);
                    b_max = b_max.max(hi);
                }
            }
        }
        Bounds {
            b_min,
            b_max,
            a_max,
        }
    }

    /// q0 = min_s (q1 + q2) on the validation grid.
    pub fn q0(&self) -> f64 {
        self.time_samples()
            .iter()
            .map(|&s| self.q(1, s) + self.q(2, s))
            .fold(f64::INFINITY, f64::min)
    }

    /// Half the minimal atom distance to the membrane over [0, T]
    /// (infinite without atoms).
    pub fn delta(&self) -> f64 {
        if !self.has_measure() {
            return f64::INFINITY;
        }
        let mut dmin = f64::INFINITY;
        for s in self.time_samples() {
            let h = self.h(s);
            for a in self.atoms_at(s) {
                dmin = dmin.min((a.y - h).abs());
            }
        }
        0.5 * dmin
    }

    /// The smallness witness m(delta) = (B/b)^2 pi/(2 q0) max_s sum |y-h| w
    /// over atoms within delta of the membrane.
    pub fn m_delta(&self, delta: f64) -> f64 {
        let bd = self.bounds();
        let mut best = 0.0f64;
        for s in self.time_samples() {
            let h = self.h(s);
            let sum: f64 = self
                .atoms_at(s)
                .iter()
                .filter(|a| (a.y - h).abs() < delta)
                .map(|a| (a.y - h).abs() * a.weight)
                .fold(0.0, |acc, v| acc + v);
            best = best.max(sum);
        }
        (bd.b_max / bd.b_min).powi(2) * std::f64::consts::PI / (2.0 * self.q0()) * best
    }

    /// Both coefficient pairs are constant and the drifts vanish.
    pub fn side_is_trivial(&self, i: usize) -> bool {
        let s = self.side(i);
        s.diffusion.as_constant().is_some() && s.drift.as_constant() == Some(0.0)
    }

    pub fn side_is_homogeneous(&self, i: usize) -> bool {
        let s = self.side(i);
        s.diffusion.as_constant().is_some() && s.drift.as_constant().is_some()
    }
}

fn sampled_range(f: &CoefficientField, ts: &[f64], xs: &[f64]) -> (f64, f64) {
    if let Some(c) = f.as_constant() {
        return (c, c);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in ts {
        for &x in xs {
            let v = f.eval(s, x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

pub fn default_tol_mem(h: f64) -> f64 {
    1e-12 * (1.0 + h.abs())
}

/// Classify x relative to the membrane at time s.
pub fn side_of(problem: &Problem, s: f64, x: f64) -> Side {
    let h = problem.h(s);
    side_of_tol(h, x, default_tol_mem(h))
}

pub fn side_of_tol(h: f64, x: f64, tol_mem: f64) -> Side {
    if (x - h).abs() <= tol_mem {
        Side::Membrane
    } else if x < h {
        Side::Left
    } else {
        Side::Right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub resolution: usize,
    pub b: f64,
    pub big_b: f64,
    pub a_max: f64,
    pub q0: f64,
    pub membrane_holder_quotient: f64,
    pub coefficient_holder_quotient: f64,
    pub max_atom_moment: f64,
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Sample conditions I–V on a (resolution+1)^2 grid.
pub fn validate(problem: &Problem, grid_resolution: usize) -> Result<ValidationReport> {
    problem.check()?;
    let n = grid_resolution.max(2);
    let t = problem.horizon;
    let v = &problem.validation;
    let ts: Vec<f64> = (0..=n).map(|k| t * k as f64 / n as f64).collect();
    let xs: Vec<f64> = (0..=n)
        .map(|k| v.x_min + (v.x_max - v.x_min) * k as f64 / n as f64)
        .collect();
    let mut conditions = Vec::new();

    // I
    let mut b_lo = f64::INFINITY;
    let mut b_hi = f64::NEG_INFINITY;
    let mut declared_ok = true;
    for (i, name) in [(1usize, "left"), (2, "right")] {
        let side = problem.side(i);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &ts {
            for &x in &xs {
                let bv = side.diffusion.eval(s, x);
                if !(bv > 0.0) {
                    return Err(MembraneError::NonparabolicCoefficient {
                        side: name,
                        s,
                        x,
                        value: bv,
                    });
                }
                let av = side.drift.eval(s, x);
                if !av.is_finite() {
                    return Err(MembraneError::invalid(
                        format!("{name}.drift"),
                        format!("non-finite value at (s={s}, x={x})"),
                    ));
                }
                lo = lo.min(bv);
                hi = hi.max(bv);
            }
        }
        if let Some([dl, dh]) = side.diffusion_bounds {
            if lo < dl || hi > dh {
                declared_ok = false;
            }
            b_lo = b_lo.min(dl);
            b_hi = b_hi.max(dh);
        } else {
            b_lo = b_lo.min(lo);
            b_hi = b_hi.max(hi);
        }
    }
    conditions.push(ConditionCheck {
        condition: "I".into(),
        statistic: b_lo,
        threshold: 0.0,
        pass: declared_ok && b_lo > 0.0,
        detail: format!("sampled diffusion in [{b_lo}, {b_hi}]"),
    });

    // II: sampled Hölder quotients of both coefficients
    let mut coef_q = 0.0f64;
    for i in 1..=2 {
        let side = problem.side(i);
        let alpha = side.holder_exponent;
        for f in [&side.drift, &side.diffusion] {
            if f.as_constant().is_some() {
                continue;
            }
            for w in ts.windows(2) {
                for win in xs.windows(2) {
                    let dx = (f.eval(w[0], win[1]) - f.eval(w[0], win[0])).abs()
                        / (win[1] - win[0]).powf(alpha);
                    let ds = (f.eval(w[1], win[0]) - f.eval(w[0], win[0])).abs()
                        / (w[1] - w[0]).powf(alpha / 2.0);
                    coef_q = coef_q.max(dx).max(ds);
                }
            }
        }
    }
    conditions.push(ConditionCheck {
        condition: "II".into(),
        statistic: coef_q,
        threshold: f64::INFINITY,
        pass: coef_q.is_finite(),
        detail: "sampled Hölder quotients of a_i, b_i".into(),
    });

    // III concerns the initial function; the catalog is bounded and continuous.
    conditions.push(ConditionCheck {
        condition: "III".into(),
        statistic: 0.0,
        threshold: 0.0,
        pass: true,
        detail: "initial functions are bounded and continuous by construction".into(),
    });

    // IV
    let mut q0 = f64::INFINITY;
    let mut q_nonneg = true;
    let mut w_nonneg = true;
    let mut max_moment = 0.0f64;
    for &s in &ts {
        let q1 = problem.q(1, s);
        let q2 = problem.q(2, s);
        if q1 < 0.0 || q2 < 0.0 {
            q_nonneg = false;
        }
        if !(q1 + q2 > 0.0) {
            return Err(MembraneError::DegenerateWentzell { s, sum: q1 + q2 });
        }
        q0 = q0.min(q1 + q2);
        let h = problem.h(s);
        let mut moment = 0.0;
        for (k, a) in problem.atoms_at(s).iter().enumerate() {
            let gap = (a.y - h).abs();
            if gap <= default_tol_mem(h) {
                return Err(MembraneError::AtomOnMembrane { atom: k, s, gap });
            }
            if a.weight < 0.0 {
                w_nonneg = false;
            }
            moment += gap * a.weight;
        }
        max_moment = max_moment.max(moment);
    }
    // atoms must stay on one side
    for (k, atom) in problem.wentzell.atoms.atoms.iter().enumerate() {
        let _ = atom;
        let sides: Vec<usize> = ts.iter().map(|&s| problem.atoms_at(s)[k].side).collect();
        if sides.iter().any(|&sd| sd != sides[0]) {
            let s = ts[sides.iter().position(|&sd| sd != sides[0]).unwrap()];
            return Err(MembraneError::AtomOnMembrane { atom: k, s, gap: 0.0 });
        }
    }
    conditions.push(ConditionCheck {
        condition: "IV".into(),
        statistic: q0,
        threshold: 0.0,
        pass: q_nonneg && w_nonneg && q0 > 0.0,
        detail: format!("q0 = {q0}; max_s sum |y-h| w = {max_moment}"),
    });

    // V
    let alpha = problem.left.holder_exponent.min(problem.right.holder_exponent);
    let expo = (1.0 + alpha) / 2.0;
    let mut hq = 0.0f64;
    for i in 0..ts.len() {
        for j in (i + 1)..ts.len() {
            let q = (problem.h(ts[j]) - problem.h(ts[i])).abs() / (ts[j] - ts[i]).powf(expo);
            hq = hq.max(q);
        }
    }
    conditions.push(ConditionCheck {
        condition: "V".into(),
        statistic: hq,
        threshold: f64::INFINITY,
        pass: hq.is_finite(),
        detail: format!("sampled Hölder-{expo} quotient of h"),
    });

    Ok(ValidationReport {
        resolution: n,
        b: b_lo,
        big_b: b_hi,
        a_max: problem.bounds().a_max,
        q0,
        membrane_holder_quotient: hq,
        coefficient_holder_quotient: coef_q,
        max_atom_moment: max_moment,
        conditions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    ConstantOne,
    GaussianBump,
    IndicatorSmoothed,
    PolynomialClamped,
    Tabulated,
}

/// Initial function phi.
///
/// * `constant-one`: `[]`
/// * `gaussian-bump`: `[amp, center, width]`
/// * `indicator-smoothed`: `[lo, hi, eps]`, value
///   `(tanh((x-lo)/eps) - tanh((x-hi)/eps)) / 2`
/// * `polynomial-clamped`: `[lo, hi, c0, c1, ...]`, `p(clamp(x, lo, hi))`
/// * `tabulated`: `[x0, x1, v0, ..., vn]`, piecewise linear, constant outside
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default)]
    pub params: Vec<f64>,
}

/// Uniform segment with cubic interpolation, used for re-tabulated fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub values: Vec<f64>,
}

impl Segment {
    fn h(&self) -> f64 {
        (self.x1 - self.x0) / (self.values.len() - 1) as f64
    }

    /// Value and first two derivatives of the cubic interpolant.
    fn eval(&self, x: f64) -> [f64; 3] {
        let n = self.values.len();
        let xc = x.clamp(self.x0, self.x1);
        if n < 4 {
            let h = self.h();
            let u = ((xc - self.x0) / h).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n - 2);
            let f = u - i as f64;
            let d = (self.values[i + 1] - self.values[i]) / h;
            return [self.values[i] * (1.0 - f) + self.values[i + 1] * f, d, 0.0];
        }
        let h = self.h();
        let u = (xc - self.x0) / h;
        let i0 = (u.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let v = u - i0 as f64;
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let w = lagrange_weights(&nodes, v);
        let mut out = [0.0; 3];
        for k in 0..4 {
            out[0] += w[k] * self.values[i0 + k];
        }
        // derivatives of the cubic through the four points
        let y = &self.values[i0..i0 + 4];
        let d1 = derivative_weights(&nodes, v, 1);
        let d2 = derivative_weights(&nodes, v, 2);
        for k in 0..4 {
            out[1] += d1[k] * y[k] / h;
            out[2] += d2[k] * y[k] / (h * h);
        }
        if x < self.x0 || x > self.x1 {
            out[1] = 0.0;
            out[2] = 0.0;
        }
        out
    }
}

fn derivative_weights(nodes: &[f64; 4], x: f64, order: usize) -> [f64; 4] {
    let mut w = [0.0; 4];
    for i in 0..4 {
        let denom: f64 = (0..4)
            .filter(|&j| j != i)
            .map(|j| nodes[i] - nodes[j])
            .product();
        let others: Vec<f64> = (0..4).filter(|&j| j != i).map(|j| nodes[j]).collect();
        let (a, b, c) = (others[0], others[1], others[2]);
        let val = match order {
            1 => (x - b) * (x - c) + (x - a) * (x - c) + (x - a) * (x - b),
            _ => 2.0 * ((x - a) + (x - b) + (x - c)),
        };
        w[i] = val / denom;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
enum InitialRepr {
    Spec(InitialSpec),
    /// Cubic segments; left of `split` use `left`, right of it `right`.
    Split {
        split: f64,
        left: Segment,
        right: Segment,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialFunction {
    repr: InitialRepr,
    sup: f64,
    id: u64,
}

impl InitialFunction {
    pub fn from_spec(spec: InitialSpec) -> Result<Self> {
        let p = &spec.params;
        let ok = match spec.kind {
            InitialKind::ConstantOne => p.is_empty(),
            InitialKind::GaussianBump => p.len() == 3 && p[2] > 0.0,
            InitialKind::IndicatorSmoothed => p.len() == 3 && p[2] > 0.0 && p[0] < p[1],
            InitialKind::PolynomialClamped => p.len() >= 3 && p[0] < p[1],
            InitialKind::Tabulated => p.len() >= 4 && p[0] < p[1],
        };
        if !ok || p.iter().any(|v| !v.is_finite()) {
            return Err(MembraneError::invalid(
                "phi.params",
                format!("wrong parameter list for kind {:?}", spec.kind),
            ));
        }
        let sup = match spec.kind {
            InitialKind::ConstantOne => 1.0,
            InitialKind::GaussianBump => p[0].abs(),
            InitialKind::IndicatorSmoothed => {
                let m = 0.5 * (p[0] + p[1]);
                let s = 0.5 * (((m - p[0]) / p[2]).tanh() - ((m - p[1]) / p[2]).tanh());
                s.abs()
            }
            InitialKind::PolynomialClamped => {
                let n = 4096;
                (0..=n)
                    .map(|k| {
                        let x = p[0] + (p[1] - p[0]) * k as f64 / n as f64;
                        poly(&p[2..], x).abs()
                    })
                    .fold(0.0, f64::max)
            }
            InitialKind::Tabulated => p[2..].iter().fold(0.0f64, |m, v| m.max(v.abs())),
        };
        let id = hash_values(spec.kind as u64, &spec.params);
        Ok(InitialFunction {
            repr: InitialRepr::Spec(spec),
            sup,
            id,
        })
    }

    pub fn constant_one() -> Self {
        Self::from_spec(InitialSpec {
            kind: InitialKind::ConstantOne,
            params: vec![],
        })
        .unwrap()
    }

    pub fn gaussian(amp: f64, center: f64, width: f64) -> Self {
        Self::from_spec(InitialSpec {
            kind: InitialKind::GaussianBump,
            params: vec![amp, center, width],
        })
        .unwrap()
    }

    pub fn polynomial_clamped(lo: f64, hi: f64, coeffs: &[f64]) -> Self {
        let mut params = vec![lo, hi];
        params.extend_from_slice(coeffs);
        Self::from_spec(InitialSpec {
            kind: InitialKind::PolynomialClamped,
            params,
        })
        .unwrap()
    }

    pub fn tabulated(x0: f64, x1: f64, values: &[f64]) -> Result<Self> {
        let mut params = vec![x0, x1];
        params.extend_from_slice(values);
        Self::from_spec(InitialSpec {
            kind: InitialKind::Tabulated,
            params,
        })
    }

    /// Piecewise cubic function made of two uniform segments meeting at `split`.
    pub fn split_tabulated(split: f64, left: Segment, right: Segment) -> Self {
        let sup = left
            .values
            .iter()
            .chain(&right.values)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut all = vec![split, left.x0, left.x1, right.x0, right.x1];
        all.extend_from_slice(&left.values);
        all.extend_from_slice(&right.values);
        let id = hash_values(99, &all);
        InitialFunction {
            repr: InitialRepr::Split { split, left, right },
            sup,
            id,
        }
    }

    pub fn spec(&self) -> Option<&InitialSpec> {
        match &self.repr {
            InitialRepr::Spec(s) => Some(s),
            _ => None,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_constant_one(&self) -> bool {
        matches!(&self.repr, InitialRepr::Spec(s) if s.kind == InitialKind::ConstantOne)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_d(x)[0]
    }

    pub fn derivative(&self, x: f64, order: usize) -> f64 {
        self.eval_d(x)[order.min(2)]
    }

    /// Value, first and second derivative (one-sided at kinks).
    pub fn eval_d(&self, x: f64) -> [f64; 3] {
        match &self.repr {
            InitialRepr::Split { split, left, right } => {
                if x < *split {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
            InitialRepr::Spec(spec) => {
                let p = &spec.params;
                match spec.kind {
                    InitialKind::ConstantOne => [1.0, 0.0, 0.0],
                    InitialKind::GaussianBump => {
                        let z = (x - p[1]) / p[2];
                        let g = p[0] * (-0.5 * z * z).exp();
                        [g, -g * z / p[2], g * (z * z - 1.0) / (p[2] * p[2])]
                    }
                    InitialKind::IndicatorSmoothed => {
                        let (lo, hi, e) = (p[0], p[1], p[2]);
                        let t1 = ((x - lo) / e).tanh();
                        let t2 = ((x - hi) / e).tanh();
                        let s1 = 1.0 - t1 * t1;
                        let s2 = 1.0 - t2 * t2;
                        [
                            0.5 * (t1 - t2),
                            0.5 * (s1 - s2) / e,
                            0.5 * (-2.0 * t1 * s1 + 2.0 * t2 * s2) / (e * e),
                        ]
                    }
                    InitialKind::PolynomialClamped => {
                        let (lo, hi) = (p[0], p[1]);
                        let c = &p[2..];
                        if x < lo || x > hi {
                            [poly(c, x.clamp(lo, hi)), 0.0, 0.0]
                        } else {
                            let d1: Vec<f64> =
                                c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v).collect();
                            let d2: Vec<f64> = d1
                                .iter()
                                .enumerate()
                                .skip(1)
                                .map(|(k, v)| k as f64 * v)
                                .collect();
                            [poly(c, x), poly(&d1, x), poly(&d2, x)]
                        }
                    }
                    InitialKind::Tabulated => {
                        let vals = &p[2..];
                        let n = vals.len();
                        let h = (p[1] - p[0]) / (n - 1) as f64;
                        if x <= p[0] {
                            return [vals[0], 0.0, 0.0];
                        }
                        if x >= p[1] {
                            return [vals[n - 1], 0.0, 0.0];
                        }
                        let u = (x - p[0]) / h;
                        let i = (u.floor() as usize).min(n - 2);
                        let f = u - i as f64;
                        [
                            vals[i] * (1.0 - f) + vals[i + 1] * f,
                            (vals[i + 1] - vals[i]) / h,
                            0.0,
                        ]
                    }
                }
            }
        }
    }

    /// Points inside (lo, hi) where the function is not smooth.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match &self.repr {
            InitialRepr::Split { split, left, right } => {
                out.push(*split);
                for seg in [left, right] {
                    out.push(seg.x0);
                    out.push(seg.x1);
                }
            }
            InitialRepr::Spec(spec) => {
                let p = &spec.params;
                match spec.kind {
                    InitialKind::PolynomialClamped => {
                        out.push(p[0]);
                        out.push(p[1]);
                    }
                    InitialKind::Tabulated => {
                        let n = p.len() - 2;
                        for k in 0..n {
                            out.push(p[0] + (p[1] - p[0]) * k as f64 / (n - 1) as f64);
                        }
                    }
                    InitialKind::IndicatorSmoothed => {
                        for edge in [p[0], p[1]] {
                            out.push(edge);
                            for k in [1.0, 4.0, 16.0] {
                                out.push(edge - k * p[2]);
                                out.push(edge + k * p[2]);
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        out.retain(|&x| x > lo && x < hi);
        out.sort_by(f64::total_cmp);
        out
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn hash_values(tag: u64, vals: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    tag.hash(&mut h);
    for v in vals {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use proptest::prelude::*;

    #[test]
    fn symmetric_case_passes_all_conditions() {
        let p = cases::symmetric();
        let r = validate(&p, 32).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.b, 1.0);
        assert_eq!(r.big_b, 1.0);
        assert_eq!(r.q0, 1.0);
    }

    #[test]
    fn sinusoidal_diffusion_within_declared_bounds() {
        let mut p = cases::symmetric();
        p.left.diffusion = CoefficientField::sinusoidal(1.0, 0.5, 0.0, 1.0, 0.0);
        p.left.diffusion_bounds = Some([0.5, 1.5]);
        let r = validate(&p, 64).unwrap();
        assert!(r.all_pass());
        assert!(r.b >= 0.5);
        assert!(r.conditions[0].detail.contains("0.5"));
    }

    #[test]
    fn degenerate_wentzell_is_rejected() {
        let mut p = cases::symmetric();
        p.wentzell.q1 = TimeFunction::constant(0.0);
        p.wentzell.q2 = TimeFunction::constant(0.0);
        assert!(matches!(
            validate(&p, 16),
            Err(MembraneError::DegenerateWentzell { .. })
        ));
    }

    #[test]
    fn nonparabolic_is_rejected() {
        let mut p = cases::symmetric();
        p.right.diffusion = CoefficientField::sinusoidal(0.2, 0.5, 0.0, 1.0, 0.0);
        assert!(matches!(
            validate(&p, 16),
            Err(MembraneError::NonparabolicCoefficient { side: "right", .. })
        ));
    }

    #[test]
    fn atom_on_membrane_is_rejected() {
        let mut p = cases::symmetric();
        p.wentzell.atoms.atoms.push(Atom::relative(0.0, 1.0));
        assert!(matches!(
            validate(&p, 16),
            Err(MembraneError::AtomOnMembrane { .. })
        ));
    }

    #[test]
    fn side_of_examples() {
        let p = cases::symmetric();
        assert_eq!(side_of(&p, 0.0, -1.0), Side::Left);
        assert_eq!(side_of(&p, 0.0, 1e-15), Side::Membrane);
        assert_eq!(side_of_tol(0.0, 1e-15, 1e-12), Side::Membrane);
        let mut m = cases::symmetric();
        m.membrane = TimeFunction::linear(0.0, 1.0);
        assert_eq!(side_of(&m, 0.5, 0.5), Side::Membrane);
    }

    #[test]
    fn malformed_json_names_the_key() {
        let mut v: serde_json::Value =
            serde_json::from_str(&cases::symmetric().to_json_string()).unwrap();
        v["left"]["diffusion"]["kind"] = serde_json::json!("cubic");
        let err = Problem::from_json_str(&v.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("left.diffusion.kind"), "{msg}");
        let mut v: serde_json::Value =
            serde_json::from_str(&cases::symmetric().to_json_string()).unwrap();
        v["right"]["drift"]["params"] = serde_json::json!([1.0, 2.0, 3.0]);
        let msg = Problem::from_json_str(&v.to_string()).unwrap_err().to_string();
        assert!(msg.contains("right.drift.params"), "{msg}");
    }

    #[test]
    fn json_round_trip() {
        for p in [cases::skew(), cases::atomic(), cases::variable_b()] {
            let q = Problem::from_json_str(&p.to_json_string()).unwrap();
            assert_eq!(p, q);
        }
    }

    #[test]
    fn initial_function_derivatives() {
        let f = InitialFunction::from_spec(InitialSpec {
            kind: InitialKind::IndicatorSmoothed,
            params: vec![-1.0, 1.0, 0.3],
        })
        .unwrap();
        for &x in &[-1.2, -0.4, 0.0, 0.9] {
            let e = 1e-5;
            let d = f.eval_d(x);
            let fd1 = (f.eval(x + e) - f.eval(x - e)) / (2.0 * e);
            let fd2 = (f.eval(x + e) - 2.0 * f.eval(x) + f.eval(x - e)) / (e * e);
            assert!((d[1] - fd1).abs() < 1e-6);
            assert!((d[2] - fd2).abs() < 1e-3);
        }
        assert!(f.sup_norm() <= 1.0);
    }

    #[test]
    fn split_segments_are_cubic_exact() {
        let g = |x: f64| 0.5 * x * x * x - x + 2.0;
        let seg = |a: f64, b: f64| Segment {
            x0: a,
            x1: b,
            values: (0..=20).map(|k| g(a + (b - a) * k as f64 / 20.0)).collect(),
        };
        let f = InitialFunction::split_tabulated(0.0, seg(-2.0, 0.0), seg(0.0, 2.0));
        for &x in &[-1.77, -0.01, 0.3, 1.99] {
            let d = f.eval_d(x);
            assert!((d[0] - g(x)).abs() < 1e-12);
            assert!((d[1] - (1.5 * x * x - 1.0)).abs() < 1e-10);
            assert!((d[2] - 3.0 * x).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn side_of_partitions_the_line(h in -3.0f64..3.0, x in -5.0f64..5.0, tol in 1e-14f64..1e-3) {
            let label = side_of_tol(h, x, tol);
            let expected = if (x - h).abs() <= tol { Side::Membrane }
                else if x < h { Side::Left } else { Side::Right };
            prop_assert_eq!(label, expected);
            // membrane interval has width <= 2 tol
            if label == Side::Membrane {
                prop_assert!((x - h).abs() <= tol);
            }
        }

        #[test]
        fn validate_is_idempotent(amp in 0.0f64..0.5, wx in 0.0f64..3.0, res in 4usize..24) {
            let mut p = cases::symmetric();
            p.left.diffusion = CoefficientField::sinusoidal(1.0, amp, 0.3, wx, 0.1);
            let r1 = validate(&p, res).unwrap();
            let r2 = validate(&p, res).unwrap();
            prop_assert_eq!(r1, r2);
        }
    }
}
