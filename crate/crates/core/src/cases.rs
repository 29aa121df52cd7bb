//! Canonical problem instances used by tests, checks and the CLI.

use crate::problem::{
    Atom, CoefficientField, JumpMeasure, Problem, SideSpec, TimeFunction, ValidationGrid,
    WentzellData,
};

fn build(left: SideSpec, right: SideSpec, h: TimeFunction, q1: f64, q2: f64, atoms: Vec<Atom>) -> Problem {
    Problem {
        left,
        right,
        membrane: h,
        wentzell: WentzellData {
            q1: TimeFunction::constant(q1),
            q2: TimeFunction::constant(q2),
            atoms: JumpMeasure { atoms },
        },
        horizon: 1.0,
        validation: ValidationGrid::default(),
    }
}

/// a = 0, b1 = b2 = 1, q1 = q2 = 1/2, h = 0, no atoms.
pub fn symmetric() -> Problem {
    build(
        SideSpec::constant(0.0, 1.0),
        SideSpec::constant(0.0, 1.0),
        TimeFunction::constant(0.0),
        0.5,
        0.5,
        vec![],
    )
}

/// Skew Brownian motion with alpha = 3/4: q1 = 1/4, q2 = 3/4.
pub fn skew() -> Problem {
    let mut p = symmetric();
    p.wentzell.q1 = TimeFunction::constant(0.25);
    p.wentzell.q2 = TimeFunction::constant(0.75);
    p
}

/// Skew case with membrane h(s) = 0.1 sin(2s).
pub fn moving_skew() -> Problem {
    let mut p = skew();
    p.membrane = TimeFunction::sinusoidal(0.0, 0.1, 2.0, 0.0);
    p
}

/// Moving membrane with symmetric reflection.
pub fn moving_symmetric() -> Problem {
    let mut p = symmetric();
    p.membrane = TimeFunction::sinusoidal(0.0, 0.1, 2.0, 0.0);
    p
}

/// One atom on each side at distance 1 from the moving membrane, weight 1.
pub fn atomic() -> Problem {
    let mut p = moving_skew();
    p.wentzell.atoms.atoms = vec![Atom::relative(-1.0, 1.0), Atom::relative(1.0, 1.0)];
    p
}

/// A single atom at h + 1 with weight 1, h = 0.
pub fn single_atom() -> Problem {
    let mut p = skew();
    p.wentzell.atoms.atoms = vec![Atom::relative(1.0, 1.0)];
    p
}

/// b1 = 1, b2 = 4, a = 0, q1 = q2 = 1/2, h = 0.
pub fn two_diffusions() -> Problem {
    let mut p = symmetric();
    p.right = SideSpec::constant(0.0, 4.0);
    p
}

/// Variable coefficients on both sides.
pub fn variable_b() -> Problem {
    let mut left = SideSpec::constant(0.0, 1.0);
    left.diffusion = CoefficientField::sinusoidal(1.0, 0.25, 0.0, 1.0, 0.0);
    left.diffusion_bounds = Some([0.75, 1.25]);
    let mut right = SideSpec::constant(0.0, 1.0);
    right.diffusion = CoefficientField::sinusoidal(1.0, 0.25, 1.0, 1.0, 0.5);
    right.drift = CoefficientField::sinusoidal(0.0, 0.25, 0.0, 1.0, 0.0);
    right.diffusion_bounds = Some([0.75, 1.25]);
    build(left, right, TimeFunction::constant(0.0), 0.5, 0.5, vec![])
}

pub fn by_name(name: &str) -> Option<Problem> {
    Some(match name {
        "symmetric" => symmetric(),
        "skew" => skew(),
        "moving-skew" => moving_skew(),
        "moving-symmetric" => moving_symmetric(),
        "atomic" => atomic(),
        "single-atom" => single_atom(),
        "two-diffusions" => two_diffusions(),
        "variable-b" => variable_b(),
        _ => return None,
    })
}

pub const NAMES: [&str; 8] = [
    "symmetric",
    "skew",
    "moving-skew",
    "moving-symmetric",
    "atomic",
    "single-atom",
    "two-diffusions",
    "variable-b",
];
