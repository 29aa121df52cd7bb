//! Run configuration: which problem, which initial function, where to look.

use membrane_core::boundary_system::SolverSettings;
use membrane_core::mc_oracle::{Scheme, SimConfig};
use membrane_core::problem::{validate, InitialFunction, InitialKind, InitialSpec, Problem};
use membrane_core::{cases, MembraneError};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Core(MembraneError),
    Io { path: PathBuf, source: std::io::Error },
}

impl From<MembraneError> for CliError {
    fn from(e: MembraneError) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use MembraneError::*;
        match self {
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                SeriesDivergence { .. }
                | ConvergenceFailure { .. }
                | SingularIntegrand { .. }
                | MeshTooCoarse { .. }
                | MeshMismatch { .. }
                | StepTooLarge { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.x_min];
        }
        (0..self.points)
            .map(|k| self.x_min + (self.x_max - self.x_min) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

fn default_k_sigma() -> f64 {
    3.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    /// Starting points; the solve grid when absent.
    pub points: Option<Vec<f64>>,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            paths: None,
            dt: None,
            seed: None,
            scheme: None,
            k_sigma: default_k_sigma(),
            points: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub nodes: Option<usize>,
    pub tol_v: Option<f64>,
    pub k_max: Option<usize>,
}

fn default_precision() -> usize {
    12
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    /// Path (relative to the config file), built-in case name, or inline problem.
    problem: serde_json::Value,
    case: Option<String>,
    phi: Option<InitialSpec>,
    s: Option<OneOrMany>,
    t: Option<f64>,
    grid: Option<GridSpec>,
    suite: Option<String>,
    #[serde(default)]
    mc: McSpec,
    #[serde(default = "default_precision")]
    precision: usize,
    #[serde(default)]
    solver: SolverSpec,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub case: String,
    pub phi: InitialFunction,
    pub s: Vec<f64>,
    pub t: f64,
    pub grid: GridSpec,
    pub suite: Option<String>,
    pub mc: McSpec,
    pub precision: usize,
    pub solver: SolverSpec,
}

fn invalid(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Core(MembraneError::invalid(key, reason))
}

fn prefixed(e: MembraneError) -> MembraneError {
    match e {
        MembraneError::InvalidInput { key, reason } if !key.starts_with("problem") => {
            let key = if key.is_empty() || key == "." { "problem".to_string() } else { format!("problem.{key}") };
            MembraneError::InvalidInput { key, reason }
        }
        other => other,
    }
}

fn load_problem(value: &serde_json::Value, base: &Path) -> CliResult<(Problem, String)> {
    match value {
        serde_json::Value::String(name) => {
            if let Some(p) = cases::by_name(name) {
                return Ok((p, name.clone()));
            }
            let path = base.join(name);
            let text = read(&path)?;
            let problem = Problem::from_json_str(&text)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
            Ok((problem, stem.to_string()))
        }
        serde_json::Value::Object(_) => {
            let problem = Problem::from_json_str(&value.to_string()).map_err(prefixed)?;
            Ok((problem, "problem".to_string()))
        }
        _ => Err(invalid("problem", "expected a path, a case name or an object")),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            invalid(&key, e.into_inner().to_string())
        })?;
        let (problem, default_case) = load_problem(&raw.problem, base)?;
        // hard violations only; soft conditions are reported by `validate`
        validate(&problem, problem.validation.resolution)?;
        let phi = match raw.phi {
            Some(spec) => InitialFunction::from_spec(spec)?,
            None => InitialFunction::from_spec(InitialSpec {
                kind: InitialKind::ConstantOne,
                params: vec![],
            })?,
        };
        let t = raw.t.unwrap_or(problem.horizon);
        let s = match raw.s {
            None => vec![0.0],
            Some(OneOrMany::One(v)) => vec![v],
            Some(OneOrMany::Many(v)) => v,
        };
        if s.is_empty() {
            return Err(invalid("s", "at least one start time is required"));
        }
        if !(t <= problem.horizon) {
            return Err(invalid("t", format!("t = {t} exceeds the horizon {}", problem.horizon)));
        }
        for &si in &s {
            if !(si >= 0.0) {
                return Err(invalid("s", format!("s = {si} is negative")));
            }
            if si > t {
                return Err(MembraneError::TimeOrder { s: si, t }.into());
            }
        }
        let grid = raw.grid.unwrap_or(GridSpec {
            x_min: problem.validation.x_min,
            x_max: problem.validation.x_max,
            points: 41,
        });
        if grid.points == 0 || !(grid.x_min <= grid.x_max) {
            return Err(invalid("grid", "grid must be non-empty with x_min <= x_max"));
        }
        if raw.precision == 0 || raw.precision > 17 {
            return Err(invalid("precision", "significant digits must lie in 1..=17"));
        }
        Ok(RunConfig {
            problem,
            case: raw.case.unwrap_or(default_case),
            phi,
            s,
            t,
            grid,
            suite: raw.suite,
            mc: raw.mc,
            precision: raw.precision,
            solver: raw.solver,
        })
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let mut out = SolverSettings::default();
        if let Some(n) = self.solver.nodes {
            out.nodes = n;
        }
        if let Some(tol) = self.solver.tol_v {
            out.tol_v = tol;
        }
        if let Some(k) = self.solver.k_max {
            out.k_max = k;
        }
        out
    }

    pub fn sim_config(&self) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            paths: self.mc.paths.unwrap_or(d.paths),
            dt: self.mc.dt.unwrap_or(d.dt),
            seed: self.mc.seed.unwrap_or(d.seed),
            scheme: self.mc.scheme.unwrap_or(d.scheme),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_case_and_defaults() {
        let c = RunConfig::parse(r#"{"problem": "skew"}"#, Path::new(".")).unwrap();
        assert_eq!(c.case, "skew");
        assert_eq!(c.s, vec![0.0]);
        assert_eq!(c.t, 1.0);
        assert_eq!(c.precision, 12);
        assert!(c.phi.is_constant_one());
        assert_eq!(c.grid.points().len(), 41);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse(r#"{"problem": "skew", "grid": {"x_min": 0, "x_max": 1, "pts": 3}}"#, Path::new("."))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("grid"), "{err}");
    }

    #[test]
    fn inline_problem_errors_carry_the_prefix() {
        let text = r#"{"problem": {"left": {"drift": {"kind": "constant", "params": [0]},
            "diffusion": {"kind": "constant", "params": ["x"]}}}}"#;
        let err = RunConfig::parse(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("problem.left.diffusion.params"), "{err}");
    }

    #[test]
    fn time_order_is_a_validation_error() {
        let err = RunConfig::parse(r#"{"problem": "skew", "s": [0.5], "t": 0.25}"#, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
