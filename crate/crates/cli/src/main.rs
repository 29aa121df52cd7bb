//! `membrane`: solve, check and cross-validate a diffusion with a membrane.
//!
//! Exit codes: 0 success, 1 failed check, 2 invalid input, 3 solver
//! divergence or unreliable simulation, 4 I/O.

mod config;

use clap::{Parser, Subcommand};
use config::{CliError, CliResult, RunConfig};
use membrane_core::mc_oracle::{compare, simulate};
use membrane_core::problem::{side_of, validate, InitialFunction};
use membrane_core::report::{CheckResult, Report};
use membrane_core::semigroup::SemigroupOperator;
use membrane_core::suites::{self, Suite, SuiteInput};
use membrane_core::{MembraneError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "membrane", version, about = "Feller semigroup of a diffusion with a moving membrane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the problem data against the standing assumptions.
    Validate,
    /// Tabulate u(s, x) = (T_st phi)(x) as CSV.
    Solve {
        /// Also write kernel tables and densities as JSON.
        #[arg(long)]
        dump_kernels: Option<PathBuf>,
    },
    /// Run a named check suite and emit a JSON report.
    Check {
        /// semigroup, conjugation, generator or parametrix.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Compare the solver with a particle simulation.
    CompareMc {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: {e}");
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<u8> {
    let Some(path) = &cli.config else {
        return Err(MembraneError::invalid("--config", "a run configuration is required").into());
    };
    let cfg = RunConfig::load(path)?;
    match &cli.command {
        Command::Validate => cmd_validate(&cfg, cli.out.as_deref()),
        Command::Solve { dump_kernels } => cmd_solve(&cfg, cli.out.as_deref(), dump_kernels.as_deref()),
        Command::Check { suite } => cmd_check(&cfg, suite.as_deref(), cli.out.as_deref()),
        Command::CompareMc { seed, paths } => {
            let mut cfg = cfg;
            if seed.is_some() {
                cfg.mc.seed = *seed;
            }
            if paths.is_some() {
                cfg.mc.paths = *paths;
            }
            cmd_compare_mc(&cfg, cli.out.as_deref())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => config::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(report: &Report, out: Option<&Path>) -> CliResult<u8> {
    emit(out, &report.to_json())?;
    Ok(if report.pass { 0 } else { 1 })
}

fn operator(cfg: &RunConfig) -> SemigroupOperator {
    SemigroupOperator::new(
        Arc::new(cfg.problem.clone()),
        Default::default(),
        Default::default(),
        cfg.solver_settings(),
    )
}

/// Round to `digits` significant digits and print the shortest text that
/// reads back to the rounded value.
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, v).parse().unwrap_or(v);
    if rounded == 0.0 {
        return "0".to_string();
    }
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

fn cmd_validate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<u8> {
    let v = validate(&cfg.problem, cfg.problem.validation.resolution)?;
    let results = v
        .conditions
        .iter()
        .map(|c| CheckResult {
            check: c.condition.clone(),
            case: cfg.case.clone(),
            statistic: c.statistic,
            tolerance: c.threshold,
            pass: c.pass,
            detail: Some(c.detail.clone()),
        })
        .collect();
    let report = Report::new("validate", results);
    emit(out, &report.to_json())?;
    Ok(if report.pass { 0 } else { 2 })
}

fn cmd_solve(cfg: &RunConfig, out: Option<&Path>, dump: Option<&Path>) -> CliResult<u8> {
    let op = operator(cfg);
    let xs = cfg.grid.points();
    let p = cfg.precision;
    let mut csv = String::from("s,x,u,side\n");
    for &s in &cfg.s {
        let u = op.apply(s, cfg.t, &cfg.phi)?.eval_many(&xs)?;
        for (x, v) in xs.iter().zip(&u) {
            let side = side_of(&cfg.problem, s, *x);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                format_sig(s, p),
                format_sig(*x, p),
                format_sig(*v, p),
                side.as_str()
            ));
        }
    }
    if let Some(path) = dump {
        let s_min = cfg.s.iter().cloned().fold(f64::INFINITY, f64::min);
        if s_min < cfg.t {
            let (sol, table) = op.system().solve_with_table(&cfg.phi, cfg.t, s_min)?;
            let doc = serde_json::json!({ "kernels": table, "solution": sol });
            let mut text = serde_json::to_string_pretty(&doc).expect("serialisable");
            text.push('\n');
            config::write(path, &text)?;
        }
    }
    emit(out, &csv)?;
    Ok(0)
}

fn cmd_check(cfg: &RunConfig, suite: Option<&str>, out: Option<&Path>) -> CliResult<u8> {
    let name = suite.or(cfg.suite.as_deref()).unwrap_or("semigroup");
    let suite = Suite::parse(name).ok_or_else(|| MembraneError::invalid("suite", format!("unknown suite `{name}`")))?;
    let op = operator(cfg);
    let mut results = Vec::new();
    for &s in &cfg.s {
        let input = SuiteInput {
            case: &cfg.case,
            s,
            t: cfg.t,
            phi: &cfg.phi,
        };
        results.extend(suites::run(&op, suite, &input)?);
    }
    emit_report(&Report::new(&format!("check {name}"), results), out)
}

fn mc_checks(cfg: &RunConfig, op: &SemigroupOperator, phi: &InitialFunction) -> Result<Vec<CheckResult>> {
    let sim = cfg.sim_config();
    let k = cfg.mc.k_sigma;
    let xs = cfg.mc.points.clone().unwrap_or_else(|| cfg.grid.points());
    let mut out = Vec::new();
    for &s in &cfg.s {
        if !(s < cfg.t) {
            continue;
        }
        let field = op.apply(s, cfg.t, phi)?;
        for &x in &xs {
            let solver = field.eval(x)?;
            let mc = simulate(&cfg.problem, s, x, cfg.t, phi, &sim)?;
            let cmp = compare(solver, mc.mean, mc.stderr, k);
            out.push(cmp.to_check("mc-z", &cfg.case, k).with_detail(format!(
                "s={s} x={x} solver={solver} mc={} stderr={} paths={} dt={} seed={}",
                mc.mean, mc.stderr, mc.paths, sim.dt, sim.seed
            )));
        }
    }
    Ok(out)
}

fn cmd_compare_mc(cfg: &RunConfig, out: Option<&Path>) -> CliResult<u8> {
    let op = operator(cfg);
    let results = mc_checks(cfg, &op, &cfg.phi).map_err(CliError::from)?;
    emit_report(&Report::new("compare-mc", results), out)
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(1.0, 12), "1");
        assert_eq!(format_sig(0.1 + 0.2, 12), "0.3");
        assert_eq!(format_sig(0.1 + 0.2, 17), "0.30000000000000004");
        assert_eq!(format_sig(-1.23456789e-7, 3), "-1.23e-7");
        assert_eq!(format_sig(-0.0, 12), "0");
        assert_eq!(format_sig(2.5e300, 2), "2.5e300");
    }
}
