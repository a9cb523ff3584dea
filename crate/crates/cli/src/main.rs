use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlhyp::auditor::{all_passed, audit_json, list_checks, run_all, run_check, AuditBudget};
use nlhyp::energy::{
    ball_energy, ball_energy_for_volume, critical_volume_euclidean, critical_volume_hyperbolic, deficit_scan,
    paper_constants,
};
use nlhyp::geometry::radius_for_volume;
use nlhyp::io::{ball_csv, read_snapshot, scan_csv, trace_csv, write_snapshot};
use nlhyp::optimizer::{minimize, OptimizeOptions};
use nlhyp::{Error, Params, QuadratureSpec, RadialGraph};

#[derive(Parser, Debug)]
#[command(name = "nlhyp", version, about = "Nonlocal isoperimetric energies on hyperbolic space", allow_negative_numbers = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Debug)]
struct Common {
    /// Dimension of the hyperbolic space.
    #[arg(long, global = true, default_value_t = 2)]
    n: usize,
    /// Kernel exponent, 0 < alpha < n.
    #[arg(long, global = true, default_value_t = 1.0)]
    alpha: f64,
    /// Weight of the nonlocal term.
    #[arg(long, global = true, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Gauss nodes per radial panel.
    #[arg(long, global = true)]
    quad_radial: Option<usize>,
    /// Gauss nodes per inner panel.
    #[arg(long, global = true)]
    quad_angular: Option<usize>,
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value file mirroring the flags; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Energy of one geodesic ball.
    #[command(allow_negative_numbers = true)]
    BallEnergy {
        #[arg(long, conflicts_with = "volume", required_unless_present = "volume")]
        radius: Option<f64>,
        #[arg(long)]
        volume: Option<f64>,
    },
    /// Volume where one ball and two far half-volume balls cost the same.
    #[command(allow_negative_numbers = true)]
    CriticalVolume {
        /// Use the Euclidean closed form instead of the hyperbolic scan.
        #[arg(long)]
        euclidean: bool,
    },
    /// Volume-constrained descent over radial graphs.
    #[command(allow_negative_numbers = true)]
    Minimize {
        #[arg(long)]
        volume: f64,
        /// Angles (n = 2) or colatitudes (n = 3).
        #[arg(long)]
        grid: Option<usize>,
        /// Mode k of the initial perturbation (1 + amp cos k theta) r.
        #[arg(long, default_value_t = 3)]
        init_mode: usize,
        #[arg(long, default_value_t = 0.15)]
        init_amp: f64,
        /// Start from a snapshot instead.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Write the final graph snapshot here.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Two-ball deficit on a log grid of volumes.
    #[command(allow_negative_numbers = true)]
    Scan {
        #[arg(long, default_value_t = 0.01)]
        m_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        m_max: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Run inequality checks and emit a JSON report.
    #[command(allow_negative_numbers = true)]
    Audit {
        /// "all", "list", or a comma-separated list of check names.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Monte Carlo samples per volume estimate.
        #[arg(long)]
        samples: Option<usize>,
        /// Random pairs or draws per check.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Explicit constants as JSON.
    #[command(allow_negative_numbers = true)]
    Constants {
        #[arg(long, default_value_t = 1.0)]
        m_bar: f64,
    },
}

/// Appends `--key value` for config entries whose flag is absent from `argv`.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let strs: Vec<String> = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=").map(str::to_string).or_else(|| (a == "--config").then(|| strs.get(i + 1).cloned()).flatten())
    });
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let given = |key: &str| strs.iter().any(|a| a == &format!("--{key}") || a.starts_with(&format!("--{key}=")));
    let mut out = argv;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        let key = k.trim().replace('_', "-");
        if key == "config" || given(&key) {
            continue;
        }
        let v = v.trim();
        out.push(format!("--{key}").into());
        if v != "true" {
            out.push(v.into());
        }
    }
    Ok(out)
}

fn quad_spec(c: &Common) -> QuadratureSpec {
    let mut q = QuadratureSpec { seed: c.seed, ..QuadratureSpec::default() };
    if let Some(v) = c.quad_radial {
        q.radial_order = v;
    }
    if let Some(v) = c.quad_angular {
        q.angular_order = v;
    }
    if let Some(v) = c.mc_samples {
        q.mc_samples = v;
    }
    q
}

enum Failure {
    Numeric(Error),
    Io(String),
    Audit(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

fn initial_graph(n: usize, grid: usize, r: f64, k: usize, amp: f64) -> nlhyp::Result<RadialGraph> {
    match n {
        2 => RadialGraph::circle_from_fourier(grid, r, &[(k, amp, 0.0)]),
        3 => RadialGraph::sphere_from_fn(grid, 2 * grid, nlhyp::graph::DerivMode::Spectral, |t, _| {
            r * (1.0 + amp * (k as f64 * t).cos())
        }),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string())),
    }
}

fn run(cli: &Cli, params: &Params) -> Result<(), Failure> {
    let c = &cli.common;
    let quad = quad_spec(c);
    quad.validate()?;
    match &cli.verb {
        Verb::BallEnergy { radius, volume } => {
            let r = match (radius, volume) {
                (Some(r), _) => *r,
                (None, Some(v)) => radius_for_volume(params.n(), *v)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let e = match volume {
                Some(v) if radius.is_none() => ball_energy_for_volume(params, *v, &quad)?,
                _ => ball_energy(params, r, &quad)?,
            };
            emit(&c.out, &ball_csv(r, &e))
        }
        Verb::CriticalVolume { euclidean } => {
            let text = if *euclidean {
                let e = critical_volume_euclidean(params, &quad)?;
                format!("m_star,rel_tol,nl_unit_ball,nl_stderr\n{:?},{:?},{:?},{:?}\n", e.m_star, e.rel_tol, e.nl_unit_ball.estimate, e.nl_unit_ball.stderr)
            } else {
                let cv = critical_volume_hyperbolic(params, &quad)?;
                format!(
                    "m_star,deficit,deficit_err,bracket_lo,bracket_hi,sign_changes\n{:?},{:?},{:?},{:?},{:?},{}\n",
                    cv.m_star,
                    cv.deficit,
                    cv.deficit_err,
                    cv.bracket.0,
                    cv.bracket.1,
                    cv.sign_changes.len()
                )
            };
            emit(&c.out, &text)
        }
        Verb::Minimize { volume, grid, init_mode, init_amp, resume, snapshot, max_iterations } => {
            let init = match resume {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("cannot read {}: {e}", p.display())))?;
                    read_snapshot(&text)?
                }
                None => {
                    let g = grid.unwrap_or(if params.n() == 2 { 256 } else { 32 });
                    let r = radius_for_volume(params.n(), *volume)?;
                    initial_graph(params.n(), g, r, *init_mode, *init_amp)?
                }
            };
            let opts = OptimizeOptions { max_iterations: *max_iterations, seed: c.seed, ..OptimizeOptions::default() };
            let res = minimize(params, *volume, &init, &opts, &quad)?;
            if let Some(p) = snapshot {
                fs::write(p, write_snapshot(&res.final_graph)).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))?;
            }
            let mut text = trace_csv(&res.trace);
            text.push_str(&format!(
                "# termination={:?} ball_gap={:?} sup_deviation={:?} asymmetry={:?}\n",
                res.termination, res.ball_gap, res.sup_deviation, res.asymmetry
            ));
            emit(&c.out, &text)
        }
        Verb::Scan { m_min, m_max, steps } => {
            let rows = deficit_scan(params, *m_min, *m_max, *steps, &quad)?;
            emit(&c.out, &scan_csv(&rows))
        }
        Verb::Audit { suite, samples, pairs, grid } => {
            if suite == "list" {
                let names: Vec<&str> = list_checks().iter().map(|d| d.name).collect();
                return emit(&c.out, &format!("{}\n", names.join("\n")));
            }
            let mut budget = AuditBudget { seed: c.seed, quad, ..AuditBudget::default() };
            if let Some(s) = samples {
                budget.samples = *s;
            }
            if let Some(p) = pairs {
                budget.pairs = *p;
            }
            if let Some(g) = grid {
                budget.grid = *g;
            }
            let reports = if suite == "all" {
                run_all(params, &budget)?
            } else {
                suite.split(',').map(|name| run_check(name.trim(), params, &budget)).collect::<nlhyp::Result<Vec<_>>>()?
            };
            let mut text = audit_json(params, c.seed, &reports)?;
            text.push('\n');
            emit(&c.out, &text)?;
            if all_passed(&reports) {
                Ok(())
            } else {
                let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
                Err(Failure::Audit(failed.join(",")))
            }
        }
        Verb::Constants { m_bar } => {
            let pc = paper_constants(params, *m_bar)?;
            let mut text = serde_json::to_string_pretty(&pc).map_err(|e| Failure::Io(e.to_string()))?;
            text.push('\n');
            emit(&c.out, &text)
        }
    }
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let params = match Params::with_zero_gamma(cli.common.n, cli.common.alpha, cli.common.gamma) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &params) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numeric(e @ Error::UnknownCheck(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("{}", serde_json::json!({ "error": "io", "message": msg }));
            ExitCode::from(1)
        }
        Err(Failure::Audit(failed)) => {
            eprintln!("{}", serde_json::json!({ "error": "audit-failed", "checks": failed }));
            ExitCode::from(3)
        }
    }
}
