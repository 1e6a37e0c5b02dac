//! Command-line front end: runs scenario files, experiment suites and the
//! closed-form oracles.
//!
//! Exit status is 0 when every solve converged (or every suite check
//! passed), 2 when the work completed but did not converge or a check
//! failed, and 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use borninfeld::exact::{radial_value, Counterexample, CounterexampleParams, RadialParams};
use borninfeld::scenario::{run_scenario, summary_text, RunOptions, Scenario};
use borninfeld::suites::{run_suite, SUITES};

#[derive(Parser)]
#[command(name = "borninfeld", version, about = "Born-Infeld minimizers on structured grids")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Use deterministic reductions so repeated runs give identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Number of scenarios run in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Proceed when the boundary data are not strictly admissible.
    #[arg(long, global = true)]
    allow_marginal: bool,
    /// Output root; defaults to $BORNINFELD_OUTPUT_ROOT, then ./runs.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files (or built-in scenarios by name: zero, radial-2d).
    Solve {
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
    /// Run a named experiment suite.
    Suite {
        /// nolight, quanticharges or counterexample-integrability.
        name: String,
    },
    /// Print closed-form solutions.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Radial solution on the ball of radius T for a central charge.
    Radial {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long = "t-radius", default_value_t = 1.0)]
        t_radius: f64,
        /// Constant mean curvature term H.
        #[arg(long, default_value_t = 0.0)]
        curvature: f64,
        /// Number of radii in the table, from 0 to T.
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// The compactly supported field with a light segment.
    Counterexample {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        ell: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Integrability exponents to probe.
        #[arg(long = "q", default_values_t = [2.4, 4.5])]
        q: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Samples in the feasibility scan.
        #[arg(long, default_value_t = 200_000)]
        scan: usize,
        /// Evaluate the field at a point, given as comma-separated coordinates.
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<f64>>,
        /// Directory for one probe CSV per exponent.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    ExitCode::from(code)
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        output_root: c.output_dir.clone(),
        deterministic: c.deterministic,
        allow_marginal: c.allow_marginal,
    }
}

fn run(cli: Cli) -> Result<u8, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Solve { scenarios } => Ok(solve(&scenarios, &cli.common)),
        Command::Suite { name } => suite(&name, &cli.common),
        Command::Oracle(o) => oracle(o),
    }
}

fn solve(args: &[String], common: &Common) -> u8 {
    let opts = options(common);
    let jobs = common.jobs.clamp(1, args.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, String>>>> = Mutex::new(vec![None; args.len()]);
    let codes: Mutex<Vec<u8>> = Mutex::new(vec![1; args.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= args.len() {
                    break;
                }
                let outcome = Scenario::resolve(&args[i]).and_then(|sc| run_scenario(&sc, &opts));
                let (code, text) = match outcome {
                    Ok(o) => {
                        let text = format!(
                            "{}\nartifacts in {}\n",
                            summary_text(&o.report),
                            o.output_dir.display()
                        );
                        (o.exit_code() as u8, Ok(text))
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        (1, Err(if msg.contains(&args[i]) { msg } else { format!("{}: {msg}", args[i]) }))
                    }
                };
                codes.lock().unwrap()[i] = code;
                results.lock().unwrap()[i] = Some(text);
            });
        }
    });
    for r in results.into_inner().unwrap().into_iter().flatten() {
        match r {
            Ok(text) => print!("{text}"),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    let codes = codes.into_inner().unwrap();
    if codes.contains(&1) {
        1
    } else {
        codes.into_iter().max().unwrap_or(0)
    }
}

fn suite(name: &str, common: &Common) -> Result<u8, Box<dyn std::error::Error>> {
    if !SUITES.contains(&name) {
        return Err(format!("unknown suite '{name}'; known suites: {}", SUITES.join(", ")).into());
    }
    let report = run_suite(name, common.deterministic)?;
    for c in &report.checks {
        println!("{:4}  {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "suite {name}: {} in {:.1} s",
        if report.pass { "PASS" } else { "FAIL" },
        report.wall_time_s
    );
    let dir = options(common).root().join("suites");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!("report written to {}", path.display());
    Ok(if report.pass { 0 } else { 2 })
}

fn oracle(o: Oracle) -> Result<u8, Box<dyn std::error::Error>> {
    match o {
        Oracle::Radial {
            dim,
            b,
            t_radius,
            curvature,
            points,
        } => {
            let p = RadialParams::new(dim, t_radius, b, curvature)?;
            println!("# radial solution, m = {dim}, b = {b}, T = {t_radius}, H = {curvature}");
            println!("{:>12} {:>16} {:>16}", "r", "u(r)", "u'(r)");
            let n = points.max(2);
            for i in 0..n {
                let r = t_radius * i as f64 / (n - 1) as f64;
                println!("{r:>12.6} {:>16.10} {:>16.10}", radial_value(&p, r), p.slope(r));
            }
            Ok(0)
        }
        Oracle::Counterexample {
            dim,
            ell,
            kappa,
            eps,
            q,
            levels,
            scan,
            at,
            csv_dir,
        } => {
            let params = CounterexampleParams::new(dim, ell, kappa, eps)?;
            let f = Counterexample::new(params)?;
            println!(
                "# light-segment field, m = {dim}, l = {ell}, kappa = {kappa}, eps = {eps}; critical exponent {}",
                f.params().critical_exponent()
            );
            let s = f.feasibility_scan(scan)?;
            println!(
                "feasibility: {} samples, max |DU|^2 off the light set {:.8}, min gap {:.3e}",
                s.samples, s.max_gradient_sq, s.min_gap
            );
            if let Some(x) = at {
                if x.len() != dim {
                    return Err(format!("--at needs {dim} coordinates").into());
                }
                let qn = f.quantities(&x)?;
                let g: f64 = f.gradient(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
                println!("at {x:?}: U = {:.10}, |DU| = {g:.10}", f.value(&x));
                println!("  W = {:.6e}, rho = {:.6e}, |II| = {:.6e}", qn.w, qn.rho, qn.sff);
            }
            if let Some(d) = &csv_dir {
                std::fs::create_dir_all(d)?;
            }
            for qv in q {
                let rep = f.integrability_probe(qv, levels)?;
                println!("probe q = {qv}");
                println!("{:>6} {:>14} {:>18} {:>18} {:>10}", "level", "inner_radius", "int |rho|^q", "int |II|^q", "ratio");
                let mut prev: Option<f64> = None;
                for l in &rep.levels {
                    let ratio = prev.map_or(String::from("-"), |p| format!("{:.4}", l.rho / p));
                    println!("{:>6} {:>14.6e} {:>18.10e} {:>18.10e} {:>10}", l.level, l.inner_radius, l.rho, l.sff, ratio);
                    prev = Some(l.rho);
                }
                if let Some(d) = &csv_dir {
                    std::fs::write(d.join(format!("probe_q{qv}.csv")), rep.to_csv())?;
                }
            }
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
