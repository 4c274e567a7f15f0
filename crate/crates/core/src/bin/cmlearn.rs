//! Command-line experiment runner: dataset generation, greedy + constrained
//! fitting, residual/Taylor/convergence/trajectory diagnostics, and full
//! per-example pipelines with pass/fail summaries.

use clap::{Args, Parser, Subcommand};
use cmlearn::analysis::{
    trajectory_compare, write_residual_csv, write_surface_csv, TestGrid,
};
use cmlearn::dynsys::{register_example, SplitSystem, VecF};
use cmlearn::error::Error;
use cmlearn::integrate::{generate_dataset, integrate_full, Dataset, IntegratorConfig};
use cmlearn::kernels::KernelSpec;
use cmlearn::manifold::Approximant;
use cmlearn::pipeline::{fit_greedy, ExperimentKernel};
use cmlearn::report::{
    all_pass, run_example1, run_example2, run_example3, write_summary_csv, write_summary_text,
};
use cmlearn::ManifoldModel;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OUTPUT_DIR_ENV: &str = "CMLEARN_OUTPUT_DIR";

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cmlearn",
    about = "Learn invariant-manifold models of split dynamical systems from simulation data",
    after_help = "\
File schemas (all CSV files carry a header row; floats are written with full\n\
round-trip precision):\n\
  dataset_ex<N>.csv      x (';'-separated coords), y\n\
  greedy_<k>_ex<N>.csv   step,index,power\n\
  model_<k>_ex<N>.txt    plain-text model: kernel line, lambda, centers, coefficients\n\
  residual_<k>_ex<N>.csv input,residual       (input is ';'-separated)\n\
  taylor_<k>_ex<N>.csv   monomial,coefficient (graded-lexicographic order)\n\
  convergence_ex2.csv    N,e_N\n\
  compare_<tag>.csv      t,err_abs,err_rel\n\
  surface_<k>_ex3.csv    x1,x2,value\n\
  summary.{txt,csv}      check,expected,measured,tolerance,pass\n\
\n\
The default output directory is $CMLEARN_OUTPUT_DIR or ./out. A config file\n\
holds flat `key = value` lines under `[section]` headers named after the\n\
subcommands; command-line flags override config values.\n\
\n\
Exit codes: 0 success, 1 summary check failed, 2 usage/config error,\n\
3 numerical failure."
)]
struct Cli {
    /// Directory for output artifacts
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Flat key = value config file with [section] headers per subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct IntegratorArgs {
    /// Final integration time
    #[arg(long)]
    t_final: Option<f64>,
    /// Implicit Euler step size
    #[arg(long)]
    dt: Option<f64>,
    /// Newton residual tolerance
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Newton iteration cap per step
    #[arg(long)]
    newton_max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training dataset of an example system
    Simulate {
        /// Example system id (1, 2, or 3)
        #[arg(long)]
        example: Option<u8>,
        #[command(flatten)]
        integ: IntegratorArgs,
    },
    /// Greedy-select centers and fit a constrained model, writing a model file
    Fit {
        #[arg(long)]
        example: Option<u8>,
        /// Kernel: polyD (degree D, scale 1/2), gaussE (width E), wendland
        #[arg(long)]
        kernel: Option<String>,
        /// Regularization weight
        #[arg(long)]
        lambda: Option<f64>,
        /// Greedy target accuracy on the squared power scale
        #[arg(long)]
        eps_tol: Option<f64>,
        /// Greedy selection cap
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Evaluate the invariance residual of a fitted model on the test grid
    Residual {
        #[arg(long)]
        example: Option<u8>,
        /// Model file written by `fit`
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Export Taylor coefficients of a fitted model in graded-lex order
    Taylor {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Truncation order of the expansion
        #[arg(long)]
        order: Option<u32>,
    },
    /// Error-decay study over greedy prefixes (example 2)
    Convergence,
    /// Compare full and reduced trajectories of example 3 for a fitted model
    Compare {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Initial condition of the full system, comma-separated
        #[arg(long)]
        x0: Option<String>,
    },
    /// Full pipeline of one example with pinned settings and a summary report
    Example {
        /// Example id (1, 2, or 3)
        id: u8,
    },
}

/// Flat config: "section.key" -> value.
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut map = HashMap::new();
        let Some(path) = path else {
            return Ok(Config(map));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "config {}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                ));
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            map.insert(full, value.trim().to_string());
        }
        Ok(Config(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| format!("config key {key}: cannot parse `{v}`")),
        }
    }
}

fn parse_kernel(s: &str) -> Result<KernelSpec, String> {
    let bad = |s: &str| format!("unknown kernel `{s}` (expected polyD, gaussE, or wendland)");
    if s == "wendland" {
        Ok(KernelSpec::Wendland)
    } else if let Some(d) = s.strip_prefix("poly") {
        let degree: u32 = d.parse().map_err(|_| bad(s))?;
        KernelSpec::polynomial(0.5, degree).map_err(|e| e.to_string())
    } else if let Some(e) = s.strip_prefix("gauss") {
        let eps: f64 = e.parse().map_err(|_| bad(s))?;
        KernelSpec::gaussian(eps).map_err(|e| e.to_string())
    } else {
        Err(bad(s))
    }
}

fn integrator_config(args: &IntegratorArgs, cfg: &Config, section: &str) -> Result<IntegratorConfig, String> {
    let mut c = IntegratorConfig::default();
    if let Some(v) = args.t_final.or(cfg.get(&format!("{section}.t_final"))?) {
        c.t_final = v;
    }
    if let Some(v) = args.dt.or(cfg.get(&format!("{section}.dt"))?) {
        c.dt = v;
    }
    if let Some(v) = args.newton_tol.or(cfg.get(&format!("{section}.newton_tol"))?) {
        c.newton_tol = v;
    }
    if let Some(v) = args
        .newton_max_iter
        .or(cfg.get(&format!("{section}.newton_max_iter"))?)
    {
        c.newton_max_iter = v;
    }
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn example_system(id: u8) -> Result<SplitSystem, Error> {
    register_example(id as u32)
}

/// Run `f` writing to `dir/name`; on failure leave a `.partial` marker next
/// to the output so interrupted artifacts are recognizable.
fn write_artifact(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>,
) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    match f(&mut w).and_then(|()| w.flush().map_err(Error::from)) {
        Ok(()) => Ok(path),
        Err(e) => {
            let marker = dir.join(format!("{name}.partial"));
            let _ = std::fs::write(&marker, format!("incomplete artifact: {e}\n"));
            Err(e)
        }
    }
}

fn load_model(path: &Path) -> Result<Approximant, Error> {
    let mut r = BufReader::new(File::open(path)?);
    Approximant::read_text(&mut r)
}

fn write_taylor_csv<W: Write>(
    w: &mut W,
    model: &Approximant,
    order: u32,
) -> Result<(), Error> {
    writeln!(w, "monomial,coefficient")?;
    for (m, c) in model.taylor(order)? {
        let mono: Vec<String> = m.iter().map(|p| p.to_string()).collect();
        writeln!(w, "{},{c}", mono.join(";"))?;
    }
    Ok(())
}

fn write_dataset(dir: &Path, id: u8, ds: &Dataset) -> Result<PathBuf, Error> {
    write_artifact(dir, &format!("dataset_ex{id}.csv"), |w| ds.write_csv(w))
}

fn run(cli: Cli) -> Result<u8, (u8, String)> {
    let cfg = Config::load(cli.config.as_deref()).map_err(|e| (EXIT_USAGE, e))?;
    let usage = |e: String| (EXIT_USAGE, e);
    let numerical = |e: Error| (EXIT_NUMERICAL, e.to_string());

    let out_dir = cli
        .output_dir
        .or_else(|| cfg.0.get("output_dir").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| (EXIT_USAGE, format!("cannot create {}: {e}", out_dir.display())))?;

    match cli.command {
        Command::Simulate { example, integ } => {
            let id = example
                .or(cfg.get("simulate.example").map_err(usage)?)
                .ok_or_else(|| usage("simulate: missing --example".into()))?;
            let sys = example_system(id).map_err(numerical)?;
            let ic = integrator_config(&integ, &cfg, "simulate").map_err(usage)?;
            let ds = generate_dataset(&sys, &ic).map_err(numerical)?;
            let path = write_dataset(&out_dir, id, &ds).map_err(numerical)?;
            println!("wrote {} ({} pairs)", path.display(), ds.x.len());
            Ok(0)
        }
        Command::Fit {
            example,
            kernel,
            lambda,
            eps_tol,
            max_points,
        } => {
            let id = example
                .or(cfg.get("fit.example").map_err(usage)?)
                .ok_or_else(|| usage("fit: missing --example".into()))?;
            let kernel_name = kernel
                .or(cfg.0.get("fit.kernel").cloned())
                .ok_or_else(|| usage("fit: missing --kernel".into()))?;
            let kernel = parse_kernel(&kernel_name).map_err(usage)?;
            let lambda = lambda
                .or(cfg.get("fit.lambda").map_err(usage)?)
                .unwrap_or(1e-10);
            let eps_tol = eps_tol
                .or(cfg.get("fit.eps_tol").map_err(usage)?)
                .unwrap_or(1e-10);
            let max_points = max_points
                .or(cfg.get("fit.max_points").map_err(usage)?)
                .unwrap_or(200);
            let sys = example_system(id).map_err(numerical)?;
            let ds = generate_dataset(&sys, &IntegratorConfig::default()).map_err(numerical)?;
            let setup = ExperimentKernel {
                label: Box::leak(kernel_name.clone().into_boxed_str()),
                kernel,
                lambda,
            };
            let fit = fit_greedy(&ds, &setup, eps_tol, max_points).map_err(numerical)?;
            let model_path = write_artifact(&out_dir, &format!("model_{kernel_name}_ex{id}.txt"), |w| {
                fit.model.write_text(w)
            })
            .map_err(numerical)?;
            write_artifact(&out_dir, &format!("greedy_{kernel_name}_ex{id}.csv"), |w| {
                fit.greedy.write_csv(w)
            })
            .map_err(numerical)?;
            println!(
                "wrote {} ({} centers, train residual {:e})",
                model_path.display(),
                fit.greedy.indices.len(),
                fit.train_residual
            );
            Ok(0)
        }
        Command::Residual { example, model } => {
            let id = example
                .or(cfg.get("residual.example").map_err(usage)?)
                .ok_or_else(|| usage("residual: missing --example".into()))?;
            let model_path = model
                .or(cfg.0.get("residual.model").map(PathBuf::from))
                .ok_or_else(|| usage("residual: missing --model".into()))?;
            let sys = example_system(id).map_err(numerical)?;
            let m = load_model(&model_path).map_err(numerical)?;
            let grid = TestGrid::standard(m.dim_in()).map_err(numerical)?;
            let stem = model_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            let path = write_artifact(&out_dir, &format!("residual_{stem}.csv"), |w| {
                write_residual_csv(w, &sys, &m, &grid)
            })
            .map_err(numerical)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Taylor { model, order } => {
            let model_path = model
                .or(cfg.0.get("taylor.model").map(PathBuf::from))
                .ok_or_else(|| usage("taylor: missing --model".into()))?;
            let order = order.or(cfg.get("taylor.order").map_err(usage)?).unwrap_or(4);
            let m = load_model(&model_path).map_err(numerical)?;
            let stem = model_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            let path = write_artifact(&out_dir, &format!("taylor_{stem}.csv"), |w| {
                write_taylor_csv(w, &m, order)
            })
            .map_err(numerical)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Convergence => {
            let run = run_example2().map_err(numerical)?;
            let path = write_artifact(&out_dir, "convergence_ex2.csv", |w| run.curve.write_csv(w))
                .map_err(numerical)?;
            println!("wrote {} (slope {:.3})", path.display(), run.curve.slope);
            Ok(0)
        }
        Command::Compare { model, x0 } => {
            let model_path = model
                .or(cfg.0.get("compare.model").map(PathBuf::from))
                .ok_or_else(|| usage("compare: missing --model".into()))?;
            let x0_str = x0
                .or(cfg.0.get("compare.x0").cloned())
                .unwrap_or_else(|| "-0.8,-0.8,-0.8".into());
            let x0: Vec<f64> = x0_str
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("compare: cannot parse --x0 `{x0_str}`")))?;
            let m = load_model(&model_path).map_err(numerical)?;
            let sys = example_system(3).map_err(numerical)?;
            if x0.len() != sys.dim() {
                return Err(usage(format!(
                    "compare: x0 has {} coordinates, example 3 needs {}",
                    x0.len(),
                    sys.dim()
                )));
            }
            let tc = trajectory_compare(
                &sys,
                &m,
                &VecF::from_vec(x0),
                &IntegratorConfig::default(),
            )
            .map_err(numerical)?;
            let path = write_artifact(&out_dir, "compare_custom.csv", |w| tc.write_csv(w))
                .map_err(numerical)?;
            println!(
                "wrote {} (plateau {:.3e}, decay rate {:.4})",
                path.display(),
                tc.plateau,
                tc.decay_rate
            );
            Ok(0)
        }
        Command::Example { id } => run_full_example(id, &out_dir).map_err(|e| match e {
            ExampleError::Usage(m) => (EXIT_USAGE, m),
            ExampleError::Numerical(e) => (EXIT_NUMERICAL, e.to_string()),
        }),
    }
}

enum ExampleError {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for ExampleError {
    fn from(e: Error) -> Self {
        ExampleError::Numerical(e)
    }
}

fn run_full_example(id: u8, out_dir: &Path) -> Result<u8, ExampleError> {
    let checks = match id {
        1 => {
            let run = run_example1()?;
            write_dataset(out_dir, 1, &run.dataset)?;
            for fit in &run.fits {
                write_artifact(out_dir, &format!("model_{}_ex1.txt", fit.label), |w| {
                    fit.model.write_text(w)
                })?;
                write_artifact(out_dir, &format!("greedy_{}_ex1.csv", fit.label), |w| {
                    fit.greedy.write_csv(w)
                })?;
                write_artifact(out_dir, &format!("residual_{}_ex1.csv", fit.label), |w| {
                    write_residual_csv(w, &run.sys, &fit.model, &run.grid)
                })?;
                write_artifact(out_dir, &format!("taylor_{}_ex1.csv", fit.label), |w| {
                    write_taylor_csv(w, &fit.model, 4)
                })?;
            }
            run.checks
        }
        2 => {
            let run = run_example2()?;
            write_dataset(out_dir, 2, &run.dataset)?;
            write_artifact(out_dir, "model_wendland_ex2.txt", |w| {
                run.fit.model.write_text(w)
            })?;
            write_artifact(out_dir, "greedy_wendland_ex2.csv", |w| {
                run.fit.greedy.write_csv(w)
            })?;
            write_artifact(out_dir, "convergence_ex2.csv", |w| run.curve.write_csv(w))?;
            write_artifact(out_dir, "residual_wendland_ex2.csv", |w| {
                write_residual_csv(w, &run.sys, &run.fit.model, &run.grid)
            })?;
            run.checks
        }
        3 => {
            let run = run_example3()?;
            write_dataset(out_dir, 3, &run.dataset)?;
            for fit in &run.fits {
                write_artifact(out_dir, &format!("model_{}_ex3.txt", fit.label), |w| {
                    fit.model.write_text(w)
                })?;
                write_artifact(out_dir, &format!("greedy_{}_ex3.csv", fit.label), |w| {
                    fit.greedy.write_csv(w)
                })?;
                write_artifact(out_dir, &format!("residual_{}_ex3.csv", fit.label), |w| {
                    write_residual_csv(w, &run.sys, &fit.model, &run.grid)
                })?;
                let values: Vec<f64> =
                    run.grid.points.iter().map(|p| fit.model.value(p)).collect();
                write_artifact(out_dir, &format!("surface_{}_ex3.csv", fit.label), |w| {
                    write_surface_csv(w, &run.grid, &values)
                })?;
            }
            write_artifact(out_dir, "taylor_poly4_ex3.csv", |w| {
                write_taylor_csv(w, &run.fits[0].model, 4)
            })?;
            for (tag, (x0, tc)) in ["reproduction", "generalization"]
                .iter()
                .zip(&run.comparisons)
            {
                write_artifact(out_dir, &format!("compare_{tag}.csv"), |w| tc.write_csv(w))?;
                // the matching full trajectory, split into center/stable parts
                let full = integrate_full(&run.sys, x0, &IntegratorConfig::default())?;
                write_artifact(out_dir, &format!("trajectory_{tag}.csv"), |w| {
                    full.write_csv_split(w, 2)
                })?;
            }
            run.checks
        }
        other => {
            return Err(ExampleError::Usage(format!(
                "unknown example id {other} (expected 1, 2, or 3)"
            )))
        }
    };

    write_artifact(out_dir, "summary.csv", |w| write_summary_csv(w, &checks))?;
    write_artifact(out_dir, "summary.txt", |w| write_summary_text(w, &checks))?;
    let mut stdout = std::io::stdout();
    write_summary_text(&mut stdout, &checks).map_err(ExampleError::Numerical)?;
    Ok(if all_pass(&checks) { 0 } else { EXIT_CHECK_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("cmlearn: {msg}");
            ExitCode::from(code)
        }
    }
}
