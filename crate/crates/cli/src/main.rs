use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spn_core::inference::{evaluate, evaluate_partition, log_probability};
use spn_core::io::{
    curve_csv, generate_random_spn, load_dataset, load_spn, load_weights, parse_query, parse_spn, serialize_spn,
    summary_csv, GeneratorConfig,
};
use spn_core::learn::{self, initial_weights, normalize_locally};
use spn_core::mixture::cardinality;
use spn_core::{Algorithm, Assignment, LearnError, LearnerConfig, SpnGraph, WeightVector};

/// Sum-product networks over binary variables.
#[derive(Parser)]
#[command(name = "spn", version)]
struct Cli {
    /// Worker threads for per-instance passes. Results do not depend on it.
    #[arg(long, global = true, env = "SPN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check completeness and decomposability of a model file.
    Validate { model: PathBuf },
    /// Print log Pr for each data row, or for one `--query` such as "1,0,*".
    Eval {
        model: PathBuf,
        #[arg(required_unless_present = "query")]
        data: Option<PathBuf>,
        #[arg(long, conflicts_with = "data")]
        query: Option<String>,
    },
    /// Number of induced trees.
    Cardinality { model: PathBuf },
    /// Rescale weights so every sum node sums to one without changing Pr.
    Normalize {
        model: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Random layered model with seeded, locally normalized weights.
    Gen {
        #[arg(long)]
        vars: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        sum_fanout: usize,
        #[arg(long, default_value_t = 2)]
        prod_fanout: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit weights with one algorithm.
    Train {
        model: PathBuf,
        data: PathBuf,
        #[arg(long, default_value = "cccp")]
        algo: Algorithm,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out_curve: Option<PathBuf>,
        #[arg(long)]
        out_model: Option<PathBuf>,
        /// Start from these weights instead of seeded random ones.
        #[arg(long)]
        init_weights: Option<PathBuf>,
    },
    /// Run PGD, EG, SMA and CCCP from the same initial weights.
    Compare {
        model: PathBuf,
        data: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Stop once the mean log-likelihood moves by less than this.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Initial line-search step.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 0.8)]
    shrink: f64,
    /// PGD lower bound on every weight.
    #[arg(long, default_value_t = 0.01)]
    margin: f64,
    /// CCCP additive smoothing.
    #[arg(long, default_value_t = 1e-3)]
    smooth: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill the wall_ms columns. Off by default so outputs are reproducible.
    #[arg(long)]
    timing: bool,
}

impl TrainOpts {
    fn config(&self, algorithm: Algorithm) -> LearnerConfig {
        LearnerConfig {
            algorithm,
            max_iters: self.max_iters,
            stop_tol: self.tol,
            init_step: self.step,
            shrink: self.shrink,
            proj_margin: self.margin,
            smoothing: self.smooth,
            seed: self.seed,
        }
    }
}

/// `-` reads the model from standard input.
fn read_model(path: &Path) -> Result<(SpnGraph, WeightVector)> {
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).context("reading model from stdin")?;
        return parse_spn(&text).context("<stdin>");
    }
    Ok(load_spn(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { model } => {
            let (g, _) = read_model(&model)?;
            println!("OK: {} variables, {} nodes, {} sum edges", g.num_vars(), g.num_nodes(), g.num_edges());
        }
        Command::Eval { model, data, query } => {
            let (g, w) = read_model(&model)?;
            if let Some(q) = query {
                let x = parse_query(&q, g.num_vars())?;
                println!("{}", log_probability(&g, &w, &x)?);
            } else if let Some(path) = data {
                let data = load_dataset(&path)?;
                if data.num_vars() != g.num_vars() {
                    bail!(
                        "{}: data has {} columns, model has {} variables",
                        path.display(),
                        data.num_vars(),
                        g.num_vars()
                    );
                }
                let log_z = evaluate_partition(&g, &w)?;
                let mut x = Assignment::marginal(g.num_vars());
                for row in data.rows() {
                    x.fill_from_bits(row);
                    let trace = evaluate(&g, &w, &x)?;
                    println!("{}", trace.log_value(g.root()) - log_z);
                }
            }
        }
        Command::Cardinality { model } => {
            let (g, _) = read_model(&model)?;
            println!("{}", cardinality(&g).display(64));
        }
        Command::Normalize { model, out } => {
            let (g, w) = read_model(&model)?;
            let text = serialize_spn(&g, &normalize_locally(&g, &w)?);
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Gen { vars, depth, sum_fanout, prod_fanout, seed } => {
            if vars == 0 || sum_fanout == 0 || prod_fanout == 0 {
                bail!("--vars, --sum-fanout and --prod-fanout must be at least 1");
            }
            let g = generate_random_spn(GeneratorConfig { num_vars: vars, depth, sum_fanout, prod_fanout, seed });
            let w = normalize_locally(&g, &initial_weights(&g, seed))?;
            print!("{}", serialize_spn(&g, &w));
        }
        Command::Train { model, data, algo, opts, out_curve, out_model, init_weights } => {
            let (g, _) = read_model(&model)?;
            let data = load_dataset(&data)?;
            let config = opts.config(algo);
            let run = match init_weights {
                Some(path) => {
                    let init = load_weights(&path, &g).with_context(|| path.display().to_string())?;
                    learn::train_from(&g, &data, &config, init)?
                }
                None => learn::train(&g, &data, &config)?,
            };
            if let Some(path) = out_curve {
                write_text(&path, &curve_csv(&run, opts.timing))?;
            }
            if let Some(path) = out_model {
                write_text(&path, &serialize_spn(&g, &run.final_w))?;
            }
            println!("final_ll {}", run.final_ll());
            println!("iterations {}", run.iters_used);
            println!("stop_reason {}", run.stop_reason);
        }
        Command::Compare { model, data, opts, out_dir } => {
            let (g, _) = read_model(&model)?;
            let data = load_dataset(&data)?;
            let runs = learn::compare(&g, &data, &opts.config(Algorithm::Cccp))?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            for run in &runs {
                write_text(&out_dir.join(format!("{}.csv", run.algorithm.name())), &curve_csv(run, opts.timing))?;
            }
            write_text(&out_dir.join("summary.csv"), &summary_csv(&runs, opts.timing))?;
            println!("{:<6} {:>14} {:>6}  stop", "algo", "final_ll", "iters");
            for run in &runs {
                println!(
                    "{:<6} {:>14.6} {:>6}  {}",
                    run.algorithm.name(),
                    run.final_ll(),
                    run.iters_used,
                    run.stop_reason
                );
                eprintln!("{}: {:.1} ms", run.algorithm.name(), run.wall_time * 1e3);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<LearnError>() {
        Some(LearnError::ZeroProbabilityInstance { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for numerical aborts.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(e.into()),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
