use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stl_lab::experiments::{
    emit_config, fit_slopes, parse_config, read_csv, render_fits, render_rows, render_summary, run_checks,
    run_experiment, summarize, svg, write_csv, ExperimentConfig, ExperimentParams,
};
use stl_lab::stl::RNG_ALGORITHM;
use stl_lab::Error;

#[derive(Parser)]
#[command(name = "stl-lab", version, about = "Self-consuming training loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write `<experiment>.csv` plus the resolved config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `[run] seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Evaluate the experiment's pass/fail criteria; exit 4 on failure.
        #[arg(long)]
        check: bool,
        /// Also write one SVG line chart per metric.
        #[arg(long)]
        svg: bool,
    },
    /// Aggregate a results CSV by the given columns.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated columns, e.g. `metric,n,alpha`.
        #[arg(long)]
        group: String,
        /// Also fit slopes against `n` (log-log) or `generation` (linear).
        #[arg(long)]
        fit: Option<String>,
    },
    /// Evaluate the bound formulas over a `bounds` config grid.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve for lambda* over a `lambda-star` config grid.
    LambdaStar {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Check,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Check => 4,
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        Failure::Config(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    parse_config(&text).map_err(Failure::Config)
}

fn expect_experiment(cfg: &ExperimentConfig, name: &str) -> Result<(), Failure> {
    if cfg.experiment() != name {
        return Err(Failure::Config(Error::Config {
            line: None,
            message: format!("this subcommand needs experiment = {name}, found {}", cfg.experiment()),
        }));
    }
    Ok(())
}

fn echo(cfg: &ExperimentConfig) -> String {
    let mut text = format!("# resolved configuration\n# rng = {RNG_ALGORITHM}\n");
    if let ExperimentParams::IclStl(p) = &cfg.params {
        text.push_str(&format!(
            "# eval loss = mean squared error of the query prediction against the noiseless target, over {} fresh tasks per seed\n",
            p.tasks
        ));
    }
    text.push_str(&emit_config(cfg));
    text
}

fn run(config: &Path, seed: Option<u64>, out: &Path, check: bool, with_svg: bool) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = run_experiment(&cfg).map_err(|e| {
        eprintln!("configuration in effect:\n{}", emit_config(&cfg));
        Failure::Runtime(e)
    })?;
    let io = |path: &Path, source| {
        Failure::Runtime(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let csv_path = out.join(format!("{}.csv", cfg.experiment()));
    let nan = write_csv(&rows, &csv_path).map_err(Failure::Runtime)?;
    let echo_path = out.join(format!("{}.config", cfg.experiment()));
    std::fs::write(&echo_path, echo(&cfg)).map_err(|e| io(&echo_path, e))?;
    println!("wrote {} rows to {}", rows.len(), csv_path.display());
    if nan > 0 {
        eprintln!("warning: {nan} non-finite values written as nan");
    }
    if with_svg {
        let files = svg::write_svgs(&rows, out).map_err(Failure::Runtime)?;
        println!("wrote {} charts to {}", files.len(), out.display());
    }
    if check {
        let results = run_checks(&cfg, &rows);
        let mut ok = true;
        for r in &results {
            println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            ok &= r.passed;
        }
        if !ok {
            return Err(Failure::Check);
        }
    }
    Ok(())
}

fn summarize_cmd(input: &Path, group: &str, fit: Option<&str>) -> Result<(), Failure> {
    let rows = read_csv(input).map_err(Failure::Runtime)?;
    let keys: Vec<&str> = group.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let stats = summarize(&rows, &keys).map_err(Failure::Runtime)?;
    print!("{}", render_summary(&stats));
    if let Some(x) = fit {
        let fits = fit_slopes(&rows, &keys, x).map_err(Failure::Runtime)?;
        println!();
        print!("{}", render_fits(&fits));
    }
    Ok(())
}

fn evaluate(config: &Path, name: &str) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    expect_experiment(&cfg, name)?;
    let rows = run_experiment(&cfg).map_err(Failure::Runtime)?;
    println!("constants: all hidden constants = 1");
    print!("{}", render_rows(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("STL_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let outcome = match &cli.command {
        Command::Run {
            config,
            seed,
            out,
            check,
            svg,
        } => run(config, *seed, out, *check, *svg),
        Command::Summarize { input, group, fit } => summarize_cmd(input, group, fit.as_deref()),
        Command::Bounds { config } => evaluate(config, "bounds"),
        Command::LambdaStar { config } => evaluate(config, "lambda-star"),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) | Failure::Runtime(e) => eprintln!("error: {e}"),
                Failure::Check => eprintln!("error: one or more checks failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
