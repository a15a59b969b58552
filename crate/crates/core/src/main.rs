use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chaoskit::harness::{self, ExperimentConfig, ExperimentReport, ScenarioParams, Verdict};

#[derive(Parser)]
#[command(name = "chaoskit", version, about = "Stochastic analysis on the Poisson space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample size per replicate.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Directory for report.json and report.csv.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    q: Option<usize>,
    #[arg(long, global = true)]
    cells: Option<usize>,
    #[arg(long, global = true)]
    nu: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run a built-in scenario.
    Scenario { name: String },
    /// List built-in scenarios.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.opts.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: invalid thread count {t}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> chaoskit::Result<u8> {
    let o = cli.opts;
    let (report, out) = match cli.command {
        Command::List => {
            for s in harness::list_scenarios() {
                println!("{:<18} {}", s.name, s.description);
            }
            return Ok(0);
        }
        Command::Run { config } => {
            let mut c = ExperimentConfig::from_path(&config)?;
            if let Some(s) = o.seed {
                c.seed = s;
            }
            if let Some(n) = o.n {
                c.n = n;
            }
            if let Some(r) = o.replicates {
                c.replicates = r;
            }
            let out = o.out.or_else(|| c.out_dir.clone());
            (harness::run(&c)?, out)
        }
        Command::Scenario { name } => {
            let params = ScenarioParams {
                seed: o.seed.unwrap_or(ScenarioParams::default().seed),
                n: o.n,
                replicates: o.replicates,
                lambda: o.lambda,
                q: o.q,
                cells: o.cells,
                nu: o.nu,
            };
            (harness::run_scenario(&name, &params)?, o.out)
        }
    };
    print_summary(&report);
    if let Some(dir) = out {
        harness::write_outputs(&report, &dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(report.exit_code() as u8)
}

fn print_summary(report: &ExperimentReport) {
    println!("{} (seed {}, {:.0} ms)", report.scenario, report.seed, report.wall_ms);
    for r in &report.records {
        let cmp = match (r.reference, r.rhs) {
            (Some(v), _) => format!("ref {v:.6e}"),
            (None, Some(v)) => format!("rhs {v:.6e}"),
            _ => String::new(),
        };
        println!(
            "  [{:<12}] {:<40} {:>14.6e} ± {:<11.3e} {}",
            r.verdict.as_str(),
            r.check,
            r.estimate,
            r.se,
            cmp
        );
    }
    let count = |v: Verdict| report.records.iter().filter(|r| r.verdict == v).count();
    println!(
        "  {} pass, {} fail, {} inconclusive",
        count(Verdict::Pass),
        count(Verdict::Fail),
        count(Verdict::Inconclusive)
    );
}
