use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rulehide::cli::{self, RelaxSpec, RunConfig, StrategyName};
use rulehide::diophantine::RelaxMode;

/// Hide sensitive decision-tree rules in binary datasets.
///
/// Exit codes: 0 ok, 1 failure, 2 malformed input, 3 unsolvable equation,
/// 4 rule not found.
#[derive(Parser)]
#[command(name = "rulehide", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Induce a tree and print (or write) its JSON.
    Build {
        input: PathBuf,
        #[arg(long)]
        emit_tree: Option<PathBuf>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Print one rule per leaf.
    Rules {
        input: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Sanitize a dataset. Flags override values from --config.
    Hide(HideArgs),
    /// Solve a·x − b·y = c for the minimal natural solution.
    #[command(allow_negative_numbers = true)]
    SolveEq {
        a: i128,
        b: i128,
        c: i128,
        #[arg(long, default_value_t = 0)]
        lb_x: u64,
        #[arg(long, default_value_t = 0)]
        lb_y: u64,
    },
    /// Report on a sanitization from its original data, output and plan.
    Evaluate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        sanitized: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "rulehide-data")]
        data_dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct HideArgs {
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Rule to hide, e.g. `a=1,b=0`. Repeatable.
    #[arg(short, long = "request")]
    requests: Vec<String>,
    /// Leaf to hide by node id. Repeatable.
    #[arg(long = "request-node")]
    request_nodes: Vec<usize>,
    /// Relaxation budget, `root:<d>` or `<node>:<d>`. Repeatable.
    #[arg(long)]
    relax: Vec<RelaxSpec>,
    #[arg(long, value_parser = parse_mode)]
    relax_mode: Option<RelaxMode>,
    #[arg(long)]
    strategy: Option<StrategyName>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    emit_plan: Option<PathBuf>,
    #[arg(long)]
    emit_report: Option<PathBuf>,
    #[arg(long)]
    emit_tree: Option<PathBuf>,
    #[arg(long)]
    with_provenance: bool,
}

fn parse_mode(s: &str) -> Result<RelaxMode, String> {
    match s {
        "cost" => Ok(RelaxMode::Cost),
        "solvability" => Ok(RelaxMode::Solvability),
        _ => Err(format!("expected cost or solvability, got {s:?}")),
    }
}

impl HideArgs {
    fn into_config(self) -> Result<RunConfig, cli::CommandError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.input = self.input.or(config.input);
        config.output = self.output.or(config.output);
        if !self.requests.is_empty() {
            config.requests = self.requests;
        }
        if !self.request_nodes.is_empty() {
            config.request_nodes = self.request_nodes;
        }
        if !self.relax.is_empty() {
            config.relax = self.relax;
        }
        config.relax_mode = self.relax_mode.unwrap_or(config.relax_mode);
        config.strategy = self.strategy.unwrap_or(config.strategy);
        config.max_depth = self.max_depth.or(config.max_depth);
        config.emit_plan = self.emit_plan.or(config.emit_plan);
        config.emit_report = self.emit_report.or(config.emit_report);
        config.emit_tree = self.emit_tree.or(config.emit_tree);
        config.with_provenance |= self.with_provenance;
        Ok(config)
    }
}

fn serve(host: &str, port: u16, data_dir: PathBuf) -> i32 {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result: io::Result<()> = runtime.block_on(async {
        let app = rulehide_service::router(data_dir)?;
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await
    });
    match result {
        Ok(()) => cli::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            cli::EXIT_FAILURE
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    let code = match args.command {
        Command::Build { input, emit_tree, max_depth } => {
            cli::cmd_build(&input, emit_tree.as_deref(), max_depth, &mut out, &mut err)
        }
        Command::Rules { input, max_depth } => cli::cmd_rules(&input, max_depth, &mut out, &mut err),
        Command::Hide(hide) => match hide.into_config() {
            Ok(config) => cli::cmd_hide(&config, &mut out, &mut err),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
        Command::SolveEq { a, b, c, lb_x, lb_y } => cli::cmd_solve_eq(a, b, c, lb_x, lb_y, &mut out, &mut err),
        Command::Evaluate { original, sanitized, plan, json } => {
            cli::cmd_evaluate(&original, &sanitized, &plan, json, &mut out, &mut err)
        }
        Command::Serve { port, host, data_dir } => serve(&host, port, data_dir),
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
