use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use probevm::bench::{self, Experiment};
use probevm::host::on_engine_thread;
use probevm::run::{run_source, Lang, RunOptions};
use probevm::StdHost;

#[derive(Parser)]
#[command(name = "probevm", version, about = "Instrumentable AST interpreter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program.
    Run(RunArgs),
    /// Measure instrumentation overhead on the Mandelbrot fixture.
    Bench {
        #[arg(value_enum)]
        experiment: BenchKind,
        #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
        iterations: usize,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = LangArg::Auto)]
    lang: LangArg,
    #[arg(long)]
    coverage: bool,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    profile: bool,
    #[arg(long, value_name = "N")]
    limit_statements: Option<u64>,
    /// Serve the debug protocol on this port and wait for a client.
    #[arg(long, value_name = "P", conflicts_with = "repl_debug")]
    debug_port: Option<u16>,
    /// Debug in the terminal.
    #[arg(long)]
    repl_debug: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LangArg {
    Auto,
    Toylang,
    Minicalc,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Settrace,
    Breakpoints,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run(args) => run(args),
        Command::Bench { experiment, iterations } => {
            let experiment = match experiment {
                BenchKind::Settrace => Experiment::SetTrace,
                BenchKind::Breakpoints => Experiment::Breakpoints,
            };
            match on_engine_thread(move || {
                bench::run(experiment, iterations, bench::WARMUP)
                    .map(|t| t.render())
                    .map_err(|e| e.to_string())
            }) {
                Ok(table) => {
                    eprint!("{table}");
                    0
                }
                Err(e) => {
                    eprintln!("{e}");
                    1
                }
            }
        }
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}

fn run(args: RunArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.file.display());
            return 2;
        }
    };
    let lang = match args.lang {
        LangArg::Auto => Lang::Auto,
        LangArg::Toylang => Lang::Toylang,
        LangArg::Minicalc => Lang::Minicalc,
    }
    .resolve(&args.file);
    let name = args
        .file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "main".into());
    if let Some(port) = args.debug_port {
        return on_engine_thread(move || probevm::server::serve_cli(port, &name, lang, &text));
    }
    if args.repl_debug {
        return on_engine_thread(move || {
            let input = Box::new(std::io::BufReader::new(std::io::stdin()));
            probevm::repl::run(
                Box::new(StdHost::stdio()),
                &name,
                lang,
                &text,
                input,
                Box::new(std::io::stderr()),
            )
        });
    }
    let options = RunOptions {
        coverage: args.coverage,
        trace: args.trace,
        profile: args.profile,
        limit_statements: args.limit_statements,
    };
    let outcome = on_engine_thread(move || {
        let o = run_source(Box::new(StdHost::stdio()), &name, lang, &text, &options);
        (o.exit_code, o.error, o.report)
    });
    let (code, error, report) = outcome;
    if let Some(e) = error {
        eprintln!("{e}");
    }
    if !report.is_empty() {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    }
    code
}
