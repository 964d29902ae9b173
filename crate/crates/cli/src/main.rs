use std::io::{self, Write};
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use rali_cli::{commands, Cli};

fn threads(cli: &Cli) -> Option<usize> {
    cli.threads
        .or_else(|| std::env::var("RALI_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = threads(&cli) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(4);
        }
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    match commands::run(&cli, &mut out) {
        Ok(()) => {
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            if code == 2 {
                let mut cmd = Cli::command();
                cmd.build();
                let name = cli_subcommand_name(&cli);
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("{}", sub.render_usage());
                }
            }
            ExitCode::from(code as u8)
        }
    }
}

fn cli_subcommand_name(cli: &Cli) -> &'static str {
    use rali_cli::Command::*;
    match cli.command {
        GenSynth { .. } => "gen-synth",
        Align { .. } => "align",
        Pca { .. } => "pca",
        Cluster { .. } => "cluster",
        Finetune { .. } => "finetune",
        Pipeline { .. } => "pipeline",
        Ablate { .. } => "ablate",
        Score { .. } => "score",
        Eval { .. } => "eval",
        Inspect { .. } => "inspect",
    }
}
