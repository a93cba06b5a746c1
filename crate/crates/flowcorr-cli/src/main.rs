mod args;
mod commands;

use clap::Parser;

use args::Cli;
use commands::{load_run_config, run};

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and exit 0; real usage
            // errors go to stderr with exit 1.
            let is_usage = e.use_stderr();
            let _ = e.print();
            return if is_usage { 1 } else { 0 };
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    let cmd = if let Some(path) = &cli.config {
        match load_run_config(path) {
            Ok(cmd) => cmd,
            Err(e) => {
                eprintln!("error: {e}");
                return e.code();
            }
        }
    } else if let Some(cmd) = cli.command {
        cmd
    } else {
        eprintln!("error: a subcommand or --config is required (see --help)");
        return 1;
    };

    match run(&cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
