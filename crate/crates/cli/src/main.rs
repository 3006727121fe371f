use clap::Parser;
use mtlf_cli::{execute, verbosity, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match verbosity(&cli.command) {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(&cli.command) {
        Ok(outcome) => {
            if let Some(report) = &outcome.report {
                print!("{}", report.to_table());
                if let Some(baseline) = &outcome.baseline {
                    println!("seasonal-naive pooled MAPE {:.2}", baseline.pooled.mape);
                }
            }
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
