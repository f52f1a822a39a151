//! Exit status: 0 on success, 1 on a configuration or runtime error, 2 on a
//! command-line usage error and 3 when some sweep points failed.

use std::process::ExitCode;

use clap::Parser;
use qbattery::cli::{self, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli::execute(&args) {
        Ok(report) if report.success() => {
            log::info!("wrote {} files in {:.2} s", report.files.len(), report.wall_time_s);
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for f in &report.failures {
                log::error!("{f}");
            }
            log::error!("{} points failed; see manifest.json", report.failures.len());
            ExitCode::from(3)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
