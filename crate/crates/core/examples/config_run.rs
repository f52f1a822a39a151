//! Runs one of the bundled TOML configurations exactly as the `qbattery`
//! binary would, then lists the files it wrote.
//!
//! ```bash
//! cargo run --release --example config_run -- examples/configs/sweep_j.toml
//! ```
//!
//! Without an argument the dynamics configuration is used and results go to
//! a temporary directory.

use std::path::PathBuf;

use qbattery::cli;

pub fn run_config(path: PathBuf, out_dir: PathBuf) -> qbattery::Result<cli::RunReport> {
    let mut cfg = cli::parse_config(&path)?;
    cfg.out_dir = out_dir;
    let report = cli::run(&cfg)?;
    println!("{} finished in {:.2} s", path.display(), report.wall_time_s);
    for file in &report.files {
        println!("  wrote {}", file.display());
    }
    for failure in &report.failures {
        println!("  failed: {failure}");
    }
    if let Some(r) = report.max_residual {
        println!("  largest steady-state residual {r:.1e}");
    }
    Ok(report)
}

pub fn run() -> qbattery::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/dynamics.toml"));
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let out_dir = std::env::temp_dir().join("qbattery-example").join(stem);
    run_config(path, out_dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> qbattery::Result<()> {
    run()
}
