//! Config-file driven batch runs.
//!
//! A run is described by a TOML file with the sections `[model]`,
//! `[charge]`, `[sim]`, `[experiment]` and `[output]`:
//!
//! ```toml
//! [model]
//! n_spins = 3
//! j = 0.5
//!
//! [charge]
//! mode = "thermal"
//! n_b = 2.0
//!
//! [experiment]
//! kind = "dynamics"
//! ```
//!
//! Unknown keys, wrong types and out-of-range values are rejected with the
//! offending key path and line. Results are written as CSV files next to a
//! `manifest.json` holding the resolved configuration, seeds, residuals and
//! wall time.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{self, SweepResult, DEFAULT_REALIZATIONS};
use crate::lindblad::EvolutionConfig;
use crate::model::{ChargeMode, ChargeSpec, ModelSpec};
use crate::spectrum;

/// Command-line flags of the `qbattery` binary.
#[derive(Clone, Debug, Parser)]
#[command(name = "qbattery", version, about = "Quantum battery charging simulator")]
pub struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Base RNG seed, overriding `[experiment] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Log at debug level.
    #[arg(long, short)]
    pub verbose: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_spins: usize,
    #[serde(default = "one")]
    pub omega_a: f64,
    #[serde(default = "one")]
    pub omega_c: f64,
    #[serde(default = "one")]
    pub g: f64,
    #[serde(default)]
    pub j: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Cavity dimension; chosen from the charge strength when absent.
    #[serde(default)]
    pub fock_cutoff: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeSection {
    pub mode: ChargeMode,
    #[serde(default)]
    pub f: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub n_b: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Dynamics,
    SweepN,
    SweepJ,
    Disorder,
    TauScan,
    Spectrum,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dynamics => "dynamics",
            Self::SweepN => "sweep_n",
            Self::SweepJ => "sweep_j",
            Self::Disorder => "disorder",
            Self::TauScan => "tau_scan",
            Self::Spectrum => "spectrum",
        }
    }

    fn allowed_keys(&self) -> &'static [&'static str] {
        match self {
            Self::Dynamics => &[],
            Self::SweepN => &["n_values"],
            Self::SweepJ | Self::TauScan | Self::Spectrum => &["j_values", "j_min", "j_max", "j_points"],
            Self::Disorder => &["w_values", "realizations", "seed"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentSection {
    fn present_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut add = |name, present: bool| {
            if present {
                keys.push(name);
            }
        };
        add("n_values", self.n_values.is_some());
        add("j_values", self.j_values.is_some());
        add("j_min", self.j_min.is_some());
        add("j_max", self.j_max.is_some());
        add("j_points", self.j_points.is_some());
        add("w_values", self.w_values.is_some());
        add("realizations", self.realizations.is_some());
        add("seed", self.seed.is_some());
        keys
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    charge: ChargeSection,
    #[serde(default)]
    sim: EvolutionConfig,
    experiment: ExperimentSection,
    #[serde(default)]
    output: OutputSection,
}

/// Default J grid for spectrum scans: 400 points on [0, 2].
pub const DEFAULT_J_GRID: (f64, f64, usize) = (0.0, 2.0, 400);

/// The experiment to run, with every default resolved.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Dynamics,
    SweepN {
        n_values: Vec<usize>,
    },
    SweepJ {
        j_values: Vec<f64>,
    },
    Disorder {
        w_values: Vec<f64>,
        realizations: usize,
        seed: u64,
    },
    TauScan {
        j_values: Vec<f64>,
    },
    Spectrum {
        j_values: Vec<f64>,
    },
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::Dynamics => ExperimentKind::Dynamics,
            Self::SweepN { .. } => ExperimentKind::SweepN,
            Self::SweepJ { .. } => ExperimentKind::SweepJ,
            Self::Disorder { .. } => ExperimentKind::Disorder,
            Self::TauScan { .. } => ExperimentKind::TauScan,
            Self::Spectrum { .. } => ExperimentKind::Spectrum,
        }
    }
}

/// A fully validated run description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub sim: EvolutionConfig,
    pub experiment: Experiment,
    pub out_dir: PathBuf,
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    parse_config_str(&text)
}

/// Validates config text; see the module docs for the format.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    resolve(raw, text)
}

fn resolve(raw: RawConfig, text: &str) -> Result<RunConfig> {
    let RawConfig {
        model: m,
        charge: c,
        sim,
        experiment: x,
        output,
    } = raw;
    let at = |section: &str, key: &str, message: String| config_error(text, section, key, message);

    let charge = match c.mode {
        ChargeMode::Coherent => {
            if c.n_b.is_some() {
                warn!("charge.n_b is ignored for coherent charging");
            }
            let f =
                c.f.ok_or_else(|| at("charge", "mode", "coherent charging needs `f`".into()))?;
            ChargeSpec {
                mode: ChargeMode::Coherent,
                f,
                delta: c.delta.unwrap_or(0.0),
                n_b: 0.0,
            }
        }
        ChargeMode::Thermal => {
            if c.f.is_some() {
                warn!("charge.f is ignored for thermal charging");
            }
            if c.delta.is_some() {
                warn!("charge.delta is ignored for thermal charging");
            }
            let n_b = c
                .n_b
                .ok_or_else(|| at("charge", "mode", "thermal charging needs `n_b`".into()))?;
            ChargeSpec::thermal(n_b)
        }
        ChargeMode::None => {
            for (key, v) in [("f", c.f), ("delta", c.delta), ("n_b", c.n_b)] {
                if v.is_some() {
                    warn!("charge.{key} is ignored without charging");
                }
            }
            ChargeSpec::none()
        }
    };
    let mut model = ModelSpec::new(m.n_spins).with_hopping(m.j).with_charge(charge);
    model.omega_a = m.omega_a;
    model.omega_c = m.omega_c;
    model.g = m.g;
    model.kappa = m.kappa;
    model.fock_cutoff = m.fock_cutoff;
    model.validate().map_err(|e| located(text, e))?;
    if m.n_spins > 16 {
        return Err(at(
            "model",
            "n_spins",
            format!("{} spins exceed the supported 16", m.n_spins),
        ));
    }
    sim.validate().map_err(|e| located(text, e))?;

    let kind = x.kind;
    if let Some(key) = x.present_keys().into_iter().find(|k| !kind.allowed_keys().contains(k)) {
        return Err(at(
            "experiment",
            key,
            format!("`{key}` is not used by kind = \"{}\"", kind.name()),
        ));
    }
    let experiment = match kind {
        ExperimentKind::Dynamics => Experiment::Dynamics,
        ExperimentKind::SweepN => {
            let n_values = x
                .n_values
                .ok_or_else(|| at("experiment", "kind", "sweep_n needs `n_values`".into()))?;
            if n_values.is_empty() || n_values.iter().any(|&n| n == 0 || n > 16) {
                return Err(at(
                    "experiment",
                    "n_values",
                    "values must lie in 1..=16 and not be empty".into(),
                ));
            }
            Experiment::SweepN { n_values }
        }
        ExperimentKind::SweepJ | ExperimentKind::TauScan | ExperimentKind::Spectrum => {
            let j_values = j_grid(&x, kind, text)?;
            match kind {
                ExperimentKind::SweepJ => Experiment::SweepJ { j_values },
                ExperimentKind::TauScan => Experiment::TauScan { j_values },
                _ => Experiment::Spectrum { j_values },
            }
        }
        ExperimentKind::Disorder => {
            let w_values = x
                .w_values
                .ok_or_else(|| at("experiment", "kind", "disorder needs `w_values`".into()))?;
            if w_values.is_empty() || w_values.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(at(
                    "experiment",
                    "w_values",
                    "strengths must be finite, nonnegative and not empty".into(),
                ));
            }
            let realizations = x.realizations.unwrap_or_else(|| {
                info!("experiment.realizations = {DEFAULT_REALIZATIONS} (default)");
                DEFAULT_REALIZATIONS
            });
            if realizations == 0 {
                return Err(at("experiment", "realizations", "need at least one realization".into()));
            }
            let seed = x.seed.unwrap_or_else(|| {
                info!("experiment.seed = 0 (default)");
                0
            });
            Experiment::Disorder {
                w_values,
                realizations,
                seed,
            }
        }
    };
    let cfg = RunConfig {
        model,
        sim,
        experiment,
        out_dir: output.dir,
    };
    echo_defaults(&cfg);
    Ok(cfg)
}

fn j_grid(x: &ExperimentSection, kind: ExperimentKind, text: &str) -> Result<Vec<f64>> {
    let at = |key: &str, message: String| config_error(text, "experiment", key, message);
    let range = x.j_min.is_some() || x.j_max.is_some() || x.j_points.is_some();
    let grid = match (&x.j_values, range) {
        (Some(_), true) => {
            return Err(at(
                "j_values",
                "give either `j_values` or `j_min`/`j_max`/`j_points`".into(),
            ))
        }
        (Some(v), false) => v.clone(),
        (None, true) => {
            let (lo, hi, n) = match (x.j_min, x.j_max, x.j_points) {
                (Some(a), Some(b), Some(n)) => (a, b, n),
                _ => return Err(at("j_min", "`j_min`, `j_max` and `j_points` go together".into())),
            };
            if !(lo < hi) || n < 2 {
                return Err(at("j_points", "need j_min < j_max and at least 2 points".into()));
            }
            spectrum::linspace(lo, hi, n)
        }
        (None, false) if kind == ExperimentKind::Spectrum => {
            let (lo, hi, n) = DEFAULT_J_GRID;
            info!("experiment J grid = {n} points on [{lo}, {hi}] (default)");
            spectrum::linspace(lo, hi, n)
        }
        (None, false) => return Err(at("kind", format!("{} needs a J grid", kind.name()))),
    };
    if grid.is_empty() || grid.iter().any(|j| !j.is_finite()) {
        return Err(at("j_values", "J values must be finite and not empty".into()));
    }
    Ok(grid)
}

fn echo_defaults(cfg: &RunConfig) {
    let m = &cfg.model;
    info!(
        "model: n_spins = {}, omega_a = {}, omega_c = {}, g = {}, j = {}, kappa = {}, fock_cutoff = {}{}",
        m.n_spins,
        m.omega_a,
        m.omega_c,
        m.g,
        m.j_hop,
        m.kappa,
        m.cavity_cutoff(),
        if m.fock_cutoff.is_none() { " (automatic)" } else { "" }
    );
    info!(
        "charge: mode = {}, f = {}, delta = {}, n_b = {}",
        m.charge.mode.name(),
        m.charge.f,
        m.charge.delta,
        m.charge.n_b
    );
    let s = &cfg.sim;
    info!(
        "sim: dt = {}, t_max = {}, sample_dt = {}, steady_tol = {}, guard_tol = {}, steady_t_max = {}",
        s.dt.map_or("auto".to_string(), |d| d.to_string()),
        s.t_max,
        s.sample_dt,
        s.steady_tol,
        s.guard_tol,
        s.steady_t_max.map_or("auto".to_string(), |d| d.to_string())
    );
    info!("output: dir = {}", cfg.out_dir.display());
}

/// Section and key in the config file of a model or sim parameter.
fn key_path(name: &str) -> (&'static str, &str) {
    match name {
        "n_spins" | "omega_a" | "omega_c" | "g" | "kappa" | "fock_cutoff" => ("model", name),
        "j_hop" => ("model", "j"),
        "f" | "delta" | "n_b" => ("charge", name),
        _ => ("sim", name),
    }
}

fn located(text: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let (section, key) = key_path(name);
            config_error(text, section, key, reason)
        }
        other => other,
    }
}

fn config_error(text: &str, section: &str, key: &str, message: String) -> Error {
    Error::Config {
        path: format!("{section}.{key}"),
        line: find_key_line(text, section, key).unwrap_or(0),
        message,
    }
}

fn section_header(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix('[')?.split(']').next().map(str::trim)
}

/// 1-based line of `key` inside `[section]`, falling back to the header.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(s) = section_header(line) {
            current = s;
            if s == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let message = e.message().to_string();
    let Some(span) = e.span() else {
        return Error::Config {
            path: "<document>".into(),
            line: 0,
            message,
        };
    };
    let start = span.start.min(text.len());
    let line = text[..start].matches('\n').count() + 1;
    let mut section = String::new();
    for l in text[..start].lines() {
        if let Some(s) = section_header(l) {
            section = s.to_string();
        }
    }
    let this_line = text.lines().nth(line - 1).unwrap_or("");
    let path = if section_header(this_line).is_some() && !this_line.contains('=') {
        section_header(this_line).unwrap_or("").to_string()
    } else {
        let key = this_line.split_once('=').map_or(this_line, |(k, _)| k).trim();
        if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        }
    };
    Error::Config { path, line, message }
}

/// Decimal rendering with 12 significant digits, switching to exponent form
/// outside [1e-5, 1e12).
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// CSV text built row by row.
struct Csv(String);

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self(format!("{}\n", header.join(",")))
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let fields: Vec<String> = fields.into_iter().collect();
        let _ = writeln!(self.0, "{}", fields.join(","));
    }
}

/// What a run produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Points that failed, with their diagnostics.
    pub failures: Vec<String>,
    pub max_residual: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Ground crossings of the clean chain next to the closed forms quoted for
/// this model, so discrepancies are visible in the manifest.
#[derive(Clone, Debug, Serialize)]
struct CrossingReport {
    computed: Vec<f64>,
    free_hopping_first: Option<f64>,
    quoted_inverse_sqrt_n: f64,
    quoted_sqrt_n: f64,
    quoted_forms_match: bool,
}

fn crossing_report(model: &ModelSpec, computed: &[f64]) -> CrossingReport {
    let n = model.n_spins as f64;
    let free = (model.n_spins > 1).then(|| model.omega_a / (2.0 * (std::f64::consts::PI / (n + 1.0)).cos()));
    let quoted = [model.omega_a / n.sqrt(), model.omega_a * n.sqrt()];
    let tol = 1e-6;
    let matches = quoted.iter().all(|q| computed.iter().any(|c| (c - q).abs() < tol));
    CrossingReport {
        computed: computed.to_vec(),
        free_hopping_first: free,
        quoted_inverse_sqrt_n: quoted[0],
        quoted_sqrt_n: quoted[1],
        quoted_forms_match: matches,
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
        self.files.push(path);
        Ok(())
    }
}

fn sweep_rows(csv: &mut Csv, result: &SweepResult, failures: &mut Vec<String>) {
    for p in &result.points {
        let value = fmt_num(p.value);
        match &p.steady {
            Some(s) => csv.row([
                value,
                fmt_num(s.delta_e),
                fmt_num(s.ergotropy),
                fmt_opt(s.efficiency),
                fmt_num(s.residual),
            ]),
            None => {
                csv.row([value, String::new(), String::new(), String::new(), String::new()]);
                failures.extend(p.error.clone());
            }
        }
    }
}

fn crossings_csv(crossings: &[f64]) -> String {
    let mut csv = Csv::new(&["j_star"]);
    for c in crossings {
        csv.row([fmt_num(*c)]);
    }
    csv.0
}

/// Runs the configured experiment on the current rayon pool and writes its
/// CSV files and `manifest.json` into `cfg.out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::from(e).context(format!("creating {}", cfg.out_dir.display())))?;
    let mut out = Outputs {
        dir: cfg.out_dir.clone(),
        files: Vec::new(),
    };
    let mut failures = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    let mut extra = serde_json::Map::new();
    let model = &cfg.model;
    let sim = &cfg.sim;

    match &cfg.experiment {
        Experiment::Dynamics => {
            let run = experiments::run_dynamics(model, sim).map_err(|e| e.context("dynamics"))?;
            let mut csv = Csv::new(&["t", "delta_e", "ergotropy", "efficiency", "power"]);
            for p in &run.series.points {
                csv.row([
                    fmt_num(p.t),
                    fmt_num(p.delta_e),
                    fmt_num(p.ergotropy),
                    fmt_opt(p.efficiency),
                    fmt_opt(p.power),
                ]);
            }
            out.write("dynamics.csv", &csv.0)?;
            extra.insert("evolution".into(), serde_json::to_value(&run.summary)?);
            if let Ok(tau) = crate::observables::charging_time(&run.series) {
                extra.insert("charging_time".into(), tau.into());
            }
        }
        Experiment::SweepN { n_values } => {
            let r = experiments::sweep_spin_number(model, n_values, sim)?;
            let mut csv = Csv::new(&["n", "delta_e_ss", "ergotropy_ss", "efficiency_ss", "residual"]);
            sweep_rows(&mut csv, &r, &mut failures);
            out.write("sweep_n.csv", &csv.0)?;
            residuals.push(r.max_residual());
            extra.insert("points".into(), serde_json::to_value(&r.points)?);
        }
        Experiment::SweepJ { j_values } => {
            let r = experiments::sweep_hopping(model, j_values, sim)?;
            let mut csv = Csv::new(&["j", "delta_e_ss", "ergotropy_ss", "efficiency_ss", "residual"]);
            sweep_rows(&mut csv, &r, &mut failures);
            out.write("sweep_j.csv", &csv.0)?;
            out.write("crossings.csv", &crossings_csv(&r.crossings))?;
            residuals.push(r.max_residual());
            extra.insert("points".into(), serde_json::to_value(&r.points)?);
            extra.insert(
                "crossings".into(),
                serde_json::to_value(crossing_report(model, &r.crossings))?,
            );
        }
        Experiment::TauScan { j_values } => {
            let scan = experiments::charging_time_scan(model, j_values, sim)?;
            let mut csv = Csv::new(&["j", "tau_c", "peak_power"]);
            for p in &scan {
                csv.row([fmt_num(p.j), fmt_opt(p.tau_c), fmt_opt(p.peak_power)]);
                failures.extend(p.error.clone());
            }
            out.write("tau_scan.csv", &csv.0)?;
            let crossings = grid_crossings(model, j_values)?;
            out.write("crossings.csv", &crossings_csv(&crossings))?;
            extra.insert(
                "crossings".into(),
                serde_json::to_value(crossing_report(model, &crossings))?,
            );
        }
        Experiment::Spectrum { j_values } => {
            let scan = spectrum::scan_spectrum(model, j_values)?;
            let levels = scan.levels.first().map_or(0, Vec::len);
            let mut header = vec!["j".to_string()];
            header.extend((0..levels).map(|k| format!("level_{k}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut csv = Csv::new(&header);
            let mut order = Csv::new(&["j", "ground_energy", "excitations", "m_z", "xi_z"]);
            for (i, &j) in scan.j_grid.iter().enumerate() {
                csv.row(std::iter::once(fmt_num(j)).chain(scan.levels[i].iter().map(|e| fmt_num(*e))));
                order.row([
                    fmt_num(j),
                    fmt_num(scan.ground_energy[i]),
                    scan.ground_excitations[i].to_string(),
                    fmt_num(scan.order[i].m_z),
                    fmt_num(scan.order[i].xi_z),
                ]);
            }
            out.write("spectrum.csv", &csv.0)?;
            out.write("order.csv", &order.0)?;
            out.write("crossings.csv", &crossings_csv(&scan.crossings))?;
            extra.insert(
                "crossings".into(),
                serde_json::to_value(crossing_report(model, &scan.crossings))?,
            );
        }
        Experiment::Disorder {
            w_values,
            realizations,
            seed,
        } => {
            let mut rows = Csv::new(&[
                "w",
                "realization",
                "seed",
                "delta_e_ss",
                "ergotropy_ss",
                "efficiency_ss",
                "ground_energy",
                "residual",
            ]);
            let mut summary = Csv::new(&[
                "w",
                "realizations",
                "successes",
                "delta_e_mean",
                "delta_e_stderr",
                "ergotropy_mean",
                "ergotropy_stderr",
                "efficiency_mean",
                "efficiency_stderr",
            ]);
            let mut ensembles = Vec::new();
            for &w in w_values {
                let r = experiments::disorder_ensemble(model, w, *realizations, *seed, sim)
                    .map_err(|e| e.context(format!("W = {w}")))?;
                for p in &r.points {
                    let mut fields = vec![
                        fmt_num(w),
                        format!("{}", p.value as usize),
                        p.seed.unwrap_or(0).to_string(),
                    ];
                    match &p.steady {
                        Some(s) => fields.extend([
                            fmt_num(s.delta_e),
                            fmt_num(s.ergotropy),
                            fmt_opt(s.efficiency),
                            fmt_num(s.ground_energy),
                            fmt_num(s.residual),
                        ]),
                        None => {
                            fields.extend(std::iter::repeat_n(String::new(), 5));
                            failures.extend(p.error.clone());
                        }
                    }
                    rows.row(fields);
                }
                let ok = r.points.len() - r.failures();
                let stats = r.ensemble.as_ref();
                let single = r.points.iter().find_map(|p| p.steady.as_ref());
                let (de, erg, eff) = match (stats, single) {
                    (Some(s), _) => (
                        (Some(s.delta_e.mean), Some(s.delta_e.std_error)),
                        (Some(s.ergotropy.mean), Some(s.ergotropy.std_error)),
                        s.efficiency.map_or((None, None), |e| (Some(e.mean), Some(e.std_error))),
                    ),
                    (None, Some(p)) => ((Some(p.delta_e), None), (Some(p.ergotropy), None), (p.efficiency, None)),
                    (None, None) => ((None, None), (None, None), (None, None)),
                };
                summary.row([
                    fmt_num(w),
                    r.points.len().to_string(),
                    ok.to_string(),
                    fmt_opt(de.0),
                    fmt_opt(de.1),
                    fmt_opt(erg.0),
                    fmt_opt(erg.1),
                    fmt_opt(eff.0),
                    fmt_opt(eff.1),
                ]);
                residuals.push(r.max_residual());
                ensembles.push(serde_json::json!({ "w": w, "seeds": r.seeds, "ensemble": r.ensemble }));
            }
            out.write("disorder.csv", &rows.0)?;
            out.write("disorder_summary.csv", &summary.0)?;
            extra.insert("ensembles".into(), serde_json::Value::Array(ensembles));
        }
    }

    let wall_time_s = start.elapsed().as_secs_f64();
    let max_residual = residuals.iter().copied().reduce(f64::max);
    let manifest = serde_json::json!({
        "library": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.kind().name(),
        "config": cfg,
        "fock_cutoff": model.cavity_cutoff(),
        "threads": rayon::current_num_threads(),
        "seeds": match &cfg.experiment {
            Experiment::Disorder { seed, .. } => vec![*seed],
            _ => Vec::new(),
        },
        "max_residual": max_residual,
        "failures": failures,
        "wall_time_s": wall_time_s,
        "files": out.files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "details": extra,
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    out.write("manifest.json", &(text + "\n"))?;
    Ok(RunReport {
        files: out.files,
        failures,
        max_residual,
        wall_time_s,
    })
}

fn grid_crossings(model: &ModelSpec, j_values: &[f64]) -> Result<Vec<f64>> {
    let lo = j_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = j_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Ok(Vec::new());
    }
    spectrum::ground_crossings(model, lo, hi, 400)
}

/// Entry point shared by the binary: applies the flag overrides, sizes the
/// thread pool and runs.
pub fn execute(args: &Args) -> Result<RunReport> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(s) = args.seed {
        match &mut cfg.experiment {
            Experiment::Disorder { seed, .. } => *seed = s,
            _ => info!("--seed has no effect on a {} run", cfg.experiment.kind().name()),
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::invalid("threads", e.to_string()))?;
    info!(
        "running {} on {} threads",
        cfg.experiment.kind().name(),
        pool.current_num_threads()
    );
    pool.install(|| run(&cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "[model]\nn_spins = 3\n\n[charge]\nmode = \"thermal\"\nn_b = 2.0\n\n[experiment]\nkind = \"dynamics\"\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let m = &cfg.model;
        assert_eq!(m.n_spins, 3);
        assert_eq!((m.omega_a, m.omega_c, m.g, m.kappa, m.j_hop), (1.0, 1.0, 1.0, 1.0, 0.0));
        assert_eq!(m.charge, ChargeSpec::thermal(2.0));
        assert_eq!(cfg.sim, EvolutionConfig::default());
        assert_eq!(cfg.experiment, Experiment::Dynamics);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn force_is_dropped_for_thermal_mode() {
        let text = MINIMAL.replace("n_b = 2.0", "n_b = 2.0\nf = 3.0");
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg.model.charge.f, 0.0);
    }

    fn config_err(text: &str) -> (String, usize, String) {
        match parse_config_str(text) {
            Err(Error::Config { path, line, message }) => (path, line, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn negative_kappa_is_located() {
        let text = MINIMAL.replace("n_spins = 3", "n_spins = 3\nkappa = -1.0");
        let (path, line, _) = config_err(&text);
        assert_eq!(path, "model.kappa");
        assert_eq!(line, 3);
    }

    #[test]
    fn unknown_key_is_located() {
        let text = MINIMAL.replace("mode = \"thermal\"", "mode = \"thermal\"\nnb = 2.0");
        let (path, line, message) = config_err(&text);
        assert_eq!(path, "charge.nb");
        assert_eq!(line, 6);
        assert!(message.contains("nb"), "{message}");
    }

    #[test]
    fn type_mismatch_is_located() {
        let text = MINIMAL.replace("n_spins = 3", "n_spins = \"three\"");
        let (path, line, _) = config_err(&text);
        assert_eq!(path, "model.n_spins");
        assert_eq!(line, 2);
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        let (path, line, _) = config_err(&text);
        assert_eq!(path, "extra");
        assert_eq!(line, 11);
    }

    #[test]
    fn keys_of_other_kinds_are_rejected() {
        let text = format!("{MINIMAL}n_values = [1, 2]\n");
        let (path, line, _) = config_err(&text);
        assert_eq!(path, "experiment.n_values");
        assert_eq!(line, 10);
    }

    #[test]
    fn missing_charge_parameter() {
        let text = MINIMAL.replace("n_b = 2.0\n", "");
        let (path, _, message) = config_err(&text);
        assert_eq!(path, "charge.mode");
        assert!(message.contains("n_b"));
    }

    #[test]
    fn j_grid_forms() {
        let base = MINIMAL.replace("\"dynamics\"", "\"sweep_j\"");
        let cfg = parse_config_str(&format!("{base}j_values = [0.0, 0.5]\n")).unwrap();
        assert_eq!(
            cfg.experiment,
            Experiment::SweepJ {
                j_values: vec![0.0, 0.5]
            }
        );
        let cfg = parse_config_str(&format!("{base}j_min = 0.0\nj_max = 1.0\nj_points = 3\n")).unwrap();
        assert_eq!(
            cfg.experiment,
            Experiment::SweepJ {
                j_values: vec![0.0, 0.5, 1.0]
            }
        );
        assert!(parse_config_str(&base).is_err());
        assert!(parse_config_str(&format!("{base}j_values = [0.0]\nj_min = 0.0\n")).is_err());
        let spectrum = MINIMAL.replace("\"dynamics\"", "\"spectrum\"");
        match parse_config_str(&spectrum).unwrap().experiment {
            Experiment::Spectrum { j_values } => assert_eq!(j_values.len(), 400),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn disorder_defaults() {
        let text = MINIMAL.replace("\"dynamics\"", "\"disorder\"\nw_values = [0.5]");
        match parse_config_str(&text).unwrap().experiment {
            Experiment::Disorder { realizations, seed, .. } => {
                assert_eq!(realizations, 100);
                assert_eq!(seed, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.05), "0.05");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(fmt_num(123456.7890123456), "123456.789012");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(-1.234567890123456e-9), "-1.23456789012e-9");
        assert_eq!(fmt_num(2.5e14), "2.5e14");
        assert_eq!(fmt_num(0.1234567890125678), "0.123456789013");
        assert_eq!(fmt_num(9.9999999999999e-6), "0.00001");
    }

    #[test]
    fn crossing_report_flags_quoted_forms() {
        let m = ModelSpec::new(3);
        let r = crossing_report(&m, &[std::f64::consts::FRAC_1_SQRT_2, 1.3]);
        assert!((r.free_hopping_first.unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(!r.quoted_forms_match);
    }
}
