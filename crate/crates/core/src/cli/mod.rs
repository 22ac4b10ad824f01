//! Command implementations behind the `laguerre-sysid` binary.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (warnings go to stderr) |
//! | 2 | configuration or usage error |
//! | 3 | I/O error |
//! | 4 | parse or schema error in an input file |
//! | 5 | singular estimation problem (rank deficiency, starved segments, zero gain) |
//! | 6 | sensitivity: a working nonlinearity lost monotonicity or could not be inverted |
//! | 7 | divergence: the recursive estimator broke down |

pub mod config;
pub mod model_file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluate::{format_grid, mse, robustness_sweep, write_report, ReportFormat};
use crate::models::identify;
use crate::plantlab::{
    derive_seed, generate_excitation, make_reference_plant, read_dataset, run_experiment, write_dataset,
};
pub use config::ExperimentConfig;
pub use model_file::{ModelFile, Normalization};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_SINGULAR: i32 = 5;
pub const EXIT_SENSITIVITY: i32 = 6;
pub const EXIT_DIVERGENCE: i32 = 7;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) | Error::UnstablePsi(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Parse { .. } | Error::Schema(_) => EXIT_SCHEMA,
        Error::Singular { .. } | Error::StarvedSegments { .. } | Error::ZeroGain { .. } => EXIT_SINGULAR,
        Error::Sensitivity { .. } | Error::NonMonotonic | Error::DegenerateSegment { .. } => EXIT_SENSITIVITY,
        Error::Breakdown { .. } => EXIT_DIVERGENCE,
    }
}

/// Text a command wants on stdout and stderr.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
}

/// Reads the config file (defaults when absent) and applies a `--seed` override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn compact_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string(&cfg.to_json()).expect("config serializes")
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Output> {
    cfg.validate()?;
    let plant = make_reference_plant(cfg.plant.seed);
    let u = generate_excitation(
        cfg.excitation.kind,
        cfg.excitation.samples,
        cfg.input_range(),
        derive_seed(cfg.seed, "excitation", 0),
        cfg.excitation.dwell,
    )?;
    let noise_seed = derive_seed(cfg.seed, "noise", 0);
    let mut data = run_experiment(&plant, &u, cfg.noise.sigma, noise_seed)?;
    data.dt = cfg.excitation.dt;
    data.meta.seed = Some(cfg.seed);
    data.meta.extra.insert("config".into(), compact_json(cfg));
    write_dataset(&data, out)?;
    Ok(Output {
        stdout: format!(
            "wrote {} samples (N={}, sigma={}, seed={}) to {}\n",
            data.len(),
            data.len(),
            cfg.noise.sigma,
            cfg.seed,
            out.display()
        ),
        stderr: String::new(),
    })
}

pub fn cmd_identify(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<Output> {
    cfg.validate()?;
    let dataset = read_dataset(data)?;
    let ident = identify(&dataset.u, &dataset.y, &cfg.identify)?;
    let mut file = ModelFile::from_model(&ident.model);
    file.normalization = if ident.normalized {
        Normalization::UnitDcGain
    } else {
        Normalization::None
    };
    file.warnings = ident.warnings.clone();
    file.fit_mse = ident.mse;
    file.iterations = ident.iterations;
    file.config = Some(cfg.clone());
    file.write(out)?;

    let mut stderr = String::new();
    for w in &ident.warnings {
        let tag = serde_json::to_value(w).expect("warning serializes");
        let _ = writeln!(stderr, "warning: {}", tag.as_str().unwrap_or("unknown"));
    }
    Ok(Output {
        stdout: format!(
            "structure={} mse={} iterations={}\n",
            ident.model.structure().as_str(),
            ident.mse,
            ident.iterations
        ),
        stderr,
    })
}

/// Path of the structured report written next to the CSV grid.
pub fn structured_report_path(csv: &Path) -> PathBuf {
    let json = csv.with_extension("json");
    if json == csv {
        PathBuf::from(format!("{}.report.json", csv.display()))
    } else {
        json
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, timings: bool) -> Result<Output> {
    cfg.validate()?;
    let plant = make_reference_plant(cfg.plant.seed);
    let report = robustness_sweep(
        &plant,
        &cfg.sweep.sigmas,
        &cfg.sweep.families,
        &cfg.identify,
        &cfg.sweep_settings(),
    )?;
    let config = cfg.to_json();
    write_report(&report, out, ReportFormat::Csv, &config, false)?;
    write_report(&report, &structured_report_path(out), ReportFormat::Structured, &config, timings)?;
    Ok(Output {
        stdout: format_grid(&report),
        stderr: String::new(),
    })
}

pub fn cmd_validate(model: &Path, data: &Path, residuals: Option<&Path>) -> Result<Output> {
    let file = ModelFile::read(model)?;
    let model = file.to_model()?;
    let dataset = read_dataset(data)?;
    let yhat = model.simulate(&dataset.u);
    let value = mse(&dataset.y, &yhat)?;
    if let Some(path) = residuals {
        let mut text = String::from("k,y,yhat,residual\n");
        for (k, (y, p)) in dataset.y.iter().zip(&yhat).enumerate() {
            let _ = writeln!(text, "{k},{y},{p},{}", y - p);
        }
        crate::write_atomic(path, text.as_bytes())?;
    }
    Ok(Output {
        stdout: format!("mse={value} samples={}\n", dataset.len()),
        stderr: String::new(),
    })
}
