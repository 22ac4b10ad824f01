//! Validation metrics, the noise-robustness sweep, and report emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{identify, IdentConfig, LinearKind, Structure, Warning};
use crate::par_map;
use crate::plantlab::{
    derive_seed, generate_excitation, run_experiment_with_truth, ExcitationKind, ReferencePlant,
    DEFAULT_DWELL, DEFAULT_SAMPLES,
};

pub const REPORT_SCHEMA: u32 = 1;
/// Noise levels of the reference experiment.
pub const REFERENCE_SIGMAS: [f64; 7] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0];
pub const OVERFLOW_LIMIT: f64 = 1e6;
pub const RATIO_LIMIT: f64 = 100.0;

/// Mean square error `(1/N) sum (y - yhat)^2`.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidArgument(format!(
            "mse of sequences with lengths {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("mse of empty sequences".into()));
    }
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

/// Population standard deviation (divides by the count).
pub fn dispersion(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "dispersion needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Overflow,
    NonFinite,
    Ratio,
}

/// Flags a residual trace as unstable when it contains non-finite values, exceeds
/// [`OVERFLOW_LIMIT`] in magnitude, or its terminal tenth has an MSE above
/// [`RATIO_LIMIT`] times `baseline`.
pub fn detect_divergence(trace: &[f64], baseline: f64) -> Result<Option<DivergenceKind>> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline must be positive, got {baseline}")));
    }
    if trace.iter().any(|e| !e.is_finite()) {
        return Ok(Some(DivergenceKind::NonFinite));
    }
    if trace.iter().any(|e| e.abs() > OVERFLOW_LIMIT) {
        return Ok(Some(DivergenceKind::Overflow));
    }
    if trace.is_empty() {
        return Ok(None);
    }
    let window = (trace.len() / 10).max(1);
    let tail = &trace[trace.len() - window..];
    let terminal = tail.iter().map(|e| e * e).sum::<f64>() / window as f64;
    if terminal > RATIO_LIMIT * baseline.max(1e-12) {
        return Ok(Some(DivergenceKind::Ratio));
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Hammerstein,
    Wiener,
    HwLaguerre,
    HwArx,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Hammerstein, Family::Wiener, Family::HwLaguerre, Family::HwArx];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Hammerstein => "hammerstein",
            Family::Wiener => "wiener",
            Family::HwLaguerre => "hw_laguerre",
            Family::HwArx => "hw_arx",
        }
    }

    pub fn structure(self) -> (Structure, LinearKind) {
        match self {
            Family::Hammerstein => (Structure::Hammerstein, LinearKind::Laguerre),
            Family::Wiener => (Structure::Wiener, LinearKind::Laguerre),
            Family::HwLaguerre => (Structure::HammersteinWiener, LinearKind::Laguerre),
            Family::HwArx => (Structure::HammersteinWiener, LinearKind::Arx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnstableReason {
    Sensitivity,
    Divergence,
    Singularity,
}

impl UnstableReason {
    pub fn tag(self) -> &'static str {
        match self {
            UnstableReason::Sensitivity => "sensitivity",
            UnstableReason::Divergence => "divergence",
            UnstableReason::Singularity => "singularity",
        }
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::Sensitivity { .. } | Error::NonMonotonic | Error::DegenerateSegment { .. } => {
                UnstableReason::Sensitivity
            }
            Error::Breakdown { .. } => UnstableReason::Divergence,
            _ => UnstableReason::Singularity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub family: Family,
    pub sigma: f64,
    /// Validation MSE against the noiseless plant output on a held-out excitation.
    pub mse: Option<f64>,
    /// Simulation MSE against the noisy identification record.
    pub train_mse: Option<f64>,
    pub stable: bool,
    pub reason: Option<UnstableReason>,
    pub detail: Option<String>,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDispersion {
    pub family: Family,
    pub max_sigma: f64,
    pub mean: Option<f64>,
    pub dispersion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sigmas: Vec<f64>,
    pub families: Vec<Family>,
    /// Row-major by sigma, then family.
    pub cells: Vec<SweepCell>,
    pub dispersion: Vec<FamilyDispersion>,
}

impl SweepReport {
    pub fn cell(&self, family: Family, sigma: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.sigma == sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub seed: u64,
    pub samples: usize,
    pub validation_samples: usize,
    pub dwell: usize,
    pub excitation: ExcitationKind,
    /// Independent repetitions per cell; MSEs are averaged.
    pub repeats: usize,
    /// Upper end of the sigma range used for the dispersion statistic.
    pub dispersion_max_sigma: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: DEFAULT_SAMPLES,
            validation_samples: DEFAULT_SAMPLES,
            dwell: DEFAULT_DWELL,
            excitation: ExcitationKind::PrbsSteps,
            repeats: 1,
            dispersion_max_sigma: 1.0,
        }
    }
}

struct Trial {
    mse: f64,
    train_mse: f64,
    iterations: usize,
    warnings: Vec<Warning>,
}

fn run_trial(
    plant: &ReferencePlant,
    family: Family,
    sigma: f64,
    rep: u64,
    cfg: &IdentConfig,
    settings: &SweepSettings,
) -> std::result::Result<Trial, (UnstableReason, String, usize)> {
    // Common random numbers: excitation and unit noise depend on the repetition only,
    // so rows of the grid differ in disturbance amplitude and nothing else.
    let key = rep;
    let fail = |e: Error| (UnstableReason::from_error(&e), e.to_string(), 0);
    let u = generate_excitation(
        settings.excitation,
        settings.samples,
        plant.input_range,
        derive_seed(settings.seed, "identification-input", key),
        settings.dwell,
    )
    .map_err(fail)?;
    let (data, _) = run_experiment_with_truth(plant, &u, sigma, derive_seed(settings.seed, "noise", key))
        .map_err(fail)?;
    let (structure, linear_kind) = family.structure();
    let cfg = cfg.clone().with_structure(structure, linear_kind);
    let ident = identify(&data.u, &data.y, &cfg).map_err(fail)?;

    let u_val = generate_excitation(
        settings.excitation,
        settings.validation_samples,
        plant.input_range,
        derive_seed(settings.seed, "validation-input", key),
        settings.dwell,
    )
    .map_err(fail)?;
    let clean = plant.truth.simulate(&u_val);
    let predicted = ident.model.simulate(&u_val);
    let residual: Vec<f64> = clean.iter().zip(&predicted).map(|(a, b)| a - b).collect();
    let baseline = ident.mse.max(sigma * sigma).max(1e-12);
    let baseline = if baseline.is_finite() { baseline } else { 1e-12 };
    let iters = ident.iterations;
    if ident.warnings.contains(&Warning::Divergent) {
        return Err((UnstableReason::Divergence, "no finite iterate".into(), iters));
    }
    if let Some(kind) = detect_divergence(&residual, baseline).map_err(fail)? {
        return Err((
            UnstableReason::Divergence,
            format!("validation residual: {kind:?}").to_lowercase(),
            iters,
        ));
    }
    Ok(Trial {
        mse: mse(&clean, &predicted).map_err(fail)?,
        train_mse: ident.mse,
        iterations: iters,
        warnings: ident.warnings,
    })
}

/// Runs one (family, sigma) cell. The outcome depends only on the arguments, not on
/// which other cells are part of the sweep.
pub fn run_cell(
    plant: &ReferencePlant,
    family: Family,
    sigma: f64,
    cfg: &IdentConfig,
    settings: &SweepSettings,
) -> SweepCell {
    #[cfg(not(target_arch = "wasm32"))]
    let start = std::time::Instant::now();
    let mut mses = Vec::new();
    let mut train = Vec::new();
    let mut iterations = 0;
    let mut warnings: Vec<Warning> = Vec::new();
    let mut failure = None;
    for rep in 0..settings.repeats.max(1) as u64 {
        match run_trial(plant, family, sigma, rep, cfg, settings) {
            Ok(t) => {
                mses.push(t.mse);
                train.push(t.train_mse);
                iterations += t.iterations;
                for w in t.warnings {
                    if !warnings.contains(&w) {
                        warnings.push(w);
                    }
                }
            }
            Err((reason, detail, iters)) => {
                iterations += iters;
                failure.get_or_insert((reason, detail));
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    #[cfg(not(target_arch = "wasm32"))]
    let wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    #[cfg(target_arch = "wasm32")]
    let wall_ms = None;
    SweepCell {
        family,
        sigma,
        mse: mean(&mses),
        train_mse: mean(&train),
        stable: failure.is_none(),
        reason: failure.as_ref().map(|f| f.0),
        detail: failure.map(|f| f.1),
        iterations,
        warnings,
        wall_ms,
    }
}

/// Identifies every family at every noise level and scores it on held-out data.
pub fn robustness_sweep(
    plant: &ReferencePlant,
    sigmas: &[f64],
    families: &[Family],
    cfg: &IdentConfig,
    settings: &SweepSettings,
) -> Result<SweepReport> {
    if sigmas.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one sigma".into()));
    }
    if families.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one model family".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {s}")));
    }
    cfg.validate()?;
    let jobs: Vec<(f64, Family)> = sigmas
        .iter()
        .flat_map(|&s| families.iter().map(move |&f| (s, f)))
        .collect();
    let cells = par_map(&jobs, |&(sigma, family)| run_cell(plant, family, sigma, cfg, settings));
    let dispersion = families
        .iter()
        .map(|&family| {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.family == family && c.sigma <= settings.dispersion_max_sigma)
                .filter_map(|c| if c.stable { c.mse } else { None })
                .collect();
            FamilyDispersion {
                family,
                max_sigma: settings.dispersion_max_sigma,
                mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                dispersion: dispersion(&values).ok(),
            }
        })
        .collect();
    Ok(SweepReport {
        sigmas: sigmas.to_vec(),
        families: families.to_vec(),
        cells,
        dispersion,
    })
}

fn render_cell(cell: Option<&SweepCell>) -> String {
    match cell {
        Some(c) if c.stable => c.mse.map_or_else(|| "NA".into(), |m| m.to_string()),
        Some(c) => format!("UNSTABLE({})", c.reason.map_or("unknown", UnstableReason::tag)),
        None => "NA".into(),
    }
}

/// Grid CSV: one row per sigma, one column per family, a dispersion footer in comments.
/// `header` lines are emitted as `# ` comments before the schema line.
pub fn format_report_csv(report: &SweepReport, header: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema={REPORT_SCHEMA}");
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("sigma");
    for f in &report.families {
        let _ = write!(out, ",{}", f.tag());
    }
    out.push('\n');
    for &sigma in &report.sigmas {
        let _ = write!(out, "{sigma}");
        for &f in &report.families {
            let _ = write!(out, ",{}", render_cell(report.cell(f, sigma)));
        }
        out.push('\n');
    }
    for d in &report.dispersion {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(
            out,
            "# dispersion {} sigma<={}: std={} mean={}",
            d.family.tag(),
            d.max_sigma,
            fmt(d.dispersion),
            fmt(d.mean)
        );
    }
    out
}

#[derive(Serialize)]
struct StructuredReport<'a> {
    schema: u32,
    config: &'a serde_json::Value,
    sigmas: &'a [f64],
    families: &'a [Family],
    cells: Vec<SweepCell>,
    dispersion: &'a [FamilyDispersion],
}

/// Full per-cell record as JSON. Wall times are only included when `timings` is set,
/// so that the default output is a pure function of the inputs.
pub fn format_report_json(report: &SweepReport, config: &serde_json::Value, timings: bool) -> String {
    let cells = report
        .cells
        .iter()
        .cloned()
        .map(|mut c| {
            if !timings {
                c.wall_ms = None;
            }
            c
        })
        .collect();
    let doc = StructuredReport {
        schema: REPORT_SCHEMA,
        config,
        sigmas: &report.sigmas,
        families: &report.families,
        cells,
        dispersion: &report.dispersion,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Structured,
}

pub fn write_report(
    report: &SweepReport,
    path: &Path,
    format: ReportFormat,
    config: &serde_json::Value,
    timings: bool,
) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => {
            let header = if config.is_null() {
                Vec::new()
            } else {
                vec![format!("config={config}")]
            };
            format_report_csv(report, &header)
        }
        ReportFormat::Structured => format_report_json(report, config, timings),
    };
    crate::write_atomic(path, text.as_bytes())
}

/// Human-readable grid for terminals.
pub fn format_grid(report: &SweepReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:>8}", "sigma");
    for f in &report.families {
        let _ = write!(out, " {:>24}", f.tag());
    }
    out.push('\n');
    for &sigma in &report.sigmas {
        let _ = write!(out, "{sigma:>8}");
        for &f in &report.families {
            let text = match report.cell(f, sigma) {
                Some(c) if c.stable => c.mse.map_or("NA".into(), |m| format!("{m:.6e}")),
                other => render_cell(other),
            };
            let _ = write!(out, " {text:>24}");
        }
        out.push('\n');
    }
    for d in &report.dispersion {
        if let (Some(std), Some(mean)) = (d.dispersion, d.mean) {
            let _ = writeln!(
                out,
                "dispersion {:<12} std={std:.6e} mean={mean:.6e} (sigma <= {})",
                d.family.tag(),
                d.max_sigma
            );
        }
    }
    out
}
