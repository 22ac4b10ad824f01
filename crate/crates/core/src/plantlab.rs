//! Experiment data: the synthetic reference plant, excitation signals, seeded output
//! disturbances, and the dataset CSV format.
//!
//! All randomness comes from ChaCha8 seeded with a `u64`; Gaussian samples use the
//! ziggurat transform of `rand_distr::StandardNormal`. Both crates are pinned to exact
//! versions so seeded records are reproducible across platforms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laguerre::LaguerreNetwork;
use crate::models::{BlockModel, LinearBlock};
use crate::nonlin::PwlFunction;

pub const GENERATOR_VERSION: &str = concat!("laguerre-sysid-", env!("CARGO_PKG_VERSION"), "/chacha8-ziggurat");
pub const DATASET_SCHEMA: u32 = 1;
/// Sampling interval of generated records, seconds.
pub const DEFAULT_DT: f64 = 1.0;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_DWELL: usize = 50;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub plant: Option<String>,
    pub generator: Option<String>,
    /// Any other `# key=value` header lines, in key order.
    pub extra: BTreeMap<String, String>,
}

/// A sampled input/output record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub dt: f64,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, dt: f64, meta: DatasetMeta) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Schema("dataset must contain at least one sample".into()));
        }
        if u.len() != y.len() {
            return Err(Error::Schema(format!(
                "input has {} samples but output has {}",
                u.len(),
                y.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Schema(format!("sampling interval must be positive, got {dt}")));
        }
        Ok(Self { u, y, dt, meta })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Synthetic stand-in for the crusher: a Hammerstein-Wiener system with a convex input
/// map (CSS in mm), a Laguerre core, and a saturating output map (capacity in t/h).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlant {
    pub id: String,
    pub truth: BlockModel,
    pub input_range: (f64, f64),
    pub output_scale: f64,
}

pub const PLANT_ORDER: usize = 4;
pub const PLANT_PSI: f64 = 0.7;
pub const PLANT_INPUT_RANGE: (f64, f64) = (8.0, 16.0);
pub const PLANT_OUTPUT_SCALE: f64 = 40.0;

/// Deterministic reference plant for `seed`.
pub fn make_reference_plant(seed: u64) -> ReferencePlant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = PLANT_INPUT_RANGE;
    let span = hi - lo;

    // Input map: convex in CSS and nearly flat at the small-gap end. Few nodes, placed
    // off any uniform grid, so an 8-node fit keeps a small irreducible bias.
    let in_nodes = 5;
    let in_lo = lo - 0.05 * span;
    let in_hi = hi + 0.05 * span;
    let in_step = (in_hi - in_lo) / (in_nodes - 1) as f64;
    let breakpoints: Vec<f64> = (0..in_nodes)
        .map(|i| {
            let jitter = if i == 0 || i == in_nodes - 1 {
                0.0
            } else {
                rng.random_range(-0.3..0.3) * in_step
            };
            in_lo + in_step * i as f64 + jitter
        })
        .collect();
    let curvature = rng.random_range(2.2..2.6);
    let values = breakpoints
        .iter()
        .map(|&b| {
            let x = (b - lo) / span;
            10.0 * (0.05 * x + 0.95 * x.abs().powf(curvature) * x.signum())
        })
        .collect();
    let input_nl = PwlFunction::new(breakpoints, values).expect("increasing nodes");

    // Laguerre core with unit steady-state gain.
    let base = [1.0, 0.6, 0.3, 0.15];
    let c: Vec<f64> = base
        .iter()
        .map(|b| b * (1.0 + rng.random_range(-0.15..0.15)))
        .collect();
    let mut net = LaguerreNetwork::with_coefficients(PLANT_ORDER, PLANT_PSI, &c).expect("valid order");
    let gain = net.dc_gain();
    let c: Vec<f64> = c.iter().map(|v| v / gain).collect();
    net.set_coefficients(&c).expect("same order");

    // Output map: mild saturation over the reachable linear-output range.
    let w_lo = input_nl.eval(lo) - 1.0;
    let w_hi = input_nl.eval(hi) + 1.0;
    let out_nodes = 4;
    let out_step = (w_hi - w_lo) / (out_nodes - 1) as f64;
    let knee = rng.random_range(6.3..7.7);
    let saturate = |w: f64| PLANT_OUTPUT_SCALE * (1.0 - (-w / knee).exp()) / (1.0 - (-10.0 / knee).exp());
    let out_breaks: Vec<f64> = (0..out_nodes)
        .map(|i| {
            let jitter = if i == 0 || i == out_nodes - 1 {
                0.0
            } else {
                rng.random_range(-0.3..0.3) * out_step
            };
            w_lo + out_step * i as f64 + jitter
        })
        .collect();
    let out_values = out_breaks.iter().map(|&w| saturate(w)).collect();
    let output_nl = PwlFunction::new(out_breaks, out_values).expect("increasing nodes");

    ReferencePlant {
        id: format!("reference-v1-seed{seed}"),
        truth: BlockModel::hammerstein_wiener(input_nl, LinearBlock::Laguerre(net), output_nl),
        input_range: PLANT_INPUT_RANGE,
        output_scale: PLANT_OUTPUT_SCALE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    PrbsSteps,
    Staircase,
    Impulse,
    Step,
}

/// Excitation signal of length `n` within `range`.
///
/// `prbs_steps` draws a uniform level every `dwell` samples; `staircase` climbs from the
/// lower to the upper bound in `dwell`-long steps; `impulse` is the range midpoint at
/// `k = 0` on the lower bound; `step` sits at the upper bound (a step up from the lower
/// bound just before the record starts).
pub fn generate_excitation(
    kind: ExcitationKind,
    n: usize,
    range: (f64, f64),
    seed: u64,
    dwell: usize,
) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if n == 0 {
        return Err(Error::InvalidArgument("excitation length must be at least 1".into()));
    }
    if dwell == 0 {
        return Err(Error::InvalidArgument("dwell must be at least 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidArgument(format!("degenerate excitation range [{lo}, {hi}]")));
    }
    Ok(match kind {
        ExcitationKind::PrbsSteps => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let level = rng.random_range(lo..hi);
                let len = dwell.min(n - out.len());
                out.extend(std::iter::repeat_n(level, len));
            }
            out
        }
        ExcitationKind::Staircase => {
            let steps = n.div_ceil(dwell);
            (0..n)
                .map(|k| {
                    if steps == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * (k / dwell) as f64 / (steps - 1) as f64
                    }
                })
                .collect()
        }
        ExcitationKind::Impulse => {
            let mut out = vec![lo; n];
            out[0] = 0.5 * (lo + hi);
            out
        }
        ExcitationKind::Step => vec![hi; n],
    })
}

/// Gaussian disturbance samples, `sigma * N(0, 1)`.
pub fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Simulates the plant on `u` and adds seeded Gaussian noise to the output.
/// Returns the dataset together with the noiseless output.
pub fn run_experiment_with_truth(
    plant: &ReferencePlant,
    u: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    let clean = plant.truth.simulate(u);
    let y = if sigma == 0.0 {
        clean.clone()
    } else {
        clean
            .iter()
            .zip(gaussian_noise(u.len(), sigma, seed))
            .map(|(c, n)| c + n)
            .collect()
    };
    let meta = DatasetMeta {
        seed: Some(seed),
        sigma: Some(sigma),
        plant: Some(plant.id.clone()),
        generator: Some(GENERATOR_VERSION.to_string()),
        extra: BTreeMap::new(),
    };
    Ok((Dataset::new(u.to_vec(), y, DEFAULT_DT, meta)?, clean))
}

pub fn run_experiment(plant: &ReferencePlant, u: &[f64], sigma: f64, seed: u64) -> Result<Dataset> {
    run_experiment_with_truth(plant, u, sigma, seed).map(|(d, _)| d)
}

/// Mixes a base seed with a stream tag and a value (SplitMix64 finalizer), so experiment
/// cells get independent, reproducible streams.
pub fn derive_seed(base: u64, tag: &str, value: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for b in tag.bytes().chain(value.to_le_bytes()) {
        h = splitmix(h ^ b as u64);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema={DATASET_SCHEMA}");
    if let Some(seed) = dataset.meta.seed {
        let _ = writeln!(out, "# seed={seed}");
    }
    if let Some(sigma) = dataset.meta.sigma {
        let _ = writeln!(out, "# sigma={sigma}");
    }
    if let Some(plant) = &dataset.meta.plant {
        let _ = writeln!(out, "# plant={plant}");
    }
    let _ = writeln!(out, "# dt={}", dataset.dt);
    if let Some(generator) = &dataset.meta.generator {
        let _ = writeln!(out, "# generator={generator}");
    }
    for (k, v) in &dataset.meta.extra {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("k,u,y\n");
    for (k, (u, y)) in dataset.u.iter().zip(&dataset.y).enumerate() {
        let _ = writeln!(out, "{k},{u},{y}");
    }
    out
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let schema_err = |line: usize, message: String| Error::Schema(format!("{origin}:{line}: {message}"));
    let mut meta = DatasetMeta::default();
    let mut dt = DEFAULT_DT;
    let mut header_seen = false;
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(comment) = line.strip_prefix('#') {
            if header_seen {
                return Err(parse_err(line_no, "comment after the column header".into()));
            }
            let Some((key, value)) = comment.trim().split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "schema" => {
                    if value != DATASET_SCHEMA.to_string() {
                        return Err(schema_err(line_no, format!("unsupported dataset schema {value}")));
                    }
                }
                "seed" => {
                    meta.seed = Some(value.parse().map_err(|_| parse_err(line_no, format!("bad seed `{value}`")))?)
                }
                "sigma" => {
                    meta.sigma = Some(value.parse().map_err(|_| parse_err(line_no, format!("bad sigma `{value}`")))?)
                }
                "dt" => dt = value.parse().map_err(|_| parse_err(line_no, format!("bad dt `{value}`")))?,
                "plant" => meta.plant = Some(value.to_string()),
                "generator" => meta.generator = Some(value.to_string()),
                _ => {
                    meta.extra.insert(key.to_string(), value.to_string());
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["k", "u", "y"] {
                return Err(schema_err(line_no, format!("expected header `k,u,y`, found `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(schema_err(line_no, format!("expected 3 columns, found {}", fields.len())));
        }
        let k: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("non-numeric index `{}`", fields[0])))?;
        if k != u.len() {
            return Err(schema_err(line_no, format!("expected sample index {}, found {k}", u.len())));
        }
        let num = |s: &str, name: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(line_no, format!("non-numeric {name} `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line_no, format!("non-finite {name} `{s}`")))
            }
        };
        u.push(num(fields[1], "u")?);
        y.push(num(fields[2], "y")?);
    }
    if !header_seen {
        return Err(Error::Schema(format!("{origin}: missing `k,u,y` header")));
    }
    Dataset::new(u, y, dt, meta).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{origin}: {m}")),
        other => other,
    })
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    crate::write_atomic(path, format_dataset(dataset).as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}
