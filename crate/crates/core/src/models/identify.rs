//! Alternating least-squares identification of block-oriented models.
//!
//! Every iteration solves linear subproblems in turn: the linear block by RLS on the
//! signals seen through the current static maps, the input map by least squares on the
//! filtered hat basis, and the output map by least squares from the linear-block output
//! to the measurements. The best iterate (by simulation MSE) is kept and then polished
//! by Levenberg-Marquardt on the simulation error, with a few rounds of psi re-selection
//! once the maps are close.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::refine::{refine, RefineSettings};
use super::{BlockModel, LinearBlock, LinearKind, Structure};
use crate::error::{Error, Result};
use crate::estimators::{
    batch_least_squares, default_psi_grid, fit_arx, select_psi, RlsSettings,
};
use crate::evaluate::mse;
use crate::laguerre::LaguerreNetwork;
use crate::nonlin::{grid_for_signal, pwl_fit, Monotonicity, PwlFunction, DEFAULT_NODES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentConfig {
    pub structure: Structure,
    pub linear_kind: LinearKind,
    /// Laguerre order `p`.
    pub order: usize,
    pub psi_grid: Vec<f64>,
    pub na: usize,
    pub nb: usize,
    pub delay: usize,
    pub input_nodes: usize,
    pub output_nodes: usize,
    pub lambda: f64,
    pub delta: f64,
    pub checkpoint_stride: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Minimum samples per model parameter.
    pub min_samples_factor: usize,
    /// Leading samples left out of the output-map fit, where the simulated linear
    /// output is still dominated by the zero initial state.
    pub washout: usize,
    /// Levenberg-Marquardt steps polishing the best alternation iterate; 0 disables it.
    pub refine_steps: usize,
    pub freeze_input_nl: bool,
    pub freeze_output_nl: bool,
}

impl Default for IdentConfig {
    fn default() -> Self {
        let rls = RlsSettings::default();
        Self {
            structure: Structure::HammersteinWiener,
            linear_kind: LinearKind::Laguerre,
            order: 4,
            psi_grid: default_psi_grid(),
            na: 2,
            nb: 2,
            delay: 1,
            input_nodes: DEFAULT_NODES,
            output_nodes: DEFAULT_NODES,
            lambda: rls.lambda,
            delta: rls.delta,
            checkpoint_stride: rls.checkpoint_stride,
            tol: 1e-6,
            max_iters: 50,
            min_samples_factor: 10,
            washout: 50,
            refine_steps: 100,
            freeze_input_nl: false,
            freeze_output_nl: false,
        }
    }
}

impl IdentConfig {
    pub fn rls(&self) -> RlsSettings {
        RlsSettings {
            lambda: self.lambda,
            delta: self.delta,
            checkpoint_stride: self.checkpoint_stride,
        }
    }

    pub fn with_structure(mut self, structure: Structure, linear_kind: LinearKind) -> Self {
        self.structure = structure;
        self.linear_kind = linear_kind;
        self
    }

    pub fn param_count(&self) -> usize {
        let linear = match self.linear_kind {
            LinearKind::Laguerre => self.order,
            LinearKind::Arx => self.na + self.nb,
        };
        linear
            + if self.structure.has_input_nl() { self.input_nodes } else { 0 }
            + if self.structure.has_output_nl() { self.output_nodes } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.order == 0 {
            return bad("order must be at least 1".into());
        }
        if self.psi_grid.is_empty() || self.psi_grid.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("psi_grid must be non-empty with every entry in [0, 1)".into());
        }
        if self.na + self.nb == 0 {
            return bad("ARX orders na + nb must be positive".into());
        }
        if self.input_nodes < 2 || self.output_nodes < 2 {
            return bad("nonlinearities need at least 2 nodes".into());
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol must be non-negative, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// The iteration limit was reached before the MSE settled.
    NonConverged,
    /// The linear block has zero gain; the model was left unnormalized.
    ZeroGain,
    /// A nonlinearity refit was singular and the previous map was kept.
    DegenerateNonlinearityFit,
    /// No iterate produced a finite simulation.
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub model: BlockModel,
    /// Simulation MSE of `model` on the identification record.
    pub mse: f64,
    pub iterations: usize,
    /// Best-so-far simulation MSE after each iteration (non-increasing).
    pub history: Vec<f64>,
    pub warnings: Vec<Warning>,
    pub normalized: bool,
}

pub fn identify_hammerstein(u: &[f64], y: &[f64], cfg: &IdentConfig) -> Result<Identification> {
    identify_structure(u, y, cfg, Structure::Hammerstein)
}

pub fn identify_wiener(u: &[f64], y: &[f64], cfg: &IdentConfig) -> Result<Identification> {
    identify_structure(u, y, cfg, Structure::Wiener)
}

pub fn identify_hw(u: &[f64], y: &[f64], cfg: &IdentConfig) -> Result<Identification> {
    identify_structure(u, y, cfg, Structure::HammersteinWiener)
}

/// Dispatches on `cfg.structure`.
pub fn identify(u: &[f64], y: &[f64], cfg: &IdentConfig) -> Result<Identification> {
    identify_structure(u, y, cfg, cfg.structure)
}

struct Iterate {
    input_nl: Option<PwlFunction>,
    linear: Option<LinearBlock>,
    output_nl: Option<PwlFunction>,
}

impl Iterate {
    fn model(&self, structure: Structure) -> BlockModel {
        BlockModel::new(
            structure,
            self.input_nl.clone(),
            self.linear.clone().expect("linear block fitted"),
            self.output_nl.clone(),
        )
        .expect("iterate matches structure")
    }
}

/// Fits the linear block from `v` to `z`. With `center`, both signals have their means
/// removed first; the static maps absorb the offset on the next refit.
fn fit_linear(v: &[f64], z: &[f64], cfg: &IdentConfig, center: bool) -> Result<LinearBlock> {
    let (v, z) = if center {
        (centered(v), centered(z))
    } else {
        (v.to_vec(), z.to_vec())
    };
    let (v, z) = (v.as_slice(), z.as_slice());
    match cfg.linear_kind {
        LinearKind::Laguerre => {
            let fit = select_psi(v, z, cfg.order, &cfg.psi_grid, &cfg.rls())?;
            Ok(LinearBlock::Laguerre(LaguerreNetwork::with_coefficients(
                cfg.order, fit.psi, &fit.c,
            )?))
        }
        LinearKind::Arx => Ok(LinearBlock::Arx(fit_arx(v, z, cfg.na, cfg.nb, cfg.delay)?)),
    }
}

/// Input-map node values minimizing `|target - L(xi(u))|^2` for a fixed linear block.
fn refit_input(
    u: &[f64],
    target: &[f64],
    current: &PwlFunction,
    linear: &LinearBlock,
) -> Result<PwlFunction> {
    let hats = current.design_matrix(u);
    let mut design = DMatrix::zeros(u.len(), current.nodes());
    for j in 0..current.nodes() {
        let filtered = linear.simulate(hats.column(j).as_slice());
        design.set_column(j, &DVector::from_vec(filtered));
    }
    let values = batch_least_squares(&design, &DVector::from_column_slice(target))?;
    PwlFunction::new(current.breakpoints().to_vec(), values.as_slice().to_vec())
}

/// Rounds of psi re-selection after the polish.
const PSI_ROUNDS: usize = 3;

/// `model` with its Laguerre block re-estimated on the grid, from the input-map output
/// to the inverted measurements; `None` when the grid search keeps the current psi or
/// the block is not a Laguerre network.
fn reselect_psi(model: &BlockModel, u: &[f64], y: &[f64], cfg: &IdentConfig) -> Option<BlockModel> {
    let LinearBlock::Laguerre(net) = model.linear_block() else { return None };
    let z = match model.output_nl() {
        Some(g) => g.inverse_many(y).ok()?,
        None => y.to_vec(),
    };
    let v = match model.input_nl() {
        Some(f) => f.eval_many(u),
        None => u.to_vec(),
    };
    let fit = select_psi(&v, &z, cfg.order, &cfg.psi_grid, &cfg.rls()).ok()?;
    if fit.psi == net.psi() {
        return None;
    }
    let linear = LaguerreNetwork::with_coefficients(cfg.order, fit.psi, &fit.c).ok()?;
    BlockModel::new(
        model.structure(),
        model.input_nl().cloned(),
        LinearBlock::Laguerre(linear),
        model.output_nl().cloned(),
    )
    .ok()
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| x - mean).collect()
}

fn note(list: &mut Vec<Warning>, w: Warning) {
    if !list.contains(&w) {
        list.push(w);
    }
}

fn identify_structure(
    u: &[f64],
    y: &[f64],
    cfg: &IdentConfig,
    structure: Structure,
) -> Result<Identification> {
    cfg.validate()?;
    if u.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    let cfg = IdentConfig {
        structure,
        ..cfg.clone()
    };
    let min_samples = cfg.min_samples_factor * cfg.param_count();
    if u.is_empty() || u.len() < min_samples {
        return Err(Error::InvalidArgument(format!(
            "{} samples, at least {min_samples} required",
            u.len()
        )));
    }

    let mut warnings = Vec::new();

    let mut it = Iterate {
        input_nl: if structure.has_input_nl() {
            Some(PwlFunction::identity_on(grid_for_signal(u, cfg.input_nodes)?)?)
        } else {
            None
        },
        linear: None,
        output_nl: if structure.has_output_nl() {
            Some(PwlFunction::identity_on(grid_for_signal(y, cfg.output_nodes)?)?)
        } else {
            None
        },
    };
    let adjustable = (structure.has_input_nl() && !cfg.freeze_input_nl)
        || (structure.has_output_nl() && !cfg.freeze_output_nl);
    let max_iters = if adjustable { cfg.max_iters } else { 1 };
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let floor = scale * f64::EPSILON * f64::EPSILON;

    let mut best: Option<(f64, BlockModel)> = None;
    let mut history = Vec::new();
    let mut previous = f64::INFINITY;
    let mut converged = !adjustable;
    let mut iterations = 0;

    for iteration in 1..=max_iters {
        iterations = iteration;
        let z = match &it.output_nl {
            Some(g) => g
                .inverse_many(y)
                .map_err(|_| Error::Sensitivity { iteration })?,
            None => y.to_vec(),
        };
        let v = match &it.input_nl {
            Some(f) => f.eval_many(u),
            None => u.to_vec(),
        };
        // The Laguerre and ARX blocks carry no intercept, so the very first fit (identity
        // maps) works on mean-removed signals.
        let linear = fit_linear(&v, &z, &cfg, adjustable && iteration == 1)?;

        if let (Some(xi), false) = (&it.input_nl, cfg.freeze_input_nl) {
            match refit_input(u, &z, xi, &linear) {
                Ok(f) => it.input_nl = Some(f),
                Err(Error::Singular { .. }) => note(&mut warnings, Warning::DegenerateNonlinearityFit),
                Err(e) => return Err(e),
            }
        }
        if let (Some(_), false) = (&it.output_nl, cfg.freeze_output_nl) {
            let w = match &it.input_nl {
                Some(f) => linear.simulate(&f.eval_many(u)),
                None => linear.simulate(u),
            };
            let skip = cfg.washout.min(w.len().saturating_sub(cfg.output_nodes));
            let (w_fit, y_fit) = (&w[skip..], &y[skip..]);
            let refit = grid_for_signal(w_fit, cfg.output_nodes).and_then(|g| pwl_fit(w_fit, y_fit, &g));
            match refit {
                Ok(g) => {
                    if g.monotonicity() == Monotonicity::NonMonotonic {
                        return Err(Error::Sensitivity { iteration });
                    }
                    it.output_nl = Some(g);
                }
                Err(Error::Singular { .. } | Error::StarvedSegments { .. } | Error::InvalidArgument(_)) => {
                    note(&mut warnings, Warning::DegenerateNonlinearityFit)
                }
                Err(e) => return Err(e),
            }
        }
        it.linear = Some(linear);

        let model = it.model(structure);
        let current = mse(y, &model.simulate(u)).unwrap_or(f64::INFINITY);
        let current = if current.is_finite() { current } else { f64::INFINITY };
        if best.as_ref().is_none_or(|(b, _)| current < *b) {
            best = Some((current, model));
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |(b, _)| *b));

        if current <= floor {
            converged = true;
            break;
        }
        if previous.is_finite() && current.is_finite() {
            let rel = (previous - current) / previous;
            if rel.abs() < cfg.tol {
                converged = true;
                break;
            }
        }
        previous = current;
    }
    let (mut best_mse, mut model) = best.expect("at least one iteration");
    if adjustable && cfg.refine_steps > 0 && best_mse.is_finite() {
        let settings = RefineSettings {
            steps: cfg.refine_steps,
            free_input: structure.has_input_nl() && !cfg.freeze_input_nl,
            free_output: structure.has_output_nl() && !cfg.freeze_output_nl,
            floor,
            tol: cfg.tol,
        };
        let polished = refine(&model, best_mse, u, y, &settings);
        if polished.mse < best_mse {
            // The polish stops on the same relative tolerance, so a settled polish
            // counts as convergence.
            converged |= polished.settled;
            model = polished.model;
            best_mse = polished.mse;
        }
        // The polish keeps psi fixed. Once the maps are close, a fresh grid search on
        // the signals they imply can move it; a move is kept only if it simulates better.
        for _ in 0..PSI_ROUNDS {
            if best_mse <= floor {
                break;
            }
            let Some(candidate) = reselect_psi(&model, u, y, &cfg) else { break };
            let start = mse(y, &candidate.simulate(u)).unwrap_or(f64::INFINITY);
            let start = if start.is_finite() { start } else { f64::INFINITY };
            let polished = refine(&candidate, start, u, y, &settings);
            if polished.mse >= best_mse {
                break;
            }
            converged |= polished.settled;
            model = polished.model;
            best_mse = polished.mse;
        }
    }
    if !converged {
        note(&mut warnings, Warning::NonConverged);
    }

    if !best_mse.is_finite() {
        note(&mut warnings, Warning::Divergent);
    }
    let absorber_frozen = match structure {
        Structure::Hammerstein => cfg.freeze_input_nl,
        Structure::Wiener => cfg.freeze_output_nl,
        Structure::HammersteinWiener => cfg.freeze_input_nl || cfg.freeze_output_nl,
        Structure::Linear => true,
    };
    let (model, normalized) = if absorber_frozen {
        (model, false)
    } else {
        match model.normalize() {
            Ok(m) => (m, true),
            Err(Error::ZeroGain { .. }) => {
                note(&mut warnings, Warning::ZeroGain);
                (model, false)
            }
            Err(e) => return Err(e),
        }
    };
    let final_mse = if normalized {
        mse(y, &model.simulate(u)).unwrap_or(f64::INFINITY)
    } else {
        best_mse
    };
    Ok(Identification {
        model,
        mse: final_mse,
        iterations,
        history,
        warnings,
        normalized,
    })
}
