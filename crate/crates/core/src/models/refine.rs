//! Levenberg-Marquardt polish of a block model on its simulation error.
//!
//! Alternating least squares stalls when both static maps are free: each subproblem
//! sees the other maps' errors through an inverse, and the fixed point it creeps
//! towards is reached only slowly. Here every free parameter moves at once, including
//! the span of the output map's uniform grid, whose placement the alternation ties to
//! the range of the linear-block output.

use nalgebra::{DMatrix, DVector};

use super::{BlockModel, LinearBlock};
use crate::error::Result;
use crate::estimators::ArxModel;
use crate::evaluate::mse;
use crate::nonlin::{uniform_grid, Monotonicity, PwlFunction};

#[derive(Debug, Clone, Copy)]
pub(crate) struct RefineSettings {
    pub steps: usize,
    pub free_input: bool,
    pub free_output: bool,
    /// Stop once the MSE is at or below this.
    pub floor: f64,
    pub tol: f64,
}

/// Parameter vector: input-map values, linear-block parameters, output-map values, and
/// the output map's first and last breakpoint (its grid stays uniform).
struct Layout {
    input: usize,
    linear: usize,
    output: usize,
}

impl Layout {
    fn grid(&self) -> usize {
        if self.output > 0 { 2 } else { 0 }
    }

    fn total(&self) -> usize {
        self.input + self.linear + self.output + self.grid()
    }
}

fn linear_params(block: &LinearBlock) -> Vec<f64> {
    match block {
        LinearBlock::Laguerre(net) => net.coefficients().iter().copied().collect(),
        LinearBlock::Arx(arx) => arx.a.iter().chain(&arx.b).copied().collect(),
    }
}

fn with_linear_params(block: &LinearBlock, theta: &[f64]) -> LinearBlock {
    match block {
        LinearBlock::Laguerre(net) => {
            let mut net = net.clone();
            net.set_coefficients(theta).expect("same order");
            LinearBlock::Laguerre(net)
        }
        LinearBlock::Arx(arx) => {
            let (a, b) = theta.split_at(arx.na);
            LinearBlock::Arx(ArxModel { a: a.to_vec(), b: b.to_vec(), ..arx.clone() })
        }
    }
}

/// Columns `dw/dtheta` of the linear-block output `w` for input `v`.
fn linear_jacobian(block: &LinearBlock, v: &[f64], w: &[f64]) -> DMatrix<f64> {
    match block {
        LinearBlock::Laguerre(net) => {
            let mut net = net.clone();
            net.reset();
            net.state_trajectory(v)
        }
        LinearBlock::Arx(arx) => {
            // w = A^-1 B v, so dw/da_i = A^-1 q^-i w and dw/db_j = A^-1 q^-(d+j) v.
            let filter = |delay: usize, x: &[f64]| {
                ArxModel { na: arx.na, nb: 1, delay, a: arx.a.clone(), b: vec![1.0] }.simulate(x)
            };
            let mut cols = Vec::with_capacity(arx.na + arx.nb);
            for i in 1..=arx.na {
                cols.push(filter(i, w));
            }
            for j in 0..arx.nb {
                cols.push(filter(arx.delay + j, v));
            }
            DMatrix::from_fn(v.len(), cols.len(), |r, c| cols[c][r])
        }
    }
}

fn output_slopes(g: &PwlFunction, w: &[f64]) -> Vec<f64> {
    let slopes = g.slopes();
    w.iter().map(|&x| slopes[g.basis_weights(x).0]).collect()
}

fn jacobian(model: &BlockModel, u: &[f64], layout: &Layout) -> DMatrix<f64> {
    let n = u.len();
    let v = match model.input_nl() {
        Some(f) => f.eval_many(u),
        None => u.to_vec(),
    };
    let linear = model.linear_block();
    let w = linear.simulate(&v);
    let gain = match model.output_nl() {
        Some(g) => output_slopes(g, &w),
        None => vec![1.0; n],
    };
    let mut jac = DMatrix::zeros(n, layout.total());
    let mut col = 0;
    if layout.input > 0 {
        let xi = model.input_nl().expect("free input map");
        let hats = xi.design_matrix(u);
        for j in 0..layout.input {
            let filtered = linear.simulate(hats.column(j).as_slice());
            for k in 0..n {
                jac[(k, col)] = gain[k] * filtered[k];
            }
            col += 1;
        }
    }
    let lin = linear_jacobian(linear, &v, &w);
    for j in 0..layout.linear {
        for k in 0..n {
            jac[(k, col)] = gain[k] * lin[(k, j)];
        }
        col += 1;
    }
    if layout.output > 0 {
        let g = model.output_nl().expect("free output map");
        let hats = g.design_matrix(&w);
        jac.columns_mut(col, layout.output).copy_from(&hats);
        col += layout.output;
        // Moving breakpoint b_i changes f(w) by -s (1 - t) on its right segment and by
        // -s t on its left one; b_i = lo + (hi - lo) i / (n - 1).
        let last = (g.nodes() - 1) as f64;
        for k in 0..n {
            let (i, left, right) = g.basis_weights(w[k]);
            let s = gain[k];
            let (di, dj) = (-s * left, -s * right);
            let (fi, fj) = (i as f64 / last, (i + 1) as f64 / last);
            jac[(k, col)] = di * (1.0 - fi) + dj * (1.0 - fj);
            jac[(k, col + 1)] = di * fi + dj * fj;
        }
    }
    jac
}

fn rebuild(model: &BlockModel, layout: &Layout, theta: &[f64]) -> Result<BlockModel> {
    let (xi, rest) = theta.split_at(layout.input);
    let (lin, rest) = rest.split_at(layout.linear);
    let (psi, ends) = rest.split_at(layout.output);
    let input_nl = match model.input_nl() {
        Some(f) if layout.input > 0 => Some(PwlFunction::new(f.breakpoints().to_vec(), xi.to_vec())?),
        other => other.cloned(),
    };
    let output_nl = match model.output_nl() {
        Some(_) if layout.output > 0 => Some(PwlFunction::new(uniform_grid(ends[0], ends[1], psi.len())?, psi.to_vec())?),
        other => other.cloned(),
    };
    BlockModel::new(
        model.structure(),
        input_nl,
        with_linear_params(model.linear_block(), lin),
        output_nl,
    )
}

fn params(model: &BlockModel, layout: &Layout) -> Vec<f64> {
    let mut theta = Vec::with_capacity(layout.total());
    if layout.input > 0 {
        theta.extend_from_slice(model.input_nl().expect("free input map").values());
    }
    theta.extend(linear_params(model.linear_block()));
    if layout.output > 0 {
        let g = model.output_nl().expect("free output map");
        theta.extend_from_slice(g.values());
        let b = g.breakpoints();
        theta.extend([b[0], b[b.len() - 1]]);
    }
    theta
}

fn sim_mse(model: &BlockModel, u: &[f64], y: &[f64]) -> f64 {
    let value = mse(y, &model.simulate(u)).unwrap_or(f64::INFINITY);
    if value.is_finite() { value } else { f64::INFINITY }
}

/// An acceptable model keeps an invertible output map.
fn admissible(model: &BlockModel) -> bool {
    model
        .output_nl()
        .is_none_or(|g| g.monotonicity() != Monotonicity::NonMonotonic)
}

/// Result of [`refine`]. `settled` is false when the step budget ran out first.
pub(crate) struct Refined {
    pub model: BlockModel,
    pub mse: f64,
    pub settled: bool,
}

/// Polishes `model`, whose simulation MSE is `start`; never returns anything worse.
pub(crate) fn refine(model: &BlockModel, start: f64, u: &[f64], y: &[f64], s: &RefineSettings) -> Refined {
    let layout = Layout {
        input: if s.free_input { model.input_nl().map_or(0, PwlFunction::nodes) } else { 0 },
        linear: model.linear_block().param_count(),
        output: if s.free_output { model.output_nl().map_or(0, PwlFunction::nodes) } else { 0 },
    };
    let (mut best, mut best_mse) = (model.clone(), start);
    let mut mu = 1e-3;
    for _ in 0..s.steps {
        if best_mse <= s.floor {
            return Refined { model: best, mse: best_mse, settled: true };
        }
        let jac = jacobian(&best, u, &layout);
        let resid = DVector::from_iterator(y.len(), y.iter().zip(best.simulate(u)).map(|(a, b)| a - b));
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&resid);
        let theta = params(&best, &layout);
        let mut progress = false;
        // Raise the damping until a step helps; give up after a dozen refusals.
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = chol.solve(&jtr);
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            if let Ok(candidate) = rebuild(&best, &layout, &trial) {
                let value = sim_mse(&candidate, u, y);
                if value < best_mse && admissible(&candidate) {
                    progress = (best_mse - value) / best_mse >= s.tol;
                    best = candidate;
                    best_mse = value;
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
            }
            mu *= 4.0;
        }
        if !progress {
            return Refined { model: best, mse: best_mse, settled: true };
        }
    }
    let settled = best_mse <= s.floor;
    Refined { model: best, mse: best_mse, settled }
}
