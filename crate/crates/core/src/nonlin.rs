//! Static piecewise-linear nonlinearities.
//!
//! A [`PwlFunction`] is continuous, linear between breakpoints, and continues its end
//! segments linearly outside the node range. Fitting is global least squares in the
//! hat-function basis on a fixed breakpoint grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::batch_least_squares;

const MIN_GAP: f64 = 1e-12;
const SLOPE_TOL: f64 = 1e-12;

/// Default number of nodes for a fitted nonlinearity.
pub const DEFAULT_NODES: usize = 8;
/// Relative margin added on both sides of a signal's range when placing nodes.
pub const GRID_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPwl")]
pub struct PwlFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPwl {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawPwl> for PwlFunction {
    type Error = Error;

    fn try_from(raw: RawPwl) -> Result<Self> {
        PwlFunction::new(raw.breakpoints, raw.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    NonMonotonic,
}

/// `nodes` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, nodes: usize) -> Result<Vec<f64>> {
    if nodes < 2 {
        return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi - lo <= MIN_GAP {
        return Err(Error::InvalidArgument(format!("degenerate grid range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (nodes - 1) as f64;
    Ok((0..nodes)
        .map(|i| if i == nodes - 1 { hi } else { lo + step * i as f64 })
        .collect())
}

/// Uniform grid spanning the range of `xs` widened by [`GRID_MARGIN`] on each side.
pub fn grid_for_signal(xs: &[f64], nodes: usize) -> Result<Vec<f64>> {
    let (lo, hi) = signal_range(xs)?;
    let mut span = hi - lo;
    if span <= MIN_GAP * lo.abs().max(1.0) {
        span = lo.abs().max(1.0);
    }
    let pad = GRID_MARGIN * span;
    uniform_grid(lo - pad, hi + pad, nodes)
}

pub(crate) fn signal_range(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty signal".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        if !x.is_finite() {
            return Err(Error::InvalidArgument("signal contains a non-finite value".into()));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok((lo, hi))
}

impl PwlFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidArgument("a PWL function needs at least 2 nodes".into()));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("PWL nodes must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] - w[0] <= MIN_GAP) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// The identity map on the given breakpoints.
    pub fn identity_on(breakpoints: Vec<f64>) -> Result<Self> {
        let values = breakpoints.clone();
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.nodes() - 1).map(|i| self.slope(i)).collect()
    }

    fn slope(&self, segment: usize) -> f64 {
        (self.values[segment + 1] - self.values[segment])
            / (self.breakpoints[segment + 1] - self.breakpoints[segment])
    }

    /// Segment used to evaluate `x`; points outside the node range map to the end segments.
    fn segment_of(&self, x: f64) -> usize {
        let last = self.nodes() - 2;
        // Number of interior breakpoints <= x.
        let idx = self.breakpoints[1..=last].partition_point(|&b| b <= x);
        idx.min(last)
    }

    /// Hat-basis weights `(segment, left, right)` such that
    /// `f(x) = left * values[segment] + right * values[segment + 1]`.
    pub fn basis_weights(&self, x: f64) -> (usize, f64, f64) {
        let i = self.segment_of(x);
        let t = (x - self.breakpoints[i]) / (self.breakpoints[i + 1] - self.breakpoints[i]);
        (i, 1.0 - t, t)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, wl, wr) = self.basis_weights(x);
        wl * self.values[i] + wr * self.values[i + 1]
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Hat-basis design matrix for `xs` on this function's breakpoints (N x nodes).
    pub fn design_matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        hat_design(&self.breakpoints, xs)
    }

    pub fn monotonicity(&self) -> Monotonicity {
        let slopes = self.slopes();
        if slopes.iter().all(|&s| s > SLOPE_TOL) {
            Monotonicity::Increasing
        } else if slopes.iter().all(|&s| s < -SLOPE_TOL) {
            Monotonicity::Decreasing
        } else {
            Monotonicity::NonMonotonic
        }
    }

    /// Solves `f(x) = y` for monotonic `f`, extrapolating the end segments.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let increasing = match self.monotonicity() {
            Monotonicity::Increasing => true,
            Monotonicity::Decreasing => false,
            Monotonicity::NonMonotonic => return Err(Error::NonMonotonic),
        };
        let last = self.nodes() - 2;
        let interior = &self.values[1..=last];
        let idx = if increasing {
            interior.partition_point(|&v| v <= y)
        } else {
            interior.partition_point(|&v| v >= y)
        };
        let i = idx.min(last);
        let slope = self.slope(i);
        if slope.abs() < SLOPE_TOL {
            return Err(Error::DegenerateSegment { segment: i, y });
        }
        Ok(self.breakpoints[i] + (y - self.values[i]) / slope)
    }

    pub fn inverse_many(&self, ys: &[f64]) -> Result<Vec<f64>> {
        ys.iter().map(|&y| self.inverse(y)).collect()
    }

    /// `x -> alpha * f(x)`.
    pub fn scale_values(&self, alpha: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    /// `x -> f(alpha * x)`; the breakpoints become `b / alpha` (reversed when `alpha < 0`).
    pub fn compose_scaled_input(&self, alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot rescale PWL input by {alpha}")));
        }
        let mut nodes: Vec<(f64, f64)> = self
            .breakpoints
            .iter()
            .zip(&self.values)
            .map(|(&b, &v)| (b / alpha, v))
            .collect();
        if alpha < 0.0 {
            nodes.reverse();
        }
        let (b, v) = nodes.into_iter().unzip();
        Self::new(b, v)
    }
}

pub(crate) fn hat_design(breakpoints: &[f64], xs: &[f64]) -> DMatrix<f64> {
    let template = PwlFunction {
        breakpoints: breakpoints.to_vec(),
        values: vec![0.0; breakpoints.len()],
    };
    let mut m = DMatrix::zeros(xs.len(), breakpoints.len());
    for (k, &x) in xs.iter().enumerate() {
        let (i, wl, wr) = template.basis_weights(x);
        m[(k, i)] = wl;
        m[(k, i + 1)] = wr;
    }
    m
}

/// Indices of segments `[b_i, b_{i+1}]` that contain no sample. Samples beyond the node
/// range count toward the end segments.
pub(crate) fn starved_segments(breakpoints: &[f64], xs: &[f64]) -> Vec<usize> {
    let segments = breakpoints.len() - 1;
    let mut hit = vec![false; segments];
    for &x in xs {
        for (s, flag) in hit.iter_mut().enumerate() {
            let lo_ok = s == 0 || x >= breakpoints[s];
            let hi_ok = s == segments - 1 || x <= breakpoints[s + 1];
            if lo_ok && hi_ok {
                *flag = true;
            }
        }
    }
    hit.iter()
        .enumerate()
        .filter(|(_, &h)| !h)
        .map(|(s, _)| s)
        .collect()
}

/// Least-squares PWL fit of `ys` against `xs` on the given breakpoints.
pub fn pwl_fit(xs: &[f64], ys: &[f64], breakpoints: &[f64]) -> Result<PwlFunction> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "xs has {} samples but ys has {}",
            xs.len(),
            ys.len()
        )));
    }
    // Validates the grid.
    PwlFunction::identity_on(breakpoints.to_vec())?;
    if xs.len() < breakpoints.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot determine {} node values",
            xs.len(),
            breakpoints.len()
        )));
    }
    let design = hat_design(breakpoints, xs);
    let target = nalgebra::DVector::from_column_slice(ys);
    match batch_least_squares(&design, &target) {
        Ok(values) => PwlFunction::new(breakpoints.to_vec(), values.as_slice().to_vec()),
        Err(Error::Singular { ratio }) => {
            let segments = starved_segments(breakpoints, xs);
            if segments.is_empty() {
                Err(Error::Singular { ratio })
            } else {
                Err(Error::StarvedSegments { segments })
            }
        }
        Err(e) => Err(e),
    }
}
