//! Parameter estimation: exponentially weighted recursive least squares, batch least
//! squares (the RLS oracle), ARX fitting, and Laguerre scaling-factor selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::mse;
use crate::laguerre::{check_psi, LaguerreNetwork};
use crate::par_map;

pub const DEFAULT_LAMBDA: f64 = 0.999;
pub const DEFAULT_DELTA: f64 = 1e4;
pub const DEFAULT_CHECKPOINT_STRIDE: usize = 100;
/// Smallest/largest singular value ratio below which a regressor matrix is singular.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    theta: DVector<f64>,
    covariance: DMatrix<f64>,
    lambda: f64,
    count: usize,
}

impl RlsState {
    pub fn new(n: usize, delta: f64, lambda: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("RLS needs at least one parameter".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial covariance scale must be positive, got {delta}"
            )));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            theta: DVector::zeros(n),
            covariance: DMatrix::identity(n, n) * delta,
            lambda,
            count: 0,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// One RLS step; returns the a-priori error `y - phi' theta_old`.
    pub fn update(&mut self, regressor: &[f64], y: f64) -> Result<f64> {
        let n = self.dim();
        if regressor.len() != n {
            return Err(Error::InvalidArgument(format!(
                "regressor has length {}, expected {n}",
                regressor.len()
            )));
        }
        let phi = DVector::from_column_slice(regressor);
        let p_phi = &self.covariance * &phi;
        let denominator = self.lambda + phi.dot(&p_phi);
        if !(denominator > 0.0 && denominator.is_finite()) {
            return Err(Error::Breakdown { denominator });
        }
        let gain = &p_phi / denominator;
        let error = y - phi.dot(&self.theta);
        self.theta.axpy(error, &gain, 1.0);
        self.covariance.ger(-1.0, &gain, &p_phi, 1.0);
        self.covariance /= self.lambda;
        // Re-symmetrize.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (self.covariance[(i, j)] + self.covariance[(j, i)]);
                self.covariance[(i, j)] = m;
                self.covariance[(j, i)] = m;
            }
        }
        self.count += 1;
        Ok(error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlsSettings {
    pub lambda: f64,
    pub delta: f64,
    /// Samples between coefficient snapshots considered for the final estimate.
    pub checkpoint_stride: usize,
}

impl Default for RlsSettings {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            delta: DEFAULT_DELTA,
            checkpoint_stride: DEFAULT_CHECKPOINT_STRIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreFit {
    pub psi: f64,
    pub c: Vec<f64>,
    /// A-priori RLS prediction errors, one per sample.
    pub error_trace: Vec<f64>,
    /// MSE of `c' L[k]` against the observations.
    pub mse: f64,
    /// Final RLS estimate, before snapshot selection.
    pub final_theta: Vec<f64>,
}

fn check_signals(u: &[f64], y: &[f64]) -> Result<()> {
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if u.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Runs RLS on the Laguerre states driven by `u` and returns the coefficient snapshot
/// (every `checkpoint_stride` samples, plus the final one) with the smallest MSE on the
/// whole record. Ties keep the final estimate.
pub fn rls_identify_laguerre(
    u: &[f64],
    y: &[f64],
    p: usize,
    psi: f64,
    settings: &RlsSettings,
) -> Result<LaguerreFit> {
    check_signals(u, y)?;
    let net = LaguerreNetwork::new(p, psi)?;
    let states = net.state_trajectory(u);
    let mut rls = RlsState::new(p, settings.delta, settings.lambda)?;
    let stride = settings.checkpoint_stride.max(1);
    let mut snapshots = Vec::new();
    let mut error_trace = Vec::with_capacity(u.len());
    let mut row = vec![0.0; p];
    for (k, &yk) in y.iter().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = states[(k, j)];
        }
        error_trace.push(rls.update(&row, yk)?);
        if (k + 1) % stride == 0 && k + 1 < y.len() {
            snapshots.push(rls.theta().clone());
        }
    }
    let target = DVector::from_column_slice(y);
    let score = |theta: &DVector<f64>| -> f64 {
        let fitted = &states * theta;
        mse(target.as_slice(), fitted.as_slice()).unwrap_or(f64::INFINITY)
    };
    let final_theta = rls.theta().clone();
    let mut best = (score(&final_theta), final_theta.clone());
    for snap in snapshots {
        let s = score(&snap);
        if s < best.0 {
            best = (s, snap);
        }
    }
    Ok(LaguerreFit {
        psi,
        c: best.1.as_slice().to_vec(),
        error_trace,
        mse: best.0,
        final_theta: final_theta.as_slice().to_vec(),
    })
}

/// Least-squares solution of `regressors * theta ~ y` through a QR factorization.
/// Rank deficiency (relative singular value below [`RANK_TOLERANCE`]) is an error.
pub fn batch_least_squares(regressors: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = regressors.shape();
    if cols == 0 {
        return Err(Error::InvalidArgument("regressor matrix has no columns".into()));
    }
    if rows != y.len() {
        return Err(Error::InvalidArgument(format!(
            "regressor matrix has {rows} rows but {} observations",
            y.len()
        )));
    }
    if rows < cols {
        return Err(Error::InvalidArgument(format!(
            "{rows} observations cannot determine {cols} parameters"
        )));
    }
    let qr = regressors.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::Singular { ratio });
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or(Error::Singular { ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArxModel {
    pub na: usize,
    pub nb: usize,
    pub delay: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ArxModel {
    pub fn new(na: usize, nb: usize, delay: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if na + nb == 0 {
            return Err(Error::InvalidArgument("ARX model needs na + nb > 0".into()));
        }
        if a.len() != na || b.len() != nb {
            return Err(Error::InvalidArgument(format!(
                "ARX({na},{nb}) given {} a and {} b coefficients",
                a.len(),
                b.len()
            )));
        }
        Ok(Self { na, nb, delay, a, b })
    }

    /// First sample index with a complete regressor history.
    pub fn first_complete(&self) -> usize {
        arx_first_complete(self.na, self.nb, self.delay)
    }

    /// One-step-ahead prediction from measured `y` and `u`; lags before the record are zero.
    pub fn predict(&self, u: &[f64], y: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|k| {
                let mut acc = 0.0;
                for (i, ai) in self.a.iter().enumerate() {
                    acc += ai * lagged(y, k, i + 1);
                }
                for (j, bj) in self.b.iter().enumerate() {
                    acc += bj * lagged(u, k, self.delay + j);
                }
                acc
            })
            .collect()
    }

    /// Free-run simulation from zero initial conditions.
    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(u.len());
        for k in 0..u.len() {
            let mut acc = 0.0;
            for (i, ai) in self.a.iter().enumerate() {
                acc += ai * lagged(&y, k, i + 1);
            }
            for (j, bj) in self.b.iter().enumerate() {
                acc += bj * lagged(u, k, self.delay + j);
            }
            y.push(acc);
        }
        y
    }

    /// `sum(b) / (1 - sum(a))`; infinite when the denominator vanishes.
    pub fn dc_gain(&self) -> f64 {
        let den = 1.0 - self.a.iter().sum::<f64>();
        self.b.iter().sum::<f64>() / den
    }

    pub fn scale_input_gain(&self, alpha: f64) -> Self {
        Self {
            b: self.b.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }
}

fn lagged(x: &[f64], k: usize, lag: usize) -> f64 {
    if lag <= k {
        x[k - lag]
    } else {
        0.0
    }
}

fn arx_first_complete(na: usize, nb: usize, delay: usize) -> usize {
    let input_lag = if nb > 0 { delay + nb - 1 } else { 0 };
    na.max(input_lag)
}

/// ARX regressor rows `[y[k-1..k-na], u[k-delay..k-delay-nb+1]]` for every sample with
/// a complete history, together with the matching targets.
pub fn arx_regressors(
    u: &[f64],
    y: &[f64],
    na: usize,
    nb: usize,
    delay: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let start = arx_first_complete(na, nb, delay);
    let rows = u.len().saturating_sub(start);
    let mut x = DMatrix::zeros(rows, na + nb);
    let mut t = DVector::zeros(rows);
    for (r, k) in (start..u.len()).enumerate() {
        for i in 0..na {
            x[(r, i)] = y[k - i - 1];
        }
        for j in 0..nb {
            x[(r, na + j)] = u[k - delay - j];
        }
        t[r] = y[k];
    }
    (x, t)
}

pub fn fit_arx(u: &[f64], y: &[f64], na: usize, nb: usize, delay: usize) -> Result<ArxModel> {
    check_signals(u, y)?;
    if na + nb == 0 {
        return Err(Error::InvalidArgument("ARX model needs na + nb > 0".into()));
    }
    if u.len() <= na + nb + delay {
        return Err(Error::InvalidArgument(format!(
            "{} samples are too few for ARX({na},{nb}) with delay {delay}",
            u.len()
        )));
    }
    let (x, t) = arx_regressors(u, y, na, nb, delay);
    let theta = batch_least_squares(&x, &t)?;
    ArxModel::new(
        na,
        nb,
        delay,
        theta.rows(0, na).iter().copied().collect(),
        theta.rows(na, nb).iter().copied().collect(),
    )
}

/// Default scaling-factor grid `{0.0, 0.05, ..., 0.95}`.
pub fn default_psi_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 20.0).collect()
}

/// Picks the grid point whose RLS estimate simulates the record with the smallest MSE.
/// Ties go to the smaller scaling factor; fails only if every grid point fails.
pub fn select_psi(
    u: &[f64],
    y: &[f64],
    p: usize,
    psi_grid: &[f64],
    settings: &RlsSettings,
) -> Result<LaguerreFit> {
    if psi_grid.is_empty() {
        return Err(Error::InvalidArgument("empty psi grid".into()));
    }
    for &psi in psi_grid {
        check_psi(psi)?;
    }
    let fits = par_map(psi_grid, |&psi| rls_identify_laguerre(u, y, p, psi, settings));
    let mut best: Option<LaguerreFit> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => fit.mse < b.mse || (fit.mse == b.mse && fit.psi < b.psi),
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Err(first_err.expect("non-empty grid")),
    }
}
