//! Discrete-time Laguerre network in state-space form.
//!
//! The network keeps `p` filter states `L[k]` driven by a scalar input:
//!
//! ```text
//! L[k+1] = Phi L[k] + Gamma u[k]
//! y[k]   = c' L[k]
//! ```
//!
//! `Phi` is lower triangular with `psi` on the diagonal, `theta = 1 - psi^2` on the
//! subdiagonal and `(-psi)^(i-j-1) theta` below it; `Gamma[i] = sqrt(theta) (-psi)^i`.
//! With this normalization the impulse responses of the states are orthonormal in l2.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreNetwork {
    psi: f64,
    phi: DMatrix<f64>,
    gamma: DVector<f64>,
    c: DVector<f64>,
    state: DVector<f64>,
}

pub(crate) fn check_psi(psi: f64) -> Result<()> {
    if psi.is_finite() && (0.0..1.0).contains(&psi) {
        Ok(())
    } else {
        Err(Error::UnstablePsi(psi))
    }
}

impl LaguerreNetwork {
    /// Builds an order-`p` network with zero coefficients and zero state.
    pub fn new(p: usize, psi: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("Laguerre order must be at least 1".into()));
        }
        check_psi(psi)?;
        let theta = 1.0 - psi * psi;
        let phi = DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => psi,
            std::cmp::Ordering::Greater => (-psi).powi((i - j - 1) as i32) * theta,
        });
        let gamma = DVector::from_fn(p, |i, _| theta.sqrt() * (-psi).powi(i as i32));
        Ok(Self {
            psi,
            phi,
            gamma,
            c: DVector::zeros(p),
            state: DVector::zeros(p),
        })
    }

    pub fn with_coefficients(p: usize, psi: f64, c: &[f64]) -> Result<Self> {
        let mut net = Self::new(p, psi)?;
        net.set_coefficients(c)?;
        Ok(net)
    }

    pub fn order(&self) -> usize {
        self.gamma.len()
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn theta(&self) -> f64 {
        1.0 - self.psi * self.psi
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn set_coefficients(&mut self, c: &[f64]) -> Result<()> {
        if c.len() != self.order() {
            return Err(Error::InvalidArgument(format!(
                "expected {} Laguerre coefficients, got {}",
                self.order(),
                c.len()
            )));
        }
        self.c = DVector::from_column_slice(c);
        Ok(())
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.order() {
            return Err(Error::InvalidArgument(format!(
                "expected state of length {}, got {}",
                self.order(),
                state.len()
            )));
        }
        self.state = DVector::from_column_slice(state);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.state.fill(0.0);
    }

    /// Advances the state by one sample and returns `c' L[k]` for the pre-update state.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.c.dot(&self.state);
        advance(&self.phi, &self.gamma, &mut self.state, u);
        y
    }

    pub fn simulate(&mut self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&uk| self.step(uk)).collect()
    }

    /// Row `k` holds the pre-update state `L[k]` for input `u`, starting from the stored state.
    /// The stored state is left untouched.
    pub fn state_trajectory(&self, u: &[f64]) -> DMatrix<f64> {
        let p = self.order();
        let mut out = DMatrix::zeros(u.len(), p);
        let mut state = self.state.clone();
        for (k, &uk) in u.iter().enumerate() {
            out.row_mut(k).copy_from(&state.transpose());
            advance(&self.phi, &self.gamma, &mut state, uk);
        }
        out
    }

    /// Steady-state gain of each state component, `(I - Phi)^-1 Gamma`.
    pub fn state_gains(&self) -> DVector<f64> {
        let p = self.order();
        let a = DMatrix::identity(p, p) - &self.phi;
        // Lower triangular with diagonal 1 - psi > 0.
        a.solve_lower_triangular(&self.gamma)
            .expect("I - Phi has a positive diagonal")
    }

    pub fn dc_gain(&self) -> f64 {
        self.c.dot(&self.state_gains())
    }
}

fn advance(phi: &DMatrix<f64>, gamma: &DVector<f64>, state: &mut DVector<f64>, u: f64) {
    let p = gamma.len();
    // Descending rows: row i only reads entries j <= i, which are still the old values.
    for i in (0..p).rev() {
        let mut acc = gamma[i] * u;
        for j in 0..=i {
            acc += phi[(i, j)] * state[j];
        }
        state[i] = acc;
    }
}

/// Impulse responses of the `p` states over `n` steps; column `j` is `l_j[1..=n]`
/// after a unit impulse enters the zero state.
pub fn impulse_response_matrix(p: usize, psi: f64, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let net = LaguerreNetwork::new(p, psi)?;
    let mut state = DVector::zeros(p);
    advance(&net.phi, &net.gamma, &mut state, 1.0);
    let mut out = DMatrix::zeros(n, p);
    for k in 0..n {
        out.row_mut(k).copy_from(&state.transpose());
        advance(&net.phi, &net.gamma, &mut state, 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn delay_line_at_zero_psi() {
        let net = LaguerreNetwork::new(3, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(net.phi(), &expected);
        assert_eq!(net.gamma().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn second_order_half_psi() {
        let net = LaguerreNetwork::new(2, 0.5).unwrap();
        assert!(close(net.theta(), 0.75, 1e-15));
        let phi = net.phi();
        assert_eq!(phi[(0, 0)], 0.5);
        assert_eq!(phi[(0, 1)], 0.0);
        assert!(close(phi[(1, 0)], 0.75, 1e-15));
        assert_eq!(phi[(1, 1)], 0.5);
        assert!(close(net.gamma()[0], 0.866_025_403_784_438_6, 1e-12));
        assert!(close(net.gamma()[1], -0.433_012_701_892_219_3, 1e-12));
    }

    #[test]
    fn first_order_high_psi() {
        let net = LaguerreNetwork::new(1, 0.9).unwrap();
        assert_eq!(net.phi()[(0, 0)], 0.9);
        assert!(close(net.gamma()[0], 0.19_f64.sqrt(), 1e-15));
        assert!(close(net.gamma()[0], 0.43589, 1e-5));
    }

    #[test]
    fn phi_pattern_below_subdiagonal() {
        let psi = 0.4;
        let theta = 1.0 - psi * psi;
        let net = LaguerreNetwork::new(5, psi).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j {
                    psi
                } else if i == j + 1 {
                    theta
                } else if i > j + 1 {
                    (-psi).powi((i - j - 1) as i32) * theta
                } else {
                    0.0
                };
                assert!(close(net.phi()[(i, j)], expected, 1e-15), "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(LaguerreNetwork::new(0, 0.5), Err(Error::InvalidArgument(_))));
        assert!(matches!(LaguerreNetwork::new(2, 1.0), Err(Error::UnstablePsi(_))));
        assert!(matches!(LaguerreNetwork::new(2, -0.1), Err(Error::UnstablePsi(_))));
        assert!(matches!(LaguerreNetwork::new(2, f64::NAN), Err(Error::UnstablePsi(_))));
    }

    #[test]
    fn step_examples() {
        let mut net = LaguerreNetwork::new(3, 0.3).unwrap();
        assert_eq!(net.step(0.0), 0.0);
        assert!(net.state().iter().all(|&s| s == 0.0));

        let mut net = LaguerreNetwork::with_coefficients(1, 0.5, &[1.0]).unwrap();
        net.set_state(&[1.0]).unwrap();
        assert_eq!(net.step(0.0), 1.0);
        assert_eq!(net.state().as_slice(), &[0.5]);

        let mut net = LaguerreNetwork::with_coefficients(2, 0.0, &[0.0, 1.0]).unwrap();
        net.set_state(&[1.0, 0.0]).unwrap();
        assert_eq!(net.step(1.0), 0.0);
        assert_eq!(net.state().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn simulate_impulses() {
        let mut impulse = vec![0.0; 6];
        impulse[0] = 1.0;

        let mut net = LaguerreNetwork::with_coefficients(1, 0.0, &[1.0]).unwrap();
        assert_eq!(net.simulate(&impulse), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let mut net = LaguerreNetwork::with_coefficients(1, 0.5, &[1.0]).unwrap();
        let y = net.simulate(&impulse);
        let expected = [0.0, 0.866_025_403_784_438_6, 0.433_012_701_892_219_3, 0.216_506_350_946_109_66];
        for (a, b) in y.iter().zip(expected) {
            assert!(close(*a, b, 1e-12));
        }

        let mut net = LaguerreNetwork::with_coefficients(2, 0.5, &[1.0, 1.0]).unwrap();
        assert!(net.simulate(&[0.0; 10]).iter().all(|&v| v == 0.0));
        assert!(net.simulate(&[]).is_empty());
    }

    #[test]
    fn simulate_leaves_final_state() {
        let u = [1.0, -0.5, 0.25, 2.0];
        let mut a = LaguerreNetwork::with_coefficients(3, 0.6, &[1.0, 2.0, 3.0]).unwrap();
        let mut b = a.clone();
        a.simulate(&u);
        for &uk in &u {
            b.step(uk);
        }
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn impulse_matrix_small_cases() {
        let m = impulse_response_matrix(1, 0.0, 3).unwrap();
        assert_eq!(m.column(0).as_slice(), &[1.0, 0.0, 0.0]);

        let m = impulse_response_matrix(2, 0.0, 2).unwrap();
        assert_eq!(m.column(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(m.column(1).as_slice(), &[0.0, 1.0]);
        assert_eq!(m.column(0).dot(&m.column(1)), 0.0);

        assert!(impulse_response_matrix(2, 0.5, 0).is_err());
    }

    #[test]
    fn state_trajectory_matches_stepping() {
        let mut net = LaguerreNetwork::with_coefficients(3, 0.7, &[0.3, -1.0, 2.0]).unwrap();
        let u: Vec<f64> = (0..50).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let traj = net.state_trajectory(&u);
        let y = net.simulate(&u);
        for k in 0..u.len() {
            let yk = traj.row(k).dot(&net.coefficients().transpose());
            assert!(close(yk, y[k], 1e-12));
        }
    }

    #[test]
    fn dc_gain_matches_long_step_response() {
        let mut net = LaguerreNetwork::with_coefficients(4, 0.7, &[1.0, 0.5, -0.2, 0.1]).unwrap();
        let y = net.simulate(&vec![1.0; 400]);
        assert!(close(*y.last().unwrap(), net.dc_gain(), 1e-12));
    }
}
