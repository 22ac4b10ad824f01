//! Block-oriented models: an optional static input map, a linear dynamic block
//! (Laguerre network or ARX), and an optional static output map.

mod identify;
mod refine;

pub use identify::{
    identify, identify_hammerstein, identify_hw, identify_wiener, IdentConfig, Identification,
    Warning,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ArxModel;
use crate::laguerre::LaguerreNetwork;
use crate::nonlin::PwlFunction;

const GAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Hammerstein,
    Wiener,
    HammersteinWiener,
    Linear,
}

impl Structure {
    pub fn has_input_nl(self) -> bool {
        matches!(self, Structure::Hammerstein | Structure::HammersteinWiener)
    }

    pub fn has_output_nl(self) -> bool {
        matches!(self, Structure::Wiener | Structure::HammersteinWiener)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Hammerstein => "hammerstein",
            Structure::Wiener => "wiener",
            Structure::HammersteinWiener => "hammerstein_wiener",
            Structure::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Laguerre,
    Arx,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearBlock {
    Laguerre(LaguerreNetwork),
    Arx(ArxModel),
}

impl LinearBlock {
    pub fn kind(&self) -> LinearKind {
        match self {
            LinearBlock::Laguerre(_) => LinearKind::Laguerre,
            LinearBlock::Arx(_) => LinearKind::Arx,
        }
    }

    /// Simulation from zero initial conditions.
    pub fn simulate(&self, v: &[f64]) -> Vec<f64> {
        match self {
            LinearBlock::Laguerre(net) => {
                let mut net = net.clone();
                net.reset();
                net.simulate(v)
            }
            LinearBlock::Arx(arx) => arx.simulate(v),
        }
    }

    pub fn dc_gain(&self) -> f64 {
        match self {
            LinearBlock::Laguerre(net) => net.dc_gain(),
            LinearBlock::Arx(arx) => arx.dc_gain(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LinearBlock::Laguerre(net) => net.order(),
            LinearBlock::Arx(arx) => arx.na + arx.nb,
        }
    }

    /// The same dynamics with the output multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            LinearBlock::Laguerre(net) => {
                let c: Vec<f64> = net.coefficients().iter().map(|v| v * alpha).collect();
                let mut net = net.clone();
                net.set_coefficients(&c).expect("same order");
                LinearBlock::Laguerre(net)
            }
            LinearBlock::Arx(arx) => LinearBlock::Arx(arx.scale_input_gain(alpha)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    structure: Structure,
    input_nl: Option<PwlFunction>,
    linear: LinearBlock,
    output_nl: Option<PwlFunction>,
}

impl BlockModel {
    pub fn new(
        structure: Structure,
        input_nl: Option<PwlFunction>,
        linear: LinearBlock,
        output_nl: Option<PwlFunction>,
    ) -> Result<Self> {
        if structure.has_input_nl() != input_nl.is_some()
            || structure.has_output_nl() != output_nl.is_some()
        {
            return Err(Error::InvalidArgument(format!(
                "{} model given input map: {}, output map: {}",
                structure.as_str(),
                input_nl.is_some(),
                output_nl.is_some()
            )));
        }
        Ok(Self {
            structure,
            input_nl,
            linear,
            output_nl,
        })
    }

    pub fn hammerstein(input_nl: PwlFunction, linear: LinearBlock) -> Self {
        Self::new(Structure::Hammerstein, Some(input_nl), linear, None).expect("consistent")
    }

    pub fn wiener(linear: LinearBlock, output_nl: PwlFunction) -> Self {
        Self::new(Structure::Wiener, None, linear, Some(output_nl)).expect("consistent")
    }

    pub fn hammerstein_wiener(
        input_nl: PwlFunction,
        linear: LinearBlock,
        output_nl: PwlFunction,
    ) -> Self {
        Self::new(Structure::HammersteinWiener, Some(input_nl), linear, Some(output_nl))
            .expect("consistent")
    }

    pub fn linear(linear: LinearBlock) -> Self {
        Self::new(Structure::Linear, None, linear, None).expect("consistent")
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn input_nl(&self) -> Option<&PwlFunction> {
        self.input_nl.as_ref()
    }

    pub fn output_nl(&self) -> Option<&PwlFunction> {
        self.output_nl.as_ref()
    }

    pub fn linear_block(&self) -> &LinearBlock {
        &self.linear
    }

    pub fn param_count(&self) -> usize {
        self.linear.param_count()
            + self.input_nl.as_ref().map_or(0, PwlFunction::nodes)
            + self.output_nl.as_ref().map_or(0, PwlFunction::nodes)
    }

    /// Output of the linear block, i.e. the signal entering the output map.
    pub fn linear_output(&self, u: &[f64]) -> Vec<f64> {
        match &self.input_nl {
            Some(f) => self.linear.simulate(&f.eval_many(u)),
            None => self.linear.simulate(u),
        }
    }

    /// Simulates the model from zero initial conditions.
    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        let w = self.linear_output(u);
        match &self.output_nl {
            Some(g) => g.eval_many(&w),
            None => w,
        }
    }

    /// Rescales the linear block to unit steady-state gain without changing the
    /// input-output map.
    ///
    /// The removed gain goes into the input map when there is one, otherwise into the
    /// output map's breakpoints. A Hammerstein-Wiener model additionally rescales its input
    /// map to unit chord slope (first to last node), moving that factor into the output
    /// map's breakpoints. A purely linear model has nowhere to put the gain and is
    /// returned as is.
    pub fn normalize(&self) -> Result<Self> {
        if self.structure == Structure::Linear {
            return Ok(self.clone());
        }
        let gain = self.linear.dc_gain();
        if !(gain.abs() > GAIN_TOL && gain.is_finite()) {
            return Err(Error::ZeroGain { gain });
        }
        let linear = self.linear.scaled(1.0 / gain);
        let mut input_nl = self.input_nl.clone();
        let mut output_nl = self.output_nl.clone();
        match (&mut input_nl, &mut output_nl) {
            (Some(xi), None) => *xi = xi.scale_values(gain),
            (None, Some(psi)) => *psi = psi.compose_scaled_input(gain)?,
            (Some(xi), Some(psi)) => {
                let scaled = xi.scale_values(gain);
                let slope = chord_slope(&scaled);
                if slope.abs() > GAIN_TOL && slope.is_finite() {
                    *xi = scaled.scale_values(1.0 / slope);
                    *psi = psi.compose_scaled_input(slope)?;
                } else {
                    *xi = scaled;
                }
            }
            (None, None) => unreachable!("linear structure handled above"),
        }
        Ok(Self {
            structure: self.structure,
            input_nl,
            linear,
            output_nl,
        })
    }
}

fn chord_slope(f: &PwlFunction) -> f64 {
    let b = f.breakpoints();
    let v = f.values();
    let n = b.len() - 1;
    (v[n] - v[0]) / (b[n] - b[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag(p: usize, psi: f64, c: &[f64]) -> LinearBlock {
        LinearBlock::Laguerre(LaguerreNetwork::with_coefficients(p, psi, c).unwrap())
    }

    fn pwl(b: &[f64], v: &[f64]) -> PwlFunction {
        PwlFunction::new(b.to_vec(), v.to_vec()).unwrap()
    }

    fn input(n: usize) -> Vec<f64> {
        (0..n).map(|k| (((k * 37) % 23) as f64 - 11.0) / 5.0).collect()
    }

    #[test]
    fn structure_invariants_enforced() {
        let lin = lag(2, 0.5, &[1.0, 0.0]);
        let f = pwl(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(BlockModel::new(Structure::Hammerstein, None, lin.clone(), None).is_err());
        assert!(BlockModel::new(Structure::Wiener, Some(f.clone()), lin.clone(), None).is_err());
        assert!(BlockModel::new(Structure::Linear, None, lin.clone(), Some(f)).is_err());
    }

    #[test]
    fn hw_with_identity_maps_reduces_to_linear() {
        let lin = lag(3, 0.6, &[0.5, -1.0, 0.25]);
        let id = pwl(&[-3.0, 3.0], &[-3.0, 3.0]);
        let m = BlockModel::hammerstein_wiener(id.clone(), lin.clone(), id);
        let u = input(300);
        let LinearBlock::Laguerre(net) = &lin else { unreachable!() };
        let mut net = net.clone();
        let expected = net.simulate(&u);
        for (a, b) in m.simulate(&u).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hammerstein_doubling_is_superposition() {
        let lin = lag(3, 0.4, &[1.0, 0.3, -0.2]);
        let m = BlockModel::hammerstein(pwl(&[-1.0, 1.0], &[-2.0, 2.0]), lin.clone());
        let u = input(200);
        let doubled: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let expected = lin.simulate(&doubled);
        for (a, b) in m.simulate(&u).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wiener_offset_on_zero_input() {
        let m = BlockModel::wiener(lag(2, 0.5, &[1.0, 1.0]), pwl(&[0.0, 1.0], &[1.0, 2.0]));
        assert!(m.simulate(&[0.0; 25]).iter().all(|&y| y == 1.0));
    }

    #[test]
    fn normalization_examples() {
        // DC gain of a first-order network with c = [k] is k * sqrt(theta) / (1 - psi).
        let psi: f64 = 0.5;
        let k = 2.0 * (1.0 - psi) / (1.0 - psi * psi).sqrt();
        let m = BlockModel::hammerstein(pwl(&[0.0, 1.0], &[0.0, 1.0]), lag(1, psi, &[k]));
        assert!((m.linear_block().dc_gain() - 2.0).abs() < 1e-12);
        let n = m.normalize().unwrap();
        assert!((n.linear_block().dc_gain() - 1.0).abs() < 1e-12);
        assert!((n.input_nl().unwrap().slopes()[0] - 2.0).abs() < 1e-12);
        let u = input(400);
        for (a, b) in m.simulate(&u).iter().zip(n.simulate(&u)) {
            assert!((a - b).abs() < 1e-9);
        }

        let again = n.normalize().unwrap();
        let LinearBlock::Laguerre(a) = again.linear_block() else { unreachable!() };
        let LinearBlock::Laguerre(b) = n.linear_block() else { unreachable!() };
        assert!((a.coefficients() - b.coefficients()).amax() < 1e-12);

        let zero = BlockModel::hammerstein(pwl(&[0.0, 1.0], &[0.0, 1.0]), lag(2, 0.3, &[0.0, 0.0]));
        assert!(matches!(zero.normalize(), Err(Error::ZeroGain { .. })));
    }

    #[test]
    fn normalization_preserves_wiener_and_hw_maps() {
        let u = input(500);
        let lin = lag(3, 0.7, &[-0.4, 1.1, 0.3]);
        let psi_map = pwl(&[-2.0, 0.0, 1.0, 4.0], &[-1.0, 0.0, 2.0, 2.5]);
        let xi = pwl(&[-3.0, -1.0, 2.0, 3.0], &[0.5, 1.0, 3.0, 5.0]);
        for m in [
            BlockModel::wiener(lin.clone(), psi_map.clone()),
            BlockModel::hammerstein_wiener(xi, lin, psi_map),
        ] {
            let n = m.normalize().unwrap();
            assert!((n.linear_block().dc_gain() - 1.0).abs() < 1e-9);
            for (a, b) in m.simulate(&u).iter().zip(n.simulate(&u)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn arx_block_normalizes() {
        let arx = ArxModel::new(2, 2, 1, vec![0.9, -0.2], vec![0.5, 0.25]).unwrap();
        let m = BlockModel::hammerstein(pwl(&[-2.0, 0.0, 2.0], &[-1.0, 0.0, 3.0]), LinearBlock::Arx(arx));
        let n = m.normalize().unwrap();
        assert!((n.linear_block().dc_gain() - 1.0).abs() < 1e-12);
        let u = input(300);
        for (a, b) in m.simulate(&u).iter().zip(n.simulate(&u)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
