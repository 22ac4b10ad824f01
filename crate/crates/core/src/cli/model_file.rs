//! Identified-model file (TOML).
//!
//! ```toml
//! schema = 1
//! structure = "hammerstein_wiener"
//! normalization = "unit_dc_gain"
//! warnings = []
//! fit_mse = 0.0123
//! iterations = 14
//!
//! [linear]
//! kind = "laguerre"
//! p = 4
//! psi = 0.7
//! c = [0.4, 0.2, 0.1, 0.05]
//!
//! [input_nl]
//! breakpoints = [7.9, 9.1, 10.3]
//! values = [0.0, 1.2, 3.1]
//!
//! [output_nl]
//! breakpoints = [-0.1, 5.0, 10.1]
//! values = [-0.4, 20.0, 40.3]
//!
//! [config]
//! # effective experiment configuration
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimators::ArxModel;
use crate::laguerre::LaguerreNetwork;
use crate::models::{BlockModel, LinearBlock, Structure, Warning};
use crate::nonlin::PwlFunction;

pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    UnitDcGain,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearSection {
    Laguerre { p: usize, psi: f64, c: Vec<f64> },
    Arx { na: usize, nb: usize, delay: usize, a: Vec<f64>, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub structure: Structure,
    pub normalization: Normalization,
    #[serde(default)]
    pub warnings: Vec<Warning>,
    pub fit_mse: f64,
    pub iterations: usize,
    pub linear: LinearSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_nl: Option<PwlFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_nl: Option<PwlFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
}

impl ModelFile {
    pub fn from_model(model: &BlockModel) -> Self {
        let linear = match model.linear_block() {
            LinearBlock::Laguerre(net) => LinearSection::Laguerre {
                p: net.order(),
                psi: net.psi(),
                c: net.coefficients().iter().copied().collect(),
            },
            LinearBlock::Arx(arx) => LinearSection::Arx {
                na: arx.na,
                nb: arx.nb,
                delay: arx.delay,
                a: arx.a.clone(),
                b: arx.b.clone(),
            },
        };
        Self {
            schema: MODEL_SCHEMA,
            structure: model.structure(),
            normalization: Normalization::None,
            warnings: Vec::new(),
            fit_mse: f64::NAN,
            iterations: 0,
            linear,
            input_nl: model.input_nl().cloned(),
            output_nl: model.output_nl().cloned(),
            config: None,
        }
    }

    /// Rebuilds the block model, checking the structure tag against the maps present.
    pub fn to_model(&self) -> Result<BlockModel> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::Schema(format!("unsupported model schema {}", self.schema)));
        }
        let schema = |e: Error| Error::Schema(format!("model file: {e}"));
        let linear = match &self.linear {
            LinearSection::Laguerre { p, psi, c } => {
                if c.len() != *p {
                    return Err(Error::Schema(format!(
                        "laguerre order {p} but {} coefficients",
                        c.len()
                    )));
                }
                LinearBlock::Laguerre(LaguerreNetwork::with_coefficients(*p, *psi, c).map_err(schema)?)
            }
            LinearSection::Arx { na, nb, delay, a, b } => {
                LinearBlock::Arx(ArxModel::new(*na, *nb, *delay, a.clone(), b.clone()).map_err(schema)?)
            }
        };
        BlockModel::new(self.structure, self.input_nl.clone(), linear, self.output_nl.clone()).map_err(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                path: origin.to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> BlockModel {
        let net = LaguerreNetwork::with_coefficients(3, 0.35, &[0.1 + 0.2, 1.0 / 3.0, -2e-17]).unwrap();
        let xi = PwlFunction::new(vec![0.0, 0.7, 1.9], vec![0.1, 1.0 / 7.0, 2.5e10]).unwrap();
        let psi = PwlFunction::new(vec![-1.0, 0.3, 4.0], vec![-2.0, 0.6, 5.0]).unwrap();
        BlockModel::hammerstein_wiener(xi, LinearBlock::Laguerre(net), psi)
    }

    #[test]
    fn floats_round_trip_exactly() {
        let mut file = ModelFile::from_model(&sample_model());
        file.fit_mse = 0.1 + 0.2;
        let back = ModelFile::from_toml(&file.to_toml(), "t").unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_model().unwrap(), sample_model());
    }

    #[test]
    fn arx_round_trip() {
        let arx = ArxModel::new(2, 1, 1, vec![0.5, -0.1], vec![0.3]).unwrap();
        let model = BlockModel::linear(LinearBlock::Arx(arx));
        let file = ModelFile::from_model(&model);
        let back = ModelFile::from_toml(&file.to_toml(), "t").unwrap();
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn structure_mismatch_is_schema_error() {
        let mut file = ModelFile::from_model(&sample_model());
        file.structure = Structure::Wiener;
        assert!(matches!(file.to_model(), Err(Error::Schema(_))));
        let mut file = ModelFile::from_model(&sample_model());
        file.schema = 2;
        assert!(matches!(file.to_model(), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let text = ModelFile::from_model(&sample_model()).to_toml() + "bogus = 1\n";
        assert!(matches!(ModelFile::from_toml(&text, "t"), Err(Error::Parse { .. })));
    }
}
