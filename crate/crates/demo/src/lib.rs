//! Browser bindings for the identification library. Each exported function takes plain
//! numbers or arrays and returns a JSON string that the static page in `www/` plots.

use laguerre_sysid::evaluate::Family;
use laguerre_sysid::nonlin::{grid_for_signal, Monotonicity};
use laguerre_sysid::plantlab::{derive_seed, generate_excitation, run_experiment_with_truth, ExcitationKind};
use laguerre_sysid::{identify, impulse_response_matrix, make_reference_plant, mse, pwl_fit, IdentConfig, LinearBlock, PwlFunction};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Reference plant used by the page.
pub const PLANT_SEED: u64 = 42;

#[derive(Debug, Serialize)]
pub struct BasisView {
    pub p: usize,
    pub psi: f64,
    /// `responses[j][k]`: impulse response of state `j` at step `k + 1`.
    pub responses: Vec<Vec<f64>>,
    /// Largest deviation of the Gram matrix from the identity over the shown horizon.
    pub gram_error: f64,
}

pub fn basis(p: usize, psi: f64, steps: usize) -> Result<BasisView, String> {
    if !(1..=12).contains(&p) {
        return Err(format!("order must be between 1 and 12, got {p}"));
    }
    let m = impulse_response_matrix(p, psi, steps).map_err(|e| e.to_string())?;
    let gram = m.transpose() * &m;
    let mut gram_error: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let expected = if i == j { 1.0 } else { 0.0 };
            gram_error = gram_error.max((gram[(i, j)] - expected).abs());
        }
    }
    Ok(BasisView {
        p,
        psi,
        responses: (0..p).map(|j| m.column(j).iter().copied().collect()).collect(),
        gram_error,
    })
}

#[derive(Debug, Serialize)]
pub struct MapView {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl From<&PwlFunction> for MapView {
    fn from(f: &PwlFunction) -> Self {
        Self {
            breakpoints: f.breakpoints().to_vec(),
            values: f.values().to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IdentView {
    pub family: String,
    pub sigma: f64,
    pub seed: u64,
    /// Set when identification failed; the remaining fields are then empty.
    pub error: Option<String>,
    pub psi: Option<f64>,
    pub fit_mse: f64,
    pub validation_mse: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
    /// Validation input, the noiseless plant response and the model's prediction.
    pub u: Vec<f64>,
    pub y_plant: Vec<f64>,
    pub y_model: Vec<f64>,
    pub input_map: Option<MapView>,
    pub output_map: Option<MapView>,
}

fn parse_family(tag: &str) -> Result<Family, String> {
    Family::ALL
        .into_iter()
        .find(|f| f.tag() == tag)
        .ok_or_else(|| format!("unknown family `{tag}`"))
}

/// Identifies `family` from a noisy record of the reference plant, then validates on a
/// fresh input against the noiseless plant.
pub fn identify_plant(family: &str, sigma: f64, seed: u64, samples: usize) -> Result<IdentView, String> {
    let family = parse_family(family)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(format!("sigma must be non-negative, got {sigma}"));
    }
    let plant = make_reference_plant(PLANT_SEED);
    let excite = |tag: &str, n: usize| {
        generate_excitation(ExcitationKind::PrbsSteps, n, plant.input_range, derive_seed(seed, tag, 0), 50)
            .map_err(|e| e.to_string())
    };
    let u = excite("identification-input", samples)?;
    let (data, _) =
        run_experiment_with_truth(&plant, &u, sigma, derive_seed(seed, "noise", 0)).map_err(|e| e.to_string())?;
    let (structure, kind) = family.structure();
    let cfg = IdentConfig::default().with_structure(structure, kind);

    let mut view = IdentView {
        family: family.tag().to_string(),
        sigma,
        seed,
        error: None,
        psi: None,
        fit_mse: f64::NAN,
        validation_mse: f64::NAN,
        iterations: 0,
        warnings: Vec::new(),
        u: Vec::new(),
        y_plant: Vec::new(),
        y_model: Vec::new(),
        input_map: None,
        output_map: None,
    };
    let ident = match identify(&data.u, &data.y, &cfg) {
        Ok(ident) => ident,
        Err(e) => {
            view.error = Some(e.to_string());
            return Ok(view);
        }
    };
    let u_val = excite("validation-input", 600)?;
    let y_plant = plant.truth.simulate(&u_val);
    let y_model = ident.model.simulate(&u_val);
    view.validation_mse = mse(&y_plant, &y_model).map_err(|e| e.to_string())?;
    view.fit_mse = ident.mse;
    view.iterations = ident.iterations;
    view.warnings = ident
        .warnings
        .iter()
        .map(|w| serde_json::to_value(w).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
        .collect();
    if let LinearBlock::Laguerre(net) = ident.model.linear_block() {
        view.psi = Some(net.psi());
    }
    view.input_map = ident.model.input_nl().map(MapView::from);
    view.output_map = ident.model.output_nl().map(MapView::from);
    view.u = u_val;
    view.y_plant = y_plant;
    view.y_model = y_model;
    Ok(view)
}

#[derive(Debug, Serialize)]
pub struct FitView {
    pub map: MapView,
    pub monotonicity: Monotonicity,
    pub mse: f64,
}

/// Least-squares PWL through the points on a uniform grid of `nodes` breakpoints.
pub fn fit_points(xs: &[f64], ys: &[f64], nodes: usize) -> Result<FitView, String> {
    let grid = grid_for_signal(xs, nodes).map_err(|e| e.to_string())?;
    let f = pwl_fit(xs, ys, &grid).map_err(|e| e.to_string())?;
    let fitted = f.eval_many(xs);
    Ok(FitView {
        monotonicity: f.monotonicity(),
        mse: mse(ys, &fitted).map_err(|e| e.to_string())?,
        map: MapView::from(&f),
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = laguerreBasis)]
pub fn laguerre_basis_js(p: usize, psi: f64, steps: usize) -> Result<String, JsError> {
    to_json(basis(p, psi, steps))
}

#[wasm_bindgen(js_name = identifyPlant)]
pub fn identify_plant_js(family: &str, sigma: f64, seed: u32, samples: usize) -> Result<String, JsError> {
    to_json(identify_plant(family, sigma, u64::from(seed), samples))
}

#[wasm_bindgen(js_name = fitPoints)]
pub fn fit_points_js(xs: &[f64], ys: &[f64], nodes: usize) -> Result<String, JsError> {
    to_json(fit_points(xs, ys, nodes))
}
