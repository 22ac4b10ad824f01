#![allow(dead_code)]

use laguerre_sysid::estimators::ArxModel;
use laguerre_sysid::nonlin::grid_for_signal;
use laguerre_sysid::plantlab::{generate_excitation, ExcitationKind};
use laguerre_sysid::{BlockModel, IdentConfig, LaguerreNetwork, LinearBlock, LinearKind, PwlFunction, Structure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 2000;

pub fn excitation(seed: u64) -> Vec<f64> {
    generate_excitation(ExcitationKind::PrbsSteps, N, (8.0, 16.0), seed, 20).unwrap()
}

/// Increasing PWL values with random positive increments, on `grid`.
pub fn monotone_values(rng: &mut ChaCha8Rng, grid: &[f64], lo: f64) -> Vec<f64> {
    let mut v = lo;
    grid.windows(2)
        .map(|w| w[1] - w[0])
        .fold(vec![lo], |mut acc, dx| {
            v += dx * rng.random_range(0.3..2.0);
            acc.push(v);
            acc
        })
}

pub fn laguerre(rng: &mut ChaCha8Rng) -> LinearBlock {
    let c: Vec<f64> = [1.0, 0.5, 0.25, 0.1]
        .iter()
        .map(|b| b * rng.random_range(0.7..1.3))
        .collect();
    LinearBlock::Laguerre(LaguerreNetwork::with_coefficients(4, 0.6, &c).unwrap())
}

pub fn arx(rng: &mut ChaCha8Rng) -> LinearBlock {
    let a1 = rng.random_range(0.5..0.8);
    LinearBlock::Arx(ArxModel::new(2, 2, 1, vec![a1, -0.1], vec![0.3, rng.random_range(0.1..0.2)]).unwrap())
}

/// A ground-truth model of `structure` whose static maps live on the grids that
/// identification builds from the same input (and the truth's own linear output), so
/// noiseless data are exactly representable.
pub fn truth(structure: Structure, kind: LinearKind, u: &[f64], seed: u64, cfg: &IdentConfig) -> BlockModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let linear = match kind {
        LinearKind::Laguerre => laguerre(&mut rng),
        LinearKind::Arx => arx(&mut rng),
    };
    let input_nl = structure.has_input_nl().then(|| {
        let grid = grid_for_signal(u, cfg.input_nodes).unwrap();
        let values = monotone_values(&mut rng, &grid, 1.0);
        PwlFunction::new(grid, values).unwrap()
    });
    let output_nl = structure.has_output_nl().then(|| {
        let v = match &input_nl {
            Some(f) => f.eval_many(u),
            None => u.to_vec(),
        };
        let w = linear.simulate(&v);
        let grid = grid_for_signal(&w[cfg.washout..], cfg.output_nodes).unwrap();
        let values = monotone_values(&mut rng, &grid, -2.0);
        PwlFunction::new(grid, values).unwrap()
    });
    BlockModel::new(structure, input_nl, linear, output_nl).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest node discrepancy (breakpoints and values) between the maps of two models.
pub fn map_distance(a: &BlockModel, b: &BlockModel) -> f64 {
    let mut d: f64 = 0.0;
    for (fa, fb) in [(a.input_nl(), b.input_nl()), (a.output_nl(), b.output_nl())] {
        match (fa, fb) {
            (Some(x), Some(y)) => {
                d = d.max(max_abs_diff(x.values(), y.values()));
                d = d.max(max_abs_diff(x.breakpoints(), y.breakpoints()));
            }
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    d
}
