//! Block-oriented nonlinear system identification: Hammerstein, Wiener and
//! Hammerstein-Wiener models whose linear part is a Laguerre network (or an ARX
//! filter), with piecewise-linear static maps.

pub mod error;
pub mod estimators;
pub mod evaluate;
pub mod laguerre;
pub mod models;
pub mod nonlin;
pub mod plantlab;
pub mod cli;

pub use error::{Error, Result};
pub use estimators::{
    batch_least_squares, fit_arx, rls_identify_laguerre, select_psi, ArxModel, LaguerreFit,
    RlsSettings, RlsState,
};
pub use evaluate::{detect_divergence, dispersion, mse, robustness_sweep, Family, SweepReport};
pub use laguerre::{impulse_response_matrix, LaguerreNetwork};
pub use models::{identify, BlockModel, IdentConfig, Identification, LinearBlock, LinearKind, Structure};
pub use nonlin::{pwl_fit, PwlFunction};
pub use plantlab::{make_reference_plant, Dataset, ReferencePlant};

use std::io::Write;
use std::path::Path;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on. Output order
/// always matches input order.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
