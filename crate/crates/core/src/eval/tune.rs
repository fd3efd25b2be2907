use serde::{Deserialize, Serialize};

use super::report::evaluate_predictions;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::index::{LinkMode, Linker};

/// Threshold chosen on held-out documents, with the curve it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweep {
    pub gamma: f64,
    pub strict_f1: f64,
    /// `(gamma, strict F1)` for every grid point, ascending in gamma.
    pub curve: Vec<(f64, f64)>,
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 * 0.05).collect()
}

/// Exhaustive-span decoding at every threshold in `grid`; returns the one
/// with the best strict micro-F1 on `docs` (the smallest on ties).
pub fn sweep_gamma(linker: &Linker<'_>, docs: &[Document], grid: &[f64]) -> Result<GammaSweep> {
    if grid.is_empty() {
        return Err(Error::Config("gamma grid is empty".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut curve = Vec::with_capacity(grid.len());
    for &gamma in &grid {
        let mut decode = linker.decode.clone();
        decode.gamma = gamma;
        decode.validate()?;
        let at = Linker {
            decode,
            context: linker.context.clone(),
            ..*linker
        };
        let preds = at.link_corpus(docs, LinkMode::EndToEndExhaustive)?;
        let report = evaluate_predictions(&preds, docs, &[1], None)?;
        curve.push((gamma, report.strict.f1));
    }
    let (gamma, strict_f1) = curve
        .iter()
        .copied()
        .fold((grid[0], f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    Ok(GammaSweep {
        gamma,
        strict_f1,
        curve,
    })
}
