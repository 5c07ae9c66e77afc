//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; undefined trust is `NaN`.

use vote_ensemble::metrics::sweep_table;
use vote_ensemble::outcome::{exact_outcome_distribution, ConsensusMasses};
use vote_ensemble::{QuestionProfile, Result, VotingRule};
use wasm_bindgen::prelude::*;

/// Values per row of [`threshold_sweep`].
pub const SWEEP_STRIDE: usize = 7;
/// Values per row of [`convergence_series`].
pub const CONVERGENCE_STRIDE: usize = 4;

/// Rows of `k, p_c, p_i, p_nc, accuracy, trust, yield` for `k = 1..=n`.
pub fn sweep_rows(delta: f64, eta: f64, n: usize) -> Result<Vec<f64>> {
    let profile = QuestionProfile::new(delta, eta)?;
    let mut out = Vec::with_capacity(n * SWEEP_STRIDE);
    for row in sweep_table(&profile, n)? {
        let (o, m) = (row.outcome, row.metrics);
        out.extend([
            m.k as f64,
            o.p_c,
            o.p_i,
            o.p_nc,
            m.accuracy,
            m.trust.unwrap_or(f64::NAN),
            m.yield_rate,
        ]);
    }
    Ok(out)
}

/// Rows of `n, p_c, p_i, p_nc` at `k = 1` for odd `n` up to `max_n`.
pub fn convergence_rows(delta: f64, eta: f64, max_n: usize) -> Result<Vec<f64>> {
    let profile = QuestionProfile::new(delta, eta)?;
    let mut out = Vec::new();
    for n in (1..=max_n).step_by(2) {
        let d = ConsensusMasses::new(&profile, n)?.at_threshold(1)?;
        out.extend([n as f64, d.p_c, d.p_i, d.p_nc]);
    }
    Ok(out)
}

/// Trust on a `cells × cells` grid, row-major with `eta` down the rows and
/// `delta` across, both sampled at cell centres.
pub fn trust_grid(n: usize, k: usize, cells: usize) -> Result<Vec<f64>> {
    let rule = VotingRule::new(n, k)?;
    let centre = |i: usize| (i as f64 + 0.5) / cells as f64;
    let mut out = Vec::with_capacity(cells * cells);
    for row in 0..cells {
        for col in 0..cells {
            let profile = QuestionProfile::new(centre(col), centre(row))?;
            let d = exact_outcome_distribution(&profile, &rule);
            let committed = d.p_c + d.p_i;
            out.push(if committed > 0.0 { d.p_c / committed } else { f64::NAN });
        }
    }
    Ok(out)
}

fn js<T>(r: Result<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn threshold_sweep(delta: f64, eta: f64, n: usize) -> Result<Vec<f64>, JsError> {
    js(sweep_rows(delta, eta, n))
}

#[wasm_bindgen]
pub fn convergence_series(delta: f64, eta: f64, max_n: usize) -> Result<Vec<f64>, JsError> {
    js(convergence_rows(delta, eta, max_n))
}

#[wasm_bindgen]
pub fn trust_heatmap(n: usize, k: usize, cells: usize) -> Result<Vec<f64>, JsError> {
    js(trust_grid(n, k, cells))
}
