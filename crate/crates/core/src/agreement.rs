//! Krippendorff's alpha for nominal ratings with missing cells.
//!
//! Uses the coincidence-matrix form: every unit with `m >= 2` ratings
//! contributes each ordered pair of its ratings with weight `1 / (m - 1)`.
//! With `o_cc` the diagonal of the coincidence matrix and `n_c` its margins,
//!
//! ```text
//! alpha = 1 - (n - 1) * (n - sum_c o_cc) / (n^2 - sum_c n_c^2)
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlphaError {
    #[error("alpha needs at least 2 units with 2 or more ratings, found {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// Number of pairable ratings `n`.
    pub pairable_values: usize,
    pub pairable_units: usize,
    /// All pairable ratings share one value, so expected disagreement is zero
    /// and alpha is reported as 1.0.
    pub degenerate: bool,
}

/// Alpha over `units`, each holding one optional rating per annotator.
pub fn krippendorff_alpha<V: Ord>(units: &[Vec<Option<V>>]) -> Result<AlphaEstimate, AlphaError> {
    let mut categories: BTreeMap<&V, usize> = BTreeMap::new();
    for value in units.iter().flatten().flatten() {
        let next = categories.len();
        categories.entry(value).or_insert(next);
    }
    let k = categories.len();
    let mut margins = vec![0.0f64; k];
    let mut diagonal = 0.0f64;
    let mut pairable_units = 0;
    let mut counts = vec![0usize; k];
    for unit in units {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut m = 0usize;
        for value in unit.iter().flatten() {
            counts[categories[value]] += 1;
            m += 1;
        }
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let weight = 1.0 / (m as f64 - 1.0);
        for (c, &n_uc) in counts.iter().enumerate() {
            if n_uc == 0 {
                continue;
            }
            // row c of the unit's coincidences sums to n_uc
            margins[c] += n_uc as f64;
            diagonal += (n_uc * (n_uc - 1)) as f64 * weight;
        }
    }
    if pairable_units < 2 {
        return Err(AlphaError::InsufficientData(pairable_units));
    }
    let n: f64 = margins.iter().sum();
    let expected = n * n - margins.iter().map(|m| m * m).sum::<f64>();
    if expected == 0.0 {
        log::warn!("all pairable ratings are identical; alpha is reported as 1.0");
        return Ok(AlphaEstimate {
            alpha: 1.0,
            pairable_values: n as usize,
            pairable_units,
            degenerate: true,
        });
    }
    let observed = n - diagonal;
    Ok(AlphaEstimate {
        alpha: 1.0 - (n - 1.0) * observed / expected,
        pairable_values: n as usize,
        pairable_units,
        degenerate: false,
    })
}
