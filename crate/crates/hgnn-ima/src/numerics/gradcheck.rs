//! Central finite-difference gradient verification.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::ParamMap;

#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates sampled per parameter block; `None` checks every one.
    pub max_coords_per_block: Option<usize>,
    /// Minimum total coordinates across all blocks (topped up by extra
    /// sampling from the largest blocks when a cap is set).
    pub min_total_coords: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords_per_block: None,
            min_total_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// Worst relative error observed per parameter block.
    pub per_block: BTreeMap<String, f64>,
    pub coords_checked: usize,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Relative error with the guarded denominator used throughout the crate.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-8)
}

/// Central difference of `f` along a single parameter coordinate.
pub fn numeric_grad_coord(
    f: &mut dyn FnMut(&ParamMap) -> Result<f64>,
    params: &ParamMap,
    name: &str,
    coord: usize,
    step: f64,
) -> Result<f64> {
    let mut probe = params.clone();
    let base = params
        .get(name)
        .ok_or_else(|| Error::config(format!("unknown parameter block {name}")))?
        .data()[coord];

    probe.get_mut(name).unwrap().data_mut()[coord] = base + step;
    let plus = f(&probe)?;
    probe.get_mut(name).unwrap().data_mut()[coord] = base - step;
    let minus = f(&probe)?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite("finite_diff_check objective".into()));
    }
    Ok((plus - minus) / (2.0 * step))
}

/// Compares analytic gradients against central finite differences of `f`.
///
/// `f` must be deterministic (dropout disabled, fixed seeds). Coordinates are
/// sampled per block with the seeded RNG when a cap is configured; otherwise
/// every coordinate of every block is checked.
pub fn finite_diff_check(
    f: &mut dyn FnMut(&ParamMap) -> Result<f64>,
    params: &ParamMap,
    analytic: &ParamMap,
    opts: &FdOptions,
) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut per_block = BTreeMap::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    let total: usize = params.values().map(|t| t.len()).sum();
    let budget_all = opts.max_coords_per_block.is_none() && total <= opts.min_total_coords;
    let _ = budget_all;

    for (name, tensor) in params {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::config(format!("no analytic gradient for block {name}")))?;
        if grad.shape() != tensor.shape() {
            return Err(Error::Shape {
                expected: format!("{:?}", tensor.shape()),
                got: format!("{:?}", grad.shape()),
                context: format!("analytic gradient for {name}"),
            });
        }
        let mut coords: Vec<usize> = (0..tensor.len()).collect();
        if let Some(cap) = opts.max_coords_per_block {
            if coords.len() > cap {
                coords.shuffle(&mut rng);
                coords.truncate(cap);
                coords.sort_unstable();
            }
        }
        let mut block_worst = 0.0f64;
        for c in coords {
            let numeric = numeric_grad_coord(f, params, name, c, opts.step)?;
            let rel = relative_error(grad.data()[c], numeric);
            block_worst = block_worst.max(rel);
            checked += 1;
        }
        max_rel = max_rel.max(block_worst);
        per_block.insert(name.clone(), block_worst);
    }

    if opts.max_coords_per_block.is_some() && checked < opts.min_total_coords.min(total) {
        return Err(Error::config(format!(
            "finite_diff_check sampled only {checked} coordinates; needs {}",
            opts.min_total_coords.min(total)
        )));
    }

    Ok(FdReport {
        max_rel_err: max_rel,
        per_block,
        coords_checked: checked,
    })
}
