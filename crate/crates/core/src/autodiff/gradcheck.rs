use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, ParamStore};
use crate::error::{Error, Result};

pub const DEFAULT_FD_EPSILON: f64 = 1e-6;
/// Denominator floor of the relative error, so that gradients near zero are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares `analytic` against central differences `(f(θ+ε) − f(θ−ε)) / 2ε`
/// coordinate by coordinate and returns the largest relative error
/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
///
/// With `coords_per_param = Some(k)`, at most `k` coordinates per parameter
/// are sampled (seeded, so repeatable). `loss` must be deterministic; it is
/// evaluated twice at the unperturbed point to confirm that.
pub fn finite_difference_check<F>(
    params: &mut ParamStore,
    analytic: &Grads,
    mut loss: F,
    epsilon: f64,
    coords_per_param: Option<usize>,
) -> Result<GradCheck>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let base = loss(params)?;
    if loss(params)?.to_bits() != base.to_bits() {
        return Err(Error::InvalidArgument(
            "loss is not deterministic; disable dropout or fix the seed".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.values(id).len();
        let coords: Vec<usize> = match coords_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let orig = params.values(id)[k];
            params.values_mut(id)[k] = orig + epsilon;
            let plus = loss(params)?;
            params.values_mut(id)[k] = orig - epsilon;
            let minus = loss(params)?;
            params.values_mut(id)[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.get(id)[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((params.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
