//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParameterSet, Real};

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so that coordinates whose true gradient is ~0 are judged absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients from `f` against central differences.
///
/// `f(params, grads)` evaluates the scalar loss; when `grads` is `Some` it
/// must also accumulate the analytic gradient. Every tensor in `params` is
/// checked, trainable or not, so inputs registered as tensors are covered.
/// With `max_coords = Some(k)` at most `k` random coordinates per tensor
/// are probed.
pub fn grad_check<F>(
    params: &mut ParameterSet,
    epsilon: f64,
    max_coords: Option<usize>,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&ParameterSet, Option<&mut Gradients>) -> Real,
{
    let mut analytic = params.zero_grads();
    f(params, Some(&mut analytic));
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for c in coords {
            let original = params.get(id).as_slice().expect("standard layout")[c];
            let eps = epsilon as Real;
            params.get_mut(id).as_slice_mut().unwrap()[c] = original + eps;
            let plus = f(params, None) as f64;
            params.get_mut(id).as_slice_mut().unwrap()[c] = original - eps;
            let minus = f(params, None) as f64;
            params.get_mut(id).as_slice_mut().unwrap()[c] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[id].as_slice().unwrap()[c] as f64;
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                report.worst_param = params.name(id).to_string();
                report.worst_index = c;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
