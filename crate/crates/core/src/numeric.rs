//! Log-domain helpers shared by the inference routines.

/// `ln sum exp(x)` with a max shift. Returns `-inf` when every term is `-inf`.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Exponentiates log-weights and normalizes them to a probability vector.
///
/// Returns `None` when the normalizer is zero or not finite.
pub(crate) fn normalize_log(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut out: Vec<f64> = log_weights.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= total);
    Some(out)
}

/// Normalizes nonnegative weights in place. Returns `false` on a zero or
/// non-finite total.
pub(crate) fn normalize_in_place(weights: &mut [f64]) -> bool {
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return false;
    }
    weights.iter_mut().for_each(|x| *x /= total);
    true
}

/// Advances a mixed-radix counter, last position fastest. Returns `false`
/// after the final state wraps to all zeros.
pub(crate) fn advance(state: &mut [usize], radix: &[usize]) -> bool {
    for pos in (0..state.len()).rev() {
        state[pos] += 1;
        if state[pos] < radix[pos] {
            return true;
        }
        state[pos] = 0;
    }
    false
}
