//! Log-space helpers for small discrete distributions.

/// Tolerance on the total mass of every returned distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// `ln Σ exp(x_i)`. Terms are summed in ascending order so the result does
/// not depend on the order of `xs`. Returns `-inf` when every term is `-inf`
/// or `xs` is empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut shifted: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    shifted.sort_by(f64::total_cmp);
    max + shifted.iter().sum::<f64>().ln()
}

/// Normalizes log weights in place so that they exponentiate to a
/// distribution. Returns `None` (leaving `xs` untouched) if all weights are
/// `-inf`.
pub fn log_normalize(xs: &mut [f64]) -> Option<()> {
    let z = log_sum_exp(xs);
    if !z.is_finite() {
        return None;
    }
    xs.iter_mut().for_each(|x| *x -= z);
    Some(())
}

pub fn exp_all(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| x.exp()).collect()
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}
