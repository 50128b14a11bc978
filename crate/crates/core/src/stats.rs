use alloc::vec::Vec;

/// Population standard deviations below this are treated as zero.
pub(crate) const DEGENERATE_STD: f64 = 1e-8;

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance around `mean`.
pub(crate) fn variance(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

pub(crate) fn std_dev(values: &[f64]) -> f64 {
    libm::sqrt(variance(values, mean(values)))
}

/// Z-score with population std; all zeros when the std is degenerate.
pub(crate) fn z_scores(values: &[f64]) -> Vec<f64> {
    let m = mean(values);
    let s = libm::sqrt(variance(values, m));
    if !(s >= DEGENERATE_STD) {
        return alloc::vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - m) / s).collect()
}
