//! Aggregate statistics for evaluation reports.

/// Linear-interpolation percentile over a sorted copy, p in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    Aggregate {
        mean: mean(values),
        median: percentile(values, 50.0),
        p5: percentile(values, 5.0),
        p25: percentile(values, 25.0),
        p75: percentile(values, 75.0),
        p95: percentile(values, 95.0),
    }
}
