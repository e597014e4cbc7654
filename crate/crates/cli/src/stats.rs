//! Summary statistics across seeds.

/// Mean, sample standard deviation and the normal-approximation 95% interval
/// `mean ± 1.96 sd / sqrt(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / k.sqrt();
    MeanCi {
        mean,
        sd,
        lo: mean - half,
        hi: mean + half,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// The last `ceil(fraction * len)` entries, at least one.
pub fn final_share<T>(xs: &[T], fraction: f64) -> &[T] {
    let take = ((xs.len() as f64 * fraction).ceil() as usize).clamp(1, xs.len().max(1));
    &xs[xs.len().saturating_sub(take)..]
}
