//! Small statistical helpers for the acceptance checks: moments, a
//! one-sample Kolmogorov-Smirnov test, and histogram comparisons.

/// Sample mean and standard deviation (denominator `n - 1`).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One-sample Kolmogorov-Smirnov p-value of `samples` against the continuous
/// CDF `cdf`, using the asymptotic Kolmogorov distribution with the small-n
/// correction `lambda = D (sqrt(n) + 0.12 + 0.11 / sqrt(n))`.
pub fn ks_p_value(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    let mut d = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
    kolmogorov_survival(lambda)
}

/// `P(K > lambda)` for the Kolmogorov distribution,
/// `2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        if term < 1e-16 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Bin draws onto cells centred at `centers` (uniform spacing assumed),
/// clamping outliers into the edge cells, and normalize to probabilities.
pub fn bin_probabilities(draws: &[f64], centers: &[f64]) -> Vec<f64> {
    let bins = centers.len();
    let width = centers[1] - centers[0];
    let lo = centers[0] - width / 2.0;
    let mut counts = vec![0.0_f64; bins];
    for &x in draws {
        let idx = ((x - lo) / width).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1.0;
    }
    let total = draws.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}
