//! Small statistics toolkit: sample moments, Wilson score intervals for
//! proportions, and least-squares slopes for scaling plots.

/// Wilson 95% score interval (z = 1.96) for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub hits: usize,
    pub n: usize,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Wilson score interval at confidence `z` standard normal quantiles.
pub fn wilson(hits: usize, n: usize, z: f64) -> Proportion {
    assert!(n > 0, "empty sample");
    assert!(hits <= n);
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // The score interval contains the point estimate identically; keep that
    // true through the roundoff at hits = 0 and hits = n.
    Proportion {
        hits,
        n,
        p_hat: p,
        lo: (center - half).clamp(0.0, p),
        hi: (center + half).clamp(p, 1.0),
    }
}

/// Wilson 95% interval.
pub fn wilson95(hits: usize, n: usize) -> Proportion {
    wilson(hits, n, 1.96)
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (m, ss / (xs.len() - 1) as f64)
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    let (_, v) = mean_var(xs);
    (v / xs.len() as f64).sqrt()
}

/// Sample skewness and excess kurtosis (biased, moment-ratio form); under the
/// null of normality their standard errors are sqrt(6/n) and sqrt(24/n).
pub fn skew_excess_kurtosis(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 2);
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    sxy / sxx
}

/// Slope of log y against log x, skipping points with y <= 0.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        None
    } else {
        Some(ols_slope(&logs))
    }
}
