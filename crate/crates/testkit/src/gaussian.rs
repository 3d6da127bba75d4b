//! Textbook diagonal-Gaussian estimates, computed the slow way.

/// Per-dimension mean and (biased) variance of `rows`.
pub fn mle(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut mean = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        var.push(v);
    }
    (mean, var)
}

/// Total log-likelihood of `rows` under independent normals.
pub fn log_likelihood(rows: &[Vec<f64>], mean: &[f64], var: &[f64]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(mean.iter().zip(var))
                .map(|(x, (m, v))| -0.5 * (two_pi * v).ln() - (x - m).powi(2) / (2.0 * v))
                .sum::<f64>()
        })
        .sum()
}
