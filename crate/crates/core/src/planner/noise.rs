//! Power-law ("colored") Gaussian noise along the keypoint index.

use rand::Rng;
use rand_distr::StandardNormal;

/// Draws `n` samples of zero-mean Gaussian noise with power spectral density
/// proportional to `1 / f^beta`, scaled to unit marginal variance.
///
/// Fourier amplitudes are drawn per real-FFT bin with the DC and Nyquist
/// bins kept real, then transformed back with a direct inverse DFT. The
/// normalization is the exact marginal variance of that construction, so
/// `beta = 0` reproduces i.i.d. standard normal samples for any `n`.
pub fn powerlaw_noise<R: Rng + ?Sized>(beta: f64, n: usize, rng: &mut R) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![rng.sample(StandardNormal)];
    }
    let bins = n / 2 + 1;
    let fmin = 1.0 / n as f64;
    let scale: Vec<f64> = (0..bins)
        .map(|k| {
            let f = (k as f64 / n as f64).max(fmin);
            f.powf(-beta / 2.0)
        })
        .collect();
    let even = n % 2 == 0;
    let mut re = vec![0.0; bins];
    let mut im = vec![0.0; bins];
    for k in 0..bins {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        re[k] = a * scale[k];
        im[k] = b * scale[k];
    }
    let nyquist = if even { Some(bins - 1) } else { None };
    im[0] = 0.0;
    re[0] *= std::f64::consts::SQRT_2;
    if let Some(k) = nyquist {
        im[k] = 0.0;
        re[k] *= std::f64::consts::SQRT_2;
    }

    // Marginal variance of the inverse transform below.
    let mut var = 2.0 * scale[0] * scale[0];
    for k in 1..bins {
        let s2 = scale[k] * scale[k];
        var += if Some(k) == nyquist { 2.0 * s2 } else { 4.0 * s2 };
    }
    let sigma = var.sqrt() / n as f64;

    (0..n)
        .map(|t| {
            let mut y = re[0];
            for k in 1..bins {
                let angle = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                let (s, c) = angle.sin_cos();
                let term = re[k] * c - im[k] * s;
                y += if Some(k) == nyquist { term } else { 2.0 * term };
            }
            y / n as f64 / sigma
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn moments(beta: f64, n: usize, draws: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = seed::stream(3, &[n as u64]);
        let mut mean = vec![0.0; n];
        let mut cov = vec![vec![0.0; n]; n];
        for _ in 0..draws {
            let y = powerlaw_noise(beta, n, &mut rng);
            for i in 0..n {
                mean[i] += y[i] / draws as f64;
                for j in 0..n {
                    cov[i][j] += y[i] * y[j] / draws as f64;
                }
            }
        }
        (mean, cov)
    }

    #[test]
    fn white_noise_is_uncorrelated_unit_variance() {
        for n in [2, 3, 5, 8] {
            let (mean, cov) = moments(0.0, n, 40_000);
            for i in 0..n {
                assert!(mean[i].abs() < 0.03);
                for j in 0..n {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((cov[i][j] - expected).abs() < 0.04, "n={n} ({i},{j}) {}", cov[i][j]);
                }
            }
        }
    }

    #[test]
    fn colored_noise_has_unit_variance_and_positive_lag_correlation() {
        let (_, cov) = moments(2.0, 16, 20_000);
        for i in 0..16 {
            assert!((cov[i][i] - 1.0).abs() < 0.06);
        }
        assert!(cov[4][5] > 0.5);
    }
}
