//! Continuous ranked probability score for Gaussians and uniform Gaussian
//! mixtures, in closed form.

use crate::error::{Error, Result};
use crate::models::PredictiveMixture;

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// CRPS of a Gaussian forecast N(mu, sigma^2) against observation y:
/// sigma * [ z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ], z = (y - mu)/sigma.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "crps_gaussian: sigma must be positive, got {sigma}"
        )));
    }
    let z = (y - mu) / sigma;
    Ok(sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::f64::consts::PI.sqrt()))
}

/// E|X - m| for X ~ N(0, s2), extended continuously to s2 = 0.
fn abs_moment(m: f64, s2: f64) -> f64 {
    if s2 <= 0.0 {
        return m.abs();
    }
    let s = s2.sqrt();
    let z = m / s;
    m * (2.0 * normal_cdf(z) - 1.0) + 2.0 * s * normal_pdf(z)
}

/// CRPS of an equally weighted Gaussian mixture:
/// sum_k w A(y - mu_k, s2_k) - 1/2 sum_{k,j} w^2 A(mu_k - mu_j, s2_k + s2_j).
pub fn crps_mixture(mix: &PredictiveMixture, y: f64) -> f64 {
    let k = mix.len();
    let w = 1.0 / k as f64;
    let mut first = 0.0;
    for i in 0..k {
        first += w * abs_moment(y - mix.means[i], mix.variances[i]);
    }
    let mut second = 0.0;
    for i in 0..k {
        for j in 0..k {
            second += w * w * abs_moment(mix.means[i] - mix.means[j], mix.variances[i] + mix.variances[j]);
        }
    }
    first - 0.5 * second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiff::StreamRng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Brute-force CRPS by Simpson quadrature of (F(t) - 1{t >= y})^2,
    /// split at the indicator discontinuity so each piece is smooth;
    /// independent of the closed form.
    fn crps_gaussian_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
        let simpson = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
            let n = 40_000;
            let h = (hi - lo) / n as f64;
            let mut s = f(lo) + f(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(lo + i as f64 * h);
            }
            s * h / 3.0
        };
        let lo = (mu - 14.0 * sigma).min(y - 14.0 * sigma);
        let hi = (mu + 14.0 * sigma).max(y + 14.0 * sigma);
        let cdf = |t: f64| normal_cdf((t - mu) / sigma);
        simpson(lo, y, &|t| cdf(t) * cdf(t))
            + simpson(y, hi, &|t| (cdf(t) - 1.0) * (cdf(t) - 1.0))
    }

    #[test]
    fn standard_normal_at_center() {
        // Known value 2 phi(0) - 1/sqrt(pi).
        close(crps_gaussian(0.0, 1.0, 0.0).unwrap(), 0.23369497725510928, 1e-12);
    }

    #[test]
    fn matches_quadrature() {
        let cases = [(0.0, 1.0, 0.0), (1.0, 2.0, -0.5), (-0.3, 0.25, 0.4), (2.0, 0.05, 2.1)];
        for (mu, sigma, y) in cases {
            let exact = crps_gaussian(mu, sigma, y).unwrap();
            let quad = crps_gaussian_quadrature(mu, sigma, y);
            close(exact, quad, 1e-6);
        }
    }

    #[test]
    fn degenerate_forecast_tends_to_absolute_error() {
        let y = 0.7;
        let mu = 0.2;
        let c = crps_gaussian(mu, 1e-9, y).unwrap();
        close(c, (y - mu).abs(), 1e-8);
        assert!(crps_gaussian(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn crps_is_nonnegative() {
        let mut rng = StreamRng::new(21);
        for _ in 0..200 {
            let mu = 3.0 * rng.normal();
            let sigma = 0.05 + 2.0 * rng.uniform();
            let y = 3.0 * rng.normal();
            assert!(crps_gaussian(mu, sigma, y).unwrap() >= 0.0);
        }
    }

    #[test]
    fn single_component_mixture_equals_gaussian() {
        let mix = PredictiveMixture::new(vec![0.4], vec![0.81]).unwrap();
        let direct = crps_gaussian(0.4, 0.9, -0.2).unwrap();
        close(crps_mixture(&mix, -0.2), direct, 1e-12);
    }

    #[test]
    fn duplicated_components_equal_single_gaussian() {
        let mix = PredictiveMixture::new(vec![0.4, 0.4], vec![0.81, 0.81]).unwrap();
        let direct = crps_gaussian(0.4, 0.9, 1.3).unwrap();
        close(crps_mixture(&mix, 1.3), direct, 1e-12);
    }

    #[test]
    fn mixture_matches_sample_energy_estimator() {
        // CRPS = E|Y - y| - 1/2 E|Y - Y'| with Y, Y' iid from the mixture.
        let mut rng = StreamRng::new(33);
        let k = 5;
        let means: Vec<f64> = (0..k).map(|_| 2.0 * rng.normal()).collect();
        let vars: Vec<f64> = (0..k).map(|_| 0.2 + rng.uniform()).collect();
        let mix = PredictiveMixture::new(means.clone(), vars.clone()).unwrap();
        let y = 0.8;

        let n = 1_000_000;
        let draw = |rng: &mut StreamRng| {
            let c = (rng.uniform() * k as f64) as usize;
            means[c] + vars[c].sqrt() * rng.normal()
        };
        let mut e_abs = 0.0;
        let mut e_pair = 0.0;
        for _ in 0..n {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            e_abs += (a - y).abs() + (b - y).abs();
            e_pair += (a - b).abs();
        }
        let estimate = e_abs / (2.0 * n as f64) - 0.5 * e_pair / n as f64;
        close(crps_mixture(&mix, y), estimate, 1e-3);
    }
}
