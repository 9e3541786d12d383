//! Spiked-covariance datasets `x = √(ρ/d) W* c + √η n`, their sample
//! covariance spectrum and a bulk-based noise-strength estimate.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const SIGNAL_STREAM: u64 = 0;
const LATENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub rho: f64,
    pub eta: f64,
    pub d: usize,
    pub k_star: usize,
    pub alpha: f64,
    pub n: usize,
}

/// Number of samples for a given sample complexity, `round(α d)` with a floor of one.
pub fn sample_count(alpha: f64, d: usize) -> usize {
    ((alpha * d as f64).round() as usize).max(1)
}

impl GenerativeConfig {
    pub fn new(rho: f64, eta: f64, d: usize, k_star: usize, alpha: f64) -> Result<Self> {
        let cfg = Self {
            rho,
            eta,
            d,
            k_star,
            alpha,
            n: if alpha.is_finite() && alpha > 0.0 {
                sample_count(alpha, d)
            } else {
                0
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!("eta must be finite and > 0, got {}", self.eta)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be finite and > 0, got {}", self.alpha)));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be positive".into()));
        }
        if self.k_star == 0 {
            return Err(Error::InvalidConfig("k_star must be positive".into()));
        }
        if self.k_star > self.d {
            return Err(Error::InvalidRank { k_star: self.k_star, d: self.d });
        }
        if self.n != sample_count(self.alpha, self.d) {
            return Err(Error::InvalidConfig(format!(
                "n = {} disagrees with round(alpha*d) = {}",
                self.n,
                sample_count(self.alpha, self.d)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Samples as rows, n×d.
    pub x: DMatrix<f64>,
    /// Ground-truth features, d×k*, with `W*ᵀW*/d = I`.
    pub w_star: DMatrix<f64>,
    /// Latent codes, n×k*.
    pub c: DMatrix<f64>,
    pub seed: u64,
    pub config: GenerativeConfig,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Random feature matrix with orthogonal columns of squared norm `d`.
pub fn generate_signal_matrix(d: usize, k_star: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k_star > d {
        return Err(Error::InvalidRank { k_star, d });
    }
    if d == 0 {
        return Err(Error::InvalidConfig("d must be positive".into()));
    }
    let mut rng = stream(seed, SIGNAL_STREAM);
    let mut w = DMatrix::<f64>::from_fn(d, k_star, |_, _| rng.sample(StandardNormal));
    // Two passes of modified Gram-Schmidt keep the columns orthogonal to rounding level.
    for _ in 0..2 {
        for j in 0..k_star {
            for i in 0..j {
                let proj = w.column(i).dot(&w.column(j));
                let ci = w.column(i).clone_owned();
                w.column_mut(j).axpy(-proj, &ci, 1.0);
            }
            let norm = w.column(j).norm();
            if norm < 1e-300 {
                return Err(Error::Domain("degenerate Gaussian draw in signal matrix".into()));
            }
            w.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    w.scale_mut((d as f64).sqrt());
    Ok(w)
}

pub fn generate_dataset(config: &GenerativeConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let (n, d, k) = (config.n, config.d, config.k_star);
    let w_star = generate_signal_matrix(d, k, seed)?;

    let mut latent = stream(seed, LATENT_STREAM);
    let c = DMatrix::<f64>::from_fn(n, k, |_, _| latent.sample(StandardNormal));

    let mut noise = stream(seed, NOISE_STREAM);
    let noise_scale = config.eta.sqrt();
    let mut x = DMatrix::<f64>::zeros(n, d);
    for v in x.iter_mut() {
        let z: f64 = noise.sample(StandardNormal);
        *v = noise_scale * z;
    }

    let signal_scale = (config.rho / d as f64).sqrt();
    if signal_scale > 0.0 {
        for l in 0..k {
            let cl = c.column(l);
            for i in 0..d {
                let coef = signal_scale * w_star[(i, l)];
                let mut col = x.column_mut(i);
                col.axpy(coef, &cl, 1.0);
            }
        }
    }

    Ok(Dataset { x, w_star, c, seed, config: config.clone() })
}

/// Eigenvalues of `(1/n) XᵀX` in descending order (length d).
pub fn covariance_spectrum(dataset: &Dataset) -> Result<Vec<f64>> {
    spectrum_of(&dataset.x)
}

pub fn spectrum_of(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::DegenerateDataset(format!("need at least 2 samples, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mut ev = if n >= d {
        linalg::symmetric_eigenvalues_desc(linalg::gram(x, inv_n))
    } else {
        let mut small = linalg::symmetric_eigenvalues_desc(linalg::gram(&x.transpose(), inv_n));
        small.resize(d, 0.0);
        small
    };
    for v in ev.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(ev)
}

/// Upper edge `η (1 + 1/√α)²` of the Marchenko–Pastur bulk.
pub fn bulk_edge(eta: f64, alpha: f64) -> f64 {
    eta * (1.0 + 1.0 / alpha.sqrt()).powi(2)
}

/// Marchenko–Pastur law with unit variance and aspect ratio `γ = d/n`.
#[derive(Clone, Debug)]
pub struct MarchenkoPastur {
    gamma: f64,
    lower: f64,
    upper: f64,
    atom: f64,
    theta: Vec<f64>,
    cdf: Vec<f64>,
}

impl MarchenkoPastur {
    const GRID: usize = 4096;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!("aspect ratio must be positive, got {gamma}")));
        }
        let sg = gamma.sqrt();
        let lower = (1.0 - sg).powi(2);
        let upper = (1.0 + sg).powi(2);
        let atom = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
        // x = a + (b − a) sin²θ turns the square-root edges into a smooth integrand.
        let width = upper - lower;
        let density = |t: f64| {
            let (s, c) = t.sin_cos();
            let x = lower + width * s * s;
            if x <= 0.0 {
                // only reached at γ = 1, θ = 0 where the limit is finite
                width * c * c / (std::f64::consts::PI * gamma)
            } else {
                width * width * 2.0 * s * s * c * c / (2.0 * std::f64::consts::PI * gamma * x)
            }
        };
        let h = std::f64::consts::FRAC_PI_2 / Self::GRID as f64;
        let theta: Vec<f64> = (0..=Self::GRID).map(|j| j as f64 * h).collect();
        let mut cdf = vec![atom; Self::GRID + 1];
        let mut acc = atom;
        let mut prev = density(0.0);
        for j in 1..=Self::GRID {
            let cur = density(theta[j]);
            acc += 0.5 * h * (prev + cur);
            cdf[j] = acc;
            prev = cur;
        }
        let total = cdf[Self::GRID];
        for v in cdf.iter_mut() {
            *v = atom + (*v - atom) * (1.0 - atom) / (total - atom);
        }
        Ok(Self { gamma, lower, upper, atom, theta, cdf })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= self.atom {
            return 0.0;
        }
        if p >= 1.0 {
            return self.upper;
        }
        let j = self.cdf.partition_point(|&c| c < p).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        let t = self.theta[j - 1] + w * (self.theta[j] - self.theta[j - 1]);
        let s = t.sin();
        self.lower + (self.upper - self.lower) * s * s
    }

    /// Approximate expected order statistics of a d-sample, descending.
    pub fn expected_spectrum(&self, d: usize) -> Vec<f64> {
        (0..d)
            .map(|j| {
                let ascending = d - j;
                self.quantile((ascending as f64 - 0.5) / d as f64)
            })
            .collect()
    }
}

/// Number of leading components whose cumulative variance ratio first reaches `rate`.
pub fn leading_components(spectrum: &[f64], rate: f64) -> usize {
    let total: f64 = spectrum.iter().sum();
    let mut acc = 0.0;
    for (i, v) in spectrum.iter().enumerate() {
        acc += v;
        if acc >= rate * total {
            return i + 1;
        }
    }
    spectrum.len()
}

/// Noise strength from the bulk left after removing the leading principal
/// components that explain `cumulative_rate` of the variance.
///
/// The bulk energy is divided by the Marchenko–Pastur energy expected in the
/// same order-statistic positions, which removes the downward bias of the raw
/// bulk variance caused by discarding the largest noise eigenvalues.
pub fn estimate_noise_strength(dataset: &Dataset, cumulative_rate: f64) -> Result<f64> {
    let spectrum = covariance_spectrum(dataset)?;
    noise_strength_from_spectrum(&spectrum, dataset.n(), cumulative_rate)
}

pub fn noise_strength_from_spectrum(spectrum: &[f64], n: usize, cumulative_rate: f64) -> Result<f64> {
    if !(cumulative_rate > 0.0 && cumulative_rate < 1.0) {
        return Err(Error::Domain(format!("cumulative_rate must lie in (0,1), got {cumulative_rate}")));
    }
    let d = spectrum.len();
    if d == 0 || n == 0 {
        return Err(Error::DegenerateDataset("empty spectrum".into()));
    }
    let k = leading_components(spectrum, cumulative_rate);
    if k >= d {
        return Err(Error::DegenerateDataset("no bulk components remain".into()));
    }
    let mp = MarchenkoPastur::new(d as f64 / n as f64)?;
    let reference = mp.expected_spectrum(d);
    let bulk: f64 = spectrum[k..].iter().sum();
    let expected: f64 = reference[k..].iter().sum();
    if expected <= 0.0 {
        return Err(Error::DegenerateDataset("bulk lies entirely in the null space".into()));
    }
    Ok(bulk / expected)
}

/// Raw per-entry variance of the bulk reconstruction, without the order-statistic correction.
pub fn raw_bulk_variance(spectrum: &[f64], cumulative_rate: f64) -> Result<f64> {
    if !(cumulative_rate > 0.0 && cumulative_rate < 1.0) {
        return Err(Error::Domain(format!("cumulative_rate must lie in (0,1), got {cumulative_rate}")));
    }
    let k = leading_components(spectrum, cumulative_rate);
    Ok(spectrum[k..].iter().sum::<f64>() / spectrum.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_rounds_with_floor() {
        assert_eq!(sample_count(4.0, 1000), 4000);
        assert_eq!(sample_count(1e-9, 10), 1);
        assert_eq!(sample_count(0.25, 10), 3);
    }

    #[test]
    fn rejects_rank_above_dimension() {
        assert!(matches!(generate_signal_matrix(3, 4, 0), Err(Error::InvalidRank { .. })));
        assert!(matches!(GenerativeConfig::new(1.0, 1.0, 3, 4, 1.0), Err(Error::InvalidRank { .. })));
    }

    #[test]
    fn signal_columns_have_norm_sqrt_d() {
        let w = generate_signal_matrix(50, 3, 11).unwrap();
        let g = w.transpose() * &w / 50.0;
        assert!((g - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn mp_quantiles_span_support() {
        let mp = MarchenkoPastur::new(0.25).unwrap();
        let (a, b) = mp.support();
        assert!((mp.quantile(1e-12) - a).abs() < 1e-3);
        assert!((mp.quantile(1.0 - 1e-12) - b).abs() < 1e-3);
        // the law has unit mean
        let q = mp.expected_spectrum(4000);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean - 1.0).abs() < 1e-3, "{mean}");
    }

    #[test]
    fn mp_with_atom() {
        let mp = MarchenkoPastur::new(2.0).unwrap();
        assert_eq!(mp.quantile(0.3), 0.0);
        let q = mp.expected_spectrum(2000);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean - 1.0).abs() < 2e-3, "{mean}");
    }

    #[test]
    fn leading_component_count() {
        assert_eq!(leading_components(&[5.0, 3.0, 1.0, 1.0], 0.5), 1);
        assert_eq!(leading_components(&[5.0, 3.0, 1.0, 1.0], 0.8), 2);
    }

    #[test]
    fn noise_estimate_rejects_bad_rate() {
        assert!(noise_strength_from_spectrum(&[1.0, 1.0], 10, 1.0).is_err());
        assert!(noise_strength_from_spectrum(&[1.0, 1.0], 10, 0.0).is_err());
    }
}
