//! Normal and chi-square distribution functions, the seeded stream RNG and
//! the innovation samplers used by the simulation designs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "probability must lie in (0, 1), got {p}"
        )))
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of [`std_normal_cdf`]: bisection to a narrow bracket, then
/// Newton steps kept inside the bracket.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    check_prob(p)?;
    if p > 0.5 {
        // solve in the lower tail where Φ carries full relative precision
        return Ok(-lower_normal_quantile(1.0 - p));
    }
    Ok(lower_normal_quantile(p))
}

fn lower_normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let step = (std_normal_cdf(x) - p) / std_normal_pdf(x);
        let next = x - step;
        if !(next > lo && next < hi) || step.abs() < 1e-16 * x.abs().max(1.0) {
            if next > lo && next < hi {
                x = next;
            }
            break;
        }
        x = next;
    }
    x
}

fn check_df(df: f64) -> Result<()> {
    if df >= 1.0 && df.fract() == 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "degrees of freedom must be a positive integer, got {df}"
        )))
    }
}

/// Chi-square CDF through the regularized lower incomplete gamma function.
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "chi-square argument must be >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(gamma_lr(0.5 * df, 0.5 * x))
}

/// Upper tail `1 − F(x)` through the regularized upper incomplete gamma.
pub fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "chi-square argument must be >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(0.5 * df, 0.5 * x))
}

pub fn chi2_pdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return if df == 2.0 && x == 0.0 { 0.5 } else { 0.0 };
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    check_prob(p)?;
    check_df(df)?;
    let mut hi = df.max(1.0);
    while chi2_cdf(hi, df)? < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    // Relative tolerance: lower quantiles of df = 1 are as small as 1e-12.
    for _ in 0..2000 {
        if hi - lo <= 1e-6 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let dens = chi2_pdf(x, df);
        if !(dens > 0.0) {
            break;
        }
        let step = (chi2_cdf(x, df)? - p) / dens;
        let next = x - step;
        if !(next > lo && next < hi) {
            break;
        }
        x = next;
        if step.abs() < 1e-15 * x.max(1e-300) {
            break;
        }
    }
    Ok(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 keyed from `seed` with `stream_id` selecting the
/// ChaCha stream, so streams sharing a seed never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream `k`, derived from the identity of `self` only (not from
    /// how far `self` has been advanced).
    pub fn substream(&self, k: u64) -> RngStream {
        RngStream::new(
            self.seed,
            splitmix64(self.stream_id ^ splitmix64(k.wrapping_add(1))),
        )
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Chi-square draw as a sum of `df` squared standard normals.
pub fn sample_chi2<R: Rng + ?Sized>(rng: &mut R, df: u32) -> f64 {
    (0..df).map(|_| sample_normal(rng).powi(2)).sum()
}

/// Student-t draw as `Z / sqrt(χ²_df / df)`.
pub fn sample_t<R: Rng + ?Sized>(rng: &mut R, df: u32) -> f64 {
    let z = sample_normal(rng);
    z / (sample_chi2(rng, df) / df as f64).sqrt()
}

/// Innovation law of the simulated error recursions, standardized to mean
/// zero and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    Normal,
    /// `t_6 / sqrt(6/4)`
    T6,
    /// `(χ²_5 − 5) / sqrt(10)`
    Chi5,
}

impl Innovation {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Innovation::Normal => sample_normal(rng),
            Innovation::T6 => sample_t(rng, 6) / 1.5_f64.sqrt(),
            Innovation::Chi5 => (sample_chi2(rng, 5) - 5.0) / 10.0_f64.sqrt(),
        }
    }
}

impl std::str::FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Innovation::Normal),
            "t6" => Ok(Innovation::T6),
            "chi5" => Ok(Innovation::Chi5),
            _ => Err(Error::Config(format!(
                "unknown distribution `{s}` (normal|t6|chi5)"
            ))),
        }
    }
}
