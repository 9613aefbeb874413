//! Kernel density estimation in log space.
//!
//! Consumption values are mapped through `y = ln(x + ε)` before fitting.
//! Densities are reported in kWh with the Jacobian `1 / (x + ε)`, and
//! quantiles map back through `exp(y) - ε`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, INV_SQRT_2PI};
use crate::par;
use crate::stats;

/// Smallest offset the adaptive policy will use, in kWh.
pub const MIN_OFFSET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Gaussian,
    /// `K(u) = 1/2` on `[-1, 1]`.
    Uniform,
}

impl Kernel {
    fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => numeric::norm_cdf(u),
            Kernel::Uniform => 0.5 * (u.clamp(-1.0, 1.0) + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    SheatherJones,
    Silverman,
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    /// Half the smallest strictly positive value, at least [`MIN_OFFSET`].
    Adaptive,
    Fixed(f64),
}

impl OffsetPolicy {
    pub fn resolve(self, values: &[f64]) -> f64 {
        match self {
            OffsetPolicy::Fixed(e) => e,
            OffsetPolicy::Adaptive => {
                let min_pos = values.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
                if min_pos.is_finite() {
                    (0.5 * min_pos).max(MIN_OFFSET)
                } else {
                    MIN_OFFSET
                }
            }
        }
    }
}

/// `ln(value + offset)` for every value.
pub fn log_transform(values: &[f64], offset: f64) -> Result<Vec<f64>> {
    if !(offset >= 0.0) || !offset.is_finite() {
        return Err(Error::Domain(format!("offset must be finite and non-negative, got {offset}")));
    }
    values
        .iter()
        .map(|&v| {
            if !(v >= 0.0) || !v.is_finite() {
                Err(Error::Domain(format!("consumption value {v} is negative or non-finite")))
            } else if v + offset <= 0.0 {
                Err(Error::Domain("zero value with zero offset has no logarithm".into()))
            } else {
                Ok((v + offset).ln())
            }
        })
        .collect()
}

pub fn inverse_log_transform(log_values: &[f64], offset: f64) -> Vec<f64> {
    log_values.iter().map(|y| y.exp() - offset).collect()
}

fn check_spread(values: &[f64], min_n: usize) -> Result<f64> {
    if values.len() < min_n {
        return Err(Error::TooFewObservations { needed: min_n, got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample value".into()));
    }
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let sd = stats::sample_sd(values);
    if min == max || !(sd > 0.0) {
        return Err(Error::DegenerateSample("sample standard deviation is zero".into()));
    }
    Ok(sd)
}

/// Robust scale `min(σ̂, IQR / 1.35)`, falling back to `σ̂` when the IQR is 0.
fn robust_scale(values: &[f64], sd: f64, divisor: f64) -> f64 {
    let iqr = stats::iqr(values);
    if iqr > 0.0 {
        sd.min(iqr / divisor)
    } else {
        sd
    }
}

/// Silverman's rule `0.9 min(σ̂, IQR/1.35) n^(-1/5)`.
pub fn bandwidth_silverman(values: &[f64]) -> Result<f64> {
    let sd = check_spread(values, 2)?;
    Ok(silverman_from_parts(sd, stats::iqr(values), values.len()))
}

/// Silverman's rule from precomputed summary statistics.
pub fn silverman_from_parts(sd: f64, iqr: f64, n: usize) -> f64 {
    let scale = if iqr > 0.0 { sd.min(iqr / 1.35) } else { sd };
    0.9 * scale * (n as f64).powf(-0.2)
}

/// Scott's rule `1.06 σ̂ n^(-1/5)`.
pub fn bandwidth_scott(values: &[f64]) -> Result<f64> {
    let sd = check_spread(values, 2)?;
    Ok(scott_from_parts(sd, values.len()))
}

pub fn scott_from_parts(sd: f64, n: usize) -> f64 {
    1.06 * sd * (n as f64).powf(-0.2)
}

/// A bandwidth together with whether a fallback rule produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub h: f64,
    pub fallback: bool,
}

/// Sheather–Jones solve-the-equation plug-in selector for the Gaussian
/// kernel, using exact pairwise functional estimates.
#[derive(Debug, Clone)]
pub struct SheatherJones {
    sorted: Vec<f64>,
    sd: f64,
    alpha2: f64,
    c1: f64,
}

impl SheatherJones {
    pub fn new(values: &[f64]) -> Result<Self> {
        let sd = check_spread(values, 4)?;
        let sorted = stats::sorted_copy(values);
        let n = sorted.len() as f64;
        let scale = robust_scale(&sorted, sd, 1.349);
        let a = 1.24 * scale * n.powf(-1.0 / 7.0);
        let b = 1.23 * scale * n.powf(-1.0 / 9.0);
        let c1 = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * n);
        let mut sj = SheatherJones { sorted, sd, alpha2: f64::NAN, c1 };
        let td = -sj.psi6(b);
        let sa = sj.psi4(a);
        if !(td > 0.0 && sa > 0.0) {
            return Err(Error::DegenerateSample("sample too sparse for plug-in functionals".into()));
        }
        sj.alpha2 = 1.357 * (sa / td).powf(1.0 / 7.0);
        if !sj.alpha2.is_finite() {
            return Err(Error::DegenerateSample("sample too sparse for plug-in functionals".into()));
        }
        Ok(sj)
    }

    /// `Σ_{i<j} term((x_j - x_i) / g)` over the sorted sample. Terms with
    /// `|δ| > 40` underflow to zero and are skipped.
    fn pair_sum(&self, g: f64, term: fn(f64) -> f64) -> f64 {
        let xs = &self.sorted;
        let n = xs.len();
        let row = |i: usize| {
            let mut s = 0.0;
            for &xj in &xs[i + 1..] {
                let d = (xj - xs[i]) / g;
                if d > 40.0 {
                    break;
                }
                s += term(d);
            }
            s
        };
        if n >= 512 {
            par::map_indexed(n, row).into_iter().sum()
        } else {
            (0..n).map(row).sum()
        }
    }

    /// Estimate of `∫ f''(x)^2 dx` with pilot bandwidth `g`.
    pub fn psi4(&self, g: f64) -> f64 {
        let n = self.sorted.len() as f64;
        let s = self.pair_sum(g, |d| {
            let d2 = d * d;
            (d2 * d2 - 6.0 * d2 + 3.0) * (-0.5 * d2).exp()
        });
        (2.0 * s + 3.0 * n) * INV_SQRT_2PI / (n * (n - 1.0) * g.powi(5))
    }

    /// Estimate of `∫ f'''(x)^2 dx` up to sign (negative of ψ6).
    pub fn psi6(&self, g: f64) -> f64 {
        let n = self.sorted.len() as f64;
        let s = self.pair_sum(g, |d| {
            let d2 = d * d;
            (d2 * d2 * d2 - 15.0 * d2 * d2 + 45.0 * d2 - 15.0) * (-0.5 * d2).exp()
        });
        (2.0 * s - 15.0 * n) * INV_SQRT_2PI / (n * (n - 1.0) * g.powi(7))
    }

    /// Fixed-point residual; the selected bandwidth is its root.
    pub fn objective(&self, h: f64) -> f64 {
        let g = self.alpha2 * h.powf(5.0 / 7.0);
        (self.c1 / self.psi4(g)).powf(0.2) - h
    }

    /// Search interval `[1e-3 σ̂, 10 σ̂]`.
    pub fn bracket(&self) -> (f64, f64) {
        (1e-3 * self.sd, 10.0 * self.sd)
    }

    pub fn solve(&self) -> Option<f64> {
        let (lo, hi) = self.bracket();
        numeric::brent_root(|h| self.objective(h), lo, hi, 0.0, 1e-9, 200).filter(|h| *h > 0.0)
    }
}

/// Sheather–Jones bandwidth; falls back to Silverman's rule (flagged) when
/// the fixed point cannot be bracketed.
pub fn bandwidth_sheather_jones(values: &[f64]) -> Result<Bandwidth> {
    let sd = check_spread(values, 4)?;
    let fallback = || -> Result<Bandwidth> {
        log::warn!("Sheather-Jones root not bracketed; using Silverman's rule");
        Ok(Bandwidth { h: silverman_from_parts(sd, stats::iqr(values), values.len()), fallback: true })
    };
    let sj = match SheatherJones::new(values) {
        Ok(sj) => sj,
        Err(Error::DegenerateSample(_)) => return fallback(),
        Err(e) => return Err(e),
    };
    match sj.solve() {
        Some(h) => Ok(Bandwidth { h, fallback: false }),
        None => fallback(),
    }
}

pub fn select_bandwidth(values: &[f64], rule: BandwidthRule) -> Result<Bandwidth> {
    let plain = |h: f64| Bandwidth { h, fallback: false };
    match rule {
        BandwidthRule::SheatherJones => bandwidth_sheather_jones(values),
        BandwidthRule::Silverman => bandwidth_silverman(values).map(plain),
        BandwidthRule::Scott => bandwidth_scott(values).map(plain),
        BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => Ok(plain(h)),
        BandwidthRule::Fixed(h) => Err(Error::Domain(format!("bandwidth must be positive, got {h}"))),
    }
}

/// A fitted kernel density estimate. Immutable after construction; log
/// samples are kept sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "RawDensityModel")]
pub struct DensityModel {
    log_samples: Vec<f64>,
    bandwidth: f64,
    offset: f64,
    kernel: Kernel,
    #[serde(default)]
    bandwidth_fallback: bool,
    /// `(y, cdf)` nodes used to start quantile searches; built on demand.
    #[serde(skip)]
    cdf_table: OnceLock<Vec<(f64, f64)>>,
}

impl PartialEq for DensityModel {
    fn eq(&self, other: &Self) -> bool {
        self.log_samples == other.log_samples
            && self.bandwidth == other.bandwidth
            && self.offset == other.offset
            && self.kernel == other.kernel
            && self.bandwidth_fallback == other.bandwidth_fallback
    }
}

const CDF_TABLE_NODES: usize = 257;

#[derive(Deserialize)]
struct RawDensityModel {
    log_samples: Vec<f64>,
    bandwidth: f64,
    offset: f64,
    kernel: Kernel,
    #[serde(default)]
    bandwidth_fallback: bool,
}

impl From<RawDensityModel> for DensityModel {
    fn from(r: RawDensityModel) -> Self {
        let mut log_samples = r.log_samples;
        log_samples.sort_by(f64::total_cmp);
        DensityModel {
            log_samples,
            bandwidth: r.bandwidth,
            offset: r.offset,
            kernel: r.kernel,
            bandwidth_fallback: r.bandwidth_fallback,
            cdf_table: OnceLock::new(),
        }
    }
}

/// Kernel arguments beyond this many bandwidths are treated as fully in
/// the tail when solving for quantiles (Gaussian tail mass below 1e-18).
const QUANTILE_WINDOW: f64 = 9.0;

/// Fits a KDE to consumption values in log space.
pub fn fit_kde(values: &[f64], kernel: Kernel, rule: BandwidthRule, offset: OffsetPolicy) -> Result<DensityModel> {
    let eps = offset.resolve(values);
    let mut log_samples = log_transform(values, eps)?;
    log_samples.sort_by(f64::total_cmp);
    if log_samples.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: log_samples.len() });
    }
    let bw = select_bandwidth(&log_samples, rule)?;
    Ok(DensityModel {
        log_samples,
        bandwidth: bw.h,
        offset: eps,
        kernel,
        bandwidth_fallback: bw.fallback,
        cdf_table: OnceLock::new(),
    })
}

impl DensityModel {
    /// Builds a model directly from log-space samples. Allows `n = 1`.
    pub fn from_log_samples(log_samples: Vec<f64>, bandwidth: f64, offset: f64, kernel: Kernel) -> Result<Self> {
        if log_samples.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(offset >= 0.0) || log_samples.iter().any(|y| !y.is_finite()) {
            return Err(Error::Domain("invalid offset or non-finite log sample".into()));
        }
        let mut log_samples = log_samples;
        log_samples.sort_by(f64::total_cmp);
        Ok(DensityModel { log_samples, bandwidth, offset, kernel, bandwidth_fallback: false, cdf_table: OnceLock::new() })
    }

    pub fn log_samples(&self) -> &[f64] {
        &self.log_samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn sample_count(&self) -> usize {
        self.log_samples.len()
    }

    pub fn bandwidth_fallback(&self) -> bool {
        self.bandwidth_fallback
    }

    /// `(min, max)` of the log samples.
    pub fn log_range(&self) -> (f64, f64) {
        (self.log_samples[0], self.log_samples[self.log_samples.len() - 1])
    }

    fn build_cdf_table(&self) -> Vec<(f64, f64)> {
        let (min, max) = self.log_range();
        let (a, b) = (min - 5.0 * self.bandwidth, max + 5.0 * self.bandwidth);
        let step = (b - a) / (CDF_TABLE_NODES - 1) as f64;
        (0..CDF_TABLE_NODES)
            .map(|i| {
                let y = a + step * i as f64;
                (y, self.cdf_pdf_windowed(y).0)
            })
            .collect()
    }

    /// `(cdf, pdf)` in log space, summing only kernels within
    /// [`QUANTILE_WINDOW`] bandwidths of `y`.
    fn cdf_pdf_windowed(&self, y: f64) -> (f64, f64) {
        let h = self.bandwidth;
        let w = QUANTILE_WINDOW * h;
        let lo = self.log_samples.partition_point(|&yi| yi < y - w);
        let hi = self.log_samples.partition_point(|&yi| yi <= y + w);
        let (mut c, mut d) = (lo as f64, 0.0);
        for &yi in &self.log_samples[lo..hi] {
            let z = (y - yi) / h;
            c += self.kernel.cdf(z);
            d += self.kernel.density(z);
        }
        let n = self.log_samples.len() as f64;
        ((c / n).clamp(0.0, 1.0), d / (n * h))
    }

    /// Density of `y = ln(x + ε)`.
    pub fn pdf_log(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self.log_samples.iter().map(|&yi| self.kernel.density((y - yi) / h)).sum();
        s / (self.log_samples.len() as f64 * h)
    }

    /// Distribution function of `y = ln(x + ε)`.
    pub fn cdf_log(&self, y: f64) -> f64 {
        if y == f64::INFINITY {
            return 1.0;
        }
        if y == f64::NEG_INFINITY {
            return 0.0;
        }
        let h = self.bandwidth;
        let s: f64 = self.log_samples.iter().map(|&yi| self.kernel.cdf((y - yi) / h)).sum();
        (s / self.log_samples.len() as f64).clamp(0.0, 1.0)
    }

    /// Density per kWh at `x`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        let shifted = x + self.offset;
        if !(shifted > 0.0) {
            return Err(Error::Domain(format!("pdf evaluated at {x} <= -offset")));
        }
        Ok(self.pdf_log(shifted.ln()) / shifted)
    }

    /// Distribution function in kWh; 0 at or below `-ε`.
    pub fn cdf(&self, x: f64) -> f64 {
        let shifted = x + self.offset;
        if !(shifted > 0.0) {
            return 0.0;
        }
        self.cdf_log(shifted.ln())
    }

    /// Log-space quantile by safeguarded Newton iteration inside the
    /// bracket `[min - 10h, max + 10h]`.
    pub fn quantile_log(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level {u} outside (0, 1)")));
        }
        let table = self.cdf_table.get_or_init(|| self.build_cdf_table());
        let k = table.partition_point(|&(_, c)| c <= u);
        let (mut lo, mut hi, mut y);
        if k == 0 || k == table.len() {
            let (min, max) = self.log_range();
            lo = min - 10.0 * self.bandwidth;
            hi = max + 10.0 * self.bandwidth;
            // the bracket can only miss for levels deep in the kernel tails
            while self.cdf_log(lo) > u {
                lo -= 10.0 * self.bandwidth;
            }
            while self.cdf_log(hi) < u {
                hi += 10.0 * self.bandwidth;
            }
            y = if k == 0 { table[0].0 } else { table[table.len() - 1].0 }.clamp(lo, hi);
        } else {
            let ((y0, c0), (y1, c1)) = (table[k - 1], table[k]);
            lo = y0;
            hi = y1;
            y = y0 + (u - c0) / (c1 - c0) * (y1 - y0);
        }
        for _ in 0..200 {
            let (c, d) = self.cdf_pdf_windowed(y);
            let r = c - u;
            if r.abs() < 1e-15 {
                break;
            }
            if r < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
                break;
            }
            let newton = y - r / d;
            if d > 0.0 && newton > lo && newton < hi {
                let done = (newton - y).abs() <= 1e-14 * (1.0 + y.abs());
                y = newton;
                if done {
                    break;
                }
            } else {
                y = 0.5 * (lo + hi);
            }
        }
        Ok(y)
    }

    /// Quantile in kWh: `exp(y_u) - ε`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.quantile_log(u)?.exp() - self.offset)
    }

    /// Mean of the kWh distribution, `E[exp(Y)] - ε`.
    pub fn mean(&self) -> f64 {
        let h = self.bandwidth;
        let m = match self.kernel {
            Kernel::Gaussian => (0.5 * h * h).exp(),
            Kernel::Uniform => h.sinh() / h,
        };
        stats::mean(&self.log_samples.iter().map(|y| y.exp()).collect::<Vec<_>>()) * m - self.offset
    }

    /// Integral of the log-space density over the sample range ± 8h.
    pub fn total_mass(&self) -> f64 {
        let (min, max) = self.log_range();
        let (a, b) = (min - 8.0 * self.bandwidth, max + 8.0 * self.bandwidth);
        let panels = (((b - a) / self.bandwidth) * 8.0).ceil().max(64.0) as usize;
        numeric::gauss_legendre(|y| self.pdf_log(y), a, b, panels)
    }

    /// `(x, pdf, cdf)` rows on `points` log-spaced abscissae spanning the
    /// sample range ± 4h.
    pub fn grid(&self, points: usize) -> Vec<(f64, f64, f64)> {
        let (min, max) = self.log_range();
        let (a, b) = (min - 4.0 * self.bandwidth, max + 4.0 * self.bandwidth);
        let step = (b - a) / (points.max(2) - 1) as f64;
        (0..points.max(2))
            .map(|i| {
                let y = a + step * i as f64;
                let shifted = y.exp();
                (shifted - self.offset, self.pdf_log(y) / shifted, self.cdf_log(y))
            })
            .collect()
    }
}
