//! One-parameter bivariate copula families and their rotations.
//!
//! Every family here is exchangeable in its unrotated form. Rotations act
//! on the arguments: 90° reflects `u`, 180° reflects both, 270° reflects
//! `v`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, norm_cdf, norm_ppf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Independence,
    Gaussian,
    Frank,
    Clayton,
    Gumbel,
    Joe,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Independence,
        Family::Gaussian,
        Family::Frank,
        Family::Clayton,
        Family::Gumbel,
        Family::Joe,
    ];

    pub fn parameter_count(self) -> usize {
        match self {
            Family::Independence => 0,
            _ => 1,
        }
    }

    /// Whether rotations other than 0° produce a distinct copula.
    pub fn is_rotatable(self) -> bool {
        matches!(self, Family::Clayton | Family::Gumbel | Family::Joe)
    }

    /// Closed interval searched by maximum likelihood.
    pub fn search_bounds(self) -> (f64, f64) {
        match self {
            Family::Independence => (0.0, 0.0),
            Family::Gaussian => (-0.999, 0.999),
            Family::Frank => (-35.0, 35.0),
            Family::Clayton => (1e-4, 28.0),
            Family::Gumbel => (1.0, 17.0),
            Family::Joe => (1.0, 30.0),
        }
    }

    pub fn check_parameter(self, theta: f64) -> Result<()> {
        let ok = match self {
            Family::Independence => true,
            Family::Gaussian => theta > -1.0 && theta < 1.0,
            Family::Frank => theta.is_finite(),
            Family::Clayton => theta > 0.0 && theta.is_finite(),
            Family::Gumbel | Family::Joe => theta >= 1.0 && theta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("{self} does not accept parameter {theta}")))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::Frank => "frank",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Joe => "joe",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    /// Rotation of the copula with its arguments swapped.
    fn transposed(self) -> Rotation {
        match self {
            Rotation::R90 => Rotation::R270,
            Rotation::R270 => Rotation::R90,
            r => r,
        }
    }

    fn negates_dependence(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

impl TryFrom<u16> for Rotation {
    type Error = String;

    fn try_from(d: u16) -> std::result::Result<Self, String> {
        match d {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            _ => Err(format!("invalid rotation {d}")),
        }
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

/// Frank parameters this close to zero are evaluated as independence.
const FRANK_ZERO: f64 = 1e-8;

/// Unrotated family with a fixed parameter.
#[derive(Debug, Clone, Copy)]
struct Base {
    family: Family,
    theta: f64,
}

impl Base {
    fn is_independent(&self) -> bool {
        self.family == Family::Independence || (self.family == Family::Frank && self.theta.abs() < FRANK_ZERO)
    }

    fn log_density(&self, u: f64, v: f64) -> f64 {
        if self.is_independent() {
            return 0.0;
        }
        let t = self.theta;
        match self.family {
            Family::Independence => 0.0,
            Family::Gaussian => {
                let (x, y) = (norm_ppf(u), norm_ppf(v));
                let r2 = 1.0 - t * t;
                -0.5 * r2.ln() - (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * r2)
            }
            Family::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                (t.ln_1p()) - (1.0 + t) * (lu + lv) - (2.0 + 1.0 / t) * clayton_log_sum(t, lu, lv)
            }
            Family::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let ls = gumbel_log_s(t, x, y);
                let a = (ls / t).exp();
                -a + x + y + (t - 1.0) * (x.ln() + y.ln()) + (1.0 / t - 2.0) * ls + (a + t - 1.0).ln()
            }
            Family::Frank => {
                let (a, b, c) = ((-t * u).exp_m1(), (-t * v).exp_m1(), (-t).exp_m1());
                (-t * c).ln() + a.ln_1p() + b.ln_1p() - 2.0 * (c + a * b).abs().ln()
            }
            Family::Joe => {
                let (lbu, lbv) = ((-u).ln_1p(), (-v).ln_1p());
                let (p, q) = ((t * lbu).exp(), (t * lbv).exp());
                let s = p + q - p * q;
                (1.0 / t - 2.0) * s.ln() + (t - 1.0) * (lbu + lbv) + (t - 1.0 + s).ln()
            }
        }
    }

    fn cdf(&self, u: f64, v: f64) -> f64 {
        if self.is_independent() {
            return u * v;
        }
        let t = self.theta;
        match self.family {
            Family::Independence => u * v,
            Family::Gaussian => {
                let x = norm_ppf(u);
                let y = norm_ppf(v);
                let r = (1.0 - t * t).sqrt();
                let lo = (-12.0f64).min(y - 1.0);
                numeric::gauss_legendre(|s| norm_cdf((x - t * s) / r) * numeric::norm_pdf(s), lo, y, 400)
            }
            Family::Clayton => (-clayton_log_sum(t, u.ln(), v.ln()) / t).exp(),
            Family::Gumbel => (-(gumbel_log_s(t, -u.ln(), -v.ln()) / t).exp()).exp(),
            Family::Frank => {
                let (a, b, c) = ((-t * u).exp_m1(), (-t * v).exp_m1(), (-t).exp_m1());
                -(a * b / c).ln_1p() / t
            }
            Family::Joe => {
                let (p, q) = ((1.0 - u).powf(t), (1.0 - v).powf(t));
                1.0 - (p + q - p * q).powf(1.0 / t)
            }
        }
    }

    /// `∂C(u, v)/∂v`.
    fn h(&self, u: f64, v: f64) -> f64 {
        if self.is_independent() {
            return u;
        }
        let t = self.theta;
        let out = match self.family {
            Family::Independence => u,
            Family::Gaussian => norm_cdf((norm_ppf(u) - t * norm_ppf(v)) / (1.0 - t * t).sqrt()),
            Family::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                (-(t + 1.0) * lv - (1.0 + 1.0 / t) * clayton_log_sum(t, lu, lv)).exp()
            }
            Family::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let a = (gumbel_log_s(t, x, y) / t).exp();
                (-a + y + (t - 1.0) * (y.ln() - a.ln())).exp()
            }
            Family::Frank => {
                let (a, b, c) = ((-t * u).exp_m1(), (-t * v).exp_m1(), (-t).exp_m1());
                (b + 1.0) * a / (c + a * b)
            }
            Family::Joe => {
                let (p, lbv) = ((1.0 - u).powf(t), (-v).ln_1p());
                let q = (t * lbv).exp();
                let s = p + q - p * q;
                ((1.0 / t - 1.0) * s.ln() + (t - 1.0) * lbv).exp() * (1.0 - p)
            }
        };
        out.clamp(0.0, 1.0)
    }

    /// Solves `h(u, v) = w` for `u`.
    fn inverse_h(&self, w: f64, v: f64) -> f64 {
        if self.is_independent() {
            return w;
        }
        let t = self.theta;
        let closed = match self.family {
            Family::Gaussian => Some(norm_cdf(norm_ppf(w) * (1.0 - t * t).sqrt() + t * norm_ppf(v))),
            Family::Clayton => {
                let lv = v.ln();
                let lt = -t / (1.0 + t) * (w.ln() + (t + 1.0) * lv);
                // s = t' + 1 - v^-θ, written to limit cancellation
                let s = (-t * lv).exp() * ((lt + t * lv).exp_m1()) + 1.0;
                Some(s.powf(-1.0 / t))
            }
            Family::Frank => {
                let (b, c) = ((-t * v).exp_m1(), (-t).exp_m1());
                let a = w * c / (1.0 + b * (1.0 - w));
                Some(-a.ln_1p() / t)
            }
            _ => None,
        };
        match closed {
            Some(u) if u > 0.0 && u < 1.0 && (self.h(u, v) - w).abs() < 1e-10 => u,
            Some(u) if u > 0.0 && u < 1.0 => self.solve_h(w, v, Some(u)),
            _ => self.solve_h(w, v, None),
        }
    }

    /// Newton iteration on `h(·, v) = w`, safeguarded by bisection.
    fn solve_h(&self, w: f64, v: f64, start: Option<f64>) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = start.unwrap_or(w).clamp(1e-300, 1.0 - 1e-16);
        for _ in 0..200 {
            let r = self.h(u, v) - w;
            if r.abs() < 1e-14 {
                break;
            }
            if r < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo < 1e-17 {
                break;
            }
            let d = self.log_density(u, v).exp();
            let newton = u - r / d;
            u = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        u
    }

    fn tau(&self) -> f64 {
        let t = self.theta;
        if self.is_independent() {
            return 0.0;
        }
        match self.family {
            Family::Independence => 0.0,
            Family::Gaussian => 2.0 / std::f64::consts::PI * t.asin(),
            Family::Clayton => t / (t + 2.0),
            Family::Gumbel => 1.0 - 1.0 / t,
            Family::Frank => 1.0 - 4.0 / t * (1.0 - numeric::debye1(t)),
            Family::Joe => {
                if t == 1.0 {
                    return 0.0;
                }
                // 1 + 4 ∫ φ(s)/φ'(s) ds with generator φ(s) = -ln(1 - (1-s)^θ)
                let integrand = |s: f64| {
                    let p = (1.0 - s).powf(t);
                    (1.0 - p).ln() * (1.0 - p) / (t * (1.0 - s).powf(t - 1.0))
                };
                1.0 + 4.0 * numeric::gauss_legendre(integrand, 0.0, 1.0, 400)
            }
        }
    }
}

/// `ln(u^-θ + v^-θ - 1)` from `ln u`, `ln v`.
fn clayton_log_sum(t: f64, lu: f64, lv: f64) -> f64 {
    let (a, b) = (-t * lu, -t * lv);
    let m = a.max(b);
    if m < 30.0 {
        (a.exp() + b.exp_m1()).ln()
    } else {
        m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
    }
}

/// `ln(x^θ + y^θ)`.
fn gumbel_log_s(t: f64, x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == 0.0 {
        return f64::NEG_INFINITY;
    }
    t * hi.ln() + (lo / hi).powf(t).ln_1p()
}

/// A bivariate copula with fitted or fixed parameter and fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateCopula {
    pub family: Family,
    pub rotation: Rotation,
    /// Empty for independence, one value otherwise.
    pub parameters: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub n_fitted: usize,
    /// Set when the fit hit a search bound or the optimizer did not
    /// converge.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Deviation of the density integral from 1 on a 256×256 midpoint grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization_error: Option<f64>,
}

impl BivariateCopula {
    pub fn independence() -> Self {
        BivariateCopula {
            family: Family::Independence,
            rotation: Rotation::R0,
            parameters: Vec::new(),
            loglik: 0.0,
            aic: 0.0,
            n_fitted: 0,
            flagged: false,
            note: None,
            normalization_error: None,
        }
    }

    /// Copula with a given parameter. Fit statistics are zero and
    /// `n_fitted` is 0.
    pub fn new(family: Family, rotation: Rotation, theta: f64) -> Result<Self> {
        if family == Family::Independence {
            return Ok(BivariateCopula::independence());
        }
        family.check_parameter(theta)?;
        if rotation != Rotation::R0 && !family.is_rotatable() {
            return Err(Error::Parameter(format!("{family} is not rotated")));
        }
        Ok(BivariateCopula {
            family,
            rotation,
            parameters: vec![theta],
            loglik: 0.0,
            aic: 0.0,
            n_fitted: 0,
            flagged: false,
            note: None,
            normalization_error: None,
        })
    }

    pub fn theta(&self) -> Option<f64> {
        self.parameters.first().copied()
    }

    fn base(&self) -> Result<Base> {
        let theta = self.theta().unwrap_or(0.0);
        self.family.check_parameter(theta)?;
        Ok(Base { family: self.family, theta })
    }

    fn base_unchecked(&self) -> Base {
        Base { family: self.family, theta: self.theta().unwrap_or(0.0) }
    }

    fn transposed(&self) -> BivariateCopula {
        BivariateCopula { rotation: self.rotation.transposed(), ..self.clone() }
    }

    fn check_unit(u: f64, v: f64) -> Result<()> {
        if u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("copula arguments ({u}, {v}) outside (0, 1)")))
        }
    }

    /// Log density with rotation applied; arguments assumed in `(0, 1)`.
    pub fn log_density_unchecked(&self, u: f64, v: f64) -> f64 {
        let b = self.base_unchecked();
        match self.rotation {
            Rotation::R0 => b.log_density(u, v),
            Rotation::R90 => b.log_density(1.0 - u, v),
            Rotation::R180 => b.log_density(1.0 - u, 1.0 - v),
            Rotation::R270 => b.log_density(u, 1.0 - v),
        }
    }

    pub fn log_density(&self, u: f64, v: f64) -> Result<f64> {
        Self::check_unit(u, v)?;
        self.base()?;
        Ok(self.log_density_unchecked(u, v))
    }

    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        Ok(self.log_density(u, v)?.exp())
    }

    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        Self::check_unit(u, v)?;
        let b = self.base()?;
        Ok(match self.rotation {
            Rotation::R0 => b.cdf(u, v),
            Rotation::R90 => v - b.cdf(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + b.cdf(1.0 - u, 1.0 - v),
            Rotation::R270 => u - b.cdf(u, 1.0 - v),
        })
    }

    /// `h(u | v) = ∂C(u, v)/∂v`, the distribution of `U` given `V = v`.
    pub fn h_unchecked(&self, u: f64, v: f64) -> f64 {
        let b = self.base_unchecked();
        match self.rotation {
            Rotation::R0 => b.h(u, v),
            Rotation::R90 => 1.0 - b.h(1.0 - u, v),
            Rotation::R180 => 1.0 - b.h(1.0 - u, 1.0 - v),
            Rotation::R270 => b.h(u, 1.0 - v),
        }
    }

    pub fn h(&self, u: f64, v: f64) -> Result<f64> {
        Self::check_unit(u, v)?;
        self.base()?;
        Ok(self.h_unchecked(u, v))
    }

    /// Inverse of `h(· | v)`.
    pub fn inverse_h_unchecked(&self, w: f64, v: f64) -> f64 {
        let b = self.base_unchecked();
        match self.rotation {
            Rotation::R0 => b.inverse_h(w, v),
            Rotation::R90 => 1.0 - b.inverse_h(1.0 - w, v),
            Rotation::R180 => 1.0 - b.inverse_h(1.0 - w, 1.0 - v),
            Rotation::R270 => b.inverse_h(w, 1.0 - v),
        }
    }

    pub fn inverse_h(&self, w: f64, v: f64) -> Result<f64> {
        Self::check_unit(w, v)?;
        self.base()?;
        Ok(self.inverse_h_unchecked(w, v))
    }

    /// `∂C(u, v)/∂u`, the distribution of `V` at `v` given `U = u`.
    pub fn h_rev_unchecked(&self, u: f64, v: f64) -> f64 {
        self.transposed().h_unchecked(v, u)
    }

    pub fn h_rev(&self, u: f64, v: f64) -> Result<f64> {
        Self::check_unit(u, v)?;
        self.base()?;
        Ok(self.h_rev_unchecked(u, v))
    }

    /// Solves `h_rev(u, v) = w` for `v`.
    pub fn inverse_h_rev_unchecked(&self, w: f64, u: f64) -> f64 {
        self.transposed().inverse_h_unchecked(w, u)
    }

    /// Kendall's tau implied by the family and parameter.
    pub fn tau(&self) -> f64 {
        let t = self.base_unchecked().tau();
        if self.rotation.negates_dependence() {
            -t
        } else {
            t
        }
    }

    /// `|∫∫ c − 1|` by midpoint quadrature on a 256×256 grid.
    ///
    /// The grid is graded toward the edges through `u = t²(3 − 2t)`, so
    /// the integrable corner singularities of tail-dependent families do
    /// not dominate the error.
    pub fn midpoint_normalization_error(&self) -> f64 {
        const G: usize = 256;
        let step = 1.0 / G as f64;
        let nodes: Vec<(f64, f64)> = (0..G)
            .map(|i| {
                let t = (i as f64 + 0.5) * step;
                (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) * step)
            })
            .collect();
        let mut total = 0.0;
        for &(u, wu) in &nodes {
            let row: f64 = nodes.iter().map(|&(v, wv)| self.log_density_unchecked(u, v).exp() * wv).sum();
            total += row * wu;
        }
        (total - 1.0).abs()
    }

    pub fn label(&self) -> String {
        match (self.family, self.rotation) {
            (Family::Independence, _) => "independence".into(),
            (f, Rotation::R0) => f.to_string(),
            (f, r) => format!("{f}_{}", r.degrees()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cop(f: Family, r: Rotation, t: f64) -> BivariateCopula {
        BivariateCopula::new(f, r, t).unwrap()
    }

    fn grid9() -> Vec<f64> {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn independence_identities() {
        let c = BivariateCopula::independence();
        for &u in &grid9() {
            for &v in &grid9() {
                assert_eq!(c.density(u, v).unwrap(), 1.0);
                assert_eq!(c.h(u, v).unwrap(), u);
                assert_eq!(c.inverse_h(u, v).unwrap(), u);
            }
        }
        let g = cop(Family::Gaussian, Rotation::R0, 0.0);
        assert!((g.density(0.3, 0.8).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters_and_arguments() {
        assert!(BivariateCopula::new(Family::Clayton, Rotation::R0, -1.0).is_err());
        assert!(BivariateCopula::new(Family::Gumbel, Rotation::R0, 0.5).is_err());
        assert!(BivariateCopula::new(Family::Gaussian, Rotation::R0, 1.0).is_err());
        assert!(BivariateCopula::new(Family::Frank, Rotation::R90, 2.0).is_err());
        let c = cop(Family::Clayton, Rotation::R0, 2.0);
        assert!(c.density(0.0, 0.5).is_err());
        assert!(c.h(0.5, 1.0).is_err());
    }

    fn mixed_partial(c: &BivariateCopula, u: f64, v: f64, e: f64) -> f64 {
        let cdf = |a: f64, b: f64| c.cdf(a, b).unwrap();
        (cdf(u + e, v + e) - cdf(u + e, v - e) - cdf(u - e, v + e) + cdf(u - e, v - e)) / (4.0 * e * e)
    }

    #[test]
    fn clayton_density_matches_mixed_partial() {
        let c = cop(Family::Clayton, Rotation::R0, 2.0);
        let fd = mixed_partial(&c, 0.3, 0.7, 1e-4);
        assert!((c.density(0.3, 0.7).unwrap() - fd).abs() < 1e-5, "{} vs {fd}", c.density(0.3, 0.7).unwrap());
    }

    #[test]
    fn all_densities_match_mixed_partials() {
        let cases = [
            cop(Family::Gumbel, Rotation::R0, 2.0),
            cop(Family::Gumbel, Rotation::R90, 1.3),
            cop(Family::Frank, Rotation::R0, 5.0),
            cop(Family::Frank, Rotation::R0, -7.0),
            cop(Family::Joe, Rotation::R0, 2.5),
            cop(Family::Joe, Rotation::R270, 1.5),
            cop(Family::Clayton, Rotation::R180, 0.7),
            cop(Family::Gaussian, Rotation::R0, 0.6),
        ];
        for c in &cases {
            for &u in &[0.15, 0.5, 0.8] {
                for &v in &[0.2, 0.45, 0.85] {
                    let fd = mixed_partial(c, u, v, 1e-3);
                    let d = c.density(u, v).unwrap();
                    assert!((d - fd).abs() < 1e-4 * (1.0 + d), "{} at ({u}, {v}): {d} vs {fd}", c.label());
                }
            }
        }
    }

    #[test]
    fn h_functions_match_finite_differences() {
        let cases = [
            cop(Family::Clayton, Rotation::R0, 2.0),
            cop(Family::Gumbel, Rotation::R0, 2.0),
            cop(Family::Frank, Rotation::R0, 5.0),
            cop(Family::Joe, Rotation::R90, 1.7),
            cop(Family::Clayton, Rotation::R270, 1.3),
            cop(Family::Gumbel, Rotation::R180, 1.5),
            cop(Family::Gaussian, Rotation::R0, -0.4),
        ];
        let e = 1e-6;
        for c in &cases {
            for &u in &grid9() {
                for &v in &grid9() {
                    let dv = (c.cdf(u, v + e).unwrap() - c.cdf(u, v - e).unwrap()) / (2.0 * e);
                    let du = (c.cdf(u + e, v).unwrap() - c.cdf(u - e, v).unwrap()) / (2.0 * e);
                    assert!((c.h(u, v).unwrap() - dv).abs() < 1e-5, "{} h({u}|{v})", c.label());
                    assert!((c.h_rev(u, v).unwrap() - du).abs() < 1e-5, "{} h_rev({u},{v})", c.label());
                }
            }
        }
    }

    #[test]
    fn inverse_h_round_trips() {
        let cases: [(Family, &[f64]); 5] = [
            (Family::Gaussian, &[-0.9, 0.3, 0.99]),
            (Family::Frank, &[-20.0, 0.5, 12.0]),
            (Family::Clayton, &[0.05, 2.0, 15.0]),
            (Family::Gumbel, &[1.01, 2.0, 10.0]),
            (Family::Joe, &[1.05, 3.0, 12.0]),
        ];
        for (f, thetas) in cases {
            for &theta in thetas {
                for r in Rotation::ALL {
                    if r != Rotation::R0 && !f.is_rotatable() {
                        continue;
                    }
                    let c = cop(f, r, theta);
                    for &w in &[1e-6, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
                        for &v in &[1e-5, 0.05, 0.3, 0.5, 0.9, 0.999] {
                            let u = c.inverse_h(w, v).unwrap();
                            assert!(u > 0.0 && u < 1.0, "{} w={w} v={v} u={u}", c.label());
                            assert!((c.h(u, v).unwrap() - w).abs() < 1e-9, "{} w={w} v={v} u={u} h={}", c.label(), c.h(u, v).unwrap());
                            let vv = c.inverse_h_rev_unchecked(w, v);
                            assert!((c.h_rev(v, vv).unwrap() - w).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn h_non_decreasing() {
        for c in [cop(Family::Joe, Rotation::R0, 3.0), cop(Family::Frank, Rotation::R0, -8.0), cop(Family::Clayton, Rotation::R90, 4.0)] {
            for &v in &grid9() {
                let hs: Vec<f64> = (1..100).map(|i| c.h(i as f64 / 100.0, v).unwrap()).collect();
                assert!(hs.windows(2).all(|w| w[1] >= w[0]), "{}", c.label());
            }
        }
    }

    #[test]
    fn rotation_180_reflects() {
        let c0 = cop(Family::Clayton, Rotation::R0, 2.5);
        let c180 = cop(Family::Clayton, Rotation::R180, 2.5);
        for &u in &grid9() {
            for &v in &grid9() {
                assert_eq!(c180.density(u, v).unwrap(), c0.density(1.0 - u, 1.0 - v).unwrap());
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            cop(Family::Gaussian, Rotation::R0, 0.5),
            cop(Family::Frank, Rotation::R0, 5.0),
            cop(Family::Frank, Rotation::R0, -3.0),
            cop(Family::Clayton, Rotation::R0, 2.0),
            cop(Family::Clayton, Rotation::R90, 1.0),
            cop(Family::Gumbel, Rotation::R0, 1.5),
            cop(Family::Gumbel, Rotation::R270, 2.0),
            cop(Family::Joe, Rotation::R180, 2.0),
            cop(Family::Clayton, Rotation::R0, 6.0),
            cop(Family::Gumbel, Rotation::R0, 4.0),
        ];
        for c in &cases {
            let e = c.midpoint_normalization_error();
            assert!(e < 1e-3, "{} integrates with error {e}", c.label());
        }
    }

    #[test]
    fn tau_values() {
        assert!((cop(Family::Clayton, Rotation::R0, 2.0).tau() - 0.5).abs() < 1e-15);
        assert!((cop(Family::Gumbel, Rotation::R0, 2.0).tau() - 0.5).abs() < 1e-15);
        assert!((cop(Family::Clayton, Rotation::R90, 2.0).tau() + 0.5).abs() < 1e-15);
        // Frank θ = 5: τ ≈ 0.4567 (tabulated)
        assert!((cop(Family::Frank, Rotation::R0, 5.0).tau() - 0.456_7).abs() < 5e-4);
        // Joe τ closed form 1 + 2/(2-θ)(ψ(2) - ψ(2/θ + 1)) at θ = 3
        let psi2 = 1.0 - 0.577_215_664_901_532_9;
        let psi_5_3 = statrs::function::gamma::digamma(5.0 / 3.0);
        let joe3 = 1.0 + 2.0 / (2.0 - 3.0) * (psi2 - psi_5_3);
        assert!((cop(Family::Joe, Rotation::R0, 3.0).tau() - joe3).abs() < 1e-6);
        assert!((cop(Family::Gaussian, Rotation::R0, 0.5).tau() - 1.0 / 3.0).abs() < 1e-12);
    }
}
