//! Maximum-likelihood fitting and AIC selection of pair copulas.

use serde::{Deserialize, Serialize};

use super::family::{BivariateCopula, Family, Rotation};
use crate::error::{Error, Result};
use crate::numeric::brent_minimize;

/// Fewest observations accepted for a pair-copula fit.
pub const MIN_PAIR_OBSERVATIONS: usize = 20;
/// AIC differences below this are ties.
pub const AIC_TIE_TOL: f64 = 1e-9;
/// Fits whose density integral is further than this from 1 are flagged.
pub const NORMALIZATION_TOL: f64 = 1e-3;

const GRID_POINTS: usize = 41;

/// Families (with rotations) considered for each vine edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub families: Vec<Family>,
    pub rotations: bool,
}

impl Default for CandidateSet {
    fn default() -> Self {
        CandidateSet { families: Family::ALL.to_vec(), rotations: true }
    }
}

impl CandidateSet {
    pub fn only(families: &[Family]) -> Self {
        CandidateSet { families: families.to_vec(), rotations: true }
    }

    /// Expanded `(family, rotation)` list in evaluation order.
    pub fn expand(&self) -> Vec<(Family, Rotation)> {
        let mut fams = self.families.clone();
        fams.sort();
        fams.dedup();
        let mut out = Vec::new();
        for f in fams {
            if f.is_rotatable() && self.rotations {
                out.extend(Rotation::ALL.iter().map(|&r| (f, r)));
            } else {
                out.push((f, Rotation::R0));
            }
        }
        out
    }
}

fn check_pairs(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Mismatch(format!("pair lengths {} and {}", u.len(), v.len())));
    }
    if u.len() < MIN_PAIR_OBSERVATIONS {
        return Err(Error::TooFewObservations { needed: MIN_PAIR_OBSERVATIONS, got: u.len() });
    }
    if let Some(x) = u.iter().chain(v).find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::Domain(format!("pseudo-observation {x} outside (0, 1)")));
    }
    Ok(())
}

fn search_grid(family: Family) -> Vec<f64> {
    let (lo, hi) = family.search_bounds();
    let n = GRID_POINTS - 1;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            match family {
                // denser near weak dependence
                Family::Clayton => lo * (hi / lo).powf(t),
                Family::Gumbel | Family::Joe => lo + (hi - lo) * t * t,
                _ => lo + (hi - lo) * t,
            }
        })
        .collect()
}

fn loglik(c: &BivariateCopula, u: &[f64], v: &[f64]) -> f64 {
    let s: f64 = u.iter().zip(v).map(|(&a, &b)| c.log_density_unchecked(a, b)).sum();
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Maximum-likelihood fit of one family and rotation.
pub fn fit_bivariate(u: &[f64], v: &[f64], family: Family, rotation: Rotation) -> Result<BivariateCopula> {
    check_pairs(u, v)?;
    if family == Family::Independence {
        return Ok(BivariateCopula { n_fitted: u.len(), ..BivariateCopula::independence() });
    }
    let template = BivariateCopula::new(family, rotation, family.search_bounds().1)?;
    let nll = |theta: f64| {
        let mut c = template.clone();
        c.parameters[0] = theta;
        -loglik(&c, u, v)
    };

    let grid = search_grid(family);
    let values: Vec<f64> = grid.iter().map(|&t| nll(t)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Fit(format!("{family} likelihood is not finite anywhere on the search grid")))?;
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let m = brent_minimize(|t| {
        let x = nll(t);
        if x.is_finite() {
            x
        } else {
            f64::MAX
        }
    }, lo, hi, 1e-8, 500);
    let (theta, value) = if m.value <= values[best] { (m.x, m.value) } else { (grid[best], values[best]) };

    let (blo, bhi) = family.search_bounds();
    let at_bound = (theta - blo).abs() < 1e-6 * (bhi - blo) || (bhi - theta).abs() < 1e-6 * (bhi - blo);
    let mut note = None;
    if at_bound {
        note = Some(format!("estimate {theta} at search bound"));
    } else if !m.converged {
        note = Some("optimizer did not converge".to_string());
    }
    let ll = -value;
    Ok(BivariateCopula {
        family,
        rotation,
        parameters: vec![theta],
        loglik: ll,
        aic: 2.0 * family.parameter_count() as f64 - 2.0 * ll,
        n_fitted: u.len(),
        flagged: note.is_some(),
        note,
        normalization_error: None,
    })
}

/// Fits every candidate and returns the one with lowest AIC. Ties go to
/// fewer parameters, then to candidate order.
pub fn select_bivariate(u: &[f64], v: &[f64], candidates: &CandidateSet) -> Result<BivariateCopula> {
    check_pairs(u, v)?;
    let list = candidates.expand();
    if list.is_empty() {
        return Err(Error::Parameter("empty candidate family set".into()));
    }
    let mut best: Option<BivariateCopula> = None;
    let mut last_err = None;
    for (family, rotation) in list {
        match fit_bivariate(u, v, family, rotation) {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        fit.aic < b.aic - AIC_TIE_TOL
                            || ((fit.aic - b.aic).abs() <= AIC_TIE_TOL
                                && fit.family.parameter_count() < b.family.parameter_count())
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut best = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no candidate fitted".into())))?;
    if best.family != Family::Independence {
        let err = best.midpoint_normalization_error();
        best.normalization_error = Some(err);
        if err > NORMALIZATION_TOL {
            best.flagged = true;
            let msg = format!("density integrates to within {err:.2e} of one");
            best.note = Some(match best.note.take() {
                Some(n) => format!("{n}; {msg}"),
                None => msg,
            });
        }
    }
    Ok(best)
}
