//! Rescaled-field Gumbel limits: normalizing constants, distributional
//! experiments, and the confidence tube / confidence region constructions.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::excursion::{energy_integral, ExcursionError, PickandsInput};
use crate::field::{covariance_matrix, CovarianceModel, Factorization, FieldError};
use crate::manifold::{sphere_area, ManifoldDescriptor, ManifoldError};
use crate::math::{gumbel_quantile, MathError};
use crate::rng::{mix, replication_rng};
use nalgebra::DVector;

#[derive(Debug, Error)]
pub enum EvdError {
    #[error("nonpositive argument to a logarithm: {name} = {value}")]
    NonpositiveLogArgument { name: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid of {got} points exceeds the dense-sampling cap {cap}; raise h or lower the resolution")]
    GridTooLarge { got: usize, cap: usize },
    #[error(transparent)]
    Excursion(#[from] ExcursionError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// The centering/scaling pair `(a_h, b_h)` of the Gumbel limit, together
/// with the pieces it was assembled from.
#[derive(Debug, Clone, Serialize)]
pub struct GumbelNormalization {
    pub a_h: f64,
    pub b_h: f64,
    pub h: f64,
    pub r1: usize,
    pub r2: usize,
    pub alpha1: f64,
    pub alpha2: Option<f64>,
    pub p: Option<usize>,
    pub i_h: f64,
    pub pickands: f64,
    /// Coefficient of `log log(1/h)` in the bracket.
    pub loglog_coefficient: f64,
    /// The `log{...}` constant in the bracket.
    pub log_constant: f64,
}

impl GumbelNormalization {
    /// `theta_{h,z} = b_h + z / a_h`.
    pub fn theta(&self, z: f64) -> f64 {
        self.b_h + z / self.a_h
    }

    /// `|b_h - a_h| a_h` never exceeds the bracket magnitude
    /// `|coef| log log(1/h) + |const|`.
    pub fn drift_bound_ok(&self) -> bool {
        let loglog = (1.0 / self.h).ln().ln();
        (self.b_h - self.a_h).abs() * self.a_h
            <= self.loglog_coefficient.abs() * loglog.abs() + self.log_constant.abs() + 1e-9
    }
}

fn assemble(
    r1: usize,
    a_h: f64,
    h: f64,
    coef: f64,
    constant: f64,
    meta: (usize, f64, Option<f64>, Option<usize>, f64, f64),
) -> GumbelNormalization {
    let log_inv_h = (1.0 / h).ln();
    let b_h = a_h + (coef * log_inv_h.ln() + constant) / a_h;
    let (r2, alpha1, alpha2, p, i_h, pickands) = meta;
    GumbelNormalization {
        a_h,
        b_h,
        h,
        r1,
        r2,
        alpha1,
        alpha2,
        p,
        i_h,
        pickands,
        loglog_coefficient: coef,
        log_constant: constant,
    }
}

/// Gumbel normalization for the rescaled Gaussian field:
/// `a_h = sqrt(2 r1 log(1/h))`, `b_h = beta_h` with log-log coefficient
/// `r1/alpha1 + r2/alpha2 - 1/2` and constant
/// `log{(2 r1)^{coef} H I_h / sqrt(2 pi)}`. `r2 = 0` drops the second
/// block (`alpha2` is then ignored).
pub fn beta_h_gaussian(
    r1: usize,
    r2: usize,
    alpha1: f64,
    alpha2: Option<f64>,
    h: f64,
    i_h: f64,
    pickands: f64,
) -> Result<GumbelNormalization, EvdError> {
    if r1 == 0 {
        return Err(EvdError::InvalidParameter("r1 must be >= 1".into()));
    }
    if !(alpha1 > 0.0 && alpha1 <= 2.0) {
        return Err(EvdError::InvalidParameter(format!(
            "alpha1 = {alpha1} not in (0,2]"
        )));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(EvdError::NonpositiveLogArgument {
            name: "log(1/h) with h",
            value: h,
        });
    }
    if i_h <= 0.0 {
        return Err(EvdError::NonpositiveLogArgument {
            name: "I_h",
            value: i_h,
        });
    }
    if pickands <= 0.0 {
        return Err(EvdError::NonpositiveLogArgument {
            name: "H",
            value: pickands,
        });
    }
    let tail2 = if r2 == 0 {
        0.0
    } else {
        let a2 = alpha2.ok_or(EvdError::InvalidParameter(
            "alpha2 required when r2 > 0".into(),
        ))?;
        if !(a2 > 0.0 && a2 <= 2.0) {
            return Err(EvdError::InvalidParameter(format!(
                "alpha2 = {a2} not in (0,2]"
            )));
        }
        r2 as f64 / a2
    };
    let log_inv_h = (1.0 / h).ln();
    let a_h = (2.0 * r1 as f64 * log_inv_h).sqrt();
    let coef = r1 as f64 / alpha1 + tail2 - 0.5;
    let constant =
        ((2.0 * r1 as f64).powf(coef) / std::f64::consts::TAU.sqrt() * pickands * i_h).ln();
    Ok(assemble(
        r1,
        a_h,
        h,
        coef,
        constant,
        (r2, alpha1, alpha2, None, i_h, pickands),
    ))
}

/// Chi variant: log-log coefficient `m/alpha + (p-2)/2`, constant
/// `log{(2m)^{coef} H I_h / (2 pi)^{p/2}}` with
/// `I_h = int_{L x S^{p-1}} ||B P||_m`. For `p = 1` this delegates to
/// [`beta_h_abs`], where `i_h` must then be the plain `int_L ||B P||_m`.
pub fn beta_h_chi(
    m: usize,
    alpha: f64,
    p: usize,
    h: f64,
    i_h: f64,
    pickands: f64,
) -> Result<GumbelNormalization, EvdError> {
    if p == 0 {
        return Err(EvdError::InvalidParameter("p must be >= 1".into()));
    }
    if p == 1 {
        return beta_h_abs(m, alpha, h, i_h, pickands);
    }
    if m == 0 {
        return Err(EvdError::InvalidParameter("m must be >= 1".into()));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(EvdError::NonpositiveLogArgument {
            name: "log(1/h) with h",
            value: h,
        });
    }
    if i_h <= 0.0 {
        return Err(EvdError::NonpositiveLogArgument {
            name: "I_h",
            value: i_h,
        });
    }
    if pickands <= 0.0 {
        return Err(EvdError::NonpositiveLogArgument {
            name: "H",
            value: pickands,
        });
    }
    let log_inv_h = (1.0 / h).ln();
    let a_h = (2.0 * m as f64 * log_inv_h).sqrt();
    let coef = m as f64 / alpha + (p as f64 - 2.0) / 2.0;
    let constant = ((2.0 * m as f64).powf(coef) / std::f64::consts::TAU.sqrt().powi(p as i32)
        * pickands
        * i_h)
        .ln();
    Ok(assemble(
        m,
        a_h,
        h,
        coef,
        constant,
        (p - 1, alpha, Some(2.0), Some(p), i_h, pickands),
    ))
}

/// `p = 1` (absolute value) route: the Gaussian formula with `r2 = 0` and
/// the integral doubled (`|S^0| = 2`), `i_l = int_L ||B P||_m`.
pub fn beta_h_abs(
    m: usize,
    alpha: f64,
    h: f64,
    i_l: f64,
    pickands: f64,
) -> Result<GumbelNormalization, EvdError> {
    let mut norm = beta_h_gaussian(m, 0, alpha, None, h, 2.0 * i_l, pickands)?;
    norm.p = Some(1);
    Ok(norm)
}

/// `theta_{h,z} = beta_h + z / sqrt(2 r1 log(1/h))`.
pub fn theta_hz(norm: &GumbelNormalization, z: f64) -> f64 {
    norm.theta(z)
}

/// One h-level of the Gumbel limit experiment.
#[derive(Debug, Clone, Serialize)]
pub struct GumbelLevelReport {
    pub h: f64,
    pub a_h: f64,
    pub b_h: f64,
    pub grid_points: usize,
    pub n_reps: usize,
    pub z_grid: Vec<f64>,
    /// Empirical CDF of `a_h (max - b_h)` at the z grid.
    pub empirical_cdf: Vec<f64>,
    /// One-sample Kolmogorov-Smirnov distance to `exp(-exp(-z))`.
    pub ks: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GumbelExperimentReport {
    pub levels: Vec<GumbelLevelReport>,
    /// KS standard error proxy `0.5/sqrt(n)` per level.
    pub ks_std_error: f64,
    /// Whether KS is nonincreasing along the h list within 2 joint
    /// standard errors.
    pub ks_trend_ok: bool,
}

/// Distributional check of the Gumbel limit for a rescaled field on a
/// manifold: per h, sample grid maxima, standardize with `(a_h, b_h)`, and
/// compare to `exp(-exp(-z))`.
///
/// `resolutions[i]` is the manifold sampling resolution used at `h_list[i]`
/// (the grid must resolve the rescaled correlation length, so it grows
/// like 1/h up to the dense cap). `declared_i_h` short-circuits the
/// quadrature when the user knows the limit of `I_h(M_h)`.
#[allow(clippy::too_many_arguments)]
pub fn gumbel_limit_experiment(
    m: &ManifoldDescriptor,
    model: &CovarianceModel,
    h_list: &[f64],
    resolutions: &[usize],
    n_reps: usize,
    z_grid: &[f64],
    seed: u64,
    quadrature_resolution: usize,
    pickands: PickandsInput,
    declared_i_h: Option<f64>,
) -> Result<GumbelExperimentReport, EvdError> {
    if h_list.is_empty() || h_list.len() != resolutions.len() {
        return Err(EvdError::InvalidParameter(
            "h_list and resolutions must be equal-length and nonempty".into(),
        ));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EvdError::InvalidParameter(
            "h_list must be strictly decreasing".into(),
        ));
    }
    let s = model.structure();
    let h_value = pickands.resolve(s)?;
    let i_h = match declared_i_h {
        Some(v) => v,
        None => energy_integral(m, model, quadrature_resolution)?,
    };
    let r1 = s.manifold_dims()[0];
    let (r2, alpha2) = if s.block_count() > 1 {
        (s.manifold_dims()[1], Some(s.exponents()[1]))
    } else {
        (0, None)
    };

    let mut levels = Vec::with_capacity(h_list.len());
    for (idx, (&h, &res)) in h_list.iter().zip(resolutions).enumerate() {
        let points = m.sample_points(res)?;
        if points.len() > crate::field::MAX_DENSE_POINTS {
            return Err(EvdError::GridTooLarge {
                got: points.len(),
                cap: crate::field::MAX_DENSE_POINTS,
            });
        }
        let rescaled = model.clone().with_rescale(h)?;
        let cov = covariance_matrix(&rescaled, &points)?;
        let fact = Factorization::new(cov, rescaled.family_name())?;
        let norm = beta_h_gaussian(r1, r2, s.exponents()[0], alpha2, h, i_h, h_value)?;
        let level_seed = mix(seed, idx as u64);
        let maxima: Vec<f64> =
            crate::field::sample_replications(&fact, n_reps, level_seed, |_, x| {
                x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            });
        let standardized: Vec<f64> = maxima
            .iter()
            .map(|&mx| norm.a_h * (mx - norm.b_h))
            .collect();
        let empirical_cdf = z_grid
            .iter()
            .map(|&z| standardized.iter().filter(|&&v| v <= z).count() as f64 / n_reps as f64)
            .collect();
        levels.push(GumbelLevelReport {
            h,
            a_h: norm.a_h,
            b_h: norm.b_h,
            grid_points: points.len(),
            n_reps,
            z_grid: z_grid.to_vec(),
            empirical_cdf,
            ks: ks_to_gumbel(&standardized),
        });
    }
    let ks_se = 0.5 / (n_reps as f64).sqrt();
    let ks_trend_ok = levels
        .windows(2)
        .all(|w| w[1].ks <= w[0].ks + 2.0 * (2.0f64).sqrt() * ks_se);
    Ok(GumbelExperimentReport {
        levels,
        ks_std_error: ks_se,
        ks_trend_ok,
    })
}

/// One-sample KS distance to the standard Gumbel CDF.
pub fn ks_to_gumbel(sample: &[f64]) -> f64 {
    let mut x: Vec<f64> = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = (-(-v).exp()).exp();
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}

/// Asymptotic `(1-alpha)` confidence tube: the ball radius around each
/// observed value.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceTube {
    pub radius: f64,
    pub alpha: f64,
    pub z_alpha: f64,
    pub a_h: f64,
    pub b_h: f64,
}

impl ConfidenceTube {
    /// Whether `g` lies in the tube ball around the observed `f_hat_s`.
    pub fn contains(&self, f_hat_s: &DVector<f64>, g: &DVector<f64>) -> bool {
        (f_hat_s - g).norm() <= self.radius
    }
}

/// `rho = b_h + z_alpha / a_h`.
pub fn confidence_tube(norm: &GumbelNormalization, alpha: f64) -> Result<ConfidenceTube, EvdError> {
    let z_alpha = gumbel_quantile(alpha)?;
    Ok(ConfidenceTube {
        radius: norm.theta(z_alpha),
        alpha,
        z_alpha,
        a_h: norm.a_h,
        b_h: norm.b_h,
    })
}

/// Confidence region over a finite ambient grid: the sub-grid where
/// `a_h (||f_hat - g0|| - b_h) <= z_alpha`.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceRegion {
    pub member_indices: Vec<usize>,
    pub z_alpha: f64,
    pub threshold: f64,
    /// Containment flag for a supplied truth set, if any.
    pub contains_truth: Option<bool>,
}

pub fn confidence_region(
    f_hat: &[DVector<f64>],
    g0: &DVector<f64>,
    norm: &GumbelNormalization,
    alpha: f64,
    truth_indices: Option<&[usize]>,
) -> Result<ConfidenceRegion, EvdError> {
    let z_alpha = gumbel_quantile(alpha)?;
    let threshold = norm.theta(z_alpha);
    let member_indices: Vec<usize> = f_hat
        .iter()
        .enumerate()
        .filter(|(_, f)| (*f - g0).norm() <= threshold)
        .map(|(i, _)| i)
        .collect();
    let contains_truth = truth_indices.map(|truth| {
        let set: std::collections::HashSet<usize> = member_indices.iter().cloned().collect();
        truth.iter().all(|i| set.contains(i))
    });
    Ok(ConfidenceRegion {
        member_indices,
        z_alpha,
        threshold,
        contains_truth,
    })
}

/// Coverage summary of a Monte Carlo coverage/containment study.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub covered: usize,
    pub coverage: f64,
    pub radius: f64,
    pub a_h: f64,
    pub b_h: f64,
    pub h: f64,
    pub alpha: f64,
}

/// Coverage experiment for the confidence tube with a pure-noise signal:
/// `f == 0`, noise the `p`-dimensional chi lift of `base_model` rescaled by
/// `h`. Covered means `max_s ||X(s/h)|| <= rho`.
#[allow(clippy::too_many_arguments)]
pub fn tube_coverage_experiment(
    m: &ManifoldDescriptor,
    base_model: &CovarianceModel,
    p: usize,
    h: f64,
    alpha: f64,
    n_trials: usize,
    resolution: usize,
    quadrature_resolution: usize,
    seed: u64,
    pickands: PickandsInput,
) -> Result<CoverageReport, EvdError> {
    if p == 0 {
        return Err(EvdError::InvalidParameter("p must be >= 1".into()));
    }
    let s = base_model.structure();
    let m_dim = s.manifold_dim();
    let alpha_k = s.exponents()[0];
    let h_value = pickands.resolve(s)?;
    let base_integral = energy_integral(m, base_model, quadrature_resolution)?;
    let norm = if p == 1 {
        beta_h_abs(m_dim, alpha_k, h, base_integral, h_value)?
    } else {
        beta_h_chi(
            m_dim,
            alpha_k,
            p,
            h,
            sphere_area(p) * base_integral,
            h_value,
        )?
    };
    let tube = confidence_tube(&norm, alpha)?;

    let points = m.sample_points(resolution)?;
    let rescaled = base_model.clone().with_rescale(h)?;
    let cov = covariance_matrix(&rescaled, &points)?;
    let fact = Factorization::new(cov, rescaled.family_name())?;
    let n = fact.dim();
    let covered: Vec<bool> = (0..n_trials)
        .into_par_iter()
        .map_init(
            || {
                (
                    DVector::zeros(fact.noise_dim()),
                    vec![DVector::<f64>::zeros(n); p],
                )
            },
            |(z, comps), trial| {
                for (j, comp) in comps.iter_mut().enumerate() {
                    let mut rng = replication_rng(seed, (trial * p + j) as u64);
                    fact.sample_into(&mut rng, z, comp);
                }
                let mut sup = f64::NEG_INFINITY;
                for i in 0..n {
                    let ss: f64 = comps.iter().map(|c| c[i] * c[i]).sum();
                    sup = sup.max(ss.sqrt());
                }
                sup <= tube.radius
            },
        )
        .collect();
    let hits = covered.iter().filter(|&&c| c).count();
    Ok(CoverageReport {
        trials: n_trials,
        covered: hits,
        coverage: hits as f64 / n_trials as f64,
        radius: tube.radius,
        a_h: norm.a_h,
        b_h: norm.b_h,
        h,
        alpha,
    })
}

/// Containment experiment for the confidence region: the truth manifold is
/// the unit circle, implicitly defined as the zero set of
/// `f(s) = ||s|| - 1` over an ambient grid (circle samples plus a
/// background grid on `[-bound, bound]^2`), observed with scalar noise
/// `X(s/h)`.
#[allow(clippy::too_many_arguments)]
pub fn region_containment_experiment(
    base_model: &CovarianceModel,
    h: f64,
    alpha: f64,
    n_trials: usize,
    circle_samples: usize,
    background_resolution: usize,
    background_bound: f64,
    quadrature_resolution: usize,
    seed: u64,
    pickands: PickandsInput,
) -> Result<CoverageReport, EvdError> {
    let circle = ManifoldDescriptor::circle(1.0).map_err(EvdError::from)?;
    let s = base_model.structure();
    let h_value = pickands.resolve(s)?;
    let i_l = energy_integral(&circle, base_model, quadrature_resolution)?;
    let norm = beta_h_abs(s.manifold_dim(), s.exponents()[0], h, i_l, h_value)?;
    let z_alpha = gumbel_quantile(alpha)?;
    let threshold = norm.theta(z_alpha);

    // ambient grid A: truth samples first, then the background
    let mut a_points = circle.sample_points(circle_samples)?;
    let truth_count = a_points.len();
    let background = ManifoldDescriptor::interval_product(vec![
        (-background_bound, background_bound),
        (-background_bound, background_bound),
    ])
    .map_err(EvdError::from)?;
    a_points.extend(background.sample_points(background_resolution)?);

    let rescaled = base_model.clone().with_rescale(h)?;
    let cov = covariance_matrix(&rescaled, &a_points)?;
    let fact = Factorization::new(cov, rescaled.family_name())?;
    // f(s) = ||s|| - 1 vanishes on the truth samples; containment only
    // involves |noise| there
    let contained: Vec<bool> = crate::field::sample_replications(&fact, n_trials, seed, |_, x| {
        x.iter().take(truth_count).all(|v| v.abs() <= threshold)
    });
    let hits = contained.iter().filter(|&&c| c).count();
    Ok(CoverageReport {
        trials: n_trials,
        covered: hits,
        coverage: hits as f64 / n_trials as f64,
        radius: threshold,
        a_h: norm.a_h,
        b_h: norm.b_h,
        h,
        alpha,
    })
}
