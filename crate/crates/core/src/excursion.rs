//! Closed-form excursion asymptotics for Gaussian, chi and |X| fields on
//! compact manifolds, with Monte Carlo verification.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::field::{covariance_matrix, CovarianceModel, Factorization, FieldError};
use crate::manifold::{sphere_area, ManifoldDescriptor, ManifoldError, Point};
use crate::math::{mills_psi, minor_norm, MathError, Structure};
use crate::pickands::structure_closed_form;
use crate::rng::replication_rng;
use nalgebra::DVector;

#[derive(Debug, Error)]
pub enum ExcursionError {
    #[error("no closed-form Pickands constant for this structure; run the estimator and pass PickandsInput::Value")]
    MissingPickands,
    #[error("singular D block {block} at point {point:?}")]
    SingularD { block: usize, point: Vec<f64> },
    #[error("manifold/structure mismatch: {0}")]
    StructureMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Source of the Pickands constant for the closed forms.
#[derive(Debug, Clone, Copy)]
pub enum PickandsInput {
    /// Resolve from the known-value table (alpha = 2 blocks, H_1).
    ClosedForm,
    /// Use an externally estimated value.
    Value(f64),
}

impl PickandsInput {
    pub fn resolve(&self, s: &Structure) -> Result<f64, ExcursionError> {
        match self {
            Self::Value(v) => {
                if *v <= 0.0 {
                    return Err(ExcursionError::InvalidParameter(format!(
                        "Pickands constant must be positive, got {v}"
                    )));
                }
                Ok(*v)
            }
            Self::ClosedForm => structure_closed_form(s).ok_or(ExcursionError::MissingPickands),
        }
    }
}

fn matched_factors<'a>(
    m: &'a ManifoldDescriptor,
    s: &Structure,
) -> Result<Vec<&'a ManifoldDescriptor>, ExcursionError> {
    let factors: Vec<&ManifoldDescriptor> = match m {
        ManifoldDescriptor::Product { left, right } => vec![left, right],
        other => vec![other],
    };
    if factors.len() != s.block_count() {
        return Err(ExcursionError::StructureMismatch(format!(
            "manifold has {} factors, structure has {} blocks",
            factors.len(),
            s.block_count()
        )));
    }
    for (i, f) in factors.iter().enumerate() {
        if f.ambient_dim() != s.block_sizes()[i] || f.intrinsic_dim() != s.manifold_dims()[i] {
            return Err(ExcursionError::StructureMismatch(format!(
                "factor {i}: {}-dim in R^{} vs block r={} e={}",
                f.intrinsic_dim(),
                f.ambient_dim(),
                s.manifold_dims()[i],
                s.block_sizes()[i]
            )));
        }
    }
    Ok(factors)
}

/// `int_M prod_j ||D_j(t) P_j(t)||_{r_j} dH_r(t)` by quadrature.
pub fn energy_integral(
    m: &ManifoldDescriptor,
    model: &CovarianceModel,
    resolution: usize,
) -> Result<f64, ExcursionError> {
    let s = model.structure();
    matched_factors(m, s)?;
    let (pts, wts) = m.quadrature(resolution)?;
    let mut total = 0.0;
    for (p, w) in pts.iter().zip(&wts) {
        total += integrand_at(m, model, p)? * w;
    }
    Ok(total)
}

fn integrand_at(
    m: &ManifoldDescriptor,
    model: &CovarianceModel,
    t: &Point,
) -> Result<f64, ExcursionError> {
    let s = model.structure();
    let frame = m.tangent_frame(t)?;
    let blocks = model.d_field().blocks_at(s, t);
    let mut value = 1.0;
    let mut col_offset = 0usize;
    for (j, d) in blocks.iter().enumerate() {
        let range = s.block_range(j);
        let r_j = s.manifold_dims()[j];
        if r_j == 0 {
            continue;
        }
        if d.determinant().abs() < 1e-12 {
            return Err(ExcursionError::SingularD {
                block: j,
                point: t.iter().cloned().collect(),
            });
        }
        let p_j = frame
            .columns
            .view((range.start, col_offset), (range.len(), r_j))
            .into_owned();
        value *= minor_norm(&(d * p_j))?;
        col_offset += r_j;
    }
    Ok(value)
}

/// Theorem-level closed form
/// `H_{R,alpha} * energy_integral * prod_i u^{2 r_i / alpha_i} * Psi(u)`.
pub fn gaussian_excursion_asymptotic(
    m: &ManifoldDescriptor,
    model: &CovarianceModel,
    u: f64,
    resolution: usize,
    pickands: PickandsInput,
) -> Result<f64, ExcursionError> {
    if u <= 1.0 {
        return Err(ExcursionError::InvalidParameter(format!(
            "u = {u} must exceed 1"
        )));
    }
    let s = model.structure();
    let h = pickands.resolve(s)?;
    let integral = energy_integral(m, model, resolution)?;
    Ok(h * integral * u.powf(2.0 * s.tail_exponent_sum()) * mills_psi(u)?)
}

/// Chi corollary closed form on `L x S^{p-1}` for p >= 2 with B constant
/// in v; `p = 1` delegates to the |X| route with its factor 2.
pub fn chi_excursion_asymptotic(
    l: &ManifoldDescriptor,
    base_model: &CovarianceModel,
    p: usize,
    u: f64,
    resolution: usize,
    pickands: PickandsInput,
) -> Result<f64, ExcursionError> {
    if u <= 1.0 {
        return Err(ExcursionError::InvalidParameter(format!(
            "u = {u} must exceed 1"
        )));
    }
    if p == 0 {
        return Err(ExcursionError::InvalidParameter("p must be >= 1".into()));
    }
    let s = base_model.structure();
    let m_dim = s.manifold_dim();
    let alpha = s.exponents()[0];
    let h = pickands.resolve(s)?;
    let base_integral = energy_integral(l, base_model, resolution)?;
    if p == 1 {
        return abs_excursion_from_parts(m_dim, alpha, base_integral, h, u);
    }
    let i_cor = sphere_area(p) * base_integral;
    let tau = std::f64::consts::TAU;
    Ok(h / tau.powf((p as f64 - 1.0) / 2.0)
        * i_cor
        * u.powf(2.0 * m_dim as f64 / alpha + (p as f64 - 1.0))
        * mills_psi(u)?)
}

/// `P(sup |X| > u) ~ 2 H int ||B P|| u^{2m/alpha} Psi(u)`; the factor 2 is
/// the cardinality of S^0.
pub fn abs_excursion_asymptotic(
    l: &ManifoldDescriptor,
    base_model: &CovarianceModel,
    u: f64,
    resolution: usize,
    pickands: PickandsInput,
) -> Result<f64, ExcursionError> {
    let s = base_model.structure();
    let h = pickands.resolve(s)?;
    let integral = energy_integral(l, base_model, resolution)?;
    abs_excursion_from_parts(s.manifold_dim(), s.exponents()[0], integral, h, u)
}

fn abs_excursion_from_parts(
    m_dim: usize,
    alpha: f64,
    integral: f64,
    h: f64,
    u: f64,
) -> Result<f64, ExcursionError> {
    Ok(2.0 * h * integral * u.powf(2.0 * m_dim as f64 / alpha) * mills_psi(u)?)
}

/// Monte Carlo estimate of the excursion probability with the matching
/// asymptotic prediction.
#[derive(Debug, Clone, Serialize)]
pub struct ExcursionReport {
    pub u: f64,
    pub asymptotic: f64,
    pub empirical: f64,
    pub mc_std_error: f64,
    pub n_reps: usize,
    pub grid_points: usize,
    /// Set when halving the grid spacing moved the estimate by at least
    /// one Monte Carlo standard error.
    pub grid_limited: bool,
    /// Whether the asymptotic value lies in (0,1).
    pub asymptotic_in_range: bool,
}

/// One shared sweep over `u_list`: a single set of draws serves every
/// threshold, and the half-resolution subgrid of the same draws drives the
/// density auto-check.
pub fn empirical_excursion(
    m: &ManifoldDescriptor,
    model: &CovarianceModel,
    u_list: &[f64],
    n_reps: usize,
    resolution: usize,
    seed: u64,
    pickands: PickandsInput,
) -> Result<Vec<ExcursionReport>, ExcursionError> {
    if u_list.is_empty() {
        return Err(ExcursionError::InvalidParameter("u_list is empty".into()));
    }
    if !resolution.is_multiple_of(2) {
        return Err(ExcursionError::InvalidParameter(
            "resolution must be even for the half-grid check".into(),
        ));
    }
    let points = m.sample_points(resolution)?;
    let coarse_mask = subset_mask(&points, &m.sample_points(resolution / 2)?);
    let cov = covariance_matrix(model, &points)?;
    let fact = Factorization::new(cov, model.family_name())?;

    let maxima: Vec<(f64, f64)> = crate::field::sample_replications(&fact, n_reps, seed, |_, x| {
        let mut fine = f64::NEG_INFINITY;
        let mut coarse = f64::NEG_INFINITY;
        for (i, &v) in x.iter().enumerate() {
            if v > fine {
                fine = v;
            }
            if coarse_mask[i] && v > coarse {
                coarse = v;
            }
        }
        (fine, coarse)
    });

    let mut reports = Vec::with_capacity(u_list.len());
    for &u in u_list {
        let hits_fine = maxima.iter().filter(|&&(f, _)| f > u).count();
        let hits_coarse = maxima.iter().filter(|&&(_, c)| c > u).count();
        let p_fine = hits_fine as f64 / n_reps as f64;
        let p_coarse = hits_coarse as f64 / n_reps as f64;
        let se = (p_fine * (1.0 - p_fine) / n_reps as f64).sqrt();
        let asymptotic = if u > 1.0 {
            gaussian_excursion_asymptotic(m, model, u, resolution.max(64), pickands)?
        } else {
            f64::NAN
        };
        reports.push(ExcursionReport {
            u,
            asymptotic,
            empirical: p_fine,
            mc_std_error: se,
            n_reps,
            grid_points: points.len(),
            grid_limited: (p_fine - p_coarse).abs() >= se && se > 0.0,
            asymptotic_in_range: asymptotic.is_finite() && asymptotic > 0.0 && asymptotic < 1.0,
        });
    }
    Ok(reports)
}

/// Per-replication maxima of the field over the grid and over the cells of
/// a partition (shared draws); used for Bonferroni-style comparisons.
pub fn partition_excursion_hits(
    model: &CovarianceModel,
    points: &[Point],
    cell_of_point: &[usize],
    n_cells: usize,
    u: f64,
    n_reps: usize,
    seed: u64,
) -> Result<(usize, Vec<usize>), ExcursionError> {
    let cov = covariance_matrix(model, points)?;
    let fact = Factorization::new(cov, model.family_name())?;
    let per_rep: Vec<(bool, Vec<bool>)> =
        crate::field::sample_replications(&fact, n_reps, seed, |_, x| {
            let mut whole = false;
            let mut cells = vec![false; n_cells];
            for (i, &v) in x.iter().enumerate() {
                if v > u {
                    whole = true;
                    cells[cell_of_point[i]] = true;
                }
            }
            (whole, cells)
        });
    let whole_hits = per_rep.iter().filter(|(w, _)| *w).count();
    let mut cell_hits = vec![0usize; n_cells];
    for (_, cells) in &per_rep {
        for (c, &hit) in cells.iter().enumerate() {
            if hit {
                cell_hits[c] += 1;
            }
        }
    }
    Ok((whole_hits, cell_hits))
}

/// Per-replication suprema of the chi field `||X||` over a grid, streamed.
pub fn chi_suprema(
    model: &CovarianceModel,
    points: &[Point],
    p: usize,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<f64>, ExcursionError> {
    let cov = covariance_matrix(model, points)?;
    let fact = Factorization::new(cov, model.family_name())?;
    let n = fact.dim();
    let sup: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map_init(
            || {
                (
                    DVector::zeros(fact.noise_dim()),
                    vec![DVector::<f64>::zeros(n); p],
                )
            },
            |(z, comps), rep| {
                for (j, comp) in comps.iter_mut().enumerate() {
                    let mut rng = replication_rng(seed, (rep * p + j) as u64);
                    fact.sample_into(&mut rng, z, comp);
                }
                let mut best = f64::NEG_INFINITY;
                for i in 0..n {
                    let s: f64 = comps.iter().map(|c| c[i] * c[i]).sum();
                    best = best.max(s.sqrt());
                }
                best
            },
        )
        .collect();
    Ok(sup)
}

fn subset_mask(fine: &[Point], coarse: &[Point]) -> Vec<bool> {
    let mut mask = vec![false; fine.len()];
    for c in coarse {
        let mut best = (0usize, f64::INFINITY);
        for (i, f) in fine.iter().enumerate() {
            let d = (c - f).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        if best.1 < 1e-9 {
            mask[best.0] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DField;
    use crate::manifold::ManifoldDescriptor as M;

    fn circle_model(c: f64, alpha: f64) -> CovarianceModel {
        CovarianceModel::powered_exponential(
            Structure::single(2, alpha, 1).unwrap(),
            DField::ScalarPerBlock(vec![c]),
        )
        .unwrap()
    }

    #[test]
    fn energy_integral_identity_d_on_circle() {
        let m = M::circle(1.0).unwrap();
        let v = energy_integral(&m, &circle_model(1.0, 2.0), 512).unwrap();
        assert!((v - std::f64::consts::TAU).abs() < 1e-9);
    }

    #[test]
    fn energy_integral_scales_linearly_in_d() {
        let m = M::circle(1.0).unwrap();
        let c = 1.7;
        let v = energy_integral(&m, &circle_model(c, 2.0), 256).unwrap();
        assert!((v - c * std::f64::consts::TAU).abs() < 1e-9);
    }

    #[test]
    fn energy_integral_product_factorizes() {
        let m = M::product(M::circle(1.0).unwrap(), M::circle(1.0).unwrap());
        let s = Structure::new(vec![2, 2], vec![2.0, 2.0], vec![1, 1]).unwrap();
        let model = CovarianceModel::powered_exponential(s, DField::ScalarPerBlock(vec![2.0, 3.0]))
            .unwrap();
        let v = energy_integral(&m, &model, 64).unwrap();
        let want = 2.0 * std::f64::consts::TAU * 3.0 * std::f64::consts::TAU;
        assert!((v - want).abs() < 1e-9 * want);
    }

    #[test]
    fn gaussian_asymptotic_closed_form_assembly() {
        let m = M::circle(1.0).unwrap();
        let c = 1.3;
        let model = circle_model(c, 2.0);
        let u = 3.0;
        let got =
            gaussian_excursion_asymptotic(&m, &model, u, 256, PickandsInput::ClosedForm).unwrap();
        let want = 1.0 / std::f64::consts::PI.sqrt()
            * (c * std::f64::consts::TAU)
            * u
            * (mills_psi(u).unwrap());
        assert!((got - want).abs() < 1e-9 * want);
        // doubling c doubles the prediction
        let got2 = gaussian_excursion_asymptotic(
            &m,
            &circle_model(2.0 * c, 2.0),
            u,
            256,
            PickandsInput::ClosedForm,
        )
        .unwrap();
        assert!((got2 - 2.0 * got).abs() < 1e-9 * got2);
    }

    #[test]
    fn gaussian_asymptotic_u_ratio_identity() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let a =
            gaussian_excursion_asymptotic(&m, &model, 3.0, 128, PickandsInput::ClosedForm).unwrap();
        let b =
            gaussian_excursion_asymptotic(&m, &model, 3.5, 128, PickandsInput::ClosedForm).unwrap();
        let want =
            (3.0f64 / 3.5).powf(2.0 * 0.5) * (mills_psi(3.0).unwrap() / mills_psi(3.5).unwrap());
        assert!((a / b - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn missing_pickands_is_an_error() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 1.5);
        assert!(matches!(
            gaussian_excursion_asymptotic(&m, &model, 3.0, 64, PickandsInput::ClosedForm),
            Err(ExcursionError::MissingPickands)
        ));
        assert!(
            gaussian_excursion_asymptotic(&m, &model, 3.0, 64, PickandsInput::Value(0.9)).is_ok()
        );
    }

    #[test]
    fn chi_asymptotic_example_value() {
        let l = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let got =
            chi_excursion_asymptotic(&l, &model, 2, 3.0, 512, PickandsInput::ClosedForm).unwrap();
        let h12 = 1.0 / std::f64::consts::PI.sqrt();
        let want = h12 / std::f64::consts::TAU.sqrt()
            * (std::f64::consts::TAU * std::f64::consts::TAU)
            * 9.0
            * mills_psi(3.0).unwrap();
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
        assert!((want - 0.11814110216342173).abs() < 1e-9);
    }

    #[test]
    fn chi_asymptotic_increases_in_p() {
        let l = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let p2 =
            chi_excursion_asymptotic(&l, &model, 2, 3.0, 256, PickandsInput::ClosedForm).unwrap();
        let p3 =
            chi_excursion_asymptotic(&l, &model, 3, 3.0, 256, PickandsInput::ClosedForm).unwrap();
        assert!(p3 > p2);
    }

    #[test]
    fn chi_p1_delegates_to_abs_route() {
        let l = M::circle(1.0).unwrap();
        let model = circle_model(0.8, 2.0);
        let a =
            chi_excursion_asymptotic(&l, &model, 1, 3.0, 256, PickandsInput::ClosedForm).unwrap();
        let b = abs_excursion_asymptotic(&l, &model, 3.0, 256, PickandsInput::ClosedForm).unwrap();
        assert_eq!(a, b);
        // the factor 2 relative to the one-sided formula
        let one_sided =
            gaussian_excursion_asymptotic(&l, &model, 3.0, 256, PickandsInput::ClosedForm).unwrap();
        assert!((a - 2.0 * one_sided).abs() < 1e-12 * a);
    }

    #[test]
    fn empirical_excursion_near_one_at_tiny_threshold() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let reports =
            empirical_excursion(&m, &model, &[0.1], 400, 128, 17, PickandsInput::ClosedForm)
                .unwrap();
        assert!(reports[0].empirical > 0.95, "p = {}", reports[0].empirical);
        assert!(!reports[0].asymptotic_in_range);
    }

    #[test]
    fn refinement_only_raises_the_empirical_probability() {
        // common draws: the coarse-subgrid maximum never exceeds the fine one
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let points = m.sample_points(128).unwrap();
        let coarse = subset_mask(&points, &m.sample_points(64).unwrap());
        assert_eq!(coarse.iter().filter(|&&b| b).count(), 64);
        let cov = covariance_matrix(&model, &points).unwrap();
        let fact = Factorization::new(cov, "powered_exponential").unwrap();
        let maxima = crate::field::sample_replications(&fact, 500, 3, |_, x| {
            let fine = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sub = x
                .iter()
                .enumerate()
                .filter(|(i, _)| coarse[*i])
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            (fine, sub)
        });
        for &(fine, sub) in &maxima {
            assert!(fine >= sub);
        }
        for u in [1.0, 2.0, 3.0] {
            let pf = maxima.iter().filter(|&&(f, _)| f > u).count();
            let pc = maxima.iter().filter(|&&(_, c)| c > u).count();
            assert!(pf >= pc);
        }
    }

    #[test]
    fn empirical_excursion_rare_at_high_threshold() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let reports = empirical_excursion(
            &m,
            &model,
            &[6.0],
            10_000,
            128,
            18,
            PickandsInput::ClosedForm,
        )
        .unwrap();
        assert_eq!(reports[0].empirical, 0.0);
        assert!(reports[0].asymptotic < 1e-6);
    }

    #[test]
    fn singular_d_names_the_point() {
        let m = M::circle(1.0).unwrap();
        let s = Structure::single(2, 2.0, 1).unwrap();
        let model = CovarianceModel::powered_exponential(
            s,
            DField::MatrixPerBlock(vec![nalgebra::DMatrix::zeros(2, 2)]),
        )
        .unwrap();
        match energy_integral(&m, &model, 64) {
            Err(ExcursionError::SingularD { block: 0, point }) => assert_eq!(point.len(), 2),
            other => panic!("expected SingularD, got {other:?}"),
        }
    }

    #[test]
    fn field_sample_csv_export() {
        let model = circle_model(1.0, 2.0);
        let pts = M::circle(1.0).unwrap().sample_points(8).unwrap();
        let sample = crate::field::sample_field(&model, &pts, 2, 5).unwrap();
        let mut buf = Vec::new();
        sample.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rep,point_index,value");
        assert_eq!(lines.len(), 1 + 2 * 8);
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn bonferroni_union_bound_with_common_draws() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 2.0);
        let points = m.sample_points(256).unwrap();
        // four arcs as cells
        let cell_of_point: Vec<usize> = (0..points.len()).map(|i| i * 4 / points.len()).collect();
        let (whole, cells) =
            partition_excursion_hits(&model, &points, &cell_of_point, 4, 2.0, 4000, 23).unwrap();
        assert!(cells.iter().sum::<usize>() >= whole);
    }
}
