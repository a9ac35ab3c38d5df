//! Monte Carlo estimation of the generalized Pickands constant H_{E,alpha}.
//!
//! The drifted field `W` has mean `-|t|_{E,alpha}` and covariance
//! `|t|_{E,alpha} + |s|_{E,alpha} - |t-s|_{E,alpha}`; it splits into
//! independent per-block fields, so blocks are simulated separately on
//! their own lattices and recombined through per-block maxima.
//!
//! The estimate of the discrete constant `H_{E,alpha}(gamma)/gamma^n` is
//! the frequency of `{W <= 0 on the whole window}` divided by `gamma^n`:
//! exponential tilting by `e^{W(s)}` (which has unit expectation) turns
//! `E exp(max W)` over a window into the number of window positions times
//! the probability that the origin is the argmax over the shifted window,
//! so the all-nonpositive frequency over a symmetric window estimates
//! `lim_l H(l,gamma)/(l gamma)^n` directly, with binomial error bars and
//! a window-truncation bias that vanishes at the tested horizons. The
//! classical statistic `mean exp(max W) / T^n` over the one-sided grid is
//! also reported; its replication tail is heavy and the report carries
//! the overflow-exclusion count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::field::{Factorization, FieldError, MAX_DENSE_POINTS, MAX_SAMPLE_VALUES};
use crate::math::{structure_module, MathError, Structure};
use crate::rng::replication_rng;

#[derive(Debug, Error)]
pub enum PickandsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("block {block} window holds {points} points, cap is {cap}; increase gamma or decrease the horizon")]
    WindowTooLarge {
        block: usize,
        points: usize,
        cap: usize,
    },
    #[error("no replication had a nonpositive window maximum; increase n_reps")]
    DegenerateEstimate,
    #[error("{excluded} of {reps} replications overflowed exp(sup W) (>= 0.1%)")]
    TooManyOverflows { excluded: usize, reps: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Estimate of `H_{E,alpha}(gamma)/gamma^n` with its settings.
#[derive(Debug, Clone, Serialize)]
pub struct PickandsEstimate {
    pub structure: Structure,
    pub t_horizon: f64,
    pub gamma: f64,
    pub n_reps: usize,
    /// Frequency-route estimate of H(gamma)/gamma^n.
    pub estimate: f64,
    pub std_error: f64,
    /// Classical `mean exp(sup W)/T^n` over the one-sided grid.
    pub exp_max_estimate: f64,
    pub exp_max_std_error: f64,
    /// Replications excluded from the exp-max mean due to overflow.
    pub excluded: usize,
}

struct BlockSim {
    /// Integer lattice coordinates (origin excluded).
    lattice: Vec<Vec<i64>>,
    mean: DVector<f64>,
    fact: Factorization,
    one_sided: Vec<bool>,
}

fn block_lattice(e: usize, l: i64, symmetric: bool) -> Vec<Vec<i64>> {
    let range: Vec<i64> = if symmetric {
        (-l..=l).collect()
    } else {
        (0..=l).collect()
    };
    let mut acc: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..e {
        let mut next = Vec::with_capacity(acc.len() * range.len());
        for prefix in &acc {
            for &v in &range {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        acc = next;
    }
    acc.retain(|p| p.iter().any(|&v| v != 0));
    acc
}

fn build_block(
    s: &Structure,
    block: usize,
    l: i64,
    gamma: f64,
    symmetric: bool,
) -> Result<BlockSim, PickandsError> {
    let e = s.block_sizes()[block];
    let alpha = s.exponents()[block];
    let lattice = block_lattice(e, l, symmetric);
    if lattice.len() > MAX_DENSE_POINTS {
        return Err(PickandsError::WindowTooLarge {
            block,
            points: lattice.len(),
            cap: MAX_DENSE_POINTS,
        });
    }
    let coords: Vec<Vec<f64>> = lattice
        .iter()
        .map(|p| p.iter().map(|&v| v as f64 * gamma).collect())
        .collect();
    let norm_a = |x: &[f64]| -> f64 { x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(alpha) };
    let n = coords.len();
    let mean = DVector::from_iterator(n, coords.iter().map(|c| -norm_a(c)));
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        let ni = norm_a(&coords[i]);
        for j in i..n {
            let nj = norm_a(&coords[j]);
            let diff: Vec<f64> = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| a - b)
                .collect();
            let v = ni + nj - norm_a(&diff);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let fact = Factorization::new(cov, "pickands")?;
    let one_sided = lattice.iter().map(|p| p.iter().all(|&v| v >= 0)).collect();
    Ok(BlockSim {
        lattice,
        mean,
        fact,
        one_sided,
    })
}

fn checked_horizon(t_horizon: f64, gamma: f64) -> Result<i64, PickandsError> {
    if t_horizon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        || gamma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
    {
        return Err(PickandsError::InvalidParameter(format!(
            "need positive horizon and gamma, got T = {t_horizon}, gamma = {gamma}"
        )));
    }
    let l = (t_horizon / gamma).round() as i64;
    if l < 1 {
        return Err(PickandsError::InvalidParameter(format!(
            "horizon {t_horizon} shorter than one grid step {gamma}"
        )));
    }
    Ok(l)
}

/// Estimate the discrete Pickands constant.
pub fn estimate_pickands(
    s: &Structure,
    t_horizon: f64,
    gamma: f64,
    n_reps: usize,
    seed: u64,
) -> Result<PickandsEstimate, PickandsError> {
    if n_reps < 100 {
        return Err(PickandsError::InvalidParameter(
            "n_reps must be >= 100".into(),
        ));
    }
    let l = checked_horizon(t_horizon, gamma)?;
    let k = s.block_count();
    let blocks: Vec<BlockSim> = (0..k)
        .map(|b| build_block(s, b, l, gamma, true))
        .collect::<Result<_, _>>()?;

    struct Rep {
        all_nonpositive: bool,
        one_sided_max: f64,
    }

    let reps: Vec<Rep> = (0..n_reps)
        .into_par_iter()
        .map_init(
            || {
                blocks
                    .iter()
                    .map(|b| {
                        (
                            DVector::zeros(b.fact.noise_dim()),
                            DVector::zeros(b.fact.dim()),
                        )
                    })
                    .collect::<Vec<_>>()
            },
            |bufs, rep| {
                let mut all_nonpositive = true;
                let mut one_sided_max = 0.0f64;
                for (b, blk) in blocks.iter().enumerate() {
                    let (z, out) = &mut bufs[b];
                    let mut rng = replication_rng(seed, (rep * k + b) as u64);
                    blk.fact.sample_into(&mut rng, z, out);
                    *out += &blk.mean;
                    let mut full = 0.0f64; // origin value
                    let mut os = 0.0f64;
                    for (i, &v) in out.iter().enumerate() {
                        if v > full {
                            full = v;
                        }
                        if blk.one_sided[i] && v > os {
                            os = v;
                        }
                    }
                    if full > 0.0 {
                        all_nonpositive = false;
                    }
                    one_sided_max += os;
                }
                Rep {
                    all_nonpositive,
                    one_sided_max,
                }
            },
        )
        .collect();

    let n = s.ambient_dim();
    let gamma_n = gamma.powi(n as i32);
    let t_n = t_horizon.powi(n as i32);
    let hits = reps.iter().filter(|r| r.all_nonpositive).count();
    if hits == 0 {
        return Err(PickandsError::DegenerateEstimate);
    }
    let p = hits as f64 / n_reps as f64;
    let estimate = p / gamma_n;
    let std_error = (p * (1.0 - p) / n_reps as f64).sqrt() / gamma_n;

    let mut excluded = 0usize;
    let mut kept = Vec::with_capacity(n_reps);
    for r in &reps {
        let e = r.one_sided_max.exp();
        if e.is_finite() {
            kept.push(e);
        } else {
            excluded += 1;
        }
    }
    if excluded * 1000 >= n_reps {
        return Err(PickandsError::TooManyOverflows {
            excluded,
            reps: n_reps,
        });
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kept.len() - 1) as f64;
    Ok(PickandsEstimate {
        structure: s.clone(),
        t_horizon,
        gamma,
        n_reps,
        estimate,
        std_error,
        exp_max_estimate: mean / t_n,
        exp_max_std_error: (var / kept.len() as f64).sqrt() / t_n,
        excluded,
    })
}

/// Trajectories of `W` on the one-sided grid `C(round(T/gamma), gamma)`,
/// stored per block (the field is the sum of independent block fields,
/// with `W(0) = 0` held implicitly).
pub struct PickandsFieldSample {
    pub structure: Structure,
    pub t_horizon: f64,
    pub gamma: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub blocks: Vec<PickandsBlockSample>,
}

pub struct PickandsBlockSample {
    /// Integer lattice coordinates (origin excluded).
    pub lattice: Vec<Vec<i64>>,
    /// Physical coordinates (`lattice * gamma`).
    pub coords: Vec<Vec<f64>>,
    n_points: usize,
    values: Vec<f64>,
}

impl PickandsBlockSample {
    pub fn value(&self, rep: usize, point: usize) -> f64 {
        self.values[rep * self.n_points + point]
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// Statistics of `exp(sup W)` over a (sub-)grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpMaxEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub excluded: usize,
}

impl PickandsFieldSample {
    /// `sup W` over lattice points whose integer coordinates are all
    /// multiples of `stride` (origin included as 0).
    pub fn lattice_max(&self, rep: usize, stride: i64) -> f64 {
        let mut total = 0.0;
        for b in &self.blocks {
            let mut best = 0.0f64;
            for (i, latt) in b.lattice.iter().enumerate() {
                if latt.iter().all(|&v| v % stride == 0) {
                    let v = b.value(rep, i);
                    if v > best {
                        best = v;
                    }
                }
            }
            total += best;
        }
        total
    }

    /// `mean exp(sup W) / T^n` over the stride-thinned grid (common random numbers).
    pub fn exp_max_estimate(&self, stride: i64) -> Result<ExpMaxEstimate, PickandsError> {
        let n = self.structure.ambient_dim();
        let t_n = self.t_horizon.powi(n as i32);
        let mut kept = Vec::with_capacity(self.n_reps);
        let mut excluded = 0usize;
        for rep in 0..self.n_reps {
            let e = self.lattice_max(rep, stride).exp();
            if e.is_finite() {
                kept.push(e);
            } else {
                excluded += 1;
            }
        }
        if excluded * 1000 >= self.n_reps {
            return Err(PickandsError::TooManyOverflows {
                excluded,
                reps: self.n_reps,
            });
        }
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let var = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kept.len() - 1) as f64;
        Ok(ExpMaxEstimate {
            estimate: mean / t_n,
            std_error: (var / kept.len() as f64).sqrt() / t_n,
            excluded,
        })
    }

    /// Mean of W at a block lattice point, with its Monte Carlo standard
    /// error.
    pub fn empirical_mean(&self, block: usize, point: usize) -> (f64, f64) {
        let b = &self.blocks[block];
        let mean = (0..self.n_reps).map(|r| b.value(r, point)).sum::<f64>() / self.n_reps as f64;
        let var = (0..self.n_reps)
            .map(|r| (b.value(r, point) - mean).powi(2))
            .sum::<f64>()
            / (self.n_reps - 1) as f64;
        (mean, (var / self.n_reps as f64).sqrt())
    }

    pub fn empirical_variance(&self, block: usize, point: usize) -> f64 {
        let b = &self.blocks[block];
        let mean = (0..self.n_reps).map(|r| b.value(r, point)).sum::<f64>() / self.n_reps as f64;
        (0..self.n_reps)
            .map(|r| (b.value(r, point) - mean).powi(2))
            .sum::<f64>()
            / (self.n_reps - 1) as f64
    }

    /// Expected value `-|t|_{E,alpha}` of W at a block lattice point.
    pub fn theoretical_mean(&self, block: usize, point: usize) -> f64 {
        let b = &self.blocks[block];
        let mut full = vec![0.0; self.structure.ambient_dim()];
        let range = self.structure.block_range(block);
        for (k, idx) in range.enumerate() {
            full[idx] = b.coords[point][k];
        }
        -structure_module(&full, &self.structure).unwrap()
    }
}

/// Simulate `W` on the one-sided grid `C(round(T/gamma), gamma)`.
pub fn simulate_pickands_field(
    s: &Structure,
    t_horizon: f64,
    gamma: f64,
    n_reps: usize,
    seed: u64,
) -> Result<PickandsFieldSample, PickandsError> {
    if n_reps == 0 {
        return Err(PickandsError::InvalidParameter(
            "n_reps must be >= 1".into(),
        ));
    }
    let l = checked_horizon(t_horizon, gamma)?;
    let k = s.block_count();
    let blocks: Vec<BlockSim> = (0..k)
        .map(|b| build_block(s, b, l, gamma, false))
        .collect::<Result<_, _>>()?;
    let total_pts: usize = blocks.iter().map(|b| b.lattice.len()).sum();
    if n_reps * total_pts > MAX_SAMPLE_VALUES {
        return Err(PickandsError::InvalidParameter(format!(
            "sample of {} values exceeds cap {}",
            n_reps * total_pts,
            MAX_SAMPLE_VALUES
        )));
    }

    let rows: Vec<Vec<Vec<f64>>> = (0..n_reps)
        .into_par_iter()
        .map_init(
            || {
                blocks
                    .iter()
                    .map(|b| {
                        (
                            DVector::zeros(b.fact.noise_dim()),
                            DVector::zeros(b.fact.dim()),
                        )
                    })
                    .collect::<Vec<_>>()
            },
            |bufs, rep| {
                let mut per_block = Vec::with_capacity(k);
                for (b, blk) in blocks.iter().enumerate() {
                    let (z, out) = &mut bufs[b];
                    let mut rng = replication_rng(seed, (rep * k + b) as u64);
                    blk.fact.sample_into(&mut rng, z, out);
                    *out += &blk.mean;
                    per_block.push(out.as_slice().to_vec());
                }
                per_block
            },
        )
        .collect();

    let block_samples: Vec<PickandsBlockSample> = blocks
        .into_iter()
        .enumerate()
        .map(|(b, blk)| {
            let n_points = blk.lattice.len();
            let mut values = Vec::with_capacity(n_reps * n_points);
            for row in &rows {
                values.extend(&row[b]);
            }
            PickandsBlockSample {
                coords: blk
                    .lattice
                    .iter()
                    .map(|p| p.iter().map(|&v| v as f64 * gamma).collect())
                    .collect(),
                lattice: blk.lattice,
                n_points,
                values,
            }
        })
        .collect();

    Ok(PickandsFieldSample {
        structure: s.clone(),
        t_horizon,
        gamma,
        n_reps,
        seed,
        blocks: block_samples,
    })
}

/// Known closed-form values: `H_{r,2} = pi^{-r/2}` for any r (by
/// factorization), `H_{1,1} = 1`, and the degenerate `r = 0` case.
pub fn pickands_closed_form(r: usize, alpha: f64) -> Option<f64> {
    if r == 0 {
        return Some(1.0);
    }
    if (alpha - 2.0).abs() < 1e-12 {
        return Some(std::f64::consts::PI.powf(-(r as f64) / 2.0));
    }
    if r == 1 && (alpha - 1.0).abs() < 1e-12 {
        return Some(1.0);
    }
    None
}

/// `H_{R,alpha} = prod_i H_{r_i,alpha_i}` when every factor is known.
pub fn structure_closed_form(s: &Structure) -> Option<f64> {
    let mut acc = 1.0;
    for (&r, &a) in s.manifold_dims().iter().zip(s.exponents()) {
        acc *= pickands_closed_form(r, a)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_table() {
        assert!(
            (pickands_closed_form(1, 2.0).unwrap() - 1.0 / std::f64::consts::PI.sqrt()).abs()
                < 1e-15
        );
        assert!(
            (pickands_closed_form(3, 2.0).unwrap() - std::f64::consts::PI.powf(-1.5)).abs() < 1e-15
        );
        assert_eq!(pickands_closed_form(1, 1.0), Some(1.0));
        assert_eq!(pickands_closed_form(2, 1.5), None);
        let s = Structure::new(vec![1, 1], vec![2.0, 2.0], vec![1, 1]).unwrap();
        assert!((structure_closed_form(&s).unwrap() - 1.0 / std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn field_mean_and_variance_match_definition() {
        let s = Structure::single(1, 2.0, 1).unwrap();
        let sim = simulate_pickands_field(&s, 2.0, 0.25, 10_000, 13).unwrap();
        // W(t) has mean -|t|^2 and variance 2|t|^2
        for point in [0usize, 3, 7] {
            let t = sim.blocks[0].coords[point][0];
            let (mean, se) = sim.empirical_mean(0, point);
            let want = sim.theoretical_mean(0, point);
            assert!((want + t * t).abs() < 1e-12);
            assert!(
                (mean - want).abs() < 4.0 * se.max(1e-6),
                "mean {mean} want {want}"
            );
            let var = sim.empirical_variance(0, point);
            assert!(
                (var - 2.0 * t * t).abs() < 0.1 * (2.0 * t * t).max(0.05),
                "var {var}"
            );
        }
    }

    #[test]
    fn alpha_one_variance() {
        let s = Structure::single(1, 1.0, 1).unwrap();
        let sim = simulate_pickands_field(&s, 2.0, 0.25, 8_000, 21).unwrap();
        let point = 5;
        let t = sim.blocks[0].coords[point][0];
        let var = sim.empirical_variance(0, point);
        assert!(
            (var - 2.0 * t).abs() < 0.12 * (2.0 * t),
            "var {var} vs {}",
            2.0 * t
        );
    }

    #[test]
    fn refinement_is_monotone_with_common_draws() {
        let s = Structure::single(1, 2.0, 1).unwrap();
        let sim = simulate_pickands_field(&s, 4.0, 0.125, 2_000, 8).unwrap();
        let fine = sim.exp_max_estimate(1).unwrap();
        let coarse = sim.exp_max_estimate(2).unwrap();
        let coarser = sim.exp_max_estimate(4).unwrap();
        assert!(fine.estimate >= coarse.estimate);
        assert!(coarse.estimate >= coarser.estimate);
    }

    #[test]
    fn estimator_brackets_h2() {
        let s = Structure::single(1, 2.0, 1).unwrap();
        let est = estimate_pickands(&s, 8.0, 0.05, 20_000, 2).unwrap();
        let h2 = 1.0 / std::f64::consts::PI.sqrt();
        assert!(
            (est.estimate - h2).abs() < 0.08,
            "estimate {} vs {h2}",
            est.estimate
        );
        assert!(est.std_error > 0.0 && est.std_error < 0.05);
        assert_eq!(est.excluded, 0);
    }

    #[test]
    fn estimator_brackets_h1_at_fine_gamma() {
        // The discrete constant converges slowly for alpha = 1:
        // H_1(gamma)/gamma is ~0.83 at gamma = 0.05 and ~0.89 at 0.02.
        let s = Structure::single(1, 1.0, 1).unwrap();
        let est = estimate_pickands(&s, 8.0, 0.02, 20_000, 3).unwrap();
        assert!(
            est.estimate > 0.85 && est.estimate < 1.15,
            "estimate {}",
            est.estimate
        );
    }

    #[test]
    fn horizon_stability_within_joint_ci() {
        let s = Structure::single(1, 2.0, 1).unwrap();
        let a = estimate_pickands(&s, 8.0, 0.05, 10_000, 5).unwrap();
        let b = estimate_pickands(&s, 12.0, 0.05, 10_000, 6).unwrap();
        let joint = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(
            (a.estimate - b.estimate).abs() <= 2.0 * joint,
            "{} vs {} (joint se {joint})",
            a.estimate,
            b.estimate
        );
    }

    #[test]
    fn window_cap_is_enforced() {
        let s = Structure::new(vec![2], vec![2.0], vec![2]).unwrap();
        assert!(matches!(
            estimate_pickands(&s, 8.0, 0.05, 1_000, 1),
            Err(PickandsError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn factorization_property_holds() {
        let s1 = Structure::single(1, 2.0, 1).unwrap();
        let s2 = Structure::new(vec![1, 1], vec![2.0, 2.0], vec![1, 1]).unwrap();
        let one = estimate_pickands(&s1, 6.0, 0.1, 30_000, 7).unwrap();
        let two = estimate_pickands(&s2, 6.0, 0.1, 60_000, 8).unwrap();
        let square = one.estimate * one.estimate;
        assert!(
            (two.estimate - square).abs() < 0.15 * square,
            "2d {} vs 1d^2 {square}",
            two.estimate
        );
    }
}
