//! Run configuration: one TOML file per run, flat key-value blocks, no
//! interactive mode. Every run is fully determined by the config plus the
//! seed; both are recorded in every output header.

use serde::Deserialize;

use lsfield::field::{CovarianceModel, DField};
use lsfield::manifold::ManifoldDescriptor;
use lsfield::math::Structure;

/// Schema version understood by this binary.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub config_version: u32,
    pub run: RunSection,
    pub manifold: Option<ManifoldSection>,
    pub structure: Option<StructureSection>,
    pub kernel: Option<KernelSection>,
    pub net: Option<NetSection>,
    pub voronoi: Option<VoronoiSection>,
    pub grid: Option<GridSection>,
    pub pickands: Option<PickandsSection>,
    pub excursion: Option<ExcursionSection>,
    pub chi_excursion: Option<ChiExcursionSection>,
    pub evd: Option<EvdSection>,
    pub tube: Option<TubeSection>,
    pub region: Option<RegionSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: Option<String>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    pub kind: String,
    pub radius: Option<f64>,
    pub lengths: Option<Vec<f64>>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub left: Option<Box<ManifoldSection>>,
    pub right: Option<Box<ManifoldSection>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    pub block_sizes: Vec<usize>,
    pub exponents: Vec<f64>,
    pub manifold_dims: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    pub d_scale: Vec<f64>,
    /// Known Pickands constant override for structures outside the
    /// closed-form table.
    pub pickands_value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub epsilon: f64,
    pub candidate_resolution: usize,
    pub certify_resolution: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoronoiSection {
    pub epsilon: f64,
    pub candidate_resolution: usize,
    pub sample_resolution: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
    pub gamma: f64,
    pub theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickandsSection {
    pub t_horizon: f64,
    pub gamma: f64,
    pub n_reps: usize,
    /// Structure of the Pickands field itself (defaults to [structure]).
    /// This is the intrinsic (R, alpha) structure: for the scalar H_alpha
    /// use one block of size 1.
    pub structure: Option<StructureSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcursionSection {
    pub u_list: Vec<f64>,
    pub n_reps: usize,
    pub resolution: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiExcursionSection {
    pub p: usize,
    pub u_list: Vec<f64>,
    pub n_reps: usize,
    pub resolution: usize,
    pub quadrature_resolution: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvdSection {
    pub h_list: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub n_reps: usize,
    pub z_grid: Vec<f64>,
    pub quadrature_resolution: Option<usize>,
    /// Declared limit of I_h(M_h); skips the quadrature when known.
    pub i_h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSection {
    pub p: usize,
    pub h: f64,
    pub alpha: f64,
    pub n_trials: usize,
    pub resolution: usize,
    pub quadrature_resolution: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub h: f64,
    pub alpha: f64,
    pub n_trials: usize,
    pub circle_samples: usize,
    pub background_resolution: usize,
    pub background_bound: f64,
    pub quadrature_resolution: Option<usize>,
}

/// Collects every violated precondition instead of stopping at the first.
pub struct Validator {
    pub errors: Vec<String>,
}

impl Validator {
    pub fn new() -> Self {
        Self { errors: Vec::new() }
    }

    pub fn require(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }

    pub fn finish(self) -> Result<(), Vec<String>> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(self.errors)
        }
    }
}

impl Config {
    pub fn validate_common(&self, v: &mut Validator) {
        v.require(
            self.config_version == CONFIG_VERSION,
            format!(
                "config_version {} not supported (expected {CONFIG_VERSION})",
                self.config_version
            ),
        );
        if let Some(s) = &self.structure {
            v.require(
                s.block_sizes.len() == s.exponents.len()
                    && s.block_sizes.len() == s.manifold_dims.len(),
                "structure: block_sizes, exponents and manifold_dims must have equal length",
            );
            for &a in &s.exponents {
                v.require(
                    a > 0.0 && a <= 2.0,
                    format!("structure: exponent {a} violates alpha_i in (0, 2]"),
                );
            }
            for (&r, &e) in s.manifold_dims.iter().zip(&s.block_sizes) {
                v.require(
                    r <= e,
                    format!("structure: manifold dim {r} exceeds block size {e}"),
                );
            }
        }
        if let Some(k) = &self.kernel {
            v.require(
                k.family == "powered_exponential",
                format!(
                    "kernel: family '{}' not supported here; CLI kernels are powered_exponential \
                     (chi lifts are built by the chi-excursion/tube subcommands from their p)",
                    k.family
                ),
            );
            for &c in &k.d_scale {
                v.require(
                    c > 0.0,
                    format!("kernel: d_scale entry {c} must be positive"),
                );
            }
        }
    }

    pub fn manifold(&self) -> anyhow::Result<ManifoldDescriptor> {
        let section = self
            .manifold
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("missing [manifold] section"))?;
        build_manifold(section)
    }

    pub fn structure(&self) -> anyhow::Result<Structure> {
        let s = self
            .structure
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("missing [structure] section"))?;
        Ok(Structure::new(
            s.block_sizes.clone(),
            s.exponents.clone(),
            s.manifold_dims.clone(),
        )?)
    }

    /// Structure for the Pickands field: [pickands.structure] if present,
    /// else the shared [structure].
    pub fn pickands_structure(&self) -> anyhow::Result<Structure> {
        if let Some(s) = self.pickands.as_ref().and_then(|p| p.structure.as_ref()) {
            return Ok(Structure::new(
                s.block_sizes.clone(),
                s.exponents.clone(),
                s.manifold_dims.clone(),
            )?);
        }
        self.structure()
    }

    pub fn model(&self) -> anyhow::Result<CovarianceModel> {
        let k = self
            .kernel
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("missing [kernel] section"))?;
        let s = self.structure()?;
        Ok(CovarianceModel::powered_exponential(
            s,
            DField::ScalarPerBlock(k.d_scale.clone()),
        )?)
    }

    pub fn pickands_input(&self) -> lsfield::excursion::PickandsInput {
        match self.kernel.as_ref().and_then(|k| k.pickands_value) {
            Some(v) => lsfield::excursion::PickandsInput::Value(v),
            None => lsfield::excursion::PickandsInput::ClosedForm,
        }
    }
}

pub fn build_manifold(s: &ManifoldSection) -> anyhow::Result<ManifoldDescriptor> {
    Ok(match s.kind.as_str() {
        "circle" => ManifoldDescriptor::circle(
            s.radius
                .ok_or_else(|| anyhow::anyhow!("circle needs 'radius'"))?,
        )?,
        "sphere" => ManifoldDescriptor::sphere(
            s.radius
                .ok_or_else(|| anyhow::anyhow!("sphere needs 'radius'"))?,
        )?,
        "flat_torus" => ManifoldDescriptor::flat_torus(
            s.lengths
                .clone()
                .ok_or_else(|| anyhow::anyhow!("flat_torus needs 'lengths'"))?,
        )?,
        "interval_product" => ManifoldDescriptor::interval_product(
            s.bounds
                .clone()
                .ok_or_else(|| anyhow::anyhow!("interval_product needs 'bounds'"))?,
        )?,
        "product" => {
            let left = s
                .left
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("product needs 'left'"))?;
            let right = s
                .right
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("product needs 'right'"))?;
            ManifoldDescriptor::product(build_manifold(left)?, build_manifold(right)?)
        }
        other => anyhow::bail!("unknown manifold kind '{other}'"),
    })
}
