//! Batch experiment runner: config parsing, seeding, subcommand dispatch,
//! machine-readable output.

mod config;
mod output;

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

use config::{Config, Validator};
use lsfield::evd;
use lsfield::excursion;
use lsfield::geometry;
use lsfield::pickands;

#[derive(Parser)]
#[command(
    name = "lsfield",
    version,
    about = "Excursion asymptotics, Gumbel limits and supporting geometry for locally stationary fields on manifolds"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (does not affect results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build an epsilon-net and certify covering/packing.
    Net,
    /// Restricted Voronoi partition of a dense sample (CSV).
    Voronoi,
    /// Anisotropic discretization grid.
    Grid,
    /// Estimate the generalized Pickands constant.
    Pickands,
    /// Excursion probabilities: Monte Carlo vs closed form (CSV).
    Excursion,
    /// Chi-field excursion probabilities (CSV).
    ChiExcursion,
    /// Gumbel limit experiment across an h sweep.
    Evd,
    /// Confidence-tube coverage experiment.
    Tube,
    /// Confidence-region containment experiment.
    Region,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Net => "net",
            Self::Voronoi => "voronoi",
            Self::Grid => "grid",
            Self::Pickands => "pickands",
            Self::Excursion => "excursion",
            Self::ChiExcursion => "chi-excursion",
            Self::Evd => "evd",
            Self::Tube => "tube",
            Self::Region => "region",
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    errors: Vec<String>,
}

fn fail(errors: Vec<String>, code: i32) -> ! {
    let report = ErrorReport { errors };
    eprintln!("{}", serde_json::to_string_pretty(&report).unwrap());
    std::process::exit(code);
}

fn main() {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => fail(vec!["--config PATH is required".into()], 2),
    };
    let config_bytes = match std::fs::read(&config_path) {
        Ok(b) => b,
        Err(e) => fail(
            vec![format!("cannot read {}: {e}", config_path.display())],
            2,
        ),
    };
    let config: Config = match toml::from_str(&String::from_utf8_lossy(&config_bytes)) {
        Ok(c) => c,
        Err(e) => fail(vec![format!("config parse error: {e}")], 2),
    };

    let mut v = Validator::new();
    config.validate_common(&mut v);
    validate_command(&config, cli.command, &mut v);
    if let Err(errors) = v.finish() {
        fail(errors, 2);
    }

    let threads = cli.threads.or(config.run.threads).unwrap_or(0);
    if threads > 0 {
        // build the global pool once; results are thread-count invariant
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let effective_threads = rayon::current_num_threads();
    let seed = cli.seed.unwrap_or(config.run.seed);
    let out_dir = cli
        .out
        .or_else(|| config.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let meta = output::Meta::new(cli.command.name(), &config_bytes, seed, effective_threads);

    match run(&config, cli.command, seed, &out_dir, &meta) {
        Ok(path) => {
            println!("{} -> {}", cli.command.name(), path.display());
        }
        Err(e) => fail(vec![format!("{e:#}")], 1),
    }
}

fn validate_command(config: &Config, command: Command, v: &mut Validator) {
    match command {
        Command::Net => {
            v.require(config.manifold.is_some(), "net: missing [manifold]");
            if let Some(n) = &config.net {
                v.require(n.epsilon > 0.0, "net: epsilon must be positive");
                v.require(
                    n.candidate_resolution >= 8,
                    "net: candidate_resolution too small",
                );
            } else {
                v.require(false, "net: missing [net] section");
            }
        }
        Command::Voronoi => {
            v.require(config.manifold.is_some(), "voronoi: missing [manifold]");
            v.require(
                config.voronoi.is_some(),
                "voronoi: missing [voronoi] section",
            );
        }
        Command::Grid => {
            v.require(config.manifold.is_some(), "grid: missing [manifold]");
            v.require(config.structure.is_some(), "grid: missing [structure]");
            if let Some(g) = &config.grid {
                v.require(g.h > 0.0 && g.h <= 1.0, "grid: h must lie in (0, 1]");
                v.require(g.gamma > 0.0, "grid: gamma must be positive");
                v.require(g.theta > 0.0, "grid: theta must be positive");
            } else {
                v.require(false, "grid: missing [grid] section");
            }
        }
        Command::Pickands => {
            if let Some(p) = &config.pickands {
                v.require(
                    p.structure.is_some() || config.structure.is_some(),
                    "pickands: missing [structure] (or [pickands.structure])",
                );
                if let Some(s) = &p.structure {
                    for &a in &s.exponents {
                        v.require(
                            a > 0.0 && a <= 2.0,
                            format!("pickands structure: exponent {a} violates alpha_i in (0, 2]"),
                        );
                    }
                }
                v.require(p.t_horizon > 0.0, "pickands: t_horizon must be positive");
                v.require(p.gamma > 0.0, "pickands: gamma must be positive");
                v.require(p.n_reps >= 100, "pickands: n_reps must be >= 100");
            } else {
                v.require(false, "pickands: missing [pickands] section");
            }
        }
        Command::Excursion => {
            v.require(config.manifold.is_some(), "excursion: missing [manifold]");
            v.require(config.structure.is_some(), "excursion: missing [structure]");
            v.require(config.kernel.is_some(), "excursion: missing [kernel]");
            if let Some(e) = &config.excursion {
                v.require(!e.u_list.is_empty(), "excursion: u_list is empty");
                v.require(e.n_reps > 0, "excursion: n_reps must be positive");
                v.require(e.resolution % 2 == 0, "excursion: resolution must be even");
            } else {
                v.require(false, "excursion: missing [excursion] section");
            }
        }
        Command::ChiExcursion => {
            v.require(
                config.manifold.is_some(),
                "chi-excursion: missing [manifold]",
            );
            v.require(
                config.structure.is_some(),
                "chi-excursion: missing [structure]",
            );
            v.require(config.kernel.is_some(), "chi-excursion: missing [kernel]");
            if let Some(c) = &config.chi_excursion {
                v.require(c.p >= 1, "chi-excursion: p must be >= 1");
                v.require(!c.u_list.is_empty(), "chi-excursion: u_list is empty");
            } else {
                v.require(false, "chi-excursion: missing [chi_excursion] section");
            }
        }
        Command::Evd => {
            v.require(config.manifold.is_some(), "evd: missing [manifold]");
            v.require(config.structure.is_some(), "evd: missing [structure]");
            v.require(config.kernel.is_some(), "evd: missing [kernel]");
            if let Some(e) = &config.evd {
                v.require(!e.h_list.is_empty(), "evd: h_list is empty");
                v.require(
                    e.h_list.len() == e.resolutions.len(),
                    "evd: resolutions must match h_list",
                );
                v.require(
                    e.h_list.windows(2).all(|w| w[1] < w[0]),
                    "evd: h_list must be strictly decreasing",
                );
                v.require(
                    e.h_list.iter().all(|&h| h > 0.0 && h < 1.0),
                    "evd: h must lie in (0,1)",
                );
            } else {
                v.require(false, "evd: missing [evd] section");
            }
        }
        Command::Tube => {
            v.require(config.manifold.is_some(), "tube: missing [manifold]");
            v.require(config.structure.is_some(), "tube: missing [structure]");
            v.require(config.kernel.is_some(), "tube: missing [kernel]");
            if let Some(t) = &config.tube {
                v.require(t.p >= 1, "tube: p must be >= 1");
                v.require(
                    t.alpha > 0.0 && t.alpha < 1.0,
                    "tube: alpha must lie in (0,1)",
                );
                v.require(t.h > 0.0 && t.h < 1.0, "tube: h must lie in (0,1)");
            } else {
                v.require(false, "tube: missing [tube] section");
            }
        }
        Command::Region => {
            v.require(config.structure.is_some(), "region: missing [structure]");
            v.require(config.kernel.is_some(), "region: missing [kernel]");
            if let Some(r) = &config.region {
                v.require(
                    r.alpha > 0.0 && r.alpha < 1.0,
                    "region: alpha must lie in (0,1)",
                );
                v.require(r.h > 0.0 && r.h < 1.0, "region: h must lie in (0,1)");
                v.require(r.circle_samples >= 8, "region: circle_samples too small");
            } else {
                v.require(false, "region: missing [region] section");
            }
        }
    }
}

#[derive(Serialize)]
struct NetData {
    epsilon: f64,
    size: usize,
    packing_bound: f64,
    certificate: geometry::NetCertificate,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct GridData {
    h: f64,
    gamma: f64,
    theta: f64,
    factor_counts: Vec<usize>,
    spacings: Vec<f64>,
    single_point_fallback: Vec<bool>,
    points: Vec<Vec<f64>>,
}

fn run(
    config: &Config,
    command: Command,
    seed: u64,
    out_dir: &std::path::Path,
    meta: &output::Meta,
) -> anyhow::Result<PathBuf> {
    match command {
        Command::Net => {
            let m = config.manifold()?;
            let n = config.net.as_ref().unwrap();
            let net = geometry::build_epsilon_net(&m, n.epsilon, n.candidate_resolution)?;
            let cert = net.certify(n.certify_resolution.unwrap_or(10_000))?;
            let data = NetData {
                epsilon: n.epsilon,
                size: net.points.len(),
                packing_bound: geometry::packing_bound(&m, n.epsilon)?,
                certificate: cert,
                points: net
                    .points
                    .iter()
                    .map(|p| p.iter().cloned().collect())
                    .collect(),
            };
            output::write_json(out_dir, "net", meta, &data)
        }
        Command::Voronoi => {
            let m = config.manifold()?;
            let s = config.voronoi.as_ref().unwrap();
            let net = geometry::build_epsilon_net(&m, s.epsilon, s.candidate_resolution)?;
            let sample = m.sample_points(s.sample_resolution)?;
            let part = geometry::restricted_voronoi(&net, &sample)?;
            let rows: Vec<String> = (0..sample.len())
                .map(|i| format!("{},{},{}", i, part.assignment[i], part.distance[i]))
                .collect();
            output::write_csv(
                out_dir,
                "voronoi",
                meta,
                "point_index,seed_index,distance",
                &rows,
            )
        }
        Command::Grid => {
            let m = config.manifold()?;
            let s = config.structure()?;
            let g = config.grid.as_ref().unwrap();
            let grid = geometry::build_discretization_grid(&m, &s, g.h, g.gamma, g.theta)?;
            let data = GridData {
                h: g.h,
                gamma: g.gamma,
                theta: g.theta,
                factor_counts: grid.factor_counts(),
                spacings: grid.spacings.clone(),
                single_point_fallback: grid.single_point_fallback.clone(),
                points: grid
                    .points
                    .iter()
                    .map(|p| p.iter().cloned().collect())
                    .collect(),
            };
            output::write_json(out_dir, "grid", meta, &data)
        }
        Command::Pickands => {
            let s = config.pickands_structure()?;
            let p = config.pickands.as_ref().unwrap();
            let est = pickands::estimate_pickands(&s, p.t_horizon, p.gamma, p.n_reps, seed)?;
            output::write_json(out_dir, "pickands", meta, &est)
        }
        Command::Excursion => {
            let m = config.manifold()?;
            let model = config.model()?;
            let e = config.excursion.as_ref().unwrap();
            let reports = excursion::empirical_excursion(
                &m,
                &model,
                &e.u_list,
                e.n_reps,
                e.resolution,
                seed,
                config.pickands_input(),
            )?;
            let rows: Vec<String> = reports
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.u,
                        r.asymptotic,
                        r.empirical,
                        r.mc_std_error,
                        r.n_reps,
                        r.grid_points,
                        r.grid_limited
                    )
                })
                .collect();
            output::write_csv(
                out_dir,
                "excursion",
                meta,
                "u,asymptotic,empirical,stderr,n_reps,grid_points,grid_limited",
                &rows,
            )
        }
        Command::ChiExcursion => {
            let m = config.manifold()?;
            let model = config.model()?;
            let c = config.chi_excursion.as_ref().unwrap();
            let points = m.sample_points(c.resolution)?;
            let sup = excursion::chi_suprema(&model, &points, c.p, c.n_reps, seed)?;
            let quad = c.quadrature_resolution.unwrap_or(512);
            let rows: Vec<String> = c
                .u_list
                .iter()
                .map(|&u| -> anyhow::Result<String> {
                    let hits = sup.iter().filter(|&&s| s > u).count();
                    let p_hat = hits as f64 / c.n_reps as f64;
                    let se = (p_hat * (1.0 - p_hat) / c.n_reps as f64).sqrt();
                    let asym = excursion::chi_excursion_asymptotic(
                        &m,
                        &model,
                        c.p,
                        u,
                        quad,
                        config.pickands_input(),
                    )?;
                    Ok(format!(
                        "{},{},{},{},{},{}",
                        u,
                        asym,
                        p_hat,
                        se,
                        c.n_reps,
                        points.len()
                    ))
                })
                .collect::<Result<_, _>>()?;
            output::write_csv(
                out_dir,
                "chi-excursion",
                meta,
                "u,asymptotic,empirical,stderr,n_reps,grid_points",
                &rows,
            )
        }
        Command::Evd => {
            let m = config.manifold()?;
            let model = config.model()?;
            let e = config.evd.as_ref().unwrap();
            let report = evd::gumbel_limit_experiment(
                &m,
                &model,
                &e.h_list,
                &e.resolutions,
                e.n_reps,
                &e.z_grid,
                seed,
                e.quadrature_resolution.unwrap_or(512),
                config.pickands_input(),
                e.i_h,
            )?;
            output::write_json(out_dir, "evd", meta, &report)
        }
        Command::Tube => {
            let m = config.manifold()?;
            let model = config.model()?;
            let t = config.tube.as_ref().unwrap();
            let report = evd::tube_coverage_experiment(
                &m,
                &model,
                t.p,
                t.h,
                t.alpha,
                t.n_trials,
                t.resolution,
                t.quadrature_resolution.unwrap_or(512),
                seed,
                config.pickands_input(),
            )?;
            output::write_json(out_dir, "tube", meta, &report)
        }
        Command::Region => {
            let model = config.model()?;
            let r = config.region.as_ref().unwrap();
            let report = evd::region_containment_experiment(
                &model,
                r.h,
                r.alpha,
                r.n_trials,
                r.circle_samples,
                r.background_resolution,
                r.background_bound,
                r.quadrature_resolution.unwrap_or(512),
                seed,
                config.pickands_input(),
            )?;
            output::write_json(out_dir, "region", meta, &report)
        }
    }
}
