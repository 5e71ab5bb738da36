//! Experiment drivers producing the CSV artifacts.
//!
//! Grid points dispatch onto a rayon pool sized by `jobs`; every job owns
//! its full pipeline and derives its seeds from the base seed, so rows are
//! identical regardless of scheduling. Rows are sorted before writing.
//! Wall-clock timing lives in dedicated columns; timestamps only ever
//! appear in `#` comment lines.

use std::io::Write;
use std::path::Path;

use gpw_core::measure::sample_lowrank_gaussian;
use gpw_core::rng::derive_seed;
use gpw_core::{
    add_noise, exact_w2_uniform, gpw_distance, srw_distance, DiscreteMeasure, Error, GPWConfig,
    GaussianSpec, Result,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

/// First step (1-based) whose batch estimate reaches 98% of the best
/// per-step estimate; a cheap convergence marker derived from the trace.
fn iters_to_converge(trace: &[f64]) -> usize {
    let best = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return 0;
    }
    let threshold = 0.98 * best;
    trace
        .iter()
        .position(|&v| v >= threshold)
        .map_or(trace.len(), |idx| idx + 1)
}

fn measure_pair(cfg: &ExperimentConfig, d: usize, run: usize) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let stream = (run as u64) << 16 | d as u64;
    let mu = sample_lowrank_gaussian(&GaussianSpec {
        dim: d,
        rank: cfg.rank,
        n_samples: cfg.n,
        seed: derive_seed(cfg.seed, stream << 1),
    })?;
    let nu = sample_lowrank_gaussian(&GaussianSpec {
        dim: d,
        rank: cfg.rank,
        n_samples: cfg.n,
        seed: derive_seed(cfg.seed, (stream << 1) | 1),
    })?;
    Ok((mu, nu))
}

fn gpw_run_config(cfg: &ExperimentConfig, k: usize, run: usize) -> GPWConfig {
    GPWConfig {
        k,
        seed: derive_seed(cfg.seed, 0x9000 + ((run as u64) << 8) + k as u64),
        ..cfg.gpw.clone()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Formats a float with Rust's shortest round-trip representation, which is
/// byte-stable for identical inputs.
fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_table(
    out: Option<&Path>,
    config_echo: &str,
    header: &str,
    rows: &[String],
) -> Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut text = String::new();
    text.push_str(&format!("# config: {config_echo}\n"));
    text.push_str(&format!("# timestamp: {timestamp}\n"));
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// estimation: estimate quality vs latent dimension
// ---------------------------------------------------------------------------

pub struct EstimationOutcome {
    pub rows: Vec<String>,
    pub header: &'static str,
}

pub fn run_estimation(cfg: &ExperimentConfig) -> Result<EstimationOutcome> {
    let exacts: Vec<(DiscreteMeasure, DiscreteMeasure, f64)> = (0..cfg.runs)
        .map(|run| {
            let (mu, nu) = measure_pair(cfg, cfg.d, run)?;
            let exact = exact_w2_uniform(mu.points(), nu.points())?.value;
            Ok((mu, nu, exact))
        })
        .collect::<Result<_>>()?;

    let grid: Vec<(usize, usize)> = cfg
        .k_grid
        .iter()
        .flat_map(|&k| (0..cfg.runs).map(move |run| (k, run)))
        .collect();

    let results: Vec<(usize, usize, f64, f64, usize, f64)> = pool(cfg.jobs)?.install(|| {
        grid.par_iter()
            .map(|&(k, run)| {
                let (mu, nu, exact) = &exacts[run];
                let run_cfg = gpw_run_config(cfg, k, run);
                let res = gpw_distance(mu, nu, &run_cfg)?;
                Ok((k, run, res.value, *exact, iters_to_converge(&res.trace), res.wall_time))
            })
            .collect::<Result<_>>()
    })?;

    let mut sorted = results;
    sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let rows = sorted
        .into_iter()
        .map(|(k, run, sd, exact, iters, wall)| {
            format!("{k},{run},{},{},{iters},{}", fmt(sd), fmt(exact), fmt(wall))
        })
        .collect();
    Ok(EstimationOutcome { rows, header: "k,run,sd_value,exact_w2,iters_to_converge,wall_time_s" })
}

// ---------------------------------------------------------------------------
// noise: clean vs perturbed normalized distances for both methods
// ---------------------------------------------------------------------------

pub struct NoiseOutcome {
    pub rows: Vec<String>,
    pub header: &'static str,
}

pub fn run_noise(cfg: &ExperimentConfig) -> Result<NoiseOutcome> {
    struct Instance {
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        exact: f64,
    }
    let mut instances: Vec<[Instance; 2]> = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let (mu, nu) = measure_pair(cfg, cfg.d, run)?;
        let noisy_mu = add_noise(&mu, cfg.noise_sigma, derive_seed(cfg.seed, 0x4000 + 2 * run as u64))?;
        let noisy_nu =
            add_noise(&nu, cfg.noise_sigma, derive_seed(cfg.seed, 0x4001 + 2 * run as u64))?;
        let exact_clean = exact_w2_uniform(mu.points(), nu.points())?.value;
        let exact_noisy = exact_w2_uniform(noisy_mu.points(), noisy_nu.points())?.value;
        instances.push([
            Instance { mu, nu, exact: exact_clean },
            Instance { mu: noisy_mu, nu: noisy_nu, exact: exact_noisy },
        ]);
    }

    let mut grid: Vec<(&'static str, usize, usize, usize)> = Vec::new();
    for &k in &cfg.k_grid {
        for run in 0..cfg.runs {
            for noisy in 0..2usize {
                grid.push(("gpw", k, run, noisy));
                grid.push(("srw", k, run, noisy));
            }
        }
    }

    let results: Vec<(&'static str, usize, usize, usize, f64, f64)> =
        pool(cfg.jobs)?.install(|| {
            grid.par_iter()
                .map(|&(method, k, run, noisy)| {
                    let inst = &instances[run][noisy];
                    let value = match method {
                        "gpw" => gpw_distance(&inst.mu, &inst.nu, &gpw_run_config(cfg, k, run))?.value,
                        _ => srw_distance(&inst.mu, &inst.nu, k, &cfg.srw)?.value,
                    };
                    Ok((method, k, run, noisy, value, value / inst.exact))
                })
                .collect::<Result<_>>()
        })?;

    let mut sorted = results;
    sorted.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let rows = sorted
        .into_iter()
        .map(|(method, k, run, noisy, value, normalized)| {
            format!("{method},{k},{run},{noisy},{},{}", fmt(value), fmt(normalized))
        })
        .collect();
    Ok(NoiseOutcome { rows, header: "method,k,run,noisy,value,normalized_value" })
}

// ---------------------------------------------------------------------------
// dimension: normalized distance and relative runtime vs ambient dimension
// ---------------------------------------------------------------------------

pub struct DimensionOutcome {
    pub rows: Vec<String>,
    pub header: &'static str,
}

pub fn run_dimension(cfg: &ExperimentConfig) -> Result<DimensionOutcome> {
    let grid: Vec<(usize, usize)> = cfg
        .d_grid
        .iter()
        .flat_map(|&d| (0..cfg.runs).map(move |run| (d, run)))
        .collect();

    // (method, d, run, value, normalized, wall)
    let results: Vec<(&'static str, usize, usize, f64, f64, f64)> = pool(cfg.jobs)?.install(|| {
        grid.par_iter()
            .map(|&(d, run)| {
                let (mu, nu) = measure_pair(cfg, d, run)?;
                let exact = exact_w2_uniform(mu.points(), nu.points())?.value;
                let gpw_res = gpw_distance(&mu, &nu, &gpw_run_config(cfg, cfg.k, run))?;
                let srw_res = srw_distance(&mu, &nu, cfg.k, &cfg.srw)?;
                Ok(vec![
                    ("gpw", d, run, gpw_res.value, gpw_res.value / exact, gpw_res.wall_time),
                    ("srw", d, run, srw_res.value, srw_res.value / exact, srw_res.wall_time),
                ])
            })
            .collect::<Result<Vec<_>>>()
            .map(|nested| nested.into_iter().flatten().collect())
    })?;

    let baseline = |method: &str, run: usize| -> Result<f64> {
        results
            .iter()
            .find(|r| r.0 == method && r.1 == 10 && r.2 == run)
            .map(|r| r.5)
            .ok_or_else(|| Error::Config("missing d = 10 baseline row".into()))
    };

    let mut sorted = results.clone();
    sorted.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut rows = Vec::with_capacity(sorted.len());
    for (method, d, run, value, normalized, wall) in sorted {
        let rel = wall / baseline(method, run)?;
        rows.push(format!(
            "{method},{d},{run},{},{},{},{}",
            fmt(value),
            fmt(normalized),
            fmt(wall),
            fmt(rel)
        ));
    }
    Ok(DimensionOutcome {
        rows,
        header: "method,d,run,value,normalized_value,wall_time_s,rel_time",
    })
}

// ---------------------------------------------------------------------------
// compute: one estimation run, JSON out
// ---------------------------------------------------------------------------

pub fn run_compute(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &ExperimentConfig,
) -> Result<serde_json::Value> {
    if mu.dim() != nu.dim() {
        return Err(Error::Config(format!(
            "measure dimensions differ: mu has d = {}, nu has d = {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let run_cfg = GPWConfig { k: cfg.k, seed: cfg.seed, ..cfg.gpw.clone() };
    let result = gpw_distance(mu, nu, &run_cfg)?;
    Ok(result.to_json(&run_cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converge_marker_finds_first_crossing() {
        assert_eq!(iters_to_converge(&[0.1, 0.5, 0.97, 0.99, 1.0]), 4);
        assert_eq!(iters_to_converge(&[1.0, 0.5]), 1);
        assert_eq!(iters_to_converge(&[]), 0);
    }
}
