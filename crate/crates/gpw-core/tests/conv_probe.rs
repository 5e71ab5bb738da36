use gpw_core::measure::{sample_lowrank_gaussian, GaussianSpec};
use gpw_core::*;
use std::time::Instant;

#[test]
fn probe_training_speed() {
    let mu = sample_lowrank_gaussian(&GaussianSpec { dim: 10, rank: 5, n_samples: 200, seed: 1 }).unwrap();
    let nu = sample_lowrank_gaussian(&GaussianSpec { dim: 10, rank: 5, n_samples: 200, seed: 2 }).unwrap();
    for tol in [1e-6, 2e-5] {
        let cfg = GPWConfig {
            k: 5,
            max_iter: 30,
            seed: 1,
            sinkhorn: SinkhornConfig { tol, max_inner_iters: 300, ..Default::default() },
            ..Default::default()
        };
        let t0 = Instant::now();
        let res = gpw_distance(&mu, &nu, &cfg).unwrap();
        eprintln!(
            "tol={tol:e}: 30 steps in {:?} ({:.0} ms/step), value={:.4}, best={:.4}, not_conv={}",
            t0.elapsed(),
            res.per_iter_time * 1e3,
            res.value,
            res.best_value,
            res.not_converged_steps
        );
    }
}
