//! Subspace-robust baseline: projected supergradient ascent over PSD
//! matrices Ω with trace k and Ω ⪯ I.
//!
//! The inner transport problem is solved in the ambient space under the
//! pullback cost `(x−y)ᵀ Ω (x−y)`, which equals the transport between the
//! `Ω^{1/2}` pushforwards. The supergradient at Ω is the second moment of
//! the displacements under the optimal plan; eigenvalues are projected back
//! onto the capped simplex `{0 ≤ λᵢ ≤ 1, Σλᵢ = k}` by bisection.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_ot::exact_ot_with_cost;
use crate::linalg::{check_symmetric, from_eigen, power_iteration_step, sym_eigen, symmetrize};
use crate::measure::DiscreteMeasure;
use crate::sinkhorn::{plan_from_potentials, solve_on_cost, SinkhornConfig};

/// Inner transport solver used at each ascent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InnerOt {
    /// Exact assignment / LP oracle (supports up to the oracle caps).
    Exact,
    /// Entropic solver; potentials are warm-started across ascent steps.
    Sinkhorn(SinkhornConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrwConfig {
    pub ascent_iters: usize,
    /// Base step; the applied step is `step_size / (‖V‖₂ √(t+1))`.
    pub step_size: f64,
    pub inner: InnerOt,
}

impl Default for SrwConfig {
    fn default() -> Self {
        Self { ascent_iters: 100, step_size: 0.1, inner: InnerOt::Exact }
    }
}

/// Ω iterate with its capped spectrum.
#[derive(Debug, Clone)]
pub struct SrwState {
    pub omega: Array2<f64>,
    pub eigvals: Array1<f64>,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct SrwResult {
    /// Final `⟨Ω, V_plan⟩`, the transport cost under the final Ω.
    pub value: f64,
    pub omega: Array2<f64>,
    /// Per-iteration transport values.
    pub trace: Vec<f64>,
    pub wall_time: f64,
    pub per_iter_time: f64,
}

/// Second moment of displacements under a coupling:
/// `V = Σ_{ij} plan[i][j] (xᵢ−yⱼ)(xᵢ−yⱼ)ᵀ`, assembled from the expanded
/// form `Xᵀdiag(r)X + Yᵀdiag(c)Y − M − Mᵀ` with `M = XᵀPY`.
pub fn displacement_second_moment(
    plan: &Array2<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (n, m) = plan.dim();
    if x.nrows() != n || y.nrows() != m || x.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("plan {n}x{m} with matching point rows"),
            got: format!("x {}x{}, y {}x{}", x.nrows(), x.ncols(), y.nrows(), y.ncols()),
        });
    }
    let row_sums = plan.sum_axis(Axis(1));
    let col_sums = plan.sum_axis(Axis(0));
    let d = x.ncols();
    let mut v = Array2::<f64>::zeros((d, d));
    let xw = x * &row_sums.view().insert_axis(Axis(1));
    v += &xw.t().dot(x);
    let yw = y * &col_sums.view().insert_axis(Axis(1));
    v += &yw.t().dot(y);
    let cross = x.t().dot(plan).dot(y);
    v -= &cross;
    v -= &cross.t();
    Ok(symmetrize(&v))
}

/// Project eigenvalues of a symmetric matrix onto the capped simplex
/// `{0 ≤ λᵢ ≤ 1, Σλᵢ = k}` by bisecting the shift, keeping the eigenbasis.
pub fn project_omega(m: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    check_symmetric(m)?;
    let d = m.nrows();
    if k == 0 || k > d {
        return Err(Error::Config(format!("k must be in 1..={d}, got {k}")));
    }
    let (vals, vecs) = sym_eigen(m)?;
    let capped = cap_simplex(&vals, k as f64);
    Ok(from_eigen(&capped, &vecs))
}

fn cap_simplex(vals: &Array1<f64>, target: f64) -> Array1<f64> {
    let sum_at = |theta: f64| -> f64 {
        vals.iter().map(|&v| (v - theta).clamp(0.0, 1.0)).sum()
    };
    let max_v = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_v = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = min_v - 1.0; // sum_at(lo) >= target (= d when all caps hit)
    let mut hi = max_v; // sum_at(hi) = 0 <= target
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + max_v.abs()) {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    vals.mapv(|v| (v - theta).clamp(0.0, 1.0))
}

/// Pullback cost under Ω: `C[i][j] = (xᵢ−yⱼ)ᵀ Ω (xᵢ−yⱼ)`, expanded so the
/// cost is O(nd² + n²d) rather than O(n²d²).
fn omega_cost(x: &Array2<f64>, y: &Array2<f64>, omega: &Array2<f64>) -> Array2<f64> {
    let x_om = x.dot(omega);
    let y_om = y.dot(omega);
    let qx: Vec<f64> = x_om
        .rows()
        .into_iter()
        .zip(x.rows())
        .map(|(a, b)| a.dot(&b))
        .collect();
    let qy: Vec<f64> = y_om
        .rows()
        .into_iter()
        .zip(y.rows())
        .map(|(a, b)| a.dot(&b))
        .collect();
    let cross = x_om.dot(&y.t());
    let (n, m) = cross.dim();
    let mut cost = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            cost[[i, j]] = (qx[i] + qy[j] - 2.0 * cross[[i, j]]).max(0.0);
        }
    }
    cost
}

/// Symmetric square root of a PSD matrix (eigenvalues clamped at zero).
pub fn omega_sqrt(omega: &Array2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eigen(omega)?;
    let roots = vals.mapv(|v| v.max(0.0).sqrt());
    Ok(from_eigen(&roots, &vecs))
}

/// Spectral norm of a symmetric PSD matrix by plain power iteration.
fn psd_spectral_norm(v: &Array2<f64>) -> f64 {
    let d = v.nrows();
    let mut u = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    let mut w = u.clone();
    let mut est = 0.0;
    for _ in 0..50 {
        est = power_iteration_step(v, &mut u, &mut w);
        if est == 0.0 {
            return 0.0;
        }
    }
    est
}

/// Projected supergradient ascent for the trace-k subspace baseline.
pub fn srw_distance(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    k: usize,
    cfg: &SrwConfig,
) -> Result<SrwResult> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let d = mu.dim();
    if k == 0 || k > d {
        return Err(Error::Config(format!("k must be in 1..={d}, got {k}")));
    }
    if cfg.ascent_iters == 0 {
        return Err(Error::Config("ascent_iters must be >= 1".into()));
    }
    let x = mu.points();
    let y = nu.points();
    let a = mu.weights();
    let b = nu.weights();

    let started = Instant::now();
    let mut omega = Array2::eye(d) * (k as f64 / d as f64);
    let mut warm: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.ascent_iters);

    // During ascent an unconverged inner solve still yields a workable
    // supergradient; only the final value solve is strict.
    let solve_plan = |omega: &Array2<f64>,
                      warm: &mut Option<(Array1<f64>, Array1<f64>)>,
                      strict: bool|
     -> Result<Array2<f64>> {
        let cost = omega_cost(x, y, omega);
        match &cfg.inner {
            InnerOt::Exact => Ok(exact_ot_with_cost(a, b, &cost)?.plan),
            InnerOt::Sinkhorn(scfg) => {
                let out = solve_on_cost(a, b, &cost, scfg, warm.as_ref().map(|(f, g)| (f, g)));
                if strict && !out.converged {
                    return Err(Error::NotConverged {
                        iterations: scfg.max_inner_iters,
                        last_change: f64::NAN,
                    });
                }
                let plan = plan_from_potentials(a, b, &cost, &out.f, &out.g, scfg.epsilon);
                *warm = Some((out.f, out.g));
                Ok(plan)
            }
        }
    };

    for t in 0..cfg.ascent_iters {
        let plan = solve_plan(&omega, &mut warm, false)?;
        let v = displacement_second_moment(&plan, x, y)?;
        trace.push((&omega * &v).sum());
        let norm = psd_spectral_norm(&v);
        if norm == 0.0 {
            break;
        }
        let tau = cfg.step_size / (norm * ((t + 1) as f64).sqrt());
        let candidate = &omega + &(&v * tau);
        omega = project_omega(&candidate, k)?;
    }

    let plan = solve_plan(&omega, &mut warm, true)?;
    let v = displacement_second_moment(&plan, x, y)?;
    let value = (&omega * &v).sum();
    let wall_time = started.elapsed().as_secs_f64();
    let iters = trace.len().max(1);
    Ok(SrwResult {
        value,
        omega,
        trace,
        wall_time,
        per_iter_time: wall_time / iters as f64,
    })
}

/// Spectrum of the current Ω iterate, for feasibility checks.
pub fn srw_state(omega: &Array2<f64>, step: usize) -> Result<SrwState> {
    let (eigvals, _) = sym_eigen(omega)?;
    Ok(SrwState { omega: omega.clone(), eigvals, step })
}
