//! Exact optimal transport used as ground truth.
//!
//! Two solvers cover the validation needs: a shortest-augmenting-path
//! assignment solver for uniform equal-size supports (O(n³)), and a
//! successive-shortest-paths transport solver for tiny general instances.
//! Both return the full coupling so callers can audit marginals.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, LinearMap};
use crate::sinkhorn::cost_matrix;

/// Atom cap for the general brute-force transport solver.
pub const BRUTEFORCE_CAP: usize = 8;
/// Atom cap for the assignment solver.
pub const ASSIGNMENT_CAP: usize = 1000;

/// Exact transport value (W_p^p units) together with the optimal coupling.
#[derive(Debug, Clone)]
pub struct ExactOTResult {
    pub value: f64,
    pub plan: Array2<f64>,
}

/// Exact W₂² between uniform equal-size point clouds via the linear
/// assignment problem on squared Euclidean costs.
pub fn exact_w2_uniform(x: &Array2<f64>, y: &Array2<f64>) -> Result<ExactOTResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch {
            left: x.nrows(),
            right: y.nrows(),
        });
    }
    let cost = cost_matrix(x, y)?;
    assignment_result(&cost)
}

fn assignment_result(cost: &Array2<f64>) -> Result<ExactOTResult> {
    let n = cost.nrows();
    if n > ASSIGNMENT_CAP {
        return Err(Error::OracleTooLarge { n, cap: ASSIGNMENT_CAP });
    }
    let col4row = solve_assignment(cost)?;
    let inv_n = 1.0 / n as f64;
    let mut plan = Array2::zeros((n, n));
    let mut value = 0.0;
    for (i, &j) in col4row.iter().enumerate() {
        plan[[i, j]] = inv_n;
        value += cost[[i, j]];
    }
    Ok(ExactOTResult { value: value * inv_n, plan })
}

/// Minimum-cost perfect matching on a square cost matrix by shortest
/// augmenting paths with dual updates. Returns the matched column per row.
pub fn solve_assignment(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if n != cost.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "assignment cost" });
    }

    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];

    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut in_tree_row = vec![false; n];
    let mut in_tree_col = vec![false; n];
    let mut remaining = vec![0usize; n];

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        path.fill(NONE);
        in_tree_row.fill(false);
        in_tree_col.fill(false);
        // Reverse fill so ties resolve toward the identity matching.
        for (slot, col) in remaining.iter_mut().zip((0..n).rev()) {
            *slot = col;
        }
        let mut num_remaining = n;
        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut sink = NONE;

        while sink == NONE {
            in_tree_row[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining[..num_remaining].iter().enumerate() {
                let reduced = min_val + cost[[i, j]] - u[i] - v[j];
                if reduced < shortest[j] {
                    shortest[j] = reduced;
                    path[j] = i;
                }
                // Prefer unmatched columns on ties so the path terminates.
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if !min_val.is_finite() {
                return Err(Error::NonFinite { context: "augmenting path" });
            }
            let j = remaining[index];
            if row4col[j] == NONE {
                sink = j;
            } else {
                i = row4col[j];
            }
            in_tree_col[j] = true;
            num_remaining -= 1;
            remaining.swap(index, num_remaining);
        }

        u[cur_row] += min_val;
        for row in 0..n {
            if in_tree_row[row] && row != cur_row {
                u[row] += min_val - shortest[col4row[row]];
            }
        }
        for col in 0..n {
            if in_tree_col[col] {
                v[col] -= min_val - shortest[col];
            }
        }

        let mut j = sink;
        loop {
            let i = path[j];
            row4col[j] = i;
            std::mem::swap(&mut col4row[i], &mut j);
            if i == cur_row {
                break;
            }
        }
    }
    Ok(col4row)
}

/// Exact transport between small general measures (n, m ≤ 8) by
/// successive shortest paths on the bipartite flow network.
pub fn exact_ot_bruteforce(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ExactOTResult> {
    let (n, m) = (mu.len(), nu.len());
    if n > BRUTEFORCE_CAP || m > BRUTEFORCE_CAP {
        return Err(Error::TooLarge { n, m, cap: BRUTEFORCE_CAP });
    }
    let cost = cost_matrix(mu.points(), nu.points())?;
    transport_lp(mu.weights(), nu.weights(), &cost)
}

/// Exact transport for a given cost matrix. Dispatches to the assignment
/// solver on uniform equal-size inputs and to the flow solver on tiny
/// general ones.
pub fn exact_ot_with_cost(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: &Array2<f64>,
) -> Result<ExactOTResult> {
    let (n, m) = (a.len(), b.len());
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{m}"),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    let uniform = n == m
        && a.iter().all(|&w| (w - 1.0 / n as f64).abs() <= 1e-12)
        && b.iter().all(|&w| (w - 1.0 / n as f64).abs() <= 1e-12);
    if uniform && n <= ASSIGNMENT_CAP {
        assignment_result(cost)
    } else if n <= BRUTEFORCE_CAP && m <= BRUTEFORCE_CAP {
        transport_lp(a, b, cost)
    } else {
        Err(Error::OracleTooLarge { n: n.max(m), cap: ASSIGNMENT_CAP })
    }
}

/// Exact W₂² between two measures, dispatching as [`exact_ot_with_cost`].
pub fn exact_ot_auto(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ExactOTResult> {
    let cost = cost_matrix(mu.points(), nu.points())?;
    exact_ot_with_cost(mu.weights(), nu.weights(), &cost)
}

/// Min-cost flow by successive shortest paths with node potentials
/// (Dijkstra on reduced costs). The Dijkstra predecessor graph is acyclic
/// by construction, so the path walk always terminates; potentials keep
/// residual reduced costs nonnegative up to rounding, which is clamped.
fn transport_lp(a: &Array1<f64>, b: &Array1<f64>, cost: &Array2<f64>) -> Result<ExactOTResult> {
    let (n, m) = (a.len(), b.len());
    let mass_a: f64 = a.sum();
    let mass_b: f64 = b.sum();
    if (mass_a - mass_b).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "unbalanced masses: {mass_a} vs {mass_b}"
        )));
    }

    // Node ids: 0 = source, 1..=n rows, n+1..=n+m cols, n+m+1 = sink.
    let source = 0usize;
    let sink = n + m + 1;
    let nodes = n + m + 2;

    let mut a_rem: Vec<f64> = a.to_vec();
    let mut b_rem: Vec<f64> = b.to_vec();
    let mut flow = Array2::<f64>::zeros((n, m));
    let mut potential = vec![0.0f64; nodes];
    let eps = 1e-15 * (1.0 + mass_a);

    // Every augmentation zeroes a remaining supply, a remaining demand, or
    // a backward arc; the cap turns pathological float behavior into an
    // error instead of a loop.
    let max_augmentations = 8 * (n + m + 2) * (n + m + 2);
    'outer: for _ in 0..max_augmentations {
        if a_rem.iter().all(|&r| r <= eps) {
            break 'outer;
        }

        // Dijkstra over residual arcs with reduced costs
        // rc(u,v) = c(u,v) + π[u] − π[v], clamped at zero against rounding.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred: Vec<Option<usize>> = vec![None; nodes];
        let mut done = vec![false; nodes];
        dist[source] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            let relax = |dist: &mut Vec<f64>, pred: &mut Vec<Option<usize>>, v: usize, rc: f64| {
                let nd = best + rc.max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(u);
                }
            };
            if u == source {
                for i in 0..n {
                    if a_rem[i] > eps {
                        let rc = potential[source] - potential[1 + i];
                        relax(&mut dist, &mut pred, 1 + i, rc);
                    }
                }
            } else if u >= 1 && u <= n {
                let i = u - 1;
                for j in 0..m {
                    let rc = cost[[i, j]] + potential[u] - potential[1 + n + j];
                    relax(&mut dist, &mut pred, 1 + n + j, rc);
                }
            } else {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow[[i, j]] > eps {
                        let rc = -cost[[i, j]] + potential[u] - potential[1 + i];
                        relax(&mut dist, &mut pred, 1 + i, rc);
                    }
                }
                if b_rem[j] > eps {
                    let rc = potential[u] - potential[sink];
                    relax(&mut dist, &mut pred, sink, rc);
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Config("no augmenting path in transport LP".into()));
        }
        let reach = dist[sink];
        for v in 0..nodes {
            potential[v] += dist[v].min(reach);
        }

        // Walk the acyclic predecessor chain for the bottleneck.
        let mut bottleneck = f64::INFINITY;
        let mut node = sink;
        while let Some(prev) = pred[node] {
            if prev == source {
                bottleneck = bottleneck.min(a_rem[node - 1]);
            } else if node == sink {
                bottleneck = bottleneck.min(b_rem[prev - 1 - n]);
            } else if prev >= 1 && prev <= n {
                // forward arc row -> col: unbounded
            } else {
                // backward arc col -> row: limited by existing flow
                bottleneck = bottleneck.min(flow[[node - 1, prev - 1 - n]]);
            }
            node = prev;
        }

        let mut node = sink;
        while let Some(prev) = pred[node] {
            if prev == source {
                a_rem[node - 1] -= bottleneck;
            } else if node == sink {
                b_rem[prev - 1 - n] -= bottleneck;
            } else if prev >= 1 && prev <= n {
                flow[[prev - 1, node - 1 - n]] += bottleneck;
            } else {
                flow[[node - 1, prev - 1 - n]] -= bottleneck;
            }
            node = prev;
        }
    }

    if a_rem.iter().any(|&r| r > 1e-9) {
        return Err(Error::Config("transport LP failed to route all mass".into()));
    }
    let value = (&flow * cost).sum();
    Ok(ExactOTResult { value, plan: flow })
}

/// Evaluate both sides of the deterministic pushforward/pullback equality
/// for a linear map `T: [k × d]`.
///
/// Left: exact OT between the pushforward measures under the target-space
/// squared cost. Right: exact OT of the originals under the pullback cost
/// `‖T(x_i − y_j)‖²`. The two agree for deterministic maps.
pub fn pushforward_equality_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    t: &Array2<f64>,
) -> Result<(f64, f64)> {
    let map = LinearMap(t.clone());
    let pushed_mu = mu.pushforward(&map)?;
    let pushed_nu = nu.pushforward(&map)?;
    let lhs = exact_ot_auto(&pushed_mu, &pushed_nu)?.value;

    let (n, m) = (mu.len(), nu.len());
    let mut pullback_cost = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let diff = &mu.points().row(i) - &nu.points().row(j);
            let mapped = t.dot(&diff);
            pullback_cost[[i, j]] = mapped.iter().map(|v| v * v).sum();
        }
    }
    let rhs = exact_ot_with_cost(mu.weights(), nu.weights(), &pullback_cost)?.value;
    Ok((lhs, rhs))
}
