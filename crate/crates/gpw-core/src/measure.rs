//! Discrete probability measures on R^d.
//!
//! A [`DiscreteMeasure`] is a weighted point cloud: `n` support atoms in
//! R^d with nonnegative masses summing to one. Pushforward keeps atoms
//! per-row (duplicates are not merged); [`measures_equal`] provides the
//! measure-level equality that sums coincident-atom mass.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{fnv1a_f64, rng_from_seed};

/// Immutable empirical probability measure: atoms (rows) plus masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

/// Synthetic low-rank Gaussian sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GaussianSpec {
    pub dim: usize,
    pub rank: usize,
    pub n_samples: usize,
    pub seed: u64,
}

/// A map R^d → R^k with declared dimensions, applied row-wise to supports.
pub trait PointMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
}

/// Dense linear map `x ↦ M x` with `M: [k × d]`.
#[derive(Debug, Clone)]
pub struct LinearMap(pub Array2<f64>);

impl PointMap for LinearMap {
    fn in_dim(&self) -> usize {
        self.0.ncols()
    }
    fn out_dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.0.dot(&x)
    }
}

impl DiscreteMeasure {
    /// Build a measure from support points and optional weights.
    ///
    /// Missing weights default to uniform `1/n`; given weights are rescaled
    /// to sum exactly one.
    pub fn from_points(points: Array2<f64>, weights: Option<Array1<f64>>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "points" });
        }
        let weights = match weights {
            None => Array1::from_elem(n, 1.0 / n as f64),
            Some(w) => {
                if w.len() != n {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{n} weights"),
                        got: format!("{}", w.len()),
                    });
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { context: "weights" });
                }
                if let Some((index, &value)) = w.iter().enumerate().find(|(_, &v)| v < 0.0) {
                    return Err(Error::NegativeWeight { index, value });
                }
                let total: f64 = w.sum();
                if total == 0.0 {
                    return Err(Error::AllZeroWeights);
                }
                w / total
            }
        };
        Ok(Self { points, weights })
    }

    /// Uniform measure over the given points.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        Self::from_points(points, None)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// True when every atom carries mass `1/n`.
    pub fn is_uniform(&self) -> bool {
        let n = self.len() as f64;
        self.weights.iter().all(|&w| (w - 1.0 / n).abs() <= 1e-12)
    }

    /// Image measure under `f`: atoms mapped row-wise, masses unchanged.
    /// Duplicated atoms are kept as separate rows.
    pub fn pushforward<F: PointMap>(&self, f: &F) -> Result<Self> {
        if f.in_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: f.in_dim(),
            });
        }
        let k = f.out_dim();
        let mut out = Array2::zeros((self.len(), k));
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let y = f.apply(row);
            debug_assert_eq!(y.len(), k);
            out.row_mut(i).assign(&y);
        }
        Ok(Self {
            points: out,
            weights: self.weights.clone(),
        })
    }

    /// Restriction to a subset of atoms with weights renormalized.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut pts = Array2::zeros((indices.len(), self.dim()));
        let mut w = Array1::zeros(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            pts.row_mut(row).assign(&self.points.row(idx));
            w[row] = self.weights[idx];
        }
        Self::from_points(pts, Some(w))
    }

    /// Order-sensitive content hash (used to derive pair-symmetric seeds).
    pub fn content_hash(&self) -> u64 {
        fnv1a_f64(
            self.points
                .iter()
                .copied()
                .chain(self.weights.iter().copied()),
        )
    }

    /// Write as CSV: header `w,x0,...,x{d-1}`, one atom per row,
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let mut header = String::from("w");
        for j in 0..d {
            header.push_str(&format!(",x{j}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            let mut line = format!("{:.16e}", self.weights[i]);
            for j in 0..d {
                line.push_str(&format!(",{:.16e}", self.points[[i, j]]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let buf = BufReader::new(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in buf.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if lineno == 0 && trimmed.starts_with('w') {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                trimmed.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() < 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected at least a weight and one coordinate",
                    lineno + 1
                )));
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::EmptySupport);
        }
        let d = rows[0].len() - 1;
        if rows.iter().any(|r| r.len() != d + 1) {
            return Err(Error::Parse("ragged csv rows".into()));
        }
        let n = rows.len();
        let mut points = Array2::zeros((n, d));
        let mut weights = Array1::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            weights[i] = row[0];
            for j in 0..d {
                points[[i, j]] = row[j + 1];
            }
        }
        Self::from_points(points, Some(weights))
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }
}

/// Draw `n_samples` uniform-weight atoms from `N(0, A Aᵀ)` where `A` is a
/// `d × r` matrix with i.i.d. standard normal entries generated once per
/// seed. Supports lie exactly in the column space of `A`.
pub fn sample_lowrank_gaussian(spec: &GaussianSpec) -> Result<DiscreteMeasure> {
    if spec.rank > spec.dim || spec.rank == 0 || spec.dim == 0 {
        return Err(Error::InvalidSpec {
            rank: spec.rank,
            dim: spec.dim,
        });
    }
    if spec.n_samples == 0 {
        return Err(Error::EmptySupport);
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut factor = Array2::zeros((spec.dim, spec.rank));
    for v in factor.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut latent = Array2::zeros((spec.n_samples, spec.rank));
    for v in latent.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let points = latent.dot(&factor.t());
    DiscreteMeasure::uniform(points)
}

/// Perturb every atom by i.i.d. `N(0, sigma² I)` in the ambient dimension.
/// Weights are unchanged; `sigma = 0` returns the input exactly.
pub fn add_noise(m: &DiscreteMeasure, sigma: f64, seed: u64) -> Result<DiscreteMeasure> {
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut points = m.points().clone();
    for v in points.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
    Ok(DiscreteMeasure {
        points,
        weights: m.weights().clone(),
    })
}

/// Measure equality up to atom ordering and duplicate splitting: coincident
/// atoms (coordinates within `coord_tol`) have their masses summed before
/// comparison at `mass_tol`.
pub fn measures_equal(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    coord_tol: f64,
    mass_tol: f64,
) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let ga = merge_coincident(a, coord_tol);
    let gb = merge_coincident(b, coord_tol);
    if ga.len() != gb.len() {
        return false;
    }
    let mut used = vec![false; gb.len()];
    'outer: for (pa, wa) in &ga {
        for (j, (pb, wb)) in gb.iter().enumerate() {
            if used[j] {
                continue;
            }
            let close = pa
                .iter()
                .zip(pb.iter())
                .all(|(x, y)| (x - y).abs() <= coord_tol);
            if close {
                if (wa - wb).abs() > mass_tol {
                    return false;
                }
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn merge_coincident(m: &DiscreteMeasure, coord_tol: f64) -> Vec<(Vec<f64>, f64)> {
    let mut groups: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m.len() {
        let row: Vec<f64> = m.points().row(i).to_vec();
        let w = m.weights()[i];
        if let Some(g) = groups.iter_mut().find(|(p, _)| {
            p.iter().zip(row.iter()).all(|(x, y)| (x - y).abs() <= coord_tol)
        }) {
            g.1 += w;
        } else {
            groups.push((row, w));
        }
    }
    groups
}
