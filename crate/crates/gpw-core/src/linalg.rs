//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns of the second matrix.
pub fn sym_eigen(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let d = m.nrows();
    check_symmetric(m)?;
    let na = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = na.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut vals = Array1::zeros(d);
    let mut vecs = Array2::zeros((d, d));
    for (out_col, &src) in order.iter().enumerate() {
        vals[out_col] = eig.eigenvalues[src];
        for row in 0..d {
            vecs[[row, out_col]] = eig.eigenvectors[(row, src)];
        }
    }
    Ok((vals, vecs))
}

/// Rebuild `Q diag(vals) Qᵀ`, symmetrized against rounding.
pub fn from_eigen(vals: &Array1<f64>, vecs: &Array2<f64>) -> Array2<f64> {
    let scaled = vecs * &vals.view().insert_axis(ndarray::Axis(0));
    let m = scaled.dot(&vecs.t());
    symmetrize(&m)
}

pub fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

pub fn check_symmetric(m: &Array2<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0}", m.nrows()),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut max_asym = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            max_asym = max_asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if max_asym > 1e-9 * scale {
        return Err(Error::NotSymmetric { max_asym });
    }
    Ok(())
}

/// One round of power iteration on `WᵀW`, updating `v` (right iterate) and
/// `u` (left iterate) in place. Returns the current singular-value estimate
/// `‖W v‖` with `v` unit-norm; zero matrices yield 0.
pub fn power_iteration_step(w: &Array2<f64>, u: &mut Array1<f64>, v: &mut Array1<f64>) -> f64 {
    let wv = w.dot(v);
    let wv_norm = l2_norm(&wv);
    if wv_norm == 0.0 {
        return 0.0;
    }
    *u = &wv / wv_norm;
    let wtu = w.t().dot(u);
    let wtu_norm = l2_norm(&wtu);
    if wtu_norm == 0.0 {
        return 0.0;
    }
    *v = &wtu / wtu_norm;
    l2_norm(&w.dot(v))
}

pub fn l2_norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eigen(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let back = from_eigen(&vals, &vecs);
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn power_step_finds_dominant_singular_value() {
        let w = array![[2.0, 0.0], [0.0, 0.5]];
        let mut u = Array1::from(vec![0.6, 0.8]);
        let mut v = Array1::from(vec![0.8, 0.6]);
        let mut est = 0.0;
        for _ in 0..50 {
            est = power_iteration_step(&w, &mut u, &mut v);
        }
        assert!((est - 2.0).abs() < 1e-9);
    }
}
