//! The parameterized map family f_φ: small fully-connected ReLU networks
//! kept 1-Lipschitz by spectral normalization.
//!
//! Gradients are hand-rolled reverse mode: `forward` records a tape of layer
//! inputs and pre-activations, `backward` consumes it (a tape can back a
//! single backward pass, enforced by move semantics). The spectral norm of
//! each layer is estimated by power iteration with vectors that persist
//! across calls, so a handful of iterations per training step suffices once
//! warmed up.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l2_norm, power_iteration_step};
use crate::measure::PointMap;
use crate::rng::rng_from_seed;

/// How weights are mapped back into the 1-Lipschitz set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LipschitzMode {
    /// Divide by the norm estimate only when it exceeds one. The default:
    /// contractive layers are left alone.
    #[serde(rename = "projection")]
    Projection,
    /// Divide by the norm estimate unconditionally, inflating contractive
    /// layers to unit norm.
    #[serde(rename = "always-normalize")]
    AlwaysNormalize,
}

/// One dense layer `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Persistent left/right power-iteration vectors for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerState {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
}

impl PowerState {
    fn random(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            u: random_unit(out_dim, rng),
            v: random_unit(in_dim, rng),
        }
    }
}

fn random_unit(len: usize, rng: &mut impl Rng) -> Array1<f64> {
    let mut v = Array1::from_shape_fn(len, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = l2_norm(&v);
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v / norm
}

/// ReLU network with per-layer spectral-norm state.
#[derive(Debug, Clone)]
pub struct MLPProjector {
    layers: Vec<Layer>,
    power: Vec<PowerState>,
    pub mode: LipschitzMode,
    pub seed: u64,
}

/// Cached activations from one forward pass; consumed by `backward`.
#[derive(Debug)]
pub struct GradientTape {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    preacts: Vec<Array2<f64>>,
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

/// Fresh network with i.i.d. `N(0, init_std²)` weights and zero biases.
pub fn init_mlp(dims: &[usize], init_std: f64, seed: u64) -> Result<MLPProjector> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::BadDims);
    }
    let mut rng = rng_from_seed(seed);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for win in dims.windows(2) {
        let (d_in, d_out) = (win[0], win[1]);
        let w = Array2::from_shape_fn((d_out, d_in), |_| {
            init_std * rng.sample::<f64, _>(StandardNormal)
        });
        layers.push(Layer { w, b: Array1::zeros(d_out) });
    }
    let power = layers
        .iter()
        .map(|l| PowerState::random(l.w.nrows(), l.w.ncols(), &mut rng))
        .collect();
    Ok(MLPProjector { layers, power, mode: LipschitzMode::Projection, seed })
}

impl MLPProjector {
    /// Assemble a projector from explicit layers (used by tests and audits).
    pub fn from_layers(layers: Vec<Layer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::BadDims);
        }
        for pair in layers.windows(2) {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(Error::BadDims);
            }
        }
        for layer in &layers {
            if layer.b.len() != layer.w.nrows() {
                return Err(Error::BadDims);
            }
        }
        let mut rng = rng_from_seed(seed);
        let power = layers
            .iter()
            .map(|l| PowerState::random(l.w.nrows(), l.w.ncols(), &mut rng))
            .collect();
        Ok(MLPProjector { layers, power, mode: LipschitzMode::Projection, seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Vec<Layer> {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.w.nrows()));
        dims
    }

    /// Row-wise evaluation without recording a tape.
    pub fn apply_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::DimensionMismatch { expected: self.in_dim(), got: x.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut act = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = act.dot(&layer.w.t());
            z += &layer.b.view().insert_axis(Axis(0));
            act = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        Ok(act)
    }

    /// Forward pass recording the tape for one backward call.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, GradientTape)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::DimensionMismatch { expected: self.in_dim(), got: x.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(act.clone());
            let mut z = act.dot(&layer.w.t());
            z += &layer.b.view().insert_axis(Axis(0));
            preacts.push(z.clone());
            act = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        Ok((act, GradientTape { inputs, preacts }))
    }

    /// Reverse-mode parameter gradients for the upstream signal `d_y`.
    /// The ReLU subgradient at exactly zero is zero.
    pub fn backward(&self, tape: GradientTape, d_y: &Array2<f64>) -> Result<Vec<LayerGrads>> {
        let n_layers = self.layers.len();
        if tape.inputs.len() != n_layers {
            return Err(Error::ShapeMismatch {
                expected: format!("tape over {n_layers} layers"),
                got: format!("{}", tape.inputs.len()),
            });
        }
        let expected = (tape.inputs[0].nrows(), self.out_dim());
        if d_y.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", expected.0, expected.1),
                got: format!("{}x{}", d_y.nrows(), d_y.ncols()),
            });
        }
        let mut grads: Vec<Option<LayerGrads>> = (0..n_layers).map(|_| None).collect();
        let mut delta = d_y.clone();
        for l in (0..n_layers).rev() {
            let dw = delta.t().dot(&tape.inputs[l]);
            let db = delta.sum_axis(Axis(0));
            grads[l] = Some(LayerGrads { dw, db });
            if l > 0 {
                let dx = delta.dot(&self.layers[l].w);
                let mask = tape.preacts[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
                delta = dx * &mask;
            }
        }
        Ok(grads.into_iter().map(Option::unwrap).collect())
    }

    /// Scale each layer toward the unit spectral-norm ball using `iters`
    /// power iterations per layer. Biases are untouched; they do not affect
    /// the Lipschitz constant.
    pub fn project_lipschitz(&mut self, iters: usize, mode: LipschitzMode) -> Result<()> {
        if iters == 0 {
            return Err(Error::Config("power iterations must be >= 1".into()));
        }
        self.mode = mode;
        for (index, (layer, state)) in self.layers.iter_mut().zip(self.power.iter_mut()).enumerate()
        {
            let estimate = spectral_norm(&layer.w, iters, state);
            match mode {
                LipschitzMode::Projection => {
                    // Few iterations underestimate; pad the estimate so the
                    // constraint is not left broken.
                    let padded = if iters < 10 { estimate * (1.0 + 1e-3) } else { estimate };
                    if padded > 1.0 {
                        layer.w.mapv_inplace(|v| v / padded);
                    }
                }
                LipschitzMode::AlwaysNormalize => {
                    if estimate == 0.0 {
                        return Err(Error::ZeroLayer { index });
                    }
                    layer.w.mapv_inplace(|v| v / estimate);
                }
            }
        }
        Ok(())
    }

    /// Current per-layer spectral-norm estimates (warm state, read-mostly).
    pub fn layer_norm_estimates(&mut self, iters: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, state) in self.layers.iter().zip(self.power.iter_mut()) {
            out.push(spectral_norm(&layer.w, iters, state));
        }
        out
    }

    /// Empirical Lipschitz ratio over random Gaussian pairs.
    pub fn lipschitz_check(&self, n_pairs: usize, seed: u64) -> Result<f64> {
        if n_pairs == 0 {
            return Err(Error::Config("n_pairs must be >= 1".into()));
        }
        let d = self.in_dim();
        let mut rng = rng_from_seed(seed);
        let xs = Array2::from_shape_fn((2 * n_pairs, d), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let ys = self.apply_batch(&xs)?;
        let mut max_ratio = 0.0f64;
        for p in 0..n_pairs {
            let (i, j) = (2 * p, 2 * p + 1);
            let dx: f64 = (0..d).map(|c| (xs[[i, c]] - xs[[j, c]]).powi(2)).sum::<f64>().sqrt();
            if dx == 0.0 {
                continue;
            }
            let dy: f64 = (0..self.out_dim())
                .map(|c| (ys[[i, c]] - ys[[j, c]]).powi(2))
                .sum::<f64>()
                .sqrt();
            max_ratio = max_ratio.max(dy / dx);
        }
        Ok(max_ratio)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let layers: Vec<LayerJson> = self
            .layers
            .iter()
            .map(|l| LayerJson {
                w: l.w.iter().copied().collect(),
                b: l.b.to_vec(),
            })
            .collect();
        serde_json::to_value(ProjectorJson {
            dims: self.dims(),
            layers,
            mode: self.mode,
            seed: self.seed,
        })
        .expect("projector serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ProjectorJson = serde_json::from_value(value.clone())
            .map_err(|e| Error::Parse(format!("projector json: {e}")))?;
        if doc.dims.len() < 2 || doc.layers.len() != doc.dims.len() - 1 {
            return Err(Error::BadDims);
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, lj) in doc.layers.iter().enumerate() {
            let (d_out, d_in) = (doc.dims[l + 1], doc.dims[l]);
            if lj.w.len() != d_out * d_in || lj.b.len() != d_out {
                return Err(Error::BadDims);
            }
            let w = Array2::from_shape_vec((d_out, d_in), lj.w.clone())
                .map_err(|e| Error::Parse(e.to_string()))?;
            layers.push(Layer { w, b: Array1::from(lj.b.clone()) });
        }
        let mut p = Self::from_layers(layers, doc.seed)?;
        p.mode = doc.mode;
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct ProjectorJson {
    dims: Vec<usize>,
    layers: Vec<LayerJson>,
    mode: LipschitzMode,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    /// Row-major `[out × in]` weights.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl PointMap for MLPProjector {
    fn in_dim(&self) -> usize {
        MLPProjector::in_dim(self)
    }
    fn out_dim(&self) -> usize {
        MLPProjector::out_dim(self)
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let row = x.insert_axis(Axis(0)).to_owned();
        self.apply_batch(&row)
            .expect("dims validated by pushforward")
            .row(0)
            .to_owned()
    }
}

/// Power-method estimate of the largest singular value of `w`.
///
/// The estimate never exceeds the true norm and is nondecreasing in `iters`
/// for a fixed starting state. Zero matrices return 0.
pub fn spectral_norm(w: &Array2<f64>, iters: usize, state: &mut PowerState) -> f64 {
    debug_assert!(state.u.len() == w.nrows() && state.v.len() == w.ncols());
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        estimate = power_iteration_step(w, &mut state.u, &mut state.v);
        if estimate == 0.0 {
            return 0.0;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// One-sided Jacobi SVD: orthogonalize column pairs until the Gram
    /// matrix is diagonal; singular values are the column norms. Test-only
    /// oracle, independent of the power-iteration path.
    fn jacobi_largest_singular_value(a: &Array2<f64>) -> f64 {
        let mut m = a.clone();
        let n = m.ncols();
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    let col_p = m.column(p).to_owned();
                    let col_q = m.column(q).to_owned();
                    let alpha: f64 = col_p.dot(&col_p);
                    let beta: f64 = col_q.dot(&col_q);
                    let gamma: f64 = col_p.dot(&col_q);
                    off = off.max(gamma.abs());
                    if gamma.abs() <= 1e-14 * (alpha * beta).sqrt().max(1e-300) {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for r in 0..m.nrows() {
                        let vp = m[[r, p]];
                        let vq = m[[r, q]];
                        m[[r, p]] = c * vp - s * vq;
                        m[[r, q]] = s * vp + c * vq;
                    }
                }
            }
            if off <= 1e-13 {
                break;
            }
        }
        (0..n)
            .map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn fresh_state(w: &Array2<f64>, seed: u64) -> PowerState {
        let mut rng = rng_from_seed(seed);
        PowerState::random(w.nrows(), w.ncols(), &mut rng)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = init_mlp(&[10, 16, 5], 10.0, 7).unwrap();
        assert_eq!(p.layers()[0].w.dim(), (16, 10));
        assert_eq!(p.layers()[1].w.dim(), (5, 16));
        assert!(p.layers().iter().all(|l| l.b.iter().all(|&v| v == 0.0)));
        let q = init_mlp(&[10, 16, 5], 10.0, 7).unwrap();
        assert_eq!(p.layers(), q.layers());
    }

    #[test]
    fn zero_std_gives_zero_map() {
        let p = init_mlp(&[3, 3], 0.0, 1).unwrap();
        let x = array![[1.0, -2.0, 3.0]];
        let (y, _) = p.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_dims_rejected() {
        assert!(matches!(init_mlp(&[3], 1.0, 0), Err(Error::BadDims)));
        assert!(matches!(init_mlp(&[3, 0, 2], 1.0, 0), Err(Error::BadDims)));
    }

    #[test]
    fn identity_layer_forwards_input() {
        let p = MLPProjector::from_layers(
            vec![Layer { w: Array2::eye(3), b: Array1::zeros(3) }],
            0,
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 0.5]];
        let (y, _) = p.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_clips_hand_case() {
        // dims [1,1,1]: W1=[[1]], b1=[-1], W2=[[1]], b2=[0]; x=0.5 -> 0.
        let p = MLPProjector::from_layers(
            vec![
                Layer { w: array![[1.0]], b: array![-1.0] },
                Layer { w: array![[1.0]], b: array![0.0] },
            ],
            0,
        )
        .unwrap();
        let (y, _) = p.forward(&array![[0.5]]).unwrap();
        assert_eq!(y[[0, 0]], 0.0);
    }

    #[test]
    fn normalized_row_reaches_sqrt2() {
        let s = 1.0 / 2.0f64.sqrt();
        let p = MLPProjector::from_layers(
            vec![Layer { w: array![[s, s]], b: array![0.0] }],
            0,
        )
        .unwrap();
        let (y, _) = p.forward(&array![[1.0, 1.0]]).unwrap();
        assert!((y[[0, 0]] - 2.0f64.sqrt()).abs() <= 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_mlp(&[4, 6, 2], 1.0, 3).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64 * 0.1 - 0.7);
        let (_, tape) = p.forward(&x).unwrap();
        let grads = p.backward(tape, &Array2::zeros((5, 2))).unwrap();
        assert!(grads
            .iter()
            .all(|g| g.dw.iter().all(|&v| v == 0.0) && g.db.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_layer_sum_loss_hand_gradient() {
        let p = MLPProjector::from_layers(
            vec![Layer { w: array![[0.3, -0.2], [0.1, 0.4]], b: array![0.0, 0.0] }],
            0,
        )
        .unwrap();
        let x = array![[2.0, -1.0]];
        let (_, tape) = p.forward(&x).unwrap();
        let grads = p.backward(tape, &Array2::ones((1, 2))).unwrap();
        assert_eq!(grads[0].dw, array![[2.0, -1.0], [2.0, -1.0]]);
        assert_eq!(grads[0].db, array![1.0, 1.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(99);
        let p = init_mlp(&[3, 5, 2], 0.8, 15).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.sample::<f64, _>(StandardNormal));
        // Keep pre-activations away from the ReLU kink.
        let (_, tape_probe) = p.forward(&x).unwrap();
        assert!(tape_probe.preacts[0].iter().all(|z| z.abs() > 1e-4));
        let coeff = Array2::from_shape_fn((4, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let loss = |proj: &MLPProjector| -> f64 {
            let y = proj.apply_batch(&x).unwrap();
            (&y * &coeff).sum()
        };
        let (_, tape) = p.forward(&x).unwrap();
        let grads = p.backward(tape, &coeff).unwrap();

        let h = 1e-5;
        for l in 0..2 {
            let w_dim = p.layers()[l].w.dim();
            for r in 0..w_dim.0 {
                for c in 0..w_dim.1 {
                    let mut pp = p.clone();
                    pp.layers_mut()[l].w[[r, c]] += h;
                    let mut pm = p.clone();
                    pm.layers_mut()[l].w[[r, c]] -= h;
                    let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                    let an = grads[l].dw[[r, c]];
                    assert!(
                        (fd - an).abs() / fd.abs().max(1e-6) <= 1e-5,
                        "layer {l} w[{r},{c}]: fd {fd} vs {an}"
                    );
                }
            }
            for r in 0..p.layers()[l].b.len() {
                let mut pp = p.clone();
                pp.layers_mut()[l].b[r] += h;
                let mut pm = p.clone();
                pm.layers_mut()[l].b[r] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let an = grads[l].db[r];
                assert!(
                    (fd - an).abs() / fd.abs().max(1e-6) <= 1e-5,
                    "layer {l} b[{r}]: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn spectral_norm_diagonal() {
        let w = array![[2.0, 0.0], [0.0, 1.0]];
        let mut state = fresh_state(&w, 5);
        let est = spectral_norm(&w, 10, &mut state);
        assert!((est - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn spectral_norm_identity_one_iteration() {
        let w = Array2::eye(3);
        let mut state = fresh_state(&w, 6);
        assert_eq!(spectral_norm(&w, 1, &mut state), 1.0);
    }

    #[test]
    fn spectral_norm_zero_matrix() {
        let w = Array2::zeros((3, 2));
        let mut state = fresh_state(&w, 7);
        assert_eq!(spectral_norm(&w, 4, &mut state), 0.0);
    }

    #[test]
    fn spectral_norm_matches_jacobi_oracle() {
        let mut rng = rng_from_seed(321);
        let w = Array2::from_shape_fn((16, 10), |_| rng.sample::<f64, _>(StandardNormal));
        let truth = jacobi_largest_singular_value(&w);
        let mut state = fresh_state(&w, 8);
        let est = spectral_norm(&w, 20, &mut state);
        assert!(
            (est - truth).abs() / truth <= 1e-4,
            "power {est} vs jacobi {truth}"
        );
        assert!(est <= truth + 1e-9, "estimate must lower-bound the norm");
    }

    #[test]
    fn spectral_norm_monotone_in_iters() {
        let mut rng = rng_from_seed(321);
        let w = Array2::from_shape_fn((8, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let mut state = fresh_state(&w, 9);
        let mut prev = 0.0;
        for _ in 0..15 {
            let est = spectral_norm(&w, 1, &mut state);
            assert!(est >= prev - 1e-12);
            prev = est;
        }
    }

    #[test]
    fn projection_rescales_large_layers_only() {
        let mut rng = rng_from_seed(55);
        let raw = Array2::from_shape_fn((4, 4), |_| rng.sample::<f64, _>(StandardNormal));
        for target in [3.0, 0.5] {
            let mut state = fresh_state(&raw, 60);
            let norm = spectral_norm(&raw, 200, &mut state);
            let w = raw.mapv(|v| v * target / norm);
            let mut p = MLPProjector::from_layers(
                vec![Layer { w: w.clone(), b: Array1::zeros(4) }],
                0,
            )
            .unwrap();
            p.project_lipschitz(50, LipschitzMode::Projection).unwrap();
            let mut check = fresh_state(&p.layers()[0].w, 61);
            let after = spectral_norm(&p.layers()[0].w, 200, &mut check);
            if target > 1.0 {
                assert!((after - 1.0).abs() <= 1e-6, "norm {after}");
            } else {
                assert_eq!(p.layers()[0].w, w, "contractive layer must be untouched");
            }

            let mut q = MLPProjector::from_layers(
                vec![Layer { w: w.clone(), b: Array1::zeros(4) }],
                0,
            )
            .unwrap();
            q.project_lipschitz(50, LipschitzMode::AlwaysNormalize).unwrap();
            let mut check = fresh_state(&q.layers()[0].w, 62);
            let after = spectral_norm(&q.layers()[0].w, 200, &mut check);
            assert!((after - 1.0).abs() <= 1e-6, "always-normalize norm {after}");
        }
    }

    #[test]
    fn always_normalize_rejects_zero_layer() {
        let mut p = init_mlp(&[3, 2], 0.0, 1).unwrap();
        assert!(matches!(
            p.project_lipschitz(5, LipschitzMode::AlwaysNormalize),
            Err(Error::ZeroLayer { index: 0 })
        ));
    }

    #[test]
    fn projection_is_idempotent() {
        let mut p = init_mlp(&[6, 8, 3], 4.0, 77).unwrap();
        p.project_lipschitz(30, LipschitzMode::Projection).unwrap();
        let snapshot: Vec<Array2<f64>> = p.layers().iter().map(|l| l.w.clone()).collect();
        p.project_lipschitz(30, LipschitzMode::Projection).unwrap();
        for (before, layer) in snapshot.iter().zip(p.layers()) {
            let num: f64 = (&layer.w - before).iter().map(|v| v * v).sum::<f64>().sqrt();
            let den: f64 = before.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num / den <= 1e-6, "relative change {}", num / den);
        }
    }

    #[test]
    fn lipschitz_check_zero_and_identity() {
        let zero = init_mlp(&[4, 3], 0.0, 2).unwrap();
        assert_eq!(zero.lipschitz_check(100, 5).unwrap(), 0.0);
        let ident = MLPProjector::from_layers(
            vec![Layer { w: Array2::eye(4), b: Array1::zeros(4) }],
            0,
        )
        .unwrap();
        let ratio = ident.lipschitz_check(100, 5).unwrap();
        assert!((ratio - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn projected_net_is_nonexpansive_empirically() {
        let mut p = init_mlp(&[10, 16, 5], 20.0, 31).unwrap();
        p.project_lipschitz(20, LipschitzMode::Projection).unwrap();
        let ratio = p.lipschitz_check(10_000, 32).unwrap();
        assert!(ratio <= 1.001, "ratio {ratio}");
    }

    #[test]
    fn per_layer_norm_product_bounds_observed_ratio() {
        let mut p = init_mlp(&[6, 12, 4], 2.0, 41).unwrap();
        let product: f64 = p.layer_norm_estimates(100).iter().product();
        let observed = p.lipschitz_check(2000, 42).unwrap();
        assert!(observed <= product * (1.0 + 1e-9), "{observed} vs {product}");
    }

    #[test]
    fn json_round_trip() {
        let mut p = init_mlp(&[5, 7, 2], 3.0, 13).unwrap();
        p.mode = LipschitzMode::AlwaysNormalize;
        let doc = p.to_json();
        let q = MLPProjector::from_json(&doc).unwrap();
        assert_eq!(p.layers(), q.layers());
        assert_eq!(q.mode, LipschitzMode::AlwaysNormalize);
        assert_eq!(q.seed, 13);
    }
}
