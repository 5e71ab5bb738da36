//! ADAM ascent steps and the decaying cyclic learning-rate schedule.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projector::{Layer, LayerGrads};

/// First/second-moment accumulators for per-layer parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl AdamState {
    /// Zeroed state shaped after the given layers. Defaults: β₁ = 0.9,
    /// β₂ = 0.999, δ = 1e-8.
    pub fn new(layers: &[Layer]) -> Self {
        let zeros = |l: &Layer| LayerGrads {
            dw: Array2::zeros(l.w.dim()),
            db: Array1::zeros(l.b.len()),
        };
        Self {
            m: layers.iter().map(zeros).collect(),
            v: layers.iter().map(zeros).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

/// One bias-corrected ADAM step in the ascent direction:
/// `param += lr · m̂ / (√v̂ + δ)`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [Layer],
    grads: &[LayerGrads],
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} layers", state.m.len()),
            got: format!("{} params / {} grads", params.len(), grads.len()),
        });
    }
    for (layer, g) in params.iter().zip(grads) {
        if layer.w.dim() != g.dw.dim() || layer.b.len() != g.db.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", layer.w.dim()),
                got: format!("{:?}", g.dw.dim()),
            });
        }
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for l in 0..params.len() {
        update(
            params[l].w.iter_mut(),
            state.m[l].dw.iter_mut(),
            state.v[l].dw.iter_mut(),
            grads[l].dw.iter(),
            state.beta1,
            state.beta2,
            state.delta,
            bc1,
            bc2,
            lr,
        );
        update(
            params[l].b.iter_mut(),
            state.m[l].db.iter_mut(),
            state.v[l].db.iter_mut(),
            grads[l].db.iter(),
            state.beta1,
            state.beta2,
            state.delta,
            bc1,
            bc2,
            lr,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    ms: impl Iterator<Item = &'a mut f64>,
    vs: impl Iterator<Item = &'a mut f64>,
    gs: impl Iterator<Item = &'a f64>,
    beta1: f64,
    beta2: f64,
    delta: f64,
    bc1: f64,
    bc2: f64,
    lr: f64,
) {
    for (((p, m), v), &g) in params.zip(ms).zip(vs).zip(gs) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p += lr * m_hat / (v_hat.sqrt() + delta);
    }
}

/// Triangular learning-rate wave with amplitude decay per completed cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicLRSchedule {
    pub lr_min: f64,
    pub lr_max: f64,
    /// Steps per full triangle (up and down).
    pub cycle_len: usize,
    /// Amplitude multiplier per completed cycle, in (0, 1].
    pub decay: f64,
}

impl Default for CyclicLRSchedule {
    fn default() -> Self {
        Self { lr_min: 0.1, lr_max: 1.0, cycle_len: 100, decay: 0.9 }
    }
}

/// Learning rate at step `t`: rises from `lr_min` to the current peak at
/// mid-cycle and falls back, with the peak amplitude decayed after each
/// full cycle. Always within `[lr_min, lr_max]`.
pub fn cyclic_lr(schedule: &CyclicLRSchedule, t: usize) -> f64 {
    let cycle_len = schedule.cycle_len.max(1);
    let cycles_done = (t / cycle_len) as i32;
    let phase = (t % cycle_len) as f64;
    let half = cycle_len as f64 / 2.0;
    let tri = if phase <= half { phase / half } else { (cycle_len as f64 - phase) / half };
    let amplitude = (schedule.lr_max - schedule.lr_min) * schedule.decay.powi(cycles_done);
    schedule.lr_min + amplitude * tri
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn scalar_layer(value: f64) -> Layer {
        Layer { w: array![[value]], b: Array1::zeros(1) }
    }

    fn scalar_grad(g: f64) -> LayerGrads {
        LayerGrads { dw: array![[g]], db: Array1::zeros(1) }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut layers = vec![scalar_layer(0.7)];
        let mut state = AdamState::new(&layers);
        adam_step(&mut state, &mut layers, &[scalar_grad(0.0)], 0.5).unwrap();
        assert_eq!(layers[0].w[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_collapses_to_signed_lr() {
        let mut layers = vec![scalar_layer(0.0)];
        let mut state = AdamState::new(&layers);
        adam_step(&mut state, &mut layers, &[scalar_grad(2.0)], 0.1).unwrap();
        // update = 0.1 * 2 / (2 + 1e-8)
        assert!((layers[0].w[[0, 0]] - 0.1).abs() <= 1e-8);
    }

    #[test]
    fn constant_gradient_does_not_amplify() {
        let mut layers = vec![scalar_layer(0.0)];
        let mut state = AdamState::new(&layers);
        adam_step(&mut state, &mut layers, &[scalar_grad(1.5)], 0.1).unwrap();
        let first = layers[0].w[[0, 0]];
        adam_step(&mut state, &mut layers, &[scalar_grad(1.5)], 0.1).unwrap();
        let second = layers[0].w[[0, 0]] - first;
        assert!(second.abs() <= first.abs() * (1.0 + 1e-6));
    }

    #[test]
    fn ascent_follows_gradient_sign() {
        let mut layers = vec![scalar_layer(0.0)];
        let mut state = AdamState::new(&layers);
        adam_step(&mut state, &mut layers, &[scalar_grad(-3.0)], 0.2).unwrap();
        assert!(layers[0].w[[0, 0]] < 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut layers = vec![scalar_layer(0.0)];
        let mut state = AdamState::new(&layers);
        let bad = LayerGrads { dw: Array2::zeros((2, 2)), db: Array1::zeros(2) };
        assert!(matches!(
            adam_step(&mut state, &mut layers, &[bad], 0.1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn scale_equivariant_in_small_delta_limit() {
        let run = |c: f64| -> Vec<f64> {
            let mut layers = vec![scalar_layer(0.0)];
            let mut state = AdamState::new(&layers);
            state.delta = 1e-12;
            let gs = [0.4, -1.1, 0.9, 2.2];
            let mut trace = Vec::new();
            for g in gs {
                adam_step(&mut state, &mut layers, &[scalar_grad(c * g)], 0.1).unwrap();
                trace.push(layers[0].w[[0, 0]]);
            }
            trace
        };
        let base = run(1.0);
        let scaled = run(10.0);
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut layers = vec![scalar_layer(0.3)];
            let mut state = AdamState::new(&layers);
            for g in [0.5, -0.25, 1.0] {
                adam_step(&mut state, &mut layers, &[scalar_grad(g)], 0.05).unwrap();
            }
            layers[0].w[[0, 0]]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn cyclic_lr_hand_values() {
        let s = CyclicLRSchedule { lr_min: 0.1, lr_max: 1.0, cycle_len: 100, decay: 1.0 };
        assert_eq!(cyclic_lr(&s, 0), 0.1);
        assert_eq!(cyclic_lr(&s, 50), 1.0);
        let d = CyclicLRSchedule { decay: 0.5, ..s };
        let lr = cyclic_lr(&d, 250);
        assert!((lr - 0.325).abs() <= 1e-12, "{lr}");
    }

    proptest! {
        #[test]
        fn cyclic_lr_stays_in_bounds(t in 0usize..100_000) {
            let s = CyclicLRSchedule::default();
            let lr = cyclic_lr(&s, t);
            prop_assert!(lr >= s.lr_min - 1e-15);
            prop_assert!(lr <= s.lr_max + 1e-15);
        }
    }
}
