//! Projected Wasserstein distances between discrete measures.
//!
//! The crate estimates optimal-transport distances in R^d by pushing both
//! measures through a parameterized 1-Lipschitz map into a low-dimensional
//! space, evaluating a debiased Sinkhorn divergence there, and maximizing
//! that value over the map parameters. Because every map in the family is
//! non-expansive, every estimate is a lower bound on the ambient W₂²;
//! the supremum over a rich-enough family approaches it.
//!
//! Modules:
//! - [`measure`]: discrete measures, pushforwards, synthetic samplers
//! - [`sinkhorn`]: log-domain entropic OT with ε-scaling and the debiased
//!   divergence with position gradients
//! - [`exact_ot`]: exact solvers used as ground truth (assignment and a
//!   small transport LP)
//! - [`projector`]: small ReLU networks with manual reverse-mode gradients
//!   and spectral-norm projection onto 1-Lipschitz maps
//! - [`optimizer`]: ADAM ascent steps and the decaying cyclic learning rate
//! - [`gpw`]: the end-to-end maximization driver
//! - [`srw`]: the linear subspace-robust baseline over PSD trace-k matrices

pub mod error;
pub mod exact_ot;
pub mod gpw;
pub mod linalg;
pub mod measure;
pub mod optimizer;
pub mod projector;
pub mod rng;
pub mod sinkhorn;
pub mod srw;

pub use error::{Error, Result};
pub use exact_ot::{exact_ot_bruteforce, exact_w2_uniform, pushforward_equality_check, ExactOTResult};
pub use gpw::{gpw_distance, gpw_lower_bound_audit, GPWConfig, GPWResult};
pub use measure::{
    add_noise, measures_equal, sample_lowrank_gaussian, DiscreteMeasure, GaussianSpec, LinearMap,
    PointMap,
};
pub use optimizer::{adam_step, cyclic_lr, AdamState, CyclicLRSchedule};
pub use projector::{init_mlp, GradientTape, LipschitzMode, MLPProjector};
pub use sinkhorn::{
    cost_matrix, entropic_ot, sinkhorn_divergence, DivergenceResult, SinkhornConfig, SinkhornResult,
};
pub use srw::{displacement_second_moment, project_omega, srw_distance, InnerOt, SrwConfig, SrwResult};
