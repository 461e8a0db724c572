//! Linear-Gaussian variational encoders and autoencoders.
//!
//! Closed-form stationary points are cross-checked against minibatch training on sampled
//! losses and against Blahut-Arimoto iterations on grids. The exact ELBO decomposition and
//! Gaussian information measures tie them together.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*64` aliases below fix `f64`.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod elbo;
pub mod error;
pub mod gaussian;
pub mod info;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod trainer;

pub use closed_form::{
    achieved_distortion, achieved_rate, rd_curve, solve_beta_ves, solve_vaei, solve_vaes, solve_vei, solve_ves,
    vaei_residuals, vaes_residuals, ves_residuals, FixedPointConfig, RDPoint,
};
pub use elbo::{
    analytic_gradient, breakdown_with_data, density_terms, full_breakdown, objective, GradientSet, LossBreakdown,
    Problem,
};
pub use error::{Error, FixedPointReport, Result};
pub use gaussian::{cross_entropy, entropy, kl_divergence, GaussianDist, JointGaussian, LinearConditional};
pub use info::{
    ba_information_bottleneck, ba_rate_distortion, discrete_measures, info_plane_point, mss_point, DiscreteChannel,
    DiscreteDist, InfoPlanePoint,
};
pub use linalg::{Mat, Vector};
pub use model::{
    autoencoder_chain, bayes_posterior, chain_joint, data_marginal, decoder_joint, encoder_joint, DecoderParams,
    EncoderParams, LinearGaussianModel,
};
pub use scalar::Real;
pub use trainer::{generate_dataset, reparam_sample, train, Optimizer, SampleSet, TrainTrace, TrainerConfig};

pub type GaussianDist64 = GaussianDist<f64>;
pub type GaussianDist32 = GaussianDist<f32>;
pub type JointGaussian64 = JointGaussian<f64>;
pub type LinearGaussianModel64 = LinearGaussianModel<f64>;
pub type LinearGaussianModel32 = LinearGaussianModel<f32>;
pub type EncoderParams64 = EncoderParams<f64>;
pub type EncoderParams32 = EncoderParams<f32>;
pub type DecoderParams64 = DecoderParams<f64>;
pub type DecoderParams32 = DecoderParams<f32>;
pub type LossBreakdown64 = LossBreakdown<f64>;
pub type Problem64 = Problem<f64>;
pub type GradientSet64 = GradientSet<f64>;
pub type TrainTrace64 = TrainTrace<f64>;
pub type SampleSet64 = SampleSet<f64>;
pub type Mat64 = Mat<f64>;
pub type Vector64 = Vector<f64>;
