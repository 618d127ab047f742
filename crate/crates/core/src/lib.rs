//! Membership inference attacks against recommender systems.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: Bessel/gamma functions, Gaussian and vMF KL terms and
//!   samplers, ROC AUC.
//! * [`nn`]: a small dense MLP kernel with hand-written backprop, SGD with
//!   momentum, Adam, and a tensor checkpoint container.
//! * [`data`]: rating datasets, filtering, the shadow/target/extraction
//!   split and a synthetic generator.
//! * [`recommenders`]: ItemBase and LFM recommenders, popularity lists and
//!   the Popularity Randomization defense.
//! * [`diffvec`]: item embeddings by matrix factorization and per-user
//!   difference vectors between history and recommendations.
//! * [`dlmia`]: the disentangled encoder, truth-level score reweighting and
//!   the two-stage training procedure; the biased baseline is a degenerate
//!   configuration of the same stack.
//! * [`experiment`]: configuration, seeding, end-to-end runs, reports and the
//!   verification suite.

pub mod data;
pub mod diffvec;
pub mod dlmia;
pub mod experiment;
pub mod nn;
pub mod numerics;
pub mod recommenders;
pub mod seed;
