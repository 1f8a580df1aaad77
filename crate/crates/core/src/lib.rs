//! Generative learning from first principles.
//!
//! The crate is organised bottom-up: [`numcore`] supplies matrices, random
//! numbers and quadrature; [`divergence`] measures distances between
//! distributions; the remaining modules build models that are fitted by
//! maximum likelihood or by one of its surrogates (ELBO, denoising losses,
//! adversarial games, score matching).
//!
//! Conventions: divergences and entropies are reported in bits. Continuous
//! log-densities, neural-network losses and ELBOs are in nats.

pub mod autoregressive;
pub mod config;
pub mod diffusion;
pub mod divergence;
pub mod elbo_vae;
pub mod error;
pub mod gan;
pub mod latent;
pub mod neuralnet;
pub mod numcore;
pub mod regression;
pub mod score;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
