//! Loss-sensitive GANs (LS-GAN) and the generalized family GLS-GAN at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffnet`]: a small multilayer perceptron with exact first derivatives and the
//!   forward-over-reverse product needed for the input-gradient penalty.
//! - [`objectives`]: margins, the leaky cost family `C_nu`, loss/generator objectives and
//!   the conditional / semi-supervised losses.
//! - [`trainer`]: Adam, schedules, alternating updates, checkpoints.
//! - [`nonparam`]: the linear program for the optimal non-parametric loss values and its
//!   cone-shaped bound functions.
//! - [`synthdata`]: synthetic distributions with closed-form densities.
//! - [`evalkit`]: MRE, histogram TV distance, Lipschitz estimates, objective gaps, accuracy.
//! - [`cli`]: the command implementations behind the `lsgan` binary.

pub mod cli;
pub mod diffnet;
pub mod error;
pub mod evalkit;
pub mod nonparam;
pub mod objectives;
pub mod rng;
pub mod simplex;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
