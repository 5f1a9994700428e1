//! Two-party secure CNN inference over packed homomorphic encryption.
//!
//! The linear layers run permutation-free: the client uploads a
//! receptive-field-expanded encryption of its input, the server multiplies
//! in blinded kernels slotwise and returns an obscured elementwise product,
//! and the client finishes the convolution by summing blocks in plaintext.
//! Nonlinear activations are recovered under the server's key through
//! sign-indicator pairs, then re-shared additively for the next layer.
//!
//! The real-valued core is generic over the scalar type (`f32`/`f64`)
//! through [`real::Real`]; the protocol and CLI run the `f64` aliases
//! exported below.

pub mod crc32;
pub mod fixedpoint;
pub mod modmath;
pub mod nn;
pub mod packing;
pub mod phe;
pub mod protocol;
pub mod real;
pub mod report;
pub mod transport;

pub use real::Real;

/// Concrete aliases for the protocol instantiation.
pub type Tensor64 = nn::Tensor<Scalar>;
pub type Network64 = nn::NetworkSpec<Scalar>;

/// Canonical protocol scalar.
pub type Scalar = f64;
