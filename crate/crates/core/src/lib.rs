//! Numerical laboratory for Hörmander-type oscillatory integral operators
//! `T^λ f(x) = ∫ e^{2πiφ^λ(x;ω)} a^λ(x;ω) f(ω) dω`.
//!
//! Modules follow the objects they build: phases, sampled fields, wave
//! packets and tubes, algebraic varieties, k-broad norms, scaling
//! experiments and exact exponent tables.

pub mod amplitude;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod field;
pub mod kbroad;
pub mod numerics;
pub mod phase;
pub mod poly;
pub mod variety;
pub mod wavepacket;

pub use error::{Error, Result};
