//! Core library for approximating linear dynamic (IIR) controllers by FIR
//! filters, quantizing them to finite integer arithmetic, evaluating them
//! homomorphically at multiplicative depth 1, and running the result in a
//! simulated networked control loop.
//!
//! Module map:
//! - [`lti`]: dense discrete-time state-space algebra and measurements.
//! - [`quant`]: scaling, rounding, Z_q arithmetic, integer controllers and
//!   overflow-horizon prediction.
//! - [`fir`]: FIR approximation of IIR controllers (window method and
//!   H-infinity optimal design via an LMI), operation counting.
//! - [`baseline`]: reset-based and refresh-based reference strategies.
//! - [`he`]: a textbook leveled BFV scheme over `Z_q[X]/(X^n + 1)` plus an
//!   exact mock backend with depth and magnitude accounting.
//! - [`encfir`]: homomorphic evaluation of quantized FIR control laws.
//! - [`sim`]: closed-loop scenario runner, wire protocol, service roles and
//!   latency benchmarking.
//! - [`benchmark`]: the built-in batch-reactor plant and published filter
//!   tap sets used by the demo scenarios.

pub mod baseline;
pub mod benchmark;
pub mod encfir;
pub mod fir;
pub mod he;
pub mod lti;
pub mod quant;
pub mod sim;

#[cfg(test)]
pub(crate) mod test_support;
