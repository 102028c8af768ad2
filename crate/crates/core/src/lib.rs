//! Hybrid quantum-classical classifiers.
//!
//! A dense encoder maps each input to the angles of a simulated variational
//! circuit; the measured probabilities feed a dense decoder. Gradients cross the
//! classical/quantum boundary by contracting the decoder gradient with the exact
//! circuit Jacobian, so the whole pipeline trains end to end with Adam.

pub mod circuit;
pub mod error;
pub mod hybrid;
pub mod matrix;
pub mod mnist;
pub mod nn;
pub mod runner;
pub mod statevector;

pub use circuit::{
    circuit_count, sample_bound, CircuitLayout, ComplexityQuery, GradientMatrix, GradientMethod,
    HadamardEstimates, OutputSelection, Slot,
};
pub use error::{Error, Result};
pub use hybrid::{MainModel, Middle, MiddleSpec, ModelSpec, Optimizers};
pub use matrix::Matrix;
pub use nn::{
    angle_map, cross_entropy, Activation, AdamState, DenseLayer, ForwardTape, NetGradients, Network,
};
pub use statevector::{GateU1, GateU2, PauliGenerator, StateVector, MAX_QUBITS};
