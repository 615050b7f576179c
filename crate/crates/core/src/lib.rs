//! Matrix-product-state simulation of a ladder three-level emitter coupled to
//! a waveguide, with optional coherent time-delayed feedback, and the Franson
//! two-photon interference of its output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod detection;
pub mod error;
pub mod evolution;
pub mod model;
pub mod oracle;
pub mod tensor;

pub use chain::{BinChain, BinKind, BinLabel, Channel, Path, SiteLabel, Stage};
pub use detection::{
    central_peak, central_peak_height, g2_curve, g2_tau, g2_two_time, visibility, visibility_sweep, G2Grid,
    G2Method, SweepSpec, VisibilityMap, VisibilityResult,
};
pub use error::{Error, Result};
pub use evolution::{
    evolve, excitation_residual, label_for_detection, rearrange_for_detection, set_delay_phase, EvolutionRecord, Evolver,
};
pub use model::{ModelParams, StroboscopicGate};
pub use oracle::AnalyticParams;
pub use tensor::{contract, expm_antihermitian, svd_split, ComplexTensor, SvdSplit, TruncationPolicy, C64};
