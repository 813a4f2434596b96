//! Power-minimal transceiver design for two-hop amplify-and-forward
//! MIMO relay links under per-stream error targets.
//!
//! The crate is organized around the diagonal structure of the optimal
//! design: both hops are reduced to parallel subchannels, per-stream
//! loads are chosen by closed-form allocators or certified numerical
//! oracles, and the resulting matrices are assembled for either a linear
//! receiver or a decision-feedback receiver.
//!
//! Capabilities:
//!
//! * channel generation, file I/O, and reduction to per-hop subchannel
//!   gains ([`channel`]);
//! * per-stream power curves, closed-form allocation, and analytic lower
//!   bounds for the linear receiver ([`linear`]);
//! * the same machinery in the log-MSE domain for the decision-feedback
//!   receiver ([`nonlinear`]);
//! * independent numerical oracles: a certified convex solver, an
//!   exhaustive grid search, and an alternating refinement
//!   ([`oracles`]);
//! * QoS bookkeeping and per-stream constants ([`qos`]);
//! * assembly of the actual precoder, relay, equalizer, and feedback
//!   matrices with trace-level power and MSE cross-checks
//!   ([`transceiver`]);
//! * paired Monte Carlo sweeps over noise levels and target grids with
//!   deterministic CSV reports ([`sweep`]);
//! * a self-check battery that exercises the analytic constants, root
//!   residuals, bound sandwiches, and matrix identities ([`verify`]).

pub mod channel;
pub mod error;
pub mod linear;
pub mod nonlinear;
pub mod oracles;
pub mod qos;
pub mod sweep;
pub mod transceiver;
pub mod verify;

pub use channel::{decompose, generate_channel, generate_channel_for_trial};
pub use channel::{ChannelEigen, ChannelRealization};
pub use error::{Error, Result};
pub use linear::{
    allocation_from_lambda, check_convexity_condition, gamma_from_gains, hyperbola_coeffs,
    lower_bound_linear, per_stream_power, solve_hyperbola, Allocation,
};
pub use nonlinear::{
    allocation_from_theta, lower_bound_nonlinear, q_function, solve_exponential, ThetaAllocation,
};
pub use oracles::{
    alternating_ab, convex_solve, grid_search, AlternatingRun, FeasibleRegion, GridProblem,
    OracleResult, SeparableObjective, SolverConfig,
};
pub use qos::{QosVector, StreamProfile};
pub use sweep::{emit_csv, run_sweep, Method, SweepConfig, SweepRow, CSV_HEADER};
pub use transceiver::{
    build_dfe, build_linear, mse_matrix, rotation_equal_qos, total_power_matrices,
    TransceiverMatrices,
};
pub use verify::{run_battery, CheckReport};
