//! Simulation and Lyapunov analysis of bounded-confidence opinion dynamics,
//! closed or open (agents arriving and departing by Poisson processes).
//!
//! - [`dynamics`]: population state, interaction graph, clusters, and the
//!   switched piecewise-linear flow with refined switch detection.
//! - [`lyapunov`]: the global (U0, V0, T0, W0) and local (V, U) disagreement
//!   functionals and the jump law of V at topology switches.
//! - [`open_process`]: exact scheduling of arrivals and departures
//!   interleaved with the flow; one call produces a complete realization.
//! - [`ensemble`]: reproducible parallel Monte Carlo over realizations with
//!   streaming statistics on a fixed time grid.
//! - [`config`] / [`output`]: JSON scenario documents and CSV emission.

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod lyapunov;
pub mod open_process;
pub mod output;

pub use config::{parse_config, Mode, ScenarioConfig};
pub use dynamics::{
    advance, advance_recording, build_interaction_graph, find_clusters, hk_rhs, is_equilibrium,
    Agent, AgentId, ClusterPartition, InteractionGraph, SwitchEvent, SwitchRecord, SystemState,
};
pub use ensemble::{
    aggregate, run_ensemble, run_ensemble_with_threads, sample_on_grid, EnsembleStats,
    ObservableSeries, TimeGrid,
};
pub use lyapunov::{evaluate, v_jump_delta, LyapunovVector};
pub use open_process::{
    apply_arrival, apply_departure, expected_population_limit, sample_next_event,
    simulate_realization, Churn, Event, EventKind, OpinionLaw, RealizationConfig, Trace,
};
