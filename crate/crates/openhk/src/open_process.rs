//! Stochastic arrivals and departures interleaved with the continuous flow.
//!
//! Arrivals follow a homogeneous Poisson process with rate `lambda_arrival`;
//! each present agent leaves after an independent exponential clock with rate
//! `lambda_departure`, so the pooled departure process has rate `n(t) *
//! lambda_departure` and the departing agent is uniform among those present.
//! Between population changes both rates are constant, so the next event is
//! scheduled exactly (competing exponential clocks); the only discretization
//! anywhere is the ODE step between events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

use crate::dynamics::{advance, Agent, AgentId, DynamicsError, SystemState};
use crate::ensemble::TimeGrid;
use crate::lyapunov::{self, LyapunovVector};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid realization config: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A bounded opinion distribution given by its quantile function.
#[derive(Clone)]
pub struct OpinionLaw {
    support: (f64, f64),
    quantile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl OpinionLaw {
    /// Uniform law on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        assert!(lo < hi && lo.is_finite() && hi.is_finite(), "invalid support [{lo}, {hi}]");
        OpinionLaw { support: (lo, hi), quantile: Arc::new(move |p| lo + (hi - lo) * p) }
    }

    /// Law given by an arbitrary quantile function with the stated support.
    pub fn from_quantile(
        lo: f64,
        hi: f64,
        quantile: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(lo < hi && lo.is_finite() && hi.is_finite(), "invalid support [{lo}, {hi}]");
        OpinionLaw { support: (lo, hi), quantile: Arc::new(quantile) }
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        (self.quantile)(rng.random::<f64>())
    }
}

impl std::fmt::Debug for OpinionLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpinionLaw").field("support", &self.support).finish()
    }
}

/// Arrival/departure rates and the law of arriving opinions.
#[derive(Debug, Clone)]
pub struct Churn {
    /// Arrivals per unit time.
    pub lambda_arrival: f64,
    /// Departure rate of each present agent.
    pub lambda_departure: f64,
    pub arrival_law: OpinionLaw,
}

/// Everything one realization needs: initial population, horizon, integrator
/// step, sampling grid, and (for open systems) the churn process.
#[derive(Debug, Clone)]
pub struct RealizationConfig {
    pub n0: usize,
    pub init_law: OpinionLaw,
    pub t_end: f64,
    pub step: f64,
    pub grid: TimeGrid,
    /// `None` runs the closed system.
    pub churn: Option<Churn>,
}

impl RealizationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(format!("step must be positive, got {}", self.step));
        }
        if self.grid.t0() != 0.0 || self.grid.t_end() != self.t_end {
            return Err(format!(
                "grid [{}, {}] must span [0, {}]",
                self.grid.t0(),
                self.grid.t_end(),
                self.t_end
            ));
        }
        if let Some(churn) = &self.churn {
            if !(churn.lambda_arrival.is_finite() && churn.lambda_arrival > 0.0) {
                return Err(format!(
                    "lambda_arrival must be positive, got {}",
                    churn.lambda_arrival
                ));
            }
            if !(churn.lambda_departure.is_finite() && churn.lambda_departure > 0.0) {
                return Err(format!(
                    "lambda_departure must be positive, got {}",
                    churn.lambda_departure
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Departure,
    Switch,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
            EventKind::Switch => "switch",
        }
    }
}

/// One entry of a realization's event log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Absent for switch events.
    pub agent: Option<AgentId>,
    /// Opinion of the arriving or departing agent; absent for switches.
    pub opinion: Option<f64>,
    /// Population size right after the event.
    pub n_after: usize,
}

/// Kind of the next scheduled population change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChurnKind {
    Arrival,
    Departure,
}

/// Waiting time and kind of the next population change, sampled exactly from
/// the competing exponential clocks (total rate `lambda_arrival + n *
/// lambda_departure`). With `n == 0` the result is always an arrival.
pub fn sample_next_event(
    rng: &mut impl Rng,
    lambda_arrival: f64,
    lambda_departure: f64,
    n: usize,
) -> (f64, ChurnKind) {
    debug_assert!(lambda_arrival > 0.0 && lambda_departure > 0.0);
    let total = lambda_arrival + lambda_departure * n as f64;
    let u: f64 = rng.random();
    let dt = -(1.0 - u).ln() / total;
    let v: f64 = rng.random();
    let kind = if v < lambda_arrival / total { ChurnKind::Arrival } else { ChurnKind::Departure };
    (dt, kind)
}

/// Insert a fresh agent with an opinion drawn from `law`.
pub fn apply_arrival(state: &mut SystemState, rng: &mut impl Rng, law: &OpinionLaw) -> Event {
    let opinion = law.sample(rng);
    let id = state.allocate_id();
    state.insert(Agent { id, opinion, t_arrival: state.time() });
    Event {
        time: state.time(),
        kind: EventKind::Arrival,
        agent: Some(id),
        opinion: Some(opinion),
        n_after: state.len(),
    }
}

/// Remove one agent chosen uniformly among those present (equal per-agent
/// exponential clocks make the departing agent uniform).
///
/// # Panics
///
/// Panics on an empty state; the scheduler never emits a departure at n = 0.
pub fn apply_departure(state: &mut SystemState, rng: &mut impl Rng) -> Event {
    assert!(!state.is_empty(), "departure from an empty system");
    let index = rng.random_range(0..state.len());
    let agent = state.remove(index);
    Event {
        time: state.time(),
        kind: EventKind::Departure,
        agent: Some(agent.id),
        opinion: Some(agent.opinion),
        n_after: state.len(),
    }
}

/// Stationary mean of the population birth-death chain.
pub fn expected_population_limit(lambda_arrival: f64, lambda_departure: f64) -> f64 {
    debug_assert!(lambda_arrival > 0.0 && lambda_departure > 0.0);
    lambda_arrival / lambda_departure
}

/// State snapshot taken at one grid time (right-continuous: the post-event
/// state when the grid time coincides with an event).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    pub time: f64,
    pub n: usize,
    pub ids: Vec<AgentId>,
    pub opinions: Vec<f64>,
    pub lyapunov: LyapunovVector,
}

impl GridSample {
    fn capture(state: &SystemState) -> Self {
        GridSample {
            time: state.time(),
            n: state.len(),
            ids: state.agents().iter().map(|a| a.id).collect(),
            opinions: state.opinions(),
            lyapunov: lyapunov::evaluate(state),
        }
    }
}

/// One complete realization: the event log, state samples on the grid, and
/// the seed pair that reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub master_seed: u64,
    pub index: u64,
    pub grid: TimeGrid,
    pub events: Vec<Event>,
    pub samples: Vec<GridSample>,
}

fn flow_to(
    state: &mut SystemState,
    t_target: f64,
    step: f64,
    events: &mut Vec<Event>,
) -> Result<(), DynamicsError> {
    let horizon = t_target - state.time();
    if horizon <= 0.0 {
        return Ok(());
    }
    let (next, switches) = advance(state, horizon, step)?;
    *state = next;
    let n = state.len();
    events.extend(switches.into_iter().map(|sw| Event {
        time: sw.time,
        kind: EventKind::Switch,
        agent: None,
        opinion: None,
        n_after: n,
    }));
    Ok(())
}

/// Run one realization. The stream of random draws is fully determined by
/// `(master_seed, index)`, so distinct realizations of an ensemble are
/// independent and any single one can be reproduced in isolation.
pub fn simulate_realization(
    config: &RealizationConfig,
    master_seed: u64,
    index: u64,
) -> Result<Trace, RunError> {
    config.validate().map_err(RunError::Config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);

    let initial: Vec<f64> = (0..config.n0).map(|_| config.init_law.sample(&mut rng)).collect();
    let mut state = SystemState::from_opinions(0.0, &initial);
    let mut events: Vec<Event> = Vec::new();
    let mut samples: Vec<GridSample> = Vec::new();
    let points = config.grid.points().to_vec();
    let mut next_point = 0usize;
    while next_point < points.len() && points[next_point] <= state.time() {
        samples.push(GridSample::capture(&state));
        next_point += 1;
    }

    let mut pending: Option<(f64, ChurnKind)> = config.churn.as_ref().map(|c| {
        let (dt, kind) =
            sample_next_event(&mut rng, c.lambda_arrival, c.lambda_departure, state.len());
        (state.time() + dt, kind)
    });

    loop {
        let fire = match pending {
            Some((t, _)) if t <= config.t_end => Some(t),
            _ => None,
        };
        let t_stop = fire.unwrap_or(config.t_end);
        while next_point < points.len() && points[next_point] < t_stop {
            flow_to(&mut state, points[next_point], config.step, &mut events)?;
            samples.push(GridSample::capture(&state));
            next_point += 1;
        }
        flow_to(&mut state, t_stop, config.step, &mut events)?;

        if fire.is_none() {
            break;
        }
        let (_, kind) = pending.expect("fire implies pending");
        let churn = config.churn.as_ref().expect("pending event implies churn");
        let event = match kind {
            ChurnKind::Arrival => apply_arrival(&mut state, &mut rng, &churn.arrival_law),
            ChurnKind::Departure => apply_departure(&mut state, &mut rng),
        };
        events.push(event);
        // right-continuous sampling: a grid point at the event time sees the
        // post-event state
        while next_point < points.len() && points[next_point] <= state.time() {
            samples.push(GridSample::capture(&state));
            next_point += 1;
        }
        let (dt, kind) =
            sample_next_event(&mut rng, churn.lambda_arrival, churn.lambda_departure, state.len());
        pending = Some((state.time() + dt, kind));
    }

    while next_point < points.len() {
        samples.push(GridSample::capture(&state));
        next_point += 1;
    }

    Ok(Trace { master_seed, index, grid: config.grid.clone(), events, samples })
}
