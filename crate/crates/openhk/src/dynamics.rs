//! Agent population state and the piecewise-linear opinion flow.
//!
//! Agents hold scalar opinions and attract each other pairwise whenever their
//! opinions differ by strictly less than the confidence threshold (normalized
//! to 1; rescale opinions to model other thresholds). Between changes of the
//! interaction graph the flow is linear. The integrator freezes the topology
//! at the start of each step and locates the instants at which the edge set
//! changes by bisection, so that switch events carry accurate times and the
//! states straddling each switch are available for jump bookkeeping.

use thiserror::Error;

/// Confidence threshold of the interaction rule, fixed by normalization.
pub const CONFIDENCE: f64 = 1.0;

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Guaranteed accuracy (in time) of refined switch instants.
pub const SWITCH_TIME_TOL: f64 = 1e-9;

// Internal bisection bracket width. Tighter than SWITCH_TIME_TOL so that
// functionals evaluated on the straddling states see a clean jump.
const BRACKET_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("non-finite opinion encountered at t = {time}")]
    NonFinite { time: f64 },
    #[error("integration step must be positive and finite, got {step}")]
    InvalidStep { step: f64 },
    #[error("integration horizon must be non-negative and finite, got {horizon}")]
    InvalidHorizon { horizon: f64 },
}

/// Agent label, unique across the whole history of one realization.
/// Labels of departed agents are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u64);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub opinion: f64,
    /// Time the agent joined the system (0 for the initial population).
    pub t_arrival: f64,
}

/// Snapshot of the population at one instant.
///
/// Agents are kept sorted by opinion (ties broken by id); every operation
/// preserves this order. A state is a plain value: clone it freely, there is
/// no shared mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    time: f64,
    agents: Vec<Agent>,
    next_id: u64,
}

fn agent_order(a: &Agent, b: &Agent) -> std::cmp::Ordering {
    a.opinion.total_cmp(&b.opinion).then(a.id.cmp(&b.id))
}

impl SystemState {
    pub fn new(time: f64, mut agents: Vec<Agent>) -> Self {
        agents.sort_by(agent_order);
        let next_id = agents.iter().map(|a| a.id.0 + 1).max().unwrap_or(0);
        SystemState { time, agents, next_id }
    }

    /// State with agents labeled 0.. in the given draw order, then sorted.
    pub fn from_opinions(time: f64, opinions: &[f64]) -> Self {
        let agents = opinions
            .iter()
            .enumerate()
            .map(|(i, &x)| Agent { id: AgentId(i as u64), opinion: x, t_arrival: time })
            .collect();
        Self::new(time, agents)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Opinions in sorted order.
    pub fn opinions(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.opinion).collect()
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub(crate) fn allocate_id(&mut self) -> AgentId {
        let id = AgentId(self.next_id);
        self.next_id += 1;
        id
    }

    pub(crate) fn insert(&mut self, agent: Agent) {
        let pos = self
            .agents
            .partition_point(|a| agent_order(a, &agent) == std::cmp::Ordering::Less);
        self.agents.insert(pos, agent);
        self.next_id = self.next_id.max(agent.id.0 + 1);
    }

    pub(crate) fn remove(&mut self, index: usize) -> Agent {
        self.agents.remove(index)
    }

    /// Same agents with new opinions (index-aligned), re-sorted.
    fn with_opinions(&self, opinions: &[f64], time: f64) -> Self {
        debug_assert_eq!(opinions.len(), self.agents.len());
        let mut agents: Vec<Agent> = self
            .agents
            .iter()
            .zip(opinions)
            .map(|(a, &x)| Agent { opinion: x, ..*a })
            .collect();
        agents.sort_by(agent_order);
        SystemState { time, agents, next_id: self.next_id }
    }
}

/// Interaction graph of a sorted state. In sorted order the neighbors of
/// agent `i` form a contiguous index window around `i`, so the edge set is
/// stored as per-agent window bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl InteractionGraph {
    pub fn n(&self) -> usize {
        self.lo.len()
    }

    /// Inclusive index window of agents interacting with `i` (contains `i`).
    pub fn neighbor_window(&self, i: usize) -> (usize, usize) {
        (self.lo[i], self.hi[i])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.hi[i] - self.lo[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.lo[i] <= j && j <= self.hi[i]
    }

    /// Number of unordered edges.
    pub fn edge_count(&self) -> usize {
        self.hi.iter().enumerate().map(|(i, &h)| h - i).sum()
    }

    /// Unordered edges (i, j) with i < j.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.hi
            .iter()
            .enumerate()
            .flat_map(|(i, &h)| (i + 1..=h).map(move |j| (i, j)))
    }

    fn same_edges(&self, other: &InteractionGraph) -> bool {
        self.hi == other.hi
    }
}

pub(crate) fn graph_of_sorted(x: &[f64]) -> InteractionGraph {
    let n = x.len();
    let mut lo = vec![0; n];
    let mut hi = vec![0; n];
    let mut j = 0;
    for i in 0..n {
        while x[i] - x[j] >= CONFIDENCE {
            j += 1;
        }
        lo[i] = j;
    }
    let mut j = 0;
    for i in 0..n {
        if j < i {
            j = i;
        }
        while j + 1 < n && x[j + 1] - x[i] < CONFIDENCE {
            j += 1;
        }
        hi[i] = j;
    }
    InteractionGraph { lo, hi }
}

/// Edges present in `new` but not `old`, and vice versa. Both graphs must
/// refer to the same agents in the same sorted order.
fn edge_diff(old: &InteractionGraph, new: &InteractionGraph) -> (usize, usize) {
    let mut added = 0;
    let mut removed = 0;
    for i in 0..old.n() {
        let (o, n) = (old.hi[i], new.hi[i]);
        if n > o {
            added += n - o;
        } else {
            removed += o - n;
        }
    }
    (added, removed)
}

pub fn build_interaction_graph(state: &SystemState) -> InteractionGraph {
    graph_of_sorted(&state.opinions())
}

/// Clusters (connected components of the interaction graph) of a sorted
/// state: maximal runs of consecutive agents with adjacent gaps < 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    ranges: Vec<std::ops::Range<usize>>,
    sizes: Vec<usize>,
    means: Vec<f64>,
}

impl ClusterPartition {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[std::ops::Range<usize>] {
        &self.ranges
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn iter(&self) -> impl Iterator<Item = (&std::ops::Range<usize>, usize, f64)> + '_ {
        self.ranges
            .iter()
            .zip(&self.sizes)
            .zip(&self.means)
            .map(|((r, &s), &m)| (r, s, m))
    }
}

pub(crate) fn clusters_of_sorted(x: &[f64]) -> ClusterPartition {
    let n = x.len();
    let mut ranges = Vec::new();
    let mut sizes = Vec::new();
    let mut means = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || x[i] - x[i - 1] >= CONFIDENCE {
            let sum: f64 = x[start..i].iter().sum();
            ranges.push(start..i);
            sizes.push(i - start);
            means.push(sum / (i - start) as f64);
            start = i;
        }
    }
    ClusterPartition { ranges, sizes, means }
}

pub fn find_clusters(state: &SystemState) -> ClusterPartition {
    clusters_of_sorted(&state.opinions())
}

fn rhs_frozen(x: &[f64], g: &InteractionGraph, prefix: &mut [f64], out: &mut [f64]) {
    let n = x.len();
    prefix[0] = 0.0;
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    for i in 0..n {
        let (lo, hi) = (g.lo[i], g.hi[i]);
        let count = (hi + 1 - lo) as f64;
        // the window includes i itself, which contributes zero
        out[i] = (prefix[hi + 1] - prefix[lo]) - count * x[i];
    }
}

/// Velocity of every agent under the current interaction graph.
pub fn hk_rhs(state: &SystemState) -> Vec<f64> {
    let x = state.opinions();
    let g = graph_of_sorted(&x);
    let mut prefix = vec![0.0; x.len() + 1];
    let mut out = vec![0.0; x.len()];
    rhs_frozen(&x, &g, &mut prefix, &mut out);
    out
}

struct StepScratch {
    prefix: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl StepScratch {
    fn new(n: usize) -> Self {
        StepScratch {
            prefix: vec![0.0; n + 1],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }
}

/// One classic Runge-Kutta step of size `dt` with the topology frozen to `g`.
fn rk4_frozen(x: &[f64], g: &InteractionGraph, dt: f64, s: &mut StepScratch, out: &mut Vec<f64>) {
    let n = x.len();
    rhs_frozen(x, g, &mut s.prefix, &mut s.k1);
    for (i, &xi) in x.iter().enumerate() {
        s.stage[i] = xi + 0.5 * dt * s.k1[i];
    }
    rhs_frozen(&s.stage, g, &mut s.prefix, &mut s.k2);
    for (i, &xi) in x.iter().enumerate() {
        s.stage[i] = xi + 0.5 * dt * s.k2[i];
    }
    rhs_frozen(&s.stage, g, &mut s.prefix, &mut s.k3);
    for (i, &xi) in x.iter().enumerate() {
        s.stage[i] = xi + dt * s.k3[i];
    }
    rhs_frozen(&s.stage, g, &mut s.prefix, &mut s.k4);
    out.clear();
    out.extend(
        (0..n).map(|i| x[i] + dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i])),
    );
}

/// A change of the interaction graph's edge set along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub edges_added: usize,
    pub edges_removed: usize,
}

/// A switch event together with the states straddling it. The two states are
/// separated by less than [`SWITCH_TIME_TOL`] in time; `before` still carries
/// the old edge set and `after` the new one.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub event: SwitchEvent,
    pub before: SystemState,
    pub after: SystemState,
}

/// True iff every pair is either together (within `tol`) or separated by at
/// least `1 - tol`.
pub fn is_equilibrium(state: &SystemState, tol: f64) -> bool {
    let x = state.opinions();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let gap = (x[j] - x[i]).abs();
            if gap > tol && gap < CONFIDENCE - tol {
                return false;
            }
        }
    }
    true
}

fn ensure_finite(x: &[f64], time: f64) -> Result<(), DynamicsError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite { time })
    }
}

/// Integrate the flow for `horizon` time units, recording every change of the
/// interaction graph together with the states straddling it.
///
/// Topology is frozen at the start of each step; when the edge set at the end
/// of a step differs from the start, the earliest crossing is refined by
/// bisection and the remainder of the step continues with the new topology,
/// so simultaneous crossings are processed in time order.
pub fn advance_recording(
    state: &SystemState,
    horizon: f64,
    step: f64,
) -> Result<(SystemState, Vec<SwitchRecord>), DynamicsError> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(DynamicsError::InvalidHorizon { horizon });
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(DynamicsError::InvalidStep { step });
    }
    let x0 = state.opinions();
    ensure_finite(&x0, state.time())?;

    let t_target = state.time() + horizon;
    if state.len() <= 1 || horizon == 0.0 {
        let mut out = state.clone();
        out.set_time(t_target);
        return Ok((out, Vec::new()));
    }

    let n = state.len();
    let mut x = x0;
    let mut scratch = StepScratch::new(n);
    let mut trial = Vec::with_capacity(n);
    let mut probe = Vec::with_capacity(n);
    let mut records = Vec::new();
    let mut remaining = horizon;

    while remaining > 0.0 {
        let dt = step.min(remaining);
        let t_now = t_target - remaining;
        let graph = graph_of_sorted(&x);
        rk4_frozen(&x, &graph, dt, &mut scratch, &mut trial);
        ensure_finite(&trial, t_now)?;
        debug_assert!(trial.windows(2).all(|w| w[0] <= w[1]), "order violated");
        let trial_graph = graph_of_sorted(&trial);
        if trial_graph.same_edges(&graph) {
            std::mem::swap(&mut x, &mut trial);
            remaining -= dt;
            continue;
        }

        // A pair crossed the threshold inside (0, dt]. Bisect for the first
        // instant at which the frozen-flow edge set differs from the start.
        let mut s_lo = 0.0_f64;
        let mut s_hi = dt;
        while s_hi - s_lo > BRACKET_TOL {
            let mid = 0.5 * (s_lo + s_hi);
            if mid <= s_lo || mid >= s_hi {
                break; // f64 resolution exhausted
            }
            rk4_frozen(&x, &graph, mid, &mut scratch, &mut probe);
            if graph_of_sorted(&probe).same_edges(&graph) {
                s_lo = mid;
            } else {
                s_hi = mid;
            }
        }
        rk4_frozen(&x, &graph, s_lo, &mut scratch, &mut probe);
        rk4_frozen(&x, &graph, s_hi, &mut scratch, &mut trial);
        let post_graph = graph_of_sorted(&trial);
        let (added, removed) = edge_diff(&graph, &post_graph);
        let event = SwitchEvent { time: t_now + s_hi, edges_added: added, edges_removed: removed };
        records.push(SwitchRecord {
            event,
            before: state.with_opinions(&probe, t_now + s_lo),
            after: state.with_opinions(&trial, t_now + s_hi),
        });
        std::mem::swap(&mut x, &mut trial);
        remaining -= s_hi;
    }

    Ok((state.with_opinions(&x, t_target), records))
}

/// Like [`advance_recording`] but keeps only the switch events.
pub fn advance(
    state: &SystemState,
    horizon: f64,
    step: f64,
) -> Result<(SystemState, Vec<SwitchEvent>), DynamicsError> {
    let (out, records) = advance_recording(state, horizon, step)?;
    Ok((out, records.into_iter().map(|r| r.event).collect()))
}
