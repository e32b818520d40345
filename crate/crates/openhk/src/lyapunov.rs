//! Disagreement functionals on a population state.
//!
//! Global functionals (U0, V0, T0 and the counting part of W0) compare every
//! agent with every other agent; local functionals (V, U) compare agents only
//! within interaction range or within their cluster. All of them return 0 for
//! populations of size 0 or 1: an open system can momentarily empty, and zero
//! disagreement is the only consistent extension.
//!
//! The implementations deliberately take different routes (direct pair sums
//! for V0 and W0, mean-based forms for U0 and U, a windowed prefix-sum scan
//! for V) so that the algebraic identities between them remain meaningful
//! cross-checks rather than tautologies.

use crate::dynamics::{clusters_of_sorted, SwitchEvent, SystemState, CONFIDENCE};

/// All six functionals evaluated on one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovVector {
    /// Variance about the global mean.
    pub u0: f64,
    /// Mean squared difference over all ordered pairs.
    pub v0: f64,
    /// Half mean square of the opinions.
    pub t0: f64,
    /// Pairwise disagreement of interacting pairs plus the count of
    /// non-interacting ordered pairs, both scaled by 1/n^2.
    pub w0: f64,
    /// Disagreement restricted to interacting ordered pairs, scaled by 1/n^2.
    pub v_local: f64,
    /// Variance about the per-cluster means.
    pub u_local: f64,
}

/// U0: variance of the opinions about their global mean.
pub fn u0(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n <= 1 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

/// V0: mean squared difference over all ordered pairs (including i = j).
pub fn v0(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += (x[i] - x[j]).powi(2);
        }
    }
    sum / (n * n) as f64
}

/// T0: half the mean square of the opinions.
pub fn t0(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / (2.0 * n as f64)
}

/// W0: squared differences of interacting ordered pairs plus a unit penalty
/// per non-interacting ordered pair, scaled by 1/n^2.
pub fn w0(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let gap = (x[i] - x[j]).abs();
            if gap < CONFIDENCE {
                sum += gap * gap;
            } else {
                sum += 1.0;
            }
        }
    }
    sum / (n * n) as f64
}

/// V: squared differences restricted to interacting ordered pairs, 1/n^2.
///
/// Discontinuous at topology switches; the jump is [`v_jump_delta`].
pub fn v_local(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n <= 1 {
        return 0.0;
    }
    // each agent's interacting partners to the right form a contiguous
    // window of the sorted opinions; summing gaps directly keeps full
    // precision where an expanded prefix-sum form would cancel
    let mut sum = 0.0;
    let mut hi = 0usize;
    for i in 0..n {
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && x[hi + 1] - x[i] < CONFIDENCE {
            hi += 1;
        }
        for j in i + 1..=hi {
            sum += (x[j] - x[i]).powi(2);
        }
    }
    // both ordered orientations of each pair
    2.0 * sum / (n * n) as f64
}

/// U: variance of the opinions about their cluster means.
///
/// Non-increasing along the closed flow, including across cluster splits;
/// equals the squared norm of the projection onto the non-zero eigenspace of
/// the interaction Laplacian, scaled by 1/n.
pub fn u_local(state: &SystemState) -> f64 {
    let x = state.opinions();
    let n = x.len();
    if n <= 1 {
        return 0.0;
    }
    let partition = clusters_of_sorted(&x);
    let mut sum = 0.0;
    for (range, _, mean) in partition.iter() {
        sum += x[range.clone()].iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    sum / n as f64
}

/// Exact discontinuity of V at a topology switch: every added edge crossed
/// the threshold at distance exactly 1, contributing 2/n^2 (both ordered
/// orientations), and symmetrically for removed edges.
///
/// # Panics
///
/// Panics if `n == 0`; no switch can occur in an empty system.
pub fn v_jump_delta(event: &SwitchEvent, n: usize) -> f64 {
    assert!(n > 0, "switch event in an empty system");
    2.0 * (event.edges_added as f64 - event.edges_removed as f64) / (n * n) as f64
}

/// All six functionals at once.
pub fn evaluate(state: &SystemState) -> LyapunovVector {
    LyapunovVector {
        u0: u0(state),
        v0: v0(state),
        t0: t0(state),
        w0: w0(state),
        v_local: v_local(state),
        u_local: u_local(state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_interaction_graph, SystemState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(opinions: &[f64]) -> SystemState {
        SystemState::from_opinions(0.0, opinions)
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> SystemState {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0).collect();
        state(&x)
    }

    // Dense Laplacian built pair by pair, used as an independent oracle.
    fn laplacian_quadratic_form(st: &SystemState) -> f64 {
        let x = st.opinions();
        let g = build_interaction_graph(st);
        let n = x.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if g.has_edge(i, j) {
                    // x^T L x = sum over unordered edges of (x_i - x_j)^2
                    if i < j {
                        acc += (x[i] - x[j]).powi(2);
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn u0_examples() {
        assert_eq!(u0(&state(&[0.0, 2.0])), 1.0);
        assert_eq!(u0(&state(&[1.7, 1.7, 1.7, 1.7])), 0.0);
        assert_eq!(u0(&state(&[])), 0.0);
        assert_eq!(u0(&state(&[3.0])), 0.0);
    }

    #[test]
    fn v0_examples() {
        assert_eq!(v0(&state(&[0.0, 2.0])), 2.0);
        assert_eq!(v0(&state(&[0.9, 0.9])), 0.0);
    }

    #[test]
    fn t0_examples() {
        assert_eq!(t0(&state(&[0.0, 2.0])), 1.0);
        assert_eq!(t0(&state(&[0.0])), 0.0);
        assert_eq!(t0(&state(&[])), 0.0);
    }

    #[test]
    fn w0_example_with_far_pairs() {
        // near pairs contribute 2 * 0.25, four ordered far pairs contribute 4
        let val = w0(&state(&[0.0, 0.5, 2.0]));
        assert!((val - 0.5).abs() < 1e-15);
        assert_eq!(w0(&state(&[2.2, 2.2, 2.2])), 0.0);
    }

    #[test]
    fn v_local_examples() {
        let val = v_local(&state(&[0.0, 0.5, 2.0]));
        assert!((val - 1.0 / 18.0).abs() < 1e-15);
        // equilibria interact only at distance zero
        assert_eq!(v_local(&state(&[0.0, 1.5, 1.5, 3.0])), 0.0);
    }

    #[test]
    fn u_local_example() {
        let val = u_local(&state(&[0.0, 0.5, 2.0]));
        assert!((val - 0.125 / 3.0).abs() < 1e-15);
        assert_eq!(u_local(&state(&[0.0, 1.0, 2.0])), 0.0);
    }

    #[test]
    fn empty_and_singleton_conventions() {
        for st in [state(&[]), state(&[4.0])] {
            let l = evaluate(&st);
            assert_eq!(
                (l.u0, l.v0, l.w0, l.v_local, l.u_local),
                (0.0, 0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn relation_identities_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let n = rng.random_range(2..=50);
            let st = random_state(&mut rng, n);
            let l = evaluate(&st);
            let mean = st.opinions().iter().sum::<f64>() / n as f64;
            let scale = l.v0.max(1.0);
            assert!((l.v0 - 2.0 * l.u0).abs() <= 1e-12 * scale);
            assert!((l.v0 - (4.0 * l.t0 - 2.0 * mean * mean)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn w0_decomposes_into_v_plus_far_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let n = rng.random_range(2..=30);
            let st = random_state(&mut rng, n);
            let x = st.opinions();
            let far = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| (x[i] - x[j]).abs() >= 1.0)
                .count();
            let expect = v_local(&st) + far as f64 / (n * n) as f64;
            assert!((w0(&st) - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn w0_dominates_v_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..200 {
            let n = rng.random_range(2..=30);
            let st = random_state(&mut rng, n);
            assert!(w0(&st) >= v_local(&st) - 1e-15);
        }
    }

    #[test]
    fn v_local_equals_scaled_laplacian_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..200 {
            let n = rng.random_range(2..=30);
            let st = random_state(&mut rng, n);
            let expect = 2.0 * laplacian_quadratic_form(&st) / (n * n) as f64;
            assert!((v_local(&st) - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn u_local_never_exceeds_u0() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..200 {
            let n = rng.random_range(2..=30);
            let st = random_state(&mut rng, n);
            assert!(u_local(&st) <= u0(&st) + 1e-15);
        }
    }

    #[test]
    fn jump_delta_examples() {
        let merge = SwitchEvent { time: 0.0, edges_added: 1, edges_removed: 0 };
        assert!((v_jump_delta(&merge, 3) - 2.0 / 9.0).abs() < 1e-15);
        let balanced = SwitchEvent { time: 0.0, edges_added: 2, edges_removed: 2 };
        assert_eq!(v_jump_delta(&balanced, 7), 0.0);
        let split = SwitchEvent { time: 0.0, edges_added: 0, edges_removed: 2 };
        assert_eq!(v_jump_delta(&split, 4), -0.25);
    }

    #[test]
    #[should_panic(expected = "empty system")]
    fn jump_delta_rejects_empty_system() {
        let ev = SwitchEvent { time: 0.0, edges_added: 1, edges_removed: 0 };
        v_jump_delta(&ev, 0);
    }

    #[test]
    fn jump_delta_matches_straddled_states() {
        // three agents begin to interact across the threshold; V jumps by 2/9
        let st = state(&[0.0, 0.9, 1.05]);
        let (_, records) = crate::dynamics::advance_recording(&st, 1.0, 1e-3).unwrap();
        assert!(!records.is_empty());
        let r = &records[0];
        let measured = v_local(&r.after) - v_local(&r.before);
        let predicted = v_jump_delta(&r.event, r.before.len());
        assert!((measured - predicted).abs() < 1e-9, "{measured} vs {predicted}");
        assert!((predicted - 2.0 / 9.0).abs() < 1e-15);
    }
}
