//! Portfolio-style fusion of candidate restorations: weights shift from the
//! blurriest candidate toward the sharpest, one round at a time, until the
//! blended image stops gaining sharpness.

use crate::error::{DeblurError, Result};
use crate::image::Image;
use crate::sharpness::{metric_q, QConfig};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlendConfig {
    /// Minimum per-round Q gain; a smaller gain terminates blending.
    pub eta: f64,
    /// Threshold under which w_0 counts as exhausted.
    pub epsilon_w: f64,
    /// Safety cap on rounds, used when the arithmetic bound degenerates.
    pub max_rounds_cap: usize,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            eta: 1e-4,
            epsilon_w: 1e-6,
            max_rounds_cap: 10_000,
        }
    }
}

/// Candidates ordered by ascending Q with the current weight vector.
#[derive(Debug, Clone)]
pub struct BlendState {
    pub candidates: Vec<Image>,
    pub q_values: Vec<f64>,
    pub weights: Vec<f64>,
    pub round: usize,
    /// Q of each round's blended image, starting with the equal-weight blend.
    pub q_history: Vec<f64>,
}

impl BlendState {
    /// Equal-weight initial state over candidates already sorted by Q.
    pub fn new(candidates: Vec<Image>, q_values: Vec<f64>) -> Self {
        let n = candidates.len();
        BlendState {
            candidates,
            q_values,
            weights: vec![1.0 / n as f64; n],
            round: 0,
            q_history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Termination {
    /// Criterion 1: Q of the next round dropped below the current round.
    QDecreased,
    /// Criterion 2: per-round Q gain fell below eta.
    GainBelowEta,
    /// Criterion 3: w_0 reached (approximately) zero.
    WeightExhausted,
    /// The arithmetic-progression bound (or the safety cap) was reached.
    MaxRounds,
    /// The next round would have driven a weight negative.
    RoundRefused,
    /// Tied or non-positive candidate Q; the blend stays the plain average.
    DegenerateQ,
}

/// Relative Q change delta = (q_q - q_p) / q_p.
pub fn delta(q_p: f64, q_q: f64) -> Result<f64> {
    if q_p <= 0.0 {
        return Err(DeblurError::NonPositiveQ(q_p));
    }
    Ok((q_q - q_p) / q_p)
}

/// One full weight-update pass (iterations i = 1..N-1). At iteration i every
/// still-adjustable weight w_k (k <= N-i-1) gives up delta(Q_k, Q_max) and
/// w_{N-i} collects the sum, so the weights keep summing to 1 exactly.
/// Candidate Q values never change, so the per-round deltas are constant
/// across rounds.
pub fn run_round(state: &BlendState) -> Result<BlendState> {
    let n = state.weights.len();
    let mut next = state.clone();
    if n >= 2 {
        let q_top = state.q_values[n - 1];
        for i in 1..n {
            let mut inc = 0.0;
            for k in 0..n - i {
                let d = delta(state.q_values[k], q_top)?;
                next.weights[k] -= d;
                inc += d;
            }
            next.weights[n - i] += inc;
        }
        if let Some((idx, &w)) = next
            .weights
            .iter()
            .enumerate()
            .find(|(_, w)| **w < 0.0)
        {
            return Err(DeblurError::RoundRefused(idx, w));
        }
    }
    next.round += 1;
    Ok(next)
}

/// Pixel-wise weighted sum of the candidates, clamped to [0, 1].
pub fn compose(state: &BlendState) -> Result<Image> {
    let first = &state.candidates[0];
    let (w, h) = (first.width(), first.height());
    for c in &state.candidates[1..] {
        first.same_dims(c)?;
    }
    let mut out = vec![0.0f64; w * h];
    for (weight, cand) in state.weights.iter().zip(&state.candidates) {
        for (o, v) in out.iter_mut().zip(cand.data()) {
            *o += weight * v;
        }
    }
    Image::new(w, h, out)
}

/// The constant per-round decrement of w_0 (it loses delta(Q_0, Q_max) at
/// every one of the N-1 iterations).
pub fn round_decrement(state: &BlendState) -> Result<f64> {
    let n = state.weights.len();
    if n < 2 {
        return Ok(0.0);
    }
    Ok((n - 1) as f64 * delta(state.q_values[0], state.q_values[n - 1])?)
}

/// Exact bound on executable rounds: floor(w_0^0 / per-round decrement).
/// Degenerate (zero) decrements fall back to the configured cap.
pub fn max_rounds(state: &BlendState, config: &BlendConfig) -> Result<usize> {
    let d0 = round_decrement(state)?;
    if d0 <= 0.0 {
        return Ok(config.max_rounds_cap);
    }
    let n = state.weights.len() as f64;
    Ok(((1.0 / n) / d0).floor() as usize)
}

#[derive(Debug, Clone)]
pub struct BlendResult {
    pub image: Image,
    pub state: BlendState,
    pub termination: Termination,
    /// Candidate Q ties were broken by input order.
    pub tie_broken: bool,
}

/// Full blending run: score candidates with Q, sort ascending, start from
/// equal weights, then apply rounds until one of the termination criteria
/// fires. Returns the selected round's image and the final state.
pub fn blend(candidates: &[Image], config: &BlendConfig, qconfig: &QConfig) -> Result<BlendResult> {
    if candidates.len() < 2 {
        return Err(DeblurError::TooFewCandidates(candidates.len()));
    }
    for c in &candidates[1..] {
        candidates[0].same_dims(c)?;
    }
    let mut scored: Vec<(f64, &Image)> = candidates
        .iter()
        .map(|c| metric_q(c, qconfig).map(|q| (q, c)))
        .collect::<Result<_>>()?;
    // stable: ties keep input order and contribute zero deltas
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite Q"));
    let tie_broken = scored.windows(2).any(|w| w[0].0 == w[1].0);

    let q_values: Vec<f64> = scored.iter().map(|(q, _)| *q).collect();
    let ordered: Vec<Image> = scored.into_iter().map(|(_, c)| c.clone()).collect();
    let mut state = BlendState::new(ordered, q_values);

    let mut image = compose(&state)?;
    let mut q_current = metric_q(&image, qconfig)?;
    state.q_history.push(q_current);

    if state.q_values[0] <= 0.0 || round_decrement(&state)? == 0.0 {
        // all-tied candidates (or flat images): the blend is the average
        return Ok(BlendResult {
            image,
            state,
            termination: Termination::DegenerateQ,
            tie_broken,
        });
    }
    let bound = max_rounds(&state, config)?.min(config.max_rounds_cap);

    let termination = loop {
        if state.weights[0] <= config.epsilon_w {
            break Termination::WeightExhausted;
        }
        if state.round >= bound {
            break Termination::MaxRounds;
        }
        let next = match run_round(&state) {
            Ok(next) => next,
            Err(DeblurError::RoundRefused(..)) => break Termination::RoundRefused,
            Err(e) => return Err(e),
        };
        let next_image = compose(&next)?;
        let q_next = metric_q(&next_image, qconfig)?;
        if q_next < q_current {
            // keep round m, discard round m+1
            break Termination::QDecreased;
        }
        let gain = q_next - q_current;
        state = next;
        state.q_history.push(q_next);
        image = next_image;
        q_current = q_next;
        if gain < config.eta {
            break Termination::GainBelowEta;
        }
    };

    Ok(BlendResult {
        image,
        state,
        termination,
        tie_broken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img_const(v: f64) -> Image {
        Image::constant(16, 16, v).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(3.2, 3.2).unwrap(), 0.0);
        assert!((delta(5.270, 5.278).unwrap() - 0.001518).abs() < 1e-6);
        assert_eq!(delta(1.0, 2.0).unwrap(), 1.0);
        assert!(delta(0.0, 1.0).is_err());
    }

    #[test]
    fn run_round_single_candidate_is_noop() {
        let state = BlendState::new(vec![img_const(0.5)], vec![4.0]);
        let next = run_round(&state).unwrap();
        assert_eq!(next.weights, vec![1.0]);
        assert_eq!(next.round, 1);
    }

    #[test]
    fn run_round_two_candidates_hand_execution() {
        // Q = (4, 5): delta = 0.25, weights go (0.5, 0.5) -> (0.25, 0.75)
        let state = BlendState::new(vec![img_const(0.2), img_const(0.8)], vec![4.0, 5.0]);
        let next = run_round(&state).unwrap();
        assert_eq!(next.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn run_round_refuses_negative_weights() {
        let state = BlendState::new(vec![img_const(0.2), img_const(0.8)], vec![1.0, 3.0]);
        // delta = 2.0 > 0.5
        assert!(matches!(
            run_round(&state),
            Err(DeblurError::RoundRefused(0, _))
        ));
    }

    #[test]
    fn weights_sum_to_one_and_monotone_across_rounds() {
        for n in 2..=5usize {
            let q: Vec<f64> = (0..n).map(|i| 5.0 + 0.01 * i as f64).collect();
            let cands: Vec<Image> = (0..n).map(|i| img_const(0.1 * i as f64)).collect();
            let mut state = BlendState::new(cands, q);
            let mut prev_low = state.weights[0];
            let mut prev_high = state.weights[n - 1];
            for _ in 0..3 {
                state = match run_round(&state) {
                    Ok(s) => s,
                    Err(_) => break,
                };
                let sum: f64 = state.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(state.weights[0] <= prev_low + 1e-15);
                assert!(state.weights[n - 1] >= prev_high - 1e-15);
                prev_low = state.weights[0];
                prev_high = state.weights[n - 1];
            }
        }
    }

    #[test]
    fn n2_trajectory_is_arithmetic_progression() {
        let d = delta(8.0, 8.004).unwrap();
        let mut state = BlendState::new(vec![img_const(0.3), img_const(0.6)], vec![8.0, 8.004]);
        for m in 1..=5usize {
            state = run_round(&state).unwrap();
            assert!((state.weights[0] - (0.5 - m as f64 * d)).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_cases() {
        let x = Image::from_fn(16, 16, |a, b| ((a + b) % 7) as f64 / 7.0).unwrap();
        let state = BlendState::new(vec![x.clone(), x.clone(), x.clone()], vec![1.0, 2.0, 3.0]);
        let blended = compose(&state).unwrap();
        for (a, b) in blended.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let y = img_const(0.9);
        let mut state = BlendState::new(vec![x.clone(), y], vec![1.0, 2.0]);
        state.weights = vec![1.0, 0.0];
        assert_eq!(compose(&state).unwrap(), x);
    }

    #[test]
    fn max_rounds_arithmetic() {
        // w_0^0 = 0.25, per-round decrement 0.05 -> 5 rounds
        // N = 4: decrement = 3 * delta(q0, q3); pick q so delta = 0.05 / 3
        let q0 = 3.0;
        let q3 = q0 * (1.0 + 0.05 / 3.0);
        let cands: Vec<Image> = (0..4).map(|i| img_const(0.2 * i as f64)).collect();
        let state = BlendState::new(cands, vec![q0, q0 + 0.01, q0 + 0.02, q3]);
        assert_eq!(max_rounds(&state, &BlendConfig::default()).unwrap(), 5);

        // degenerate decrement falls back to the cap
        let one = BlendState::new(vec![img_const(0.5)], vec![4.0]);
        assert_eq!(
            max_rounds(&one, &BlendConfig::default()).unwrap(),
            BlendConfig::default().max_rounds_cap
        );
    }

    #[test]
    fn blend_rejects_fewer_than_two() {
        let cfg = BlendConfig::default();
        let q = QConfig::default();
        assert!(blend(&[img_const(0.5)], &cfg, &q).is_err());
    }

    #[test]
    fn blend_of_identical_candidates_takes_tie_path() {
        let x = Image::from_fn(32, 32, |a, b| ((a * 3 + b) % 9) as f64 / 9.0).unwrap();
        let out = blend(
            &[x.clone(), x.clone()],
            &BlendConfig::default(),
            &QConfig::default(),
        )
        .unwrap();
        assert!(out.tie_broken);
        assert_eq!(out.termination, Termination::DegenerateQ);
        // equal-weight blend of identical images is the image itself
        for (a, b) in out.image.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blend_is_deterministic() {
        let a = Image::from_fn(32, 32, |x, y| {
            0.5 + 0.4 * ((x as f64 * 0.8).sin() * (y as f64 * 0.6).cos())
        })
        .unwrap();
        let b = Image::from_fn(32, 32, |x, y| {
            0.5 + 0.2 * ((x as f64 * 0.8).sin() * (y as f64 * 0.6).cos())
        })
        .unwrap();
        let cfg = BlendConfig::default();
        let q = QConfig::default();
        let r1 = blend(&[a.clone(), b.clone()], &cfg, &q).unwrap();
        let r2 = blend(&[a, b], &cfg, &q).unwrap();
        assert_eq!(r1.image, r2.image);
        assert_eq!(r1.state.weights, r2.state.weights);
        assert_eq!(r1.termination, r2.termination);
    }

    #[test]
    fn blend_never_loses_to_the_plain_average() {
        let base = Image::from_fn(48, 48, |x, y| {
            0.5 + 0.3 * ((x as f64 * 0.9).sin() + (y as f64 * 0.7).cos()) / 2.0
        })
        .unwrap();
        let kernels: Vec<Image> = [0.6f64, 1.0, 1.6]
            .iter()
            .map(|s| {
                crate::kernel::convolve(&base, &crate::kernel::gaussian_kernel(7, *s).unwrap())
            })
            .collect();
        let cfg = BlendConfig::default();
        let qc = QConfig::default();
        let result = blend(&kernels, &cfg, &qc).unwrap();
        let q_avg = result.state.q_history[0];
        let q_out = metric_q(&result.image, &qc).unwrap();
        assert!(q_out >= q_avg - 1e-12);
    }
}
