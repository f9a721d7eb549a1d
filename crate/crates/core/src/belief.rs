//! The belief-state MDP.
//!
//! The state is the posterior over channel states given past outputs, the
//! action is the input distribution `p(x | s)`, and the reward is the
//! conditional mutual information `I(X, S; Y | belief)` in bits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::error::{Error, Result};
use crate::info::{entropy, plogp, PROB_FLOOR};

/// Tolerance on belief and action normalization.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Posterior distribution over channel states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefState(Vec<f64>);

impl BeliefState {
    /// Validate and wrap a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, "belief")?;
        Ok(Self(probs))
    }

    /// Point mass on state `s`.
    pub fn delta(size: usize, s: usize) -> Result<Self> {
        if s >= size {
            return Err(Error::Shape(format!("state {s} out of range {size}")));
        }
        let mut v = vec![0.0; size];
        v[s] = 1.0;
        Ok(Self(v))
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// L-infinity distance.
    pub fn distance(&self, other: &BeliefState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Normalize a non-negative vector with positive sum.
    pub fn from_unnormalized(mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self(probs)
    }
}

/// Input distribution for each channel state, stored as an `|X| x |S|`
/// matrix whose column `s` is `p(x | s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionMatrix {
    input_size: usize,
    state_size: usize,
    // row-major, entry (x, s) at x * state_size + s
    probs: Vec<f64>,
}

impl ActionMatrix {
    /// Validate and wrap a row-major `|X| x |S|` table.
    pub fn new(input_size: usize, state_size: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != input_size * state_size {
            return Err(Error::Shape(format!(
                "action has {} entries, expected {}x{}",
                probs.len(),
                input_size,
                state_size
            )));
        }
        let m = Self { input_size, state_size, probs };
        for s in 0..state_size {
            check_simplex(&m.column(s), "action column")?;
        }
        Ok(m)
    }

    /// Build from a function giving `p(x | s)`.
    pub fn from_fn(
        input_size: usize,
        state_size: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(input_size * state_size);
        for x in 0..input_size {
            for s in 0..state_size {
                probs.push(f(x, s));
            }
        }
        Self::new(input_size, state_size, probs)
    }

    /// Every column uniform.
    pub fn uniform(input_size: usize, state_size: usize) -> Self {
        Self {
            input_size,
            state_size,
            probs: vec![1.0 / input_size as f64; input_size * state_size],
        }
    }

    /// Deterministic input `x = choice(s)`.
    pub fn deterministic(
        input_size: usize,
        state_size: usize,
        choice: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        Self::from_fn(input_size, state_size, |x, s| if choice(s) == x { 1.0 } else { 0.0 })
    }

    pub(crate) fn from_raw(input_size: usize, state_size: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), input_size * state_size);
        Self { input_size, state_size, probs }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn state_size(&self) -> usize {
        self.state_size
    }

    /// `p(x | s)`.
    #[inline]
    pub fn get(&self, x: usize, s: usize) -> f64 {
        self.probs[x * self.state_size + s]
    }

    pub fn column(&self, s: usize) -> Vec<f64> {
        (0..self.input_size).map(|x| self.get(x, s)).collect()
    }

    /// Row-major flattening, the layout fed to the critic.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest deviation of a column sum from one.
    pub fn max_column_error(&self) -> f64 {
        (0..self.state_size)
            .map(|s| (self.column(s).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Shape(format!("empty {what}")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < -SIMPLEX_TOL) {
        return Err(Error::Domain(format!("{what} has a negative or non-finite entry: {probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Domain(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn check_dims(z: &BeliefState, u: &ActionMatrix, spec: &ChannelSpec) -> Result<()> {
    if z.len() != spec.state_size()
        || u.state_size != spec.state_size()
        || u.input_size != spec.input_size()
    {
        return Err(Error::Shape(format!(
            "belief {} / action {}x{} do not match channel |X|={} |S|={}",
            z.len(),
            u.input_size,
            u.state_size,
            spec.input_size(),
            spec.state_size()
        )));
    }
    Ok(())
}

/// Joint distribution `p(x, s, y) = z(s) u(x|s) p(y|x,s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDist {
    input_size: usize,
    state_size: usize,
    output_size: usize,
    probs: Vec<f64>,
}

impl JointDist {
    #[inline]
    pub fn get(&self, x: usize, s: usize, y: usize) -> f64 {
        self.probs[(x * self.state_size + s) * self.output_size + y]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Output marginal `p(y)`.
    pub fn output_marginal(&self) -> Vec<f64> {
        let mut py = vec![0.0; self.output_size];
        for chunk in self.probs.chunks_exact(self.output_size) {
            for (acc, p) in py.iter_mut().zip(chunk) {
                *acc += p;
            }
        }
        py
    }
}

pub fn joint_dist(z: &BeliefState, u: &ActionMatrix, spec: &ChannelSpec) -> Result<JointDist> {
    check_dims(z, u, spec)?;
    let (nx, ns, ny) = (spec.input_size(), spec.state_size(), spec.output_size());
    let mut probs = vec![0.0; nx * ns * ny];
    for x in 0..nx {
        for s in 0..ns {
            let w = z.0[s] * u.get(x, s);
            let row = spec.output_dist(x, s)?;
            let base = (x * ns + s) * ny;
            for y in 0..ny {
                probs[base + y] = w * row[y];
            }
        }
    }
    Ok(JointDist { input_size: nx, state_size: ns, output_size: ny, probs })
}

/// `I(X, S; Y)` under the one-step joint, in bits.
pub fn reward(z: &BeliefState, u: &ActionMatrix, spec: &ChannelSpec) -> Result<f64> {
    let joint = joint_dist(z, u, spec)?;
    Ok(reward_from_joint(&joint, spec))
}

fn reward_from_joint(joint: &JointDist, spec: &ChannelSpec) -> f64 {
    let h_y = entropy(&joint.output_marginal());
    let mut h_y_given_xs = 0.0;
    for x in 0..joint.input_size {
        for s in 0..joint.state_size {
            let w: f64 = (0..joint.output_size).map(|y| joint.get(x, s, y)).sum();
            if w > 0.0 {
                let row = spec.output_dist(x, s).expect("indices in range");
                h_y_given_xs += w * row.iter().map(|&p| plogp(p)).sum::<f64>();
            }
        }
    }
    (h_y - h_y_given_xs).max(0.0)
}

/// Bayes update of the belief after observing `y`.
pub fn belief_update(
    z: &BeliefState,
    u: &ActionMatrix,
    y: usize,
    spec: &ChannelSpec,
) -> Result<BeliefState> {
    let joint = joint_dist(z, u, spec)?;
    if y >= spec.output_size() {
        return Err(Error::Shape(format!("output {y} out of range")));
    }
    update_from_joint(&joint, y, spec)
}

fn update_from_joint(joint: &JointDist, y: usize, spec: &ChannelSpec) -> Result<BeliefState> {
    let mut next = vec![0.0; joint.state_size];
    let mut py = 0.0;
    for x in 0..joint.input_size {
        for s in 0..joint.state_size {
            let p = joint.get(x, s, y);
            if p > 0.0 {
                let s_next = spec.state_fn(x, y, s).ok_or_else(|| {
                    Error::ImpossibleObservation(format!("state_fn undefined at ({x},{y},{s})"))
                })?;
                next[s_next] += p;
                py += p;
            }
        }
    }
    if py <= PROB_FLOOR {
        return Err(Error::ImpossibleObservation(format!("p(y={y}) = {py}")));
    }
    next.iter_mut().for_each(|v| *v /= py);
    Ok(BeliefState(next))
}

/// Everything one step from `(z, u)` leads to: the reward and, per output,
/// its probability and the updated belief (`None` when `p(y)` is negligible).
#[derive(Clone, Debug)]
pub struct StepOutcomes {
    pub reward: f64,
    pub branches: Vec<(f64, Option<BeliefState>)>,
}

pub fn step_outcomes(z: &BeliefState, u: &ActionMatrix, spec: &ChannelSpec) -> Result<StepOutcomes> {
    let joint = joint_dist(z, u, spec)?;
    let reward = reward_from_joint(&joint, spec);
    let py = joint.output_marginal();
    let branches = py
        .iter()
        .enumerate()
        .map(|(y, &p)| {
            let next = if p > PROB_FLOOR { Some(update_from_joint(&joint, y, spec)?) } else { None };
            Ok((p, next))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StepOutcomes { reward, branches })
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub output: usize,
    pub reward: f64,
    pub belief: BeliefState,
}

/// A single-owner environment over the belief MDP.
#[derive(Clone, Debug)]
pub struct EnvState {
    belief: BeliefState,
    rng: ChaCha8Rng,
    step_count: u64,
}

impl EnvState {
    /// Start from `δ(s0)`.
    pub fn new(spec: &ChannelSpec, s0: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self { belief: BeliefState::delta(spec.state_size(), s0)?, rng, step_count: 0 })
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Reset to `δ(s0)`, or to a uniformly drawn state when `s0` is `None`.
    pub fn reset(&mut self, spec: &ChannelSpec, s0: Option<usize>) -> Result<&BeliefState> {
        let s = match s0 {
            Some(s) => s,
            None => self.rng.random_range(0..spec.state_size()),
        };
        self.belief = BeliefState::delta(spec.state_size(), s)?;
        Ok(&self.belief)
    }

    /// Sample `(x, s)` from the current belief and action, then `y` from the
    /// channel; move to the updated belief.
    pub fn step(&mut self, u: &ActionMatrix, spec: &ChannelSpec) -> Result<Step> {
        let joint = joint_dist(&self.belief, u, spec)?;
        let reward = reward_from_joint(&joint, spec);
        let (nx, ns) = (spec.input_size(), spec.state_size());
        let mut draw = self.rng.random::<f64>();
        let mut chosen = None;
        let mut last_positive = None;
        'outer: for x in 0..nx {
            for s in 0..ns {
                let w = self.belief.0[s] * u.get(x, s);
                if w > 0.0 {
                    last_positive = Some((x, s));
                    if draw < w {
                        chosen = Some((x, s));
                        break 'outer;
                    }
                    draw -= w;
                }
            }
        }
        let (x, s) = chosen.or(last_positive).ok_or_else(|| {
            Error::Domain("belief/action pair has no mass".to_string())
        })?;
        let row = spec.output_dist(x, s)?;
        let mut draw = self.rng.random::<f64>();
        let mut output = None;
        let mut last_y = 0;
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_y = y;
                if draw < p {
                    output = Some(y);
                    break;
                }
                draw -= p;
            }
        }
        let output = output.unwrap_or(last_y);
        let belief = update_from_joint(&joint, output, spec)?;
        self.belief = belief.clone();
        self.step_count += 1;
        Ok(Step { output, reward, belief })
    }
}
