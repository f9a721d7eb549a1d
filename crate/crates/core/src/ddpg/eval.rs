//! Greedy rollouts and long-run rate estimates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::Actor;
use super::train::TrainedPolicy;
use crate::belief::{ActionMatrix, BeliefState, EnvState, Step};
use crate::channels::ChannelSpec;
use crate::error::{Error, Result};

/// A deterministic map from beliefs to actions.
pub trait Policy {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix>;
}

impl Policy for Actor {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        self.act(z)
    }
}

impl Policy for TrainedPolicy {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        self.act(z)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        (**self).action(z)
    }
}

/// Policy given by a closure.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&BeliefState) -> ActionMatrix,
{
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        Ok((self.0)(z))
    }
}

/// The same action at every belief.
pub struct ConstantPolicy(pub ActionMatrix);

impl Policy for ConstantPolicy {
    fn action(&self, _z: &BeliefState) -> Result<ActionMatrix> {
        Ok(self.0.clone())
    }
}

/// Record of a greedy rollout step.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStep {
    pub belief: BeliefState,
    pub action: ActionMatrix,
    pub step: Step,
}

/// Greedy rollout from `δ(s0)`.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    spec: &ChannelSpec,
    s0: usize,
    steps: usize,
    rng: ChaCha8Rng,
) -> Result<Vec<RolloutStep>> {
    let mut env = EnvState::new(spec, s0, rng)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let belief = env.belief().clone();
        let action = policy.action(&belief)?;
        let step = env.step(&action, spec)?;
        out.push(RolloutStep { belief, action, step });
    }
    Ok(out)
}

/// Long-run average reward estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rate: f64,
    pub stderr: f64,
    pub steps: usize,
}

/// Number of batches used for the batch-means standard error.
pub const EVAL_BATCHES: usize = 20;

/// Average the per-step reward of a greedy rollout after `burn_in` steps.
/// The start state is drawn uniformly from `rng`.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    spec: &ChannelSpec,
    steps: usize,
    burn_in: usize,
    mut rng: ChaCha8Rng,
) -> Result<Evaluation> {
    if steps <= burn_in {
        return Err(Error::Domain(format!("steps {steps} must exceed burn-in {burn_in}")));
    }
    let s0 = rng.random_range(0..spec.state_size());
    let mut env = EnvState::new(spec, s0, rng)?;
    let mut rewards = Vec::with_capacity(steps - burn_in);
    for t in 0..steps {
        let action = policy.action(env.belief())?;
        let step = env.step(&action, spec)?;
        if t >= burn_in {
            rewards.push(step.reward);
        }
    }
    let (rate, stderr) = batch_means(&rewards, EVAL_BATCHES);
    Ok(Evaluation { rate, stderr, steps: rewards.len() })
}

/// Mean and batch-means standard error.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = batches.min(n);
    if batches < 2 {
        return (mean, f64::NAN);
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::make_ising;
    use crate::rng::{stream, Component};

    #[test]
    fn identity_policy_has_zero_rate() {
        let ch = make_ising(3).unwrap();
        let policy = ConstantPolicy(ActionMatrix::deterministic(3, 3, |s| s).unwrap());
        let ev = evaluate_policy(&policy, &ch, 1000, 100, stream(1, Component::Evaluation, 0)).unwrap();
        assert_eq!(ev.rate, 0.0);
        assert_eq!(ev.steps, 900);
    }

    #[test]
    fn uniform_policy_first_reward() {
        let ch = make_ising(3).unwrap();
        let policy = ConstantPolicy(ActionMatrix::uniform(3, 3));
        for s in 0..3 {
            let steps = rollout(&policy, &ch, s, 1, stream(2, Component::Evaluation, 0)).unwrap();
            assert!((steps[0].step.reward - (3f64.log2() - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_agree_within_stderr() {
        let ch = make_ising(3).unwrap();
        let policy = ConstantPolicy(ActionMatrix::uniform(3, 3));
        let a = evaluate_policy(&policy, &ch, 40_000, 1000, stream(3, Component::Evaluation, 0)).unwrap();
        let b = evaluate_policy(&policy, &ch, 40_000, 1000, stream(4, Component::Evaluation, 0)).unwrap();
        let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.rate - b.rate).abs() < 3.0 * combined, "{a:?} {b:?}");
    }

    #[test]
    fn rejects_short_runs() {
        let ch = make_ising(2).unwrap();
        let policy = ConstantPolicy(ActionMatrix::uniform(2, 2));
        assert!(evaluate_policy(&policy, &ch, 10, 10, stream(0, Component::Evaluation, 0)).is_err());
    }
}
