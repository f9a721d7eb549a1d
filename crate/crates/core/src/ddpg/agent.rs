//! Actor and critic networks and their update rules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::network::{Adam, ForwardCache, Grads, Mlp, Mode};
use super::replay::Batch;
use crate::belief::{ActionMatrix, BeliefState};
use crate::error::{Error, Result};

/// Initialization bound of the output layers, small so that the initial
/// policy is close to uniform and the initial critic close to zero.
pub const HEAD_INIT_BOUND: f64 = 3e-3;

/// Batch normalization with one sample degenerates to the shift term, so
/// single-sample passes use the running statistics.
pub fn update_mode(batch: usize) -> Mode {
    if batch > 1 {
        Mode::Train
    } else {
        Mode::Inference
    }
}

/// Deterministic policy network. The head emits `|X| * |S|` logits that are
/// turned into one softmax per channel state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub net: Mlp,
    input_size: usize,
    state_size: usize,
}

impl Actor {
    pub fn new<R: Rng>(
        input_size: usize,
        state_size: usize,
        hidden: &[usize],
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let net = Mlp::new(
            "actor",
            state_size,
            hidden,
            input_size * state_size,
            batch_norm,
            HEAD_INIT_BOUND,
            rng,
        );
        Self { net, input_size, state_size }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn state_size(&self) -> usize {
        self.state_size
    }

    /// Column-softmax outputs for a `|S| x batch` matrix of beliefs; each
    /// output column is a flattened action matrix.
    pub fn forward_batch(
        &self,
        states: &DMatrix<f64>,
        mode: Mode,
    ) -> Result<(DMatrix<f64>, ForwardCache)> {
        let (logits, cache) = self.net.forward(states, mode)?;
        Ok((softmax_columns(&logits, self.input_size, self.state_size), cache))
    }

    /// Action for one belief in the given mode.
    pub fn forward(&self, z: &BeliefState, mode: Mode) -> Result<ActionMatrix> {
        if z.len() != self.state_size {
            return Err(Error::Shape(format!(
                "actor expects {} states, belief has {}",
                self.state_size,
                z.len()
            )));
        }
        let input = DMatrix::from_column_slice(z.len(), 1, z.probs());
        let (probs, _) = self.forward_batch(&input, mode)?;
        Ok(ActionMatrix::from_raw(self.input_size, self.state_size, probs.as_slice().to_vec()))
    }

    /// Greedy action with running normalization statistics.
    pub fn act(&self, z: &BeliefState) -> Result<ActionMatrix> {
        self.forward(z, Mode::Inference)
    }

    /// Mean critic value of the actor's own actions over `states`, and its
    /// gradient with respect to the actor parameters.
    pub fn objective_gradient(
        &self,
        critic: &dyn ActionValue,
        states: &DMatrix<f64>,
        mode: Mode,
    ) -> Result<(f64, Grads, ForwardCache)> {
        let batch = states.ncols() as f64;
        let (probs, cache) = self.forward_batch(states, mode)?;
        let (values, mut dq_du) = critic.values_and_action_grad(states, &probs)?;
        dq_du /= batch;
        let dlogits = softmax_backward(&probs, &dq_du, self.input_size, self.state_size);
        let (grads, _) = self.net.backward(&cache, &dlogits);
        if !grads.is_finite() {
            return Err(Error::NumericFailure { layer: "actor.gradient".into() });
        }
        Ok((values.mean(), grads, cache))
    }
}

/// Per-state softmax over inputs; rows are indexed `x * |S| + s`.
pub fn softmax_columns(logits: &DMatrix<f64>, input_size: usize, state_size: usize) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut col in out.column_iter_mut() {
        for s in 0..state_size {
            let max = (0..input_size).map(|x| col[x * state_size + s]).fold(f64::MIN, f64::max);
            let mut total = 0.0;
            for x in 0..input_size {
                let e = (col[x * state_size + s] - max).exp();
                col[x * state_size + s] = e;
                total += e;
            }
            for x in 0..input_size {
                col[x * state_size + s] /= total;
            }
        }
    }
    out
}

fn softmax_backward(
    probs: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    input_size: usize,
    state_size: usize,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(probs.nrows(), probs.ncols());
    for j in 0..probs.ncols() {
        for s in 0..state_size {
            let inner: f64 = (0..input_size)
                .map(|x| probs[(x * state_size + s, j)] * grad[(x * state_size + s, j)])
                .sum();
            for x in 0..input_size {
                let i = x * state_size + s;
                out[(i, j)] = probs[(i, j)] * (grad[(i, j)] - inner);
            }
        }
    }
    out
}

/// Anything that scores `(belief, action)` batches and can differentiate the
/// score with respect to the action.
pub trait ActionValue {
    fn values(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DVector<f64>>;

    /// Values and `dQ/du` for each column.
    fn values_and_action_grad(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

/// State-action value network over `[z; vec(u)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp,
    state_size: usize,
    action_len: usize,
}

impl Critic {
    pub fn new<R: Rng>(
        input_size: usize,
        state_size: usize,
        hidden: &[usize],
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let action_len = input_size * state_size;
        let net = Mlp::new("critic", state_size + action_len, hidden, 1, batch_norm, HEAD_INIT_BOUND, rng);
        Self { net, state_size, action_len }
    }

    fn stack(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.nrows() != self.state_size
            || actions.nrows() != self.action_len
            || states.ncols() != actions.ncols()
        {
            return Err(Error::Shape(format!(
                "critic expects {}+{} rows, got {}x{} and {}x{}",
                self.state_size,
                self.action_len,
                states.nrows(),
                states.ncols(),
                actions.nrows(),
                actions.ncols()
            )));
        }
        let batch = states.ncols();
        let mut input = DMatrix::zeros(self.state_size + self.action_len, batch);
        input.rows_mut(0, self.state_size).copy_from(states);
        input.rows_mut(self.state_size, self.action_len).copy_from(actions);
        Ok(input)
    }

    pub fn forward_batch(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        mode: Mode,
    ) -> Result<(DVector<f64>, ForwardCache)> {
        let input = self.stack(states, actions)?;
        let (out, cache) = self.net.forward(&input, mode)?;
        Ok((DVector::from_row_slice(out.row(0).transpose().as_slice()), cache))
    }

    /// Scalar value of one `(z, u)` pair in the given mode.
    pub fn forward(&self, z: &BeliefState, u: &ActionMatrix, mode: Mode) -> Result<f64> {
        let states = DMatrix::from_column_slice(z.len(), 1, z.probs());
        let actions = DMatrix::from_column_slice(u.as_slice().len(), 1, u.as_slice());
        Ok(self.forward_batch(&states, &actions, mode)?.0[0])
    }

    /// Inference-mode value.
    pub fn value(&self, z: &BeliefState, u: &ActionMatrix) -> Result<f64> {
        self.forward(z, u, Mode::Inference)
    }

    /// Mean squared error against `targets` and its parameter gradient.
    pub fn loss_gradient(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        targets: &DVector<f64>,
        mode: Mode,
    ) -> Result<(f64, Grads, ForwardCache)> {
        let (values, cache) = self.forward_batch(states, actions, mode)?;
        let n = values.len() as f64;
        let residual = &values - targets;
        let loss = residual.norm_squared() / n;
        let grad_out = DMatrix::from_row_slice(1, residual.len(), (residual * (2.0 / n)).as_slice());
        let (grads, _) = self.net.backward(&cache, &grad_out);
        if !grads.is_finite() {
            return Err(Error::NumericFailure { layer: "critic.gradient".into() });
        }
        Ok((loss, grads, cache))
    }
}

impl ActionValue for Critic {
    fn values(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_batch(states, actions, Mode::Inference)?.0)
    }

    fn values_and_action_grad(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let input = self.stack(states, actions)?;
        let (out, cache) = self.net.forward(&input, Mode::Inference)?;
        let ones = DMatrix::from_element(1, out.ncols(), 1.0);
        let (_, grad_input) = self.net.backward(&cache, &ones);
        let dq_du = grad_input.rows(self.state_size, self.action_len).into_owned();
        Ok((DVector::from_row_slice(out.row(0).transpose().as_slice()), dq_du))
    }
}

/// ε-greedy action: the actor's output with probability `1 - ε`, otherwise
/// each column drawn from the flat Dirichlet distribution.
pub fn sample_action<R: Rng>(
    actor: &Actor,
    z: &BeliefState,
    epsilon: f64,
    rng: &mut R,
) -> Result<ActionMatrix> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0,1]")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(random_action(actor.input_size, actor.state_size, rng))
    } else {
        actor.act(z)
    }
}

/// Uniform draw from the product of probability simplices.
pub fn random_action<R: Rng>(input_size: usize, state_size: usize, rng: &mut R) -> ActionMatrix {
    let mut probs = vec![0.0; input_size * state_size];
    for s in 0..state_size {
        let draws: Vec<f64> = (0..input_size).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        for (x, d) in draws.into_iter().enumerate() {
            probs[x * state_size + s] = d / total;
        }
    }
    ActionMatrix::from_raw(input_size, state_size, probs)
}

/// Bootstrapped regression targets `r + γ Q(z', A(z'))`.
pub fn compute_targets(
    batch: &Batch,
    discount: f64,
    critic: &dyn ActionValue,
    actor: &Actor,
) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if discount == 0.0 {
        return Ok(batch.rewards.clone());
    }
    let (next_actions, _) = actor.forward_batch(&batch.next_states, Mode::Inference)?;
    let next_values = critic.values(&batch.next_states, &next_actions)?;
    Ok(&batch.rewards + next_values * discount)
}

/// One gradient step of the critic on `(Q(z_i, u_i) - y_i)^2`; `actions`
/// are usually the stored actions. Returns the loss before the step.
pub fn critic_update(
    critic: &mut Critic,
    optimizer: &mut Adam,
    states: &DMatrix<f64>,
    actions: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<f64> {
    let mode = update_mode(states.ncols());
    let (loss, grads, cache) = critic.loss_gradient(states, actions, targets, mode)?;
    critic.net.commit_running_stats(&cache);
    optimizer.apply(&mut critic.net, &grads);
    if !critic.net.is_finite() {
        return Err(Error::NumericFailure { layer: "critic.parameters".into() });
    }
    Ok(loss)
}

/// One ascent step of the actor on the critic's value of its actions.
/// Returns the mean value before the step.
pub fn actor_update(
    actor: &mut Actor,
    optimizer: &mut Adam,
    critic: &dyn ActionValue,
    states: &DMatrix<f64>,
) -> Result<f64> {
    let mode = update_mode(states.ncols());
    let (value, mut grads, cache) = actor.objective_gradient(critic, states, mode)?;
    actor.net.commit_running_stats(&cache);
    grads.scale(-1.0);
    optimizer.apply(&mut actor.net, &grads);
    if !actor.net.is_finite() {
        return Err(Error::NumericFailure { layer: "actor.parameters".into() });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Component};

    #[test]
    fn softmax_head_produces_valid_actions() {
        let mut rng = stream(1, Component::NetworkInit, 0);
        let actor = Actor::new(3, 3, &[16, 16], true, &mut rng);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let z = BeliefState::from_unnormalized(raw);
            let u = actor.act(&z).unwrap();
            assert!(u.max_column_error() < 1e-9);
            let t = actor.forward(&z, Mode::Train).unwrap();
            assert!(t.max_column_error() < 1e-9);
        }
    }

    #[test]
    fn fresh_actor_is_near_uniform() {
        let mut rng = stream(2, Component::NetworkInit, 0);
        let actor = Actor::new(3, 3, &[300, 300, 300], true, &mut rng);
        let u = actor.act(&BeliefState::uniform(3)).unwrap();
        for &p in u.as_slice() {
            assert!((p - 1.0 / 3.0).abs() < 0.25, "{p}");
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let mut rng = stream(3, Component::NetworkInit, 0);
        let actor = Actor::new(2, 2, &[8], true, &mut rng);
        let critic = Critic::new(2, 2, &[8], true, &mut rng);
        let z = BeliefState::new(vec![0.3, 0.7]).unwrap();
        let a = actor.act(&z).unwrap();
        assert_eq!(a, actor.act(&z).unwrap());
        assert_eq!(critic.value(&z, &a).unwrap(), critic.value(&z, &a).unwrap());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = DMatrix::from_column_slice(4, 1, &[0.3, -0.2, 1.1, 0.4]);
        let weights = DMatrix::from_column_slice(4, 1, &[0.7, -1.3, 0.2, 2.0]);
        let f = |l: &DMatrix<f64>| softmax_columns(l, 2, 2).component_mul(&weights).sum();
        let probs = softmax_columns(&logits, 2, 2);
        let g = softmax_backward(&probs, &weights, 2, 2);
        for i in 0..4 {
            let mut p = logits.clone();
            p[i] += 1e-6;
            let mut m = logits.clone();
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
