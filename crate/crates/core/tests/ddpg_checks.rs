//! Gradient checks and small learning problems with known answers.

use fbcap::belief::BeliefState;
use fbcap::channels::make_ising;
use fbcap::ddpg::{
    actor_update, compute_targets, critic_update, random_action, sample_action, ActionValue, Actor, Adam, Batch,
    Critic, DdpgConfig, Mlp, Mode, Trainer, Transition,
};
use fbcap::rng::{stream, Component};
use fbcap::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const POINTS: u32 = 20;
const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn jitter(net: &mut Mlp, scale: f64, rng: &mut ChaCha8Rng) {
    let base = net.flat_params();
    for (i, v) in base.iter().enumerate() {
        net.set_param(i, v + rng.random_range(-scale..scale));
    }
}

fn beliefs(ns: usize, batch: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(ns, batch, |_, _| rng.random::<f64>() + 0.01);
    for mut c in m.column_iter_mut() {
        let total = c.sum();
        c /= total;
    }
    m
}

fn actions(nx: usize, ns: usize, batch: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nx * ns, batch);
    for j in 0..batch {
        let u = random_action(nx, ns, rng);
        m.column_mut(j).copy_from_slice(u.as_slice());
    }
    m
}

/// `‖a - n‖ / (‖a‖ + ‖n‖)`.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / (norm(analytic) + norm(numeric)).max(1e-300)
}

fn central_difference(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base = net.flat_params();
    (0..base.len())
        .map(|i| {
            let mut plus = net.clone();
            plus.set_param(i, base[i] + FD_STEP);
            let mut minus = net.clone();
            minus.set_param(i, base[i] - FD_STEP);
            (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
        })
        .collect()
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let (nx, ns, batch) = (3, 3, 5);
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let mut rng = stream(u64::from(point), Component::Generic, 1);
        let batch_norm = point % 2 == 0;
        let hidden: &[usize] = if point % 4 < 2 { &[2] } else { &[4, 3] };
        let mut critic = Critic::new(nx, ns, hidden, batch_norm, &mut rng);
        jitter(&mut critic.net, 0.5, &mut rng);
        let z = beliefs(ns, batch, &mut rng);
        let u = actions(nx, ns, batch, &mut rng);
        let targets = DVector::from_fn(batch, |_, _| rng.random_range(-1.0..1.0));
        let (_, grads, _) = critic.loss_gradient(&z, &u, &targets, Mode::Train).unwrap();
        let numeric = central_difference(&critic.net, |net| {
            let mut c = critic.clone();
            c.net = net.clone();
            c.loss_gradient(&z, &u, &targets, Mode::Train).unwrap().0
        });
        worst = worst.max(relative_error(&grads.flatten(), &numeric));
    }
    assert!(worst < REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn actor_through_critic_gradient_matches_finite_differences() {
    let (nx, ns, batch) = (2, 3, 4);
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let mut rng = stream(u64::from(point), Component::Generic, 2);
        let batch_norm = point % 2 == 0;
        let mut actor = Actor::new(nx, ns, &[4, 3], batch_norm, &mut rng);
        let mut critic = Critic::new(nx, ns, &[5], batch_norm, &mut rng);
        jitter(&mut actor.net, 0.5, &mut rng);
        jitter(&mut critic.net, 0.5, &mut rng);
        let z = beliefs(ns, batch, &mut rng);
        let (_, grads, _) = actor.objective_gradient(&critic, &z, Mode::Train).unwrap();
        let numeric = central_difference(&actor.net, |net| {
            let mut a = actor.clone();
            a.net = net.clone();
            let (u, _) = a.forward_batch(&z, Mode::Train).unwrap();
            critic.values(&z, &u).unwrap().mean()
        });
        worst = worst.max(relative_error(&grads.flatten(), &numeric));
    }
    assert!(worst < REL_TOL, "worst relative error {worst:e}");
}

/// Constant reward `c` from every transition: the fixed point of the
/// bootstrapped regression is `c / (1 - γ)`.
#[test]
fn critic_learns_geometric_series() {
    let (nx, ns, c, gamma) = (2, 2, 0.3, 0.9);
    let mut rng = stream(11, Component::Generic, 3);
    let actor = Actor::new(nx, ns, &[8], false, &mut rng);
    let mut critic = Critic::new(nx, ns, &[16, 16], false, &mut rng);
    let mut opt = Adam::new(&critic.net, 1e-3);
    let transitions: Vec<Transition> = (0..32)
        .map(|_| {
            let z = beliefs(ns, 2, &mut rng);
            Transition {
                state: BeliefState::new(z.column(0).iter().copied().collect()).unwrap(),
                action: random_action(nx, ns, &mut rng),
                reward: c,
                next_state: BeliefState::new(z.column(1).iter().copied().collect()).unwrap(),
            }
        })
        .collect();
    let batch = Batch::from_transitions(&transitions);
    for _ in 0..6000 {
        let targets = compute_targets(&batch, gamma, &critic, &actor).unwrap();
        critic_update(&mut critic, &mut opt, &batch.states, &batch.actions, &targets).unwrap();
    }
    let expected = c / (1.0 - gamma);
    let values = critic.values(&batch.states, &batch.actions).unwrap();
    for v in values.iter() {
        assert!((v - expected).abs() < 0.05 * expected, "value {v}, expected {expected}");
    }
}

#[test]
fn single_sample_regression_converges() {
    let mut rng = stream(12, Component::Generic, 4);
    let mut critic = Critic::new(2, 2, &[8, 8], true, &mut rng);
    let mut opt = Adam::new(&critic.net, 1e-3);
    let z = beliefs(2, 1, &mut rng);
    let u = actions(2, 2, 1, &mut rng);
    let target = DVector::from_element(1, 0.7);
    let mut losses = Vec::new();
    for _ in 0..3000 {
        losses.push(critic_update(&mut critic, &mut opt, &z, &u, &target).unwrap());
    }
    assert!(*losses.last().unwrap() < 1e-6, "final loss {}", losses.last().unwrap());
    // past the initial transient the loss only shrinks
    let settled = &losses[losses.len() / 2..];
    let rises = settled.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-9)).count();
    assert!(rises * 20 < settled.len(), "{rises} increases out of {}", settled.len());
}

/// `Q(z, u) = Σ_s u(0|s)`: maximized by putting all mass on input 0.
struct FirstInputMass {
    nx: usize,
    ns: usize,
}

impl ActionValue for FirstInputMass {
    fn values(&self, _states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_iterator(actions.ncols(), actions.column_iter().map(|c| c.rows(0, self.ns).sum())))
    }

    fn values_and_action_grad(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let grad = DMatrix::from_fn(self.nx * self.ns, actions.ncols(), |r, _| if r < self.ns { 1.0 } else { 0.0 });
        Ok((self.values(states, actions)?, grad))
    }
}

#[test]
fn actor_climbs_surrogate_critic() {
    let (nx, ns) = (3, 2);
    let mut rng = stream(13, Component::Generic, 5);
    let mut actor = Actor::new(nx, ns, &[16, 16], true, &mut rng);
    let mut opt = Adam::new(&actor.net, 1e-2);
    let critic = FirstInputMass { nx, ns };
    for _ in 0..2000 {
        let z = beliefs(ns, 16, &mut rng);
        actor_update(&mut actor, &mut opt, &critic, &z).unwrap();
    }
    for _ in 0..20 {
        let z = BeliefState::new(beliefs(ns, 1, &mut rng).as_slice().to_vec()).unwrap();
        let u = actor.act(&z).unwrap();
        for s in 0..ns {
            assert!(u.get(0, s) > 1.0 - 1e-2, "u(0|{s}) = {}", u.get(0, s));
        }
    }
}

#[test]
fn epsilon_one_gives_flat_dirichlet_moments() {
    let (nx, ns, draws) = (3, 2, 100_000);
    let mut rng = stream(14, Component::Generic, 6);
    let actor = Actor::new(nx, ns, &[4], false, &mut rng);
    let z = BeliefState::uniform(ns);
    let mut sums = vec![0.0; nx * ns];
    for _ in 0..draws {
        let u = sample_action(&actor, &z, 1.0, &mut rng).unwrap();
        for (acc, v) in sums.iter_mut().zip(u.as_slice()) {
            *acc += v;
        }
    }
    // each entry of a flat Dirichlet on n points has variance (n-1)/(n^2 (n+1))
    let n = nx as f64;
    let sigma = ((n - 1.0) / (n * n * (n + 1.0)) / draws as f64).sqrt();
    for mean in sums.iter().map(|s| s / draws as f64) {
        assert!((mean - 1.0 / n).abs() < 3.0 * sigma, "mean {mean}");
    }
}

#[test]
fn epsilon_half_mixes_evenly() {
    let draws = 10_000;
    let mut rng = stream(15, Component::Generic, 7);
    let actor = Actor::new(2, 2, &[4], false, &mut rng);
    let z = BeliefState::uniform(2);
    let greedy = actor.act(&z).unwrap();
    let hits = (0..draws).filter(|_| sample_action(&actor, &z, 0.5, &mut rng).unwrap() == greedy).count();
    let sigma = (0.25 / draws as f64).sqrt();
    assert!((hits as f64 / draws as f64 - 0.5).abs() < 3.0 * sigma, "{hits} greedy draws");
}

#[test]
fn tiny_run_bookkeeping_and_determinism() {
    let spec = make_ising(2).unwrap();
    let config = DdpgConfig {
        episodes: 1,
        steps_per_episode: 2,
        hidden: vec![4],
        minibatch: 2,
        warmup: 1,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&spec, config.clone()).unwrap();
    trainer.run_with(|_| {}).unwrap();
    assert_eq!(trainer.buffer().len(), 2);
    assert_eq!(trainer.curve().len(), 1);

    let config = DdpgConfig { episodes: 5, steps_per_episode: 30, seed: 7, ..config };
    let run = || {
        let mut t = Trainer::new(&spec, config.clone()).unwrap();
        t.run_with(|_| {}).unwrap();
        t.policy()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.actor, b.actor);
}
