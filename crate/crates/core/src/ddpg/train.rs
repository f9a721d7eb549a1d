use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{actor_update, compute_targets, critic_update, sample_action, Actor, Critic};
use super::network::Adam;
use super::replay::{ReplayBuffer, Transition};
use crate::belief::{ActionMatrix, BeliefState, EnvState};
use crate::channels::ChannelSpec;
use crate::error::{Error, Result};
use crate::rng::{stream, Component, RngState};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub discount: f64,
    pub minibatch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    /// Use Polyak-averaged copies of both networks for the targets.
    pub target_networks: bool,
    pub target_tau: f64,
    /// Regress the critic at `A(z_i)` instead of the stored action `u_i`.
    pub critic_on_policy_action: bool,
    /// No network updates until the buffer holds this many transitions.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            steps_per_episode: 500,
            epsilon: 0.1,
            epsilon_decay: 0.999,
            discount: 0.99,
            minibatch: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            buffer_capacity: 1_000_000,
            hidden: vec![300, 300, 300],
            batch_norm: true,
            target_networks: false,
            target_tau: 0.005,
            critic_on_policy_action: false,
            warmup: 64,
            seed: 0,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.episodes == 0 {
            problems.push("episodes must be positive");
        }
        if self.steps_per_episode == 0 {
            problems.push("steps_per_episode must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            problems.push("epsilon must lie in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            problems.push("epsilon_decay must lie in [0,1]");
        }
        if !(0.0..1.0).contains(&self.discount) {
            problems.push("discount must lie in [0,1)");
        }
        if self.minibatch == 0 {
            problems.push("minibatch must be positive");
        }
        if self.actor_lr < 0.0 || self.critic_lr < 0.0 {
            problems.push("learning rates must be non-negative");
        }
        if self.buffer_capacity == 0 {
            problems.push("buffer_capacity must be positive");
        }
        if self.hidden.iter().any(|&w| w == 0) {
            problems.push("hidden widths must be positive");
        }
        if !(0.0..=1.0).contains(&self.target_tau) {
            problems.push("target_tau must lie in [0,1]");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(problems.join("; ")))
        }
    }
}

/// Per-episode training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    pub epsilon: f64,
    /// Mean critic loss; `None` before the first update.
    pub critic_loss: Option<f64>,
}

/// Actor, critic, and the record of how they were trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub actor: Actor,
    pub critic: Critic,
    pub curve: Vec<EpisodeStats>,
    pub config: DdpgConfig,
}

impl TrainedPolicy {
    pub fn act(&self, z: &BeliefState) -> Result<ActionMatrix> {
        self.actor.act(z)
    }
}

/// Everything needed to inspect or evaluate a training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub channel: String,
    pub channel_config: String,
    pub policy: TrainedPolicy,
    pub actor_optimizer: Adam,
    pub critic_optimizer: Adam,
    pub epsilon: f64,
    pub episodes_done: usize,
    pub env_rng: RngState,
    pub exploration_rng: RngState,
    pub replay_rng: RngState,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn spec(&self) -> Result<ChannelSpec> {
        ChannelSpec::from_config_str(&self.channel_config)
    }
}

/// Write the learning curve as CSV.
pub fn write_curve_csv<W: Write>(curve: &[EpisodeStats], mut out: W) -> std::io::Result<()> {
    writeln!(out, "episode,mean_reward,epsilon,loss")?;
    for e in curve {
        let loss = e.critic_loss.map_or(String::new(), |l| l.to_string());
        writeln!(out, "{},{},{},{loss}", e.episode, e.mean_reward, e.epsilon)?;
    }
    Ok(())
}

/// The DDPG learner: one environment, one replay buffer, one pair of
/// networks.
pub struct Trainer<'a> {
    spec: &'a ChannelSpec,
    config: DdpgConfig,
    actor: Actor,
    critic: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
    targets: Option<(Actor, Critic)>,
    buffer: ReplayBuffer,
    env: EnvState,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    epsilon: f64,
    curve: Vec<EpisodeStats>,
}

impl<'a> Trainer<'a> {
    pub fn new(spec: &'a ChannelSpec, config: DdpgConfig) -> Result<Self> {
        config.validate()?;
        let (nx, ns) = (spec.input_size(), spec.state_size());
        let mut init_rng = stream(config.seed, Component::NetworkInit, 0);
        let actor = Actor::new(nx, ns, &config.hidden, config.batch_norm, &mut init_rng);
        let critic = Critic::new(nx, ns, &config.hidden, config.batch_norm, &mut init_rng);
        let actor_opt = Adam::new(&actor.net, config.actor_lr);
        let critic_opt = Adam::new(&critic.net, config.critic_lr);
        let targets = config.target_networks.then(|| (actor.clone(), critic.clone()));
        let env = EnvState::new(spec, 0, stream(config.seed, Component::Environment, 0))?;
        Ok(Self {
            spec,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            explore_rng: stream(config.seed, Component::Exploration, 0),
            replay_rng: stream(config.seed, Component::Replay, 0),
            epsilon: config.epsilon,
            config,
            actor,
            critic,
            actor_opt,
            critic_opt,
            targets,
            env,
            curve: Vec::new(),
        })
    }

    pub fn curve(&self) -> &[EpisodeStats] {
        &self.curve
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_done(&self) -> bool {
        self.curve.len() >= self.config.episodes
    }

    /// Run one episode. On a numeric failure the networks are rolled back
    /// to their state at the start of the episode and the error returned.
    pub fn run_episode(&mut self) -> Result<EpisodeStats> {
        let saved = (
            self.actor.clone(),
            self.critic.clone(),
            self.actor_opt.clone(),
            self.critic_opt.clone(),
            self.targets.clone(),
        );
        match self.episode_inner() {
            Ok(stats) => Ok(stats),
            Err(e) => {
                (self.actor, self.critic, self.actor_opt, self.critic_opt, self.targets) = saved;
                Err(e)
            }
        }
    }

    fn episode_inner(&mut self) -> Result<EpisodeStats> {
        let episode = self.curve.len();
        self.env.reset(self.spec, None)?;
        let mut reward_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        for _ in 0..self.config.steps_per_episode {
            let z = self.env.belief().clone();
            let u = sample_action(&self.actor, &z, self.epsilon, &mut self.explore_rng)?;
            let step = self.env.step(&u, self.spec)?;
            reward_sum += step.reward;
            self.buffer.push(Transition {
                state: z,
                action: u,
                reward: step.reward,
                next_state: step.belief,
            });
            if self.buffer.len() >= self.config.warmup.max(1) {
                loss_sum += self.update()?;
                updates += 1;
            }
        }
        let stats = EpisodeStats {
            episode,
            mean_reward: reward_sum / self.config.steps_per_episode as f64,
            epsilon: self.epsilon,
            critic_loss: (updates > 0).then(|| loss_sum / updates as f64),
        };
        self.curve.push(stats.clone());
        self.epsilon *= self.config.epsilon_decay;
        Ok(stats)
    }

    fn update(&mut self) -> Result<f64> {
        let batch = self.buffer.sample(self.config.minibatch, &mut self.replay_rng);
        let targets = match &self.targets {
            Some((actor_t, critic_t)) => {
                compute_targets(&batch, self.config.discount, critic_t, actor_t)?
            }
            None => compute_targets(&batch, self.config.discount, &self.critic, &self.actor)?,
        };
        let actions = if self.config.critic_on_policy_action {
            self.actor.forward_batch(&batch.states, super::agent::update_mode(batch.len()))?.0
        } else {
            batch.actions.clone()
        };
        let loss = critic_update(
            &mut self.critic,
            &mut self.critic_opt,
            &batch.states,
            &actions,
            &targets,
        )?;
        actor_update(&mut self.actor, &mut self.actor_opt, &self.critic, &batch.states)?;
        if let Some((actor_t, critic_t)) = self.targets.as_mut() {
            actor_t.net.soft_update(&self.actor.net, self.config.target_tau);
            critic_t.net.soft_update(&self.critic.net, self.config.target_tau);
        }
        Ok(loss)
    }

    /// Run the remaining episodes, calling `on_episode` after each.
    pub fn run_with(&mut self, mut on_episode: impl FnMut(&EpisodeStats)) -> Result<()> {
        while !self.is_done() {
            let stats = self.run_episode()?;
            on_episode(&stats);
        }
        Ok(())
    }

    pub fn policy(&self) -> TrainedPolicy {
        TrainedPolicy {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            curve: self.curve.clone(),
            config: self.config.clone(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            channel: self.spec.name().to_string(),
            channel_config: self.spec.to_config_string(),
            policy: self.policy(),
            actor_optimizer: self.actor_opt.clone(),
            critic_optimizer: self.critic_opt.clone(),
            epsilon: self.epsilon,
            episodes_done: self.curve.len(),
            env_rng: RngState::capture(self.env.rng()),
            exploration_rng: RngState::capture(&self.explore_rng),
            replay_rng: RngState::capture(&self.replay_rng),
        }
    }
}

/// Train a policy from scratch.
pub fn train(spec: &ChannelSpec, config: &DdpgConfig) -> Result<TrainedPolicy> {
    let mut trainer = Trainer::new(spec, config.clone())?;
    trainer.run_with(|_| {})?;
    Ok(trainer.policy())
}
