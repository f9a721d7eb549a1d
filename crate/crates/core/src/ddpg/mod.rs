//! Deep deterministic policy gradient on the belief MDP.
//!
//! Both networks are multilayer perceptrons with optional batch
//! normalization, differentiated by hand and trained with Adam. Each
//! environment step stores one transition, samples a minibatch, regresses
//! the critic on bootstrapped targets, and moves the actor along the
//! critic's action gradient.

mod agent;
mod eval;
mod network;
mod replay;
mod train;

pub use agent::{
    actor_update, compute_targets, critic_update, random_action, sample_action, softmax_columns,
    update_mode, ActionValue, Actor, Critic, HEAD_INIT_BOUND,
};
pub use eval::{
    batch_means, evaluate_policy, rollout, ConstantPolicy, Evaluation, FnPolicy, Policy,
    RolloutStep, EVAL_BATCHES,
};
pub use network::{Adam, BatchNorm, Dense, ForwardCache, Grads, HiddenLayer, Mlp, Mode};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{
    train, write_curve_csv, Checkpoint, DdpgConfig, EpisodeStats, TrainedPolicy, Trainer,
};
