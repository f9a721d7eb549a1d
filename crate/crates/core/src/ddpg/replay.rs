use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::belief::{ActionMatrix, BeliefState};

/// One `(z, u, r, z')` experience record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: BeliefState,
    pub action: ActionMatrix,
    pub reward: f64,
    pub next_state: BeliefState,
}

/// Column-stacked minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub rewards: DVector<f64>,
    pub next_states: DMatrix<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Self {
        let items: Vec<&Transition> = items.into_iter().collect();
        let n = items.len();
        let ns = items.first().map_or(0, |t| t.state.len());
        let na = items.first().map_or(0, |t| t.action.as_slice().len());
        let mut states = DMatrix::zeros(ns, n);
        let mut actions = DMatrix::zeros(na, n);
        let mut next_states = DMatrix::zeros(ns, n);
        let mut rewards = DVector::zeros(n);
        for (j, t) in items.iter().enumerate() {
            states.column_mut(j).copy_from_slice(t.state.probs());
            actions.column_mut(j).copy_from_slice(t.action.as_slice());
            next_states.column_mut(j).copy_from_slice(t.next_state.probs());
            rewards[j] = t.reward;
        }
        Self { states, actions, rewards, next_states }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, cursor: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Batch {
        let idx = self.sample_indices(n, rng);
        Batch::from_transitions(idx.iter().map(|&i| &self.items[i]))
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }
}
