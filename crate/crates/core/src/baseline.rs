//! Relative value iteration on a discretized belief simplex.
//!
//! Only channels with at most two states and two inputs are handled: the
//! belief is then one coordinate `z(0)` and an action is one probability
//! `u(0|s)` per state, so both can be gridded exhaustively.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::belief::{step_outcomes, ActionMatrix, BeliefState};
use crate::channels::ChannelSpec;
use crate::ddpg::Policy;
use crate::error::{Error, Result};

/// Grid and iteration controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Nodes on the belief coordinate.
    pub belief_nodes: usize,
    /// Points per action coordinate.
    pub action_points: usize,
    /// Points per coordinate of the local grid searched around each greedy
    /// action after the first convergence; 0 skips refinement.
    pub refine_points: usize,
    pub max_sweeps: usize,
    /// Stop once the span of the Bellman residual falls below this.
    pub tol: f64,
    /// Weight of the new iterate in each sweep.
    pub damping: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { belief_nodes: 201, action_points: 51, refine_points: 9, max_sweeps: 20_000, tol: 1e-9, damping: 0.5 }
    }
}

/// Value table and greedy actions on the belief grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridValueFunction {
    pub state_size: usize,
    /// Grid coordinates `z(0)`, increasing.
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub actions: Vec<ActionMatrix>,
}

impl GridValueFunction {
    pub fn belief(&self, i: usize) -> BeliefState {
        belief_at(self.state_size, self.nodes[i])
    }

    /// Linear interpolation of the value at coordinate `z0`.
    pub fn value_at(&self, z0: f64) -> f64 {
        let (j, w) = bracket(&self.nodes, z0);
        if w == 0.0 {
            self.values[j]
        } else {
            (1.0 - w) * self.values[j] + w * self.values[j + 1]
        }
    }

    pub fn nearest(&self, z0: f64) -> usize {
        let (j, w) = bracket(&self.nodes, z0);
        if w > 0.5 {
            j + 1
        } else {
            j
        }
    }

    /// CSV dump: `z0,value,u(0|s)...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let heads: Vec<String> = (0..self.state_size).map(|s| format!("u0_s{s}")).collect();
        writeln!(out, "z0,value,{}", heads.join(","))?;
        for ((z, v), u) in self.nodes.iter().zip(&self.values).zip(&self.actions) {
            let cols: Vec<String> = (0..self.state_size).map(|s| u.get(0, s).to_string()).collect();
            writeln!(out, "{z},{v},{}", cols.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueIterationResult {
    /// Average reward per channel use, in bits.
    pub rate: f64,
    pub span: f64,
    pub sweeps: usize,
    pub table: GridValueFunction,
}

/// Plays the greedy action of the nearest grid node.
#[derive(Clone, Debug)]
pub struct GridPolicy {
    pub table: GridValueFunction,
}

impl Policy for GridPolicy {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        let z0 = if self.table.state_size == 1 { 0.0 } else { z.probs()[0] };
        Ok(self.table.actions[self.table.nearest(z0)].clone())
    }
}

fn belief_at(state_size: usize, z0: f64) -> BeliefState {
    if state_size == 1 {
        BeliefState::uniform(1)
    } else {
        BeliefState::from_unnormalized(vec![z0.clamp(0.0, 1.0), (1.0 - z0).clamp(0.0, 1.0)])
    }
}

/// Lower node index and the weight of the upper node.
fn bracket(nodes: &[f64], z0: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 {
        return (0, 0.0);
    }
    let step = 1.0 / (n - 1) as f64;
    let pos = (z0.clamp(0.0, 1.0) / step).min((n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let w = pos - j as f64;
    if w <= 0.0 {
        (j, 0.0)
    } else if w >= 1.0 {
        (j + 1, 0.0)
    } else {
        (j, w)
    }
}

/// Precomputed one-step consequences of an action at a node.
#[derive(Clone, Debug)]
struct Candidate {
    params: Vec<f64>,
    reward: f64,
    /// `(p(y), lower node, upper weight)` per reachable output.
    branches: Vec<(f64, usize, f64)>,
}

fn action_from_params(nx: usize, ns: usize, params: &[f64]) -> ActionMatrix {
    if nx == 1 {
        return ActionMatrix::uniform(1, ns);
    }
    ActionMatrix::from_fn(2, ns, |x, s| if x == 0 { params[s] } else { 1.0 - params[s] })
        .expect("parameters lie in [0,1]")
}

fn candidate(spec: &ChannelSpec, nodes: &[f64], z: &BeliefState, params: Vec<f64>) -> Result<Candidate> {
    let u = action_from_params(spec.input_size(), spec.state_size(), &params);
    let out = step_outcomes(z, &u, spec)?;
    let branches = out
        .branches
        .into_iter()
        .filter_map(|(p, next)| {
            let next = next?;
            let z0 = if spec.state_size() == 1 { 0.0 } else { next.probs()[0] };
            let (j, w) = bracket(nodes, z0);
            Some((p, j, w))
        })
        .collect();
    Ok(Candidate { params, reward: out.reward, branches })
}

fn parameter_grid(dims: usize, points: usize, center: Option<&[f64]>, half_width: f64) -> Vec<Vec<f64>> {
    let axis = |d: usize| -> Vec<f64> {
        match center {
            None => (0..points).map(|i| i as f64 / (points - 1).max(1) as f64).collect(),
            Some(c) => (0..points)
                .map(|i| {
                    let t = if points == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (points - 1) as f64 };
                    (c[d] + t * half_width).clamp(0.0, 1.0)
                })
                .collect(),
        }
    };
    let mut out = vec![Vec::new()];
    for d in 0..dims {
        let ax = axis(d);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                ax.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn bellman(candidates: &[Candidate], h: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (a, c) in candidates.iter().enumerate() {
        let mut v = c.reward;
        for &(p, j, w) in &c.branches {
            v += p * if w == 0.0 { h[j] } else { (1.0 - w) * h[j] + w * h[j + 1] };
        }
        if v > best.0 {
            best = (v, a);
        }
    }
    best
}

/// Run damped relative value iteration until the Bellman residual span
/// drops below `tol`; returns `(gain, span)`.
fn iterate(
    table: &[Vec<Candidate>],
    h: &mut [f64],
    greedy: &mut [usize],
    reference: usize,
    config: &GridConfig,
    sweeps_done: &mut usize,
) -> (f64, f64) {
    let n = h.len();
    let mut th = vec![0.0; n];
    let mut span = f64::INFINITY;
    let mut gain = f64::NAN;
    while *sweeps_done < config.max_sweeps {
        for i in 0..n {
            let (v, a) = bellman(&table[i], h);
            th[i] = v;
            greedy[i] = a;
        }
        let (lo, hi) = th.iter().zip(h.iter()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (t, v)| {
            (lo.min(t - v), hi.max(t - v))
        });
        *sweeps_done += 1;
        span = hi - lo;
        gain = 0.5 * (lo + hi);
        if span < config.tol {
            break;
        }
        let anchor = th[reference];
        for i in 0..n {
            h[i] = (1.0 - config.damping) * h[i] + config.damping * (th[i] - anchor);
        }
    }
    (gain, span)
}

/// Average-reward value iteration on a grid over `z(0)`, with an exhaustive
/// action grid and one local refinement around each greedy action.
pub fn value_iteration(spec: &ChannelSpec, config: &GridConfig) -> Result<ValueIterationResult> {
    let (nx, ns) = (spec.input_size(), spec.state_size());
    if ns > 2 || nx > 2 {
        return Err(Error::Domain(format!(
            "grid value iteration handles at most 2 states and 2 inputs, got |S| = {ns}, |X| = {nx}"
        )));
    }
    if config.belief_nodes < 2 && ns == 2 {
        return Err(Error::Domain("at least 2 belief nodes are needed".into()));
    }
    if config.action_points < 2 || !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::Domain("need at least 2 action points and damping in (0,1]".into()));
    }
    let nodes: Vec<f64> = if ns == 1 {
        vec![0.0]
    } else {
        (0..config.belief_nodes).map(|i| i as f64 / (config.belief_nodes - 1) as f64).collect()
    };
    let dims = if nx == 1 { 0 } else { ns };
    let base_grid = parameter_grid(dims, config.action_points, None, 0.0);
    let mut table: Vec<Vec<Candidate>> = nodes
        .iter()
        .map(|&z0| {
            let z = belief_at(ns, z0);
            base_grid.iter().map(|params| candidate(spec, &nodes, &z, params.clone())).collect()
        })
        .collect::<Result<_>>()?;
    let reference = nodes.len() / 2;
    let mut h = vec![0.0; nodes.len()];
    let mut greedy = vec![0; nodes.len()];
    let mut sweeps = 0;
    let (mut gain, mut span) = iterate(&table, &mut h, &mut greedy, reference, config, &mut sweeps);

    if config.refine_points > 1 && dims > 0 && span < config.tol {
        let half_width = 1.0 / (config.action_points - 1) as f64;
        for (i, &z0) in nodes.iter().enumerate() {
            let z = belief_at(ns, z0);
            let center = table[i][greedy[i]].params.clone();
            for params in parameter_grid(dims, config.refine_points, Some(&center), half_width) {
                table[i].push(candidate(spec, &nodes, &z, params)?);
            }
        }
        (gain, span) = iterate(&table, &mut h, &mut greedy, reference, config, &mut sweeps);
    }

    if span >= config.tol {
        return Err(Error::NonConvergence(format!(
            "span {span:.3e} after {sweeps} sweeps (tolerance {:.1e}); gain estimate {gain}",
            config.tol
        )));
    }
    let actions = greedy
        .iter()
        .enumerate()
        .map(|(i, &a)| action_from_params(nx, ns, &table[i][a].params))
        .collect();
    Ok(ValueIterationResult {
        rate: gain,
        span,
        sweeps,
        table: GridValueFunction { state_size: ns, nodes, values: h, actions },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::make_ising;

    #[test]
    fn clean_bit() {
        let ch = ChannelSpec::new("clean", 2, 2, 1, |y, x, _| if x == y { 1.0 } else { 0.0 }, |_, _, _| Some(0))
            .unwrap();
        let r = value_iteration(&ch, &GridConfig::default()).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-6, "{}", r.rate);
    }

    #[test]
    fn rejects_large_alphabets() {
        let ch = make_ising(3).unwrap();
        assert!(matches!(value_iteration(&ch, &GridConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn reports_non_convergence() {
        let ch = make_ising(2).unwrap();
        let config = GridConfig { max_sweeps: 3, ..Default::default() };
        assert!(matches!(value_iteration(&ch, &config), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn bracket_endpoints() {
        let nodes: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        assert_eq!(bracket(&nodes, 0.0), (0, 0.0));
        assert_eq!(bracket(&nodes, 1.0), (4, 0.0));
        let (j, w) = bracket(&nodes, 0.3);
        assert_eq!(j, 1);
        assert!((w - 0.2).abs() < 1e-12);
    }
}
