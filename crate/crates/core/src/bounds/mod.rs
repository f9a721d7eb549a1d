//! Q-graph upper bound `sup I(X,S;Y|Q)`, its tightness test, and the
//! Ising rate formula.

mod ising;

pub use ising::{ising_rate_objective, maximize_ising_rate, IsingOptimum, GOLDEN_TOL, SCAN_POINTS};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::ddpg::random_action;
use crate::error::{Error, Result};
use crate::qgraph::QGraph;
use crate::rng::{stream, Component};

/// Column-sum tolerance for input distributions.
pub const COLUMN_TOL: f64 = 1e-9;

/// Residual accepted from the direct stationary solve.
pub const STATIONARY_TOL: f64 = 1e-9;

/// Smallest entry kept by the ascent.
pub const ENTRY_FLOOR: f64 = 1e-14;

/// Gap below which two restart values count as equal.
pub const TIE_TOL: f64 = 1e-12;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Input distribution `p(x|s,q)` on a Q-graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInputDist {
    pub input_size: usize,
    pub state_size: usize,
    pub node_count: usize,
    /// Entry `((q * |S| + s) * |X| + x)`.
    pub probs: Vec<f64>,
}

impl GraphInputDist {
    pub fn new(input_size: usize, state_size: usize, node_count: usize, probs: Vec<f64>) -> Result<Self> {
        let d = Self { input_size, state_size, node_count, probs };
        d.check()?;
        Ok(d)
    }

    pub fn uniform(input_size: usize, state_size: usize, node_count: usize) -> Self {
        let n = input_size * state_size * node_count;
        Self { input_size, state_size, node_count, probs: vec![1.0 / input_size as f64; n] }
    }

    /// Build from a per-node function returning `p(x|s)` as `f(q)(x, s)`.
    pub fn from_fn(
        input_size: usize,
        state_size: usize,
        node_count: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(input_size * state_size * node_count);
        for q in 0..node_count {
            for s in 0..state_size {
                for x in 0..input_size {
                    probs.push(f(q, s, x));
                }
            }
        }
        Self::new(input_size, state_size, node_count, probs)
    }

    /// Each node's representative action, read as `p(x|s,q)`.
    pub fn from_graph_actions(graph: &QGraph) -> Result<Self> {
        let first = graph.actions.first().ok_or_else(|| Error::Domain("empty Q-graph".into()))?;
        let (nx, ns) = (first.input_size(), first.state_size());
        Self::from_fn(nx, ns, graph.node_count(), |q, s, x| graph.actions[q].get(x, s))
    }

    /// Flat-Dirichlet draw on every column.
    pub fn random<R: rand::Rng>(input_size: usize, state_size: usize, node_count: usize, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(input_size * state_size * node_count);
        for _ in 0..node_count {
            let u = random_action(input_size, state_size, rng);
            for s in 0..state_size {
                probs.extend(u.column(s));
            }
        }
        Self { input_size, state_size, node_count, probs }
    }

    fn check(&self) -> Result<()> {
        if self.probs.len() != self.input_size * self.state_size * self.node_count {
            return Err(Error::Shape(format!(
                "input table has {} entries, expected {}x{}x{}",
                self.probs.len(),
                self.input_size,
                self.state_size,
                self.node_count
            )));
        }
        if self.probs.iter().any(|&p| !(0.0..=1.0 + COLUMN_TOL).contains(&p)) {
            return Err(Error::Domain("input probabilities must lie in [0,1]".into()));
        }
        for (c, col) in self.probs.chunks(self.input_size).enumerate() {
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_TOL {
                return Err(Error::Domain(format!(
                    "column (s={}, q={}) sums to {sum}",
                    c % self.state_size,
                    c / self.state_size
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, s: usize, q: usize) -> f64 {
        self.probs[(q * self.state_size + s) * self.input_size + x]
    }

    pub fn column(&self, s: usize, q: usize) -> &[f64] {
        let start = (q * self.state_size + s) * self.input_size;
        &self.probs[start..start + self.input_size]
    }

    /// Same distribution after relabelling nodes; node `order[i]` becomes `i`.
    pub fn permute(&self, order: &[usize]) -> Self {
        let width = self.input_size * self.state_size;
        let probs = order.iter().flat_map(|&old| self.probs[old * width..(old + 1) * width].iter().copied()).collect();
        Self { probs, ..self.clone() }
    }
}

/// Stationary distribution of the `(s, q)` chain induced by an input
/// distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryJoint {
    pub state_size: usize,
    pub node_count: usize,
    /// Entry `q * |S| + s`.
    pub pi: Vec<f64>,
    /// Set when the chain has more than one closed class.
    pub reducible: bool,
    /// `max |πT - π|`.
    pub residual: f64,
}

impl StationaryJoint {
    #[inline]
    pub fn get(&self, s: usize, q: usize) -> f64 {
        self.pi[q * self.state_size + s]
    }

    pub fn node_marginal(&self) -> Vec<f64> {
        self.pi.chunks(self.state_size).map(|c| c.iter().sum()).collect()
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.state_size];
        for c in self.pi.chunks(self.state_size) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v;
            }
        }
        out
    }
}

fn check_compatible(spec: &ChannelSpec, graph: &QGraph, d: &GraphInputDist) -> Result<()> {
    if graph.output_size != spec.output_size() {
        return Err(Error::Shape(format!(
            "Q-graph has {} outputs, channel has {}",
            graph.output_size,
            spec.output_size()
        )));
    }
    if d.input_size != spec.input_size() || d.state_size != spec.state_size() || d.node_count != graph.node_count() {
        return Err(Error::Shape("input table does not match channel and Q-graph".into()));
    }
    for (q, row) in graph.transitions.iter().enumerate() {
        if row.len() != spec.output_size() || row.iter().any(|&t| t >= graph.node_count()) {
            return Err(Error::Domain(format!("node {q} has an incomplete transition row")));
        }
    }
    Ok(())
}

/// One nonzero `kernel(y|x,s)` term, with the pair it leads to.
#[derive(Clone, Copy, Debug)]
struct Term {
    /// Index `q * |S| + s` of the source pair.
    pair: usize,
    x: usize,
    y: usize,
    prob: f64,
    log_prob: f64,
    /// Index `q' * |S| + s'` of the destination pair.
    next: usize,
}

/// Channel and Q-graph flattened into the terms every bound evaluation
/// walks.
struct Model {
    nx: usize,
    ns: usize,
    ny: usize,
    pairs: usize,
    terms: Vec<Term>,
}

impl Model {
    fn new(spec: &ChannelSpec, graph: &QGraph) -> Self {
        let (nx, ns, ny) = (spec.input_size(), spec.state_size(), spec.output_size());
        let mut terms = Vec::new();
        for q in 0..graph.node_count() {
            for s in 0..ns {
                for x in 0..nx {
                    for y in 0..ny {
                        let prob = spec.kernel(y, x, s);
                        if prob == 0.0 {
                            continue;
                        }
                        let Some(s_next) = spec.state_fn(x, y, s) else { continue };
                        terms.push(Term {
                            pair: q * ns + s,
                            x,
                            y,
                            prob,
                            log_prob: prob.log2(),
                            next: graph.next(q, y) * ns + s_next,
                        });
                    }
                }
            }
        }
        Self { nx, ns, ny, pairs: ns * graph.node_count(), terms }
    }

    /// Transition matrix over `(s, q)` pairs for a column-normalized table.
    fn transition_matrix(&self, probs: &[f64]) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.pairs, self.pairs);
        for term in &self.terms {
            let px = probs[term.pair * self.nx + term.x];
            if px != 0.0 {
                t[(term.pair, term.next)] += px * term.prob;
            }
        }
        t
    }

    /// `I(X,S;Y|Q)` in bits, without validation. Columns are normalized
    /// first, and the value stays defined while the induced output
    /// probabilities are positive, so small steps off the simplex are
    /// allowed.
    fn mi(&self, probs: &[f64]) -> f64 {
        let normalized: Vec<f64> = probs
            .chunks(self.nx)
            .flat_map(|col| {
                let sum: f64 = col.iter().sum();
                col.iter().map(move |v| v / sum)
            })
            .collect();
        let t = self.transition_matrix(&normalized);
        // several closed classes make the direct system singular
        let pi = direct_solve(&t).unwrap_or_else(|| stationary_from_matrix(&t).0);
        let nq = self.pairs / self.ns;
        let mut pqy = vec![0.0; nq * self.ny];
        let mut conditional = 0.0;
        for term in &self.terms {
            let j = pi[term.pair] * normalized[term.pair * self.nx + term.x] * term.prob;
            pqy[(term.pair / self.ns) * self.ny + term.y] += j;
            conditional -= j * term.log_prob;
        }
        let mut marginal = 0.0;
        for q in 0..nq {
            let pq: f64 = pi.rows(q * self.ns, self.ns).sum();
            for &p in &pqy[q * self.ny..(q + 1) * self.ny] {
                if p > 0.0 && pq > 0.0 {
                    marginal -= p * (p / pq).log2();
                }
            }
        }
        marginal - conditional
    }

    fn gradient(&self, probs: &[f64], stencil: Stencil) -> Vec<f64> {
        let mut work = probs.to_vec();
        let mut grad = vec![0.0; probs.len()];
        for i in 0..probs.len() {
            let base = probs[i];
            let h = FD_STEP.min((0.5 * base).max(1e-9));
            let mut at = |offset: f64| {
                work[i] = base + offset;
                let v = self.mi(&work);
                work[i] = base;
                v
            };
            grad[i] = match stencil {
                Stencil::Central => (at(h) - at(-h)) / (2.0 * h),
                Stencil::FourPoint => (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h),
            };
        }
        grad
    }
}

/// Closed communicating classes of the support graph of `t`, each listed
/// in increasing index order; classes are ordered by smallest member.
fn closed_classes(t: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = t.nrows();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if t[(v, w)] > 0.0 && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen
        })
        .collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let recurrent = (0..n).all(|j| !reach[i][j] || reach[j][i]);
        if recurrent && !classes.iter().any(|c| c.contains(&i)) {
            classes.push((0..n).filter(|&j| reach[i][j]).collect());
        }
    }
    classes
}

fn residual(t: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    (t.transpose() * pi - pi).amax()
}

/// Limit of the lazy chain from the uniform distribution.
fn power_iteration(t: &DMatrix<f64>) -> DVector<f64> {
    let n = t.nrows();
    let lazy = (t.transpose() + DMatrix::identity(n, n)) * 0.5;
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let next = &lazy * &pi;
        let change = (&next - &pi).amax();
        pi = next;
        if change < 1e-16 {
            break;
        }
    }
    let total = pi.sum();
    pi / total
}

fn direct_solve(t: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = t.nrows();
    let mut a = t.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs)?;
    (residual(t, &pi) < STATIONARY_TOL && pi.iter().all(|&v| v > -1e-12)).then_some(pi)
}

/// Stationary vector, reducibility flag, residual. With several closed
/// classes the one absorbing the most mass from a uniform start wins, ties
/// going to the class with the smallest index.
fn stationary_from_matrix(t: &DMatrix<f64>) -> (DVector<f64>, bool, f64) {
    let classes = closed_classes(t);
    if classes.len() == 1 {
        if let Some(pi) = direct_solve(t) {
            let r = residual(t, &pi);
            return (pi, false, r);
        }
        let pi = power_iteration(t);
        let r = residual(t, &pi);
        return (pi, false, r);
    }
    let limit = power_iteration(t);
    let mass = |c: &Vec<usize>| c.iter().map(|&i| limit[i]).sum::<f64>();
    let mut chosen = &classes[0];
    for c in &classes[1..] {
        if mass(c) > mass(chosen) + 1e-12 {
            chosen = c;
        }
    }
    let total = mass(chosen);
    let mut pi = DVector::zeros(t.nrows());
    for &i in chosen {
        pi[i] = limit[i] / total;
    }
    let r = residual(t, &pi);
    (pi, true, r)
}

/// Stationary distribution of the chain `T[(s,q)→(s',q')] = Σ d(x|s,q)
/// kernel(y|x,s) 1{s'=f(x,y,s)} 1{q'=g(q,y)}`. Chains with several closed
/// classes are flagged and resolved to the class that absorbs the most mass
/// from a uniform start.
pub fn stationary_joint(spec: &ChannelSpec, graph: &QGraph, d: &GraphInputDist) -> Result<StationaryJoint> {
    check_compatible(spec, graph, d)?;
    let t = Model::new(spec, graph).transition_matrix(&d.probs);
    let (pi, reducible, residual) = stationary_from_matrix(&t);
    let pi: Vec<f64> = pi.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    Ok(StationaryJoint {
        state_size: spec.state_size(),
        node_count: graph.node_count(),
        pi: pi.into_iter().map(|v| v / total).collect(),
        reducible,
        residual,
    })
}

/// `I(X,S;Y|Q) = Σ_q π(q) [H(Y|Q=q) - H(Y|X,S,Q=q)]` in bits.
pub fn conditional_mi(spec: &ChannelSpec, graph: &QGraph, d: &GraphInputDist) -> Result<f64> {
    check_compatible(spec, graph, d)?;
    Ok(Model::new(spec, graph).mi(&d.probs))
}

/// Finite-difference stencil for [`bound_gradient`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    Central,
    FourPoint,
}

/// Finite-difference gradient of the bound with respect to each entry of
/// `d`, taken on the scale-invariant extension so that every column of the
/// result is orthogonal to its column of `d`.
pub fn bound_gradient(spec: &ChannelSpec, graph: &QGraph, d: &GraphInputDist, stencil: Stencil) -> Result<Vec<f64>> {
    check_compatible(spec, graph, d)?;
    Ok(Model::new(spec, graph).gradient(&d.probs, stencil))
}

/// Ascent controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AscentConfig {
    pub restarts: usize,
    /// Stop when the simplex-projected gradient norm falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { restarts: 20, tol: 1e-7, max_iterations: 5000, seed: 0 }
    }
}

/// Outcome of one ascent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptimum {
    pub value: f64,
    pub argmax: GraphInputDist,
    pub restarts: Vec<RestartOutcome>,
}

impl BoundOptimum {
    /// Largest gap between converged restart values.
    pub fn spread(&self) -> f64 {
        let vals = self.restarts.iter().filter(|r| r.converged).map(|r| r.value);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi >= lo {
            hi - lo
        } else {
            f64::NAN
        }
    }
}

fn projected_norm(probs: &[f64], grad: &[f64], nx: usize) -> f64 {
    let mut total = 0.0;
    for (d, g) in probs.chunks(nx).zip(grad.chunks(nx)) {
        let mean: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
        total += d.iter().zip(g).map(|(a, b)| a * (b - mean).powi(2)).sum::<f64>();
    }
    total.sqrt()
}

fn mirror_step(probs: &[f64], grad: &[f64], nx: usize, eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(probs.len());
    for (d, g) in probs.chunks(nx).zip(grad.chunks(nx)) {
        let top = g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(eta * v));
        let col: Vec<f64> = d.iter().zip(g).map(|(a, b)| (a * (eta * b - top).exp()).max(ENTRY_FLOOR)).collect();
        let sum: f64 = col.iter().sum();
        out.extend(col.into_iter().map(|v| v / sum));
    }
    out
}

fn ascend(model: &Model, start: &[f64], config: &AscentConfig, warm_start: bool) -> (Vec<f64>, RestartOutcome) {
    let nx = model.nx;
    let mut d = mirror_step(start, &vec![0.0; start.len()], nx, 0.0);
    let mut value = model.mi(&d);
    let mut eta = 1.0;
    let mut norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let grad = model.gradient(&d, Stencil::Central);
        norm = projected_norm(&d, &grad, nx);
        if norm < config.tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while eta > 1e-12 {
            let candidate = mirror_step(&d, &grad, nx, eta);
            let cv = model.mi(&candidate);
            if cv.is_finite() && cv >= value + 1e-4 * eta * norm * norm {
                d = candidate;
                value = cv;
                eta = (eta * 2.0).min(1e6);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = norm < config.tol;
    (d, RestartOutcome { value, iterations, gradient_norm: norm, converged, warm_start })
}

/// Maximize `I(X,S;Y|Q)` over `p(x|s,q)` by multiplicative-weights ascent
/// from `config.restarts` flat-Dirichlet starts.
pub fn maximize_bound(spec: &ChannelSpec, graph: &QGraph, config: &AscentConfig) -> Result<BoundOptimum> {
    maximize_bound_from(spec, graph, config, &[])
}

/// As [`maximize_bound`], with extra starting tables run ahead of the random
/// ones. Values within [`TIE_TOL`] of the incumbent do not displace it, so
/// near-ties go to the earliest start.
pub fn maximize_bound_from(
    spec: &ChannelSpec,
    graph: &QGraph,
    config: &AscentConfig,
    warm: &[GraphInputDist],
) -> Result<BoundOptimum> {
    let (nx, ns, nq) = (spec.input_size(), spec.state_size(), graph.node_count());
    check_compatible(spec, graph, &GraphInputDist::uniform(nx, ns, nq))?;
    for d in warm {
        check_compatible(spec, graph, d)?;
        d.check()?;
    }
    if !graph.is_strongly_connected() {
        return Err(Error::Domain("Q-graph is not strongly connected".into()));
    }
    if config.restarts + warm.len() == 0 {
        return Err(Error::Domain("at least one restart is required".into()));
    }
    let model = Model::new(spec, graph);
    let random = (0..config.restarts).map(|r| {
        let mut rng = stream(config.seed, Component::BoundRestarts, r as u32);
        GraphInputDist::random(nx, ns, nq, &mut rng).probs
    });
    let starts = warm.iter().map(|d| (d.probs.clone(), true)).chain(random.map(|d| (d, false)));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_any: Option<f64> = None;
    let mut outcomes = Vec::with_capacity(config.restarts + warm.len());
    for (start, is_warm) in starts {
        let (d, outcome) = ascend(&model, &start, config, is_warm);
        if outcome.converged {
            if best.as_ref().is_none_or(|(v, _)| outcome.value > *v + TIE_TOL) {
                best = Some((outcome.value, d));
            }
        } else if best_any.is_none_or(|v| outcome.value > v) {
            best_any = Some(outcome.value);
        }
        outcomes.push(outcome);
    }
    match best {
        Some((value, probs)) => Ok(BoundOptimum {
            value,
            argmax: GraphInputDist { input_size: nx, state_size: ns, node_count: nq, probs },
            restarts: outcomes,
        }),
        None => {
            let smallest = outcomes.iter().map(|o| o.gradient_norm).fold(f64::INFINITY, f64::min);
            Err(Error::NonConvergence(format!(
                "no restart converged; best value {}, smallest gradient norm {smallest:.3e}",
                best_any.unwrap_or(f64::NAN)
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tightness {
    pub pass: bool,
    pub max_deviation: f64,
}

/// Check the Markov chain `S' - Q' - (Q,Y)`: the largest
/// `|p(s'|q,y) - p(s'|q')|` over pairs with `p(q,y) > tol`.
pub fn tightness_check(spec: &ChannelSpec, graph: &QGraph, d: &GraphInputDist, tol: f64) -> Result<Tightness> {
    let stationary = stationary_joint(spec, graph, d)?;
    let (nx, ns, ny, nq) = (spec.input_size(), spec.state_size(), spec.output_size(), graph.node_count());
    // joint[(q * ny + y) * ns + s']
    let mut joint = vec![0.0; nq * ny * ns];
    for q in 0..nq {
        for s in 0..ns {
            let w = stationary.get(s, q);
            for x in 0..nx {
                let wx = w * d.get(x, s, q);
                for y in 0..ny {
                    let k = spec.kernel(y, x, s);
                    if k > 0.0 {
                        if let Some(s_next) = spec.state_fn(x, y, s) {
                            joint[(q * ny + y) * ns + s_next] += wx * k;
                        }
                    }
                }
            }
        }
    }
    let mut by_next = vec![0.0; nq * ns];
    for q in 0..nq {
        for y in 0..ny {
            let q_next = graph.next(q, y);
            for s in 0..ns {
                by_next[q_next * ns + s] += joint[(q * ny + y) * ns + s];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for q in 0..nq {
        for y in 0..ny {
            let row = &joint[(q * ny + y) * ns..(q * ny + y + 1) * ns];
            let pqy: f64 = row.iter().sum();
            if pqy <= tol {
                continue;
            }
            let q_next = graph.next(q, y);
            let ref_row = &by_next[q_next * ns..(q_next + 1) * ns];
            let pq_next: f64 = ref_row.iter().sum();
            for s in 0..ns {
                worst = worst.max((row[s] / pqy - ref_row[s] / pq_next).abs());
            }
        }
    }
    Ok(Tightness { pass: worst < tol, max_deviation: worst })
}

/// Everything reported for a bound computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub graph_hash: String,
    pub value: f64,
    pub argmax: GraphInputDist,
    pub tightness_deviation: f64,
    pub tight: bool,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub restart_values: Vec<f64>,
    pub restart_spread: f64,
}

/// Maximize the bound and test tightness at the maximizer. The graph's
/// representative actions, when they form a valid table, seed the first
/// start.
pub fn bound_report(spec: &ChannelSpec, graph: &QGraph, config: &AscentConfig, tight_tol: f64) -> Result<BoundReport> {
    let warm: Vec<GraphInputDist> = GraphInputDist::from_graph_actions(graph)
        .ok()
        .filter(|d| check_compatible(spec, graph, d).is_ok())
        .into_iter()
        .collect();
    let opt = maximize_bound_from(spec, graph, config, &warm)?;
    let tight = tightness_check(spec, graph, &opt.argmax, tight_tol)?;
    Ok(BoundReport {
        graph_hash: graph.structure_hash(),
        value: opt.value,
        tightness_deviation: tight.max_deviation,
        tight: tight.pass,
        restarts: opt.restarts.len(),
        converged_restarts: opt.restarts.iter().filter(|r| r.converged).count(),
        restart_values: opt.restarts.iter().map(|r| r.value).collect(),
        restart_spread: opt.spread(),
        argmax: opt.argmax,
    })
}
