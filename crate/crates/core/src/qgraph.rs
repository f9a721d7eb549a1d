//! Q-graphs: finite quantizations of the output history.
//!
//! A converged policy typically visits a handful of beliefs, and the next
//! belief is determined by the current one and the channel output. Clustering
//! the beliefs of a greedy rollout and recording the output-labelled
//! successors yields a directed graph with one outgoing edge per output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::{belief_update, joint_dist, ActionMatrix, BeliefState};
use crate::channels::ChannelSpec;
use crate::ddpg::{rollout, Policy};
use crate::error::{Error, Result};

/// Default clustering radius (L-infinity).
pub const DEFAULT_RADIUS: f64 = 1e-2;

/// Output probabilities at or below this are treated as unreachable.
pub const REACH_TOL: f64 = 1e-9;

/// Finite node set with output-driven deterministic transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QGraph {
    pub output_size: usize,
    /// `transitions[q][y]` is the successor of node `q` on output `y`.
    pub transitions: Vec<Vec<usize>>,
    pub beliefs: Vec<BeliefState>,
    pub actions: Vec<ActionMatrix>,
}

impl QGraph {
    pub fn node_count(&self) -> usize {
        self.transitions.len()
    }

    #[inline]
    pub fn next(&self, q: usize, y: usize) -> usize {
        self.transitions[q][y]
    }

    /// Graph in which every node is its own successor.
    pub fn single_node(output_size: usize, belief: BeliefState, action: ActionMatrix) -> Self {
        Self {
            output_size,
            transitions: vec![vec![0; output_size]],
            beliefs: vec![belief],
            actions: vec![action],
        }
    }

    /// Relabel nodes in lexicographic order of their representative beliefs.
    pub fn canonicalize(&self) -> QGraph {
        let mut order: Vec<usize> = (0..self.node_count()).collect();
        order.sort_by(|&a, &b| compare_beliefs(&self.beliefs[a], &self.beliefs[b]));
        self.permute(&order)
    }

    /// Node `order[i]` of `self` becomes node `i`.
    pub fn permute(&self, order: &[usize]) -> QGraph {
        let mut new_index = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        QGraph {
            output_size: self.output_size,
            transitions: order
                .iter()
                .map(|&old| self.transitions[old].iter().map(|&t| new_index.get(t).copied().unwrap_or(t)).collect())
                .collect(),
            beliefs: order.iter().map(|&old| self.beliefs[old].clone()).collect(),
            actions: order.iter().map(|&old| self.actions[old].clone()).collect(),
        }
    }

    /// Same transitions after canonical relabelling, with representative
    /// beliefs within `tol`.
    pub fn matches(&self, other: &QGraph, tol: f64) -> bool {
        let a = self.canonicalize();
        let b = other.canonicalize();
        a.transitions == b.transitions
            && a.beliefs.iter().zip(&b.beliefs).all(|(x, y)| x.distance(y) <= tol)
    }

    /// True when every node reaches every other node.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let forward: Vec<Vec<usize>> =
            self.transitions.iter().map(|row| row.iter().copied().filter(|&t| t < n).collect()).collect();
        let mut backward = vec![Vec::new(); n];
        for (q, row) in forward.iter().enumerate() {
            for &t in row {
                backward[t].push(q);
            }
        }
        reaches_all(&forward) && reaches_all(&backward)
    }

    /// Graphviz rendering; nodes carry their representative beliefs and
    /// edges their output labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph qgraph {\n");
        for (q, b) in self.beliefs.iter().enumerate() {
            let probs: Vec<String> = b.probs().iter().map(|p| format!("{p:.4}")).collect();
            let _ = writeln!(out, "  q{q} [label=\"Q{q}\\n({})\"];", probs.join(", "));
        }
        for (q, row) in self.transitions.iter().enumerate() {
            for (y, t) in row.iter().enumerate() {
                let _ = writeln!(out, "  q{q} -> q{t} [label=\"y={y}\"];");
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Hex SHA-256 of the transition structure.
    pub fn structure_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{}:{:?}", self.output_size, self.transitions).as_bytes());
        hex::encode(hasher.finalize())
    }
}

fn compare_beliefs(a: &BeliefState, b: &BeliefState) -> std::cmp::Ordering {
    for (x, y) in a.probs().iter().zip(b.probs()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

fn reaches_all(adjacency: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// One greedy rollout step.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub belief: BeliefState,
    pub action: ActionMatrix,
    pub output: usize,
    pub next: BeliefState,
}

/// Chained rollout records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionLog {
    pub records: Vec<LogRecord>,
}

impl TransitionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether each record starts where the previous one ended.
    pub fn is_chained(&self) -> bool {
        self.records.windows(2).all(|w| w[0].next == w[1].belief)
    }
}

/// Greedy rollout from `δ(s0)`, dropping the first `burn_in` records.
pub fn collect_from<P: Policy + ?Sized>(
    policy: &P,
    spec: &ChannelSpec,
    s0: usize,
    burn_in: usize,
    steps: usize,
    rng: ChaCha8Rng,
) -> Result<TransitionLog> {
    let records = rollout(policy, spec, s0, steps, rng)?
        .into_iter()
        .skip(burn_in)
        .map(|r| LogRecord { belief: r.belief, action: r.action, output: r.step.output, next: r.step.belief })
        .collect();
    Ok(TransitionLog { records })
}

/// Greedy rollout from a uniformly drawn initial state.
pub fn collect<P: Policy + ?Sized>(
    policy: &P,
    spec: &ChannelSpec,
    burn_in: usize,
    steps: usize,
    mut rng: ChaCha8Rng,
) -> Result<TransitionLog> {
    let s0 = rng.random_range(0..spec.state_size());
    collect_from(policy, spec, s0, burn_in, steps, rng)
}

struct Clustering {
    centers: Vec<BeliefState>,
    assignment: Vec<usize>,
}

fn nearest(centers: &[BeliefState], p: &BeliefState) -> Option<(usize, f64)> {
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.distance(p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn cluster(points: &[&BeliefState], radius: f64) -> Result<Clustering> {
    let mut leaders: Vec<BeliefState> = Vec::new();
    for p in points {
        match nearest(&leaders, p) {
            Some((_, d)) if d <= radius => {}
            _ => leaders.push((*p).clone()),
        }
    }
    let mut centers = leaders;
    let mut assignment = vec![0; points.len()];
    // a few Lloyd passes settle the centers onto member means
    for _ in 0..10 {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(&centers, p).expect("at least one center").0;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (acc, v) in sums[a].iter_mut().zip(p.probs()) {
                *acc += v;
            }
        }
        let updated: Vec<BeliefState> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centers)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    BeliefState::from_unnormalized(s.into_iter().map(|v| v / c as f64).collect())
                }
            })
            .collect();
        if updated == centers {
            break;
        }
        centers = updated;
    }
    for (i, (&a, p)) in assignment.iter().zip(points).enumerate() {
        let d = centers[a].distance(p);
        if d > radius {
            return Err(Error::Domain(format!(
                "belief {i} lies {d:.3e} from its cluster center, above radius {radius}"
            )));
        }
    }
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = centers[i].distance(&centers[j]);
            if d < radius {
                return Err(Error::Domain(format!(
                    "cluster centers {i} and {j} are {d:.3e} apart, below radius {radius}"
                )));
            }
        }
    }
    Ok(Clustering { centers, assignment })
}

/// Cluster the beliefs of `log` and read off the output-labelled successor
/// of every node.
///
/// Pairs `(q, y)` with negligible output probability under the node's
/// representative belief and action become self-loops; observable pairs that
/// never occur in the log are a coverage error.
pub fn extract(log: &TransitionLog, spec: &ChannelSpec, radius: f64) -> Result<QGraph> {
    if log.is_empty() {
        return Err(Error::Domain("empty transition log".into()));
    }
    let ny = spec.output_size();
    let mut points: Vec<&BeliefState> = log.records.iter().map(|r| &r.belief).collect();
    points.push(&log.records.last().expect("non-empty").next);
    let clustering = cluster(&points, radius)?;
    let n = clustering.centers.len();
    let node_of_belief = |i: usize| clustering.assignment[i];
    // next of record i is belief of record i+1 when chained; cluster it directly otherwise
    let node_of_next = |i: usize, r: &LogRecord| {
        if i + 1 < log.records.len() && log.records[i + 1].belief == r.next {
            clustering.assignment[i + 1]
        } else if i + 1 == log.records.len() {
            clustering.assignment[i + 1]
        } else {
            nearest(&clustering.centers, &r.next).expect("centers").0
        }
    };

    let mut table: Vec<Vec<Option<(usize, usize)>>> = vec![vec![None; ny]; n];
    let mut action_sums: Vec<Vec<f64>> = vec![vec![0.0; spec.input_size() * spec.state_size()]; n];
    let mut counts = vec![0usize; n];
    for (i, r) in log.records.iter().enumerate() {
        let q = node_of_belief(i);
        let q_next = node_of_next(i, r);
        if q_next != nearest(&clustering.centers, &r.next).expect("centers").0 {
            return Err(Error::Domain(format!("record {i} successor belief is ambiguous")));
        }
        match table[q][r.output] {
            None => table[q][r.output] = Some((q_next, i)),
            Some((existing, first)) if existing != q_next => {
                return Err(Error::Determinism(format!(
                    "records {first} and {i}: node {q} on output {} goes to {existing} and {q_next}",
                    r.output
                )));
            }
            Some(_) => {}
        }
        counts[q] += 1;
        for (acc, v) in action_sums[q].iter_mut().zip(r.action.as_slice()) {
            *acc += v;
        }
    }

    let fallback_action = |q: usize| -> ActionMatrix {
        // nodes seen only as a final successor have no action of their own
        log.records
            .iter()
            .min_by(|a, b| {
                a.belief.distance(&clustering.centers[q]).total_cmp(&b.belief.distance(&clustering.centers[q]))
            })
            .map(|r| r.action.clone())
            .expect("non-empty log")
    };
    let actions: Vec<ActionMatrix> = (0..n)
        .map(|q| {
            if counts[q] == 0 {
                fallback_action(q)
            } else {
                let mean: Vec<f64> = action_sums[q].iter().map(|v| v / counts[q] as f64).collect();
                ActionMatrix::new(spec.input_size(), spec.state_size(), mean)
                    .unwrap_or_else(|_| fallback_action(q))
            }
        })
        .collect();

    let mut missing = Vec::new();
    let mut transitions = vec![vec![0; ny]; n];
    for q in 0..n {
        let py = joint_dist(&clustering.centers[q], &actions[q], spec)?.output_marginal();
        for y in 0..ny {
            transitions[q][y] = match table[q][y] {
                Some((t, _)) => t,
                None if py[y] <= REACH_TOL => q,
                None => {
                    missing.push((q, y));
                    q
                }
            };
        }
    }
    let raw = QGraph { output_size: ny, transitions, beliefs: clustering.centers, actions };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| compare_beliefs(&raw.beliefs[a], &raw.beliefs[b]));
    if !missing.is_empty() {
        let mut label = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            label[old] = new;
        }
        let mut missing: Vec<(usize, usize)> = missing.into_iter().map(|(q, y)| (label[q], y)).collect();
        missing.sort_unstable();
        return Err(Error::Coverage(missing));
    }
    Ok(raw.permute(&order))
}

/// Structural and consistency checks of a Q-graph against a channel and a
/// policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QGraphReport {
    pub strongly_connected: bool,
    pub out_degree_ok: bool,
    pub bcjr_consistent: bool,
    /// Largest distance between an updated representative belief and the
    /// representative of the successor node.
    pub bcjr_max_deviation: f64,
    pub failures: Vec<String>,
}

impl QGraphReport {
    pub fn passed(&self) -> bool {
        self.strongly_connected && self.out_degree_ok && self.bcjr_consistent
    }
}

/// Check strong connectivity, out-degree `|Y|`, and that the Bayes update of
/// each representative belief under the policy lands within `radius` of the
/// successor's representative.
pub fn validate_qgraph<P: Policy + ?Sized>(
    graph: &QGraph,
    spec: &ChannelSpec,
    policy: &P,
    radius: f64,
) -> QGraphReport {
    let n = graph.node_count();
    let ny = spec.output_size();
    let mut failures = Vec::new();
    let mut out_degree_ok = graph.output_size == ny && graph.beliefs.len() == n;
    for (q, row) in graph.transitions.iter().enumerate() {
        if row.len() != ny {
            out_degree_ok = false;
            failures.push(format!("node {q} has {} outgoing edges, expected {ny}", row.len()));
        }
        for (y, &t) in row.iter().enumerate() {
            if t >= n {
                out_degree_ok = false;
                failures.push(format!("edge ({q}, y={y}) points to missing node {t}"));
            }
        }
    }
    let strongly_connected = out_degree_ok && graph.is_strongly_connected();
    if out_degree_ok && !strongly_connected {
        failures.push("graph is not strongly connected".into());
    }

    let mut worst: f64 = 0.0;
    let mut bcjr_consistent = out_degree_ok;
    if out_degree_ok {
        for q in 0..n {
            let z = &graph.beliefs[q];
            let u = match policy.action(z) {
                Ok(u) => u,
                Err(e) => {
                    bcjr_consistent = false;
                    failures.push(format!("policy failed at node {q}: {e}"));
                    continue;
                }
            };
            let py = match joint_dist(z, &u, spec) {
                Ok(j) => j.output_marginal(),
                Err(e) => {
                    bcjr_consistent = false;
                    failures.push(format!("node {q}: {e}"));
                    continue;
                }
            };
            for y in 0..ny {
                if py[y] <= REACH_TOL {
                    continue;
                }
                let Ok(next) = belief_update(z, &u, y, spec) else { continue };
                let d = next.distance(&graph.beliefs[graph.transitions[q][y]]);
                worst = worst.max(d);
                if d > radius {
                    bcjr_consistent = false;
                    failures.push(format!(
                        "update of node {q} on y={y} is {d:.3e} from node {}",
                        graph.transitions[q][y]
                    ));
                }
            }
        }
    }
    QGraphReport { strongly_connected, out_degree_ok, bcjr_consistent, bcjr_max_deviation: worst, failures }
}

/// Plays the representative action of the nearest node.
#[derive(Clone, Debug)]
pub struct QGraphPolicy {
    pub graph: QGraph,
}

impl Policy for QGraphPolicy {
    fn action(&self, z: &BeliefState) -> Result<ActionMatrix> {
        let (q, _) = nearest(&self.graph.beliefs, z)
            .ok_or_else(|| Error::Domain("empty Q-graph".into()))?;
        Ok(self.graph.actions[q].clone())
    }
}

/// The `2k`-node graph visited by the stay-or-switch policy on Ising-`k`.
///
/// Node `D_s` holds `δ(s)` and sends `x = s` with probability `p`, every
/// other symbol with `(1-p)/(k-1)`. Observing `y = s` there moves to `U_s`,
/// whose belief puts `2p/(1+p)` on `s`; any other output `j` pins the state
/// and moves to `D_j`. At `U_s` the input repeats the state, so the output
/// reveals it and `y = j` leads to `D_j`.
pub fn ising_reference_graph(k: usize, p: f64) -> Result<QGraph> {
    if k < 2 {
        return Err(Error::InvalidAlphabet(format!("Ising alphabet size {k} below 2")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} outside (0,1)")));
    }
    let other = (1.0 - p) / (k - 1) as f64;
    let mut transitions = Vec::with_capacity(2 * k);
    let mut beliefs = Vec::with_capacity(2 * k);
    let mut actions = Vec::with_capacity(2 * k);
    let stay_or_switch = ActionMatrix::from_fn(k, k, |x, s| if x == s { p } else { other })?;
    let repeat = ActionMatrix::deterministic(k, k, |s| s)?;
    // D_s is node s, U_s is node k + s
    for s in 0..k {
        transitions.push((0..k).map(|y| if y == s { k + s } else { y }).collect());
        beliefs.push(BeliefState::delta(k, s)?);
        actions.push(stay_or_switch.clone());
    }
    for s in 0..k {
        transitions.push((0..k).collect());
        let hold = 2.0 * p / (1.0 + p);
        let spread = (1.0 - p) / ((k - 1) as f64 * (1.0 + p));
        beliefs.push(BeliefState::new((0..k).map(|j| if j == s { hold } else { spread }).collect())?);
        actions.push(repeat.clone());
    }
    Ok(QGraph { output_size: k, transitions, beliefs, actions })
}

/// Counts of visits per node, keyed by canonical label.
pub fn visit_histogram(graph: &QGraph, log: &TransitionLog) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for r in &log.records {
        if let Some((q, _)) = nearest(&graph.beliefs, &r.belief) {
            *hist.entry(q).or_insert(0) += 1;
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::make_ising;
    use crate::ddpg::ConstantPolicy;
    use crate::rng::{stream, Component};

    fn identity_policy(k: usize) -> ConstantPolicy {
        ConstantPolicy(ActionMatrix::deterministic(k, k, |s| s).unwrap())
    }

    #[test]
    fn collect_bookkeeping() {
        let ch = make_ising(3).unwrap();
        let policy = ConstantPolicy(ActionMatrix::uniform(3, 3));
        let log = collect(&policy, &ch, 100, 1000, stream(1, Component::Collection, 0)).unwrap();
        assert_eq!(log.len(), 900);
        assert!(log.is_chained());
    }

    #[test]
    fn identity_policy_stays_put() {
        let ch = make_ising(3).unwrap();
        let log = collect_from(&identity_policy(3), &ch, 0, 10, 200, stream(1, Component::Collection, 0))
            .unwrap();
        let d0 = BeliefState::delta(3, 0).unwrap();
        assert!(log.records.iter().all(|r| r.belief == d0 && r.output == 0));
        let g = extract(&log, &ch, DEFAULT_RADIUS).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.transitions, vec![vec![0, 0, 0]]);
    }

    fn synthetic_two_node_log() -> (ChannelSpec, TransitionLog) {
        let ch = make_ising(2).unwrap();
        let a = BeliefState::new(vec![0.9, 0.1]).unwrap();
        let b = BeliefState::new(vec![0.2, 0.8]).unwrap();
        let u = ActionMatrix::uniform(2, 2);
        // output 0 leads to A, output 1 to B
        let outputs = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0];
        let mut records = Vec::new();
        let mut current = a.clone();
        for &y in &outputs {
            let next = if y == 0 { a.clone() } else { b.clone() };
            records.push(LogRecord { belief: current.clone(), action: u.clone(), output: y, next: next.clone() });
            current = next;
        }
        (ch, TransitionLog { records })
    }

    #[test]
    fn synthetic_two_node_graph() {
        let (ch, log) = synthetic_two_node_log();
        let g = extract(&log, &ch, DEFAULT_RADIUS).unwrap();
        assert_eq!(g.node_count(), 2);
        // canonical order: (0.2, 0.8) first
        assert_eq!(g.beliefs[0].probs(), &[0.2, 0.8]);
        assert_eq!(g.transitions, vec![vec![1, 0], vec![1, 0]]);
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn determinism_violation() {
        let (ch, mut log) = synthetic_two_node_log();
        // node A on output 0 now also goes to B
        let a = log.records[0].belief.clone();
        let b = BeliefState::new(vec![0.2, 0.8]).unwrap();
        log.records.push(LogRecord { belief: a, action: ActionMatrix::uniform(2, 2), output: 0, next: b });
        assert!(matches!(extract(&log, &ch, DEFAULT_RADIUS), Err(Error::Determinism(_))));
    }

    #[test]
    fn coverage_error() {
        let (ch, log) = synthetic_two_node_log();
        // drop every record where B emits 0
        let records: Vec<LogRecord> = log
            .records
            .into_iter()
            .filter(|r| !(r.belief.probs()[0] < 0.5 && r.output == 0))
            .collect();
        let log = TransitionLog { records };
        assert!(matches!(extract(&log, &ch, DEFAULT_RADIUS), Err(Error::Coverage(_))));
    }

    #[test]
    fn single_node_validation() {
        let ch = make_ising(3).unwrap();
        let policy = identity_policy(3);
        let g = QGraph::single_node(3, BeliefState::delta(3, 0).unwrap(), policy.0.clone());
        let report = validate_qgraph(&g, &ch, &policy, DEFAULT_RADIUS);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn dangling_edge_fails_out_degree() {
        let ch = make_ising(3).unwrap();
        let policy = identity_policy(3);
        let mut g = QGraph::single_node(3, BeliefState::delta(3, 0).unwrap(), policy.0.clone());
        g.transitions[0].pop();
        let report = validate_qgraph(&g, &ch, &policy, DEFAULT_RADIUS);
        assert!(!report.out_degree_ok);
        assert!(!report.passed());
        g.transitions[0].push(7);
        assert!(!validate_qgraph(&g, &ch, &policy, DEFAULT_RADIUS).out_degree_ok);
    }

    #[test]
    fn dot_and_json_export() {
        let (ch, log) = synthetic_two_node_log();
        let g = extract(&log, &ch, DEFAULT_RADIUS).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("q0 -> q1 [label=\"y=0\"]"));
        let back = QGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.structure_hash(), g.structure_hash());
    }
}
