//! The subcommands. Each takes a validated config and writes its artifacts
//! plus a result record under `config.out`.

use std::path::Path;

use fbcap::baseline::value_iteration;
use fbcap::belief::{ActionMatrix, BeliefState};
use fbcap::bounds::{bound_report, maximize_ising_rate};
use fbcap::channels::ChannelSpec;
use fbcap::coding::{random_bits, run_session, transition_entropy};
use fbcap::ddpg::{evaluate_policy, write_curve_csv, Checkpoint, Policy, TrainedPolicy, Trainer};
use fbcap::qgraph::{collect, extract, validate_qgraph, visit_histogram, QGraph, QGraphPolicy};
use fbcap::rng::{stream, Component};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{CodeConfig, ExperimentConfig};
use crate::output::{CliError, Outputs};

/// A Q-graph together with the channel it was extracted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QGraphFile {
    pub channel: String,
    pub channel_config: String,
    pub graph: QGraph,
}

impl QGraphFile {
    pub fn spec(&self) -> Result<ChannelSpec, CliError> {
        Ok(ChannelSpec::from_config_str(&self.channel_config)?)
    }
}

/// A policy read from disk.
pub enum LoadedPolicy {
    Trained(Box<TrainedPolicy>),
    Graph(QGraphPolicy),
}

impl LoadedPolicy {
    fn kind(&self) -> &'static str {
        match self {
            LoadedPolicy::Trained(_) => "checkpoint",
            LoadedPolicy::Graph(_) => "qgraph",
        }
    }
}

impl Policy for LoadedPolicy {
    fn action(&self, z: &BeliefState) -> fbcap::Result<ActionMatrix> {
        match self {
            LoadedPolicy::Trained(p) => p.action(z),
            LoadedPolicy::Graph(p) => p.action(z),
        }
    }
}

fn read_existing(path: &Path) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::missing_file(path));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Load a training checkpoint or a Q-graph file, with its channel.
pub fn load_policy(path: &Path) -> Result<(ChannelSpec, LoadedPolicy), CliError> {
    let value: Value = serde_json::from_str(&read_existing(path)?)?;
    if value.get("policy").is_some() {
        let ckpt: Checkpoint = serde_json::from_value(value)?;
        Ok((ckpt.spec()?, LoadedPolicy::Trained(Box::new(ckpt.policy))))
    } else if value.get("graph").is_some() {
        let file: QGraphFile = serde_json::from_value(value)?;
        Ok((file.spec()?, LoadedPolicy::Graph(QGraphPolicy { graph: file.graph })))
    } else {
        Err(CliError::config(format!("{} is neither a checkpoint nor a Q-graph file", path.display())))
    }
}

pub fn load_qgraph(path: &Path) -> Result<QGraphFile, CliError> {
    Ok(serde_json::from_str(&read_existing(path)?)?)
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::config(format!("{key} is required")))
}

pub fn train(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let spec = cfg.channel_spec()?;
    let mut out = Outputs::new(&cfg.out, "train")?;
    let mut trainer = Trainer::new(&spec, cfg.train.clone())?;
    let report_every = (cfg.train.episodes / 20).max(1);
    while !trainer.is_done() {
        match trainer.run_episode() {
            Ok(stats) => {
                if (stats.episode + 1) % report_every == 0 {
                    eprintln!(
                        "episode {}/{}: mean reward {:.5}",
                        stats.episode + 1,
                        cfg.train.episodes,
                        stats.mean_reward
                    );
                }
            }
            Err(e) => {
                out.write_json("checkpoint.json", &trainer.checkpoint())?;
                let mut csv = Vec::new();
                write_curve_csv(trainer.curve(), &mut csv)?;
                out.write("curve.csv", csv)?;
                return Err(CliError::from(e)
                    .with_details(json!({ "episodes_done": trainer.curve().len(), "checkpoint": "checkpoint.json" })));
            }
        }
    }
    out.write_json("checkpoint.json", &trainer.checkpoint())?;
    let curve = trainer.curve();
    let mut csv = Vec::new();
    write_curve_csv(curve, &mut csv)?;
    out.write("curve.csv", csv)?;
    let tail = &curve[curve.len() - (curve.len() / 10).max(1)..];
    let result = json!({
        "channel": spec.name(),
        "episodes": curve.len(),
        "final_mean_reward": curve.last().map(|s| s.mean_reward),
        "tail_mean_reward": tail.iter().map(|s| s.mean_reward).sum::<f64>() / tail.len() as f64,
    });
    out.finish(cfg, &result)
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let path = required(&cfg.evaluate.checkpoint, "evaluate.checkpoint")?;
    let (spec, policy) = load_policy(path)?;
    let out = Outputs::new(&cfg.out, "evaluate")?;
    let eval = evaluate_policy(
        &policy,
        &spec,
        cfg.evaluate.steps,
        cfg.evaluate.burn_in,
        stream(cfg.seed, Component::Evaluation, 0),
    )?;
    let result = json!({
        "channel": spec.name(),
        "policy": policy.kind(),
        "rate": eval.rate,
        "stderr": eval.stderr,
        "steps": eval.steps,
    });
    out.finish(cfg, &result)
}

pub fn extract_cmd(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let ex = &cfg.extract;
    let path = required(&ex.checkpoint, "extract.checkpoint")?;
    let (spec, policy) = load_policy(path)?;
    let mut out = Outputs::new(&cfg.out, "extract")?;
    let log = collect(&policy, &spec, ex.burn_in, ex.steps, stream(cfg.seed, Component::Collection, 0))?;
    let graph = extract(&log, &spec, ex.radii[0])?;
    let hash = graph.structure_hash();
    let rechecks: Vec<Value> = ex.radii[1..]
        .iter()
        .map(|&r| match extract(&log, &spec, r) {
            Ok(g) => json!({
                "radius": r,
                "nodes": g.node_count(),
                "graph_hash": g.structure_hash(),
                "same_structure": g.structure_hash() == hash,
            }),
            Err(e) => json!({ "radius": r, "error": CliError::from(e).to_json("extract")["error"] }),
        })
        .collect();
    let report = validate_qgraph(&graph, &spec, &policy, ex.radii[0]);
    let file = QGraphFile { channel: spec.name().to_string(), channel_config: spec.to_config_string(), graph };
    out.write_json("qgraph.json", &file)?;
    out.write("qgraph.dot", file.graph.to_dot())?;
    let visits: Vec<usize> = {
        let hist = visit_histogram(&file.graph, &log);
        (0..file.graph.node_count()).map(|q| hist.get(&q).copied().unwrap_or(0)).collect()
    };
    let result = json!({
        "channel": spec.name(),
        "policy": policy.kind(),
        "radius": ex.radii[0],
        "nodes": file.graph.node_count(),
        "graph_hash": hash,
        "visits": visits,
        "validation": report,
        "rechecks": rechecks,
    });
    let record = out.finish(cfg, &result)?;
    if !report.passed() {
        return Err(CliError {
            kind: "qgraph_validation",
            message: report.failures.join("; "),
            details: json!({ "validation": report }),
        });
    }
    Ok(record)
}

pub fn bound(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let path = required(&cfg.bound.qgraph, "bound.qgraph")?;
    let file = load_qgraph(path)?;
    let spec = file.spec()?;
    let out = Outputs::new(&cfg.out, "bound")?;
    let report = bound_report(&spec, &file.graph, &cfg.bound.ascent(cfg.seed), cfg.bound.tight_tol)?;
    let result = json!({
        "channel": spec.name(),
        "nodes": file.graph.node_count(),
        "report": report,
    });
    out.finish(cfg, &result)
}

pub fn formula(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let opt = maximize_ising_rate(cfg.formula.k)?;
    let out = Outputs::new(&cfg.out, "formula")?;
    out.finish(cfg, &opt)
}

pub fn baseline(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let spec = cfg.channel_spec()?;
    let mut out = Outputs::new(&cfg.out, "baseline")?;
    let vi = value_iteration(&spec, &cfg.baseline)?;
    let mut csv = Vec::new();
    vi.table.write_csv(&mut csv)?;
    out.write("baseline_values.csv", csv)?;
    let result = json!({
        "channel": spec.name(),
        "rate": vi.rate,
        "span": vi.span,
        "sweeps": vi.sweeps,
    });
    out.finish(cfg, &result)
}

fn stay_probability(c: &CodeConfig) -> Result<f64, CliError> {
    Ok(match c.p {
        Some(p) => p,
        None => maximize_ising_rate(c.k)?.p_star,
    })
}

/// Message length that yields about `symbols` channel symbols.
pub fn bits_for_symbols(c: &CodeConfig, symbols: usize) -> Result<usize, CliError> {
    let p = stay_probability(c)?;
    Ok((symbols as f64 * transition_entropy(p, c.k)?).ceil() as usize)
}

pub fn code(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let c = &cfg.code;
    let p = stay_probability(c)?;
    let n_bits = c.bits;
    let mut out = Outputs::new(&cfg.out, "code")?;
    let bits = random_bits(n_bits, cfg.seed);
    let transcript = run_session(&bits, p, c.k, cfg.seed)?;
    if c.trace {
        let mut csv = Vec::new();
        transcript.write_csv(&mut csv)?;
        out.write("code_trace.csv", csv)?;
    }
    let summary = transcript.summary();
    let record = out.finish(cfg, &summary)?;
    if summary.symbol_errors > 0 || !summary.bits_recovered {
        return Err(CliError {
            kind: "decode_mismatch",
            message: format!("{} symbol errors, bits recovered: {}", summary.symbol_errors, summary.bits_recovered),
            details: serde_json::to_value(&summary)?,
        });
    }
    Ok(record)
}
