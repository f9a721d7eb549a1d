//! Unifilar finite-state channels.
//!
//! A channel is given by the kernel `p(y | x, s)` and a deterministic state
//! update `s' = f(x, y, s)`. Symbols are 0-based indices.
//!
//! # Config file format
//!
//! Channels beyond the built-in Ising family are loaded from TOML:
//!
//! ```toml
//! name = "noisy-state"
//! input_size = 2
//! output_size = 2
//! state_size = 2
//! # (y, x, s, probability); missing entries are zero
//! kernel = [[0, 0, 0, 0.9], [1, 0, 0, 0.1], ...]
//! # (x, y, s, next state); required wherever the kernel entry is positive
//! state_fn = [[0, 0, 0, 0], ...]
//! ```
//!
//! Unknown keys are rejected, and so is any file whose channel fails
//! [`validate`].

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must match 1 within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A unifilar finite-state channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    name: String,
    input_size: usize,
    output_size: usize,
    state_size: usize,
    // indexed [(x * |S| + s) * |Y| + y]
    kernel: Vec<f64>,
    // indexed [(x * |Y| + y) * |S| + s]
    state_fn: Vec<Option<usize>>,
}

/// A single violated channel invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyAlphabet,
    ProbabilityOutOfRange { y: usize, x: usize, s: usize, value: f64 },
    RowNotNormalized { x: usize, s: usize, sum: f64 },
    MissingStateFn { x: usize, y: usize, s: usize },
    StateOutOfRange { x: usize, y: usize, s: usize, next: usize },
    NotStronglyConnected { unreachable: Vec<usize>, cannot_return: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyAlphabet => write!(f, "alphabet sizes must be positive"),
            Violation::ProbabilityOutOfRange { y, x, s, value } => {
                write!(f, "kernel(y={y}|x={x},s={s}) = {value} outside [0,1]")
            }
            Violation::RowNotNormalized { x, s, sum } => {
                write!(f, "row (x={x},s={s}) not normalized: sum = {sum}")
            }
            Violation::MissingStateFn { x, y, s } => {
                write!(f, "state_fn missing for (x={x},y={y},s={s}) with positive probability")
            }
            Violation::StateOutOfRange { x, y, s, next } => {
                write!(f, "state_fn(x={x},y={y},s={s}) = {next} out of range")
            }
            Violation::NotStronglyConnected { unreachable, cannot_return } => write!(
                f,
                "not strongly connected: unreachable from state 0: {unreachable:?}, \
                 cannot reach state 0: {cannot_return:?}"
            ),
        }
    }
}

/// Outcome of [`validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl ChannelSpec {
    /// Build from dense tables and validate.
    ///
    /// `kernel(y, x, s)` and `state_fn(x, y, s)` are queried for every index
    /// triple; `state_fn` may return `None` where the kernel is zero.
    pub fn new(
        name: impl Into<String>,
        input_size: usize,
        output_size: usize,
        state_size: usize,
        kernel: impl Fn(usize, usize, usize) -> f64,
        state_fn: impl Fn(usize, usize, usize) -> Option<usize>,
    ) -> Result<Self> {
        let spec = Self::new_unchecked(name, input_size, output_size, state_size, kernel, state_fn);
        let report = validate(&spec);
        if report.is_ok() {
            Ok(spec)
        } else {
            Err(Error::InvalidChannel(report.messages()))
        }
    }

    /// Build without validating. Useful for diagnostics and tests.
    pub fn new_unchecked(
        name: impl Into<String>,
        input_size: usize,
        output_size: usize,
        state_size: usize,
        kernel: impl Fn(usize, usize, usize) -> f64,
        state_fn: impl Fn(usize, usize, usize) -> Option<usize>,
    ) -> Self {
        let mut k = vec![0.0; input_size * state_size * output_size];
        for x in 0..input_size {
            for s in 0..state_size {
                for y in 0..output_size {
                    k[(x * state_size + s) * output_size + y] = kernel(y, x, s);
                }
            }
        }
        let mut f = vec![None; input_size * output_size * state_size];
        for x in 0..input_size {
            for y in 0..output_size {
                for s in 0..state_size {
                    f[(x * output_size + y) * state_size + s] = state_fn(x, y, s);
                }
            }
        }
        Self {
            name: name.into(),
            input_size,
            output_size,
            state_size,
            kernel: k,
            state_fn: f,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn state_size(&self) -> usize {
        self.state_size
    }

    /// `p(y | x, s)`. Indices must be in range.
    #[inline]
    pub fn kernel(&self, y: usize, x: usize, s: usize) -> f64 {
        self.kernel[(x * self.state_size + s) * self.output_size + y]
    }

    /// Raw state function entry, `None` where undefined.
    #[inline]
    pub fn state_fn(&self, x: usize, y: usize, s: usize) -> Option<usize> {
        self.state_fn[(x * self.output_size + y) * self.state_size + s]
    }

    /// Distribution of the output given input `x` in state `s`.
    pub fn output_dist(&self, x: usize, s: usize) -> Result<&[f64]> {
        self.check_input_state(x, s)?;
        let start = (x * self.state_size + s) * self.output_size;
        Ok(&self.kernel[start..start + self.output_size])
    }

    /// Next state after `(x, y)` in state `s`.
    pub fn next_state(&self, x: usize, y: usize, s: usize) -> Result<usize> {
        self.check_input_state(x, s)?;
        if y >= self.output_size {
            return Err(Error::Shape(format!("output {y} out of range {}", self.output_size)));
        }
        if self.kernel(y, x, s) <= 0.0 {
            return Err(Error::ImpossibleObservation(format!(
                "p(y={y}|x={x},s={s}) = 0"
            )));
        }
        self.state_fn(x, y, s).ok_or_else(|| {
            Error::ImpossibleObservation(format!("state_fn undefined at (x={x},y={y},s={s})"))
        })
    }

    fn check_input_state(&self, x: usize, s: usize) -> Result<()> {
        if x >= self.input_size || s >= self.state_size {
            return Err(Error::Shape(format!(
                "(x={x}, s={s}) out of range ({}, {})",
                self.input_size, self.state_size
            )));
        }
        Ok(())
    }

    /// Load and validate a channel config file.
    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    /// Parse and validate a channel config from TOML text.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let cfg: ChannelConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.build()
    }

    /// Serialize to the config file format.
    pub fn to_config_string(&self) -> String {
        let mut kernel = Vec::new();
        let mut state_fn = Vec::new();
        for y in 0..self.output_size {
            for x in 0..self.input_size {
                for s in 0..self.state_size {
                    let p = self.kernel(y, x, s);
                    if p > 0.0 {
                        kernel.push((y, x, s, Number::Float(p)));
                    }
                }
            }
        }
        for x in 0..self.input_size {
            for y in 0..self.output_size {
                for s in 0..self.state_size {
                    if let Some(next) = self.state_fn(x, y, s) {
                        state_fn.push((x, y, s, next));
                    }
                }
            }
        }
        let cfg = ChannelConfig {
            name: Some(self.name.clone()),
            input_size: self.input_size,
            output_size: self.output_size,
            state_size: self.state_size,
            kernel,
            state_fn,
        };
        toml::to_string(&cfg).expect("channel config serializes")
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    input_size: usize,
    output_size: usize,
    state_size: usize,
    kernel: Vec<(usize, usize, usize, Number)>,
    state_fn: Vec<(usize, usize, usize, usize)>,
}

impl ChannelConfig {
    fn build(self) -> Result<ChannelSpec> {
        let (nx, ny, ns) = (self.input_size, self.output_size, self.state_size);
        let mut kernel = vec![0.0; nx * ny * ns];
        for &(y, x, s, p) in &self.kernel {
            if y >= ny || x >= nx || s >= ns {
                return Err(Error::Parse(format!("kernel entry ({y},{x},{s}) out of range")));
            }
            kernel[(y * nx + x) * ns + s] = p.value();
        }
        let mut state_fn = vec![None; nx * ny * ns];
        for &(x, y, s, next) in &self.state_fn {
            if y >= ny || x >= nx || s >= ns {
                return Err(Error::Parse(format!("state_fn entry ({x},{y},{s}) out of range")));
            }
            state_fn[(x * ny + y) * ns + s] = Some(next);
        }
        let name = self.name.unwrap_or_else(|| "custom".to_string());
        ChannelSpec::new(
            name,
            nx,
            ny,
            ns,
            |y, x, s| kernel[(y * nx + x) * ns + s],
            |x, y, s| state_fn[(x * ny + y) * ns + s],
        )
    }
}

/// The Ising channel over a `k`-ary alphabet: the output is the current or
/// the previous input with probability 1/2 each, and the state is the last
/// input.
pub fn make_ising(k: usize) -> Result<ChannelSpec> {
    if k < 2 {
        return Err(Error::InvalidAlphabet(format!("Ising channel needs k >= 2, got {k}")));
    }
    ChannelSpec::new(
        format!("ising:{k}"),
        k,
        k,
        k,
        |y, x, s| {
            if x == s {
                if y == x {
                    1.0
                } else {
                    0.0
                }
            } else if y == x || y == s {
                0.5
            } else {
                0.0
            }
        },
        |x, _y, _s| Some(x),
    )
}

/// Check every channel invariant and report all violations.
pub fn validate(spec: &ChannelSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let (nx, ny, ns) = (spec.input_size, spec.output_size, spec.state_size);
    if nx == 0 || ny == 0 || ns == 0 {
        violations.push(Violation::EmptyAlphabet);
        return ValidationReport { violations };
    }
    for x in 0..nx {
        for s in 0..ns {
            let mut sum = 0.0;
            for y in 0..ny {
                let p = spec.kernel(y, x, s);
                if !(0.0..=1.0).contains(&p) {
                    violations.push(Violation::ProbabilityOutOfRange { y, x, s, value: p });
                }
                sum += p;
                if p > 0.0 {
                    match spec.state_fn(x, y, s) {
                        None => violations.push(Violation::MissingStateFn { x, y, s }),
                        Some(next) if next >= ns => {
                            violations.push(Violation::StateOutOfRange { x, y, s, next })
                        }
                        Some(_) => {}
                    }
                }
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                violations.push(Violation::RowNotNormalized { x, s, sum });
            }
        }
    }

    let mut forward = vec![Vec::new(); ns];
    let mut backward = vec![Vec::new(); ns];
    for x in 0..nx {
        for y in 0..ny {
            for s in 0..ns {
                if spec.kernel(y, x, s) > 0.0 {
                    if let Some(next) = spec.state_fn(x, y, s).filter(|&n| n < ns) {
                        forward[s].push(next);
                        backward[next].push(s);
                    }
                }
            }
        }
    }
    let unreachable = unvisited(&forward);
    let cannot_return = unvisited(&backward);
    if !unreachable.is_empty() || !cannot_return.is_empty() {
        violations.push(Violation::NotStronglyConnected { unreachable, cannot_return });
    }
    ValidationReport { violations }
}

fn unvisited(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..adjacency.len()).filter(|&v| !seen[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising3_kernel_entries() {
        let ch = make_ising(3).unwrap();
        assert_eq!(ch.kernel(1, 1, 1), 1.0);
        assert_eq!(ch.kernel(0, 2, 0), 0.5);
        assert_eq!(ch.kernel(2, 2, 0), 0.5);
        assert_eq!(ch.kernel(1, 2, 0), 0.0);
    }

    #[test]
    fn ising2_state_is_last_input() {
        let ch = make_ising(2).unwrap();
        assert_eq!(ch.state_fn(1, 0, 0), Some(1));
        assert_eq!(ch.next_state(1, 0, 0).unwrap(), 1);
    }

    #[test]
    fn ising_rejects_small_alphabets() {
        assert!(matches!(make_ising(1), Err(Error::InvalidAlphabet(_))));
        assert!(matches!(make_ising(0), Err(Error::InvalidAlphabet(_))));
    }

    #[test]
    fn output_dist_and_next_state() {
        let ch = make_ising(3).unwrap();
        assert_eq!(ch.output_dist(0, 0).unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(ch.output_dist(1, 2).unwrap(), &[0.0, 0.5, 0.5]);
        assert_eq!(ch.next_state(2, 0, 0).unwrap(), 2);
        assert!(matches!(
            ch.next_state(2, 1, 0),
            Err(Error::ImpossibleObservation(_))
        ));
        assert!(matches!(ch.output_dist(3, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn ising_entry_counts() {
        for k in 2..=8 {
            let ch = make_ising(k).unwrap();
            let mut ones = 0;
            let mut halves = 0;
            for y in 0..k {
                for x in 0..k {
                    for s in 0..k {
                        let p = ch.kernel(y, x, s);
                        if p == 1.0 {
                            ones += 1;
                        } else if p == 0.5 {
                            halves += 1;
                        }
                    }
                }
            }
            assert_eq!(ones, k);
            assert_eq!(halves, 2 * k * (k - 1));
            assert!(validate(&ch).is_ok());
            for x in 0..k {
                for s in 0..k {
                    let sum: f64 = ch.output_dist(x, s).unwrap().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn detects_unnormalized_row() {
        let ch = ChannelSpec::new_unchecked(
            "bad",
            2,
            2,
            1,
            |y, x, _| match (x, y) {
                (0, 0) => 0.9,
                (0, 1) => 0.0,
                (1, 1) => 1.0,
                _ => 0.0,
            },
            |_, _, _| Some(0),
        );
        let report = validate(&ch);
        assert_eq!(
            report.violations,
            vec![Violation::RowNotNormalized { x: 0, s: 0, sum: 0.9 }]
        );
        assert!(report.messages()[0].contains("not normalized"));
    }

    #[test]
    fn detects_absorbing_state() {
        // State 1 is absorbing: once entered, the chain never returns to 0.
        let ch = ChannelSpec::new_unchecked(
            "absorbing",
            2,
            2,
            2,
            |y, x, _| if y == x { 1.0 } else { 0.0 },
            |x, _, s| Some(if s == 1 { 1 } else { x }),
        );
        let report = validate(&ch);
        assert_eq!(
            report.violations,
            vec![Violation::NotStronglyConnected { unreachable: vec![], cannot_return: vec![1] }]
        );
        assert!(report.messages()[0].contains("not strongly connected"));
        assert!(ChannelSpec::new(
            "absorbing",
            2,
            2,
            2,
            |y, x, _| if y == x { 1.0 } else { 0.0 },
            |x, _, s| Some(if s == 1 { 1 } else { x }),
        )
        .is_err());
    }

    #[test]
    fn detects_missing_state_fn() {
        let ch = ChannelSpec::new_unchecked("partial", 1, 1, 1, |_, _, _| 1.0, |_, _, _| None);
        assert_eq!(
            validate(&ch).violations,
            vec![Violation::MissingStateFn { x: 0, y: 0, s: 0 }]
        );
    }

    #[test]
    fn config_round_trip() {
        let ch = make_ising(3).unwrap();
        let text = ch.to_config_string();
        let back = ChannelSpec::from_config_str(&text).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn config_accepts_integer_probabilities_and_rejects_unknown_keys() {
        let text = r#"
            name = "clean-bit"
            input_size = 2
            output_size = 2
            state_size = 1
            kernel = [[0, 0, 0, 1], [1, 1, 0, 1.0]]
            state_fn = [[0, 0, 0, 0], [1, 1, 0, 0]]
        "#;
        let ch = ChannelSpec::from_config_str(text).unwrap();
        assert_eq!(ch.kernel(1, 1, 0), 1.0);
        let bad = format!("{text}\nextra = 3\n");
        assert!(matches!(ChannelSpec::from_config_str(&bad), Err(Error::Parse(_))));
    }

    #[test]
    fn config_loader_rejects_invalid_channel() {
        let text = r#"
            input_size = 1
            output_size = 2
            state_size = 1
            kernel = [[0, 0, 0, 0.5], [1, 0, 0, 0.4]]
            state_fn = [[0, 0, 0, 0], [0, 1, 0, 0]]
        "#;
        assert!(matches!(
            ChannelSpec::from_config_str(text),
            Err(Error::InvalidChannel(_))
        ));
    }
}
