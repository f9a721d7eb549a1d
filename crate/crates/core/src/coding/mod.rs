//! Zero-error feedback code for the Ising channel.
//!
//! The message bits are first shaped into a stay-or-switch symbol stream.
//! A symbol equal to its predecessor is sent twice. A new symbol is sent
//! once; if the fed-back output shows the old state instead, it is sent a
//! second time, and then the state equals the input so the output is the
//! symbol itself. The decoder needs only the outputs: an output differing
//! from the last decoded symbol is the next symbol, otherwise the next
//! output is.

mod arith;

pub use arith::{desymbolize, stay_frequency, symbolize, STAY_TOTAL};

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{make_ising, ChannelSpec};
use crate::error::{Error, Result};
use crate::info::h2;
use crate::rng::{stream, Component};

/// Initial symbol the shaper conditions the first symbol on.
pub const NU0: usize = 0;

/// Mean channel uses per symbol, `2p + 1.5(1-p)`.
pub fn expected_length(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0,1]")));
    }
    Ok(2.0 * p + 1.5 * (1.0 - p))
}

/// Entropy of one symbol given its predecessor, `H₂(p) + (1-p) log₂(k-1)`.
pub fn transition_entropy(p: f64, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0,1]")));
    }
    if k < 2 {
        return Err(Error::Domain(format!("alphabet size {k} below 2")));
    }
    Ok(h2(p) + (1.0 - p) * ((k - 1) as f64).log2())
}

/// One symbol's passage through the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub symbol: usize,
    pub uses: u8,
    /// Outputs observed; the second is meaningful only when `uses == 2`.
    pub outputs: [usize; 2],
}

/// Full record of a coding session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub k: usize,
    pub p: f64,
    pub initial_state: usize,
    pub records: Vec<SymbolRecord>,
    pub decoded: Vec<usize>,
    pub input_bits: usize,
    /// Whether the decoded symbols map back to the message bits.
    pub bits_recovered: bool,
}

impl Transcript {
    pub fn symbols(&self) -> usize {
        self.records.len()
    }

    pub fn channel_uses(&self) -> usize {
        self.records.iter().map(|r| r.uses as usize).sum()
    }

    /// Channel outputs in order.
    pub fn output_stream(&self) -> Vec<usize> {
        self.records.iter().flat_map(|r| r.outputs[..r.uses as usize].iter().copied()).collect()
    }

    pub fn symbol_errors(&self) -> usize {
        let missing = self.records.len().abs_diff(self.decoded.len());
        missing + self.records.iter().zip(&self.decoded).filter(|(r, d)| r.symbol != **d).count()
    }

    /// Message bits per channel use.
    pub fn rate(&self) -> f64 {
        self.input_bits as f64 / self.channel_uses() as f64
    }

    pub fn uses_per_symbol(&self) -> f64 {
        self.channel_uses() as f64 / self.symbols() as f64
    }

    pub fn stay_fraction(&self) -> f64 {
        let stays = self.records.windows(2).filter(|w| w[0].symbol == w[1].symbol).count();
        stays as f64 / (self.records.len().saturating_sub(1)).max(1) as f64
    }

    pub fn summary(&self) -> TranscriptSummary {
        TranscriptSummary {
            k: self.k,
            p: self.p,
            input_bits: self.input_bits,
            symbols: self.symbols(),
            channel_uses: self.channel_uses(),
            symbol_errors: self.symbol_errors(),
            bits_recovered: self.bits_recovered,
            rate: self.rate(),
            uses_per_symbol: self.uses_per_symbol(),
            expected_uses_per_symbol: expected_length(self.p).unwrap_or(f64::NAN),
            stay_fraction: self.stay_fraction(),
        }
    }

    /// Per-symbol CSV trace.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,symbol,uses,y1,y2,decoded")?;
        for (i, r) in self.records.iter().enumerate() {
            let second = if r.uses == 2 { r.outputs[1].to_string() } else { String::new() };
            let decoded = self.decoded.get(i).map_or(String::new(), |d| d.to_string());
            writeln!(out, "{i},{},{},{},{second},{decoded}", r.symbol, r.uses, r.outputs[0])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub k: usize,
    pub p: f64,
    pub input_bits: usize,
    pub symbols: usize,
    pub channel_uses: usize,
    pub symbol_errors: usize,
    pub bits_recovered: bool,
    pub rate: f64,
    pub uses_per_symbol: f64,
    pub expected_uses_per_symbol: f64,
    pub stay_fraction: f64,
}

/// The channel with its hidden state.
struct Link {
    spec: ChannelSpec,
    state: usize,
    rng: ChaCha8Rng,
}

impl Link {
    fn send(&mut self, x: usize) -> Result<usize> {
        let dist = self.spec.output_dist(x, self.state)?;
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut y = dist.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                y = i;
                break;
            }
        }
        self.state = self.spec.next_state(x, y, self.state)?;
        Ok(y)
    }
}

/// Send a symbol stream over Ising-`k` with the given channel randomness.
/// The first symbol is always sent twice.
pub fn transmit(symbols: &[usize], k: usize, rng: ChaCha8Rng) -> Result<(usize, Vec<SymbolRecord>)> {
    let spec = make_ising(k)?;
    let mut rng = rng;
    let initial_state = rng.random_range(0..k);
    let mut link = Link { spec, state: initial_state, rng };
    let mut records = Vec::with_capacity(symbols.len());
    let mut prev: Option<usize> = None;
    for &nu in symbols {
        if nu >= k {
            return Err(Error::Domain(format!("symbol {nu} outside alphabet of size {k}")));
        }
        let first = link.send(nu)?;
        let record = if prev.is_none_or(|p| p == nu) || first != nu {
            let second = link.send(nu)?;
            SymbolRecord { symbol: nu, uses: 2, outputs: [first, second] }
        } else {
            SymbolRecord { symbol: nu, uses: 1, outputs: [first, first] }
        };
        records.push(record);
        prev = Some(nu);
    }
    Ok((initial_state, records))
}

/// Recover the symbol stream from channel outputs alone.
pub fn decode_outputs(outputs: &[usize]) -> Vec<usize> {
    let mut decoded = Vec::new();
    if outputs.len() < 2 {
        return decoded;
    }
    decoded.push(outputs[1]);
    let mut t = 2;
    while t < outputs.len() {
        let last = *decoded.last().expect("non-empty");
        if outputs[t] != last {
            decoded.push(outputs[t]);
            t += 1;
        } else if t + 1 < outputs.len() {
            decoded.push(outputs[t + 1]);
            t += 2;
        } else {
            break;
        }
    }
    decoded
}

/// Shape `bits` into symbols, send them over Ising-`k`, decode from the
/// outputs, and map the decoded symbols back to bits.
pub fn run_session(bits: &[bool], p: f64, k: usize, seed: u64) -> Result<Transcript> {
    let symbols = symbolize(bits, p, k, NU0)?;
    let (initial_state, records) = transmit(&symbols, k, stream(seed, Component::CodingChannel, 0))?;
    let outputs: Vec<usize> = records.iter().flat_map(|r| r.outputs[..r.uses as usize].iter().copied()).collect();
    let decoded = decode_outputs(&outputs);
    let bits_recovered = desymbolize(&decoded, p, k, NU0, bits.len()).is_ok_and(|b| b == bits);
    Ok(Transcript { k, p, initial_state, records, decoded, input_bits: bits.len(), bits_recovered })
}

/// Uniform message bits from the session seed.
pub fn random_bits(n: usize, seed: u64) -> Vec<bool> {
    let mut rng = stream(seed, Component::CodingBits, 0);
    (0..n).map(|_| rng.random()).collect()
}
