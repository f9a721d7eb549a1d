//! Bit-exact arithmetic coder for the stay-or-switch symbol source.
//!
//! Each symbol is coded as two events against the previous symbol `prev`:
//! a stay/leave event with the stay interval first, then on leave a uniform
//! choice among the other `k-1` symbols in increasing order. Registers hold
//! 32-bit values; the carry-free renormalization emits one bit per halving
//! and defers bits while the interval straddles the midpoint.

use crate::error::{Error, Result};

const PRECISION: u32 = 32;
const TOP: u64 = (1 << PRECISION) - 1;
const HALF: u64 = 1 << (PRECISION - 1);
const QUARTER: u64 = 1 << (PRECISION - 2);

/// Total frequency of the stay/leave event.
pub const STAY_TOTAL: u64 = 1 << 16;

/// Stay frequency out of [`STAY_TOTAL`] for a stay probability `p`.
pub fn stay_frequency(p: f64) -> u64 {
    ((p * STAY_TOTAL as f64).round() as u64).clamp(1, STAY_TOTAL - 1)
}

/// Shared interval state. `shifts` counts renormalization doublings and
/// `pending` the deferred straddle bits, so `shifts - pending` bits of the
/// code value are fixed by the symbols seen so far.
#[derive(Clone, Debug)]
struct Interval {
    low: u64,
    high: u64,
    shifts: usize,
    pending: usize,
}

impl Interval {
    fn new() -> Self {
        Self { low: 0, high: TOP, shifts: 0, pending: 0 }
    }

    fn determined(&self) -> usize {
        self.shifts - self.pending
    }

    fn narrow(&mut self, cum_low: u64, cum_high: u64, total: u64) {
        let range = self.high - self.low + 1;
        self.high = self.low + range * cum_high / total - 1;
        self.low += range * cum_low / total;
    }

    /// Double the interval until it is wider than a quarter, reporting each
    /// doubling.
    fn renormalize(&mut self, mut on_step: impl FnMut(Step)) {
        loop {
            let step = if self.high < HALF {
                Step::Bit(false)
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                Step::Bit(true)
            } else if self.low >= QUARTER && self.high < 3 * QUARTER {
                self.low -= QUARTER;
                self.high -= QUARTER;
                Step::Straddle
            } else {
                return;
            };
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.shifts += 1;
            match step {
                Step::Bit(_) => {
                    on_step(step);
                    self.pending = 0;
                }
                Step::Straddle => {
                    self.pending += 1;
                    on_step(step);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Bit(bool),
    Straddle,
}

fn alternatives(prev: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).filter(move |&s| s != prev)
}

fn check_params(p: f64, k: usize, prev: usize) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("stay probability {p} outside (0,1)")));
    }
    if k < 2 {
        return Err(Error::InvalidAlphabet(format!("alphabet size {k} below 2")));
    }
    if prev >= k {
        return Err(Error::Domain(format!("initial symbol {prev} outside alphabet of size {k}")));
    }
    Ok(())
}

/// Decode uniform bits into symbols until the first `bits.len()` bits are
/// fixed by the symbols produced.
///
/// Past the end the message is padded with `0101…`. A padded code value is
/// then never a dyadic rational, so it cannot sit on the midpoint of every
/// remaining interval and decoding always terminates.
pub fn symbolize(bits: &[bool], p: f64, k: usize, nu0: usize) -> Result<Vec<usize>> {
    check_params(p, k, nu0)?;
    let n = bits.len();
    let stay = stay_frequency(p);
    let mut iv = Interval::new();
    let mut cursor = 0usize;
    let mut next_bit = || {
        let b = bits.get(cursor).copied().unwrap_or_else(|| (cursor - n) % 2 == 1);
        cursor += 1;
        u64::from(b)
    };
    let mut value = 0u64;
    for _ in 0..PRECISION {
        value = (value << 1) | next_bit();
    }
    let mut out = Vec::new();
    let mut prev = nu0;
    while iv.determined() < n {
        let range = iv.high - iv.low + 1;
        let target = ((value - iv.low + 1) * STAY_TOTAL - 1) / range;
        let symbol = if target < stay {
            iv.narrow(0, stay, STAY_TOTAL);
            prev
        } else {
            iv.narrow(stay, STAY_TOTAL, STAY_TOTAL);
            let others = (k - 1) as u64;
            let range = iv.high - iv.low + 1;
            let idx = ((value - iv.low + 1) * others - 1) / range;
            iv.narrow(idx, idx + 1, others);
            alternatives(prev, k).nth(idx as usize).expect("index below k-1")
        };
        iv.renormalize(|step| {
            value = match step {
                Step::Bit(true) => value - HALF,
                Step::Bit(false) => value,
                Step::Straddle => value - QUARTER,
            };
            value = (value << 1) | next_bit();
        });
        out.push(symbol);
        prev = symbol;
    }
    Ok(out)
}

/// Encode symbols back into the `n` bits they fix.
///
/// Fails when the stream fixes fewer than `n` bits, when a proper prefix
/// already fixes `n` bits, or when a symbol lies outside the alphabet.
pub fn desymbolize(symbols: &[usize], p: f64, k: usize, nu0: usize, n: usize) -> Result<Vec<bool>> {
    check_params(p, k, nu0)?;
    let stay = stay_frequency(p);
    let mut iv = Interval::new();
    let mut out: Vec<bool> = Vec::with_capacity(n + PRECISION as usize);
    let mut pending = 0usize;
    let mut prev = nu0;
    for (i, &symbol) in symbols.iter().enumerate() {
        if iv.determined() >= n {
            return Err(Error::Corruption(format!(
                "the first {i} symbols already fix {n} bits but the stream has {}",
                symbols.len()
            )));
        }
        if symbol >= k {
            return Err(Error::Corruption(format!("symbol {symbol} at position {i} outside alphabet of size {k}")));
        }
        if symbol == prev {
            iv.narrow(0, stay, STAY_TOTAL);
        } else {
            iv.narrow(stay, STAY_TOTAL, STAY_TOTAL);
            let idx = alternatives(prev, k).position(|s| s == symbol).expect("symbol differs from prev") as u64;
            iv.narrow(idx, idx + 1, (k - 1) as u64);
        }
        iv.renormalize(|step| match step {
            Step::Bit(b) => {
                out.push(b);
                out.extend(std::iter::repeat_n(!b, pending));
                pending = 0;
            }
            Step::Straddle => pending += 1,
        });
        prev = symbol;
    }
    if out.len() < n {
        return Err(Error::Corruption(format!(
            "stream of {} symbols fixes only {} of {n} bits",
            symbols.len(),
            out.len()
        )));
    }
    out.truncate(n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn hand_trace() {
        let nu = symbolize(&bits("10"), 0.5, 3, 0).unwrap();
        assert_eq!(nu[0], 1);
    }

    #[test]
    fn low_value_stays() {
        let nu = symbolize(&bits("00"), 0.5, 3, 0).unwrap();
        assert_eq!(nu, vec![0, 0]);
        assert_eq!(desymbolize(&nu, 0.5, 3, 0, 2).unwrap(), bits("00"));
    }

    #[test]
    fn binary_leave_is_forced() {
        // with k = 2 every leave goes to the single other symbol
        let nu = symbolize(&bits("11"), 0.5, 2, 0).unwrap();
        assert_eq!(nu[0], 1);
    }

    #[test]
    fn short_round_trips() {
        for len in 0..10 {
            for word in 0..(1u32 << len) {
                let b: Vec<bool> = (0..len).map(|i| (word >> i) & 1 == 1).collect();
                let nu = symbolize(&b, 0.3, 4, 2).unwrap();
                assert_eq!(desymbolize(&nu, 0.3, 4, 2, len).unwrap(), b);
            }
        }
    }

    #[test]
    fn corruption_detected() {
        let b = bits("1011001110001011");
        let nu = symbolize(&b, 0.4, 3, 0).unwrap();
        let mut longer = nu.clone();
        longer.push(0);
        assert!(matches!(desymbolize(&longer, 0.4, 3, 0, b.len()), Err(Error::Corruption(_))));
        assert!(matches!(desymbolize(&nu[..nu.len() - 1], 0.4, 3, 0, b.len()), Err(Error::Corruption(_))));
        let mut bad = nu.clone();
        bad[0] = 7;
        assert!(matches!(desymbolize(&bad, 0.4, 3, 0, b.len()), Err(Error::Corruption(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(symbolize(&[], 0.0, 3, 0).is_err());
        assert!(symbolize(&[], 0.5, 1, 0).is_err());
        assert!(symbolize(&[], 0.5, 3, 3).is_err());
    }
}
