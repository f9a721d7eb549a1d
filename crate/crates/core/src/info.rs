//! Entropy helpers. All logarithms are base 2.

/// Smallest probability that enters a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-p log2 p` with the `0 log 0 = 0` convention.
#[inline]
pub fn plogp(p: f64) -> f64 {
    if p <= PROB_FLOOR {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| plogp(p)).sum()
}

/// Binary entropy function.
pub fn h2(p: f64) -> f64 {
    plogp(p) + plogp(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_entropy_endpoints() {
        assert_eq!(h2(0.0), 0.0);
        assert_eq!(h2(1.0), 0.0);
        assert!((h2(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_entropy() {
        assert!((entropy(&[0.25; 4]) - 2.0).abs() < 1e-15);
    }
}
