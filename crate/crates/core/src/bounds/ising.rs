//! Closed-form Ising rate and its scalar maximization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::h2;

/// Points in the unimodality scan.
pub const SCAN_POINTS: usize = 10_000;

/// Target width of the final golden-section bracket.
pub const GOLDEN_TOL: f64 = 1e-10;

/// `2 (H₂(p) + (1-p) log₂(k-1)) / (p + 3)`.
pub fn ising_rate_objective(p: f64, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0,1]")));
    }
    if k < 2 {
        return Err(Error::Domain(format!("alphabet size {k} below 2")));
    }
    Ok(objective(p, k))
}

fn objective(p: f64, k: usize) -> f64 {
    2.0 * (h2(p) + (1.0 - p) * ((k - 1) as f64).log2()) / (p + 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingOptimum {
    pub k: usize,
    pub p_star: f64,
    pub rate: f64,
}

/// Maximize the Ising rate over `p`. A uniform scan first confirms the
/// objective rises then falls; golden-section search then narrows the
/// bracket around the best scan point.
pub fn maximize_ising_rate(k: usize) -> Result<IsingOptimum> {
    if k < 2 {
        return Err(Error::Domain(format!("alphabet size {k} below 2")));
    }
    let n = SCAN_POINTS;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&p| objective(p, k)).collect();
    let peak = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    let slack = 1e-15;
    let rising = values[..=peak].windows(2).all(|w| w[1] >= w[0] - slack);
    let falling = values[peak..].windows(2).all(|w| w[1] <= w[0] + slack);
    if !(rising && falling) {
        return Err(Error::NotUnimodal(format!("scan of the k = {k} objective has several local maxima")));
    }
    let mut lo = grid[peak.saturating_sub(1)];
    let mut hi = grid[(peak + 1).min(n - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (objective(a, k), objective(b, k));
    while hi - lo > GOLDEN_TOL {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = objective(b, k);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = objective(a, k);
        }
    }
    let p_star = 0.5 * (lo + hi);
    Ok(IsingOptimum { k, p_star, rate: objective(p_star, k) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_substitution() {
        assert!((ising_rate_objective(0.5, 3).unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert!((ising_rate_objective(0.0, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ising_rate_objective(1.0, 5).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(ising_rate_objective(-0.1, 3).is_err());
        assert!(ising_rate_objective(1.5, 3).is_err());
        assert!(ising_rate_objective(0.5, 1).is_err());
        assert!(maximize_ising_rate(1).is_err());
    }

    #[test]
    fn ternary_optimum() {
        let opt = maximize_ising_rate(3).unwrap();
        assert!((opt.p_star - 0.263805).abs() < 1e-4, "{opt:?}");
        assert!((opt.rate - 0.961227).abs() < 1e-5, "{opt:?}");
    }

    #[test]
    fn optimum_matches_dense_scan() {
        for k in 2..=8 {
            let opt = maximize_ising_rate(k).unwrap();
            let best = (0..=1_000_000).map(|i| objective(i as f64 * 1e-6, k)).fold(f64::MIN, f64::max);
            assert!(opt.rate >= best - 1e-12 && opt.rate - best < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn optimum_grows_with_alphabet() {
        let rates: Vec<f64> = (2..=8).map(|k| maximize_ising_rate(k).unwrap().rate).collect();
        assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
    }
}
