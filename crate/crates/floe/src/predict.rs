//! Total-size prediction for live icebergs from a fitted peak distribution.
//!
//! Native predictions condition on the strict space `{u > v_r}` where `v_r`
//! excludes the current tranche; synthetic per-chain predictions use the
//! inclusive space `{u >= v'}` where `v'` includes the current tranche.

use thiserror::Error;

use crate::survival::PeakDistribution;
use crate::synthetic::{AggregationMethod, Chain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PredictError {
    /// Distribution carries no event mass; prediction undefined.
    #[error("degenerate distribution")]
    Degenerate,
    /// Accumulated volume is at or past the largest support point; the
    /// caller treats the iceberg as predicted complete.
    #[error("empty constrained space")]
    EmptyConstrainedSpace,
}

/// Native prediction: conditional mean, median, and k best modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub mean: u64,
    pub median: u64,
    /// Best modes ordered by descending probability, ties in ascending
    /// volume.
    pub modes: Vec<u64>,
    pub space_size: usize,
}

/// Predict the total size of a native iceberg with accumulated volume `v_r`
/// (up to but not including the current tranche).
pub fn predict_native(
    dist: &PeakDistribution,
    v_r: u64,
    k: usize,
) -> Result<Prediction, PredictError> {
    if dist.degenerate {
        return Err(PredictError::Degenerate);
    }
    let space: Vec<(u64, f64)> = dist
        .support
        .iter()
        .zip(&dist.pmf)
        .filter(|&(&u, _)| u > v_r)
        .map(|(&u, &f)| (u, f))
        .collect();
    if space.is_empty() {
        return Err(PredictError::EmptyConstrainedSpace);
    }
    let mass: f64 = space.iter().map(|&(_, f)| f).sum();
    if mass <= 0.0 {
        return Err(PredictError::Degenerate);
    }

    let mean_f = space.iter().map(|&(u, f)| u as f64 * f).sum::<f64>() / mass;
    // Half away from zero; volumes are non-negative so f64::round suffices.
    let mean = mean_f.round() as u64;

    // Median: largest prefix of the renormalized pmf with cumulative mass
    // <= 0.5; when the first mass already exceeds 0.5 the smallest element
    // is used.
    let mut median = space[0].0;
    let mut cum = 0.0;
    for &(u, f) in &space {
        cum += f / mass;
        if cum <= 0.5 + f64::EPSILON {
            median = u;
        } else {
            break;
        }
    }

    let mut ranked: Vec<(u64, f64)> = space.clone();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let modes: Vec<u64> = ranked.iter().take(k).map(|&(u, _)| u).collect();

    Ok(Prediction { mean, median, modes, space_size: space.len() })
}

/// Per-chain mode prediction over the inclusive space `{u >= v_prime}`.
/// An empty space predicts the chain's own accumulated volume (predicted
/// complete).
pub fn predict_chain_mode(dist: &PeakDistribution, v_prime: u64) -> u64 {
    if dist.degenerate {
        return v_prime;
    }
    dist.support
        .iter()
        .zip(&dist.pmf)
        .filter(|&(&u, _)| u >= v_prime)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
        .map(|(&u, _)| u)
        .unwrap_or(v_prime)
}

/// Synthetic prediction at tranche number `r` (1-based), aggregated across
/// the tree's chains. A chain shorter than `r` contributes its full volume.
pub fn predict_synthetic(
    dist: &PeakDistribution,
    chains: &[Chain],
    peak: u64,
    r: usize,
    method: AggregationMethod,
) -> f64 {
    assert!(r >= 1 && !chains.is_empty());
    let pred = |chain: &Chain| {
        let v_prime = peak * r.min(chain.len()) as u64;
        predict_chain_mode(dist, v_prime) as f64
    };
    match method {
        AggregationMethod::All => {
            chains.iter().map(pred).sum::<f64>() / chains.len() as f64
        }
        AggregationMethod::Unique => {
            let mut lens: Vec<usize> = chains.iter().map(Chain::len).collect();
            lens.sort_unstable();
            lens.dedup();
            let sum: f64 = lens
                .iter()
                .map(|&l| pred(chains.iter().find(|c| c.len() == l).unwrap()))
                .sum();
            sum / lens.len() as f64
        }
        AggregationMethod::Longest => {
            pred(chains.iter().max_by_key(|c| (c.len(), c.volume)).unwrap())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn dist_from_pmf(peak: u64, points: &[(u64, f64)]) -> PeakDistribution {
        let support: Vec<u64> = points.iter().map(|&(u, _)| u).collect();
        let pmf: Vec<f64> = points.iter().map(|&(_, f)| f).collect();
        let k = support.len();
        // Survival implied by the pmf; events/at_risk are not used by the
        // predictors and are filled consistently.
        let mut survival = Vec::with_capacity(k);
        let mut s = 1.0;
        for &f in &pmf {
            s -= f;
            survival.push(s);
        }
        PeakDistribution {
            peak,
            support,
            events: pmf.clone(),
            at_risk: vec![1.0; k],
            survival,
            pmf,
            n_observations: k,
            degenerate: false,
        }
    }

    #[test]
    fn conditional_mean_over_strict_space() {
        let d = dist_from_pmf(9, &[(10, 0.5), (20, 0.3), (30, 0.2)]);
        let p = predict_native(&d, 10, 1).unwrap();
        assert_eq!(p.space_size, 2);
        assert_eq!(p.mean, 24);
        assert_eq!(p.modes, vec![20]);
    }

    #[test]
    fn point_mass() {
        let d = dist_from_pmf(9, &[(10, 1.0)]);
        let p = predict_native(&d, 0, 3).unwrap();
        assert_eq!((p.mean, p.median, p.modes.as_slice()), (10, 10, &[10][..]));
    }

    #[test]
    fn median_prefix_rule() {
        let d = dist_from_pmf(9, &[(10, 0.0), (20, 0.4), (30, 0.6)]);
        let p = predict_native(&d, 10, 1).unwrap();
        assert_eq!(p.median, 20);
    }

    #[test]
    fn median_falls_back_to_smallest() {
        let d = dist_from_pmf(9, &[(20, 0.8), (30, 0.2)]);
        let p = predict_native(&d, 0, 1).unwrap();
        assert_eq!(p.median, 20);
    }

    #[test]
    fn mode_ties_ascending() {
        let d = dist_from_pmf(9, &[(10, 0.25), (20, 0.25), (30, 0.5)]);
        let p = predict_native(&d, 0, 3).unwrap();
        assert_eq!(p.modes, vec![30, 10, 20]);
    }

    #[test]
    fn empty_space_is_reported() {
        let d = dist_from_pmf(9, &[(10, 1.0)]);
        assert_eq!(predict_native(&d, 10, 1), Err(PredictError::EmptyConstrainedSpace));
    }

    #[test]
    fn chain_mode_is_inclusive() {
        let d = dist_from_pmf(2, &[(6, 0.2), (8, 0.5), (10, 0.3)]);
        assert_eq!(predict_chain_mode(&d, 6), 8);
        // Boundary: accumulated equals max support.
        assert_eq!(predict_chain_mode(&d, 10), 10);
        // Past max support: predicted complete at own volume.
        assert_eq!(predict_chain_mode(&d, 12), 12);
    }

    #[test]
    fn synthetic_aggregation() {
        let d = dist_from_pmf(2, &[(6, 0.2), (8, 0.5), (10, 0.3)]);
        let chains = vec![
            Chain { nodes: vec![0, 1, 2], volume: 6 },
            Chain { nodes: vec![3, 4, 5, 6], volume: 8 },
        ];
        let all = predict_synthetic(&d, &chains, 2, 3, AggregationMethod::All);
        assert_eq!(all, 8.0);
        let longest = predict_synthetic(&d, &chains, 2, 4, AggregationMethod::Longest);
        assert_eq!(longest, 8.0);
    }
}
