//! Weighted Kaplan-Meier estimation of total iceberg size per peak.
//!
//! Complete icebergs are events; cancelled ones are right-censored at their
//! accumulated volume. Synthetic trees contribute one observation per chain
//! of distinct length, weighted 1/h where h is the number of distinct chain
//! lengths. The survival estimate uses the discrete product over weighted
//! event and at-risk counts, and the pmf is normalized when the largest
//! volume carries no event mass.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::native::{IcebergStatus, NativeIceberg};
use crate::synthetic::TrancheTree;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// One (possibly censored) total-volume observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeObservation {
    pub peak: u64,
    /// Accumulated total volume; a censoring lower bound when cancelled.
    pub volume: u64,
    pub weight: f64,
    pub censored: bool,
}

/// Map native icebergs to unit-weight observations. Icebergs without a
/// precisely detected peak are skipped; the skip count is returned.
pub fn observations_from_native(icebergs: &[NativeIceberg]) -> (Vec<VolumeObservation>, usize) {
    let mut out = Vec::with_capacity(icebergs.len());
    let mut skipped = 0;
    for berg in icebergs {
        match berg.peak {
            Some(p) => out.push(VolumeObservation {
                peak: p,
                volume: berg.total_volume,
                weight: 1.0,
                censored: berg.status == IcebergStatus::Cancelled,
            }),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// Map tranche trees to weighted observations: one per distinct chain length,
/// each weighted 1/h (uniform over the h distinct lengths).
pub fn observations_from_trees(trees: &[TrancheTree]) -> Vec<VolumeObservation> {
    let mut out = Vec::new();
    for tree in trees {
        let chains = tree.chains();
        let mut volumes: Vec<u64> = chains.iter().map(|c| c.volume).collect();
        volumes.sort_unstable();
        volumes.dedup();
        let w = 1.0 / volumes.len() as f64;
        let censored = tree.status == IcebergStatus::Cancelled;
        for v in volumes {
            out.push(VolumeObservation { peak: tree.peak, volume: v, weight: w, censored });
        }
    }
    out
}

/// Fitted per-peak distribution of total volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakDistribution {
    pub peak: u64,
    /// Unique observed volumes, ascending.
    pub support: Vec<u64>,
    /// Weighted event counts per support point.
    pub events: Vec<f64>,
    /// Weighted at-risk counts per support point.
    pub at_risk: Vec<f64>,
    /// Survival values at each support point.
    pub survival: Vec<f64>,
    /// Normalized probability mass per support point.
    pub pmf: Vec<f64>,
    pub n_observations: usize,
    /// True when no event mass exists and the pmf is undefined; degenerate
    /// distributions are excluded from prediction.
    pub degenerate: bool,
}

/// Fit one peak's distribution from its observations.
pub fn fit(peak: u64, observations: &[VolumeObservation]) -> PeakDistribution {
    assert!(!observations.is_empty(), "fit requires at least one observation");
    let mut support: Vec<u64> = observations.iter().map(|o| o.volume).collect();
    support.sort_unstable();
    support.dedup();

    let k = support.len();
    let mut events = vec![0.0; k];
    let mut totals = vec![0.0; k];
    for obs in observations {
        let j = support.binary_search(&obs.volume).unwrap();
        totals[j] += obs.weight;
        if !obs.censored {
            events[j] += obs.weight;
        }
    }
    // at_risk[j] = total weight at volumes >= u_j.
    let mut at_risk = vec![0.0; k];
    let mut acc = 0.0;
    for j in (0..k).rev() {
        acc += totals[j];
        at_risk[j] = acc;
    }

    let mut survival = Vec::with_capacity(k);
    let mut s = 1.0;
    for j in 0..k {
        s *= 1.0 - events[j] / at_risk[j];
        survival.push(s);
    }

    let mut pmf = Vec::with_capacity(k);
    let mut prev = 1.0;
    for &sj in &survival {
        pmf.push(prev - sj);
        prev = sj;
    }
    let mass: f64 = pmf.iter().sum();
    let degenerate = mass <= 0.0;
    if !degenerate && (mass - 1.0).abs() > NORMALIZATION_TOL {
        for f in &mut pmf {
            *f /= mass;
        }
    }

    PeakDistribution {
        peak,
        support,
        events,
        at_risk,
        survival,
        pmf,
        n_observations: observations.len(),
        degenerate,
    }
}

fn group_by_peak(observations: &[VolumeObservation]) -> BTreeMap<u64, Vec<VolumeObservation>> {
    let mut groups: BTreeMap<u64, Vec<VolumeObservation>> = BTreeMap::new();
    for &obs in observations {
        groups.entry(obs.peak).or_default().push(obs);
    }
    groups
}

/// Fit every peak present in the observations; per-peak fits are independent.
pub fn fit_all(observations: &[VolumeObservation]) -> Vec<PeakDistribution> {
    let groups: Vec<(u64, Vec<VolumeObservation>)> = group_by_peak(observations).into_iter().collect();
    #[cfg(feature = "parallel")]
    {
        groups.par_iter().map(|(p, obs)| fit(*p, obs)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        fit_all_seq_groups(&groups)
    }
}

/// Sequential variant of [`fit_all`]; always available for comparison.
pub fn fit_all_seq(observations: &[VolumeObservation]) -> Vec<PeakDistribution> {
    let groups: Vec<(u64, Vec<VolumeObservation>)> = group_by_peak(observations).into_iter().collect();
    fit_all_seq_groups(&groups)
}

fn fit_all_seq_groups(groups: &[(u64, Vec<VolumeObservation>)]) -> Vec<PeakDistribution> {
    groups.iter().map(|(p, obs)| fit(*p, obs)).collect()
}

pub const MODEL_VERSION: u32 = 1;

/// Provenance captured with a saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub dt: f64,
    pub min_tranches: u32,
    /// Training source description (path or window), free-form.
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: u32,
    pub config: ModelConfig,
    pub peaks: Vec<PeakDistribution>,
}

impl Model {
    pub fn new(config: ModelConfig, peaks: Vec<PeakDistribution>) -> Self {
        Model { version: MODEL_VERSION, config, peaks }
    }

    pub fn distribution(&self, peak: u64) -> Option<&PeakDistribution> {
        self.peaks.iter().find(|d| d.peak == peak)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, model)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let r = BufReader::new(File::open(path)?);
    let value: serde_json::Value = serde_json::from_reader(r)?;
    let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != MODEL_VERSION {
        return Err(ModelError::SchemaVersionMismatch { found, expected: MODEL_VERSION });
    }
    Ok(serde_json::from_value(value)?)
}

/// CSV export of the fitted tables: `peak,volume,events,at_risk,survival,pmf`.
pub fn export_csv(model: &Model) -> String {
    let mut out = String::from("peak,volume,events,at_risk,survival,pmf\n");
    for d in &model.peaks {
        for j in 0..d.support.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                d.peak, d.support[j], d.events[j], d.at_risk[j], d.survival[j], d.pmf[j]
            ));
        }
    }
    out
}
