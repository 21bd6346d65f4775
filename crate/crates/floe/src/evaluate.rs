//! Out-of-sample scoring: per-tranche classification into a confusion
//! matrix plus MAE/RMSE residual metrics, per predictor variant.

use std::collections::HashMap;
use std::fmt::Write as _;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::native::{IcebergStatus, NativeIceberg};
use crate::predict::{predict_chain_mode, predict_native, PredictError};
use crate::survival::Model;
use crate::synthetic::{aggregate, AggregationMethod, TrancheTree};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    fn count(&mut self, truth_positive: bool, pred_positive: bool) {
        match (truth_positive, pred_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
        }
    }
}

/// Residual accumulator; percentages are relative to the mean total volume
/// of the evaluated icebergs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegressionReport {
    pub sum_abs: f64,
    pub sum_sq: f64,
    pub n: usize,
}

impl RegressionReport {
    pub fn push(&mut self, residual: f64) {
        self.sum_abs += residual.abs();
        self.sum_sq += residual * residual;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &RegressionReport) {
        self.sum_abs += other.sum_abs;
        self.sum_sq += other.sum_sq;
        self.n += other.n;
    }

    pub fn mae(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_abs / self.n as f64)
    }

    pub fn rmse(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.sum_sq / self.n as f64).sqrt())
    }
}

/// Predictor variants scored side by side. `Mode(j)` uses the best `j`
/// modes; its classification is positive when any of the `j` values is,
/// and its residual is the minimum in absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predictor {
    Mean,
    Median,
    Mode(usize),
}

impl std::fmt::Display for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Predictor::Mean => write!(f, "mean"),
            Predictor::Median => write!(f, "median"),
            Predictor::Mode(j) => write!(f, "mode{j}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictorScore {
    pub confusion: ConfusionMatrix,
    pub regression: RegressionReport,
}

impl PredictorScore {
    fn merge(&mut self, other: &PredictorScore) {
        self.confusion.merge(&other.confusion);
        self.regression.merge(&other.regression);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub scores: Vec<(Predictor, PredictorScore)>,
    /// Mean total volume over evaluated icebergs; denominator for the
    /// relative MAE/RMSE percentages.
    pub mean_total_volume: f64,
    pub n_icebergs: usize,
    /// Complete icebergs skipped because the model has no usable
    /// distribution for their peak.
    pub n_skipped: usize,
}

fn predictors(k: usize) -> Vec<Predictor> {
    let mut out = vec![Predictor::Mean, Predictor::Median];
    out.extend((1..=k).map(Predictor::Mode));
    out
}

struct PartialEval {
    per_pred: HashMap<Predictor, PredictorScore>,
    total_volume: f64,
    n_icebergs: usize,
    n_skipped: usize,
}

impl PartialEval {
    fn new() -> Self {
        PartialEval {
            per_pred: HashMap::new(),
            total_volume: 0.0,
            n_icebergs: 0,
            n_skipped: 0,
        }
    }

    fn merge(mut self, other: PartialEval) -> Self {
        for (p, s) in other.per_pred {
            self.per_pred.entry(p).or_default().merge(&s);
        }
        self.total_volume += other.total_volume;
        self.n_icebergs += other.n_icebergs;
        self.n_skipped += other.n_skipped;
        self
    }

    fn into_report(self, k: usize) -> EvalReport {
        let mut scores: Vec<(Predictor, PredictorScore)> = predictors(k)
            .into_iter()
            .map(|p| (p, self.per_pred.get(&p).cloned().unwrap_or_default()))
            .collect();
        scores.sort_by_key(|&(p, _)| p);
        EvalReport {
            scores,
            mean_total_volume: if self.n_icebergs > 0 {
                self.total_volume / self.n_icebergs as f64
            } else {
                0.0
            },
            n_icebergs: self.n_icebergs,
            n_skipped: self.n_skipped,
        }
    }
}

fn eval_native_one(model: &Model, ice: &NativeIceberg, k: usize) -> PartialEval {
    let mut part = PartialEval::new();
    let Some(peak) = ice.peak else {
        part.n_skipped = 1;
        return part;
    };
    let dist = match model.distribution(peak) {
        Some(d) if !d.degenerate => d,
        _ => {
            part.n_skipped = 1;
            return part;
        }
    };
    part.n_icebergs = 1;
    part.total_volume = ice.total_volume as f64;

    let v_i = ice.total_volume;
    let mut v_r = 0u64; // accumulated volume before tranche r
    for &tranche in &ice.tranche_volumes {
        // Truth: negative means more tranches follow the current one.
        let truth_positive = v_r + peak >= v_i;
        let pred_positive = |v_hat: u64| v_r + peak >= v_hat;

        match predict_native(dist, v_r, k) {
            Ok(pred) => {
                for variant in predictors(k) {
                    let score = part.per_pred.entry(variant).or_default();
                    match variant {
                        Predictor::Mean => {
                            score.confusion.count(truth_positive, pred_positive(pred.mean));
                            score.regression.push(v_i as f64 - pred.mean as f64);
                        }
                        Predictor::Median => {
                            score.confusion.count(truth_positive, pred_positive(pred.median));
                            score.regression.push(v_i as f64 - pred.median as f64);
                        }
                        Predictor::Mode(j) => {
                            let modes = &pred.modes[..j.min(pred.modes.len())];
                            let any_pos = modes.iter().any(|&m| pred_positive(m));
                            score.confusion.count(truth_positive, any_pos);
                            let e = modes
                                .iter()
                                .map(|&m| v_i as f64 - m as f64)
                                .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
                                .unwrap_or(v_i as f64);
                            score.regression.push(e);
                        }
                    }
                }
            }
            // Accumulated volume at or past the support: predicted complete
            // (positive) with residual against the accumulated volume.
            Err(PredictError::EmptyConstrainedSpace) => {
                for variant in predictors(k) {
                    let score = part.per_pred.entry(variant).or_default();
                    score.confusion.count(truth_positive, true);
                    score.regression.push(v_i as f64 - v_r as f64);
                }
            }
            Err(PredictError::Degenerate) => unreachable!("degenerate filtered above"),
        }
        v_r += tranche;
    }
    part
}

/// Score native predictions after each tranche of every eventually-complete
/// iceberg with a known peak. Cancelled icebergs are excluded.
pub fn eval_native(model: &Model, icebergs: &[NativeIceberg], k: usize) -> EvalReport {
    let complete: Vec<&NativeIceberg> = icebergs
        .iter()
        .filter(|i| i.status == IcebergStatus::Complete)
        .collect();
    let merged = fold_eval(&complete, |ice| eval_native_one(model, ice, k));
    merged.into_report(k)
}

fn eval_synthetic_one(
    model: &Model,
    tree: &TrancheTree,
    method: AggregationMethod,
    min_eval_tranches: u32,
) -> PartialEval {
    let mut part = PartialEval::new();
    let dist = match model.distribution(tree.peak) {
        Some(d) if !d.degenerate => d,
        _ => {
            part.n_skipped = 1;
            return part;
        }
    };
    let chains = tree.chains();
    let actuals: Vec<(usize, u64)> = chains.iter().map(|c| (c.nodes.len(), c.volume)).collect();
    let actual = aggregate_actual(&actuals, method);

    // Depth (1-based tranche number) and max chain length through each node.
    let n = tree.nodes.len();
    let mut depth = vec![0usize; n];
    let mut below = vec![1usize; n]; // longest path from node down to a leaf
    for (i, node) in tree.nodes.iter().enumerate() {
        // Nodes are stored in placement order, so parents precede children.
        depth[i] = node.parents.iter().map(|&p| depth[p] + 1).max().unwrap_or(1).max(1);
    }
    for i in (0..n).rev() {
        if let Some(c) = tree.nodes[i].child {
            below[i] = below[c] + 1;
        }
    }

    part.n_icebergs = 1;
    part.total_volume = actual;

    let score = part.per_pred.entry(Predictor::Mode(1)).or_default();
    for i in 0..n {
        if depth[i] + below[i] - 1 < min_eval_tranches as usize {
            continue; // no chain through this tranche is long enough
        }
        let r = depth[i];
        let predicted = predict_at(dist, &actuals, tree.peak, r, method);
        if tree.nodes[i].child.is_none() {
            // Exact hit on the last tranche is the only true positive.
            if (predicted - actual).abs() < 1e-9 {
                score.confusion.tp += 1;
            } else {
                score.confusion.fp += 1;
            }
        } else if predicted > actual + 1e-9 {
            // Earlier tranche: correct only if the model still predicts
            // strictly more volume to come.
            score.confusion.tn += 1;
        } else {
            score.confusion.fn_ += 1;
        }
        score.regression.push(predicted - actual);
    }
    part
}

fn aggregate_actual(actuals: &[(usize, u64)], method: AggregationMethod) -> f64 {
    let chains: Vec<crate::synthetic::Chain> = actuals
        .iter()
        .map(|&(len, vol)| crate::synthetic::Chain { nodes: vec![0; len], volume: vol })
        .collect();
    aggregate(&chains, method)
}

/// Per-chain mode prediction at tranche `r`, aggregated like the actuals.
fn predict_at(
    dist: &crate::survival::PeakDistribution,
    actuals: &[(usize, u64)],
    peak: u64,
    r: usize,
    method: AggregationMethod,
) -> f64 {
    let pred_one = |len: usize| {
        let v_prime = peak * r.min(len) as u64;
        predict_chain_mode(dist, v_prime) as f64
    };
    match method {
        AggregationMethod::All => {
            actuals.iter().map(|&(l, _)| pred_one(l)).sum::<f64>() / actuals.len() as f64
        }
        AggregationMethod::Unique => {
            let mut lens: Vec<usize> = actuals.iter().map(|&(l, _)| l).collect();
            lens.sort_unstable();
            lens.dedup();
            lens.iter().map(|&l| pred_one(l)).sum::<f64>() / lens.len() as f64
        }
        AggregationMethod::Longest => {
            let &(l, _) = actuals.iter().max_by_key(|&&(l, v)| (l, v)).unwrap();
            pred_one(l)
        }
    }
}

/// Score synthetic trees by walking each tree once, visiting every tranche
/// node a single time and skipping tranches with no chain of length
/// `min_eval_tranches` through them. Only complete trees are scored.
pub fn eval_synthetic(
    model: &Model,
    trees: &[TrancheTree],
    method: AggregationMethod,
    min_eval_tranches: u32,
) -> EvalReport {
    let complete: Vec<&TrancheTree> = trees
        .iter()
        .filter(|t| t.status == IcebergStatus::Complete)
        .collect();
    let merged = fold_eval(&complete, |t| eval_synthetic_one(model, t, method, min_eval_tranches));
    EvalReport {
        scores: vec![(
            Predictor::Mode(1),
            merged.per_pred.get(&Predictor::Mode(1)).cloned().unwrap_or_default(),
        )],
        mean_total_volume: if merged.n_icebergs > 0 {
            merged.total_volume / merged.n_icebergs as f64
        } else {
            0.0
        },
        n_icebergs: merged.n_icebergs,
        n_skipped: merged.n_skipped,
    }
}

#[cfg(feature = "parallel")]
fn fold_eval<T: Sync, F: Fn(&T) -> PartialEval + Sync>(items: &[&T], f: F) -> PartialEval {
    items
        .par_iter()
        .map(|item| f(item))
        .reduce(PartialEval::new, PartialEval::merge)
}

#[cfg(not(feature = "parallel"))]
fn fold_eval<T, F: Fn(&T) -> PartialEval>(items: &[&T], f: F) -> PartialEval {
    items.iter().map(|item| f(item)).fold(PartialEval::new(), PartialEval::merge)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn fmt_with_pct(v: Option<f64>, mean_total: f64) -> String {
    match v {
        Some(x) if mean_total > 0.0 => format!("{:.2} ({:.2}%)", x, 100.0 * x / mean_total),
        Some(x) => format!("{x:.2}"),
        None => "undefined".into(),
    }
}

impl EvalReport {
    /// `metrics.csv` body: one row per predictor.
    pub fn metrics_csv(&self) -> String {
        let mut out =
            String::from("predictor,accuracy,precision,recall,f1,mae,mae_pct,rmse,rmse_pct\n");
        for (p, s) in &self.scores {
            let pct = |v: Option<f64>| match v {
                Some(x) if self.mean_total_volume > 0.0 => {
                    format!("{:.4}", 100.0 * x / self.mean_total_volume)
                }
                _ => String::new(),
            };
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
            writeln!(
                out,
                "{p},{},{},{},{},{},{},{},{}",
                opt(s.confusion.accuracy()),
                opt(s.confusion.precision()),
                opt(s.confusion.recall()),
                opt(s.confusion.f1()),
                opt(s.regression.mae()),
                pct(s.regression.mae()),
                opt(s.regression.rmse()),
                pct(s.regression.rmse()),
            )
            .unwrap();
        }
        out
    }

    /// `confusion.csv` body: raw cell counts per predictor.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("predictor,tp,fp,tn,fn\n");
        for (p, s) in &self.scores {
            let c = s.confusion;
            writeln!(out, "{p},{},{},{},{}", c.tp, c.fp, c.tn, c.fn_).unwrap();
        }
        out
    }

    /// Human-readable table with counts, cell percentages, and relative
    /// regression errors.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "evaluated {} icebergs ({} skipped); mean total volume {:.2}",
            self.n_icebergs, self.n_skipped, self.mean_total_volume
        )
        .unwrap();
        for (p, s) in &self.scores {
            let c = s.confusion;
            let total = c.total().max(1) as f64;
            writeln!(out, "\n[{p}]").unwrap();
            writeln!(
                out,
                "  tp {} ({:.2}%)  fp {} ({:.2}%)  tn {} ({:.2}%)  fn {} ({:.2}%)",
                c.tp,
                100.0 * c.tp as f64 / total,
                c.fp,
                100.0 * c.fp as f64 / total,
                c.tn,
                100.0 * c.tn as f64 / total,
                c.fn_,
                100.0 * c.fn_ as f64 / total,
            )
            .unwrap();
            writeln!(
                out,
                "  accuracy {}  precision {}  recall {}  f1 {}",
                fmt_opt(c.accuracy()),
                fmt_opt(c.precision()),
                fmt_opt(c.recall()),
                fmt_opt(c.f1()),
            )
            .unwrap();
            writeln!(
                out,
                "  mae {}  rmse {}",
                fmt_with_pct(s.regression.mae(), self.mean_total_volume),
                fmt_with_pct(s.regression.rmse(), self.mean_total_volume),
            )
            .unwrap();
        }
        out
    }
}
