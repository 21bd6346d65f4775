//! Descriptive statistics over raw logs and detection output, rendered as
//! plot-ready CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ingest::{Action, OrderEvent};
use crate::native::{IcebergStatus, NativeIceberg};
use crate::synthetic::TrancheTree;

/// Counters accumulated in one pass over the raw event stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogStats {
    pub n_events: u64,
    pub limits: u64,
    pub modifies: u64,
    pub deletes: u64,
    pub trades: u64,
    /// Trade count per trade volume.
    pub trade_volume_hist: BTreeMap<u64, u64>,
    /// Total traded volume across the log.
    pub total_traded: u64,
}

impl LogStats {
    pub fn update(&mut self, ev: &OrderEvent) {
        self.n_events += 1;
        match ev.action {
            Action::Limit => self.limits += 1,
            Action::Modify => self.modifies += 1,
            Action::Delete => self.deletes += 1,
            Action::Trade => {
                self.trades += 1;
                *self.trade_volume_hist.entry(ev.volume).or_insert(0) += 1;
                self.total_traded += ev.volume;
            }
        }
    }

    pub fn actions_csv(&self) -> String {
        format!(
            "action,count\nLimit,{}\nModify,{}\nDelete,{}\nTrade,{}\n",
            self.limits, self.modifies, self.deletes, self.trades
        )
    }

    pub fn trade_volume_csv(&self) -> String {
        hist_csv("volume", &self.trade_volume_hist)
    }
}

/// Statistics over detected icebergs of both kinds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IcebergStats {
    pub native_complete: u64,
    pub native_cancelled: u64,
    pub synthetic_complete: u64,
    pub synthetic_cancelled: u64,
    /// Iceberg count per inferred peak volume.
    pub peak_hist: BTreeMap<u64, u64>,
    /// Iceberg count per tranche count (longest chain for trees).
    pub tranche_hist: BTreeMap<u64, u64>,
    /// Refill-gap count per gap in milliseconds (child placement minus
    /// parent delete), synthetic trees only.
    pub gap_hist_ms: BTreeMap<i64, u64>,
    /// Total iceberg volume: native totals plus longest-chain tree volumes.
    pub iceberg_volume: f64,
    pub n_native: u64,
    pub n_synthetic: u64,
}

impl IcebergStats {
    pub fn compute(native: &[NativeIceberg], trees: &[TrancheTree]) -> IcebergStats {
        let mut s = IcebergStats::default();
        for ice in native {
            s.n_native += 1;
            match ice.status {
                IcebergStatus::Complete => s.native_complete += 1,
                IcebergStatus::Cancelled => s.native_cancelled += 1,
            }
            if let Some(p) = ice.peak {
                *s.peak_hist.entry(p).or_insert(0) += 1;
            }
            *s.tranche_hist.entry(ice.tranche_volumes.len() as u64).or_insert(0) += 1;
            s.iceberg_volume += ice.total_volume as f64;
        }
        for tree in trees {
            s.n_synthetic += 1;
            match tree.status {
                IcebergStatus::Complete => s.synthetic_complete += 1,
                IcebergStatus::Cancelled => s.synthetic_cancelled += 1,
            }
            *s.peak_hist.entry(tree.peak).or_insert(0) += 1;
            *s.tranche_hist.entry(tree.max_chain_len() as u64).or_insert(0) += 1;
            s.iceberg_volume +=
                tree.aggregate_volume(crate::synthetic::AggregationMethod::Longest);
            for node in &tree.nodes {
                for &p in &node.parents {
                    if let Some(closed) = tree.nodes[p].closed {
                        let gap = node.placed.abs_ms() - closed.abs_ms();
                        *s.gap_hist_ms.entry(gap).or_insert(0) += 1;
                    }
                }
            }
        }
        s
    }

    pub fn zero_gap_fraction(&self) -> Option<f64> {
        let total: u64 = self.gap_hist_ms.values().sum();
        (total > 0).then(|| {
            *self.gap_hist_ms.get(&0).unwrap_or(&0) as f64 / total as f64
        })
    }

    /// Hidden-volume ratio: detected iceberg volume over total traded
    /// volume of the log.
    pub fn hidden_volume_ratio(&self, total_traded: u64) -> Option<f64> {
        (total_traded > 0).then(|| self.iceberg_volume / total_traded as f64)
    }

    pub fn completion_csv(&self) -> String {
        format!(
            "kind,status,count\nnative,complete,{}\nnative,cancelled,{}\nsynthetic,complete,{}\nsynthetic,cancelled,{}\n",
            self.native_complete,
            self.native_cancelled,
            self.synthetic_complete,
            self.synthetic_cancelled
        )
    }

    pub fn proportions_csv(&self, total_traded: u64) -> String {
        let total = (self.n_native + self.n_synthetic).max(1) as f64;
        let mut out = String::from("metric,value\n");
        writeln!(out, "native_count_fraction,{:.6}", self.n_native as f64 / total).unwrap();
        writeln!(out, "synthetic_count_fraction,{:.6}", self.n_synthetic as f64 / total)
            .unwrap();
        writeln!(out, "iceberg_volume,{:.2}", self.iceberg_volume).unwrap();
        writeln!(out, "total_traded_volume,{total_traded}").unwrap();
        writeln!(
            out,
            "hidden_volume_ratio,{}",
            self.hidden_volume_ratio(total_traded)
                .map_or(String::new(), |r| format!("{r:.6}"))
        )
        .unwrap();
        out
    }

    pub fn peaks_csv(&self) -> String {
        hist_csv("peak", &self.peak_hist)
    }

    pub fn tranches_csv(&self) -> String {
        hist_csv("tranches", &self.tranche_hist)
    }

    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("gap_ms,count\n");
        for (gap, n) in &self.gap_hist_ms {
            writeln!(out, "{gap},{n}").unwrap();
        }
        writeln!(
            out,
            "zero_gap_fraction,{}",
            self.zero_gap_fraction().map_or(String::new(), |f| format!("{f:.6}"))
        )
        .unwrap();
        out
    }
}

fn hist_csv<K: std::fmt::Display>(key: &str, hist: &BTreeMap<K, u64>) -> String {
    let mut out = format!("{key},count\n");
    for (k, n) in hist {
        writeln!(out, "{k},{n}").unwrap();
    }
    out
}
