//! Native (exchange-managed) iceberg detection.
//!
//! Every order id is tracked through a small state machine. An order becomes
//! an active iceberg when either (a) accumulated trade volume since the last
//! book update exceeds the resting volume, or (b) it is fully traded and then
//! modified back to non-zero volume. A delete with zero residual completes
//! the iceberg; a delete with positive residual cancels it (a censored
//! observation). Orders that finalize without iceberg evidence are ordinary
//! and are dropped.
//!
//! Normative transition table (state x event):
//!
//! | state   | event                                   | next    | effect                          |
//! |---------|-----------------------------------------|---------|---------------------------------|
//! | Fresh   | Trade (as aggressor)                    | Fresh   | pre_traded += v                 |
//! | Fresh   | Limit v_l                               | Resting | candidates = initial(pre, v_l)  |
//! | Fresh   | Delete / Modify / Trade (as passive)    | Fresh   | ignored (order predates stream) |
//! | Resting | Trade (either role)                     | Resting/Active | traded_since += v; wrap => Active |
//! | Resting | Modify v_m, traded_since <  resting     | Resting | resting = v_m (plain update)    |
//! | Resting | Modify v_m, traded_since == resting, v_m>0 | Active | refresh; candidates = {v_m}  |
//! | Resting | Modify v_m, traded_since >  resting     | Active  | refresh; refine candidates      |
//! | Active  | Trade / Modify                          | Active  | same accounting as Resting      |
//! | Resting | Delete                                  | final   | Ordinary (dropped)              |
//! | Active  | Delete, residual == 0                   | final   | Complete                        |
//! | Active  | Delete, residual > 0                    | final   | Cancelled                       |
//! | final   | any                                     | -       | StaleOrderId diagnostic         |
//!
//! Candidate refinement only runs while more than one peak value is
//! admissible; a refinement that would empty the set keeps the previous set
//! and flags the iceberg peak-indeterminate.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{Action, Diagnostic, OrderEvent, OrderId, Price, Side, Timestamp};

/// Set of admissible peak sizes given aggressive volume traded before
/// placement (`v_t`) and the placed limit volume (`v_l`).
///
/// `v_t + v_l` must be an integer number of peaks, so the peak is a divisor
/// quotient of `v_t + v_l` that is at least `v_l`. With `v_t == 0` the order
/// entered the book directly and the limit volume is the peak.
pub fn peak_candidates_initial(v_t: u64, v_l: u64) -> Vec<u64> {
    assert!(v_l >= 1, "placed limit volume must be positive");
    if v_t == 0 {
        return vec![v_l];
    }
    let total = v_t + v_l;
    let mut out: Vec<u64> = (1..=total).filter(|d| total % d == 0).map(|d| total / d).filter(|&q| q >= v_l).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Narrow a candidate set after a refresh.
///
/// With the trade consuming the resting volume exactly (`v_t == v_r`), the
/// following modify volume is itself the peak. With an overshooting trade,
/// only candidates `c` satisfying `c == v_m + (v_t - v_r) mod c` survive.
/// Returns `None` when no candidate survives (caller keeps the previous set
/// and flags the iceberg peak-indeterminate).
pub fn peak_refine(candidates: &[u64], v_m: u64, v_t: u64, v_r: u64) -> Option<Vec<u64>> {
    if v_t == v_r {
        return Some(vec![v_m]);
    }
    debug_assert!(v_t > v_r);
    let overshoot = v_t - v_r;
    let kept: Vec<u64> =
        candidates.iter().copied().filter(|&c| c == v_m + overshoot % c).collect();
    if kept.is_empty() {
        None
    } else {
        Some(kept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcebergStatus {
    Complete,
    Cancelled,
}

impl std::fmt::Display for IcebergStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl IcebergStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            IcebergStatus::Complete => "complete",
            IcebergStatus::Cancelled => "cancelled",
        }
    }
}

/// A finalized native iceberg.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeIceberg {
    pub order_id: OrderId,
    pub side: Side,
    pub price: Price,
    /// Precisely detected peak, when the candidate set narrowed to one value.
    pub peak: Option<u64>,
    pub peak_candidates: Vec<u64>,
    /// Total volume: all traded volume plus the explicitly deleted residual.
    pub total_volume: u64,
    /// Aggressive volume traded before the order appeared in the book.
    pub pre_placement_volume: u64,
    /// Realized per-tranche volumes of the displayed tranches; empty when the
    /// peak is indeterminate.
    pub tranche_volumes: Vec<u64>,
    pub status: IcebergStatus,
    pub first_time: Timestamp,
    pub last_time: Timestamp,
}

impl NativeIceberg {
    pub fn n_tranches(&self) -> usize {
        self.tranche_volumes.len()
    }

    pub fn csv_header() -> &'static str {
        "order_id,side,price,peak,peak_candidates,total_volume,n_tranches,status,first_time,last_time"
    }

    pub fn to_csv_row(&self) -> String {
        let peak = self.peak.map_or(String::new(), |p| p.to_string());
        let cands: Vec<String> = self.peak_candidates.iter().map(u64::to_string).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.order_id,
            self.side.as_char(),
            self.price,
            peak,
            cands.join(";"),
            self.total_volume,
            self.n_tranches(),
            self.status.as_str(),
            self.first_time,
            self.last_time
        )
    }
}

/// Chunk the displayed volume of an iceberg into realized tranche volumes.
///
/// Tranches fully consumed by aggression before placement never appeared in
/// the book and are not counted; a partially pre-consumed tranche is counted
/// with its full realized volume.
fn tranche_volumes(total: u64, peak: u64, pre_traded: u64) -> Vec<u64> {
    if peak == 0 {
        return Vec::new();
    }
    let hidden_full = pre_traded / peak * peak;
    let displayed = total.saturating_sub(hidden_full);
    let mut out = vec![peak; (displayed / peak) as usize];
    if displayed % peak > 0 {
        out.push(displayed % peak);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrackerState {
    Fresh,
    Resting,
    Active,
}

#[derive(Debug, Clone)]
struct Tracker {
    side: Side,
    price: Price,
    state: TrackerState,
    pre_traded: u64,
    /// Volume at the last Limit/Modify.
    resting: u64,
    /// Trade volume accumulated since the last Limit/Modify; multiple trades
    /// between updates accumulate rather than overwrite.
    traded_since: u64,
    total_traded: u64,
    candidates: Vec<u64>,
    peak_indeterminate: bool,
    refreshes: u32,
    first_time: Timestamp,
    last_time: Timestamp,
}

impl Tracker {
    fn new(ev: &OrderEvent) -> Self {
        Tracker {
            side: ev.side,
            price: ev.price,
            state: TrackerState::Fresh,
            pre_traded: 0,
            resting: 0,
            traded_since: 0,
            total_traded: 0,
            candidates: Vec::new(),
            peak_indeterminate: false,
            refreshes: 0,
            first_time: ev.time,
            last_time: ev.time,
        }
    }

    fn residual(&self) -> u64 {
        self.resting.saturating_sub(self.traded_since)
    }

    fn finalize(&self, order_id: OrderId, status: IcebergStatus, deleted: u64) -> NativeIceberg {
        let total = self.total_traded + deleted;
        let peak = if !self.peak_indeterminate && self.candidates.len() == 1 {
            Some(self.candidates[0])
        } else {
            None
        };
        let tranches = peak.map(|p| tranche_volumes(total, p, self.pre_traded)).unwrap_or_default();
        NativeIceberg {
            order_id,
            side: self.side,
            price: self.price,
            peak,
            peak_candidates: self.candidates.clone(),
            total_volume: total,
            pre_placement_volume: self.pre_traded,
            tranche_volumes: tranches,
            status,
            first_time: self.first_time,
            last_time: self.last_time,
        }
    }
}

const MAX_DIAGNOSTICS: usize = 1000;

/// Streaming native-iceberg detector; one instance per event stream.
#[derive(Debug, Default)]
pub struct NativeDetector {
    trackers: HashMap<OrderId, Tracker>,
    /// Order ids of finalized icebergs, kept to diagnose stale events.
    finalized: HashSet<OrderId>,
    diagnostics: Vec<Diagnostic>,
    events_seen: u64,
    ordinary_finalized: u64,
}

impl NativeDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn open_trackers(&self) -> usize {
        self.trackers.len()
    }

    pub fn ordinary_finalized(&self) -> u64 {
        self.ordinary_finalized
    }

    fn diag(&mut self, message: String) {
        if self.diagnostics.len() < MAX_DIAGNOSTICS {
            self.diagnostics.push(Diagnostic { line: self.events_seen, message });
        }
    }

    /// Feed one event; returns a finalized iceberg when the event closes one.
    pub fn apply_event(&mut self, ev: &OrderEvent) -> Option<NativeIceberg> {
        self.events_seen += 1;
        match ev.action {
            Action::Trade => {
                self.on_trade(ev.order_id, ev, false);
                if let Some(passive) = ev.affected_id {
                    if passive != ev.order_id {
                        self.on_trade(passive, ev, true);
                    }
                }
                None
            }
            Action::Limit => {
                self.on_limit(ev);
                None
            }
            Action::Modify => {
                self.on_modify(ev);
                None
            }
            Action::Delete => self.on_delete(ev),
        }
    }

    fn stale(&mut self, id: OrderId, ev: &OrderEvent) -> bool {
        if self.finalized.contains(&id) {
            self.diag(format!("StaleOrderId: {:?} event for finalized iceberg {id}", ev.action));
            true
        } else {
            false
        }
    }

    fn on_trade(&mut self, id: OrderId, ev: &OrderEvent, passive: bool) {
        if self.stale(id, ev) {
            return;
        }
        let tracker = self.trackers.entry(id).or_insert_with(|| Tracker::new(ev));
        tracker.last_time = ev.time;
        match tracker.state {
            TrackerState::Fresh => {
                if passive {
                    // Trade against an order placed before the stream began;
                    // its resting volume is unknown, so it cannot be tracked.
                    return;
                }
                tracker.pre_traded += ev.volume;
                tracker.total_traded += ev.volume;
            }
            TrackerState::Resting | TrackerState::Active => {
                tracker.traded_since += ev.volume;
                tracker.total_traded += ev.volume;
                if tracker.traded_since > tracker.resting {
                    tracker.state = TrackerState::Active;
                }
            }
        }
    }

    fn on_limit(&mut self, ev: &OrderEvent) {
        if self.stale(ev.order_id, ev) {
            return;
        }
        if ev.volume == 0 {
            self.diag(format!("zero-volume limit for order {}", ev.order_id));
            return;
        }
        if self.trackers.get(&ev.order_id).is_some_and(|t| t.state != TrackerState::Fresh) {
            self.diag(format!("duplicate limit for live order {}", ev.order_id));
        }
        let tracker = self.trackers.entry(ev.order_id).or_insert_with(|| Tracker::new(ev));
        tracker.last_time = ev.time;
        tracker.candidates = peak_candidates_initial(tracker.pre_traded, ev.volume);
        tracker.resting = ev.volume;
        tracker.traded_since = 0;
        tracker.price = ev.price;
        if tracker.state == TrackerState::Fresh {
            tracker.state = TrackerState::Resting;
        }
    }

    fn on_modify(&mut self, ev: &OrderEvent) {
        if self.stale(ev.order_id, ev) {
            return;
        }
        let Some(tracker) = self.trackers.get_mut(&ev.order_id) else {
            return; // order predates the stream
        };
        if tracker.state == TrackerState::Fresh {
            return;
        }
        tracker.last_time = ev.time;
        tracker.price = ev.price; // undisclosed repricing keeps the same iceberg
        let v_m = ev.volume;
        if tracker.traded_since > tracker.resting {
            // Overshooting trade consumed hidden tranches; this modify starts
            // the next displayed tranche.
            tracker.state = TrackerState::Active;
            tracker.refreshes += 1;
            if tracker.candidates.len() > 1 {
                match peak_refine(&tracker.candidates, v_m, tracker.traded_since, tracker.resting)
                {
                    Some(kept) => tracker.candidates = kept,
                    None => {
                        tracker.peak_indeterminate = true;
                        let id = ev.order_id;
                        self.diag(format!("EmptyCandidateSet: order {id} peak-indeterminate"));
                        let t = self.trackers.get_mut(&ev.order_id).unwrap();
                        t.resting = v_m;
                        t.traded_since = 0;
                        return;
                    }
                }
            }
        } else if tracker.traded_since == tracker.resting && v_m > 0 {
            // Fully traded, then modified to non-zero volume: refresh.
            tracker.state = TrackerState::Active;
            tracker.refreshes += 1;
            if tracker.candidates.len() > 1 {
                tracker.candidates = vec![v_m];
            }
        }
        tracker.resting = v_m;
        tracker.traded_since = 0;
    }

    fn on_delete(&mut self, ev: &OrderEvent) -> Option<NativeIceberg> {
        if self.stale(ev.order_id, ev) {
            return None;
        }
        let mut tracker = self.trackers.remove(&ev.order_id)?;
        tracker.last_time = ev.time;
        match tracker.state {
            TrackerState::Fresh | TrackerState::Resting => {
                self.ordinary_finalized += 1;
                None
            }
            TrackerState::Active => {
                let residual = tracker.residual();
                let status = if residual == 0 {
                    IcebergStatus::Complete
                } else {
                    IcebergStatus::Cancelled
                };
                self.finalized.insert(ev.order_id);
                Some(tracker.finalize(ev.order_id, status, residual))
            }
        }
    }

    /// End-of-stream: every still-active tracker emits as cancelled (censored
    /// at its accumulated volume); ordinary trackers are dropped.
    pub fn finalize_all(&mut self) -> Vec<NativeIceberg> {
        let mut ids: Vec<OrderId> = self
            .trackers
            .iter()
            .filter(|(_, t)| t.state == TrackerState::Active)
            .map(|(&id, _)| id)
            .collect();
        ids.sort_unstable();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let tracker = self.trackers.remove(&id).unwrap();
            let residual = tracker.residual();
            self.finalized.insert(id);
            out.push(tracker.finalize(id, IcebergStatus::Cancelled, residual));
        }
        self.ordinary_finalized += self.trackers.len() as u64;
        self.trackers.clear();
        out
    }
}
