//! Deterministic generator for order logs with embedded ground-truth
//! icebergs, plus truth-file scoring for recall/precision measurement.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{Action, OrderEvent, OrderId, Price, Side, Timestamp};
use crate::native::{IcebergStatus, NativeIceberg};
use crate::synthetic::{AggregationMethod, TrancheTree};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_native: usize,
    pub n_synthetic: usize,
    /// Inclusive peak-size range.
    pub peak_range: (u64, u64),
    /// Inclusive tranche-count range; minimum 3 so the peak is always
    /// pinned by at least one full refresh before any partial tail.
    pub tranche_range: (u32, u32),
    /// Probability that an iceberg is abandoned mid-tranche.
    pub cancel_prob: f64,
    /// Refill-delay upper bound in seconds; delays are drawn in (0, dt].
    pub dt: f64,
    /// Probability of emitting a decoy order block before each tranche.
    pub decoy_rate: f64,
    /// Probability that a synthetic tranche gets a same-key twin deleted
    /// at the same millisecond, exercising tree branching.
    pub simultaneous_delete_rate: f64,
    /// Volume traded against the book by the native iceberg before it
    /// rests; shortens its first displayed tranche.
    pub native_aggression: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            n_native: 20,
            n_synthetic: 20,
            peak_range: (5, 25),
            tranche_range: (3, 8),
            cancel_prob: 0.0,
            dt: 0.3,
            decoy_rate: 0.0,
            simultaneous_delete_rate: 0.0,
            native_aggression: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("rate {name} = {value} outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("empty range for {0}")]
    EmptyRange(&'static str),
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("tranche minimum must be at least 3, got {0}")]
    TrancheMinTooSmall(u32),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("cancel_prob", self.cancel_prob),
            ("decoy_rate", self.decoy_rate),
            ("simultaneous_delete_rate", self.simultaneous_delete_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::RateOutOfRange { name, value });
            }
        }
        if self.peak_range.0 > self.peak_range.1 || self.peak_range.0 == 0 {
            return Err(ConfigError::EmptyRange("peak"));
        }
        if self.tranche_range.0 > self.tranche_range.1 {
            return Err(ConfigError::EmptyRange("tranches"));
        }
        if self.tranche_range.0 < 3 {
            return Err(ConfigError::TrancheMinTooSmall(self.tranche_range.0));
        }
        if self.dt <= 0.0 {
            return Err(ConfigError::NonPositiveDt(self.dt));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcebergKind {
    Native,
    Synthetic,
}

impl std::fmt::Display for IcebergKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IcebergKind::Native => "native",
            IcebergKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub iceberg_id: u64,
    pub kind: IcebergKind,
    pub peak: u64,
    pub total: u64,
    pub status: IcebergStatus,
    pub tranche_order_ids: Vec<OrderId>,
}

impl TruthRecord {
    pub fn csv_header() -> &'static str {
        "iceberg_id,kind,peak,total,status,tranche_order_ids"
    }

    pub fn to_csv_row(&self) -> String {
        let ids: Vec<String> = self.tranche_order_ids.iter().map(u64::to_string).collect();
        format!(
            "{},{},{},{},{},{}",
            self.iceberg_id,
            self.kind,
            self.peak,
            self.total,
            self.status,
            ids.join(";")
        )
    }
}

struct Gen<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    events: Vec<OrderEvent>,
    truth: Vec<TruthRecord>,
    next_id: OrderId,
    /// Clock in milliseconds since midnight of the session base date;
    /// rolls into later dates when a long run crosses midnight.
    clock: u64,
}

// Iceberg prices and decoy prices live on disjoint bands so decoys can
// never be mistaken for tranches of a truth iceberg (same-key collisions
// would make the branching-recall invariant probabilistic).
const TICK: i64 = 2_500; // 0.25 in fixed-point 1e4
const ICE_BASE: i64 = 1_000 * 10_000;
const DECOY_BASE: i64 = 2_000 * 10_000;
const DAY_MS: u64 = 86_400_000;

impl<'a> Gen<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        Gen {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            events: Vec::new(),
            truth: Vec::new(),
            next_id: 1,
            clock: 10 * 3_600_000, // 10:00:00.000
        }
    }

    fn id(&mut self) -> OrderId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn tick_ms(&mut self, lo: u64, hi: u64) -> u64 {
        self.clock += self.rng.gen_range(lo..=hi);
        self.clock
    }

    fn emit(&mut self, order_id: OrderId, side: Side, action: Action, price: Price, volume: u64, affected: Option<OrderId>) {
        self.events.push(OrderEvent {
            time: Timestamp {
                date: NaiveDate::from_ymd_opt(2024, 1, 2)
                    .and_then(|d| d.checked_add_days(Days::new(self.clock / DAY_MS))),
                ms_of_day: (self.clock % DAY_MS) as u32,
            },
            order_id,
            side,
            action,
            price,
            volume,
            affected_id: affected,
        });
    }

    fn ice_price(&mut self) -> Price {
        Price(ICE_BASE + TICK * self.rng.gen_range(0..40))
    }

    fn side(&mut self) -> Side {
        if self.rng.gen_bool(0.5) { Side::Buy } else { Side::Sell }
    }

    /// Decoy sizes favor multiples of five, mirroring common round-lot
    /// habits in real flow.
    fn decoy_volume(&mut self) -> u64 {
        if self.rng.gen_bool(0.8) {
            5 * self.rng.gen_range(1..=10)
        } else {
            self.rng.gen_range(1..=50)
        }
    }

    fn maybe_decoy(&mut self) {
        if self.cfg.decoy_rate > 0.0 && self.rng.gen_bool(self.cfg.decoy_rate) {
            let id = self.id();
            let side = self.side();
            let price = Price(DECOY_BASE + TICK * self.rng.gen_range(0..40));
            let vol = self.decoy_volume();
            self.tick_ms(1, 40);
            self.emit(id, side, Action::Limit, price, vol, None);
            // Decoys either rest forever or leave with residual volume, so
            // a full-execution delete (the synthetic linking trigger) never
            // originates from one.
            if self.rng.gen_bool(0.5) {
                let traded = self.rng.gen_range(0..vol);
                if traded > 0 {
                    self.tick_ms(1, 40);
                    let aggressor = self.id();
                    self.emit(aggressor, side.opposite(), Action::Trade, price, traded, Some(id));
                }
                self.tick_ms(1, 40);
                self.emit(id, side, Action::Delete, price, vol - traded, None);
            }
        }
    }

    fn gen_native(&mut self) {
        let p = self.rng.gen_range(self.cfg.peak_range.0..=self.cfg.peak_range.1);
        let t = self.rng.gen_range(self.cfg.tranche_range.0..=self.cfg.tranche_range.1);
        let side = self.side();
        let price = self.ice_price();
        let ice = self.id();
        let aggression = self.cfg.native_aggression;

        // Full tranches except a possibly-short tail.
        let tail = self.rng.gen_range(1..=p);
        let displayed_total: u64 = p * (t as u64 - 1) + tail;
        let cancel = self.cfg.cancel_prob > 0.0 && self.rng.gen_bool(self.cfg.cancel_prob);

        if aggression > 0 {
            // The iceberg lifts resting liquidity before it rests; the
            // passive order predates the log.
            self.tick_ms(1, 40);
            self.emit(ice, side, Action::Trade, price, aggression, Some(0));
        }
        // First displayed tranche is shortened by the partial fill the
        // aggression left behind.
        let first = if aggression % p > 0 { p - aggression % p } else { p };

        self.maybe_decoy();
        self.tick_ms(1, 40);
        self.emit(ice, side, Action::Limit, price, first, None);

        let mut remaining = displayed_total;
        let mut resting = first.min(remaining);
        let mut traded_total = aggression;
        let mut tranche_no = 0u32;
        let status = loop {
            tranche_no += 1;
            let last_full = cancel && tranche_no == t;
            if last_full {
                // Abandon mid-tranche: partial fill, then pull the order.
                let part = self.rng.gen_range(0..resting);
                if part > 0 {
                    self.tick_ms(1, 40);
                    let aggressor = self.id();
                    self.emit(aggressor, side.opposite(), Action::Trade, price, part, Some(ice));
                    traded_total += part;
                }
                self.tick_ms(1, 40);
                self.emit(ice, side, Action::Delete, price, resting - part, None);
                traded_total += resting - part; // deleted residual counts into V_total
                break IcebergStatus::Cancelled;
            }
            // Exact consumption of the displayed tranche.
            self.tick_ms(1, 40);
            let aggressor = self.id();
            self.emit(aggressor, side.opposite(), Action::Trade, price, resting, Some(ice));
            traded_total += resting;
            remaining -= resting;
            if remaining == 0 {
                self.tick_ms(1, 40);
                self.emit(ice, side, Action::Delete, price, 0, None);
                break IcebergStatus::Complete;
            }
            resting = p.min(remaining);
            self.tick_ms(1, 40);
            self.emit(ice, side, Action::Modify, price, resting, None);
            self.maybe_decoy();
        };

        self.truth.push(TruthRecord {
            iceberg_id: ice,
            kind: IcebergKind::Native,
            peak: p,
            total: traded_total,
            status,
            tranche_order_ids: vec![ice],
        });
    }

    fn gen_synthetic(&mut self) {
        let p = self.rng.gen_range(self.cfg.peak_range.0..=self.cfg.peak_range.1);
        let t = self.rng.gen_range(self.cfg.tranche_range.0..=self.cfg.tranche_range.1);
        let side = self.side();
        let price = self.ice_price();
        let dt_ms = (self.cfg.dt * 1_000.0).round() as u64;
        let cancel = self.cfg.cancel_prob > 0.0 && self.rng.gen_bool(self.cfg.cancel_prob);

        let mut ids = Vec::with_capacity(t as usize);
        self.tick_ms(50, 200);
        let status = loop {
            let tranche_no = ids.len() as u32 + 1;
            let id = self.id();
            ids.push(id);
            self.emit(id, side, Action::Limit, price, p, None);

            let twin = (self.cfg.simultaneous_delete_rate > 0.0
                && tranche_no < t
                && self.rng.gen_bool(self.cfg.simultaneous_delete_rate))
            .then(|| {
                let twin = self.id();
                self.emit(twin, side, Action::Limit, price, p, None);
                twin
            });

            if cancel && tranche_no == t {
                let part = self.rng.gen_range(0..p);
                self.tick_ms(1, 40);
                if part > 0 {
                    let aggressor = self.id();
                    self.emit(aggressor, side.opposite(), Action::Trade, price, part, Some(id));
                }
                self.emit(id, side, Action::Delete, price, p - part, None);
                break IcebergStatus::Cancelled;
            }

            // Full execution, then delete at the trade's timestamp; a twin
            // is deleted at the same millisecond to force a branch.
            self.tick_ms(1, 40);
            let aggressor = self.id();
            self.emit(aggressor, side.opposite(), Action::Trade, price, p, Some(id));
            self.emit(id, side, Action::Delete, price, p, None);
            if let Some(twin) = twin {
                let aggressor = self.id();
                self.emit(aggressor, side.opposite(), Action::Trade, price, p, Some(twin));
                self.emit(twin, side, Action::Delete, price, p, None);
            }
            if tranche_no == t {
                break IcebergStatus::Complete;
            }
            // The refill must land within the linking window that opened at
            // the delete. A decoy block advances the clock by at most 120 ms
            // (three ticks of up to 40 ms), so only emit one when that still
            // leaves room before the deadline.
            let deadline = self.clock + dt_ms;
            if dt_ms > 125 {
                self.maybe_decoy();
            }
            let budget = deadline.saturating_sub(self.clock).max(1);
            let delay = self.rng.gen_range(1..=budget);
            self.clock += delay;
        };

        self.truth.push(TruthRecord {
            iceberg_id: ids[0],
            kind: IcebergKind::Synthetic,
            peak: p,
            total: p * ids.len() as u64,
            status,
            tranche_order_ids: ids,
        });
    }
}

/// Generate a scenario: a time-ordered event log plus one truth record per
/// embedded iceberg. Identical configs produce identical output.
pub fn generate(cfg: &ScenarioConfig) -> (Vec<OrderEvent>, Vec<TruthRecord>) {
    let mut g = Gen::new(cfg);
    // Interleave kinds deterministically so neither clusters at one end of
    // the session.
    let mut remaining = (cfg.n_native, cfg.n_synthetic);
    while remaining.0 > 0 || remaining.1 > 0 {
        let pick_native = remaining.0 > 0
            && (remaining.1 == 0
                || g.rng.gen_range(0..remaining.0 + remaining.1) < remaining.0);
        if pick_native {
            g.gen_native();
            remaining.0 -= 1;
        } else {
            g.gen_synthetic();
            remaining.1 -= 1;
        }
        g.maybe_decoy();
        g.tick_ms(50, 500);
    }
    (g.events, g.truth)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KindScore {
    pub truth_count: usize,
    pub detected_count: usize,
    pub matched: usize,
    pub peak_agreement: usize,
    pub total_agreement: usize,
}

impl KindScore {
    pub fn recall(&self) -> Option<f64> {
        (self.truth_count > 0).then(|| self.matched as f64 / self.truth_count as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        (self.detected_count > 0).then(|| self.matched as f64 / self.detected_count as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreReport {
    pub native: KindScore,
    pub synthetic: KindScore,
}

/// Match detections to truth by tranche order-id overlap and compare the
/// peak and total fields of matched pairs.
pub fn score_against_truth(
    native: &[NativeIceberg],
    trees: &[TrancheTree],
    truth: &[TruthRecord],
) -> ScoreReport {
    let mut report = ScoreReport::default();

    report.native.detected_count = native.len();
    report.synthetic.detected_count = trees.len();

    for rec in truth {
        match rec.kind {
            IcebergKind::Native => {
                report.native.truth_count += 1;
                if let Some(d) = native.iter().find(|d| d.order_id == rec.iceberg_id) {
                    report.native.matched += 1;
                    if d.peak == Some(rec.peak) {
                        report.native.peak_agreement += 1;
                    }
                    if d.total_volume == rec.total {
                        report.native.total_agreement += 1;
                    }
                }
            }
            IcebergKind::Synthetic => {
                report.synthetic.truth_count += 1;
                let found = trees.iter().find(|t| {
                    t.nodes.iter().any(|n| rec.tranche_order_ids.contains(&n.order_id))
                });
                if let Some(t) = found {
                    report.synthetic.matched += 1;
                    if t.peak == rec.peak {
                        report.synthetic.peak_agreement += 1;
                    }
                    let vol = t.aggregate_volume(AggregationMethod::Longest);
                    if (vol - rec.total as f64).abs() < 1e-9 {
                        report.synthetic.total_agreement += 1;
                    }
                }
            }
        }
    }
    report
}
