//! Synthetic (ISV-managed) iceberg detection.
//!
//! A tranche is a resting limit order that is fully traded and then deleted.
//! A new limit order with the same (side, price, volume) arriving within `dt`
//! of such a delete is linked as the next tranche. When several tranches are
//! deleted simultaneously, the refill links to all of them, merging their
//! chains into one tree. Every root-to-leaf path (a chain) is a candidate
//! iceberg. A pending delete whose window expires without a refill completes
//! the iceberg; a tranche deleted without full execution cancels it.

use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::{Action, OrderEvent, OrderId, Price, Side, Timestamp};
use crate::native::IcebergStatus;

/// Detector parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Refill window in seconds.
    pub dt: f64,
    /// Minimum chain length for a tree to be reported as an iceberg.
    pub min_tranches: u32,
    /// Minimum chain length used when forming evaluation tranche sets.
    pub min_eval_tranches: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { dt: 0.3, min_tranches: 3, min_eval_tranches: 3 }
    }
}

impl DetectorConfig {
    pub fn dt_ms(&self) -> i64 {
        (self.dt * 1000.0).round() as i64
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if self.min_tranches < 2 {
            return Err("min_tranches must be at least 2".into());
        }
        Ok(())
    }
}

/// One tranche in a finalized tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheNode {
    pub order_id: OrderId,
    pub placed: Timestamp,
    /// Delete time for executed tranches.
    pub closed: Option<Timestamp>,
    /// Indices into the tree's node vector.
    pub parents: Vec<usize>,
    pub child: Option<usize>,
}

/// One root-to-leaf path with its accumulated volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Node indices from root to leaf.
    pub nodes: Vec<usize>,
    pub volume: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// A finalized tranche tree (possibly with merged chains).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheTree {
    pub tree_id: u64,
    pub side: Side,
    pub price: Price,
    /// Constant per-tranche volume, taken as the display quantity.
    pub peak: u64,
    pub status: IcebergStatus,
    pub nodes: Vec<TrancheNode>,
    pub first_time: Timestamp,
    pub last_time: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMethod {
    All,
    Unique,
    Longest,
}

impl AggregationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationMethod::All => "all",
            AggregationMethod::Unique => "unique",
            AggregationMethod::Longest => "longest",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(AggregationMethod::All),
            "unique" => Some(AggregationMethod::Unique),
            "longest" => Some(AggregationMethod::Longest),
            _ => None,
        }
    }
}

impl TrancheTree {
    /// All root-to-leaf chains, ordered by (leaf placed, leaf id, root placed,
    /// root id) for determinism.
    pub fn chains(&self) -> Vec<Chain> {
        let mut leaves: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].child.is_none())
            .collect();
        leaves.sort_by_key(|&i| (self.nodes[i].placed, self.nodes[i].order_id));
        let mut chains = Vec::new();
        for leaf in leaves {
            // Walk upward through parents, enumerating every path to a root.
            let mut paths: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![vec![leaf]];
            while let Some(path) = stack.pop() {
                let top = *path.last().unwrap();
                if self.nodes[top].parents.is_empty() {
                    paths.push(path);
                } else {
                    for &p in &self.nodes[top].parents {
                        let mut next = path.clone();
                        next.push(p);
                        stack.push(next);
                    }
                }
            }
            paths.sort_by_key(|p| {
                let root = *p.last().unwrap();
                (self.nodes[root].placed, self.nodes[root].order_id)
            });
            for mut path in paths {
                path.reverse();
                let volume = self.peak * path.len() as u64;
                chains.push(Chain { nodes: path, volume });
            }
        }
        chains
    }

    pub fn max_chain_len(&self) -> usize {
        self.chains().iter().map(Chain::len).max().unwrap_or(0)
    }

    /// Aggregate total volume over the tree's chains.
    pub fn aggregate_volume(&self, method: AggregationMethod) -> f64 {
        aggregate(&self.chains(), method)
    }

    pub fn csv_header() -> &'static str {
        "tree_id,side,price,peak,status,n_chains,len_min,len_max,vol_all,vol_unique,vol_longest,first_time,last_time"
    }

    pub fn to_csv_row(&self) -> String {
        let chains = self.chains();
        let len_min = chains.iter().map(Chain::len).min().unwrap_or(0);
        let len_max = chains.iter().map(Chain::len).max().unwrap_or(0);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.tree_id,
            self.side.as_char(),
            self.price,
            self.peak,
            self.status.as_str(),
            chains.len(),
            len_min,
            len_max,
            aggregate(&chains, AggregationMethod::All),
            aggregate(&chains, AggregationMethod::Unique),
            aggregate(&chains, AggregationMethod::Longest),
            self.first_time,
            self.last_time
        )
    }

    /// Edge list rows `tree_id,parent_order_id,child_order_id,gap_ms`.
    pub fn edge_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for node in &self.nodes {
            for &p in &node.parents {
                let parent = &self.nodes[p];
                let gap = node.placed.abs_ms() - parent.closed.map_or(0, |t| t.abs_ms());
                rows.push(format!(
                    "{},{},{},{}",
                    self.tree_id, parent.order_id, node.order_id, gap
                ));
            }
        }
        rows
    }
}

/// Aggregate chain volumes: mean of all chains, mean over one representative
/// per distinct length, or the longest chain's volume (ties broken by larger
/// volume, then earliest leaf, which chain ordering already provides).
pub fn aggregate(chains: &[Chain], method: AggregationMethod) -> f64 {
    assert!(!chains.is_empty(), "tree must have at least one chain");
    match method {
        AggregationMethod::All => {
            chains.iter().map(|c| c.volume as f64).sum::<f64>() / chains.len() as f64
        }
        AggregationMethod::Unique => {
            let mut lens: Vec<usize> = chains.iter().map(Chain::len).collect();
            lens.sort_unstable();
            lens.dedup();
            let sum: u64 = lens
                .iter()
                .map(|&l| chains.iter().find(|c| c.len() == l).unwrap().volume)
                .sum();
            sum as f64 / lens.len() as f64
        }
        AggregationMethod::Longest => {
            let best = chains
                .iter()
                .max_by_key(|c| (c.len(), c.volume))
                .unwrap();
            best.volume as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BookKey {
    side: Side,
    price: Price,
    volume: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    /// Resting in the book.
    Live,
    /// Fully executed and deleted; refill window open.
    Pending,
    Closed,
}

#[derive(Debug, Clone)]
struct LiveNode {
    order_id: OrderId,
    key: BookKey,
    placed: Timestamp,
    deleted: Option<Timestamp>,
    traded: u64,
    state: NodeState,
    parents: Vec<u64>,
    child: Option<u64>,
    component: u64,
}

#[derive(Debug, Default)]
struct Component {
    nodes: Vec<u64>,
    open: usize,
    cancelled: bool,
    first_time: Option<Timestamp>,
    last_time: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Expiry {
    at_ms: i64,
    node: u64,
}

impl Ord for Expiry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on expiry time.
        other.at_ms.cmp(&self.at_ms).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Expiry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Streaming tranche-tree builder; one instance per event stream.
pub struct SyntheticDetector {
    config: DetectorConfig,
    nodes: HashMap<u64, LiveNode>,
    components: HashMap<u64, Component>,
    /// Live order id -> node id.
    by_order: HashMap<OrderId, u64>,
    /// Pending refill windows per book key, in delete order.
    pending: HashMap<BookKey, Vec<u64>>,
    expiries: BinaryHeap<Expiry>,
    next_node: u64,
    next_component: u64,
    next_tree: u64,
}

impl SyntheticDetector {
    pub fn new(config: DetectorConfig) -> Self {
        SyntheticDetector {
            config,
            nodes: HashMap::new(),
            components: HashMap::new(),
            by_order: HashMap::new(),
            pending: HashMap::new(),
            expiries: BinaryHeap::new(),
            next_node: 0,
            next_component: 0,
            next_tree: 0,
        }
    }

    pub fn open_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Feed one event; returns trees finalized by it (window expiries
    /// included).
    pub fn process_event(&mut self, ev: &OrderEvent) -> Vec<TrancheTree> {
        let mut out = self.expire_until(ev.time.abs_ms());
        match ev.action {
            Action::Limit => self.on_limit(ev),
            Action::Trade => {
                if let Some(passive) = ev.affected_id {
                    if let Some(&nid) = self.by_order.get(&passive) {
                        if let Some(node) = self.nodes.get_mut(&nid) {
                            node.traded += ev.volume;
                        }
                    }
                }
            }
            Action::Delete => {
                if let Some(tree) = self.on_delete(ev) {
                    out.push(tree);
                }
            }
            Action::Modify => {
                // A modified limit no longer matches the constant-peak model;
                // drop it from consideration and censor its tree.
                if let Some(nid) = self.by_order.remove(&ev.order_id) {
                    if let Some(tree) = self.close_node(nid, ev.time, true) {
                        out.push(tree);
                    }
                }
            }
        }
        out.retain(|t| self.reportable(t));
        out
    }

    /// Components too short to count as icebergs finalize silently.
    fn reportable(&self, tree: &TrancheTree) -> bool {
        tree.max_chain_len() as u32 >= self.config.min_tranches
    }

    /// End of stream: expire every remaining window and censor still-live
    /// tranches.
    pub fn finish(&mut self) -> Vec<TrancheTree> {
        let mut out = self.expire_until(i64::MAX);
        let mut live: Vec<(OrderId, u64)> = self.by_order.iter().map(|(&o, &n)| (o, n)).collect();
        live.sort_by_key(|&(_, n)| n);
        for (oid, nid) in live {
            self.by_order.remove(&oid);
            if let Some(placed) = self.nodes.get(&nid).map(|n| n.placed) {
                if let Some(tree) = self.close_node(nid, placed, true) {
                    out.push(tree);
                }
            }
        }
        out.retain(|t| self.reportable(t));
        out
    }

    fn expire_until(&mut self, now_ms: i64) -> Vec<TrancheTree> {
        let mut out = Vec::new();
        while let Some(&top) = self.expiries.peek() {
            if top.at_ms >= now_ms {
                break;
            }
            self.expiries.pop();
            let still_pending =
                self.nodes.get(&top.node).map_or(false, |n| n.state == NodeState::Pending);
            if still_pending {
                let key = self.nodes[&top.node].key;
                if let Some(q) = self.pending.get_mut(&key) {
                    q.retain(|&n| n != top.node);
                    if q.is_empty() {
                        self.pending.remove(&key);
                    }
                }
                let t = self.nodes[&top.node].deleted.unwrap();
                if let Some(tree) = self.close_node(top.node, t, false) {
                    out.push(tree);
                }
            }
        }
        out
    }

    fn new_component(&mut self) -> u64 {
        let id = self.next_component;
        self.next_component += 1;
        self.components.insert(id, Component::default());
        id
    }

    fn on_limit(&mut self, ev: &OrderEvent) {
        if ev.volume == 0 {
            return;
        }
        if self.by_order.contains_key(&ev.order_id) {
            return; // duplicate placement; keep the original node
        }
        let key = BookKey { side: ev.side, price: ev.price, volume: ev.volume };
        // Attach to all pending parents sharing the earliest delete time whose
        // window covers this placement.
        let mut parents: Vec<u64> = Vec::new();
        if let Some(q) = self.pending.get(&key) {
            let dt = self.config.dt_ms();
            let in_window: Vec<u64> = q
                .iter()
                .copied()
                .filter(|nid| {
                    let del = self.nodes[nid].deleted.unwrap().abs_ms();
                    let gap = ev.time.abs_ms() - del;
                    (0..=dt).contains(&gap)
                })
                .collect();
            if let Some(min_del) =
                in_window.iter().map(|nid| self.nodes[nid].deleted.unwrap().abs_ms()).min()
            {
                parents = in_window
                    .into_iter()
                    .filter(|nid| self.nodes[nid].deleted.unwrap().abs_ms() == min_del)
                    .collect();
            }
        }

        let nid = self.next_node;
        self.next_node += 1;
        let comp = if parents.is_empty() {
            self.new_component()
        } else {
            // Consume the chosen parents and merge their components.
            if let Some(q) = self.pending.get_mut(&key) {
                q.retain(|n| !parents.contains(n));
                if q.is_empty() {
                    self.pending.remove(&key);
                }
            }
            let mut comps: Vec<u64> =
                parents.iter().map(|p| self.nodes[p].component).collect();
            comps.sort_unstable();
            comps.dedup();
            let target = comps[0];
            for &c in &comps[1..] {
                let src = self.components.remove(&c).unwrap();
                for &n in &src.nodes {
                    self.nodes.get_mut(&n).unwrap().component = target;
                }
                let dst = self.components.get_mut(&target).unwrap();
                dst.nodes.extend(src.nodes);
                dst.open += src.open;
                dst.cancelled |= src.cancelled;
                dst.first_time = merge_time(dst.first_time, src.first_time, true);
                dst.last_time = merge_time(dst.last_time, src.last_time, false);
            }
            for &p in &parents {
                let node = self.nodes.get_mut(&p).unwrap();
                node.state = NodeState::Closed;
                node.child = Some(nid);
                self.components.get_mut(&target).unwrap().open -= 1;
            }
            target
        };

        self.nodes.insert(
            nid,
            LiveNode {
                order_id: ev.order_id,
                key,
                placed: ev.time,
                deleted: None,
                traded: 0,
                state: NodeState::Live,
                parents,
                child: None,
                component: comp,
            },
        );
        self.by_order.insert(ev.order_id, nid);
        let c = self.components.get_mut(&comp).unwrap();
        c.nodes.push(nid);
        c.open += 1;
        c.first_time = merge_time(c.first_time, Some(ev.time), true);
        c.last_time = merge_time(c.last_time, Some(ev.time), false);
    }

    fn on_delete(&mut self, ev: &OrderEvent) -> Option<TrancheTree> {
        let nid = self.by_order.remove(&ev.order_id)?;
        let node = self.nodes.get_mut(&nid)?;
        node.deleted = Some(ev.time);
        if node.traded >= node.key.volume {
            // Fully executed: open the refill window.
            node.state = NodeState::Pending;
            let key = node.key;
            let comp = node.component;
            self.pending.entry(key).or_default().push(nid);
            self.expiries.push(Expiry { at_ms: ev.time.abs_ms() + self.config.dt_ms(), node: nid });
            let c = self.components.get_mut(&comp).unwrap();
            c.last_time = merge_time(c.last_time, Some(ev.time), false);
            None
        } else {
            // Deleted without full execution: the whole iceberg is cancelled.
            self.close_node(nid, ev.time, true)
        }
    }

    /// Close a node with no child; finalize its component when no open nodes
    /// remain.
    fn close_node(&mut self, nid: u64, at: Timestamp, cancel: bool) -> Option<TrancheTree> {
        let node = self.nodes.get_mut(&nid)?;
        if node.state == NodeState::Closed {
            return None;
        }
        node.state = NodeState::Closed;
        if node.deleted.is_none() {
            node.deleted = Some(at);
        }
        let comp_id = node.component;
        let comp = self.components.get_mut(&comp_id).unwrap();
        comp.open -= 1;
        comp.cancelled |= cancel;
        comp.last_time = merge_time(comp.last_time, Some(at), false);
        if comp.open == 0 {
            Some(self.finalize_component(comp_id))
        } else {
            None
        }
    }

    fn finalize_component(&mut self, comp_id: u64) -> TrancheTree {
        let comp = self.components.remove(&comp_id).unwrap();
        let mut ids = comp.nodes;
        ids.sort_by_key(|nid| (self.nodes[nid].placed, self.nodes[nid].order_id));
        let index: HashMap<u64, usize> =
            ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut nodes = Vec::with_capacity(ids.len());
        let key = self.nodes[&ids[0]].key;
        for nid in &ids {
            let n = self.nodes.remove(nid).unwrap();
            nodes.push(TrancheNode {
                order_id: n.order_id,
                placed: n.placed,
                closed: n.deleted,
                parents: n.parents.iter().map(|p| index[p]).collect(),
                child: n.child.map(|c| index[&c]),
            });
        }
        let tree_id = self.next_tree;
        self.next_tree += 1;
        TrancheTree {
            tree_id,
            side: key.side,
            price: key.price,
            peak: key.volume,
            status: if comp.cancelled { IcebergStatus::Cancelled } else { IcebergStatus::Complete },
            nodes,
            first_time: comp.first_time.unwrap(),
            last_time: comp.last_time.unwrap(),
        }
    }
}

fn merge_time(a: Option<Timestamp>, b: Option<Timestamp>, min: bool) -> Option<Timestamp> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if (y < x) == min { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

#[cfg(test)]
pub mod tests {
    use super::*;
    use crate::ingest::parse_record;

    pub const SYNTHETIC_SAMPLE: &str = "\
18:22:12.00,1,S,Limit,1000,2,-
18:22:12.01,101,B,Trade,1000,2,1
18:22:12.01,1,S,Delete,1000,2,-
18:22:12.02,2,S,Limit,1000,2,-
18:22:12.04,4,S,Limit,1000,2,-
18:22:12.04,5,S,Limit,1000,2,-
18:22:13.00,102,B,Trade,1000,2,2
18:22:13.00,2,S,Delete,1000,2,-
18:22:13.01,3,S,Limit,1000,2,-
18:22:13.00,103,B,Trade,1000,2,4
18:22:13.00,104,B,Trade,1000,2,5
18:22:13.00,4,S,Delete,1000,2,-
18:22:13.00,5,S,Delete,1000,2,-
18:22:13.01,6,S,Limit,1000,2,-
18:22:14.00,7,S,Limit,1000,2,-
18:22:15.00,105,B,Trade,1000,2,3
18:22:15.00,106,B,Trade,1000,2,6
18:22:15.00,107,B,Trade,1000,2,7
18:22:15.00,3,S,Delete,1000,2,-
18:22:15.00,6,S,Delete,1000,2,-
18:22:15.00,7,S,Delete,1000,2,-
18:22:15.01,8,S,Limit,1000,2,-
18:22:16.00,108,B,Trade,1000,2,8
18:22:16.00,8,S,Delete,1000,2,-
18:22:16.01,9,S,Limit,1000,2,-
18:22:16.50,109,B,Trade,1000,2,9
18:22:16.50,9,S,Delete,1000,2,-
";

    pub fn replay(log: &str, config: DetectorConfig) -> Vec<TrancheTree> {
        let mut det = SyntheticDetector::new(config);
        let mut out = Vec::new();
        for line in log.lines() {
            out.extend(det.process_event(&parse_record(line).unwrap()));
        }
        out.extend(det.finish());
        out
    }

    /// Reporting threshold disabled, for inspecting short trees.
    pub fn permissive() -> DetectorConfig {
        DetectorConfig { min_tranches: 1, ..DetectorConfig::default() }
    }

    #[test]
    fn sample_log_builds_merged_tree() {
        let trees = replay(SYNTHETIC_SAMPLE, DetectorConfig::default());
        assert_eq!(trees.len(), 1);
        let tree = &trees[0];
        assert_eq!(tree.status, IcebergStatus::Complete);
        assert_eq!(tree.peak, 2);
        let chains = tree.chains();
        let mut lens: Vec<usize> = chains.iter().map(Chain::len).collect();
        lens.sort_unstable();
        assert_eq!(lens, vec![3, 4, 4, 5]);
        let mut vols: Vec<u64> = chains.iter().map(|c| c.volume).collect();
        vols.sort_unstable();
        assert_eq!(vols, vec![6, 8, 8, 10]);
    }

    #[test]
    fn sample_tree_aggregates() {
        let trees = replay(SYNTHETIC_SAMPLE, DetectorConfig::default());
        let tree = &trees[0];
        assert_eq!(tree.aggregate_volume(AggregationMethod::All), 8.0);
        assert_eq!(tree.aggregate_volume(AggregationMethod::Unique), 8.0);
        assert_eq!(tree.aggregate_volume(AggregationMethod::Longest), 10.0);
    }

    #[test]
    fn no_refill_completes_single_tranche() {
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
";
        let trees = replay(log, permissive());
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].status, IcebergStatus::Complete);
        let chains = trees[0].chains();
        assert_eq!(chains.len(), 1);
        assert_eq!((chains[0].len(), chains[0].volume), (1, 5));
        // Suppressed from reporting at the default min_tranches.
        assert!((trees[0].max_chain_len() as u32) < DetectorConfig::default().min_tranches);
    }

    #[test]
    fn linear_chain_volumes() {
        let log = "\
10:00:00.000,1,S,Limit,1000,7,-
10:00:01.000,101,B,Trade,1000,7,1
10:00:01.000,1,S,Delete,1000,7,-
10:00:01.100,2,S,Limit,1000,7,-
10:00:02.000,102,B,Trade,1000,7,2
10:00:02.000,2,S,Delete,1000,7,-
10:00:02.100,3,S,Limit,1000,7,-
10:00:03.000,103,B,Trade,1000,7,3
10:00:03.000,3,S,Delete,1000,7,-
";
        let trees = replay(log, DetectorConfig::default());
        assert_eq!(trees.len(), 1);
        let chains = trees[0].chains();
        assert_eq!(chains.len(), 1);
        assert_eq!((chains[0].len(), chains[0].volume), (3, 21));
    }

    #[test]
    fn partial_execution_cancels_tree() {
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
10:00:01.100,2,S,Limit,1000,5,-
10:00:02.000,102,B,Trade,1000,3,2
10:00:02.000,2,S,Delete,1000,2,-
";
        let trees = replay(log, permissive());
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].status, IcebergStatus::Cancelled);
        assert_eq!(trees[0].max_chain_len(), 2);
    }

    #[test]
    fn first_limit_in_window_wins() {
        // Two limits inside one pending window: only the first attaches.
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
10:00:01.100,2,S,Limit,1000,5,-
10:00:01.200,3,S,Limit,1000,5,-
";
        let mut det = SyntheticDetector::new(permissive());
        for line in log.lines() {
            det.process_event(&parse_record(line).unwrap());
        }
        let trees = det.finish();
        assert_eq!(trees.len(), 2);
        let linked = trees.iter().find(|t| t.nodes.len() == 2).unwrap();
        assert_eq!(linked.nodes[1].order_id, 2);
        assert!(trees.iter().any(|t| t.nodes.len() == 1 && t.nodes[0].order_id == 3));
    }

    #[test]
    fn refill_outside_window_starts_new_root() {
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
10:00:01.500,2,S,Limit,1000,5,-
";
        let trees = replay(log, permissive());
        assert_eq!(trees.len(), 2);
        assert!(trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn zero_gap_refill_links() {
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
10:00:01.000,2,S,Limit,1000,5,-
";
        let trees = replay(log, permissive());
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].nodes.len(), 2);
    }

    #[test]
    fn key_mismatch_never_links() {
        let log = "\
10:00:00.000,1,S,Limit,1000,5,-
10:00:01.000,101,B,Trade,1000,5,1
10:00:01.000,1,S,Delete,1000,5,-
10:00:01.100,2,S,Limit,1000.25,5,-
10:00:01.150,3,S,Limit,1000,6,-
10:00:01.200,4,B,Limit,1000,5,-
";
        let trees = replay(log, permissive());
        assert_eq!(trees.len(), 4);
        assert!(trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn min_tranches_monotonicity() {
        let report = |min: u32| {
            replay(SYNTHETIC_SAMPLE, DetectorConfig::default())
                .into_iter()
                .filter(|t| t.max_chain_len() as u32 >= min)
                .count()
        };
        let mut prev = report(2);
        for min in 3..8 {
            let n = report(min);
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let a = replay(SYNTHETIC_SAMPLE, DetectorConfig::default());
        let b = replay(SYNTHETIC_SAMPLE, DetectorConfig::default());
        assert_eq!(a, b);
    }
}
