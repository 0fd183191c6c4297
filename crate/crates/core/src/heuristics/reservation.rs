//! Time-expanded reservation table shared by the constructive heuristics.

use crate::graph::{Graph, NodeId};
use crate::instance::AgvId;

use super::trip::TimedTrip;

/// Per-step usage counters for nodes (edge heads), edges and station
/// actions, plus the node each AGV parks on after its last committed step.
#[derive(Debug, Clone)]
pub struct Reservations {
    node_count: usize,
    edge_count: usize,
    node_use: Vec<Vec<u16>>,
    edge_use: Vec<Vec<u16>>,
    action_use: Vec<Vec<u16>>,
    parked_at: Vec<NodeId>,
    parked_from: Vec<usize>,
}

impl Reservations {
    pub fn new(graph: &Graph, start_nodes: &[NodeId]) -> Self {
        Self {
            node_count: graph.node_count(),
            edge_count: graph.edge_count(),
            node_use: Vec::new(),
            edge_use: Vec::new(),
            action_use: Vec::new(),
            parked_at: start_nodes.to_vec(),
            parked_from: vec![0; start_nodes.len()],
        }
    }

    fn ensure(&mut self, t: usize) {
        while self.node_use.len() <= t {
            self.node_use.push(vec![0; self.node_count]);
            self.edge_use.push(vec![0; self.edge_count]);
            self.action_use.push(vec![0; self.node_count]);
        }
    }

    /// Last step with explicit reservations, plus one.
    pub fn extent(&self) -> usize {
        self.node_use.len()
    }

    fn parked_others(&self, agv: AgvId, t: usize, v: NodeId) -> u32 {
        (0..self.parked_at.len())
            .filter(|&b| b != agv && self.parked_at[b] == v && self.parked_from[b] <= t)
            .count() as u32
    }

    fn node_at(&self, t: usize, v: NodeId) -> u32 {
        self.node_use.get(t).map_or(0, |row| u32::from(row[v]))
    }

    fn edge_at(&self, t: usize, e: usize) -> u32 {
        self.edge_use.get(t).map_or(0, |row| u32::from(row[e]))
    }

    fn action_at(&self, t: usize, v: NodeId) -> u32 {
        self.action_use.get(t).map_or(0, |row| u32::from(row[v]))
    }

    /// Whether the parked AGVs collide with each other at step `t`.
    pub fn parking_conflict(&self, graph: &Graph, t: usize) -> Option<NodeId> {
        for (a, &v) in self.parked_at.iter().enumerate() {
            if self.parked_from[a] > t {
                continue;
            }
            let n = self.parked_others(a, t, v) + self.node_at(t, v) + 1;
            let e = graph.edge_id(v, v).map_or(0, |e| self.edge_at(t, e));
            let self_cap = graph.edge_capacity(v, v).unwrap_or(0);
            if n > graph.node_capacity(v) || self.parked_others(a, t, v) + e + 1 > self_cap {
                return Some(v);
            }
        }
        None
    }

    /// Whether `agv` can drive `trip` and then park on its last node forever.
    pub fn fits(&self, graph: &Graph, agv: AgvId, trip: &TimedTrip) -> bool {
        let mut acts = trip.actions.iter().peekable();
        for (k, pair) in trip.route.windows(2).enumerate() {
            let t = trip.start + k;
            let (v, w) = (pair[0], pair[1]);
            let Some(e) = graph.edge_id(v, w) else { return false };
            let parked_w = self.parked_others(agv, t, w);
            if self.node_at(t, w) + parked_w + 1 > graph.node_capacity(w) {
                return false;
            }
            let parked_e = if v == w { parked_w } else { 0 };
            if self.edge_at(t, e) + parked_e + 1 > graph.edge_capacity_by_id(e) {
                return false;
            }
            while let Some(&&(at, _, _, node)) = acts.peek() {
                if at != t {
                    break;
                }
                if self.action_at(t, node) >= 1 {
                    return false;
                }
                acts.next();
            }
        }
        let end = trip.end();
        let last = *trip.route.last().expect("trips are never empty");
        let Some(self_loop) = graph.edge_id(last, last) else { return false };
        let horizon = self.extent().max(end + 1);
        for t in end..=horizon {
            let parked = self.parked_others(agv, t, last);
            if self.node_at(t, last) + parked + 1 > graph.node_capacity(last)
                || self.edge_at(t, self_loop) + parked + 1 > graph.edge_capacity_by_id(self_loop)
            {
                return false;
            }
        }
        true
    }

    /// Records `trip` for `agv`; the AGV parks on the last node afterwards.
    pub fn commit(&mut self, graph: &Graph, agv: AgvId, trip: &TimedTrip) {
        let end = trip.end();
        if end > 0 {
            self.ensure(end - 1);
        }
        for (k, pair) in trip.route.windows(2).enumerate() {
            let t = trip.start + k;
            let e = graph.edge_id(pair[0], pair[1]).expect("committed trips use edges");
            self.node_use[t][pair[1]] += 1;
            self.edge_use[t][e] += 1;
        }
        for &(t, _, _, v) in &trip.actions {
            self.ensure(t);
            self.action_use[t][v] += 1;
        }
        self.parked_at[agv] = *trip.route.last().expect("trips are never empty");
        self.parked_from[agv] = end;
    }

    /// Records a station action outside any committed trip.
    pub fn reserve_action(&mut self, t: usize, v: NodeId) {
        self.ensure(t);
        self.action_use[t][v] += 1;
    }
}
