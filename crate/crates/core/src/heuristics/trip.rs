use crate::graph::NodeId;
use crate::instance::JobId;
use crate::solution::ActionKind;

use super::Paths;

/// Consecutive stops of a trip are joined by single edges. The AGV performs
/// the actions of a stop one per step while standing on its self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stop {
    pub node: NodeId,
    pub actions: Vec<(JobId, ActionKind)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trip {
    pub stops: Vec<Stop>,
}

/// A trip anchored at a start step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedTrip {
    pub start: usize,
    /// Route columns `start..=end`.
    pub route: Vec<NodeId>,
    /// `(step, job, kind, node)` in time order.
    pub actions: Vec<(usize, JobId, ActionKind, NodeId)>,
}

impl TimedTrip {
    pub fn end(&self) -> usize {
        self.start + self.route.len() - 1
    }
}

impl Trip {
    pub fn starting_at(node: NodeId) -> Self {
        Self { stops: vec![Stop { node, actions: Vec::new() }] }
    }

    pub fn position(&self) -> NodeId {
        self.stops.last().expect("trips are never empty").node
    }

    /// Appends the shortest path from the current position to `target`.
    pub fn go_to(&mut self, paths: &Paths, target: NodeId) {
        let from = self.position();
        for v in paths.path(from, target).into_iter().skip(1) {
            self.stops.push(Stop { node: v, actions: Vec::new() });
        }
    }

    /// Appends a single hop along an edge.
    pub fn step_to(&mut self, node: NodeId) {
        self.stops.push(Stop { node, actions: Vec::new() });
    }

    pub fn act(&mut self, job: JobId, kind: ActionKind) {
        self.stops.last_mut().expect("trips are never empty").actions.push((job, kind));
    }

    pub fn action_count(&self) -> usize {
        self.stops.iter().map(|s| s.actions.len()).sum()
    }

    pub fn timed(&self, start: usize) -> TimedTrip {
        let mut route = Vec::new();
        let mut actions = Vec::new();
        let mut t = start;
        for (i, stop) in self.stops.iter().enumerate() {
            route.push(stop.node);
            for &(job, kind) in &stop.actions {
                actions.push((t, job, kind, stop.node));
                t += 1;
                route.push(stop.node);
            }
            if i + 1 < self.stops.len() {
                t += 1;
            }
        }
        TimedTrip { start, route, actions }
    }
}
