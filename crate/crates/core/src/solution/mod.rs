//! Route-matrix solutions, the constraint verifier, objective and KPIs.
//!
//! Column `t` of a route is the node an AGV occupies at the start of step
//! `t`. During step `t < H` the AGV traverses edge `(r[t], r[t+1])`; at the
//! final step `H` it stays on the self-loop of `r[H]`. A load or unload at
//! step `t` requires the AGV to stay on the self-loop of the job endpoint
//! during that step.

mod kpi;
mod verify;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::instance::{AgvId, Instance, JobId};

pub use kpi::{completion_times, kpis, write_kpi_csv, KpiReport, KpiRow, KPI_HEADER};
pub use verify::{verify, Constraint, Violation};

/// Who handles a job and when. Either time may be missing while a search
/// holds a partial assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub agv: AgvId,
    pub t_load: Option<usize>,
    pub t_unload: Option<usize>,
}

impl Assignment {
    pub fn full(agv: AgvId, t_load: usize, t_unload: usize) -> Self {
        Self { agv, t_load: Some(t_load), t_unload: Some(t_unload) }
    }
}

impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.agv, self.t_load, self.t_unload).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (agv, t_load, t_unload) = <(AgvId, Option<usize>, Option<usize>)>::deserialize(deserializer)?;
        Ok(Self { agv, t_load, t_unload })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Load,
    Unload,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    pub horizon: usize,
    pub routes: Vec<Vec<NodeId>>,
    pub schedule: BTreeMap<JobId, Assignment>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolutionError {
    #[error("job {0} brings new material but is never unloaded")]
    UndefinedObjective(JobId),
    #[error("cannot shorten the horizon from {from} to {to}")]
    BadHorizon { from: usize, to: usize },
}

impl Solution {
    /// Every AGV parked at its start node for a single step.
    pub fn idle(instance: &Instance) -> Self {
        Self::parked(instance, 0)
    }

    /// Every AGV parked at its start node for `horizon + 1` columns.
    pub fn parked(instance: &Instance, horizon: usize) -> Self {
        Self {
            horizon,
            routes: instance.agvs().iter().map(|a| vec![a.start_node; horizon + 1]).collect(),
            schedule: BTreeMap::new(),
        }
    }

    pub fn agv_count(&self) -> usize {
        self.routes.len()
    }

    /// Edge used by `agv` during step `t`.
    pub fn edge_at(&self, agv: AgvId, t: usize) -> (NodeId, NodeId) {
        let r = &self.routes[agv];
        if t < self.horizon {
            (r[t], r[t + 1])
        } else {
            (r[t], r[t])
        }
    }

    /// Whether `agv` stays put during step `t`.
    pub fn is_stationary(&self, agv: AgvId, t: usize) -> bool {
        let (a, b) = self.edge_at(agv, t);
        a == b
    }

    /// Node that `agv` reaches at the end of step `t`.
    pub fn head_at(&self, agv: AgvId, t: usize) -> NodeId {
        self.edge_at(agv, t).1
    }

    /// Actions of one AGV ordered by time.
    pub fn actions_of(&self, agv: AgvId) -> Vec<(usize, JobId, ActionKind)> {
        let mut out = Vec::new();
        for (&j, a) in &self.schedule {
            if a.agv != agv {
                continue;
            }
            if let Some(t) = a.t_load {
                out.push((t, j, ActionKind::Load));
            }
            if let Some(t) = a.t_unload {
                out.push((t, j, ActionKind::Unload));
            }
        }
        out.sort();
        out
    }

    /// Pallets on board of `agv` after the actions of every step.
    pub fn onboard_profile(&self, agv: AgvId) -> Vec<i64> {
        let mut delta = vec![0i64; self.horizon + 1];
        for (t, _, kind) in self.actions_of(agv) {
            if t <= self.horizon {
                delta[t] += if kind == ActionKind::Load { 1 } else { -1 };
            }
        }
        let mut acc = 0;
        delta
            .into_iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect()
    }

    /// Extends every route by parking on the last node.
    pub fn pad_to(&mut self, horizon: usize) {
        if horizon <= self.horizon {
            return;
        }
        for r in &mut self.routes {
            let last = *r.last().expect("routes are never empty");
            r.resize(horizon + 1, last);
        }
        self.horizon = horizon;
    }

    /// Drops trailing columns in which no AGV moves or acts.
    pub fn trim(&mut self) {
        let mut last_used = 0;
        for a in 0..self.routes.len() {
            for t in 0..self.horizon {
                if self.routes[a][t] != self.routes[a][t + 1] {
                    last_used = last_used.max(t + 1);
                }
            }
        }
        for a in self.schedule.values() {
            for t in [a.t_load, a.t_unload].into_iter().flatten() {
                last_used = last_used.max(t);
            }
        }
        if last_used < self.horizon {
            for r in &mut self.routes {
                r.truncate(last_used + 1);
            }
            self.horizon = last_used;
        }
    }

    /// Sum of unload steps over jobs that bring new material.
    pub fn objective(&self, instance: &Instance) -> Result<usize, SolutionError> {
        objective(instance, self)
    }
}

/// Sum of unload steps over jobs that bring new material.
pub fn objective(instance: &Instance, solution: &Solution) -> Result<usize, SolutionError> {
    let mut total = 0;
    for job in instance.jobs().iter().filter(|j| j.brings_new_material) {
        let t = solution
            .schedule
            .get(&job.id)
            .and_then(|a| a.t_unload)
            .ok_or(SolutionError::UndefinedObjective(job.id))?;
        total += t;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::{Agv, Job};

    fn ring_instance(deliveries: &[NodeId]) -> Instance {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        let jobs = deliveries.iter().enumerate().map(|(i, &k)| Job::delivery(i, 0, k, 0)).collect();
        Instance::new(g, vec![Agv { id: 0, capacity: 2, start_node: 0 }], jobs).unwrap()
    }

    #[test]
    fn objective_sums_delivery_unloads() {
        let inst = ring_instance(&[1, 2]);
        let mut sol = Solution::parked(&inst, 9);
        sol.schedule.insert(0, Assignment::full(0, 0, 3));
        sol.schedule.insert(1, Assignment::full(0, 1, 9));
        assert_eq!(objective(&inst, &sol).unwrap(), 12);
        sol.schedule.remove(&1);
        assert_eq!(objective(&inst, &sol).unwrap_err(), SolutionError::UndefinedObjective(1));
    }

    #[test]
    fn json_shape() {
        let inst = ring_instance(&[1]);
        let mut sol = Solution::parked(&inst, 1);
        sol.schedule.insert(0, Assignment { agv: 0, t_load: Some(0), t_unload: None });
        let text = serde_json::to_string(&sol).unwrap();
        assert_eq!(text, r#"{"horizon":1,"routes":[[0,0]],"schedule":{"0":[0,0,null]}}"#);
        assert_eq!(serde_json::from_str::<Solution>(&text).unwrap(), sol);
    }

    #[test]
    fn trim_and_pad() {
        let inst = ring_instance(&[1]);
        let mut sol = Solution::parked(&inst, 5);
        sol.routes[0] = vec![0, 1, 1, 1, 1, 1];
        sol.trim();
        assert_eq!(sol.routes[0], vec![0, 1]);
        sol.pad_to(3);
        assert_eq!(sol.routes[0], vec![0, 1, 1, 1]);
    }
}
