use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::graph::NodeId;
use crate::heuristics::OnlineState;
use crate::instance::{AgvId, Instance, JobId};

use super::{ActionKind, Solution};

/// Constraint family a violation belongs to. `EqK` tags follow the numbering
/// of the model rows built by the exact model; the remaining tags
/// are structural problems that make the rows impossible to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Eq1,
    Eq2,
    Eq3,
    Eq4,
    Eq5,
    Eq6,
    Eq7,
    Eq8,
    Eq9,
    Eq10,
    Eq11,
    Eq12,
    Eq13,
    Eq14,
    Eq15,
    Eq17,
    Eq18,
    Eq19,
    Eq20,
    Eq21,
    Dimension,
    NodeOutOfRange,
    UnknownJob,
    UnknownAgv,
    TimeOutOfRange,
}

impl Constraint {
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            Constraint::Dimension
                | Constraint::NodeOutOfRange
                | Constraint::UnknownJob
                | Constraint::UnknownAgv
                | Constraint::TimeOutOfRange
        )
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Constraint::Dimension => "dimension",
            Constraint::NodeOutOfRange => "node_out_of_range",
            Constraint::UnknownJob => "unknown_job",
            Constraint::UnknownAgv => "unknown_agv",
            Constraint::TimeOutOfRange => "time_out_of_range",
            other => return write!(f, "{other:?}"),
        };
        f.write_str(name)
    }
}

impl Serialize for Constraint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agv: Option<AgvId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job: Option<JobId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<usize>,
    pub message: String,
}

impl Violation {
    fn new(constraint: Constraint, message: impl Into<String>) -> Self {
        Self { constraint, agv: None, job: None, node: None, time: None, message: message.into() }
    }

    fn agv(mut self, a: AgvId) -> Self {
        self.agv = Some(a);
        self
    }

    fn job(mut self, j: JobId) -> Self {
        self.job = Some(j);
        self
    }

    fn node(mut self, v: NodeId) -> Self {
        self.node = Some(v);
        self
    }

    fn time(mut self, t: usize) -> Self {
        self.time = Some(t);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.constraint, self.message)
    }
}

/// Collects every violated constraint of `solution`.
///
/// With an online state, jobs already on board at step 0 must be loaded at
/// step 0 by their carrier, and their loads are excluded from the loading
/// position, one-action-per-step and station exclusivity checks.
pub fn verify(instance: &Instance, solution: &Solution, online: Option<&OnlineState>) -> Vec<Violation> {
    let mut out = Vec::new();
    let h = solution.horizon;
    let graph = instance.graph();
    let agv_count = instance.agvs().len();

    if solution.routes.len() != agv_count {
        out.push(Violation::new(
            Constraint::Dimension,
            format!("{} route rows for {} AGVs", solution.routes.len(), agv_count),
        ));
        return out;
    }
    for (a, r) in solution.routes.iter().enumerate() {
        if r.len() != h + 1 {
            out.push(Violation::new(Constraint::Dimension, format!("route of agv {a} has {} columns, expected {}", r.len(), h + 1)).agv(a));
        }
        for (t, &v) in r.iter().enumerate() {
            if !graph.contains_node(v) {
                out.push(Violation::new(Constraint::NodeOutOfRange, format!("agv {a} at unknown node {v} at time {t}")).agv(a).node(v).time(t));
            }
        }
    }
    for (&j, asg) in &solution.schedule {
        if instance.job(j).is_none() {
            out.push(Violation::new(Constraint::UnknownJob, format!("schedule names unknown job {j}")).job(j));
        }
        if asg.agv >= agv_count {
            out.push(Violation::new(Constraint::UnknownAgv, format!("job {j} assigned to unknown agv {}", asg.agv)).job(j).agv(asg.agv));
        }
        for t in [asg.t_load, asg.t_unload].into_iter().flatten() {
            if t > h {
                out.push(Violation::new(Constraint::TimeOutOfRange, format!("job {j} acts at {t} beyond horizon {h}")).job(j).time(t));
            }
        }
    }
    let carried: BTreeMap<JobId, AgvId> = online.map(|s| s.carrier.clone()).unwrap_or_default();
    for (&j, &a) in &carried {
        if instance.job(j).is_none() {
            out.push(Violation::new(Constraint::UnknownJob, format!("online state carries unknown job {j}")).job(j));
        }
        if a >= agv_count {
            out.push(Violation::new(Constraint::UnknownAgv, format!("online state assigns job {j} to unknown agv {a}")).job(j).agv(a));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let is_online = online.is_some();

    // Eq5 start nodes, Eq2 edge continuity
    for (a, agv) in instance.agvs().iter().enumerate() {
        let r = &solution.routes[a];
        if r[0] != agv.start_node {
            out.push(Violation::new(Constraint::Eq5, format!("agv {a} starts at {} instead of {}", r[0], agv.start_node)).agv(a).node(r[0]).time(0));
        }
        for t in 0..=h {
            let (v, w) = solution.edge_at(a, t);
            if !graph.has_edge(v, w) {
                out.push(Violation::new(Constraint::Eq2, format!("agv {a} uses non-edge ({v}, {w}) at step {t}")).agv(a).node(v).time(t));
            }
        }
    }

    // Eq3 edge capacity, Eq4 node capacity
    for t in 0..=h {
        let mut edge_use: BTreeMap<usize, u32> = BTreeMap::new();
        let mut node_use: BTreeMap<NodeId, u32> = BTreeMap::new();
        for a in 0..agv_count {
            let (v, w) = solution.edge_at(a, t);
            if let Some(e) = graph.edge_id(v, w) {
                *edge_use.entry(e).or_default() += 1;
                *node_use.entry(w).or_default() += 1;
            }
        }
        for (e, n) in edge_use {
            if n > graph.edge_capacity_by_id(e) {
                let (v, w) = graph.edges()[e];
                out.push(Violation::new(Constraint::Eq3, format!("{n} AGVs on edge ({v}, {w}) at step {t}")).node(v).time(t));
            }
        }
        for (v, n) in node_use {
            if n > graph.node_capacity(v) {
                out.push(Violation::new(Constraint::Eq4, format!("{n} AGVs enter node {v} at step {t}")).node(v).time(t));
            }
        }
    }

    // per-job rows
    for job in instance.jobs() {
        let j = job.id;
        let is_carried = carried.contains_key(&j);
        if let Some(&a) = carried.get(&j) {
            let ok = solution.schedule.get(&j).is_some_and(|s| s.agv == a && s.t_load == Some(0));
            if !ok {
                out.push(Violation::new(Constraint::Eq17, format!("carried job {j} must be loaded by agv {a} at step 0")).job(j).agv(a).time(0));
            }
        }
        let Some(asg) = solution.schedule.get(&j) else {
            out.push(Violation::new(Constraint::Eq6, format!("job {j} is never loaded")).job(j));
            out.push(Violation::new(Constraint::Eq7, format!("job {j} is never unloaded")).job(j));
            continue;
        };
        let a = asg.agv;
        if asg.t_load.is_none() {
            out.push(Violation::new(Constraint::Eq6, format!("job {j} is never loaded")).job(j).agv(a));
        }
        if asg.t_unload.is_none() {
            out.push(Violation::new(Constraint::Eq7, format!("job {j} is never unloaded")).job(j).agv(a));
        }
        if let Some(u) = asg.t_unload {
            if asg.t_load.is_none_or(|l| u < l) {
                out.push(Violation::new(Constraint::Eq8, format!("job {j} unloaded at {u} before being loaded")).job(j).agv(a).time(u));
            }
        }
        if let Some(l) = asg.t_load {
            if !is_carried && solution.edge_at(a, l) != (job.start, job.start) {
                let tag = if is_online { Constraint::Eq18 } else { Constraint::Eq9 };
                out.push(Violation::new(tag, format!("agv {a} not stationary at {} while loading job {j} at {l}", job.start)).job(j).agv(a).node(job.start).time(l));
            }
        }
        if let Some(u) = asg.t_unload {
            if solution.edge_at(a, u) != (job.end, job.end) {
                out.push(Violation::new(Constraint::Eq10, format!("agv {a} not stationary at {} while unloading job {j} at {u}", job.end)).job(j).agv(a).node(job.end).time(u));
            }
        }
        if let (Some(b), Some(u)) = (job.blocked_by, asg.t_unload) {
            let blocker_load = solution.schedule.get(&b).and_then(|s| s.t_load);
            if blocker_load.is_none_or(|l| l > u) {
                out.push(Violation::new(Constraint::Eq13, format!("job {j} unloaded at {u} before blocking job {b} is loaded")).job(j).time(u));
            }
        }
    }

    // Eq11/Eq19 one action per step, Eq12 AGV capacity
    for (a, agv) in instance.agvs().iter().enumerate() {
        let mut per_step = vec![0u32; h + 1];
        for (t, j, kind) in solution.actions_of(a) {
            if kind == ActionKind::Load && carried.contains_key(&j) {
                continue;
            }
            per_step[t] += 1;
        }
        for (t, &n) in per_step.iter().enumerate() {
            if n > 1 {
                let tag = if is_online { Constraint::Eq19 } else { Constraint::Eq11 };
                out.push(Violation::new(tag, format!("agv {a} performs {n} actions at step {t}")).agv(a).time(t));
            }
        }
        for (t, &n) in solution.onboard_profile(a).iter().enumerate() {
            if n > i64::from(agv.capacity) {
                out.push(Violation::new(Constraint::Eq12, format!("agv {a} carries {n} pallets at step {t}")).agv(a).time(t));
            }
        }
    }

    // Eq14/15 (Eq20/21): one action per endpoint node per step
    let starts: BTreeSet<NodeId> = instance.jobs().iter().map(|j| j.start).collect();
    let ends: BTreeSet<NodeId> = instance.jobs().iter().map(|j| j.end).collect();
    let mut at_node: BTreeMap<(usize, NodeId), u32> = BTreeMap::new();
    for job in instance.jobs() {
        let Some(asg) = solution.schedule.get(&job.id) else { continue };
        if let Some(l) = asg.t_load {
            if !carried.contains_key(&job.id) {
                *at_node.entry((l, job.start)).or_default() += 1;
            }
        }
        if let Some(u) = asg.t_unload {
            *at_node.entry((u, job.end)).or_default() += 1;
        }
    }
    for ((t, v), n) in at_node {
        if n <= 1 {
            continue;
        }
        let (start_tag, end_tag) = if is_online { (Constraint::Eq20, Constraint::Eq21) } else { (Constraint::Eq14, Constraint::Eq15) };
        if starts.contains(&v) {
            out.push(Violation::new(start_tag, format!("{n} (un)loads at node {v} at step {t}")).node(v).time(t));
        }
        if ends.contains(&v) {
            out.push(Violation::new(end_tag, format!("{n} (un)loads at node {v} at step {t}")).node(v).time(t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::{make_pair, Agv, Job};
    use crate::solution::Assignment;

    fn ring() -> Graph {
        Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap()
    }

    fn tags(v: &[Violation]) -> Vec<Constraint> {
        let mut t: Vec<_> = v.iter().map(|x| x.constraint).collect();
        t.dedup();
        t
    }

    #[test]
    fn idle_solution_without_jobs_is_clean() {
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![]).unwrap();
        assert!(verify(&inst, &Solution::parked(&inst, 3), None).is_empty());
    }

    #[test]
    fn single_delivery_round_trip_is_clean() {
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![Job::delivery(0, 0, 2, 0)]).unwrap();
        let sol = Solution {
            horizon: 5,
            routes: vec![vec![0, 0, 1, 2, 2, 3]],
            schedule: [(0, Assignment::full(0, 0, 3))].into(),
        };
        assert!(verify(&inst, &sol, None).is_empty(), "{:?}", verify(&inst, &sol, None));
    }

    #[test]
    fn teleport_is_an_edge_violation() {
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![]).unwrap();
        let sol = Solution { horizon: 1, routes: vec![vec![0, 2]], schedule: BTreeMap::new() };
        assert_eq!(tags(&verify(&inst, &sol, None)), vec![Constraint::Eq2]);
    }

    #[test]
    fn wrong_start_node() {
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![]).unwrap();
        let sol = Solution { horizon: 0, routes: vec![vec![1]], schedule: BTreeMap::new() };
        assert_eq!(tags(&verify(&inst, &sol, None)), vec![Constraint::Eq5]);
    }

    #[test]
    fn pair_order_violation() {
        // removal at station 2 loaded at 6, its replacement unloaded at 4
        let (r, d) = make_pair(2, 0, 0, 0).unwrap();
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 2, start_node: 0 }], vec![r, d]).unwrap();
        let sol = Solution {
            horizon: 9,
            routes: vec![vec![0, 0, 1, 2, 2, 2, 2, 2, 3, 0]],
            schedule: [(0, Assignment::full(0, 5, 9)), (1, Assignment::full(0, 0, 4))].into(),
        };
        let v = verify(&inst, &sol, None);
        assert_eq!(tags(&v), vec![Constraint::Eq13]);
        // oracle: cumulative unloads of the delivery exceed cumulative loads of the removal at t = 4
        let cum = |t: usize, at: Option<usize>| at.map_or(0, |x| (x <= t) as i32);
        let bad: Vec<usize> = (0..=9).filter(|&t| cum(t, Some(4)) > cum(t, Some(5))).collect();
        assert_eq!(bad, vec![4]);
    }

    #[test]
    fn simultaneous_station_loads() {
        let g = ring();
        let jobs = vec![Job::removal(0, 0, 2, 0), Job::removal(1, 0, 2, 0)];
        let agvs = vec![Agv { id: 0, capacity: 1, start_node: 2 }, Agv { id: 1, capacity: 1, start_node: 2 }];
        let mut g2 = g.clone();
        g2.set_node_capacity(2, 2).unwrap();
        g2.set_edge_capacity(2, 2, 2).unwrap();
        let inst = Instance::new(g2, agvs, jobs).unwrap();
        let sol = Solution {
            horizon: 3,
            routes: vec![vec![2, 2, 3, 0], vec![2, 2, 2, 3]],
            schedule: [(0, Assignment::full(0, 0, 3)), (1, Assignment::full(1, 0, 3))].into(),
        };
        let t = tags(&verify(&inst, &sol, None));
        assert!(t.contains(&Constraint::Eq14));
        // agv 1 unloads while still at 3: wrong position
        assert!(t.contains(&Constraint::Eq10));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![]).unwrap();
        let sol = Solution { horizon: 3, routes: vec![vec![0, 0]], schedule: BTreeMap::new() };
        assert_eq!(tags(&verify(&inst, &sol, None)), vec![Constraint::Dimension]);
        let sol = Solution { horizon: 0, routes: vec![], schedule: BTreeMap::new() };
        assert_eq!(tags(&verify(&inst, &sol, None)), vec![Constraint::Dimension]);
    }

    #[test]
    fn capacity_and_unassigned() {
        let jobs = vec![Job::delivery(0, 0, 2, 0), Job::delivery(1, 0, 2, 0)];
        let inst = Instance::new(ring(), vec![Agv { id: 0, capacity: 1, start_node: 0 }], jobs).unwrap();
        let sol = Solution {
            horizon: 4,
            routes: vec![vec![0, 0, 0, 1, 2]],
            schedule: [(0, Assignment::full(0, 0, 4)), (1, Assignment { agv: 0, t_load: Some(1), t_unload: None })].into(),
        };
        let t = tags(&verify(&inst, &sol, None));
        assert_eq!(t, vec![Constraint::Eq7, Constraint::Eq12]);
    }
}
