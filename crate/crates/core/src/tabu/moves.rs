//! Neighborhood moves over route matrices and schedules.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graph::NodeId;
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{ActionKind, Assignment, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    AssignJob,
    UnassignJob,
    NodeShift,
    LoopShift,
    LoopUnassign,
    LoopReassign,
}

/// A reversible change to a solution. Every variant stores enough of the
/// previous state for [`Move::reverse`] to undo it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    /// Replaces the schedule entry of `job`; `None` removes it.
    SetAssignment { job: JobId, before: Option<Assignment>, after: Option<Assignment> },
    /// Changes column `t` of one route.
    NodeShift { agv: AgvId, t: usize, before: NodeId, after: NodeId },
    /// Moves columns `start..=end` one step earlier (`backward`) or later,
    /// together with the listed actions.
    LoopShift { agv: AgvId, start: usize, end: usize, backward: bool, actions: Vec<(JobId, ActionKind)> },
    /// Parks the AGV at the stockroom over `start..=end` and drops the
    /// schedule entries of the loop's jobs.
    LoopUnassign { agv: AgvId, start: usize, end: usize, segment: Vec<NodeId>, entries: Vec<(JobId, Assignment)> },
    /// Puts `segment` on a parked AGV over `start..=end` and restores the
    /// entries.
    LoopReassign { agv: AgvId, start: usize, end: usize, segment: Vec<NodeId>, entries: Vec<(JobId, Assignment)> },
}

fn completeness(a: &Option<Assignment>) -> u8 {
    match a {
        None => 0,
        Some(x) => u8::from(x.t_load.is_some()) + u8::from(x.t_unload.is_some()),
    }
}

impl Move {
    pub fn kind(&self) -> MoveKind {
        match self {
            Move::SetAssignment { before, after, .. } => {
                if completeness(after) > completeness(before) {
                    MoveKind::AssignJob
                } else {
                    MoveKind::UnassignJob
                }
            }
            Move::NodeShift { .. } => MoveKind::NodeShift,
            Move::LoopShift { .. } => MoveKind::LoopShift,
            Move::LoopUnassign { .. } => MoveKind::LoopUnassign,
            Move::LoopReassign { .. } => MoveKind::LoopReassign,
        }
    }

    pub fn reverse(&self) -> Move {
        match self.clone() {
            Move::SetAssignment { job, before, after } => Move::SetAssignment { job, before: after, after: before },
            Move::NodeShift { agv, t, before, after } => Move::NodeShift { agv, t, before: after, after: before },
            Move::LoopShift { agv, start, end, backward, actions } => {
                let (start, end) = if backward { (start - 1, end - 1) } else { (start + 1, end + 1) };
                Move::LoopShift { agv, start, end, backward: !backward, actions }
            }
            Move::LoopUnassign { agv, start, end, segment, entries } => Move::LoopReassign { agv, start, end, segment, entries },
            Move::LoopReassign { agv, start, end, segment, entries } => Move::LoopUnassign { agv, start, end, segment, entries },
        }
    }

    /// AGVs whose route or actions the move touches.
    pub fn agvs(&self) -> Vec<AgvId> {
        match self {
            Move::SetAssignment { before, after, .. } => {
                let mut v: Vec<AgvId> = before.iter().chain(after.iter()).map(|a| a.agv).collect();
                v.dedup();
                v
            }
            Move::NodeShift { agv, .. }
            | Move::LoopShift { agv, .. }
            | Move::LoopUnassign { agv, .. }
            | Move::LoopReassign { agv, .. } => vec![*agv],
        }
    }

    /// Applies the move. The caller guarantees it was generated for `sol`.
    pub fn apply(&self, sol: &mut Solution) {
        match self {
            Move::SetAssignment { job, after, .. } => match after {
                Some(a) => {
                    sol.schedule.insert(*job, *a);
                }
                None => {
                    sol.schedule.remove(job);
                }
            },
            Move::NodeShift { agv, t, after, .. } => sol.routes[*agv][*t] = *after,
            Move::LoopShift { agv, start, end, backward, actions } => {
                let r = &mut sol.routes[*agv];
                if *backward {
                    r.remove(start - 1);
                    let last = r[end - 1];
                    r.insert(*end, last);
                } else {
                    r.remove(end + 1);
                    let first = r[*start];
                    r.insert(*start, first);
                }
                for (j, kind) in actions {
                    let e = sol.schedule.get_mut(j).expect("shifted jobs are scheduled");
                    let slot = match kind {
                        ActionKind::Load => &mut e.t_load,
                        ActionKind::Unload => &mut e.t_unload,
                    };
                    let t = slot.as_mut().expect("shifted actions exist");
                    if *backward {
                        *t -= 1;
                    } else {
                        *t += 1;
                    }
                }
            }
            Move::LoopUnassign { agv, start, end, segment, entries } => {
                let s = segment[0];
                for c in *start..=*end {
                    sol.routes[*agv][c] = s;
                }
                for (j, _) in entries {
                    sol.schedule.remove(j);
                }
            }
            Move::LoopReassign { agv, start, segment, entries, .. } => {
                sol.routes[*agv][*start..start + segment.len()].copy_from_slice(segment);
                for (j, a) in entries {
                    sol.schedule.insert(*j, *a);
                }
            }
        }
    }
}

/// A stockroom loop of one AGV: departure column `depart`, arrival column
/// `arrive`, the jobs served at stations in between and the action window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteLoop {
    pub agv: AgvId,
    pub depart: usize,
    pub arrive: usize,
    pub jobs: Vec<JobId>,
    pub window: (usize, usize),
}

/// Loops of every route, with each job attached to the loop in which its
/// station-side action happens.
pub fn route_loops(instance: &Instance, sol: &Solution, carried: &BTreeMap<JobId, AgvId>) -> Vec<RouteLoop> {
    let s = instance.stockroom();
    let mut out = Vec::new();
    for (a, r) in sol.routes.iter().enumerate() {
        let mut t = 0;
        while t < r.len() {
            if r[t] == s && t + 1 < r.len() && r[t + 1] != s {
                let depart = t;
                let mut arrive = t + 1;
                while arrive < r.len() && r[arrive] != s {
                    arrive += 1;
                }
                if arrive == r.len() {
                    break;
                }
                out.push(RouteLoop { agv: a, depart, arrive, jobs: Vec::new(), window: (depart, arrive) });
                t = arrive;
            } else {
                t += 1;
            }
        }
    }
    for (&j, asg) in &sol.schedule {
        let Some(job) = instance.job(j) else { continue };
        let station_time = if job.brings_new_material { asg.t_unload } else { asg.t_load };
        let Some(t) = station_time else { continue };
        if let Some(l) = out.iter_mut().find(|l| l.agv == asg.agv && l.depart < t && t < l.arrive) {
            l.jobs.push(j);
            for (time, kind) in [(asg.t_load, ActionKind::Load), (asg.t_unload, ActionKind::Unload)] {
                let Some(time) = time else { continue };
                if kind == ActionKind::Load && carried.contains_key(&j) {
                    continue;
                }
                l.window.0 = l.window.0.min(time);
                l.window.1 = l.window.1.max(time);
            }
        }
    }
    out
}

/// Removed loops that may be put back on some AGV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopTemplate {
    pub start: usize,
    pub end: usize,
    pub segment: Vec<NodeId>,
    pub entries: Vec<(JobId, Assignment)>,
}

/// Whether every action of the touched AGVs happens while standing on the
/// right node and every pair keeps its order.
pub fn respects_handling(instance: &Instance, sol: &Solution, agvs: &[AgvId], carried: &BTreeMap<JobId, AgvId>) -> bool {
    for &a in agvs {
        for (t, j, kind) in sol.actions_of(a) {
            if t > sol.horizon {
                return false;
            }
            let job = instance.job(j).expect("scheduled jobs exist");
            let node = match kind {
                ActionKind::Load if carried.contains_key(&j) => continue,
                ActionKind::Load => job.start,
                ActionKind::Unload => job.end,
            };
            if sol.edge_at(a, t) != (node, node) {
                return false;
            }
        }
    }
    pair_order_holds(instance, sol)
}

fn pair_order_holds(instance: &Instance, sol: &Solution) -> bool {
    instance.jobs().iter().all(|job| {
        let Some(b) = job.blocked_by else { return true };
        let Some(u) = sol.schedule.get(&job.id).and_then(|a| a.t_unload) else { return true };
        sol.schedule.get(&b).and_then(|a| a.t_load).is_some_and(|l| l <= u)
    })
}

/// Every candidate move for `sol`, before pruning, in a fixed order.
pub fn candidate_moves(instance: &Instance, sol: &Solution, carried: &BTreeMap<JobId, AgvId>, pool: &[LoopTemplate]) -> Vec<Move> {
    let graph = instance.graph();
    let h = sol.horizon;
    let agv_count = sol.agv_count();
    let mut busy: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); agv_count];
    for asg in sol.schedule.values() {
        busy[asg.agv].extend(asg.t_load);
        busy[asg.agv].extend(asg.t_unload);
    }
    let mut out = Vec::new();

    // job (un)assignment
    for job in instance.jobs() {
        let j = job.id;
        let current = sol.schedule.get(&j).copied();
        let is_carried = carried.contains_key(&j);
        match current {
            None => {
                for a in 0..agv_count {
                    for t in 0..=h {
                        if sol.edge_at(a, t) == (job.start, job.start) && !busy[a].contains(&t) {
                            let after = Assignment { agv: a, t_load: Some(t), t_unload: None };
                            out.push(Move::SetAssignment { job: j, before: None, after: Some(after) });
                        }
                    }
                }
            }
            Some(asg) => match (asg.t_load, asg.t_unload) {
                (Some(l), None) => {
                    let a = asg.agv;
                    for t in l + 1..=h {
                        if sol.edge_at(a, t) == (job.end, job.end) && !busy[a].contains(&t) {
                            let after = Assignment { t_unload: Some(t), ..asg };
                            out.push(Move::SetAssignment { job: j, before: current, after: Some(after) });
                        }
                    }
                    if !is_carried {
                        out.push(Move::SetAssignment { job: j, before: current, after: None });
                    }
                }
                (_, Some(_)) => {
                    out.push(Move::SetAssignment { job: j, before: current, after: Some(Assignment { t_unload: None, ..asg }) });
                }
                (None, None) => out.push(Move::SetAssignment { job: j, before: current, after: None }),
            },
        }
    }

    // node shifts keeping the route edge-continuous
    for a in 0..agv_count {
        let r = &sol.routes[a];
        for t in 1..=h {
            let prev = r[t - 1];
            let mut options: Vec<NodeId> = graph.successors(prev).to_vec();
            options.push(prev);
            options.sort_unstable();
            for w in options {
                if w == r[t] {
                    continue;
                }
                if t < h && !graph.has_edge(w, r[t + 1]) {
                    continue;
                }
                out.push(Move::NodeShift { agv: a, t, before: r[t], after: w });
            }
        }
    }

    // loop shifts and removals
    let s = instance.stockroom();
    for lp in route_loops(instance, sol, carried) {
        let r = &sol.routes[lp.agv];
        let (start, end) = lp.window;
        let mut actions = Vec::new();
        for &j in &lp.jobs {
            let asg = sol.schedule[&j];
            if asg.t_load.is_some() && !carried.contains_key(&j) {
                actions.push((j, ActionKind::Load));
            }
            if asg.t_unload.is_some() {
                actions.push((j, ActionKind::Unload));
            }
        }
        if start >= 1 && r[start - 1] == r[start] {
            out.push(Move::LoopShift { agv: lp.agv, start, end, backward: true, actions: actions.clone() });
        }
        if end < h && r[end] == r[end + 1] {
            out.push(Move::LoopShift { agv: lp.agv, start, end, backward: false, actions });
        }
        if lp.jobs.iter().all(|j| !carried.contains_key(j)) {
            let segment = r[lp.depart..=lp.arrive].to_vec();
            let entries = lp.jobs.iter().map(|&j| (j, sol.schedule[&j])).collect();
            out.push(Move::LoopUnassign { agv: lp.agv, start: lp.depart, end: lp.arrive, segment, entries });
        }
    }
    for tpl in pool {
        if tpl.end > h || tpl.entries.iter().any(|(j, _)| sol.schedule.contains_key(j)) {
            continue;
        }
        for a in 0..agv_count {
            if sol.routes[a][tpl.start..=tpl.end].iter().all(|&v| v == s) {
                let entries = tpl.entries.iter().map(|&(j, asg)| (j, Assignment { agv: a, ..asg })).collect();
                out.push(Move::LoopReassign { agv: a, start: tpl.start, end: tpl.end, segment: tpl.segment.clone(), entries });
            }
        }
    }
    out
}

/// Moves applicable to `sol` that keep every action stationary at its node
/// and every pair in order.
pub fn neighborhood(instance: &Instance, sol: &Solution, carried: &BTreeMap<JobId, AgvId>, pool: &[LoopTemplate]) -> Vec<Move> {
    let mut scratch = sol.clone();
    candidate_moves(instance, sol, carried, pool)
        .into_iter()
        .filter(|m| {
            m.apply(&mut scratch);
            let ok = respects_handling(instance, &scratch, &m.agvs(), carried);
            m.reverse().apply(&mut scratch);
            ok
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::{Agv, Job};

    fn ring_instance(jobs: Vec<Job>) -> Instance {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        Instance::new(g, vec![Agv { id: 0, capacity: 2, start_node: 0 }], jobs).unwrap()
    }

    #[test]
    fn backward_loop_shift_example() {
        // nodes 0..3 stand for v0..v3
        let inst = ring_instance(vec![Job::removal(0, 0, 2, 0)]);
        let sol = Solution {
            horizon: 7,
            routes: vec![vec![0, 0, 1, 2, 2, 3, 0, 0]],
            schedule: [(0, Assignment::full(0, 3, 6))].into(),
        };
        let loops = route_loops(&inst, &sol, &BTreeMap::new());
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].window, (1, 6));
        let moves = neighborhood(&inst, &sol, &BTreeMap::new(), &[]);
        let m = moves.iter().find(|m| matches!(m, Move::LoopShift { backward: true, .. })).unwrap();
        let mut after = sol.clone();
        m.apply(&mut after);
        assert_eq!(after.routes[0], vec![0, 1, 2, 2, 3, 0, 0, 0]);
        assert_eq!(after.schedule[&0], Assignment::full(0, 2, 5));
        m.reverse().apply(&mut after);
        assert_eq!(after, sol);
    }

    #[test]
    fn idle_solution_only_offers_assignments_and_node_shifts() {
        let inst = ring_instance(vec![Job::delivery(0, 0, 2, 0)]);
        let sol = Solution::parked(&inst, 3);
        let moves = neighborhood(&inst, &sol, &BTreeMap::new(), &[]);
        let kinds: BTreeSet<MoveKind> = moves.iter().map(Move::kind).collect();
        assert_eq!(kinds, [MoveKind::AssignJob, MoveKind::NodeShift].into());
        // one load option per step at the stockroom
        assert_eq!(moves.iter().filter(|m| m.kind() == MoveKind::AssignJob).count(), 4);
    }

    #[test]
    fn node_shift_example() {
        let inst = ring_instance(vec![]);
        let sol = Solution { horizon: 3, routes: vec![vec![0, 0, 1, 2]], schedule: BTreeMap::new() };
        let moves = neighborhood(&inst, &sol, &BTreeMap::new(), &[]);
        assert!(moves.contains(&Move::NodeShift { agv: 0, t: 1, before: 0, after: 1 }));
        assert!(moves.iter().all(|m| m.kind() == MoveKind::NodeShift));
    }

    #[test]
    fn unassign_then_reassign_restores() {
        let inst = ring_instance(vec![Job::delivery(0, 0, 2, 0)]);
        let sol = Solution {
            horizon: 5,
            routes: vec![vec![0, 0, 1, 2, 2, 3]],
            schedule: [(0, Assignment::full(0, 0, 3))].into(),
        };
        let mut sol = sol;
        sol.routes[0].push(0);
        sol.horizon = 6;
        let moves = neighborhood(&inst, &sol, &BTreeMap::new(), &[]);
        let m = moves.iter().find(|m| m.kind() == MoveKind::LoopUnassign).unwrap().clone();
        let mut after = sol.clone();
        m.apply(&mut after);
        assert_eq!(after.routes[0], vec![0; 7]);
        assert!(after.schedule.is_empty());
        assert_eq!(m.reverse().kind(), MoveKind::LoopReassign);
        m.reverse().apply(&mut after);
        assert_eq!(after, sol);
    }

    #[test]
    fn pair_order_is_pruned() {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        let (r, d) = crate::instance::make_pair(2, 0, 0, 0).unwrap();
        let inst = Instance::new(g, vec![Agv { id: 0, capacity: 2, start_node: 0 }], vec![r, d]).unwrap();
        // delivery loaded, removal never loaded: unloading the delivery is pruned
        let sol = Solution {
            horizon: 4,
            routes: vec![vec![0, 0, 1, 2, 2]],
            schedule: [(1, Assignment { agv: 0, t_load: Some(0), t_unload: None })].into(),
        };
        let moves = neighborhood(&inst, &sol, &BTreeMap::new(), &[]);
        assert!(moves.iter().all(|m| !matches!(m, Move::SetAssignment { job: 1, after: Some(Assignment { t_unload: Some(_), .. }), .. })));
        assert!(moves.iter().any(|m| matches!(m, Move::SetAssignment { job: 0, .. })));
    }
}
