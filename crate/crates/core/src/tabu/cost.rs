//! Penalty cost of a possibly infeasible solution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::heuristics::Paths;
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{ActionKind, Solution};

/// Weights of the four violation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViolationWeights {
    pub movement_conflicts: i64,
    pub unassigned_jobs: i64,
    pub agv_capacity_exceeded: i64,
    pub simultaneous_unloading: i64,
}

/// Weights of the shaping terms `R1`..`R5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingWeights {
    pub r1: i64,
    pub r2: i64,
    pub r3: i64,
    pub r4: i64,
    pub r5: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub w: ViolationWeights,
    #[serde(rename = "W")]
    pub shaping: ShapingWeights,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w: ViolationWeights { movement_conflicts: 1, unassigned_jobs: 10, agv_capacity_exceeded: 5, simultaneous_unloading: 5 },
            shaping: ShapingWeights { r1: -6, r2: 1, r3: -10, r4: 10, r5: 6 },
        }
    }
}

impl CostWeights {
    /// Rejects negative violation weights.
    pub fn validate(&self) -> Result<(), String> {
        let w = &self.w;
        if [w.movement_conflicts, w.unassigned_jobs, w.agv_capacity_exceeded, w.simultaneous_unloading].iter().any(|&x| x < 0) {
            return Err("violation weights must be non-negative".into());
        }
        Ok(())
    }
}

/// Violation counts and shaping terms of one solution.
///
/// * `movement_conflicts`: non-edges, start nodes, edge and node capacity.
/// * `unassigned_jobs`: jobs missing a load or an unload, or unloaded first.
/// * `agv_capacity_exceeded`: `(agv, step)` pairs over capacity.
/// * `simultaneous_unloading`: `(agv, step)` pairs with several actions and
///   `(node, step)` pairs with several actions, once per endpoint role.
/// * `r[0]`: distinct visited nodes that are an endpoint of an unfinished job.
/// * `r[1]`: steps between load and unload beyond the shortest possible, per job.
/// * `r[2]`, `r[3]`: idle steps at the end and at the start of each route.
/// * `r[4]`: pairs served entirely by one AGV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CostBreakdown {
    pub movement_conflicts: i64,
    pub unassigned_jobs: i64,
    pub agv_capacity_exceeded: i64,
    pub simultaneous_unloading: i64,
    pub r: [i64; 5],
}

impl CostBreakdown {
    pub fn total(&self, weights: &CostWeights) -> i64 {
        let w = &weights.w;
        let s = &weights.shaping;
        w.movement_conflicts * self.movement_conflicts
            + w.unassigned_jobs * self.unassigned_jobs
            + w.agv_capacity_exceeded * self.agv_capacity_exceeded
            + w.simultaneous_unloading * self.simultaneous_unloading
            + s.r1 * self.r[0]
            + s.r2 * self.r[1]
            + s.r3 * self.r[2]
            + s.r4 * self.r[3]
            + s.r5 * self.r[4]
    }

    pub fn violations(&self) -> i64 {
        self.movement_conflicts + self.unassigned_jobs + self.agv_capacity_exceeded + self.simultaneous_unloading
    }
}

/// Counts the cost terms of `sol`. Assumes a structurally valid solution.
pub fn breakdown(instance: &Instance, sol: &Solution, paths: &Paths, carried: &BTreeMap<JobId, AgvId>) -> CostBreakdown {
    let graph = instance.graph();
    let h = sol.horizon;
    let agvs = instance.agvs();
    let mut b = CostBreakdown::default();

    let mut edge_use = vec![0u32; graph.edge_count()];
    let mut node_use = vec![0u32; graph.node_count()];
    for t in 0..=h {
        let mut touched_e = Vec::with_capacity(agvs.len());
        let mut touched_v = Vec::with_capacity(agvs.len());
        for a in 0..agvs.len() {
            let (v, w) = sol.edge_at(a, t);
            match graph.edge_id(v, w) {
                Some(e) => {
                    edge_use[e] += 1;
                    node_use[w] += 1;
                    touched_e.push(e);
                    touched_v.push(w);
                }
                None => b.movement_conflicts += 1,
            }
        }
        touched_e.sort_unstable();
        touched_e.dedup();
        touched_v.sort_unstable();
        touched_v.dedup();
        for e in touched_e {
            b.movement_conflicts += i64::from(edge_use[e] > graph.edge_capacity_by_id(e));
            edge_use[e] = 0;
        }
        for v in touched_v {
            b.movement_conflicts += i64::from(node_use[v] > graph.node_capacity(v));
            node_use[v] = 0;
        }
    }
    for (a, agv) in agvs.iter().enumerate() {
        b.movement_conflicts += i64::from(sol.routes[a][0] != agv.start_node);
    }

    let mut unfinished_endpoints = BTreeSet::new();
    for job in instance.jobs() {
        let asg = sol.schedule.get(&job.id);
        let (l, u) = asg.map_or((None, None), |a| (a.t_load, a.t_unload));
        let bad_order = u.is_some_and(|u| l.is_none_or(|l| u < l));
        if l.is_none() || u.is_none() || bad_order {
            b.unassigned_jobs += 1;
        }
        if l.is_none() || u.is_none() {
            unfinished_endpoints.insert(job.start);
            unfinished_endpoints.insert(job.end);
        }
        if let (Some(l), Some(u)) = (l, u) {
            let shortest = paths.distance(job.start, job.end).map_or(0, |d| d as usize + 1);
            b.r[1] += (u.saturating_sub(l)).saturating_sub(shortest) as i64;
        }
        if let Some(r) = job.blocked_by {
            let by = |j: JobId| sol.schedule.get(&j).filter(|a| a.t_load.is_some() && a.t_unload.is_some()).map(|a| a.agv);
            if let (Some(x), Some(y)) = (by(job.id), by(r)) {
                b.r[4] += i64::from(x == y);
            }
        }
    }
    if !unfinished_endpoints.is_empty() {
        let mut seen = vec![false; graph.node_count()];
        for r in &sol.routes {
            for &v in r {
                seen[v] = true;
            }
        }
        b.r[0] = unfinished_endpoints.iter().filter(|&&v| seen[v]).count() as i64;
    }

    let mut at_node: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for (a, agv) in agvs.iter().enumerate() {
        let mut per_step = vec![0u32; h + 1];
        let mut delta = vec![0i64; h + 1];
        for (t, j, kind) in sol.actions_of(a) {
            if t > h {
                continue;
            }
            delta[t] += if kind == ActionKind::Load { 1 } else { -1 };
            if kind == ActionKind::Load && carried.contains_key(&j) {
                continue;
            }
            per_step[t] += 1;
            let job = instance.job(j).expect("scheduled jobs exist");
            let node = if kind == ActionKind::Load { job.start } else { job.end };
            *at_node.entry((t, node)).or_default() += 1;
        }
        b.simultaneous_unloading += per_step.iter().filter(|&&n| n > 1).count() as i64;
        let mut onboard = 0i64;
        let mut idle = Vec::with_capacity(h + 1);
        for t in 0..=h {
            onboard += delta[t];
            b.agv_capacity_exceeded += i64::from(onboard > i64::from(agv.capacity));
            idle.push(sol.is_stationary(a, t) && onboard == 0 && per_step[t] == 0 && delta[t] == 0);
        }
        b.r[2] += idle.iter().rev().take_while(|&&x| x).count() as i64;
        b.r[3] += idle.iter().take_while(|&&x| x).count() as i64;
    }
    let starts: BTreeSet<usize> = instance.jobs().iter().map(|j| j.start).collect();
    let ends: BTreeSet<usize> = instance.jobs().iter().map(|j| j.end).collect();
    for (&(_, v), &n) in &at_node {
        if n > 1 {
            b.simultaneous_unloading += i64::from(starts.contains(&v)) + i64::from(ends.contains(&v));
        }
    }
    b
}

pub fn cost(instance: &Instance, sol: &Solution, weights: &CostWeights, carried: &BTreeMap<JobId, AgvId>) -> i64 {
    let paths = Paths::new(instance.graph());
    breakdown(instance, sol, &paths, carried).total(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::{Agv, Job};
    use crate::solution::Assignment;

    #[test]
    fn default_weights_serialize_with_table_keys() {
        let json = serde_json::to_value(CostWeights::default()).unwrap();
        assert_eq!(json["w"]["unassigned_jobs"], 10);
        assert_eq!(json["W"]["r3"], -10);
        let back: CostWeights = serde_json::from_value(json).unwrap();
        assert_eq!(back, CostWeights::default());
    }

    #[test]
    fn feasible_single_delivery_terms() {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        let inst = Instance::new(g, vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![Job::delivery(0, 0, 2, 0)]).unwrap();
        let sol = Solution {
            horizon: 6,
            routes: vec![vec![0, 0, 1, 2, 2, 3, 0]],
            schedule: [(0, Assignment::full(0, 0, 3))].into(),
        };
        let paths = Paths::new(inst.graph());
        let b = breakdown(&inst, &sol, &paths, &BTreeMap::new());
        assert_eq!(b.violations(), 0);
        // only the final self-loop step is idle; step 0 loads
        assert_eq!(b.r, [0, 0, 1, 0, 0]);
        let zero = CostWeights { shaping: ShapingWeights { r1: 0, r2: 0, r3: 0, r4: 0, r5: 0 }, ..CostWeights::default() };
        assert_eq!(cost(&inst, &sol, &zero, &BTreeMap::new()), 0);
        assert_eq!(cost(&inst, &sol, &CostWeights::default(), &BTreeMap::new()), -10);
    }
}
