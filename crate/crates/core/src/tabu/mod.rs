//! Tabu search that shortens a feasible plan one time step at a time.
//!
//! Whenever the current solution is feasible it is recorded and its last
//! column removed, leaving the unloads of that column unassigned. Each
//! iteration then applies the cheapest non-tabu move of the pruned
//! neighborhood (a tabu move is allowed when it reaches a new best cost) and
//! makes its reverse tabu.

mod cost;
mod moves;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{OnlineState, Paths};
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{verify, Solution, Violation};

pub use cost::{breakdown, cost, CostBreakdown, CostWeights, ShapingWeights, ViolationWeights};
pub use moves::{candidate_moves, neighborhood, respects_handling, route_loops, LoopTemplate, Move, MoveKind, RouteLoop};

const POOL_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    /// Wall-clock budget; `None` for no limit.
    pub wall_time_s: Option<f64>,
    pub max_iterations_no_improvement: usize,
    pub tabu_tenure: usize,
    /// Fixed iteration budget for reproducible runs.
    pub max_iterations: Option<usize>,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self { wall_time_s: None, max_iterations_no_improvement: 2000, tabu_tenure: 50, max_iterations: None }
    }
}

impl SearchLimits {
    pub fn deterministic(iterations: usize) -> Self {
        Self { max_iterations: Some(iterations), ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum TabuError {
    #[error("initial solution is infeasible: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InfeasibleInitial(Vec<Violation>),
    #[error("tabu tenure must be positive")]
    ZeroTenure,
}

/// A recorded feasible solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaveRecord {
    pub iteration: usize,
    pub horizon: usize,
    pub objective: usize,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub solution: Solution,
    pub iterations: usize,
    pub saves: Vec<SaveRecord>,
}

/// FIFO tabu memory with a membership set.
#[derive(Debug, Clone)]
pub struct TabuList {
    queue: VecDeque<Move>,
    members: HashSet<Move>,
    tenure: usize,
}

impl TabuList {
    pub fn new(tenure: usize) -> Self {
        Self { queue: VecDeque::new(), members: HashSet::new(), tenure }
    }

    pub fn push(&mut self, m: Move) {
        if self.members.contains(&m) {
            return;
        }
        self.members.insert(m.clone());
        self.queue.push_back(m);
        while self.queue.len() > self.tenure {
            let old = self.queue.pop_front().expect("queue is nonempty");
            self.members.remove(&old);
        }
    }

    pub fn contains(&self, m: &Move) -> bool {
        self.members.contains(m)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn clear(&mut self) {
        self.queue.clear();
        self.members.clear();
    }

    /// Whether the set and the queue hold the same moves.
    pub fn consistent(&self) -> bool {
        self.queue.len() == self.members.len() && self.queue.iter().all(|m| self.members.contains(m))
    }
}

/// Drops the last column; unloads in it become unassigned.
pub fn shrink(sol: &mut Solution) {
    let h = sol.horizon;
    if h == 0 {
        return;
    }
    for r in &mut sol.routes {
        r.pop();
    }
    sol.horizon = h - 1;
    let mut dropped = Vec::new();
    for (&j, a) in sol.schedule.iter_mut() {
        if a.t_unload == Some(h) {
            a.t_unload = None;
        }
        if a.t_load == Some(h) {
            dropped.push(j);
        }
    }
    for j in dropped {
        sol.schedule.remove(&j);
    }
}

fn key(instance: &Instance, sol: &Solution) -> (usize, usize) {
    (sol.objective(instance).unwrap_or(usize::MAX), sol.horizon)
}

pub fn tabu_search(
    instance: &Instance,
    initial: &Solution,
    weights: &CostWeights,
    limits: &SearchLimits,
    state: Option<&OnlineState>,
) -> Result<Solution, TabuError> {
    search(instance, initial, weights, limits, state).map(|r| r.solution)
}

/// Runs the search and reports every recorded solution. A feasible solution
/// replaces the best one only when it has a lower objective, or the same
/// objective and fewer steps.
pub fn search(
    instance: &Instance,
    initial: &Solution,
    weights: &CostWeights,
    limits: &SearchLimits,
    state: Option<&OnlineState>,
) -> Result<SearchReport, TabuError> {
    let violations = verify(instance, initial, state);
    if !violations.is_empty() {
        return Err(TabuError::InfeasibleInitial(violations));
    }
    if limits.tabu_tenure == 0 {
        return Err(TabuError::ZeroTenure);
    }
    let started = Instant::now();
    let carried: BTreeMap<JobId, AgvId> = state.map(|s| s.carrier.clone()).unwrap_or_default();
    let paths = Paths::new(instance.graph());
    let eval = |s: &Solution| breakdown(instance, s, &paths, &carried);

    let mut best = initial.clone();
    let mut best_key = key(instance, initial);
    let mut saves = vec![SaveRecord { iteration: 0, horizon: best_key.1, objective: best_key.0 }];
    let mut current = initial.clone();
    let mut tabu = TabuList::new(limits.tabu_tenure);
    let mut pool: VecDeque<LoopTemplate> = VecDeque::new();
    let mut best_cost = eval(&current).total(weights);
    let mut stall = 0usize;
    let mut iteration = 0usize;

    loop {
        if limits.max_iterations.is_some_and(|m| iteration >= m)
            || limits.wall_time_s.is_some_and(|w| started.elapsed().as_secs_f64() >= w)
            || stall >= limits.max_iterations_no_improvement
        {
            break;
        }
        let current_terms = eval(&current);
        if current_terms.violations() == 0 && verify(instance, &current, state).is_empty() {
            let k = key(instance, &current);
            if k < best_key {
                best = current.clone();
                best_key = k;
                saves.push(SaveRecord { iteration, horizon: k.1, objective: k.0 });
                stall = 0;
            }
            if current.horizon == 0 {
                break;
            }
            shrink(&mut current);
            tabu.clear();
            pool.clear();
            best_cost = eval(&current).total(weights);
        }

        let pool_slice: Vec<LoopTemplate> = pool.iter().cloned().collect();
        let mut chosen: Option<(i64, Move)> = None;
        for m in candidate_moves(instance, &current, &carried, &pool_slice) {
            m.apply(&mut current);
            let allowed = respects_handling(instance, &current, &m.agvs(), &carried);
            let c = if allowed { Some(eval(&current).total(weights)) } else { None };
            m.reverse().apply(&mut current);
            let Some(c) = c else { continue };
            let admissible = !tabu.contains(&m) || c < best_cost;
            if admissible && chosen.as_ref().is_none_or(|(bc, _)| c < *bc) {
                chosen = Some((c, m));
            }
        }
        iteration += 1;
        let Some((c, m)) = chosen else { break };
        m.apply(&mut current);
        if let Move::LoopUnassign { start, end, segment, entries, .. } = &m {
            pool.push_back(LoopTemplate { start: *start, end: *end, segment: segment.clone(), entries: entries.clone() });
            if pool.len() > POOL_SIZE {
                pool.pop_front();
            }
        }
        tabu.push(m.reverse());
        if c < best_cost {
            best_cost = c;
            stall = 0;
        } else {
            stall += 1;
        }
    }
    Ok(SearchReport { solution: best, iterations: iteration, saves })
}
