//! Constructive scheduling: the step-by-step dispatch driver with the greedy
//! and loop-batching assigners.
//!
//! The driver advances time one step at a time. At every step each idle AGV,
//! in ascending id order, asks the assigner for a trip; the trip is committed
//! when it fits the reservation table and the AGV waits a step otherwise.
//! Jobs carried over from a previous period are replayed first.

mod carry;
mod greedy;
mod loops;
mod reservation;
mod trip;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId};
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{ActionKind, Assignment, Solution};

pub use carry::{carry_over, ActiveSegment, OnlineState};
pub use greedy::greedy_assign;
pub use loops::{best_candidate, loops_assign, AssignmentRank, Candidate, LoopIndex};
pub use reservation::Reservations;
pub use trip::{Stop, TimedTrip, Trip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assigner {
    Greedy,
    Loops,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeuristicError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no AGV made progress for too long (stopped at step {time})")]
    Stall { time: usize },
    #[error("AGVs collide at node {node} before the first step")]
    InfeasibleStart { node: NodeId },
    #[error("job {0} cannot be served on this graph")]
    UnservableJob(JobId),
    #[error("active segment of agv {0} does not start at its start node")]
    SegmentMismatch(AgvId),
}

/// All-pairs shortest paths with lowest-id tie-breaking.
#[derive(Debug, Clone)]
pub struct Paths {
    n: usize,
    dist: Vec<u32>,
    next: Vec<u32>,
}

impl Paths {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.node_count();
        let mut dist = vec![u32::MAX; n * n];
        let mut next = vec![u32::MAX; n * n];
        let mut to_target = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for target in 0..n {
            to_target.fill(u32::MAX);
            to_target[target] = 0;
            queue.push_back(target);
            while let Some(v) = queue.pop_front() {
                for &u in graph.predecessors(v) {
                    if to_target[u] == u32::MAX {
                        to_target[u] = to_target[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            for v in 0..n {
                dist[v * n + target] = to_target[v];
                if v != target && to_target[v] != u32::MAX {
                    let w = graph.successors(v).iter().find(|&&w| to_target[w] == to_target[v] - 1).expect("consistent labels");
                    next[v * n + target] = *w as u32;
                }
            }
        }
        Self { n, dist, next }
    }

    pub fn distance(&self, from: NodeId, to: NodeId) -> Option<u32> {
        match self.dist[from * self.n + to] {
            u32::MAX => None,
            d => Some(d),
        }
    }

    /// Node sequence from `from` to `to`; `[from]` when unreachable.
    pub fn path(&self, from: NodeId, to: NodeId) -> Vec<NodeId> {
        let mut out = vec![from];
        let mut cur = from;
        while cur != to {
            match self.next[cur * self.n + to] {
                u32::MAX => break,
                w => {
                    cur = w as usize;
                    out.push(cur);
                }
            }
        }
        out
    }
}

/// What an assigner sees when asked for a trip.
pub struct Context<'a> {
    pub instance: &'a Instance,
    pub paths: &'a Paths,
    pub now: usize,
    pub agv: AgvId,
    pub capacity: u32,
    pub position: NodeId,
    /// Released, unscheduled jobs in ascending id order.
    pub pending: &'a [JobId],
    /// Known load steps of already scheduled jobs.
    pub load_times: &'a HashMap<JobId, usize>,
}

impl Context<'_> {
    pub fn is_pending(&self, j: JobId) -> bool {
        self.pending.binary_search(&j).is_ok()
    }

    /// Whether blocker `b` is loaded strictly before the current step.
    pub fn blocker_ready(&self, b: JobId) -> bool {
        self.load_times.get(&b).is_some_and(|&t| t < self.now)
    }
}

#[derive(Default)]
struct LoopsCache {
    key: Option<(Vec<JobId>, u32, Vec<JobId>)>,
    trip: Option<Trip>,
}

struct Driver<'a> {
    instance: &'a Instance,
    paths: Paths,
    table: Reservations,
    routes: Vec<Vec<NodeId>>,
    ends: Vec<usize>,
    schedule: BTreeMap<JobId, Assignment>,
    load_times: HashMap<JobId, usize>,
    pending: BTreeSet<JobId>,
}

impl<'a> Driver<'a> {
    fn new(instance: &'a Instance, state: Option<&OnlineState>) -> Result<Self, HeuristicError> {
        let graph = instance.graph();
        let starts: Vec<NodeId> = instance.agvs().iter().map(|a| a.start_node).collect();
        let mut d = Driver {
            instance,
            paths: Paths::new(graph),
            table: Reservations::new(graph, &starts),
            routes: starts.iter().map(|&v| vec![v]).collect(),
            ends: vec![0; starts.len()],
            schedule: BTreeMap::new(),
            load_times: HashMap::new(),
            pending: BTreeSet::new(),
        };
        if let Some(state) = state {
            for (&j, &a) in &state.carrier {
                d.schedule.insert(j, Assignment { agv: a, t_load: Some(0), t_unload: None });
                d.load_times.insert(j, 0);
            }
            for (a, seg) in state.active.iter().enumerate() {
                let Some(seg) = seg else { continue };
                if seg.route.first() != starts.get(a) {
                    return Err(HeuristicError::SegmentMismatch(a));
                }
                let timed = TimedTrip {
                    start: 0,
                    route: seg.route.clone(),
                    actions: seg.actions.iter().map(|&(t, j, k)| (t, j, k, seg.route[t])).collect(),
                };
                d.record(a, &timed);
            }
        }
        if let Some(node) = d.table.parking_conflict(graph, 0) {
            return Err(HeuristicError::InfeasibleStart { node });
        }
        d.pending = instance.jobs().iter().map(|j| j.id).filter(|j| !d.schedule.contains_key(j)).collect();
        Ok(d)
    }

    fn record(&mut self, a: AgvId, timed: &TimedTrip) {
        let r = &mut self.routes[a];
        let last = *r.last().expect("routes are never empty");
        r.resize(timed.start + 1, last);
        r.extend_from_slice(&timed.route[1..]);
        self.ends[a] = timed.end();
        for &(t, j, kind, _) in &timed.actions {
            let e = self.schedule.entry(j).or_insert(Assignment { agv: a, t_load: None, t_unload: None });
            match kind {
                ActionKind::Load => {
                    e.t_load = Some(t);
                    self.load_times.insert(j, t);
                }
                ActionKind::Unload => e.t_unload = Some(t),
            }
            self.pending.remove(&j);
        }
        self.table.commit(self.instance.graph(), a, timed);
    }

    fn released(&self, t: usize) -> Vec<JobId> {
        self.pending.iter().copied().filter(|&j| self.instance.job(j).is_some_and(|x| x.release_time <= t)).collect()
    }

    fn finish(mut self) -> Solution {
        let horizon = self.ends.iter().copied().max().unwrap_or(0);
        for r in &mut self.routes {
            let last = *r.last().expect("routes are never empty");
            r.resize(horizon + 1, last);
        }
        Solution { horizon, routes: self.routes, schedule: self.schedule }
    }
}

fn check_servable(instance: &Instance, paths: &Paths, index: Option<&LoopIndex>) -> Result<(), HeuristicError> {
    let s = instance.stockroom();
    for job in instance.jobs() {
        let k = job.station();
        let ok = match index {
            Some(ix) => ix.min_loop_len(k).is_some(),
            None => paths.distance(s, k).is_some() && paths.distance(k, s).is_some(),
        };
        if !ok {
            return Err(HeuristicError::UnservableJob(job.id));
        }
    }
    for agv in instance.agvs() {
        if paths.distance(agv.start_node, s).is_none() && !instance.jobs().is_empty() {
            return Err(HeuristicError::Graph(GraphError::Unreachable { from: agv.start_node, to: s }));
        }
    }
    Ok(())
}

/// Builds a complete plan with the chosen assigner, optionally continuing
/// from an online state whose AGV positions match the instance start nodes.
pub fn base_schedule(instance: &Instance, state: Option<&OnlineState>, assigner: Assigner) -> Result<Solution, HeuristicError> {
    let graph = instance.graph();
    let mut driver = Driver::new(instance, state)?;
    let index = match assigner {
        Assigner::Loops => Some(LoopIndex::new(graph)?),
        Assigner::Greedy => None,
    };
    check_servable(instance, &driver.paths, index.as_ref())?;
    let s = instance.stockroom();
    let bound = graph.node_count() * graph.expansion_sum() as usize + 1;
    let mut cache = LoopsCache::default();
    let mut last_progress = 0usize;
    let mut t = 0usize;
    while !driver.pending.is_empty() {
        let mut released = driver.released(t);
        if released.is_empty() {
            let next = driver.pending.iter().filter_map(|&j| instance.job(j)).map(|j| j.release_time).min().expect("pending is nonempty");
            t = next.max(t + 1);
            continue;
        }
        for a in 0..instance.agvs().len() {
            if driver.ends[a] > t || released.is_empty() {
                continue;
            }
            let agv = &instance.agvs()[a];
            let position = driver.routes[a][driver.ends[a]];
            let ctx = Context {
                instance,
                paths: &driver.paths,
                now: t,
                agv: a,
                capacity: agv.capacity,
                position,
                pending: &released,
                load_times: &driver.load_times,
            };
            let trip = match &index {
                None => greedy_assign(&ctx),
                Some(ix) if position == s => {
                    let ready: Vec<JobId> = released
                        .iter()
                        .copied()
                        .filter(|&j| instance.job(j).and_then(|x| x.blocked_by).is_some_and(|b| ctx.blocker_ready(b)))
                        .collect();
                    let key = (released.clone(), agv.capacity, ready);
                    if cache.key.as_ref() != Some(&key) {
                        cache.trip = loops_assign(&ctx, ix);
                        cache.key = Some(key);
                    }
                    cache.trip.clone()
                }
                Some(ix) => loops_assign(&ctx, ix),
            };
            let Some(trip) = trip else { continue };
            let timed = trip.timed(t);
            if driver.table.fits(graph, a, &timed) {
                driver.record(a, &timed);
                last_progress = t;
                released = driver.released(t);
            }
        }
        t += 1;
        let busy_until = driver.ends.iter().copied().max().unwrap_or(0);
        if t > last_progress.max(busy_until) + bound {
            return Err(HeuristicError::Stall { time: t });
        }
    }
    Ok(driver.finish())
}
