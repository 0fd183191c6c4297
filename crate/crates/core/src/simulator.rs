//! Rolling-horizon simulation: jobs are released over time and the fleet is
//! replanned period by period, each plan continuing from the state the
//! previous one left behind.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{solve_exact, ExactConfig, ExactError, SolverCommand};
use crate::graph::{can_unmerge, routes_avoid, unmerge_node, Graph, GraphError, Loop, NodeId};
use crate::heuristics::{base_schedule, carry_over, Assigner, HeuristicError, OnlineState};
use crate::instance::{Agv, Instance, InstanceError, Job, JobId, Request};
use crate::solution::{kpis, verify, Assignment, KpiReport, Solution, Violation};
use crate::tabu::{tabu_search, CostWeights, SearchLimits, TabuError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    Loops,
    Tabu,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodBudget {
    WallSeconds(f64),
    /// Tabu iterations; read as a time limit in seconds by the exact method.
    Iterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanTrigger {
    /// Replan when jobs are released, or when deferred jobs wait and the
    /// current plan has run out.
    OnNewJobs,
    /// Replan at every step with a released job missing from the plan.
    #[default]
    EveryStep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodConfig {
    pub budget: PeriodBudget,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub replan_trigger: ReplanTrigger,
    #[serde(default)]
    pub weights: Option<CostWeights>,
    #[serde(default)]
    pub limits: Option<SearchLimits>,
    /// Solver template for the exact method.
    #[serde(default)]
    pub solver: Option<String>,
}

impl PeriodConfig {
    pub fn new(algorithm: Algorithm, budget: PeriodBudget) -> Self {
        Self { budget, algorithm, replan_trigger: ReplanTrigger::default(), weights: None, limits: None, solver: None }
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Tabu(#[from] TabuError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("plan of period {period} fails verification: {}", .violations.first().map(ToString::to_string).unwrap_or_default())]
    PeriodInfeasible { period: usize, violations: Vec<Violation> },
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error("deferred jobs {jobs:?} still waiting at step {time}")]
    NoProgress { time: usize, jobs: Vec<JobId> },
}

/// Node expansion performed before admitting a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnmergeRecord {
    pub node: NodeId,
    pub chain: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub start: usize,
    pub released: Vec<JobId>,
    pub admitted: Vec<JobId>,
    pub deferred: Vec<JobId>,
    pub unmerges: Vec<UnmergeRecord>,
    pub carried: Vec<JobId>,
    pub horizon: usize,
    /// Sum of unload steps of the period's deliveries, in period time.
    pub objective: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SimulationLog {
    pub seed: u64,
    pub periods: Vec<PeriodRecord>,
    pub solution: Solution,
    pub kpi: KpiReport,
    /// Graph after every unmerge.
    pub graph: Graph,
    /// Station of each job on the final graph.
    pub stations: BTreeMap<JobId, NodeId>,
}

impl SimulationLog {
    /// One JSON object per period.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.periods {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The plan of one period and how much of it was carried out.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodPlan {
    pub start: usize,
    pub solution: Solution,
    /// Executed columns; the last period runs to its horizon.
    pub executed: usize,
    pub carried: BTreeMap<JobId, usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StitchError {
    #[error("no periods to stitch")]
    Empty,
    #[error("period {period} starts at {found}, expected {expected}")]
    Gap { period: usize, expected: usize, found: usize },
    #[error("period {period} starts agv {agv} at {found}, previous period left it at {expected}")]
    Position { period: usize, agv: usize, expected: NodeId, found: NodeId },
    #[error("period {period} carries {found:?} but {expected:?} are on board")]
    Onboard { period: usize, expected: Vec<JobId>, found: Vec<JobId> },
    #[error("job {job} is handled twice (period {period})")]
    Repeated { period: usize, job: JobId },
}

/// Joins executed period prefixes into one plan in global time.
pub fn stitch(periods: &[PeriodPlan]) -> Result<Solution, StitchError> {
    let first = periods.first().ok_or(StitchError::Empty)?;
    let agv_count = first.solution.agv_count();
    let mut routes: Vec<Vec<NodeId>> = vec![Vec::new(); agv_count];
    let mut schedule: BTreeMap<JobId, Assignment> = BTreeMap::new();
    let mut expected_start = first.start;
    for (p, plan) in periods.iter().enumerate() {
        if plan.start != expected_start {
            return Err(StitchError::Gap { period: p, expected: expected_start, found: plan.start });
        }
        let sol = &plan.solution;
        let last = p + 1 == periods.len();
        let executed = if last { sol.horizon + 1 } else { plan.executed };
        if p > 0 {
            for a in 0..routes.len() {
                let here = sol.routes[a][0];
                let prev = &periods[p - 1].solution;
                let expected = prev.routes[a][periods[p - 1].executed.min(prev.horizon)];
                if here != expected {
                    return Err(StitchError::Position { period: p, agv: a, expected, found: here });
                }
            }
            let onboard: Vec<JobId> =
                schedule.iter().filter(|(_, a)| a.t_load.is_some() && a.t_unload.is_none()).map(|(&j, _)| j).collect();
            let carried: Vec<JobId> = plan.carried.keys().copied().collect();
            if onboard != carried {
                return Err(StitchError::Onboard { period: p, expected: onboard, found: carried });
            }
        }
        for (a, route) in routes.iter_mut().enumerate() {
            route.extend((0..executed).map(|c| sol.routes[a][c.min(sol.horizon)]));
        }
        for (&j, asg) in &sol.schedule {
            let is_carried = plan.carried.contains_key(&j);
            let entry = schedule.entry(j).or_insert(Assignment { agv: asg.agv, t_load: None, t_unload: None });
            if let Some(l) = asg.t_load.filter(|&l| l < executed) {
                if !is_carried {
                    if entry.t_load.is_some() {
                        return Err(StitchError::Repeated { period: p, job: j });
                    }
                    entry.t_load = Some(plan.start + l);
                    entry.agv = asg.agv;
                }
            }
            if let Some(u) = asg.t_unload.filter(|&u| u < executed) {
                if entry.t_unload.is_some() {
                    return Err(StitchError::Repeated { period: p, job: j });
                }
                entry.t_unload = Some(plan.start + u);
            }
        }
        schedule.retain(|_, a| a.t_load.is_some() || a.t_unload.is_some());
        expected_start = plan.start + executed;
    }
    let horizon = routes[0].len().saturating_sub(1);
    Ok(Solution { horizon, routes, schedule })
}

/// Outcome of checking a request against merged stations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    /// Admit, serving the request at `station`, after the listed unmerge.
    Admit { station: NodeId, unmerged: Option<UnmergeRecord> },
    Defer,
}

/// Decides whether a request for `station` can join now. A merged station
/// already targeted by another admitted request is unmerged when no active
/// route passes it, and the request moves to a free node of the chain;
/// otherwise the request waits.
pub fn defer_or_unmerge(
    graph: &mut Graph,
    station: NodeId,
    targeted: &BTreeSet<NodeId>,
    chains: &mut BTreeMap<NodeId, Vec<NodeId>>,
    active_loops: &[(Loop, usize)],
    remaining_routes: &[Vec<NodeId>],
) -> Result<Admission, GraphError> {
    if let Some(chain) = chains.get(&station) {
        return Ok(match chain.iter().find(|c| !targeted.contains(c)) {
            Some(&c) => Admission::Admit { station: c, unmerged: None },
            None => Admission::Defer,
        });
    }
    if graph.expansion(station) < 2 || !targeted.contains(&station) {
        return Ok(Admission::Admit { station, unmerged: None });
    }
    if !can_unmerge(graph, station, active_loops) || !routes_avoid(station, remaining_routes) {
        return Ok(Admission::Defer);
    }
    let (g, relabel) = unmerge_node(graph, station)?;
    *graph = g;
    chains.insert(station, relabel.chain.clone());
    let free = relabel.chain.iter().copied().find(|c| !targeted.contains(c)).expect("fresh chain nodes are untargeted");
    Ok(Admission::Admit { station: free, unmerged: Some(UnmergeRecord { node: station, chain: relabel.chain }) })
}

fn plan_period(instance: &Instance, state: Option<&OnlineState>, config: &PeriodConfig) -> Result<Solution, SimulationError> {
    match config.algorithm {
        Algorithm::Greedy => Ok(base_schedule(instance, state, Assigner::Greedy)?),
        Algorithm::Loops => Ok(base_schedule(instance, state, Assigner::Loops)?),
        Algorithm::Tabu => {
            let initial = base_schedule(instance, state, Assigner::Loops)?;
            let mut limits = config.limits.clone().unwrap_or_default();
            match config.budget {
                PeriodBudget::WallSeconds(s) => limits.wall_time_s = Some(s),
                PeriodBudget::Iterations(n) => limits.max_iterations = Some(n),
            }
            Ok(tabu_search(instance, &initial, &config.weights.unwrap_or_default(), &limits, state)?)
        }
        Algorithm::Exact => {
            let command = match &config.solver {
                Some(t) => SolverCommand::for_program(t)?,
                None => SolverCommand::from_env()?,
            };
            let time_limit_s = match config.budget {
                PeriodBudget::WallSeconds(s) => s,
                PeriodBudget::Iterations(n) => n as f64,
            };
            Ok(solve_exact(instance, state, &ExactConfig { time_limit_s, command })?.solution)
        }
    }
}

fn request_station(instance: &Instance, r: &Request) -> NodeId {
    instance.job(r.first_job()).expect("request jobs exist").station()
}

/// Runs the fleet over the whole release stream.
///
/// Requests are admitted at replanning steps; each period plans every
/// admitted, unfinished job from the positions and loads the previous plan
/// reached. AGVs execute the current plan one step per tick until the next
/// replanning step, and the last plan runs to its end.
pub fn run_online(instance: &Instance, config: &PeriodConfig, seed: u64) -> Result<SimulationLog, SimulationError> {
    match config.budget {
        PeriodBudget::WallSeconds(s) if s.is_nan() || s <= 0.0 => return Err(SimulationError::Budget(format!("{s} seconds"))),
        PeriodBudget::Iterations(0) => return Err(SimulationError::Budget("0 iterations".into())),
        _ => {}
    }
    let s = instance.stockroom();
    let mut graph = instance.graph().clone();
    let mut chains: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut requests: Vec<(usize, Request)> =
        instance.requests().into_iter().map(|r| (instance.job(r.first_job()).expect("request jobs exist").release_time, r)).collect();
    requests.sort_by_key(|&(t, r)| (t, r.first_job()));
    let last_release = requests.iter().map(|x| x.0).max().unwrap_or(0);
    let mut next_request = 0usize;
    let mut stations: BTreeMap<JobId, NodeId> = BTreeMap::new();
    let mut admitted: BTreeSet<JobId> = BTreeSet::new();
    let mut done: BTreeSet<JobId> = BTreeSet::new();
    let mut deferred: Vec<Request> = Vec::new();
    let mut plans: Vec<PeriodPlan> = Vec::new();
    let mut records: Vec<PeriodRecord> = Vec::new();
    let mut current: Option<(Instance, usize)> = None;
    let bound = last_release + 1 + instance.jobs().len().max(1) * (graph.node_count() * graph.expansion_sum() as usize + 2) * 4;

    let mut t = 0usize;
    loop {
        let mut released = Vec::new();
        while next_request < requests.len() && requests[next_request].0 <= t {
            released.push(requests[next_request].1);
            next_request += 1;
        }
        let plan_end = plans.last().map_or(0, |p| p.start + p.solution.horizon);
        let missing = plans.last().is_some_and(|p| admitted.iter().any(|j| !done.contains(j) && !p.solution.schedule.contains_key(j)));
        let trigger = match config.replan_trigger {
            ReplanTrigger::EveryStep => !released.is_empty() || !deferred.is_empty() || missing,
            ReplanTrigger::OnNewJobs => !released.is_empty() || (!deferred.is_empty() && t >= plan_end) || missing,
        };
        if trigger {
            let state = match (&current, plans.last_mut()) {
                (Some((period_inst, _)), Some(prev)) => {
                    prev.executed = t - prev.start;
                    let executed = prev.executed;
                    for (&j, a) in &prev.solution.schedule {
                        if a.t_unload.is_some_and(|u| u < executed) {
                            done.insert(j);
                        }
                    }
                    carry_over(period_inst, &prev.solution, executed)
                }
                _ => OnlineState::at_rest(instance.agvs().iter().map(|a| a.start_node).collect()),
            };
            let active_loops: Vec<(Loop, usize)> = state.active.iter().flatten().filter_map(|seg| seg.loop_view.clone()).collect();
            let remaining = state.remaining_routes();
            let mut targeted: BTreeSet<NodeId> = admitted.iter().filter(|j| !done.contains(j)).map(|j| stations[j]).collect();
            targeted.remove(&s);
            let mut admitted_now = Vec::new();
            let mut deferred_now = Vec::new();
            let mut unmerges = Vec::new();
            let candidates: Vec<Request> = deferred.drain(..).chain(released.iter().copied()).collect();
            for r in candidates {
                let station = request_station(instance, &r);
                let station = chains.iter().find(|(_, c)| c.contains(&station)).map_or(station, |(&v, _)| v);
                match defer_or_unmerge(&mut graph, station, &targeted, &mut chains, &active_loops, &remaining)? {
                    Admission::Admit { station, unmerged } => {
                        unmerges.extend(unmerged);
                        targeted.insert(station);
                        for j in r.jobs() {
                            stations.insert(j, station);
                            admitted.insert(j);
                            admitted_now.push(j);
                        }
                    }
                    Admission::Defer => {
                        deferred_now.extend(r.jobs());
                        deferred.push(r);
                    }
                }
            }
            if t > bound {
                return Err(SimulationError::NoProgress { time: t, jobs: deferred_now });
            }
            let open: Vec<JobId> = admitted.iter().copied().filter(|j| !done.contains(j)).collect();
            let period_inst = period_instance(instance, &graph, &state, &open, &stations)?;
            let online = (!state.carrier.is_empty() || state.active.iter().any(Option::is_some)).then_some(&state);
            let sol = plan_period(&period_inst, online, config)?;
            let violations = verify(&period_inst, &sol, online);
            if !violations.is_empty() {
                return Err(SimulationError::PeriodInfeasible { period: records.len(), violations });
            }
            records.push(PeriodRecord {
                period: records.len(),
                start: t,
                released: released.iter().flat_map(Request::jobs).collect(),
                admitted: admitted_now,
                deferred: deferred_now,
                unmerges,
                carried: state.carrier.keys().copied().collect(),
                horizon: sol.horizon,
                objective: sol.objective(&period_inst).ok(),
            });
            plans.push(PeriodPlan { start: t, solution: sol, executed: 0, carried: state.carrier.clone() });
            current = Some((period_inst, t));
        }
        let all_released = next_request == requests.len();
        let covered = plans.last().is_none_or(|p| admitted.iter().all(|j| done.contains(j) || p.solution.schedule.contains_key(j)));
        if all_released && deferred.is_empty() && covered && t >= last_release {
            break;
        }
        if t > bound {
            return Err(SimulationError::NoProgress { time: t, jobs: deferred.iter().flat_map(Request::jobs).collect() });
        }
        t += 1;
    }

    let solution = if plans.is_empty() {
        Solution::idle(instance)
    } else {
        let last = plans.len() - 1;
        plans[last].executed = plans[last].solution.horizon + 1;
        stitch(&plans)?
    };
    let releases: BTreeMap<JobId, usize> = instance.jobs().iter().map(|j| (j.id, j.release_time)).collect();
    let kpi = kpis(instance, &solution, &releases, 0.0);
    let final_stations = instance.jobs().iter().map(|j| (j.id, stations.get(&j.id).copied().unwrap_or(j.station()))).collect();
    Ok(SimulationLog { seed, periods: records, solution, kpi, graph, stations: final_stations })
}

/// Instance of one period: AGVs at their current nodes, the open jobs with
/// their current stations, all released at step 0. Pair constraints whose
/// removal already finished are dropped.
fn period_instance(
    base: &Instance,
    graph: &Graph,
    state: &OnlineState,
    open: &[JobId],
    stations: &BTreeMap<JobId, NodeId>,
) -> Result<Instance, InstanceError> {
    let open_set: BTreeSet<JobId> = open.iter().copied().collect();
    let agvs: Vec<Agv> = base.agvs().iter().enumerate().map(|(a, agv)| Agv { start_node: state.agv_positions[a], ..*agv }).collect();
    let jobs: Vec<Job> = open
        .iter()
        .map(|&j| {
            let job = base.job(j).expect("open jobs exist");
            let station = stations[&j];
            let (start, end) = if job.brings_new_material { (job.start, station) } else { (station, job.end) };
            Job { start, end, release_time: 0, blocked_by: job.blocked_by.filter(|b| open_set.contains(b)), ..*job }
        })
        .collect();
    Instance::new(graph.clone(), agvs, jobs)
}
