//! Jobs, AGVs, instances and instance generators.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId};
use crate::rng::Lcg64;

pub type JobId = usize;
pub type AgvId = usize;

/// One pallet transport between the stockroom and a station.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub start: NodeId,
    pub end: NodeId,
    #[serde(default)]
    pub release_time: usize,
    #[serde(default)]
    pub blocked_by: Option<JobId>,
    pub brings_new_material: bool,
}

impl Job {
    /// Stockroom to `station`.
    pub fn delivery(id: JobId, stockroom: NodeId, station: NodeId, release_time: usize) -> Self {
        Self { id, start: stockroom, end: station, release_time, blocked_by: None, brings_new_material: true }
    }

    /// `station` to the stockroom.
    pub fn removal(id: JobId, stockroom: NodeId, station: NodeId, release_time: usize) -> Self {
        Self { id, start: station, end: stockroom, release_time, blocked_by: None, brings_new_material: false }
    }

    /// The non-stockroom endpoint.
    pub fn station(&self) -> NodeId {
        if self.brings_new_material {
            self.end
        } else {
            self.start
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agv {
    pub id: AgvId,
    pub capacity: u32,
    pub start_node: NodeId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("station {0} is the stockroom")]
    InvalidStation(NodeId),
    #[error("job {job}: node {node} does not exist")]
    UnknownNode { job: JobId, node: NodeId },
    #[error("job {0}: exactly one endpoint must be the stockroom")]
    StockroomEndpoint(JobId),
    #[error("job {0}: brings_new_material must be true exactly when the job starts at the stockroom")]
    MaterialFlag(JobId),
    #[error("duplicate job id {0}")]
    DuplicateJob(JobId),
    #[error("job {job} is blocked by unknown job {blocker}")]
    UnknownBlocker { job: JobId, blocker: JobId },
    #[error("job {job} is blocked by {blocker}, which is itself blocked")]
    ChainedBlock { job: JobId, blocker: JobId },
    #[error("job {job} must end where its blocker {blocker} starts")]
    PairStation { job: JobId, blocker: JobId },
    #[error("job {0} blocks more than one job")]
    MultipleBlocked(JobId),
    #[error("agv at index {index} has id {id}; ids must equal list positions")]
    AgvId { index: usize, id: AgvId },
    #[error("agv {0}: capacity must be at least 1")]
    AgvCapacity(AgvId),
    #[error("agv {agv}: start node {node} does not exist")]
    AgvStart { agv: AgvId, node: NodeId },
    #[error("density must be a positive decimal number (got {0:?})")]
    InvalidDensity(String),
}

/// A transport request as operators issue it: one job, or a removal and the
/// delivery that replaces it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Request {
    Single(JobId),
    Pair { removal: JobId, delivery: JobId },
}

impl Request {
    pub fn jobs(&self) -> Vec<JobId> {
        match *self {
            Request::Single(j) => vec![j],
            Request::Pair { removal, delivery } => vec![removal, delivery],
        }
    }

    pub fn first_job(&self) -> JobId {
        match *self {
            Request::Single(j) => j,
            Request::Pair { removal, .. } => removal,
        }
    }
}

/// Validated problem instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    graph: Graph,
    agvs: Vec<Agv>,
    jobs: Vec<Job>,
    horizon_hint: Option<usize>,
    index: HashMap<JobId, usize>,
    blocks: HashMap<JobId, JobId>,
}

impl Instance {
    pub fn new(graph: Graph, agvs: Vec<Agv>, jobs: Vec<Job>) -> Result<Self, InstanceError> {
        let s = graph.stockroom();
        for (index, agv) in agvs.iter().enumerate() {
            if agv.id != index {
                return Err(InstanceError::AgvId { index, id: agv.id });
            }
            if agv.capacity == 0 {
                return Err(InstanceError::AgvCapacity(agv.id));
            }
            if !graph.contains_node(agv.start_node) {
                return Err(InstanceError::AgvStart { agv: agv.id, node: agv.start_node });
            }
        }
        let mut index = HashMap::new();
        for (i, job) in jobs.iter().enumerate() {
            if index.insert(job.id, i).is_some() {
                return Err(InstanceError::DuplicateJob(job.id));
            }
            for node in [job.start, job.end] {
                if !graph.contains_node(node) {
                    return Err(InstanceError::UnknownNode { job: job.id, node });
                }
            }
            if (job.start == s) == (job.end == s) {
                return Err(InstanceError::StockroomEndpoint(job.id));
            }
            if job.brings_new_material != (job.start == s) {
                return Err(InstanceError::MaterialFlag(job.id));
            }
        }
        let mut blocks = HashMap::new();
        for job in &jobs {
            let Some(b) = job.blocked_by else { continue };
            let blocker = index.get(&b).map(|&i| &jobs[i]).ok_or(InstanceError::UnknownBlocker { job: job.id, blocker: b })?;
            if blocker.blocked_by.is_some() {
                return Err(InstanceError::ChainedBlock { job: job.id, blocker: b });
            }
            if job.end != blocker.start {
                return Err(InstanceError::PairStation { job: job.id, blocker: b });
            }
            if blocks.insert(b, job.id).is_some() {
                return Err(InstanceError::MultipleBlocked(b));
            }
        }
        Ok(Self { graph, agvs, jobs, horizon_hint: None, index, blocks })
    }

    pub fn with_horizon_hint(mut self, hint: Option<usize>) -> Self {
        self.horizon_hint = hint;
        self
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn stockroom(&self) -> NodeId {
        self.graph.stockroom()
    }

    pub fn agvs(&self) -> &[Agv] {
        &self.agvs
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn horizon_hint(&self) -> Option<usize> {
        self.horizon_hint
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.index.get(&id).map(|&i| &self.jobs[i])
    }

    /// Position of a job in [`Instance::jobs`].
    pub fn job_index(&self, id: JobId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// The job blocked by `id`, if any.
    pub fn blocked_job(&self, id: JobId) -> Option<JobId> {
        self.blocks.get(&id).copied()
    }

    /// Requests ordered by their first job's position in the job list.
    pub fn requests(&self) -> Vec<Request> {
        let mut out = Vec::new();
        for job in &self.jobs {
            if job.blocked_by.is_some() {
                continue;
            }
            match self.blocked_job(job.id) {
                Some(d) => out.push(Request::Pair { removal: job.id, delivery: d }),
                None => out.push(Request::Single(job.id)),
            }
        }
        out
    }

    /// Replaces the graph, keeping jobs and AGVs (used after unmerging).
    pub fn with_graph(&self, graph: Graph) -> Result<Self, InstanceError> {
        Instance::new(graph, self.agvs.clone(), self.jobs.clone()).map(|i| i.with_horizon_hint(self.horizon_hint))
    }

    /// Same instance with every release time set to zero.
    pub fn released_at_zero(&self) -> Self {
        let mut out = self.clone();
        for job in &mut out.jobs {
            job.release_time = 0;
        }
        out
    }
}

/// Returns `(removal, delivery)` for one station; the delivery is blocked by
/// the removal and both share the release time.
pub fn make_pair(station: NodeId, stockroom: NodeId, next_id: JobId, release: usize) -> Result<(Job, Job), InstanceError> {
    if station == stockroom {
        return Err(InstanceError::InvalidStation(station));
    }
    let removal = Job::removal(next_id, stockroom, station, release);
    let mut delivery = Job::delivery(next_id + 1, stockroom, station, release);
    delivery.blocked_by = Some(removal.id);
    Ok((removal, delivery))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OfflineSpec {
    pub unpaired: Vec<NodeId>,
    pub paired: Vec<NodeId>,
    pub agv_count: usize,
    pub agv_capacity: u32,
}

/// Deliveries for `unpaired` stations followed by one pair per `paired`
/// station, all released at step 0. AGVs start at the stockroom, whose node
/// and self-loop capacity are raised so that every AGV can park there.
pub fn generate_offline_instance(spec: &OfflineSpec, graph: &Graph) -> Result<Instance, InstanceError> {
    let s = graph.stockroom();
    let mut graph = graph.clone();
    graph.set_stockroom_capacity(spec.agv_count.max(1) as u32)?;
    let mut jobs = Vec::new();
    for &k in &spec.unpaired {
        check_station(&graph, k)?;
        jobs.push(Job::delivery(jobs.len(), s, k, 0));
    }
    for &k in &spec.paired {
        check_station(&graph, k)?;
        let (r, d) = make_pair(k, s, jobs.len(), 0)?;
        jobs.push(r);
        jobs.push(d);
    }
    let agvs = (0..spec.agv_count).map(|id| Agv { id, capacity: spec.agv_capacity, start_node: s }).collect();
    Instance::new(graph, agvs, jobs)
}

fn check_station(graph: &Graph, k: NodeId) -> Result<(), InstanceError> {
    if !graph.contains_node(k) {
        return Err(GraphError::NodeOutOfRange { node: k, node_count: graph.node_count() }.into());
    }
    if k == graph.stockroom() {
        return Err(InstanceError::InvalidStation(k));
    }
    Ok(())
}

/// Station sets of the seven benchmark instances `a`..=`g` on the 70-node
/// plant layout produced by `generate_grid_graph(9, 6)`. Each instance adds
/// stations to the previous one.
pub fn plant_benchmark_spec(name: char, agv_count: usize) -> Option<OfflineSpec> {
    const ADDED: [(&[NodeId], &[NodeId]); 7] = [
        (&[14, 36, 37, 69], &[]),
        (&[], &[20, 28]),
        (&[], &[10, 47]),
        (&[], &[11, 12, 39, 44, 46, 51, 55, 68]),
        (&[], &[4, 17, 21, 23, 24, 29, 30, 32, 40, 50, 52, 56, 60, 62, 63, 65]),
        (&[7, 15, 18, 31, 35, 43, 57, 64], &[5, 8, 25, 34, 38, 53, 61, 66]),
        (&[], &[1, 2, 3, 6, 9, 13, 16, 19, 22, 26, 27, 33, 41, 42, 45, 48, 49, 54, 58, 59, 67]),
    ];
    let last = (name as usize).checked_sub('a' as usize).filter(|&i| i < ADDED.len())?;
    let mut spec = OfflineSpec { agv_count, agv_capacity: 2, ..Default::default() };
    for (unpaired, paired) in &ADDED[..=last] {
        spec.unpaired.extend_from_slice(unpaired);
        spec.paired.extend_from_slice(paired);
    }
    Some(spec)
}

/// Exact positive rational parsed from decimal text such as `0.5` or `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Density {
    num: u64,
    den: u64,
}

impl Density {
    pub fn new(num: u64, den: u64) -> Result<Self, InstanceError> {
        if num == 0 || den == 0 {
            return Err(InstanceError::InvalidDensity(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    /// Release step of the `i`-th request: `floor(i / density)`.
    pub fn release_of(&self, i: usize) -> usize {
        ((i as u128 * self.den as u128) / self.num as u128) as usize
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl FromStr for Density {
    type Err = InstanceError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let bad = || InstanceError::InvalidDensity(text.to_string());
        let t = text.trim();
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if (int.is_empty() && frac.is_empty()) || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int_val: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int_val.checked_mul(den).and_then(|v| v.checked_add(frac_val)).ok_or_else(bad)?;
        Density::new(num, den).map_err(|_| bad())
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Online stream: shuffles the requests of `base_jobs` with `seed`, keeps the
/// first `window` of them and releases request `i` at `floor(i / density)`.
/// Jobs keep their ids; pairs share one release step.
pub fn generate_density_stream(base_jobs: &[Job], density: Density, window: usize, seed: u64) -> Vec<Job> {
    let mut requests: Vec<Vec<&Job>> = Vec::new();
    for job in base_jobs {
        if job.blocked_by.is_some() {
            continue;
        }
        let mut group = vec![job];
        if let Some(d) = base_jobs.iter().find(|d| d.blocked_by == Some(job.id)) {
            group.push(d);
        }
        requests.push(group);
    }
    Lcg64::new(seed).shuffle(&mut requests);
    requests
        .into_iter()
        .take(window)
        .enumerate()
        .flat_map(|(i, group)| {
            let release = density.release_of(i);
            group.into_iter().map(move |j| Job { release_time: release, ..j.clone() })
        })
        .collect()
}

/// Graph either inline or as a path relative to the instance file.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum GraphRef {
    Path(PathBuf),
    Inline(Graph),
}

impl<'de> Deserialize<'de> for GraphRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::String(p) => Ok(GraphRef::Path(p.into())),
            other => Graph::deserialize(other).map(GraphRef::Inline).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub graph: GraphRef,
    pub agvs: Vec<Agv>,
    pub jobs: Vec<Job>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_hint: Option<usize>,
}

#[derive(Debug, Error)]
pub enum InstanceFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Invalid(#[from] InstanceError),
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        Self {
            graph: GraphRef::Inline(inst.graph.clone()),
            agvs: inst.agvs.clone(),
            jobs: inst.jobs.clone(),
            horizon_hint: inst.horizon_hint,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, InstanceFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| InstanceFileError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| InstanceFileError::Parse { path: path.into(), source })
}

pub fn load_graph(path: &Path) -> Result<Graph, InstanceFileError> {
    read_json(path)
}

pub fn load_instance(path: &Path) -> Result<Instance, InstanceFileError> {
    let file: InstanceFile = read_json(path)?;
    let graph = match file.graph {
        GraphRef::Inline(g) => g,
        GraphRef::Path(p) => {
            let p = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p };
            load_graph(&p)?
        }
    };
    Ok(Instance::new(graph, file.agvs, file.jobs)?.with_horizon_hint(file.horizon_hint))
}

pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(instance)).expect("instance serializes")
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), InstanceFileError> {
    std::fs::write(path, instance_to_json(instance) + "\n").map_err(|source| InstanceFileError::Io { path: path.into(), source })
}
