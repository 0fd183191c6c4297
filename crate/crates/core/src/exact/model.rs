//! Time-expanded binary program over positions, loads and unloads.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::graph::NodeId;
use crate::heuristics::OnlineState;
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::Constraint;

/// Decision variable. `P` marks edge `edge` used by `agv` during step `t`;
/// `L`/`U` mark a load/unload of `job` by `agv` during step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    P { t: usize, agv: AgvId, edge: usize },
    L { t: usize, agv: AgvId, job: JobId },
    U { t: usize, agv: AgvId, job: JobId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub tag: Constraint,
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Row {
    pub fn holds(&self, values: &[bool]) -> bool {
        let lhs: i64 = self.terms.iter().map(|&(v, c)| if values[v] { c } else { 0 }).sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Ge => lhs >= self.rhs,
            Sense::Eq => lhs == self.rhs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MipModel {
    pub horizon: usize,
    pub online: bool,
    pub agv_count: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    pub vars: Vec<Var>,
    pub names: Vec<String>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, i64)>,
    index: HashMap<Var, usize>,
    by_name: HashMap<String, usize>,
}

impl MipModel {
    pub fn var(&self, v: Var) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn var_by_name(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn rows_tagged(&self, tag: Constraint) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.tag == tag)
    }

    /// Names of the rows violated by `values`.
    pub fn violated_rows(&self, values: &[bool]) -> Vec<String> {
        self.rows.iter().filter(|r| !r.holds(values)).map(|r| r.name.clone()).collect()
    }

    pub fn objective_value(&self, values: &[bool]) -> i64 {
        self.objective.iter().map(|&(v, c)| if values[v] { c } else { 0 }).sum()
    }
}

fn var_name(v: Var, edges: &[(NodeId, NodeId)]) -> String {
    match v {
        Var::P { t, agv, edge } => format!("P_{t}_{agv}_{}_{}", edges[edge].0, edges[edge].1),
        Var::L { t, agv, job } => format!("L_{t}_{agv}_{job}"),
        Var::U { t, agv, job } => format!("U_{t}_{agv}_{job}"),
    }
}

struct Builder {
    model: MipModel,
}

impl Builder {
    fn add_var(&mut self, v: Var) {
        let name = var_name(v, &self.model.edges);
        let i = self.model.vars.len();
        self.model.vars.push(v);
        self.model.index.insert(v, i);
        self.model.by_name.insert(name.clone(), i);
        self.model.names.push(name);
    }

    fn id(&self, v: Var) -> usize {
        self.model.index[&v]
    }

    fn row(&mut self, tag: Constraint, name: String, terms: Vec<(usize, i64)>, sense: Sense, rhs: i64) {
        self.model.rows.push(Row { tag, name, terms, sense, rhs });
    }
}

/// Builds the model for `instance` over steps `0..=horizon`.
///
/// Offline rows, in order: one edge per step (`eq1`), flow continuity
/// (`eq2`), edge and node capacity (`eq3`, `eq4`), start nodes (`eq5`), one
/// load and one unload per job (`eq6`, `eq7`), load before unload (`eq8`),
/// stationary loading and unloading (`eq9`, `eq10`), one action per AGV and
/// step (`eq11`), AGV capacity (`eq12`), pair order (`eq13`) and one action
/// per endpoint node and step (`eq14`, `eq15`).
///
/// With an online state, carried jobs are fixed as loaded at step 0 by their
/// carrier (`eq17`) and excluded from the loading rows, which replace `eq9`,
/// `eq11`, `eq14` and `eq15` by `eq18` to `eq21`.
pub fn build_mip(instance: &Instance, horizon: usize, online: Option<&OnlineState>) -> MipModel {
    let graph = instance.graph();
    let h = horizon;
    let agvs = instance.agvs();
    let jobs = instance.jobs();
    let edges: Vec<(NodeId, NodeId)> = graph.edges().to_vec();
    let carried: BTreeMap<JobId, AgvId> = online.map(|s| s.carrier.clone()).unwrap_or_default();
    let mut b = Builder {
        model: MipModel {
            horizon,
            online: online.is_some(),
            agv_count: agvs.len(),
            edges: edges.clone(),
            vars: Vec::new(),
            names: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            index: HashMap::new(),
            by_name: HashMap::new(),
        },
    };
    for t in 0..=h {
        for a in 0..agvs.len() {
            for e in 0..edges.len() {
                b.add_var(Var::P { t, agv: a, edge: e });
            }
        }
    }
    for t in 0..=h {
        for a in 0..agvs.len() {
            for job in jobs {
                b.add_var(Var::L { t, agv: a, job: job.id });
            }
        }
    }
    for t in 0..=h {
        for a in 0..agvs.len() {
            for job in jobs {
                b.add_var(Var::U { t, agv: a, job: job.id });
            }
        }
    }

    let p = |b: &Builder, t, a, e| b.id(Var::P { t, agv: a, edge: e });
    let l = |b: &Builder, t, a, j| b.id(Var::L { t, agv: a, job: j });
    let u = |b: &Builder, t, a, j| b.id(Var::U { t, agv: a, job: j });
    let mut in_edges = vec![Vec::new(); graph.node_count()];
    let mut out_edges = vec![Vec::new(); graph.node_count()];
    for (e, &(v, w)) in edges.iter().enumerate() {
        out_edges[v].push(e);
        in_edges[w].push(e);
    }
    let incoming = |v: NodeId| in_edges[v].iter().copied();
    let outgoing = |v: NodeId| out_edges[v].iter().copied();
    let self_loop = |v: NodeId| graph.edge_id(v, v);
    let is_carried = |j: JobId| carried.contains_key(&j);

    for a in 0..agvs.len() {
        for t in 0..=h {
            let terms = (0..edges.len()).map(|e| (p(&b, t, a, e), 1)).collect();
            b.row(Constraint::Eq1, format!("eq1_{a}_{t}"), terms, Sense::Eq, 1);
        }
    }
    for a in 0..agvs.len() {
        for v in 0..graph.node_count() {
            for t in 0..h {
                let mut terms: Vec<(usize, i64)> = incoming(v).map(|e| (p(&b, t, a, e), 1)).collect();
                terms.extend(outgoing(v).map(|e| (p(&b, t + 1, a, e), -1)));
                b.row(Constraint::Eq2, format!("eq2_{a}_{v}_{t}"), terms, Sense::Eq, 0);
            }
        }
    }
    for (e, &(v, w)) in edges.iter().enumerate() {
        for t in 0..=h {
            let terms = (0..agvs.len()).map(|a| (p(&b, t, a, e), 1)).collect();
            b.row(Constraint::Eq3, format!("eq3_{v}_{w}_{t}"), terms, Sense::Le, i64::from(graph.edge_capacity_by_id(e)));
        }
    }
    for v in 0..graph.node_count() {
        for t in 0..=h {
            let terms = (0..agvs.len()).flat_map(|a| incoming(v).map(move |e| (a, e))).map(|(a, e)| (p(&b, t, a, e), 1)).collect();
            b.row(Constraint::Eq4, format!("eq4_{v}_{t}"), terms, Sense::Le, i64::from(graph.node_capacity(v)));
        }
    }
    for (a, agv) in agvs.iter().enumerate() {
        let terms = outgoing(agv.start_node).map(|e| (p(&b, 0, a, e), 1)).collect();
        b.row(Constraint::Eq5, format!("eq5_{a}"), terms, Sense::Eq, 1);
    }
    for job in jobs {
        let terms = (0..agvs.len()).flat_map(|a| (0..=h).map(move |t| (t, a))).map(|(t, a)| (l(&b, t, a, job.id), 1)).collect();
        b.row(Constraint::Eq6, format!("eq6_{}", job.id), terms, Sense::Eq, 1);
    }
    for job in jobs {
        let terms = (0..agvs.len()).flat_map(|a| (0..=h).map(move |t| (t, a))).map(|(t, a)| (u(&b, t, a, job.id), 1)).collect();
        b.row(Constraint::Eq7, format!("eq7_{}", job.id), terms, Sense::Eq, 1);
    }
    for a in 0..agvs.len() {
        for job in jobs {
            for t in 0..=h {
                let mut terms: Vec<(usize, i64)> = (0..=t).map(|s| (l(&b, s, a, job.id), 1)).collect();
                terms.extend((0..=t).map(|s| (u(&b, s, a, job.id), -1)));
                b.row(Constraint::Eq8, format!("eq8_{a}_{}_{t}", job.id), terms, Sense::Ge, 0);
            }
        }
    }
    let load_position_tag = if b.model.online { Constraint::Eq18 } else { Constraint::Eq9 };
    for a in 0..agvs.len() {
        for job in jobs.iter().filter(|j| !is_carried(j.id)) {
            for t in 0..=h {
                let mut terms = vec![(l(&b, t, a, job.id), -1)];
                if let Some(e) = self_loop(job.start) {
                    terms.insert(0, (p(&b, t, a, e), 1));
                }
                let k = if b.model.online { 18 } else { 9 };
                b.row(load_position_tag, format!("eq{k}_{a}_{}_{t}", job.id), terms, Sense::Ge, 0);
            }
        }
    }
    for a in 0..agvs.len() {
        for job in jobs {
            for t in 0..=h {
                let mut terms = vec![(u(&b, t, a, job.id), -1)];
                if let Some(e) = self_loop(job.end) {
                    terms.insert(0, (p(&b, t, a, e), 1));
                }
                b.row(Constraint::Eq10, format!("eq10_{a}_{}_{t}", job.id), terms, Sense::Ge, 0);
            }
        }
    }
    let (one_action_tag, k) = if b.model.online { (Constraint::Eq19, 19) } else { (Constraint::Eq11, 11) };
    for a in 0..agvs.len() {
        for t in 0..=h {
            let mut terms: Vec<(usize, i64)> = jobs.iter().filter(|j| !is_carried(j.id)).map(|j| (l(&b, t, a, j.id), 1)).collect();
            terms.extend(jobs.iter().map(|j| (u(&b, t, a, j.id), 1)));
            b.row(one_action_tag, format!("eq{k}_{a}_{t}"), terms, Sense::Le, 1);
        }
    }
    for (a, agv) in agvs.iter().enumerate() {
        for t in 0..=h {
            let mut terms = Vec::new();
            for s in 0..=t {
                for job in jobs {
                    terms.push((l(&b, s, a, job.id), 1));
                    terms.push((u(&b, s, a, job.id), -1));
                }
            }
            b.row(Constraint::Eq12, format!("eq12_{a}_{t}"), terms, Sense::Le, i64::from(agv.capacity));
        }
    }
    for job in jobs {
        let Some(blocker) = job.blocked_by else { continue };
        for t in 0..=h {
            let mut terms = Vec::new();
            for s in 0..=t {
                for a in 0..agvs.len() {
                    terms.push((u(&b, s, a, job.id), 1));
                    terms.push((l(&b, s, a, blocker), -1));
                }
            }
            b.row(Constraint::Eq13, format!("eq13_{}_{t}", job.id), terms, Sense::Le, 0);
        }
    }
    let (start_tag, end_tag, ks, ke) =
        if b.model.online { (Constraint::Eq20, Constraint::Eq21, 20, 21) } else { (Constraint::Eq14, Constraint::Eq15, 14, 15) };
    for (tag, k, node_of) in [(start_tag, ks, true), (end_tag, ke, false)] {
        for job in jobs {
            let v = if node_of { job.start } else { job.end };
            for t in 0..=h {
                let mut terms = Vec::new();
                for a in 0..agvs.len() {
                    for other in jobs {
                        if other.start == v && !is_carried(other.id) {
                            terms.push((l(&b, t, a, other.id), 1));
                        }
                        if other.end == v {
                            terms.push((u(&b, t, a, other.id), 1));
                        }
                    }
                }
                b.row(tag, format!("eq{k}_{}_{t}", job.id), terms, Sense::Le, 1);
            }
        }
    }
    for (&j, &a) in &carried {
        if instance.job(j).is_some() && a < agvs.len() {
            let terms = vec![(l(&b, 0, a, j), 1)];
            b.row(Constraint::Eq17, format!("eq17_{j}"), terms, Sense::Eq, 1);
        }
    }
    let new_material: BTreeSet<JobId> = jobs.iter().filter(|j| j.brings_new_material).map(|j| j.id).collect();
    let mut objective = Vec::new();
    for t in 1..=h {
        for a in 0..agvs.len() {
            for &j in &new_material {
                objective.push((u(&b, t, a, j), t as i64));
            }
        }
    }
    b.model.objective = objective;
    // keep rows sorted by tag, stable within a tag
    b.model.rows.sort_by_key(|r| r.tag);
    b.model
}
