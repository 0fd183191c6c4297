//! Loop-based directed plant graphs.
//!
//! Nodes are dense indices `0..node_count`. Every node carries a self-loop
//! edge, which is how standing still is represented. A graph is *loop-based*
//! when every directed cycle made of non-self-loop edges passes through the
//! stockroom; on such graphs AGVs cannot overtake and deadlocks cannot form.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type Edge = (NodeId, NodeId);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must contain at least one node")]
    Empty,
    #[error("node {node} is out of range (graph has {node_count} nodes)")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("edge ({0}, {1}) does not exist")]
    UnknownEdge(NodeId, NodeId),
    #[error("capacity must be at least 1 (got {0})")]
    InvalidCapacity(u32),
    #[error("expansion of node {node} must be at least 1 and the stockroom must have expansion 1")]
    InvalidExpansion { node: NodeId },
    #[error("graph is not loop-based: {0} cycle(s) avoid the stockroom")]
    NotLoopBased(usize),
    #[error("node {0} has nothing to unmerge (expansion 1)")]
    NothingToUnmerge(NodeId),
    #[error("the stockroom cannot be unmerged")]
    StockroomUnmerge,
    #[error("no path from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("grid dimensions must be at least 1x1 (got {0}x{1})")]
    InvalidDimensions(usize, usize),
}

/// Directed graph with node and edge capacities and per-node merge lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    stockroom: NodeId,
    edges: Vec<Edge>,
    edge_index: HashMap<Edge, usize>,
    edge_capacity: Vec<u32>,
    node_capacity: Vec<u32>,
    expansions: Vec<u32>,
    successors: Vec<Vec<NodeId>>,
    predecessors: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph, adding any missing self-loops. All capacities start at 1.
    pub fn new(
        node_count: usize,
        stockroom: NodeId,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, GraphError> {
        let mut set: BTreeSet<Edge> = edges.into_iter().collect();
        set.extend((0..node_count).map(|v| (v, v)));
        Self::from_parts(node_count, stockroom, set)
    }

    /// Builds a graph from exactly the given edges. Self-loops are not added,
    /// so the result may fail [`validate_loop_based`].
    pub fn from_parts(
        node_count: usize,
        stockroom: NodeId,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        check_node(stockroom, node_count)?;
        let set: BTreeSet<Edge> = edges.into_iter().collect();
        for &(v, w) in &set {
            check_node(v, node_count)?;
            check_node(w, node_count)?;
        }
        let edges: Vec<Edge> = set.into_iter().collect();
        let edge_index = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut successors = vec![Vec::new(); node_count];
        let mut predecessors = vec![Vec::new(); node_count];
        for &(v, w) in &edges {
            if v != w {
                successors[v].push(w);
                predecessors[w].push(v);
            }
        }
        for list in successors.iter_mut().chain(predecessors.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            stockroom,
            edge_capacity: vec![1; edges.len()],
            edges,
            edge_index,
            node_capacity: vec![1; node_count],
            expansions: vec![1; node_count],
            successors,
            predecessors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn stockroom(&self) -> NodeId {
        self.stockroom
    }

    /// All edges, self-loops included, in lexicographic order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_id(&self, v: NodeId, w: NodeId) -> Option<usize> {
        self.edge_index.get(&(v, w)).copied()
    }

    pub fn has_edge(&self, v: NodeId, w: NodeId) -> bool {
        self.edge_index.contains_key(&(v, w))
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        v < self.node_count
    }

    /// Outgoing neighbours, self-loop excluded, ascending.
    pub fn successors(&self, v: NodeId) -> &[NodeId] {
        &self.successors[v]
    }

    /// Incoming neighbours, self-loop excluded, ascending.
    pub fn predecessors(&self, v: NodeId) -> &[NodeId] {
        &self.predecessors[v]
    }

    pub fn node_capacity(&self, v: NodeId) -> u32 {
        self.node_capacity[v]
    }

    pub fn edge_capacity_by_id(&self, id: usize) -> u32 {
        self.edge_capacity[id]
    }

    pub fn edge_capacity(&self, v: NodeId, w: NodeId) -> Option<u32> {
        self.edge_id(v, w).map(|i| self.edge_capacity[i])
    }

    pub fn expansion(&self, v: NodeId) -> u32 {
        self.expansions[v]
    }

    pub fn expansion_sum(&self) -> u64 {
        self.expansions.iter().map(|&e| u64::from(e)).sum()
    }

    pub fn set_node_capacity(&mut self, v: NodeId, capacity: u32) -> Result<(), GraphError> {
        check_node(v, self.node_count)?;
        if capacity == 0 {
            return Err(GraphError::InvalidCapacity(capacity));
        }
        self.node_capacity[v] = capacity;
        Ok(())
    }

    pub fn set_edge_capacity(&mut self, v: NodeId, w: NodeId, capacity: u32) -> Result<(), GraphError> {
        if capacity == 0 {
            return Err(GraphError::InvalidCapacity(capacity));
        }
        let id = self.edge_id(v, w).ok_or(GraphError::UnknownEdge(v, w))?;
        self.edge_capacity[id] = capacity;
        Ok(())
    }

    /// Sets the node capacity of the stockroom and of its self-loop, so that
    /// `capacity` AGVs may park there at once.
    pub fn set_stockroom_capacity(&mut self, capacity: u32) -> Result<(), GraphError> {
        let s = self.stockroom;
        self.set_node_capacity(s, capacity)?;
        if self.has_edge(s, s) {
            self.set_edge_capacity(s, s, capacity)?;
        }
        Ok(())
    }

    pub fn set_expansion(&mut self, v: NodeId, expansion: u32) -> Result<(), GraphError> {
        check_node(v, self.node_count)?;
        if expansion == 0 || (v == self.stockroom && expansion != 1) {
            return Err(GraphError::InvalidExpansion { node: v });
        }
        self.expansions[v] = expansion;
        Ok(())
    }

    /// Hop distances between all node pairs; `None` when unreachable.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.node_count;
        let mut dist = vec![u32::MAX; n * n];
        let mut queue = VecDeque::new();
        for src in 0..n {
            let row = &mut dist[src * n..(src + 1) * n];
            row[src] = 0;
            queue.clear();
            queue.push_back(src);
            while let Some(v) = queue.pop_front() {
                for &w in &self.successors[v] {
                    if row[w] == u32::MAX {
                        row[w] = row[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        DistanceMatrix { n, dist }
    }
}

fn check_node(v: NodeId, node_count: usize) -> Result<(), GraphError> {
    if v < node_count {
        Ok(())
    } else {
        Err(GraphError::NodeOutOfRange { node: v, node_count })
    }
}

#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    dist: Vec<u32>,
}

impl DistanceMatrix {
    pub fn get(&self, from: NodeId, to: NodeId) -> Option<u32> {
        match self.dist[from * self.n + to] {
            u32::MAX => None,
            d => Some(d),
        }
    }
}

/// Stockroom-to-stockroom simple cycle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Loop {
    nodes: Vec<NodeId>,
}

impl Loop {
    /// Checks the loop invariants against `graph`.
    pub fn new(graph: &Graph, nodes: Vec<NodeId>) -> Option<Self> {
        let s = graph.stockroom();
        let ok = nodes.len() >= 3
            && nodes[0] == s
            && nodes[nodes.len() - 1] == s
            && nodes[1..nodes.len() - 1].iter().all(|&v| v != s)
            && nodes.windows(2).all(|p| p[0] != p[1] && graph.has_edge(p[0], p[1]));
        ok.then_some(Self { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Number of edges traversed.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    /// Interior (non-stockroom) nodes in travel order.
    pub fn stations(&self) -> &[NodeId] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub offending_cycles: Vec<Vec<NodeId>>,
    pub missing_self_loops: Vec<NodeId>,
}

/// Checks the self-loop and every-cycle-is-a-loop assumptions.
///
/// The second property holds iff the graph without the stockroom and without
/// self-loops is acyclic. One witness cycle is reported per strongly connected
/// component that violates it.
pub fn validate_loop_based(graph: &Graph) -> ValidationReport {
    let missing_self_loops: Vec<NodeId> = (0..graph.node_count()).filter(|&v| !graph.has_edge(v, v)).collect();
    let s = graph.stockroom();
    let mut offending_cycles = Vec::new();
    for component in strongly_connected_components(graph, s) {
        if component.len() < 2 {
            continue;
        }
        let members: BTreeSet<NodeId> = component.iter().copied().collect();
        let root = *members.iter().next().unwrap();
        if let Some(cycle) = cycle_through(graph, root, &members) {
            offending_cycles.push(cycle);
        }
    }
    offending_cycles.sort();
    ValidationReport {
        ok: missing_self_loops.is_empty() && offending_cycles.is_empty(),
        offending_cycles,
        missing_self_loops,
    }
}

/// Tarjan's algorithm on the graph with `skip` removed, iterative.
fn strongly_connected_components(graph: &Graph, skip: NodeId) -> Vec<Vec<NodeId>> {
    let n = graph.node_count();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0usize;
    for root in 0..n {
        if root == skip || index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(NodeId, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            let succ = graph.successors(v);
            if *child < succ.len() {
                let w = succ[*child];
                *child += 1;
                if w == skip {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
            }
        }
    }
    components
}

fn cycle_through(graph: &Graph, root: NodeId, members: &BTreeSet<NodeId>) -> Option<Vec<NodeId>> {
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &w in graph.successors(v) {
            if !members.contains(&w) {
                continue;
            }
            if w == root {
                let mut path = vec![v];
                let mut cur = v;
                while cur != root {
                    cur = parent[&cur];
                    path.push(cur);
                }
                path.reverse();
                path.push(root);
                return Some(path);
            }
            if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(w) {
                if w != root {
                    e.insert(v);
                    queue.push_back(w);
                }
            }
        }
    }
    None
}

/// All simple stockroom loops, found by flood-filling partial loops out of the
/// stockroom. Forced single-successor chains are followed without branching;
/// self-loops are never taken. The result is sorted.
pub fn enumerate_loops(graph: &Graph) -> Result<Vec<Loop>, GraphError> {
    let report = validate_loop_based(graph);
    if !report.ok {
        return Err(GraphError::NotLoopBased(report.offending_cycles.len().max(report.missing_self_loops.len())));
    }
    let s = graph.stockroom();
    let mut open: Vec<Vec<NodeId>> = vec![vec![s]];
    let mut loops = Vec::new();
    while let Some(mut partial) = open.pop() {
        let is_full = |p: &Vec<NodeId>| p.len() > 1 && p[p.len() - 1] == s;
        // follow forced chains
        loop {
            if is_full(&partial) {
                break;
            }
            let last = partial[partial.len() - 1];
            match graph.successors(last) {
                [only] => {
                    if *only != s && partial.contains(only) {
                        break;
                    }
                    partial.push(*only);
                }
                _ => break,
            }
        }
        if is_full(&partial) {
            loops.push(Loop { nodes: partial });
            continue;
        }
        let last = partial[partial.len() - 1];
        let succ = graph.successors(last);
        if succ.len() == 1 {
            // forced step hit an interior revisit: not a simple loop
            continue;
        }
        for &c in succ.iter().rev() {
            if c != s && partial.contains(&c) {
                continue;
            }
            let mut next = partial.clone();
            next.push(c);
            open.push(next);
        }
    }
    loops.sort();
    Ok(loops)
}

/// Minimum-hop path; among equally short paths the one choosing the lowest
/// next node id at every step.
pub fn shortest_path(graph: &Graph, from: NodeId, to: NodeId) -> Result<Vec<NodeId>, GraphError> {
    check_node(from, graph.node_count())?;
    check_node(to, graph.node_count())?;
    if from == to {
        return Ok(vec![from]);
    }
    let n = graph.node_count();
    let mut to_target = vec![u32::MAX; n];
    to_target[to] = 0;
    let mut queue = VecDeque::from([to]);
    while let Some(v) = queue.pop_front() {
        for &u in graph.predecessors(v) {
            if to_target[u] == u32::MAX {
                to_target[u] = to_target[v] + 1;
                queue.push_back(u);
            }
        }
    }
    if to_target[from] == u32::MAX {
        return Err(GraphError::Unreachable { from, to });
    }
    let mut path = vec![from];
    let mut cur = from;
    while cur != to {
        cur = *graph
            .successors(cur)
            .iter()
            .find(|&&w| to_target[w] == to_target[cur] - 1)
            .expect("distance labels are consistent");
        path.push(cur);
    }
    Ok(path)
}

/// Outcome of [`unmerge_node`]: the chain that replaced the merged node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relabeling {
    /// Old node id to its id in the new graph.
    pub old_to_new: Vec<NodeId>,
    /// The merged node that was expanded.
    pub node: NodeId,
    /// `v_1 .. v_k` in travel order; `v_1` keeps the old id.
    pub chain: Vec<NodeId>,
}

impl Relabeling {
    pub fn map(&self, v: NodeId) -> NodeId {
        self.old_to_new[v]
    }
}

/// Replaces merged node `v` by a directed chain of `expansion(v)` nodes.
///
/// `v_1` keeps the id of `v` and receives all incoming edges; the remaining
/// chain nodes are appended after the existing ids and the last one carries
/// all outgoing edges.
pub fn unmerge_node(graph: &Graph, v: NodeId) -> Result<(Graph, Relabeling), GraphError> {
    check_node(v, graph.node_count())?;
    if v == graph.stockroom() {
        return Err(GraphError::StockroomUnmerge);
    }
    let k = graph.expansion(v) as usize;
    if k < 2 {
        return Err(GraphError::NothingToUnmerge(v));
    }
    let n = graph.node_count();
    let chain: Vec<NodeId> = std::iter::once(v).chain(n..n + k - 1).collect();
    let tail = chain[k - 1];
    let new_count = n + k - 1;

    let mut edges = Vec::new();
    let mut caps: HashMap<Edge, u32> = HashMap::new();
    for (i, &(a, b)) in graph.edges().iter().enumerate() {
        let cap = graph.edge_capacity_by_id(i);
        let e = if a == v && b != v { (tail, b) } else { (a, b) };
        edges.push(e);
        caps.insert(e, cap);
    }
    let self_cap = graph.edge_capacity(v, v).unwrap_or(1);
    for pair in chain.windows(2) {
        edges.push((pair[0], pair[1]));
        caps.insert((pair[0], pair[1]), graph.node_capacity(v));
    }
    for &c in &chain[1..] {
        edges.push((c, c));
        caps.insert((c, c), self_cap);
    }

    let mut out = Graph::from_parts(new_count, graph.stockroom(), edges)?;
    for (&(a, b), &cap) in &caps {
        out.set_edge_capacity(a, b, cap)?;
    }
    for u in 0..n {
        out.node_capacity[u] = graph.node_capacity(u);
        out.expansions[u] = graph.expansion(u);
    }
    for &c in &chain {
        out.node_capacity[c] = graph.node_capacity(v);
        out.expansions[c] = 1;
    }
    let relabel = Relabeling { old_to_new: (0..n).collect(), node: v, chain };
    Ok((out, relabel))
}

/// Whether `v` is off every active route: no AGV's remaining walk (from its
/// current position onward) passes through it.
pub fn can_unmerge(_graph: &Graph, v: NodeId, active_loops: &[(Loop, usize)]) -> bool {
    active_loops.iter().all(|(lp, pos)| !lp.nodes().get(*pos..).is_some_and(|rest| rest.contains(&v)))
}

/// Same check for arbitrary remaining walks.
pub fn routes_avoid(v: NodeId, remaining: &[Vec<NodeId>]) -> bool {
    remaining.iter().all(|r| !r.contains(&v))
}

/// Generates the serpentine plant layout: `xn` upward lanes joined along the
/// top and bottom rows, plus a downward return lane holding the stockroom at
/// its middle node.
///
/// Grid cell `(x, y)` has `x` in `0..=xn` and `y` in `0..=yn`; the stockroom
/// gets id 0 and the remaining cells are numbered in `(x, y)` order.
pub fn generate_grid_graph(xn: usize, yn: usize) -> Result<Graph, GraphError> {
    if xn == 0 || yn == 0 {
        return Err(GraphError::InvalidDimensions(xn, yn));
    }
    let ymid = yn.div_ceil(2);
    let stock = (xn, ymid);
    let mut ids = HashMap::new();
    ids.insert(stock, 0usize);
    let mut next = 1;
    for x in 0..=xn {
        for y in 0..=yn {
            if (x, y) != stock {
                ids.insert((x, y), next);
                next += 1;
            }
        }
    }
    let id = |x: usize, y: usize| ids[&(x, y)];
    let mut edges = Vec::new();
    for y in 0..yn {
        edges.push((id(xn, y + 1), id(xn, y)));
    }
    for x in 0..xn {
        for y in 0..yn {
            edges.push((id(x, y), id(x, y + 1)));
        }
        edges.push((id(x + 1, 0), id(x, 0)));
        edges.push((id(x, yn), id(x + 1, yn)));
    }
    Graph::new(next, 0, edges)
}

/// On-disk graph layout. Self-loops may be omitted and are added on load.
/// Missing capacities default to 1, except self-loops, which default to the
/// node's capacity.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphFile {
    pub nodes: usize,
    pub stockroom: NodeId,
    pub edges: Vec<[NodeId; 2]>,
    #[serde(default)]
    pub node_capacity: BTreeMap<String, u32>,
    #[serde(default)]
    pub edge_capacity: BTreeMap<String, u32>,
    #[serde(default)]
    pub expansions: BTreeMap<String, u32>,
}

#[derive(Debug, Error)]
pub enum GraphFileError {
    #[error("invalid key {key:?} in \"{field}\"")]
    BadKey { field: &'static str, key: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn parse_node_key(field: &'static str, key: &str) -> Result<NodeId, GraphFileError> {
    key.trim().parse().map_err(|_| GraphFileError::BadKey { field, key: key.to_string() })
}

fn parse_edge_key(key: &str) -> Result<Edge, GraphFileError> {
    let bad = || GraphFileError::BadKey { field: "edge_capacity", key: key.to_string() };
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl TryFrom<GraphFile> for Graph {
    type Error = GraphFileError;

    fn try_from(file: GraphFile) -> Result<Self, Self::Error> {
        let mut g = Graph::new(file.nodes, file.stockroom, file.edges.iter().map(|e| (e[0], e[1])))?;
        for (k, &cap) in &file.node_capacity {
            let v = parse_node_key("node_capacity", k)?;
            g.set_node_capacity(v, cap)?;
            if !file.edge_capacity.keys().any(|ek| parse_edge_key(ek).ok() == Some((v, v))) {
                g.set_edge_capacity(v, v, cap)?;
            }
        }
        for (k, &cap) in &file.edge_capacity {
            let (a, b) = parse_edge_key(k)?;
            g.set_edge_capacity(a, b, cap)?;
        }
        for (k, &e) in &file.expansions {
            g.set_expansion(parse_node_key("expansions", k)?, e)?;
        }
        Ok(g)
    }
}

impl From<&Graph> for GraphFile {
    fn from(g: &Graph) -> Self {
        let edges = g.edges().iter().filter(|(a, b)| a != b).map(|&(a, b)| [a, b]).collect();
        let mut node_capacity = BTreeMap::new();
        for v in 0..g.node_count() {
            if g.node_capacity(v) != 1 {
                node_capacity.insert(v.to_string(), g.node_capacity(v));
            }
        }
        let mut edge_capacity = BTreeMap::new();
        for (i, &(a, b)) in g.edges().iter().enumerate() {
            let default = if a == b { g.node_capacity(a) } else { 1 };
            if g.edge_capacity_by_id(i) != default {
                edge_capacity.insert(format!("{a},{b}"), g.edge_capacity_by_id(i));
            }
        }
        let mut expansions = BTreeMap::new();
        for v in 0..g.node_count() {
            if g.expansion(v) != 1 {
                expansions.insert(v.to_string(), g.expansion(v));
            }
        }
        Self { nodes: g.node_count(), stockroom: g.stockroom(), edges, node_capacity, edge_capacity, expansions }
    }
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = GraphFile::deserialize(deserializer)?;
        Graph::try_from(file).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Graph {
        Graph::new(n, 0, (0..n).map(|v| (v, (v + 1) % n))).unwrap()
    }

    fn branching() -> Graph {
        Graph::new(4, 0, [(0, 1), (1, 3), (0, 2), (2, 3), (3, 0)]).unwrap()
    }

    /// Brute-force simple cycle search used as an oracle below.
    fn brute_force_cycles_avoiding(graph: &Graph, avoid: NodeId) -> usize {
        let n = graph.node_count();
        let mut count = 0;
        fn dfs(g: &Graph, start: NodeId, v: NodeId, avoid: NodeId, seen: &mut Vec<bool>, count: &mut usize) {
            for &w in g.successors(v) {
                if w == avoid {
                    continue;
                }
                if w == start {
                    *count += 1;
                } else if w > start && !seen[w] {
                    seen[w] = true;
                    dfs(g, start, w, avoid, seen, count);
                    seen[w] = false;
                }
            }
        }
        for start in 0..n {
            if start == avoid {
                continue;
            }
            let mut seen = vec![false; n];
            seen[start] = true;
            dfs(graph, start, start, avoid, &mut seen, &mut count);
        }
        count
    }

    #[test]
    fn single_node_graph_is_valid() {
        let g = Graph::new(1, 0, []).unwrap();
        assert!(validate_loop_based(&g).ok);
    }

    #[test]
    fn ring_is_valid() {
        assert!(validate_loop_based(&ring(3)).ok);
    }

    #[test]
    fn cycle_avoiding_stockroom_is_reported() {
        let g = Graph::new(3, 0, [(0, 1), (1, 2), (2, 1), (2, 0)]).unwrap();
        let report = validate_loop_based(&g);
        assert!(!report.ok);
        assert_eq!(report.offending_cycles, vec![vec![1, 2, 1]]);
        assert_eq!(brute_force_cycles_avoiding(&g, 0), 1);
    }

    #[test]
    fn missing_self_loop_is_reported() {
        let g = Graph::from_parts(2, 0, [(0, 0), (0, 1), (1, 0)]).unwrap();
        let report = validate_loop_based(&g);
        assert!(!report.ok);
        assert_eq!(report.missing_self_loops, vec![1]);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        assert_eq!(
            Graph::new(2, 0, [(0, 5)]).unwrap_err(),
            GraphError::NodeOutOfRange { node: 5, node_count: 2 }
        );
    }

    #[test]
    fn ring_has_one_loop() {
        let loops = enumerate_loops(&ring(3)).unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].nodes(), &[0, 1, 2, 0]);
    }

    #[test]
    fn branching_graph_has_two_loops() {
        let loops = enumerate_loops(&branching()).unwrap();
        let nodes: Vec<_> = loops.iter().map(|l| l.nodes().to_vec()).collect();
        assert_eq!(nodes, vec![vec![0, 1, 3, 0], vec![0, 2, 3, 0]]);
    }

    #[test]
    fn enumerate_rejects_invalid_graph() {
        let g = Graph::new(3, 0, [(0, 1), (1, 2), (2, 1), (2, 0)]).unwrap();
        assert!(matches!(enumerate_loops(&g), Err(GraphError::NotLoopBased(_))));
    }

    #[test]
    fn shortest_paths() {
        assert_eq!(shortest_path(&ring(3), 1, 1).unwrap(), vec![1]);
        assert_eq!(shortest_path(&ring(3), 1, 0).unwrap(), vec![1, 2, 0]);
        assert_eq!(shortest_path(&branching(), 0, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn unreachable_is_an_error() {
        let g = Graph::new(2, 0, [(0, 1)]).unwrap();
        assert_eq!(shortest_path(&g, 1, 0).unwrap_err(), GraphError::Unreachable { from: 1, to: 0 });
    }

    #[test]
    fn unmerge_matches_figure_shape() {
        // A=0 (stockroom), B=1, C=2, D=3
        let mut g = Graph::new(4, 0, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 0)]).unwrap();
        g.set_expansion(1, 2).unwrap();
        let (u, relabel) = unmerge_node(&g, 1).unwrap();
        assert_eq!(relabel.chain, vec![1, 4]);
        assert!(u.has_edge(0, 1));
        assert!(u.has_edge(1, 4));
        assert!(u.has_edge(4, 2));
        assert!(!u.has_edge(1, 2));
        assert!(u.has_edge(4, 4));
        assert_eq!(u.expansion(1), 1);
        assert_eq!(u.expansion(4), 1);
        assert!(validate_loop_based(&u).ok);
    }

    #[test]
    fn unmerge_lengthens_paths() {
        let mut g = ring(4);
        g.set_expansion(2, 3).unwrap();
        let before = shortest_path(&g, 1, 3).unwrap().len();
        let (u, _) = unmerge_node(&g, 2).unwrap();
        let after = shortest_path(&u, 1, 3).unwrap().len();
        assert_eq!(after, before + 2);
        let loops = enumerate_loops(&u).unwrap();
        assert_eq!(loops[0].nodes(), &[0, 1, 2, 4, 5, 3, 0]);
    }

    #[test]
    fn unmerge_errors() {
        let g = ring(3);
        assert_eq!(unmerge_node(&g, 1).unwrap_err(), GraphError::NothingToUnmerge(1));
        assert_eq!(unmerge_node(&g, 0).unwrap_err(), GraphError::StockroomUnmerge);
    }

    #[test]
    fn can_unmerge_checks_remaining_portion() {
        let g = ring(4);
        let lp = Loop::new(&g, vec![0, 1, 2, 3, 0]).unwrap();
        assert!(can_unmerge(&g, 2, &[]));
        assert!(!can_unmerge(&g, 2, &[(lp.clone(), 1)]));
        assert!(can_unmerge(&g, 2, &[(lp, 3)]));
    }

    #[test]
    fn grid_graphs() {
        let small = generate_grid_graph(1, 1).unwrap();
        assert_eq!(small.node_count(), 4);
        assert!(validate_loop_based(&small).ok);
        let g = generate_grid_graph(4, 4).unwrap();
        assert_eq!(g.node_count(), 25);
        assert!(validate_loop_based(&g).ok);
        assert_eq!(enumerate_loops(&g).unwrap().len(), 4);
        assert_eq!(generate_grid_graph(9, 6).unwrap().node_count(), 70);
        assert!(generate_grid_graph(0, 3).is_err());
    }

    #[test]
    fn json_round_trip_keeps_capacities() {
        let mut g = generate_grid_graph(2, 2).unwrap();
        g.set_stockroom_capacity(3).unwrap();
        g.set_edge_capacity(1, 2, 2).ok();
        g.set_expansion(4, 2).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
