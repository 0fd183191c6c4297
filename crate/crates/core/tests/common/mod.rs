//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use agvsched::graph::Graph;
use agvsched::instance::{make_pair, Agv, Instance, Job};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Req {
    Delivery(usize),
    Removal(usize),
    Pair(usize),
}

pub fn ring(n: usize) -> Graph {
    Graph::new(n, 0, (0..n).map(|v| (v, (v + 1) % n))).unwrap()
}

pub fn ring_instance(requests: &[Req], capacity: u32, start: usize) -> Instance {
    let mut jobs = Vec::new();
    for r in requests {
        let id = jobs.len();
        match *r {
            Req::Delivery(k) => jobs.push(Job::delivery(id, 0, k, 0)),
            Req::Removal(k) => jobs.push(Job::removal(id, 0, k, 0)),
            Req::Pair(k) => {
                let (a, b) = make_pair(k, 0, id, 0).unwrap();
                jobs.push(a);
                jobs.push(b);
            }
        }
    }
    Instance::new(ring(4), vec![Agv { id: 0, capacity, start_node: start }], jobs).unwrap()
}

/// Every 4-ring instance with one AGV at the stockroom, capacity 1 or 2 and
/// at most two requests.
pub fn tiny_family() -> Vec<(String, Instance)> {
    let mut kinds = Vec::new();
    for k in 1..4 {
        kinds.extend([Req::Delivery(k), Req::Removal(k), Req::Pair(k)]);
    }
    let mut sets: Vec<Vec<Req>> = vec![vec![]];
    for i in 0..kinds.len() {
        sets.push(vec![kinds[i]]);
        for j in i..kinds.len() {
            sets.push(vec![kinds[i], kinds[j]]);
        }
    }
    let mut out = Vec::new();
    for cap in [1, 2] {
        for s in &sets {
            out.push((format!("cap{cap} {s:?}"), ring_instance(s, cap, 0)));
        }
    }
    out
}

/// Minimum total delivery completion over all plans of a single AGV within
/// steps `0..=horizon`, by dynamic programming over
/// `(node, loaded set, unloaded set)`. `None` when no plan finishes every job.
pub fn brute_force_optimum(instance: &Instance, horizon: usize) -> Option<usize> {
    assert_eq!(instance.agvs().len(), 1);
    let g = instance.graph();
    let agv = &instance.agvs()[0];
    let jobs = instance.jobs();
    let n = jobs.len();
    let pos_of = |id: usize| jobs.iter().position(|j| j.id == id).unwrap();
    let mut layer: HashMap<(usize, u32, u32), usize> = HashMap::new();
    layer.insert((agv.start_node, 0, 0), 0);
    for t in 0..=horizon {
        let mut next: HashMap<(usize, u32, u32), usize> = HashMap::new();
        let mut push = |k: (usize, u32, u32), c: usize| {
            let e = next.entry(k).or_insert(usize::MAX);
            *e = (*e).min(c);
        };
        for (&(v, loaded, unloaded), &cost) in &layer {
            if t < horizon {
                for &w in g.successors(v) {
                    push((w, loaded, unloaded), cost);
                }
            }
            push((v, loaded, unloaded), cost);
            let onboard = (loaded & !unloaded).count_ones();
            for (i, job) in jobs.iter().enumerate() {
                let bit = 1u32 << i;
                if loaded & bit == 0 && job.start == v && onboard < agv.capacity {
                    push((v, loaded | bit, unloaded), cost);
                }
                let blocker_ok = job.blocked_by.is_none_or(|b| loaded & (1 << pos_of(b)) != 0);
                if loaded & bit != 0 && unloaded & bit == 0 && job.end == v && blocker_ok {
                    let add = if job.brings_new_material { t } else { 0 };
                    push((v, loaded, unloaded | bit), cost + add);
                }
            }
        }
        layer = next;
    }
    let all = (1u32 << n) - 1;
    layer.iter().filter(|(k, _)| k.1 == all && k.2 == all).map(|(_, &c)| c).min()
}

pub fn solver_available() -> bool {
    std::process::Command::new("cbc").arg("-quit").output().is_ok()
}
