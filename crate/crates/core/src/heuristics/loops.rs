//! Batches jobs onto a single stockroom loop per trip.

use std::cmp::Ordering;

use crate::graph::{enumerate_loops, Graph, GraphError, Loop, NodeId};
use crate::instance::JobId;
use crate::solution::ActionKind;

use super::trip::Trip;
use super::Context;

/// Loops of a graph with per-node membership bitsets.
#[derive(Debug, Clone)]
pub struct LoopIndex {
    loops: Vec<Loop>,
    position: Vec<Vec<u32>>,
    by_node: Vec<Vec<u64>>,
    min_len: Vec<usize>,
}

impl LoopIndex {
    pub fn new(graph: &Graph) -> Result<Self, GraphError> {
        let loops = enumerate_loops(graph)?;
        let n = graph.node_count();
        let words = loops.len().div_ceil(64).max(1);
        let mut position = vec![vec![u32::MAX; n]; loops.len()];
        let mut by_node = vec![vec![0u64; words]; n];
        let mut min_len = vec![usize::MAX; n];
        for (i, lp) in loops.iter().enumerate() {
            for (p, &v) in lp.nodes().iter().enumerate().skip(1) {
                if v == graph.stockroom() {
                    continue;
                }
                position[i][v] = p as u32;
                by_node[v][i / 64] |= 1 << (i % 64);
                min_len[v] = min_len[v].min(lp.len());
            }
        }
        Ok(Self { loops, position, by_node, min_len })
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    /// Loops passing through `v`, as a bitset.
    pub fn containing(&self, v: NodeId) -> &[u64] {
        &self.by_node[v]
    }

    /// Length of the shortest loop through `v`, if any.
    pub fn min_loop_len(&self, v: NodeId) -> Option<usize> {
        (self.min_len[v] != usize::MAX).then_some(self.min_len[v])
    }

    fn members(bits: &[u64]) -> impl Iterator<Item = usize> + '_ {
        bits.iter().enumerate().flat_map(|(w, &word)| (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b))
    }
}

/// Ranking of a candidate job-loop combination. `Greater` is better.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentRank {
    /// Number of assigned jobs.
    pub r1: usize,
    /// Number of assigned jobs that block another job.
    pub r2: usize,
    /// Loop length in edges.
    pub r3: usize,
    /// Slot usage as `(pallet steps, steps)`.
    pub r4: (u64, u64),
}

impl Ord for AssignmentRank {
    fn cmp(&self, other: &Self) -> Ordering {
        self.r1
            .cmp(&other.r1)
            .then(self.r2.cmp(&other.r2))
            .then(other.r3.cmp(&self.r3))
            .then((self.r4.0 * other.r4.1).cmp(&(other.r4.0 * self.r4.1)))
    }
}

impl PartialOrd for AssignmentRank {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for AssignmentRank {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AssignmentRank {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub seed: JobId,
    pub jobs: Vec<JobId>,
    pub loop_id: usize,
    pub rank: AssignmentRank,
    pub trip: Trip,
}

/// Station-side event of a job on a loop.
struct Event {
    pos: u32,
    class: u8,
    job: JobId,
}

/// Whether the jobs fit on loop `l` without exceeding `capacity`.
fn feasible(ctx: &Context<'_>, index: &LoopIndex, jobs: &[JobId], l: usize) -> bool {
    plan(ctx, index, jobs, l).is_some()
}

/// Ordered station events and the number of deliveries, or `None` when the
/// capacity would be exceeded.
fn plan(ctx: &Context<'_>, index: &LoopIndex, jobs: &[JobId], l: usize) -> Option<(Vec<Event>, usize)> {
    let mut events = Vec::with_capacity(jobs.len());
    let mut deliveries = 0usize;
    for &j in jobs {
        let job = ctx.instance.job(j).expect("pending jobs exist");
        let pos = index.position[l][job.station()];
        if pos == u32::MAX {
            return None;
        }
        if job.brings_new_material {
            deliveries += 1;
            let follows_blocker = job.blocked_by.is_some_and(|b| jobs.contains(&b));
            if !follows_blocker {
                events.push(Event { pos, class: 0, job: j });
            }
        } else {
            events.push(Event { pos, class: 1, job: j });
        }
    }
    if deliveries > ctx.capacity as usize {
        return None;
    }
    events.sort_by_key(|e| (e.pos, e.class, e.job));
    let mut onboard = deliveries;
    for e in &events {
        if e.class == 0 {
            onboard -= 1;
        } else {
            onboard += 1;
            if onboard > ctx.capacity as usize {
                return None;
            }
            if ctx.instance.blocked_job(e.job).is_some_and(|d| jobs.contains(&d)) {
                onboard -= 1;
            }
        }
    }
    Some((events, deliveries))
}

fn build_trip(ctx: &Context<'_>, index: &LoopIndex, jobs: &[JobId], l: usize) -> Option<Trip> {
    let (events, _) = plan(ctx, index, jobs, l)?;
    let lp = &index.loops[l];
    let mut trip = Trip::starting_at(lp.nodes()[0]);
    let mut loads: Vec<JobId> = jobs.iter().copied().filter(|&j| ctx.instance.job(j).is_some_and(|x| x.brings_new_material)).collect();
    loads.sort_unstable();
    for j in loads {
        trip.act(j, ActionKind::Load);
    }
    let mut ev = events.iter().peekable();
    for (p, &v) in lp.nodes().iter().enumerate().skip(1) {
        trip.step_to(v);
        while let Some(e) = ev.next_if(|e| e.pos as usize == p) {
            if e.class == 0 {
                trip.act(e.job, ActionKind::Unload);
            } else {
                trip.act(e.job, ActionKind::Load);
                if let Some(d) = ctx.instance.blocked_job(e.job).filter(|d| jobs.contains(d)) {
                    trip.act(d, ActionKind::Unload);
                }
            }
        }
    }
    let mut unloads: Vec<JobId> = jobs.iter().copied().filter(|&j| ctx.instance.job(j).is_some_and(|x| !x.brings_new_material)).collect();
    unloads.sort_unstable();
    for j in unloads {
        trip.act(j, ActionKind::Unload);
    }
    Some(trip)
}

fn slot_usage(trip: &Trip) -> (u64, u64) {
    let timed = trip.timed(0);
    let steps = (timed.route.len() - 1) as u64;
    let mut onboard = 0i64;
    let mut pallet_steps = 0i64;
    let mut acts = timed.actions.iter().peekable();
    for t in 0..steps as usize {
        while let Some(&(_, _, kind, _)) = acts.next_if(|a| a.0 == t) {
            onboard += if kind == ActionKind::Load { 1 } else { -1 };
        }
        pallet_steps += onboard;
    }
    (pallet_steps.max(0) as u64, steps.max(1))
}

fn eligible_alone(ctx: &Context<'_>, j: JobId) -> bool {
    ctx.instance.job(j).expect("pending jobs exist").blocked_by.is_none_or(|b| ctx.blocker_ready(b))
}

/// Best job-loop combination for an idle AGV at the stockroom.
///
/// Every eligible pending job seeds a candidate. The remaining jobs are
/// visited paired-first, then by their shortest loop; a job joins when some
/// loop still serves every chosen job within capacity and pair order.
/// Each candidate rides the shortest surviving loop and candidates are ranked
/// by [`AssignmentRank`], ties going to the lowest seed id.
pub fn best_candidate(ctx: &Context<'_>, index: &LoopIndex) -> Option<Candidate> {
    let is_paired = |j: JobId| {
        let job = ctx.instance.job(j).expect("pending jobs exist");
        job.blocked_by.is_some() || ctx.instance.blocked_job(j).is_some()
    };
    let mut order: Vec<JobId> = ctx.pending.to_vec();
    order.sort_by_key(|&j| {
        let station = ctx.instance.job(j).expect("pending jobs exist").station();
        (!is_paired(j), index.min_loop_len(station).unwrap_or(usize::MAX), j)
    });

    let mut best: Option<Candidate> = None;
    for &seed in ctx.pending {
        if !eligible_alone(ctx, seed) {
            continue;
        }
        let seed_station = ctx.instance.job(seed).expect("pending jobs exist").station();
        let mut jobs = vec![seed];
        let mut survivors: Vec<u64> = index.containing(seed_station).to_vec();
        for w in 0..survivors.len() {
            let mut bits = survivors[w];
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if !feasible(ctx, index, &jobs, w * 64 + b) {
                    survivors[w] &= !(1 << b);
                }
            }
        }
        if survivors.iter().all(|&w| w == 0) {
            continue;
        }
        for &r in &order {
            if r == seed {
                continue;
            }
            let job = ctx.instance.job(r).expect("pending jobs exist");
            if let Some(b) = job.blocked_by {
                if !jobs.contains(&b) && !ctx.blocker_ready(b) {
                    continue;
                }
            }
            jobs.push(r);
            let mut next: Vec<u64> = survivors.iter().zip(index.containing(job.station())).map(|(a, b)| a & b).collect();
            for w in 0..next.len() {
                let mut bits = next[w];
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    if !feasible(ctx, index, &jobs, w * 64 + b) {
                        next[w] &= !(1 << b);
                    }
                }
            }
            if next.iter().any(|&w| w != 0) {
                survivors = next;
            } else {
                jobs.pop();
            }
        }
        let loop_id = LoopIndex::members(&survivors)
            .min_by_key(|&l| (index.loops[l].len(), l))
            .expect("survivor set is nonempty");
        let trip = build_trip(ctx, index, &jobs, loop_id).expect("surviving loops are feasible");
        let blocking = jobs.iter().filter(|&&j| ctx.instance.blocked_job(j).is_some()).count();
        let rank = AssignmentRank { r1: jobs.len(), r2: blocking, r3: index.loops[loop_id].len(), r4: slot_usage(&trip) };
        if best.as_ref().is_none_or(|c| rank > c.rank) {
            best = Some(Candidate { seed, jobs, loop_id, rank, trip });
        }
    }
    best
}

/// Trip for an idle AGV: the best candidate from the stockroom, or a drive
/// back to the stockroom when the AGV is elsewhere and work is pending.
pub fn loops_assign(ctx: &Context<'_>, index: &LoopIndex) -> Option<Trip> {
    let s = ctx.instance.stockroom();
    if ctx.pending.is_empty() {
        return None;
    }
    if ctx.position != s {
        let mut trip = Trip::starting_at(ctx.position);
        trip.go_to(ctx.paths, s);
        return Some(trip);
    }
    best_candidate(ctx, index).map(|c| c.trip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_order() {
        let base = AssignmentRank { r1: 2, r2: 1, r3: 10, r4: (1, 2) };
        assert!(AssignmentRank { r1: 3, ..base } > base);
        assert!(AssignmentRank { r2: 2, ..base } > base);
        assert!(AssignmentRank { r3: 8, ..base } > base);
        assert!(AssignmentRank { r4: (3, 4), ..base } > base);
        assert_eq!(AssignmentRank { r4: (2, 4), ..base }, base);
    }
}
