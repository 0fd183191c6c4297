//! State handed from one scheduling period to the next.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{Loop, NodeId};
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{ActionKind, Solution};

/// The part of a plan an AGV keeps across a replanning boundary: the rest of
/// its current trip, up to the next time it stands empty at the stockroom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSegment {
    /// Positions from the boundary onwards; `route[0]` is the current node.
    pub route: Vec<NodeId>,
    /// `(offset, job, kind)` relative to the boundary.
    pub actions: Vec<(usize, JobId, ActionKind)>,
    /// The trip as a stockroom loop and the index of the current node on it,
    /// when the trip is a simple loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_view: Option<(Loop, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OnlineState {
    /// Jobs on board at the boundary and the AGV carrying each.
    pub carrier: BTreeMap<JobId, AgvId>,
    pub agv_positions: Vec<NodeId>,
    pub active: Vec<Option<ActiveSegment>>,
}

impl OnlineState {
    /// Nothing carried, nothing active.
    pub fn at_rest(positions: Vec<NodeId>) -> Self {
        let n = positions.len();
        Self { carrier: BTreeMap::new(), agv_positions: positions, active: vec![None; n] }
    }

    pub fn carried(&self) -> BTreeSet<JobId> {
        self.carrier.keys().copied().collect()
    }

    /// Jobs an AGV keeps working on across the boundary.
    pub fn committed_jobs(&self, agv: AgvId) -> BTreeSet<JobId> {
        let mut out: BTreeSet<JobId> = self.carrier.iter().filter(|&(_, &a)| a == agv).map(|(&j, _)| j).collect();
        if let Some(Some(seg)) = self.active.get(agv) {
            out.extend(seg.actions.iter().map(|&(_, j, _)| j));
        }
        out
    }

    pub fn all_committed(&self) -> BTreeSet<JobId> {
        (0..self.active.len()).flat_map(|a| self.committed_jobs(a)).collect()
    }

    /// Remaining nodes on every active segment.
    pub fn remaining_routes(&self) -> Vec<Vec<NodeId>> {
        self.active.iter().flatten().map(|s| s.route.clone()).collect()
    }
}

/// Splits `previous` at column `now`. Each AGV keeps the part of its plan up
/// to the first later column where it is empty at the stockroom or has no
/// work left; jobs loaded later than that return to the pending pool.
pub fn carry_over(instance: &Instance, previous: &Solution, now: usize) -> OnlineState {
    let s = instance.stockroom();
    let h = previous.horizon;
    let col = |a: AgvId, c: usize| previous.routes[a][c.min(h)];
    let mut state = OnlineState::default();
    for a in 0..previous.agv_count() {
        state.agv_positions.push(col(a, now));
        let actions = previous.actions_of(a);
        let onboard_before = |c: usize| {
            actions.iter().filter(|x| x.0 < c).map(|x| if x.2 == ActionKind::Load { 1i64 } else { -1 }).sum::<i64>()
        };
        for &(t, j, kind) in &actions {
            if kind == ActionKind::Load && t < now {
                let done = previous.schedule[&j].t_unload.is_some_and(|u| u < now);
                if !done {
                    state.carrier.insert(j, a);
                }
            }
        }
        let last_action = actions.last().map(|x| x.0 + 1).unwrap_or(0);
        let last_move = (0..h).rev().find(|&t| previous.routes[a][t] != previous.routes[a][t + 1]).map_or(0, |t| t + 1);
        let settled = last_action.max(last_move);
        let mut end = now;
        loop {
            let empty = onboard_before(end) == 0;
            // an action in the final column needs one more stationary column
            if (col(a, end) == s && empty) || (end >= settled && empty) || end > h.max(now) {
                break;
            }
            end += 1;
        }
        if end == now {
            state.active.push(None);
            continue;
        }
        let route: Vec<NodeId> = (now..=end).map(|c| col(a, c)).collect();
        let seg_actions: Vec<(usize, JobId, ActionKind)> =
            actions.iter().filter(|x| x.0 >= now && x.0 < end).map(|&(t, j, k)| (t - now, j, k)).collect();
        let loop_view = loop_view(instance, previous, a, now, end);
        state.active.push(Some(ActiveSegment { route, actions: seg_actions, loop_view }));
    }
    state
}

fn loop_view(instance: &Instance, sol: &Solution, a: AgvId, now: usize, end: usize) -> Option<(Loop, usize)> {
    let s = instance.stockroom();
    let r = &sol.routes[a];
    let now = now.min(sol.horizon);
    let start = (0..=now).rev().find(|&c| r[c] == s)?;
    let mut nodes = vec![r[start]];
    let mut index = 0;
    for c in start + 1..=end.min(sol.horizon) {
        if r[c] != *nodes.last().expect("nonempty") {
            nodes.push(r[c]);
        }
        if c == now {
            index = nodes.len() - 1;
        }
    }
    let lp = Loop::new(instance.graph(), nodes)?;
    Some((lp, index))
}
