//! One request per trip along shortest paths.

use crate::instance::JobId;
use crate::solution::ActionKind;

use super::trip::Trip;
use super::Context;

/// Trip serving the first eligible pending request, ending at the stockroom.
/// A pair is served as two legs: the removal is brought to the stockroom,
/// then the replacement is taken back to the station.
pub fn greedy_assign(ctx: &Context<'_>) -> Option<Trip> {
    let request = first_request(ctx)?;
    let s = ctx.instance.stockroom();
    let mut trip = Trip::starting_at(ctx.position);
    for &j in &request {
        let job = ctx.instance.job(j).expect("pending jobs exist");
        trip.go_to(ctx.paths, job.start);
        trip.act(j, ActionKind::Load);
        trip.go_to(ctx.paths, job.end);
        trip.act(j, ActionKind::Unload);
    }
    trip.go_to(ctx.paths, s);
    Some(trip)
}

/// Pending jobs grouped into requests, taken in release order then id.
fn first_request(ctx: &Context<'_>) -> Option<Vec<JobId>> {
    let mut best: Option<((usize, JobId), Vec<JobId>)> = None;
    for &j in ctx.pending {
        let job = ctx.instance.job(j).expect("pending jobs exist");
        let request = if let Some(b) = job.blocked_by {
            if ctx.is_pending(b) {
                continue; // served together with its blocker
            }
            if !ctx.blocker_ready(b) {
                continue;
            }
            vec![j]
        } else {
            match ctx.instance.blocked_job(j).filter(|&d| ctx.is_pending(d)) {
                Some(d) => vec![j, d],
                None => vec![j],
            }
        };
        let key = (job.release_time, j);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, request));
        }
    }
    best.map(|(_, r)| r)
}
