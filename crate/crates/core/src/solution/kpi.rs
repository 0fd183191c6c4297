use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::instance::{Instance, JobId};

use super::Solution;

/// Length of one time step in minutes.
const MINUTES_PER_STEP: f64 = 20.0 / 60.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    /// Median completion time in steps; `None` without completed deliveries.
    pub mct_steps: Option<f64>,
    pub mct_minutes: Option<f64>,
    /// Population standard deviation of the completion times.
    pub sigma_ct: Option<f64>,
    pub asu: f64,
    pub wall_time_s: f64,
}

/// `(job, t_unload - release)` for every unloaded job that brings new
/// material. `releases` overrides the instance release times.
pub fn completion_times(instance: &Instance, solution: &Solution, releases: &BTreeMap<JobId, usize>) -> Vec<(JobId, usize)> {
    instance
        .jobs()
        .iter()
        .filter(|j| j.brings_new_material)
        .filter_map(|j| {
            let u = solution.schedule.get(&j.id)?.t_unload?;
            let r = releases.get(&j.id).copied().unwrap_or(j.release_time);
            Some((j.id, u.saturating_sub(r)))
        })
        .collect()
}

pub fn kpis(instance: &Instance, solution: &Solution, releases: &BTreeMap<JobId, usize>, wall_time_s: f64) -> KpiReport {
    let mut ct: Vec<f64> = completion_times(instance, solution, releases).into_iter().map(|(_, c)| c as f64).collect();
    ct.sort_by(f64::total_cmp);
    let mct_steps = median(&ct);
    let sigma_ct = (!ct.is_empty()).then(|| {
        let mean = ct.iter().sum::<f64>() / ct.len() as f64;
        (ct.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / ct.len() as f64).sqrt()
    });
    KpiReport {
        mct_steps,
        mct_minutes: mct_steps.map(|m| m * MINUTES_PER_STEP),
        sigma_ct,
        asu: average_slot_usage(solution),
        wall_time_s,
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

/// Pallets on board summed over non-idle steps, divided by the number of
/// non-idle steps. A step is idle when the AGV stands still, carries nothing
/// and performs no action.
fn average_slot_usage(solution: &Solution) -> f64 {
    let mut pallet_steps = 0i64;
    let mut busy_steps = 0i64;
    for a in 0..solution.agv_count() {
        let onboard = solution.onboard_profile(a);
        let mut acts = vec![false; solution.horizon + 1];
        for (t, _, _) in solution.actions_of(a) {
            if t <= solution.horizon {
                acts[t] = true;
            }
        }
        for t in 0..=solution.horizon {
            let idle = solution.is_stationary(a, t) && onboard[t] == 0 && !acts[t];
            if !idle {
                busy_steps += 1;
                pallet_steps += onboard[t];
            }
        }
    }
    if busy_steps == 0 {
        0.0
    } else {
        pallet_steps as f64 / busy_steps as f64
    }
}

pub const KPI_HEADER: [&str; 7] = ["instance", "algorithm", "mct_steps", "mct_minutes", "sigma_ct", "asu", "wall_time_s"];

#[derive(Debug, Clone, PartialEq)]
pub struct KpiRow {
    pub instance: String,
    pub algorithm: String,
    pub report: KpiReport,
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl KpiRow {
    pub fn fields(&self) -> [String; 7] {
        let r = &self.report;
        [
            self.instance.clone(),
            self.algorithm.clone(),
            fixed(r.mct_steps),
            fixed(r.mct_minutes),
            fixed(r.sigma_ct),
            format!("{:.4}", r.asu),
            format!("{:.3}", r.wall_time_s),
        ]
    }
}

/// Writes a KPI table with a header row.
pub fn write_kpi_csv<W: Write>(out: W, rows: &[KpiRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KPI_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::{Agv, Job};
    use crate::solution::Assignment;

    fn ring_instance(jobs: Vec<Job>) -> Instance {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        Instance::new(g, vec![Agv { id: 0, capacity: 2, start_node: 0 }], jobs).unwrap()
    }

    #[test]
    fn slot_usage_arithmetic() {
        let sol = Solution {
            horizon: 7,
            routes: vec![vec![0, 1, 2, 3, 0, 1, 2, 3]],
            schedule: BTreeMap::new(),
        };
        // no pallets: 7 moving steps plus the idle final step
        assert_eq!(average_slot_usage(&sol), 0.0);
        let mut sol = Solution { horizon: 8, routes: vec![vec![0, 0, 0, 0, 0, 0, 1, 2, 3]], schedule: BTreeMap::new() };
        sol.schedule.insert(0, Assignment { agv: 0, t_load: Some(0), t_unload: Some(4) });
        sol.schedule.insert(1, Assignment { agv: 0, t_load: Some(0), t_unload: Some(4) });
        // onboard 2 at steps 0..=3, 0 at 4..=8; step 4 acts, steps 5..=7 move, step 8 idle
        // busy steps: 0..=7 → 8 steps, pallet steps 2·4 = 8
        assert_eq!(average_slot_usage(&sol), 1.0);
    }

    #[test]
    fn all_idle_has_zero_usage() {
        let inst = ring_instance(vec![]);
        assert_eq!(average_slot_usage(&Solution::parked(&inst, 5)), 0.0);
    }

    #[test]
    fn completion_time_and_units() {
        let inst = ring_instance(vec![Job::delivery(0, 0, 1, 0)]);
        let mut sol = Solution::parked(&inst, 36);
        sol.schedule.insert(0, Assignment::full(0, 0, 36));
        let k = kpis(&inst, &sol, &BTreeMap::new(), 0.0);
        assert_eq!(k.mct_steps, Some(36.0));
        assert_eq!(k.mct_minutes, Some(12.0));
        assert_eq!(k.sigma_ct, Some(0.0));
    }

    #[test]
    fn median_and_population_sigma() {
        let jobs = (0..4).map(|i| Job::delivery(i, 0, 1, 0)).collect();
        let inst = ring_instance(jobs);
        let mut sol = Solution::parked(&inst, 10);
        for (i, u) in [2usize, 4, 4, 10].iter().enumerate() {
            sol.schedule.insert(i, Assignment::full(0, 0, *u));
        }
        let k = kpis(&inst, &sol, &[(3, 2)].into(), 0.0);
        // completion times 2, 4, 4, 8 → median 4, mean 4.5, variance (6.25+0.25+0.25+12.25)/4
        assert_eq!(k.mct_steps, Some(4.0));
        assert!((k.sigma_ct.unwrap() - (19.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn no_deliveries_means_no_mct() {
        let inst = ring_instance(vec![Job::removal(0, 0, 1, 0)]);
        let k = kpis(&inst, &Solution::parked(&inst, 2), &BTreeMap::new(), 0.0);
        assert_eq!(k.mct_steps, None);
        let mut buf = Vec::new();
        write_kpi_csv(&mut buf, &[KpiRow { instance: "x".into(), algorithm: "loops".into(), report: k }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "instance,algorithm,mct_steps,mct_minutes,sigma_ct,asu,wall_time_s\nx,loops,,,,0.0000,0.000\n");
    }
}
