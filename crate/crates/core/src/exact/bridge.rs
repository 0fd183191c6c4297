//! Conversion between plans and model variable assignments.

use std::collections::BTreeMap;

use crate::instance::Instance;
use crate::solution::{Assignment, Solution};

use super::model::{MipModel, Var};
use super::ExactError;

const TOLERANCE: f64 = 1e-6;

/// Model values describing `solution`, padded to the model horizon.
pub fn encode(model: &MipModel, instance: &Instance, solution: &Solution) -> Result<Vec<bool>, ExactError> {
    if solution.horizon > model.horizon {
        return Err(ExactError::HorizonTooShort { needed: solution.horizon, model: model.horizon });
    }
    let mut sol = solution.clone();
    sol.pad_to(model.horizon);
    let graph = instance.graph();
    let mut values = vec![false; model.vars.len()];
    let mut set = |v: Var| -> Result<(), ExactError> {
        let i = model.var(v).ok_or(ExactError::UnknownVariable(format!("{v:?}")))?;
        values[i] = true;
        Ok(())
    };
    for a in 0..sol.agv_count() {
        for t in 0..=model.horizon {
            let (v, w) = sol.edge_at(a, t);
            let edge = graph.edge_id(v, w).ok_or(ExactError::NotAnEdge { agv: a, time: t })?;
            set(Var::P { t, agv: a, edge })?;
        }
    }
    for (&job, asg) in &sol.schedule {
        if let Some(t) = asg.t_load {
            set(Var::L { t, agv: asg.agv, job })?;
        }
        if let Some(t) = asg.t_unload {
            set(Var::U { t, agv: asg.agv, job })?;
        }
    }
    Ok(values)
}

/// Encodes `solution` and checks every model row by substitution.
pub fn warm_start_from(model: &MipModel, instance: &Instance, solution: &Solution) -> Result<Vec<bool>, ExactError> {
    let values = encode(model, instance, solution)?;
    let violated = model.violated_rows(&values);
    if !violated.is_empty() {
        return Err(ExactError::WarmStartRejected(violated));
    }
    Ok(values)
}

/// Rebuilds a plan from named variable values. Missing names count as 0.
pub fn import_solution(model: &MipModel, values: &[(String, f64)]) -> Result<Solution, ExactError> {
    let mut on = vec![false; model.vars.len()];
    for (name, value) in values {
        let Some(i) = model.var_by_name(name) else { continue };
        if (value - 1.0).abs() <= TOLERANCE {
            on[i] = true;
        } else if value.abs() > TOLERANCE {
            return Err(ExactError::Fractional { name: name.clone(), value: *value });
        }
    }
    let h = model.horizon;
    let mut edge_of = vec![vec![None; h + 1]; model.agv_count];
    let mut schedule: BTreeMap<_, Assignment> = BTreeMap::new();
    for (i, var) in model.vars.iter().enumerate() {
        if !on[i] {
            continue;
        }
        match *var {
            Var::P { t, agv, edge } => {
                if edge_of[agv][t].replace(edge).is_some() {
                    return Err(ExactError::PositionCount { time: t, agv });
                }
            }
            Var::L { t, agv, job } | Var::U { t, agv, job } => {
                let is_load = matches!(var, Var::L { .. });
                let e = schedule.entry(job).or_insert(Assignment { agv, t_load: None, t_unload: None });
                if e.agv != agv {
                    return Err(ExactError::SplitJob(job));
                }
                let slot = if is_load { &mut e.t_load } else { &mut e.t_unload };
                if slot.replace(t).is_some() {
                    return Err(ExactError::RepeatedAction(job));
                }
            }
        }
    }
    let mut routes = Vec::with_capacity(model.agv_count);
    for (agv, edges) in edge_of.iter().enumerate() {
        let mut route = Vec::with_capacity(h + 1);
        for (t, e) in edges.iter().enumerate() {
            let e = e.ok_or(ExactError::PositionCount { time: t, agv })?;
            route.push(model.edges[e].0);
        }
        routes.push(route);
    }
    Ok(Solution { horizon: h, routes, schedule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::model::build_mip;
    use crate::graph::Graph;
    use crate::heuristics::{base_schedule, Assigner};
    use crate::instance::{make_pair, Agv, Job};

    fn inst() -> Instance {
        let g = Graph::new(4, 0, (0..4).map(|v| (v, (v + 1) % 4))).unwrap();
        let (r, d) = make_pair(2, 0, 0, 0).unwrap();
        let jobs = vec![r, d, Job::delivery(2, 0, 3, 0)];
        Instance::new(g, vec![Agv { id: 0, capacity: 2, start_node: 0 }], jobs).unwrap()
    }

    #[test]
    fn heuristic_plan_round_trips() {
        let inst = inst();
        let sol = base_schedule(&inst, None, Assigner::Loops).unwrap();
        let model = build_mip(&inst, sol.horizon + 2, None);
        let values = warm_start_from(&model, &inst, &sol).unwrap();
        assert_eq!(model.objective_value(&values) as usize, sol.objective(&inst).unwrap());
        let named: Vec<(String, f64)> =
            values.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (model.names[i].clone(), 1.0)).collect();
        let mut back = import_solution(&model, &named).unwrap();
        back.trim();
        let mut expect = sol.clone();
        expect.trim();
        assert_eq!(back, expect);
    }

    #[test]
    fn short_model_is_rejected() {
        let inst = inst();
        let sol = base_schedule(&inst, None, Assigner::Greedy).unwrap();
        let model = build_mip(&inst, sol.horizon - 1, None);
        assert!(matches!(encode(&model, &inst, &sol), Err(ExactError::HorizonTooShort { .. })));
    }

    #[test]
    fn infeasible_start_names_rows() {
        let inst = inst();
        let mut sol = base_schedule(&inst, None, Assigner::Greedy).unwrap();
        let model = build_mip(&inst, sol.horizon, None);
        sol.schedule.remove(&2);
        match warm_start_from(&model, &inst, &sol) {
            Err(ExactError::WarmStartRejected(rows)) => assert!(rows.iter().any(|r| r == "eq6_2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn import_rejects_bad_values() {
        let inst = inst();
        let model = build_mip(&inst, 2, None);
        let frac = vec![("P_0_0_0_0".to_string(), 0.5)];
        assert!(matches!(import_solution(&model, &frac), Err(ExactError::Fractional { .. })));
        let two = vec![("P_0_0_0_0".to_string(), 1.0), ("P_0_0_0_1".to_string(), 1.0)];
        assert!(matches!(import_solution(&model, &two), Err(ExactError::PositionCount { time: 0, agv: 0 })));
        let none: Vec<(String, f64)> = vec![];
        assert!(matches!(import_solution(&model, &none), Err(ExactError::PositionCount { time: 0, agv: 0 })));
    }
}
