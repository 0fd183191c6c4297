//! CPLEX LP text output and solver result parsing.

use std::fmt::Write as _;

use super::model::{MipModel, Sense};

const LINE_WIDTH: usize = 200;

fn push_terms(out: &mut String, model: &MipModel, terms: &[(usize, i64)]) {
    let mut line_len = 0usize;
    if terms.is_empty() {
        if model.names.is_empty() {
            return;
        }
        // LP readers reject empty expressions
        let piece = format!(" 0 {}", model.names[0]);
        out.push_str(&piece);
        return;
    }
    for (i, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0 { "-" } else if i == 0 { "" } else { "+" };
        let mag = c.unsigned_abs();
        let coef = if mag == 1 { String::new() } else { format!("{mag} ") };
        let piece = if sign.is_empty() { format!(" {coef}{}", model.names[v]) } else { format!(" {sign} {coef}{}", model.names[v]) };
        if line_len + piece.len() > LINE_WIDTH {
            out.push_str("\n  ");
            line_len = 0;
        }
        line_len += piece.len();
        out.push_str(&piece);
    }
}

/// Renders the model in CPLEX LP format.
pub fn write_lp(model: &MipModel) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    push_terms(&mut out, model, &model.objective);
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        push_terms(&mut out, model, &row.terms);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for name in &model.names {
        let _ = writeln!(out, " 0 <= {name} <= 1");
    }
    out.push_str("Binaries\n");
    for chunk in model.names.chunks(16) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
    out.push_str("End\n");
    out
}

/// Start values in the solution-file layout accepted by CBC's `-mipstart`.
pub fn write_start(model: &MipModel, values: &[bool]) -> String {
    let mut out = format!("Stopped on time - objective value {}\n", model.objective_value(values));
    for (i, name) in model.names.iter().enumerate() {
        let _ = writeln!(out, "{i:>7} {name} {} 0", u8::from(values[i]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Stopped early; values present means an incumbent exists.
    Stopped,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub values: Vec<(String, f64)>,
}

/// Parses a CBC solution file: a status line, then `index name value cost`
/// lines, some possibly prefixed by `**`.
pub fn parse_solution(text: &str) -> SolverOutput {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim();
    let lower = header.to_ascii_lowercase();
    let status = if lower.starts_with("optimal") {
        SolveStatus::Optimal
    } else if lower.contains("infeasible") {
        SolveStatus::Infeasible
    } else if lower.starts_with("stopped") {
        SolveStatus::Stopped
    } else {
        SolveStatus::Unknown
    };
    let objective = header.rsplit("objective value").next().filter(|_| header.contains("objective value")).and_then(|s| s.trim().parse().ok());
    let mut values = Vec::new();
    for line in lines {
        let line = line.trim().trim_start_matches("**").trim();
        let mut parts = line.split_whitespace();
        let (Some(_), Some(name), Some(value)) = (parts.next(), parts.next(), parts.next()) else { continue };
        if let Ok(v) = value.parse::<f64>() {
            values.push((name.to_string(), v));
        }
    }
    SolverOutput { status, objective, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::model::build_mip;
    use crate::graph::Graph;
    use crate::instance::{Agv, Instance, Job};

    fn small() -> MipModel {
        let g = Graph::new(3, 0, (0..3).map(|v| (v, (v + 1) % 3))).unwrap();
        let inst = Instance::new(g, vec![Agv { id: 0, capacity: 1, start_node: 0 }], vec![Job::delivery(0, 0, 1, 0)]).unwrap();
        build_mip(&inst, 3, None)
    }

    #[test]
    fn lp_sections_in_order() {
        let text = write_lp(&small());
        let pos: Vec<usize> = ["Minimize", "Subject To", "Bounds", "Binaries", "End"].iter().map(|s| text.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.lines().all(|l| l.len() <= LINE_WIDTH + 80));
    }

    #[test]
    fn negative_coefficients_render_with_minus() {
        let text = write_lp(&small());
        let eq8 = text.lines().find(|l| l.starts_with(" eq8_0_0_0:")).unwrap();
        assert_eq!(eq8, " eq8_0_0_0: L_0_0_0 - U_0_0_0 >= 0");
        let obj = text.lines().nth(1).unwrap();
        assert!(obj.starts_with(" obj: U_1_0_0 + 2 U_2_0_0"));
    }

    #[test]
    fn parses_cbc_output() {
        let text = "Optimal - objective value 1.00000000\n      0 x   1   1\n**    1 y   0.5   0\n";
        let out = parse_solution(text);
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.objective, Some(1.0));
        assert_eq!(out.values, vec![("x".into(), 1.0), ("y".into(), 0.5)]);
        assert_eq!(parse_solution("Infeasible - objective value 0\n").status, SolveStatus::Infeasible);
        let st = parse_solution("Stopped on time - objective value 7\n");
        assert_eq!(st.status, SolveStatus::Stopped);
        assert!(st.values.is_empty());
    }

    #[test]
    fn start_file_layout() {
        let m = small();
        let vals = vec![false; m.vars.len()];
        let text = write_start(&m, &vals);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "Stopped on time - objective value 0");
        assert_eq!(lines.next().unwrap().split_whitespace().collect::<Vec<_>>(), vec!["0", "P_0_0_0_0", "0", "0"]);
    }
}
