//! CPLEX-LP export and an adapter for command-line MILP solvers that read
//! LP files and write CBC-style solution files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use crate::milp::model::{MilpModel, Sense, VarKind};
use crate::milp::solver::{finish_values, presolve, MilpSolution, MilpSolver, Presolved, SolveOptions, SolveStatus, SolverError};

/// Environment variable naming the solver binary.
pub const SOLVER_ENV: &str = "NETSLICE_MILP_SOLVER";

const LINE_WIDTH: usize = 120;

fn push_term(out: &mut String, line_len: &mut usize, coef: f64, name: &str, first: bool) {
    let sign = if coef < 0.0 { "-" } else { "+" };
    let term = if first && coef >= 0.0 {
        format!(" {} {}", coef, name)
    } else {
        format!(" {} {} {}", sign, coef.abs(), name)
    };
    if *line_len + term.len() > LINE_WIDTH {
        out.push_str("\n ");
        *line_len = 1;
    }
    *line_len += term.len();
    out.push_str(&term);
}

/// Writes the model in LP format. Rows without terms are omitted; callers
/// check them for constant infeasibility first.
pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::from("\\ reservation model\nMinimize\n obj:");
    let mut len = 5;
    for (j, v) in model.vars.iter().enumerate() {
        push_term(&mut out, &mut len, v.obj, &v.name, j == 0);
    }
    out.push_str("\nSubject To\n");
    for r in &model.rows {
        if r.terms.is_empty() {
            continue;
        }
        let _ = write!(out, " {}:", r.name);
        let mut len = r.name.len() + 2;
        for (k, &(j, a)) in r.terms.iter().enumerate() {
            push_term(&mut out, &mut len, a, &model.vars[j].name, k == 0);
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", r.rhs);
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        if v.kind == VarKind::Binary {
            continue;
        }
        if v.ub.is_finite() {
            let _ = writeln!(out, " {} <= {} <= {}", v.lb, v.name, v.ub);
        } else {
            let _ = writeln!(out, " {} >= {}", v.name, v.lb);
        }
    }
    for (section, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
        let names: Vec<&str> = model
            .vars
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.as_str())
            .collect();
        if names.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{section}");
        for chunk in names.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

/// Parsed CBC solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Non-zero values by variable name.
    pub values: HashMap<String, f64>,
}

/// Parses the `solu` output of CBC.
pub fn parse_cbc_solution(text: &str) -> Result<ParsedSolution, SolverError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SolverError::External("empty solution file".into()))?
        .trim();
    let lower = header.to_ascii_lowercase();
    let objective = lower
        .find("objective value")
        .and_then(|p| header[p + "objective value".len()..].split_whitespace().next())
        .and_then(|s| s.parse::<f64>().ok());
    let status = if lower.starts_with("optimal") {
        SolveStatus::Optimal
    } else if lower.contains("infeasible") {
        SolveStatus::Infeasible
    } else if lower.contains("unbounded") {
        return Err(SolverError::Unbounded);
    } else if lower.starts_with("stopped") {
        SolveStatus::Timeout
    } else {
        return Err(SolverError::External(format!("unrecognised status line `{header}`")));
    };
    let has_values = status == SolveStatus::Optimal
        || (status == SolveStatus::Timeout && objective.is_some() && !lower.contains("no integer solution"));
    let mut values = HashMap::new();
    if has_values {
        for line in lines {
            let mut toks: Vec<&str> = line.split_whitespace().collect();
            if toks.first() == Some(&"**") {
                toks.remove(0);
            }
            if toks.len() < 3 {
                continue;
            }
            let value: f64 = toks[2]
                .parse()
                .map_err(|_| SolverError::External(format!("bad value in line `{line}`")))?;
            values.insert(toks[1].to_string(), value);
        }
    }
    Ok(ParsedSolution {
        status,
        objective: if has_values { objective } else { None },
        values,
    })
}

/// Runs an external CBC-compatible binary on an exported LP file.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub binary: PathBuf,
}

impl ExternalSolver {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        ExternalSolver { binary: binary.into() }
    }

    /// Uses the binary named by the `NETSLICE_MILP_SOLVER` environment variable.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(SOLVER_ENV)
            .filter(|v| !v.is_empty())
            .map(|v| Self::new(PathBuf::from(v)))
    }

    fn run(&self, dir: &Path, lp: &str, opts: &SolveOptions) -> Result<String, SolverError> {
        let io = |e: std::io::Error| SolverError::External(e.to_string());
        let model_path = dir.join("model.lp");
        let sol_path = dir.join("solution.txt");
        std::fs::write(&model_path, lp).map_err(io)?;
        let mut cmd = Command::new(&self.binary);
        cmd.arg(&model_path);
        if let Some(t) = opts.time_limit {
            cmd.arg("sec").arg(format!("{}", t.as_secs_f64().max(0.01)));
        }
        if let Some(n) = opts.node_limit {
            cmd.arg("maxNodes").arg(n.to_string());
        }
        if opts.mip_gap > 0.0 {
            cmd.arg("ratio").arg(opts.mip_gap.to_string());
        }
        cmd.arg("solve").arg("solu").arg(&sol_path);
        let output = cmd
            .output()
            .map_err(|e| SolverError::External(format!("cannot run {}: {e}", self.binary.display())))?;
        if !output.status.success() {
            return Err(SolverError::External(format!(
                "{} exited with {}: {}",
                self.binary.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        std::fs::read_to_string(&sol_path).map_err(|e| {
            SolverError::External(format!("no solution file from {}: {e}", self.binary.display()))
        })
    }
}

impl MilpSolver for ExternalSolver {
    fn name(&self) -> &'static str {
        "external"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, SolverError> {
        let start = Instant::now();
        if let Presolved::Infeasible = presolve(model) {
            return Ok(MilpSolution::infeasible(start.elapsed()));
        }
        let dir = tempfile::tempdir().map_err(|e| SolverError::External(e.to_string()))?;
        let text = self.run(dir.path(), &write_lp(model), opts)?;
        let parsed = parse_cbc_solution(&text)?;
        let index: HashMap<&str, usize> = model
            .vars
            .iter()
            .enumerate()
            .map(|(j, v)| (v.name.as_str(), j))
            .collect();
        let (values, objective) = if parsed.objective.is_some() {
            let mut raw = vec![0.0; model.vars.len()];
            for (name, v) in &parsed.values {
                let j = *index
                    .get(name.as_str())
                    .ok_or_else(|| SolverError::External(format!("unknown variable `{name}` in solution")))?;
                raw[j] = *v;
            }
            let (vals, obj) = finish_values(model, raw)?;
            (Some(vals), Some(obj))
        } else {
            (None, None)
        };
        Ok(MilpSolution {
            status: parsed.status,
            values,
            objective,
            bound: None,
            nodes: 0,
            elapsed: start.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{RowFamily, VarDesc, VarRole};

    fn model() -> MilpModel {
        let mut m = MilpModel::default();
        for (name, kind) in [("k_a", VarKind::Integer), ("kt_b", VarKind::Binary)] {
            m.add_var(VarDesc {
                name: name.into(),
                kind,
                lb: 0.0,
                ub: if kind == VarKind::Binary { 1.0 } else { 4.0 },
                obj: 1.5,
                role: VarRole::NodeUsed { slice: 0, slot: 0, node: 0 },
            });
        }
        m.add_row("cover_c".into(), RowFamily::Cover, vec![(0, 0.5)], Sense::Ge, 1.0);
        m.add_row("link".into(), RowFamily::Linking, vec![(1, 4.0), (0, -1.0)], Sense::Ge, 0.0);
        m
    }

    #[test]
    fn lp_layout() {
        let lp = write_lp(&model());
        let expected = "\\ reservation model\nMinimize\n obj: 1.5 k_a + 1.5 kt_b\nSubject To\n \
                        cover_c: 0.5 k_a >= 1\n link: 4 kt_b - 1 k_a >= 0\nBounds\n 0 <= k_a <= 4\n\
                        Generals\n k_a\nBinaries\n kt_b\nEnd\n";
        assert_eq!(lp, expected);
    }

    #[test]
    fn long_rows_wrap() {
        let mut m = MilpModel::default();
        let terms: Vec<_> = (0..60)
            .map(|j| {
                m.add_var(VarDesc {
                    name: format!("k_s1_l2_n{j}_v0"),
                    kind: VarKind::Integer,
                    lb: 0.0,
                    ub: 3.0,
                    obj: 1.0,
                    role: VarRole::NodeUsed { slice: 0, slot: 0, node: 0 },
                });
                (j, 0.29)
            })
            .collect();
        m.add_row("cover_c_s1_l2_v0".into(), RowFamily::Cover, terms, Sense::Ge, 3.0);
        let lp = write_lp(&m);
        assert!(lp.lines().all(|l| l.len() <= LINE_WIDTH + 40));
    }

    #[test]
    fn parses_optimal() {
        let text = "Optimal - objective value 7.50000000\n      0 k_a                    2                       1.5\n      1 kt_b                   1                       1.5\n";
        let p = parse_cbc_solution(text).unwrap();
        assert_eq!(p.status, SolveStatus::Optimal);
        assert_eq!(p.objective, Some(7.5));
        assert_eq!(p.values["k_a"], 2.0);
    }

    #[test]
    fn parses_infeasible_and_timeouts() {
        let p = parse_cbc_solution("Infeasible - objective value 0.00000000\n").unwrap();
        assert_eq!(p.status, SolveStatus::Infeasible);
        assert!(p.objective.is_none());
        let p = parse_cbc_solution("Stopped on time - objective value 9.00000000\n      0 k_a   3   0\n").unwrap();
        assert_eq!(p.status, SolveStatus::Timeout);
        assert_eq!(p.values["k_a"], 3.0);
        let p = parse_cbc_solution(
            "Stopped on time (no integer solution - continuous used) - objective value 2.0\n 0 k_a 1.3 0\n",
        )
        .unwrap();
        assert_eq!(p.status, SolveStatus::Timeout);
        assert!(p.objective.is_none() && p.values.is_empty());
        assert!(parse_cbc_solution("garbage").is_err());
        assert_eq!(parse_cbc_solution("Unbounded"), Err(SolverError::Unbounded));
    }

    #[test]
    fn missing_binary_is_error() {
        let s = ExternalSolver::new("/nonexistent/solver-binary");
        let err = s.solve(&model(), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::External(_)));
    }
}
