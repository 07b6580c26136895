//! Small feasibility programs over the belief simplex, solved with `microlp`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// Rows with a Euclidean norm below this are treated as `0 <= 0`.
const ZERO_ROW: f64 = 1e-14;

pub fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn lp_error(e: microlp::Error) -> Error {
    Error::Lp(e.to_string())
}

/// Largest `t` such that some belief `b` satisfies
/// `row·b + t‖row‖ <= 0` for every row and `b_s >= t` for every state.
///
/// Returns the slack and the belief attaining it.
pub fn max_min_slack(rows: &[Vec<f64>], dim: usize) -> Result<(f64, Vec<f64>)> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let b: Vec<_> = (0..dim).map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let t = p.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    p.add_constraint(b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for &v in &b {
        p.add_constraint(vec![(v, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    for row in rows {
        let norm = row_norm(row);
        if norm < ZERO_ROW {
            continue;
        }
        let mut expr: Vec<_> = b.iter().zip(row).map(|(&v, &c)| (v, c / norm)).collect();
        expr.push((t, 1.0));
        p.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    let outcome = p.solve().map_err(lp_error)?;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::Lp("slack program interrupted".into()))?;
    let point = b.iter().map(|&v| sol.var_value_raw(v)).collect();
    Ok((sol.var_value_raw(t), point))
}

/// `max objective·b` over `{b in simplex : row·b <= 0 for all rows}`;
/// `None` when that set is empty.
pub fn maximize_over_region(objective: &[f64], rows: &[&[f64]], dim: usize) -> Result<Option<f64>> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let b: Vec<_> = objective.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
    debug_assert_eq!(b.len(), dim);
    p.add_constraint(b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for row in rows {
        let norm = row_norm(row);
        if norm < ZERO_ROW {
            continue;
        }
        let expr: Vec<_> = b.iter().zip(row.iter()).map(|(&v, &c)| (v, c / norm)).collect();
        p.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    match p.solve() {
        Ok(outcome) => {
            let sol = outcome
                .into_solution()
                .map_err(|_| Error::Lp("region program interrupted".into()))?;
            Ok(Some(sol.objective()))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}
