//! Trajectory tables in CSV or JSON.
//!
//! Columns are `t, x1..xm, y1..yn, v1..vn, p1..pn, pbar1..pbarn, energy,
//! adm_residual`; constrained runs append `lambda1..lambdak` and
//! `constraint_residual`. CSV floats carry 17 significant digits so a table
//! read back reproduces every stored value bit for bit.

use serde::{Deserialize, Serialize};

use crate::algebroid::Chart;
use crate::dynamics::{
    constrained_pbar, pbar, ConstraintSet, DynamicsError, ExtState, MomState, Trajectory,
};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn columns(m: usize, n: usize, constraints: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for (prefix, k) in [("x", m), ("y", n), ("v", n), ("p", n), ("pbar", n)] {
        c.extend((1..=k).map(|i| format!("{prefix}{i}")));
    }
    c.push("energy".into());
    c.push("adm_residual".into());
    if constraints > 0 {
        c.extend((1..=constraints).map(|i| format!("lambda{i}")));
        c.push("constraint_residual".into());
    }
    c
}

pub fn unconstrained_table(
    chart: &Chart,
    lagrangian: &Expr,
    traj: &Trajectory<MomState>,
) -> Result<Table, DynamicsError> {
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.diagnostics)
        .map(|((&t, s), d)| {
            let mut row = vec![t];
            row.extend(&s.x);
            row.extend(&s.y);
            row.extend(&s.v);
            row.extend(&s.p);
            row.extend(pbar(chart, lagrangian, s)?);
            row.push(d.energy);
            row.push(d.adm_residual);
            Ok(row)
        })
        .collect::<Result<_, DynamicsError>>()?;
    Ok(Table {
        columns: columns(chart.base_dim(), chart.rank(), 0),
        rows,
    })
}

pub fn constrained_table(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    traj: &Trajectory<ExtState>,
) -> Result<Table, DynamicsError> {
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.diagnostics)
        .map(|((&t, s), d)| {
            let mut row = vec![t];
            row.extend(&s.x);
            row.extend(&s.y);
            row.extend(s.full_v(cons)?);
            row.extend(&s.p);
            row.extend(constrained_pbar(chart, lagrangian, cons, s)?);
            row.push(d.energy);
            row.push(d.adm_residual);
            row.extend(&s.lambda);
            row.push(d.constraint_residual);
            Ok(row)
        })
        .collect::<Result<_, DynamicsError>>()?;
    Ok(Table {
        columns: columns(chart.base_dim(), chart.rank(), cons.count()),
        rows,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("json: {0}")]
    Json(String),
    #[error("table has columns {found:?}, expected {expected:?}")]
    Columns {
        found: Vec<String>,
        expected: Vec<String>,
    },
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(TableError::Line {
                line: 1,
                message: "empty table".into(),
            });
        };
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TableError::Line {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if row.len() != columns.len() {
                return Err(TableError::Line {
                    line: i + 1,
                    message: format!("{} cells but {} columns", row.len(), columns.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn from_json(text: &str) -> Result<Self, TableError> {
        let t: Table = serde_json::from_str(text).map_err(|e| TableError::Json(e.to_string()))?;
        if let Some(r) = t.rows.iter().position(|r| r.len() != t.columns.len()) {
            return Err(TableError::Json(format!(
                "row {} has the wrong length",
                r + 1
            )));
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn block(&self, prefix: &str, k: usize) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (1..=k)
            .map(|i| {
                self.columns
                    .iter()
                    .position(|c| *c == format!("{prefix}{i}"))
                    .expect("checked columns")
            })
            .collect();
        self.rows
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect()
    }

    fn expect_columns(&self, expected: Vec<String>) -> Result<(), TableError> {
        if self.columns != expected {
            return Err(TableError::Columns {
                found: self.columns.clone(),
                expected,
            });
        }
        Ok(())
    }

    /// Times and states of an unconstrained table.
    pub fn mom_states(&self, m: usize, n: usize) -> Result<(Vec<f64>, Vec<MomState>), TableError> {
        self.expect_columns(columns(m, n, 0))?;
        let (x, y, v, p) = (
            self.block("x", m),
            self.block("y", n),
            self.block("v", n),
            self.block("p", n),
        );
        let states = (0..self.rows.len())
            .map(|k| MomState::new(x[k].clone(), y[k].clone(), v[k].clone(), p[k].clone()))
            .collect();
        Ok((self.column("t").unwrap_or_default(), states))
    }

    /// Times and states of a constrained table.
    pub fn ext_states(
        &self,
        m: usize,
        n: usize,
        cons: &ConstraintSet,
    ) -> Result<(Vec<f64>, Vec<ExtState>), TableError> {
        let na = cons.count();
        self.expect_columns(columns(m, n, na))?;
        let (x, y, v, p, l) = (
            self.block("x", m),
            self.block("y", n),
            self.block("v", n),
            self.block("p", n),
            self.block("lambda", na),
        );
        let states = (0..self.rows.len())
            .map(|k| ExtState {
                x: x[k].clone(),
                y: y[k].clone(),
                v_free: cons.free().iter().map(|&a| v[k][a]).collect(),
                p: p[k].clone(),
                lambda: l[k].clone(),
            })
            .collect();
        Ok((self.column("t").unwrap_or_default(), states))
    }
}
