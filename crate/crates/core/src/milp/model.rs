//! Solver-independent MILP representation.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

/// What a variable stands for. Slice indices refer to the position of the
/// request within the batch the model was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarRole {
    /// Node `node` hosts at least one VNF instance of the slice in `slot`.
    NodeUsed { slice: usize, slot: u32, node: usize },
    /// Instances of `vnf` on `node`.
    Vnf { slice: usize, slot: u32, node: usize, vnf: usize },
    /// Newly deployed instances of `vnf` on `node` relative to the previous slot.
    Adapt { slice: usize, slot: u32, node: usize, vnf: usize },
    /// Instances of virtual link `vlink` on physical link `link`.
    Link { slice: usize, slot: u32, link: usize, vlink: usize },
}

impl VarRole {
    pub fn slice(&self) -> usize {
        match *self {
            VarRole::NodeUsed { slice, .. }
            | VarRole::Vnf { slice, .. }
            | VarRole::Adapt { slice, .. }
            | VarRole::Link { slice, .. } => slice,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDesc {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowFamily {
    /// Node-resource demand cover of one VNF.
    Cover,
    /// Bandwidth cover of one virtual link.
    LinkCover,
    /// Flow conservation of one virtual link at one node.
    Flow,
    /// Lower bound on newly deployed instances.
    Adaptation,
    /// Ties instance counts to the node-usage indicator.
    Linking,
    NodeCapacity,
    LinkCapacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: RowFamily,
    /// `(variable index, coefficient)`; each variable appears at most once.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violate the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimisation MILP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub vars: Vec<VarDesc>,
    pub rows: Vec<Row>,
}

/// Counts reported by [`MilpModel::stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelStats {
    pub vars: usize,
    pub integer_vars: usize,
    pub rows: usize,
    pub nonzeros: usize,
}

impl MilpModel {
    pub fn add_var(&mut self, desc: VarDesc) -> usize {
        self.vars.push(desc);
        self.vars.len() - 1
    }

    /// Adds a row, merging repeated variables and dropping zero coefficients.
    pub fn add_row(&mut self, name: String, family: RowFamily, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some(t) => t.1 += a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            name,
            family,
            terms: merged,
            sense,
            rhs,
        });
    }

    pub fn objective(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.obj * x).sum()
    }

    /// Rows violated by more than `tol`, plus bound and integrality breaches
    /// reported as pseudo-rows named after the variable.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            let off_bounds = (v.lb - x).max(x - v.ub).max(0.0);
            let frac = if v.kind == VarKind::Continuous {
                0.0
            } else {
                (x - x.round()).abs()
            };
            if off_bounds > tol || frac > tol {
                out.push((v.name.clone(), off_bounds.max(frac)));
            }
        }
        for r in &self.rows {
            let viol = r.violation(values);
            if viol > tol {
                out.push((r.name.clone(), viol));
            }
        }
        out
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            vars: self.vars.len(),
            integer_vars: self
                .vars
                .iter()
                .filter(|v| v.kind != VarKind::Continuous)
                .count(),
            rows: self.rows.len(),
            nonzeros: self.rows.iter().map(|r| r.terms.len()).sum(),
        }
    }
}
