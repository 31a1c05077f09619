use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// One observation: a count, its maximum, and the covariate values in
/// dataset column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub y: u64,
    pub m: u64,
    pub covariates: Vec<f64>,
}

/// A categorical covariate expanded into reference-coded indicator columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub reference: String,
    /// Non-reference levels in sorted order, one indicator column each.
    pub levels: Vec<String>,
}

impl Factor {
    pub fn column_name(&self, level: &str) -> String {
        format!("{}:{}", self.name, level)
    }
}

/// Bounded-count observations with a shared covariate schema. `m` may vary
/// from row to row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<String>,
    factors: Vec<Factor>,
    rows: Vec<Row>,
    /// Indices of rows whose response was overwritten by `contaminate`.
    replaced: Vec<usize>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Row>) -> Result<Self> {
        for (i, name) in columns.iter().enumerate() {
            if columns[..i].contains(name) {
                return Err(Error::Schema(format!("duplicate column name {name:?}")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.m == 0 {
                return Err(domain(format!("row {i}: m must be >= 1")));
            }
            if row.y > row.m {
                return Err(domain(format!("row {i}: y = {} exceeds m = {}", row.y, row.m)));
            }
            if row.covariates.len() != columns.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} covariates, schema has {}",
                    row.covariates.len(),
                    columns.len()
                )));
            }
            if let Some(j) = row.covariates.iter().position(|v| !v.is_finite()) {
                return Err(domain(format!("row {i}: covariate {:?} is not finite", columns[j])));
            }
        }
        Ok(Self { columns, factors: Vec::new(), rows, replaced: Vec::new() })
    }

    /// Registers a factor whose indicator columns already exist.
    pub fn with_factor(mut self, factor: Factor) -> Result<Self> {
        for level in &factor.levels {
            let col = factor.column_name(level);
            if self.column_index(&col).is_none() {
                return Err(Error::Schema(format!("factor column {col:?} missing")));
            }
        }
        self.factors.push(factor);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn replaced(&self) -> &[usize] {
        &self.replaced
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Resolves a model term to design columns: a factor name expands to its
    /// indicator columns, anything else must be a column.
    pub fn resolve_term(&self, term: &str) -> Result<Vec<usize>> {
        if let Some(f) = self.factors.iter().find(|f| f.name == term) {
            return f
                .levels
                .iter()
                .map(|l| {
                    let col = f.column_name(l);
                    self.column_index(&col).ok_or_else(|| Error::Schema(format!("factor column {col:?} missing")))
                })
                .collect();
        }
        self.column_index(term).map(|j| vec![j]).ok_or_else(|| Error::Schema(format!("unknown covariate {term:?}")))
    }

    /// Copy with the rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            factors: self.factors.clone(),
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            replaced: Vec::new(),
        }
    }

    pub(crate) fn replace_responses(&mut self, replacements: Vec<(usize, u64)>) {
        for (i, y) in replacements {
            self.rows[i].y = y;
            self.replaced.push(i);
        }
        self.replaced.sort_unstable();
    }
}
