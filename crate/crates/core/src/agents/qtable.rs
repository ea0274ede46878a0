use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense action-value table with visit counts; unvisited entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    state_bin: usize,
    action: usize,
    q: f64,
    visits: u64,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            visits: vec![0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.actions + action]
    }

    pub(crate) fn record_visit(&mut self, state: usize, action: usize) {
        self.visits[state * self.actions + action] += 1;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    /// Greedy action; ties go to the lowest index.
    pub fn argmax(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state)[self.argmax(state)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes every entry as `state_bin,action,q,visits`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in 0..self.states {
            for a in 0..self.actions {
                w.serialize(Row {
                    state_bin: s,
                    action: a,
                    q: self.get(s, a),
                    visits: self.visits(s, a),
                })?;
            }
        }
        w.flush().map_err(|e| Error::io("<q-table>", e))?;
        Ok(())
    }

    /// Reads a table written by [`QTable::write_csv`] and checks it has the
    /// expected dimensions.
    pub fn read_csv<R: Read>(reader: R, states: usize, actions: usize) -> Result<Self> {
        let mut table = QTable::new(states, actions);
        let mut seen = vec![false; states * actions];
        let mut r = csv::Reader::from_reader(reader);
        for row in r.deserialize() {
            let row: Row = row?;
            if row.state_bin >= states || row.action >= actions {
                return Err(Error::ArtifactMismatch(format!(
                    "entry ({}, {}) outside a {states}x{actions} table",
                    row.state_bin, row.action
                )));
            }
            if !row.q.is_finite() {
                return Err(Error::ArtifactMismatch(format!(
                    "non-finite q at ({}, {})",
                    row.state_bin, row.action
                )));
            }
            let idx = row.state_bin * actions + row.action;
            seen[idx] = true;
            table.values[idx] = row.q;
            table.visits[idx] = row.visits;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::ArtifactMismatch(format!(
                "table lacks entry ({}, {}) of a {states}x{actions} table",
                missing / actions,
                missing % actions
            )));
        }
        Ok(table)
    }
}
