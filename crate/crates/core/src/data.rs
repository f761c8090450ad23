//! Unit-level analysis table: one row per node with a defined exposure.
//!
//! Neighborhood quantities are computed once on the network and then carried
//! as plain row attributes, so resampling rows never touches the graph.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::graph::{exposure, CovariateFrame, ExposureKind, ExposureSpec, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitData {
    /// Node index in the originating network.
    pub node: Vec<usize>,
    pub y: Vec<f64>,
    pub z: Vec<u8>,
    pub g: Vec<f64>,
    /// Designated neighbors per row (binomial trials of the exposure).
    pub trials: Vec<u32>,
    pub cluster: Option<Vec<usize>>,
    pub exposure: ExposureKind,
    columns: Vec<(String, Vec<f64>)>,
}

impl UnitData {
    /// Validated constructor from raw vectors.
    pub fn new(
        y: Vec<f64>,
        z: Vec<u8>,
        g: Vec<f64>,
        trials: Vec<u32>,
        exposure: ExposureKind,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let n = y.len();
        if z.len() != n || g.len() != n || trials.len() != n {
            return input("y, z, g and trials must have equal length");
        }
        if z.iter().any(|&v| v > 1) {
            return input("treatment must be 0/1");
        }
        if y.iter().chain(&g).any(|v| !v.is_finite()) {
            return input("outcome and exposure must be finite");
        }
        let mut data = UnitData {
            node: (0..n).collect(),
            y,
            z,
            g,
            trials,
            cluster: None,
            exposure,
            columns: Vec::new(),
        };
        for (name, values) in columns {
            data.add_column(&name, values)?;
        }
        Ok(data)
    }

    /// Builds the table from a network, its covariates (including any derived
    /// neighborhood columns), a treatment vector and outcomes. Rows with an
    /// undefined exposure are dropped.
    pub fn from_network(
        net: &Network,
        cov: &CovariateFrame,
        z: &[u8],
        y: &[f64],
        spec: &ExposureSpec,
    ) -> Result<Self> {
        let n = net.num_nodes();
        if y.len() != n || cov.num_rows() != n {
            return input("network, covariates and outcome disagree on the number of nodes");
        }
        let e = exposure(net, z, spec)?;
        let keep: Vec<usize> = (0..n).filter(|&i| e.defined[i]).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let columns = cov.columns().iter().map(|c| (c.name.clone(), pick(&c.values))).collect();
        let mut data = UnitData::new(
            pick(y),
            keep.iter().map(|&i| z[i]).collect(),
            pick(&e.values),
            keep.iter().map(|&i| e.trials[i]).collect(),
            spec.kind,
            columns,
        )?;
        data.node = keep.clone();
        data.cluster = net.clusters().map(|c| keep.iter().map(|&i| c[i]).collect());
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn add_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return input(format!("column '{name}' has {} rows, expected {}", values.len(), self.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return input(format!("column '{name}' has non-finite entries"));
        }
        if let Some(slot) = self.columns.iter_mut().find(|(n, _)| n == name) {
            slot.1 = values;
        } else {
            self.columns.push((name.to_string(), values));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        match name {
            "y" => Ok(&self.y),
            "g" => Ok(&self.g),
            _ => self
                .columns
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.as_slice())
                .ok_or_else(|| Error::Input(format!("unknown column '{name}'"))),
        }
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(|&v| v as f64).collect()
    }

    /// Named covariate columns in the requested order.
    pub fn covariates(&self, names: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
        names.iter().map(|n| Ok((n.clone(), self.column(n)?.to_vec()))).collect()
    }

    /// New table with the given rows (repeats allowed, order kept).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        UnitData {
            node: rows.iter().map(|&i| self.node[i]).collect(),
            y: pick(&self.y),
            z: rows.iter().map(|&i| self.z[i]).collect(),
            g: pick(&self.g),
            trials: rows.iter().map(|&i| self.trials[i]).collect(),
            cluster: self.cluster.as_ref().map(|c| rows.iter().map(|&i| c[i]).collect()),
            exposure: self.exposure,
            columns: self.columns.iter().map(|(n, v)| (n.clone(), pick(v))).collect(),
        }
    }

    /// Same table with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return input("outcome length mismatch");
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    /// Number of treated neighbors implied by each row's exposure.
    pub fn successes(&self) -> Result<Vec<u32>> {
        (0..self.len())
            .map(|i| {
                self.exposure.successes(self.g[i], self.trials[i]).ok_or_else(|| {
                    Error::Input(format!(
                        "row {i}: exposure {} is not a whole number of treated out of {} designated neighbors",
                        self.g[i], self.trials[i]
                    ))
                })
            })
            .collect()
    }

    /// Whether exposure level `g` is attainable for row `i`.
    pub fn admissible(&self, i: usize, g: f64) -> bool {
        self.exposure.successes(g, self.trials[i]).is_some()
    }
}
