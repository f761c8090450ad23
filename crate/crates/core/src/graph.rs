//! Fixed undirected networks, node covariates and exposure mappings.
//!
//! A [`Network`] is immutable once built. Neighbor lists are kept sorted so
//! every derived quantity (neighborhood covariates, exposures, designated
//! "best friend" sets) is reproducible bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};

/// Undirected simple graph with optional edge weights, cluster labels and
/// ranked friend lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    adjacency: Vec<Vec<usize>>,
    /// Parallel to `adjacency` when present.
    weights: Option<Vec<Vec<f64>>>,
    clusters: Option<Vec<usize>>,
    ranked: Option<Vec<Vec<usize>>>,
    num_edges: usize,
}

impl Network {
    /// Builds a canonical network from an edge list. Pairs may appear in
    /// either orientation and more than once; they are deduplicated.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        clusters: Option<Vec<usize>>,
    ) -> Result<Self> {
        let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        let mut net = Self::build(num_nodes, &weighted, clusters)?;
        net.weights = None;
        Ok(net)
    }

    /// Like [`Network::from_edges`] but keeps a nonnegative weight per edge.
    /// A pair listed twice must carry the same weight both times.
    pub fn from_weighted_edges(
        num_nodes: usize,
        edges: &[(usize, usize, f64)],
        clusters: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::build(num_nodes, edges, clusters)
    }

    fn build(
        num_nodes: usize,
        edges: &[(usize, usize, f64)],
        clusters: Option<Vec<usize>>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return input("network must have at least one node");
        }
        if let Some(c) = &clusters {
            if c.len() != num_nodes {
                return input(format!(
                    "cluster labels have length {} but the network has {} nodes",
                    c.len(),
                    num_nodes
                ));
            }
        }
        let mut canonical: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            if i >= num_nodes || j >= num_nodes {
                return input(format!("edge ({i},{j}) out of range for {num_nodes} nodes"));
            }
            if i == j {
                return input(format!("self-loop at node {i}"));
            }
            if !(w.is_finite() && w >= 0.0) {
                return input(format!("edge ({i},{j}) has invalid weight {w}"));
            }
            let key = (i.min(j), i.max(j));
            if let Some(prev) = canonical.insert(key, w) {
                if prev != w {
                    return input(format!("edge ({i},{j}) listed with conflicting weights"));
                }
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
        for (&(i, j), &w) in &canonical {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Network {
            adjacency: adj.iter().map(|l| l.iter().map(|&(j, _)| j).collect()).collect(),
            weights: Some(adj.iter().map(|l| l.iter().map(|&(_, w)| w).collect()).collect()),
            clusters,
            ranked: None,
            num_edges: canonical.len(),
        })
    }

    /// Attaches per-node ranked friend lists (best friend first). Every ranked
    /// node must be a neighbor and appear at most once.
    pub fn with_ranked_friends(mut self, ranked: Vec<Vec<usize>>) -> Result<Self> {
        if ranked.len() != self.num_nodes() {
            return input(format!(
                "ranked friend lists cover {} nodes, network has {}",
                ranked.len(),
                self.num_nodes()
            ));
        }
        for (i, list) in ranked.iter().enumerate() {
            let mut seen = list.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != list.len() {
                return input(format!("ranked friend list of node {i} repeats a node"));
            }
            if let Some(j) = list.iter().find(|&&j| !self.is_neighbor(i, j)) {
                return input(format!("node {j} ranked as a friend of {i} but not adjacent"));
            }
        }
        self.ranked = Some(ranked);
        Ok(self)
    }

    pub fn with_clusters(mut self, clusters: Vec<usize>) -> Result<Self> {
        if clusters.len() != self.num_nodes() {
            return input("cluster labels do not match node count");
        }
        self.clusters = Some(clusters);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Weights parallel to `neighbors(i)`, if the network is weighted.
    pub fn edge_weights(&self, i: usize) -> Option<&[f64]> {
        self.weights.as_ref().map(|w| w[i].as_slice())
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn clusters(&self) -> Option<&[usize]> {
        self.clusters.as_deref()
    }

    pub fn ranked_friends(&self, i: usize) -> Option<&[usize]> {
        self.ranked.as_ref().map(|r| r[i].as_slice())
    }

    pub fn has_ranked_friends(&self) -> bool {
        self.ranked.is_some()
    }

    /// Canonical edge list with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges);
        for (i, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// The first `k` neighbors of `i` under `rule`. Ranked lists shorter than
    /// `k` are topped up with the remaining neighbors in index order.
    pub fn designated(&self, i: usize, k: usize, rule: TieRule) -> Vec<usize> {
        let nbrs = self.neighbors(i);
        let k = k.min(nbrs.len());
        match (rule, self.ranked_friends(i)) {
            (TieRule::Ranked, Some(ranked)) => {
                let mut out: Vec<usize> = ranked.iter().copied().take(k).collect();
                if out.len() < k {
                    for &j in nbrs {
                        if out.len() == k {
                            break;
                        }
                        if !out.contains(&j) {
                            out.push(j);
                        }
                    }
                }
                out
            }
            _ => nbrs[..k].to_vec(),
        }
    }
}

/// Which kind of covariate a column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Individual,
    Neighborhood,
}

/// Summaries of neighbors' individual covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Mean,
    Sum,
    CountEqualToSelf,
    Degree,
}

impl Aggregator {
    /// Column name used for the derived neighborhood covariate.
    pub fn output_name(self, source: &str) -> String {
        match self {
            Aggregator::Mean => format!("friends.{source}"),
            Aggregator::Sum => format!("friends_sum.{source}"),
            Aggregator::CountEqualToSelf => format!("friends_same.{source}"),
            Aggregator::Degree => "degree".to_string(),
        }
    }
}

/// Provenance of a derived neighborhood column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub source: String,
    pub aggregator: Aggregator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
    /// Rows whose value was imputed rather than computed (isolated nodes).
    pub imputed: Vec<bool>,
    pub derived: Option<Derivation>,
}

/// Named real columns over the nodes of a network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovariateFrame {
    num_rows: usize,
    columns: Vec<Column>,
}

impl CovariateFrame {
    pub fn new(num_rows: usize) -> Self {
        CovariateFrame { num_rows, columns: Vec::new() }
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn add_individual(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.add_column(Column {
            name: name.to_string(),
            kind: ColumnKind::Individual,
            imputed: vec![false; values.len()],
            values,
            derived: None,
        })
    }

    pub fn add_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.num_rows {
            return input(format!(
                "column '{}' has {} rows, expected {}",
                column.name,
                column.values.len(),
                self.num_rows
            ));
        }
        if let Some(v) = column.values.iter().find(|v| !v.is_finite()) {
            return input(format!("column '{}' contains non-finite value {v}", column.name));
        }
        if self.column(&column.name).is_some() {
            return input(format!("duplicate column '{}'", column.name));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::Input(format!("unknown column '{name}'")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }
}

/// Returns `cov` extended with neighborhood columns built from individual
/// columns. Isolated nodes get the population mean for `Mean` (flagged as
/// imputed) and zero for the count-type aggregates.
pub fn neighborhood_covariates(
    net: &Network,
    cov: &CovariateFrame,
    aggregators: &[(&str, Aggregator)],
) -> Result<CovariateFrame> {
    let n = net.num_nodes();
    if cov.num_rows() != n {
        return input(format!(
            "covariate frame has {} rows, network has {} nodes",
            cov.num_rows(),
            n
        ));
    }
    let mut out = cov.clone();
    for &(source, agg) in aggregators {
        let col = cov
            .column(source)
            .ok_or_else(|| Error::Input(format!("unknown source column '{source}'")))?;
        if col.kind != ColumnKind::Individual && agg != Aggregator::Degree {
            return input(format!("source column '{source}' is not an individual covariate"));
        }
        let x = &col.values;
        let pop_mean = x.iter().sum::<f64>() / n as f64;
        let mut values = Vec::with_capacity(n);
        let mut imputed = vec![false; n];
        for i in 0..n {
            let nbrs = net.neighbors(i);
            let v = match agg {
                Aggregator::Degree => nbrs.len() as f64,
                Aggregator::Sum => nbrs.iter().map(|&j| x[j]).sum(),
                Aggregator::CountEqualToSelf => nbrs.iter().filter(|&&j| x[j] == x[i]).count() as f64,
                Aggregator::Mean if nbrs.is_empty() => {
                    imputed[i] = true;
                    pop_mean
                }
                Aggregator::Mean => nbrs.iter().map(|&j| x[j]).sum::<f64>() / nbrs.len() as f64,
            };
            values.push(v);
        }
        let name = agg.output_name(source);
        if out.column(&name).is_some() {
            continue;
        }
        out.add_column(Column {
            name,
            kind: ColumnKind::Neighborhood,
            values,
            imputed,
            derived: Some(Derivation { source: source.to_string(), aggregator: agg }),
        })?;
    }
    Ok(out)
}

/// How neighbors' treatments are summarized into the neighborhood treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExposureKind {
    /// Share treated among the first `k` designated friends.
    ProportionTopK { k: usize },
    CountAll,
    ProportionAll,
    WeightedSum,
}

impl ExposureKind {
    pub fn is_count(self) -> bool {
        matches!(self, ExposureKind::CountAll)
    }

    pub fn is_proportion(self) -> bool {
        matches!(self, ExposureKind::ProportionTopK { .. } | ExposureKind::ProportionAll)
    }

    /// Number of treated designated neighbors implied by exposure `g` with
    /// `trials` designated neighbors, or `None` when `g` is not attainable.
    pub fn successes(self, g: f64, trials: u32) -> Option<u32> {
        let s = match self {
            ExposureKind::CountAll => g,
            ExposureKind::ProportionTopK { .. } | ExposureKind::ProportionAll => {
                if trials == 0 {
                    if g.abs() <= 1e-9 {
                        return Some(0);
                    }
                    return None;
                }
                g * trials as f64
            }
            ExposureKind::WeightedSum => return None,
        };
        let r = s.round();
        if (s - r).abs() > 1e-9 || r < 0.0 || r > trials as f64 {
            return None;
        }
        Some(r as u32)
    }

    /// Exposure value for `successes` treated out of `trials`.
    pub fn value(self, successes: u32, trials: u32) -> f64 {
        match self {
            ExposureKind::CountAll | ExposureKind::WeightedSum => successes as f64,
            _ if trials == 0 => 0.0,
            _ => successes as f64 / trials as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Stored ranked friend list when present, ascending index otherwise.
    #[default]
    Ranked,
    /// Ascending node index, ignoring any ranked lists.
    Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolatedPolicy {
    #[default]
    Drop,
    TreatAsZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureSpec {
    pub kind: ExposureKind,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default)]
    pub isolated: IsolatedPolicy,
}

impl ExposureSpec {
    pub fn new(kind: ExposureKind) -> Self {
        ExposureSpec { kind, tie_rule: TieRule::default(), isolated: IsolatedPolicy::default() }
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(ExposureKind::ProportionTopK { k })
    }

    pub fn count_all() -> Self {
        Self::new(ExposureKind::CountAll)
    }

    pub fn with_isolated(mut self, policy: IsolatedPolicy) -> Self {
        self.isolated = policy;
        self
    }

    /// Number of designated neighbors of a node with the given degree.
    pub fn trials(&self, degree: usize) -> u32 {
        match self.kind {
            ExposureKind::ProportionTopK { k } => k.min(degree) as u32,
            _ => degree as u32,
        }
    }
}

/// Neighborhood treatment per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    /// Exposure value; 0 where undefined.
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
    /// Designated neighbors per node (the binomial trial count).
    pub trials: Vec<u32>,
}

/// Computes the neighborhood treatment of every node.
pub fn exposure(net: &Network, z: &[u8], spec: &ExposureSpec) -> Result<Exposure> {
    let n = net.num_nodes();
    if z.len() != n {
        return input(format!("treatment vector has length {}, expected {n}", z.len()));
    }
    if let Some(bad) = z.iter().find(|&&v| v > 1) {
        return input(format!("treatment values must be 0/1, found {bad}"));
    }
    if let ExposureKind::ProportionTopK { k } = spec.kind {
        if k == 0 {
            return config("proportion_top_k requires k >= 1");
        }
    }
    if spec.kind == ExposureKind::WeightedSum && !net.is_weighted() {
        return config("weighted_sum exposure requires edge weights");
    }
    let mut values = vec![0.0; n];
    let mut defined = vec![true; n];
    let mut trials = vec![0u32; n];
    for i in 0..n {
        let deg = net.degree(i);
        trials[i] = spec.trials(deg);
        if deg == 0 {
            defined[i] = spec.isolated == IsolatedPolicy::TreatAsZero;
            continue;
        }
        values[i] = match spec.kind {
            ExposureKind::ProportionTopK { k } => {
                let set = net.designated(i, k, spec.tie_rule);
                let treated = set.iter().filter(|&&j| z[j] == 1).count();
                treated as f64 / set.len() as f64
            }
            ExposureKind::CountAll => net.neighbors(i).iter().filter(|&&j| z[j] == 1).count() as f64,
            ExposureKind::ProportionAll => {
                net.neighbors(i).iter().filter(|&&j| z[j] == 1).count() as f64 / deg as f64
            }
            ExposureKind::WeightedSum => {
                let w = net.edge_weights(i).expect("checked above");
                net.neighbors(i)
                    .iter()
                    .zip(w)
                    .filter(|(&j, _)| z[j] == 1)
                    .map(|(_, &w)| w)
                    .sum()
            }
        };
    }
    Ok(Exposure { values, defined, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Network {
        Network::from_edges(3, &[(0, 1), (1, 2)], None).unwrap()
    }

    #[test]
    fn dedups_and_symmetrizes() {
        let net = Network::from_edges(3, &[(0, 1), (1, 0), (1, 2)], None).unwrap();
        assert_eq!(net.degrees(), vec![1, 2, 1]);
        assert_eq!(net.num_edges(), 2);
        assert_eq!(net.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn empty_edge_set() {
        let net = Network::from_edges(4, &[], None).unwrap();
        assert_eq!(net.degrees(), vec![0; 4]);
    }

    #[test]
    fn rejects_self_loop_and_range() {
        assert!(matches!(Network::from_edges(2, &[(0, 0)], None), Err(Error::Input(_))));
        assert!(matches!(Network::from_edges(2, &[(0, 2)], None), Err(Error::Input(_))));
    }

    #[test]
    fn neighbor_mean_on_line() {
        let net = line();
        let mut cov = CovariateFrame::new(3);
        cov.add_individual("race", vec![1.0, 0.0, 1.0]).unwrap();
        let out = neighborhood_covariates(&net, &cov, &[("race", Aggregator::Mean), ("race", Aggregator::Degree)])
            .unwrap();
        assert_eq!(out.values("friends.race").unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(out.values("degree").unwrap(), &[1.0, 2.0, 1.0]);
        assert_eq!(out.column("friends.race").unwrap().kind, ColumnKind::Neighborhood);
    }

    #[test]
    fn star_hub_mean() {
        let net = Network::from_edges(4, &[(0, 1), (0, 2), (0, 3)], None).unwrap();
        let mut cov = CovariateFrame::new(4);
        cov.add_individual("grade", vec![9.0, 7.0, 8.0, 10.0]).unwrap();
        let out = neighborhood_covariates(&net, &cov, &[("grade", Aggregator::Mean)]).unwrap();
        assert!((out.values("friends.grade").unwrap()[0] - 25.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_mean_is_imputed() {
        let net = Network::from_edges(3, &[(0, 1)], None).unwrap();
        let mut cov = CovariateFrame::new(3);
        cov.add_individual("x", vec![1.0, 2.0, 6.0]).unwrap();
        let out = neighborhood_covariates(
            &net,
            &cov,
            &[("x", Aggregator::Mean), ("x", Aggregator::Sum), ("x", Aggregator::CountEqualToSelf)],
        )
        .unwrap();
        let col = out.column("friends.x").unwrap();
        assert_eq!(col.values[2], 3.0);
        assert_eq!(col.imputed, vec![false, false, true]);
        assert_eq!(out.values("friends_sum.x").unwrap()[2], 0.0);
        assert_eq!(out.values("friends_same.x").unwrap()[2], 0.0);
    }

    #[test]
    fn unknown_source_column() {
        let net = line();
        let cov = CovariateFrame::new(3);
        assert!(neighborhood_covariates(&net, &cov, &[("nope", Aggregator::Mean)]).is_err());
    }

    #[test]
    fn count_and_proportion_on_line() {
        let net = line();
        let z = [1, 0, 1];
        let c = exposure(&net, &z, &ExposureSpec::count_all()).unwrap();
        assert_eq!(c.values, vec![0.0, 2.0, 0.0]);
        let p = exposure(&net, &z, &ExposureSpec::new(ExposureKind::ProportionAll)).unwrap();
        assert_eq!(p.values, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn top_k_uses_ranked_list() {
        // node 0 has 7 neighbors; its five best friends are 7,6,5,4,3 and
        // three of them (7,5,3) are treated.
        let edges: Vec<_> = (1..=7).map(|j| (0, j)).collect();
        let net = Network::from_edges(8, &edges, None).unwrap();
        let mut ranked = vec![Vec::new(); 8];
        ranked[0] = vec![7, 6, 5, 4, 3, 2, 1];
        let net = net.with_ranked_friends(ranked).unwrap();
        let mut z = vec![0u8; 8];
        for j in [7, 5, 3, 1] {
            z[j] = 1;
        }
        let e = exposure(&net, &z, &ExposureSpec::top_k(5)).unwrap();
        assert!((e.values[0] - 0.6).abs() < 1e-12);
        assert_eq!(e.trials[0], 5);
        // index order instead picks 1..=5 -> treated 1,3,5
        let mut spec = ExposureSpec::top_k(5);
        spec.tie_rule = TieRule::Index;
        let e = exposure(&net, &z, &spec).unwrap();
        assert!((e.values[0] - 0.6).abs() < 1e-12);
        z[2] = 1;
        let e = exposure(&net, &z, &spec).unwrap();
        assert!((e.values[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn isolated_policies() {
        let net = Network::from_edges(3, &[(0, 1)], None).unwrap();
        let z = [1, 1, 1];
        let drop = exposure(&net, &z, &ExposureSpec::top_k(5)).unwrap();
        assert_eq!(drop.defined, vec![true, true, false]);
        let zero = exposure(&net, &z, &ExposureSpec::top_k(5).with_isolated(IsolatedPolicy::TreatAsZero)).unwrap();
        assert_eq!(zero.defined, vec![true, true, true]);
        assert_eq!(zero.values[2], 0.0);
    }

    #[test]
    fn weighted_requires_weights() {
        let net = line();
        let r = exposure(&net, &[1, 1, 1], &ExposureSpec::new(ExposureKind::WeightedSum));
        assert!(matches!(r, Err(Error::Config(_))));
        let wnet = Network::from_weighted_edges(3, &[(0, 1, 0.5), (1, 2, 2.0)], None).unwrap();
        let e = exposure(&wnet, &[1, 0, 1], &ExposureSpec::new(ExposureKind::WeightedSum)).unwrap();
        assert_eq!(e.values, vec![0.0, 2.5, 0.0]);
    }

    #[test]
    fn successes_checks_attainability() {
        let k = ExposureKind::ProportionTopK { k: 5 };
        assert_eq!(k.successes(0.6, 5), Some(3));
        assert_eq!(k.successes(0.2, 3), None);
        assert_eq!(k.successes(1.0, 3), Some(3));
        assert_eq!(ExposureKind::CountAll.successes(4.0, 3), None);
        assert_eq!(ExposureKind::CountAll.successes(2.0, 3), Some(2));
    }
}
