//! Text formats for networks, covariates and result tables.
//!
//! * Edge list: one `i j` or `i,j` pair per line, 0-based, `#` comments.
//! * Covariates: delimited text (comma or tab) with a header row, one row
//!   per node in index order.
//! * Ranked friends: one `i: j1 j2 ... jk` line per node.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::estimators::{DoseResponseSurface, EffectReport};
use crate::graph::{CovariateFrame, Network};
use crate::propensity::BalanceRow;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_index(tok: &str, path: &Path, line: usize) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| Error::Input(format!("{}:{line}: '{tok}' is not a node index", path.display())))
}

/// Reads an edge list; returns the pairs and the largest index seen.
pub fn read_edge_list(path: &Path) -> Result<(Vec<(usize, usize)>, Option<usize>)> {
    let mut edges = Vec::new();
    let mut max = None;
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let body = strip_comment(&line);
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        if toks.len() != 2 {
            return input(format!("{}:{}: expected two node indices", path.display(), k + 1));
        }
        let i = parse_index(toks[0], path, k + 1)?;
        let j = parse_index(toks[1], path, k + 1)?;
        max = max.max(Some(i.max(j)));
        edges.push((i, j));
    }
    Ok((edges, max))
}

pub fn write_edge_list(net: &Network, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {} nodes, {} edges", net.num_nodes(), net.num_edges())?;
    for (i, j) in net.edges() {
        writeln!(w, "{i} {j}")?;
    }
    w.flush()?;
    Ok(())
}

fn delimiter(path: &Path) -> Result<u8> {
    let mut first = String::new();
    open(path)?.read_line(&mut first)?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

/// Reads a covariate table. Every column must be numeric; a column named
/// `cluster` is returned separately as integer labels.
pub fn read_covariates(path: &Path) -> Result<(CovariateFrame, Option<Vec<usize>>)> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter(path)?).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return input(format!("{}: missing header row", path.display()));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Input(format!("{}: row {}, column '{}': '{field}' is not numeric", path.display(), r + 2, headers[c]))
            })?;
            cols[c].push(v);
        }
    }
    let n = cols[0].len();
    let mut frame = CovariateFrame::new(n);
    let mut clusters = None;
    for (name, values) in headers.into_iter().zip(cols) {
        if name == "cluster" {
            if values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                return input("cluster labels must be nonnegative integers");
            }
            clusters = Some(values.iter().map(|&v| v as usize).collect());
        } else {
            frame.add_individual(&name, values)?;
        }
    }
    Ok((frame, clusters))
}

/// Writes `columns` (name, values) as a comma-separated table.
pub fn write_columns(columns: &[(String, Vec<f64>)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns.iter().map(|(n, _)| n.as_str()))?;
    let n = columns.first().map_or(0, |c| c.1.len());
    for r in 0..n {
        w.write_record(columns.iter().map(|(_, v)| v[r].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariates(frame: &CovariateFrame, clusters: Option<&[usize]>, path: &Path) -> Result<()> {
    let mut cols: Vec<(String, Vec<f64>)> =
        frame.columns().iter().map(|c| (c.name.clone(), c.values.clone())).collect();
    if let Some(cl) = clusters {
        cols.push(("cluster".into(), cl.iter().map(|&c| c as f64).collect()));
    }
    write_columns(&cols, path)
}

pub fn read_ranked_friends(path: &Path, n: usize) -> Result<Vec<Vec<usize>>> {
    let mut ranked = vec![Vec::new(); n];
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let body = strip_comment(&line);
        if body.is_empty() {
            continue;
        }
        let Some((head, tail)) = body.split_once(':') else {
            return input(format!("{}:{}: expected 'i: j1 j2 ...'", path.display(), k + 1));
        };
        let i = parse_index(head, path, k + 1)?;
        if i >= n {
            return input(format!("{}:{}: node {i} out of range", path.display(), k + 1));
        }
        ranked[i] = tail.split_whitespace().map(|t| parse_index(t, path, k + 1)).collect::<Result<_>>()?;
    }
    Ok(ranked)
}

pub fn write_ranked_friends(net: &Network, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for i in 0..net.num_nodes() {
        let list = net.ranked_friends(i).unwrap_or(net.neighbors(i));
        let tail: Vec<String> = list.iter().map(usize::to_string).collect();
        writeln!(w, "{i}: {}", tail.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a network from an edge list, a covariate table (which fixes the
/// node count) and an optional ranked-friends file.
pub fn load_network(edges: &Path, covariates: &Path, ranked: Option<&Path>) -> Result<(Network, CovariateFrame)> {
    let (pairs, max) = read_edge_list(edges)?;
    let (frame, clusters) = read_covariates(covariates)?;
    let n = frame.num_rows();
    if let Some(m) = max {
        if m >= n {
            return input(format!("edge list mentions node {m} but the covariate table has {n} rows"));
        }
    }
    let mut net = Network::from_edges(n, &pairs, clusters)?;
    if let Some(r) = ranked {
        net = net.with_ranked_friends(read_ranked_friends(r, n)?)?;
    }
    Ok((net, frame))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per `(z, g)`: μ̂, P̂(G = g), τ̂(g), δ̂(g; z) and μ̂_j per
/// subclass.
pub fn write_surface_table(surface: &DoseResponseSurface, report: &EffectReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["z", "g", "mu", "g_mass", "tau_g", "delta_g"].map(String::from).to_vec();
    header.extend((0..surface.subclasses.len()).map(|j| format!("mu_{}", j + 1)));
    w.write_record(&header)?;
    for z in 0..2 {
        for (k, g) in surface.g_grid.iter().enumerate() {
            let mut row = vec![
                z.to_string(),
                g.to_string(),
                opt(surface.mu[z][k]),
                report.g_mass[k].to_string(),
                opt(report.tau_g[k]),
                opt(report.delta_g[z][k]),
            ];
            row.extend(surface.subclasses.iter().map(|c| opt(c.mu[z][k])));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub scenario: u8,
    pub interference: String,
    pub adjustment_set: String,
    pub analytic_bias: f64,
    pub uncovered_mass: f64,
}

pub fn write_bias_table(rows: &[BiasRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

/// Balance rows as `variable, stratum, n_treated, n_control, mean_treated,
/// mean_control, std_diff`.
pub fn write_balance_table(rows: &[BalanceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "stratum", "n_treated", "n_control", "mean_treated", "mean_control", "std_diff"])?;
    for r in rows {
        w.write_record([
            r.column.clone(),
            r.stratum.map_or_else(|| "pooled".to_string(), |s| s.to_string()),
            r.n_treated.to_string(),
            r.n_control.to_string(),
            opt(r.mean_treated),
            opt(r.mean_control),
            opt(r.std_diff),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any serializable rows as a CSV table with a header.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::from_edges(4, &[(0, 1), (1, 2), (3, 2)], Some(vec![0, 0, 1, 1]))
            .unwrap()
            .with_ranked_friends(vec![vec![1], vec![2, 0], vec![1, 3], vec![2]])
            .unwrap();
        let mut cov = CovariateFrame::new(4);
        cov.add_individual("x", vec![1.0, 2.5, -3.0, 0.0]).unwrap();
        let (e, c, r) = (dir.path().join("e.txt"), dir.path().join("c.csv"), dir.path().join("r.txt"));
        write_edge_list(&net, &e).unwrap();
        write_covariates(&cov, net.clusters(), &c).unwrap();
        write_ranked_friends(&net, &r).unwrap();
        let (net2, cov2) = load_network(&e, &c, Some(&r)).unwrap();
        assert_eq!(net2.edges(), net.edges());
        assert_eq!(net2.clusters(), net.clusters());
        assert_eq!(net2.ranked_friends(1), Some(&[2, 0][..]));
        assert_eq!(cov2.values("x").unwrap(), cov.values("x").unwrap());
    }

    #[test]
    fn comments_and_commas() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "# header\n0,1\n\n2 3 # trailing\n").unwrap();
        let (edges, max) = read_edge_list(&p).unwrap();
        assert_eq!(edges, vec![(0, 1), (2, 3)]);
        assert_eq!(max, Some(3));
        std::fs::write(&p, "0 x\n").unwrap();
        assert!(matches!(read_edge_list(&p), Err(Error::Input(_))));
    }
}
