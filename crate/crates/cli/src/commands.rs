use std::path::{Path, PathBuf};

use serde::Serialize;

use netference::bias::{bias_interference, bias_unmeasured, BiasSpec};
use netference::estimators::{
    estimate_gps_only, estimate_subclass_gps, EffectReport, EstimatorSpec, GMass, GpsConfig, NaiveVariant, OutcomeModel,
};
use netference::graph::{neighborhood_covariates, Aggregator, ColumnKind, CovariateFrame, ExposureKind, ExposureSpec};
use netference::inference::{bootstrap_estimator, monte_carlo, BootstrapResult, McSummary, Scheme};
use netference::io;
use netference::propensity::{balance_table, fit_individual_ps, joint_ps, joint_treatment_balance, subclassify};
use netference::simgen::{
    gen_network, names, partial_correlation_zg, simulate, Draw, Interference, NetworkConfig, OutcomeKind, Population,
    ScenarioSpec, X_IND, X_Z,
};
use netference::{Error, Result, UnitData};

use crate::config::{Floats, List, Settings};
use crate::{BalanceArgs, BiasArgs, DataArgs, EstimateArgs, EstimatorArgs, PopulationArgs, ReplicateArgs, SimulateArgs};

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub fn parse_interference(s: &str) -> Result<Interference> {
    Interference::ALL
        .into_iter()
        .find(|l| l.name() == s)
        .map_or_else(|| cfg_err(format!("interference must be low, medium or high, got '{s}'")), Ok)
}

fn parse_model(s: &str) -> Result<OutcomeKind> {
    match s {
        "model1" | "1" => Ok(OutcomeKind::Model1),
        "model2" | "2" => Ok(OutcomeKind::Model2),
        _ => cfg_err(format!("model must be model1 or model2, got '{s}'")),
    }
}

pub fn parse_exposure(s: &str) -> Result<ExposureKind> {
    match s.split_once(':') {
        Some(("top_k", k)) => match k.parse() {
            Ok(k) if k > 0 => Ok(ExposureKind::ProportionTopK { k }),
            _ => cfg_err(format!("exposure: invalid k in '{s}'")),
        },
        None if s == "count_all" => Ok(ExposureKind::CountAll),
        None if s == "proportion_all" => Ok(ExposureKind::ProportionAll),
        None if s == "weighted_sum" => Ok(ExposureKind::WeightedSum),
        _ => cfg_err(format!("exposure must be top_k:<k>, count_all, proportion_all or weighted_sum, got '{s}'")),
    }
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "unit" => Ok(Scheme::Unit),
        "cluster" => Ok(Scheme::Cluster),
        _ => cfg_err(format!("scheme must be unit or cluster, got '{s}'")),
    }
}

fn out_dir(s: &mut Settings, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = PathBuf::from(s.value("out", flag.as_ref().map(|p| p.display().to_string()), "out".to_string())?);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a std::collections::BTreeMap<String, String>,
    non_converged: bool,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, s: &Settings, non_converged: bool, outputs: &[&str]) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: s.resolved(),
        non_converged,
        outputs: outputs.iter().map(|o| o.to_string()).collect(),
    };
    io::write_json(&m, &dir.join("manifest.json"))
}

// ------------------------------------------------------------ population

fn network_config(s: &mut Settings, p: &PopulationArgs) -> Result<NetworkConfig> {
    let d = NetworkConfig::default();
    let cfg = NetworkConfig {
        n: s.value("n", p.n, d.n)?,
        clusters: s.value("clusters", p.clusters, d.clusters)?,
        degree_target: s.value("degree_target", p.degree_target, d.degree_target)?,
        grade_weight: s.value("grade_weight", p.grade_weight, d.grade_weight)?,
        race_weight: s.value("race_weight", p.race_weight, d.race_weight)?,
        seed: s.value("network_seed", p.network_seed, d.seed)?,
        ..d
    };
    if cfg.n < 100 {
        return cfg_err(format!("n must be at least 100, got {}", cfg.n));
    }
    Ok(cfg)
}

/// Scenario number plus the scenario template for `level` and `model`,
/// validated before any network is built.
fn scenario_spec(s: &mut Settings, p: &PopulationArgs, level: Interference, model: OutcomeKind) -> Result<ScenarioSpec> {
    let scenario = s.value("scenario", p.scenario, 1u8)?;
    if !(1..=4).contains(&scenario) {
        return cfg_err(format!("scenario must be 1-4, got {scenario}"));
    }
    let mut spec = ScenarioSpec::new(scenario, level, model);
    spec.max_iters = s.value("max_iters", p.max_iters, spec.max_iters)?;
    if let Some(e) = s.optional::<String>("exposure", p.exposure.clone())? {
        spec.exposure = ExposureSpec::new(parse_exposure(&e)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn build_population(s: &mut Settings, p: &PopulationArgs, scenario: u8) -> Result<Population> {
    let cfg = network_config(s, p)?;
    let calibration = s.value("calibration_seed", p.calibration_seed, 11u64)?;
    let (net, cov) = gen_network(&cfg)?;
    Population::new(net, cov, scenario, calibration)
}

/// One simulated draw from the population flags.
fn simulated(s: &mut Settings, p: &PopulationArgs) -> Result<(Population, Draw)> {
    let level = parse_interference(&s.value("interference", p.interference.clone(), "low".into())?)?;
    let model = parse_model(&s.value("model", p.model.clone(), "model1".into())?)?;
    let spec = scenario_spec(s, p, level, model)?;
    let seed = s.value("seed", p.seed, 1u64)?;
    let replicate = s.value("replicate", p.replicate, 0u64)?;
    let pop = build_population(s, p, spec.scenario)?;
    let draw = simulate(&pop, &spec, seed, replicate)?;
    Ok((pop, draw))
}

// --------------------------------------------------------------- data

struct Dataset {
    data: UnitData,
    truth: Option<EffectReport>,
    non_converged: bool,
    x_ind: Vec<String>,
    x_z: Vec<String>,
}

const RESERVED: [&str; 7] = ["node", "y", "z", "g", "trials", "mu", "indicator"];

fn frame_without(frame: &CovariateFrame, drop: &[&str]) -> Result<CovariateFrame> {
    let mut out = CovariateFrame::new(frame.num_rows());
    for c in frame.columns() {
        if !drop.contains(&c.name.as_str()) {
            out.add_individual(&c.name, c.values.clone())?;
        }
    }
    Ok(out)
}

fn zero_one(values: &[f64], what: &str) -> Result<Vec<u8>> {
    values
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            _ => Err(Error::Input(format!("{what} must be 0/1, found {v}"))),
        })
        .collect()
}

fn load_dataset(s: &mut Settings, d: &DataArgs, p: &PopulationArgs) -> Result<Dataset> {
    let units = s.optional::<String>("units", d.units.as_ref().map(|p| p.display().to_string()))?;
    let edges = s.optional::<String>("edges", d.edges.as_ref().map(|p| p.display().to_string()))?;
    if let Some(path) = units {
        let kind = parse_exposure(&s.value("exposure", p.exposure.clone(), "top_k:5".into())?)?;
        let (frame, clusters) = io::read_covariates(Path::new(&path))?;
        let col = |n: &str| frame.values(n).map(<[f64]>::to_vec);
        let z = zero_one(&col("z")?, "column 'z'")?;
        let trials = col("trials")?.iter().map(|&t| t as u32).collect();
        let covs: Vec<(String, Vec<f64>)> = frame
            .columns()
            .iter()
            .filter(|c| !["node", "y", "z", "g", "trials"].contains(&c.name.as_str()))
            .map(|c| (c.name.clone(), c.values.clone()))
            .collect();
        let mut data = UnitData::new(col("y")?, z, col("g")?, trials, kind, covs)?;
        if let Ok(node) = frame.values("node") {
            data.node = node.iter().map(|&v| v as usize).collect();
        }
        data.cluster = clusters;
        let x: Vec<String> =
            data.column_names().into_iter().filter(|c| !RESERVED.contains(c)).map(String::from).collect();
        return Ok(Dataset { data, truth: None, non_converged: false, x_ind: x.clone(), x_z: x });
    }
    if let Some(edges) = edges {
        let Some(cov_path) = s.optional::<String>("covariates", d.covariates.as_ref().map(|p| p.display().to_string()))?
        else {
            return cfg_err("'edges' requires 'covariates'");
        };
        let ranked = s.optional::<String>("ranked", d.ranked.as_ref().map(|p| p.display().to_string()))?;
        let y_col = s.value("y_column", d.y_column.clone(), "y".into())?;
        let z_col = s.value("z_column", d.z_column.clone(), "z".into())?;
        let means = s.value("neighbor_means", d.neighbor_means.clone(), List::default())?;
        let kind = parse_exposure(&s.value("exposure", p.exposure.clone(), "top_k:5".into())?)?;
        let (net, frame) = io::load_network(Path::new(&edges), Path::new(&cov_path), ranked.as_deref().map(Path::new))?;
        let y = frame.values(&y_col)?.to_vec();
        let z = zero_one(frame.values(&z_col)?, &format!("column '{z_col}'"))?;
        let base = frame_without(&frame, &[&y_col, &z_col])?;
        let x_ind: Vec<String> = base.names().into_iter().map(String::from).collect();
        let mut aggs: Vec<(&str, Aggregator)> = means.0.iter().map(|c| (c.as_str(), Aggregator::Mean)).collect();
        if !means.0.is_empty() {
            aggs.push((means.0[0].as_str(), Aggregator::Degree));
        }
        let cov = neighborhood_covariates(&net, &base, &aggs)?;
        let data = UnitData::from_network(&net, &cov, &z, &y, &ExposureSpec::new(kind))?;
        let x_z = cov.names().into_iter().map(String::from).collect();
        return Ok(Dataset { data, truth: None, non_converged: false, x_ind, x_z });
    }
    let (_, draw) = simulated(s, p)?;
    Ok(Dataset {
        data: draw.data,
        truth: Some(draw.truth),
        non_converged: !draw.assignment.converged,
        x_ind: names(&X_IND),
        x_z: names(&X_Z),
    })
}

// ----------------------------------------------------------- simulate

pub fn simulate_cmd(s: &mut Settings, a: &SimulateArgs) -> Result<()> {
    let (pop, draw) = simulated(s, &a.population)?;
    let dir = out_dir(s, &a.out)?;
    s.finish()?;
    io::write_edge_list(&pop.net, &dir.join("edges.txt"))?;
    io::write_ranked_friends(&pop.net, &dir.join("ranked.txt"))?;
    // Node table for `--edges`: individual covariates, treatment and outcome.
    let mut nodes: Vec<(String, Vec<f64>)> = pop
        .cov
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::Individual)
        .map(|c| (c.name.clone(), c.values.clone()))
        .collect();
    nodes.push(("z".into(), draw.assignment.z.iter().map(|&v| v as f64).collect()));
    nodes.push(("y".into(), draw.y.clone()));
    if let Some(cl) = pop.net.clusters() {
        nodes.push(("cluster".into(), cl.iter().map(|&c| c as f64).collect()));
    }
    io::write_columns(&nodes, &dir.join("covariates.csv"))?;
    let d = &draw.data;
    let mut cols: Vec<(String, Vec<f64>)> = vec![
        ("node".into(), d.node.iter().map(|&v| v as f64).collect()),
        ("y".into(), d.y.clone()),
        ("z".into(), d.z_f64()),
        ("g".into(), d.g.clone()),
        ("trials".into(), d.trials.iter().map(|&t| t as f64).collect()),
    ];
    for name in d.column_names() {
        cols.push((name.to_string(), d.column(name)?.to_vec()));
    }
    if let Some(c) = &d.cluster {
        cols.push(("cluster".into(), c.iter().map(|&v| v as f64).collect()));
    }
    io::write_columns(&cols, &dir.join("units.csv"))?;
    io::write_json(&draw.truth, &dir.join("truth.json"))?;
    let non_converged = !draw.assignment.converged;
    if non_converged {
        log::warn!("treatment assignment did not converge in {} sweeps", draw.assignment.iterations);
    }
    write_manifest(
        &dir,
        "simulate",
        s,
        non_converged,
        &["edges.txt", "ranked.txt", "covariates.csv", "units.csv", "truth.json"],
    )
}

// ----------------------------------------------------------- estimate

fn estimator_spec(s: &mut Settings, a: &EstimatorArgs, default_x: &[String]) -> Result<EstimatorSpec> {
    let which = s.value("estimator", a.estimator.clone(), "subclass_gps".into())?;
    let x_z = s.value("x_z", a.x_z.clone(), List(default_x.to_vec()))?.0;
    let x_g = s.value("x_g", a.x_g.clone(), List(x_z.clone()))?.0;
    let subclasses = s.value("subclasses", a.subclasses, 5usize)?;
    let gps = |s: &mut Settings| -> Result<GpsConfig> {
        let mut c = GpsConfig::new(&[], &[]);
        c.x_z = x_z.clone();
        c.x_g = x_g.clone();
        c.subclasses = subclasses;
        c.min_arm_count = s.value("min_arm_count", a.min_arm_count, c.min_arm_count)?;
        c.g_grid = s.optional::<Floats>("g_grid", a.g_grid.clone())?.map(|f| f.0);
        c.outcome_model = match s.value("outcome_model", a.outcome_model.clone(), "linear".into())?.as_str() {
            "linear" => OutcomeModel::Linear,
            "cubic" => OutcomeModel::Cubic,
            "no_gps" => OutcomeModel::NoGps,
            "saturated" => OutcomeModel::Saturated,
            o => return cfg_err(format!("outcome_model must be linear, cubic, no_gps or saturated, got '{o}'")),
        };
        c.g_mass = match s.value("g_mass", a.g_mass.clone(), "population".into())?.as_str() {
            "population" => GMass::Population,
            "within_admissible" => GMass::WithinAdmissible,
            o => return cfg_err(format!("g_mass must be population or within_admissible, got '{o}'")),
        };
        Ok(c)
    };
    Ok(match which.as_str() {
        "subclass_gps" => EstimatorSpec::SubclassGps(gps(s)?),
        "gps" => EstimatorSpec::Gps(gps(s)?),
        "diff_means" | "naive:diff_means" => EstimatorSpec::Naive(NaiveVariant::DiffMeans),
        "ols" | "naive:ols" => EstimatorSpec::Naive(NaiveVariant::Ols { columns: x_z }),
        "subclass_phi" | "naive:subclass_phi" => {
            EstimatorSpec::Naive(NaiveVariant::SubclassPhi { columns: x_z, subclasses })
        }
        o => cfg_err(format!(
            "estimator must be subclass_gps, gps, diff_means, ols or subclass_phi, got '{o}'"
        ))?,
    })
}

#[derive(Serialize)]
struct EffectRow {
    name: String,
    estimate: f64,
    se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    truth: Option<f64>,
}

pub fn estimate_cmd(s: &mut Settings, a: &EstimateArgs) -> Result<()> {
    let ds = load_dataset(s, &a.data, &a.population)?;
    let spec = estimator_spec(s, &a.estimator, &ds.x_z)?;
    let b = s.value("bootstrap", a.bootstrap, 0usize)?;
    let scheme = parse_scheme(&s.value("scheme", a.scheme.clone(), "unit".into())?)?;
    let boot_seed = s.value("bootstrap_seed", a.bootstrap_seed, 1u64)?;
    let dir = out_dir(s, &a.out)?;
    s.finish()?;

    let mut outputs = vec!["report.json", "effects.csv", "balance.csv"];
    let (named, report) = match &spec {
        EstimatorSpec::SubclassGps(c) | EstimatorSpec::Gps(c) => {
            let (surface, report) = if matches!(spec, EstimatorSpec::Gps(_)) {
                estimate_gps_only(&ds.data, c)?
            } else {
                estimate_subclass_gps(&ds.data, c)?
            };
            io::write_surface_table(&surface, &report, &dir.join("surface.csv"))?;
            outputs.push("surface.csv");
            (report.named(), Some(report))
        }
        EstimatorSpec::Naive(_) => (spec.run(&ds.data)?, None),
    };
    let boot: Option<BootstrapResult> =
        if b > 0 { Some(bootstrap_estimator(&ds.data, &spec, b, scheme, boot_seed)?) } else { None };
    if let Some(br) = &boot {
        io::write_json(br, &dir.join("bootstrap.json"))?;
        outputs.push("bootstrap.json");
    }
    let truth = ds.truth.as_ref().map(EffectReport::named);
    let rows: Vec<EffectRow> = named
        .iter()
        .map(|(name, est)| {
            let bs = boot.as_ref().and_then(|br| br.get(name));
            EffectRow {
                name: name.clone(),
                estimate: *est,
                se: bs.map(|v| v.1),
                ci_low: bs.map(|v| v.2 .0),
                ci_high: bs.map(|v| v.2 .1),
                truth: truth.as_ref().and_then(|t| t.iter().find(|(n, _)| n == name).map(|p| p.1)),
            }
        })
        .collect();
    io::write_rows(&rows, &dir.join("effects.csv"))?;
    let json = serde_json::json!({
        "estimator": spec.name(),
        "effects": rows,
        "report": report,
        "bootstrap": boot.as_ref().map(|br| serde_json::json!({
            "b": br.b, "failed": br.failed, "scheme": br.scheme, "seed": br.seed,
        })),
    });
    io::write_json(&json, &dir.join("report.json"))?;

    // Balance of the individual-score covariates within score subclasses.
    let x = match &spec {
        EstimatorSpec::SubclassGps(c) | EstimatorSpec::Gps(c) => c.x_z.clone(),
        EstimatorSpec::Naive(NaiveVariant::Ols { columns } | NaiveVariant::SubclassPhi { columns, .. }) => {
            columns.clone()
        }
        EstimatorSpec::Naive(NaiveVariant::DiffMeans) => ds.x_z.clone(),
    };
    let rows = subclass_balance(&ds.data, &x, 5)?;
    io::write_balance_table(&rows, &dir.join("balance.csv"))?;
    write_manifest(&dir, "estimate", s, ds.non_converged, &outputs)
}

fn subclass_balance(data: &UnitData, x: &[String], j: usize) -> Result<Vec<netference::propensity::BalanceRow>> {
    let cols = data.covariates(x)?;
    let arm: Vec<bool> = data.z.iter().map(|&z| z == 1).collect();
    let mut rows = balance_table(&cols, &arm, None);
    if !x.is_empty() {
        let ps = fit_individual_ps(data, x)?;
        let score: Vec<f64> = (0..data.len()).map(|i| ps.phi_z(1, i)).collect();
        let part = subclassify(&score, &data.z, j, 1)?;
        rows.extend(balance_table(&cols, &arm, Some(&part.assignment)).into_iter().filter(|r| r.stratum.is_some()));
    }
    Ok(rows)
}

// --------------------------------------------------------------- bias

pub fn bias_cmd(s: &mut Settings, a: &BiasArgs) -> Result<()> {
    let p = &a.population;
    let model = parse_model(&s.value("model", p.model.clone(), "model1".into())?)?;
    let levels = s.value("levels", a.levels.clone(), List(vec!["low".into(), "medium".into(), "high".into()]))?;
    let levels: Vec<Interference> = levels.0.iter().map(|l| parse_interference(l)).collect::<Result<_>>()?;
    let reps = s.value("reps", a.reps, 1usize)?;
    if reps == 0 {
        return cfg_err("reps must be at least 1");
    }
    let outcome = s.value("outcome_column", a.outcome_column.clone(), "mu".into())?;
    let seed = s.value("seed", p.seed, 1u64)?;
    let template = scenario_spec(s, p, Interference::Low, model)?;
    let pop = build_population(s, p, template.scenario)?;
    let dir = out_dir(s, &a.out)?;
    s.finish()?;

    let sets: [(&str, Vec<&str>); 3] = [("none", vec![]), ("x_ind", X_IND.to_vec()), ("x_z", X_Z.to_vec())];
    let mut rows = Vec::new();
    let mut non_converged = false;
    for level in levels {
        let spec = ScenarioSpec { interference: level, ..template.clone() };
        let mut acc = [(0.0, 0.0); 3];
        for r in 0..reps as u64 {
            let draw = simulate(&pop, &spec, seed, r)?;
            non_converged |= !draw.assignment.converged;
            for (k, (name, x)) in sets.iter().enumerate() {
                let rep = if *name == "none" {
                    // Without adjustment the individual covariates act as
                    // unmeasured confounders.
                    bias_unmeasured(&draw.data, &BiasSpec::new(x).with_u(&X_IND).with_outcome(&outcome))?
                } else {
                    bias_interference(&draw.data, &BiasSpec::new(x).with_outcome(&outcome))?
                };
                acc[k].0 += rep.value / reps as f64;
                acc[k].1 += rep.uncovered_mass / reps as f64;
            }
        }
        for (k, (name, _)) in sets.iter().enumerate() {
            rows.push(io::BiasRow {
                scenario: spec.scenario,
                interference: level.name().into(),
                adjustment_set: name.to_string(),
                analytic_bias: acc[k].0,
                uncovered_mass: acc[k].1,
            });
        }
    }
    io::write_bias_table(&rows, &dir.join("bias.csv"))?;
    write_manifest(&dir, "bias", s, non_converged, &["bias.csv"])
}

// ------------------------------------------------------------ balance

#[derive(Serialize)]
struct BalanceSummary {
    n: usize,
    treated_share: f64,
    mean_g_treated: f64,
    mean_g_control: f64,
    rho_zg_given_x_ind: Option<f64>,
    rho_zg_given_x_z: Option<f64>,
}

pub fn balance_cmd(s: &mut Settings, a: &BalanceArgs) -> Result<()> {
    let ds = load_dataset(s, &a.data, &a.population)?;
    let x_z = s.value("x_z", a.x_z.clone(), List(ds.x_z.clone()))?.0;
    let x_g = s.value("x_g", a.x_g.clone(), List(x_z.clone()))?.0;
    let q = s.value("strata", a.strata, 5usize)?;
    let min_arm = s.value("min_arm_size", a.min_arm_size, 2 * q * q)?;
    let dir = out_dir(s, &a.out)?;
    s.finish()?;
    let d = &ds.data;

    io::write_balance_table(&subclass_balance(d, &x_z, q)?, &dir.join("balance_z.csv"))?;

    // dichotomized neighborhood treatment
    let cut = if d.exposure.is_proportion() {
        0.5
    } else {
        let mut g = d.g.clone();
        g.sort_by(f64::total_cmp);
        g[g.len() / 2]
    };
    let high: Vec<bool> = d.g.iter().map(|&g| g >= cut).collect();
    let mut cols = d.covariates(&x_z)?;
    cols.push(("z".into(), d.z_f64()));
    io::write_balance_table(&balance_table(&cols, &high, None), &dir.join("balance_g.csv"))?;

    let jps = joint_ps(d, &x_z, &x_g)?;
    let joint = joint_treatment_balance(d, &jps, &x_z, q, min_arm)?;
    io::write_rows(&joint, &dir.join("joint_balance.csv"))?;

    let mean_g = |z: u8| {
        let v: Vec<f64> = d.g.iter().zip(&d.z).filter(|p| *p.1 == z).map(|p| *p.0).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let summary = BalanceSummary {
        n: d.len(),
        treated_share: d.z.iter().filter(|&&z| z == 1).count() as f64 / d.len() as f64,
        mean_g_treated: mean_g(1),
        mean_g_control: mean_g(0),
        rho_zg_given_x_ind: partial_correlation_zg(d, &ds.x_ind)?,
        rho_zg_given_x_z: partial_correlation_zg(d, &x_z)?,
    };
    io::write_json(&summary, &dir.join("summary.json"))?;
    write_manifest(
        &dir,
        "balance",
        s,
        ds.non_converged,
        &["balance_z.csv", "balance_g.csv", "joint_balance.csv", "summary.json"],
    )
}

// ---------------------------------------------------------- replicate

/// Estimator columns of the main-effect table.
pub const TAU_ESTIMATORS: [&str; 6] = ["diff_means", "ols_x_ind", "subclass_x_ind", "ols_x_z", "subclass_x_z", "subclass_gps"];
/// Estimator columns of the spillover tables.
pub const SPILLOVER_ESTIMATORS: [&str; 2] = ["gps", "subclass_gps"];

fn tau_grid(j: usize) -> Vec<(&'static str, EstimatorSpec)> {
    let gps = GpsConfig { subclasses: j, ..GpsConfig::new(&X_Z, &X_Z) };
    vec![
        ("diff_means", EstimatorSpec::Naive(NaiveVariant::DiffMeans)),
        ("ols_x_ind", EstimatorSpec::Naive(NaiveVariant::Ols { columns: names(&X_IND) })),
        ("subclass_x_ind", EstimatorSpec::Naive(NaiveVariant::SubclassPhi { columns: names(&X_IND), subclasses: j })),
        ("ols_x_z", EstimatorSpec::Naive(NaiveVariant::Ols { columns: names(&X_Z) })),
        ("subclass_x_z", EstimatorSpec::Naive(NaiveVariant::SubclassPhi { columns: names(&X_Z), subclasses: j })),
        ("subclass_gps", EstimatorSpec::SubclassGps(gps)),
    ]
}

#[derive(Serialize)]
struct LongRow {
    scenario: u8,
    interference: String,
    quantity: String,
    estimator: String,
    mean_estimate: f64,
    mean_truth: f64,
    bias: f64,
    rmse: f64,
    mc_se: f64,
    reps: usize,
    failed: usize,
}

fn lookup(v: &[(String, f64)], name: &str) -> Option<f64> {
    v.iter().find(|(n, _)| n == name).map(|p| p.1)
}

pub fn replicate_cmd(s: &mut Settings, a: &ReplicateArgs) -> Result<()> {
    let p = &a.population;
    let scenarios = s.value("scenarios", a.scenarios.clone(), List(vec!["1".into(), "2".into(), "3".into(), "4".into()]))?;
    let scenarios: Vec<u8> = scenarios
        .0
        .iter()
        .map(|v| match v.parse::<u8>() {
            Ok(k) if (1..=4).contains(&k) => Ok(k),
            _ => cfg_err(format!("scenarios: '{v}' is not in 1-4")),
        })
        .collect::<Result<_>>()?;
    let levels = s.value("levels", a.levels.clone(), List(vec!["low".into(), "medium".into(), "high".into()]))?;
    let levels: Vec<Interference> = levels.0.iter().map(|l| parse_interference(l)).collect::<Result<_>>()?;
    let reps = s.value("reps", a.reps, 100usize)?;
    if reps == 0 {
        return cfg_err("reps must be at least 1");
    }
    let j = s.value("subclasses", a.subclasses, 5usize)?;
    let seed = s.value("seed", p.seed, 1u64)?;
    let max_iters = s.value("max_iters", p.max_iters, 50usize)?;
    let net_cfg = network_config(s, p)?;
    let calibration = s.value("calibration_seed", p.calibration_seed, 11u64)?;
    let dir = out_dir(s, &a.out)?;
    s.finish()?;

    let taus = tau_grid(j);
    let gps_cfg = GpsConfig { subclasses: j, ..GpsConfig::new(&X_Z, &X_Z) };
    let spill = [("gps", EstimatorSpec::Gps(gps_cfg.clone())), ("subclass_gps", EstimatorSpec::SubclassGps(gps_cfg))];
    let (net, cov) = gen_network(&net_cfg)?;
    let mut long = Vec::new();
    let mut non_converged = false;
    for &scenario in &scenarios {
        let pop = Population::new(net.clone(), cov.clone(), scenario, calibration)?;
        for &level in &levels {
            let mk = |model| ScenarioSpec { max_iters, ..ScenarioSpec::new(scenario, level, model) };
            let (m1, m2) = (mk(OutcomeKind::Model1), mk(OutcomeKind::Model2));
            let res: Vec<McSummary> = monte_carlo(reps, |k| {
                let mut out = Vec::new();
                let d1 = simulate(&pop, &m1, seed, k)?;
                for (name, est) in &taus {
                    if let Some(v) = est.run(&d1.data).ok().and_then(|e| lookup(&e, "tau")) {
                        out.push((format!("tau/{name}"), v, d1.truth.tau));
                    }
                }
                let d2 = simulate(&pop, &m2, seed.wrapping_add(1), k)?;
                let t2 = d2.truth.named();
                for (name, est) in &spill {
                    if let Ok(e) = est.run(&d2.data) {
                        for q in ["Delta0", "Delta1"] {
                            if let (Some(v), Some(t)) = (lookup(&e, q), lookup(&t2, q)) {
                                out.push((format!("{q}/{name}"), v, t));
                            }
                        }
                    }
                }
                let stalled = !(d1.assignment.converged && d2.assignment.converged);
                out.push(("non_converged".into(), stalled as u8 as f64, 0.0));
                Ok(out)
            })?;
            for m in res {
                if m.name == "non_converged" {
                    non_converged |= m.mean_estimate > 0.0;
                    continue;
                }
                let (quantity, estimator) = m.name.split_once('/').expect("quantity/estimator name");
                long.push(LongRow {
                    scenario,
                    interference: level.name().into(),
                    quantity: quantity.into(),
                    estimator: estimator.into(),
                    mean_estimate: m.mean_estimate,
                    mean_truth: m.mean_truth,
                    bias: m.mean_bias,
                    rmse: m.rmse,
                    mc_se: m.mc_se,
                    reps: m.r,
                    failed: m.failed,
                });
            }
        }
    }
    io::write_rows(&long, &dir.join("replicate_long.csv"))?;
    wide_table(&long, "tau", &TAU_ESTIMATORS, &dir.join("table_tau.csv"))?;
    wide_table(&long, "Delta0", &SPILLOVER_ESTIMATORS, &dir.join("table_delta0.csv"))?;
    wide_table(&long, "Delta1", &SPILLOVER_ESTIMATORS, &dir.join("table_delta1.csv"))?;
    write_manifest(
        &dir,
        "replicate",
        s,
        non_converged,
        &["replicate_long.csv", "table_tau.csv", "table_delta0.csv", "table_delta1.csv"],
    )
}

/// One row per (scenario, interference) with `<estimator>_bias` and
/// `<estimator>_rmse` columns; blank where every replicate failed.
fn wide_table(long: &[LongRow], quantity: &str, estimators: &[&str], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string(), "interference".to_string(), "truth".to_string()];
    for e in estimators {
        header.push(format!("{e}_bias"));
        header.push(format!("{e}_rmse"));
    }
    w.write_record(&header)?;
    let mut keys: Vec<(u8, &str)> = long.iter().map(|r| (r.scenario, r.interference.as_str())).collect();
    keys.dedup();
    for (scenario, level) in keys {
        let cell = |e: &str| {
            long.iter().find(|r| r.scenario == scenario && r.interference == level && r.quantity == quantity && r.estimator == e)
        };
        let truth = estimators.iter().find_map(|e| cell(e)).map_or_else(String::new, |r| r.mean_truth.to_string());
        let mut rec = vec![scenario.to_string(), level.to_string(), truth];
        for e in estimators {
            match cell(e) {
                Some(r) => {
                    rec.push(r.bias.to_string());
                    rec.push(r.rmse.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
