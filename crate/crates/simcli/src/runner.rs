//! Sweep execution and CSV persistence.
//!
//! A sweep is a list of tasks in canonical order; each task yields one or
//! more CSV rows. Tasks run in parallel in chunks and rows are written in
//! task order after every chunk, so the file is always a prefix of the
//! complete result. On restart the existing rows are checked against the
//! keys the config would produce and only the missing rows are computed.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Point2};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use uowsn_core::channel::{estimate_range, received_power, OpticalLink, WaterModel, WaterTable};
use uowsn_core::connectivity::{
    monte_carlo_p_connected, p_connected_k, p_connected_per_node_k, ConnectivityParams, MonteCarloConfig,
};
use uowsn_core::localization::{localize_with, observe_distances, AnchorSet, CompletionOptions, LocalizeOptions};
use uowsn_core::netgraph::{deploy, node_table_text, BorderMode, Deployment, DirectedSectorGraph, NodeSector};
use uowsn_core::rng;

use crate::config::{AnalyticForm, ChannelTable, ConnectivitySweep, Experiment, ExperimentConfig, LocalizationSweep};

pub const CONNECTIVITY_HEADER: [&str; 10] =
    ["phi", "R", "M", "k", "mode", "p_analytic", "p_mc", "stderr", "trials", "seed"];
pub const LOCALIZATION_HEADER: [&str; 11] =
    ["method", "M", "anchors", "phi", "R", "noise_pct", "seed", "rmse", "unlocalized", "iterations", "residual"];
pub const CHANNEL_HEADER: [&str; 8] =
    ["water", "distance", "noise_pct", "trial", "extinction", "received_power", "estimated_range", "seed"];

const TOOL: &str = concat!("uowsn ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: cannot resume: {reason}; rerun with --fresh to start over")]
    Resume { path: PathBuf, reason: String },
    #[error("row {key}: {source}")]
    Compute { key: String, source: uowsn_core::Error },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; rayon's default when `None`.
    pub threads: Option<usize>,
    /// Discard any existing output instead of resuming it.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub output: PathBuf,
    /// Data rows in the finished file.
    pub rows: usize,
    /// Rows that were already present and kept.
    pub resumed: usize,
    pub config_hash: String,
}

/// SHA-256 of the canonical config echo with the output path left out, so
/// the same experiment written to two places has the same hash.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output = None;
    Sha256::digest(c.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Path of the metadata file written next to `csv`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    csv.with_file_name(name)
}

/// Runs the whole sweep into `output`.
pub fn run(config: &ExperimentConfig, output: &Path, options: &RunOptions) -> Result<RunSummary, RunError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let hash = config_hash(config);
    let plan = Plan::new(config, output);
    let (rows, resumed) = pool.install(|| drive(&plan, output, &hash, options.fresh))?;
    Ok(RunSummary { output: output.to_path_buf(), rows, resumed, config_hash: hash })
}

/// Seed of the network for one localization run. Shared by every anchor
/// count, noise level and method at that point, which pairs their results.
pub fn network_seed(root: u64, nodes: usize, scan_angle: f64, range: f64, trial: usize) -> u64 {
    rng::derive_seed(root, &[nodes as u64, scan_angle.to_bits(), range.to_bits(), trial as u64])
}

/// The network a localization run with this seed is scored on.
pub fn localization_network(
    sweep: &LocalizationSweep,
    nodes: usize,
    scan_angle: f64,
    range: f64,
    seed: u64,
) -> uowsn_core::Result<DirectedSectorGraph> {
    let d = Deployment::new(nodes, sweep.area_side, scan_angle, range).with_border(sweep.border_mode);
    deploy(&d, &mut rng::stream(seed, &[0]))
}

/// Seed shared by every connectivity grid point with `nodes` nodes. Reusing
/// it across ranges, angles, k and border modes makes the simulated graphs
/// nested, so the estimates are monotone in those parameters.
pub fn connectivity_seed(root: u64, nodes: usize) -> u64 {
    rng::derive_seed(root, &[nodes as u64])
}

type Row = Vec<String>;

enum Task {
    Connectivity { phi: f64, range: f64, nodes: usize, k: usize, mode: BorderMode },
    Localization { nodes: usize, anchors: usize, phi: f64, range: f64, noise: f64, trial: usize },
    Channel { water: usize, distance: f64, noise: f64, trial: usize },
}

struct Plan<'a> {
    config: &'a ExperimentConfig,
    output: &'a Path,
    tasks: Vec<Task>,
    header: &'static [&'static str],
    key_len: usize,
    water: Vec<(String, WaterModel)>,
}

impl<'a> Plan<'a> {
    fn new(config: &'a ExperimentConfig, output: &'a Path) -> Self {
        let mut tasks = Vec::new();
        let mut water = Vec::new();
        let (header, key_len): (&'static [&'static str], usize) = match &config.experiment {
            Experiment::Connectivity(c) => {
                for &phi in &c.scan_angle {
                    for &range in &c.range {
                        for &nodes in &c.nodes {
                            for &k in &c.k {
                                for &mode in &c.border_mode {
                                    tasks.push(Task::Connectivity { phi, range, nodes, k, mode });
                                }
                            }
                        }
                    }
                }
                (&CONNECTIVITY_HEADER, 5)
            }
            Experiment::Localization(l) => {
                for &nodes in &l.nodes {
                    for &anchors in &l.anchors {
                        for &phi in &l.scan_angle {
                            for &range in &l.range {
                                for &noise in &l.noise_pct {
                                    for trial in 0..config.trials {
                                        tasks.push(Task::Localization { nodes, anchors, phi, range, noise, trial });
                                    }
                                }
                            }
                        }
                    }
                }
                (&LOCALIZATION_HEADER, 7)
            }
            Experiment::Channel(c) => {
                water = water_models(c);
                for w in 0..water.len() {
                    for &distance in &c.distance {
                        for &noise in &c.noise_pct {
                            for trial in 0..config.trials {
                                tasks.push(Task::Channel { water: w, distance, noise, trial });
                            }
                        }
                    }
                }
                (&CHANNEL_HEADER, 4)
            }
        };
        Plan { config, output, tasks, header, key_len, water }
    }

    /// Key columns of every row `task` produces, without computing it.
    fn keys(&self, task: &Task) -> Vec<Row> {
        let seed = self.config.seed;
        match (task, &self.config.experiment) {
            (&Task::Connectivity { phi, range, nodes, k, mode }, _) => {
                vec![vec![fmt(phi), fmt(range), nodes.to_string(), k.to_string(), mode.as_str().into()]]
            }
            (&Task::Localization { nodes, anchors, phi, range, noise, trial }, Experiment::Localization(l)) => {
                let net = network_seed(seed, nodes, phi, range, trial);
                l.methods
                    .iter()
                    .map(|m| {
                        vec![
                            m.as_str().into(),
                            nodes.to_string(),
                            anchors.to_string(),
                            fmt(phi),
                            fmt(range),
                            fmt(noise),
                            net.to_string(),
                        ]
                    })
                    .collect()
            }
            (&Task::Channel { water, distance, noise, trial }, _) => {
                vec![vec![self.water[water].0.clone(), fmt(distance), fmt(noise), trial.to_string()]]
            }
            _ => unreachable!("task kind follows the experiment"),
        }
    }

    fn compute(&self, task: &Task) -> Result<Vec<Row>, RunError> {
        let fail = |source| RunError::Compute { key: self.keys(task)[0].join(","), source };
        let rows = match (task, &self.config.experiment) {
            (t @ Task::Connectivity { .. }, Experiment::Connectivity(c)) => connectivity_row(self.config, c, t),
            (t @ Task::Localization { .. }, Experiment::Localization(l)) => {
                localization_rows(self.config, self.output, l, t)
            }
            (t @ Task::Channel { .. }, Experiment::Channel(c)) => channel_row(self.config, c, &self.water, t),
            _ => unreachable!("task kind follows the experiment"),
        };
        let rows = rows.map_err(fail)?;
        debug_assert!(rows.iter().zip(self.keys(task)).all(|(r, k)| r[..self.key_len] == k[..]));
        Ok(rows)
    }
}

/// Shortest round-trip decimal form, the same on every platform.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn water_models(c: &ChannelTable) -> Vec<(String, WaterModel)> {
    let table = match &c.water_table {
        None => WaterTable::builtin(),
        Some(p) => {
            let text = fs::read_to_string(p).expect("water table was read during validation");
            WaterTable::parse(&text).expect("water table was parsed during validation")
        }
    };
    let mut out: Vec<(String, WaterModel)> = c
        .water
        .iter()
        .map(|name| (name.clone(), WaterModel::preset(name, &table).expect("preset checked during validation")))
        .collect();
    for &chl in &c.chlorophyll {
        let model = WaterModel::haltrin(c.wavelength_nm, chl, &table).expect("checked during validation");
        out.push((format!("chlorophyll_{chl}"), model));
    }
    out
}

fn connectivity_row(config: &ExperimentConfig, c: &ConnectivitySweep, task: &Task) -> uowsn_core::Result<Vec<Row>> {
    let &Task::Connectivity { phi, range, nodes, k, mode } = task else { unreachable!() };
    let analytic = ConnectivityParams::new(nodes, range, phi, c.area_side).and_then(|p| match c.analytic {
        AnalyticForm::Printed => p_connected_k(&p, k),
        AnalyticForm::PerNode => p_connected_per_node_k(&p, k),
    });
    let p_analytic = match analytic {
        Ok(p) => {
            if p.clamped {
                log::warn!("analytic value clamped at phi={phi} R={range} M={nodes} k={k}");
            }
            fmt(p.value)
        }
        Err(e) => {
            log::debug!("no analytic value at phi={phi} R={range} M={nodes} k={k}: {e}");
            String::new()
        }
    };
    let d = Deployment::new(nodes, c.area_side, phi, range).with_border(mode).with_placement(c.placement);
    let seed = connectivity_seed(config.seed, nodes);
    let est = monte_carlo_p_connected(&MonteCarloConfig::new(d, k, config.trials), seed)?;
    Ok(vec![vec![
        fmt(phi),
        fmt(range),
        nodes.to_string(),
        k.to_string(),
        mode.as_str().into(),
        p_analytic,
        fmt(est.probability),
        fmt(est.stderr),
        config.trials.to_string(),
        seed.to_string(),
    ]])
}

fn localization_rows(
    config: &ExperimentConfig,
    output: &Path,
    l: &LocalizationSweep,
    task: &Task,
) -> uowsn_core::Result<Vec<Row>> {
    let &Task::Localization { nodes, anchors, phi, range, noise, trial } = task else { unreachable!() };
    let seed = network_seed(config.seed, nodes, phi, range, trial);
    let g = localization_network(l, nodes, phi, range, seed)?;
    let obs = observe_distances(&g, noise / 100.0, &mut rng::stream(seed, &[1]))?;
    let anchor_set = match &l.anchor_nodes {
        Some(idx) => AnchorSet::from_graph(&g, idx.clone())?,
        None => AnchorSet::random(&g, anchors, &mut rng::stream(seed, &[2, anchors as u64]))?,
    };
    let options = LocalizeOptions {
        completion: CompletionOptions {
            target_rank: l.rank,
            max_iters: l.max_iters,
            tol: l.tol,
            stall_fraction: l.stall_fraction,
        },
        reflection: l.reflection,
        rmse: l.rmse,
    };
    let mut rows = Vec::with_capacity(l.methods.len());
    for &method in &l.methods {
        let r = localize_with(&g, &obs, &anchor_set, method, &options)?;
        if l.dump_positions {
            dump_positions(output, &g, &r.estimated_positions, method.as_str(), task, seed);
        }
        rows.push(vec![
            method.as_str().into(),
            nodes.to_string(),
            anchors.to_string(),
            fmt(phi),
            fmt(range),
            fmt(noise),
            seed.to_string(),
            fmt(r.rmse),
            r.unlocalized.to_string(),
            r.iterations.to_string(),
            fmt(r.completion_residual),
        ]);
    }
    Ok(rows)
}

/// Writes estimated positions as a node table next to the CSV. Failures are
/// logged, not fatal: the CSV is the result, the dump is a convenience.
fn dump_positions(output: &Path, g: &DirectedSectorGraph, est: &DMatrix<f64>, method: &str, task: &Task, seed: u64) {
    let &Task::Localization { nodes, anchors, phi, range, noise, .. } = task else { unreachable!() };
    let Some(dir) = positions_dir(output) else { return };
    let sectors: Vec<NodeSector> = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| NodeSector { position: Point2::new(est[(i, 0)], est[(i, 1)]), ..*n })
        .collect();
    let name = format!("{method}_M{nodes}_a{anchors}_phi{phi}_R{range}_n{noise}_s{seed}.txt");
    let result = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join(name), node_table_text(&sectors)));
    if let Err(e) = result {
        log::warn!("could not dump positions to {}: {e}", dir.display());
    }
}

fn positions_dir(csv: &Path) -> Option<PathBuf> {
    let stem = csv.file_stem()?.to_string_lossy().into_owned();
    Some(csv.with_file_name(format!("{stem}_positions")))
}

fn channel_row(
    config: &ExperimentConfig,
    c: &ChannelTable,
    water: &[(String, WaterModel)],
    task: &Task,
) -> uowsn_core::Result<Vec<Row>> {
    let &Task::Channel { water: w, distance, noise, trial } = task else { unreachable!() };
    let (name, model) = &water[w];
    let link = OpticalLink {
        tx_power: c.link.tx_power,
        tx_efficiency: c.link.tx_efficiency,
        rx_efficiency: c.link.rx_efficiency,
        rx_aperture: c.link.rx_aperture,
        divergence: c.link.divergence,
        incidence: c.link.incidence,
        distance,
    };
    let power = received_power(&link, model)?;
    let seed = rng::derive_seed(config.seed, &[w as u64, distance.to_bits(), noise.to_bits(), trial as u64]);
    let sigma = noise / 100.0 * distance;
    let estimate = estimate_range(power, &link, model, sigma, &mut rng::stream(seed, &[]))?;
    Ok(vec![vec![
        name.clone(),
        fmt(distance),
        fmt(noise),
        trial.to_string(),
        fmt(model.extinction),
        fmt(power),
        fmt(estimate),
        seed.to_string(),
    ]])
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Opens the output, works out how much of it is already done, and computes
/// and appends the rest.
fn drive(plan: &Plan, path: &Path, hash: &str, fresh: bool) -> Result<(usize, usize), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut file =
        OpenOptions::new().read(true).write(true).create(true).truncate(fresh).open(path).map_err(io_err(path))?;
    let meta = metadata_path(path);

    let expected: Vec<(usize, Row)> =
        plan.tasks.iter().enumerate().flat_map(|(t, task)| plan.keys(task).into_iter().map(move |k| (t, k))).collect();
    let existing = existing_rows(&mut file, path, plan.header)?;
    if let Some(rows) = &existing {
        if !rows.is_empty() {
            let recorded = fs::read_to_string(&meta).ok().and_then(|m| recorded_hash(&m));
            if recorded.as_deref() != Some(hash) {
                return Err(RunError::Resume {
                    path: path.to_path_buf(),
                    reason: "existing rows were written by a different config".into(),
                });
            }
        }
        if rows.len() > expected.len() {
            return Err(RunError::Resume {
                path: path.to_path_buf(),
                reason: "more rows than the sweep produces".into(),
            });
        }
        for (i, (row, (_, key))) in rows.iter().zip(&expected).enumerate() {
            if row.len() < plan.key_len || row[..plan.key_len] != key[..] {
                return Err(RunError::Resume {
                    path: path.to_path_buf(),
                    reason: format!("data row {} does not match key {}", i + 1, key.join(",")),
                });
            }
        }
    }
    let done = existing.as_ref().map_or(0, Vec::len);

    let meta_text = format!(
        "config_sha256 = \"{hash}\"\ntool = \"{TOOL}\"\nkind = \"{}\"\nrows = {}\n",
        plan.config.kind().as_str(),
        expected.len()
    );
    fs::write(&meta, meta_text).map_err(io_err(&meta))?;

    file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |source| RunError::Csv { path: path.to_path_buf(), source };
    if existing.is_none() {
        out.write_record(plan.header).map_err(csv_err)?;
        out.flush().map_err(io_err(path))?;
    }

    let (first_task, skip) = match expected.get(done) {
        None => (plan.tasks.len(), 0),
        Some(&(t, _)) => (t, done - expected.iter().position(|(u, _)| *u == t).unwrap()),
    };
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut skip = skip;
    for batch in plan.tasks[first_task..].chunks(chunk) {
        let results: Vec<Vec<Row>> = batch.par_iter().map(|t| plan.compute(t)).collect::<Result<_, _>>()?;
        for rows in results {
            for row in rows.into_iter().skip(skip) {
                out.write_record(&row).map_err(csv_err)?;
            }
            skip = 0;
        }
        out.flush().map_err(io_err(path))?;
    }
    Ok((expected.len(), done))
}

fn recorded_hash(meta: &str) -> Option<String> {
    let table: toml::Table = meta.parse().ok()?;
    table.get("config_sha256")?.as_str().map(str::to_string)
}

/// Data rows already in the file, or `None` if it is empty. A trailing
/// partial line left by an interrupted write is cut off.
fn existing_rows(file: &mut File, path: &Path, header: &[&str]) -> Result<Option<Vec<Row>>, RunError> {
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.is_empty() {
        return Ok(None);
    }
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        file.set_len(complete as u64).map_err(io_err(path))?;
        bytes.truncate(complete);
    }
    if bytes.is_empty() {
        return Ok(None);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(&bytes[..]);
    let mut rows = reader.records();
    let first = rows.next().transpose().map_err(|source| RunError::Csv { path: path.to_path_buf(), source })?;
    if first.as_ref().map(|r| r.iter().collect::<Vec<_>>()) != Some(header.to_vec()) {
        return Err(RunError::Resume {
            path: path.to_path_buf(),
            reason: "header does not match this kind of sweep".into(),
        });
    }
    let mut out = Vec::new();
    for r in rows {
        let r = r.map_err(|source| RunError::Csv { path: path.to_path_buf(), source })?;
        out.push(r.iter().map(str::to_string).collect());
    }
    Ok(Some(out))
}
