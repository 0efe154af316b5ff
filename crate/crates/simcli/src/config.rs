//! Experiment files.
//!
//! A config is a TOML document. Every key is checked: unknown keys, wrong
//! types and out-of-range values are all collected and reported together,
//! each with the line it came from. [`ExperimentConfig::to_toml`] writes the
//! validated config back with every default filled in and all angles in
//! radians; feeding that echo back through [`validate`] gives the same value.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};
use uowsn_core::channel::WaterTable;
use uowsn_core::localization::{
    Method, Reflection, RmseFormula, DEFAULT_MAX_ITERS, DEFAULT_RANK, DEFAULT_STALL_FRACTION, DEFAULT_TOL,
};
use uowsn_core::netgraph::{BorderMode, PlacementLaw};

pub const DEFAULT_AREA_SIDE: f64 = 100.0;
pub const DEFAULT_CONNECTIVITY_TRIALS: usize = uowsn_core::connectivity::DEFAULT_TRIALS;
pub const DEFAULT_LOCALIZATION_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    ConnectivitySweep,
    LocalizationSweep,
    ChannelTable,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::ConnectivitySweep, Kind::LocalizationSweep, Kind::ChannelTable];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::ConnectivitySweep => "connectivity_sweep",
            Kind::LocalizationSweep => "localization_sweep",
            Kind::ChannelTable => "channel_table",
        }
    }
}

/// Which closed form goes in the `p_analytic` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticForm {
    /// Forward factor once, conditional backward factor to the power `M`.
    Printed,
    /// Both factors to the power `M`.
    PerNode,
}

impl AnalyticForm {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalyticForm::Printed => "printed",
            AnalyticForm::PerNode => "per_node",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivitySweep {
    pub nodes: Vec<usize>,
    /// Sensing ranges (m).
    pub range: Vec<f64>,
    /// Scan angles (rad).
    pub scan_angle: Vec<f64>,
    pub k: Vec<usize>,
    pub border_mode: Vec<BorderMode>,
    pub area_side: f64,
    pub placement: PlacementLaw,
    pub analytic: AnalyticForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSweep {
    pub nodes: Vec<usize>,
    /// Anchor counts; anchors are drawn uniformly among the nodes.
    pub anchors: Vec<usize>,
    /// Fixed anchor node indices. When set, `anchors` is its length.
    pub anchor_nodes: Option<Vec<usize>>,
    pub range: Vec<f64>,
    pub scan_angle: Vec<f64>,
    /// Ranging error standard deviation, percent of the true distance.
    pub noise_pct: Vec<f64>,
    pub methods: Vec<Method>,
    pub area_side: f64,
    pub border_mode: BorderMode,
    pub rmse: RmseFormula,
    pub reflection: Reflection,
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub stall_fraction: f64,
    pub dump_positions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub tx_power: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub rx_aperture: f64,
    /// Beam divergence (rad).
    pub divergence: f64,
    /// Incidence angle (rad).
    pub incidence: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            tx_power: 0.1,
            tx_efficiency: 0.9,
            rx_efficiency: 0.9,
            rx_aperture: 0.01,
            divergence: PI / 6.0,
            incidence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTable {
    /// Named water presets from the water table.
    pub water: Vec<String>,
    /// Chlorophyll concentrations (mg/m³) evaluated with the spectral model.
    pub chlorophyll: Vec<f64>,
    pub wavelength_nm: f64,
    /// Alternative water table file; the built-in table otherwise.
    pub water_table: Option<PathBuf>,
    /// Link distances (m).
    pub distance: Vec<f64>,
    pub noise_pct: Vec<f64>,
    pub link: LinkParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Connectivity(ConnectivitySweep),
    Localization(LocalizationSweep),
    Channel(ChannelTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// CSV destination; see [`ExperimentConfig::output_path`].
    pub output: Option<PathBuf>,
    /// Trials per grid point (connectivity), seeds per grid point
    /// (localization) or noisy draws per row (channel).
    pub trials: usize,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn kind(&self) -> Kind {
        match self.experiment {
            Experiment::Connectivity(_) => Kind::ConnectivitySweep,
            Experiment::Localization(_) => Kind::LocalizationSweep,
            Experiment::Channel(_) => Kind::ChannelTable,
        }
    }

    /// The configured output, or `<default_dir>/<kind>.csv`.
    pub fn output_path(&self, default_dir: Option<&Path>) -> PathBuf {
        match &self.output {
            Some(p) => p.clone(),
            None => default_dir.unwrap_or(Path::new("results")).join(format!("{}.csv", self.kind().as_str())),
        }
    }

    /// Canonical TOML with defaults filled in and angles in radians.
    pub fn to_toml(&self) -> String {
        let mut out = Echo::default();
        out.put("kind", Value::from(self.kind().as_str()));
        out.put("seed", seed_value(self.seed));
        if let Some(p) = &self.output {
            out.put("output", Value::from(p.display().to_string()));
        }
        out.put("trials", count(self.trials));
        out.put("angle_unit", Value::from("rad"));
        match &self.experiment {
            Experiment::Connectivity(c) => {
                out.put("M", counts(&c.nodes));
                out.put("R", floats(&c.range));
                out.put("phi", floats(&c.scan_angle));
                out.put("k", counts(&c.k));
                out.put("border_mode", words(c.border_mode.iter().map(|b| b.as_str())));
                out.put("area_side", Value::Float(c.area_side));
                out.put("placement", Value::from(placement_str(c.placement)));
                out.put("analytic", Value::from(c.analytic.as_str()));
            }
            Experiment::Localization(l) => {
                out.put("M", counts(&l.nodes));
                match &l.anchor_nodes {
                    Some(idx) => out.put("anchor_nodes", counts(idx)),
                    None => out.put("anchors", counts(&l.anchors)),
                }
                out.put("R", floats(&l.range));
                out.put("phi", floats(&l.scan_angle));
                out.put("noise_pct", floats(&l.noise_pct));
                out.put("methods", words(l.methods.iter().map(|m| m.as_str())));
                out.put("area_side", Value::Float(l.area_side));
                out.put("border_mode", Value::from(l.border_mode.as_str()));
                out.put("rmse", Value::from(rmse_str(l.rmse)));
                out.put("reflection", Value::from(reflection_str(l.reflection)));
                out.put("rank", count(l.rank));
                out.put("max_iters", count(l.max_iters));
                out.put("tol", Value::Float(l.tol));
                out.put("stall_fraction", Value::Float(l.stall_fraction));
                out.put("dump_positions", Value::Boolean(l.dump_positions));
            }
            Experiment::Channel(c) => {
                out.put("water", words(c.water.iter().map(String::as_str)));
                out.put("chlorophyll", floats(&c.chlorophyll));
                out.put("wavelength_nm", Value::Float(c.wavelength_nm));
                if let Some(p) = &c.water_table {
                    out.put("water_table", Value::from(p.display().to_string()));
                }
                out.put("distance", floats(&c.distance));
                out.put("noise_pct", floats(&c.noise_pct));
                out.text.push_str("\n[link]\n");
                out.put("tx_power", Value::Float(c.link.tx_power));
                out.put("tx_efficiency", Value::Float(c.link.tx_efficiency));
                out.put("rx_efficiency", Value::Float(c.link.rx_efficiency));
                out.put("rx_aperture", Value::Float(c.link.rx_aperture));
                out.put("divergence", Value::Float(c.link.divergence));
                out.put("incidence", Value::Float(c.link.incidence));
            }
        }
        out.text
    }
}

#[derive(Default)]
struct Echo {
    text: String,
}

impl Echo {
    fn put(&mut self, key: &str, value: Value) {
        self.text.push_str(&format!("{key} = {value}\n"));
    }
}

fn seed_value(seed: u64) -> Value {
    match i64::try_from(seed) {
        Ok(v) => Value::Integer(v),
        Err(_) => Value::String(seed.to_string()),
    }
}

fn count(n: usize) -> Value {
    Value::Integer(n as i64)
}

fn counts(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&n| count(n)).collect())
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn words<'a>(v: impl Iterator<Item = &'a str>) -> Value {
    Value::Array(v.map(Value::from).collect())
}

fn placement_str(p: PlacementLaw) -> &'static str {
    match p {
        PlacementLaw::FixedCount => "fixed",
        PlacementLaw::Poisson => "poisson",
    }
}

fn rmse_str(r: RmseFormula) -> &'static str {
    match r {
        RmseFormula::Printed => "printed",
        RmseFormula::Conventional => "conventional",
    }
}

fn reflection_str(r: Reflection) -> &'static str {
    match r {
        Reflection::Allow => "allow",
        Reflection::Forbid => "forbid",
    }
}

/// One problem in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses and checks a whole config file.
pub fn validate(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| line_of(text, s.start));
        ConfigErrors(vec![FieldError { line, field: "syntax".into(), message: e.message().trim().to_string() }])
    })?;
    let lines = KeyLines::scan(text);
    let mut errors = Vec::new();
    let config = {
        let mut top = Fields::new(&table, "", &lines, &mut errors);
        read_config(&mut top)
    };
    if errors.is_empty() {
        Ok(config.expect("no errors means a complete config"))
    } else {
        errors.sort_by_key(|e| (e.line.unwrap_or(0), e.field.clone()));
        Err(ConfigErrors(errors))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn read_config(f: &mut Fields) -> Option<ExperimentConfig> {
    let kind = f.word("kind", None).and_then(|k| {
        let kind = Kind::ALL.into_iter().find(|c| c.as_str() == k);
        if kind.is_none() {
            let names: Vec<_> = Kind::ALL.iter().map(|c| c.as_str()).collect();
            f.error("kind", format!("unknown kind `{k}`; expected one of {}", names.join(", ")));
        }
        kind
    });
    let seed = f.seed();
    let output = f.word_opt("output").map(PathBuf::from);
    let degrees = match f.word("angle_unit", Some("rad")).as_deref() {
        Some("rad") | None => false,
        Some("deg") => true,
        Some(other) => {
            f.error("angle_unit", format!("`{other}` is not `rad` or `deg`"));
            false
        }
    };
    let default_trials = match kind {
        Some(Kind::ConnectivitySweep) => DEFAULT_CONNECTIVITY_TRIALS,
        Some(Kind::LocalizationSweep) => DEFAULT_LOCALIZATION_TRIALS,
        _ => 1,
    };
    let trials = f.count("trials", Some(default_trials));
    if trials == Some(0) {
        f.error("trials", "must be at least 1");
    }
    let angle = |v: f64| if degrees { v.to_radians() } else { v };

    let experiment = match kind {
        Some(Kind::ConnectivitySweep) => read_connectivity(f, angle).map(Experiment::Connectivity),
        Some(Kind::LocalizationSweep) => read_localization(f, angle).map(Experiment::Localization),
        Some(Kind::ChannelTable) => read_channel(f, angle).map(Experiment::Channel),
        None => None,
    };
    if kind.is_some() {
        f.finish_unknown(kind.map(Kind::as_str));
    }
    Some(ExperimentConfig { seed: seed?, output, trials: trials?, experiment: experiment? })
}

fn read_connectivity(f: &mut Fields, angle: impl Fn(f64) -> f64) -> Option<ConnectivitySweep> {
    let nodes = f.counts("M", None);
    let range = f.floats("R", None);
    let scan_angle = f.floats("phi", None).map(|v| v.into_iter().map(&angle).collect::<Vec<_>>());
    let k = f.counts("k", Some(vec![1]));
    let border_mode = f
        .words("border_mode", Some(vec!["bounded".into()]))
        .and_then(|w| f.parse_each("border_mode", &w, |s| s.parse::<BorderMode>().ok()));
    let area_side = f.float("area_side", Some(DEFAULT_AREA_SIDE));
    let placement = f.word("placement", Some("fixed")).and_then(|p| match p.as_str() {
        "fixed" => Some(PlacementLaw::FixedCount),
        "poisson" => Some(PlacementLaw::Poisson),
        other => {
            f.error("placement", format!("`{other}` is not `fixed` or `poisson`"));
            None
        }
    });
    let analytic = f.word("analytic", Some("printed")).and_then(|a| match a.as_str() {
        "printed" => Some(AnalyticForm::Printed),
        "per_node" => Some(AnalyticForm::PerNode),
        other => {
            f.error("analytic", format!("`{other}` is not `printed` or `per_node`"));
            None
        }
    });

    f.check_all("M", &nodes, |&m| m >= 2, "node counts must be at least 2");
    f.check_all("R", &range, |&r| r > 0.0, "ranges must be positive");
    check_scan_angles(f, &scan_angle);
    f.check_all("k", &k, |&k| k >= 1, "k must be at least 1");
    check_area(f, area_side);
    Some(ConnectivitySweep {
        nodes: nodes?,
        range: range?,
        scan_angle: scan_angle?,
        k: k?,
        border_mode: border_mode?,
        area_side: area_side?,
        placement: placement?,
        analytic: analytic?,
    })
}

fn read_localization(f: &mut Fields, angle: impl Fn(f64) -> f64) -> Option<LocalizationSweep> {
    let nodes = f.counts("M", None);
    let fixed = f.has("anchor_nodes");
    let anchor_nodes = if fixed { f.counts("anchor_nodes", None) } else { None };
    let anchors = if fixed {
        if f.take("anchors").is_some() {
            f.error("anchors", "give either `anchors` or `anchor_nodes`, not both");
        }
        anchor_nodes.as_ref().map(|idx| vec![idx.len()])
    } else {
        f.counts("anchors", None)
    };
    let range = f.floats("R", None);
    let scan_angle = f.floats("phi", None).map(|v| v.into_iter().map(&angle).collect::<Vec<_>>());
    let noise_pct = f.floats("noise_pct", None);
    let all: Vec<String> = Method::ALL.iter().map(|m| m.as_str().to_string()).collect();
    let methods = f.words("methods", Some(all)).and_then(|w| f.parse_each("methods", &w, |s| s.parse::<Method>().ok()));
    let area_side = f.float("area_side", Some(DEFAULT_AREA_SIDE));
    let border_mode = f.word("border_mode", Some("bounded")).and_then(|b| match b.parse::<BorderMode>() {
        Ok(m) => Some(m),
        Err(_) => {
            f.error("border_mode", format!("`{b}` is not `bounded` or `torus`"));
            None
        }
    });
    let rmse = f.word("rmse", Some("printed")).and_then(|r| match r.as_str() {
        "printed" => Some(RmseFormula::Printed),
        "conventional" => Some(RmseFormula::Conventional),
        other => {
            f.error("rmse", format!("`{other}` is not `printed` or `conventional`"));
            None
        }
    });
    let reflection = f.word("reflection", Some("allow")).and_then(|r| match r.as_str() {
        "allow" => Some(Reflection::Allow),
        "forbid" => Some(Reflection::Forbid),
        other => {
            f.error("reflection", format!("`{other}` is not `allow` or `forbid`"));
            None
        }
    });
    let rank = f.count("rank", Some(DEFAULT_RANK));
    let max_iters = f.count("max_iters", Some(DEFAULT_MAX_ITERS));
    let tol = f.float("tol", Some(DEFAULT_TOL));
    let stall_fraction = f.float("stall_fraction", Some(DEFAULT_STALL_FRACTION));
    let dump_positions = f.boolean("dump_positions", false);

    f.check_all("M", &nodes, |&m| m >= 3, "node counts must be at least 3");
    f.check_all("R", &range, |&r| r > 0.0, "ranges must be positive");
    check_scan_angles(f, &scan_angle);
    f.check_all("noise_pct", &noise_pct, |&n| n >= 0.0, "noise must be >= 0");
    check_area(f, area_side);
    if !fixed {
        f.check_all("anchors", &anchors, |&a| a >= 3, "at least 3 anchors are needed");
    }
    if let (Some(a), Some(m)) = (&anchors, &nodes) {
        let fewest = m.iter().min().copied().unwrap_or(0);
        if a.iter().any(|&a| a > fewest) {
            let key = if fixed { "anchor_nodes" } else { "anchors" };
            f.error(key, format!("more anchors than the {fewest} nodes of the smallest network"));
        }
    }
    if let (Some(idx), Some(m)) = (&anchor_nodes, &nodes) {
        let fewest = m.iter().min().copied().unwrap_or(0);
        if idx.len() < 3 {
            f.error("anchor_nodes", "at least 3 anchors are needed");
        }
        if idx.iter().any(|&i| i >= fewest) {
            f.error("anchor_nodes", format!("indices must be below {fewest}"));
        }
        if idx.iter().collect::<BTreeSet<_>>().len() != idx.len() {
            f.error("anchor_nodes", "indices must be distinct");
        }
    }
    if rank == Some(0) {
        f.error("rank", "must be at least 1");
    }
    if tol.is_some_and(|t| t <= 0.0) {
        f.error("tol", "must be positive");
    }
    if stall_fraction.is_some_and(|s| s < 0.0) {
        f.error("stall_fraction", "must be >= 0");
    }
    Some(LocalizationSweep {
        nodes: nodes?,
        anchors: anchors?,
        anchor_nodes: if fixed { Some(anchor_nodes?) } else { None },
        range: range?,
        scan_angle: scan_angle?,
        noise_pct: noise_pct?,
        methods: methods?,
        area_side: area_side?,
        border_mode: border_mode?,
        rmse: rmse?,
        reflection: reflection?,
        rank: rank?,
        max_iters: max_iters?,
        tol: tol?,
        stall_fraction: stall_fraction?,
        dump_positions,
    })
}

fn read_channel(f: &mut Fields, angle: impl Fn(f64) -> f64) -> Option<ChannelTable> {
    let water_table = f.word_opt("water_table").map(PathBuf::from);
    let table = match &water_table {
        None => Some(WaterTable::builtin()),
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match WaterTable::parse(&text) {
                Ok(t) => Some(t),
                Err(e) => {
                    f.error("water_table", format!("{}: {e}", path.display()));
                    None
                }
            },
            Err(e) => {
                f.error("water_table", format!("{}: {e}", path.display()));
                None
            }
        },
    };
    let default_water =
        table.as_ref().map(|t| t.presets().iter().map(|p| p.name.clone()).collect()).unwrap_or_default();
    let chlorophyll = f.floats_or_empty("chlorophyll");
    let water = if f.has("water") || chlorophyll.as_ref().is_none_or(|c| c.is_empty()) {
        f.words_or_empty("water", default_water)
    } else {
        Some(Vec::new())
    };
    let wavelength_nm = f.float("wavelength_nm", Some(532.0));
    let distance = f.floats("distance", None);
    let noise_pct = f.floats("noise_pct", Some(vec![0.0]));

    let link = {
        let default = LinkParams::default();
        let sub = match f.take("link") {
            None => Some(Table::new()),
            Some(Value::Table(t)) => Some(t.clone()),
            Some(_) => {
                f.error("link", "must be a table");
                None
            }
        };
        sub.and_then(|t| {
            let mut g = Fields::new(&t, "link", f.lines, f.errors);
            let l = LinkParams {
                tx_power: g.float("tx_power", Some(default.tx_power))?,
                tx_efficiency: g.float("tx_efficiency", Some(default.tx_efficiency))?,
                rx_efficiency: g.float("rx_efficiency", Some(default.rx_efficiency))?,
                rx_aperture: g.float("rx_aperture", Some(default.rx_aperture))?,
                divergence: g.angle("divergence", default.divergence, &angle)?,
                incidence: g.angle("incidence", default.incidence, &angle)?,
            };
            g.finish_unknown(None);
            if !(l.tx_power > 0.0) {
                g.error("tx_power", "must be positive");
            }
            if !(l.rx_aperture > 0.0) {
                g.error("rx_aperture", "must be positive");
            }
            for (key, v) in [("tx_efficiency", l.tx_efficiency), ("rx_efficiency", l.rx_efficiency)] {
                if !(v > 0.0 && v <= 1.0) {
                    g.error(key, "must be in (0, 1]");
                }
            }
            if !(l.divergence > 0.0 && l.divergence <= PI) {
                g.error("divergence", "must be in (0, pi]");
            }
            if !(l.incidence >= 0.0 && l.incidence < PI / 2.0) {
                g.error("incidence", "must be in [0, pi/2)");
            }
            Some(l)
        })
    };

    if let (Some(t), Some(w)) = (&table, &water) {
        for name in w {
            if t.preset(name).is_none() {
                f.error("water", format!("no preset named `{name}` in the water table"));
            }
        }
    }
    if water.as_ref().is_some_and(|w| w.is_empty()) && chlorophyll.as_ref().is_some_and(|c| c.is_empty()) {
        f.error("water", "need at least one preset or chlorophyll value");
    }
    f.check_all("chlorophyll", &chlorophyll, |&c| (0.0..=12.0).contains(&c), "must be within [0, 12] mg/m^3");
    if let (Some(t), Some(w)) = (&table, wavelength_nm) {
        let (lo, hi) = t.wavelength_span();
        if !(lo..=hi).contains(&w) {
            f.error("wavelength_nm", format!("{w} outside the table span [{lo}, {hi}]"));
        }
    }
    f.check_all("distance", &distance, |&d| d > 0.0, "distances must be positive");
    f.check_all("noise_pct", &noise_pct, |&n| n >= 0.0, "noise must be >= 0");
    Some(ChannelTable {
        water: water?,
        chlorophyll: chlorophyll?,
        wavelength_nm: wavelength_nm?,
        water_table,
        distance: distance?,
        noise_pct: noise_pct?,
        link: link?,
    })
}

fn check_scan_angles(f: &mut Fields, scan_angle: &Option<Vec<f64>>) {
    f.check_all("phi", scan_angle, |&p| p > 0.0 && p <= TAU * (1.0 + 1e-12), "scan angles must be in (0, 2pi]");
}

fn check_area(f: &mut Fields, area_side: Option<f64>) {
    if area_side.is_some_and(|a| a <= 0.0) {
        f.error("area_side", "must be positive");
    }
}

/// First line on which each `section.key` is assigned.
struct KeyLines(HashMap<(String, String), usize>);

impl KeyLines {
    fn scan(text: &str) -> Self {
        let mut map = HashMap::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('[') {
                section = rest.trim_end_matches(']').trim().to_string();
            } else if let Some((key, _)) = t.split_once('=') {
                let key = key.trim().trim_matches('"').to_string();
                map.entry((section.clone(), key)).or_insert(i + 1);
            }
        }
        KeyLines(map)
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.0.get(&(section.to_string(), key.to_string())).copied()
    }
}

/// Typed access to one TOML table that remembers which keys were read.
struct Fields<'a> {
    table: &'a Table,
    section: &'static str,
    lines: &'a KeyLines,
    errors: &'a mut Vec<FieldError>,
    read: BTreeSet<String>,
}

impl<'a> Fields<'a> {
    fn new(table: &'a Table, section: &'static str, lines: &'a KeyLines, errors: &'a mut Vec<FieldError>) -> Self {
        Fields { table, section, lines, errors, read: BTreeSet::new() }
    }

    fn error(&mut self, key: &str, message: impl Into<String>) {
        let field = if self.section.is_empty() { key.to_string() } else { format!("{}.{key}", self.section) };
        self.errors.push(FieldError { line: self.lines.line(self.section, key), field, message: message.into() });
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.read.insert(key.to_string());
        self.table.get(key)
    }

    fn missing(&mut self, key: &str) {
        self.error(key, "missing required key");
    }

    fn finish_unknown(&mut self, kind: Option<&str>) {
        let unknown: Vec<String> = self.table.keys().filter(|k| !self.read.contains(*k)).cloned().collect();
        for key in unknown {
            let message = match kind {
                Some(kind) => format!("unknown key for kind {kind}"),
                None => "unknown key".to_string(),
            };
            self.error(&key, message);
        }
    }

    fn seed(&mut self) -> Option<u64> {
        match self.take("seed") {
            None => {
                self.missing("seed");
                None
            }
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::String(s)) if s.parse::<u64>().is_ok() => s.parse().ok(),
            Some(other) => {
                self.error("seed", format!("expected a non-negative 64-bit integer, got {other}"));
                None
            }
        }
    }

    fn as_float(v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    fn float(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        match self.take(key) {
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                default
            }
            Some(v) => Self::as_float(v).or_else(|| {
                self.error(key, format!("expected a finite number, got {v}"));
                None
            }),
        }
    }

    /// An angle in the file's unit; the default is already in radians.
    fn angle(&mut self, key: &str, default: f64, convert: impl Fn(f64) -> f64) -> Option<f64> {
        if self.has(key) {
            self.float(key, None).map(convert)
        } else {
            Some(default)
        }
    }

    fn count(&mut self, key: &str, default: Option<usize>) -> Option<usize> {
        match self.take(key) {
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                default
            }
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(v) => {
                self.error(key, format!("expected a non-negative integer, got {v}"));
                None
            }
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.error(key, format!("expected true or false, got {v}"));
                default
            }
        }
    }

    fn word_opt(&mut self, key: &str) -> Option<String> {
        match self.take(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.error(key, format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn word(&mut self, key: &str, default: Option<&str>) -> Option<String> {
        if !self.has(key) {
            self.read.insert(key.to_string());
            if default.is_none() {
                self.missing(key);
            }
            return default.map(str::to_string);
        }
        self.word_opt(key)
    }

    /// A list, or a single value standing for a one-element list.
    fn list<T>(
        &mut self,
        key: &str,
        default: Option<Vec<T>>,
        allow_empty: bool,
        item: impl Fn(&Value) -> Option<T>,
        what: &str,
    ) -> Option<Vec<T>> {
        let values: Vec<&Value> = match self.take(key) {
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                return default;
            }
            Some(Value::Array(a)) => a.iter().collect(),
            Some(v) => vec![v],
        };
        if values.is_empty() && !allow_empty {
            self.error(key, "list must not be empty");
            return None;
        }
        let mut out = Vec::with_capacity(values.len());
        for v in values {
            match item(v) {
                Some(x) => out.push(x),
                None => {
                    self.error(key, format!("expected {what}, got {v}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn floats(&mut self, key: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        self.list(key, default, false, Self::as_float, "finite numbers")
    }

    fn floats_or_empty(&mut self, key: &str) -> Option<Vec<f64>> {
        self.list(key, Some(Vec::new()), true, Self::as_float, "finite numbers")
    }

    fn counts(&mut self, key: &str, default: Option<Vec<usize>>) -> Option<Vec<usize>> {
        let item = |v: &Value| match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        };
        self.list(key, default, false, item, "non-negative integers")
    }

    fn words(&mut self, key: &str, default: Option<Vec<String>>) -> Option<Vec<String>> {
        let item = |v: &Value| v.as_str().map(str::to_string);
        self.list(key, default, false, item, "strings")
    }

    fn words_or_empty(&mut self, key: &str, default: Vec<String>) -> Option<Vec<String>> {
        let item = |v: &Value| v.as_str().map(str::to_string);
        self.list(key, Some(default), true, item, "strings")
    }

    fn parse_each<T>(&mut self, key: &str, words: &[String], parse: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
        let mut out = Vec::new();
        for w in words {
            match parse(w) {
                Some(v) => out.push(v),
                None => {
                    self.error(key, format!("unknown value `{w}`"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn check_all<T>(&mut self, key: &str, values: &Option<Vec<T>>, ok: impl Fn(&T) -> bool, message: &str) {
        if let Some(v) = values {
            if !v.iter().all(ok) {
                self.error(key, message.to_string());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONNECTIVITY: &str = r#"
kind = "connectivity_sweep"
seed = 7
M = [100, 500]
R = [1, 2, 3]
phi = [40, 90]
angle_unit = "deg"
border_mode = ["torus", "bounded"]
"#;

    #[test]
    fn empty_file_names_required_keys() {
        let err = validate("").unwrap_err();
        let fields: Vec<_> = err.0.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"kind") && fields.contains(&"seed"), "{err}");
    }

    #[test]
    fn degrees_are_echoed_in_radians() {
        let c = validate(CONNECTIVITY).unwrap();
        let Experiment::Connectivity(s) = &c.experiment else { panic!() };
        assert_eq!(s.scan_angle, vec![40f64.to_radians(), 90f64.to_radians()]);
        let echo = c.to_toml();
        assert!(echo.contains("angle_unit = \"rad\""));
        assert_eq!(validate(&echo).unwrap(), c);
    }

    #[test]
    fn defaults_are_filled() {
        let c = validate(CONNECTIVITY).unwrap();
        assert_eq!(c.trials, DEFAULT_CONNECTIVITY_TRIALS);
        let Experiment::Connectivity(s) = &c.experiment else { panic!() };
        assert_eq!(s.k, vec![1]);
        assert_eq!(s.area_side, DEFAULT_AREA_SIDE);
    }

    #[test]
    fn errors_are_aggregated_with_lines() {
        let text = "kind = \"localization_sweep\"\nseed = -1\nM = [100]\nanchors = [2]\nR = 40\nphi = 9\nnoise_pct = [5]\nmethod = [\"x\"]\n";
        let err = validate(text).unwrap_err();
        let got: Vec<_> = err.0.iter().map(|e| (e.line, e.field.as_str())).collect();
        assert!(got.contains(&(Some(2), "seed")), "{err}");
        assert!(got.contains(&(Some(4), "anchors")), "{err}");
        assert!(got.contains(&(Some(6), "phi")), "{err}");
        assert!(got.contains(&(Some(8), "method")), "{err}");
    }

    #[test]
    fn keys_from_another_kind_are_rejected() {
        let text = format!("{CONNECTIVITY}noise_pct = [5]\n");
        let err = validate(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].field, "noise_pct");
        assert_eq!(err.0[0].line, Some(9));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = validate("kind = \"channel_table\"\nseed = \n").unwrap_err();
        assert_eq!(err.0[0].field, "syntax");
        assert_eq!(err.0[0].line, Some(2));
    }

    #[test]
    fn channel_round_trip_and_link_section() {
        let text = "kind = \"channel_table\"\nseed = 1\ndistance = [1, 10]\nangle_unit = \"deg\"\n[link]\ndivergence = 20\nbogus = 1\n";
        let err = validate(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!((err.0[0].line, err.0[0].field.as_str()), (Some(7), "link.bogus"));
        let c = validate(&text.replace("bogus = 1\n", "")).unwrap();
        let Experiment::Channel(ch) = &c.experiment else { panic!() };
        assert_eq!(ch.link.divergence, 20f64.to_radians());
        assert_eq!(ch.water.len(), 4);
        assert_eq!(validate(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn localization_round_trip_with_fixed_anchors() {
        let text = "kind = \"localization_sweep\"\nseed = \"18446744073709551615\"\nM = 50\nanchor_nodes = [0, 1, 2, 3]\nR = 40\nphi = 2.356\nnoise_pct = [2, 4.5]\nmethods = [\"proposed\"]\n";
        let c = validate(text).unwrap();
        assert_eq!(c.seed, u64::MAX);
        let Experiment::Localization(l) = &c.experiment else { panic!() };
        assert_eq!(l.anchors, vec![4]);
        assert_eq!(validate(&c.to_toml()).unwrap(), c);
    }
}
