//! Range-based localization on sector graphs.
//!
//! The proposed pipeline completes the squared-distance matrix at rank
//! `dims + 2`, takes the elementwise square root, embeds it with classical
//! MDS and maps the relative layout onto the anchors with a similarity
//! transform. MDS-MAP (shortest-path fill, no completion) and DV-hop are
//! provided as baselines.

mod completion;
mod dvhop;
mod mds;
mod procrustes;

use nalgebra::{DMatrix, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::netgraph::{all_pairs_shortest_paths, hop_counts, DirectedSectorGraph};
use crate::{Error, Result};

pub use completion::{
    complete_symmetric, masked_gradient, masked_objective, masked_residual, Completion, CompletionOptions, StopReason,
    DEFAULT_MAX_ITERS, DEFAULT_RANK, DEFAULT_STALL_FRACTION, DEFAULT_TOL,
};
pub use mds::{mds_embed, pairwise_distances, Embedding};
pub use procrustes::{procrustes_align, procrustes_align_with, Reflection, Similarity};

/// Floor for a noisy range reading (m).
pub const MIN_OBSERVED_DISTANCE: f64 = 1e-6;

/// Ranges measured over the links of a sector graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDistanceMatrix {
    /// Symmetrized ranges; `NaN` where the pair was not observed, 0 on the
    /// diagonal.
    values: DMatrix<f64>,
    /// `(i, j)` observed in either direction; diagonal true.
    mask: DMatrix<bool>,
    /// Raw per-direction readings; `NaN` where `i` did not range `j`.
    directed: DMatrix<f64>,
}

impl ObservedDistanceMatrix {
    /// Builds the matrix from per-direction readings. `NaN` marks a missing
    /// reading; the diagonal is ignored.
    pub fn from_directed(directed: DMatrix<f64>) -> Result<Self> {
        let m = directed.nrows();
        if directed.ncols() != m {
            return Err(Error::domain("observations", "matrix must be square"));
        }
        let mut directed = directed;
        for i in 0..m {
            directed[(i, i)] = 0.0;
        }
        if let Some(bad) = directed.iter().find(|v| !(v.is_nan() || (v.is_finite() && **v >= 0.0))) {
            return Err(Error::domain("observations", format!("reading {bad} is not a finite range")));
        }
        let mut values = DMatrix::from_element(m, m, f64::NAN);
        let mut mask = DMatrix::from_element(m, m, false);
        for i in 0..m {
            for j in 0..m {
                let (a, b) = (directed[(i, j)], directed[(j, i)]);
                let v = match (a.is_nan(), b.is_nan()) {
                    (false, false) => 0.5 * (a + b),
                    (false, true) => a,
                    (true, false) => b,
                    (true, true) => continue,
                };
                values[(i, j)] = v;
                mask[(i, j)] = true;
            }
        }
        Ok(ObservedDistanceMatrix { values, mask, directed })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn directed(&self) -> &DMatrix<f64> {
        &self.directed
    }

    /// Number of observed off-diagonal pairs `(i, j)`, counting both orders.
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count() - self.len()
    }

    /// Observed entries where present, symmetrized directed shortest-path
    /// lengths elsewhere, and the largest observed range for pairs with no
    /// path either way.
    pub fn shortest_path_fill(&self) -> Result<DMatrix<f64>> {
        let m = self.len();
        let weights = self.directed.map(|v| if v.is_nan() { f64::INFINITY } else { v });
        let sp = all_pairs_shortest_paths(&weights)?;
        let fallback = self.values.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b));
        Ok(DMatrix::from_fn(m, m, |i, j| {
            if self.mask[(i, j)] {
                return self.values[(i, j)];
            }
            match (sp[(i, j)].is_finite(), sp[(j, i)].is_finite()) {
                (true, true) => 0.5 * (sp[(i, j)] + sp[(j, i)]),
                (true, false) => sp[(i, j)],
                (false, true) => sp[(j, i)],
                (false, false) => fallback,
            }
        }))
    }
}

/// Ranges every directed link of `g` with Gaussian error of standard
/// deviation `noise_fraction · d`. Each direction gets its own draw, in row-major
/// order over the adjacency.
pub fn observe_distances<R: Rng + ?Sized>(
    g: &DirectedSectorGraph,
    noise_fraction: f64,
    rng: &mut R,
) -> Result<ObservedDistanceMatrix> {
    if !(noise_fraction >= 0.0 && noise_fraction.is_finite()) {
        return Err(Error::domain("noise_fraction", format!("{noise_fraction} must be >= 0")));
    }
    let m = g.len();
    let mut directed = DMatrix::from_element(m, m, f64::NAN);
    for i in 0..m {
        for j in 0..m {
            if g.has_edge(i, j) {
                let d = g.distance(i, j);
                let z: f64 = StandardNormal.sample(rng);
                directed[(i, j)] = (d + noise_fraction * d * z).max(MIN_OBSERVED_DISTANCE);
            }
        }
    }
    ObservedDistanceMatrix::from_directed(directed)
}

/// Nodes with known positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    indices: Vec<usize>,
    true_positions: DMatrix<f64>,
}

impl AnchorSet {
    pub fn new(indices: Vec<usize>, true_positions: DMatrix<f64>) -> Result<Self> {
        let k = indices.len();
        if k < 3 {
            return Err(Error::domain("anchors", format!("need at least 3 anchors, got {k}")));
        }
        if true_positions.shape() != (k, 2) {
            return Err(Error::domain("anchors", "positions must be k x 2"));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::domain("anchors", "anchor indices must be distinct"));
        }
        Ok(AnchorSet { indices, true_positions })
    }

    /// Anchors at the given nodes, with their true positions from `g`.
    pub fn from_graph(g: &DirectedSectorGraph, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= g.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: g.len() });
        }
        let pos = g.positions();
        let true_positions = DMatrix::from_fn(indices.len(), 2, |r, c| pos[(indices[r], c)]);
        Self::new(indices, true_positions)
    }

    /// `count` distinct nodes chosen uniformly, in ascending order.
    pub fn random<R: Rng + ?Sized>(g: &DirectedSectorGraph, count: usize, rng: &mut R) -> Result<Self> {
        if count > g.len() {
            return Err(Error::domain("anchors", format!("{count} anchors but only {} nodes", g.len())));
        }
        let mut idx = rand::seq::index::sample(rng, g.len(), count).into_vec();
        idx.sort_unstable();
        Self::from_graph(g, idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn true_positions(&self) -> &DMatrix<f64> {
        &self.true_positions
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    MdsMap,
    DvHop,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::MdsMap, Method::DvHop];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::MdsMap => "mds_map",
            Method::DvHop => "dv_hop",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain("method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmseFormula {
    /// `sqrt(Σ‖e_i‖²) / M`, with `M` the total node count.
    Printed,
    /// `sqrt(Σ‖e_i‖² / n)` over the `n` scored nodes.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeOptions {
    pub completion: CompletionOptions,
    pub reflection: Reflection,
    pub rmse: RmseFormula,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions {
            completion: CompletionOptions::default(),
            reflection: Reflection::Allow,
            rmse: RmseFormula::Printed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    /// `M × 2`; unlocalized nodes carry a finite placeholder.
    pub estimated_positions: DMatrix<f64>,
    pub rmse: f64,
    /// Non-anchor nodes with no path to any anchor.
    pub unlocalized: usize,
    pub localized: Vec<bool>,
    /// Completion steps (0 for the baselines).
    pub iterations: usize,
    /// Final relative masked completion residual (0 for the baselines).
    pub completion_residual: f64,
    pub stop: Option<StopReason>,
    pub degenerate_embedding: bool,
    pub alignment: Option<Similarity>,
}

pub fn localize(
    g: &DirectedSectorGraph,
    obs: &ObservedDistanceMatrix,
    anchors: &AnchorSet,
    method: Method,
) -> Result<LocalizationResult> {
    localize_with(g, obs, anchors, method, &LocalizeOptions::default())
}

pub fn localize_with(
    g: &DirectedSectorGraph,
    obs: &ObservedDistanceMatrix,
    anchors: &AnchorSet,
    method: Method,
    options: &LocalizeOptions,
) -> Result<LocalizationResult> {
    let m = g.len();
    if obs.len() != m {
        return Err(Error::domain("observations", format!("{} rows for {m} nodes", obs.len())));
    }
    if let Some(&bad) = anchors.indices().iter().find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange { index: bad, len: m });
    }
    let links = DMatrix::from_fn(m, m, |i, j| i != j && obs.mask()[(i, j)]);

    let mut result = match method {
        Method::DvHop => {
            let (estimated_positions, localized) = dvhop::dv_hop(&links, anchors);
            LocalizationResult {
                estimated_positions,
                rmse: 0.0,
                unlocalized: 0,
                localized,
                iterations: 0,
                completion_residual: 0.0,
                stop: None,
                degenerate_embedding: false,
                alignment: None,
            }
        }
        Method::Proposed | Method::MdsMap => {
            let fill = obs.shortest_path_fill()?;
            let (distances, completion) = if method == Method::Proposed {
                let squared_obs = obs.values().map(|v| v * v);
                let c = complete_symmetric(&squared_obs, obs.mask(), &fill.map(|v| v * v), &options.completion)?;
                let mut d = c.matrix.map(|v| v.max(0.0).sqrt());
                d.fill_diagonal(0.0);
                (d, Some(c))
            } else {
                (fill, None)
            };
            let embedding = mds_embed(&distances, 2)?;
            let relative = DMatrix::from_fn(anchors.len(), 2, |r, c| embedding.coords[(anchors.indices()[r], c)]);
            let sim = procrustes_align_with(&relative, anchors.true_positions(), options.reflection)?;
            let mut estimated_positions = sim.apply(&embedding.coords);
            for (r, &a) in anchors.indices().iter().enumerate() {
                estimated_positions.row_mut(a).copy_from(&anchors.true_positions().row(r));
            }
            LocalizationResult {
                estimated_positions,
                rmse: 0.0,
                unlocalized: 0,
                localized: reachable_from_anchors(&links, anchors),
                iterations: completion.as_ref().map_or(0, |c| c.iterations),
                completion_residual: completion.as_ref().map_or(0.0, |c| c.residual),
                stop: completion.map(|c| c.stop),
                degenerate_embedding: embedding.degenerate,
                alignment: Some(sim),
            }
        }
    };
    let (rmse_value, unlocalized) =
        rmse(&result.estimated_positions, &g.positions(), anchors.indices(), &result.localized, options.rmse);
    result.rmse = rmse_value;
    result.unlocalized = unlocalized;
    Ok(result)
}

fn reachable_from_anchors(links: &DMatrix<bool>, anchors: &AnchorSet) -> Vec<bool> {
    let mut seen = vec![false; links.nrows()];
    for &a in anchors.indices() {
        for (s, h) in seen.iter_mut().zip(hop_counts(links, a)) {
            *s |= h.is_some();
        }
    }
    seen
}

/// Localization error over non-anchor nodes that were placed. Returns the
/// error and the number of non-anchor nodes left out because they were not.
pub fn rmse(
    estimated: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    anchor_indices: &[usize],
    localized: &[bool],
    formula: RmseFormula,
) -> (f64, usize) {
    let m = truth.nrows();
    let (mut sum, mut scored, mut skipped) = (0.0, 0usize, 0usize);
    for i in (0..m).filter(|i| !anchor_indices.contains(i)) {
        if !localized[i] {
            skipped += 1;
            continue;
        }
        let e = Vector2::new(estimated[(i, 0)] - truth[(i, 0)], estimated[(i, 1)] - truth[(i, 1)]);
        sum += e.norm_squared();
        scored += 1;
    }
    let value = match formula {
        RmseFormula::Printed if m > 0 => sum.sqrt() / m as f64,
        RmseFormula::Conventional if scored > 0 => (sum / scored as f64).sqrt(),
        _ => 0.0,
    };
    (value, skipped)
}
