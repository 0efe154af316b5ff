//! Connectivity probabilities of random sector graphs.
//!
//! The closed forms assume a unit-area deployment, so ranges are divided by
//! the side of the square before use. With `Q = -φ·M·R²/2` the number of
//! descendants (and of antecedents) of a node is Poisson with mean `-Q`.
//!
//! The expressions are asymptotic (`M → ∞`, `R ≪ 1`) and can leave `[0, 1]`
//! in extreme regimes; every result is clamped and flagged when that happens.
//!
//! Two network-level forms are provided: [`p_connected`] multiplies one
//! forward factor by the conditional backward factor raised to `M`, and
//! [`p_connected_per_node`] raises the full per-node probability to `M`.

mod monte_carlo;

use std::f64::consts::PI;

use crate::{Error, Result};

pub use monte_carlo::{
    monte_carlo_backward_given_forward, monte_carlo_degree_tail, monte_carlo_p_connected, MonteCarloConfig,
    MonteCarloEstimate, DEFAULT_TRIALS,
};

/// Above this normalized range the small-range approximation is poor.
pub const ASYMPTOTIC_RANGE_LIMIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectivityParams {
    pub nodes: usize,
    /// Range normalized to a unit-area square.
    pub range: f64,
    pub scan_angle: f64,
}

impl ConnectivityParams {
    /// Normalizes a range in meters by the side of the deployment square.
    pub fn new(nodes: usize, range_m: f64, scan_angle: f64, area_side: f64) -> Result<Self> {
        if !(area_side > 0.0) {
            return Err(Error::domain("area_side", format!("{area_side} must be positive")));
        }
        Self::unit(nodes, range_m / area_side, scan_angle)
    }

    pub fn unit(nodes: usize, range: f64, scan_angle: f64) -> Result<Self> {
        if !(range >= 0.0 && range.is_finite()) {
            return Err(Error::domain("range", format!("{range} must be >= 0")));
        }
        if !(0.0..=2.0 * PI).contains(&scan_angle) {
            return Err(Error::domain("scan_angle", format!("{scan_angle} outside [0, 2pi]")));
        }
        let p = ConnectivityParams { nodes, range, scan_angle };
        if !p.is_asymptotic() {
            log::debug!("normalized range {range} is outside the small-range regime");
        }
        Ok(p)
    }

    /// `Q = -φ·M·R²/2`; minus the mean descendant count.
    pub fn q(&self) -> f64 {
        -self.scan_angle * self.nodes as f64 * self.range * self.range / 2.0
    }

    pub fn is_asymptotic(&self) -> bool {
        self.range <= ASYMPTOTIC_RANGE_LIMIT
    }

    /// Normalized sector area `φR²/2`.
    fn sector_area(&self) -> f64 {
        self.scan_angle * self.range * self.range / 2.0
    }

    /// `-Q(2π-φ) / (π(2-φR²))`, the exponent shared by the backward terms.
    fn reverse_exponent(&self) -> f64 {
        let phi = self.scan_angle;
        -self.q() * (2.0 * PI - phi) / (PI * (2.0 - phi * self.range * self.range))
    }

    fn require_nodes(&self, min: usize) -> Result<()> {
        if self.nodes < min {
            return Err(Error::domain("nodes", format!("need at least {min} nodes, got {}", self.nodes)));
        }
        Ok(())
    }

    fn require_proper_sector(&self) -> Result<()> {
        if self.sector_area() >= 1.0 {
            return Err(Error::domain(
                "range",
                format!("sector area {} covers the whole unit area", self.sector_area()),
            ));
        }
        Ok(())
    }
}

/// A probability, possibly clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub value: f64,
    /// The raw closed form fell outside `[0, 1]`.
    pub clamped: bool,
}

impl Probability {
    fn clamp(raw: f64) -> Result<Self> {
        if raw.is_nan() {
            return Err(Error::domain("probability", "closed form evaluated to NaN"));
        }
        let value = raw.clamp(0.0, 1.0);
        Ok(Probability { value, clamped: value != raw })
    }
}

/// `P[X ≥ k]` for `X ~ Poisson(mean)`.
pub(crate) fn poisson_tail(mean: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_term = |j: usize| -mean + j as f64 * mean.ln() - ln_factorial(j);
    if mean < k as f64 {
        // sum the upper tail directly; terms decrease from j = k on
        let mut sum = 0.0;
        let mut term = ln_term(k).exp();
        let mut j = k;
        while term > sum * 1e-18 && j < k + 10_000 {
            sum += term;
            j += 1;
            term *= mean / j as f64;
        }
        sum
    } else {
        1.0 - (0..k).map(|j| ln_term(j).exp()).sum::<f64>()
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `e^y - 1 - y` without cancellation for small `y`.
fn expm1_minus_linear(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        y * y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y / 120.0)))
    } else {
        y.exp_m1() - y
    }
}

/// Probability that a node has at least one descendant: `1 - e^Q`.
pub fn p_forward(params: &ConnectivityParams) -> Probability {
    let raw = -params.q().exp_m1();
    Probability::clamp(raw).expect("finite")
}

/// Probability of at least `k` descendants: the Poisson tail with mean `-Q`.
pub fn p_forward_k(params: &ConnectivityParams, k: usize) -> Result<Probability> {
    match k {
        0 => Err(Error::domain("k", "k must be at least 1")),
        1 => Ok(p_forward(params)),
        _ => Probability::clamp(poisson_tail(-params.q(), k)),
    }
}

/// Probability of at least one antecedent given at least one descendant.
///
/// `1 - e^Q/(1-e^Q) · (1-φR²/2)^{M-1} · (exp{-Q(2π-φ)/(π(2-φR²))} - 1)`
pub fn p_backward_given_forward(params: &ConnectivityParams) -> Result<Probability> {
    params.require_nodes(2)?;
    params.require_proper_sector()?;
    let q = params.q();
    if q == 0.0 {
        return Err(Error::domain("q", "Q = 0 makes 1 - exp(Q) vanish"));
    }
    let ratio = q.exp() / -q.exp_m1();
    let stay = (1.0 - params.sector_area()).powi(params.nodes as i32 - 1);
    Probability::clamp(1.0 - ratio * stay * params.reverse_exponent().exp_m1())
}

/// Network connectivity for k = 1: `(1 - e^Q) · [p_{a|d}]^M`.
pub fn p_connected(params: &ConnectivityParams) -> Result<Probability> {
    let forward = p_forward(params);
    let backward = p_backward_given_forward(params)?;
    Probability::clamp(forward.value * backward.value.powi(params.nodes as i32))
}

/// Alternative network form: `[(1 - e^Q) · p_{a|d}]^M`, treating nodes as
/// independent and requiring each to be non-obscured.
pub fn p_connected_per_node(params: &ConnectivityParams) -> Result<Probability> {
    let forward = p_forward(params);
    let backward = p_backward_given_forward(params)?;
    Probability::clamp((forward.value * backward.value).powi(params.nodes as i32))
}

/// The three summation terms of the k = 2 conditional backward probability,
/// summed in closed form over the number of descendants `b ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardTwoTerms {
    /// No antecedent, no bidirectional link.
    pub s1: f64,
    /// Exactly one antecedent, no bidirectional link.
    pub s2: f64,
    /// Exactly one antecedent, which is the single bidirectional link.
    pub s3: f64,
}

pub fn backward_two_terms(params: &ConnectivityParams) -> Result<BackwardTwoTerms> {
    params.require_nodes(3)?;
    params.require_proper_sector()?;
    let q = params.q();
    let z = poisson_tail(-q, 2);
    if !(z > 0.0) {
        return Err(Error::domain("q", "1 - (1 - Q)exp(Q) vanishes"));
    }
    let c = q.exp() / z;
    let m = params.nodes as f64;
    let area = params.sector_area();
    let stay = 1.0 - area;
    let y = params.reverse_exponent();
    let em1 = y.exp_m1();
    let tail2 = expm1_minus_linear(y);
    let phi = params.scan_angle;
    let r2 = params.range * params.range;

    let s1 = c * stay.powi(params.nodes as i32 - 1) * tail2;
    let s2 = c * area * stay.powi(params.nodes as i32 - 2) * ((m - 1.0) * tail2 - y * em1);
    let s3 = c * (m * phi * phi * r2 / (4.0 * PI)) * stay.powi(params.nodes as i32 - 2) * em1;
    Ok(BackwardTwoTerms { s1, s2, s3 })
}

/// Probability of at least two antecedents given at least two descendants.
pub fn p_backward_given_forward_2(params: &ConnectivityParams) -> Result<Probability> {
    let t = backward_two_terms(params)?;
    Probability::clamp(1.0 - t.s1 - t.s2 - t.s3)
}

/// Network k-connectivity for k ∈ {1, 2}: forward factor times the
/// conditional backward factor raised to `M`.
pub fn p_connected_k(params: &ConnectivityParams, k: usize) -> Result<Probability> {
    match k {
        1 => p_connected(params),
        2 => {
            let forward = p_forward_k(params, 2)?;
            let backward = p_backward_given_forward_2(params)?;
            Probability::clamp(forward.value * backward.value.powi(params.nodes as i32))
        }
        _ => Err(Error::domain("k", format!("no closed form for k = {k}; use Monte Carlo"))),
    }
}

/// Per-node product variant of [`p_connected_k`].
pub fn p_connected_per_node_k(params: &ConnectivityParams, k: usize) -> Result<Probability> {
    match k {
        1 => p_connected_per_node(params),
        2 => {
            let forward = p_forward_k(params, 2)?;
            let backward = p_backward_given_forward_2(params)?;
            Probability::clamp((forward.value * backward.value).powi(params.nodes as i32))
        }
        _ => Err(Error::domain("k", format!("no closed form for k = {k}; use Monte Carlo"))),
    }
}
