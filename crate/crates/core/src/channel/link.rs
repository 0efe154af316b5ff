use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{lambert_w0, WaterModel};
use crate::{Error, Result};

/// Geometry and hardware of one directed optical link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalLink {
    /// Transmit power (W).
    pub tx_power: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    /// Receiver aperture area (m²).
    pub rx_aperture: f64,
    /// Transmitter divergence angle θ₀ (rad).
    pub divergence: f64,
    /// Angle between transmitter trajectory and receiver (rad).
    pub incidence: f64,
    /// Transmitter-receiver distance (m). Ignored by range estimation.
    pub distance: f64,
}

impl OpticalLink {
    fn check_hardware(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(field, format!("{v} must be positive")))
            }
        };
        positive("tx_power", self.tx_power)?;
        positive("rx_aperture", self.rx_aperture)?;
        for (field, v) in [("tx_efficiency", self.tx_efficiency), ("rx_efficiency", self.rx_efficiency)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(field, format!("{v} outside (0, 1]")));
            }
        }
        if !(self.divergence > 0.0 && self.divergence <= PI) {
            return Err(Error::domain(
                "divergence",
                format!("{} outside (0, pi]; a zero-divergence beam is degenerate", self.divergence),
            ));
        }
        if !(0.0..PI / 2.0).contains(&self.incidence) {
            return Err(Error::domain("incidence", format!("{} outside [0, pi/2)", self.incidence)));
        }
        Ok(())
    }

    /// `P_t δ_t δ_r B_r cos θ / (2π (1 - cos θ₀))`: everything in the link
    /// budget except the distance-dependent factors.
    fn geometric_gain(&self) -> f64 {
        self.tx_power * self.tx_efficiency * self.rx_efficiency * self.rx_aperture * self.incidence.cos()
            / (2.0 * PI * solid_angle_factor(self.divergence))
    }
}

/// `1 - cos θ`, written as `2 sin²(θ/2)` to avoid cancellation.
fn solid_angle_factor(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    2.0 * s * s
}

/// Received optical power (W) after exponential extinction and geometric spread.
pub fn received_power(link: &OpticalLink, water: &WaterModel) -> Result<f64> {
    link.check_hardware()?;
    if !(link.distance > 0.0 && link.distance.is_finite()) {
        return Err(Error::domain("distance", format!("{} must be positive", link.distance)));
    }
    let d = link.distance;
    let cos_inc = link.incidence.cos();
    Ok(link.geometric_gain() * (-water.extinction * d / cos_inc).exp() / (d * d))
}

/// Noise-free inverse of [`received_power`].
pub fn estimate_range_exact(measured_power: f64, link: &OpticalLink, water: &WaterModel) -> Result<f64> {
    link.check_hardware()?;
    if !(measured_power > 0.0 && measured_power.is_finite()) {
        return Err(Error::domain("measured_power", format!("{measured_power} must be positive")));
    }
    let root = (link.geometric_gain() / measured_power).sqrt();
    let cos_inc = link.incidence.cos();
    if water.extinction == 0.0 {
        return Ok(root);
    }
    // d·exp(e·d / (2 cos θ)) = root  ⇒  d = (2 cos θ / e)·W₀(e·root / (2 cos θ))
    let scale = water.extinction / (2.0 * cos_inc);
    let arg = scale * root;
    assert!(arg >= 0.0, "Lambert W argument must be non-negative, got {arg}");
    Ok(lambert_w0(arg)? / scale)
}

/// Range estimate from a received-power measurement with additive
/// zero-mean Gaussian ranging error of standard deviation `noise_sigma` (m).
pub fn estimate_range<R: Rng + ?Sized>(
    measured_power: f64,
    link: &OpticalLink,
    water: &WaterModel,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::domain("noise_sigma", format!("{noise_sigma} must be >= 0")));
    }
    let range = estimate_range_exact(measured_power, link, water)?;
    if noise_sigma == 0.0 {
        return Ok(range);
    }
    let noise = Normal::new(0.0, noise_sigma).expect("valid sigma");
    Ok(range + noise.sample(rng))
}
