//! Underwater optical channel.
//!
//! Water attenuation follows a chlorophyll-driven model where the extinction
//! coefficient is the sum of absorption (pure water, chlorophyll, fulvic and
//! humic acids) and scattering (pure water, small and large particles). The
//! link budget maps transmit power and geometry to received power; its
//! inverse recovers the range from a received-power measurement.

mod lambert;
mod link;
mod water;

pub use lambert::{lambert_w0, LAMBERT_MAX_ITERS, LAMBERT_TOL};
pub use link::{estimate_range, estimate_range_exact, received_power, OpticalLink};
pub use water::{
    absorption_coefficient, fulvic_concentration, humic_concentration, large_particle_concentration,
    scattering_coefficient, small_particle_concentration, AbsorptionConstants, WaterModel, WaterPreset, WaterTable,
    FULVIC_ABSORPTION, HUMIC_ABSORPTION, MAX_CHLOROPHYLL, WAVELENGTH_RANGE,
};
