use std::ops::RangeInclusive;

use crate::{Error, Result};

/// Specific absorption of fulvic acid (m²/mg).
pub const FULVIC_ABSORPTION: f64 = 35.959;
/// Specific absorption of humic acid (m²/mg).
pub const HUMIC_ABSORPTION: f64 = 18.828;
/// Upper bound of the chlorophyll concentration the model is fitted for (mg/m³).
pub const MAX_CHLOROPHYLL: f64 = 12.0;
pub const WAVELENGTH_RANGE: RangeInclusive<f64> = 400.0..=700.0;

const BUILTIN_TABLE: &str = include_str!("../../data/water_haltrin.txt");

/// Spectral slopes and reference concentration used by the acid terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionConstants {
    /// Fulvic acid spectral slope κ_f (1/nm).
    pub kappa_f: f64,
    /// Humic acid spectral slope κ_h (1/nm).
    pub kappa_h: f64,
    /// Reference chlorophyll concentration C_e^0 (mg/m³).
    pub reference_chlorophyll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterPreset {
    pub name: String,
    pub absorption: f64,
    pub scattering: f64,
}

/// Tabulated pure-water and chlorophyll absorption curves plus the model
/// constants and named water presets, loaded from a plain-text file.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterTable {
    pub constants: AbsorptionConstants,
    /// `(wavelength_nm, b_w, b_cl)` sorted by wavelength.
    rows: Vec<(f64, f64, f64)>,
    presets: Vec<WaterPreset>,
}

impl WaterTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("builtin water table is valid")
    }

    /// Parses the text format: `#` comments, `key = value` lines, then one
    /// header line `lambda_nm, b_w, b_cl` followed by comma-separated rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kappa_f = None;
        let mut kappa_h = None;
        let mut reference = None;
        let mut presets = Vec::new();
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        let mut in_table = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if in_table {
                let fields = parse_numbers(line, line_no)?;
                if fields.len() != 3 {
                    return Err(Error::parse(line_no, format!("expected 3 columns, found {}", fields.len())));
                }
                let (lambda, b_w, b_cl) = (fields[0], fields[1], fields[2]);
                if b_w < 0.0 || b_cl < 0.0 {
                    return Err(Error::parse(line_no, "absorption must be non-negative"));
                }
                if let Some(&(prev, _, _)) = rows.last() {
                    if lambda <= prev {
                        return Err(Error::parse(line_no, "wavelengths must be strictly increasing"));
                    }
                }
                rows.push((lambda, b_w, b_cl));
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                if let Some(name) = key.strip_prefix("preset.") {
                    let fields = parse_numbers(value, line_no)?;
                    if fields.len() != 2 || fields.iter().any(|v| *v < 0.0) {
                        return Err(Error::parse(
                            line_no,
                            "preset needs two non-negative values: absorption, scattering",
                        ));
                    }
                    presets.push(WaterPreset { name: name.to_string(), absorption: fields[0], scattering: fields[1] });
                    continue;
                }
                let number =
                    || value.parse::<f64>().map_err(|_| Error::parse(line_no, format!("{key}: not a number: {value}")));
                match key {
                    "version" => {
                        if value != "1" {
                            return Err(Error::parse(line_no, format!("unsupported version {value}")));
                        }
                    }
                    "kappa_f" => kappa_f = Some(number()?),
                    "kappa_h" => kappa_h = Some(number()?),
                    "reference_chlorophyll" => reference = Some(number()?),
                    other => return Err(Error::parse(line_no, format!("unknown key `{other}`"))),
                }
                continue;
            }
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header == ["lambda_nm", "b_w", "b_cl"] {
                in_table = true;
                continue;
            }
            return Err(Error::parse(line_no, format!("unrecognized line `{line}`")));
        }

        let last = text.lines().count();
        let constants = AbsorptionConstants {
            kappa_f: kappa_f.ok_or_else(|| Error::parse(last, "missing key kappa_f"))?,
            kappa_h: kappa_h.ok_or_else(|| Error::parse(last, "missing key kappa_h"))?,
            reference_chlorophyll: reference.unwrap_or(1.0),
        };
        if !(constants.reference_chlorophyll > 0.0) {
            return Err(Error::parse(last, "reference_chlorophyll must be positive"));
        }
        if rows.len() < 2 {
            return Err(Error::parse(last, "absorption table needs at least two rows"));
        }
        Ok(WaterTable { constants, rows, presets })
    }

    pub fn with_constants(mut self, constants: AbsorptionConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn presets(&self) -> &[WaterPreset] {
        &self.presets
    }

    pub fn preset(&self, name: &str) -> Option<&WaterPreset> {
        self.presets.iter().find(|p| p.name == name)
    }

    pub fn wavelength_span(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    /// Linearly interpolated `(b_w, b_cl)` at `wavelength_nm`.
    pub fn curves_at(&self, wavelength_nm: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.wavelength_span();
        if !(lo..=hi).contains(&wavelength_nm) {
            return Err(Error::domain(
                "wavelength_nm",
                format!("{wavelength_nm} outside tabulated range [{lo}, {hi}]"),
            ));
        }
        let upper = self.rows.iter().position(|r| r.0 >= wavelength_nm).expect("wavelength within span");
        if upper == 0 || self.rows[upper].0 == wavelength_nm {
            let r = self.rows[upper];
            return Ok((r.1, r.2));
        }
        let (l0, w0, c0) = self.rows[upper - 1];
        let (l1, w1, c1) = self.rows[upper];
        let t = (wavelength_nm - l0) / (l1 - l0);
        Ok((w0 + t * (w1 - w0), c0 + t * (c1 - c0)))
    }
}

fn parse_numbers(text: &str, line_no: usize) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>().map_err(|_| Error::parse(line_no, format!("not a number: `{f}`")))
        })
        .collect()
}

fn check_inputs(wavelength_nm: f64, chlorophyll: f64) -> Result<()> {
    if !WAVELENGTH_RANGE.contains(&wavelength_nm) {
        return Err(Error::domain("wavelength_nm", format!("{wavelength_nm} outside [400, 700] nm")));
    }
    if !(0.0..=MAX_CHLOROPHYLL).contains(&chlorophyll) {
        return Err(Error::domain("chlorophyll", format!("{chlorophyll} outside [0, {MAX_CHLOROPHYLL}] mg/m^3")));
    }
    Ok(())
}

pub fn fulvic_concentration(chlorophyll: f64, reference: f64) -> f64 {
    1.74098 * chlorophyll * (0.12327 * chlorophyll / reference).exp()
}

pub fn humic_concentration(chlorophyll: f64, reference: f64) -> f64 {
    0.19334 * chlorophyll * (0.12343 * chlorophyll / reference).exp()
}

pub fn small_particle_concentration(chlorophyll: f64, reference: f64) -> f64 {
    0.01739 * chlorophyll * (0.11631 * chlorophyll / reference).exp()
}

pub fn large_particle_concentration(chlorophyll: f64, reference: f64) -> f64 {
    0.76284 * chlorophyll * (0.03092 * chlorophyll / reference).exp()
}

/// Absorption b(λ) in 1/m: pure water + chlorophyll + fulvic + humic acid.
pub fn absorption_coefficient(wavelength_nm: f64, chlorophyll: f64, table: &WaterTable) -> Result<f64> {
    check_inputs(wavelength_nm, chlorophyll)?;
    let c = table.constants;
    let (b_w, b_cl) = table.curves_at(wavelength_nm)?;
    let c_f = fulvic_concentration(chlorophyll, c.reference_chlorophyll);
    let c_h = humic_concentration(chlorophyll, c.reference_chlorophyll);
    Ok(b_w
        + b_cl
        + FULVIC_ABSORPTION * c_f * (-c.kappa_f * wavelength_nm).exp()
        + HUMIC_ABSORPTION * c_h * (-c.kappa_h * wavelength_nm).exp())
}

/// Scattering s(λ) in 1/m: pure water + small and large particles.
pub fn scattering_coefficient(wavelength_nm: f64, chlorophyll: f64, reference: f64) -> Result<f64> {
    check_inputs(wavelength_nm, chlorophyll)?;
    let ratio = 400.0 / wavelength_nm;
    let s_w = 0.005826 * ratio.powf(4.322);
    let s_small = 1.151302 * ratio.powf(1.7);
    let s_large = 0.341074 * ratio.powf(0.3);
    Ok(s_w
        + s_small * small_particle_concentration(chlorophyll, reference)
        + s_large * large_particle_concentration(chlorophyll, reference))
}

/// Attenuation state of a water body. `extinction` is always exactly
/// `absorption + scattering`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterModel {
    pub wavelength_nm: f64,
    /// `None` for presets and models built directly from coefficients.
    pub chlorophyll: Option<f64>,
    pub reference_chlorophyll: f64,
    pub absorption: f64,
    pub scattering: f64,
    pub extinction: f64,
}

impl WaterModel {
    pub fn haltrin(wavelength_nm: f64, chlorophyll: f64, table: &WaterTable) -> Result<Self> {
        let reference = table.constants.reference_chlorophyll;
        let absorption = absorption_coefficient(wavelength_nm, chlorophyll, table)?;
        let scattering = scattering_coefficient(wavelength_nm, chlorophyll, reference)?;
        Ok(WaterModel {
            wavelength_nm,
            chlorophyll: Some(chlorophyll),
            reference_chlorophyll: reference,
            absorption,
            scattering,
            extinction: absorption + scattering,
        })
    }

    /// Water described by its absorption and scattering at 532 nm.
    pub fn from_coefficients(absorption: f64, scattering: f64) -> Result<Self> {
        if !(absorption >= 0.0 && absorption.is_finite()) {
            return Err(Error::domain("absorption", format!("{absorption} must be >= 0")));
        }
        if !(scattering >= 0.0 && scattering.is_finite()) {
            return Err(Error::domain("scattering", format!("{scattering} must be >= 0")));
        }
        Ok(WaterModel {
            wavelength_nm: 532.0,
            chlorophyll: None,
            reference_chlorophyll: 1.0,
            absorption,
            scattering,
            extinction: absorption + scattering,
        })
    }

    pub fn preset(name: &str, table: &WaterTable) -> Result<Self> {
        let p = table.preset(name).ok_or_else(|| Error::domain("preset", format!("unknown water preset `{name}`")))?;
        Self::from_coefficients(p.absorption, p.scattering)
    }
}
