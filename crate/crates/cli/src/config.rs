//! Flat `key = value` run configuration.
//!
//! ```text
//! # unit square, one site
//! cross_section.shape = rectangle
//! cross_section.width = 1
//! cross_section.height = 1
//! site.1.alpha = 0.5
//! site.1.x = 0
//! site.1.y1 = 0.5
//! site.1.y2 = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;
use waveguide_core::CrossSection;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("`{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), constraint: constraint.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSpec {
    pub alpha: f64,
    pub x: f64,
    pub y1: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol_energy: f64,
    /// Energy at which the run summary reports kernel tail bounds and the
    /// oracle dump compares the renormalised diagonal.
    pub reference_z0: Option<f64>,
    pub abel_grid_scale: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandsConfig {
    /// Points of the symmetric grid on `[-π/ℓ, π/ℓ]` (odd).
    pub theta_points: usize,
    pub band_count: Option<usize>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cross_section: CrossSection,
    pub modes_count: usize,
    pub sites: Vec<SiteSpec>,
    pub solver: SolverConfig,
    pub ell: Option<f64>,
    pub bands: BandsConfig,
    pub scatter: Option<ScatterConfig>,
}

const SCALAR_KEYS: &[&str] = &[
    "cross_section.shape",
    "cross_section.width",
    "cross_section.height",
    "cross_section.radius",
    "modes.count",
    "solver.tol_energy",
    "solver.reference_z0",
    "solver.abel_grid_scale",
    "solver.tail_bound",
    "period.ell",
    "bands.theta_points",
    "bands.band_count",
    "bands.window_lo",
    "bands.window_hi",
    "scatter.e_min",
    "scatter.e_max",
    "scatter.samples",
];

const SITE_FIELDS: &[&str] = &["alpha", "x", "y1", "y2"];

/// Site index of a `site.<j>.<field>` key, `j >= 1`.
fn site_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("site.")?;
    let (j, field) = rest.split_once('.')?;
    if j.is_empty() || !j.bytes().all(|b| b.is_ascii_digit()) || j.starts_with('0') {
        return None;
    }
    let j = j.parse().ok()?;
    SITE_FIELDS.contains(&field).then_some((j, field))
}

struct Entries {
    values: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let x: f64 = v.parse().map_err(|_| invalid(key, format!("expected a number, got `{v}`")))?;
        if !x.is_finite() {
            return Err(invalid(key, "must be finite"));
        }
        Ok(Some(x))
    }

    fn required_real(&self, key: &str) -> Result<f64, ConfigError> {
        self.real(key)?.ok_or_else(|| invalid(key, "is required"))
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.parse().map(Some).map_err(|_| invalid(key, format!("expected a non-negative integer, got `{v}`")))
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, message: "empty key or value".into() });
        }
        if !SCALAR_KEYS.contains(&key) && site_key(key).is_none() {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if let Some((first, _)) = values.get(key) {
            return Err(ConfigError::Duplicate { line, key: key.into(), first: *first });
        }
        values.insert(key.into(), (line, value.into()));
    }
    Ok(Entries { values })
}

fn parse_cross_section(e: &Entries) -> Result<CrossSection, ConfigError> {
    let shape = e.raw("cross_section.shape").ok_or_else(|| invalid("cross_section.shape", "is required (rectangle or disk)"))?;
    let positive = |key: &str| -> Result<f64, ConfigError> {
        let v = e.required_real(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(key, format!("must be positive, got {v}")))
        }
    };
    let forbid = |key: &str| -> Result<(), ConfigError> {
        match e.raw(key) {
            Some(_) => Err(invalid(key, format!("does not apply to a {shape}"))),
            None => Ok(()),
        }
    };
    match shape {
        "rectangle" => {
            forbid("cross_section.radius")?;
            let (w, h) = (positive("cross_section.width")?, positive("cross_section.height")?);
            CrossSection::rectangle(w, h).map_err(|err| invalid("cross_section", err.to_string()))
        }
        "disk" => {
            forbid("cross_section.width")?;
            forbid("cross_section.height")?;
            CrossSection::disk(positive("cross_section.radius")?).map_err(|err| invalid("cross_section", err.to_string()))
        }
        other => Err(invalid("cross_section.shape", format!("must be rectangle or disk, got `{other}`"))),
    }
}

fn parse_sites(e: &Entries, cs: &CrossSection) -> Result<Vec<SiteSpec>, ConfigError> {
    let indices: Vec<usize> = e.values.keys().filter_map(|k| site_key(k).map(|(j, _)| j)).collect();
    let max = indices.iter().copied().max().unwrap_or(0);
    let mut sites = Vec::with_capacity(max);
    for j in 1..=max {
        if !indices.contains(&j) {
            return Err(invalid(format!("site.{j}"), format!("site indices must be contiguous from 1; site.{j} is missing")));
        }
        let get = |field: &str| e.required_real(&format!("site.{j}.{field}"));
        let site = SiteSpec { alpha: get("alpha")?, x: get("x")?, y1: get("y1")?, y2: get("y2")? };
        if !cs.contains_strictly([site.y1, site.y2]) {
            let key = match *cs {
                CrossSection::Rectangle { width, height } => {
                    if !(site.y1 > 0.0 && site.y1 < width) {
                        format!("site.{j}.y1")
                    } else if !(site.y2 > 0.0 && site.y2 < height) {
                        format!("site.{j}.y2")
                    } else {
                        format!("site.{j}.y1/site.{j}.y2")
                    }
                }
                CrossSection::Disk { .. } => format!("site.{j}.y1/site.{j}.y2"),
            };
            return Err(invalid(key, format!("transverse point ({}, {}) must lie inside the cross-section", site.y1, site.y2)));
        }
        if let Some(k) = sites.iter().position(|s: &SiteSpec| s.x == site.x && s.y1 == site.y1 && s.y2 == site.y2) {
            return Err(invalid(format!("site.{j}"), format!("duplicates the position of site.{}", k + 1)));
        }
        sites.push(site);
    }
    Ok(sites)
}

/// Parses and validates a configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;
    let cross_section = parse_cross_section(&e)?;
    let modes_count = e.count("modes.count")?.unwrap_or(1000);
    if modes_count == 0 {
        return Err(invalid("modes.count", "must be at least 1"));
    }
    let sites = parse_sites(&e, &cross_section)?;

    let tol_energy = e.real("solver.tol_energy")?.unwrap_or(1e-10);
    if !(tol_energy > 0.0 && tol_energy < 1.0) {
        return Err(invalid("solver.tol_energy", format!("must lie in (0, 1), got {tol_energy}")));
    }
    let abel_grid_scale = e.real("solver.abel_grid_scale")?.unwrap_or(1.0);
    if !(abel_grid_scale > 0.0) {
        return Err(invalid("solver.abel_grid_scale", "must be positive"));
    }
    let tail_bound = e.real("solver.tail_bound")?.unwrap_or(1e-8);
    if !(tail_bound > 0.0 && tail_bound < 1.0) {
        return Err(invalid("solver.tail_bound", format!("must lie in (0, 1), got {tail_bound}")));
    }
    let solver = SolverConfig { tol_energy, reference_z0: e.real("solver.reference_z0")?, abel_grid_scale, tail_bound };

    let ell = e.real("period.ell")?;
    if let Some(l) = ell {
        if !(l > 0.0) {
            return Err(invalid("period.ell", format!("must be positive, got {l}")));
        }
        for (j, s) in sites.iter().enumerate() {
            if !(0.0..l).contains(&s.x) {
                return Err(invalid(format!("site.{}.x", j + 1), format!("must lie in the period cell [0, {l})")));
            }
        }
    }

    let theta_points = e.count("bands.theta_points")?.unwrap_or(129);
    if theta_points < 33 || theta_points % 2 == 0 {
        return Err(invalid("bands.theta_points", format!("must be odd and at least 33, got {theta_points}")));
    }
    let band_count = e.count("bands.band_count")?;
    if band_count == Some(0) {
        return Err(invalid("bands.band_count", "must be at least 1"));
    }
    let window = match (e.real("bands.window_lo")?, e.real("bands.window_hi")?) {
        (None, None) => None,
        (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
        (Some(lo), Some(hi)) => return Err(invalid("bands.window_hi", format!("must exceed bands.window_lo ({hi} <= {lo})"))),
        (None, Some(_)) => return Err(invalid("bands.window_lo", "is required when bands.window_hi is set")),
        (Some(_), None) => return Err(invalid("bands.window_hi", "is required when bands.window_lo is set")),
    };
    let bands = BandsConfig { theta_points, band_count, window };

    let scatter = match (e.real("scatter.e_min")?, e.real("scatter.e_max")?) {
        (None, None) => {
            if e.raw("scatter.samples").is_some() {
                return Err(invalid("scatter.e_min", "is required when scatter.samples is set"));
            }
            None
        }
        (Some(lo), Some(hi)) => {
            let samples = e.count("scatter.samples")?.unwrap_or(100);
            if samples == 0 {
                return Err(invalid("scatter.samples", "must be at least 1"));
            }
            if !(lo <= hi) || (samples > 1 && lo == hi) {
                return Err(invalid("scatter.e_max", format!("must exceed scatter.e_min ({hi} vs {lo})")));
            }
            Some(ScatterConfig { e_min: lo, e_max: hi, samples })
        }
        (None, Some(_)) => return Err(invalid("scatter.e_min", "is required when scatter.e_max is set")),
        (Some(_), None) => return Err(invalid("scatter.e_max", "is required when scatter.e_min is set")),
    };

    Ok(RunConfig { cross_section, modes_count, sites, solver, ell, bands, scatter })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config_str(&text)
}
