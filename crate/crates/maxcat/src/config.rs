//! Run configuration: a strict INI dialect and its validation.
//!
//! The accepted grammar is deliberately small: `[section]` headers,
//! `key = value` lines, and full-line `#` comments. Keys may not repeat,
//! unknown sections or keys are errors, and values that belong to a mode
//! that is not selected (for example `b_ext` under a Hookean spring law)
//! are rejected rather than silently ignored. Every key is optional; the
//! complete default set is the table below.
//!
//! | section    | key            | default      | meaning                                                    |
//! |------------|----------------|--------------|------------------------------------------------------------|
//! | `model`    | `model`        | `maxwell`    | `maxwell` (single network) or `kbkz` (two networks)        |
//! | `model`    | `eos`          | `polytropic` | solvent equation of state: `polytropic` or `nasg`          |
//! | `model`    | `elastic`      | `hookean`    | spring law: `hookean` or `fenep` (maxwell only)            |
//! | `material` | `alpha`        | `1.0`        | elastic coupling strength                                   |
//! | `material` | `k_b`          | `1.0`        | entropic spring constant                                    |
//! | `material` | `zeta`         | `4.0`        | conformation relaxation parameter                           |
//! | `material` | `tau0`         | `1.0`        | heat-flux relaxation time                                   |
//! | `material` | `kappa`        | `1.0`        | thermal conductivity                                        |
//! | `material` | `e_ref`        | `1.0`        | weight of the conformation stabilization term               |
//! | `material` | `rho_r`        | `1.0`        | reference density                                           |
//! | `material` | `f_body`       | `0 0 0`      | body force per unit mass (three numbers)                    |
//! | `material` | `c_v`          | `1.0`        | specific heat at constant volume                            |
//! | `material` | `gamma`        | `1.4`        | adiabatic exponent (must exceed 1)                          |
//! | `material` | `theta_ref`    | `1.0`        | reference temperature                                       |
//! | `material` | `rho_ref`      | `1.0`        | reference density of the solvent potential                  |
//! | `material` | `b`            | `0.1`        | covolume (`eos = nasg` only)                                |
//! | `material` | `q`            | `0.0`        | constant energy offset (`eos = nasg` only)                  |
//! | `material` | `p_inf`        | `0.0`        | stiffening pressure (`eos = nasg` only)                     |
//! | `material` | `k0`           | `0.5`        | temperature-independent spring stiffness                    |
//! | `material` | `k1`           | `0.5`        | temperature-proportional spring stiffness                   |
//! | `material` | `b_ext`        | `10.0`       | finite extensibility bound (`elastic = fenep` only)         |
//! | `material` | `k0_2`         | `0.5`        | second-network `k0` (`model = kbkz` only)                   |
//! | `material` | `k1_2`         | `0.5`        | second-network `k1` (`model = kbkz` only)                   |
//! | `grid`     | `n`            | `200`        | number of cells (at least 4)                                |
//! | `grid`     | `x0`           | `0.0`        | left end of the domain                                      |
//! | `grid`     | `x1`           | `1.0`        | right end of the domain                                     |
//! | `grid`     | `boundary`     | `periodic`   | `periodic` or `transmissive`                                |
//! | `ic`       | `preset`       | `uniform`    | `uniform`, `riemann`, `smooth-wave`, or `heat-pulse`        |
//! | `ic`       | `rho`          | `1.0`        | base density                                                |
//! | `ic`       | `theta`        | `1.0`        | base temperature                                            |
//! | `ic`       | `v`            | `0 0 0`      | base velocity (three numbers)                               |
//! | `ic`       | `q`            | `0 0 0`      | base heat flux (three numbers)                              |
//! | `ic`       | `rho_left`     | `1.2`        | left density (`preset = riemann` only)                      |
//! | `ic`       | `rho_right`    | `0.9`        | right density (`preset = riemann` only)                     |
//! | `ic`       | `amplitude`    | `0.05`       | modulation amplitude (`smooth-wave` / `heat-pulse` only)    |
//! | `ic`       | `wavenumber`   | `1`          | integer wavenumber (`preset = smooth-wave` only)            |
//! | `ic`       | `center`       | `0.5`        | pulse center (`preset = heat-pulse` only)                   |
//! | `ic`       | `width`        | `0.1`        | pulse half-width (`preset = heat-pulse` only)               |
//! | `ic`       | `stretch`      | `1.0`        | conformation scale: start at `C = stretch * C_eq`           |
//! | `run`      | `cfl`          | `0.4`        | CFL number in `(0, 0.9]`                                    |
//! | `run`      | `t_end`        | `1.0`        | final time                                                  |
//! | `run`      | `max_steps`    | `100000`     | step budget                                                 |
//! | `run`      | `rng_seed`     | `0`          | seed for randomized utilities (presets are deterministic)   |
//! | `output`   | `directory`    | `out`        | output directory (created if missing)                       |
//! | `output`   | `snapshot_every` | `100`      | write a snapshot every this many steps                      |
//! | `output`   | `precision`    | `17`         | significant digits in CSV output (1..=17)                   |
//!
//! Initial data are built from local relaxation equilibria: each preset
//! prescribes density and temperature profiles, and every cell starts at
//! the exact equilibrium state for its local `(rho, theta, v, q)`. A
//! `uniform` run is therefore a fixed point of the full scheme, and the
//! other presets perturb it in a single controlled direction.

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::eos::{ElasticLaw, EosError, VolumetricEos};
use crate::kbkz::{self, ConservedStateKbkz, KbkzError, KbkzGrid, KbkzParams};
use crate::solver::{Boundary, Grid1D};
use crate::state::{self, ConservedState, InadmissibleReason, Material, StateError};
use crate::tensor::Vec3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("config validation error for `{key}`: {reason}")]
    Validation { key: String, reason: String },
}

fn parse_err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        reason: reason.into(),
    }
}

fn validation_err(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Maxwell,
    Kbkz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcPreset {
    Uniform,
    Riemann,
    SmoothWave,
    HeatPulse,
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub n: usize,
    pub x0: f64,
    pub x1: f64,
    pub boundary: Boundary,
}

/// Initial-condition parameters. Preset-specific fields hold their
/// defaults when the preset does not use them.
#[derive(Debug, Clone)]
pub struct IcConfig {
    pub preset: IcPreset,
    pub rho: f64,
    pub theta: f64,
    pub v: Vec3,
    pub q: Vec3,
    pub rho_left: f64,
    pub rho_right: f64,
    pub amplitude: f64,
    pub wavenumber: u32,
    pub center: f64,
    pub width: f64,
    /// Conformation scale factor: every cell starts at `C = stretch * C_eq`
    /// (with the entropy re-solved so the temperature stays at the
    /// configured value). `1.0` is the exact relaxation equilibrium.
    pub stretch: f64,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub snapshot_every: usize,
    pub precision: usize,
}

/// Fully validated run configuration. `kbkz_params` is populated for
/// both models (family 1 mirrors `k0`/`k1`) but only consulted when
/// `model == Kbkz`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Model,
    pub material: Material,
    pub kbkz_params: KbkzParams,
    pub grid: GridConfig,
    pub ic: IcConfig,
    pub cfl: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub rng_seed: u64,
    pub output: OutputConfig,
}

/// Known sections and their keys; anything else is a parse error.
const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["model", "eos", "elastic"]),
    (
        "material",
        &[
            "alpha", "k_b", "zeta", "tau0", "kappa", "e_ref", "rho_r", "f_body", "c_v", "gamma",
            "theta_ref", "rho_ref", "b", "q", "p_inf", "k0", "k1", "b_ext", "k0_2", "k1_2",
        ],
    ),
    ("grid", &["n", "x0", "x1", "boundary"]),
    (
        "ic",
        &[
            "preset",
            "rho",
            "theta",
            "v",
            "q",
            "rho_left",
            "rho_right",
            "amplitude",
            "wavenumber",
            "center",
            "width",
            "stretch",
        ],
    ),
    ("run", &["cfl", "t_end", "max_steps", "rng_seed"]),
    ("output", &["directory", "snapshot_every", "precision"]),
];

/// Raw `section.key -> (line, value)` map produced by the first pass.
struct Raw {
    entries: HashMap<String, (usize, String)>,
}

impl Raw {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&format!("{section}.{key}"))
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("expected a number for `{key}`, got `{v}`"))),
        }
    }

    /// Like [`Raw::f64`] but remembers whether the key was present, for
    /// keys that are only legal under a particular mode.
    fn f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("expected a number for `{key}`, got `{v}`"))),
        }
    }

    fn usize(&mut self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<usize>().map_err(|_| {
                parse_err(
                    line,
                    format!("expected a non-negative integer for `{key}`, got `{v}`"),
                )
            }),
        }
    }

    fn u64(&mut self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<u64>().map_err(|_| {
                parse_err(
                    line,
                    format!("expected a non-negative integer for `{key}`, got `{v}`"),
                )
            }),
        }
    }

    fn u32(&mut self, section: &str, key: &str, default: u32) -> Result<u32, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<u32>().map_err(|_| {
                parse_err(
                    line,
                    format!("expected a non-negative integer for `{key}`, got `{v}`"),
                )
            }),
        }
    }

    fn vec3(&mut self, section: &str, key: &str, default: Vec3) -> Result<Vec3, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((line, v)) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                let bad = || {
                    parse_err(
                        line,
                        format!("expected three space-separated numbers for `{key}`, got `{v}`"),
                    )
                };
                if parts.len() != 3 {
                    return Err(bad());
                }
                let mut out = [0.0; 3];
                for (slot, part) in out.iter_mut().zip(&parts) {
                    *slot = part.parse::<f64>().map_err(|_| bad())?;
                }
                Ok(out)
            }
        }
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> (usize, String) {
        match self.take(section, key) {
            None => (0, default.to_string()),
            Some((line, v)) => (line, v),
        }
    }

    /// Enumerated value: must be one of `choices` verbatim.
    fn choice(
        &mut self,
        section: &str,
        key: &str,
        choices: &[&str],
        default: &str,
    ) -> Result<String, ConfigError> {
        let (line, v) = self.string(section, key, default);
        if choices.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(parse_err(
                line,
                format!("`{key}` must be one of {choices:?}, got `{v}`"),
            ))
        }
    }
}

fn first_pass(text: &str) -> Result<Raw, ConfigError> {
    let mut entries: HashMap<String, (usize, String)> = HashMap::new();
    let mut section: Option<&str> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(parse_err(line_no, "unterminated section header"));
            };
            let name = name.trim();
            match SECTIONS.iter().find(|(s, _)| *s == name) {
                Some((s, _)) => section = Some(s),
                None => return Err(parse_err(line_no, format!("unknown section `[{name}]`"))),
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(parse_err(
                line_no,
                "expected `key = value`, a `[section]` header, or a `#` comment",
            ));
        };
        let key = lhs.trim();
        let value = rhs.trim().to_string();
        let Some(sec) = section else {
            return Err(parse_err(
                line_no,
                format!("key `{key}` appears before any [section] header"),
            ));
        };
        let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !allowed.contains(&key) {
            return Err(parse_err(
                line_no,
                format!("unknown key `{key}` in section [{sec}]"),
            ));
        }
        if entries.insert(format!("{sec}.{key}"), (line_no, value)).is_some() {
            return Err(parse_err(
                line_no,
                format!("duplicate key `{key}` in section [{sec}]"),
            ));
        }
    }
    Ok(Raw { entries })
}

/// Reject a key that was set although its mode is not selected.
fn forbid(value: Option<f64>, key: &str, requirement: &str) -> Result<(), ConfigError> {
    match value {
        Some(_) => Err(validation_err(
            key,
            format!("only meaningful with {requirement}"),
        )),
        None => Ok(()),
    }
}

fn require_positive(value: f64, key: &str) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(validation_err(
            key,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut raw = first_pass(text)?;

    // [model]
    let model = match raw.choice("model", "model", &["maxwell", "kbkz"], "maxwell")?.as_str() {
        "maxwell" => Model::Maxwell,
        _ => Model::Kbkz,
    };
    let eos_kind = raw.choice("model", "eos", &["polytropic", "nasg"], "polytropic")?;
    let elastic_kind = raw.choice("model", "elastic", &["hookean", "fenep"], "hookean")?;

    // [material]
    let alpha = raw.f64("material", "alpha", 1.0)?;
    let k_b = raw.f64("material", "k_b", 1.0)?;
    let zeta = raw.f64("material", "zeta", 4.0)?;
    let tau0 = raw.f64("material", "tau0", 1.0)?;
    let kappa = raw.f64("material", "kappa", 1.0)?;
    let e_ref = raw.f64("material", "e_ref", 1.0)?;
    let rho_r = raw.f64("material", "rho_r", 1.0)?;
    let f_body = raw.vec3("material", "f_body", [0.0; 3])?;
    let c_v = raw.f64("material", "c_v", 1.0)?;
    let gamma = raw.f64("material", "gamma", 1.4)?;
    let theta_ref = raw.f64("material", "theta_ref", 1.0)?;
    let rho_ref = raw.f64("material", "rho_ref", 1.0)?;
    let covolume = raw.f64_opt("material", "b")?;
    let energy_offset = raw.f64_opt("material", "q")?;
    let p_inf = raw.f64_opt("material", "p_inf")?;
    let k0 = raw.f64("material", "k0", 0.5)?;
    let k1 = raw.f64("material", "k1", 0.5)?;
    let b_ext = raw.f64_opt("material", "b_ext")?;
    let k0_2 = raw.f64_opt("material", "k0_2")?;
    let k1_2 = raw.f64_opt("material", "k1_2")?;

    // [grid]
    let n = raw.usize("grid", "n", 200)?;
    let x0 = raw.f64("grid", "x0", 0.0)?;
    let x1 = raw.f64("grid", "x1", 1.0)?;
    let boundary = match raw
        .choice("grid", "boundary", &["periodic", "transmissive"], "periodic")?
        .as_str()
    {
        "periodic" => Boundary::Periodic,
        _ => Boundary::Transmissive,
    };

    // [ic]
    let preset = match raw
        .choice(
            "ic",
            "preset",
            &["uniform", "riemann", "smooth-wave", "heat-pulse"],
            "uniform",
        )?
        .as_str()
    {
        "uniform" => IcPreset::Uniform,
        "riemann" => IcPreset::Riemann,
        "smooth-wave" => IcPreset::SmoothWave,
        _ => IcPreset::HeatPulse,
    };
    let ic_rho = raw.f64("ic", "rho", 1.0)?;
    let ic_theta = raw.f64("ic", "theta", 1.0)?;
    let ic_v = raw.vec3("ic", "v", [0.0; 3])?;
    let ic_q = raw.vec3("ic", "q", [0.0; 3])?;
    let rho_left = raw.f64_opt("ic", "rho_left")?;
    let rho_right = raw.f64_opt("ic", "rho_right")?;
    let amplitude = raw.f64_opt("ic", "amplitude")?;
    let had_wavenumber = raw.entries.contains_key("ic.wavenumber");
    let wavenumber = raw.u32("ic", "wavenumber", 1)?;
    let center = raw.f64_opt("ic", "center")?;
    let width = raw.f64_opt("ic", "width")?;
    let stretch = raw.f64("ic", "stretch", 1.0)?;

    // [run]
    let cfl = raw.f64("run", "cfl", 0.4)?;
    let t_end = raw.f64("run", "t_end", 1.0)?;
    let max_steps = raw.usize("run", "max_steps", 100_000)?;
    let rng_seed = raw.u64("run", "rng_seed", 0)?;

    // [output]
    let (_, directory) = raw.string("output", "directory", "out");
    let snapshot_every = raw.usize("output", "snapshot_every", 100)?;
    let precision = raw.usize("output", "precision", 17)?;

    debug_assert!(raw.entries.is_empty(), "allowlist let a key through");

    // Mode gating: keys for a mode that is not selected are errors.
    if eos_kind != "nasg" {
        forbid(covolume, "b", "eos = nasg")?;
        forbid(energy_offset, "q", "eos = nasg")?;
        forbid(p_inf, "p_inf", "eos = nasg")?;
    }
    if elastic_kind != "fenep" {
        forbid(b_ext, "b_ext", "elastic = fenep")?;
    }
    if model != Model::Kbkz {
        forbid(k0_2, "k0_2", "model = kbkz")?;
        forbid(k1_2, "k1_2", "model = kbkz")?;
    }
    if model == Model::Kbkz && elastic_kind == "fenep" {
        return Err(validation_err(
            "elastic",
            "model = kbkz uses hookean springs in both networks",
        ));
    }
    if preset != IcPreset::SmoothWave && had_wavenumber {
        return Err(validation_err(
            "wavenumber",
            "only meaningful with preset = smooth-wave",
        ));
    }
    match preset {
        IcPreset::Riemann => {
            forbid(amplitude, "amplitude", "preset = smooth-wave or heat-pulse")?;
            forbid(center, "center", "preset = heat-pulse")?;
            forbid(width, "width", "preset = heat-pulse")?;
        }
        IcPreset::SmoothWave => {
            forbid(rho_left, "rho_left", "preset = riemann")?;
            forbid(rho_right, "rho_right", "preset = riemann")?;
            forbid(center, "center", "preset = heat-pulse")?;
            forbid(width, "width", "preset = heat-pulse")?;
        }
        IcPreset::HeatPulse => {
            forbid(rho_left, "rho_left", "preset = riemann")?;
            forbid(rho_right, "rho_right", "preset = riemann")?;
        }
        IcPreset::Uniform => {
            forbid(rho_left, "rho_left", "preset = riemann")?;
            forbid(rho_right, "rho_right", "preset = riemann")?;
            forbid(amplitude, "amplitude", "preset = smooth-wave or heat-pulse")?;
            forbid(center, "center", "preset = heat-pulse")?;
            forbid(width, "width", "preset = heat-pulse")?;
        }
    }

    // Numeric constraints, keyed by the INI key that carries them.
    if !(gamma > 1.0) {
        return Err(validation_err("gamma", "gamma must exceed 1"));
    }
    for (v, key) in [
        (alpha, "alpha"),
        (k_b, "k_b"),
        (zeta, "zeta"),
        (tau0, "tau0"),
        (kappa, "kappa"),
        (rho_r, "rho_r"),
        (c_v, "c_v"),
        (theta_ref, "theta_ref"),
        (rho_ref, "rho_ref"),
    ] {
        require_positive(v, key)?;
    }
    if !(e_ref >= 0.0 && e_ref.is_finite()) {
        return Err(validation_err("e_ref", "must be non-negative and finite"));
    }
    if f_body.iter().any(|x| !x.is_finite()) {
        return Err(validation_err("f_body", "components must be finite"));
    }
    let covolume = covolume.unwrap_or(0.1);
    let energy_offset = energy_offset.unwrap_or(0.0);
    let p_inf = p_inf.unwrap_or(0.0);
    if eos_kind == "nasg" {
        if !(covolume >= 0.0 && covolume.is_finite()) {
            return Err(validation_err("b", "covolume must be non-negative"));
        }
        if !(p_inf >= 0.0 && p_inf.is_finite()) {
            return Err(validation_err("p_inf", "must be non-negative and finite"));
        }
        if !energy_offset.is_finite() {
            return Err(validation_err("q", "must be finite"));
        }
    }
    for (v, key) in [(k0, "k0"), (k1, "k1")] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(validation_err(key, "must be non-negative and finite"));
        }
    }
    if !(k0 + k1 > 0.0) {
        return Err(validation_err("k0", "k0 + k1 must be positive"));
    }
    let b_ext = b_ext.unwrap_or(10.0);
    if elastic_kind == "fenep" {
        require_positive(b_ext, "b_ext")?;
    }
    let k0_2 = k0_2.unwrap_or(0.5);
    let k1_2 = k1_2.unwrap_or(0.5);
    if model == Model::Kbkz {
        for (v, key) in [(k0_2, "k0_2"), (k1_2, "k1_2")] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(validation_err(key, "must be non-negative and finite"));
            }
        }
        if !(k0_2 + k1_2 > 0.0) {
            return Err(validation_err("k0_2", "k0_2 + k1_2 must be positive"));
        }
    }

    if n < 4 {
        return Err(validation_err("n", "grid needs at least 4 cells"));
    }
    if !(x1 > x0) || !x0.is_finite() || !x1.is_finite() {
        return Err(validation_err("x1", "x1 must exceed x0 and both be finite"));
    }
    if !(cfl > 0.0 && cfl <= 0.9) {
        return Err(validation_err("cfl", "cfl must lie in (0, 0.9]"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(validation_err("t_end", "must be non-negative and finite"));
    }
    if max_steps == 0 {
        return Err(validation_err("max_steps", "must be at least 1"));
    }

    require_positive(ic_rho, "rho")?;
    require_positive(ic_theta, "theta")?;
    require_positive(stretch, "stretch")?;
    if ic_v.iter().chain(ic_q.iter()).any(|x| !x.is_finite()) {
        return Err(validation_err("v", "velocity and heat flux must be finite"));
    }
    let rho_left = rho_left.unwrap_or(1.2);
    let rho_right = rho_right.unwrap_or(0.9);
    let amplitude = amplitude.unwrap_or(0.05);
    let center = center.unwrap_or(0.5);
    let width = width.unwrap_or(0.1);
    match preset {
        IcPreset::Riemann => {
            require_positive(rho_left, "rho_left")?;
            require_positive(rho_right, "rho_right")?;
        }
        IcPreset::SmoothWave | IcPreset::HeatPulse => {
            if !(amplitude.abs() < 1.0) {
                return Err(validation_err(
                    "amplitude",
                    "magnitude must be below 1 to keep the profile positive",
                ));
            }
            if preset == IcPreset::SmoothWave && wavenumber == 0 {
                return Err(validation_err("wavenumber", "must be at least 1"));
            }
            if preset == IcPreset::HeatPulse {
                require_positive(width, "width")?;
                if !center.is_finite() {
                    return Err(validation_err("center", "must be finite"));
                }
            }
        }
        IcPreset::Uniform => {}
    }

    if directory.is_empty() {
        return Err(validation_err("directory", "must not be empty"));
    }
    if snapshot_every == 0 {
        return Err(validation_err("snapshot_every", "must be at least 1"));
    }
    if !(1..=17).contains(&precision) {
        return Err(validation_err("precision", "must lie in 1..=17"));
    }

    // Assemble the material; its own validator is the backstop for any
    // constraint not covered key-by-key above.
    let eos = match eos_kind.as_str() {
        "polytropic" => VolumetricEos::Polytropic {
            c_v,
            gamma,
            theta_ref,
            rho_ref,
        },
        _ => VolumetricEos::Nasg {
            c_v,
            gamma,
            theta_ref,
            rho_ref,
            b: covolume,
            q: energy_offset,
            p_inf,
        },
    };
    let elastic = match elastic_kind.as_str() {
        "hookean" => ElasticLaw::Hookean { k0, k1 },
        _ => ElasticLaw::FeneP { k0, k1, b_ext },
    };
    let material = Material {
        alpha,
        k_b,
        zeta,
        tau0,
        kappa,
        e_ref,
        rho_r,
        f_body,
        eos,
        elastic,
    };
    material
        .validate()
        .map_err(|e| validation_err("material", e.to_string()))?;

    // Density profiles must stay inside the admissible window.
    let rho_max = material.eos.rho_max();
    let densities: &[(f64, &str)] = match preset {
        IcPreset::Riemann => &[(rho_left, "rho_left"), (rho_right, "rho_right")],
        IcPreset::SmoothWave => &[(ic_rho * (1.0 + amplitude.abs()), "rho")],
        _ => &[(ic_rho, "rho")],
    };
    for &(r, key) in densities {
        if r >= rho_max {
            return Err(validation_err(
                key,
                format!("density {r} must stay below 1/b = {rho_max}"),
            ));
        }
    }

    Ok(RunConfig {
        model,
        material,
        kbkz_params: KbkzParams {
            k0_1: k0,
            k1_1: k1,
            k0_2,
            k1_2,
        },
        grid: GridConfig { n, x0, x1, boundary },
        ic: IcConfig {
            preset,
            rho: ic_rho,
            theta: ic_theta,
            v: ic_v,
            q: ic_q,
            rho_left,
            rho_right,
            amplitude,
            wavenumber,
            center,
            width,
            stretch,
        },
        cfl,
        t_end,
        max_steps,
        rng_seed,
        output: OutputConfig {
            directory: PathBuf::from(directory),
            snapshot_every,
            precision,
        },
    })
}

/// Smooth bump supported exactly on `|s| < 1`, equal to 1 at `s = 0`.
fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn eos_to_state_error(e: EosError, theta: f64) -> StateError {
    match e {
        EosError::Domain { rho, rho_max } => {
            StateError::Inadmissible(InadmissibleReason::DensityOutOfRange { rho, rho_max })
        }
        EosError::ExtensionExceeded { tr_c, limit } => {
            StateError::Inadmissible(InadmissibleReason::ExtensionExceeded { tr_c, limit })
        }
        _ => StateError::Inadmissible(InadmissibleReason::NonPositiveTemperature { theta }),
    }
}

/// Scale an equilibrium state's conformation by `s` at fixed deformation
/// (`C -> s C`, realized as `Y -> Y / s^2` with the determinant variable
/// following its first integral) and re-solve the entropy so the
/// temperature stays at `theta`.
fn apply_stretch(
    u: &mut ConservedState,
    mat: &Material,
    theta: f64,
    s: f64,
) -> Result<(), StateError> {
    if s == 1.0 {
        return Ok(());
    }
    u.rho_y = u.rho_y.scale(1.0 / (s * s));
    u.rho_dety *= s.powi(6);
    let rho = u.rho;
    let f = u.rho_f.scale(1.0 / rho);
    let y = u.rho_y.scale(1.0 / rho);
    let dety = u.rho_dety / rho;
    let tr_c = y.spd_inv_sqrt()?.congruence(&f).trace();
    let eta_solvent = mat
        .eos
        .eta_solvent(rho, theta)
        .map_err(|e| eos_to_state_error(e, theta))?;
    let shift = mat
        .entropy_shift(tr_c, rho, dety)
        .map_err(|e| eos_to_state_error(e, theta))?;
    u.rho_eta = rho * (eta_solvent - shift);
    Ok(())
}

/// Two-network version of [`apply_stretch`]: both conformations scale.
fn apply_stretch_kbkz(
    u: &mut ConservedStateKbkz,
    params: &KbkzParams,
    mat: &Material,
    theta: f64,
    s: f64,
) -> Result<(), KbkzError> {
    if s == 1.0 {
        return Ok(());
    }
    u.rho_y1 = u.rho_y1.scale(1.0 / (s * s));
    u.rho_y2 = u.rho_y2.scale(1.0 / (s * s));
    u.rho_dety1 *= s.powi(6);
    u.rho_dety2 *= s.powi(6);
    let rho = u.rho;
    let bad = |e: crate::tensor::TensorError| KbkzError::Inadmissible(e.to_string());
    let f = u.rho_f.scale(1.0 / rho);
    let cofft = u.rho_cofft.scale(1.0 / rho);
    let y1 = u.rho_y1.scale(1.0 / rho);
    let y2 = u.rho_y2.scale(1.0 / rho);
    let tr_c1 = y1.spd_inv_sqrt().map_err(bad)?.congruence(&f).trace();
    let tr_c2 = y2
        .spd_inv_sqrt()
        .map_err(bad)?
        .congruence(&cofft.transpose())
        .trace();
    let eta_solvent = mat.eos.eta_solvent(rho, theta)?;
    let shift = kbkz::entropy_shift(
        params,
        mat,
        tr_c1,
        tr_c2,
        rho,
        u.rho_dety1 / rho,
        u.rho_dety2 / rho,
    );
    u.rho_eta = rho * (eta_solvent - shift);
    Ok(())
}

impl RunConfig {
    /// Density and temperature profile of the selected preset at `x`.
    fn local_profile(&self, x: f64) -> (f64, f64) {
        let ic = &self.ic;
        match ic.preset {
            IcPreset::Uniform => (ic.rho, ic.theta),
            IcPreset::Riemann => {
                let mid = 0.5 * (self.grid.x0 + self.grid.x1);
                let rho = if x < mid { ic.rho_left } else { ic.rho_right };
                (rho, ic.theta)
            }
            IcPreset::SmoothWave => {
                let span = self.grid.x1 - self.grid.x0;
                let phase = 2.0 * std::f64::consts::PI * f64::from(ic.wavenumber)
                    * (x - self.grid.x0)
                    / span;
                (ic.rho * (1.0 + ic.amplitude * phase.sin()), ic.theta)
            }
            IcPreset::HeatPulse => {
                let s = (x - ic.center) / ic.width;
                (ic.rho, ic.theta * (1.0 + ic.amplitude * bump(s)))
            }
        }
    }

    /// Initial grid for the single-network model: every cell starts at
    /// the exact relaxation equilibrium of its local profile.
    pub fn initial_grid(&self) -> Result<Grid1D, StateError> {
        let g = &self.grid;
        let dx = (g.x1 - g.x0) / g.n as f64;
        let mut states = Vec::with_capacity(g.n);
        for i in 0..g.n {
            let x = g.x0 + (i as f64 + 0.5) * dx;
            let (rho, theta) = self.local_profile(x);
            let mut u = state::equilibrium_state(&self.material, rho, theta, self.ic.v, self.ic.q)?;
            apply_stretch(&mut u, &self.material, theta, self.ic.stretch)?;
            states.push(u);
        }
        Ok(Grid1D {
            x0: g.x0,
            x1: g.x1,
            boundary: g.boundary,
            states,
        })
    }

    /// Spatially homogeneous start for 0-D relaxation runs: the base
    /// `(rho, theta, v, q)` values at the configured conformation stretch
    /// (spatial preset shapes do not apply without a grid).
    pub fn initial_state(&self) -> Result<ConservedState, StateError> {
        let mut u = state::equilibrium_state(
            &self.material,
            self.ic.rho,
            self.ic.theta,
            self.ic.v,
            self.ic.q,
        )?;
        apply_stretch(&mut u, &self.material, self.ic.theta, self.ic.stretch)?;
        Ok(u)
    }

    /// Two-network analogue of [`RunConfig::initial_state`].
    pub fn initial_state_kbkz(&self) -> Result<ConservedStateKbkz, KbkzError> {
        let mut u = kbkz::equilibrium_state(
            &self.kbkz_params,
            &self.material,
            self.ic.rho,
            self.ic.theta,
            self.ic.q,
            self.ic.v,
        )?;
        apply_stretch_kbkz(
            &mut u,
            &self.kbkz_params,
            &self.material,
            self.ic.theta,
            self.ic.stretch,
        )?;
        Ok(u)
    }

    /// Initial grid for the two-network model, mirroring
    /// [`RunConfig::initial_grid`].
    pub fn initial_grid_kbkz(&self) -> Result<KbkzGrid, kbkz::KbkzError> {
        let g = &self.grid;
        let dx = (g.x1 - g.x0) / g.n as f64;
        let mut states = Vec::with_capacity(g.n);
        for i in 0..g.n {
            let x = g.x0 + (i as f64 + 0.5) * dx;
            let (rho, theta) = self.local_profile(x);
            let mut u = kbkz::equilibrium_state(
                &self.kbkz_params,
                &self.material,
                rho,
                theta,
                self.ic.q,
                self.ic.v,
            )?;
            apply_stretch_kbkz(&mut u, &self.kbkz_params, &self.material, theta, self.ic.stretch)?;
            states.push(u);
        }
        Ok(KbkzGrid {
            x0: g.x0,
            x1: g.x1,
            boundary: g.boundary,
            states,
        })
    }
}
