//! Run configuration: TOML in, validated core types out.
//!
//! Angles are radians when given as numbers; strings such as `"60deg"` or
//! `"1.2rad"` carry an explicit unit. Emission is canonical: sorted keys,
//! radians, and floats at 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use swimmer_core::compliance::{CableScheme, CircularGait, ComplianceSpec, FourierGait, SimOptions, SuggestedGait};
use swimmer_core::connection::{GridSpec, Row};
use swimmer_core::gaitopt::{InverseOptions, JointLimits, OptimizerOptions};
use swimmer_core::geometry::SwimmerGeometry;
use swimmer_core::media::{GranularParams, Medium, ViscousParams};

use crate::error::CliError;

/// An angle stored in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle(pub f64);

impl Angle {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (num, scale) = if let Some(v) = s.strip_suffix("deg") {
            (v, std::f64::consts::PI / 180.0)
        } else if let Some(v) = s.strip_suffix("rad") {
            (v, 1.0)
        } else {
            return Err(format!("angle `{s}` needs a `deg` or `rad` suffix"));
        };
        num.trim()
            .parse::<f64>()
            .map(|v| Angle(v * scale))
            .map_err(|_| format!("`{s}` is not a number with a unit"))
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct AngleVisitor;

        impl Visitor<'_> for AngleVisitor {
            type Value = Angle;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an angle in radians or a string like \"37.5deg\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Angle, E> {
                Ok(Angle(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Angle, E> {
                Ok(Angle(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Angle, E> {
                Ok(Angle(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Angle, E> {
                Angle::parse(v).map_err(E::custom)
            }
        }

        d.deserialize_any(AngleVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// [m]
    pub link_length: f64,
    /// [m]
    pub head_bar_halfwidth: f64,
    pub segments_per_link: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = SwimmerGeometry::default();
        Self {
            link_length: g.link_length,
            head_bar_halfwidth: g.head_bar_halfwidth,
            segments_per_link: g.segments_per_link,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MediumConfig {
    Viscous {
        #[serde(default = "viscous_c_t")]
        c_t: f64,
        #[serde(default = "viscous_c_n")]
        c_n: f64,
    },
    Granular {
        #[serde(default = "granular_c_t")]
        c_t: f64,
        #[serde(default = "granular_c_n")]
        c_n: f64,
        #[serde(default = "granular_v_reg")]
        v_reg: f64,
        #[serde(default = "granular_c_visc_reg")]
        c_visc_reg: f64,
    },
}

fn viscous_c_t() -> f64 {
    ViscousParams::default().c_t
}
fn viscous_c_n() -> f64 {
    ViscousParams::default().c_n
}
fn granular_c_t() -> f64 {
    GranularParams::default().c_t
}
fn granular_c_n() -> f64 {
    GranularParams::default().c_n
}
fn granular_v_reg() -> f64 {
    GranularParams::default().v_reg
}
fn granular_c_visc_reg() -> f64 {
    GranularParams::default().c_visc_reg
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig::from(Medium::default())
    }
}

impl From<Medium> for MediumConfig {
    fn from(m: Medium) -> Self {
        match m {
            Medium::Viscous(p) => MediumConfig::Viscous { c_t: p.c_t, c_n: p.c_n },
            Medium::Granular(p) => MediumConfig::Granular {
                c_t: p.c_t,
                c_n: p.c_n,
                v_reg: p.v_reg,
                c_visc_reg: p.c_visc_reg,
            },
        }
    }
}

impl MediumConfig {
    pub fn to_medium(&self) -> Medium {
        match *self {
            MediumConfig::Viscous { c_t, c_n } => Medium::Viscous(ViscousParams { c_t, c_n }),
            MediumConfig::Granular {
                c_t,
                c_n,
                v_reg,
                c_visc_reg,
            } => Medium::Granular(GranularParams {
                c_t,
                c_n,
                v_reg,
                c_visc_reg,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ComplianceConfig {
    Rigid,
    Constant {
        /// [N m/rad]
        k1: f64,
        /// [N m/rad]
        k2: f64,
    },
    Cable {
        #[serde(default)]
        g: f64,
        #[serde(default = "cable_amplitude")]
        amplitude: Angle,
        #[serde(default = "cable_k_skin")]
        k_skin: f64,
        #[serde(default = "cable_k_cable")]
        k_cable: f64,
        #[serde(default = "cable_l0")]
        l0: f64,
        #[serde(default = "cable_r_p")]
        r_p: f64,
        #[serde(default = "cable_rest_length")]
        rest_length: f64,
    },
}

fn cable_amplitude() -> Angle {
    Angle(CableScheme::default().amplitude)
}
fn cable_k_skin() -> f64 {
    CableScheme::default().k_skin
}
fn cable_k_cable() -> f64 {
    CableScheme::default().k_cable
}
fn cable_l0() -> f64 {
    CableScheme::default().l0
}
fn cable_r_p() -> f64 {
    CableScheme::default().r_p
}
fn cable_rest_length() -> f64 {
    CableScheme::default().rest_length
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        ComplianceConfig::from(ComplianceSpec::default())
    }
}

impl From<ComplianceSpec> for ComplianceConfig {
    fn from(s: ComplianceSpec) -> Self {
        match s {
            ComplianceSpec::Rigid => ComplianceConfig::Rigid,
            ComplianceSpec::Constant { k } => ComplianceConfig::Constant { k1: k[0], k2: k[1] },
            ComplianceSpec::Cable(c) => ComplianceConfig::Cable {
                g: c.g,
                amplitude: Angle(c.amplitude),
                k_skin: c.k_skin,
                k_cable: c.k_cable,
                l0: c.l0,
                r_p: c.r_p,
                rest_length: c.rest_length,
            },
        }
    }
}

impl ComplianceConfig {
    pub fn to_spec(&self) -> ComplianceSpec {
        match *self {
            ComplianceConfig::Rigid => ComplianceSpec::Rigid,
            ComplianceConfig::Constant { k1, k2 } => ComplianceSpec::Constant { k: [k1, k2] },
            ComplianceConfig::Cable {
                g,
                amplitude,
                k_skin,
                k_cable,
                l0,
                r_p,
                rest_length,
            } => ComplianceSpec::Cable(CableScheme {
                g,
                amplitude: amplitude.0,
                k_skin,
                k_cable,
                l0,
                r_p,
                rest_length,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GaitConfig {
    Circular {
        #[serde(default = "circular_amplitude")]
        amplitude: Angle,
        /// [Hz]
        #[serde(default = "circular_frequency")]
        frequency: f64,
    },
    Fourier {
        /// [s]
        period: f64,
        a1: Vec<Angle>,
        b1: Vec<Angle>,
        a2: Vec<Angle>,
        b2: Vec<Angle>,
    },
}

fn circular_amplitude() -> Angle {
    Angle(CircularGait::default().amplitude)
}
fn circular_frequency() -> f64 {
    CircularGait::default().frequency
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig::from(SuggestedGait::default())
    }
}

impl From<SuggestedGait> for GaitConfig {
    fn from(g: SuggestedGait) -> Self {
        let angles = |v: &[f64]| v.iter().map(|x| Angle(*x)).collect();
        match g {
            SuggestedGait::Circular(c) => GaitConfig::Circular {
                amplitude: Angle(c.amplitude),
                frequency: c.frequency,
            },
            SuggestedGait::Fourier(f) => GaitConfig::Fourier {
                period: f.period,
                a1: angles(&f.a1),
                b1: angles(&f.b1),
                a2: angles(&f.a2),
                b2: angles(&f.b2),
            },
        }
    }
}

impl GaitConfig {
    pub fn to_gait(&self) -> SuggestedGait {
        let rad = |v: &[Angle]| v.iter().map(|a| a.0).collect();
        match self {
            GaitConfig::Circular { amplitude, frequency } => SuggestedGait::Circular(CircularGait {
                amplitude: amplitude.0,
                frequency: *frequency,
            }),
            GaitConfig::Fourier { period, a1, b1, a2, b2 } => SuggestedGait::Fourier(FourierGait {
                period: *period,
                a1: rad(a1),
                b1: rad(b1),
                a2: rad(a2),
                b2: rad(b2),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// [s]
    pub dt: f64,
    pub n_cycles: usize,
    pub discard_cycles: usize,
    pub tol: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let s = SimOptions::default();
        Self {
            dt: s.dt,
            n_cycles: s.n_cycles,
            discard_cycles: s.discard_cycles,
            tol: s.tol,
        }
    }
}

/// Shape-space lattice; `limit` is also the joint limit used by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub resolution: usize,
    pub limit: Angle,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            resolution: g.resolution,
            limit: Angle(g.limit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub row: Row,
    pub path_points: usize,
    pub fourier_order: usize,
    /// [s]
    pub period: f64,
    /// Clamp commands the cables cannot realize instead of failing.
    pub saturate: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        Self {
            row: o.row,
            path_points: o.path_points,
            fourier_order: o.fourier_order,
            period: o.period,
            saturate: o.inverse.saturate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfcheckConfig {
    /// Seed for the random loops and shapes used by the checks.
    pub seed: u64,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self { seed: 20240917 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub medium: MediumConfig,
    pub compliance: ComplianceConfig,
    pub gait: GaitConfig,
    pub simulation: SimulationConfig,
    pub grid: GridConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
    pub selfcheck: SelfcheckConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: swimmer_core::SwimmerError| CliError::Config(e.to_string());
        self.geometry().validate().map_err(bad)?;
        self.medium.to_medium().validate().map_err(bad)?;
        self.compliance.to_spec().validate().map_err(bad)?;
        let gait = self.gait.to_gait();
        gait.validate().map_err(bad)?;
        if let GaitConfig::Fourier { a1, b1, a2, b2, .. } = &self.gait {
            if [b1.len(), a2.len(), b2.len()].iter().any(|n| *n != a1.len()) {
                return Err(CliError::Config(
                    "gait: a1, b1, a2, b2 must have the same length".into(),
                ));
            }
        }
        self.sim_options().validate(gait.period()).map_err(bad)?;
        self.grid_spec().validate().map_err(bad)?;
        let o = &self.optimizer;
        if o.path_points < 8 {
            return Err(CliError::Config("optimizer.path_points must be >= 8".into()));
        }
        if o.fourier_order == 0 || 2 * o.fourier_order >= o.path_points {
            return Err(CliError::Config(
                "optimizer.fourier_order must be in 1..path_points/2".into(),
            ));
        }
        if !(o.period > 0.0 && o.period.is_finite()) {
            return Err(CliError::Config("optimizer.period must be > 0".into()));
        }
        self.sim_options().validate(o.period).map_err(bad)?;
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats must not be empty".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> SwimmerGeometry {
        SwimmerGeometry {
            link_length: self.geometry.link_length,
            head_bar_halfwidth: self.geometry.head_bar_halfwidth,
            segments_per_link: self.geometry.segments_per_link,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.simulation.dt,
            n_cycles: self.simulation.n_cycles,
            discard_cycles: self.simulation.discard_cycles,
            tol: self.simulation.tol,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            resolution: self.grid.resolution,
            limit: self.grid.limit.0,
        }
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            grid: self.grid_spec(),
            limits: JointLimits {
                limit: self.grid.limit.0,
            },
            row: self.optimizer.row,
            path_points: self.optimizer.path_points,
            fourier_order: self.optimizer.fourier_order,
            period: self.optimizer.period,
            sim: self.sim_options(),
            inverse: InverseOptions {
                saturate: self.optimizer.saturate,
            },
        }
    }

    /// Canonical TOML text of this configuration.
    pub fn to_canonical(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes to a TOML table");
        emit_canonical(&value)
    }

    /// Replace the numeric value at a dotted key path, then re-validate.
    pub fn with_value(&self, key: &str, raw: &str) -> Result<Self, CliError> {
        let mut value = toml::Value::try_from(self).expect("config serializes to a TOML table");
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| CliError::Config(format!("{key}: no such key")))?;
        }
        let new = match slot {
            toml::Value::Integer(_) => toml::Value::Integer(
                raw.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{key}: `{raw}` is not an integer")))?,
            ),
            toml::Value::Float(_) => match raw.trim().parse::<f64>() {
                Ok(v) => toml::Value::Float(v),
                Err(_) => Angle::parse(raw)
                    .map(|a| toml::Value::Float(a.0))
                    .map_err(|_| CliError::Config(format!("{key}: `{raw}` is not a number")))?,
            },
            _ => return Err(CliError::Config(format!("{key}: not a numeric key"))),
        };
        *slot = new;
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{key}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit_canonical(root: &toml::Value) -> String {
    let mut out = String::new();
    emit_table(&mut out, &[], root.as_table().expect("root is a table"));
    out
}

fn emit_table(out: &mut String, path: &[&str], table: &toml::Table) {
    let mut keys: Vec<&String> = table.keys().collect();
    keys.sort();
    let (tables, scalars): (Vec<&String>, Vec<&String>) = keys.into_iter().partition(|k| table[*k].is_table());
    if !path.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "[{}]", path.join("."));
    }
    for k in scalars {
        let _ = writeln!(out, "{k} = {}", scalar(&table[k]));
    }
    for k in tables {
        let mut sub = path.to_vec();
        sub.push(k);
        emit_table(out, &sub, table[k].as_table().expect("checked"));
    }
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(f) => format_float(*f),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::String(s) => toml::Value::String(s.clone()).to_string(),
        toml::Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            format!("[{}]", parts.join(", "))
        }
        other => other.to_string(),
    }
}

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn format_float(f: f64) -> String {
    if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{f:.16e}")
    }
}
