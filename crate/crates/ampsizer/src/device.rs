//! Square-law device model.
//!
//! Maps transistor geometry and bias to small-signal values:
//! `gm = sqrt(2 * mu_cox * W/L * Id)` and `ro = 1 / (lambda * Id)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kb::{expr::LOAD_CAPACITANCE, TopologyDescriptor, VariableKind, VariableRole};

const DEFAULT_PROFILE: &str = include_str!("../../../config/profile.toml");

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("binding error: {0}")]
    Binding(String),
    #[error("model error for {device}: {reason}")]
    Model { device: String, reason: String },
    #[error("invalid process profile: {0}")]
    Profile(String),
    #[error("cannot read profile {path}: {message}")]
    ProfileFile { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    N,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParams {
    pub mu_cox_n: f64,
    pub mu_cox_p: f64,
    pub lambda_n: f64,
    pub lambda_p: f64,
    pub vth_n: f64,
    pub vth_p: f64,
    pub vdd: f64,
}

/// Knob limits shared by every device of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceBounds {
    pub w_over_l: [f64; 2],
    pub id: [f64; 2],
    pub capacitance: [f64; 2],
    pub resistance: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessProfile {
    pub process: ProcessParams,
    pub bounds: DeviceBounds,
}

impl Default for ProcessProfile {
    fn default() -> Self {
        ProcessProfile::from_toml_str(DEFAULT_PROFILE).expect("bundled profile is valid")
    }
}

impl ProcessProfile {
    pub fn from_toml_str(text: &str) -> Result<Self, DeviceError> {
        let p: ProcessProfile = toml::from_str(text).map_err(|e| DeviceError::Profile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DeviceError::ProfileFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let p = &self.process;
        for (name, v) in [
            ("mu_cox_n", p.mu_cox_n),
            ("mu_cox_p", p.mu_cox_p),
            ("lambda_n", p.lambda_n),
            ("lambda_p", p.lambda_p),
            ("vth_n", p.vth_n),
            ("|vth_p|", p.vth_p.abs()),
            ("vdd", p.vdd),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DeviceError::Profile(format!("{name} must be positive")));
            }
        }
        if p.vdd <= p.vth_n.max(p.vth_p.abs()) {
            return Err(DeviceError::Profile("vdd must exceed both thresholds".into()));
        }
        let b = &self.bounds;
        for (name, [lo, hi]) in [
            ("w_over_l", b.w_over_l),
            ("id", b.id),
            ("capacitance", b.capacitance),
            ("resistance", b.resistance),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(DeviceError::Profile(format!("bounds.{name} must satisfy 0 < lo < hi")));
            }
        }
        Ok(())
    }

    pub fn mu_cox(&self, polarity: Polarity) -> f64 {
        match polarity {
            Polarity::N => self.process.mu_cox_n,
            Polarity::P => self.process.mu_cox_p,
        }
    }

    pub fn lambda(&self, polarity: Polarity) -> f64 {
        match polarity {
            Polarity::N => self.process.lambda_n,
            Polarity::P => self.process.lambda_p,
        }
    }

    /// Transconductance range reachable inside the W/L and Id bounds.
    pub fn gm_range(&self, polarity: Polarity) -> [f64; 2] {
        let k = 2.0 * self.mu_cox(polarity);
        let b = &self.bounds;
        [
            (k * b.w_over_l[0] * b.id[0]).sqrt(),
            (k * b.w_over_l[1] * b.id[1]).sqrt(),
        ]
    }
}

/// Square-law transconductance.
pub fn transconductance(mu_cox: f64, w_over_l: f64, id: f64) -> f64 {
    (2.0 * mu_cox * w_over_l * id).sqrt()
}

/// Channel-length-modulation output resistance.
pub fn output_resistance(lambda: f64, id: f64) -> f64 {
    1.0 / (lambda * id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transistor {
    pub name: String,
    pub polarity: Polarity,
    pub w_over_l: f64,
    /// Drain bias current (A).
    pub id: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passive {
    pub symbol: String,
    pub kind: VariableKind,
    pub value: f64,
}

/// Geometric and bias state of a whole design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub transistors: Vec<Transistor>,
    pub passives: Vec<Passive>,
}

impl DeviceParams {
    pub fn transistor(&self, name: &str) -> Option<&Transistor> {
        self.transistors.iter().find(|t| t.name == name)
    }

    pub fn transistor_mut(&mut self, name: &str) -> Option<&mut Transistor> {
        self.transistors.iter_mut().find(|t| t.name == name)
    }

    pub fn passive(&self, symbol: &str) -> Option<&Passive> {
        self.passives.iter().find(|p| p.symbol == symbol)
    }

    pub fn passive_mut(&mut self, symbol: &str) -> Option<&mut Passive> {
        self.passives.iter_mut().find(|p| p.symbol == symbol)
    }
}

/// Small-signal values for every descriptor symbol plus supply current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSignalParams {
    pub values: BTreeMap<String, f64>,
    /// Total supply current (A).
    pub i_dd: f64,
}

impl SmallSignalParams {
    pub fn get(&self, symbol: &str) -> Option<f64> {
        self.values.get(symbol).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransistorSlot {
    pub name: String,
    pub polarity: Polarity,
    pub gm: String,
    pub ro: Option<String>,
    pub branch_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveSlot {
    pub symbol: String,
    pub kind: VariableKind,
    pub bounds: [f64; 2],
}

/// Which device or passive supplies each descriptor symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub transistors: Vec<TransistorSlot>,
    pub passives: Vec<PassiveSlot>,
    pub fixed: Vec<(String, f64)>,
}

impl Binding {
    pub fn new(desc: &TopologyDescriptor) -> Self {
        let transistors = desc
            .devices()
            .iter()
            .map(|d| TransistorSlot {
                name: d.name.clone(),
                polarity: d.polarity,
                gm: d.gm.clone(),
                ro: d.ro.clone(),
                branch_multiplier: d.branch_multiplier,
            })
            .collect();
        let passives = desc
            .variables()
            .iter()
            .filter(|v| v.role == VariableRole::Design && v.kind != VariableKind::Transconductance)
            .map(|v| PassiveSlot {
                symbol: v.symbol.clone(),
                kind: v.kind,
                bounds: v.bounds,
            })
            .collect();
        let fixed = desc
            .variables()
            .iter()
            .filter_map(|v| v.value.map(|x| (v.symbol.clone(), x)))
            .collect();
        Binding {
            transistors,
            passives,
            fixed,
        }
    }

    /// The transistor that realizes transconductance `gm_symbol`.
    pub fn device_for(&self, gm_symbol: &str) -> Option<&TransistorSlot> {
        self.transistors.iter().find(|t| t.gm == gm_symbol)
    }

    /// Worst-case supply current: every branch at the upper Id bound.
    pub fn max_supply_current(&self, bounds: &DeviceBounds) -> f64 {
        self.transistors
            .iter()
            .map(|t| t.branch_multiplier * bounds.id[1])
            .sum()
    }

    /// Every transistor at the geometric middle of W/L and Id, every passive
    /// at the geometric middle of its bounds.
    pub fn mid_bounds(&self, bounds: &DeviceBounds) -> DeviceParams {
        let gm = |b: [f64; 2]| (b[0] * b[1]).sqrt();
        DeviceParams {
            transistors: self
                .transistors
                .iter()
                .map(|t| Transistor {
                    name: t.name.clone(),
                    polarity: t.polarity,
                    w_over_l: gm(bounds.w_over_l),
                    id: gm(bounds.id),
                })
                .collect(),
            passives: self
                .passives
                .iter()
                .map(|p| Passive {
                    symbol: p.symbol.clone(),
                    kind: p.kind,
                    value: gm(p.bounds),
                })
                .collect(),
        }
    }
}

/// Evaluates the square-law model for every bound device.
pub fn evaluate_devices(
    devices: &DeviceParams,
    profile: &ProcessProfile,
    binding: &Binding,
) -> Result<SmallSignalParams, DeviceError> {
    let mut values = BTreeMap::new();
    let mut i_dd = 0.0;
    for slot in &binding.transistors {
        let t = devices.transistor(&slot.name).ok_or_else(|| {
            DeviceError::Binding(format!("symbol {} has no device (missing {})", slot.gm, slot.name))
        })?;
        let arg = 2.0 * profile.mu_cox(slot.polarity) * t.w_over_l * t.id;
        if !(arg.is_finite() && arg > 0.0) {
            return Err(DeviceError::Model {
                device: t.name.clone(),
                reason: format!("non-positive square-law argument (W/L={}, Id={})", t.w_over_l, t.id),
            });
        }
        values.insert(slot.gm.clone(), arg.sqrt());
        if let Some(ro) = &slot.ro {
            values.insert(ro.clone(), output_resistance(profile.lambda(slot.polarity), t.id));
        }
        i_dd += slot.branch_multiplier * t.id;
    }
    for slot in &binding.passives {
        let p = devices
            .passive(&slot.symbol)
            .ok_or_else(|| DeviceError::Binding(format!("symbol {} has no passive", slot.symbol)))?;
        if !(p.value.is_finite() && p.value > 0.0) {
            return Err(DeviceError::Model {
                device: p.symbol.clone(),
                reason: format!("non-positive value {}", p.value),
            });
        }
        values.insert(slot.symbol.clone(), p.value);
    }
    for (sym, v) in &binding.fixed {
        values.insert(sym.clone(), *v);
    }
    Ok(SmallSignalParams { values, i_dd })
}

/// Result of the W/L calculator.
#[derive(Debug, Clone, PartialEq)]
pub struct WlEstimate {
    pub transistor: Transistor,
    /// True when the ideal W/L fell outside the bounds.
    pub clamped: bool,
    /// Remaining transconductance ratio `target / achievable` after clamping
    /// (1 when unclamped).
    pub residual_ratio: f64,
}

/// Scales W/L at fixed Id so the square-law gm moves from `current_gm` to
/// `target_gm`, clamping to the W/L bounds.
pub fn estimate_wl(
    current_gm: f64,
    target_gm: f64,
    current: &Transistor,
    bounds: &DeviceBounds,
) -> WlEstimate {
    let ratio = target_gm / current_gm;
    let ideal = current.w_over_l * ratio * ratio;
    let [lo, hi] = bounds.w_over_l;
    let w_over_l = ideal.clamp(lo, hi);
    let clamped = w_over_l != ideal;
    let residual_ratio = if clamped {
        ratio / (w_over_l / current.w_over_l).sqrt()
    } else {
        1.0
    };
    WlEstimate {
        transistor: Transistor {
            w_over_l,
            ..current.clone()
        },
        clamped,
        residual_ratio,
    }
}

/// Symbol-ordered value vector for expression evaluation.
pub fn symbol_values(
    desc: &TopologyDescriptor,
    ssp: &SmallSignalParams,
    cl: f64,
) -> Result<Vec<f64>, DeviceError> {
    let table = desc.symbols();
    let mut values = table.blank();
    values[table.get(LOAD_CAPACITANCE).expect("reserved")] = cl;
    for v in desc.variables() {
        let x = ssp
            .get(&v.symbol)
            .ok_or_else(|| DeviceError::Binding(format!("no value for symbol {}", v.symbol)))?;
        values[table.get(&v.symbol).expect("declared")] = x;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::builtin;

    fn bounds() -> DeviceBounds {
        ProcessProfile::default().bounds
    }

    #[test]
    fn default_profile_values() {
        let p = ProcessProfile::default();
        assert_eq!(p.process.mu_cox_n, 300e-6);
        assert_eq!(p.process.mu_cox_p, 100e-6);
        assert_eq!(p.process.lambda_n, 0.1);
        assert_eq!(p.process.vdd, 1.8);
        assert_eq!(p.bounds.w_over_l, [1.0, 2000.0]);
        assert_eq!(p.bounds.id, [1e-7, 1e-3]);
    }

    #[test]
    fn square_law_examples() {
        let gm = transconductance(200e-6, 50.0, 10e-6);
        assert!((gm - 447.2136e-6).abs() < 1e-9);
        assert!((output_resistance(0.1, 10e-6) - 1e6).abs() < 1e-6);
        let g2 = transconductance(200e-6, 50.0, 20e-6);
        assert!((g2 / gm - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn estimate_examples() {
        let t = Transistor {
            name: "M1".into(),
            polarity: Polarity::N,
            w_over_l: 10.0,
            id: 1e-5,
        };
        let e = estimate_wl(100e-6, 200e-6, &t, &bounds());
        assert!((e.transistor.w_over_l - 40.0).abs() < 1e-12);
        assert!(!e.clamped);
        let same = estimate_wl(100e-6, 100e-6, &t, &bounds());
        assert_eq!(same.transistor, t);

        let tight = DeviceBounds {
            w_over_l: [1.0, 1000.0],
            ..bounds()
        };
        let c = estimate_wl(100e-6, 2e-3, &t, &tight);
        assert_eq!(c.transistor.w_over_l, 1000.0);
        assert!(c.clamped);
        assert!((c.residual_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_device_is_a_binding_error() {
        let desc = builtin("SMC").unwrap();
        let binding = Binding::new(&desc);
        let mut dev = binding.mid_bounds(&bounds());
        dev.transistors.remove(0);
        let err = evaluate_devices(&dev, &ProcessProfile::default(), &binding).unwrap_err();
        assert!(matches!(err, DeviceError::Binding(_)));
    }

    #[test]
    fn every_symbol_is_assigned() {
        for desc in crate::kb::catalog() {
            let binding = Binding::new(&desc);
            let dev = binding.mid_bounds(&bounds());
            let ssp = evaluate_devices(&dev, &ProcessProfile::default(), &binding).unwrap();
            assert_eq!(ssp.values.len(), desc.variables().len(), "{}", desc.name());
            assert!(ssp.values.values().all(|v| v.is_finite() && *v > 0.0));
            assert!(ssp.i_dd > 0.0);
        }
    }

    #[test]
    fn rejects_bad_profile() {
        let mut p = ProcessProfile::default();
        p.process.vdd = 0.3;
        assert!(p.validate().is_err());
    }
}
