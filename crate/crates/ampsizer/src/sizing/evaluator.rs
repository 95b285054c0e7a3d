//! Counted full-circuit evaluation and the device-knob vector.

use serde::{Deserialize, Serialize};

use crate::analysis::{ac_metrics, assemble_tf, AcMetrics, AnalysisError};
use crate::device::{evaluate_devices, Binding, DeviceParams, ProcessProfile, SmallSignalParams};
use crate::kb::{TopologyDescriptor, VariableKind};
use crate::optimizers::{penalize, Dimension, Measurement, OptimizerError, Scale, SearchSpace};
use crate::reasoning::DesignSpec;

/// Result of one full-circuit evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ssp: Option<SmallSignalParams>,
    pub metrics: Option<AcMetrics>,
    pub dc_gain_db: Option<f64>,
    /// Penalized, normalized supply current.
    pub penalty: f64,
    pub feasible: bool,
}

/// Device evaluation, transfer-function assembly and AC analysis with an
/// exact call count. Re-evaluating the state last seen is free.
pub struct Evaluator<'a> {
    desc: &'a TopologyDescriptor,
    profile: &'a ProcessProfile,
    binding: Binding,
    spec: DesignSpec,
    i_dd_max: f64,
    weight: f64,
    count: usize,
    last: Option<(DeviceParams, Evaluation)>,
    best: Option<(DeviceParams, Evaluation)>,
    first_feasible: Option<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(desc: &'a TopologyDescriptor, profile: &'a ProcessProfile, spec: DesignSpec, weight: f64) -> Self {
        let binding = Binding::new(desc);
        let i_dd_max = binding.max_supply_current(&profile.bounds);
        Evaluator {
            desc,
            profile,
            binding,
            spec,
            i_dd_max,
            weight,
            count: 0,
            last: None,
            best: None,
            first_feasible: None,
        }
    }

    pub fn binding(&self) -> &Binding {
        &self.binding
    }

    pub fn profile(&self) -> &ProcessProfile {
        self.profile
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// 1-based index of the first feasible evaluation.
    pub fn first_feasible(&self) -> Option<usize> {
        self.first_feasible
    }

    /// Lowest-penalty state seen so far.
    pub fn best(&self) -> Option<&(DeviceParams, Evaluation)> {
        self.best.as_ref()
    }

    pub fn evaluate(&mut self, devices: &DeviceParams) -> Evaluation {
        if let Some((d, e)) = &self.last {
            if d == devices {
                return e.clone();
            }
        }
        self.count += 1;
        let e = self.compute(devices);
        if e.feasible && self.first_feasible.is_none() {
            self.first_feasible = Some(self.count);
        }
        if self.best.as_ref().is_none_or(|(_, b)| e.penalty <= b.penalty) {
            self.best = Some((devices.clone(), e.clone()));
        }
        self.last = Some((devices.clone(), e.clone()));
        e
    }

    fn compute(&self, devices: &DeviceParams) -> Evaluation {
        let failed = |ssp: Option<SmallSignalParams>| {
            let i_dd = ssp.as_ref().map_or(f64::NAN, |s| s.i_dd);
            Evaluation {
                penalty: penalize(&self.spec, Measurement::Failed, i_dd, self.i_dd_max, self.weight),
                ssp,
                metrics: None,
                dc_gain_db: None,
                feasible: false,
            }
        };
        let Ok(ssp) = evaluate_devices(devices, self.profile, &self.binding) else {
            return failed(None);
        };
        let tf = match assemble_tf(self.desc, &ssp, self.spec.cl) {
            Ok(tf) => tf,
            Err(_) => return failed(Some(ssp)),
        };
        match ac_metrics(&tf) {
            Ok(m) => {
                let penalty = penalize(&self.spec, Measurement::Metrics(&m), ssp.i_dd, self.i_dd_max, self.weight);
                Evaluation {
                    dc_gain_db: Some(m.dc_gain_db),
                    feasible: penalty <= 1.0,
                    penalty,
                    metrics: Some(m),
                    ssp: Some(ssp),
                }
            }
            Err(AnalysisError::NoCrossing { dc_gain_db }) => Evaluation {
                penalty: penalize(
                    &self.spec,
                    Measurement::NoCrossing { dc_gain_db },
                    ssp.i_dd,
                    self.i_dd_max,
                    self.weight,
                ),
                dc_gain_db: Some(dc_gain_db),
                metrics: None,
                feasible: false,
                ssp: Some(ssp),
            },
            Err(_) => failed(Some(ssp)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KnobKind {
    WOverL(usize),
    Id(usize),
    Passive(usize),
}

/// Ordered subset of device knobs exposed to an optimizer, all log scaled.
#[derive(Debug, Clone)]
pub struct Knobs {
    knobs: Vec<KnobKind>,
    space: SearchSpace,
}

impl Knobs {
    /// Every W/L and drain current, then every passive.
    pub fn all(binding: &Binding, profile: &ProcessProfile) -> Result<Self, OptimizerError> {
        let t: Vec<usize> = (0..binding.transistors.len()).collect();
        let p: Vec<usize> = (0..binding.passives.len()).collect();
        Self::select(binding, profile, &t, &p)
    }

    /// Every W/L and drain current, with passives left out.
    pub fn transistors(binding: &Binding, profile: &ProcessProfile) -> Result<Self, OptimizerError> {
        let t: Vec<usize> = (0..binding.transistors.len()).collect();
        Self::select(binding, profile, &t, &[])
    }

    /// Knobs of the transistors and passives realizing `symbols`.
    pub fn for_symbols(binding: &Binding, profile: &ProcessProfile, symbols: &[&str]) -> Result<Self, OptimizerError> {
        let t: Vec<usize> = binding
            .transistors
            .iter()
            .enumerate()
            .filter(|(_, s)| symbols.contains(&s.gm.as_str()))
            .map(|(i, _)| i)
            .collect();
        let p: Vec<usize> = binding
            .passives
            .iter()
            .enumerate()
            .filter(|(_, s)| symbols.contains(&s.symbol.as_str()))
            .map(|(i, _)| i)
            .collect();
        Self::select(binding, profile, &t, &p)
    }

    fn select(
        binding: &Binding,
        profile: &ProcessProfile,
        transistors: &[usize],
        passives: &[usize],
    ) -> Result<Self, OptimizerError> {
        let b = &profile.bounds;
        let mut knobs = Vec::new();
        let mut dims = Vec::new();
        for &i in transistors {
            let name = &binding.transistors[i].name;
            knobs.push(KnobKind::WOverL(i));
            dims.push(Dimension {
                name: format!("{name}.w_over_l"),
                lower: b.w_over_l[0],
                upper: b.w_over_l[1],
                scale: Scale::Log,
            });
            knobs.push(KnobKind::Id(i));
            dims.push(Dimension {
                name: format!("{name}.id"),
                lower: b.id[0],
                upper: b.id[1],
                scale: Scale::Log,
            });
        }
        for &i in passives {
            let slot = &binding.passives[i];
            let [lo, hi] = passive_bounds(slot.kind, slot.bounds, profile);
            knobs.push(KnobKind::Passive(i));
            dims.push(Dimension {
                name: slot.symbol.clone(),
                lower: lo,
                upper: hi,
                scale: Scale::Log,
            });
        }
        Ok(Knobs {
            knobs,
            space: SearchSpace::new(dims)?,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.knobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knobs.is_empty()
    }

    pub fn read(&self, binding: &Binding, devices: &DeviceParams) -> Vec<f64> {
        self.knobs
            .iter()
            .map(|k| match *k {
                KnobKind::WOverL(i) => devices
                    .transistor(&binding.transistors[i].name)
                    .map_or(f64::NAN, |t| t.w_over_l),
                KnobKind::Id(i) => devices.transistor(&binding.transistors[i].name).map_or(f64::NAN, |t| t.id),
                KnobKind::Passive(i) => devices
                    .passive(&binding.passives[i].symbol)
                    .map_or(f64::NAN, |p| p.value),
            })
            .collect()
    }

    pub fn write(&self, binding: &Binding, devices: &mut DeviceParams, x: &[f64]) {
        for (k, &v) in self.knobs.iter().zip(x) {
            match *k {
                KnobKind::WOverL(i) => {
                    if let Some(t) = devices.transistor_mut(&binding.transistors[i].name) {
                        t.w_over_l = v;
                    }
                }
                KnobKind::Id(i) => {
                    if let Some(t) = devices.transistor_mut(&binding.transistors[i].name) {
                        t.id = v;
                    }
                }
                KnobKind::Passive(i) => {
                    if let Some(p) = devices.passive_mut(&binding.passives[i].symbol) {
                        p.value = v;
                    }
                }
            }
        }
    }
}

/// Descriptor bounds of a passive intersected with the process limits.
pub(crate) fn passive_bounds(kind: VariableKind, own: [f64; 2], profile: &ProcessProfile) -> [f64; 2] {
    let process = match kind {
        VariableKind::Capacitance => profile.bounds.capacitance,
        VariableKind::Resistance => profile.bounds.resistance,
        VariableKind::Transconductance => own,
    };
    let lo = own[0].max(process[0]);
    let hi = own[1].min(process[1]);
    if lo < hi {
        [lo, hi]
    } else {
        own
    }
}
