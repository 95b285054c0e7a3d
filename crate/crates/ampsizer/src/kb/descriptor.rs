//! Topology descriptors: file format, validation and compiled form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::{ProductSum, SymbolTable, TermSpec, GBW, LOAD_CAPACITANCE, RESERVED};
use super::KbError;
use crate::device::Polarity;

pub const FORMAT_VERSION: u32 = 1;
/// Stage id for variables that no sub-problem owns.
pub const GLOBAL_STAGE: &str = "global";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Transconductance,
    Capacitance,
    Resistance,
}

impl VariableKind {
    pub fn unit(self) -> &'static str {
        match self {
            VariableKind::Transconductance => "S",
            VariableKind::Capacitance => "F",
            VariableKind::Resistance => "Ohm",
        }
    }
}

/// How a variable gets its value during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableRole {
    /// Set by sizing: a device transconductance or a passive value.
    Design,
    /// Output resistance of a bound device, derived from its bias current.
    OutputResistance,
    /// Fixed node capacitance or similar; carries a `value`.
    Parasitic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub symbol: String,
    pub kind: VariableKind,
    pub role: VariableRole,
    pub bounds: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    pub polarity: Polarity,
    pub gm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ro: Option<String>,
    /// How many copies of this bias current flow from the supply.
    #[serde(default = "one")]
    pub branch_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub power: usize,
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// expression = 0
    Eq,
    /// expression >= 0
    Ge,
    /// expression <= 0
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    #[serde(default)]
    pub label: String,
    pub relation: RelationKind,
    pub terms: Vec<TermSpec>,
}

/// On-disk form of a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFile {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub title: String,
    pub num_stages: u32,
    #[serde(default)]
    pub rhp_zero_cancelled: bool,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
    pub numerator: Vec<CoefficientSpec>,
    pub denominator: Vec<CoefficientSpec>,
    #[serde(default)]
    pub design_equations: Vec<RelationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub label: String,
    pub kind: RelationKind,
    pub expr: ProductSum,
}

/// A validated topology with compiled coefficient expressions.
///
/// Equality compares the source form, so two descriptors are equal exactly
/// when they would serialize to the same content.
#[derive(Debug, Clone)]
pub struct TopologyDescriptor {
    source: DescriptorFile,
    symbols: SymbolTable,
    numerator: Vec<ProductSum>,
    denominator: Vec<ProductSum>,
    relations: Vec<Relation>,
}

impl PartialEq for TopologyDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

fn invalid(subject: impl Into<String>, reason: impl Into<String>) -> KbError {
    KbError::Validation {
        subject: subject.into(),
        reason: reason.into(),
    }
}

impl TopologyDescriptor {
    pub fn from_toml_str(text: &str) -> Result<Self, KbError> {
        let file: DescriptorFile = toml::from_str(text).map_err(|e| KbError::Parse {
            origin: "<string>".into(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KbError::Parse {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: DescriptorFile = toml::from_str(&text).map_err(|e| KbError::Parse {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KbError> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()).map_err(|source| KbError::Storage {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&self.source).expect("descriptor types always serialize")
    }

    /// Validates `file` and compiles its expressions.
    pub fn from_file(file: DescriptorFile) -> Result<Self, KbError> {
        if file.format_version != FORMAT_VERSION {
            return Err(invalid(
                "format_version",
                format!("expected {FORMAT_VERSION}, found {}", file.format_version),
            ));
        }
        if file.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if file.num_stages == 0 {
            return Err(invalid("num_stages", "must be at least 1"));
        }

        let mut stage_ids = BTreeSet::new();
        for st in &file.stages {
            if st.id == GLOBAL_STAGE || !stage_ids.insert(st.id.as_str()) {
                return Err(invalid(&st.id, "duplicate or reserved stage id"));
            }
        }

        let mut seen = BTreeSet::new();
        for v in &file.variables {
            if RESERVED.contains(&v.symbol.as_str()) || v.symbol == "s" {
                return Err(invalid(&v.symbol, "reserved symbol declared as a variable"));
            }
            if !seen.insert(v.symbol.as_str()) {
                return Err(invalid(&v.symbol, "declared more than once"));
            }
            let [lo, hi] = v.bounds;
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(invalid(&v.symbol, "bounds must be finite, positive and ordered"));
            }
            if v.role == VariableRole::Design && lo >= hi {
                return Err(invalid(&v.symbol, "design variable needs a non-empty range"));
            }
            match (v.role, v.value) {
                (VariableRole::Parasitic, Some(x)) if x >= lo && x <= hi => {}
                (VariableRole::Parasitic, _) => {
                    return Err(invalid(&v.symbol, "parasitic needs a value inside its bounds"))
                }
                (_, Some(_)) => {
                    return Err(invalid(&v.symbol, "only parasitics carry a fixed value"))
                }
                _ => {}
            }
            if v.stage != GLOBAL_STAGE && !stage_ids.contains(v.stage.as_str()) {
                return Err(invalid(&v.symbol, format!("unknown stage '{}'", v.stage)));
            }
            if v.role != VariableRole::Design && v.stage != GLOBAL_STAGE {
                return Err(invalid(&v.symbol, "only design variables can belong to a stage"));
            }
            if v.kind == VariableKind::Transconductance && v.role != VariableRole::Design {
                return Err(invalid(&v.symbol, "transconductances must be design variables"));
            }
            if v.role == VariableRole::OutputResistance && v.kind != VariableKind::Resistance {
                return Err(invalid(&v.symbol, "output resistance must have kind resistance"));
            }
        }
        for st in &file.stages {
            if !file.variables.iter().any(|v| v.stage == st.id) {
                return Err(invalid(&st.id, "stage owns no variables"));
            }
        }

        let var = |sym: &str| file.variables.iter().find(|v| v.symbol == sym);
        let mut names = BTreeSet::new();
        let mut gm_bound = BTreeMap::new();
        let mut ro_bound = BTreeMap::new();
        for d in &file.devices {
            if !names.insert(d.name.as_str()) {
                return Err(invalid(&d.name, "duplicate device name"));
            }
            if !(d.branch_multiplier.is_finite() && d.branch_multiplier > 0.0) {
                return Err(invalid(&d.name, "branch_multiplier must be positive"));
            }
            match var(&d.gm) {
                Some(v) if v.kind == VariableKind::Transconductance => {}
                _ => return Err(invalid(&d.gm, format!("device {} needs a declared transconductance", d.name))),
            }
            if gm_bound.insert(d.gm.as_str(), d.name.as_str()).is_some() {
                return Err(invalid(&d.gm, "bound to more than one device"));
            }
            if let Some(ro) = &d.ro {
                match var(ro) {
                    Some(v) if v.role == VariableRole::OutputResistance => {}
                    _ => return Err(invalid(ro, format!("device {} needs a declared output resistance", d.name))),
                }
                if ro_bound.insert(ro.as_str(), d.name.as_str()).is_some() {
                    return Err(invalid(ro, "bound to more than one device"));
                }
            }
        }
        for v in &file.variables {
            let bound = match v.role {
                VariableRole::Design if v.kind == VariableKind::Transconductance => {
                    gm_bound.contains_key(v.symbol.as_str())
                }
                VariableRole::OutputResistance => ro_bound.contains_key(v.symbol.as_str()),
                _ => true,
            };
            if !bound {
                return Err(invalid(&v.symbol, "not bound to any device"));
            }
        }

        let symbols = SymbolTable::new(file.variables.iter().map(|v| v.symbol.as_str()));
        let numerator = compile_polynomial(&file.numerator, &symbols, "numerator")?;
        let denominator = compile_polynomial(&file.denominator, &symbols, "denominator")?;
        for (label, poly) in [("numerator", &numerator), ("denominator", &denominator)] {
            for c in poly {
                for slot in c.symbols() {
                    let name = symbols.name(slot);
                    if RESERVED.contains(&name) && name != LOAD_CAPACITANCE {
                        return Err(invalid(name, format!("not allowed in the {label}")));
                    }
                }
            }
        }
        if numerator.iter().all(ProductSum::is_zero) {
            return Err(invalid("numerator", "is identically zero"));
        }
        if denominator.is_empty() || !denominator[0].is_sign_definite() {
            return Err(invalid("denominator[0]", "constant coefficient may vanish inside bounds"));
        }
        let lead = denominator.len() - 1;
        if !denominator[lead].is_sign_definite() {
            return Err(invalid(format!("denominator[{lead}]"), "leading coefficient may vanish inside bounds"));
        }
        if numerator.len() > denominator.len() {
            return Err(invalid("numerator", "degree exceeds the denominator degree"));
        }

        let mut relations = Vec::with_capacity(file.design_equations.len());
        for (i, r) in file.design_equations.iter().enumerate() {
            let expr = ProductSum::compile(&r.terms, &symbols)
                .map_err(|sym| invalid(sym, format!("undeclared symbol in design_equations[{i}]")))?;
            for slot in expr.symbols() {
                let name = symbols.name(slot);
                if let Some(v) = var(name) {
                    if v.role == VariableRole::OutputResistance {
                        return Err(invalid(name, "output resistances cannot enter design relations"));
                    }
                }
            }
            relations.push(Relation {
                label: r.label.clone(),
                kind: r.relation,
                expr,
            });
        }

        let desc = TopologyDescriptor {
            source: file,
            symbols,
            numerator,
            denominator,
            relations,
        };
        let unknowns = desc.unknown_symbols();
        let n_eq = desc.relations.iter().filter(|r| r.kind == RelationKind::Eq).count();
        if n_eq != unknowns.len() {
            return Err(invalid(
                "design_equations",
                format!("{n_eq} equalities for {} unknowns", unknowns.len()),
            ));
        }
        for u in &unknowns {
            let slot = desc.symbols.get(u).expect("declared");
            if !desc.relations.iter().any(|r| r.kind == RelationKind::Eq && r.expr.mentions(slot)) {
                return Err(invalid(u.as_str(), "unknown does not appear in any equality"));
            }
        }
        if !desc.relations.is_empty() {
            let gbw = desc.symbols.get(GBW).expect("reserved");
            if !desc.relations.iter().any(|r| r.expr.mentions(gbw)) {
                return Err(invalid("design_equations", "no relation involves GBW"));
            }
        }
        Ok(desc)
    }

    pub fn name(&self) -> &str {
        &self.source.name
    }

    pub fn title(&self) -> &str {
        &self.source.title
    }

    pub fn num_stages(&self) -> u32 {
        self.source.num_stages
    }

    pub fn rhp_zero_cancelled(&self) -> bool {
        self.source.rhp_zero_cancelled
    }

    pub fn source(&self) -> &DescriptorFile {
        &self.source
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.source.stages
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.source.variables
    }

    pub fn variable(&self, symbol: &str) -> Option<&VariableSpec> {
        self.source.variables.iter().find(|v| v.symbol == symbol)
    }

    pub fn devices(&self) -> &[DeviceSpec] {
        &self.source.devices
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Numerator coefficients, index = power of s.
    pub fn numerator(&self) -> &[ProductSum] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[ProductSum] {
        &self.denominator
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Symbols of role `design`, in declaration order.
    pub fn design_variables(&self) -> Vec<&str> {
        self.source
            .variables
            .iter()
            .filter(|v| v.role == VariableRole::Design)
            .map(|v| v.symbol.as_str())
            .collect()
    }

    /// Design variables the relation system is solved for (everything except
    /// capacitors, which are fixed before solving).
    pub fn unknown_symbols(&self) -> Vec<String> {
        self.source
            .variables
            .iter()
            .filter(|v| v.role == VariableRole::Design && v.kind != VariableKind::Capacitance)
            .map(|v| v.symbol.clone())
            .collect()
    }

    /// Geometric midpoint of every variable's bounds (fixed values for
    /// parasitics) with `C_L` set to `cl`, laid out by the symbol table.
    pub fn mid_bounds_values(&self, cl: f64) -> Vec<f64> {
        let mut values = self.symbols.blank();
        values[self.symbols.get(LOAD_CAPACITANCE).expect("reserved")] = cl;
        for v in &self.source.variables {
            let slot = self.symbols.get(&v.symbol).expect("declared");
            values[slot] = v.value.unwrap_or_else(|| (v.bounds[0] * v.bounds[1]).sqrt());
        }
        values
    }
}

fn compile_polynomial(
    coeffs: &[CoefficientSpec],
    symbols: &SymbolTable,
    label: &str,
) -> Result<Vec<ProductSum>, KbError> {
    let degree = coeffs.iter().map(|c| c.power).max().unwrap_or(0);
    let mut out = vec![ProductSum::default(); if coeffs.is_empty() { 0 } else { degree + 1 }];
    let mut seen = BTreeSet::new();
    for c in coeffs {
        if !seen.insert(c.power) {
            return Err(invalid(format!("{label}[{}]", c.power), "power listed twice"));
        }
        out[c.power] = ProductSum::compile(&c.terms, symbols)
            .map_err(|sym| invalid(sym, format!("undeclared symbol in {label}[{}]", c.power)))?;
    }
    while out.last().is_some_and(ProductSum::is_zero) {
        out.pop();
    }
    Ok(out)
}
