//! Product-sum coefficient expressions.
//!
//! Every transfer-function coefficient and every design relation in a
//! descriptor is a signed sum of monomials `k * x1 * x2 * ...`. Expressions
//! are compiled once against a [`SymbolTable`] and then evaluated on plain
//! value slices.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Symbols that are never declared as variables but may appear in expressions.
pub const LOAD_CAPACITANCE: &str = "C_L";
/// Unity-gain frequency target (Hz) used by design relations.
pub const GBW: &str = "GBW";
/// Ratio between the non-dominant pair frequency and the unity-gain frequency.
pub const SEPARATION: &str = "SEP";
/// Quality factor of the non-dominant pair.
pub const QUALITY: &str = "Q";

pub const RESERVED: [&str; 4] = [LOAD_CAPACITANCE, GBW, SEPARATION, QUALITY];

/// One monomial as written in a descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub k: f64,
    #[serde(default)]
    pub m: Vec<String>,
}

/// Name-to-slot mapping shared by all expressions of a descriptor.
///
/// Reserved symbols occupy the first slots, in the order of [`RESERVED`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new<'a>(variables: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = SymbolTable {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for name in RESERVED.iter().copied().chain(variables) {
            if !table.index.contains_key(name) {
                table.index.insert(name.to_string(), table.names.len());
                table.names.push(name.to_string());
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// A value vector with every slot set to NaN.
    pub fn blank(&self) -> Vec<f64> {
        vec![f64::NAN; self.names.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    /// `(slot, power)` pairs, one per distinct symbol.
    pub factors: Vec<(usize, i32)>,
}

impl Monomial {
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.factors
            .iter()
            .fold(self.coeff, |acc, &(slot, p)| acc * values[slot].powi(p))
    }
}

/// A compiled signed sum of monomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProductSum {
    pub terms: Vec<Monomial>,
}

impl ProductSum {
    /// Compiles file terms. Fails with the first symbol missing from `table`.
    pub fn compile(specs: &[TermSpec], table: &SymbolTable) -> Result<Self, String> {
        let mut terms = Vec::with_capacity(specs.len());
        for spec in specs {
            let mut factors: Vec<(usize, i32)> = Vec::new();
            for name in &spec.m {
                let slot = table.get(name).ok_or_else(|| name.clone())?;
                match factors.iter_mut().find(|(s, _)| *s == slot) {
                    Some(f) => f.1 += 1,
                    None => factors.push((slot, 1)),
                }
            }
            factors.sort_unstable();
            terms.push(Monomial {
                coeff: spec.k,
                factors,
            });
        }
        Ok(ProductSum { terms })
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(values)).sum()
    }

    /// Returns the signed sum and the sum of absolute term values.
    pub fn eval_with_scale(&self, values: &[f64]) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(s, a), t| {
            let v = t.eval(values);
            (s + v, a + v.abs())
        })
    }

    /// Accumulates derivatives with respect to `ln x_slot` for the listed
    /// slots. `signed[j]` receives d(sum)/d ln x and `absolute[j]` receives
    /// d(sum of |terms|)/d ln x.
    pub fn log_gradient(
        &self,
        values: &[f64],
        slots: &[usize],
        signed: &mut [f64],
        absolute: &mut [f64],
    ) {
        for t in &self.terms {
            let v = t.eval(values);
            for (j, &slot) in slots.iter().enumerate() {
                if let Some(&(_, p)) = t.factors.iter().find(|(s, _)| *s == slot) {
                    signed[j] += p as f64 * v;
                    absolute[j] += p as f64 * v.abs();
                }
            }
        }
    }

    pub fn symbols(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|&(s, _)| s))
    }

    pub fn mentions(&self, slot: usize) -> bool {
        self.symbols().any(|s| s == slot)
    }

    /// True when all nonzero terms share one sign and at least one exists.
    pub fn is_sign_definite(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for t in &self.terms {
            if t.coeff > 0.0 {
                pos = true;
            } else if t.coeff < 0.0 {
                neg = true;
            }
        }
        pos ^ neg
    }
}
