//! The built-in topology catalog.

use super::{KbError, TopologyDescriptor};

const BUILTIN: [(&str, &str); 7] = [
    ("SMC", include_str!("../../../../topologies/smc.toml")),
    ("NMCNR", include_str!("../../../../topologies/nmcnr.toml")),
    ("NGCC", include_str!("../../../../topologies/ngcc.toml")),
    ("DFCFC", include_str!("../../../../topologies/dfcfc.toml")),
    ("TCFC", include_str!("../../../../topologies/tcfc.toml")),
    ("IAC", include_str!("../../../../topologies/iac.toml")),
    ("AZC", include_str!("../../../../topologies/azc.toml")),
];

/// Names of the built-in descriptors.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// All built-in descriptors, parsed and validated.
pub fn catalog() -> Vec<TopologyDescriptor> {
    BUILTIN
        .iter()
        .map(|(name, text)| {
            TopologyDescriptor::from_toml_str(text)
                .unwrap_or_else(|e| panic!("built-in descriptor {name} is invalid: {e}"))
        })
        .collect()
}

/// Looks up a built-in descriptor by name, ignoring case.
pub fn builtin(name: &str) -> Result<TopologyDescriptor, KbError> {
    BUILTIN
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, text)| TopologyDescriptor::from_toml_str(text))
        .unwrap_or_else(|| {
            Err(KbError::UnknownTopology {
                name: name.to_string(),
                available: builtin_names().join(", "),
            })
        })
}
