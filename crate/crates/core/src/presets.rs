//! Problem files shipped with the library.

use crate::dsl::{parse_problem, DslError, ProblemSpec};

const PRESETS: &[(&str, &str)] = &[
    ("ho1d", include_str!("../presets/ho1d.nsp")),
    ("free1d_periodic", include_str!("../presets/free1d_periodic.nsp")),
    ("spherical_free", include_str!("../presets/spherical_free.nsp")),
    ("hydrogen_radial_l0", include_str!("../presets/hydrogen_radial_l0.nsp")),
    ("twoparticle_6d", include_str!("../presets/twoparticle_6d.nsp")),
    ("twoparticle_relative", include_str!("../presets/twoparticle_relative.nsp")),
    ("gauge1d", include_str!("../presets/gauge1d.nsp")),
    ("identical2_1d", include_str!("../presets/identical2_1d.nsp")),
    ("uniform_force1d", include_str!("../presets/uniform_force1d.nsp")),
];

/// `twoparticle` names the separated relative-coordinate problem.
const ALIASES: &[(&str, &str)] = &[("twoparticle", "twoparticle_relative")];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, t)| *t);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown preset `{0}`")]
    Unknown(String),
    #[error("preset `{0}`: {1}")]
    Invalid(String, DslError),
}

pub fn load_preset(name: &str) -> Result<ProblemSpec, PresetError> {
    let src = preset_source(name).ok_or_else(|| PresetError::Unknown(name.into()))?;
    parse_problem(src).map_err(|e| PresetError::Invalid(name.into(), e))
}
