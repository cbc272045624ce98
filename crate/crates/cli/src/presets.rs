//! Experiment configurations shipped with the binary.

use crate::config::{ConfigError, ExperimentConfig};

pub struct Preset {
    pub name: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "fig4_single_decay", toml: include_str!("../presets/fig4_single_decay.toml") },
    Preset { name: "fig5_plus_minus_decay", toml: include_str!("../presets/fig5_plus_minus_decay.toml") },
    Preset { name: "fig6_two_qubit_decay", toml: include_str!("../presets/fig6_two_qubit_decay.toml") },
    Preset { name: "fig7_four_level", toml: include_str!("../presets/fig7_four_level.toml") },
    Preset { name: "fig8_tfim", toml: include_str!("../presets/fig8_tfim.toml") },
    Preset { name: "fig9_compare", toml: include_str!("../presets/fig9_compare.toml") },
    Preset { name: "exact_dilation_sanity", toml: include_str!("../presets/exact_dilation_sanity.toml") },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let preset = find(name).ok_or_else(|| ConfigError::new("", format!("unknown preset `{name}`")))?;
    ExperimentConfig::from_toml(preset.toml)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_is_named_after_itself() {
        for p in PRESETS {
            let cfg = load(p.name).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.name, p.name);
            assert!(!cfg.description.is_empty(), "{}", p.name);
        }
    }

    #[test]
    fn presets_reject_unknown_keys() {
        for p in PRESETS {
            let text = format!("{}\nunknown_key = 1\n", p.toml);
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{}", p.name);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(load("fig99").is_err());
    }
}
