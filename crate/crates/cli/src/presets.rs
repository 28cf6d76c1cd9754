//! Built-in experiment configurations.

use anyhow::{anyhow, Result};

use crate::config::ExperimentConfig;

/// `(name, toml)` for every preset, in listing order.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2-bsc", include_str!("../presets/fig2-bsc.toml")),
    ("fig3-awgn", include_str!("../presets/fig3-awgn.toml")),
    ("fig3-awgn-m5", include_str!("../presets/fig3-awgn-m5.toml")),
    ("table3", include_str!("../presets/table3.toml")),
    ("fig4-snr-sweep", include_str!("../presets/fig4-snr-sweep.toml")),
    ("fig4-snr-sweep-eps4", include_str!("../presets/fig4-snr-sweep-eps4.toml")),
    ("fig5-nack", include_str!("../presets/fig5-nack.toml")),
    ("table4-crc16", include_str!("../presets/table4-crc16.toml")),
    ("table4-crc12", include_str!("../presets/table4-crc12.toml")),
    ("optimize-synthetic", include_str!("../presets/optimize-synthetic.toml")),
    ("optimize-k16", include_str!("../presets/optimize-k16.toml")),
    ("peak-cap180", include_str!("../presets/peak-cap180.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        anyhow!("unknown preset {name:?}; available: {}", names.join(", "))
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(preset_text(name)?).map_err(|e| e.context(format!("preset {name}")))
}
