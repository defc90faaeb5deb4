//! Canned configurations for the published tables.

use crate::config::ExperimentConfig;
use crate::error::BenchError;

pub const TABLES: [(&str, &str); 15] = [
    ("table1", include_str!("../configs/table1.toml")),
    ("table2", include_str!("../configs/table2.toml")),
    ("table3", include_str!("../configs/table3.toml")),
    ("table4", include_str!("../configs/table4.toml")),
    ("table5", include_str!("../configs/table5.toml")),
    ("table6", include_str!("../configs/table6.toml")),
    ("table7", include_str!("../configs/table7.toml")),
    ("table8", include_str!("../configs/table8.toml")),
    ("table9", include_str!("../configs/table9.toml")),
    ("table10", include_str!("../configs/table10.toml")),
    ("table11", include_str!("../configs/table11.toml")),
    ("table12", include_str!("../configs/table12.toml")),
    ("table13", include_str!("../configs/table13.toml")),
    ("table14", include_str!("../configs/table14.toml")),
    ("table15", include_str!("../configs/table15.toml")),
];

/// Looks up `table<k>`; a bare number is accepted too.
pub fn canned(id: &str) -> Result<ExperimentConfig, BenchError> {
    let id = id.to_ascii_lowercase();
    let key = if id.chars().all(|c| c.is_ascii_digit()) {
        format!("table{id}")
    } else {
        id
    };
    let (_, text) = TABLES
        .iter()
        .find(|(name, _)| *name == key)
        .ok_or_else(|| BenchError::Config(format!("no canned config `{key}`; try table1 to table15")))?;
    ExperimentConfig::from_toml(text)
}
