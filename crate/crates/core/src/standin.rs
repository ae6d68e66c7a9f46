//! Built-in 14-bus stand-in network. Branch impedances follow the standard
//! IEEE 14-bus data; zero-sequence impedances are three times positive
//! sequence.

use crate::config::ScenarioFile;
use crate::Result;

/// Mixed generators and inverters with noise scale 0.1.
pub const IEEE14: &str = include_str!("../../../data/ieee14.toml");

/// Every source an inverter, noise scale one.
pub const IEEE14_ALL_IBR: &str = include_str!("../../../data/ieee14_all_ibr.toml");

pub fn ieee14() -> Result<ScenarioFile> {
    ScenarioFile::parse(IEEE14)
}

pub fn ieee14_all_ibr() -> Result<ScenarioFile> {
    ScenarioFile::parse(IEEE14_ALL_IBR)
}
