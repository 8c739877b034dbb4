//! TOML scenario files.
//!
//! A file mirrors [`ScenarioConfig`] field for field, with the behavior mix as
//! a nested table and an optional `[driver]` table overriding the synthetic
//! driver's style:
//!
//! ```toml
//! name = "S2"
//! vehicle_count = 100
//! road_length = 5000.0
//! seed = 1
//! weather = "LightFog"
//! tick_hz = 20
//! ego_initial_speed = 110.0
//!
//! [behavior_mix]
//! cautious = 0.2
//! normal = 0.3
//! aggressive = 0.5
//!
//! [driver]
//! compliance = 1.0
//! ```

use std::fs;
use std::path::Path;

use lcassist_core::driver::DriverStyle;
use lcassist_core::sim::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub driver: DriverStyle,
}

impl ScenarioFile {
    pub fn new(scenario: ScenarioConfig) -> Self {
        ScenarioFile {
            scenario,
            driver: DriverStyle::default(),
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::data(origin, e.message().to_string()))?;
        file.scenario
            .validate()
            .map_err(|e| Error::data(origin, e.to_string()))?;
        file.driver
            .validate()
            .map_err(|e| Error::data(origin, format!("driver: {e}")))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    /// Same scenario apart from the seed.
    pub fn same_setup(&self, other: &ScenarioFile) -> bool {
        let mut a = self.scenario.clone();
        a.seed = other.scenario.seed;
        a == other.scenario
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        let s1 = ScenarioFile::parse(include_str!("../scenarios/s1.toml"), Path::new("s1")).unwrap();
        let s2 = ScenarioFile::parse(include_str!("../scenarios/s2.toml"), Path::new("s2")).unwrap();
        assert_eq!(s1.scenario, ScenarioConfig::s1(1));
        assert_eq!(s2.scenario, ScenarioConfig::s2(1));
        assert_eq!(s1.driver, DriverStyle::default());
    }

    #[test]
    fn round_trip() {
        let mut f = ScenarioFile::new(ScenarioConfig::s2(9));
        f.driver.compliance = 0.5;
        let back = ScenarioFile::parse(&f.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn invalid_mix_is_rejected() {
        let text = include_str!("../scenarios/s1.toml").replace("normal = 0.6", "normal = 0.7");
        assert!(matches!(
            ScenarioFile::parse(&text, Path::new("bad")),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn driver_overrides_keep_defaults() {
        let text = format!(
            "{}\n[driver]\ncompliance = 0.25\n",
            include_str!("../scenarios/s2.toml")
        );
        let f = ScenarioFile::parse(&text, Path::new("x")).unwrap();
        assert_eq!(f.driver.compliance, 0.25);
        assert_eq!(f.driver.desired_speed, DriverStyle::default().desired_speed);
        let bad = format!("{}\n[driver]\ncompliance = 1.5\n", include_str!("../scenarios/s2.toml"));
        assert!(ScenarioFile::parse(&bad, Path::new("x")).is_err());
    }

    #[test]
    fn seed_is_ignored_by_same_setup() {
        let a = ScenarioFile::new(ScenarioConfig::s2(1));
        let b = ScenarioFile::new(ScenarioConfig::s2(2));
        let c = ScenarioFile::new(ScenarioConfig::s1(1));
        assert!(a.same_setup(&b));
        assert!(!a.same_setup(&c));
    }
}
