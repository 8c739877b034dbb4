use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::vehicle::Behavior;
use super::{SimError, NEIGHBOR_RANGE};
use crate::types::TICK_HZ;

/// Fractions of cautious, normal and aggressive surrounding vehicles.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BehaviorMix {
    pub cautious: f64,
    pub normal: f64,
    pub aggressive: f64,
}

impl BehaviorMix {
    pub const fn new(cautious: f64, normal: f64, aggressive: f64) -> Self {
        BehaviorMix {
            cautious,
            normal,
            aggressive,
        }
    }

    pub fn sum(&self) -> f64 {
        self.cautious + self.normal + self.aggressive
    }

    /// Vehicle counts per class for `n` vehicles by largest remainder, so the
    /// realised mix is within `1/n` of the configured one.
    pub fn apportion(&self, n: usize) -> [(Behavior, usize); 3] {
        let fracs = [
            (Behavior::Cautious, self.cautious),
            (Behavior::Normal, self.normal),
            (Behavior::Aggressive, self.aggressive),
        ];
        let mut counts: Vec<(usize, f64)> = fracs
            .iter()
            .map(|&(_, f)| {
                let exact = f * n as f64;
                let floor = libm::floor(exact);
                (floor as usize, exact - floor)
            })
            .collect();
        let assigned: usize = counts.iter().map(|c| c.0).sum();
        let mut order: Vec<usize> = (0..3).collect();
        // stable sort keeps class order on equal remainders
        order.sort_by(|&a, &b| counts[b].1.total_cmp(&counts[a].1));
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i].0 += 1;
        }
        [
            (Behavior::Cautious, counts[0].0),
            (Behavior::Normal, counts[1].0),
            (Behavior::Aggressive, counts[2].0),
        ]
    }
}

/// Weather label. Cosmetic only: it does not change perception or dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Weather {
    #[default]
    Clear,
    LightFog,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub name: String,
    pub behavior_mix: BehaviorMix,
    /// Number of surrounding vehicles (the ego is extra).
    pub vehicle_count: usize,
    /// Ring length (m).
    pub road_length: f64,
    pub seed: u64,
    pub weather: Weather,
    pub tick_hz: u32,
    /// km/h
    pub ego_initial_speed: f64,
}

impl ScenarioConfig {
    /// Training-data scenario: clear weather, 20/60/20 mix.
    pub fn s1(seed: u64) -> Self {
        ScenarioConfig {
            name: String::from("S1"),
            behavior_mix: BehaviorMix::new(0.2, 0.6, 0.2),
            vehicle_count: 100,
            road_length: 5000.0,
            seed,
            weather: Weather::Clear,
            tick_hz: TICK_HZ,
            ego_initial_speed: 110.0,
        }
    }

    /// Assistance scenario: light fog, 20/30/50 mix.
    pub fn s2(seed: u64) -> Self {
        ScenarioConfig {
            name: String::from("S2"),
            behavior_mix: BehaviorMix::new(0.2, 0.3, 0.5),
            weather: Weather::LightFog,
            ..ScenarioConfig::s1(seed)
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mix = &self.behavior_mix;
        if [mix.cautious, mix.normal, mix.aggressive]
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(SimError::InvalidScenario(String::from(
                "behavior fractions must lie in [0, 1]",
            )));
        }
        if (mix.sum() - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidScenario(format!(
                "behavior mix sums to {}, expected 1",
                mix.sum()
            )));
        }
        if self.tick_hz != TICK_HZ {
            return Err(SimError::InvalidScenario(format!(
                "tick rate must be {TICK_HZ} Hz, got {}",
                self.tick_hz
            )));
        }
        if !(self.road_length >= 2.0 * NEIGHBOR_RANGE + 100.0) || !self.road_length.is_finite() {
            return Err(SimError::InvalidScenario(format!(
                "road length {} m is shorter than twice the sensing range plus 100 m",
                self.road_length
            )));
        }
        if !(0.0..=super::SPEED_MAX_KMH).contains(&self.ego_initial_speed) {
            return Err(SimError::InvalidScenario(String::from(
                "ego initial speed outside [0, 220] km/h",
            )));
        }
        Ok(())
    }
}
