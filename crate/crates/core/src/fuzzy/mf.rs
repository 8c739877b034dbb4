use alloc::string::String;

/// Trapezoid with support `[a1, a4]` and core `[a2, a3]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrapezoidalMf {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub label: String,
}

impl TrapezoidalMf {
    /// Panics unless `a1 <= a2 <= a3 <= a4`.
    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64, label: impl Into<String>) -> Self {
        let mf = TrapezoidalMf {
            a1,
            a2,
            a3,
            a4,
            label: label.into(),
        };
        assert!(mf.is_ordered(), "breakpoints out of order: {a1} {a2} {a3} {a4}");
        mf
    }

    pub fn is_ordered(&self) -> bool {
        self.a1 <= self.a2 && self.a2 <= self.a3 && self.a3 <= self.a4
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x >= self.a2 && x <= self.a3 {
            1.0
        } else if x <= self.a1 || x >= self.a4 {
            0.0
        } else if x < self.a2 {
            ((x - self.a1) / (self.a2 - self.a1)).clamp(0.0, 1.0)
        } else {
            ((self.a4 - x) / (self.a4 - self.a3)).clamp(0.0, 1.0)
        }
    }

    pub fn core_midpoint(&self) -> f64 {
        0.5 * (self.a2 + self.a3)
    }
}
