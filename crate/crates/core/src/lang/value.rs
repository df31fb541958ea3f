use serde::{Deserialize, Serialize};

/// Bit-width of machine values. Arithmetic wraps modulo `2^bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Width(u32);

impl Width {
    pub const DEFAULT: Width = Width(64);

    /// Returns `None` for widths outside `1..=64`.
    pub fn new(bits: u32) -> Option<Width> {
        (1..=64).contains(&bits).then_some(Width(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn mask(self) -> u64 {
        if self.0 == 64 {
            u64::MAX
        } else {
            (1u64 << self.0) - 1
        }
    }

    pub fn wrap(self, v: u64) -> u64 {
        v & self.mask()
    }
}

impl Default for Width {
    fn default() -> Self {
        Width::DEFAULT
    }
}
