//! Unit lexicon: which tokens count as measurement units.

use serde::{Deserialize, Serialize};

/// Default unit tokens. Count nouns ("apples") are deliberately excluded;
/// they stay in quantity-free prose.
pub const DEFAULT_UNITS: &[&str] =
    &["km", "m", "cm", "kg", "g", "h", "min", "s", "$", "%", "dollars"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitLexicon {
    units: Vec<String>,
}

impl Default for UnitLexicon {
    fn default() -> Self {
        Self { units: DEFAULT_UNITS.iter().map(|s| s.to_string()).collect() }
    }
}

impl UnitLexicon {
    pub fn new(units: Vec<String>) -> Self {
        Self { units }
    }

    pub fn is_unit(&self, token: &str) -> bool {
        self.units.iter().any(|u| u == token)
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }
}
