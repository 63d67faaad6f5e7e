use std::path::Path;

use serde::Deserialize;

use super::ComponentSpec;
use crate::error::{Error, Result};

/// Pure-component property table loaded from a TOML file of `[[component]]` entries.
///
/// ```toml
/// [[component]]
/// name = "CH4"
/// critical_temperature = 190.56   # K
/// critical_pressure = 4.599e6     # Pa
/// acentric_factor = 0.011
/// molar_weight = 0.016043         # kg/mol
/// diffusion_coefficient = 1e-6    # m^2/s
/// ```
#[derive(Clone, Debug, Default, Deserialize)]
pub struct ComponentDatabase {
    #[serde(default, rename = "component")]
    components: Vec<ComponentSpec<f64>>,
}

impl ComponentDatabase {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let db: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for c in &db.components {
            c.validate()?;
        }
        Ok(db)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, name: &str) -> Option<&ComponentSpec<f64>> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Looks up several components by name, in order.
    pub fn select(&self, names: &[String]) -> Result<Vec<ComponentSpec<f64>>> {
        names
            .iter()
            .map(|n| {
                self.get(n)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("component {n:?} not in database")))
            })
            .collect()
    }

    pub fn components(&self) -> &[ComponentSpec<f64>] {
        &self.components
    }
}
