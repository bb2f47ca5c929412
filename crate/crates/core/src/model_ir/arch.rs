use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClipShape, IrError, LayerSpec, Shape5D};

/// Stage names of the ResNet-50 layout, in execution order.
pub const STAGE_NAMES: [&str; 8] = ["conv1", "pool1", "res2", "res3", "res4", "res5", "global-pool", "fc"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Stage {
    pub fn new(name: &str, layers: Vec<LayerSpec>) -> Self {
        Self { name: name.to_string(), layers }
    }
}

/// A video CNN described as data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: String,
    pub num_classes: usize,
    pub input: ClipShape,
    pub stages: Vec<Stage>,
}

impl ArchSpec {
    /// Input shape for a single clip (`n = 1`).
    pub fn input_shape(&self) -> Shape5D {
        self.input.to_shape(1)
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, usize, &LayerSpec)> {
        self.stages
            .iter()
            .flat_map(|s| s.layers.iter().enumerate().map(move |(i, l)| (s.name.as_str(), i, l)))
    }

    pub fn from_json(text: &str) -> Result<Self, IrError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ArchSpec always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, IrError> {
        let text = std::fs::read_to_string(path).map_err(|e| IrError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}
