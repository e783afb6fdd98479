use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SchemaError;

/// Base class to macro class table.
///
/// `levels` counts the base level too: a two-level mapping (base, macro)
/// stores one macro label per base class, a three-level hierarchy stores two,
/// coarsest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMapping {
    pub name: String,
    pub levels: usize,
    pub map: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MacroPath {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    name: String,
    levels: usize,
    map: BTreeMap<String, MacroPath>,
}

impl MacroMapping {
    pub fn identity(name: impl Into<String>, classes: &[String]) -> Self {
        Self {
            name: name.into(),
            levels: 2,
            map: classes.iter().map(|c| (c.clone(), vec![c.clone()])).collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let file: MappingFile =
            toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        let map = file
            .map
            .into_iter()
            .map(|(base, path)| {
                let path = match path {
                    MacroPath::One(s) => vec![s],
                    MacroPath::Many(v) => v,
                };
                (base, path)
            })
            .collect();
        let mapping = Self {
            name: file.name,
            levels: file.levels,
            map,
        };
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.levels < 2 {
            return Err(SchemaError::Mapping {
                mapping: self.name.clone(),
                reason: format!("levels must be at least 2, got {}", self.levels),
            });
        }
        for (base, path) in &self.map {
            if path.len() != self.levels - 1 {
                return Err(SchemaError::Mapping {
                    mapping: self.name.clone(),
                    reason: format!(
                        "class {base:?} maps to {} macro labels, expected {}",
                        path.len(),
                        self.levels - 1
                    ),
                });
            }
        }
        Ok(())
    }

    /// Every class in `classes` has an entry.
    pub fn check_total(&self, classes: &[String]) -> Result<(), SchemaError> {
        match classes.iter().find(|c| !self.map.contains_key(*c)) {
            Some(missing) => Err(SchemaError::Mapping {
                mapping: self.name.clone(),
                reason: format!("class {missing:?} is not mapped"),
            }),
            None => Ok(()),
        }
    }

    /// Distinct labels at macro `level` (1 = coarsest), sorted.
    pub fn macro_classes(&self, level: usize) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .map
            .values()
            .filter_map(|path| path.get(level.wrapping_sub(1)))
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn lookup(&self, class: &str, level: usize) -> Option<&str> {
        self.map
            .get(class)
            .and_then(|path| path.get(level.wrapping_sub(1)))
            .map(String::as_str)
    }
}
