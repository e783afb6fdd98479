use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::builtin::{class_preset, COCO_MACRO_TOML, TABLE1_SCHEMA_TOML};
use super::descriptor::{AttributeDescriptor, DerivationRule, Group, Kind, Scope, Source};
use super::mapping::MacroMapping;
use super::SchemaError;

/// Threshold applied to binary probability signals when none is configured.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Per-attribute thresholds for binary classification, keyed by the
/// probability attribute being thresholded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub default: f64,
    pub per_attribute: BTreeMap<String, f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            default: DEFAULT_THRESHOLD,
            per_attribute: BTreeMap::new(),
        }
    }
}

impl ThresholdConfig {
    pub fn get(&self, attribute: &str) -> f64 {
        self.per_attribute
            .get(attribute)
            .copied()
            .unwrap_or(self.default)
    }

    pub fn set(&mut self, attribute: impl Into<String>, t: f64) -> Result<(), SchemaError> {
        let attribute = attribute.into();
        if !(0.0..=1.0).contains(&t) {
            return Err(SchemaError::Threshold { attribute, value: t });
        }
        self.per_attribute.insert(attribute, t);
        Ok(())
    }

    /// Copy with `overrides` applied on top.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, f64>) -> Result<Self, SchemaError> {
        let mut out = self.clone();
        for (k, v) in overrides {
            out.set(k.clone(), *v)?;
        }
        Ok(out)
    }
}

/// A validated attribute schema: descriptors, macro mappings and thresholds.
#[derive(Debug, Clone)]
pub struct Schema {
    name: String,
    attributes: Vec<AttributeDescriptor>,
    index: HashMap<String, usize>,
    mappings: BTreeMap<String, MacroMapping>,
    thresholds: ThresholdConfig,
    face_attribute: String,
    derivation_order: Vec<usize>,
}

#[derive(Serialize)]
struct DigestView<'a> {
    attributes: &'a [AttributeDescriptor],
    mappings: &'a BTreeMap<String, MacroMapping>,
    thresholds: &'a ThresholdConfig,
    face_attribute: &'a str,
}

impl Schema {
    /// Builds and validates a schema from explicit descriptors.
    pub fn from_descriptors(
        name: impl Into<String>,
        attributes: Vec<AttributeDescriptor>,
        mappings: Vec<MacroMapping>,
        thresholds: ThresholdConfig,
    ) -> Result<Self, SchemaError> {
        let mut index = HashMap::new();
        for (i, a) in attributes.iter().enumerate() {
            if index.insert(a.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateName(a.name.clone()));
            }
        }
        let mut mapping_table = BTreeMap::new();
        for m in mappings {
            m.validate()?;
            mapping_table.insert(m.name.clone(), m);
        }
        for t in thresholds.per_attribute.values().chain([&thresholds.default]) {
            if !(0.0..=1.0).contains(t) {
                return Err(SchemaError::Threshold {
                    attribute: "<default>".into(),
                    value: *t,
                });
            }
        }
        let mut schema = Self {
            name: name.into(),
            attributes,
            index,
            mappings: mapping_table,
            thresholds,
            face_attribute: "face".into(),
            derivation_order: Vec::new(),
        };
        schema.validate_kinds()?;
        schema.derivation_order = schema.topological_order()?;
        Ok(schema)
    }

    /// The built-in attribute set with no user configuration.
    pub fn builtin() -> Self {
        Self::from_config_str("").expect("built-in schema is valid")
    }

    pub fn from_config_file(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        load(&text, Some(base))
    }

    /// Parses a configuration document; relative mapping `file` entries are
    /// resolved against the current directory.
    pub fn from_config_str(text: &str) -> Result<Self, SchemaError> {
        load(text, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[AttributeDescriptor] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDescriptor> {
        self.index.get(name).map(|&i| &self.attributes[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn mapping(&self, name: &str) -> Option<&MacroMapping> {
        self.mappings.get(name)
    }

    pub fn mappings(&self) -> &BTreeMap<String, MacroMapping> {
        &self.mappings
    }

    pub fn thresholds(&self) -> &ThresholdConfig {
        &self.thresholds
    }

    /// Copy with default thresholds replaced for the given probability
    /// attributes.
    pub fn with_thresholds(&self, overrides: &BTreeMap<String, f64>) -> Result<Self, SchemaError> {
        for name in overrides.keys() {
            match self.get(name) {
                Some(d) if d.kind == Kind::Probability => {}
                _ => return Err(SchemaError::NotThresholdable(name.clone())),
            }
        }
        let mut out = self.clone();
        out.thresholds = self.thresholds.with_overrides(overrides)?;
        Ok(out)
    }

    /// Per-individual attribute whose manifest entries carry face boxes.
    pub fn face_attribute(&self) -> &str {
        &self.face_attribute
    }

    /// Indices of derived attributes, each after everything it reads.
    pub fn derivation_order(&self) -> &[usize] {
        &self.derivation_order
    }

    /// Hex SHA-256 over the canonical JSON form of the schema.
    pub fn digest(&self) -> String {
        let view = DigestView {
            attributes: &self.attributes,
            mappings: &self.mappings,
            thresholds: &self.thresholds,
            face_attribute: &self.face_attribute,
        };
        let bytes = serde_json::to_vec(&view).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn validate_kinds(&self) -> Result<(), SchemaError> {
        for a in &self.attributes {
            if let Kind::ProbabilityVector { classes } = &a.kind {
                if classes.len() < 2 {
                    return Err(SchemaError::VectorClasses(a.name.clone()));
                }
            }
            if let Some(rule) = a.rule() {
                let (scope, kind) = self.infer(&a.name, rule)?;
                if scope != a.scope {
                    return Err(SchemaError::RuleMismatch {
                        attribute: a.name.clone(),
                        reason: format!("rule yields {scope} scope, descriptor says {}", a.scope),
                    });
                }
                if kind.name() != a.kind.name() {
                    return Err(SchemaError::RuleMismatch {
                        attribute: a.name.clone(),
                        reason: format!(
                            "rule yields a {} value, descriptor says {}",
                            kind.name(),
                            a.kind.name()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Scope and kind produced by `rule` given the current descriptors.
    fn infer(&self, name: &str, rule: &DerivationRule) -> Result<(Scope, Kind), SchemaError> {
        let missing = |reason: String| SchemaError::MissingRule {
            attribute: name.to_string(),
            reason,
        };
        let source = self
            .get(rule.source())
            .ok_or_else(|| missing(format!("source attribute {:?} does not exist", rule.source())))?;
        let per_individual = |what: &str| {
            if source.scope == Scope::PerIndividual {
                Ok(())
            } else {
                Err(missing(format!("{what} needs a per_individual source, {:?} is per_sample", source.name)))
            }
        };
        match rule {
            DerivationRule::Threshold { .. } => match source.kind {
                Kind::Probability => Ok((
                    source.scope,
                    Kind::Categorical {
                        classes: vec!["negative".into(), "positive".into()],
                    },
                )),
                _ => Err(missing(format!("threshold needs a probability source, {:?} is {}", source.name, source.kind.name()))),
            },
            DerivationRule::Argmax { .. } => match &source.kind {
                Kind::ProbabilityVector { classes } => Ok((
                    source.scope,
                    Kind::Categorical {
                        classes: classes.clone(),
                    },
                )),
                other => Err(missing(format!("argmax needs a probability_vector source, {:?} is {}", source.name, other.name()))),
            },
            DerivationRule::Count { class, .. } => {
                per_individual("count")?;
                if let Some(class) = class {
                    match &source.kind {
                        Kind::Categorical { classes } if classes.is_empty() || classes.contains(class) => {}
                        _ => return Err(missing(format!("class {class:?} is not a class of {:?}", source.name))),
                    }
                }
                Ok((Scope::PerSample, Kind::Continuous { unit: "count".into() }))
            }
            DerivationRule::Std { .. } => {
                per_individual("std")?;
                let unit = match &source.kind {
                    Kind::Continuous { unit } => unit.clone(),
                    Kind::Probability => "probability".into(),
                    Kind::Categorical { classes } if !classes.is_empty() => "class index".into(),
                    other => return Err(missing(format!("std needs a numeric or ordinal source, {:?} is {}", source.name, other.name()))),
                };
                Ok((Scope::PerSample, Kind::Continuous { unit }))
            }
            DerivationRule::Presence { .. } => {
                per_individual("presence")?;
                Ok((
                    Scope::PerSample,
                    Kind::Categorical {
                        classes: vec!["absent".into(), "present".into()],
                    },
                ))
            }
            DerivationRule::BoxArea { relative, .. } => {
                per_individual("box_area")?;
                let unit = if *relative { "fraction" } else { "pixels²" };
                Ok((Scope::PerIndividual, Kind::Continuous { unit: unit.into() }))
            }
            DerivationRule::Macro { mapping, level, .. } => {
                let table = self
                    .mapping(mapping)
                    .ok_or_else(|| missing(format!("mapping {mapping:?} is not defined")))?;
                if *level == 0 || *level >= table.levels {
                    return Err(missing(format!("level {level} outside 1..{} for mapping {mapping:?}", table.levels - 1)));
                }
                match &source.kind {
                    Kind::Categorical { classes } => table.check_total(classes)?,
                    other => return Err(missing(format!("macro needs a categorical source, {:?} is {}", source.name, other.name()))),
                }
                Ok((
                    source.scope,
                    Kind::Categorical {
                        classes: table.macro_classes(*level),
                    },
                ))
            }
        }
    }

    fn topological_order(&self) -> Result<Vec<usize>, SchemaError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            None,
            Active,
            Done,
        }
        fn visit(
            s: &Schema,
            i: usize,
            marks: &mut [Mark],
            out: &mut Vec<usize>,
        ) -> Result<(), SchemaError> {
            match marks[i] {
                Mark::Done => return Ok(()),
                Mark::Active => return Err(SchemaError::Cycle(s.attributes[i].name.clone())),
                Mark::None => {}
            }
            marks[i] = Mark::Active;
            if let Some(rule) = s.attributes[i].rule() {
                let src = s.index[rule.source()];
                visit(s, src, marks, out)?;
                out.push(i);
            }
            marks[i] = Mark::Done;
            Ok(())
        }
        let mut marks = vec![Mark::None; self.attributes.len()];
        let mut out = Vec::new();
        for i in 0..self.attributes.len() {
            visit(self, i, &mut marks, &mut out)?;
        }
        Ok(out)
    }
}

// ------------------------------------------------------------------ config

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawClasses {
    Preset(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    rule: String,
    of: String,
    class: Option<String>,
    relative: Option<bool>,
    mapping: Option<String>,
    level: Option<usize>,
    #[serde(default)]
    per_class: bool,
    classes: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: String,
    group: Option<String>,
    scope: Option<String>,
    kind: Option<String>,
    classes: Option<RawClasses>,
    n_c: Option<usize>,
    unit: Option<String>,
    source: Option<String>,
    rule: Option<RawRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMapping {
    file: Option<String>,
    levels: Option<usize>,
    map: Option<toml::Table>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    builtin: Option<bool>,
    face_attribute: Option<String>,
    default_threshold: Option<f64>,
    #[serde(default)]
    thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    mappings: BTreeMap<String, RawMapping>,
    #[serde(default)]
    attributes: Vec<RawAttribute>,
}

fn parse_group(s: &str) -> Result<Group, SchemaError> {
    Ok(match s {
        "labels" => Group::Labels,
        "demographics" => Group::Demographics,
        "pornography" => Group::Pornography,
        "context" => Group::Context,
        "quality" => Group::Quality,
        "metadata" => Group::Metadata,
        other => return Err(SchemaError::UnknownGroup(other.into())),
    })
}

fn parse_scope(s: &str) -> Result<Scope, SchemaError> {
    match s {
        "per_sample" => Ok(Scope::PerSample),
        "per_individual" => Ok(Scope::PerIndividual),
        other => Err(SchemaError::UnknownScope(other.into())),
    }
}

fn resolve_classes(name: &str, raw: Option<RawClasses>) -> Result<Vec<String>, SchemaError> {
    match raw {
        None => Ok(Vec::new()),
        Some(RawClasses::List(v)) => Ok(v),
        Some(RawClasses::Preset(p)) => class_preset(&p).ok_or_else(|| SchemaError::UnknownPreset {
            attribute: name.into(),
            preset: p,
        }),
    }
}

/// A parsed but not yet validated attribute entry. Derived entries keep
/// their scope and kind open until the sources are known.
struct Pending {
    name: String,
    group: Option<Group>,
    scope: Option<Scope>,
    kind: Option<Kind>,
    kind_name: Option<String>,
    source: Source,
    per_class: bool,
    threshold_classes: Option<Vec<String>>,
}

fn parse_attribute(raw: RawAttribute) -> Result<Pending, SchemaError> {
    let group = raw.group.as_deref().map(parse_group).transpose()?;
    let scope = raw.scope.as_deref().map(parse_scope).transpose()?;
    let source_name = raw.source.as_deref().unwrap_or(if raw.rule.is_some() { "derived" } else { "external" });
    let kind_name = raw.kind.clone();
    let kind = match raw.kind.as_deref() {
        None => None,
        Some("categorical") => Some(Kind::Categorical {
            classes: resolve_classes(&raw.name, raw.classes)?,
        }),
        Some("continuous") => Some(Kind::Continuous {
            unit: raw.unit.unwrap_or_default(),
        }),
        Some("probability") => Some(Kind::Probability),
        Some("probability_vector") => {
            let classes = match (resolve_classes(&raw.name, raw.classes)?, raw.n_c) {
                (c, None) => c,
                (c, Some(n)) if c.is_empty() => (0..n).map(|i| i.to_string()).collect(),
                (c, Some(n)) if c.len() == n => c,
                (c, Some(n)) => {
                    return Err(SchemaError::RuleMismatch {
                        attribute: raw.name,
                        reason: format!("n_c = {n} but {} classes listed", c.len()),
                    })
                }
            };
            Some(Kind::ProbabilityVector { classes })
        }
        Some(other) => {
            return Err(SchemaError::UnknownKind {
                attribute: raw.name,
                kind: other.into(),
            })
        }
    };
    let mut per_class = false;
    let mut threshold_classes = None;
    let source = match source_name {
        "native" => Source::Native,
        "external" => Source::External,
        "derived" => {
            let rule = raw.rule.ok_or_else(|| SchemaError::MissingRule {
                attribute: raw.name.clone(),
                reason: "derived attribute has no rule".into(),
            })?;
            per_class = rule.per_class;
            threshold_classes = rule.classes.clone();
            Source::Derived(parse_rule(&raw.name, rule)?)
        }
        other => return Err(SchemaError::UnknownSource(other.into())),
    };
    if !matches!(source, Source::Derived(_)) {
        if group.is_none() || scope.is_none() || kind.is_none() {
            return Err(SchemaError::Incomplete(raw.name));
        }
    }
    Ok(Pending {
        name: raw.name,
        group,
        scope,
        kind,
        kind_name,
        source,
        per_class,
        threshold_classes,
    })
}

fn parse_rule(name: &str, raw: RawRule) -> Result<DerivationRule, SchemaError> {
    let missing = |reason: &str| SchemaError::MissingRule {
        attribute: name.into(),
        reason: reason.into(),
    };
    Ok(match raw.rule.as_str() {
        "threshold" => DerivationRule::Threshold { of: raw.of },
        "argmax" => DerivationRule::Argmax { of: raw.of },
        "count" => DerivationRule::Count {
            of: raw.of,
            class: raw.class,
        },
        "std" => DerivationRule::Std { of: raw.of },
        "presence" => DerivationRule::Presence { of: raw.of },
        "box_area" => DerivationRule::BoxArea {
            of: raw.of,
            relative: raw.relative.unwrap_or(false),
        },
        "macro" => DerivationRule::Macro {
            of: raw.of,
            mapping: raw.mapping.ok_or_else(|| missing("macro rule needs `mapping`"))?,
            level: raw.level.unwrap_or(1),
        },
        other => return Err(missing(&format!("unknown rule {other:?}"))),
    })
}

fn load_mapping(name: &str, raw: RawMapping, base: Option<&Path>) -> Result<MacroMapping, SchemaError> {
    match (raw.file, raw.map) {
        (Some(file), None) => {
            let path = match base {
                Some(b) => b.join(&file),
                None => file.into(),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
            let mut m = MacroMapping::from_toml(&text)?;
            m.name = name.into();
            Ok(m)
        }
        (None, Some(map)) => {
            let mut doc = toml::Table::new();
            doc.insert("name".into(), toml::Value::String(name.into()));
            doc.insert(
                "levels".into(),
                toml::Value::Integer(raw.levels.unwrap_or(2) as i64),
            );
            doc.insert("map".into(), toml::Value::Table(map));
            MacroMapping::from_toml(&doc.to_string())
        }
        _ => Err(SchemaError::Mapping {
            mapping: name.into(),
            reason: "give exactly one of `file` or `map`".into(),
        }),
    }
}

fn load(text: &str, base: Option<&Path>) -> Result<Schema, SchemaError> {
    let config: RawConfig = toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
    let include_builtin = config.builtin.unwrap_or(true);

    let mut pending: Vec<Pending> = Vec::new();
    let mut mappings: BTreeMap<String, MacroMapping> = BTreeMap::new();
    let mut thresholds = ThresholdConfig::default();

    if include_builtin {
        let builtin: RawConfig = toml::from_str(TABLE1_SCHEMA_TOML).expect("built-in schema parses");
        for raw in builtin.attributes {
            pending.push(parse_attribute(raw)?);
        }
        let coco = MacroMapping::from_toml(COCO_MACRO_TOML)?;
        mappings.insert(coco.name.clone(), coco);
        thresholds.per_attribute.extend(builtin.thresholds);
    }

    let mut seen = std::collections::HashSet::new();
    for raw in config.attributes {
        if !seen.insert(raw.name.clone()) {
            return Err(SchemaError::DuplicateName(raw.name));
        }
        let p = parse_attribute(raw)?;
        match pending.iter().position(|q| q.name == p.name) {
            Some(i) => pending[i] = p,
            None => pending.push(p),
        }
    }
    for (name, raw) in config.mappings {
        let m = load_mapping(&name, raw, base)?;
        mappings.insert(name, m);
    }
    if let Some(t) = config.default_threshold {
        thresholds.default = t;
    }
    for (k, v) in config.thresholds {
        thresholds.set(k, v)?;
    }

    let descriptors = resolve_pending(pending, &mappings)?;
    let mut schema = Schema::from_descriptors(
        config.name.unwrap_or_else(|| "dataset".into()),
        descriptors,
        mappings.into_values().collect(),
        thresholds,
    )?;
    if let Some(face) = config.face_attribute {
        schema.face_attribute = face;
    }
    Ok(schema)
}

/// Fills in scope, kind and group of derived entries (in dependency order)
/// and expands `per_class` counts into one attribute per class.
fn resolve_pending(
    pending: Vec<Pending>,
    mappings: &BTreeMap<String, MacroMapping>,
) -> Result<Vec<AttributeDescriptor>, SchemaError> {
    let names: HashMap<String, usize> = pending
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect();
    let mut resolved: Vec<Option<Vec<AttributeDescriptor>>> = vec![None; pending.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn resolve(
        i: usize,
        pending: &[Pending],
        names: &HashMap<String, usize>,
        mappings: &BTreeMap<String, MacroMapping>,
        resolved: &mut Vec<Option<Vec<AttributeDescriptor>>>,
        stack: &mut Vec<usize>,
    ) -> Result<(), SchemaError> {
        if resolved[i].is_some() {
            return Ok(());
        }
        if stack.contains(&i) {
            return Err(SchemaError::Cycle(pending[i].name.clone()));
        }
        let p = &pending[i];
        let Source::Derived(rule) = &p.source else {
            resolved[i] = Some(vec![AttributeDescriptor::new(
                p.name.clone(),
                p.group.expect("checked"),
                p.scope.expect("checked"),
                p.kind.clone().expect("checked"),
                p.source.clone(),
            )]);
            return Ok(());
        };
        let src_idx = *names.get(rule.source()).ok_or_else(|| SchemaError::MissingRule {
            attribute: p.name.clone(),
            reason: format!("source attribute {:?} does not exist", rule.source()),
        })?;
        stack.push(i);
        resolve(src_idx, pending, names, mappings, resolved, stack)?;
        stack.pop();
        let source = resolved[src_idx].as_ref().expect("resolved")[0].clone();

        // Scope and kind are inferred on a two-attribute scratch schema so the
        // rule checks live in one place.
        let probe = Schema {
            name: String::new(),
            attributes: vec![source.clone()],
            index: [(source.name.clone(), 0)].into_iter().collect(),
            mappings: mappings.clone(),
            thresholds: ThresholdConfig::default(),
            face_attribute: String::new(),
            derivation_order: Vec::new(),
        };
        let (scope, mut kind) = probe.infer(&p.name, rule)?;
        if let (DerivationRule::Threshold { .. }, Some(classes)) = (rule, &p.threshold_classes) {
            if classes.len() != 2 {
                return Err(SchemaError::MissingRule {
                    attribute: p.name.clone(),
                    reason: "threshold classes must name exactly [negative, positive]".into(),
                });
            }
            kind = Kind::Categorical {
                classes: classes.clone(),
            };
        }
        if let Some(s) = p.scope {
            if s != scope {
                return Err(SchemaError::RuleMismatch {
                    attribute: p.name.clone(),
                    reason: format!("rule yields {scope} scope, descriptor says {s}"),
                });
            }
        }
        if let Some(k) = &p.kind_name {
            if k != kind.name() {
                return Err(SchemaError::RuleMismatch {
                    attribute: p.name.clone(),
                    reason: format!("rule yields a {} value, descriptor says {k}", kind.name()),
                });
            }
        }
        let group = p.group.unwrap_or(source.group);
        let mut out = vec![AttributeDescriptor::new(
            p.name.clone(),
            group,
            scope,
            kind.clone(),
            p.source.clone(),
        )];
        if p.per_class {
            let DerivationRule::Count { of, class: None } = rule else {
                return Err(SchemaError::MissingRule {
                    attribute: p.name.clone(),
                    reason: "per_class applies only to a count rule without `class`".into(),
                });
            };
            let classes = match &source.kind {
                Kind::Categorical { classes } if !classes.is_empty() => classes.clone(),
                _ => {
                    return Err(SchemaError::MissingRule {
                        attribute: p.name.clone(),
                        reason: format!("per_class needs a source with declared classes, {of:?} has none"),
                    })
                }
            };
            for c in classes {
                out.push(AttributeDescriptor::new(
                    format!("{}[{c}]", p.name),
                    group,
                    scope,
                    kind.clone(),
                    Source::Derived(DerivationRule::Count {
                        of: of.clone(),
                        class: Some(c),
                    }),
                ));
            }
        }
        resolved[i] = Some(out);
        Ok(())
    }

    for i in 0..pending.len() {
        resolve(i, &pending, &names, mappings, &mut resolved, &mut stack)?;
    }
    Ok(resolved.into_iter().flat_map(|v| v.expect("resolved")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_builtin_set() {
        let s = Schema::from_config_str("").unwrap();
        for name in [
            "face", "ita", "ita_std", "age", "age_class", "nsfw", "nsfw_class", "porn_class",
            "object", "object_macro", "scene", "luminance", "brisque", "extension", "colormode",
            "aspect_ratio", "resolution",
        ] {
            assert!(s.get(name).is_some(), "missing {name}");
        }
        // object_count expands into n_c + 1 attributes
        let object_counts = s
            .attributes()
            .iter()
            .filter(|a| a.name.starts_with("object_count"))
            .count();
        assert_eq!(object_counts, 81);
        assert_eq!(s.thresholds().get("nsfw"), 0.3);
        assert_eq!(s.thresholds().get("child"), 0.5);
    }

    #[test]
    fn config_probability_attribute() {
        let s = Schema::from_config_str(
            r#"
            [[attributes]]
            name = "nsfw"
            group = "pornography"
            scope = "per_sample"
            kind = "probability"
            source = "external"
            "#,
        )
        .unwrap();
        let d = s.get("nsfw").unwrap();
        assert_eq!(d.kind, Kind::Probability);
        assert_eq!(d.scope, Scope::PerSample);
        assert_eq!(d.source, Source::External);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Schema::from_config_str(
            r#"
            [[attributes]]
            name = "age"
            group = "labels"
            scope = "per_sample"
            kind = "continuous"
            [[attributes]]
            name = "age"
            group = "labels"
            scope = "per_sample"
            kind = "continuous"
            "#,
        )
        .unwrap_err();
        assert_eq!(err, SchemaError::DuplicateName("age".into()));
    }

    #[test]
    fn unknown_kind_and_group_rejected() {
        let err = Schema::from_config_str(
            "[[attributes]]\nname = \"x\"\ngroup = \"labels\"\nscope = \"per_sample\"\nkind = \"ordinal\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::UnknownKind { .. }));
        let err = Schema::from_config_str(
            "[[attributes]]\nname = \"x\"\ngroup = \"weather\"\nscope = \"per_sample\"\nkind = \"probability\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::UnknownGroup(_)));
    }

    #[test]
    fn derived_rule_must_resolve() {
        let err = Schema::from_config_str(
            "builtin = false\n[[attributes]]\nname = \"x\"\nsource = \"derived\"\nrule = { rule = \"threshold\", of = \"nope\" }\n",
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::MissingRule { .. }));
        let err = Schema::from_config_str(
            "builtin = false\n[[attributes]]\nname = \"x\"\nsource = \"derived\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::MissingRule { .. }));
    }

    #[test]
    fn probability_vector_needs_two_classes() {
        let err = Schema::from_config_str(
            "builtin = false\n[[attributes]]\nname = \"v\"\ngroup = \"labels\"\nscope = \"per_sample\"\nkind = \"probability_vector\"\nn_c = 1\n",
        )
        .unwrap_err();
        assert_eq!(err, SchemaError::VectorClasses("v".into()));
    }

    #[test]
    fn derived_chain_orders_sources_first() {
        let s = Schema::builtin();
        let order = s.derivation_order();
        let pos = |n: &str| order.iter().position(|&i| s.attributes()[i].name == n).unwrap();
        assert!(pos("child_class") < pos("child_count[child]"));
        assert!(pos("age_class") < pos("age_std"));
    }

    #[test]
    fn inline_scene_mapping() {
        let s = Schema::from_config_str(
            r#"
            [mappings.scene_h]
            levels = 3
            map = { bedroom = ["indoor", "home"], beach = ["outdoor", "water"] }

            [[attributes]]
            name = "scene"
            group = "context"
            scope = "per_sample"
            kind = "categorical"
            classes = ["bedroom", "beach"]

            [[attributes]]
            name = "scene_l1"
            rule = { rule = "macro", of = "scene", mapping = "scene_h", level = 1 }
            "#,
        )
        .unwrap();
        let d = s.get("scene_l1").unwrap();
        assert_eq!(
            d.kind,
            Kind::Categorical {
                classes: vec!["indoor".into(), "outdoor".into()]
            }
        );
        assert_eq!(d.group, Group::Context);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = Schema::builtin();
        let b = Schema::builtin();
        assert_eq!(a.digest(), b.digest());
        let c = Schema::from_config_str("[thresholds]\nnsfw = 0.4\n").unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn threshold_overrides() {
        let s = Schema::builtin();
        let t = s.with_thresholds(&BTreeMap::from([("child".to_string(), 0.7)])).unwrap();
        assert_eq!(t.thresholds().get("child"), 0.7);
        assert_eq!(t.thresholds().get("nsfw"), 0.3);
        assert_ne!(t.digest(), s.digest());
        assert!(s.with_thresholds(&BTreeMap::from([("scene".to_string(), 0.7)])).is_err());
        assert!(s.with_thresholds(&BTreeMap::from([("child".to_string(), 1.5)])).is_err());
    }
}
