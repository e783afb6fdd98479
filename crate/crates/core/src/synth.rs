//! Seeded synthetic datasets with known marginals and planted joint
//! dependencies, used to check the estimators against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::signal_model::{
    BoxRect, IngestOutcome, Ingestor, Kind, Schema, Scope, SignalManifestEntry, Strictness, Value,
};

/// Per-sample attributes filled from the drawn image size, when the schema
/// declares them.
pub const IMAGE_ATTRIBUTES: [&str; 4] = ["width", "height", "aspect_ratio", "resolution"];

/// Tolerance for marginals and joint tables summing to one.
pub const TABLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Categorical { classes: Vec<String>, weights: Vec<f64> },
    /// Beta(alpha, beta).
    Probability { alpha: f64, beta: f64 },
    /// Normal, clamped to `[min, max]` when given.
    Normal {
        mean: f64,
        std: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    Uniform { min: f64, max: f64 },
    /// Dirichlet with the given concentrations.
    Vector { concentration: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    /// Chance that a sample (or individual) carries the attribute.
    #[serde(default = "one")]
    pub presence: f64,
    #[serde(flatten)]
    pub generator: Generator,
}

/// Two categorical attributes drawn together from `table[x][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub x: String,
    pub y: String,
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSizes {
    pub widths: Vec<u32>,
    pub heights: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualSpec {
    /// `count_weights[n]` is the chance of a sample holding `n` individuals.
    pub count_weights: Vec<f64>,
    /// Per-individual attribute carrying the box, usually the face signal.
    #[serde(default)]
    pub box_attribute: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub joints: Vec<JointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub images: Option<ImageSizes>,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub joints: Vec<JointSpec>,
    /// Groups of individuals, e.g. faces and objects; indices of one
    /// sample run on across groups.
    #[serde(default)]
    pub individuals: Vec<IndividualSpec>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("cannot parse synthesis spec: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("attribute {attribute:?}: {reason}")]
    Attribute { attribute: String, reason: String },
    #[error("joint {x:?} x {y:?}: {reason}")]
    Joint { x: String, y: String, reason: String },
    #[error("{0}")]
    Spec(String),
    #[error("generated entry rejected: {0}")]
    Ingest(String),
}

impl SynthSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks the spec against `schema`: known raw attributes in the right
    /// scope, generators matching kinds, distributions summing to one and
    /// joint tables agreeing with both marginals.
    pub fn validate(&self, schema: &Schema) -> Result<(), SynthError> {
        check_group(schema, Scope::PerSample, &self.attributes, &self.joints)?;
        let mut seen = BTreeSet::new();
        for ind in &self.individuals {
            if let Some(a) = ind.attributes.iter().find(|a| !seen.insert(a.name.as_str())) {
                return Err(SynthError::Attribute {
                    attribute: a.name.clone(),
                    reason: "generated by two individual groups".into(),
                });
            }
            check_weights("individual count", &ind.count_weights)?;
            check_group(schema, Scope::PerIndividual, &ind.attributes, &ind.joints)?;
            if let Some(b) = &ind.box_attribute {
                if !ind.attributes.iter().any(|a| &a.name == b) {
                    return Err(SynthError::Spec(format!("box attribute {b:?} is not generated per individual")));
                }
                if self.images.is_none() {
                    return Err(SynthError::Spec("boxes need image sizes".into()));
                }
            }
        }
        if let Some(img) = &self.images {
            if img.widths.is_empty() || img.heights.is_empty() || img.widths.contains(&0) || img.heights.contains(&0) {
                return Err(SynthError::Spec("image sizes must be non-empty and positive".into()));
            }
            if let Some(a) = self.attributes.iter().find(|a| IMAGE_ATTRIBUTES.contains(&a.name.as_str())) {
                return Err(SynthError::Attribute {
                    attribute: a.name.clone(),
                    reason: "follows from the image sizes".into(),
                });
            }
        }
        Ok(())
    }
}

fn check_weights(what: &str, w: &[f64]) -> Result<(), SynthError> {
    let sum: f64 = w.iter().sum();
    if w.is_empty() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > TABLE_TOLERANCE {
        return Err(SynthError::Spec(format!("{what} weights must be non-negative and sum to 1, got {sum}")));
    }
    Ok(())
}

fn check_group(schema: &Schema, scope: Scope, attrs: &[AttributeSpec], joints: &[JointSpec]) -> Result<(), SynthError> {
    let mut names = BTreeSet::new();
    for a in attrs {
        let err = |reason: String| SynthError::Attribute {
            attribute: a.name.clone(),
            reason,
        };
        if !names.insert(a.name.as_str()) {
            return Err(err("generated twice".into()));
        }
        let d = schema.get(&a.name).ok_or_else(|| err("not in the schema".into()))?;
        if d.is_derived() {
            return Err(err("derived attributes are computed, not generated".into()));
        }
        if d.scope != scope {
            return Err(err(format!("attribute is {}, listed as {scope}", d.scope)));
        }
        if !(0.0..=1.0).contains(&a.presence) {
            return Err(err(format!("presence {} outside [0, 1]", a.presence)));
        }
        match (&a.generator, &d.kind) {
            (Generator::Categorical { classes, weights }, Kind::Categorical { classes: allowed }) => {
                if classes.len() != weights.len() {
                    return Err(err("classes and weights differ in length".into()));
                }
                check_weights(&a.name, weights)?;
                if let Some(c) = classes.iter().find(|c| !allowed.is_empty() && !allowed.contains(c)) {
                    return Err(err(format!("class {c:?} is not declared")));
                }
            }
            (Generator::Probability { alpha, beta }, Kind::Probability | Kind::Continuous { .. }) => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return Err(err("beta parameters must be positive".into()));
                }
            }
            (Generator::Normal { std, .. }, Kind::Continuous { .. }) => {
                if !(*std >= 0.0) {
                    return Err(err("std must be non-negative".into()));
                }
            }
            (Generator::Uniform { min, max }, Kind::Continuous { .. }) => {
                if !(min < max) {
                    return Err(err("uniform needs min < max".into()));
                }
            }
            (Generator::Vector { concentration }, Kind::ProbabilityVector { classes }) => {
                if concentration.len() != classes.len() || concentration.iter().any(|c| !(*c > 0.0)) {
                    return Err(err(format!("needs {} positive concentrations", classes.len())));
                }
            }
            (g, k) => return Err(err(format!("generator {g:?} does not fit kind {}", k.name()))),
        }
    }
    let mut jointed = BTreeSet::new();
    for j in joints {
        let err = |reason: String| SynthError::Joint {
            x: j.x.clone(),
            y: j.y.clone(),
            reason,
        };
        if j.x == j.y {
            return Err(err("x and y must differ".into()));
        }
        if !jointed.insert(j.x.as_str()) || !jointed.insert(j.y.as_str()) {
            return Err(err("an attribute may appear in one joint only".into()));
        }
        let weights = |name: &str| {
            attrs.iter().find(|a| a.name == name).and_then(|a| match &a.generator {
                Generator::Categorical { weights, .. } => Some(weights.clone()),
                _ => None,
            })
        };
        let (wx, wy) = match (weights(&j.x), weights(&j.y)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(err("both sides need categorical generators in the same group".into())),
        };
        if j.table.len() != wx.len() || j.table.iter().any(|r| r.len() != wy.len()) {
            return Err(err(format!("table must be {} x {}", wx.len(), wy.len())));
        }
        if j.table.iter().flatten().any(|p| !(*p >= 0.0)) {
            return Err(err("negative probability".into()));
        }
        for (i, (row, px)) in j.table.iter().zip(&wx).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - px).abs() > TABLE_TOLERANCE {
                return Err(err(format!("row {i} sums to {s}, marginal is {px}")));
            }
        }
        for (k, py) in wy.iter().enumerate() {
            let s: f64 = j.table.iter().map(|r| r[k]).sum();
            if (s - py).abs() > TABLE_TOLERANCE {
                return Err(err(format!("column {k} sums to {s}, marginal is {py}")));
            }
        }
    }
    Ok(())
}

/// Precomputed samplers of one attribute group.
struct Group<'a> {
    singles: Vec<(&'a AttributeSpec, Sampler)>,
    joints: Vec<(&'a AttributeSpec, &'a AttributeSpec, WeightedIndex<f64>, usize)>,
}

enum Sampler {
    Categorical(Vec<String>, WeightedIndex<f64>),
    Beta(Beta<f64>),
    Normal(Normal<f64>, Option<f64>, Option<f64>),
    Uniform(f64, f64),
    Vector(Vec<Gamma<f64>>),
}

impl Sampler {
    fn new(g: &Generator) -> Self {
        match g {
            Generator::Categorical { classes, weights } => {
                Sampler::Categorical(classes.clone(), WeightedIndex::new(weights).expect("validated weights"))
            }
            Generator::Probability { alpha, beta } => Sampler::Beta(Beta::new(*alpha, *beta).expect("validated")),
            Generator::Normal { mean, std, min, max } => {
                Sampler::Normal(Normal::new(*mean, *std).expect("validated"), *min, *max)
            }
            Generator::Uniform { min, max } => Sampler::Uniform(*min, *max),
            Generator::Vector { concentration } => Sampler::Vector(
                concentration
                    .iter()
                    .map(|a| Gamma::new(*a, 1.0).expect("validated"))
                    .collect(),
            ),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Value {
        match self {
            Sampler::Categorical(classes, w) => Value::Label(classes[w.sample(rng)].clone()),
            Sampler::Beta(b) => Value::Number(b.sample(rng)),
            Sampler::Normal(n, lo, hi) => {
                let mut v = n.sample(rng);
                if let Some(lo) = lo {
                    v = v.max(*lo);
                }
                if let Some(hi) = hi {
                    v = v.min(*hi);
                }
                Value::Number(v)
            }
            Sampler::Uniform(lo, hi) => Value::Number(rng.random_range(*lo..*hi)),
            Sampler::Vector(gammas) => {
                let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng).max(f64::MIN_POSITIVE)).collect();
                let s: f64 = g.iter().sum();
                Value::Vector(g.iter().map(|x| x / s).collect())
            }
        }
    }
}

impl<'a> Group<'a> {
    fn new(attrs: &'a [AttributeSpec], joints: &'a [JointSpec]) -> Self {
        let in_joint: BTreeSet<&str> = joints.iter().flat_map(|j| [j.x.as_str(), j.y.as_str()]).collect();
        let find = |n: &str| attrs.iter().find(|a| a.name == n).expect("validated");
        Self {
            singles: attrs
                .iter()
                .filter(|a| !in_joint.contains(a.name.as_str()))
                .map(|a| (a, Sampler::new(&a.generator)))
                .collect(),
            joints: joints
                .iter()
                .map(|j| {
                    let cols = j.table[0].len();
                    let flat: Vec<f64> = j.table.iter().flatten().copied().collect();
                    (find(&j.x), find(&j.y), WeightedIndex::new(flat).expect("validated table"), cols)
                })
                .collect(),
        }
    }

    /// Draws every attribute of the group in a fixed order; `None` when the
    /// presence draw leaves it out.
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<(&'a str, Value)> {
        let mut out = Vec::new();
        for (a, s) in &self.singles {
            let v = s.draw(rng);
            if rng.random_bool(a.presence) {
                out.push((a.name.as_str(), v));
            }
        }
        for (x, y, w, cols) in &self.joints {
            let cell = w.sample(rng);
            let label = |a: &AttributeSpec, i: usize| match &a.generator {
                Generator::Categorical { classes, .. } => Value::Label(classes[i].clone()),
                _ => unreachable!("validated"),
            };
            let (vx, vy) = (label(x, cell / cols), label(y, cell % cols));
            if rng.random_bool(x.presence) {
                out.push((x.name.as_str(), vx));
            }
            if rng.random_bool(y.presence) {
                out.push((y.name.as_str(), vy));
            }
        }
        out
    }
}

/// Manifest entries for the spec, deterministic in `spec.seed`.
pub fn synthetic_entries(spec: &SynthSpec, schema: &Schema) -> Result<Vec<SignalManifestEntry>, SynthError> {
    spec.validate(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = Group::new(&spec.attributes, &spec.joints);
    let individuals: Vec<_> = spec
        .individuals
        .iter()
        .map(|ind| {
            (
                ind,
                Group::new(&ind.attributes, &ind.joints),
                WeightedIndex::new(&ind.count_weights).expect("validated"),
            )
        })
        .collect();
    let image_attrs: Vec<&str> = IMAGE_ATTRIBUTES.into_iter().filter(|a| schema.get(a).is_some()).collect();
    let width = (spec.samples.max(1) - 1).to_string().len().max(6);
    let mut entries = Vec::new();
    for s in 0..spec.samples {
        let id = format!("synth_{s:0width$}");
        let mut dims = None;
        if let Some(img) = &spec.images {
            let w = img.widths[rng.random_range(0..img.widths.len())];
            let h = img.heights[rng.random_range(0..img.heights.len())];
            dims = Some((w, h));
            for &a in &image_attrs {
                let (w, h) = (w as f64, h as f64);
                let v = match a {
                    "width" => w,
                    "height" => h,
                    "aspect_ratio" => w / h,
                    _ => w * h,
                };
                entries.push(SignalManifestEntry::per_sample(&id, a, Value::Number(v)));
            }
        }
        for (name, v) in samples.draw(&mut rng) {
            entries.push(SignalManifestEntry::per_sample(&id, name, v));
        }
        let mut next = 0u32;
        for (ind, group, count) in &individuals {
            let n = count.sample(&mut rng);
            for _ in 0..n {
                let i = next;
                next += 1;
                for (name, v) in group.draw(&mut rng) {
                    let mut e = SignalManifestEntry::per_individual(&id, name, i, v);
                    if ind.box_attribute.as_deref() == Some(name) {
                        let (w, h) = dims.expect("validated");
                        e = e.with_box(random_box(&mut rng, w, h));
                    }
                    entries.push(e);
                }
            }
        }
    }
    Ok(entries)
}

fn random_box<R: Rng>(rng: &mut R, w: u32, h: u32) -> BoxRect {
    let bw = rng.random_range(1..=(w / 2).max(1));
    let bh = rng.random_range(1..=(h / 2).max(1));
    let x = rng.random_range(0..=w - bw);
    let y = rng.random_range(0..=h - bh);
    BoxRect::new(x as f64, y as f64, bw as f64, bh as f64)
}

/// Generates the dataset through the regular ingestion path.
pub fn generate_synthetic(spec: &SynthSpec, schema: Arc<Schema>) -> Result<IngestOutcome, SynthError> {
    let entries = synthetic_entries(spec, &schema)?;
    let mut ing = Ingestor::new(schema, Strictness::Abort);
    for (i, e) in entries.into_iter().enumerate() {
        ing.push(e, "synthetic", i + 1).map_err(|e| SynthError::Ingest(e.to_string()))?;
    }
    ing.finish().map_err(|e| SynthError::Ingest(e.to_string()))
}

/// Empirical joint distribution of two per-sample labels.
pub fn empirical_joint(entries: &[SignalManifestEntry], x: &str, y: &str) -> BTreeMap<(String, String), u64> {
    let mut by_sample: BTreeMap<&str, (Option<&str>, Option<&str>)> = BTreeMap::new();
    for e in entries {
        let slot = by_sample.entry(e.sample_id.as_str()).or_default();
        if e.attribute == x {
            slot.0 = e.value.as_label();
        }
        if e.attribute == y {
            slot.1 = e.value.as_label();
        }
    }
    let mut out = BTreeMap::new();
    for (a, b) in by_sample.values() {
        if let (Some(a), Some(b)) = (a, b) {
            *out.entry((a.to_string(), b.to_string())).or_default() += 1;
        }
    }
    out
}
