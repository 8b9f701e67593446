//! Agent categories, interaction types and rotation channels.
//!
//! The declaration order of categories is the matrix index order used by
//! every other module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("taxonomy has no control mechanism category")]
    MissingControlMechanism,
    #[error("taxonomy declares more than one control mechanism ({0} and {1})")]
    MultipleControlMechanisms(String, String),
    #[error("taxonomy declares more than one token dump ({0} and {1})")]
    MultipleTokenDumps(String, String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{owner}` references unknown category `{category}`")]
    DanglingEndpoint { owner: String, category: String },
    #[error("`{0}` connects a category to itself")]
    SelfLoop(String),
    #[error("taxonomy needs at least two categories, got {0}")]
    TooFewCategories(usize),
    #[error("wealth vector has {got} entries, taxonomy has {expected} categories")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("wealth entry {index} is negative or not finite ({value})")]
    InvalidWealth { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    #[default]
    Normal,
    ControlMechanism,
    TokenDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCategory {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub kind: CategoryKind,
}

impl AgentCategory {
    pub fn new(id: impl Into<String>, kind: CategoryKind) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            kind,
        }
    }

    pub fn normal(id: impl Into<String>) -> Self {
        Self::new(id, CategoryKind::Normal)
    }

    pub fn control_mechanism(id: impl Into<String>) -> Self {
        Self::new(id, CategoryKind::ControlMechanism)
    }
}

/// Whether demand for an interaction comes in whole units (cars) or is divisible (rice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Integer,
    #[default]
    Continuous,
}

/// An interaction type between two categories.
///
/// Demand times price of the interaction is paid to `endpoints[0]` by `endpoints[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionType {
    pub id: String,
    pub endpoints: [String; 2],
    #[serde(default, rename = "granularity")]
    pub demand_granularity: Granularity,
}

impl InteractionType {
    pub fn new(
        id: impl Into<String>,
        receiver: impl Into<String>,
        payer: impl Into<String>,
        granularity: Granularity,
    ) -> Self {
        Self {
            id: id.into(),
            endpoints: [receiver.into(), payer.into()],
            demand_granularity: granularity,
        }
    }
}

/// Directed channel along which wealth rotates when agents change category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationChannel {
    pub from: String,
    pub to: String,
}

impl RotationChannel {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

/// Interaction type with endpoints resolved to category indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedInteraction {
    pub id: String,
    pub receiver: usize,
    pub payer: usize,
    pub granularity: Granularity,
}

impl ResolvedInteraction {
    /// Unordered pair, lower index first.
    pub fn pair(&self) -> (usize, usize) {
        (self.receiver.min(self.payer), self.receiver.max(self.payer))
    }

    /// +1 when the receiver is the lower-indexed endpoint, -1 otherwise.
    pub fn orientation(&self) -> f64 {
        if self.receiver < self.payer {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomySpec", into = "TaxonomySpec")]
pub struct TokenomicTaxonomy {
    categories: Vec<AgentCategory>,
    interactions: Vec<ResolvedInteraction>,
    rotations: Vec<(usize, usize)>,
    index: BTreeMap<String, usize>,
    control: usize,
    dump: Option<usize>,
}

/// Serialized form of a taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomySpec {
    pub categories: Vec<AgentCategory>,
    #[serde(default)]
    pub interactions: Vec<InteractionType>,
    #[serde(default)]
    pub rotations: Vec<RotationChannel>,
}

impl TryFrom<TaxonomySpec> for TokenomicTaxonomy {
    type Error = TaxonomyError;

    fn try_from(spec: TaxonomySpec) -> Result<Self, Self::Error> {
        build_taxonomy(spec.categories, spec.interactions, spec.rotations)
    }
}

impl From<TokenomicTaxonomy> for TaxonomySpec {
    fn from(t: TokenomicTaxonomy) -> Self {
        let interactions = t.interaction_types();
        let rotations = t.rotation_channels();
        TaxonomySpec {
            categories: t.categories,
            interactions,
            rotations,
        }
    }
}

pub fn build_taxonomy(
    categories: Vec<AgentCategory>,
    interactions: Vec<InteractionType>,
    rotations: Vec<RotationChannel>,
) -> Result<TokenomicTaxonomy, TaxonomyError> {
    let mut index = BTreeMap::new();
    let mut control: Option<usize> = None;
    let mut dump: Option<usize> = None;
    for (i, c) in categories.iter().enumerate() {
        if index.insert(c.id.clone(), i).is_some() {
            return Err(TaxonomyError::DuplicateId(c.id.clone()));
        }
        match c.kind {
            CategoryKind::ControlMechanism => {
                if let Some(prev) = control {
                    return Err(TaxonomyError::MultipleControlMechanisms(
                        categories[prev].id.clone(),
                        c.id.clone(),
                    ));
                }
                control = Some(i);
            }
            CategoryKind::TokenDump => {
                if let Some(prev) = dump {
                    return Err(TaxonomyError::MultipleTokenDumps(
                        categories[prev].id.clone(),
                        c.id.clone(),
                    ));
                }
                dump = Some(i);
            }
            CategoryKind::Normal => {}
        }
    }
    let control = control.ok_or(TaxonomyError::MissingControlMechanism)?;
    if categories.len() < 2 {
        return Err(TaxonomyError::TooFewCategories(categories.len()));
    }

    let lookup = |owner: &str, id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| TaxonomyError::DanglingEndpoint {
                owner: owner.to_string(),
                category: id.to_string(),
            })
    };

    let mut resolved = Vec::with_capacity(interactions.len());
    let mut seen_interactions = std::collections::BTreeSet::new();
    for it in &interactions {
        if !seen_interactions.insert(it.id.clone()) {
            return Err(TaxonomyError::DuplicateId(it.id.clone()));
        }
        let receiver = lookup(&it.id, &it.endpoints[0])?;
        let payer = lookup(&it.id, &it.endpoints[1])?;
        if receiver == payer {
            return Err(TaxonomyError::SelfLoop(it.id.clone()));
        }
        resolved.push(ResolvedInteraction {
            id: it.id.clone(),
            receiver,
            payer,
            granularity: it.demand_granularity,
        });
    }

    let mut channels = Vec::with_capacity(rotations.len());
    for r in &rotations {
        let label = format!("rotation {}->{}", r.from, r.to);
        let from = lookup(&label, &r.from)?;
        let to = lookup(&label, &r.to)?;
        if from == to {
            return Err(TaxonomyError::SelfLoop(label));
        }
        if channels.contains(&(from, to)) {
            return Err(TaxonomyError::DuplicateId(label));
        }
        channels.push((from, to));
    }

    Ok(TokenomicTaxonomy {
        categories,
        interactions: resolved,
        rotations: channels,
        index,
        control,
        dump,
    })
}

impl TokenomicTaxonomy {
    /// Number of categories; every rate matrix is `len() x len()`.
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[AgentCategory] {
        &self.categories
    }

    pub fn interactions(&self) -> &[ResolvedInteraction] {
        &self.interactions
    }

    /// Declared rotation channels as `(from, to)` index pairs.
    pub fn rotations(&self) -> &[(usize, usize)] {
        &self.rotations
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn control_mechanism(&self) -> usize {
        self.control
    }

    pub fn token_dump(&self) -> Option<usize> {
        self.dump
    }

    pub fn interaction(&self, id: &str) -> Option<&ResolvedInteraction> {
        self.interactions.iter().find(|i| i.id == id)
    }

    pub fn interaction_types(&self) -> Vec<InteractionType> {
        self.interactions
            .iter()
            .map(|i| InteractionType {
                id: i.id.clone(),
                endpoints: [
                    self.categories[i.receiver].id.clone(),
                    self.categories[i.payer].id.clone(),
                ],
                demand_granularity: i.granularity,
            })
            .collect()
    }

    pub fn rotation_channels(&self) -> Vec<RotationChannel> {
        self.rotations
            .iter()
            .map(|&(f, t)| RotationChannel::new(&self.categories[f].id, &self.categories[t].id))
            .collect()
    }

    /// Taxonomy of `n` singleton agent categories `agent-0 .. agent-{n-1}` plus a
    /// trailing control mechanism, with no interactions or rotations declared.
    pub fn singletons(n: usize) -> Self {
        let mut categories: Vec<_> = (0..n)
            .map(|i| AgentCategory::normal(format!("agent-{i}")))
            .collect();
        categories.push(AgentCategory::control_mechanism("control"));
        build_taxonomy(categories, Vec::new(), Vec::new())
            .expect("singleton taxonomy is always valid")
    }

    pub fn check_wealth(&self, f: &WealthVector) -> Result<(), TaxonomyError> {
        if f.values.len() != self.len() {
            return Err(TaxonomyError::DimensionMismatch {
                expected: self.len(),
                got: f.values.len(),
            });
        }
        f.validate()
    }
}

/// Per-category wealth at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthVector {
    pub values: Vec<f64>,
    pub time: usize,
}

impl WealthVector {
    pub fn new(values: Vec<f64>, time: usize) -> Self {
        Self { values, time }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        for (index, &value) in self.values.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(TaxonomyError::InvalidWealth { index, value });
            }
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for WealthVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Tokens in circulation: supply minus what the control mechanism still holds.
pub fn circulating_supply(f: &WealthVector, taxonomy: &TokenomicTaxonomy, supply: f64) -> f64 {
    (supply - f.values[taxonomy.control_mechanism()]).clamp(0.0, supply)
}
