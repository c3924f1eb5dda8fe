//! Data-driven vocabularies: attribute categories, contradiction pairs, the
//! hypernym taxonomy, relation inverses and outlier names.
//!
//! Every lexicon is a small JSON file. A default bundle is compiled in from
//! `data/` so the engine runs without any configuration.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// The fourteen attribute axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeCategory {
    Color,
    Cleanliness,
    Material,
    Size,
    Pose,
    Height,
    Weather,
    Length,
    Tone,
    Shape,
    Activity,
    SportActivity,
    Age,
    Pattern,
}

impl AttributeCategory {
    pub const ALL: [AttributeCategory; 14] = [
        Self::Color,
        Self::Cleanliness,
        Self::Material,
        Self::Size,
        Self::Pose,
        Self::Height,
        Self::Weather,
        Self::Length,
        Self::Tone,
        Self::Shape,
        Self::Activity,
        Self::SportActivity,
        Self::Age,
        Self::Pattern,
    ];

    /// Identifier used in files and program arguments.
    pub fn key(self) -> &'static str {
        match self {
            Self::Color => "color",
            Self::Cleanliness => "cleanliness",
            Self::Material => "material",
            Self::Size => "size",
            Self::Pose => "pose",
            Self::Height => "height",
            Self::Weather => "weather",
            Self::Length => "length",
            Self::Tone => "tone",
            Self::Shape => "shape",
            Self::Activity => "activity",
            Self::SportActivity => "sport_activity",
            Self::Age => "age",
            Self::Pattern => "pattern",
        }
    }

    /// Wording used in question text.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::SportActivity => "sport activity",
            other => other.key(),
        }
    }
}

impl fmt::Display for AttributeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attribute category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for AttributeCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().replace(' ', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.key() == key)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid lexicon {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid lexicon {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LexiconError> {
    let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&text, path)
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, LexiconError> {
    serde_json::from_str(text).map_err(|source| LexiconError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Maps an attribute value to its category.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeLexicon {
    by_value: BTreeMap<String, AttributeCategory>,
}

impl AttributeLexicon {
    pub fn from_map(map: BTreeMap<String, AttributeCategory>) -> Self {
        let by_value = map
            .into_iter()
            .map(|(v, c)| (normalize(&v), c))
            .collect();
        Self { by_value }
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Ok(Self::from_map(read_json(path)?))
    }

    pub fn category_of(&self, value: &str) -> Option<AttributeCategory> {
        self.by_value.get(&normalize(value)).copied()
    }

    /// All values of one category, ascending.
    pub fn values(&self, category: AttributeCategory) -> impl Iterator<Item = &str> {
        self.by_value
            .iter()
            .filter(move |(_, c)| **c == category)
            .map(|(v, _)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.by_value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_value.is_empty()
    }
}

/// Unordered value pairs within a category that cannot both hold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContradictionLexicon {
    pairs: BTreeSet<(AttributeCategory, String, String)>,
}

impl ContradictionLexicon {
    pub fn new<I, S>(triples: I) -> Self
    where
        I: IntoIterator<Item = (AttributeCategory, S, S)>,
        S: AsRef<str>,
    {
        let pairs = triples
            .into_iter()
            .map(|(c, a, b)| {
                let (a, b) = (normalize(a.as_ref()), normalize(b.as_ref()));
                if a <= b {
                    (c, a, b)
                } else {
                    (c, b, a)
                }
            })
            .collect();
        Self { pairs }
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw: Vec<(String, String, String)> = read_json(path)?;
        Self::from_raw(raw, path)
    }

    fn from_raw(raw: Vec<(String, String, String)>, path: &Path) -> Result<Self, LexiconError> {
        let mut triples = Vec::with_capacity(raw.len());
        for (c, a, b) in raw {
            let category = c.parse().map_err(|e: UnknownCategory| LexiconError::Invalid {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            triples.push((category, a, b));
        }
        Ok(Self::new(triples))
    }

    pub fn contradicts(&self, category: AttributeCategory, a: &str, b: &str) -> bool {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.pairs
            .contains(&(category, a.to_string(), b.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no taxonomy entry for `{0}`")]
pub struct TaxonomyMiss(pub String);

/// Answers "is `bigger` a superclass of `smaller`?".
pub trait HypernymProvider {
    fn is_hypernym(&self, bigger: &str, smaller: &str) -> Result<bool, TaxonomyMiss>;
}

/// Flat name → ancestor list taxonomy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatTaxonomy {
    ancestors: BTreeMap<String, BTreeSet<String>>,
}

impl FlatTaxonomy {
    pub fn from_map(map: BTreeMap<String, Vec<String>>) -> Self {
        let ancestors = map
            .into_iter()
            .map(|(k, v)| (normalize(&k), v.iter().map(|a| normalize(a)).collect()))
            .collect();
        Self { ancestors }
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Ok(Self::from_map(read_json(path)?))
    }
}

impl HypernymProvider for FlatTaxonomy {
    fn is_hypernym(&self, bigger: &str, smaller: &str) -> Result<bool, TaxonomyMiss> {
        let ancestors = self
            .ancestors
            .get(&normalize(smaller))
            .ok_or_else(|| TaxonomyMiss(smaller.to_string()))?;
        Ok(ancestors.contains(&normalize(bigger)))
    }
}

/// Predicate → inverse predicate (both directions stored).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationInverses {
    inverse: BTreeMap<String, String>,
}

impl RelationInverses {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut inverse = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (normalize(a.as_ref()), normalize(b.as_ref()));
            inverse.insert(a.clone(), b.clone());
            inverse.insert(b, a);
        }
        Self { inverse }
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw: Vec<(String, String)> = read_json(path)?;
        Ok(Self::new(raw))
    }

    pub fn inverse_of(&self, predicate: &str) -> Option<&str> {
        self.inverse.get(predicate).map(String::as_str)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.inverse.keys().map(String::as_str)
    }
}

/// Every vocabulary the engine consults, bundled.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub attributes: AttributeLexicon,
    pub contradictions: ContradictionLexicon,
    pub taxonomy: FlatTaxonomy,
    pub inverses: RelationInverses,
    /// Object names used for "not in the image" outliers.
    pub outliers: Vec<String>,
}

const DEFAULT_ATTRIBUTES: &str = include_str!("../data/attributes.json");
const DEFAULT_CONTRADICTIONS: &str = include_str!("../data/contradictions.json");
const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.json");
const DEFAULT_RELATIONS: &str = include_str!("../data/relation_inverses.json");
const DEFAULT_OUTLIERS: &str = include_str!("../data/outliers.json");

/// Optional file overrides for [`Lexicon::load`]; `None` keeps the bundled file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconPaths {
    pub attributes: Option<PathBuf>,
    pub contradictions: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub relation_inverses: Option<PathBuf>,
    pub outliers: Option<PathBuf>,
}

impl Lexicon {
    /// The compiled-in default vocabularies.
    pub fn bundled() -> Self {
        let builtin = Path::new("<bundled>");
        let attributes = AttributeLexicon::from_map(
            parse_json(DEFAULT_ATTRIBUTES, builtin).expect("bundled attribute lexicon"),
        );
        let contradictions = ContradictionLexicon::from_raw(
            parse_json(DEFAULT_CONTRADICTIONS, builtin).expect("bundled contradictions"),
            builtin,
        )
        .expect("bundled contradictions");
        let taxonomy =
            FlatTaxonomy::from_map(parse_json(DEFAULT_TAXONOMY, builtin).expect("bundled taxonomy"));
        let inverses = RelationInverses::new(
            parse_json::<Vec<(String, String)>>(DEFAULT_RELATIONS, builtin)
                .expect("bundled relation inverses"),
        );
        let outliers = parse_json(DEFAULT_OUTLIERS, builtin).expect("bundled outliers");
        Self {
            attributes,
            contradictions,
            taxonomy,
            inverses,
            outliers,
        }
    }

    pub fn load(paths: &LexiconPaths) -> Result<Self, LexiconError> {
        let mut lex = Self::bundled();
        if let Some(p) = &paths.attributes {
            lex.attributes = AttributeLexicon::load(p)?;
        }
        if let Some(p) = &paths.contradictions {
            lex.contradictions = ContradictionLexicon::load(p)?;
        }
        if let Some(p) = &paths.taxonomy {
            lex.taxonomy = FlatTaxonomy::load(p)?;
        }
        if let Some(p) = &paths.relation_inverses {
            lex.inverses = RelationInverses::load(p)?;
        }
        if let Some(p) = &paths.outliers {
            lex.outliers = read_json(p)?;
        }
        Ok(lex)
    }
}

/// Lowercase, trimmed, single-spaced.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_roundtrip() {
        for c in AttributeCategory::ALL {
            assert_eq!(c.key().parse::<AttributeCategory>().unwrap(), c);
        }
        assert_eq!(
            "sport activity".parse::<AttributeCategory>().unwrap(),
            AttributeCategory::SportActivity
        );
        assert!("flavor".parse::<AttributeCategory>().is_err());
    }

    #[test]
    fn bundled_lexicon_covers_every_category() {
        let lex = Lexicon::bundled();
        for c in AttributeCategory::ALL {
            assert!(lex.attributes.values(c).count() >= 3, "{c} has too few values");
        }
        assert!(lex.contradictions.contradicts(AttributeCategory::Color, "green", "red"));
        assert!(lex.contradictions.contradicts(AttributeCategory::Size, "small", "large"));
        assert!(!lex.contradictions.contradicts(AttributeCategory::Color, "red", "white"));
        assert_eq!(lex.inverses.inverse_of("left of"), Some("right of"));
        assert_eq!(lex.inverses.inverse_of("right of"), Some("left of"));
    }

    #[test]
    fn taxonomy_lookup() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.taxonomy.is_hypernym("fruits", "apple"), Ok(true));
        assert_eq!(lex.taxonomy.is_hypernym("cat", "tail"), Ok(false));
        assert!(lex.taxonomy.is_hypernym("fruits", "spaceship").is_err());
    }

    #[test]
    fn contradiction_pairs_are_unordered() {
        let c = ContradictionLexicon::new([(AttributeCategory::Tone, "light", "dark")]);
        assert!(c.contradicts(AttributeCategory::Tone, "dark", "light"));
        assert!(c.contradicts(AttributeCategory::Tone, "light", "dark"));
        assert!(!c.contradicts(AttributeCategory::Color, "light", "dark"));
    }
}
