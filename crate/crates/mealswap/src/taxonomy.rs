//! Food taxonomy loading and salient-feature extraction.
//!
//! Free-text food entries ("McDonald's - premium sweet chili chicken Wrap
//! (grilled), 1 burger (200g)") are noisy: brands, serving sizes and phrasing
//! make textually different entries refer to the same dish. This module
//! normalizes an entry into a set of salient features by matching its tokens
//! against a three-level taxonomy (category / subcategory / entity), and turns
//! that set into a canonical string key so equal feature sets compare equal.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Lowercases and splits on any non-alphanumeric character, dropping empty
/// tokens. `"Tuna-Sandwich"` becomes `["tuna", "sandwich"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// One `category:subcategory:entity` feature extracted from a food entry.
#[derive(Debug, Clone)]
pub struct SalientFeature {
    category: String,
    subcategory: String,
    entity: String,
    rendered: String,
}

impl SalientFeature {
    /// Builds a feature from its three levels. All levels must be non-empty
    /// and free of `:` and `|`, which are reserved by the rendered formats.
    pub fn new(
        category: impl Into<String>,
        subcategory: impl Into<String>,
        entity: impl Into<String>,
    ) -> Result<Self> {
        let category = category.into();
        let subcategory = subcategory.into();
        let entity = entity.into();
        for (name, value) in [
            ("category", &category),
            ("subcategory", &subcategory),
            ("entity", &entity),
        ] {
            if value.is_empty() {
                return Err(Error::InvalidInput(format!("empty {name} in feature")));
            }
            if value.contains(':') || value.contains('|') {
                return Err(Error::InvalidInput(format!(
                    "{name} \"{value}\" contains a reserved character (':' or '|')"
                )));
            }
        }
        let rendered = format!("{category}:{subcategory}:{entity}");
        Ok(SalientFeature {
            category,
            subcategory,
            entity,
            rendered,
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn subcategory(&self) -> &str {
        &self.subcategory
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    /// The `category:subcategory:entity` string.
    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    /// The `category:subcategory` prefix used by the co-occurrence heatmap.
    pub fn subcategory_label(&self) -> String {
        format!("{}:{}", self.category, self.subcategory)
    }
}

impl PartialEq for SalientFeature {
    fn eq(&self, other: &Self) -> bool {
        self.rendered == other.rendered
    }
}

impl Eq for SalientFeature {}

impl PartialOrd for SalientFeature {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SalientFeature {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rendered.cmp(&other.rendered)
    }
}

impl std::hash::Hash for SalientFeature {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rendered.hash(state);
    }
}

impl fmt::Display for SalientFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered)
    }
}

/// A food item's identity: its sorted, deduplicated feature set, rendered as a
/// `|`-joined string. Two keys are equal exactly when their feature sets are.
#[derive(Debug, Clone)]
pub struct FoodKey {
    features: Vec<String>,
    key: String,
}

impl FoodKey {
    /// Canonicalizes a feature set into a key. Input order and duplicates do
    /// not matter; an empty set is an error (the entry should be discarded).
    pub fn from_features<I>(features: I) -> Result<Self>
    where
        I: IntoIterator<Item = SalientFeature>,
    {
        let set: BTreeSet<String> = features.into_iter().map(|f| f.rendered).collect();
        if set.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        let features: Vec<String> = set.into_iter().collect();
        let key = features.join("|");
        Ok(FoodKey { features, key })
    }

    /// Parses a rendered key, enforcing strictly ascending features.
    pub fn parse(key: &str) -> Result<Self> {
        if key.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        let features: Vec<String> = key.split('|').map(str::to_owned).collect();
        for window in features.windows(2) {
            if window[0] >= window[1] {
                return Err(Error::InvalidInput(format!(
                    "key \"{key}\" is not in canonical order"
                )));
            }
        }
        for f in &features {
            if f.splitn(3, ':').count() != 3 || f.split(':').any(str::is_empty) {
                return Err(Error::InvalidInput(format!(
                    "feature \"{f}\" is not category:subcategory:entity"
                )));
            }
        }
        Ok(FoodKey {
            key: features.join("|"),
            features,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.key
    }

    /// Rendered features, strictly ascending.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    /// The `category:subcategory` labels of this key's features, deduplicated.
    pub fn subcategory_labels(&self) -> BTreeSet<String> {
        self.features
            .iter()
            .map(|f| {
                let mut parts = f.splitn(3, ':');
                let cat = parts.next().unwrap_or("");
                let sub = parts.next().unwrap_or("");
                format!("{cat}:{sub}")
            })
            .collect()
    }

    /// True if any feature's rendered string starts with any of the prefixes.
    pub fn has_feature_prefix(&self, prefixes: &[String]) -> bool {
        self.features
            .iter()
            .any(|f| prefixes.iter().any(|p| f.starts_with(p.as_str())))
    }
}

impl PartialEq for FoodKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for FoodKey {}

impl PartialOrd for FoodKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FoodKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl std::hash::Hash for FoodKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl fmt::Display for FoodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

impl FromStr for FoodKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FoodKey::parse(s)
    }
}

impl serde::Serialize for FoodKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key)
    }
}

impl<'de> serde::Deserialize<'de> for FoodKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FoodKey::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One taxonomy leaf with the token sequences that map to it.
#[derive(Debug, Clone)]
pub struct TaxonomyEntry {
    pub category: String,
    pub subcategory: String,
    pub entity: String,
    /// Normalized synonym token sequences, including the entity's own tokens.
    pub synonyms: Vec<Vec<String>>,
}

impl TaxonomyEntry {
    pub fn feature(&self) -> SalientFeature {
        // Fields were validated at construction.
        SalientFeature::new(&self.category, &self.subcategory, &self.entity)
            .expect("entry fields validated on load")
    }

    fn triple(&self) -> String {
        format!("({}, {}, {})", self.category, self.subcategory, self.entity)
    }
}

/// Candidate synonyms of one category, bucketed by first token and sorted by
/// length descending so the scanner can take the longest match at a position.
type CategoryIndex = HashMap<String, Vec<(Vec<String>, usize)>>;

/// The loaded taxonomy plus the per-category match index.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
    categories: Vec<String>,
    by_category: HashMap<String, CategoryIndex>,
}

impl Taxonomy {
    /// Loads a taxonomy from TSV: `category<TAB>subcategory<TAB>entity<TAB>syn1|syn2|...`.
    /// Lines starting with `#` and blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 4 tab-separated columns, found {}", cols.len()),
                ));
            }
            let synonyms: Vec<String> = cols[3]
                .split('|')
                .filter(|s| !s.trim().is_empty())
                .map(str::to_owned)
                .collect();
            rows.push((
                cols[0].trim().to_owned(),
                cols[1].trim().to_owned(),
                cols[2].trim().to_owned(),
                synonyms,
                line_no,
            ));
        }
        Self::build(path, rows)
    }

    /// Builds a taxonomy from in-memory rows; used by the synthetic generator
    /// and tests. Row order is preserved for entry ids.
    pub fn from_rows(rows: Vec<(String, String, String, Vec<String>)>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (c, s, e, syn))| (c, s, e, syn, i + 1))
            .collect();
        Self::build(Path::new("<memory>"), rows)
    }

    fn build(
        path: &Path,
        rows: Vec<(String, String, String, Vec<String>, usize)>,
    ) -> Result<Self> {
        let mut entries: Vec<TaxonomyEntry> = Vec::with_capacity(rows.len());
        let mut seen_triples: HashMap<String, usize> = HashMap::new();
        // Global synonym index for ambiguity detection: joined tokens -> entry.
        let mut synonym_owner: HashMap<String, usize> = HashMap::new();
        let mut by_category: HashMap<String, CategoryIndex> = HashMap::new();

        for (category, subcategory, entity, synonyms, line_no) in rows {
            // Validates non-empty fields and reserved characters.
            SalientFeature::new(&category, &subcategory, &entity)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;

            let entry_id = entries.len();
            let mut token_seqs: Vec<Vec<String>> = Vec::new();
            let own_tokens = tokenize(&entity);
            if own_tokens.is_empty() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("entity \"{entity}\" yields no tokens"),
                ));
            }
            token_seqs.push(own_tokens);
            for syn in &synonyms {
                let tokens = tokenize(syn);
                if tokens.is_empty() {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("synonym \"{syn}\" yields no tokens"),
                    ));
                }
                token_seqs.push(tokens);
            }
            token_seqs.sort();
            token_seqs.dedup();

            let entry = TaxonomyEntry {
                category: category.clone(),
                subcategory,
                entity,
                synonyms: token_seqs.clone(),
            };
            let triple = entry.triple();
            if seen_triples.insert(triple.clone(), entry_id).is_some() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("duplicate taxonomy triple {triple}"),
                ));
            }

            for seq in &token_seqs {
                let joined = seq.join(" ");
                if let Some(&other) = synonym_owner.get(&joined) {
                    return Err(Error::AmbiguousSynonym {
                        synonym: joined,
                        first: entries[other].triple(),
                        second: triple.clone(),
                    });
                }
                synonym_owner.insert(joined, entry_id);
                let bucket = by_category
                    .entry(category.clone())
                    .or_default()
                    .entry(seq[0].clone())
                    .or_default();
                bucket.push((seq.clone(), entry_id));
            }
            entries.push(entry);
        }

        // Longest first within each bucket so the scanner's first hit is maximal.
        for index in by_category.values_mut() {
            for bucket in index.values_mut() {
                bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
            }
        }
        let mut categories: Vec<String> = by_category.keys().cloned().collect();
        categories.sort();

        Ok(Taxonomy {
            entries,
            categories,
            by_category,
        })
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Extracts the salient features of a free-text entry.
    ///
    /// Each main category is scanned independently: left to right over the
    /// tokens, taking the longest synonym match that starts at the current
    /// position and resuming after its span, so matches within one category
    /// never overlap. The result is deduplicated across categories and
    /// positions; no match yields an empty set.
    pub fn extract(&self, entry_text: &str) -> BTreeSet<SalientFeature> {
        let tokens = tokenize(entry_text);
        let mut features = BTreeSet::new();
        if tokens.is_empty() {
            return features;
        }
        for category in &self.categories {
            let index = &self.by_category[category];
            let mut i = 0;
            while i < tokens.len() {
                let matched = index.get(&tokens[i]).and_then(|bucket| {
                    bucket
                        .iter()
                        .find(|(seq, _)| {
                            seq.len() <= tokens.len() - i
                                && seq
                                    .iter()
                                    .zip(&tokens[i..i + seq.len()])
                                    .all(|(a, b)| a == b)
                        })
                        .map(|(seq, id)| (seq.len(), *id))
                });
                match matched {
                    Some((len, id)) => {
                        features.insert(self.entries[id].feature());
                        i += len;
                    }
                    None => i += 1,
                }
            }
        }
        features
    }

    /// Extracts features and canonicalizes them into a key, or
    /// [`Error::EmptyFeatureSet`] when nothing matched.
    pub fn key_for(&self, entry_text: &str) -> Result<FoodKey> {
        FoodKey::from_features(self.extract(entry_text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: &str, s: &str, e: &str, syns: &[&str]) -> (String, String, String, Vec<String>) {
        (
            c.to_owned(),
            s.to_owned(),
            e.to_owned(),
            syns.iter().map(|x| x.to_string()).collect(),
        )
    }

    fn sample_taxonomy() -> Taxonomy {
        Taxonomy::from_rows(vec![
            row("meats", "poultry", "chicken", &["chicken"]),
            row("meats", "poultry", "chicken breast", &["chicken breast"]),
            row("staple foods", "wheat", "wrap", &["wrap", "wraps"]),
            row("preparation methods", "dry heat", "grill", &["grilled", "grill"]),
            row("vegetables", "fruiting", "chili", &["chili", "chilli"]),
        ])
        .unwrap()
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        let tokens = tokenize("McDonald's - premium sweet chili chicken Wrap (grilled), 1 burger (200g)");
        assert_eq!(
            tokens,
            vec![
                "mcdonald", "s", "premium", "sweet", "chili", "chicken", "wrap", "grilled", "1",
                "burger", "200g"
            ]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Tuna-Sandwich"), vec!["tuna", "sandwich"]);
    }

    #[test]
    fn extract_matches_the_worked_entry() {
        let tax = sample_taxonomy();
        let features: Vec<String> = tax
            .extract("McDonald's - premium sweet chili chicken Wrap (grilled), 1 burger (200g)")
            .iter()
            .map(|f| f.rendered().to_owned())
            .collect();
        assert_eq!(
            features,
            vec![
                "meats:poultry:chicken",
                "preparation methods:dry heat:grill",
                "staple foods:wheat:wrap",
                "vegetables:fruiting:chili",
            ]
        );
    }

    #[test]
    fn extract_no_match_is_empty() {
        let tax = sample_taxonomy();
        assert!(tax.extract("xyzzy 123").is_empty());
        assert!(tax.extract("").is_empty());
    }

    #[test]
    fn extract_exact_synonym_is_singleton() {
        let tax = sample_taxonomy();
        let features = tax.extract("wrap");
        assert_eq!(features.len(), 1);
        assert_eq!(
            features.iter().next().unwrap().rendered(),
            "staple foods:wheat:wrap"
        );
    }

    #[test]
    fn maximal_match_prefers_longer_synonym() {
        let tax = sample_taxonomy();
        let features = tax.extract("grilled chicken breast");
        let rendered: Vec<&str> = features.iter().map(|f| f.rendered()).collect();
        assert!(rendered.contains(&"meats:poultry:chicken breast"));
        assert!(!rendered.contains(&"meats:poultry:chicken"));
        assert!(rendered.contains(&"preparation methods:dry heat:grill"));
    }

    #[test]
    fn every_synonym_recovers_its_entity() {
        let tax = sample_taxonomy();
        for entry in tax.entries() {
            for seq in &entry.synonyms {
                let text = seq.join(" ");
                let features = tax.extract(&text);
                assert!(
                    features.contains(&entry.feature()),
                    "synonym {text:?} missed {}",
                    entry.feature()
                );
            }
        }
    }

    #[test]
    fn extraction_output_is_subset_of_taxonomy() {
        let tax = sample_taxonomy();
        let all: BTreeSet<SalientFeature> = tax.entries().iter().map(|e| e.feature()).collect();
        for text in ["grilled chicken wrap", "chili chicken", "wraps wraps wraps"] {
            for f in tax.extract(text) {
                assert!(all.contains(&f));
            }
        }
    }

    #[test]
    fn ambiguous_synonym_is_a_load_error() {
        let err = Taxonomy::from_rows(vec![
            row("staple foods", "wheat", "wrap", &["wrap"]),
            row("dishes", "sandwich", "burrito", &["wrap"]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::AmbiguousSynonym { .. }), "{err}");
    }

    #[test]
    fn duplicate_triple_is_a_load_error() {
        let err = Taxonomy::from_rows(vec![
            row("meats", "poultry", "chicken", &["chicken"]),
            row("meats", "poultry", "chicken", &["hen"]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn empty_taxonomy_is_valid_and_extracts_nothing() {
        let tax = Taxonomy::from_rows(vec![]).unwrap();
        assert!(tax.is_empty());
        assert!(tax.extract("chicken wrap").is_empty());
    }

    #[test]
    fn load_parses_rows_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("taxonomy.tsv");
        std::fs::write(
            &path,
            "# comment\nmeats\tpoultry\tchicken\tchicken|chicken breast\n",
        )
        .unwrap();
        let tax = Taxonomy::load(&path).unwrap();
        assert_eq!(tax.len(), 1);
        assert_eq!(tax.entries()[0].synonyms.len(), 2);

        std::fs::write(&path, "meats\tpoultry\n").unwrap();
        match Taxonomy::load(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn food_key_is_order_invariant_and_deduplicated() {
        let a = SalientFeature::new("meats", "poultry", "chicken").unwrap();
        let b = SalientFeature::new("staple foods", "wheat", "wrap").unwrap();
        let k1 = FoodKey::from_features([a.clone(), b.clone()]).unwrap();
        let k2 = FoodKey::from_features([b.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(k1.as_str(), "meats:poultry:chicken|staple foods:wheat:wrap");
    }

    #[test]
    fn empty_feature_set_is_an_error() {
        assert!(matches!(
            FoodKey::from_features([]),
            Err(Error::EmptyFeatureSet)
        ));
    }

    #[test]
    fn food_key_parse_round_trips_and_rejects_disorder() {
        let key = FoodKey::parse("a:b:c|d:e:f").unwrap();
        assert_eq!(key.features().len(), 2);
        assert_eq!(key.to_string(), "a:b:c|d:e:f");
        assert!(FoodKey::parse("d:e:f|a:b:c").is_err());
        assert!(FoodKey::parse("a:b:c|a:b:c").is_err());
        assert!(FoodKey::parse("").is_err());
        assert!(FoodKey::parse("nocolons").is_err());
    }

    #[test]
    fn subcategory_labels_deduplicate() {
        let key = FoodKey::parse("meats:pork:bacon|meats:pork:ham|meats:poultry:chicken").unwrap();
        let labels: Vec<String> = key.subcategory_labels().into_iter().collect();
        assert_eq!(labels, vec!["meats:pork", "meats:poultry"]);
    }
}
