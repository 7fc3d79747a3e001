//! Labeled quasi-sentence corpora: data model, ingestion, filtering and
//! label statistics.

mod io;
mod synth;

pub use io::{load_corpus, save_corpus, CorpusFormat};
pub use synth::{generate_synthetic, Domain, SynthConfig};

use crate::error::{Error, Result};
use crate::label::{TopicLabel, N_CLASSES};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    Manifesto,
    Speech,
}

impl Genre {
    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Manifesto => "manifesto",
            Genre::Speech => "speech",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "manifesto" | "manifestos" => Ok(Genre::Manifesto),
            "speech" | "speeches" => Ok(Genre::Speech),
            other => Err(format!("unknown genre {other:?}")),
        }
    }
}

/// One labeled quasi-sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub label: TopicLabel,
    pub country: String,
    pub year: i32,
    pub language: String,
    pub genre: Genre,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<String>,
}

/// Where a corpus came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_date: Option<String>,
    pub n: usize,
    /// Rows dropped at ingestion because their label was missing or NA.
    #[serde(default)]
    pub rejected_missing_label: usize,
    #[serde(default)]
    pub filters: Vec<String>,
    #[serde(default)]
    pub empty_after_filter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

/// An immutable, id-indexed sequence of utterances.
#[derive(Debug, Clone)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    index: HashMap<String, usize>,
    provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, checking per-row invariants and id uniqueness.
    pub fn new(utterances: Vec<Utterance>, mut provenance: Provenance) -> Result<Corpus> {
        let mut index = HashMap::with_capacity(utterances.len());
        for (row, u) in utterances.iter().enumerate() {
            validate_utterance(u).map_err(|message| Error::MalformedRow {
                path: "<memory>".into(),
                row: row + 1,
                message,
            })?;
            if index.insert(u.id.clone(), row).is_some() {
                return Err(Error::DuplicateId {
                    path: "<memory>".into(),
                    row: row + 1,
                    id: u.id.clone(),
                });
            }
        }
        provenance.n = utterances.len();
        Ok(Corpus {
            utterances,
            index,
            provenance,
        })
    }

    // Callers guarantee the invariants (subsets of an existing corpus).
    fn from_valid(utterances: Vec<Utterance>, provenance: Provenance) -> Corpus {
        let index = utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.clone(), i))
            .collect();
        Corpus {
            utterances,
            index,
            provenance,
        }
    }

    /// Concatenates corpora (e.g. a 2018 and a 2022 export); ids must stay unique.
    pub fn concat(parts: Vec<Corpus>) -> Result<Corpus> {
        let mut provenance = Provenance::default();
        let mut utterances = Vec::new();
        for part in parts {
            provenance.sources.extend(part.provenance.sources);
            provenance.rejected_missing_label += part.provenance.rejected_missing_label;
            provenance.filters.extend(part.provenance.filters);
            if provenance.version_tag.is_none() {
                provenance.version_tag = part.provenance.version_tag;
            } else if let Some(tag) = part.provenance.version_tag {
                let merged = format!("{}+{}", provenance.version_tag.take().unwrap(), tag);
                provenance.version_tag = Some(merged);
            }
            utterances.extend(part.utterances);
        }
        Corpus::new(utterances, provenance)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_version_tag(mut self, tag: impl Into<String>) -> Corpus {
        self.provenance.version_tag = Some(tag.into());
        self
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.index.get(id).map(|&i| &self.utterances[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().map(|u| u.id.as_str())
    }

    /// Utterances whose ids are in `ids`, keeping corpus order.
    pub fn subset(&self, ids: &BTreeSet<String>, note: &str) -> Corpus {
        let utterances: Vec<Utterance> = self
            .utterances
            .iter()
            .filter(|u| ids.contains(u.id.as_str()))
            .cloned()
            .collect();
        let mut provenance = self.provenance.clone();
        provenance.filters.push(note.to_string());
        provenance.n = utterances.len();
        Corpus::from_valid(utterances, provenance)
    }

    pub fn countries(&self) -> BTreeSet<&str> {
        self.utterances.iter().map(|u| u.country.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<TopicLabel> {
        self.utterances.iter().map(|u| u.label).collect()
    }
}

fn validate_utterance(u: &Utterance) -> std::result::Result<(), String> {
    if u.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if u.text.trim().is_empty() {
        return Err(format!("utterance {:?} has empty text", u.id));
    }
    if !(MIN_YEAR..=MAX_YEAR).contains(&u.year) {
        return Err(format!(
            "utterance {:?}: year {} outside [{MIN_YEAR}, {MAX_YEAR}]",
            u.id, u.year
        ));
    }
    Ok(())
}

/// Metadata constraints; every present constraint must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub countries: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genres: Option<BTreeSet<Genre>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_min: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_max: Option<i32>,
}

impl CorpusFilter {
    pub fn countries<I, S>(mut self, countries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.countries = Some(countries.into_iter().map(Into::into).collect());
        self
    }

    pub fn languages<I, S>(mut self, languages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.languages = Some(languages.into_iter().map(Into::into).collect());
        self
    }

    pub fn genres<I: IntoIterator<Item = Genre>>(mut self, genres: I) -> Self {
        self.genres = Some(genres.into_iter().collect());
        self
    }

    pub fn year_min(mut self, year: i32) -> Self {
        self.year_min = Some(year);
        self
    }

    pub fn year_max(mut self, year: i32) -> Self {
        self.year_max = Some(year);
        self
    }

    pub fn is_empty(&self) -> bool {
        *self == CorpusFilter::default()
    }

    pub fn matches(&self, u: &Utterance) -> bool {
        self.countries.as_ref().is_none_or(|s| s.contains(&u.country))
            && self.languages.as_ref().is_none_or(|s| s.contains(&u.language))
            && self.genres.as_ref().is_none_or(|s| s.contains(&u.genre))
            && self.year_min.is_none_or(|y| u.year >= y)
            && self.year_max.is_none_or(|y| u.year <= y)
    }

    fn join<'a>(items: impl Iterator<Item = &'a str>) -> String {
        items.collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for CorpusFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(c) = &self.countries {
            parts.push(format!("country in {{{}}}", Self::join(c.iter().map(String::as_str))));
        }
        if let Some(l) = &self.languages {
            parts.push(format!("language in {{{}}}", Self::join(l.iter().map(String::as_str))));
        }
        if let Some(g) = &self.genres {
            parts.push(format!("genre in {{{}}}", Self::join(g.iter().map(|g| g.as_str()))));
        }
        if let Some(y) = self.year_min {
            parts.push(format!("year >= {y}"));
        }
        if let Some(y) = self.year_max {
            parts.push(format!("year <= {y}"));
        }
        if parts.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&parts.join(" and "))
        }
    }
}

/// Keeps the utterances satisfying every constraint of `predicate`.
///
/// An empty result is allowed and flagged in the provenance.
pub fn filter(corpus: &Corpus, predicate: &CorpusFilter) -> Corpus {
    let utterances: Vec<Utterance> = corpus
        .utterances
        .iter()
        .filter(|u| predicate.matches(u))
        .cloned()
        .collect();
    let mut provenance = corpus.provenance.clone();
    provenance.filters.push(predicate.to_string());
    provenance.n = utterances.len();
    provenance.empty_after_filter = utterances.is_empty();
    if utterances.is_empty() {
        log::warn!("filter `{predicate}` selected no utterances");
    }
    Corpus::from_valid(utterances, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Country,
    Language,
    Genre,
    Year,
}

impl GroupBy {
    fn key(self, u: &Utterance) -> String {
        match self {
            GroupBy::Country => u.country.clone(),
            GroupBy::Language => u.language.clone(),
            GroupBy::Genre => u.genre.to_string(),
            GroupBy::Year => u.year.to_string(),
        }
    }
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "country" => Ok(GroupBy::Country),
            "language" => Ok(GroupBy::Language),
            "genre" => Ok(GroupBy::Genre),
            "year" => Ok(GroupBy::Year),
            other => Err(format!("cannot group by {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub key: String,
    pub n: u64,
    pub counts: [u64; N_CLASSES],
    pub proportions: [f64; N_CLASSES],
}

impl GroupDistribution {
    pub fn from_counts(key: String, counts: [u64; N_CLASSES]) -> Self {
        let n: u64 = counts.iter().sum();
        let mut proportions = [0.0; N_CLASSES];
        if n > 0 {
            for (p, &c) in proportions.iter_mut().zip(&counts) {
                *p = c as f64 / n as f64;
            }
        }
        GroupDistribution {
            key,
            n,
            counts,
            proportions,
        }
    }
}

/// Per-class counts and proportions, one entry per group (or a single `all` group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub group_by: Option<GroupBy>,
    pub groups: Vec<GroupDistribution>,
}

pub fn corpus_stats(corpus: &Corpus, group_by: Option<GroupBy>) -> LabelDistribution {
    let mut counts: BTreeMap<String, [u64; N_CLASSES]> = BTreeMap::new();
    for u in corpus.utterances() {
        let key = group_by.map_or_else(|| "all".to_string(), |g| g.key(u));
        counts.entry(key).or_insert([0; N_CLASSES])[u.label.index()] += 1;
    }
    if counts.is_empty() && group_by.is_none() {
        counts.insert("all".into(), [0; N_CLASSES]);
    }
    LabelDistribution {
        group_by,
        groups: counts
            .into_iter()
            .map(|(k, c)| GroupDistribution::from_counts(k, c))
            .collect(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn utt(id: &str, label: TopicLabel, country: &str, year: i32) -> Utterance {
        Utterance {
            id: id.into(),
            text: format!("text of {id}"),
            label,
            country: country.into(),
            year,
            language: "en".into(),
            genre: Genre::Manifesto,
            party: None,
        }
    }

    fn sample() -> Corpus {
        let mut rows = vec![
            utt("a", TopicLabel::Economy, "NZL", 2016),
            utt("b", TopicLabel::Economy, "AUS", 2020),
            utt("c", TopicLabel::NoTopic, "NZL", 2020),
            utt("d", TopicLabel::WelfareQualityOfLife, "DEU", 2016),
        ];
        rows[3].language = "de".into();
        rows[2].genre = Genre::Speech;
        Corpus::new(rows, Provenance::default()).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        let rows = vec![
            utt("a", TopicLabel::Economy, "NZL", 2016),
            utt("a", TopicLabel::Economy, "NZL", 2016),
        ];
        assert!(matches!(
            Corpus::new(rows, Provenance::default()),
            Err(Error::DuplicateId { .. })
        ));
        let mut bad = utt("x", TopicLabel::Economy, "NZL", 1850);
        assert!(Corpus::new(vec![bad.clone()], Provenance::default()).is_err());
        bad.year = 2000;
        bad.text = "   ".into();
        assert!(Corpus::new(vec![bad], Provenance::default()).is_err());
    }

    #[test]
    fn filter_by_language_and_year() {
        let c = sample();
        let en = filter(&c, &CorpusFilter::default().languages(["en"]));
        assert_eq!(en.len(), 3);
        assert!(en.utterances().iter().all(|u| u.language == "en"));

        let early = filter(&c, &CorpusFilter::default().year_max(2018));
        let ids: Vec<_> = early.ids().collect();
        assert_eq!(ids, vec!["a", "d"]);
        assert_eq!(early.provenance().filters, vec!["year <= 2018".to_string()]);
    }

    #[test]
    fn filter_country_and_genre_and_empty_flag() {
        let c = sample();
        let f = CorpusFilter::default().countries(["NZL"]).genres([Genre::Speech]);
        let nz = filter(&c, &f);
        assert_eq!(nz.ids().collect::<Vec<_>>(), vec!["c"]);
        assert!(!nz.provenance().empty_after_filter);

        let none = filter(&c, &CorpusFilter::default().countries(["FRA"]));
        assert!(none.is_empty());
        assert!(none.provenance().empty_after_filter);
    }

    #[test]
    fn stats_counts_and_groups() {
        let c = sample();
        let all = corpus_stats(&c, None);
        assert_eq!(all.groups.len(), 1);
        assert_eq!(all.groups[0].counts[TopicLabel::Economy.index()], 2);
        assert!((all.groups[0].proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let by_country = corpus_stats(&c, Some(GroupBy::Country));
        let keys: Vec<_> = by_country.groups.iter().map(|g| g.key.as_str()).collect();
        assert_eq!(keys, vec!["AUS", "DEU", "NZL"]);
        assert_eq!(by_country.groups[2].n, 2);
    }

    #[test]
    fn single_class_corpus() {
        let rows = (0..5)
            .map(|i| utt(&format!("u{i}"), TopicLabel::SocialGroups, "NZL", 2000))
            .collect();
        let c = Corpus::new(rows, Provenance::default()).unwrap();
        let d = corpus_stats(&c, None);
        for (i, p) in d.groups[0].proportions.iter().enumerate() {
            let expected = if i == TopicLabel::SocialGroups.index() { 1.0 } else { 0.0 };
            assert_eq!(*p, expected);
        }
    }
}
