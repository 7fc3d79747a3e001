//! Train/validation/test splits for the within-domain and transfer scenarios.
//!
//! Every strategy sorts ids before a seeded shuffle, so results depend only on
//! corpus content and the spec, never on input row order. Fractions are
//! floored (`floor(p * n)`) for test and validation; the remainder trains.
//! For the transfer strategies the validation set always comes from the
//! source side.

use crate::corpus::{Corpus, Genre};
use crate::error::{Error, Result};
use crate::label::TopicLabel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SplitSpec {
    Random {
        p_train: f64,
        p_val: f64,
        p_test: f64,
        seed: u64,
        #[serde(default)]
        stratified: bool,
    },
    Temporal {
        cutoff_year: i32,
        val_fraction: f64,
        seed: u64,
    },
    Loco {
        held_out_country: String,
        val_fraction: f64,
        seed: u64,
    },
    CrossGenre {
        train_genre: Genre,
        test_genre: Genre,
        val_fraction: f64,
        seed: u64,
    },
}

impl SplitSpec {
    /// The .8/.1/.1 random split.
    pub fn random(seed: u64) -> SplitSpec {
        SplitSpec::Random {
            p_train: 0.8,
            p_val: 0.1,
            p_test: 0.1,
            seed,
            stratified: false,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SplitSpec::Random { seed, .. }
            | SplitSpec::Temporal { seed, .. }
            | SplitSpec::Loco { seed, .. }
            | SplitSpec::CrossGenre { seed, .. } => *seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SplitSpec::Random {
                p_train,
                p_val,
                p_test,
                ..
            } => {
                if [p_train, p_val, p_test].iter().any(|p| !(**p > 0.0)) {
                    return Err(Error::Split("proportions must all be positive".into()));
                }
                if (p_train + p_val + p_test - 1.0).abs() > 1e-9 {
                    return Err(Error::Split(format!(
                        "proportions sum to {}, not 1",
                        p_train + p_val + p_test
                    )));
                }
            }
            SplitSpec::Temporal { val_fraction, .. }
            | SplitSpec::Loco { val_fraction, .. }
            | SplitSpec::CrossGenre { val_fraction, .. } => {
                if !(*val_fraction > 0.0 && *val_fraction < 0.5) {
                    return Err(Error::Split(format!(
                        "val_fraction {val_fraction} outside (0, 0.5)"
                    )));
                }
            }
        }
        if let SplitSpec::CrossGenre {
            train_genre,
            test_genre,
            ..
        } = self
        {
            if train_genre == test_genre {
                return Err(Error::Split("train and test genre must differ".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSpec::Random {
                p_train,
                p_val,
                p_test,
                seed,
                stratified,
            } => write!(
                f,
                "random {p_train}/{p_val}/{p_test} seed={seed}{}",
                if *stratified { " stratified" } else { "" }
            ),
            SplitSpec::Temporal {
                cutoff_year, seed, ..
            } => write!(f, "temporal cutoff={cutoff_year} seed={seed}"),
            SplitSpec::Loco {
                held_out_country,
                seed,
                ..
            } => write!(f, "loco holdout={held_out_country} seed={seed}"),
            SplitSpec::CrossGenre {
                train_genre,
                test_genre,
                seed,
                ..
            } => write!(f, "genre {train_genre}->{test_genre} seed={seed}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub spec: SplitSpec,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

impl SplitResult {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train_ids.len(),
            val: self.val_ids.len(),
            test: self.test_ids.len(),
        }
    }

    /// Ids allowed to influence fitting or model selection.
    pub fn source_ids(&self) -> BTreeSet<String> {
        self.train_ids.union(&self.val_ids).cloned().collect()
    }

    /// Checks disjointness, non-emptiness and (optionally) coverage of `corpus`.
    pub fn check_partition(&self, corpus: Option<&Corpus>) -> Result<()> {
        if self.train_ids.is_empty() || self.val_ids.is_empty() || self.test_ids.is_empty() {
            return Err(Error::Split(format!(
                "empty split set (train {}, val {}, test {})",
                self.train_ids.len(),
                self.val_ids.len(),
                self.test_ids.len()
            )));
        }
        let overlap = self
            .train_ids
            .intersection(&self.val_ids)
            .chain(self.train_ids.intersection(&self.test_ids))
            .chain(self.val_ids.intersection(&self.test_ids))
            .next();
        if let Some(id) = overlap {
            return Err(Error::Split(format!("id {id:?} assigned to two sets")));
        }
        if let Some(corpus) = corpus {
            let total = self.train_ids.len() + self.val_ids.len() + self.test_ids.len();
            let all_known = self
                .train_ids
                .iter()
                .chain(&self.val_ids)
                .chain(&self.test_ids)
                .all(|id| corpus.contains(id));
            if total != corpus.len() || !all_known {
                return Err(Error::Split(
                    "split does not partition the corpus".into(),
                ));
            }
        }
        Ok(())
    }
}

fn floor_count(p: f64, n: usize) -> usize {
    // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
    (p * n as f64 + 1e-9).floor() as usize
}

fn sorted_shuffled(mut ids: Vec<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    ids.sort_unstable();
    ids.shuffle(rng);
    ids
}

/// Takes `n_test` then `n_val` from the front of `ids`; the rest trains.
fn carve(
    ids: Vec<String>,
    n_test: usize,
    n_val: usize,
) -> (BTreeSet<String>, BTreeSet<String>, BTreeSet<String>) {
    let mut it = ids.into_iter();
    let test = it.by_ref().take(n_test).collect();
    let val = it.by_ref().take(n_val).collect();
    let train = it.collect();
    (train, val, test)
}

fn finish(
    spec: SplitSpec,
    train_ids: BTreeSet<String>,
    val_ids: BTreeSet<String>,
    test_ids: BTreeSet<String>,
    corpus: &Corpus,
) -> Result<SplitResult> {
    let result = SplitResult {
        spec,
        train_ids,
        val_ids,
        test_ids,
    };
    result.check_partition(Some(corpus))?;
    Ok(result)
}

pub fn split_random(
    corpus: &Corpus,
    p_train: f64,
    p_val: f64,
    p_test: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitResult> {
    let spec = SplitSpec::Random {
        p_train,
        p_val,
        p_test,
        seed,
        stratified,
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val, test) = if stratified {
        let mut by_label: BTreeMap<TopicLabel, Vec<String>> = BTreeMap::new();
        for u in corpus.utterances() {
            by_label.entry(u.label).or_default().push(u.id.clone());
        }
        let mut train = BTreeSet::new();
        let mut val = BTreeSet::new();
        let mut test = BTreeSet::new();
        for ids in by_label.into_values() {
            let n = ids.len();
            let (tr, va, te) = carve(
                sorted_shuffled(ids, &mut rng),
                floor_count(p_test, n),
                floor_count(p_val, n),
            );
            train.extend(tr);
            val.extend(va);
            test.extend(te);
        }
        (train, val, test)
    } else {
        let n = corpus.len();
        let ids = sorted_shuffled(corpus.ids().map(String::from).collect(), &mut rng);
        carve(ids, floor_count(p_test, n), floor_count(p_val, n))
    };
    finish(spec, train, val, test, corpus)
}

/// Source ids → (train, val) with `floor(val_fraction * n)` validation ids.
fn source_split(
    source: Vec<String>,
    val_fraction: f64,
    seed: u64,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = source.len();
    let shuffled = sorted_shuffled(source, &mut rng);
    let (train, val, _) = carve(shuffled, 0, floor_count(val_fraction, n));
    (train, val)
}

fn partition_by<F>(corpus: &Corpus, is_test: F) -> (Vec<String>, BTreeSet<String>)
where
    F: Fn(&crate::corpus::Utterance) -> bool,
{
    let mut source = Vec::new();
    let mut test = BTreeSet::new();
    for u in corpus.utterances() {
        if is_test(u) {
            test.insert(u.id.clone());
        } else {
            source.push(u.id.clone());
        }
    }
    (source, test)
}

pub fn split_temporal(
    corpus: &Corpus,
    cutoff_year: i32,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    let spec = SplitSpec::Temporal {
        cutoff_year,
        val_fraction,
        seed,
    };
    spec.validate()?;
    let (source, test) = partition_by(corpus, |u| u.year > cutoff_year);
    if source.is_empty() || test.is_empty() {
        return Err(Error::Split(format!(
            "cutoff {cutoff_year} leaves {} utterances at or before and {} after",
            source.len(),
            test.len()
        )));
    }
    let (train, val) = source_split(source, val_fraction, seed);
    finish(spec, train, val, test, corpus)
}

pub fn split_loco(
    corpus: &Corpus,
    held_out_country: &str,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    let spec = SplitSpec::Loco {
        held_out_country: held_out_country.to_string(),
        val_fraction,
        seed,
    };
    spec.validate()?;
    let countries = corpus.countries();
    if !countries.contains(held_out_country) {
        return Err(Error::Split(format!(
            "country {held_out_country:?} not in corpus (have {countries:?})"
        )));
    }
    if countries.len() < 2 {
        return Err(Error::Split(
            "leave-one-country-out needs at least two countries".into(),
        ));
    }
    let (source, test) = partition_by(corpus, |u| u.country == held_out_country);
    let (train, val) = source_split(source, val_fraction, seed);
    finish(spec, train, val, test, corpus)
}

pub fn split_cross_genre(
    corpus: &Corpus,
    train_genre: Genre,
    test_genre: Genre,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    let spec = SplitSpec::CrossGenre {
        train_genre,
        test_genre,
        val_fraction,
        seed,
    };
    spec.validate()?;
    let present: BTreeSet<Genre> = corpus.utterances().iter().map(|u| u.genre).collect();
    for g in [train_genre, test_genre] {
        if !present.contains(&g) {
            return Err(Error::Split(format!("genre {g} not present in corpus")));
        }
    }
    let (source, test) = partition_by(corpus, |u| u.genre == test_genre);
    let (train, val) = source_split(source, val_fraction, seed);
    finish(spec, train, val, test, corpus)
}

/// Dispatches on the spec variant.
pub fn apply_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitResult> {
    match spec {
        SplitSpec::Random {
            p_train,
            p_val,
            p_test,
            seed,
            stratified,
        } => split_random(corpus, *p_train, *p_val, *p_test, *seed, *stratified),
        SplitSpec::Temporal {
            cutoff_year,
            val_fraction,
            seed,
        } => split_temporal(corpus, *cutoff_year, *val_fraction, *seed),
        SplitSpec::Loco {
            held_out_country,
            val_fraction,
            seed,
        } => split_loco(corpus, held_out_country, *val_fraction, *seed),
        SplitSpec::CrossGenre {
            train_genre,
            test_genre,
            val_fraction,
            seed,
        } => split_cross_genre(corpus, *train_genre, *test_genre, *val_fraction, *seed),
    }
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    id: String,
    assignment: String,
    spec: String,
}

/// Writes `id,assignment,spec` rows (train, then val, then test; ids sorted).
/// The `spec` column carries the JSON split spec on every row.
pub fn write_split(split: &SplitResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = serde_json::to_string(&split.spec)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
    for (assignment, ids) in [
        ("train", &split.train_ids),
        ("val", &split.val_ids),
        ("test", &split.test_ids),
    ] {
        for id in ids {
            w.serialize(SplitRow {
                id: id.clone(),
                assignment: assignment.into(),
                spec: spec.clone(),
            })
            .map_err(|e| Error::Serde(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_split(path: impl AsRef<Path>) -> Result<SplitResult> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Split(format!("{}: {e}", path.display())))?;
    let mut spec: Option<SplitSpec> = None;
    let mut sets: [BTreeSet<String>; 3] = Default::default();
    for row in r.deserialize::<SplitRow>() {
        let row = row.map_err(|e| Error::Split(format!("{}: {e}", path.display())))?;
        if spec.is_none() {
            spec = Some(serde_json::from_str(&row.spec)?);
        }
        let slot = match row.assignment.as_str() {
            "train" => 0,
            "val" => 1,
            "test" => 2,
            other => {
                return Err(Error::Split(format!(
                    "{}: unknown assignment {other:?}",
                    path.display()
                )))
            }
        };
        sets[slot].insert(row.id);
    }
    let spec = spec.ok_or_else(|| Error::Split(format!("{}: empty split file", path.display())))?;
    let [train_ids, val_ids, test_ids] = sets;
    let result = SplitResult {
        spec,
        train_ids,
        val_ids,
        test_ids,
    };
    result.check_partition(None)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::utt;
    use crate::corpus::Provenance;

    fn numbered(n: usize) -> Corpus {
        let rows = (0..n)
            .map(|i| utt(&format!("id{i:04}"), TopicLabel::Economy, "NZL", 2016))
            .collect();
        Corpus::new(rows, Provenance::default()).unwrap()
    }

    #[test]
    fn random_sizes_floor_rule() {
        let s = split_random(&numbered(100), 0.8, 0.1, 0.1, 2018, false).unwrap();
        assert_eq!(s.sizes(), SplitSizes { train: 80, val: 10, test: 10 });
        let s = split_random(&numbered(101), 0.8, 0.1, 0.1, 2018, false).unwrap();
        assert_eq!(s.sizes(), SplitSizes { train: 81, val: 10, test: 10 });
        let s = split_random(&numbered(100), 0.42, 0.29, 0.29, 1, false).unwrap();
        assert_eq!(s.sizes(), SplitSizes { train: 42, val: 29, test: 29 });
    }

    #[test]
    fn random_rejects_bad_proportions_and_empty_sets() {
        assert!(split_random(&numbered(100), 0.8, 0.1, 0.2, 1, false).is_err());
        assert!(split_random(&numbered(100), 0.9, 0.1, 0.0, 1, false).is_err());
        assert!(split_random(&numbered(5), 0.8, 0.1, 0.1, 1, false).is_err());
    }

    #[test]
    fn stratified_keeps_label_shares() {
        let rows = (0..200)
            .map(|i| {
                let label = if i < 50 { TopicLabel::NoTopic } else { TopicLabel::Economy };
                utt(&format!("u{i:03}"), label, "NZL", 2016)
            })
            .collect();
        let c = Corpus::new(rows, Provenance::default()).unwrap();
        let s = split_random(&c, 0.8, 0.1, 0.1, 3, true).unwrap();
        let rare_test = s.test_ids.iter().filter(|id| c.get(id).unwrap().label == TopicLabel::NoTopic).count();
        assert_eq!(rare_test, 5);
        assert_eq!(s.sizes().test, 20);
    }

    #[test]
    fn temporal_definition() {
        let rows = vec![
            utt("a", TopicLabel::Economy, "NZL", 2016),
            utt("b", TopicLabel::Economy, "NZL", 2017),
            utt("c", TopicLabel::Economy, "NZL", 2020),
            utt("d", TopicLabel::Economy, "NZL", 2016),
            utt("e", TopicLabel::Economy, "NZL", 2017),
        ];
        let c = Corpus::new(rows, Provenance::default()).unwrap();
        let s = split_temporal(&c, 2018, 0.25, 1).unwrap();
        assert_eq!(s.test_ids, BTreeSet::from(["c".to_string()]));
        assert_eq!(s.val_ids.len(), 1);
        assert!(split_temporal(&c, 2030, 0.25, 1).is_err());
        assert!(split_temporal(&c, 2000, 0.25, 1).is_err());
    }

    #[test]
    fn loco_counts_and_errors() {
        let mut rows = Vec::new();
        for country in ["A", "B", "C"] {
            for i in 0..10 {
                rows.push(utt(&format!("{country}{i}"), TopicLabel::Economy, country, 2016));
            }
        }
        let c = Corpus::new(rows, Provenance::default()).unwrap();
        let s = split_loco(&c, "C", 0.1, 5).unwrap();
        assert_eq!(s.sizes().test, 10);
        assert_eq!(s.sizes().train + s.sizes().val, 20);
        assert!(s.test_ids.iter().all(|id| id.starts_with('C')));
        assert!(split_loco(&c, "D", 0.1, 5).is_err());
        assert!(split_loco(&numbered(20), "NZL", 0.1, 5).is_err());
    }

    #[test]
    fn cross_genre_definition() {
        let mut rows: Vec<_> = (0..20)
            .map(|i| utt(&format!("m{i}"), TopicLabel::Economy, "NZL", 2016))
            .collect();
        for i in 0..5 {
            let mut u = utt(&format!("s{i}"), TopicLabel::Economy, "NZL", 2016);
            u.genre = Genre::Speech;
            rows.push(u);
        }
        let c = Corpus::new(rows, Provenance::default()).unwrap();
        let s = split_cross_genre(&c, Genre::Manifesto, Genre::Speech, 0.1, 1).unwrap();
        assert_eq!(s.sizes(), SplitSizes { train: 18, val: 2, test: 5 });
        assert!(s.test_ids.iter().all(|id| c.get(id).unwrap().genre == Genre::Speech));
        assert!(split_cross_genre(&numbered(10), Genre::Manifesto, Genre::Speech, 0.1, 1).is_err());
        assert!(split_cross_genre(&c, Genre::Speech, Genre::Speech, 0.1, 1).is_err());
    }

    #[test]
    fn split_file_roundtrip() {
        let s = split_random(&numbered(50), 0.8, 0.1, 0.1, 9, false).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_split(&s, f.path()).unwrap();
        assert_eq!(read_split(f.path()).unwrap(), s);
    }
}
