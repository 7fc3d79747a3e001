use super::{validate_utterance, Corpus, Genre, Provenance, Utterance};
use crate::error::{Error, Result};
use crate::label::TopicLabel;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

const NA_LABELS: &[&str] = &["", "na", "n/a", "nan", "null"];

/// Fields of one input row before validation.
#[derive(Default)]
struct RawRow {
    id: Option<String>,
    text: Option<String>,
    label: Option<Option<String>>,
    country: Option<String>,
    year: Option<String>,
    language: Option<String>,
    genre: Option<String>,
    party: Option<String>,
}

enum RowOutcome {
    Keep(Utterance),
    MissingLabel,
}

struct RowContext<'a> {
    path: &'a Path,
    row: usize,
}

impl RowContext<'_> {
    fn malformed(&self, message: impl Into<String>) -> Error {
        Error::MalformedRow {
            path: self.path.to_path_buf(),
            row: self.row,
            message: message.into(),
        }
    }

    fn missing(&self, field: &'static str) -> Error {
        Error::MissingField {
            path: self.path.to_path_buf(),
            row: self.row,
            field,
        }
    }
}

fn resolve_row(raw: RawRow, ctx: &RowContext<'_>) -> Result<RowOutcome> {
    let id = raw.id.ok_or_else(|| ctx.missing("id"))?.trim().to_string();
    let text = raw.text.ok_or_else(|| ctx.missing("text"))?;
    let label_raw = raw.label.ok_or_else(|| ctx.missing("label"))?;
    let country = raw.country.ok_or_else(|| ctx.missing("country"))?.trim().to_string();
    let year_raw = raw.year.ok_or_else(|| ctx.missing("year"))?;
    let language = raw.language.ok_or_else(|| ctx.missing("language"))?.trim().to_string();
    let genre_raw = raw.genre.ok_or_else(|| ctx.missing("genre"))?;

    let label_str = match label_raw {
        None => return Ok(RowOutcome::MissingLabel),
        Some(s) => s,
    };
    if NA_LABELS.contains(&label_str.trim().to_ascii_lowercase().as_str()) {
        return Ok(RowOutcome::MissingLabel);
    }
    let label = TopicLabel::parse_label(&label_str).ok_or_else(|| Error::UnknownLabel {
        path: ctx.path.to_path_buf(),
        row: ctx.row,
        value: label_str.clone(),
    })?;
    let year: i32 = year_raw
        .trim()
        .parse()
        .map_err(|_| ctx.malformed(format!("year {year_raw:?} is not an integer")))?;
    let genre = Genre::from_str(&genre_raw).map_err(|e| ctx.malformed(e))?;
    let party = raw
        .party
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty());
    if country.is_empty() {
        return Err(ctx.malformed("empty country"));
    }
    if language.is_empty() {
        return Err(ctx.malformed("empty language"));
    }
    let u = Utterance {
        id,
        text,
        label,
        country,
        year,
        language,
        genre,
        party,
    };
    validate_utterance(&u).map_err(|m| ctx.malformed(m))?;
    Ok(RowOutcome::Keep(u))
}

fn json_scalar(v: &serde_json::Value, field: &str, ctx: &RowContext<'_>) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(ctx.malformed(format!("field `{field}` has unexpected value {other}"))),
    }
}

fn parse_json_row(line: &str, ctx: &RowContext<'_>) -> Result<RawRow> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ctx.malformed(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ctx.malformed("row is not a JSON object"))?;
    let get = |field: &str| -> Result<Option<String>> {
        match obj.get(field) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => json_scalar(v, field, ctx).map(Some),
        }
    };
    let label = match obj.get("label") {
        None => None,
        Some(serde_json::Value::Null) => Some(None),
        Some(v) => Some(Some(json_scalar(v, "label", ctx)?)),
    };
    Ok(RawRow {
        id: get("id")?,
        text: get("text")?,
        label,
        country: get("country")?,
        year: get("year")?,
        language: get("language")?,
        genre: get("genre")?,
        party: get("party")?,
    })
}

/// Reads and validates a corpus file.
///
/// Rows whose label is missing or NA are dropped and counted in the
/// provenance; any other unresolvable label is an error.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut rejected = 0usize;
    let mut seen = HashSet::new();

    let mut accept = |outcome: RowOutcome, row: usize| -> Result<()> {
        match outcome {
            RowOutcome::MissingLabel => rejected += 1,
            RowOutcome::Keep(u) => {
                if !seen.insert(u.id.clone()) {
                    return Err(Error::DuplicateId {
                        path: path.to_path_buf(),
                        row,
                        id: u.id,
                    });
                }
                rows.push(u);
            }
        }
        Ok(())
    };

    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let ctx = RowContext { path, row: i + 1 };
                let raw = parse_json_row(&line, &ctx)?;
                accept(resolve_row(raw, &ctx)?, ctx.row)?;
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let headers = reader
                .headers()
                .map_err(|e| Error::MalformedRow {
                    path: path.to_path_buf(),
                    row: 1,
                    message: e.to_string(),
                })?
                .clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let cols = [
                col("id"),
                col("text"),
                col("label"),
                col("country"),
                col("year"),
                col("language"),
                col("genre"),
                col("party"),
            ];
            for record in reader.records() {
                let record = record.map_err(|e| Error::MalformedRow {
                    path: path.to_path_buf(),
                    row: e.position().map_or(0, |p| p.line() as usize),
                    message: e.to_string(),
                })?;
                let row = record.position().map_or(0, |p| p.line() as usize);
                let ctx = RowContext { path, row };
                let field = |c: Option<usize>| c.and_then(|i| record.get(i)).map(str::to_string);
                let raw = RawRow {
                    id: field(cols[0]),
                    text: field(cols[1]),
                    label: field(cols[2]).map(Some),
                    country: field(cols[3]),
                    year: field(cols[4]),
                    language: field(cols[5]),
                    genre: field(cols[6]),
                    party: field(cols[7]),
                };
                accept(resolve_row(raw, &ctx)?, row)?;
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            row: 0,
            message: "corpus contains no labeled rows".into(),
        });
    }
    let provenance = Provenance {
        sources: vec![path.display().to_string()],
        rejected_missing_label: rejected,
        ..Provenance::default()
    };
    Corpus::new(rows, provenance)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
    country: &'a str,
    year: i32,
    language: &'a str,
    genre: &'a str,
    party: &'a str,
}

/// Writes a corpus in the same schema `load_corpus` reads.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| Error::io(PathBuf::from(path), e);
    let file = File::create(path).map_err(io_err)?;
    match format {
        CorpusFormat::Jsonl => {
            let mut out = BufWriter::new(file);
            for u in corpus.utterances() {
                serde_json::to_writer(&mut out, u)?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
        }
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_writer(file);
            for u in corpus.utterances() {
                writer
                    .serialize(CsvRow {
                        id: &u.id,
                        text: &u.text,
                        label: u.label.as_str(),
                        country: &u.country,
                        year: u.year,
                        language: &u.language,
                        genre: u.genre.as_str(),
                        party: u.party.as_deref().unwrap_or(""),
                    })
                    .map_err(|e| Error::Serde(e.to_string()))?;
            }
            writer.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const ROW: &str = r#""text":"Tax cuts now","country":"NZL","year":2017,"language":"en","genre":"manifesto""#;

    #[test]
    fn loads_three_rows() {
        let data = format!(
            "{{\"id\":\"1\",\"label\":\"economy\",{ROW}}}\n{{\"id\":\"2\",\"label\":\"economy \",{ROW}}}\n{{\"id\":\"3\",\"label\":\"Welfare / Quality of Life\",{ROW},\"party\":\"Labour\"}}\n"
        );
        let f = write_tmp(&data, ".jsonl");
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get("2").unwrap().label, TopicLabel::Economy);
        assert_eq!(c.get("3").unwrap().party.as_deref(), Some("Labour"));
        assert_eq!(c.provenance().sources, vec![f.path().display().to_string()]);
        assert_eq!(c.provenance().n, 3);
    }

    #[test]
    fn unknown_label_names_row_and_value() {
        let data = format!(
            "{{\"id\":\"1\",\"label\":\"economy\",{ROW}}}\n{{\"id\":\"2\",\"label\":\"defence\",{ROW}}}\n"
        );
        let f = write_tmp(&data, ".jsonl");
        match load_corpus(f.path(), CorpusFormat::Jsonl) {
            Err(Error::UnknownLabel { row, value, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(value, "defence");
            }
            other => panic!("expected unknown label error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_missing_and_malformed() {
        let dup = format!(
            "{{\"id\":\"1\",\"label\":\"economy\",{ROW}}}\n{{\"id\":\"1\",\"label\":\"economy\",{ROW}}}\n"
        );
        let f = write_tmp(&dup, ".jsonl");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl),
            Err(Error::DuplicateId { row: 2, .. })
        ));

        let missing = r#"{"id":"1","label":"economy","text":"x","year":2017,"language":"en","genre":"manifesto"}"#;
        let f = write_tmp(missing, ".jsonl");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl),
            Err(Error::MissingField { field: "country", .. })
        ));

        let f = write_tmp("{not json\n", ".jsonl");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl),
            Err(Error::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn na_labels_are_counted_not_loaded() {
        let data = format!(
            "{{\"id\":\"1\",\"label\":\"economy\",{ROW}}}\n{{\"id\":\"2\",\"label\":null,{ROW}}}\n{{\"id\":\"3\",\"label\":\"NA\",{ROW}}}\n"
        );
        let f = write_tmp(&data, ".jsonl");
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.provenance().rejected_missing_label, 2);
    }

    #[test]
    fn csv_with_quoting() {
        let data = "id,text,label,country,year,language,genre,party\n\
                    a,\"Hello, world\",economy,NZL,2017,en,speech,\n\
                    b,\"He said \"\"no\"\"\",External Relations,AUS,2019,en,manifesto,Greens\n";
        let f = write_tmp(data, ".csv");
        let c = load_corpus(f.path(), CorpusFormat::Csv).unwrap();
        assert_eq!(c.get("a").unwrap().text, "Hello, world");
        assert_eq!(c.get("a").unwrap().party, None);
        assert_eq!(c.get("b").unwrap().text, "He said \"no\"");
        assert_eq!(c.get("b").unwrap().label, TopicLabel::ExternalRelations);

        let bad = "id,text,label,country,year,language,genre\na,t,defence,NZL,2017,en,speech\n";
        let f = write_tmp(bad, ".csv");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Csv),
            Err(Error::UnknownLabel { row: 2, .. })
        ));
    }
}
