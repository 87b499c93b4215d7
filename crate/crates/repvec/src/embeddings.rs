//! Word-embedding tables in word2vec/GloVe text format.
//!
//! Each line holds a token followed by its vector components, separated
//! by whitespace. An optional first line `vocab_size dimension` gives the
//! shape (word2vec text output); without it the dimension is inferred
//! from the first data line. Tokens are lowercased on ingest and on
//! lookup; later duplicates overwrite earlier entries.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::vector::Vector;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("malformed embedding line {0}: wrong arity or unparseable number")]
    MalformedLine(usize),
    #[error("embedding stream contains no valid entries")]
    EmptyTable,
    #[error("embedding dimension is zero")]
    DimensionZero,
    #[error("io error reading embeddings: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
#[error("no token of the phrase resolved in the embedding table")]
pub struct NoTokenResolved;

/// Immutable token → vector map of a fixed dimension.
///
/// Tokens are stored in first-insertion order so that a loaded table
/// serializes back to the same byte sequence.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vector>,
    duplicates_overwritten: usize,
}

impl EmbeddingTable {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    /// How many ingest lines overwrote an earlier entry for the same token.
    pub fn duplicates_overwritten(&self) -> usize {
        self.duplicates_overwritten
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|s| s.as_str())
    }

    /// Vector for `token`, case-insensitively. Absence is data, not an error.
    pub fn lookup(&self, token: &str) -> Option<&Vector> {
        let key = token.to_lowercase();
        self.index.get(&key).map(|&i| &self.vectors[i])
    }

    /// Embeds a phrase as the unweighted mean of its in-vocabulary token
    /// vectors. Tokens absent from the table are skipped; if none resolve
    /// the caller must drop the phrase.
    pub fn embed_phrase(&self, phrase: &str) -> Result<Vector, NoTokenResolved> {
        let mut acc = vec![0.0; self.dimension];
        let mut found = 0usize;
        for token in phrase.split_whitespace() {
            if let Some(v) = self.lookup(token) {
                for (a, x) in acc.iter_mut().zip(v.iter()) {
                    *a += x;
                }
                found += 1;
            }
        }
        if found == 0 {
            return Err(NoTokenResolved);
        }
        if found > 1 {
            let n = found as f64;
            for a in &mut acc {
                *a /= n;
            }
        }
        Ok(acc)
    }

    /// Builds a table from (token, vector) pairs, lowercasing tokens and
    /// overwriting duplicates in place.
    pub fn from_entries(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vector)>,
    ) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::DimensionZero);
        }
        let mut table = EmbeddingTable {
            dimension,
            tokens: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            duplicates_overwritten: 0,
        };
        for (token, vector) in entries {
            assert_eq!(vector.len(), dimension, "entry arity mismatch");
            table.insert(token, vector);
        }
        if table.tokens.is_empty() {
            return Err(EmbeddingError::EmptyTable);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, vector: Vector) {
        let key = token.to_lowercase();
        match self.index.get(&key) {
            Some(&i) => {
                self.vectors[i] = vector;
                self.duplicates_overwritten += 1;
            }
            None => {
                self.index.insert(key.clone(), self.tokens.len());
                self.tokens.push(key);
                self.vectors.push(vector);
            }
        }
    }

    /// Writes the table in word2vec text format with a header line.
    /// Components use the shortest decimal form that parses back to the
    /// identical value, so save → load → save is byte-stable.
    pub fn save<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "{} {}", self.vocab_size(), self.dimension)?;
        for (token, vector) in self.tokens.iter().zip(self.vectors.iter()) {
            write!(writer, "{}", token)?;
            for x in vector {
                write!(writer, " {}", x)?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

/// Parses word2vec/GloVe text. The first line is taken as a
/// `vocab_size dimension` header when it holds exactly two integers;
/// otherwise it is data and the dimension comes from its arity.
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut dimension: Option<usize> = None;
    let mut entries: Vec<(String, Vector)> = Vec::new();
    let mut duplicates = 0usize;
    let mut index: HashMap<String, usize> = HashMap::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let first = match fields.next() {
            Some(f) => f,
            None => continue,
        };

        if line_no == 1 {
            if let Some(header) = parse_header(first, &line) {
                let (_vocab, dim) = header;
                if dim == 0 {
                    return Err(EmbeddingError::DimensionZero);
                }
                dimension = Some(dim);
                continue;
            }
        }

        let values: Result<Vector, _> = fields.map(|f| f.parse::<f64>()).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) => return Err(EmbeddingError::MalformedLine(line_no)),
        };
        if values.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::MalformedLine(line_no));
        }

        match dimension {
            None => {
                if values.is_empty() {
                    return Err(EmbeddingError::DimensionZero);
                }
                dimension = Some(values.len());
            }
            Some(dim) => {
                if values.len() != dim {
                    return Err(EmbeddingError::MalformedLine(line_no));
                }
            }
        }

        let token = first.to_lowercase();
        match index.get(&token) {
            Some(&i) => {
                entries[i].1 = values;
                duplicates += 1;
            }
            None => {
                index.insert(token.clone(), entries.len());
                entries.push((token, values));
            }
        }
    }

    if entries.is_empty() {
        return Err(EmbeddingError::EmptyTable);
    }
    if duplicates > 0 {
        log::warn!("embedding ingest overwrote {} duplicate token(s)", duplicates);
    }
    let mut table = EmbeddingTable::from_entries(dimension.unwrap(), entries)?;
    table.duplicates_overwritten = duplicates;
    Ok(table)
}

fn parse_header(first: &str, line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let a = fields.next()?;
    let b = fields.next()?;
    if fields.next().is_some() || a != first {
        return None;
    }
    Some((a.parse().ok()?, b.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn load(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
        load_embeddings(Cursor::new(text.to_string()))
    }

    #[test]
    fn loads_with_header() {
        let t = load("2 3\napple 1.0 0.0 0.0\ncourt 0.0 1.0 0.0").unwrap();
        assert_eq!(t.vocab_size(), 2);
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.lookup("apple").unwrap(), &vec![1.0, 0.0, 0.0]);
        assert_eq!(t.lookup("court").unwrap(), &vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn infers_dimension_without_header() {
        let t = load("apple 1.0 0.0\ncourt 0.0 1.0").unwrap();
        assert_eq!(t.dimension(), 2);
        assert_eq!(t.vocab_size(), 2);
    }

    #[test]
    fn arity_mismatch_is_malformed() {
        match load("apple 1.0 0.0\ncourt 0.0") {
            Err(EmbeddingError::MalformedLine(2)) => {}
            other => panic!("expected MalformedLine(2), got {:?}", other),
        }
    }

    #[test]
    fn unparseable_number_is_malformed() {
        match load("apple 1.0 zebra") {
            Err(EmbeddingError::MalformedLine(1)) => {}
            other => panic!("expected MalformedLine(1), got {:?}", other),
        }
    }

    #[test]
    fn empty_stream_is_empty_table() {
        assert!(matches!(load(""), Err(EmbeddingError::EmptyTable)));
        assert!(matches!(load("3 4\n"), Err(EmbeddingError::EmptyTable)));
    }

    #[test]
    fn zero_dimension_header_rejected() {
        assert!(matches!(load("2 0\n"), Err(EmbeddingError::DimensionZero)));
    }

    #[test]
    fn duplicates_overwrite_with_count() {
        let t = load("apple 1.0\nAPPLE 2.0").unwrap();
        assert_eq!(t.vocab_size(), 1);
        assert_eq!(t.duplicates_overwritten(), 1);
        assert_eq!(t.lookup("apple").unwrap(), &vec![2.0]);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let t = load("2 3\napple 1.0 0.0 0.0\ncourt 0.0 1.0 0.0").unwrap();
        assert_eq!(t.lookup("Apple").unwrap(), &vec![1.0, 0.0, 0.0]);
        assert!(t.lookup("zebra").is_none());
    }

    #[test]
    fn embed_phrase_averages_resolved_tokens() {
        let t = load("supreme 1.0 0.0\ncourt 0.0 1.0").unwrap();
        assert_eq!(t.embed_phrase("supreme court").unwrap(), vec![0.5, 0.5]);
        assert_eq!(t.embed_phrase("court").unwrap(), vec![0.0, 1.0]);
        assert!(t.embed_phrase("qqq zzz").is_err());
    }

    #[test]
    fn embed_phrase_skips_unknown_tokens() {
        let t = load("court 0.0 1.0").unwrap();
        assert_eq!(t.embed_phrase("zzz court").unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let text = "2 2\napple 0.25 -1.5\ncourt 0.3333333333333333 2e-7\n";
        let t = load(text).unwrap();
        let mut first = Vec::new();
        t.save(&mut first).unwrap();
        let t2 = load_embeddings(Cursor::new(first.clone())).unwrap();
        let mut second = Vec::new();
        t2.save(&mut second).unwrap();
        assert_eq!(first, second);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_vectors(
            entries in proptest::collection::vec(
                (proptest::collection::vec(-1e6f64..1e6, 4), 0usize..50),
                1..20,
            )
        ) {
            let entries: Vec<(String, Vector)> = entries
                .into_iter()
                .enumerate()
                .map(|(i, (v, salt))| (format!("tok{}_{}", i, salt), v))
                .collect();
            let table = EmbeddingTable::from_entries(4, entries).unwrap();
            let mut buf = Vec::new();
            table.save(&mut buf).unwrap();
            let reloaded = load_embeddings(Cursor::new(buf)).unwrap();
            prop_assert_eq!(reloaded.vocab_size(), table.vocab_size());
            for token in table.tokens() {
                prop_assert_eq!(reloaded.lookup(token).unwrap(), table.lookup(token).unwrap());
            }
        }

        #[test]
        fn lookup_matches_uppercase_lookup(token in "[a-z]{1,8}") {
            let entries = vec![(token.clone(), vec![1.0, 2.0])];
            let table = EmbeddingTable::from_entries(2, entries).unwrap();
            prop_assert_eq!(
                table.lookup(&token),
                table.lookup(&token.to_uppercase())
            );
        }

        #[test]
        fn single_token_phrase_equals_lookup(v in proptest::collection::vec(-1e3f64..1e3, 3)) {
            let table = EmbeddingTable::from_entries(3, vec![("word".to_string(), v)]).unwrap();
            prop_assert_eq!(
                &table.embed_phrase("word").unwrap(),
                table.lookup("word").unwrap()
            );
        }
    }
}
