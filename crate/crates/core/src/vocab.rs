//! Frequent-word vocabulary and binary multi-label targets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::dataio::PromptRecord;
use crate::error::{Error, Result};

/// Function words excluded from the vocabulary. Together with the
/// three-character minimum this approximates keeping adjectives, nouns and verbs.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "and", "any", "are", "around",
    "because", "been", "before", "being", "below", "between", "both", "but", "can", "could",
    "did", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had",
    "has", "have", "having", "her", "here", "hers", "herself", "him", "himself", "his", "how",
    "into", "its", "itself", "just", "more", "most", "mine", "myself", "nor", "not", "now",
    "off", "once", "only", "other", "our", "ours", "ourselves", "out", "over", "own", "same",
    "she", "should", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "too", "under",
    "until", "upon", "very", "was", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "within", "without", "would", "you", "your", "yours",
    "yourself", "yourselves",
];

/// Lowercases and splits on every non-alphabetic character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Decides whether a token may enter the vocabulary. A part-of-speech tagger
/// can be plugged in here in place of the stopword list.
pub trait TokenFilter {
    fn keep(&self, token: &str) -> bool;
}

pub struct StopwordFilter {
    stopwords: HashSet<String>,
    min_len: usize,
}

impl StopwordFilter {
    pub fn new(stopwords: impl IntoIterator<Item = impl Into<String>>) -> Self {
        StopwordFilter {
            stopwords: stopwords.into_iter().map(Into::into).collect(),
            min_len: 3,
        }
    }
}

impl Default for StopwordFilter {
    fn default() -> Self {
        StopwordFilter::new(DEFAULT_STOPWORDS.iter().copied())
    }
}

impl TokenFilter for StopwordFilter {
    fn keep(&self, token: &str) -> bool {
        token.chars().count() >= self.min_len && !self.stopwords.contains(token)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (j, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), j).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.tokens.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(body.lines().map(str::to_string).collect())
    }
}

pub fn build_vocabulary(
    prompts: &[PromptRecord],
    m: usize,
    stopwords: &HashSet<String>,
) -> Result<Vocabulary> {
    build_vocabulary_with(prompts, m, &StopwordFilter::new(stopwords.iter().cloned()))
}

/// Keeps the `m` most frequent filtered tokens, ties broken lexicographically.
pub fn build_vocabulary_with(
    prompts: &[PromptRecord],
    m: usize,
    filter: &dyn TokenFilter,
) -> Result<Vocabulary> {
    if prompts.is_empty() {
        return Err(Error::Invalid("vocabulary needs at least one prompt".into()));
    }
    if m == 0 {
        return Err(Error::Invalid("vocabulary size must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for p in prompts {
        for tok in tokenize(&p.text) {
            if filter.keep(&tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    if counts.len() < m {
        return Err(Error::Invalid(format!(
            "requested {m} vocabulary tokens but only {} distinct eligible tokens are available",
            counts.len()
        )));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(m);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
}

pub fn make_label_vector(prompt: &PromptRecord, vocab: &Vocabulary) -> Vec<u8> {
    let mut out = vec![0u8; vocab.len()];
    for tok in tokenize(&prompt.text) {
        if let Some(j) = vocab.position(&tok) {
            out[j] = 1;
        }
    }
    out
}

/// Bit-packed `n x m` binary label matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        LabelMatrix {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>], cols: usize) -> Result<Self> {
        let mut out = LabelMatrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "label row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            for (j, &v) in r.iter().enumerate() {
                match v {
                    0 => {}
                    1 => out.set(i, j, true),
                    other => {
                        return Err(Error::Data(format!(
                            "label ({i}, {j}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words_per_row + j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        let w = &mut self.bits[i * self.words_per_row + j / 64];
        if on {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        (0..self.cols).map(|j| self.get(i, j) as u8).collect()
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| if self.get(i, j) { 1.0 } else { 0.0 }).collect()
    }

    pub fn column_sum(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, j)).count()
    }

    /// Rows at the given positions, in order.
    pub fn select_rows(&self, positions: &[usize]) -> LabelMatrix {
        let mut out = LabelMatrix::zeros(positions.len(), self.cols);
        for (dst, &src) in positions.iter().enumerate() {
            out.bits[dst * self.words_per_row..(dst + 1) * self.words_per_row].copy_from_slice(
                &self.bits[src * self.words_per_row..(src + 1) * self.words_per_row],
            );
        }
        out
    }
}

pub fn make_label_matrix(prompts: &[PromptRecord], vocab: &Vocabulary) -> LabelMatrix {
    let mut out = LabelMatrix::zeros(prompts.len(), vocab.len());
    for (i, p) in prompts.iter().enumerate() {
        let present: BTreeSet<usize> = tokenize(&p.text)
            .iter()
            .filter_map(|t| vocab.position(t))
            .collect();
        for j in present {
            out.set(i, j, true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> PromptRecord {
        PromptRecord::new(0, text)
    }

    #[test]
    fn frequency_then_lexicographic() {
        let prompts = vec![p("red cat"), p("red dog")];
        let v = build_vocabulary(&prompts, 2, &HashSet::new()).unwrap();
        assert_eq!(v.tokens(), &["red".to_string(), "cat".to_string()]);
    }

    #[test]
    fn too_few_distinct_tokens() {
        let prompts = vec![p("castle"), p("castle")];
        let err = build_vocabulary(&prompts, 2, &HashSet::new()).unwrap_err();
        assert!(err.to_string().contains("only 1"), "{err}");
    }

    #[test]
    fn stopwords_and_short_tokens_skipped() {
        let prompts = vec![p("the ox and the painting of a tower, the tower")];
        let v = build_vocabulary_with(&prompts, 2, &StopwordFilter::default()).unwrap();
        assert_eq!(v.tokens(), &["tower".to_string(), "painting".to_string()]);
    }

    #[test]
    fn label_vector_examples() {
        let v = Vocabulary::from_tokens(vec!["dog".into(), "cat".into(), "car".into()]).unwrap();
        assert_eq!(make_label_vector(&p("a dog and a cat"), &v), vec![1, 1, 0]);
        assert_eq!(make_label_vector(&p("!!! 42"), &v), vec![0, 0, 0]);
        assert_eq!(make_label_vector(&p("Car, cat; DOG"), &v), vec![1, 1, 1]);
        // token match, not substring match
        assert_eq!(make_label_vector(&p("catalog"), &v), vec![0, 0, 0]);
    }

    #[test]
    fn label_matrix_composes_rows() {
        let v = Vocabulary::from_tokens(vec!["dog".into(), "cat".into(), "car".into()]).unwrap();
        let prompts = vec![p("dog car"), p("cat")];
        let lm = make_label_matrix(&prompts, &v);
        assert_eq!((lm.rows(), lm.cols()), (2, 3));
        for (i, pr) in prompts.iter().enumerate() {
            assert_eq!(lm.row(i), make_label_vector(pr, &v));
        }
        let empty = make_label_matrix(&[], &v);
        assert_eq!((empty.rows(), empty.cols()), (0, 3));
    }

    #[test]
    fn wide_label_rows_pack_across_words() {
        let mut lm = LabelMatrix::zeros(2, 130);
        lm.set(1, 129, true);
        lm.set(1, 64, true);
        assert!(lm.get(1, 129) && lm.get(1, 64) && !lm.get(0, 129));
        assert_eq!(lm.select_rows(&[1]).row(0), lm.row(1));
    }
}
