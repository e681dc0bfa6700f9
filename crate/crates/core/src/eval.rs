//! Comparing predicted and ground-truth action-type sequences.
//!
//! Each action is one symbol: `T` (Tap), `L` (LongTap), `G` (Gesture) and,
//! in the extended alphabet, `G<n>` for an `n`-finger action.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground-truth sequence is empty")]
    EmptyGroundTruth,
    #[error("nothing to evaluate")]
    EmptyBatch,
    #[error("invalid action symbol {0:?}")]
    BadSymbol(String),
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Tap,
    LongTap,
    Gesture,
    MultiFinger(u8),
}

impl Symbol {
    /// Collapses multi-finger actions to a plain Gesture.
    pub fn base(self) -> Symbol {
        match self {
            Symbol::MultiFinger(_) => Symbol::Gesture,
            s => s,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Tap => f.write_str("T"),
            Symbol::LongTap => f.write_str("L"),
            Symbol::Gesture => f.write_str("G"),
            Symbol::MultiFinger(n) => write!(f, "G{n}"),
        }
    }
}

impl Serialize for Symbol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let seq: ActionTypeSequence = text.parse().map_err(serde::de::Error::custom)?;
        match seq.0.as_slice() {
            [one] => Ok(*one),
            _ => Err(serde::de::Error::custom(format!("expected one symbol, got {text:?}"))),
        }
    }
}

/// An ordered list of action symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionTypeSequence(pub Vec<Symbol>);

impl ActionTypeSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_base(&self) -> ActionTypeSequence {
        ActionTypeSequence(self.0.iter().map(|s| s.base()).collect())
    }
}

impl fmt::Display for ActionTypeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for ActionTypeSequence {
    type Err = EvalError;

    /// Parses strings like `TTLG2G`; `-` or an empty string is the empty
    /// sequence. Whitespace between symbols is ignored.
    fn from_str(s: &str) -> Result<Self, EvalError> {
        let s = s.trim();
        if s == "-" {
            return Ok(ActionTypeSequence::default());
        }
        let mut out = Vec::new();
        let mut chars = s.chars().filter(|c| !c.is_whitespace()).peekable();
        while let Some(c) = chars.next() {
            let symbol = match c {
                'T' => Symbol::Tap,
                'L' => Symbol::LongTap,
                'G' => {
                    let mut digits = String::new();
                    while let Some(d) = chars.next_if(char::is_ascii_digit) {
                        digits.push(d);
                    }
                    if digits.is_empty() {
                        Symbol::Gesture
                    } else {
                        match digits.parse::<u8>() {
                            Ok(n @ 1..=10) => Symbol::MultiFinger(n),
                            _ => return Err(EvalError::BadSymbol(format!("G{digits}"))),
                        }
                    }
                }
                other => return Err(EvalError::BadSymbol(other.to_string())),
            };
            out.push(symbol);
        }
        Ok(ActionTypeSequence(out))
    }
}

/// Unit-cost edit distance (insert, delete, substitute).
pub fn levenshtein<T: PartialEq>(pred: &[T], truth: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=truth.len()).collect();
    let mut row = vec![0; truth.len() + 1];
    for (i, p) in pred.iter().enumerate() {
        row[0] = i + 1;
        for (j, t) in truth.iter().enumerate() {
            let substitute = prev[j] + usize::from(p != t);
            row[j + 1] = substitute.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[truth.len()]
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(row[j]) };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// `|LCS(pred, truth)| / |truth|`.
pub fn lcs_ratio<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(lcs_len(pred, truth) as f64 / truth.len() as f64)
}

/// Bag-of-actions counts and scores for one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `None` when the symbol was never predicted.
    pub precision: Option<f64>,
    /// `None` when the symbol never occurs in the ground truth.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub per_type: BTreeMap<Symbol, TypeScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

/// Order-agnostic precision and recall per symbol, macro-averaged.
///
/// Precision is averaged over the symbols that were predicted at least once
/// and recall over the symbols present in the ground truth. With no term to
/// average the score is 0.
pub fn precision_recall(pred: &[Symbol], truth: &[Symbol]) -> PrecisionRecall {
    let mut counts: BTreeMap<Symbol, (usize, usize)> = BTreeMap::new();
    for s in pred {
        counts.entry(*s).or_default().0 += 1;
    }
    for s in truth {
        counts.entry(*s).or_default().1 += 1;
    }
    let per_type: BTreeMap<Symbol, TypeScore> = counts
        .into_iter()
        .map(|(symbol, (p, t))| {
            let tp = p.min(t);
            let score = TypeScore {
                true_positives: tp,
                false_positives: p - tp,
                false_negatives: t - tp,
                precision: (p > 0).then(|| tp as f64 / p as f64),
                recall: (t > 0).then(|| tp as f64 / t as f64),
            };
            (symbol, score)
        })
        .collect();
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    PrecisionRecall {
        macro_precision: mean(per_type.values().filter_map(|s| s.precision).collect()),
        macro_recall: mean(per_type.values().filter_map(|s| s.recall).collect()),
        per_type,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id: String,
    pub predicted: String,
    pub truth: String,
    pub levenshtein: usize,
    pub lcs_ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub per_type: BTreeMap<Symbol, TypeScore>,
}

impl MetricsReport {
    pub fn compute(
        id: impl Into<String>,
        pred: &ActionTypeSequence,
        truth: &ActionTypeSequence,
    ) -> Result<Self, EvalError> {
        let pr = precision_recall(&pred.0, &truth.0);
        Ok(MetricsReport {
            id: id.into(),
            predicted: pred.to_string(),
            truth: truth.to_string(),
            levenshtein: levenshtein(&pred.0, &truth.0),
            lcs_ratio: lcs_ratio(&pred.0, &truth.0)?,
            precision: pr.macro_precision,
            recall: pr.macro_recall,
            per_type: pr.per_type,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub pairs: Vec<MetricsReport>,
    pub mean_levenshtein: f64,
    pub mean_lcs_ratio: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Per-pair reports plus the arithmetic mean of every metric.
pub fn evaluate_batch<'a, I>(pairs: I) -> Result<BatchReport, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a ActionTypeSequence, &'a ActionTypeSequence)>,
{
    let reports = pairs
        .into_iter()
        .map(|(id, pred, truth)| MetricsReport::compute(id, pred, truth))
        .collect::<Result<Vec<_>, _>>()?;
    if reports.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(BatchReport {
        mean_levenshtein: mean(|r| r.levenshtein as f64),
        mean_lcs_ratio: mean(|r| r.lcs_ratio),
        mean_precision: mean(|r| r.precision),
        mean_recall: mean(|r| r.recall),
        pairs: reports,
    })
}

impl BatchReport {
    /// Aligned-column text table, one row per pair plus a mean row.
    pub fn to_table(&self) -> String {
        let id_width = self.pairs.iter().map(|r| r.id.len()).max().unwrap_or(0).max(8);
        let seq_width = self
            .pairs
            .iter()
            .flat_map(|r| [r.predicted.len(), r.truth.len()])
            .max()
            .unwrap_or(0)
            .max(9);
        let mut out = format!(
            "{:<id_width$}  {:<seq_width$}  {:<seq_width$}  {:>5}  {:>6}  {:>9}  {:>6}\n",
            "scenario", "predicted", "truth", "edits", "lcs", "precision", "recall"
        );
        for r in &self.pairs {
            out.push_str(&format!(
                "{:<id_width$}  {:<seq_width$}  {:<seq_width$}  {:>5}  {:>6.3}  {:>9.3}  {:>6.3}\n",
                r.id, r.predicted, r.truth, r.levenshtein, r.lcs_ratio, r.precision, r.recall
            ));
        }
        out.push_str(&format!(
            "{:<id_width$}  {:<seq_width$}  {:<seq_width$}  {:>5.2}  {:>6.3}  {:>9.3}  {:>6.3}\n",
            "mean", "", "", self.mean_levenshtein, self.mean_lcs_ratio, self.mean_precision, self.mean_recall
        ));
        out
    }
}

/// Parses a sequence file: one `<scenario id> <symbols>` pair per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_sequence_file(text: &str) -> Result<Vec<(String, ActionTypeSequence)>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, symbols) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let seq = symbols.parse().map_err(|e: EvalError| EvalError::BadLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((id.to_string(), seq));
    }
    Ok(out)
}

/// Inverse of [`parse_sequence_file`].
pub fn format_sequence_file<'a>(entries: impl IntoIterator<Item = (&'a str, &'a ActionTypeSequence)>) -> String {
    entries.into_iter().map(|(id, seq)| format!("{id} {seq}\n")).collect()
}
