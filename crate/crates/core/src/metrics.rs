//! Accuracy, confusion matrices, L1 evaluation and word error rate.

use crate::models::{Model, ModelError};
use crate::nn::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {0} out of range")]
    OutOfRange(usize),
    #[error("reference has no words but hypothesis does")]
    EmptyReference,
    #[error("line {line}: expected `reference<TAB>hypothesis`")]
    MalformedLine { line: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        Self {
            n,
            counts: rows.concat(),
        }
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], n: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = vec![0u64; n * n];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n || t >= n {
            return Err(MetricsError::OutOfRange(p.max(t)));
        }
        counts[t * n + p] += 1;
    }
    Ok(ConfusionMatrix { n, counts })
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, MetricsError> {
    let n = preds.iter().chain(labels).max().map_or(0, |&m| m + 1);
    Ok(confusion(preds, labels, n)?.accuracy())
}

/// Lowercases, deletes `[...]` spans, deletes punctuation other than
/// apostrophes, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    let mut depth = 0usize;
    for ch in text.chars() {
        match ch {
            '[' => depth += 1,
            ']' if depth > 0 => {
                depth -= 1;
                // keep words on either side of the span apart
                cleaned.push(' ');
            }
            _ if depth > 0 => {}
            '\'' | '’' => cleaned.push('\''),
            c if c.is_alphanumeric() || c.is_whitespace() => cleaned.extend(c.to_lowercase()),
            _ => {}
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(S + D + I) / N` over the tokenized transcripts. Both empty gives 0; an
/// empty reference with a non-empty hypothesis is an error.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    let (r, h) = (tokenize(reference), tokenize(hypothesis));
    if r.is_empty() {
        return if h.is_empty() { Ok(0.0) } else { Err(MetricsError::EmptyReference) };
    }
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Corpus WER of `reference<TAB>hypothesis` lines: total edits over total
/// reference words. Blank lines are skipped.
pub fn wer_tsv(text: &str) -> Result<f64, MetricsError> {
    let (mut edits, mut words, mut lines) = (0usize, 0usize, 0usize);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (r, h) = line.split_once('\t').ok_or(MetricsError::MalformedLine { line: i + 1 })?;
        let (r, h) = (tokenize(r), tokenize(h));
        if r.is_empty() && !h.is_empty() {
            return Err(MetricsError::EmptyReference);
        }
        edits += edit_distance(&r, &h);
        words += r.len();
        lines += 1;
    }
    if lines == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(if words == 0 { 0.0 } else { edits as f64 / words as f64 })
}

/// Mean over pairs of the mean absolute difference.
pub fn mean_l1<'a>(pairs: impl IntoIterator<Item = (&'a Tensor, &'a Tensor)>) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, t) in pairs {
        if p.shape() != t.shape() {
            return Err(MetricsError::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), t.shape())));
        }
        total += p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / p.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(total / n as f64)
}

/// Mean L1 of the translator's eval-mode output against each target.
pub fn eval_l1(model: &Model, pairs: &[(Tensor, Tensor)]) -> Result<f64, MetricsError> {
    let preds = pairs
        .iter()
        .map(|(x, _)| crate::models::translate_spectrogram(model, x))
        .collect::<Result<Vec<_>, _>>()?;
    mean_l1(preds.iter().zip(pairs.iter().map(|(_, y)| y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_basics() {
        let m = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.accuracy(), 0.0);
        assert!(matches!(confusion(&[0, 1], &[1], 2), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[], &[], 2), Err(MetricsError::Empty)));
        let m = ConfusionMatrix::from_counts(&[vec![98, 2], vec![2, 98]]);
        assert!((m.accuracy() - 0.98).abs() < 1e-12);
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize("don't [noise] stop"), vec!["don't", "stop"]);
        assert_eq!(tokenize("a[x]b"), vec!["a", "b"]);
        assert!(tokenize("  [only noise]  ").is_empty());
    }

    #[test]
    fn wer_edges() {
        assert_eq!(wer("", "").unwrap(), 0.0);
        assert!(matches!(wer("[noise]", "hi"), Err(MetricsError::EmptyReference)));
        assert_eq!(wer("a b c d", "").unwrap(), 1.0);
    }

    #[test]
    fn tsv_batch() {
        assert_eq!(wer_tsv("a b\ta b\n\nc\tc\n").unwrap(), 0.0);
        assert!((wer_tsv("a b\ta c\nc d\tc d\n").unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(wer_tsv("no tab"), Err(MetricsError::MalformedLine { line: 1 })));
    }

    #[test]
    fn l1_cases() {
        let a = Tensor::full(&[2, 2], 0.5f32);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(mean_l1([(&a, &z)]).unwrap(), 0.5);
        assert_eq!(mean_l1([(&a, &a)]).unwrap(), 0.0);
        assert!(mean_l1(std::iter::empty()).is_err());
    }
}
