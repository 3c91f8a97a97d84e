use crate::error::{Error, Result};

/// Unit-cost Levenshtein distance between two token-string sequences,
/// compared case-insensitively.
pub fn edit_distance<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> usize {
    let r: Vec<String> = reference.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let h: Vec<String> = hypothesis.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut prev: Vec<usize> = (0..=h.len()).collect();
    let mut cur = vec![0; h.len() + 1];
    for i in 1..=r.len() {
        cur[0] = i;
        for j in 1..=h.len() {
            let sub = prev[j - 1] + usize::from(r[i - 1] != h[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[h.len()]
}

/// Word error rate `(S + D + I) / |reference|`. May exceed 1.
pub fn wer<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Config("WER reference is empty".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Inverse real-time factor: audio duration over decoding time.
pub fn rtfx(total_duration_s: f64, decode_time_s: f64) -> Result<f64> {
    if !(total_duration_s > 0.0) || !(decode_time_s > 0.0) {
        return Err(Error::Config(format!(
            "rtfx needs positive inputs, got duration {total_duration_s} and time {decode_time_s}"
        )));
    }
    Ok(total_duration_s / decode_time_s)
}

/// Corpus WER accumulator: total errors over total reference tokens.
///
/// This is the error-weighted average of per-utterance WERs, not their mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusWer {
    pub errors: usize,
    pub reference_tokens: usize,
}

impl CorpusWer {
    pub fn add<A: AsRef<str>, B: AsRef<str>>(&mut self, reference: &[A], hypothesis: &[B]) -> Result<()> {
        if reference.is_empty() {
            return Err(Error::Config("WER reference is empty".into()));
        }
        self.errors += edit_distance(reference, hypothesis);
        self.reference_tokens += reference.len();
        Ok(())
    }

    pub fn merge(&mut self, other: CorpusWer) {
        self.errors += other.errors;
        self.reference_tokens += other.reference_tokens;
    }

    pub fn wer(&self) -> f64 {
        if self.reference_tokens == 0 {
            0.0
        } else {
            self.errors as f64 / self.reference_tokens as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all alignments, for short inputs only.
    fn brute_force(r: &[u8], h: &[u8]) -> usize {
        match (r.split_first(), h.split_first()) {
            (None, _) => h.len(),
            (_, None) => r.len(),
            (Some((a, rr)), Some((b, hh))) => {
                let sub = brute_force(rr, hh) + usize::from(a != b);
                sub.min(brute_force(rr, h) + 1).min(brute_force(r, hh) + 1)
            }
        }
    }

    fn strs(v: &[u8]) -> Vec<String> {
        v.iter().map(|c| format!("t{c}")).collect()
    }

    #[test]
    fn examples() {
        assert!((wer(&["a", "b", "c"], &["a", "x", "c"]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((wer(&["the", "cat", "sat"], &["the", "cat"]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer(&["a", "b"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(wer(&["a"], &["b", "c", "d"]).unwrap(), 3.0);
        assert_eq!(wer(&["The"], &["the"]).unwrap(), 0.0);
        assert!(wer::<&str, &str>(&[], &["a"]).is_err());
    }

    #[test]
    fn rtfx_examples() {
        assert_eq!(rtfx(10.0, 2.0).unwrap(), 5.0);
        assert_eq!(rtfx(3.0, 3.0).unwrap(), 1.0);
        // 5.43 h of audio decoded in about 25.4 min.
        assert!((rtfx(5.43 * 3600.0, 5.43 * 3600.0 / 12.83).unwrap() - 12.83).abs() < 1e-9);
        assert!(rtfx(0.0, 1.0).is_err());
        assert!(rtfx(1.0, -1.0).is_err());
    }

    #[test]
    fn corpus_wer_is_error_weighted() {
        let mut c = CorpusWer::default();
        c.add(&["a"], &["b"]).unwrap();
        c.add(&["a", "b", "c", "d"], &["a", "b", "c", "d"]).unwrap();
        assert!((c.wer() - 0.2).abs() < 1e-15);
        let mean_of_rates = (1.0 + 0.0) / 2.0;
        assert!((c.wer() - mean_of_rates).abs() > 0.1);
    }

    proptest! {
        #[test]
        fn matches_brute_force(r in proptest::collection::vec(0u8..3, 0..6), h in proptest::collection::vec(0u8..3, 0..6)) {
            prop_assert_eq!(edit_distance(&strs(&r), &strs(&h)), brute_force(&r, &h));
        }

        #[test]
        fn identity_and_common_suffix(r in proptest::collection::vec(0u8..4, 1..8), h in proptest::collection::vec(0u8..4, 0..8), s in proptest::collection::vec(0u8..4, 0..5)) {
            prop_assert_eq!(wer(&strs(&r), &strs(&r)).unwrap(), 0.0);
            let mut rs = r.clone();
            rs.extend(&s);
            let mut hs = h.clone();
            hs.extend(&s);
            prop_assert_eq!(edit_distance(&strs(&rs), &strs(&hs)), edit_distance(&strs(&r), &strs(&h)));
        }
    }
}
