//! Next-token scorer interface and deterministic mock scorers.

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tokenizer::TokenId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScorerError {
    #[error("scorer returned {found} log-probabilities for a vocabulary of {expected}")]
    Length { expected: usize, found: usize },
    #[error("token {0} is outside the scorer vocabulary")]
    OutOfVocabulary(TokenId),
    #[error("n-gram corpus is empty")]
    EmptyCorpus,
    #[error("scorer failed: {0}")]
    Failed(String),
}

/// Language-model interface: log-probabilities of the next token given the
/// context, normalized over the whole vocabulary.
///
/// Implementations must be deterministic for a fixed context. `-inf` marks
/// tokens the model considers impossible.
pub trait NextTokenScorer<S: Scalar> {
    fn vocab_size(&self) -> usize;

    fn log_probs(&self, context: &[TokenId]) -> Result<Vec<S>, ScorerError>;

    /// Log-probabilities of `ids` only. The default slices the full vector.
    fn log_probs_for(&self, context: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        let all = self.log_probs(context)?;
        if all.len() != self.vocab_size() {
            return Err(ScorerError::Length {
                expected: self.vocab_size(),
                found: all.len(),
            });
        }
        ids.iter()
            .map(|&i| {
                all.get(i as usize)
                    .copied()
                    .ok_or(ScorerError::OutOfVocabulary(i))
            })
            .collect()
    }

    /// Whether concurrent calls from several decode sessions are safe.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl<S: Scalar, T: NextTokenScorer<S> + ?Sized> NextTokenScorer<S> for Box<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn log_probs(&self, context: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        (**self).log_probs(context)
    }
    fn log_probs_for(&self, context: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        (**self).log_probs_for(context, ids)
    }
    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

/// Serializes every call to a scorer that is not safe to call concurrently.
pub struct Serialized<T>(Mutex<T>);

impl<T> Serialized<T> {
    pub fn new(inner: T) -> Self {
        Self(Mutex::new(inner))
    }
}

impl<S: Scalar, T: NextTokenScorer<S>> NextTokenScorer<S> for Serialized<T> {
    fn vocab_size(&self) -> usize {
        self.0.lock().unwrap().vocab_size()
    }
    fn log_probs(&self, context: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        self.0.lock().unwrap().log_probs(context)
    }
    fn log_probs_for(&self, context: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        self.0.lock().unwrap().log_probs_for(context, ids)
    }
}

fn check_ids(ids: &[TokenId], vocab: usize) -> Result<(), ScorerError> {
    match ids.iter().find(|&&i| i as usize >= vocab) {
        Some(&i) => Err(ScorerError::OutOfVocabulary(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab: usize,
}

impl UniformScorer {
    pub fn new(vocab: usize) -> Self {
        Self { vocab }
    }
}

impl<S: Scalar> NextTokenScorer<S> for UniformScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn log_probs(&self, _: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        Ok(vec![-S::of_usize(self.vocab).ln(); self.vocab])
    }
    fn log_probs_for(&self, _: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        check_ids(ids, self.vocab)?;
        Ok(vec![-S::of_usize(self.vocab).ln(); ids.len()])
    }
}

pub const PLANTED_MASS: f64 = 0.99;

/// Puts most of the mass on the next token of a gold sequence.
///
/// The position inside the gold sequence is the longest gold prefix that
/// ends the context; with no match the first gold token is next. After the
/// whole sequence, the distribution is uniform.
#[derive(Debug, Clone)]
pub struct PlantedScorer {
    gold: Vec<TokenId>,
    vocab: usize,
}

impl PlantedScorer {
    pub fn new(gold: Vec<TokenId>, vocab: usize) -> Self {
        assert!(vocab >= 2, "planted scorer needs at least two tokens");
        Self { gold, vocab }
    }

    pub fn gold(&self) -> &[TokenId] {
        &self.gold
    }

    /// Gold token expected after `context`, if any.
    pub fn next_gold(&self, context: &[TokenId]) -> Option<TokenId> {
        if self.gold.is_empty() || context.ends_with(&self.gold) {
            return None;
        }
        let longest = (0..self.gold.len())
            .rev()
            .find(|&j| j <= context.len() && context.ends_with(&self.gold[..j]))?;
        Some(self.gold[longest])
    }

    fn lp<S: Scalar>(&self, id: TokenId, gold: Option<TokenId>) -> S {
        match gold {
            None => -S::of_usize(self.vocab).ln(),
            Some(g) if g == id => S::of(PLANTED_MASS).ln(),
            Some(_) => (S::of(1.0 - PLANTED_MASS) / S::of_usize(self.vocab - 1)).ln(),
        }
    }
}

impl<S: Scalar> NextTokenScorer<S> for PlantedScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn log_probs(&self, context: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        let g = self.next_gold(context);
        Ok((0..self.vocab as TokenId).map(|i| self.lp(i, g)).collect())
    }
    fn log_probs_for(&self, context: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        check_ids(ids, self.vocab)?;
        let g = self.next_gold(context);
        Ok(ids.iter().map(|&i| self.lp(i, g)).collect())
    }
}

/// Add-one smoothed bigram model. An empty context conditions on a
/// sequence-start state.
#[derive(Debug, Clone)]
pub struct BigramScorer {
    vocab: usize,
    counts: HashMap<Option<TokenId>, (u64, HashMap<TokenId, u64>)>,
}

impl BigramScorer {
    pub fn train<'a>(
        corpus: impl IntoIterator<Item = &'a [TokenId]>,
        vocab: usize,
    ) -> Result<Self, ScorerError> {
        let mut counts: HashMap<Option<TokenId>, (u64, HashMap<TokenId, u64>)> = HashMap::new();
        let mut any = false;
        for seq in corpus {
            check_ids(seq, vocab)?;
            let mut prev = None;
            for &t in seq {
                let (total, next) = counts.entry(prev).or_default();
                *total += 1;
                *next.entry(t).or_default() += 1;
                prev = Some(t);
                any = true;
            }
        }
        if !any {
            return Err(ScorerError::EmptyCorpus);
        }
        Ok(Self { vocab, counts })
    }

    fn lp<S: Scalar>(&self, prev: Option<TokenId>, id: TokenId) -> S {
        let (total, c) = match self.counts.get(&prev) {
            Some((total, next)) => (*total, next.get(&id).copied().unwrap_or(0)),
            None => (0, 0),
        };
        (S::of((c + 1) as f64) / S::of((total + self.vocab as u64) as f64)).ln()
    }
}

impl<S: Scalar> NextTokenScorer<S> for BigramScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn log_probs(&self, context: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        let prev = context.last().copied();
        Ok((0..self.vocab as TokenId)
            .map(|i| self.lp(prev, i))
            .collect())
    }
    fn log_probs_for(&self, context: &[TokenId], ids: &[TokenId]) -> Result<Vec<S>, ScorerError> {
        check_ids(ids, self.vocab)?;
        let prev = context.last().copied();
        Ok(ids.iter().map(|&i| self.lp(prev, i)).collect())
    }
}

#[derive(Debug, Clone)]
pub enum MockKind {
    Uniform,
    /// Gold token sequence to plant.
    Planted(Vec<TokenId>),
    /// Training corpus of token sequences.
    Ngram(Vec<Vec<TokenId>>),
}

pub fn make_mock_scorer<S: Scalar>(
    kind: MockKind,
    vocab: usize,
) -> Result<Box<dyn NextTokenScorer<S> + Send + Sync>, ScorerError> {
    Ok(match kind {
        MockKind::Uniform => Box::new(UniformScorer::new(vocab)),
        MockKind::Planted(gold) => {
            check_ids(&gold, vocab)?;
            Box::new(PlantedScorer::new(gold, vocab))
        }
        MockKind::Ngram(corpus) => Box::new(BigramScorer::train(
            corpus.iter().map(Vec::as_slice),
            vocab,
        )?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_minus_log_vocab() {
        let s = UniformScorer::new(40);
        let lp: Vec<f64> = s.log_probs(&[1, 2]).unwrap();
        assert!(lp.iter().all(|&x| (x + 40f64.ln()).abs() < 1e-15));
        assert_eq!(
            NextTokenScorer::<f64>::log_probs_for(&s, &[], &[40]).unwrap_err(),
            ScorerError::OutOfVocabulary(40)
        );
    }

    #[test]
    fn planted_follows_gold() {
        let s = PlantedScorer::new(vec![5, 1, 2, 5, 3], 8);
        assert_eq!(s.next_gold(&[]), Some(5));
        assert_eq!(s.next_gold(&[7, 7, 5]), Some(1));
        assert_eq!(s.next_gold(&[5, 1, 2, 5]), Some(3));
        assert_eq!(s.next_gold(&[5, 1, 2, 5, 3]), None);
        let lp: Vec<f64> = s.log_probs(&[5, 1]).unwrap();
        let argmax = (0..8)
            .max_by(|&a, &b| lp[a].partial_cmp(&lp[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 2);
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bigram_distributions_sum_to_one() {
        let corpus = [vec![1, 2, 3, 2, 3], vec![2, 3, 1]];
        let s = BigramScorer::train(corpus.iter().map(Vec::as_slice), 6).unwrap();
        for ctx in [&[][..], &[1], &[2], &[3], &[5]] {
            let lp: Vec<f64> = s.log_probs(ctx).unwrap();
            let total: f64 = lp.iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // After 2: counts {3: 3}, total 3, vocab 6.
        let lp: Vec<f64> = s.log_probs(&[2]).unwrap();
        assert!((lp[3] - (4.0f64 / 9.0).ln()).abs() < 1e-15);
        assert!((lp[0] - (1.0f64 / 9.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn bigram_rejects_empty_corpus() {
        let empty: [&[TokenId]; 1] = [&[]];
        assert_eq!(
            BigramScorer::train(empty, 4).unwrap_err(),
            ScorerError::EmptyCorpus
        );
        assert!(make_mock_scorer::<f64>(MockKind::Ngram(vec![]), 4).is_err());
    }

    #[test]
    fn subset_agrees_with_full_vector() {
        let corpus = [vec![0, 1, 2, 3]];
        let scorers: Vec<Box<dyn NextTokenScorer<f64> + Send + Sync>> = vec![
            make_mock_scorer(MockKind::Uniform, 5).unwrap(),
            make_mock_scorer(MockKind::Planted(vec![1, 2]), 5).unwrap(),
            make_mock_scorer(MockKind::Ngram(corpus.to_vec()), 5).unwrap(),
        ];
        for s in &scorers {
            let full = s.log_probs(&[1]).unwrap();
            let sub = s.log_probs_for(&[1], &[4, 0, 2]).unwrap();
            assert_eq!(sub, vec![full[4], full[0], full[2]]);
        }
    }

    struct Short;
    impl NextTokenScorer<f64> for Short {
        fn vocab_size(&self) -> usize {
            4
        }
        fn log_probs(&self, _: &[TokenId]) -> Result<Vec<f64>, ScorerError> {
            Ok(vec![0.0; 3])
        }
        fn supports_concurrency(&self) -> bool {
            false
        }
    }

    #[test]
    fn wrong_length_is_a_contract_error() {
        assert_eq!(
            Short.log_probs_for(&[], &[0]).unwrap_err(),
            ScorerError::Length {
                expected: 4,
                found: 3
            }
        );
        let wrapped = Serialized::new(Short);
        assert!(wrapped.supports_concurrency());
        assert!(wrapped.log_probs_for(&[], &[0]).is_err());
    }
}
