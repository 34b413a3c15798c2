//! Incremental BPE training.
//!
//! Pair counts are maintained across merges instead of being recounted:
//! every document is a linked list of tokens, each pair keeps the positions
//! where it was seen (validated lazily), and a max-heap keyed on
//! `(count, smallest pair)` picks the next merge.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::{TokenizerError, TokenizerModel, BASE_SIZE};

const DEAD: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

type Pair = (u32, u32);

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Reserve the highest id of the target vocabulary as the document
    /// separator, so one fewer merge is learned.
    pub reserve_separator: bool,
}

/// Learns `target_vocab - 256` merges from `corpus`.
pub fn train_bpe<I, S>(corpus: I, target_vocab: usize) -> Result<TokenizerModel, TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    train_bpe_with(corpus, target_vocab, TrainOptions::default())
}

pub fn train_bpe_with<I, S>(
    corpus: I,
    target_vocab: usize,
    options: TrainOptions,
) -> Result<TokenizerModel, TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let reserved = BASE_SIZE as usize + usize::from(options.reserve_separator);
    if target_vocab < reserved {
        return Err(TokenizerError::Config(format!(
            "target vocabulary {target_vocab} is smaller than the {reserved} reserved ids"
        )));
    }
    let wanted = target_vocab - reserved;

    // Identical documents are trained once with a weight.
    let mut weights: HashMap<Vec<u8>, i64> = HashMap::new();
    let mut documents = 0usize;
    for doc in corpus {
        documents += 1;
        let bytes = doc.as_ref().as_bytes();
        if bytes.len() >= 2 {
            *weights.entry(bytes.to_vec()).or_default() += 1;
        }
    }
    if wanted > 0 && documents == 0 {
        return Err(TokenizerError::Config(
            "cannot learn merges from an empty corpus".to_string(),
        ));
    }
    let mut docs: Vec<Doc> = weights.into_iter().map(|(bytes, w)| Doc::new(&bytes, w)).collect();
    // Deterministic document order keeps position lists reproducible.
    docs.sort_unstable_by(|a, b| a.tokens.cmp(&b.tokens));

    let mut state = PairState::default();
    for (d, doc) in docs.iter().enumerate() {
        for i in 0..doc.tokens.len().saturating_sub(1) {
            let pair = (doc.tokens[i], doc.tokens[i + 1]);
            state.add(pair, doc.weight, (d as u32, i as u32));
        }
    }
    let mut heap: BinaryHeap<(i64, Reverse<Pair>)> =
        state.counts.iter().map(|(&pair, &count)| (count, Reverse(pair))).collect();

    let mut merges: Vec<Pair> = Vec::with_capacity(wanted);
    while merges.len() < wanted {
        let Some(best) = pop_best(&mut heap, &state.counts) else {
            log::warn!(
                "no pair occurs at least twice; stopping after {} of {} merges",
                merges.len(),
                wanted
            );
            break;
        };
        let merged = BASE_SIZE + merges.len() as u32;
        merges.push(best);
        let changed = apply_merge(&mut docs, &mut state, best, merged);
        for pair in changed {
            let count = state.count(pair);
            if count > 0 {
                heap.push((count, Reverse(pair)));
            }
        }
    }
    TokenizerModel::from_merges(merges, options.reserve_separator)
}

fn pop_best(heap: &mut BinaryHeap<(i64, Reverse<Pair>)>, counts: &HashMap<Pair, i64>) -> Option<Pair> {
    while let Some((count, Reverse(pair))) = heap.pop() {
        if counts.get(&pair).copied().unwrap_or(0) != count {
            continue;
        }
        return (count >= 2).then_some(pair);
    }
    None
}

struct Doc {
    tokens: Vec<u32>,
    prev: Vec<u32>,
    next: Vec<u32>,
    weight: i64,
}

impl Doc {
    fn new(bytes: &[u8], weight: i64) -> Self {
        let n = bytes.len() as u32;
        Doc {
            tokens: bytes.iter().map(|&b| u32::from(b)).collect(),
            prev: (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect(),
            next: (0..n).map(|i| if i + 1 == n { NONE } else { i + 1 }).collect(),
            weight,
        }
    }
}

#[derive(Default)]
struct PairState {
    counts: HashMap<Pair, i64>,
    positions: HashMap<Pair, Vec<(u32, u32)>>,
}

impl PairState {
    fn count(&self, pair: Pair) -> i64 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    fn add(&mut self, pair: Pair, weight: i64, at: (u32, u32)) {
        *self.counts.entry(pair).or_default() += weight;
        self.positions.entry(pair).or_default().push(at);
    }

    fn remove(&mut self, pair: Pair, weight: i64) {
        if let Some(count) = self.counts.get_mut(&pair) {
            *count -= weight;
            if *count <= 0 {
                self.counts.remove(&pair);
                self.positions.remove(&pair);
            }
        }
    }
}

/// Replaces every live occurrence of `pair` by `merged`, left to right within
/// each document, and returns the pairs whose counts changed.
fn apply_merge(docs: &mut [Doc], state: &mut PairState, pair: Pair, merged: u32) -> HashSet<Pair> {
    let (left, right) = pair;
    let mut occurrences = state.positions.remove(&pair).unwrap_or_default();
    occurrences.sort_unstable();
    occurrences.dedup();
    let mut changed = HashSet::new();
    changed.insert(pair);

    for (d, i) in occurrences {
        let doc = &mut docs[d as usize];
        let i = i as usize;
        let j = doc.next[i];
        if doc.tokens[i] != left || j == NONE || doc.tokens[j as usize] != right {
            continue;
        }
        let j = j as usize;
        let w = doc.weight;
        *state.counts.entry(pair).or_default() -= w;

        let p = doc.prev[i];
        if p != NONE {
            let before = doc.tokens[p as usize];
            state.remove((before, left), w);
            state.add((before, merged), w, (d, p));
            changed.insert((before, left));
            changed.insert((before, merged));
        }
        let k = doc.next[j];
        if k != NONE {
            let after = doc.tokens[k as usize];
            state.remove((right, after), w);
            state.add((merged, after), w, (d, i as u32));
            changed.insert((right, after));
            changed.insert((merged, after));
        }

        doc.tokens[i] = merged;
        doc.tokens[j] = DEAD;
        doc.next[i] = k;
        if k != NONE {
            doc.prev[k as usize] = i as u32;
        }
    }
    if state.count(pair) <= 0 {
        state.counts.remove(&pair);
    }
    changed
}
