use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{TokenizerModel, BASE_SIZE};

const DEAD: u32 = u32::MAX;
const NONE: usize = usize::MAX;

impl TokenizerModel {
    /// Applies merges lowest rank first, leftmost occurrence first, until no
    /// adjacent pair has a merge. Runs in O(n log n) using a linked list over
    /// the byte positions and a heap of candidate merges.
    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let n = bytes.len();
        let mut tokens: Vec<u32> = bytes.iter().map(|&b| u32::from(b)).collect();
        if self.merges().is_empty() || n < 2 {
            return tokens;
        }
        let mut next: Vec<usize> = (1..=n).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        prev[0] = NONE;

        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(rank) = self.rank((tokens[i], tokens[i + 1])) {
                heap.push(Reverse((rank, i)));
            }
        }

        while let Some(Reverse((rank, i))) = heap.pop() {
            let j = next[i];
            if tokens[i] == DEAD || j >= n {
                continue;
            }
            let (left, right) = self.merges()[rank as usize];
            if tokens[i] != left || tokens[j] != right {
                continue;
            }
            let merged = BASE_SIZE + rank;
            tokens[i] = merged;
            tokens[j] = DEAD;
            let k = next[j];
            next[i] = k;
            if k < n {
                prev[k] = i;
                if let Some(r) = self.rank((merged, tokens[k])) {
                    heap.push(Reverse((r, i)));
                }
            }
            let p = prev[i];
            if p != NONE {
                if let Some(r) = self.rank((tokens[p], merged)) {
                    heap.push(Reverse((r, p)));
                }
            }
        }
        tokens.retain(|&t| t != DEAD);
        tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        let model = TokenizerModel::from_merges(vec![(97, 98)], false).unwrap();
        assert!(model.encode("").is_empty());
    }

    #[test]
    fn single_merge() {
        let model = TokenizerModel::from_merges(vec![(97, 98)], false).unwrap();
        assert_eq!(model.encode("abab"), vec![256, 256]);
    }

    #[test]
    fn overlapping_run_merges_leftmost_first() {
        let model = TokenizerModel::from_merges(vec![(97, 97)], false).unwrap();
        assert_eq!(model.encode("aaa"), vec![256, 97]);
        assert_eq!(model.encode("aaaa"), vec![256, 256]);
    }

    #[test]
    fn lower_rank_wins_over_position() {
        // "abc": (b,c) has rank 0, (a,b) rank 1, so b+c merges first.
        let model = TokenizerModel::from_merges(vec![(98, 99), (97, 98)], false).unwrap();
        assert_eq!(model.encode("abc"), vec![97, 256]);
    }
}
