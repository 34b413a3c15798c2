use rayon::prelude::*;
use serde::Serialize;

use super::TokenizerModel;

const CHUNK: usize = 1024;

/// Token accounting over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TokenStats {
    pub documents: u64,
    pub total_tokens: u64,
    pub total_bytes: u64,
    /// `total_bytes / total_tokens`, or 0 for an empty corpus.
    pub bytes_per_token: f64,
}

impl TokenStats {
    fn finish(mut self) -> Self {
        self.bytes_per_token = if self.total_tokens > 0 {
            self.total_bytes as f64 / self.total_tokens as f64
        } else {
            0.0
        };
        self
    }
}

/// Encodes every document and sums the token counts.
pub fn corpus_stats<I, S>(model: &TokenizerModel, corpus: I) -> TokenStats
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Send + Sync,
{
    let mut stats = TokenStats::default();
    let mut chunk: Vec<S> = Vec::with_capacity(CHUNK);
    let flush = |chunk: &mut Vec<S>, stats: &mut TokenStats| {
        let (tokens, bytes) = chunk
            .par_iter()
            .map(|doc| {
                let doc = doc.as_ref();
                (model.encode(doc).len() as u64, doc.len() as u64)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        stats.documents += chunk.len() as u64;
        stats.total_tokens += tokens;
        stats.total_bytes += bytes;
        chunk.clear();
    };
    for doc in corpus {
        chunk.push(doc);
        if chunk.len() == CHUNK {
            flush(&mut chunk, &mut stats);
        }
    }
    flush(&mut chunk, &mut stats);
    stats.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus() {
        let empty: [&str; 0] = [];
        let stats = corpus_stats(&TokenizerModel::byte_level(), empty);
        assert_eq!(stats.documents, 0);
        assert_eq!(stats.total_tokens, 0);
        assert_eq!(stats.bytes_per_token, 0.0);
    }

    #[test]
    fn byte_level_ratio_is_one() {
        let stats = corpus_stats(&TokenizerModel::byte_level(), ["abc", "şu"]);
        assert_eq!(stats.documents, 2);
        assert_eq!(stats.total_tokens, 6);
        assert_eq!(stats.total_bytes, 6);
        assert_eq!(stats.bytes_per_token, 1.0);
    }
}
