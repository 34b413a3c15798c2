//! Model file: a `bpe-v1 <vocab_size>` header line followed by one
//! `<rank> <left_id> <right_id>` line per merge. A vocabulary one larger
//! than `256 + merges` marks a reserved document separator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{TokenizerError, TokenizerModel, BASE_SIZE, FORMAT_TAG};

impl TokenizerModel {
    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "{FORMAT_TAG} {}", self.vocab_size())?;
        for (rank, (left, right)) in self.merges().iter().enumerate() {
            writeln!(writer, "{rank} {left} {right}")?;
        }
        writer.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let io_err = |source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, TokenizerError> {
        let mut lines = reader.lines();
        let parse_err = |line: usize, message: String| TokenizerError::Parse { line, message };
        let header = match lines.next() {
            Some(line) => line.map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(parse_err(1, "missing header".to_string())),
        };
        let vocab_size: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            [tag, size] if *tag == FORMAT_TAG => size
                .parse()
                .map_err(|_| parse_err(1, format!("invalid vocabulary size {size:?}")))?,
            _ => return Err(parse_err(1, format!("expected `{FORMAT_TAG} <vocab_size>`, found {header:?}"))),
        };

        let mut merges = Vec::new();
        for (index, line) in lines.enumerate() {
            let number = index + 2;
            let line = line.map_err(|e| parse_err(number, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|f| f.parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(number, format!("{e} in {line:?}")))?;
            let [rank, left, right] = fields[..] else {
                return Err(parse_err(number, format!("expected `<rank> <left> <right>`, found {line:?}")));
            };
            if rank as usize != merges.len() {
                return Err(parse_err(number, format!("expected rank {}, found {rank}", merges.len())));
            }
            let own = BASE_SIZE + rank;
            if left >= own || right >= own {
                return Err(parse_err(
                    number,
                    format!("merge ({left}, {right}) references an id not smaller than its own id {own}"),
                ));
            }
            merges.push((left, right));
        }

        let plain = BASE_SIZE as usize + merges.len();
        let with_separator = match vocab_size {
            v if v == plain => false,
            v if v == plain + 1 => true,
            v => {
                return Err(parse_err(
                    1,
                    format!("header declares vocabulary {v} but {} merges give {plain}", merges.len()),
                ))
            }
        };
        TokenizerModel::from_merges(merges, with_separator).map_err(|e| parse_err(1, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let file = File::open(path).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(model: &TokenizerModel) -> TokenizerModel {
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        TokenizerModel::read_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn zero_merge_round_trip() {
        let model = TokenizerModel::byte_level();
        assert_eq!(round_trip(&model), model);
    }

    #[test]
    fn file_layout() {
        let model = TokenizerModel::from_merges(vec![(97, 98), (256, 99)], true).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bpe-v1 259\n0 97 98\n1 256 99\n");
        assert_eq!(round_trip(&model), model);
    }

    #[test]
    fn future_reference_rejected_with_line() {
        let err = TokenizerModel::read_from("bpe-v1 258\n0 97 98\n1 97 258\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TokenizerError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn bad_header() {
        let err = TokenizerModel::read_from("bpe-v2 256\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TokenizerError::Parse { line: 1, .. }));
        assert!(TokenizerModel::read_from("".as_bytes()).is_err());
    }

    #[test]
    fn garbage_line_reports_number() {
        let err = TokenizerModel::read_from("bpe-v1 257\n0 97 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TokenizerError::Parse { line: 2, .. }));
    }

    #[test]
    fn vocab_mismatch() {
        assert!(TokenizerModel::read_from("bpe-v1 300\n0 97 98\n".as_bytes()).is_err());
    }

    #[test]
    fn out_of_order_rank() {
        assert!(TokenizerModel::read_from("bpe-v1 257\n1 97 98\n".as_bytes()).is_err());
    }
}
