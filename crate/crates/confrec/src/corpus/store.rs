//! Versioned on-disk format for a prepared dataset: a magic header line
//! followed by one JSON document. All maps are ordered, so identical inputs
//! produce byte-identical files.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, SplitDataset};
use crate::error::{Error, Result};

pub const PREPARED_MAGIC: &str = "#confrec-prepared v1";

/// Everything later pipeline stages need: the encoded corpus, the
/// chronological split with labeled evaluation sets, and the preparation
/// parameters for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prepared {
    pub m: usize,
    pub p: usize,
    pub h_max: usize,
    pub min_freq: u32,
    pub seed: u64,
    pub skipped_eval_positives: usize,
    pub corpus: Corpus,
    pub split: SplitDataset,
}

pub fn save_prepared(path: &Path, prepared: &Prepared) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{PREPARED_MAGIC}")?;
    serde_json::to_writer(&mut w, prepared)
        .map_err(|e| Error::Data(format!("serializing prepared dataset: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_prepared(path: &Path) -> Result<Prepared> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let Some((header, body)) = text.split_once('\n') else {
        return Err(Error::Data(format!(
            "{}: not a prepared dataset (missing header)",
            path.display()
        )));
    };
    if header.trim_end() != PREPARED_MAGIC {
        return Err(Error::Data(format!(
            "{}: unsupported prepared-dataset header {:?} (expected {:?})",
            path.display(),
            header,
            PREPARED_MAGIC
        )));
    }
    serde_json::from_str(body)
        .map_err(|e| Error::Data(format!("{}: corrupt prepared dataset: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, chronological_split, RawEvent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn tiny_prepared() -> Prepared {
        let raw: Vec<RawEvent> = (0..14)
            .map(|i| RawEvent {
                user_id: format!("u{}", i % 3),
                news_id: format!("n{i}"),
                timestamp: i,
                title: vec!["word".into(), format!("w{i}")],
                entities: vec![format!("e{}", i % 4)],
                entity_types: vec!["person".into()],
            })
            .collect();
        let corpus = build_corpus(&raw, 1, &BTreeSet::new(), 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let split = chronological_split(&corpus.events, 0.2, &mut rng).unwrap();
        Prepared {
            m: 4,
            p: 2,
            h_max: 50,
            min_freq: 1,
            seed: 11,
            skipped_eval_positives: 0,
            corpus,
            split,
        }
    }

    #[test]
    fn round_trip_and_byte_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
        let prepared = tiny_prepared();
        save_prepared(&p1, &prepared).unwrap();
        save_prepared(&p2, &prepared).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let loaded = load_prepared(&p1).unwrap();
        assert_eq!(loaded.corpus.events.len(), prepared.corpus.events.len());
        assert_eq!(loaded.corpus.vocab, prepared.corpus.vocab);
        assert_eq!(loaded.split.graph_part.len(), prepared.split.graph_part.len());
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, "#something-else v9\n{}").unwrap();
        let err = load_prepared(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported"));
    }
}
