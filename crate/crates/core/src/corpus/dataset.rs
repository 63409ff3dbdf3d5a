use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sub_seed, CorpusError, LexiconEntry};
use crate::codec::{Sample, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_entries: usize,
    pub test_entries: usize,
}

/// Train/test samples for every orthography of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub counts: BTreeMap<String, SplitCounts>,
    pub seed: u64,
}

impl DatasetBundle {
    /// Test samples grouped by `(orthography, task)` in sorted order.
    pub fn test_pairs(&self) -> BTreeMap<(String, Task), Vec<Sample>> {
        let mut out: BTreeMap<(String, Task), Vec<Sample>> = BTreeMap::new();
        for s in &self.test {
            out.entry((s.orthography.clone(), s.task)).or_default().push(s.clone());
        }
        out
    }
}

fn samples_for(code: &str, entry: &LexiconEntry) -> Result<[Sample; 2], CorpusError> {
    Ok([
        Sample::new(code, Task::Write, &entry.pron, &entry.spelled)?,
        Sample::new(code, Task::Read, &entry.spelled, &entry.pron)?,
    ])
}

/// Samples `n_train + n_test` entries per orthography without replacement
/// and turns each into a write and a read sample. The split is by entry.
pub fn build_dataset(
    lexicons: &BTreeMap<String, Vec<LexiconEntry>>,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<DatasetBundle, CorpusError> {
    let needed = n_train + n_test;
    let mut train = Vec::with_capacity(lexicons.len() * n_train * 2);
    let mut test = Vec::with_capacity(lexicons.len() * n_test * 2);
    let mut counts = BTreeMap::new();
    for (code, entries) in lexicons {
        if entries.len() < needed {
            return Err(CorpusError::Insufficient {
                code: code.clone(),
                available: entries.len(),
                needed,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, code, "split"));
        let picked = index::sample(&mut rng, entries.len(), needed);
        for (i, idx) in picked.iter().enumerate() {
            let pair = samples_for(code, &entries[idx])?;
            if i < n_test {
                test.extend(pair);
            } else {
                train.extend(pair);
            }
        }
        counts.insert(
            code.clone(),
            SplitCounts {
                train_entries: n_train,
                test_entries: n_test,
            },
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "", "shuffle"));
    train.shuffle(&mut rng);
    Ok(DatasetBundle {
        train,
        test,
        counts,
        seed,
    })
}

/// One JSON object per line with `orthography`, `task`, `input`, `output`.
pub fn to_jsonl(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(text: &str) -> Result<Vec<Sample>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let s: Sample = serde_json::from_str(l).map_err(|e| CorpusError::Jsonl {
                line: i + 1,
                reason: e.to_string(),
            })?;
            s.validate()?;
            Ok(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use proptest::prelude::*;

    fn lexicon(n: usize, tag: &str) -> Vec<LexiconEntry> {
        (0..n)
            .map(|i| LexiconEntry::new(format!("{tag}w{i}"), format!("{tag}p{i}")))
            .collect()
    }

    #[test]
    fn minimal_case() {
        let lex = BTreeMap::from([("ent".to_string(), lexicon(5, "a"))]);
        let b = build_dataset(&lex, 1, 1, 0).unwrap();
        assert_eq!(b.train.len(), 2);
        assert_eq!(b.test.len(), 2);
        let train_words: HashSet<_> = b.train.iter().map(|s| s.output.clone()).collect();
        assert!(b.test.iter().all(|s| !train_words.contains(&s.output)));
    }

    #[test]
    fn paper_scale_counts() {
        let lex: BTreeMap<String, Vec<LexiconEntry>> = (0..17)
            .map(|i| (format!("o{i:02}"), lexicon(11_000, &format!("{i}"))))
            .collect();
        let b = build_dataset(&lex, 10_000, 1_000, 3).unwrap();
        assert_eq!(b.train.len(), 340_000);
        assert_eq!(b.test.len(), 34_000);
    }

    #[test]
    fn shortfall_names_the_orthography() {
        let lex = BTreeMap::from([("fr".to_string(), lexicon(10, "f"))]);
        let err = build_dataset(&lex, 10, 5, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fr") && msg.contains("short by 5"), "{msg}");
    }

    #[test]
    fn write_and_read_follow_the_table_layout() {
        let lex = BTreeMap::from([("en".to_string(), vec![LexiconEntry::new("job", "dʒɒb")])]);
        let b = build_dataset(&lex, 0, 1, 0).unwrap();
        assert_eq!(b.test[0], Sample::new("en", Task::Write, "dʒɒb", "job").unwrap());
        assert_eq!(b.test[1], Sample::new("en", Task::Read, "job", "dʒɒb").unwrap());
    }

    #[test]
    fn jsonl_round_trip() {
        let lex = BTreeMap::from([("en".to_string(), vec![LexiconEntry::new("job", "dʒɒb")])]);
        let b = build_dataset(&lex, 0, 1, 0).unwrap();
        let text = to_jsonl(&b.test);
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"orthography":"en","task":"write","input":"dʒɒb","output":"job"}"#
        );
        assert_eq!(read_jsonl(&text).unwrap(), b.test);
        assert!(matches!(read_jsonl("{}\n"), Err(CorpusError::Jsonl { line: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn counts_disjointness_and_determinism(
            sizes in proptest::collection::vec(4usize..40, 1..5),
            n_train in 0usize..3,
            n_test in 1usize..3,
            seed in any::<u64>(),
        ) {
            let lex: BTreeMap<String, Vec<LexiconEntry>> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| (format!("c{i}"), lexicon(n, &i.to_string())))
                .collect();
            let b = build_dataset(&lex, n_train, n_test, seed).unwrap();
            prop_assert_eq!(&b, &build_dataset(&lex, n_train, n_test, seed).unwrap());
            for code in lex.keys() {
                let tr: Vec<_> = b.train.iter().filter(|s| &s.orthography == code).collect();
                let te: Vec<_> = b.test.iter().filter(|s| &s.orthography == code).collect();
                prop_assert_eq!(tr.len(), n_train * 2);
                prop_assert_eq!(te.len(), n_test * 2);
                let key = |s: &&Sample| match s.task {
                    Task::Write => s.output.clone(),
                    Task::Read => s.input.clone(),
                };
                let tr_set: HashSet<String> = tr.iter().map(key).collect();
                prop_assert!(te.iter().all(|s| !tr_set.contains(&key(s))));
            }
        }
    }
}
