//! Generated orthographies: the transparent and opaque baselines derived
//! from an Esperanto-like lexicon, and a synthetic family with a
//! controlled amount of spelling ambiguity.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ingest_rows, CorpusError, LexiconEntry, OrthographySpec};

/// Entry count of the bundled Esperanto-like lexicon.
pub const ESPERANTO_LEXICON_SIZE: usize = 26_845;

/// Fixed grapheme list the opaque baseline draws from.
pub const ENO_GRAPHEMES: [char; 25] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y',
];

/// Phoneme inventory of the synthetic family.
pub const SYNTHETIC_PHONEMES: [char; 25] = [
    'p', 'b', 't', 'd', 'k', 'ɡ', 'f', 'v', 's', 'z', 'ʃ', 'ʒ', 'm', 'n', 'ŋ', 'l', 'r', 'j', 'w',
    'h', 'a', 'e', 'i', 'o', 'u',
];

/// Latin, Greek, Cyrillic, Armenian and Georgian lowercase letters.
pub static SYNTHETIC_GRAPHEME_POOL: std::sync::LazyLock<Vec<char>> = std::sync::LazyLock::new(|| {
    let mut pool: Vec<char> = ('a'..='z').collect();
    pool.extend(('α'..='ω').filter(|&c| c != 'ς'));
    pool.extend('а'..='я');
    pool.extend('ա'..='ֆ');
    pool.extend('ა'..='ჰ');
    pool
});

/// Spelled form for every pronunciation: the identity orthography.
pub fn make_ent(entries: &[LexiconEntry]) -> Vec<LexiconEntry> {
    entries
        .iter()
        .map(|e| LexiconEntry::new(e.pron.clone(), e.pron.clone()))
        .collect()
}

/// Replaces every phoneme occurrence by an independent uniform draw from
/// [`ENO_GRAPHEMES`], so spelling carries no information about sound.
pub fn make_eno(entries: &[LexiconEntry], seed: u64) -> Vec<LexiconEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries
        .iter()
        .map(|e| {
            let spelled = e
                .pron
                .chars()
                .map(|_| *ENO_GRAPHEMES.choose(&mut rng).expect("non-empty"))
                .collect::<String>();
            LexiconEntry::new(spelled, e.pron.clone())
        })
        .collect()
}

/// Spelling rules of one synthetic orthography.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticOrthography {
    /// `candidates[p]` are the graphemes of phoneme `p`. Index 0 is the
    /// canonical grapheme, the phoneme's own symbol.
    pub candidates: Vec<Vec<char>>,
}

/// Pool graphemes that are not also synthetic phonemes.
pub fn alternate_graphemes() -> Vec<char> {
    SYNTHETIC_GRAPHEME_POOL
        .iter()
        .copied()
        .filter(|c| !SYNTHETIC_PHONEMES.contains(c))
        .collect()
}

impl SyntheticOrthography {
    /// Canonical graphemes plus `k - 1` alternates per phoneme drawn from
    /// [`alternate_graphemes`].
    pub fn new(k: usize, rng: &mut ChaCha8Rng) -> Result<Self, CorpusError> {
        let mut pool = alternate_graphemes();
        let needed = k.saturating_sub(1) * SYNTHETIC_PHONEMES.len();
        if k == 0 || needed > pool.len() {
            return Err(CorpusError::Config(format!(
                "ambiguity factor {k} needs {needed} alternate graphemes, pool has {}",
                pool.len()
            )));
        }
        pool.shuffle(rng);
        let candidates = SYNTHETIC_PHONEMES
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut c = vec![p];
                c.extend_from_slice(&pool[i * (k - 1)..(i + 1) * (k - 1)]);
                c
            })
            .collect();
        Ok(Self { candidates })
    }

    pub fn k(&self) -> usize {
        self.candidates[0].len()
    }

    /// Phoneme whose candidate set contains `g`.
    pub fn read(&self, g: char) -> Option<char> {
        self.candidates
            .iter()
            .position(|c| c.contains(&g))
            .map(|p| SYNTHETIC_PHONEMES[p])
    }
}

/// Random words whose spelling is bijective except for the final phoneme,
/// which is written with one of its `k` candidates chosen uniformly.
///
/// Writing therefore has one unresolvable `k`-way choice per word; reading
/// is deterministic.
pub fn make_synthetic(
    n_words: usize,
    k: usize,
    lengths: RangeInclusive<usize>,
    seed: u64,
) -> Result<(Vec<LexiconEntry>, SyntheticOrthography), CorpusError> {
    if lengths.is_empty() || *lengths.start() == 0 || *lengths.end() > crate::codec::MAX_FIELD_CHARS {
        return Err(CorpusError::Config(format!("invalid word length range {lengths:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ortho = SyntheticOrthography::new(k, &mut rng)?;
    let mut seen = HashSet::with_capacity(n_words);
    let mut out = Vec::with_capacity(n_words);
    let mut attempts = 0usize;
    while out.len() < n_words {
        attempts += 1;
        if attempts > 20 * n_words + 1000 {
            return Err(CorpusError::Config(format!(
                "cannot draw {n_words} distinct words with lengths {lengths:?}"
            )));
        }
        let len = rng.random_range(lengths.clone());
        let phonemes: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..SYNTHETIC_PHONEMES.len()))
            .collect();
        let pron: String = phonemes.iter().map(|&p| SYNTHETIC_PHONEMES[p]).collect();
        let last = len - 1;
        let spelled: String = phonemes
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let choice = if i == last { rng.random_range(0..k) } else { 0 };
                ortho.candidates[p][choice]
            })
            .collect();
        if seen.insert(pron.clone()) {
            out.push(LexiconEntry::new(spelled, pron));
        }
    }
    Ok((out, ortho))
}

const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const ONSETS: [&str; 38] = [
    "", "", "", "b", "c", "ĉ", "d", "f", "g", "ĝ", "h", "ĥ", "j", "ĵ", "k", "l", "m", "n", "p",
    "r", "s", "ŝ", "t", "v", "z", "bl", "br", "dr", "fl", "fr", "gl", "gr", "kl", "kr", "pl",
    "pr", "st", "tr",
];
const CODAS: [&str; 10] = ["", "", "", "", "n", "l", "r", "s", "j", "k"];
const SUFFIXES: [&str; 16] = [
    "", "", "", "", "ad", "ar", "ec", "ej", "et", "eg", "il", "in", "ist", "ul", "ig", "em",
];
const ENDINGS: [&str; 13] = ["o", "o", "o", "a", "a", "i", "e", "oj", "aj", "on", "as", "is", "os"];

fn letter_ipa(c: char) -> &'static str {
    match c {
        'c' => "ts",
        'ĉ' => "tʃ",
        'g' => "ɡ",
        'ĝ' => "dʒ",
        'ĥ' => "x",
        'ĵ' => "ʒ",
        'ŝ' => "ʃ",
        'ŭ' => "w",
        'a' => "a",
        'b' => "b",
        'd' => "d",
        'e' => "e",
        'f' => "f",
        'h' => "h",
        'i' => "i",
        'j' => "j",
        'k' => "k",
        'l' => "l",
        'm' => "m",
        'n' => "n",
        'o' => "o",
        'p' => "p",
        'r' => "r",
        's' => "s",
        't' => "t",
        'u' => "u",
        'v' => "v",
        'z' => "z",
        other => unreachable!("not an Esperanto letter: {other}"),
    }
}

fn transcribe(word: &str) -> String {
    let ipa: Vec<&str> = word.chars().map(letter_ipa).collect();
    // primary stress before the onset of the penultimate vowel
    let vowels: Vec<usize> = word
        .chars()
        .enumerate()
        .filter(|(_, c)| "aeiou".contains(*c))
        .map(|(i, _)| i)
        .collect();
    let stress_at = (vowels.len() >= 2).then(|| {
        let v = vowels[vowels.len() - 2];
        if v > 0 && !"aeiou".contains(word.chars().nth(v - 1).unwrap()) {
            v - 1
        } else {
            v
        }
    });
    let mut out = String::new();
    for (i, p) in ipa.iter().enumerate() {
        if Some(i) == stress_at {
            out.push('ˈ');
        }
        out.push_str(p);
    }
    out
}

/// Raw `(spelled, pron)` rows of the Esperanto-like lexicon, with stress
/// marks still present in the pronunciation.
pub fn esperanto_like_raw(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(1..=3);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(ONSETS.choose(&mut rng).unwrap());
            word.push_str(VOWELS.choose(&mut rng).unwrap());
            let coda = CODAS.choose(&mut rng).unwrap();
            if *coda == "j" && rng.random_bool(0.3) {
                word.push('ŭ');
            } else {
                word.push_str(coda);
            }
        }
        word.push_str(SUFFIXES.choose(&mut rng).unwrap());
        word.push_str(ENDINGS.choose(&mut rng).unwrap());
        if word.chars().count() > crate::codec::MAX_FIELD_CHARS || !seen.insert(word.clone()) {
            continue;
        }
        let pron = transcribe(&word);
        out.push((word, pron));
    }
    out
}

/// Cleaned Esperanto-like lexicon (stress stripped, filters applied).
pub fn esperanto_like_lexicon(n: usize, seed: u64) -> Vec<LexiconEntry> {
    let (entries, _) = ingest_rows(esperanto_like_raw(n, seed), &OrthographySpec::new("eo"))
        .expect("generated rows are well formed");
    entries
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ent_is_identity() {
        let e = make_ent(&[LexiconEntry::new("amiko", "amiko"), LexiconEntry::new("ĉu", "tʃu")]);
        assert_eq!(e[0], LexiconEntry::new("amiko", "amiko"));
        assert!(e.iter().all(|x| x.spelled == x.pron));
    }

    #[test]
    fn eno_is_deterministic_and_length_preserving() {
        let base = esperanto_like_lexicon(200, 1);
        let a = make_eno(&base, 5);
        assert_eq!(a, make_eno(&base, 5));
        assert_ne!(a, make_eno(&base, 6));
        for (x, b) in a.iter().zip(&base) {
            assert_eq!(x.pron, b.pron);
            assert_eq!(x.spelled.chars().count(), x.pron.chars().count());
            assert!(x.spelled.chars().all(|c| ENO_GRAPHEMES.contains(&c)));
        }
    }

    #[test]
    fn eno_draws_per_occurrence() {
        let base = esperanto_like_lexicon(1000, 2);
        let eno = make_eno(&base, 9);
        let found = eno.iter().any(|e| {
            let p: Vec<char> = e.pron.chars().collect();
            let s: Vec<char> = e.spelled.chars().collect();
            (0..p.len()).any(|i| (i + 1..p.len()).any(|j| p[i] == p[j] && s[i] != s[j]))
        });
        assert!(found);
    }

    #[test]
    fn eno_marginal_is_uniform() {
        let base = esperanto_like_lexicon(4000, 3);
        let eno = make_eno(&base, 4);
        let mut counts = [0usize; 25];
        let mut total = 0usize;
        for c in eno.iter().flat_map(|e| e.spelled.chars()) {
            counts[ENO_GRAPHEMES.iter().position(|&g| g == c).unwrap()] += 1;
            total += 1;
        }
        let p = 1.0 / 25.0;
        let mean = total as f64 * p;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{c} vs {mean}±{sigma}");
        }
    }

    #[test]
    fn esperanto_like_lexicon_shape() {
        let lex = esperanto_like_lexicon(3000, 0);
        assert_eq!(lex.len(), 3000);
        let phonemes: HashSet<char> = lex.iter().flat_map(|e| e.pron.chars()).collect();
        assert!(phonemes.len() <= 25, "{phonemes:?}");
        assert!(!phonemes.contains(&'ˈ'));
        let mean = lex.iter().map(|e| e.pron.chars().count()).sum::<usize>() as f64 / 3000.0;
        assert!((6.0..12.0).contains(&mean), "mean length {mean}");
        let raw = esperanto_like_raw(10, 0);
        assert!(raw.iter().any(|(_, p)| p.contains('ˈ')));
    }

    #[test]
    fn synthetic_reading_is_deterministic_and_writing_ambiguous_only_at_the_end() {
        for k in [1, 2, 4] {
            let (words, ortho) = make_synthetic(500, k, 3..=8, 11).unwrap();
            assert_eq!(words.len(), 500);
            assert_eq!(ortho.k(), k);
            for w in &words {
                let read: String = w.spelled.chars().map(|g| ortho.read(g).unwrap()).collect();
                assert_eq!(read, w.pron);
                let n = w.pron.chars().count();
                for (i, (p, g)) in w.pron.chars().zip(w.spelled.chars()).enumerate() {
                    let idx = SYNTHETIC_PHONEMES.iter().position(|&x| x == p).unwrap();
                    assert_eq!(ortho.candidates[idx][0], p);
                    if i + 1 < n {
                        assert_eq!(g, ortho.candidates[idx][0]);
                    } else {
                        assert!(ortho.candidates[idx].contains(&g));
                    }
                }
            }
        }
    }

    #[test]
    fn synthetic_final_choice_is_roughly_uniform() {
        let (words, ortho) = make_synthetic(4000, 4, 3..=8, 12).unwrap();
        let mut counts = [0usize; 4];
        for w in &words {
            let p = w.pron.chars().last().unwrap();
            let idx = SYNTHETIC_PHONEMES.iter().position(|&x| x == p).unwrap();
            let g = w.spelled.chars().last().unwrap();
            counts[ortho.candidates[idx].iter().position(|&c| c == g).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 3.0 * (4000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn synthetic_rejects_oversized_ambiguity() {
        let max = 1 + alternate_graphemes().len() / 25;
        assert_eq!(max, 6);
        assert!(make_synthetic(10, max, 3..=8, 0).is_ok());
        assert!(matches!(
            make_synthetic(10, max + 1, 3..=8, 0),
            Err(CorpusError::Config(_))
        ));
        assert!(make_synthetic(10, 0, 3..=8, 0).is_err());
    }

    #[test]
    fn grapheme_pool_is_distinct_and_unreserved() {
        let pool = &*SYNTHETIC_GRAPHEME_POOL;
        let set: HashSet<_> = pool.iter().collect();
        assert_eq!(set.len(), pool.len());
        assert!(pool.iter().all(|&c| !crate::codec::is_reserved(c)));
        assert!(pool.len() >= 100);
    }
}
