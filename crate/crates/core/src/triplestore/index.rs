use super::{Triple, TripleError};
use crate::textops::{contains_answer, tokenize, Language, TokenSeq};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

pub const INDEX_FORMAT: &str = "robustqa-triple-index";
pub const INDEX_VERSION: u32 = 1;
/// Retrieval cap used when building noisy multi-source samples.
pub const DEFAULT_LIMIT: usize = 10;

pub type TripleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub id: TripleId,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub id: TripleId,
    pub score: f64,
}

/// Write-once inverted index over triples. Each triple is indexed by the
/// tokens of `head relation tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleIndex {
    format: String,
    version: u32,
    language: Language,
    triples: Vec<Triple>,
    postings: BTreeMap<String, Vec<Posting>>,
    lengths: Vec<u32>,
    average_length: f64,
}

/// Relevance model used by [`TripleIndex::query_with`].
pub trait Scorer {
    /// Scores of every triple sharing at least one term with the query, in
    /// any order. `terms` holds distinct query tokens.
    fn score(&self, index: &TripleIndex, terms: &[&str]) -> Vec<ScoredTriple>;
}

/// Okapi BM25 with `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25 {
    pub fn idf(&self, triple_count: usize, df: usize) -> f64 {
        let n = triple_count as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_weight(&self, tf: f64, length: f64, average_length: f64) -> f64 {
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * length / average_length))
    }
}

impl Scorer for Bm25 {
    fn score(&self, index: &TripleIndex, terms: &[&str]) -> Vec<ScoredTriple> {
        let mut acc: HashMap<TripleId, f64> = HashMap::new();
        for term in terms {
            let Some(list) = index.postings.get(*term) else { continue };
            let idf = self.idf(index.len(), list.len());
            for p in list {
                let len = index.lengths[p.id as usize] as f64;
                *acc.entry(p.id).or_insert(0.0) += idf * self.term_weight(p.tf as f64, len, index.average_length);
            }
        }
        acc.into_iter().map(|(id, score)| ScoredTriple { id, score }).collect()
    }
}

impl TripleIndex {
    pub fn build(triples: Vec<Triple>, language: Language) -> Result<Self, TripleError> {
        if triples.is_empty() {
            return Err(TripleError::EmptyIndex);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(triples.len());
        for (id, triple) in triples.iter().enumerate() {
            let tokens = tokenize(&triple.fields().join(" "), language);
            lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for tok in tokens.iter() {
                *tf.entry(tok).or_insert(0) += 1;
            }
            for (tok, count) in tf {
                postings.entry(tok.to_owned()).or_default().push(Posting { id: id as TripleId, tf: count });
            }
        }
        let average_length = lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64;
        Ok(Self {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            language,
            triples,
            postings,
            lengths,
            average_length,
        })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn triple(&self, id: TripleId) -> &Triple {
        &self.triples[id as usize]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn length(&self, id: TripleId) -> u32 {
        self.lengths[id as usize]
    }

    pub fn average_length(&self) -> f64 {
        self.average_length
    }

    /// BM25 retrieval with the default constants.
    pub fn query(
        &self,
        terms: &TokenSeq,
        limit: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<ScoredTriple>, TripleError> {
        self.query_with(&Bm25::default(), terms, limit, exclude)
    }

    /// Scores, drops triples whose rendering contains `exclude` (normalized
    /// containment), sorts by descending score then ascending id, and keeps
    /// at most `limit`.
    pub fn query_with<S: Scorer + ?Sized>(
        &self,
        scorer: &S,
        terms: &TokenSeq,
        limit: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<ScoredTriple>, TripleError> {
        if limit == 0 {
            return Err(TripleError::ZeroLimit);
        }
        let distinct = terms.distinct();
        let mut hits = scorer.score(self, &distinct);
        if let Some(answer) = exclude {
            hits.retain(|h| !contains_answer(&self.triple(h.id).render(), answer, self.language).unwrap_or(false));
        }
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        hits.truncate(limit);
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<(), TripleError> {
        let text = serde_json::to_string(self).expect("index serializes");
        std::fs::write(path, text).map_err(|e| TripleError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TripleError> {
        let bytes = std::fs::read(path).map_err(|e| TripleError::Io(path.display().to_string(), e.to_string()))?;
        let index: Self =
            serde_json::from_slice(&bytes).map_err(|e| TripleError::Io(path.display().to_string(), e.to_string()))?;
        if index.format != INDEX_FORMAT || index.version != INDEX_VERSION {
            return Err(TripleError::Format { found: format!("{} v{}", index.format, index.version) });
        }
        Ok(index)
    }
}

/// Reads `head<TAB>relation<TAB>tail` lines; blank lines and lines starting
/// with `#` are skipped.
pub fn read_triples_tsv(path: &Path) -> Result<Vec<Triple>, TripleError> {
    let file = std::fs::File::open(path).map_err(|e| TripleError::Io(path.display().to_string(), e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TripleError::Io(path.display().to_string(), e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |reason: String| TripleError::Malformed { line: i + 1, fragment: line.clone(), reason };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        out.push(Triple::new(fields[0], fields[1], fields[2]).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(h: &str, r: &str, x: &str) -> Triple {
        Triple::new(h, r, x).unwrap()
    }

    fn toy() -> Vec<Triple> {
        vec![
            t("The Deadly Tower", "directed by", "Jerry Jameson"),
            t("Mitchell Tower", "modeled after", "Oxford's Magdalen Tower"),
            t("Tower Heist", "starred actors", "Ben Stiller"),
            t("Oxford", "located in", "England"),
            t("The Tower of London", "located in", "London"),
        ]
    }

    /// Brute-force BM25: tokenizes every triple from scratch and scores it
    /// against every query term, with no index involved.
    fn brute_force(
        triples: &[Triple],
        language: Language,
        terms: &[&str],
        limit: usize,
        exclude: Option<&str>,
    ) -> Vec<ScoredTriple> {
        let docs: Vec<Vec<String>> =
            triples.iter().map(|tr| tokenize(&tr.fields().join(" "), language).into_tokens()).collect();
        let n = docs.len() as f64;
        let avg = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
        let (k1, b) = (1.2, 0.75);
        let mut out: Vec<ScoredTriple> = Vec::new();
        for (id, doc) in docs.iter().enumerate() {
            let mut score = 0.0;
            let mut matched = false;
            for term in terms {
                let tf = doc.iter().filter(|w| w == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                matched = true;
                let df = docs.iter().filter(|d| d.iter().any(|w| w == term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avg));
            }
            let excluded = exclude.is_some_and(|a| contains_answer(&triples[id].render(), a, language).unwrap());
            if matched && !excluded {
                out.push(ScoredTriple { id: id as u32, score });
            }
        }
        out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.id.cmp(&b.id)));
        out.truncate(limit);
        out
    }

    fn assert_same(a: &[ScoredTriple], b: &[ScoredTriple]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.id, y.id);
            assert!((x.score - y.score).abs() <= 1e-9);
        }
    }

    #[test]
    fn single_triple_postings() {
        let idx = TripleIndex::build(vec![t("Mitchell Tower", "modeled after", "Magdalen Tower")], Language::English)
            .unwrap();
        for tok in ["mitchell", "tower", "modeled", "after", "magdalen"] {
            assert_eq!(idx.postings(tok)[0].id, 0);
        }
        assert_eq!(idx.postings("tower")[0].tf, 2);
        assert_eq!(idx.length(0), 6);
    }

    #[test]
    fn duplicates_get_distinct_ids() {
        let tr = t("a", "b", "c");
        let idx = TripleIndex::build(vec![tr.clone(), tr], Language::English).unwrap();
        let ids: Vec<u32> = idx.postings("a").iter().map(|p| p.id).collect();
        assert_eq!(ids, [0, 1]);
    }

    #[test]
    fn empty_input_and_zero_limit() {
        assert!(matches!(TripleIndex::build(vec![], Language::English), Err(TripleError::EmptyIndex)));
        let idx = TripleIndex::build(toy(), Language::English).unwrap();
        let q = tokenize("tower", Language::English);
        assert!(matches!(idx.query(&q, 0, None), Err(TripleError::ZeroLimit)));
    }

    #[test]
    fn no_overlap_is_empty() {
        let idx = TripleIndex::build(toy(), Language::English).unwrap();
        let q = tokenize("quantum chromodynamics", Language::English);
        assert!(idx.query(&q, 10, None).unwrap().is_empty());
    }

    #[test]
    fn toy_ranking_matches_brute_force() {
        let idx = TripleIndex::build(toy(), Language::English).unwrap();
        let q = tokenize("The Mitchell Tower is designed to look like what Oxford tower?", Language::English);
        let got = idx.query(&q, 10, None).unwrap();
        assert_same(&got, &brute_force(&toy(), Language::English, &q.distinct(), 10, None));
        assert_eq!(got[0].id, 1);
    }

    #[test]
    fn exclusion_removes_top_hit() {
        let idx = TripleIndex::build(toy(), Language::English).unwrap();
        let q = tokenize("The Mitchell Tower is designed to look like what Oxford tower?", Language::English);
        let got = idx.query(&q, 2, Some("Magdalen Tower")).unwrap();
        assert!(got.iter().all(|h| h.id != 1));
        assert!(got.len() <= 2);
        assert_same(&got, &brute_force(&toy(), Language::English, &q.distinct(), 2, Some("Magdalen Tower")));
    }

    #[test]
    fn exhaustive_lookup_on_thousand_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vocab: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let mut pick =
            |n: usize| (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect::<Vec<_>>().join(" ");
        let triples: Vec<Triple> = (0..1000).map(|_| t(&pick(2), &pick(1), &pick(3))).collect();
        let idx = TripleIndex::build(triples.clone(), Language::English).unwrap();
        for (id, tr) in triples.iter().enumerate() {
            for tok in tokenize(&tr.fields().join(" "), Language::English).iter() {
                assert!(idx.postings(tok).iter().any(|p| p.id as usize == id));
            }
        }
        let total: usize = idx.lengths.iter().map(|&l| l as usize).sum();
        assert!((idx.average_length() - total as f64 / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        let idx = TripleIndex::build(toy(), Language::English).unwrap();
        idx.save(&path).unwrap();
        assert_eq!(TripleIndex::load(&path).unwrap(), idx);
        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(TripleIndex::load(&path), Err(TripleError::Format { .. })));
    }

    #[test]
    fn tsv_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        std::fs::write(&path, "# header\nThe Deadly Tower\tdirected by\tJerry Jameson\n\nA\tB\tC\n").unwrap();
        assert_eq!(read_triples_tsv(&path).unwrap().len(), 2);
        std::fs::write(&path, "a\tb\tc\nonly\ttwo\n").unwrap();
        assert!(matches!(read_triples_tsv(&path), Err(TripleError::Malformed { line: 2, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn query_equals_brute_force(seed in 0u64..10_000, n in 1usize..200, q in 1usize..6, limit in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let word = |rng: &mut ChaCha8Rng| format!("w{}", rng.gen_range(0..40));
            let triples: Vec<Triple> = (0..n)
                .map(|_| t(&word(&mut rng), &word(&mut rng), &format!("{} {}", word(&mut rng), word(&mut rng))))
                .collect();
            let idx = TripleIndex::build(triples.clone(), Language::English).unwrap();
            let terms = TokenSeq::from_tokens((0..q).map(|_| word(&mut rng)), Language::English);
            let exclude = word(&mut rng);
            let got = idx.query(&terms, limit, Some(&exclude)).unwrap();
            let want = brute_force(&triples, Language::English, &terms.distinct(), limit, Some(&exclude));
            prop_assert_eq!(got.len(), want.len());
            for (x, y) in got.iter().zip(&want) {
                prop_assert_eq!(x.id, y.id);
                prop_assert!((x.score - y.score).abs() <= 1e-9);
            }
        }
    }
}
