//! MinHash near-duplicate detection with LSH banding, plus the exact Jaccard
//! computation it approximates.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::par;
use crate::segment::Segmenter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShingleUnit {
    CharUnigram,
    WordUnigram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub unit: ShingleUnit,
    pub items: BTreeSet<String>,
}

impl ShingleSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Character unigrams ignore the segmenter; word unigrams require one.
pub fn shingle(text: &str, unit: ShingleUnit, segmenter: Option<&dyn Segmenter>) -> Result<ShingleSet> {
    let items = match unit {
        ShingleUnit::CharUnigram => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
        ShingleUnit::WordUnigram => {
            let seg = segmenter
                .ok_or_else(|| Error::config("word_unigram shingles need a segmenter"))?;
            seg.segment(text)
                .into_iter()
                .filter(|w| !w.trim().is_empty())
                .collect()
        }
    };
    Ok(ShingleSet { unit, items })
}

/// |a ∩ b| / |a ∪ b|, with two empty sets defined as identical.
pub fn exact_jaccard(a: &ShingleSet, b: &ShingleSet) -> Result<f64> {
    if a.unit != b.unit {
        return Err(Error::Incompatible(format!(
            "shingle units differ: {:?} vs {:?}",
            a.unit, b.unit
        )));
    }
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    let inter = a.items.intersection(&b.items).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub threshold: f64,
    pub k: usize,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
    pub unit: ShingleUnit,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: 0.8,
            k: 128,
            bands: 32,
            rows: 4,
            seed: 0,
            unit: ShingleUnit::CharUnigram,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::config(format!("dedup threshold {} outside (0, 1]", self.threshold)));
        }
        if self.k == 0 || self.bands * self.rows != self.k {
            return Err(Error::config(format!(
                "bands ({}) x rows ({}) must equal k ({})",
                self.bands, self.rows, self.k
            )));
        }
        Ok(())
    }

    /// Probability that a pair with Jaccard `j` shares at least one band.
    pub fn candidate_probability(&self, j: f64) -> f64 {
        1.0 - (1.0 - j.powi(self.rows as i32)).powi(self.bands as i32)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The family of seeded 64-bit hash functions h_0..h_{k-1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    seed: u64,
    keys: Vec<u64>,
}

impl HashFamily {
    pub fn new(k: usize, seed: u64) -> Self {
        let mut state = seed;
        let keys = (0..k)
            .map(|_| {
                state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
                splitmix64(state)
            })
            .collect();
        HashFamily { seed, keys }
    }

    pub fn k(&self) -> usize {
        self.keys.len()
    }

    pub fn base(item: &str) -> u64 {
        splitmix64(fnv1a(item.as_bytes()))
    }

    /// h_i(item).
    pub fn hash(&self, i: usize, item: &str) -> u64 {
        splitmix64(Self::base(item) ^ self.keys[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub k: usize,
    pub seed: u64,
    pub values: Vec<u64>,
}

pub fn minhash_signature(s: &ShingleSet, family: &HashFamily) -> Result<MinHashSignature> {
    if s.is_empty() {
        return Err(Error::Empty("cannot sign an empty shingle set".into()));
    }
    let mut values = vec![u64::MAX; family.k()];
    for item in &s.items {
        let base = HashFamily::base(item);
        for (v, key) in values.iter_mut().zip(&family.keys) {
            *v = (*v).min(splitmix64(base ^ key));
        }
    }
    Ok(MinHashSignature {
        k: family.k(),
        seed: family.seed,
        values,
    })
}

/// Fraction of positions where the two signatures agree.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.k != b.k || a.seed != b.seed || a.values.len() != b.values.len() {
        return Err(Error::Incompatible(format!(
            "signatures (k={}, seed={}) and (k={}, seed={})",
            a.k, a.seed, b.k, b.seed
        )));
    }
    let equal = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(equal as f64 / a.k as f64)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub doc_ids: Vec<String>,
    pub min_pairwise_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub a: String,
    pub b: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub docs: usize,
    /// Documents with no shingles; never clustered.
    pub unsigned_docs: usize,
    pub candidate_pairs: usize,
    pub pairs: Vec<DuplicatePair>,
    pub clusters: Vec<Cluster>,
    pub duplicate_docs: usize,
    pub duplicate_fraction: f64,
}

impl DedupReport {
    /// Ids to remove when dropping: all but the lexicographically lowest id in each cluster.
    pub fn drop_ids(&self) -> BTreeSet<String> {
        self.clusters
            .iter()
            .flat_map(|c| c.doc_ids.iter().skip(1).cloned())
            .collect()
    }
}

pub fn find_near_duplicates(
    docs: &[Document],
    cfg: &DedupConfig,
    segmenter: Option<&dyn Segmenter>,
) -> Result<DedupReport> {
    cfg.validate()?;
    if cfg.unit == ShingleUnit::WordUnigram && segmenter.is_none() {
        return Err(Error::config("word_unigram shingles need a segmenter"));
    }
    let family = HashFamily::new(cfg.k, cfg.seed);
    let signatures: Vec<Option<MinHashSignature>> = par::map_slice(docs, |d| {
        shingle(&d.text, cfg.unit, segmenter)
            .ok()
            .and_then(|s| minhash_signature(&s, &family).ok())
    });

    let mut buckets: HashMap<(usize, &[u64]), Vec<usize>> = HashMap::new();
    for (idx, sig) in signatures.iter().enumerate() {
        if let Some(sig) = sig {
            for (band, rows) in sig.values.chunks(cfg.rows).enumerate() {
                buckets.entry((band, rows)).or_default().push(idx);
            }
        }
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for members in buckets.values().filter(|m| m.len() > 1) {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                candidates.push((a.min(b), a.max(b)));
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    let sig = |i: usize| signatures[i].as_ref().expect("bucketed docs are signed");
    let estimates: Vec<f64> = par::map_slice(&candidates, |&(a, b)| {
        let (x, y) = (sig(a), sig(b));
        x.values.iter().zip(&y.values).filter(|(p, q)| p == q).count() as f64 / x.k as f64
    });
    let mut uf = UnionFind::new(docs.len());
    let mut pairs = Vec::new();
    for (&(a, b), &est) in candidates.iter().zip(&estimates) {
        if est >= cfg.threshold {
            uf.union(a, b);
            pairs.push(DuplicatePair {
                a: docs[a].id.clone(),
                b: docs[b].id.clone(),
                estimate: est,
            });
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in 0..docs.len() {
        groups.entry(uf.find(idx)).or_default().push(idx);
    }
    let mut clusters = Vec::new();
    for members in groups.into_values().filter(|m| m.len() > 1) {
        let mut min_est = 1.0f64;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                min_est = min_est.min(estimate_jaccard(sig(a), sig(b))?);
            }
        }
        let mut ids: Vec<String> = members.iter().map(|&i| docs[i].id.clone()).collect();
        ids.sort();
        clusters.push(Cluster {
            cluster_id: clusters.len(),
            doc_ids: ids,
            min_pairwise_estimate: min_est,
        });
    }
    let duplicate_docs: usize = clusters.iter().map(|c| c.doc_ids.len()).sum();
    Ok(DedupReport {
        docs: docs.len(),
        unsigned_docs: signatures.iter().filter(|s| s.is_none()).count(),
        candidate_pairs: candidates.len(),
        pairs,
        clusters,
        duplicate_docs,
        duplicate_fraction: if docs.is_empty() {
            0.0
        } else {
            duplicate_docs as f64 / docs.len() as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::WhitespaceSegmenter;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(items: &[&str]) -> ShingleSet {
        ShingleSet {
            unit: ShingleUnit::CharUnigram,
            items: items.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn shingle_examples() {
        let s = shingle("你好你", ShingleUnit::CharUnigram, None).unwrap();
        assert_eq!(s, set(&["你", "好"]));
        assert!(shingle("", ShingleUnit::CharUnigram, None).unwrap().is_empty());
        let w = shingle("a b a", ShingleUnit::WordUnigram, Some(&WhitespaceSegmenter)).unwrap();
        assert_eq!(w.items, ["a", "b"].iter().map(|s| s.to_string()).collect());
        assert!(shingle("a", ShingleUnit::WordUnigram, None).is_err());
    }

    #[test]
    fn exact_jaccard_examples() {
        let a = set(&["x", "y", "z"]);
        assert_eq!(exact_jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(exact_jaccard(&a, &set(&["p", "q"])).unwrap(), 0.0);
        assert_eq!(exact_jaccard(&a, &set(&["y", "z", "w"])).unwrap(), 0.5);
        assert_eq!(exact_jaccard(&set(&[]), &set(&[])).unwrap(), 1.0);
        let mut w = a.clone();
        w.unit = ShingleUnit::WordUnigram;
        assert!(matches!(exact_jaccard(&a, &w), Err(Error::Incompatible(_))));
    }

    #[test]
    fn signature_of_singleton_is_each_hash() {
        let fam = HashFamily::new(128, 7);
        let sig = minhash_signature(&set(&["台"]), &fam).unwrap();
        for i in 0..128 {
            assert_eq!(sig.values[i], fam.hash(i, "台"));
        }
        assert!(minhash_signature(&set(&[]), &fam).is_err());
    }

    #[test]
    fn superset_signature_is_componentwise_smaller() {
        let fam = HashFamily::new(64, 1);
        let small = minhash_signature(&set(&["a", "b"]), &fam).unwrap();
        let big = minhash_signature(&set(&["a", "b", "c", "d"]), &fam).unwrap();
        assert!(big.values.iter().zip(&small.values).all(|(b, s)| b <= s));
        assert_eq!(small, minhash_signature(&set(&["b", "a"]), &fam).unwrap());
    }

    #[test]
    fn mismatched_signatures_error() {
        let s = set(&["a"]);
        let a = minhash_signature(&s, &HashFamily::new(16, 1)).unwrap();
        let b = minhash_signature(&s, &HashFamily::new(16, 2)).unwrap();
        let c = minhash_signature(&s, &HashFamily::new(32, 1)).unwrap();
        assert!(estimate_jaccard(&a, &b).is_err());
        assert!(estimate_jaccard(&a, &c).is_err());
        assert_eq!(estimate_jaccard(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_large_sets_estimate_near_zero() {
        let fam = HashFamily::new(128, 3);
        let a: Vec<String> = (0..500).map(|i| format!("a{i}")).collect();
        let b: Vec<String> = (0..500).map(|i| format!("b{i}")).collect();
        let sa = ShingleSet { unit: ShingleUnit::CharUnigram, items: a.into_iter().collect() };
        let sb = ShingleSet { unit: ShingleUnit::CharUnigram, items: b.into_iter().collect() };
        let est = estimate_jaccard(&minhash_signature(&sa, &fam).unwrap(), &minhash_signature(&sb, &fam).unwrap()).unwrap();
        assert!(est <= 3.0 * (0.25f64 / 128.0).sqrt());
    }

    #[test]
    fn config_validation() {
        assert!(DedupConfig::default().validate().is_ok());
        assert!(DedupConfig { bands: 16, ..Default::default() }.validate().is_err());
        assert!(DedupConfig { threshold: 0.0, ..Default::default() }.validate().is_err());
        let p = DedupConfig::default().candidate_probability(0.8);
        assert!(p > 0.9999);
    }

    fn random_doc(rng: &mut ChaCha8Rng, id: usize) -> Document {
        let text: String = (0..80).map(|_| char::from_u32(0x4E00 + rng.random_range(0..3000)).unwrap()).collect();
        Document::new(format!("d{id:04}"), "s", text)
    }

    #[test]
    fn distinct_docs_have_no_clusters_and_exact_pair_has_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut docs: Vec<Document> = (0..200).map(|i| random_doc(&mut rng, i)).collect();
        let report = find_near_duplicates(&docs, &DedupConfig::default(), None).unwrap();
        assert!(report.clusters.is_empty());
        assert_eq!(report.duplicate_fraction, 0.0);

        let copy = Document::new("zz-copy", "s", docs[17].text.clone());
        docs.push(copy);
        let report = find_near_duplicates(&docs, &DedupConfig::default(), None).unwrap();
        assert_eq!(report.clusters.len(), 1);
        assert_eq!(report.clusters[0].doc_ids, vec!["d0017".to_string(), "zz-copy".to_string()]);
        assert_eq!(report.clusters[0].min_pairwise_estimate, 1.0);
        assert_eq!(report.drop_ids().into_iter().collect::<Vec<_>>(), vec!["zz-copy".to_string()]);

        let again = find_near_duplicates(&docs, &DedupConfig::default(), None).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn empty_docs_are_unsigned() {
        let docs = vec![Document::new("a", "s", ""), Document::new("b", "s", "  ")];
        let report = find_near_duplicates(&docs, &DedupConfig::default(), None).unwrap();
        assert_eq!(report.unsigned_docs, 2);
        assert!(report.clusters.is_empty());
    }

    proptest! {
        #[test]
        fn estimate_is_symmetric(a in proptest::collection::btree_set("[a-f]{1,2}", 1..20),
                                 b in proptest::collection::btree_set("[a-f]{1,2}", 1..20)) {
            let fam = HashFamily::new(32, 5);
            let sa = minhash_signature(&ShingleSet { unit: ShingleUnit::CharUnigram, items: a }, &fam).unwrap();
            let sb = minhash_signature(&ShingleSet { unit: ShingleUnit::CharUnigram, items: b }, &fam).unwrap();
            prop_assert_eq!(estimate_jaccard(&sa, &sb).unwrap(), estimate_jaccard(&sb, &sa).unwrap());
        }
    }
}
