//! Neighbor expansion: content k-nearest-neighbor graphs, random-walk-with-
//! restart similarity, and expansion of target news and user histories.
//!
//! Two graphs are produced over the same news set: a direct cosine top-k
//! graph (local similarity) and a walk-visit-frequency top-k graph (high-
//! order similarity). Expansion reads the walk graph by default.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::NewsRecord;
use crate::error::{Error, Result};

/// Sparse binary content features of one news: in-vocabulary title word ids
/// and entity ids, mapped into one disjoint feature space. Padding and
/// out-of-vocabulary ids carry no content and are excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentVector {
    pub news: u32,
    features: Vec<u64>, // sorted, deduplicated
}

impl ContentVector {
    pub fn from_record(rec: &NewsRecord, n_words: usize) -> Self {
        let mut features: Vec<u64> = rec
            .title_ids
            .iter()
            .filter(|&&id| id >= 2)
            .map(|&id| id as u64)
            .chain(
                rec.entity_ids
                    .iter()
                    .filter(|&&id| id >= 2)
                    .map(|&id| n_words as u64 + id as u64),
            )
            .collect();
        features.sort_unstable();
        features.dedup();
        ContentVector {
            news: rec.news,
            features,
        }
    }

    /// Build directly from a feature set (fixtures and tests).
    pub fn from_features(news: u32, mut features: Vec<u64>) -> Self {
        features.sort_unstable();
        features.dedup();
        ContentVector { news, features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Cosine similarity of binary feature sets:
/// `|x_i ∩ x_j| / (sqrt(|x_i|) * sqrt(|x_j|))`; 0 when either is empty.
pub fn cosine_similarity(a: &ContentVector, b: &ContentVector) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0usize, 0usize, 0usize);
    while i < a.features.len() && j < b.features.len() {
        match a.features[i].cmp(&b.features[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    // sqrt(|a| * |b|) rather than sqrt(|a|) * sqrt(|b|): identical sets then
    // score exactly 1 (the product is a perfect square).
    inter as f64 / (a.len() as f64 * b.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Knn,
    Walk,
}

impl GraphKind {
    fn as_str(self) -> &'static str {
        match self {
            GraphKind::Knn => "knn",
            GraphKind::Walk => "walk",
        }
    }
}

/// Top-k similarity graph. Rows exist only for news the graph was built
/// over; each row is ordered by non-increasing score (ties by ascending id)
/// and holds no self-loop except the isolated-node fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub kind: GraphKind,
    rows: Vec<Option<Vec<(u32, f32)>>>,
}

impl SimilarityGraph {
    pub fn from_rows(kind: GraphKind, rows: Vec<Option<Vec<(u32, f32)>>>) -> Self {
        SimilarityGraph { kind, rows }
    }

    pub fn contains(&self, news: u32) -> bool {
        self.rows.get(news as usize).map_or(false, Option::is_some)
    }

    pub fn neighbors(&self, news: u32) -> Option<&[(u32, f32)]> {
        self.rows.get(news as usize)?.as_deref()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .map(|(i, _)| i as u32)
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }
}

/// Select the top-k scored candidates: non-increasing score, ties broken by
/// ascending id, zero scores excluded; empty result falls back to a
/// self-loop of score 1.
fn top_k_row(news: u32, mut scored: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f32)> {
    scored.retain(|&(_, s)| s > 0.0);
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    if scored.is_empty() {
        vec![(news, 1.0)]
    } else {
        scored.into_iter().map(|(n, s)| (n, s as f32)).collect()
    }
}

/// Direct content kNN graph: per news, the k most cosine-similar others.
pub fn build_knn_graph(contents: &[ContentVector], k: usize) -> SimilarityGraph {
    assert!(k >= 1, "k must be at least 1");
    let max_id = contents.iter().map(|c| c.news).max().map_or(0, |m| m as usize + 1);
    let mut index_of: Vec<Option<usize>> = vec![None; max_id];
    for (i, c) in contents.iter().enumerate() {
        assert!(index_of[c.news as usize].is_none(), "duplicate news {} in contents", c.news);
        index_of[c.news as usize] = Some(i);
    }
    // Inverted index: feature -> indices of news containing it.
    let mut postings: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, c) in contents.iter().enumerate() {
        for &f in &c.features {
            postings.entry(f).or_default().push(i);
        }
    }
    let mut rows: Vec<Option<Vec<(u32, f32)>>> = vec![None; max_id];
    let mut overlap = vec![0u32; contents.len()];
    for (i, c) in contents.iter().enumerate() {
        let mut touched = Vec::new();
        for &f in &c.features {
            for &j in &postings[&f] {
                if j != i {
                    if overlap[j] == 0 {
                        touched.push(j);
                    }
                    overlap[j] += 1;
                }
            }
        }
        let mut scored: Vec<(u32, f64)> = touched
            .iter()
            .map(|&j| {
                let o = &contents[j];
                let s = overlap[j] as f64 / (c.len() as f64 * o.len() as f64).sqrt();
                (o.news, s)
            })
            .collect();
        for &j in &touched {
            overlap[j] = 0;
        }
        // Candidate order from the postings is arbitrary; sort fully for
        // deterministic tie-breaks.
        scored.sort_by_key(|&(n, _)| n);
        rows[c.news as usize] = Some(top_k_row(c.news, scored, k));
    }
    SimilarityGraph {
        kind: GraphKind::Knn,
        rows,
    }
}

/// Random-walk-with-restart parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WalkParams {
    pub n_walk: u32,
    pub p_restart: f64,
    pub d_depth: u32,
    pub seed: u64,
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_walk < 1 || self.d_depth < 1 {
            return Err(Error::Config(format!(
                "walk parameters require n_walk >= 1 and d_depth >= 1 (got {} and {})",
                self.n_walk, self.d_depth
            )));
        }
        if !(0.0..1.0).contains(&self.p_restart) {
            return Err(Error::Config(format!(
                "p_restart must lie in [0, 1), got {}",
                self.p_restart
            )));
        }
        Ok(())
    }
}

/// splitmix64 finalizer: a platform-stable hash mix for deriving per-node
/// RNG streams from (global seed, node id).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte-Carlo visit frequencies per start node.
///
/// For each node `s`: `n_walk` walkers each take exactly `d_depth` steps.
/// A step restarts to `s` with probability `p_restart`, otherwise moves to a
/// neighbor of the current node with probability proportional to the edge
/// score (a node without a row counts as restarting). After every step the
/// walker's position is counted if it differs from `s`. Frequencies are
/// visit counts normalized over all counted visits; a start node with no
/// non-self visits gets an empty row.
///
/// Each start node draws from its own RNG stream seeded by
/// `hash(seed, node)`, so results are independent of traversal order.
pub fn random_walk_similarity(
    graph: &SimilarityGraph,
    params: &WalkParams,
) -> Vec<(u32, Vec<(u32, f64)>)> {
    params.validate().expect("invalid walk parameters");
    let max_id = graph.rows.len();
    // Pre-build one weighted sampler per node that has neighbors.
    let samplers: Vec<Option<(Vec<u32>, WeightedIndex<f32>)>> = graph
        .rows
        .iter()
        .map(|row| {
            row.as_ref().and_then(|nbrs| {
                if nbrs.is_empty() {
                    return None;
                }
                let ids: Vec<u32> = nbrs.iter().map(|&(n, _)| n).collect();
                let weights: Vec<f32> = nbrs.iter().map(|&(_, w)| w).collect();
                WeightedIndex::new(&weights).ok().map(|w| (ids, w))
            })
        })
        .collect();

    let mut out = Vec::with_capacity(graph.n_nodes());
    let mut counts = vec![0u64; max_id];
    for s in graph.node_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, s as u64));
        let mut visited: Vec<u32> = Vec::new();
        for _ in 0..params.n_walk {
            let mut cur = s;
            for _ in 0..params.d_depth {
                if rng.gen::<f64>() < params.p_restart {
                    cur = s;
                } else {
                    cur = match &samplers[cur as usize] {
                        Some((ids, w)) => ids[w.sample(&mut rng)],
                        None => s,
                    };
                }
                if cur != s {
                    if counts[cur as usize] == 0 {
                        visited.push(cur);
                    }
                    counts[cur as usize] += 1;
                }
            }
        }
        let total: u64 = visited.iter().map(|&v| counts[v as usize]).sum();
        visited.sort_unstable();
        let row: Vec<(u32, f64)> = visited
            .iter()
            .map(|&v| {
                let c = counts[v as usize];
                counts[v as usize] = 0;
                (v, c as f64 / total as f64)
            })
            .collect();
        out.push((s, row));
    }
    out
}

/// Top-k graph over walk visit frequencies.
pub fn build_walk_graph(
    walk_scores: &[(u32, Vec<(u32, f64)>)],
    k: usize,
) -> SimilarityGraph {
    assert!(k >= 1, "k must be at least 1");
    let max_id = walk_scores
        .iter()
        .map(|&(n, _)| n)
        .max()
        .map_or(0, |m| m as usize + 1);
    let mut rows: Vec<Option<Vec<(u32, f32)>>> = vec![None; max_id];
    for (news, scores) in walk_scores {
        rows[*news as usize] = Some(top_k_row(*news, scores.clone(), k));
    }
    SimilarityGraph {
        kind: GraphKind::Walk,
        rows,
    }
}

/// Expanded neighbor list of a target news: its own top-k graph row in score
/// order. A news absent from the graph expands to itself only.
pub fn expand_news(news: u32, graph: &SimilarityGraph, k: usize) -> Vec<u32> {
    match graph.neighbors(news) {
        Some(row) => row.iter().take(k).map(|&(n, _)| n).collect(),
        None => vec![news],
    }
}

/// Scored expansion candidates for a history: the union of each clicked
/// news's top-k neighbors, deduplicated against the history and each other,
/// scored by the maximum similarity over the history items that proposed it.
/// At most the k best, descending by score (ties by id).
pub fn user_expansion_scores(
    history: &[u32],
    graph: &SimilarityGraph,
    k: usize,
) -> Vec<(u32, f64)> {
    let mut best: HashMap<u32, f64> = HashMap::new();
    for &clicked in history {
        if let Some(row) = graph.neighbors(clicked) {
            for &(nbr, score) in row.iter().take(k) {
                if history.contains(&nbr) {
                    continue;
                }
                let e = best.entry(nbr).or_insert(0.0);
                if score as f64 > *e {
                    *e = score as f64;
                }
            }
        }
    }
    let mut candidates: Vec<(u32, f64)> = best.into_iter().collect();
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    candidates.truncate(k);
    candidates
}

/// Expanded user list: the original history followed by the k best scored
/// expansion candidates (see [`user_expansion_scores`]).
pub fn expand_user(history: &[u32], graph: &SimilarityGraph, k: usize) -> Vec<u32> {
    if history.is_empty() {
        return Vec::new();
    }
    let mut out = history.to_vec();
    out.extend(
        user_expansion_scores(history, graph, k)
            .into_iter()
            .map(|(n, _)| n),
    );
    out
}

const GRAPH_MAGIC_PREFIX: &str = "#confrec-graph v1 kind=";

/// Write a similarity graph as text: a versioned header, then one line per
/// node (`news_id<TAB>neighbor:score ...`) in ascending id order. Identical
/// graphs serialize to identical bytes.
pub fn save_graph(path: &Path, graph: &SimilarityGraph) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}{}", GRAPH_MAGIC_PREFIX, graph.kind.as_str())?;
    for id in graph.node_ids() {
        let row = graph.neighbors(id).unwrap();
        write!(w, "{id}\t")?;
        for (i, (n, s)) in row.iter().enumerate() {
            if i > 0 {
                write!(w, " ")?;
            }
            write!(w, "{n}:{s}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<SimilarityGraph> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open graph file {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty graph file", path.display())))??;
    let kind = match header.strip_prefix(GRAPH_MAGIC_PREFIX) {
        Some("knn") => GraphKind::Knn,
        Some("walk") => GraphKind::Walk,
        _ => {
            return Err(Error::Data(format!(
                "{}: unsupported graph header {:?}",
                path.display(),
                header
            )))
        }
    };
    let mut rows: Vec<Option<Vec<(u32, f32)>>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("{}: malformed graph line {}", path.display(), lineno + 2));
        let (id, rest) = line.split_once('\t').ok_or_else(bad)?;
        let id: u32 = id.parse().map_err(|_| bad())?;
        let mut row = Vec::new();
        for pair in rest.split(' ').filter(|p| !p.is_empty()) {
            let (n, s) = pair.split_once(':').ok_or_else(bad)?;
            row.push((n.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?));
        }
        if rows.len() <= id as usize {
            rows.resize(id as usize + 1, None);
        }
        rows[id as usize] = Some(row);
    }
    Ok(SimilarityGraph { kind, rows })
}
