//! Corpus handling: ingest raw click-event logs, build vocabularies, encode
//! news records, produce chronological splits, user histories, and
//! negative-sampled examples.

mod store;

pub use store::{load_prepared, save_prepared, Prepared, PREPARED_MAGIC};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved row 0 of every vocabulary: sequence padding.
pub const PAD_ID: u32 = 0;
/// Reserved row 1 of every vocabulary: out-of-vocabulary tokens.
pub const OOV_ID: u32 = 1;

/// One raw click event as it appears in the input log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEvent {
    pub user_id: String,
    pub news_id: String,
    pub timestamp: u64,
    pub title: Vec<String>,
    pub entities: Vec<String>,
    pub entity_types: Vec<String>,
}

/// Counters from [`ingest_events`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestStats {
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
    pub malformed_lines: Vec<usize>,
}

/// Read a line-delimited JSON event log. Malformed lines (unparsable, or
/// with entity/type length mismatch) are counted and skipped; more than 10%
/// malformed is fatal.
pub fn ingest_events(path: &Path) -> Result<(Vec<RawEvent>, IngestStats)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open event log {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut stats = IngestStats::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match serde_json::from_str::<RawEvent>(&line) {
            Ok(ev) if ev.entities.len() == ev.entity_types.len() => {
                stats.parsed += 1;
                events.push(ev);
            }
            _ => {
                stats.malformed += 1;
                stats.malformed_lines.push(lineno + 1);
            }
        }
    }
    if stats.lines > 0 && stats.malformed * 10 > stats.lines {
        let shown: Vec<String> = stats
            .malformed_lines
            .iter()
            .take(20)
            .map(|l| l.to_string())
            .collect();
        return Err(Error::Data(format!(
            "{}: {} of {} lines malformed (>10%); first bad lines: {}",
            path.display(),
            stats.malformed,
            stats.lines,
            shown.join(", ")
        )));
    }
    Ok((events, stats))
}

/// Token-to-id maps for words, entities and entity types. Id 0 is padding,
/// id 1 is out-of-vocabulary; real tokens start at 2, assigned in order of
/// first appearance over distinct news.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Vocabulary {
    pub word_to_id: BTreeMap<String, u32>,
    pub entity_to_id: BTreeMap<String, u32>,
    pub type_to_id: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn word_id(&self, w: &str) -> u32 {
        self.word_to_id.get(w).copied().unwrap_or(OOV_ID)
    }
    pub fn entity_id(&self, e: &str) -> u32 {
        self.entity_to_id.get(e).copied().unwrap_or(OOV_ID)
    }
    pub fn type_id(&self, t: &str) -> u32 {
        self.type_to_id.get(t).copied().unwrap_or(OOV_ID)
    }
    /// Table row counts including the two reserved rows.
    pub fn n_words(&self) -> usize {
        self.word_to_id.len() + 2
    }
    pub fn n_entities(&self) -> usize {
        self.entity_to_id.len() + 2
    }
    pub fn n_types(&self) -> usize {
        self.type_to_id.len() + 2
    }
}

/// Deduplicate events by news id, keeping the first occurrence (which
/// defines the news content for the whole run).
fn distinct_news(events: &[RawEvent]) -> Vec<&RawEvent> {
    let mut seen = HashSet::new();
    events
        .iter()
        .filter(|e| seen.insert(e.news_id.as_str()))
        .collect()
}

/// Build vocabularies over the distinct news of `events`. Stop words are
/// removed before counting; words below `min_freq` map to the OOV id.
/// Entities and types are kept regardless of frequency.
pub fn build_vocab(
    events: &[RawEvent],
    min_freq: u32,
    stop_words: &BTreeSet<String>,
) -> Vocabulary {
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let news = distinct_news(events);
    let mut freq: HashMap<&str, u32> = HashMap::new();
    for ev in &news {
        for w in &ev.title {
            if !stop_words.contains(w) {
                *freq.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut vocab = Vocabulary {
        word_to_id: BTreeMap::new(),
        entity_to_id: BTreeMap::new(),
        type_to_id: BTreeMap::new(),
    };
    // Assign ids in order of first appearance so runs on identical input
    // produce identical ids.
    for ev in &news {
        for w in &ev.title {
            if stop_words.contains(w) || vocab.word_to_id.contains_key(w) {
                continue;
            }
            if freq[w.as_str()] >= min_freq {
                let id = vocab.word_to_id.len() as u32 + 2;
                vocab.word_to_id.insert(w.clone(), id);
            }
        }
        for e in &ev.entities {
            if !vocab.entity_to_id.contains_key(e) {
                let id = vocab.entity_to_id.len() as u32 + 2;
                vocab.entity_to_id.insert(e.clone(), id);
            }
        }
        for t in &ev.entity_types {
            if !vocab.type_to_id.contains_key(t) {
                let id = vocab.type_to_id.len() as u32 + 2;
                vocab.type_to_id.insert(t.clone(), id);
            }
        }
    }
    vocab
}

/// Fixed-length encoded news content. `news` is the dense internal index.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NewsRecord {
    pub news: u32,
    pub title_ids: Vec<u32>,
    pub entity_ids: Vec<u32>,
    pub type_ids: Vec<u32>,
}

/// Encode one event's content: stop words dropped, unknown tokens mapped to
/// OOV, sequences truncated or right-padded to exactly `m` (title) and `p`
/// (entities/types).
pub fn encode_news(
    event: &RawEvent,
    news: u32,
    vocab: &Vocabulary,
    m: usize,
    p: usize,
    stop_words: &BTreeSet<String>,
) -> NewsRecord {
    let mut title_ids: Vec<u32> = event
        .title
        .iter()
        .filter(|w| !stop_words.contains(*w))
        .map(|w| vocab.word_id(w))
        .take(m)
        .collect();
    title_ids.resize(m, PAD_ID);
    let mut entity_ids: Vec<u32> = event.entities.iter().map(|e| vocab.entity_id(e)).take(p).collect();
    let mut type_ids: Vec<u32> = event
        .entity_types
        .iter()
        .map(|t| vocab.type_id(t))
        .take(p)
        .collect();
    entity_ids.resize(p, PAD_ID);
    type_ids.resize(p, PAD_ID);
    NewsRecord {
        news,
        title_ids,
        entity_ids,
        type_ids,
    }
}

/// Click event with dense internal user/news indices.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct Event {
    pub user: u32,
    pub news: u32,
    pub timestamp: u64,
}

/// One labeled (user, news) example; logged clicks are positives, negatives
/// come from sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabeledExample {
    pub user: u32,
    pub news: u32,
    pub label: u8,
}

/// Table-1-style corpus statistics printed by the `prepare` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub news: usize,
    pub edges: usize,
    pub vocabulary: usize,
    pub entities: usize,
    pub avg_title_words: f64,
    pub avg_entities: f64,
}

/// Fully encoded corpus: vocabularies, dense user/news index maps, one
/// encoded record per distinct news, and all events in input order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub users: Vec<String>,
    pub news_ids: Vec<String>,
    pub news: Vec<NewsRecord>,
    pub events: Vec<Event>,
    pub stats: CorpusStats,
}

pub fn build_corpus(
    raw: &[RawEvent],
    min_freq: u32,
    stop_words: &BTreeSet<String>,
    m: usize,
    p: usize,
) -> Corpus {
    let vocab = build_vocab(raw, min_freq, stop_words);
    let mut user_index: HashMap<&str, u32> = HashMap::new();
    let mut news_index: HashMap<&str, u32> = HashMap::new();
    let mut users = Vec::new();
    let mut news_ids = Vec::new();
    let mut news = Vec::new();
    let mut events = Vec::with_capacity(raw.len());
    let mut edges = HashSet::new();
    let (mut title_words, mut entity_count) = (0usize, 0usize);

    for ev in raw {
        let user = *user_index.entry(ev.user_id.as_str()).or_insert_with(|| {
            users.push(ev.user_id.clone());
            (users.len() - 1) as u32
        });
        let n = match news_index.get(ev.news_id.as_str()) {
            Some(&n) => n,
            None => {
                let n = news_ids.len() as u32;
                news_index.insert(ev.news_id.as_str(), n);
                news_ids.push(ev.news_id.clone());
                news.push(encode_news(ev, n, &vocab, m, p, stop_words));
                title_words += ev.title.len();
                entity_count += ev.entities.len();
                n
            }
        };
        edges.insert((user, n));
        events.push(Event {
            user,
            news: n,
            timestamp: ev.timestamp,
        });
    }
    let n_news = news.len().max(1);
    let stats = CorpusStats {
        users: users.len(),
        news: news.len(),
        edges: edges.len(),
        vocabulary: vocab.word_to_id.len(),
        entities: vocab.entity_to_id.len(),
        avg_title_words: title_words as f64 / n_news as f64,
        avg_entities: entity_count as f64 / n_news as f64,
    };
    Corpus {
        vocab,
        users,
        news_ids,
        news,
        events,
        stats,
    }
}

/// Chronological 5:1:1 split. `valid_set`/`test_set` initially hold the
/// evaluation positives (negatives are appended by the preparation step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDataset {
    pub graph_part: Vec<Event>,
    pub train_part: Vec<Event>,
    pub eval_part: Vec<Event>,
    pub valid_set: Vec<LabeledExample>,
    pub test_set: Vec<LabeledExample>,
}

/// Sort by timestamp (stable, ties keep input order) and partition by
/// cumulative counts `floor(N*5/7)`, `floor(N*1/7)`, remainder. A seeded 20%
/// sample of the evaluation part becomes validation positives, the rest test
/// positives.
pub fn chronological_split<R: Rng>(
    events: &[Event],
    valid_fraction: f64,
    rng: &mut R,
) -> Result<SplitDataset> {
    let mut sorted: Vec<Event> = events.to_vec();
    sorted.sort_by_key(|e| e.timestamp);
    let n = sorted.len();
    let n_graph = n * 5 / 7;
    let n_train = n / 7;
    let n_eval = n - n_graph - n_train;
    if n_graph == 0 || n_train == 0 || n_eval == 0 {
        return Err(Error::Data(format!(
            "cannot form a 5:1:1 chronological split from {n} events (need at least 7)"
        )));
    }
    let eval_part: Vec<Event> = sorted.split_off(n_graph + n_train);
    let train_part: Vec<Event> = sorted.split_off(n_graph);
    let graph_part = sorted;

    let mut idx: Vec<usize> = (0..eval_part.len()).collect();
    idx.shuffle(rng);
    let n_valid = (eval_part.len() as f64 * valid_fraction).floor() as usize;
    let mut in_valid = vec![false; eval_part.len()];
    for &i in idx.iter().take(n_valid) {
        in_valid[i] = true;
    }
    let (mut valid_set, mut test_set) = (Vec::new(), Vec::new());
    for (i, ev) in eval_part.iter().enumerate() {
        let ex = LabeledExample {
            user: ev.user,
            news: ev.news,
            label: 1,
        };
        if in_valid[i] {
            valid_set.push(ex);
        } else {
            test_set.push(ex);
        }
    }
    Ok(SplitDataset {
        graph_part,
        train_part,
        eval_part,
        valid_set,
        test_set,
    })
}

/// Pair every evaluation positive with one sampled negative: a uniform draw
/// from all news the user never clicked anywhere in the log. Negatives are
/// appended after the positives of each set. Returns the number of positives
/// that could not be paired (user clicked every news).
pub fn append_eval_negatives<R: Rng>(
    split: &mut SplitDataset,
    n_users: usize,
    n_news: usize,
    rng: &mut R,
) -> usize {
    let mut clicked: Vec<HashSet<u32>> = vec![HashSet::new(); n_users];
    for ev in split
        .graph_part
        .iter()
        .chain(&split.train_part)
        .chain(&split.eval_part)
    {
        clicked[ev.user as usize].insert(ev.news);
    }
    let candidates: Vec<u32> = (0..n_news as u32).collect();
    let mut skipped = 0usize;
    for set in [&mut split.valid_set, &mut split.test_set] {
        let positives: Vec<LabeledExample> = set.clone();
        for pos in positives {
            match sample_negative(&candidates, &clicked[pos.user as usize], rng) {
                Some(news) => set.push(LabeledExample {
                    user: pos.user,
                    news,
                    label: 0,
                }),
                None => skipped += 1,
            }
        }
    }
    skipped
}

/// Uniform draw from `candidates` minus the user's clicked set; `None` when
/// no candidate is eligible (the caller skips that positive and counts it).
pub fn sample_negative<R: Rng>(
    candidates: &[u32],
    clicked: &HashSet<u32>,
    rng: &mut R,
) -> Option<u32> {
    let eligible: Vec<u32> = candidates
        .iter()
        .copied()
        .filter(|n| !clicked.contains(n))
        .collect();
    if eligible.is_empty() {
        None
    } else {
        Some(eligible[rng.gen_range(0..eligible.len())])
    }
}

/// A user's clicked-news window, oldest first, capped at `h_max` items.
/// Pushing an already-present news id is a no-op; pushing past the cap drops
/// the oldest entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserHistory {
    pub user: u32,
    clicked: Vec<u32>,
    cap: usize,
}

impl UserHistory {
    pub fn new(user: u32, cap: usize) -> Self {
        UserHistory {
            user,
            clicked: Vec::new(),
            cap,
        }
    }

    pub fn push(&mut self, news: u32) {
        if self.clicked.contains(&news) {
            return;
        }
        if self.clicked.len() == self.cap {
            self.clicked.remove(0);
        }
        self.clicked.push(news);
    }

    pub fn items(&self) -> &[u32] {
        &self.clicked
    }

    pub fn contains(&self, news: u32) -> bool {
        self.clicked.contains(&news)
    }

    pub fn len(&self) -> usize {
        self.clicked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicked.is_empty()
    }
}

/// Initial per-user histories from the graph part (chronological, capped).
pub fn initial_histories(n_users: usize, graph_part: &[Event], h_max: usize) -> Vec<UserHistory> {
    let mut histories: Vec<UserHistory> = (0..n_users)
        .map(|u| UserHistory::new(u as u32, h_max))
        .collect();
    for ev in graph_part {
        histories[ev.user as usize].push(ev.news);
    }
    histories
}
