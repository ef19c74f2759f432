//! Seeded synthetic news-click corpus with planted content clusters.
//!
//! The generator produces a raw click log with enough structure to exercise
//! every part of the recommender, while staying fully deterministic:
//!
//! * **Planted clusters.** Words live on a ring; each cluster owns an arc and
//!   adjacent arcs overlap. A news article samples its title from a sliding
//!   window inside its cluster's arc, so nearby windows share many words,
//!   distant same-cluster windows share none directly and are connected only
//!   through chains of intermediate articles. A few "generic" words per title
//!   come from a global pool and create scattered, pairwise cross-cluster
//!   similarity (clickbait phrasing every outlet uses).
//! * **Staggered release.** Article `n` is published at `n/n_news` of the
//!   horizon and clicks are recency-weighted, so late clicks concentrate on
//!   fresh articles that have little or no interaction history.
//! * **Skewed popularity and activity.** Zipf weights over articles (with a
//!   seeded rank permutation) and over users.
//! * **Mixed interests.** A configurable fraction of users follows two
//!   clusters instead of one.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::corpus::RawEvent;
use crate::error::{Error, Result};

/// Knobs of the synthetic corpus generator. `Default` gives the standard
/// benchmark corpus: 2,000 users, 300 news, 8 clusters, ~40k clicks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_news: usize,
    pub n_clusters: usize,
    pub n_events: usize,
    /// Words in each cluster's arc of the vocabulary ring.
    pub arc_len: usize,
    /// Ring distance between consecutive arc starts; `arc_len - arc_stride`
    /// words are shared with the next cluster.
    pub arc_stride: usize,
    /// Width of the per-article word window inside its cluster's arc.
    pub window: usize,
    /// Distinct in-window words per title (excluding generic words).
    pub title_words: usize,
    /// Fraction of articles with a thin title (`short_title_words` topical
    /// words instead of `title_words`). Thin articles have too little text for
    /// direct similarity to work and depend on multi-hop neighbors.
    pub short_title_fraction: f64,
    /// Topical words in a thin title.
    pub short_title_words: usize,
    /// Entities on a thin article (rich articles carry `entities_per_news`).
    pub short_title_entities: usize,
    /// Size of the global generic-word pool.
    pub generic_words: usize,
    /// Generic words carried by every title; collisions create spurious
    /// cross-cluster similarity.
    pub generics_per_title: usize,
    /// Entities in each cluster's pool.
    pub entities_per_cluster: usize,
    /// Distinct entities per article, drawn from its cluster's pool.
    pub entities_per_news: usize,
    /// Zipf exponent for user activity.
    pub user_zipf: f64,
    /// How late low-activity users join, as a fraction of the horizon. With
    /// skew `s`, the least active user starts clicking around `s * horizon`,
    /// so sparse users skew towards fresh articles and short histories.
    pub cold_start_skew: f64,
    /// Zipf exponent for article popularity.
    pub news_zipf: f64,
    /// Fraction of users with a second interest cluster.
    pub dual_user_fraction: f64,
    /// Click-weight half-life as a fraction of the time horizon; smaller
    /// values focus clicks on freshly released articles.
    pub recency_half_life: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_users: 2_000,
            n_news: 300,
            n_clusters: 8,
            n_events: 40_000,
            arc_len: 60,
            arc_stride: 45,
            window: 12,
            title_words: 7,
            short_title_fraction: 0.0,
            short_title_words: 2,
            short_title_entities: 1,
            generic_words: 40,
            generics_per_title: 2,
            entities_per_cluster: 12,
            entities_per_news: 3,
            user_zipf: 0.9,
            cold_start_skew: 0.0,
            news_zipf: 1.0,
            dual_user_fraction: 0.4,
            recency_half_life: 0.12,
        }
    }
}

/// Time horizon of the synthetic log; timestamps lie in `[0, HORIZON)`.
pub const HORIZON: u64 = 1_000_000;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_news == 0 || self.n_clusters == 0 || self.n_events == 0 {
            return Err(Error::Config(
                "synthetic corpus needs at least one user, news, cluster and event".into(),
            ));
        }
        if self.window > self.arc_len {
            return Err(Error::Config(format!(
                "word window ({}) cannot exceed the cluster arc ({})",
                self.window, self.arc_len
            )));
        }
        if self.title_words > self.window {
            return Err(Error::Config(format!(
                "cannot draw {} distinct words from a window of {}",
                self.title_words, self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.short_title_fraction) {
            return Err(Error::Config("short-title fraction must lie in [0, 1]".into()));
        }
        if self.short_title_words == 0 || self.short_title_words > self.title_words {
            return Err(Error::Config(format!(
                "thin titles need 1..={} topical words, got {}",
                self.title_words, self.short_title_words
            )));
        }
        if self.generics_per_title == 0 || self.generics_per_title > self.generic_words {
            return Err(Error::Config(format!(
                "cannot place {} generic words per title from a pool of {}",
                self.generics_per_title, self.generic_words
            )));
        }
        if self.entities_per_news > self.entities_per_cluster {
            return Err(Error::Config(format!(
                "cannot draw {} distinct entities from a pool of {}",
                self.entities_per_news, self.entities_per_cluster
            )));
        }
        if self.short_title_entities == 0 || self.short_title_entities > self.entities_per_news {
            return Err(Error::Config(format!(
                "thin articles need 1..={} entities, got {}",
                self.entities_per_news, self.short_title_entities
            )));
        }
        if !(0.0..=1.0).contains(&self.dual_user_fraction) {
            return Err(Error::Config("dual-user fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.cold_start_skew) {
            return Err(Error::Config("cold-start skew must lie in [0, 1)".into()));
        }
        if self.recency_half_life <= 0.0 {
            return Err(Error::Config("recency half-life must be positive".into()));
        }
        Ok(())
    }
}

/// The generator's hidden state, returned alongside the log for tests and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Cluster of each article (index = article number).
    pub news_cluster: Vec<usize>,
    /// Release timestamp of each article.
    pub release: Vec<u64>,
    /// Popularity rank of each article (0 = most popular).
    pub popularity_rank: Vec<usize>,
    /// Primary interest cluster of each user.
    pub user_primary: Vec<usize>,
    /// Secondary interest cluster, for dual-interest users.
    pub user_secondary: Vec<Option<usize>>,
}

struct NewsContent {
    title: Vec<String>,
    entities: Vec<String>,
    entity_types: Vec<String>,
}

/// Sample `count` distinct values from `0..pool` (pool small, count ≤ pool).
fn sample_distinct<R: Rng>(rng: &mut R, pool: usize, count: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, pool, count).into_vec()
}

/// Generate the click log together with its ground truth.
pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(Vec<RawEvent>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ring = cfg.n_clusters * cfg.arc_stride;

    // Article popularity: Zipf over a seeded rank permutation, so popularity
    // is independent of cluster and release order.
    let mut popularity_rank: Vec<usize> = (0..cfg.n_news).collect();
    use rand::seq::SliceRandom;
    popularity_rank.shuffle(&mut rng);
    let pop_weight: Vec<f64> = popularity_rank
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(cfg.news_zipf))
        .collect();

    // Fixed per-article content. Clusters interleave over article ids so each
    // cluster keeps releasing fresh articles across the whole horizon, and the
    // word window drifts along the cluster arc in release order: consecutive
    // releases overlap heavily, while articles far apart in time share little
    // vocabulary. Adjacent windows chain the arc together even when its two
    // ends have no words in common.
    let mut news_cluster = Vec::with_capacity(cfg.n_news);
    let mut release = Vec::with_capacity(cfg.n_news);
    let mut contents = Vec::with_capacity(cfg.n_news);
    let span = cfg.arc_len - cfg.window;
    let per_cluster = cfg.n_news.div_ceil(cfg.n_clusters);
    for n in 0..cfg.n_news {
        let cluster = n % cfg.n_clusters;
        news_cluster.push(cluster);
        release.push((n as u64) * HORIZON / (cfg.n_news as u64));

        let drift = if per_cluster > 1 {
            (n / cfg.n_clusters) * span / (per_cluster - 1)
        } else {
            0
        };
        let window_start = (drift + rng.gen_range(0..=2)).min(span);
        let thin = rng.gen::<f64>() < cfg.short_title_fraction;
        let n_topical = if thin {
            cfg.short_title_words
        } else {
            cfg.title_words
        };
        let n_entities = if thin {
            cfg.short_title_entities
        } else {
            cfg.entities_per_news
        };
        let mut title: Vec<String> = sample_distinct(&mut rng, cfg.window, n_topical)
            .into_iter()
            .map(|off| {
                let word = (cluster * cfg.arc_stride + window_start + off) % ring;
                format!("w{word}")
            })
            .collect();
        for g in sample_distinct(&mut rng, cfg.generic_words, cfg.generics_per_title) {
            title.push(format!("g{g}"));
        }
        title.shuffle(&mut rng);

        let entities: Vec<String> =
            sample_distinct(&mut rng, cfg.entities_per_cluster, n_entities)
                .into_iter()
                .map(|e| format!("e{cluster}_{e}"))
                .collect();
        // Types are popularity tiers, deliberately uncorrelated with the
        // cluster: cluster identity must be learned from words and entities.
        let tier = popularity_rank[n] * 4 / cfg.n_news;
        let entity_types = vec![format!("tier{tier}"); entities.len()];
        contents.push(NewsContent {
            title,
            entities,
            entity_types,
        });
    }

    // Users: Zipf activity by id, one or two interest clusters. Low-activity
    // users optionally join late (cold-start skew); user ids double as the
    // activity ranking, so the join time grows with the id.
    let activity: Vec<f64> = (0..cfg.n_users)
        .map(|u| 1.0 / ((u + 1) as f64).powf(cfg.user_zipf))
        .collect();
    let join: Vec<u64> = (0..cfg.n_users)
        .map(|u| {
            let frac = (u as f64 / cfg.n_users as f64).powf(1.5);
            (HORIZON as f64 * cfg.cold_start_skew * frac) as u64
        })
        .collect();
    let user_dist = WeightedIndex::new(&activity)
        .map_err(|e| Error::Config(format!("bad user activity weights: {e}")))?;
    let mut user_primary = Vec::with_capacity(cfg.n_users);
    let mut user_secondary = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let primary = rng.gen_range(0..cfg.n_clusters);
        user_primary.push(primary);
        let secondary = if cfg.n_clusters > 1 && rng.gen::<f64>() < cfg.dual_user_fraction {
            let mut s = rng.gen_range(0..cfg.n_clusters - 1);
            if s >= primary {
                s += 1;
            }
            Some(s)
        } else {
            None
        };
        user_secondary.push(secondary);
    }

    // Per-cluster article lists come out release-ordered because release time
    // is monotone in the article id.
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_clusters];
    for (n, &c) in news_cluster.iter().enumerate() {
        by_cluster[c].push(n);
    }

    let half_life = cfg.recency_half_life * HORIZON as f64;
    let mut events = Vec::with_capacity(cfg.n_events);
    let mut weights: Vec<(usize, f64)> = Vec::new();
    for _ in 0..cfg.n_events {
        let user = user_dist.sample(&mut rng);
        let t = rng.gen_range(join[user]..HORIZON);
        let cluster = match user_secondary[user] {
            Some(s) if rng.gen::<f64>() < 0.5 => s,
            _ => user_primary[user],
        };

        // Candidates: released articles of the chosen cluster, weighted by
        // popularity and recency. Before the cluster's first release, fall
        // back to every released article.
        weights.clear();
        let collect = |pool: &[usize], weights: &mut Vec<(usize, f64)>| {
            for &n in pool {
                if release[n] > t {
                    break;
                }
                let age = (t - release[n]) as f64;
                weights.push((n, pop_weight[n] * 0.5f64.powf(age / half_life)));
            }
        };
        collect(&by_cluster[cluster], &mut weights);
        if weights.is_empty() {
            let all: Vec<usize> = (0..cfg.n_news).collect();
            collect(&all, &mut weights);
        }
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = weights[weights.len() - 1].0;
        for &(n, w) in &weights {
            pick -= w;
            if pick <= 0.0 {
                chosen = n;
                break;
            }
        }

        let content = &contents[chosen];
        events.push(RawEvent {
            user_id: format!("u{user:04}"),
            news_id: format!("n{chosen:03}"),
            timestamp: t,
            title: content.title.clone(),
            entities: content.entities.clone(),
            entity_types: content.entity_types.clone(),
        });
    }

    Ok((
        events,
        GroundTruth {
            news_cluster,
            release,
            popularity_rank,
            user_primary,
            user_secondary,
        },
    ))
}

/// Generate only the click log (see [`generate_with_truth`]).
pub fn generate(cfg: &SynthConfig) -> Result<Vec<RawEvent>> {
    Ok(generate_with_truth(cfg)?.0)
}

/// Write events as line-delimited JSON, the format `ingest_events` reads.
pub fn write_jsonl(path: &Path, events: &[RawEvent]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn small() -> SynthConfig {
        SynthConfig {
            seed: 11,
            n_users: 200,
            n_news: 80,
            n_events: 4_000,
            ..SynthConfig::default()
        }
    }

    fn news_index(id: &str) -> usize {
        id[1..].parse().unwrap()
    }

    #[test]
    fn same_seed_reproduces_the_log() {
        let cfg = small();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                serde_json::to_string(x).unwrap(),
                serde_json::to_string(y).unwrap()
            );
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&small()).unwrap();
        let b = generate(&SynthConfig {
            seed: 12,
            ..small()
        })
        .unwrap();
        let same = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x.user_id == y.user_id && x.news_id == y.news_id)
            .count();
        assert!(same < a.len() / 2, "logs should diverge, {same} equal pairs");
    }

    #[test]
    fn shapes_and_ranges() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        assert_eq!(events.len(), cfg.n_events);
        assert_eq!(truth.news_cluster.len(), cfg.n_news);
        assert_eq!(truth.user_primary.len(), cfg.n_users);
        for ev in &events {
            assert!(ev.timestamp < HORIZON);
            assert_eq!(ev.entities.len(), ev.entity_types.len());
            assert_eq!(ev.title.len(), cfg.title_words + cfg.generics_per_title);
            let generics = ev.title.iter().filter(|w| w.starts_with('g')).count();
            assert_eq!(generics, cfg.generics_per_title, "every title carries generic words");
        }
    }

    #[test]
    fn no_clicks_before_release() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        for ev in &events {
            let n = news_index(&ev.news_id);
            assert!(
                ev.timestamp >= truth.release[n],
                "{} clicked at {} before release {}",
                ev.news_id,
                ev.timestamp,
                truth.release[n]
            );
        }
    }

    #[test]
    fn clicks_are_recency_weighted() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        let mean_age: f64 = events
            .iter()
            .map(|ev| (ev.timestamp - truth.release[news_index(&ev.news_id)]) as f64)
            .sum::<f64>()
            / events.len() as f64;
        // A uniform (recency-blind) chooser would average roughly half the
        // mean article age; the decay should pull it well below that.
        assert!(
            mean_age < 0.22 * HORIZON as f64,
            "mean click age {mean_age} is not recency-weighted"
        );
    }

    #[test]
    fn word_usage_respects_cluster_arcs() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        let ring = cfg.n_clusters * cfg.arc_stride;
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        for ev in &events {
            let c = truth.news_cluster[news_index(&ev.news_id)];
            for w in &ev.title {
                if let Some(idx) = w.strip_prefix('w') {
                    seen.insert((c, idx.parse().unwrap()));
                }
            }
        }
        for &(c, w) in &seen {
            let start = c * cfg.arc_stride;
            let offset = (w + ring - start) % ring;
            assert!(
                offset < cfg.arc_len,
                "cluster {c} used word w{w} outside its arc"
            );
        }
    }

    #[test]
    fn same_cluster_titles_overlap_more() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        let mut title_sets: HashMap<usize, HashSet<&str>> = HashMap::new();
        for ev in &events {
            title_sets
                .entry(news_index(&ev.news_id))
                .or_insert_with(|| ev.title.iter().map(String::as_str).collect());
        }
        let ids: Vec<usize> = title_sets.keys().copied().collect();
        let (mut same, mut cross) = ((0.0, 0usize), (0.0, 0usize));
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let inter = title_sets[&a].intersection(&title_sets[&b]).count() as f64;
                if truth.news_cluster[a] == truth.news_cluster[b] {
                    same = (same.0 + inter, same.1 + 1);
                } else {
                    cross = (cross.0 + inter, cross.1 + 1);
                }
            }
        }
        let same_avg = same.0 / same.1 as f64;
        let cross_avg = cross.0 / cross.1 as f64;
        assert!(
            same_avg > cross_avg + 0.5,
            "planted clusters too weak: same {same_avg:.3} vs cross {cross_avg:.3}"
        );
    }

    #[test]
    fn activity_is_head_heavy() {
        let cfg = small();
        let events = generate(&cfg).unwrap();
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for ev in &events {
            *per_user.entry(ev.user_id.as_str()).or_default() += 1;
        }
        let mut counts: Vec<usize> = per_user.values().copied().collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let head: usize = counts.iter().take(cfg.n_users / 10).sum();
        assert!(
            head as f64 > 0.3 * events.len() as f64,
            "top decile holds only {head} of {} events",
            events.len()
        );
    }

    #[test]
    fn dual_users_click_two_clusters() {
        let cfg = small();
        let (events, truth) = generate_with_truth(&cfg).unwrap();
        let mut clusters_hit: HashMap<usize, HashSet<usize>> = HashMap::new();
        let mut clicks: HashMap<usize, usize> = HashMap::new();
        for ev in &events {
            let u: usize = ev.user_id[1..].parse().unwrap();
            let c = truth.news_cluster[news_index(&ev.news_id)];
            clusters_hit.entry(u).or_default().insert(c);
            *clicks.entry(u).or_default() += 1;
        }
        let active_duals: Vec<usize> = (0..cfg.n_users)
            .filter(|&u| truth.user_secondary[u].is_some() && clicks.get(&u).copied().unwrap_or(0) >= 10)
            .collect();
        assert!(!active_duals.is_empty());
        let both = active_duals
            .iter()
            .filter(|&&u| clusters_hit[&u].len() >= 2)
            .count();
        assert!(
            both * 10 >= active_duals.len() * 8,
            "only {both} of {} active dual users hit both clusters",
            active_duals.len()
        );
    }

    #[test]
    fn jsonl_round_trips_through_ingest() {
        let cfg = SynthConfig {
            n_events: 200,
            n_users: 30,
            n_news: 40,
            ..small()
        };
        let events = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        write_jsonl(&path, &events).unwrap();
        let (parsed, stats) = crate::corpus::ingest_events(&path).unwrap();
        assert_eq!(stats.parsed, events.len());
        assert_eq!(stats.malformed, 0);
        assert_eq!(parsed.len(), events.len());
        assert_eq!(parsed[0].user_id, events[0].user_id);
        assert_eq!(parsed[0].title, events[0].title);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (bad, what) in [
            (
                SynthConfig {
                    window: 100,
                    arc_len: 60,
                    ..SynthConfig::default()
                },
                "window wider than arc",
            ),
            (
                SynthConfig {
                    title_words: 20,
                    window: 12,
                    ..SynthConfig::default()
                },
                "more title words than the window holds",
            ),
            (
                SynthConfig {
                    n_events: 0,
                    ..SynthConfig::default()
                },
                "zero events",
            ),
            (
                SynthConfig {
                    recency_half_life: 0.0,
                    ..SynthConfig::default()
                },
                "zero half-life",
            ),
        ] {
            assert!(generate(&bad).is_err(), "{what} must be rejected");
        }
    }
}
