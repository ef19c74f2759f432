//! The pipeline stages behind the command-line interface: synthesize a
//! corpus, prepare it, build the similarity graphs, train, evaluate, compare
//! checkpoints, and inspect expansions.
//!
//! Artifacts live under the configured workdir with fixed names so the
//! stages compose without extra flags:
//!
//! ```text
//! workdir/
//!   prepared.bin        encoded corpus + chronological split (prepare)
//!   graph.knn           direct content-similarity graph      (build-graph)
//!   graph.walk          random-walk similarity graph         (build-graph)
//!   ckpt/best.ckpt      best-epoch parameters                (train)
//!   ckpt/histories.json user histories at the best epoch     (train)
//!   ckpt/manifest.json  run provenance                       (train)
//!   reports/metrics.jsonl  per-epoch loss and validation metrics
//!   reports/eval.json      test-set metrics                  (eval)
//!   reports/sparsity.json  checkpoint comparison             (report)
//! ```
//!
//! Every stage is deterministic given the same config: rerunning produces
//! byte-identical artifacts (manifest timestamps excepted).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfgnn::{sample_adjacency, BipartiteGraph, GatAdjacency};
use crate::config::RunConfig;
use crate::corpus::{
    append_eval_negatives, build_corpus, chronological_split, ingest_events, initial_histories,
    load_prepared, save_prepared, CorpusStats, IngestStats, Prepared, UserHistory,
};
use crate::error::{Error, Result};
use crate::expander::{
    build_knn_graph, build_walk_graph, load_graph, random_walk_similarity, save_graph,
    user_expansion_scores, ContentVector, GraphKind, SimilarityGraph, WalkParams,
};
use crate::metrics::{
    auc_from_slices, f1_from_slices, gauc, render_sparsity_table, sparsity_report, DegreeAxis,
    EvalRecord, SparsityRow,
};
use crate::model::{AblationSwitches, Batch, FlatLists, Model, ModelDims};
use crate::synth;
use crate::tafa::{dump_attention, AttentionEntry, ItemOrigin, View};
use crate::tensor::{load_checkpoint, save_checkpoint, Tape};
use crate::training::{
    news_list, score_examples, train, user_list, EpochMetrics, ModelContext, TrainSettings,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed artifact locations under a workdir.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        Workspace {
            root: root.to_path_buf(),
        }
    }

    pub fn prepared(&self) -> PathBuf {
        self.root.join("prepared.bin")
    }
    pub fn graph(&self, kind: GraphKind) -> PathBuf {
        match kind {
            GraphKind::Knn => self.root.join("graph.knn"),
            GraphKind::Walk => self.root.join("graph.walk"),
        }
    }
    pub fn ckpt_dir(&self) -> PathBuf {
        self.root.join("ckpt")
    }
    pub fn best_checkpoint(&self) -> PathBuf {
        self.ckpt_dir().join("best.ckpt")
    }
    pub fn histories(&self) -> PathBuf {
        self.ckpt_dir().join("histories.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.ckpt_dir().join("manifest.json")
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn metrics_log(&self) -> PathBuf {
        self.reports_dir().join("metrics.jsonl")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.reports_dir().join("eval.json")
    }
    pub fn sparsity_report_file(&self) -> PathBuf {
        self.reports_dir().join("sparsity.json")
    }
}

/// Generate the synthetic click log configured under `[synth]` and write it
/// to the configured events path.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    let events = synth::generate(&config.synth)?;
    if let Some(dir) = config.paths.events.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    synth::write_jsonl(&config.paths.events, &events)?;
    Ok(config.paths.events.clone())
}

/// What `prepare` did, for display and tests.
#[derive(Debug, Clone, Serialize)]
pub struct PrepareSummary {
    pub ingest: IngestStats,
    pub stats: CorpusStats,
    pub graph_events: usize,
    pub train_events: usize,
    pub valid_examples: usize,
    pub test_examples: usize,
    pub skipped_eval_positives: usize,
    pub prepared_path: PathBuf,
}

impl PrepareSummary {
    /// The corpus counters as an aligned text block.
    pub fn stats_block(&self) -> String {
        let s = &self.stats;
        format!(
            "users            {}\n\
             news             {}\n\
             edges            {}\n\
             vocabulary       {}\n\
             entities         {}\n\
             avg title words  {:.2}\n\
             avg entities     {:.2}",
            s.users, s.news, s.edges, s.vocabulary, s.entities, s.avg_title_words, s.avg_entities
        )
    }
}

/// Ingest the event log, encode the corpus, split it chronologically, pair
/// every evaluation positive with a sampled negative, and persist the result.
pub fn cmd_prepare(config: &RunConfig) -> Result<PrepareSummary> {
    let (raw, ingest) = ingest_events(&config.paths.events)?;
    if raw.is_empty() {
        return Err(Error::Data(format!(
            "{}: no events",
            config.paths.events.display()
        )));
    }
    let stop_words: BTreeSet<String> = config.corpus.stop_words.iter().cloned().collect();
    let corpus = build_corpus(
        &raw,
        config.corpus.min_freq,
        &stop_words,
        config.corpus.m,
        config.corpus.p,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.corpus.seed);
    let mut split = chronological_split(&corpus.events, config.corpus.valid_fraction, &mut rng)?;
    let skipped = append_eval_negatives(
        &mut split,
        corpus.users.len(),
        corpus.news_ids.len(),
        &mut rng,
    );

    std::fs::create_dir_all(&config.paths.workdir)?;
    let ws = Workspace::new(&config.paths.workdir);
    let prepared = Prepared {
        m: config.corpus.m,
        p: config.corpus.p,
        h_max: config.corpus.h_max,
        min_freq: config.corpus.min_freq,
        seed: config.corpus.seed,
        skipped_eval_positives: skipped,
        corpus,
        split,
    };
    save_prepared(&ws.prepared(), &prepared)?;
    Ok(PrepareSummary {
        ingest,
        stats: prepared.corpus.stats.clone(),
        graph_events: prepared.split.graph_part.len(),
        train_events: prepared.split.train_part.len(),
        valid_examples: prepared.split.valid_set.len(),
        test_examples: prepared.split.test_set.len(),
        skipped_eval_positives: skipped,
        prepared_path: ws.prepared(),
    })
}

/// Build the direct content-similarity graph and the random-walk graph over
/// it, and write both.
pub fn cmd_build_graph(config: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let ws = Workspace::new(&config.paths.workdir);
    let prepared = load_prepared(&ws.prepared())?;
    if prepared.corpus.news.is_empty() {
        return Err(Error::Data("prepared corpus has no news".into()));
    }
    let contents: Vec<ContentVector> = prepared
        .corpus
        .news
        .iter()
        .map(|rec| ContentVector::from_record(rec, prepared.corpus.vocab.n_words()))
        .collect();
    let knn = build_knn_graph(&contents, config.expander.k);
    let knn_path = ws.graph(GraphKind::Knn);
    save_graph(&knn_path, &knn)?;

    let walk_scores = random_walk_similarity(
        &knn,
        &WalkParams {
            n_walk: config.expander.n_walk,
            p_restart: config.expander.p_restart,
            d_depth: config.expander.d_depth,
            seed: config.expander.seed,
        },
    );
    let walk = build_walk_graph(&walk_scores, config.expander.k);
    let walk_path = ws.graph(GraphKind::Walk);
    save_graph(&walk_path, &walk)?;
    Ok((knn_path, walk_path))
}

/// Provenance written next to every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    /// Wall-clock seconds since the epoch; the only non-reproducible field.
    pub created_unix: u64,
    pub best_epoch: usize,
    /// `None` when the run diverged before its first validation pass.
    pub best_f1: Option<f64>,
    pub epochs_run: usize,
    pub diverged: bool,
    pub config: RunConfig,
}

/// What `train` did.
#[derive(Debug)]
pub struct TrainSummary {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub checkpoint: PathBuf,
    pub metrics_log: PathBuf,
}

/// Everything shared by the stages that run the model.
struct LoadedRun {
    prepared: Prepared,
    graph: SimilarityGraph,
    adj: GatAdjacency,
    ablation: AblationSwitches,
    dims: ModelDims,
}

fn load_run(config: &RunConfig, ws: &Workspace, graph_kind: GraphKind) -> Result<LoadedRun> {
    let prepared = load_prepared(&ws.prepared())?;
    let graph_path = ws.graph(graph_kind);
    if !graph_path.exists() {
        return Err(Error::Data(format!(
            "{} not found; run build-graph first",
            graph_path.display()
        )));
    }
    let graph = load_graph(&graph_path)?;
    let n_users = prepared.corpus.users.len();
    let n_news = prepared.corpus.news_ids.len();
    let bipartite = BipartiteGraph::from_events(&prepared.split.graph_part, n_users, n_news);
    let adj = sample_adjacency(
        &bipartite,
        config.model.neighbor_cap,
        config.model.layers,
        config.train.seed,
    );
    let ablation = AblationSwitches {
        enable_ne: config.ablation.enable_ne,
        enable_tafa: config.ablation.enable_tafa,
        graph_kind,
    };
    let dims = ModelDims {
        d: config.model.d,
        heads: config.model.heads,
        d_h: config.model.d_h,
        n1: config.model.n1,
        n2: config.model.n2,
        m: prepared.m,
        p: prepared.p,
        layers: config.model.layers,
        tau: config.model.tau,
        n_users,
        n_news,
        n_words: prepared.corpus.vocab.n_words(),
        n_entities: prepared.corpus.vocab.n_entities(),
        n_types: prepared.corpus.vocab.n_types(),
    };
    Ok(LoadedRun {
        prepared,
        graph,
        adj,
        ablation,
        dims,
    })
}

fn write_metrics_log(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut text = String::new();
    for m in metrics {
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Train under the configured ablation and persist the best checkpoint, the
/// matching user histories, a manifest, and the per-epoch metric log. A
/// diverged run still writes its last finite checkpoint, then fails.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    let ws = Workspace::new(&config.paths.workdir);
    let run = load_run(config, &ws, config.ablation.graph)?;
    let mut model = Model::with_init_scale(run.dims.clone(), config.train.seed, config.model.init_scale)?;
    let ctx = ModelContext {
        records: &run.prepared.corpus.news,
        graph: &run.graph,
        adj: &run.adj,
        ablation: run.ablation,
        expansion_k: config.expander.expand_k,
        batch_size: config.train.batch_size,
    };
    let settings = TrainSettings {
        lr: config.train.lr,
        lambda: config.train.lambda,
        epochs: config.train.epochs,
        patience: config.train.patience,
        seed: config.train.seed,
        h_max: run.prepared.h_max,
    };
    let outcome = train(&mut model, &ctx, &run.prepared.split, &settings)?;

    std::fs::create_dir_all(ws.ckpt_dir())?;
    std::fs::create_dir_all(ws.reports_dir())?;
    save_checkpoint(&ws.best_checkpoint(), &outcome.best)?;
    std::fs::write(
        ws.histories(),
        serde_json::to_string(&outcome.histories)?,
    )?;
    let manifest = TrainManifest {
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        best_epoch: outcome.best_epoch,
        best_f1: (!outcome.best_f1.is_nan()).then_some(outcome.best_f1),
        epochs_run: outcome.metrics.len(),
        diverged: outcome.diverged,
        config: config.clone(),
    };
    std::fs::write(ws.manifest(), serde_json::to_string_pretty(&manifest)?)?;
    write_metrics_log(&ws.metrics_log(), &outcome.metrics)?;

    if outcome.diverged {
        return Err(Error::Numeric(format!(
            "training diverged after epoch {}; last finite checkpoint saved to {}",
            outcome.metrics.len(),
            ws.best_checkpoint().display()
        )));
    }
    Ok(TrainSummary {
        metrics: outcome.metrics,
        best_epoch: outcome.best_epoch,
        best_f1: outcome.best_f1,
        checkpoint: ws.best_checkpoint(),
        metrics_log: ws.metrics_log(),
    })
}

/// Test-set metrics of one checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub checkpoint: PathBuf,
    pub records: usize,
    pub auc: f64,
    pub f1: f64,
    pub gauc: f64,
}

/// Distinct-edge degrees over the graph and train parts: how many distinct
/// news each user clicked, and how many distinct users clicked each news,
/// during the interval the model could learn from.
fn training_degrees(prepared: &Prepared) -> (Vec<u32>, Vec<u32>) {
    let mut edges = BTreeSet::new();
    for ev in prepared
        .split
        .graph_part
        .iter()
        .chain(&prepared.split.train_part)
    {
        edges.insert((ev.user, ev.news));
    }
    let mut user_degree = vec![0u32; prepared.corpus.users.len()];
    let mut news_degree = vec![0u32; prepared.corpus.news_ids.len()];
    for (u, n) in edges {
        user_degree[u as usize] += 1;
        news_degree[n as usize] += 1;
    }
    (user_degree, news_degree)
}

fn load_histories(path: &Path) -> Result<Vec<UserHistory>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Score the test set under one checkpoint, using the manifest written next
/// to it for the ablation switches it was trained with.
fn score_checkpoint(
    config: &RunConfig,
    ws: &Workspace,
    checkpoint: &Path,
) -> Result<(Vec<EvalRecord>, AblationSwitches)> {
    let ckpt_dir = checkpoint
        .parent()
        .ok_or_else(|| Error::Data(format!("{}: no parent directory", checkpoint.display())))?;
    let manifest_path = ckpt_dir.join("manifest.json");
    let manifest: TrainManifest = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path).map_err(|e| {
            Error::Data(format!(
                "cannot read manifest {}: {e}",
                manifest_path.display()
            ))
        })?,
    )?;
    let histories = load_histories(&ckpt_dir.join("histories.json"))?;

    let run = load_run(&manifest.config, ws, manifest.config.ablation.graph)?;
    let mut model = Model::with_init_scale(
        run.dims.clone(),
        manifest.config.train.seed,
        manifest.config.model.init_scale,
    )?;
    model.params.restore(&load_checkpoint(checkpoint)?)?;
    let ctx = ModelContext {
        records: &run.prepared.corpus.news,
        graph: &run.graph,
        adj: &run.adj,
        ablation: run.ablation,
        expansion_k: manifest.config.expander.expand_k,
        batch_size: manifest.config.train.batch_size,
    };
    let scores = score_examples(&model, &ctx, &histories, &run.prepared.split.test_set)?;
    let (user_degree, news_degree) = training_degrees(&run.prepared);
    let records = run
        .prepared
        .split
        .test_set
        .iter()
        .zip(&scores)
        .map(|(ex, &score)| EvalRecord {
            user_id: ex.user,
            news_id: ex.news,
            score,
            label: ex.label,
            user_degree: user_degree[ex.user as usize],
            news_degree: news_degree[ex.news as usize],
        })
        .collect();
    let _ = config;
    Ok((records, run.ablation))
}

/// Evaluate a checkpoint (default: the workdir's own) on the test set.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalSummary> {
    let ws = Workspace::new(&config.paths.workdir);
    let default = ws.best_checkpoint();
    let checkpoint = checkpoint.unwrap_or(&default);
    let (records, _) = score_checkpoint(config, &ws, checkpoint)?;
    let scores: Vec<f32> = records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let auc = auc_from_slices(&scores, &labels)
        .ok_or_else(|| Error::Numeric("test set has a single class".into()))?;
    let f1 = f1_from_slices(&scores, &labels, 0.5);
    let gauc = gauc(&records)?;
    let summary = EvalSummary {
        checkpoint: checkpoint.to_path_buf(),
        records: records.len(),
        auc,
        f1,
        gauc,
    };
    std::fs::create_dir_all(ws.reports_dir())?;
    std::fs::write(ws.eval_report(), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Sparsity comparison of two checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub model_checkpoint: PathBuf,
    pub baseline_checkpoint: PathBuf,
    pub model_auc: f64,
    pub baseline_auc: f64,
    pub by_news_degree: Vec<SparsityRow>,
    pub by_user_degree: Vec<SparsityRow>,
}

impl ReportSummary {
    /// Both degree tables as tab-delimited text.
    pub fn tables(&self) -> String {
        format!(
            "news degree ≤ threshold\n{}\nuser degree ≤ threshold\n{}",
            render_sparsity_table(&self.by_news_degree),
            render_sparsity_table(&self.by_user_degree)
        )
    }
}

/// Degree ladder for sparsity tables: doubling thresholds up to the maximum
/// observed degree, then an unbounded row covering everything.
fn threshold_ladder(max_degree: u32) -> Vec<u32> {
    let mut ladder = Vec::new();
    let mut t = 1u32;
    while t < max_degree {
        ladder.push(t);
        t = t.saturating_mul(2);
    }
    ladder.push(u32::MAX);
    ladder
}

/// Compare a model checkpoint against a baseline checkpoint on the shared
/// test set: overall AUC plus degree-bucketed gAUC improvement along both
/// axes. Each checkpoint is scored under the switches recorded in its own
/// manifest.
pub fn cmd_report(
    config: &RunConfig,
    model_checkpoint: &Path,
    baseline_checkpoint: &Path,
) -> Result<ReportSummary> {
    let ws = Workspace::new(&config.paths.workdir);
    let (records, _) = score_checkpoint(config, &ws, model_checkpoint)?;
    let (baseline_records, _) = score_checkpoint(config, &ws, baseline_checkpoint)?;
    if records.len() != baseline_records.len() {
        return Err(Error::Data(
            "checkpoints were evaluated on different test sets".into(),
        ));
    }
    let baseline_scores: Vec<f32> = baseline_records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let scores: Vec<f32> = records.iter().map(|r| r.score).collect();
    let model_auc = auc_from_slices(&scores, &labels)
        .ok_or_else(|| Error::Numeric("test set has a single class".into()))?;
    let baseline_auc = auc_from_slices(&baseline_scores, &labels)
        .ok_or_else(|| Error::Numeric("test set has a single class".into()))?;

    let max_news = records.iter().map(|r| r.news_degree).max().unwrap_or(0);
    let max_user = records.iter().map(|r| r.user_degree).max().unwrap_or(0);
    let summary = ReportSummary {
        model_checkpoint: model_checkpoint.to_path_buf(),
        baseline_checkpoint: baseline_checkpoint.to_path_buf(),
        model_auc,
        baseline_auc,
        by_news_degree: sparsity_report(
            &records,
            &baseline_scores,
            DegreeAxis::News,
            &threshold_ladder(max_news),
        ),
        by_user_degree: sparsity_report(
            &records,
            &baseline_scores,
            DegreeAxis::User,
            &threshold_ladder(max_user),
        ),
    };
    std::fs::create_dir_all(ws.reports_dir())?;
    std::fs::write(
        ws.sparsity_report_file(),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// What to expand or inspect.
#[derive(Debug, Clone)]
pub enum ExpandTarget {
    /// Ranked graph neighbors of one news id (as it appears in the log).
    News(String),
    /// A user's history plus its ranked expansion.
    User(String),
    /// Filter-attention weights of one (user, news) pair under a checkpoint.
    Attention { user: String, news: String },
}

/// One row of an expansion listing.
#[derive(Debug, Clone, Serialize)]
pub struct ExpandRow {
    /// External id, as it appeared in the event log.
    pub id: String,
    /// Dense internal id.
    pub internal: u32,
    /// Similarity to the target (news) or to the history (user expansion);
    /// original items carry 1.0.
    pub score: f64,
    pub origin: ItemOrigin,
}

/// Output of [`cmd_expand`].
#[derive(Debug, Clone, Serialize)]
pub enum ExpandReport {
    List(Vec<ExpandRow>),
    Attention(Vec<AttentionEntry>),
}

fn find_id(haystack: &[String], needle: &str, what: &str) -> Result<u32> {
    haystack
        .iter()
        .position(|x| x == needle)
        .map(|i| i as u32)
        .ok_or_else(|| Error::Data(format!("unknown {what} id {needle:?}")))
}

/// Expand a news or user through the configured similarity graph, or dump
/// the filter-attention weights of one (user, news) pair under the trained
/// checkpoint.
pub fn cmd_expand(config: &RunConfig, target: &ExpandTarget) -> Result<ExpandReport> {
    let ws = Workspace::new(&config.paths.workdir);
    let prepared = load_prepared(&ws.prepared())?;
    let graph_path = ws.graph(config.ablation.graph);
    if !graph_path.exists() {
        return Err(Error::Data(format!(
            "{} not found; run build-graph first",
            graph_path.display()
        )));
    }
    let graph = load_graph(&graph_path)?;
    let k = config.expander.expand_k;
    let news_ids = &prepared.corpus.news_ids;

    match target {
        ExpandTarget::News(id) => {
            let internal = find_id(news_ids, id, "news")?;
            let mut rows = vec![ExpandRow {
                id: id.clone(),
                internal,
                score: 1.0,
                origin: ItemOrigin::Clicked,
            }];
            if let Some(neighbors) = graph.neighbors(internal) {
                for &(n, s) in neighbors.iter().take(k) {
                    rows.push(ExpandRow {
                        id: news_ids[n as usize].clone(),
                        internal: n,
                        score: s as f64,
                        origin: ItemOrigin::Expanded,
                    });
                }
            }
            Ok(ExpandReport::List(rows))
        }
        ExpandTarget::User(id) => {
            let internal = find_id(&prepared.corpus.users, id, "user")?;
            let all_events: Vec<_> = prepared
                .split
                .graph_part
                .iter()
                .chain(&prepared.split.train_part)
                .cloned()
                .collect();
            let histories =
                initial_histories(prepared.corpus.users.len(), &all_events, prepared.h_max);
            let history = &histories[internal as usize];
            let mut rows: Vec<ExpandRow> = history
                .items()
                .iter()
                .map(|&n| ExpandRow {
                    id: news_ids[n as usize].clone(),
                    internal: n,
                    score: 1.0,
                    origin: ItemOrigin::Clicked,
                })
                .collect();
            for (n, s) in user_expansion_scores(history.items(), &graph, k) {
                rows.push(ExpandRow {
                    id: news_ids[n as usize].clone(),
                    internal: n,
                    score: s,
                    origin: ItemOrigin::Expanded,
                });
            }
            Ok(ExpandReport::List(rows))
        }
        ExpandTarget::Attention { user, news } => {
            let entries = attention_dump(config, &ws, user, news)?;
            Ok(ExpandReport::Attention(entries))
        }
    }
}

/// Run one (user, news) example through the trained model and extract the
/// summed filter-attention weight of every list item.
fn attention_dump(
    config: &RunConfig,
    ws: &Workspace,
    user: &str,
    news: &str,
) -> Result<Vec<AttentionEntry>> {
    let checkpoint = ws.best_checkpoint();
    if !checkpoint.exists() {
        return Err(Error::Data(format!(
            "{} not found; run train first",
            checkpoint.display()
        )));
    }
    let run = load_run(config, ws, config.ablation.graph)?;
    if !(run.ablation.enable_ne && run.ablation.enable_tafa) {
        return Err(Error::Config(
            "attention dumps need enable_ne and enable_tafa".into(),
        ));
    }
    let mut model = Model::with_init_scale(
        run.dims.clone(),
        config.train.seed,
        config.model.init_scale,
    )?;
    model.params.restore(&load_checkpoint(&checkpoint)?)?;
    let histories = load_histories(&ws.histories())?;
    let user_internal = find_id(&run.prepared.corpus.users, user, "user")?;
    let news_internal = find_id(&run.prepared.corpus.news_ids, news, "news")?;

    let ctx = ModelContext {
        records: &run.prepared.corpus.news,
        graph: &run.graph,
        adj: &run.adj,
        ablation: run.ablation,
        expansion_k: config.expander.expand_k,
        batch_size: config.train.batch_size,
    };
    let nl = news_list(news_internal, &ctx);
    let ul = user_list(&histories[user_internal as usize], &ctx);
    let batch = Batch {
        users: vec![user_internal],
        targets: vec![news_internal],
        labels: vec![1.0],
        news_lists: FlatLists::from_lists(std::slice::from_ref(&nl)),
        user_lists: FlatLists::from_lists(std::slice::from_ref(&ul)),
    };
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let out = model.forward_batch(
        &mut tape,
        &bound,
        &batch,
        ctx.records,
        ctx.adj,
        &ctx.ablation,
        0.0,
    )?;

    let mut entries = Vec::new();
    let sample = format!("{user}->{news}");
    if let Some((title, profile)) = out.news_alpha {
        entries.extend(dump_attention(
            &tape,
            title,
            &batch.news_lists.items,
            &batch.news_lists.origins,
            View::Title,
            &format!("{sample} news"),
        ));
        entries.extend(dump_attention(
            &tape,
            profile,
            &batch.news_lists.items,
            &batch.news_lists.origins,
            View::Profile,
            &format!("{sample} news"),
        ));
    }
    if let Some((title, profile)) = out.user_alpha {
        entries.extend(dump_attention(
            &tape,
            title,
            &batch.user_lists.items,
            &batch.user_lists.origins,
            View::Title,
            &format!("{sample} user"),
        ));
        entries.extend(dump_attention(
            &tape,
            profile,
            &batch.user_lists.items,
            &batch.user_lists.origins,
            View::Profile,
            &format!("{sample} user"),
        ));
    }
    Ok(entries)
}
