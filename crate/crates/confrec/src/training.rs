//! Optimization loop: negative sampling, batched forward/backward, Adam
//! updates, in-training history growth, validation-F1 early stopping, and
//! divergence handling.

use crate::cfgnn::GatAdjacency;
use crate::corpus::{
    initial_histories, sample_negative, Event, LabeledExample, NewsRecord, SplitDataset,
    UserHistory,
};
use crate::error::{Error, Result};
use crate::expander::{expand_news, expand_user, mix_seed, SimilarityGraph};
use crate::metrics::{auc_from_slices, f1_from_slices};
use crate::model::{AblationSwitches, Batch, FlatLists, Model};
use crate::tafa::ItemOrigin;
use crate::tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Everything a forward pass needs besides the model and the examples.
pub struct ModelContext<'a> {
    /// Every news record, indexed by dense news id.
    pub records: &'a [NewsRecord],
    /// Expansion graph matching the ablation's `graph_kind`.
    pub graph: &'a SimilarityGraph,
    /// Sampled click-graph adjacency.
    pub adj: &'a GatAdjacency,
    pub ablation: AblationSwitches,
    /// Neighbors taken per expansion.
    pub expansion_k: usize,
    /// Examples per forward batch.
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainSettings {
    pub lr: f32,
    pub lambda: f32,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// History cap per user.
    pub h_max: usize,
}

/// One line of the metric log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub valid_f1: f64,
    pub valid_auc: f64,
}

/// Result of a training run.
pub struct TrainOutcome {
    /// Parameters at the best validation-F1 epoch.
    pub best: BTreeMap<String, Tensor>,
    pub best_epoch: usize,
    pub best_f1: f64,
    /// User histories as of the best epoch (used for matching evaluation).
    pub histories: Vec<UserHistory>,
    pub metrics: Vec<EpochMetrics>,
    /// True when a non-finite loss aborted the run; `best` then holds the
    /// last finite parameters.
    pub diverged: bool,
}

/// Expanded target-news list: the news itself first, then up to `k` graph
/// neighbors.
pub fn news_list(
    target: u32,
    ctx: &ModelContext,
) -> Vec<(u32, ItemOrigin)> {
    let mut list = vec![(target, ItemOrigin::Clicked)];
    if ctx.ablation.enable_ne {
        for n in expand_news(target, ctx.graph, ctx.expansion_k) {
            if n != target {
                list.push((n, ItemOrigin::Expanded));
            }
        }
    }
    list
}

/// Expanded user list: the clicked history, then up to `k` graph neighbors
/// of the history.
pub fn user_list(
    history: &UserHistory,
    ctx: &ModelContext,
) -> Vec<(u32, ItemOrigin)> {
    let clicked = history.items();
    if !ctx.ablation.enable_ne {
        return clicked.iter().map(|&n| (n, ItemOrigin::Clicked)).collect();
    }
    expand_user(clicked, ctx.graph, ctx.expansion_k)
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let origin = if i < clicked.len() {
                ItemOrigin::Clicked
            } else {
                ItemOrigin::Expanded
            };
            (n, origin)
        })
        .collect()
}

/// Assemble a batch for (user, news, label) triples, reusing cached user
/// lists across examples of the same user.
fn build_batch(
    triples: &[(u32, u32, f32)],
    ctx: &ModelContext,
    histories: &[UserHistory],
    user_cache: &mut HashMap<u32, Vec<(u32, ItemOrigin)>>,
) -> Batch {
    let content_on = ctx.ablation.enable_ne || ctx.ablation.enable_tafa;
    let mut users = Vec::with_capacity(triples.len());
    let mut targets = Vec::with_capacity(triples.len());
    let mut labels = Vec::with_capacity(triples.len());
    let mut news_lists = Vec::with_capacity(triples.len());
    let mut user_lists = Vec::with_capacity(triples.len());
    for &(user, news, label) in triples {
        users.push(user);
        targets.push(news);
        labels.push(label);
        if content_on {
            news_lists.push(news_list(news, ctx));
            let ul = user_cache
                .entry(user)
                .or_insert_with(|| user_list(&histories[user as usize], ctx));
            user_lists.push(ul.clone());
        } else {
            news_lists.push(Vec::new());
            user_lists.push(Vec::new());
        }
    }
    Batch {
        users,
        targets,
        labels,
        news_lists: FlatLists::from_lists(&news_lists),
        user_lists: FlatLists::from_lists(&user_lists),
    }
}

/// Score labeled examples with the current parameters (forward only).
/// Returns one probability per example, in order.
pub fn score_examples(
    model: &Model,
    ctx: &ModelContext,
    histories: &[UserHistory],
    examples: &[LabeledExample],
) -> Result<Vec<f32>> {
    let mut scores = Vec::with_capacity(examples.len());
    let mut user_cache = HashMap::new();
    for chunk in examples.chunks(ctx.batch_size.max(1)) {
        let triples: Vec<(u32, u32, f32)> = chunk
            .iter()
            .map(|e| (e.user, e.news, e.label as f32))
            .collect();
        let batch = build_batch(&triples, ctx, histories, &mut user_cache);
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
        scores.extend_from_slice(tape.value(out.probs).data());
    }
    Ok(scores)
}

fn valid_metrics(
    model: &Model,
    ctx: &ModelContext,
    histories: &[UserHistory],
    valid: &[LabeledExample],
) -> Result<(f64, f64)> {
    let scores = score_examples(model, ctx, histories, valid)?;
    let labels: Vec<u8> = valid.iter().map(|e| e.label).collect();
    let f1 = f1_from_slices(&scores, &labels, 0.5);
    let auc = auc_from_slices(&scores, &labels).unwrap_or(0.5);
    Ok((f1, auc))
}

/// Train until the epoch budget or early stopping. Per epoch: shuffle the
/// training clicks (seeded), pair each with one freshly sampled negative,
/// take Adam steps, then append the epoch's clicks to the user histories and
/// measure validation F1/AUC. Training stops after `patience` epochs without
/// F1 improvement and returns the best-F1 parameters. A non-finite loss
/// aborts immediately with the last finite parameters and `diverged = true`.
pub fn train(
    model: &mut Model,
    ctx: &ModelContext,
    split: &SplitDataset,
    settings: &TrainSettings,
) -> Result<TrainOutcome> {
    if split.train_part.is_empty() {
        return Err(Error::Data("training part is empty".into()));
    }
    if ctx.batch_size < 2 {
        return Err(Error::Config(format!(
            "batch size must be at least 2, got {}",
            ctx.batch_size
        )));
    }
    if settings.epochs == 0 {
        return Err(Error::Config("epoch budget must be at least 1".into()));
    }
    if settings.patience == 0 {
        return Err(Error::Config("patience must be at least 1".into()));
    }

    let n_users = model.dims.n_users;
    let mut histories = initial_histories(n_users, &split.graph_part, settings.h_max);

    // Negative candidates: every news clicked in the graph or train parts;
    // per-user clicked sets over the same parts keep positives out.
    let mut candidate_set = HashSet::new();
    let mut clicked: Vec<HashSet<u32>> = vec![HashSet::new(); n_users];
    for ev in split.graph_part.iter().chain(&split.train_part) {
        candidate_set.insert(ev.news);
        clicked[ev.user as usize].insert(ev.news);
    }
    let mut candidates: Vec<u32> = candidate_set.into_iter().collect();
    candidates.sort_unstable();

    let positives: &[Event] = &split.train_part;
    let mut best: Option<(f64, BTreeMap<String, Tensor>, Vec<UserHistory>, usize)> = None;
    let mut epochs_since_best = 0usize;
    let mut metrics = Vec::new();
    let mut diverged = false;

    'epochs: for epoch in 1..=settings.epochs {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(settings.seed, 0xE9), epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let mut neg_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(settings.seed, 0x4E), epoch as u64));

        // Histories are frozen within an epoch, so user lists can be reused.
        let mut user_cache: HashMap<u32, Vec<(u32, ItemOrigin)>> = HashMap::new();
        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;
        for chunk in order.chunks((ctx.batch_size / 2).max(1)) {
            let mut triples = Vec::with_capacity(chunk.len() * 2);
            for &idx in chunk {
                let ev = &positives[idx];
                triples.push((ev.user, ev.news, 1.0));
                if let Some(neg) =
                    sample_negative(&candidates, &clicked[ev.user as usize], &mut neg_rng)
                {
                    triples.push((ev.user, neg, 0.0));
                }
            }
            let batch = build_batch(&triples, ctx, &histories, &mut user_cache);
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let out = model.forward_batch(
                &mut tape,
                &bound,
                &batch,
                ctx.records,
                ctx.adj,
                &ctx.ablation,
                settings.lambda,
            )?;
            let loss_val = tape.value(out.total_loss).item();
            if !loss_val.is_finite() {
                diverged = true;
                break 'epochs;
            }
            let grads = tape.backward(out.total_loss);
            model.params.apply_gradients(&bound, &grads, settings.lr);
            epoch_loss += loss_val as f64;
            steps += 1;
        }

        // Grow histories with this epoch's clicks (chronological order;
        // duplicates are no-ops, the cap drops the oldest).
        for ev in positives {
            histories[ev.user as usize].push(ev.news);
        }

        let (valid_f1, valid_auc) = valid_metrics(model, ctx, &histories, &split.valid_set)?;
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss / steps.max(1) as f64,
            valid_f1,
            valid_auc,
        });

        let improved = best.as_ref().is_none_or(|(f1, ..)| valid_f1 > *f1);
        if improved {
            best = Some((valid_f1, model.params.snapshot(), histories.clone(), epoch));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= settings.patience {
                break;
            }
        }
    }

    // On divergence the update for the offending step was never applied, so
    // the live parameters are the last finite ones.
    let (best_f1, best_params, best_histories, best_epoch) = match best {
        Some(b) => b,
        None => (f64::NAN, model.params.snapshot(), histories.clone(), 0),
    };
    Ok(TrainOutcome {
        best: best_params,
        best_epoch,
        best_f1,
        histories: best_histories,
        metrics,
        diverged,
    })
}
