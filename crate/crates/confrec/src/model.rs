//! Full recommendation model: parameter store, network assembly, fusion,
//! scoring, and loss.
//!
//! One forward pass over a batch of (user, candidate news, label) examples:
//!
//! 1. encode every news with the text encoder (`nie`);
//! 2. sweep the bipartite click graph with graph attention (`cfgnn`) to get
//!    collaborative representations;
//! 3. run target-aware filtering and aggregation (`tafa`) over each example's
//!    expanded news and user-history lists (content representations);
//! 4. fuse `[h_CF; h_title; h_profile]` per side through a two-layer tanh
//!    MLP and score with a sigmoid inner product.
//!
//! The loss is `(1-λ)·BCE + λ·Σ‖θ‖²`, where the regularized set Θ covers the
//! user/word/entity/type embedding tables and the convolution parameters of
//! the text encoder only; attention and fusion weights train unregularized.

use crate::cfgnn::{self, GatAdjacency, GatHeadParams, GatLayerParams};
use crate::corpus::NewsRecord;
use crate::error::{Error, Result};
use crate::expander::GraphKind;
use crate::nie::{self, FuseParams, NieParams, PcnnParams};
use crate::tafa::{self, ItemOrigin, StageParams, ViewParams};
use crate::tensor::{AdamState, Gradients, NodeId, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Every size the network needs, fixed at construction.
#[derive(Debug, Clone, Copy)]
pub struct ModelDims {
    /// News/user representation width; must equal `heads * d_h`.
    pub d: usize,
    pub heads: usize,
    pub d_h: usize,
    /// Word embedding width.
    pub n1: usize,
    /// Entity and type embedding width.
    pub n2: usize,
    /// Fixed title length in tokens.
    pub m: usize,
    /// Fixed profile length in entities.
    pub p: usize,
    /// Graph-attention layer count.
    pub layers: usize,
    /// Softmax temperature shared by all attention stages.
    pub tau: f32,
    pub n_users: usize,
    pub n_news: usize,
    pub n_words: usize,
    pub n_entities: usize,
    pub n_types: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.heads * self.d_h != self.d {
            return Err(Error::Config(format!(
                "heads ({}) * d_h ({}) must equal d ({})",
                self.heads, self.d_h, self.d
            )));
        }
        for (name, v) in [
            ("d", self.d),
            ("heads", self.heads),
            ("d_h", self.d_h),
            ("n1", self.n1),
            ("n2", self.n2),
            ("m", self.m),
            ("p", self.p),
            ("n_users", self.n_users),
            ("n_news", self.n_news),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("dimension {name} must be positive")));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Which pathways of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationSwitches {
    /// Use graph expansion for the content lists. Off: the user list is the
    /// raw history and the news list is the candidate itself.
    pub enable_ne: bool,
    /// Use target-aware attention over the lists. Off with `enable_ne`: the
    /// lists are mean-pooled. Both off: content slots are zero (vanilla
    /// backbone).
    pub enable_tafa: bool,
    /// Which similarity graph feeds the expansion.
    pub graph_kind: GraphKind,
}

impl AblationSwitches {
    pub fn full() -> Self {
        AblationSwitches {
            enable_ne: true,
            enable_tafa: true,
            graph_kind: GraphKind::Walk,
        }
    }

    pub fn vanilla() -> Self {
        AblationSwitches {
            enable_ne: false,
            enable_tafa: false,
            graph_kind: GraphKind::Walk,
        }
    }
}

/// Named trainable tensors with per-tensor Adam state. Iteration order is
/// the name order, so updates and checkpoints are deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    adam: BTreeMap<String, AdamState>,
    frozen_rows: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
            adam: BTreeMap::new(),
            frozen_rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.adam.insert(name.to_string(), AdamState::new(tensor.numel()));
        self.tensors.insert(name.to_string(), tensor);
    }

    /// Insert a table whose given row stays all-zero through training
    /// (padding row: zeroed now, its gradient dropped on every step).
    pub fn insert_with_frozen_row(&mut self, name: &str, mut tensor: Tensor, row: usize) {
        let cols = tensor.cols();
        for c in 0..cols {
            tensor.data_mut()[row * cols + c] = 0.0;
        }
        self.insert(name, tensor);
        self.frozen_rows.insert(name.to_string(), row);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    /// Copy of all tensors, e.g. for checkpointing.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.tensors.clone()
    }

    /// Replace tensor values from a checkpoint; names and shapes must match
    /// exactly. Optimizer state is reset.
    pub fn restore(&mut self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        if snapshot.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, model expects {}",
                snapshot.len(),
                self.tensors.len()
            )));
        }
        for (name, tensor) in &self.tensors {
            let loaded = snapshot.get(name).ok_or_else(|| {
                Error::Data(format!("checkpoint is missing parameter {name}"))
            })?;
            if loaded.shape() != tensor.shape() {
                return Err(Error::Data(format!(
                    "checkpoint shape {:?} for {name}, model expects {:?}",
                    loaded.shape(),
                    tensor.shape()
                )));
            }
        }
        for (name, tensor) in self.tensors.iter_mut() {
            *tensor = snapshot[name].clone();
            self.adam.insert(name.clone(), AdamState::new(tensor.numel()));
        }
        Ok(())
    }

    /// Register every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let mut ids = BTreeMap::new();
        for (name, tensor) in &self.tensors {
            ids.insert(name.clone(), tape.leaf(tensor.clone()));
        }
        Bound { ids }
    }

    /// One Adam step per parameter that received a gradient. Frozen padding
    /// rows have their gradient zeroed first, so they never move.
    pub fn apply_gradients(&mut self, bound: &Bound, grads: &Gradients, lr: f32) {
        for (name, tensor) in self.tensors.iter_mut() {
            let node = bound.id(name);
            let Some(grad) = grads.get(node) else {
                continue;
            };
            let mut grad = grad.to_vec();
            if let Some(&row) = self.frozen_rows.get(name) {
                let cols = tensor.cols();
                for g in &mut grad[row * cols..(row + 1) * cols] {
                    *g = 0.0;
                }
            }
            self.adam
                .get_mut(name)
                .expect("adam state exists for every parameter")
                .step(tensor, &grad, lr);
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape bindings of every named parameter for one forward pass.
pub struct Bound {
    ids: BTreeMap<String, NodeId>,
}

impl Bound {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }
}

/// Two-layer tanh MLP that fuses `[h_CF; h_title; h_profile]` into the final
/// representation.
#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// Final representation of one side: MLP over the 3d concatenation. Accepts
/// 1-D vectors or `[batch, d]` matrices.
pub fn final_reps(
    tape: &mut Tape,
    h_cf: NodeId,
    h_t: NodeId,
    h_p: NodeId,
    params: &FusionParams,
) -> NodeId {
    let cat = if tape.shape(h_cf).len() == 1 {
        tape.concat(&[h_cf, h_t, h_p])
    } else {
        let a = tape.concat_cols(h_cf, h_t);
        tape.concat_cols(a, h_p)
    };
    let l1 = tape.matmul(cat, params.w1);
    let l1 = tape.add(l1, params.b1);
    let l1 = tape.tanh(l1);
    let l2 = tape.matmul(l1, params.w2);
    let l2 = tape.add(l2, params.b2);
    tape.tanh(l2)
}

/// Click probability `σ(z_u · z_n)`. 1-D inputs give a `[1]` scalar; `[batch,
/// d]` inputs give one probability per row.
pub fn score(tape: &mut Tape, z_u: NodeId, z_n: NodeId) -> NodeId {
    let s = if tape.shape(z_u).len() == 1 {
        tape.matmul(z_u, z_n)
    } else {
        let prod = tape.mul(z_u, z_n);
        tape.row_sums(prod)
    };
    tape.sigmoid(s)
}

/// `(1-λ)·bce + λ·Σ_{θ∈Θ} ‖θ‖²` over the given regularized parameters.
pub fn loss(
    tape: &mut Tape,
    bce: NodeId,
    regularized: &[NodeId],
    lambda: f32,
) -> NodeId {
    assert!((0.0..1.0).contains(&lambda), "lambda must be in [0, 1)");
    let weighted_bce = tape.scale_const(bce, 1.0 - lambda);
    if lambda == 0.0 || regularized.is_empty() {
        return weighted_bce;
    }
    let mut reg: Option<NodeId> = None;
    for &theta in regularized {
        let sq = tape.mul(theta, theta);
        let s = tape.sum(sq);
        reg = Some(match reg {
            None => s,
            Some(r) => tape.add(r, s),
        });
    }
    let weighted_reg = tape.scale_const(reg.unwrap(), lambda);
    tape.add(weighted_bce, weighted_reg)
}

/// Names of the regularized set Θ.
pub const REGULARIZED: [&str; 8] = [
    "emb.user",
    "emb.word",
    "emb.entity",
    "emb.type",
    "nie.title.kernel",
    "nie.title.bias",
    "nie.profile.kernel",
    "nie.profile.bias",
];

/// Per-example item lists flattened for segment ops.
#[derive(Debug, Clone, Default)]
pub struct FlatLists {
    pub items: Vec<u32>,
    /// Example index of each item.
    pub item_example: Vec<usize>,
    /// Offsets: example `i` owns `items[segments[i]..segments[i+1]]`.
    pub segments: Vec<usize>,
    pub origins: Vec<ItemOrigin>,
}

impl FlatLists {
    pub fn from_lists(lists: &[Vec<(u32, ItemOrigin)>]) -> FlatLists {
        let mut f = FlatLists {
            segments: Vec::with_capacity(lists.len() + 1),
            ..FlatLists::default()
        };
        f.segments.push(0);
        for (ex, list) in lists.iter().enumerate() {
            for &(item, origin) in list {
                f.items.push(item);
                f.item_example.push(ex);
                f.origins.push(origin);
            }
            f.segments.push(f.items.len());
        }
        f
    }

    pub fn n_examples(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }
}

/// One training/eval batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub users: Vec<u32>,
    pub targets: Vec<u32>,
    pub labels: Vec<f32>,
    /// Expanded neighbor list of each target news.
    pub news_lists: FlatLists,
    /// (Expanded) history list of each user.
    pub user_lists: FlatLists,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let b = self.users.len();
        if self.targets.len() != b
            || self.labels.len() != b
            || self.news_lists.n_examples() != b
            || self.user_lists.n_examples() != b
        {
            return Err(Error::Data(format!(
                "inconsistent batch: {} users, {} targets, {} labels, {} news lists, {} user lists",
                b,
                self.targets.len(),
                self.labels.len(),
                self.news_lists.n_examples(),
                self.user_lists.n_examples()
            )));
        }
        Ok(())
    }
}

/// Tape nodes of interest after one forward pass.
pub struct ForwardOutput {
    /// `[batch]` click probabilities.
    pub probs: NodeId,
    /// Mean binary cross-entropy, `[1]`.
    pub bce: NodeId,
    /// Combined training loss, `[1]`.
    pub total_loss: NodeId,
    pub z_u: NodeId,
    pub z_n: NodeId,
    /// Summed filter attention over `news_lists` items, per view, when the
    /// attention pathway ran.
    pub news_alpha: Option<(NodeId, NodeId)>,
    /// Same over `user_lists` items.
    pub user_alpha: Option<(NodeId, NodeId)>,
}

/// The assembled model: dimensions plus named parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelDims,
    pub params: ParamStore,
}

impl Model {
    /// Initialize all parameters from `U(-0.01, 0.01)` in a fixed name order;
    /// padding rows (row 0 of the four embedding tables) start and stay zero.
    /// The user table has one extra leading padding row, so user `u` lives in
    /// row `u + 1`.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Model> {
        Model::with_init_scale(dims, seed, 0.01)
    }

    /// Like [`Model::new`] but drawing from `U(-scale, scale)`. Small corpora
    /// sit on a flat plateau at the default scale (per-example signal drowns
    /// in batch noise before the tables can grow), so tests and small runs
    /// may need a larger one.
    pub fn with_init_scale(dims: ModelDims, seed: u64, scale: f32) -> Result<Model> {
        dims.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "init scale must be positive and finite, got {scale}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = dims.d;
        let (heads, d_h) = (dims.heads, dims.d_h);

        let table = |params: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            params.insert_with_frozen_row(name, Tensor::uniform(vec![rows, cols], scale, rng), 0);
        };
        table(&mut params, "emb.user", dims.n_users + 1, d, &mut rng);
        table(&mut params, "emb.word", dims.n_words, dims.n1, &mut rng);
        table(&mut params, "emb.entity", dims.n_entities, dims.n2, &mut rng);
        table(&mut params, "emb.type", dims.n_types, dims.n2, &mut rng);

        let dense = |params: &mut ParamStore, name: &str, shape: Vec<usize>, rng: &mut ChaCha8Rng| {
            params.insert(name, Tensor::uniform(shape, scale, rng));
        };
        dense(&mut params, "nie.title.kernel", vec![3, dims.n1, d], &mut rng);
        dense(&mut params, "nie.title.bias", vec![d], &mut rng);
        dense(&mut params, "nie.profile.kernel", vec![3, 2 * dims.n2, d], &mut rng);
        dense(&mut params, "nie.profile.bias", vec![d], &mut rng);
        dense(&mut params, "nie.fuse.w", vec![2 * d, d], &mut rng);
        dense(&mut params, "nie.fuse.b", vec![d], &mut rng);

        for layer in 0..dims.layers {
            for head in 0..heads {
                dense(&mut params, &format!("cf.l{layer}.h{head}.w"), vec![d, d_h], &mut rng);
                dense(&mut params, &format!("cf.l{layer}.h{head}.a"), vec![2 * d_h], &mut rng);
            }
        }

        for side in ["news", "user"] {
            for view in ["title", "profile"] {
                for stage in ["filter", "aggregate"] {
                    for head in 0..heads {
                        dense(
                            &mut params,
                            &format!("tafa.{side}.{view}.{stage}.h{head}.q"),
                            vec![d, d_h],
                            &mut rng,
                        );
                        dense(
                            &mut params,
                            &format!("tafa.{side}.{view}.{stage}.h{head}.v"),
                            vec![2 * d_h],
                            &mut rng,
                        );
                    }
                }
            }
        }

        for side in ["user", "news"] {
            dense(&mut params, &format!("fuse.{side}.w1"), vec![3 * d, d], &mut rng);
            dense(&mut params, &format!("fuse.{side}.b1"), vec![d], &mut rng);
            dense(&mut params, &format!("fuse.{side}.w2"), vec![d, d], &mut rng);
            dense(&mut params, &format!("fuse.{side}.b2"), vec![d], &mut rng);
        }

        Ok(Model { dims, params })
    }

    pub fn nie_params(&self, bound: &Bound) -> NieParams {
        NieParams {
            word_table: bound.id("emb.word"),
            entity_table: bound.id("emb.entity"),
            type_table: bound.id("emb.type"),
            title: PcnnParams {
                kernel: bound.id("nie.title.kernel"),
                bias: bound.id("nie.title.bias"),
            },
            profile: PcnnParams {
                kernel: bound.id("nie.profile.kernel"),
                bias: bound.id("nie.profile.bias"),
            },
            fuse: FuseParams {
                w: bound.id("nie.fuse.w"),
                b: bound.id("nie.fuse.b"),
            },
        }
    }

    pub fn gat_layers(&self, bound: &Bound) -> Vec<GatLayerParams> {
        (0..self.dims.layers)
            .map(|layer| GatLayerParams {
                heads: (0..self.dims.heads)
                    .map(|head| GatHeadParams {
                        w: bound.id(&format!("cf.l{layer}.h{head}.w")),
                        a: bound.id(&format!("cf.l{layer}.h{head}.a")),
                    })
                    .collect(),
            })
            .collect()
    }

    fn stage_params(&self, bound: &Bound, side: &str, view: &str, stage: &str) -> StageParams {
        StageParams {
            heads: (0..self.dims.heads)
                .map(|head| tafa::AttentionHeadParams {
                    q: bound.id(&format!("tafa.{side}.{view}.{stage}.h{head}.q")),
                    v: bound.id(&format!("tafa.{side}.{view}.{stage}.h{head}.v")),
                })
                .collect(),
            tau: self.dims.tau,
        }
    }

    pub fn side_params(&self, bound: &Bound, side: &str) -> tafa::SideParams {
        tafa::SideParams {
            title: ViewParams {
                filter: self.stage_params(bound, side, "title", "filter"),
                aggregate: self.stage_params(bound, side, "title", "aggregate"),
            },
            profile: ViewParams {
                filter: self.stage_params(bound, side, "profile", "filter"),
                aggregate: self.stage_params(bound, side, "profile", "aggregate"),
            },
        }
    }

    pub fn fusion_params(&self, bound: &Bound, side: &str) -> FusionParams {
        FusionParams {
            w1: bound.id(&format!("fuse.{side}.w1")),
            b1: bound.id(&format!("fuse.{side}.b1")),
            w2: bound.id(&format!("fuse.{side}.w2")),
            b2: bound.id(&format!("fuse.{side}.b2")),
        }
    }

    /// Encode all news and stack the initial node states for the graph
    /// sweep. `records` must hold every news, indexed by dense news id.
    pub fn encode_and_sweep(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        records: &[NewsRecord],
        adj: &GatAdjacency,
    ) -> (nie::NewsViews, NodeId) {
        assert_eq!(records.len(), self.dims.n_news, "one record per news id");
        let nie_params = self.nie_params(bound);
        let refs: Vec<&NewsRecord> = records.iter().collect();
        let views = nie::encode_all(tape, &nie_params, &refs);
        let user_rows: Vec<usize> = (1..=self.dims.n_users).collect();
        let user_table = bound.id("emb.user");
        let user_states = tape.gather(user_table, user_rows);
        let layers = self.gat_layers(bound);
        let states = cfgnn::cf_sweep(tape, user_states, views.e_n, adj, &layers);
        (views, states)
    }

    /// Content representations (title-view, profile-view, each `[batch, d]`)
    /// of one side's lists, plus the filter attention per view when TAFA ran.
    #[allow(clippy::too_many_arguments)]
    fn content_side(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        side: &str,
        views: &nie::NewsViews,
        targets: &[u32],
        lists: &FlatLists,
        ablation: &AblationSwitches,
    ) -> (NodeId, NodeId, Option<(NodeId, NodeId)>) {
        let b = targets.len();
        let d = self.dims.d;
        if !ablation.enable_ne && !ablation.enable_tafa {
            let zero = tape.leaf(Tensor::zeros(vec![b, d]));
            return (zero, zero, None);
        }
        let item_rows: Vec<usize> = lists.items.iter().map(|&n| n as usize).collect();
        let target_rows: Vec<usize> = targets.iter().map(|&n| n as usize).collect();
        let list_n = tape.gather(views.e_n, item_rows.clone());
        if !ablation.enable_tafa {
            // Mean-pool the fused embeddings over each list; both view slots
            // receive the same vector.
            let mut weights = vec![0.0f32; lists.items.len()];
            for ex in 0..b {
                let (lo, hi) = (lists.segments[ex], lists.segments[ex + 1]);
                let len = (hi - lo).max(1) as f32;
                for w in &mut weights[lo..hi] {
                    *w = 1.0 / len;
                }
            }
            let w = tape.leaf(Tensor::from_vec(weights));
            let mean = tape.segment_weighted_sum(w, list_n, lists.segments.clone());
            return (mean, mean, None);
        }
        let list_t = tape.gather(views.e_t, item_rows.clone());
        let list_p = tape.gather(views.e_p, item_rows);
        let targets_t = tape.gather(views.e_t, target_rows.clone());
        let targets_p = tape.gather(views.e_p, target_rows.clone());
        let centers = tape.gather(views.e_n, target_rows);
        let side_params = self.side_params(bound, side);

        let mut reps = Vec::with_capacity(2);
        let mut alphas = Vec::with_capacity(2);
        for (target_view, list_view, params) in [
            (targets_t, list_t, &side_params.title),
            (targets_p, list_p, &side_params.profile),
        ] {
            let alpha = tafa::taf_scores_batched(
                tape,
                target_view,
                list_view,
                &lists.item_example,
                &lists.segments,
                &params.filter,
            );
            let filtered = tafa::apply_filter(tape, alpha, list_n);
            let pooled = tafa::aggregate_batched(
                tape,
                filtered,
                centers,
                &lists.item_example,
                &lists.segments,
                &params.aggregate,
            );
            reps.push(pooled);
            alphas.push(alpha);
        }
        (reps[0], reps[1], Some((alphas[0], alphas[1])))
    }

    /// Forward one batch. `records` holds every news by dense id; `adj` is
    /// the sampled click-graph adjacency.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &Batch,
        records: &[NewsRecord],
        adj: &GatAdjacency,
        ablation: &AblationSwitches,
        lambda: f32,
    ) -> Result<ForwardOutput> {
        batch.validate()?;
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let (views, states) = self.encode_and_sweep(tape, bound, records, adj);

        let user_nodes: Vec<usize> = batch.users.iter().map(|&u| u as usize).collect();
        let news_nodes: Vec<usize> = batch
            .targets
            .iter()
            .map(|&n| self.dims.n_users + n as usize)
            .collect();
        let h_u_cf = tape.gather(states, user_nodes);
        let h_n_cf = tape.gather(states, news_nodes);

        let (news_t, news_p, news_alpha) = self.content_side(
            tape,
            bound,
            "news",
            &views,
            &batch.targets,
            &batch.news_lists,
            ablation,
        );
        let (user_t, user_p, user_alpha) = self.content_side(
            tape,
            bound,
            "user",
            &views,
            &batch.targets,
            &batch.user_lists,
            ablation,
        );

        let user_fusion = self.fusion_params(bound, "user");
        let news_fusion = self.fusion_params(bound, "news");
        let z_u = final_reps(tape, h_u_cf, user_t, user_p, &user_fusion);
        let z_n = final_reps(tape, h_n_cf, news_t, news_p, &news_fusion);
        let probs = score(tape, z_u, z_n);
        let bce = tape.binary_cross_entropy_mean(probs, batch.labels.clone());
        let regularized: Vec<NodeId> = REGULARIZED.iter().map(|n| bound.id(n)).collect();
        let total_loss = loss(tape, bce, &regularized, lambda);

        Ok(ForwardOutput {
            probs,
            bce,
            total_loss,
            z_u,
            z_n,
            news_alpha,
            user_alpha,
        })
    }
}
