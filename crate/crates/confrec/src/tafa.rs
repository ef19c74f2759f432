//! Target-aware filtering and aggregation attention over expanded news lists.
//!
//! Two stages per view (title, profile), each with its own multi-head
//! parameters:
//!
//! * **filter** — scores every list item against the target in one view,
//!   sums the per-head softmax weights, and scales each item's fused
//!   embedding by the summed weight;
//! * **aggregate** — attends over the filtered list with a center query and
//!   pools per-head value projections into one vector of `heads * d_h` dims.
//!
//! Empty lists fall back to zero vectors so downstream layers always see a
//! well-defined input for cold users or unseen news.

use crate::nie::NewsViews;
use crate::tensor::{NodeId, Tape};
use serde::Serialize;

/// One attention head: projection `q` (`[d, d_h]`) and score vector `v`
/// (`[2*d_h]`).
#[derive(Debug, Clone, Copy)]
pub struct AttentionHeadParams {
    pub q: NodeId,
    pub v: NodeId,
}

/// Heads plus softmax temperature of one attention stage.
#[derive(Debug, Clone)]
pub struct StageParams {
    pub heads: Vec<AttentionHeadParams>,
    pub tau: f32,
}

/// Filter and aggregation stages of one view.
#[derive(Debug, Clone)]
pub struct ViewParams {
    pub filter: StageParams,
    pub aggregate: StageParams,
}

/// Both views of one side (news list or user list).
#[derive(Debug, Clone)]
pub struct SideParams {
    pub title: ViewParams,
    pub profile: ViewParams,
}

/// View matrices of an expanded list: one row per item, `[n, d]` each.
#[derive(Debug, Clone, Copy)]
pub struct ListViews {
    pub e_t: NodeId,
    pub e_p: NodeId,
    pub e_n: NodeId,
}

/// Content-filtering representations of one list, plus a flag for the
/// empty-list fallback.
#[derive(Debug, Clone, Copy)]
pub struct ContentRep {
    pub h_t: NodeId,
    pub h_p: NodeId,
    /// True when the list was empty and both outputs are zero vectors.
    pub cold: bool,
}

/// Target-aware attention weights over a list in one view.
///
/// Per head `j`: `r_{i,j} = tanh([e_i Q_j ; e_target Q_j] V_j)`,
/// `α_{:,j} = softmax_i(r_{i,j} / τ)`; the returned `α_i` sums the heads, so
/// it totals `head count` over the list.
pub fn taf_scores(
    tape: &mut Tape,
    target_view: NodeId,
    list_views: NodeId,
    params: &StageParams,
) -> NodeId {
    let n = tape.shape(list_views)[0];
    assert!(n > 0, "taf_scores requires a nonempty list");
    assert!(!params.heads.is_empty(), "at least one attention head");
    let mut total: Option<NodeId> = None;
    for head in &params.heads {
        let iq = tape.matmul(list_views, head.q); // [n, d_h]
        let tq = tape.matmul(target_view, head.q); // [d_h]
        let d_h = tape.shape(tq)[0];
        let tq_row = tape.reshape(tq, vec![1, d_h]);
        let tq_rows = tape.gather(tq_row, vec![0; n]); // broadcast to [n, d_h]
        let cat = tape.concat_cols(iq, tq_rows); // [n, 2*d_h]
        let raw = tape.matmul(cat, head.v); // [n]
        let scores = tape.tanh(raw);
        let alpha_j = tape.softmax_with_temperature(scores, params.tau);
        total = Some(match total {
            None => alpha_j,
            Some(t) => tape.add(t, alpha_j),
        });
    }
    total.unwrap()
}

/// Scale each item's fused embedding by its attention weight:
/// `h_i = α_i * e_n_i`.
pub fn apply_filter(tape: &mut Tape, alpha: NodeId, fused_list: NodeId) -> NodeId {
    tape.scale_rows(fused_list, alpha)
}

/// Pool a filtered list into one vector. Per head `j`: attention `β_{:,j}`
/// between each `h_i` and the center query (same functional form as the
/// filter scores, with this stage's own parameters), then
/// `Σ_i β_{i,j} (h_i Q_j)`; heads are concatenated into `[heads * d_h]`.
pub fn aggregate(
    tape: &mut Tape,
    filtered: NodeId,
    center: NodeId,
    params: &StageParams,
) -> NodeId {
    let n = tape.shape(filtered)[0];
    assert!(n > 0, "aggregate requires a nonempty list");
    let mut outs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let hq = tape.matmul(filtered, head.q); // [n, d_h]
        let cq = tape.matmul(center, head.q); // [d_h]
        let d_h = tape.shape(cq)[0];
        let cq_row = tape.reshape(cq, vec![1, d_h]);
        let cq_rows = tape.gather(cq_row, vec![0; n]);
        let cat = tape.concat_cols(hq, cq_rows);
        let raw = tape.matmul(cat, head.v);
        let scores = tape.tanh(raw);
        let beta_j = tape.softmax_with_temperature(scores, params.tau);
        outs.push(tape.matmul(beta_j, hq)); // [d_h]
    }
    let mut cat = outs[0];
    for &o in &outs[1..] {
        cat = tape.concat(&[cat, o]);
    }
    cat
}

fn rep_dim(tape: &Tape, stage: &StageParams) -> usize {
    stage.heads.len() * tape.shape(stage.heads[0].q)[1]
}

/// Filter + aggregate one view of a list against a target view embedding,
/// with `center` as the aggregation query.
fn view_rep(
    tape: &mut Tape,
    target_view: NodeId,
    list_view: NodeId,
    list_fused: NodeId,
    center: NodeId,
    params: &ViewParams,
) -> NodeId {
    let alpha = taf_scores(tape, target_view, list_view, &params.filter);
    let filtered = apply_filter(tape, alpha, list_fused);
    aggregate(tape, filtered, center, &params.aggregate)
}

/// Content representations of a target news from its expanded neighbor list.
/// The target's own view embeddings drive the filter; its fused embedding is
/// the aggregation center.
pub fn content_rep_news(
    tape: &mut Tape,
    target: &NewsViews,
    list: &ListViews,
    params: &SideParams,
) -> ContentRep {
    content_rep(tape, target, target.e_n, list, params)
}

/// Content representations of a user from their expanded history list,
/// filtered against the candidate news currently being scored (the candidate
/// supplies both the target views and the aggregation center).
pub fn content_rep_user(
    tape: &mut Tape,
    candidate: &NewsViews,
    list: &ListViews,
    params: &SideParams,
) -> ContentRep {
    content_rep(tape, candidate, candidate.e_n, list, params)
}

fn content_rep(
    tape: &mut Tape,
    target: &NewsViews,
    center: NodeId,
    list: &ListViews,
    params: &SideParams,
) -> ContentRep {
    let n = tape.shape(list.e_n)[0];
    if n == 0 {
        let dt = rep_dim(tape, &params.title.aggregate);
        let dp = rep_dim(tape, &params.profile.aggregate);
        return ContentRep {
            h_t: tape.leaf(crate::tensor::Tensor::zeros(vec![dt])),
            h_p: tape.leaf(crate::tensor::Tensor::zeros(vec![dp])),
            cold: true,
        };
    }
    let h_t = view_rep(tape, target.e_t, list.e_t, list.e_n, center, &params.title);
    let h_p = view_rep(tape, target.e_p, list.e_p, list.e_n, center, &params.profile);
    ContentRep { h_t, h_p, cold: false }
}

/// Batched filter scores. `items_view` stacks every example's list
/// (`[total, d]`), `item_example[e]` maps each row to its example, and
/// `segments` are the per-example offsets. Softmax runs independently per
/// segment; empty segments contribute nothing.
pub fn taf_scores_batched(
    tape: &mut Tape,
    targets_view: NodeId,
    items_view: NodeId,
    item_example: &[usize],
    segments: &[usize],
    params: &StageParams,
) -> NodeId {
    assert!(!params.heads.is_empty(), "at least one attention head");
    let mut total: Option<NodeId> = None;
    for head in &params.heads {
        let iq = tape.matmul(items_view, head.q);
        let tq = tape.matmul(targets_view, head.q);
        let tq_items = tape.gather(tq, item_example.to_vec());
        let cat = tape.concat_cols(iq, tq_items);
        let raw = tape.matmul(cat, head.v);
        let scores = tape.tanh(raw);
        let alpha_j = tape.segment_softmax(scores, segments.to_vec(), params.tau);
        total = Some(match total {
            None => alpha_j,
            Some(t) => tape.add(t, alpha_j),
        });
    }
    total.unwrap()
}

/// Batched aggregation into `[batch, heads * d_h]` rows; empty segments give
/// zero rows (the cold fallback).
pub fn aggregate_batched(
    tape: &mut Tape,
    filtered: NodeId,
    centers: NodeId,
    item_example: &[usize],
    segments: &[usize],
    params: &StageParams,
) -> NodeId {
    let mut outs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let hq = tape.matmul(filtered, head.q);
        let cq = tape.matmul(centers, head.q);
        let cq_items = tape.gather(cq, item_example.to_vec());
        let cat = tape.concat_cols(hq, cq_items);
        let raw = tape.matmul(cat, head.v);
        let scores = tape.tanh(raw);
        let beta_j = tape.segment_softmax(scores, segments.to_vec(), params.tau);
        outs.push(tape.segment_weighted_sum(beta_j, hq, segments.to_vec()));
    }
    let mut cat = outs[0];
    for &o in &outs[1..] {
        cat = tape.concat_cols(cat, o);
    }
    cat
}

/// Which view an attention weight belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Title,
    Profile,
}

/// Whether a list item came from the raw click history or from graph
/// expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemOrigin {
    Clicked,
    Expanded,
}

/// One row of an attention-score dump.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionEntry {
    pub sample: String,
    pub view: View,
    pub item: u32,
    pub alpha: f32,
    pub origin: ItemOrigin,
}

/// Extract the attention weights of one list into dump rows.
pub fn dump_attention(
    tape: &Tape,
    alpha: NodeId,
    items: &[u32],
    origins: &[ItemOrigin],
    view: View,
    sample: &str,
) -> Vec<AttentionEntry> {
    let vals = tape.value(alpha).data();
    assert_eq!(vals.len(), items.len());
    assert_eq!(vals.len(), origins.len());
    items
        .iter()
        .zip(vals)
        .zip(origins)
        .map(|((&item, &alpha), &origin)| AttentionEntry {
            sample: sample.to_string(),
            view,
            item,
            alpha,
            origin,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const D: usize = 4;
    const DH: usize = 2;

    fn stage(tape: &mut Tape, heads: usize, tau: f32, seed: u64) -> StageParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StageParams {
            heads: (0..heads)
                .map(|_| AttentionHeadParams {
                    q: tape.leaf(Tensor::uniform(vec![D, DH], 0.7, &mut rng)),
                    v: tape.leaf(Tensor::uniform(vec![2 * DH], 0.7, &mut rng)),
                })
                .collect(),
            tau,
        }
    }

    fn side(tape: &mut Tape, heads: usize, tau: f32, seed: u64) -> SideParams {
        SideParams {
            title: ViewParams {
                filter: stage(tape, heads, tau, seed),
                aggregate: stage(tape, heads, tau, seed + 1),
            },
            profile: ViewParams {
                filter: stage(tape, heads, tau, seed + 2),
                aggregate: stage(tape, heads, tau, seed + 3),
            },
        }
    }

    #[test]
    fn identical_items_one_head_uniform_alpha() {
        let mut tape = Tape::new();
        let row = vec![0.3f32, -0.2, 0.5, 0.1];
        let list = tape.leaf(Tensor::new(vec![3, D], row.repeat(3)));
        let target = tape.leaf(Tensor::from_vec(vec![0.9, 0.0, -0.4, 0.2]));
        let params = stage(&mut tape, 1, 1.0, 5);
        let alpha = taf_scores(&mut tape, target, list, &params);
        for &a in tape.value(alpha).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn singleton_list_alpha_equals_head_count() {
        let mut tape = Tape::new();
        let list = tape.leaf(Tensor::new(vec![1, D], vec![0.3, -0.2, 0.5, 0.1]));
        let target = tape.leaf(Tensor::from_vec(vec![0.9, 0.0, -0.4, 0.2]));
        let params = stage(&mut tape, 3, 1.0, 6);
        let alpha = taf_scores(&mut tape, target, list, &params);
        assert!((tape.value(alpha).data()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_two_item_hand_computation() {
        // d = d_h = 1: r_i = tanh(e_i*q*v0 + t*q*v1), alpha = softmax(r).
        let (a, b, t, q, v0, v1) = (0.8f32, -0.3f32, 0.5f32, 0.9f32, 0.7f32, -0.4f32);
        let mut tape = Tape::new();
        let list = tape.leaf(Tensor::new(vec![2, 1], vec![a, b]));
        let target = tape.leaf(Tensor::from_vec(vec![t]));
        let params = StageParams {
            heads: vec![AttentionHeadParams {
                q: tape.leaf(Tensor::new(vec![1, 1], vec![q])),
                v: tape.leaf(Tensor::from_vec(vec![v0, v1])),
            }],
            tau: 1.0,
        };
        let alpha = taf_scores(&mut tape, target, list, &params);
        let r1 = (a * q * v0 + t * q * v1).tanh();
        let r2 = (b * q * v0 + t * q * v1).tanh();
        let m = r1.max(r2);
        let (e1, e2) = ((r1 - m).exp(), (r2 - m).exp());
        let want = [e1 / (e1 + e2), e2 / (e1 + e2)];
        for (g, w) in tape.value(alpha).data().iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "got {g}, want {w}");
        }
    }

    #[test]
    fn filter_scaling_is_pointwise_and_homogeneous() {
        let mut tape = Tape::new();
        let fused = tape.leaf(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let alpha = tape.leaf(Tensor::from_vec(vec![0.0, 1.0, 2.0]));
        let h = apply_filter(&mut tape, alpha, fused);
        assert_eq!(
            tape.value(h).data(),
            &[0.0, 0.0, 3.0, 4.0, 10.0, 12.0],
            "zero kills, one keeps, two doubles"
        );
    }

    #[test]
    fn aggregate_singleton_is_per_head_projection() {
        let mut tape = Tape::new();
        let item = vec![0.2f32, -0.6, 0.4, 0.9];
        let filtered = tape.leaf(Tensor::new(vec![1, D], item.clone()));
        let center = tape.leaf(Tensor::from_vec(vec![0.1, 0.1, -0.2, 0.3]));
        let params = stage(&mut tape, 2, 1.0, 7);
        let out = aggregate(&mut tape, filtered, center, &params);
        let mut want = Vec::new();
        for head in &params.heads {
            let q = tape.value(head.q);
            for c in 0..DH {
                let mut s = 0.0f32;
                for r in 0..D {
                    s += item[r] * q.data()[r * DH + c];
                }
                want.push(s);
            }
        }
        for (g, w) in tape.value(out).data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn aggregate_of_identical_items_ignores_beta() {
        let mut tape = Tape::new();
        let item = vec![0.2f32, -0.6, 0.4, 0.9];
        let three = tape.leaf(Tensor::new(vec![3, D], item.repeat(3)));
        let one = tape.leaf(Tensor::new(vec![1, D], item));
        let center = tape.leaf(Tensor::from_vec(vec![0.5, -0.1, 0.0, 0.2]));
        let params = stage(&mut tape, 2, 1.0, 8);
        let a = aggregate(&mut tape, three, center, &params);
        let b = aggregate(&mut tape, one, center, &params);
        for (x, y) in tape.value(a).data().iter().zip(tape.value(b).data()) {
            assert!((x - y).abs() < 1e-6, "convex combination of equal rows");
        }
    }

    #[test]
    fn scalar_two_item_aggregation_hand_computation() {
        let (h1, h2, c, q, v0, v1) = (0.6f32, -0.2f32, 0.4f32, 1.1f32, 0.5f32, 0.3f32);
        let mut tape = Tape::new();
        let filtered = tape.leaf(Tensor::new(vec![2, 1], vec![h1, h2]));
        let center = tape.leaf(Tensor::from_vec(vec![c]));
        let params = StageParams {
            heads: vec![AttentionHeadParams {
                q: tape.leaf(Tensor::new(vec![1, 1], vec![q])),
                v: tape.leaf(Tensor::from_vec(vec![v0, v1])),
            }],
            tau: 1.0,
        };
        let out = aggregate(&mut tape, filtered, center, &params);
        let r1 = (h1 * q * v0 + c * q * v1).tanh();
        let r2 = (h2 * q * v0 + c * q * v1).tanh();
        let m = r1.max(r2);
        let (e1, e2) = ((r1 - m).exp(), (r2 - m).exp());
        let (b1, b2) = (e1 / (e1 + e2), e2 / (e1 + e2));
        let want = b1 * (h1 * q) + b2 * (h2 * q);
        let got = tape.value(out).data()[0];
        assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
    }

    #[test]
    fn per_head_alpha_sums_to_one_and_total_to_head_count() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let list = tape.leaf(Tensor::uniform(vec![5, D], 1.0, &mut rng));
        let target = tape.leaf(Tensor::uniform(vec![D], 1.0, &mut rng));
        let params = stage(&mut tape, 4, 1.0, 10);
        let alpha = taf_scores(&mut tape, target, list, &params);
        let total: f32 = tape.value(alpha).data().iter().sum();
        assert!((total - 4.0).abs() < 1e-5, "summed weights total head count");
        let one_head = StageParams {
            heads: vec![params.heads[2]],
            tau: 1.0,
        };
        let a = taf_scores(&mut tape, target, list, &one_head);
        let s: f32 = tape.value(a).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn permutation_equivariance_of_alpha_and_invariance_of_output() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f32>> = (0..4)
            .map(|_| Tensor::uniform(vec![D], 1.0, &mut rng).data().to_vec())
            .collect();
        let perm = [2usize, 0, 3, 1];
        let flat: Vec<f32> = rows.concat();
        let permuted: Vec<f32> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
        let list_a = tape.leaf(Tensor::new(vec![4, D], flat));
        let list_b = tape.leaf(Tensor::new(vec![4, D], permuted));
        let target = tape.leaf(Tensor::uniform(vec![D], 1.0, &mut rng));
        let center = tape.leaf(Tensor::uniform(vec![D], 1.0, &mut rng));
        let fparams = stage(&mut tape, 2, 1.0, 12);
        let aparams = stage(&mut tape, 2, 1.0, 13);

        let alpha_a = taf_scores(&mut tape, target, list_a, &fparams);
        let alpha_b = taf_scores(&mut tape, target, list_b, &fparams);
        let va = tape.value(alpha_a).data().to_vec();
        let vb = tape.value(alpha_b).data().to_vec();
        for (pos, &src) in perm.iter().enumerate() {
            assert!((vb[pos] - va[src]).abs() < 1e-6, "alpha permutes with the list");
        }

        let ha = apply_filter(&mut tape, alpha_a, list_a);
        let hb = apply_filter(&mut tape, alpha_b, list_b);
        let oa = aggregate(&mut tape, ha, center, &aparams);
        let ob = aggregate(&mut tape, hb, center, &aparams);
        for (x, y) in tape.value(oa).data().iter().zip(tape.value(ob).data()) {
            assert!((x - y).abs() < 1e-6, "pooled output is order-free");
        }
    }

    #[test]
    fn high_temperature_limit_is_uniform() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let list = tape.leaf(Tensor::uniform(vec![6, D], 1.0, &mut rng));
        let target = tape.leaf(Tensor::uniform(vec![D], 1.0, &mut rng));
        let params = stage(&mut tape, 1, 1e6, 15);
        let alpha = taf_scores(&mut tape, target, list, &params);
        for &a in tape.value(alpha).data() {
            assert!((a - 1.0 / 6.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_embeddings_give_zero_representations() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(vec![D]));
        let target = NewsViews { e_t: z, e_p: z, e_n: z };
        let zl = tape.leaf(Tensor::zeros(vec![3, D]));
        let list = ListViews { e_t: zl, e_p: zl, e_n: zl };
        let params = side(&mut tape, 2, 1.0, 16);
        let rep = content_rep_news(&mut tape, &target, &list, &params);
        assert!(!rep.cold);
        assert!(tape.value(rep.h_t).data().iter().all(|&x| x == 0.0));
        assert!(tape.value(rep.h_p).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_list_falls_back_to_zero_vectors() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = tape.leaf(Tensor::uniform(vec![D], 1.0, &mut rng));
        let target = NewsViews { e_t: t, e_p: t, e_n: t };
        let empty = tape.leaf(Tensor::new(vec![0, D], vec![]));
        let list = ListViews { e_t: empty, e_p: empty, e_n: empty };
        let params = side(&mut tape, 2, 1.0, 18);
        let rep = content_rep_user(&mut tape, &target, &list, &params);
        assert!(rep.cold);
        assert_eq!(tape.value(rep.h_t).data(), &[0.0; D]);
        assert_eq!(tape.value(rep.h_p).data(), &[0.0; D]);
    }

    /// Hand-built views where item 0 matches the target in the title view
    /// and item 1 matches it in the profile view.
    fn cross_view_fixture(tape: &mut Tape) -> (NewsViews, ListViews) {
        let e_t = tape.leaf(Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let e_p = tape.leaf(Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let target = NewsViews { e_t, e_p, e_n: e_t };
        let list_t = tape.leaf(Tensor::new(
            vec![2, D],
            vec![1.0, 0.0, 0.0, 0.0, /* item 1 */ 0.0, 1.0, 0.0, 0.0],
        ));
        let list_p = tape.leaf(Tensor::new(
            vec![2, D],
            vec![0.0, 1.0, 0.0, 0.0, /* item 1 */ 1.0, 0.0, 0.0, 0.0],
        ));
        let list = ListViews { e_t: list_t, e_p: list_p, e_n: list_t };
        (target, list)
    }

    /// One head whose score grows with first-coordinate agreement: Q picks
    /// coordinate 0, V adds item and target projections.
    fn agreement_stage(tape: &mut Tape) -> StageParams {
        let mut q = Tensor::zeros(vec![D, 1]);
        q.data_mut()[0] = 1.0;
        StageParams {
            heads: vec![AttentionHeadParams {
                q: tape.leaf(q),
                v: tape.leaf(Tensor::from_vec(vec![1.0, 1.0])),
            }],
            tau: 1.0,
        }
    }

    #[test]
    fn title_and_profile_views_rank_items_differently() {
        let mut tape = Tape::new();
        let (target, list) = cross_view_fixture(&mut tape);
        let params = agreement_stage(&mut tape);
        let alpha_t = taf_scores(&mut tape, target.e_t, list.e_t, &params);
        let alpha_p = taf_scores(&mut tape, target.e_p, list.e_p, &params);
        let at = tape.value(alpha_t).data().to_vec();
        let ap = tape.value(alpha_p).data().to_vec();
        assert!(at[0] > at[1], "title view prefers the title-matching item");
        assert!(ap[1] > ap[0], "profile view prefers the profile-matching item");
    }

    #[test]
    fn different_targets_move_the_alpha_argmax() {
        let mut tape = Tape::new();
        let list = tape.leaf(Tensor::new(
            vec![2, D],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        ));
        // Two heads reading coordinates 0 and 1. Within one head the score
        // is additive in item and target, so a target can only change the
        // head's softmax through tanh curvature: the -1 target weight
        // centers the matching head's scores in the steep region, widening
        // its inter-item gap, while non-matching heads stay half-saturated.
        let mut q0 = Tensor::zeros(vec![D, 1]);
        q0.data_mut()[0] = 1.0;
        let mut q1 = Tensor::zeros(vec![D, 1]);
        q1.data_mut()[1] = 1.0;
        let params = StageParams {
            heads: vec![
                AttentionHeadParams {
                    q: tape.leaf(q0),
                    v: tape.leaf(Tensor::from_vec(vec![2.0, -1.0])),
                },
                AttentionHeadParams {
                    q: tape.leaf(q1),
                    v: tape.leaf(Tensor::from_vec(vec![2.0, -1.0])),
                },
            ],
            tau: 1.0,
        };
        let t0 = tape.leaf(Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let t1 = tape.leaf(Tensor::from_vec(vec![0.0, 1.0, 0.0, 0.0]));
        let a0 = taf_scores(&mut tape, t0, list, &params);
        let a1 = taf_scores(&mut tape, t1, list, &params);
        let v0 = tape.value(a0).data().to_vec();
        let v1 = tape.value(a1).data().to_vec();
        assert!(v0[0] > v0[1], "target 0 favors item 0");
        assert!(v1[1] > v1[0], "target 1 favors item 1");
    }

    #[test]
    fn batched_scores_and_aggregation_match_per_example() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // Example 0 has 3 items, example 1 has 0 (cold), example 2 has 2.
        let items = tape.leaf(Tensor::uniform(vec![5, D], 1.0, &mut rng));
        let targets = tape.leaf(Tensor::uniform(vec![3, D], 1.0, &mut rng));
        let item_example = [0usize, 0, 0, 2, 2];
        let segments = [0usize, 3, 3, 5];
        let fparams = stage(&mut tape, 2, 1.0, 20);
        let aparams = stage(&mut tape, 2, 1.0, 21);

        let alpha = taf_scores_batched(&mut tape, targets, items, &item_example, &segments, &fparams);
        let filtered = apply_filter(&mut tape, alpha, items);
        let pooled = aggregate_batched(&mut tape, filtered, targets, &item_example, &segments, &aparams);

        for (ex, range) in [(0usize, 0..3), (2usize, 3..5)] {
            let start = range.start;
            let n = range.end - range.start;
            let list_rows: Vec<f32> = (start..start + n)
                .flat_map(|r| tape.value(items).row(r).to_vec())
                .collect();
            let list = tape.leaf(Tensor::new(vec![n, D], list_rows));
            let tgt_row = tape.value(targets).row(ex).to_vec();
            let tgt = tape.leaf(Tensor::from_vec(tgt_row));
            let a_single = taf_scores(&mut tape, tgt, list, &fparams);
            let h_single = apply_filter(&mut tape, a_single, list);
            let o_single = aggregate(&mut tape, h_single, tgt, &aparams);
            let av = tape.value(alpha).data()[start..start + n].to_vec();
            for (x, y) in av.iter().zip(tape.value(a_single).data()) {
                assert!((x - y).abs() < 1e-6);
            }
            let pv = tape.value(pooled).row(ex).to_vec();
            for (x, y) in pv.iter().zip(tape.value(o_single).data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        // Cold example: zero row.
        assert!(tape.value(pooled).row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn attention_dump_rows_carry_weights_and_origins() {
        let mut tape = Tape::new();
        let alpha = tape.leaf(Tensor::from_vec(vec![0.7, 0.3]));
        let rows = dump_attention(
            &tape,
            alpha,
            &[10, 20],
            &[ItemOrigin::Clicked, ItemOrigin::Expanded],
            View::Title,
            "u1/n10",
        );
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].item, 10);
        assert_eq!(rows[0].alpha, 0.7);
        assert_eq!(rows[0].origin, ItemOrigin::Clicked);
        assert_eq!(rows[1].origin, ItemOrigin::Expanded);
        let json = serde_json::to_string(&rows[1]).unwrap();
        assert!(json.contains("\"view\":\"title\""));
        assert!(json.contains("\"origin\":\"expanded\""));
    }
}
