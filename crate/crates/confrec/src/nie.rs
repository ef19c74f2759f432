//! News information encoder: embedding lookups, parallel text convolutions
//! over the title and the entity profile, and the fused news representation.
//!
//! Each news yields three vectors of dimension `d`: a title view `e_t`, a
//! profile view `e_p`, and their fusion `e_n = tanh(W [e_t; e_p] + b)`.

use crate::corpus::NewsRecord;
use crate::tensor::{NodeId, Tape};

/// Convolution parameters of one view: kernel `[3, in_ch, d]`, bias `[d]`.
#[derive(Debug, Clone, Copy)]
pub struct PcnnParams {
    pub kernel: NodeId,
    pub bias: NodeId,
}

/// Fully connected fusion layer: weight `[2d, d]`, bias `[d]`.
#[derive(Debug, Clone, Copy)]
pub struct FuseParams {
    pub w: NodeId,
    pub b: NodeId,
}

/// All encoder parameters bound onto a tape.
#[derive(Debug, Clone, Copy)]
pub struct NieParams {
    pub word_table: NodeId,
    pub entity_table: NodeId,
    pub type_table: NodeId,
    pub title: PcnnParams,
    pub profile: PcnnParams,
    pub fuse: FuseParams,
}

/// The three views of one news (or, batched, matrices with one row per news).
#[derive(Debug, Clone, Copy)]
pub struct NewsViews {
    pub e_t: NodeId,
    pub e_p: NodeId,
    pub e_n: NodeId,
}

/// Title embedding matrix `[m, n1]` for one record.
pub fn build_title_matrix(tape: &mut Tape, word_table: NodeId, record: &NewsRecord) -> NodeId {
    let indices: Vec<usize> = record.title_ids.iter().map(|&i| i as usize).collect();
    tape.gather(word_table, indices)
}

/// Profile embedding matrix `[p, 2*n2]` for one record; row i is the
/// concatenation `[type_i; entity_i]`.
pub fn build_profile_matrix(
    tape: &mut Tape,
    entity_table: NodeId,
    type_table: NodeId,
    record: &NewsRecord,
) -> NodeId {
    let type_idx: Vec<usize> = record.type_ids.iter().map(|&i| i as usize).collect();
    let entity_idx: Vec<usize> = record.entity_ids.iter().map(|&i| i as usize).collect();
    let types = tape.gather(type_table, type_idx);
    let entities = tape.gather(entity_table, entity_idx);
    tape.concat_cols(types, entities)
}

/// Window-3 convolution over the sequence axis with tanh, then max-over-time
/// pooling. Input `[seq, in_ch]` gives `[d]`; input `[batch, seq, in_ch]`
/// gives `[batch, d]`.
pub fn pcnn_encode(tape: &mut Tape, matrix: NodeId, params: &PcnnParams) -> NodeId {
    let conv = tape.conv1d(matrix, params.kernel, params.bias);
    let act = tape.tanh(conv);
    tape.max_over_time_pool(act)
}

/// Fused representation `tanh(W [e_t; e_p] + b)`. Accepts single vectors
/// (`[d]` each) or batched matrices (`[n, d]` each).
pub fn fuse(tape: &mut Tape, e_t: NodeId, e_p: NodeId, params: &FuseParams) -> NodeId {
    let joined = if tape.shape(e_t).len() == 1 {
        tape.concat(&[e_t, e_p])
    } else {
        tape.concat_cols(e_t, e_p)
    };
    let lin = tape.matmul(joined, params.w);
    let biased = tape.add(lin, params.b);
    tape.tanh(biased)
}

/// Encode one news record into its three views.
pub fn encode_news(tape: &mut Tape, params: &NieParams, record: &NewsRecord) -> NewsViews {
    let title = build_title_matrix(tape, params.word_table, record);
    let profile = build_profile_matrix(tape, params.entity_table, params.type_table, record);
    let e_t = pcnn_encode(tape, title, &params.title);
    let e_p = pcnn_encode(tape, profile, &params.profile);
    let e_n = fuse(tape, e_t, e_p, &params.fuse);
    NewsViews { e_t, e_p, e_n }
}

/// Encode many records at once; the returned views are `[n, d]` matrices
/// whose row order matches `records`.
pub fn encode_all(tape: &mut Tape, params: &NieParams, records: &[&NewsRecord]) -> NewsViews {
    assert!(!records.is_empty(), "encode_all requires at least one record");
    let n = records.len();
    let m = records[0].title_ids.len();
    let p = records[0].entity_ids.len();
    let mut title_idx = Vec::with_capacity(n * m);
    let mut entity_idx = Vec::with_capacity(n * p);
    let mut type_idx = Vec::with_capacity(n * p);
    for r in records {
        assert_eq!(r.title_ids.len(), m, "inconsistent title length");
        assert_eq!(r.entity_ids.len(), p, "inconsistent profile length");
        title_idx.extend(r.title_ids.iter().map(|&i| i as usize));
        entity_idx.extend(r.entity_ids.iter().map(|&i| i as usize));
        type_idx.extend(r.type_ids.iter().map(|&i| i as usize));
    }
    let n1 = tape.shape(params.word_table)[1];
    let n2 = tape.shape(params.entity_table)[1];

    let words = tape.gather(params.word_table, title_idx);
    let title3 = tape.reshape(words, vec![n, m, n1]);
    let e_t = pcnn_encode(tape, title3, &params.title);

    let types = tape.gather(params.type_table, type_idx);
    let entities = tape.gather(params.entity_table, entity_idx);
    let profile_rows = tape.concat_cols(types, entities);
    let profile3 = tape.reshape(profile_rows, vec![n, p, 2 * n2]);
    let e_p = pcnn_encode(tape, profile3, &params.profile);

    let e_n = fuse(tape, e_t, e_p, &params.fuse);
    NewsViews { e_t, e_p, e_n }
}
