#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "stare/autograd.hpp"
#include "stare/encoder.hpp"
#include "stare/graph.hpp"

namespace stare {

enum class DecoderKind { PooledTransformer, ConvE, ConvKB, MaskedTransformer };
DecoderKind decoder_kind_from_string(const std::string& s);
std::string to_string(DecoderKind k);

struct DecoderConfig {
    DecoderKind kind = DecoderKind::PooledTransformer;
    std::size_t max_len = 15;  // L_Q, padded query length
    std::size_t layers = 2;
    std::size_t hidden = 512;  // transformer feed-forward width
    std::size_t heads = 4;
    double dropout = 0.1;
    std::size_t filters = 200;
    std::size_t kernel_h = 7;
    std::size_t kernel_w = 7;
    std::size_t image_h = 0;  // 0 = derive a near-square H*W = L_Q*dim factorization
    std::size_t image_w = 0;
};

// Linearized, padded token sequence for object prediction. Tokens address
// either the entity matrix (subject, qualifier values, PAD, MASK) or the
// relation matrix (relation, qualifier relations).
struct Query {
    std::vector<std::int64_t> ids;
    std::vector<std::uint8_t> is_entity;
    std::vector<std::uint8_t> real;  // non-pad positions
    EntityId target = 0;
    Statement source;  // augmented-id statement the query came from
};

// Builds [s, r, qr1, qv1, ...] with qualifier pairs sorted by (qr, qv)
// ascending, PAD-filled to max_len. with_mask_slot reserves position 2 for the
// MASK token (masked-transformer decoding); drop_qualifiers gives the (T)
// linearization. Throws when the statement does not fit max_len.
Query linearize_query(const Statement& statement, const Vocabulary& vocab,
                      std::size_t num_entities, std::size_t max_len, bool with_mask_slot,
                      bool drop_qualifiers = false);

struct QueryBatch {
    std::size_t batch = 0;
    std::size_t len = 0;
    std::vector<std::int64_t> ent_idx, rel_idx, pos_idx;
    std::vector<double> ent_mask, rel_mask;
    std::vector<std::uint8_t> real;
    std::vector<EntityId> targets;
};

QueryBatch make_query_batch(const std::vector<Query>& queries);

ParamMap init_decoder_params(const DecoderConfig& cfg, std::size_t dim, std::size_t num_entities,
                             std::mt19937_64& rng);

// Scores every entity row of vbar for each query in the batch. Reserved
// PAD/MASK columns are not masked here; ranking and the loss exclude them.
Var decoder_forward(Tape& tape, const QueryBatch& batch, Var vbar, Var rbar,
                    const ParamMap& params, const DecoderConfig& cfg, std::size_t dim,
                    bool training, std::mt19937_64& rng, std::map<std::string, Var>* bound = nullptr);

// Conv geometry helpers (exposed for desk checks).
std::pair<std::size_t, std::size_t> conve_image_shape(const DecoderConfig& cfg, std::size_t len,
                                                      std::size_t dim);
ConvDims conve_dims(const DecoderConfig& cfg, std::size_t batch, std::size_t len,
                    std::size_t dim);
ConvDims convkb_dims(const DecoderConfig& cfg, std::size_t batch, std::size_t len,
                     std::size_t dim);

}  // namespace stare
