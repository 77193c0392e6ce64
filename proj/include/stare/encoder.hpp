#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "stare/autograd.hpp"
#include "stare/graph.hpp"

namespace stare {

enum class Activation { Tanh, Relu, Identity };
Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

enum class QualAggregation { Sum, Mean };

struct EncoderConfig {
    std::size_t num_layers = 2;
    std::size_t dim = 200;
    PhiKind phi_r = PhiKind::Rotate;
    PhiKind phi_q = PhiKind::Rotate;
    GammaKind gamma_kind = GammaKind::WeightedSum;
    double alpha = 0.8;
    QualAggregation qual_aggregation = QualAggregation::Sum;
    double dropout = 0.3;
    Activation activation = Activation::Tanh;
    bool degree_mean = false;  // optional mean-by-in-degree, off by default
};

// Entity matrix V (vocabulary entities plus the PAD and MASK reserved rows)
// and relation matrix R over the augmented relation vocabulary.
struct EmbeddingStore {
    Tensor entities;   // (num_entities + 2) x d
    Tensor relations;  // num_relations_augmented x d
};

// Checkpointable parameter set, keyed by name:
//   v, r, layer{i}.w_out, layer{i}.w_in, layer{i}.w_self, layer{i}.w_q,
//   layer{i}.w_rel, plus decoder parameters added by the decoders module.
using ParamMap = std::map<std::string, Tensor>;

// Reserved decoder token rows appended after real entities in V.
constexpr std::size_t kNumReservedEntityRows = 2;
inline std::int64_t pad_row(std::size_t num_entities) {
    return static_cast<std::int64_t>(num_entities);
}
inline std::int64_t mask_row(std::size_t num_entities) {
    return static_cast<std::int64_t>(num_entities) + 1;
}

ParamMap init_encoder_params(const HyperGraph& graph, const EncoderConfig& cfg,
                             std::mt19937_64& rng);

struct EncoderOutput {
    Var entities;
    Var relations;
};

// One message-passing layer over the augmented graph: node update via
// direction-specific weights on composed messages with qualifier-aware
// relation vectors, relation update via w_rel, activation, then dropout in
// training mode. Scatter-adds run in edge-row order.
EncoderOutput encoder_layer(Tape& tape, const HyperGraph& graph, Var entities, Var relations,
                            const std::map<std::string, Var>& layer_params,
                            const EncoderConfig& cfg, bool training, std::mt19937_64& rng);

// Stacks cfg.num_layers layers. `params` is consulted for v/r and per-layer
// weights; the returned map in `bound` exposes tape vars per parameter name so
// callers can read gradients after backward.
EncoderOutput encoder_forward(Tape& tape, const HyperGraph& graph, const ParamMap& params,
                              const EncoderConfig& cfg, bool training, std::mt19937_64& rng,
                              std::map<std::string, Var>* bound = nullptr);

// Plain-tensor entry points used for desk checking single pieces.
//
// Qualifier vector of one fact: w_q * sum(phi_q(qv, qr)) over the fact's
// qualifier rows in row order (mean divides by the count). Returns an empty
// vector for a fact without qualifiers; gamma is bypassed downstream.
std::vector<double> aggregate_qualifiers(std::size_t fact_id, const HyperGraph& graph,
                                         const EmbeddingStore& store, const Tensor& w_q,
                                         const EncoderConfig& cfg);

// Single-edge message: W_{lambda(r)} * phi_r(h_u, gamma(h_r, h_q)); with the
// EMPTY marker, phi_r receives h_r unchanged (zero second block under concat).
std::vector<double> message(const std::vector<double>& h_u, const std::vector<double>& h_r,
                            const std::vector<double>& h_q_or_empty, EdgeDirection direction,
                            const Tensor& w_out, const Tensor& w_in, const Tensor& w_self,
                            const EncoderConfig& cfg);

// One layer as a plain function of tensors (no gradients): runs the tape path
// on a scratch tape so the arithmetic is the single source of truth.
EmbeddingStore layer_forward(const HyperGraph& graph, const EmbeddingStore& store,
                             const ParamMap& params, std::size_t layer_index,
                             const EncoderConfig& cfg);

}  // namespace stare
