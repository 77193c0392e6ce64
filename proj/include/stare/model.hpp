#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stare/decoders.hpp"
#include "stare/encoder.hpp"
#include "stare/graph.hpp"

namespace stare {

struct ModelConfig {
    bool use_encoder = true;   // false: decoder over the raw embedding matrices
    bool triple_mode = false;  // (T): train on the triple-reduced graph, drop
                               // qualifiers at linearization
    EncoderConfig encoder;
    DecoderConfig decoder;
    std::uint64_t seed = 42;

    std::size_t dim() const { return encoder.dim; }
};

// Full link-prediction model: embedding matrices, optional message-passing
// encoder over the augmented train graph, and one of the four decoders.
class LinkPredictionModel {
public:
    LinkPredictionModel(const std::vector<Statement>& base_statements,
                        const Vocabulary& base_vocab, ModelConfig cfg);

    // Builds the scores node for a batch; encoder (when enabled) runs over the
    // whole train graph inside the same tape so gradients reach V and R.
    Var forward(Tape& tape, const QueryBatch& batch, bool training, std::mt19937_64& rng,
                std::map<std::string, Var>* bound = nullptr);

    // Evaluation-mode scoring with the encoder output computed once and cached
    // until parameters change.
    Tensor score(const std::vector<Query>& queries);
    void invalidate_cache() { cache_valid_ = false; }

    Query query_for(const Statement& augmented_statement) const;
    // One object-prediction query per augmented non-self-loop train fact.
    std::vector<Query> training_queries() const;
    // Object- and subject-direction queries for an unseen (base-id) statement.
    std::pair<Query, Query> eval_queries(const Statement& base_statement) const;
    // Statements as this model keys them: triple-reduced in (T) mode. Filter
    // indexes must be built over these.
    std::vector<Statement> filter_statements(const std::vector<Statement>& base) const;

    std::size_t num_entities() const { return vocab.num_entities(); }
    std::size_t score_columns() const { return vocab.num_entities() + kNumReservedEntityRows; }
    // Rankable columns: real entities only, PAD/MASK excluded.
    std::vector<std::uint8_t> candidate_mask() const;

    ModelConfig config;
    Vocabulary vocab;                  // augmented
    std::vector<Statement> augmented;  // base + inverse + self-loop facts
    std::size_t num_base_facts = 0;    // facts before inverses/self-loops
    HyperGraph graph;
    ParamMap params;

private:
    bool cache_valid_ = false;
    Tensor vbar_cache_, rbar_cache_;
};

// Statement-level triple reduction (qualifiers stripped, duplicate main
// triples removed, first occurrence kept).
std::vector<Statement> reduce_statements_to_triples(const std::vector<Statement>& statements);

// Textual checkpoint: name, shape and %.17g payload per parameter tensor;
// round-trips doubles exactly.
void save_params(const std::string& path, const ParamMap& params);
ParamMap load_params(const std::string& path);

}  // namespace stare
