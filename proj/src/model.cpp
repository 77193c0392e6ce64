#include "stare/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace stare {

std::vector<Statement> reduce_statements_to_triples(const std::vector<Statement>& statements) {
    std::vector<Statement> out;
    std::unordered_set<std::string> seen;
    out.reserve(statements.size());
    for (const auto& s : statements) {
        std::string key = std::to_string(s.subject) + "|" + std::to_string(s.relation) + "|" +
                          std::to_string(s.object);
        if (!seen.insert(key).second) continue;
        Statement t;
        t.subject = s.subject;
        t.relation = s.relation;
        t.object = s.object;
        out.push_back(std::move(t));
    }
    return out;
}

LinkPredictionModel::LinkPredictionModel(const std::vector<Statement>& base_statements,
                                         const Vocabulary& base_vocab, ModelConfig cfg)
    : config(cfg) {
    std::vector<Statement> base =
        cfg.triple_mode ? reduce_statements_to_triples(base_statements) : base_statements;
    num_base_facts = base.size();
    auto [aug, aug_vocab] = augment_edges(base, base_vocab);
    augmented = std::move(aug);
    vocab = std::move(aug_vocab);
    graph = to_sparse(augmented, vocab);

    std::mt19937_64 rng(cfg.seed);
    if (cfg.use_encoder) {
        params = init_encoder_params(graph, cfg.encoder, rng);
    } else {
        params["v"] =
            xavier_uniform(graph.num_entities + kNumReservedEntityRows, cfg.dim(), rng);
        params["r"] = xavier_uniform(graph.num_relations, cfg.dim(), rng);
    }
    ParamMap dec = init_decoder_params(cfg.decoder, cfg.dim(), vocab.num_entities(), rng);
    params.insert(dec.begin(), dec.end());
}

Var LinkPredictionModel::forward(Tape& tape, const QueryBatch& batch, bool training,
                                 std::mt19937_64& rng, std::map<std::string, Var>* bound) {
    Var vbar, rbar;
    if (config.use_encoder) {
        auto enc = encoder_forward(tape, graph, params, config.encoder, training, rng, bound);
        vbar = enc.entities;
        rbar = enc.relations;
    } else {
        vbar = tape.leaf(params.at("v"), true);
        rbar = tape.leaf(params.at("r"), true);
        if (bound) {
            (*bound)["v"] = vbar;
            (*bound)["r"] = rbar;
        }
    }
    return decoder_forward(tape, batch, vbar, rbar, params, config.decoder, config.dim(),
                           training, rng, bound);
}

Tensor LinkPredictionModel::score(const std::vector<Query>& queries) {
    std::mt19937_64 rng(config.seed);
    if (!cache_valid_) {
        if (config.use_encoder) {
            Tape tape;
            auto enc =
                encoder_forward(tape, graph, params, config.encoder, /*training=*/false, rng);
            vbar_cache_ = tape.val(enc.entities);
            rbar_cache_ = tape.val(enc.relations);
        } else {
            vbar_cache_ = params.at("v");
            rbar_cache_ = params.at("r");
        }
        cache_valid_ = true;
    }
    Tape tape;
    Var vbar = tape.leaf(vbar_cache_, false);
    Var rbar = tape.leaf(rbar_cache_, false);
    QueryBatch batch = make_query_batch(queries);
    Var scores = decoder_forward(tape, batch, vbar, rbar, params, config.decoder, config.dim(),
                                 /*training=*/false, rng);
    return tape.val(scores);
}

Query LinkPredictionModel::query_for(const Statement& augmented_statement) const {
    // In (T) mode qualifiers are dropped everywhere: from the token sequence
    // and from the source statement that keys labels and filter sets.
    Statement source = augmented_statement;
    if (config.triple_mode) source.qualifiers.clear();
    Query q = linearize_query(source, vocab, vocab.num_entities(), config.decoder.max_len,
                              config.decoder.kind == DecoderKind::MaskedTransformer);
    return q;
}

std::vector<Query> LinkPredictionModel::training_queries() const {
    std::vector<Query> out;
    out.reserve(2 * num_base_facts);
    for (std::size_t i = 0; i < 2 * num_base_facts; ++i)
        out.push_back(query_for(augmented[i]));
    return out;
}

std::pair<Query, Query> LinkPredictionModel::eval_queries(const Statement& base) const {
    Statement object_q = base;
    Statement subject_q;
    subject_q.subject = base.object;
    subject_q.relation = vocab.inverse_relation(base.relation);
    subject_q.object = base.subject;
    subject_q.qualifiers = base.qualifiers;
    return {query_for(object_q), query_for(subject_q)};
}

std::vector<Statement> LinkPredictionModel::filter_statements(
    const std::vector<Statement>& base) const {
    if (!config.triple_mode) return base;
    std::vector<Statement> out = base;
    for (auto& s : out) s.qualifiers.clear();
    return out;
}

std::vector<std::uint8_t> LinkPredictionModel::candidate_mask() const {
    std::vector<std::uint8_t> mask(score_columns(), 1);
    mask[static_cast<std::size_t>(pad_row(vocab.num_entities()))] = 0;
    mask[static_cast<std::size_t>(mask_row(vocab.num_entities()))] = 0;
    return mask;
}

void save_params(const std::string& path, const ParamMap& params) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out << "stare-checkpoint 1\n";
    char buf[64];
    for (const auto& [name, t] : params) {
        out << "tensor " << name << " " << t.rows << " " << t.cols << "\n";
        for (std::size_t i = 0; i < t.rows; ++i) {
            for (std::size_t j = 0; j < t.cols; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", t.at(i, j));
                out << buf << (j + 1 == t.cols ? "" : " ");
            }
            out << "\n";
        }
    }
    if (!out) throw Error("failed writing checkpoint: " + path);
}

ParamMap load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "stare-checkpoint" || version != 1)
        throw Error("bad checkpoint header in " + path);
    ParamMap params;
    std::string tag;
    while (in >> tag) {
        if (tag != "tensor") throw Error("bad checkpoint record '" + tag + "' in " + path);
        std::string name;
        std::size_t rows = 0, cols = 0;
        in >> name >> rows >> cols;
        Tensor t(rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i)
            if (!(in >> t.data[i])) throw Error("truncated checkpoint payload in " + path);
        params[name] = std::move(t);
    }
    return params;
}

}  // namespace stare
