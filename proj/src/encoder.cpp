#include "stare/encoder.hpp"

#include <algorithm>

namespace stare {

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError(s, "unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "?";
}

ParamMap init_encoder_params(const HyperGraph& graph, const EncoderConfig& cfg,
                             std::mt19937_64& rng) {
    ParamMap p;
    const std::size_t d = cfg.dim;
    p["v"] = xavier_uniform(graph.num_entities + kNumReservedEntityRows, d, rng);
    p["r"] = xavier_uniform(graph.num_relations, d, rng);
    const std::size_t msg_rows = cfg.gamma_kind == GammaKind::Concat ? 2 * d : d;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        p[base + "w_out"] = xavier_uniform(msg_rows, d, rng);
        p[base + "w_in"] = xavier_uniform(msg_rows, d, rng);
        p[base + "w_self"] = xavier_uniform(msg_rows, d, rng);
        p[base + "w_q"] = xavier_uniform(d, d, rng);
        p[base + "w_rel"] = xavier_uniform(d, d, rng);
    }
    return p;
}

namespace {

Var apply_activation(Tape& tape, Var x, Activation act) {
    switch (act) {
        case Activation::Tanh: return tape.tanh_act(x);
        case Activation::Relu: return tape.relu(x);
        case Activation::Identity: return x;
    }
    return x;
}

}  // namespace

EncoderOutput encoder_layer(Tape& tape, const HyperGraph& graph, Var entities, Var relations,
                            const std::map<std::string, Var>& lp, const EncoderConfig& cfg,
                            bool training, std::mt19937_64& rng) {
    const std::size_t n_edges = graph.num_facts;
    const std::size_t d = tape.val(entities).cols;

    std::vector<std::int64_t> sub_idx(graph.sub.begin(), graph.sub.end());
    std::vector<std::int64_t> obj_idx(graph.obj.begin(), graph.obj.end());
    std::vector<std::int64_t> rel_idx(graph.rel.begin(), graph.rel.end());

    Var h_r = tape.gather_rows(relations, rel_idx);

    // Qualifier vectors for all facts at once: compose each qualifier pair,
    // sum by fact index, project. Facts without qualifiers keep all-zero rows
    // and are bypassed by the mask below.
    Var rel_in;
    const bool any_quals = !graph.qual_fact.empty();
    std::vector<std::uint8_t> has_quals(n_edges, 0);
    for (std::size_t k = 0; k < n_edges; ++k) has_quals[k] = graph.qual_count[k] > 0;
    Var h_q;
    if (any_quals) {
        std::vector<std::int64_t> qr_idx(graph.qual_rel.begin(), graph.qual_rel.end());
        std::vector<std::int64_t> qv_idx(graph.qual_val.begin(), graph.qual_val.end());
        Var hqr = tape.gather_rows(relations, qr_idx);
        Var hqv = tape.gather_rows(entities, qv_idx);
        Var composed = tape.phi_rows(hqv, hqr, cfg.phi_q);
        std::vector<std::int64_t> fact_idx(graph.qual_fact.begin(), graph.qual_fact.end());
        Var summed = tape.scatter_add_rows(composed, fact_idx, n_edges);
        if (cfg.qual_aggregation == QualAggregation::Mean) {
            std::vector<double> inv(n_edges, 1.0);
            for (std::size_t k = 0; k < n_edges; ++k)
                if (graph.qual_count[k] > 0) inv[k] = 1.0 / graph.qual_count[k];
            summed = tape.scale_rows(summed, std::move(inv));
        }
        h_q = tape.matmul(summed, lp.at("w_q"));
    }

    switch (cfg.gamma_kind) {
        case GammaKind::WeightedSum:
            if (any_quals) {
                Var mixed = tape.add(tape.scale(h_r, cfg.alpha), tape.scale(h_q, 1.0 - cfg.alpha));
                rel_in = tape.where_rows(has_quals, mixed, h_r);
            } else {
                rel_in = h_r;
            }
            break;
        case GammaKind::Mul:
            if (any_quals) {
                rel_in = tape.where_rows(has_quals, tape.mul(h_r, h_q), h_r);
            } else {
                rel_in = h_r;
            }
            break;
        case GammaKind::Concat: {
            Var tail = any_quals ? h_q : tape.leaf(Tensor(n_edges, d), false);
            rel_in = tape.concat_cols(h_r, tail);
            break;
        }
    }

    Var h_u = tape.gather_rows(entities, sub_idx);
    Var msg = tape.phi_rows(h_u, rel_in, cfg.phi_r);

    std::vector<std::int32_t> dir(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) {
        switch (graph.direction_of(e)) {
            case EdgeDirection::Outgoing: dir[e] = 0; break;
            case EdgeDirection::Incoming: dir[e] = 1; break;
            case EdgeDirection::SelfLoop: dir[e] = 2; break;
        }
    }
    Var weighted = tape.group_matmul(
        msg, {lp.at("w_out"), lp.at("w_in"), lp.at("w_self")}, std::move(dir));

    std::size_t n_rows = tape.val(entities).rows;
    Var agg = tape.scatter_add_rows(weighted, obj_idx, n_rows);
    if (cfg.degree_mean) {
        std::vector<double> inv(n_rows, 1.0);
        std::vector<std::size_t> indeg(n_rows, 0);
        for (auto o : graph.obj) indeg[static_cast<std::size_t>(o)]++;
        for (std::size_t i = 0; i < n_rows; ++i)
            if (indeg[i] > 1) inv[i] = 1.0 / static_cast<double>(indeg[i]);
        agg = tape.scale_rows(agg, std::move(inv));
    }
    Var out_v = apply_activation(tape, agg, cfg.activation);
    out_v = tape.dropout(out_v, cfg.dropout, rng, training);
    Var out_r = tape.matmul(relations, lp.at("w_rel"));
    return {out_v, out_r};
}

EncoderOutput encoder_forward(Tape& tape, const HyperGraph& graph, const ParamMap& params,
                              const EncoderConfig& cfg, bool training, std::mt19937_64& rng,
                              std::map<std::string, Var>* bound) {
    if (cfg.num_layers < 1) throw ConfigError("model.encoder.layers", "need at least one layer");
    auto bind = [&](const std::string& name) {
        Var v = tape.leaf(params.at(name), true);
        if (bound) (*bound)[name] = v;
        return v;
    };
    Var v = bind("v");
    Var r = bind("r");
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        std::map<std::string, Var> lp;
        for (const char* w : {"w_out", "w_in", "w_self", "w_q", "w_rel"})
            lp[w] = bind(base + w);
        auto out = encoder_layer(tape, graph, v, r, lp, cfg, training, rng);
        v = out.entities;
        r = out.relations;
    }
    return {v, r};
}

std::vector<double> aggregate_qualifiers(std::size_t fact_id, const HyperGraph& graph,
                                         const EmbeddingStore& store, const Tensor& w_q,
                                         const EncoderConfig& cfg) {
    if (fact_id >= graph.num_facts) throw GraphError("aggregate_qualifiers: bad fact id");
    const std::size_t d = store.relations.cols;
    std::vector<double> sum(d, 0.0);
    std::size_t count = 0;
    for (std::size_t q = 0; q < graph.qual_fact.size(); ++q) {
        if (static_cast<std::size_t>(graph.qual_fact[q]) != fact_id) continue;
        const double* qr = store.relations.row(static_cast<std::size_t>(graph.qual_rel[q]));
        const double* qv = store.entities.row(static_cast<std::size_t>(graph.qual_val[q]));
        std::vector<double> composed =
            phi(std::vector<double>(qv, qv + d), std::vector<double>(qr, qr + d), cfg.phi_q);
        for (std::size_t j = 0; j < d; ++j) sum[j] += composed[j];
        ++count;
    }
    if (count == 0) return {};  // EMPTY marker
    if (cfg.qual_aggregation == QualAggregation::Mean)
        for (double& v : sum) v /= static_cast<double>(count);
    std::vector<double> out(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double av = sum[k];
        const double* wr = w_q.row(k);
        for (std::size_t j = 0; j < d; ++j) out[j] += av * wr[j];
    }
    return out;
}

std::vector<double> message(const std::vector<double>& h_u, const std::vector<double>& h_r,
                            const std::vector<double>& h_q_or_empty, EdgeDirection direction,
                            const Tensor& w_out, const Tensor& w_in, const Tensor& w_self,
                            const EncoderConfig& cfg) {
    const bool empty = h_q_or_empty.empty();
    std::vector<double> rel_in;
    if (cfg.gamma_kind == GammaKind::Concat) {
        std::vector<double> tail = empty ? std::vector<double>(h_r.size(), 0.0) : h_q_or_empty;
        rel_in = gamma(h_r, tail, GammaKind::Concat, cfg.alpha);
    } else if (empty) {
        rel_in = h_r;
    } else {
        rel_in = gamma(h_r, h_q_or_empty, cfg.gamma_kind, cfg.alpha);
    }

    const std::size_t d = h_u.size();
    std::vector<double> composed;
    if (rel_in.size() == 2 * d) {
        auto lo = phi(h_u, std::vector<double>(rel_in.begin(), rel_in.begin() + d), cfg.phi_r);
        auto hi = phi(h_u, std::vector<double>(rel_in.begin() + d, rel_in.end()), cfg.phi_r);
        composed = lo;
        composed.insert(composed.end(), hi.begin(), hi.end());
    } else {
        composed = phi(h_u, rel_in, cfg.phi_r);
    }

    const Tensor* w = nullptr;
    switch (direction) {
        case EdgeDirection::Outgoing: w = &w_out; break;
        case EdgeDirection::Incoming: w = &w_in; break;
        case EdgeDirection::SelfLoop: w = &w_self; break;
    }
    if (w->rows != composed.size()) throw ShapeError("message: weight shape mismatch");
    std::vector<double> out(w->cols, 0.0);
    for (std::size_t k = 0; k < composed.size(); ++k) {
        double av = composed[k];
        const double* wr = w->row(k);
        for (std::size_t j = 0; j < w->cols; ++j) out[j] += av * wr[j];
    }
    return out;
}

EmbeddingStore layer_forward(const HyperGraph& graph, const EmbeddingStore& store,
                             const ParamMap& params, std::size_t layer_index,
                             const EncoderConfig& cfg) {
    Tape tape;
    std::mt19937_64 rng(0);
    Var v = tape.leaf(store.entities, false);
    Var r = tape.leaf(store.relations, false);
    std::string base = "layer" + std::to_string(layer_index) + ".";
    std::map<std::string, Var> lp;
    for (const char* w : {"w_out", "w_in", "w_self", "w_q", "w_rel"})
        lp[w] = tape.leaf(params.at(base + w), false);
    auto out = encoder_layer(tape, graph, v, r, lp, cfg, /*training=*/false, rng);
    return {tape.val(out.entities), tape.val(out.relations)};
}

}  // namespace stare
