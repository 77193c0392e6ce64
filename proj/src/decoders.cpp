#include "stare/decoders.hpp"

#include <algorithm>
#include <cmath>

namespace stare {

DecoderKind decoder_kind_from_string(const std::string& s) {
    if (s == "pooled_transformer" || s == "transformer") return DecoderKind::PooledTransformer;
    if (s == "conve") return DecoderKind::ConvE;
    if (s == "convkb") return DecoderKind::ConvKB;
    if (s == "masked_transformer") return DecoderKind::MaskedTransformer;
    throw ConfigError(s, "unknown decoder kind: " + s);
}

std::string to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::PooledTransformer: return "pooled_transformer";
        case DecoderKind::ConvE: return "conve";
        case DecoderKind::ConvKB: return "convkb";
        case DecoderKind::MaskedTransformer: return "masked_transformer";
    }
    return "?";
}

Query linearize_query(const Statement& statement, const Vocabulary& vocab,
                      std::size_t num_entities, std::size_t max_len, bool with_mask_slot,
                      bool drop_qualifiers) {
    (void)vocab;
    auto quals = statement.qualifiers;
    if (drop_qualifiers) quals.clear();
    std::sort(quals.begin(), quals.end());

    const std::size_t need = 2 + (with_mask_slot ? 1 : 0) + 2 * quals.size();
    if (need > max_len)
        throw ShapeError("linearize_query: statement with " + std::to_string(quals.size()) +
                         " qualifiers does not fit query length " + std::to_string(max_len));

    Query q;
    q.ids.assign(max_len, pad_row(num_entities));
    q.is_entity.assign(max_len, 1);
    q.real.assign(max_len, 0);
    q.target = statement.object;
    q.source = statement;

    std::size_t p = 0;
    auto put = [&](std::int64_t id, bool entity) {
        q.ids[p] = id;
        q.is_entity[p] = entity ? 1 : 0;
        q.real[p] = 1;
        ++p;
    };
    put(statement.subject, true);
    put(statement.relation, false);
    if (with_mask_slot) put(mask_row(num_entities), true);
    for (const auto& [qr, qv] : quals) {
        put(qr, false);
        put(qv, true);
    }
    return q;
}

QueryBatch make_query_batch(const std::vector<Query>& queries) {
    QueryBatch b;
    if (queries.empty()) throw ShapeError("make_query_batch: empty batch");
    b.batch = queries.size();
    b.len = queries[0].ids.size();
    b.ent_idx.assign(b.batch * b.len, 0);
    b.rel_idx.assign(b.batch * b.len, 0);
    b.pos_idx.assign(b.batch * b.len, 0);
    b.ent_mask.assign(b.batch * b.len, 0.0);
    b.rel_mask.assign(b.batch * b.len, 0.0);
    b.real.assign(b.batch * b.len, 0);
    b.targets.reserve(b.batch);
    for (std::size_t i = 0; i < b.batch; ++i) {
        const Query& q = queries[i];
        if (q.ids.size() != b.len) throw ShapeError("make_query_batch: ragged query lengths");
        b.targets.push_back(q.target);
        for (std::size_t p = 0; p < b.len; ++p) {
            std::size_t at = i * b.len + p;
            b.pos_idx[at] = static_cast<std::int64_t>(p);
            b.real[at] = q.real[p];
            if (q.is_entity[p]) {
                b.ent_idx[at] = q.ids[p];
                b.ent_mask[at] = 1.0;
            } else {
                b.rel_idx[at] = q.ids[p];
                b.rel_mask[at] = 1.0;
            }
        }
    }
    return b;
}

std::pair<std::size_t, std::size_t> conve_image_shape(const DecoderConfig& cfg, std::size_t len,
                                                      std::size_t dim) {
    const std::size_t n = len * dim;
    if (cfg.image_h != 0 || cfg.image_w != 0) {
        if (cfg.image_h * cfg.image_w != n)
            throw ShapeError("conve: image " + std::to_string(cfg.image_h) + "x" +
                             std::to_string(cfg.image_w) + " does not reshape " +
                             std::to_string(n) + " values");
        return {cfg.image_h, cfg.image_w};
    }
    auto root = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    for (std::size_t h = root; h >= 1; --h)
        if (n % h == 0) return {h, n / h};
    return {1, n};
}

ConvDims conve_dims(const DecoderConfig& cfg, std::size_t batch, std::size_t len,
                    std::size_t dim) {
    auto [h, w] = conve_image_shape(cfg, len, dim);
    if (cfg.kernel_h > h || cfg.kernel_w > w)
        throw ShapeError("conve: kernel exceeds image");
    return ConvDims{batch, h, w, cfg.filters, cfg.kernel_h, cfg.kernel_w};
}

ConvDims convkb_dims(const DecoderConfig& cfg, std::size_t batch, std::size_t len,
                     std::size_t dim) {
    if (dim < cfg.kernel_w)
        throw ShapeError("convkb: kernel width " + std::to_string(cfg.kernel_w) +
                         " exceeds embedding dimension " + std::to_string(dim));
    return ConvDims{batch, len, dim, cfg.filters, len, cfg.kernel_w};
}

ParamMap init_decoder_params(const DecoderConfig& cfg, std::size_t dim,
                             std::size_t num_entities, std::mt19937_64& rng) {
    (void)num_entities;
    ParamMap p;
    const bool transformer = cfg.kind == DecoderKind::PooledTransformer ||
                             cfg.kind == DecoderKind::MaskedTransformer;
    if (transformer) {
        if (dim % cfg.heads != 0)
            throw ConfigError("model.decoder.heads", "embedding dim not divisible by heads");
        p["dec.pos"] = xavier_uniform(cfg.max_len, dim, rng);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::string base = "dec.l" + std::to_string(l) + ".";
            for (const char* w : {"wq", "wk", "wv", "wo"})
                p[base + w] = xavier_uniform(dim, dim, rng);
            for (const char* b : {"bq", "bk", "bv", "bo"}) p[base + b] = Tensor(1, dim);
            p[base + "ln1_g"] = Tensor(1, dim, 1.0);
            p[base + "ln1_b"] = Tensor(1, dim);
            p[base + "ffn_w1"] = xavier_uniform(dim, cfg.hidden, rng);
            p[base + "ffn_b1"] = Tensor(1, cfg.hidden);
            p[base + "ffn_w2"] = xavier_uniform(cfg.hidden, dim, rng);
            p[base + "ffn_b2"] = Tensor(1, dim);
            p[base + "ln2_g"] = Tensor(1, dim, 1.0);
            p[base + "ln2_b"] = Tensor(1, dim);
        }
        p["dec.fc_w"] = xavier_uniform(dim, dim, rng);
        p["dec.fc_b"] = Tensor(1, dim);
    } else {
        ConvDims dims = cfg.kind == DecoderKind::ConvE ? conve_dims(cfg, 1, cfg.max_len, dim)
                                                       : convkb_dims(cfg, 1, cfg.max_len, dim);
        p["dec.conv_k"] = xavier_uniform(dims.filters, dims.k_h * dims.k_w, rng);
        // Fan-in uniform bias; an exactly-zero bias parks windows over padded
        // rows exactly on the rectifier kink.
        Tensor cb(1, dims.filters);
        double bound = 1.0 / std::sqrt(static_cast<double>(dims.k_h * dims.k_w));
        std::uniform_real_distribution<double> bdist(-bound, bound);
        for (double& v : cb.data) v = bdist(rng);
        p["dec.conv_b"] = std::move(cb);
        p["dec.fc_w"] = xavier_uniform(dims.filters * dims.out_h() * dims.out_w(), dim, rng);
        p["dec.fc_b"] = Tensor(1, dim);
    }
    return p;
}

namespace {

Tensor attention_key_mask(const QueryBatch& b, std::size_t heads) {
    Tensor keep(b.batch * heads * b.len, b.len);
    for (std::size_t bi = 0; bi < b.batch; ++bi)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < b.len; ++i)
                for (std::size_t j = 0; j < b.len; ++j)
                    keep.at((bi * heads + h) * b.len + i, j) =
                        b.real[bi * b.len + j] ? 1.0 : 0.0;
    return keep;
}

Var transformer_stack(Tape& tape, const QueryBatch& batch, Var x, const DecoderConfig& cfg,
                      const std::map<std::string, Var>& bound, bool training,
                      std::mt19937_64& rng) {
    Tensor keymask = attention_key_mask(batch, cfg.heads);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        std::string base = "dec.l" + std::to_string(l) + ".";
        Var q = tape.add_rowvec(tape.matmul(x, bound.at(base + "wq")), bound.at(base + "bq"));
        Var k = tape.add_rowvec(tape.matmul(x, bound.at(base + "wk")), bound.at(base + "bk"));
        Var v = tape.add_rowvec(tape.matmul(x, bound.at(base + "wv")), bound.at(base + "bv"));
        Var s = tape.attn_scores(q, k, batch.batch, batch.len, cfg.heads);
        Var probs = tape.masked_softmax_rows(s, keymask);
        probs = tape.dropout(probs, cfg.dropout, rng, training);
        Var mixed = tape.attn_mix(probs, v, batch.batch, batch.len, cfg.heads);
        Var attn =
            tape.add_rowvec(tape.matmul(mixed, bound.at(base + "wo")), bound.at(base + "bo"));
        attn = tape.dropout(attn, cfg.dropout, rng, training);
        x = tape.layer_norm(tape.add(x, attn), bound.at(base + "ln1_g"),
                            bound.at(base + "ln1_b"));
        Var f1 = tape.relu(
            tape.add_rowvec(tape.matmul(x, bound.at(base + "ffn_w1")), bound.at(base + "ffn_b1")));
        Var f2 =
            tape.add_rowvec(tape.matmul(f1, bound.at(base + "ffn_w2")), bound.at(base + "ffn_b2"));
        f2 = tape.dropout(f2, cfg.dropout, rng, training);
        x = tape.layer_norm(tape.add(x, f2), bound.at(base + "ln2_g"), bound.at(base + "ln2_b"));
    }
    return x;
}

}  // namespace

Var decoder_forward(Tape& tape, const QueryBatch& batch, Var vbar, Var rbar,
                    const ParamMap& params, const DecoderConfig& cfg, std::size_t dim,
                    bool training, std::mt19937_64& rng, std::map<std::string, Var>* bound_out) {
    std::map<std::string, Var> bound;
    for (const auto& [name, tensor] : params) {
        if (name.rfind("dec.", 0) != 0) continue;
        bound[name] = tape.leaf(tensor, true);
        if (bound_out) (*bound_out)[name] = bound[name];
    }

    Var xe = tape.scale_rows(tape.gather_rows(vbar, batch.ent_idx), batch.ent_mask);
    Var xr = tape.scale_rows(tape.gather_rows(rbar, batch.rel_idx), batch.rel_mask);
    Var x = tape.add(xe, xr);

    const bool transformer = cfg.kind == DecoderKind::PooledTransformer ||
                             cfg.kind == DecoderKind::MaskedTransformer;
    Var pooled;
    if (transformer) {
        x = tape.add(x, tape.gather_rows(bound.at("dec.pos"), batch.pos_idx));
        x = transformer_stack(tape, batch, x, cfg, bound, training, rng);
        if (cfg.kind == DecoderKind::PooledTransformer) {
            pooled = tape.masked_mean_rows(x, batch.real, batch.batch, batch.len);
        } else {
            std::vector<std::int64_t> mask_pos(batch.batch);
            for (std::size_t b = 0; b < batch.batch; ++b)
                mask_pos[b] = static_cast<std::int64_t>(b * batch.len + 2);
            pooled = tape.gather_rows(x, std::move(mask_pos));
        }
    } else {
        // Conv decoders stack the (pad-zeroed) token embeddings row-wise.
        std::vector<double> realf(batch.real.begin(), batch.real.end());
        x = tape.scale_rows(x, std::move(realf));
        Var img = tape.reshape(x, batch.batch, batch.len * dim);
        ConvDims dims = cfg.kind == DecoderKind::ConvE
                            ? conve_dims(cfg, batch.batch, batch.len, dim)
                            : convkb_dims(cfg, batch.batch, batch.len, dim);
        Var conv = tape.conv2d(img, bound.at("dec.conv_k"), bound.at("dec.conv_b"), dims);
        pooled = tape.relu(conv);
    }

    Var out = tape.add_rowvec(tape.matmul(pooled, bound.at("dec.fc_w")), bound.at("dec.fc_b"));
    return tape.matmul_nt(out, vbar);
}

}  // namespace stare
