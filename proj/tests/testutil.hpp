#pragma once

// Independent reference implementations and generators used by the test
// suites. Everything here is deliberately written from the defining formulas
// with its own loops, so agreement with the production code is meaningful.

#include <algorithm>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "stare/compose.hpp"
#include "stare/encoder.hpp"
#include "stare/evaluation.hpp"
#include "stare/graph.hpp"
#include "stare/tensor.hpp"

namespace testutil {

// --- composition oracles ---------------------------------------------------

inline std::vector<double> ccorr_oracle(const std::vector<double>& e,
                                        const std::vector<double>& r) {
    const std::size_t d = e.size();
    std::vector<double> out(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t i = 0; i < d; ++i) out[k] += e[i] * r[(i + k) % d];
    return out;
}

inline std::vector<double> rotate_oracle(const std::vector<double>& e,
                                         const std::vector<double>& r) {
    const std::size_t m = e.size() / 2;
    std::vector<double> out(e.size(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        std::complex<double> a(e[j], e[m + j]);
        std::complex<double> b(r[j], r[m + j]);
        std::complex<double> c = a * b;
        out[j] = c.real();
        out[m + j] = c.imag();
    }
    return out;
}

inline std::vector<double> mult_oracle(const std::vector<double>& e,
                                       const std::vector<double>& r) {
    std::vector<double> out(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i] * r[i];
    return out;
}

inline std::vector<double> reference_phi(const std::vector<double>& e,
                                         const std::vector<double>& r, stare::PhiKind kind) {
    switch (kind) {
        case stare::PhiKind::Mult: return mult_oracle(e, r);
        case stare::PhiKind::Ccorr: return ccorr_oracle(e, r);
        case stare::PhiKind::Rotate: return rotate_oracle(e, r);
    }
    return {};
}

// --- finite differences -----------------------------------------------------

// Central finite differences over a raw parameter block. Relative error
// matches the production convention: |fd - a| / max(|fd|, |a|, 1e-6).
inline double fd_max_rel_err(const std::function<double()>& loss, double* data, std::size_t n,
                             const double* analytic, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double saved = data[i];
        data[i] = saved + h;
        double up = loss();
        data[i] = saved - h;
        double down = loss();
        data[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double rel =
            std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, rel);
    }
    return worst;
}

// Adaptive variant for paths with rectifier kinks: an entry whose central
// difference crosses a kink within h of the evaluation point looks wrong at
// step h but clean at h/100; a genuinely wrong analytic gradient stays wrong
// at every step.
inline double fd_max_rel_err_adaptive(const std::function<double()>& loss, double* data,
                                      std::size_t n, const double* analytic, double h = 1e-5,
                                      double tol = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double entry_best = 1e300;
        for (double step : {h, h / 100.0}) {
            double saved = data[i];
            data[i] = saved + step;
            double up = loss();
            data[i] = saved - step;
            double down = loss();
            data[i] = saved;
            double fd = (up - down) / (2.0 * step);
            double rel = std::abs(fd - analytic[i]) /
                         std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
            entry_best = std::min(entry_best, rel);
            if (entry_best <= tol) break;
        }
        worst = std::max(worst, entry_best);
    }
    return worst;
}

// --- random data -------------------------------------------------------------

inline std::vector<double> random_vector(std::size_t d, std::mt19937_64& rng,
                                         double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> out(d);
    for (double& v : out) v = dist(rng);
    return out;
}

inline stare::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                   double scale = 1.0) {
    stare::Tensor t(rows, cols);
    std::normal_distribution<double> dist(0.0, scale);
    for (double& v : t.data) v = dist(rng);
    return t;
}

// Random hyper-relational statements over dense toy vocabularies. Entities
// are e0..e{n-1}, relations r0..r{m-1}.
inline std::vector<stare::RawStatement> random_raw_statements(std::size_t count,
                                                              std::size_t n_entities,
                                                              std::size_t n_relations,
                                                              double qualifier_prob,
                                                              std::size_t max_qualifiers,
                                                              std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> ent(0, n_entities - 1);
    std::uniform_int_distribution<std::size_t> rel(0, n_relations - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<stare::RawStatement> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        stare::RawStatement s;
        s.subject = "e" + std::to_string(ent(rng));
        s.relation = "r" + std::to_string(rel(rng));
        s.object = "e" + std::to_string(ent(rng));
        if (unit(rng) < qualifier_prob && max_qualifiers > 0) {
            std::uniform_int_distribution<std::size_t> nq(1, max_qualifiers);
            std::size_t q = nq(rng);
            for (std::size_t j = 0; j < q; ++j)
                s.qualifiers.emplace_back("r" + std::to_string(rel(rng)),
                                          "e" + std::to_string(ent(rng)));
        }
        out.push_back(std::move(s));
    }
    return out;
}

// --- dense message-passing references ----------------------------------------

// Relational graph convolution layer with composition functions and
// direction-specific weights, written per node from the defining sum. Matches
// the production summation order: edges scanned in row order per node.
inline stare::Tensor compgcn_reference_nodes(const stare::HyperGraph& g,
                                             const stare::Tensor& V, const stare::Tensor& R,
                                             const stare::Tensor& w_out,
                                             const stare::Tensor& w_in,
                                             const stare::Tensor& w_self, stare::PhiKind phi,
                                             stare::Activation act) {
    const std::size_t d = V.cols;
    stare::Tensor out(V.rows, w_out.cols);
    for (std::size_t v = 0; v < V.rows; ++v) {
        std::vector<double> acc(w_out.cols, 0.0);
        for (std::size_t e = 0; e < g.num_facts; ++e) {
            if (static_cast<std::size_t>(g.obj[e]) != v) continue;
            std::vector<double> hu(V.row(static_cast<std::size_t>(g.sub[e])),
                                   V.row(static_cast<std::size_t>(g.sub[e])) + d);
            std::vector<double> hr(R.row(static_cast<std::size_t>(g.rel[e])),
                                   R.row(static_cast<std::size_t>(g.rel[e])) + d);
            std::vector<double> composed = reference_phi(hu, hr, phi);
            const stare::Tensor* w = nullptr;
            switch (g.direction_of(e)) {
                case stare::EdgeDirection::Outgoing: w = &w_out; break;
                case stare::EdgeDirection::Incoming: w = &w_in; break;
                case stare::EdgeDirection::SelfLoop: w = &w_self; break;
            }
            // One complete message per edge, then messages summed in edge-row
            // order (the committed reduction order).
            std::vector<double> msg(w->cols, 0.0);
            for (std::size_t k = 0; k < d; ++k) {
                double av = composed[k];
                const double* wr = w->row(k);
                for (std::size_t j = 0; j < w->cols; ++j) msg[j] += av * wr[j];
            }
            for (std::size_t j = 0; j < w->cols; ++j) acc[j] += msg[j];
        }
        for (std::size_t j = 0; j < w_out.cols; ++j) {
            double value = acc[j];
            if (act == stare::Activation::Tanh) value = std::tanh(value);
            if (act == stare::Activation::Relu) value = value > 0.0 ? value : 0.0;
            out.at(v, j) = value;
        }
    }
    return out;
}

// Full qualifier-aware layer as a dense per-node computation from the update
// equations, independent of the tape path.
inline stare::Tensor stare_reference_nodes(const stare::HyperGraph& g, const stare::Tensor& V,
                                           const stare::Tensor& R, const stare::Tensor& w_out,
                                           const stare::Tensor& w_in,
                                           const stare::Tensor& w_self,
                                           const stare::Tensor& w_q,
                                           const stare::EncoderConfig& cfg) {
    const std::size_t d = V.cols;
    // Qualifier vector per fact.
    std::vector<std::vector<double>> hq(g.num_facts);
    for (std::size_t e = 0; e < g.num_facts; ++e) {
        std::vector<double> sum(d, 0.0);
        std::size_t count = 0;
        for (std::size_t q = 0; q < g.qual_fact.size(); ++q) {
            if (static_cast<std::size_t>(g.qual_fact[q]) != e) continue;
            std::vector<double> qv(V.row(static_cast<std::size_t>(g.qual_val[q])),
                                   V.row(static_cast<std::size_t>(g.qual_val[q])) + d);
            std::vector<double> qr(R.row(static_cast<std::size_t>(g.qual_rel[q])),
                                   R.row(static_cast<std::size_t>(g.qual_rel[q])) + d);
            std::vector<double> comp = reference_phi(qv, qr, cfg.phi_q);
            for (std::size_t j = 0; j < d; ++j) sum[j] += comp[j];
            ++count;
        }
        if (count == 0) continue;
        if (cfg.qual_aggregation == stare::QualAggregation::Mean)
            for (double& x : sum) x /= static_cast<double>(count);
        std::vector<double> projected(d, 0.0);
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t j = 0; j < d; ++j) projected[j] += sum[k] * w_q.at(k, j);
        hq[e] = std::move(projected);
    }

    stare::Tensor out(V.rows, w_out.cols);
    for (std::size_t v = 0; v < V.rows; ++v) {
        std::vector<double> acc(w_out.cols, 0.0);
        for (std::size_t e = 0; e < g.num_facts; ++e) {
            if (static_cast<std::size_t>(g.obj[e]) != v) continue;
            std::vector<double> hu(V.row(static_cast<std::size_t>(g.sub[e])),
                                   V.row(static_cast<std::size_t>(g.sub[e])) + d);
            std::vector<double> hr(R.row(static_cast<std::size_t>(g.rel[e])),
                                   R.row(static_cast<std::size_t>(g.rel[e])) + d);
            std::vector<double> rel_in;
            if (cfg.gamma_kind == stare::GammaKind::Concat) {
                rel_in = hr;
                std::vector<double> tail = hq[e].empty() ? std::vector<double>(d, 0.0) : hq[e];
                rel_in.insert(rel_in.end(), tail.begin(), tail.end());
            } else if (hq[e].empty()) {
                rel_in = hr;
            } else if (cfg.gamma_kind == stare::GammaKind::WeightedSum) {
                rel_in.resize(d);
                for (std::size_t j = 0; j < d; ++j)
                    rel_in[j] = cfg.alpha * hr[j] + (1.0 - cfg.alpha) * hq[e][j];
            } else {  // Mul
                rel_in.resize(d);
                for (std::size_t j = 0; j < d; ++j) rel_in[j] = hr[j] * hq[e][j];
            }
            std::vector<double> composed;
            if (rel_in.size() == 2 * d) {
                auto lo = reference_phi(
                    hu, std::vector<double>(rel_in.begin(), rel_in.begin() + d), cfg.phi_r);
                auto hi = reference_phi(
                    hu, std::vector<double>(rel_in.begin() + d, rel_in.end()), cfg.phi_r);
                composed = lo;
                composed.insert(composed.end(), hi.begin(), hi.end());
            } else {
                composed = reference_phi(hu, rel_in, cfg.phi_r);
            }
            const stare::Tensor* w = nullptr;
            switch (g.direction_of(e)) {
                case stare::EdgeDirection::Outgoing: w = &w_out; break;
                case stare::EdgeDirection::Incoming: w = &w_in; break;
                case stare::EdgeDirection::SelfLoop: w = &w_self; break;
            }
            std::vector<double> msg(w->cols, 0.0);
            for (std::size_t k = 0; k < composed.size(); ++k) {
                double av = composed[k];
                const double* wr = w->row(k);
                for (std::size_t j = 0; j < w->cols; ++j) msg[j] += av * wr[j];
            }
            for (std::size_t j = 0; j < w->cols; ++j) acc[j] += msg[j];
        }
        for (std::size_t j = 0; j < w_out.cols; ++j) {
            double value = acc[j];
            if (cfg.activation == stare::Activation::Tanh) value = std::tanh(value);
            if (cfg.activation == stare::Activation::Relu) value = value > 0.0 ? value : 0.0;
            out.at(v, j) = value;
        }
    }
    return out;
}

// --- ranking oracle -----------------------------------------------------------

// Sort-based filtered rank with the optimistic/pessimistic averaging rule.
inline double rank_oracle(const std::vector<double>& scores, stare::EntityId gold,
                          const std::vector<stare::EntityId>& filter_set,
                          const std::vector<std::uint8_t>& candidate_mask) {
    std::vector<double> competitors;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (!candidate_mask[j]) continue;
        auto id = static_cast<stare::EntityId>(j);
        if (id == gold) continue;
        if (std::find(filter_set.begin(), filter_set.end(), id) != filter_set.end()) continue;
        competitors.push_back(scores[j]);
    }
    std::sort(competitors.begin(), competitors.end(), std::greater<double>());
    double gs = scores[static_cast<std::size_t>(gold)];
    auto first_not_greater = std::lower_bound(competitors.begin(), competitors.end(), gs,
                                              [](double a, double b) { return a > b; });
    auto first_less = std::upper_bound(competitors.begin(), competitors.end(), gs,
                                       [](double a, double b) { return a > b; });
    double optimistic = 1.0 + static_cast<double>(first_not_greater - competitors.begin());
    double ties = static_cast<double>(first_less - first_not_greater);
    return (optimistic + (optimistic + ties)) / 2.0;
}

// Naive 2-D valid convolution for the decoder oracle.
inline std::vector<double> conv2d_oracle(const std::vector<double>& img, std::size_t H,
                                         std::size_t W, const std::vector<double>& kernel,
                                         std::size_t KH, std::size_t KW, double bias) {
    std::size_t OH = H - KH + 1, OW = W - KW + 1;
    std::vector<double> out(OH * OW, 0.0);
    for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
            double s = bias;
            for (std::size_t a = 0; a < KH; ++a)
                for (std::size_t b = 0; b < KW; ++b)
                    s += img[(i + a) * W + (j + b)] * kernel[a * KW + b];
            out[i * OW + j] = s;
        }
    return out;
}

}  // namespace testutil
