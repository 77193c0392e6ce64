#include "stare/compose.hpp"

namespace stare {

PhiKind phi_kind_from_string(const std::string& s) {
    if (s == "mult") return PhiKind::Mult;
    if (s == "ccorr") return PhiKind::Ccorr;
    if (s == "rotate") return PhiKind::Rotate;
    throw ConfigError(s, "unknown composition function: " + s);
}

GammaKind gamma_kind_from_string(const std::string& s) {
    if (s == "weighted_sum") return GammaKind::WeightedSum;
    if (s == "concat") return GammaKind::Concat;
    if (s == "mul") return GammaKind::Mul;
    throw ConfigError(s, "unknown gamma function: " + s);
}

std::string to_string(PhiKind k) {
    switch (k) {
        case PhiKind::Mult: return "mult";
        case PhiKind::Ccorr: return "ccorr";
        case PhiKind::Rotate: return "rotate";
    }
    return "?";
}

std::string to_string(GammaKind k) {
    switch (k) {
        case GammaKind::WeightedSum: return "weighted_sum";
        case GammaKind::Concat: return "concat";
        case GammaKind::Mul: return "mul";
    }
    return "?";
}

static void check_phi_dims(const std::vector<double>& e, const std::vector<double>& r,
                           PhiKind kind) {
    if (e.size() != r.size()) throw ShapeError("phi: dimension mismatch");
    if (kind == PhiKind::Rotate && e.size() % 2 != 0)
        throw ShapeError("phi: rotate requires even dimension");
}

std::vector<double> phi(const std::vector<double>& e, const std::vector<double>& r,
                        PhiKind kind) {
    check_phi_dims(e, r, kind);
    const std::size_t d = e.size();
    std::vector<double> out(d, 0.0);
    switch (kind) {
        case PhiKind::Mult:
            for (std::size_t i = 0; i < d; ++i) out[i] = e[i] * r[i];
            break;
        case PhiKind::Ccorr:
            for (std::size_t k = 0; k < d; ++k) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i) acc += e[i] * r[(i + k) % d];
                out[k] = acc;
            }
            break;
        case PhiKind::Rotate: {
            const std::size_t m = d / 2;
            for (std::size_t j = 0; j < m; ++j) {
                double a = e[j], b = e[m + j];
                double c = r[j], s = r[m + j];
                out[j] = a * c - b * s;
                out[m + j] = a * s + b * c;
            }
            break;
        }
    }
    return out;
}

void phi_backward(const std::vector<double>& e, const std::vector<double>& r,
                  PhiKind kind, const std::vector<double>& upstream,
                  std::vector<double>& grad_e, std::vector<double>& grad_r) {
    check_phi_dims(e, r, kind);
    if (upstream.size() != e.size()) throw ShapeError("phi_backward: upstream dimension mismatch");
    const std::size_t d = e.size();
    grad_e.assign(d, 0.0);
    grad_r.assign(d, 0.0);
    switch (kind) {
        case PhiKind::Mult:
            for (std::size_t i = 0; i < d; ++i) {
                grad_e[i] = upstream[i] * r[i];
                grad_r[i] = upstream[i] * e[i];
            }
            break;
        case PhiKind::Ccorr:
            // out_k = sum_i e_i r_{(i+k) mod d}
            for (std::size_t k = 0; k < d; ++k) {
                double g = upstream[k];
                for (std::size_t i = 0; i < d; ++i) {
                    grad_e[i] += g * r[(i + k) % d];
                    grad_r[(i + k) % d] += g * e[i];
                }
            }
            break;
        case PhiKind::Rotate: {
            const std::size_t m = d / 2;
            for (std::size_t j = 0; j < m; ++j) {
                double a = e[j], b = e[m + j];
                double c = r[j], s = r[m + j];
                double gre = upstream[j], gim = upstream[m + j];
                grad_e[j] = gre * c + gim * s;
                grad_e[m + j] = -gre * s + gim * c;
                grad_r[j] = gre * a + gim * b;
                grad_r[m + j] = -gre * b + gim * a;
            }
            break;
        }
    }
}

static void check_gamma(const std::vector<double>& h_r, const std::vector<double>& h_q,
                        GammaKind kind, double alpha) {
    if (h_r.size() != h_q.size()) throw ShapeError("gamma: dimension mismatch");
    if (kind == GammaKind::WeightedSum && (alpha < 0.0 || alpha > 1.0))
        throw ShapeError("gamma: alpha outside [0,1]");
}

std::vector<double> gamma(const std::vector<double>& h_r, const std::vector<double>& h_q,
                          GammaKind kind, double alpha) {
    check_gamma(h_r, h_q, kind, alpha);
    const std::size_t d = h_r.size();
    switch (kind) {
        case GammaKind::WeightedSum: {
            std::vector<double> out(d);
            for (std::size_t i = 0; i < d; ++i) out[i] = alpha * h_r[i] + (1.0 - alpha) * h_q[i];
            return out;
        }
        case GammaKind::Concat: {
            std::vector<double> out(2 * d);
            for (std::size_t i = 0; i < d; ++i) out[i] = h_r[i];
            for (std::size_t i = 0; i < d; ++i) out[d + i] = h_q[i];
            return out;
        }
        case GammaKind::Mul: {
            std::vector<double> out(d);
            for (std::size_t i = 0; i < d; ++i) out[i] = h_r[i] * h_q[i];
            return out;
        }
    }
    throw ShapeError("gamma: bad kind");
}

void gamma_backward(const std::vector<double>& h_r, const std::vector<double>& h_q,
                    GammaKind kind, double alpha, const std::vector<double>& upstream,
                    std::vector<double>& grad_r, std::vector<double>& grad_q) {
    check_gamma(h_r, h_q, kind, alpha);
    const std::size_t d = h_r.size();
    const std::size_t want = kind == GammaKind::Concat ? 2 * d : d;
    if (upstream.size() != want) throw ShapeError("gamma_backward: upstream dimension mismatch");
    grad_r.assign(d, 0.0);
    grad_q.assign(d, 0.0);
    switch (kind) {
        case GammaKind::WeightedSum:
            for (std::size_t i = 0; i < d; ++i) {
                grad_r[i] = alpha * upstream[i];
                grad_q[i] = (1.0 - alpha) * upstream[i];
            }
            break;
        case GammaKind::Concat:
            for (std::size_t i = 0; i < d; ++i) {
                grad_r[i] = upstream[i];
                grad_q[i] = upstream[d + i];
            }
            break;
        case GammaKind::Mul:
            for (std::size_t i = 0; i < d; ++i) {
                grad_r[i] = upstream[i] * h_q[i];
                grad_q[i] = upstream[i] * h_r[i];
            }
            break;
    }
}

}  // namespace stare
