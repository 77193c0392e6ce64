#include "stare/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace stare {

std::size_t Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw ShapeError("tape: bad variable handle");
    return static_cast<std::size_t>(v.id);
}

Var Tape::push(Tensor value, bool requires_grad, BackFn back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int64_t>(nodes_.size() - 1)};
}

Tensor& Tape::acc(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.rows, n.value.cols);
    return n.grad;
}

Tensor Tape::grad_of(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.empty()) return Tensor(n.value.rows, n.value.cols);
    return n.grad;
}

Var Tape::leaf(const Tensor& value, bool requires_grad) {
    return push(value, requires_grad, nullptr);
}

void Tape::backward(Var loss) {
    std::size_t root = check(loss);
    const Tensor& lv = nodes_[root].value;
    if (lv.rows != 1 || lv.cols != 1) throw ShapeError("backward: loss must be 1x1");
    acc(root).data[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty() || !n.back) continue;
        n.back(*this, n.grad);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out = stare::matmul(A, B);
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ia].value;
        const Tensor& B = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);  // dA = G B^T
            for (std::size_t i = 0; i < A.rows; ++i)
                for (std::size_t k = 0; k < A.cols; ++k) {
                    double s = 0.0;
                    const double* gr = g.row(i);
                    const double* br = B.row(k);
                    for (std::size_t j = 0; j < B.cols; ++j) s += gr[j] * br[j];
                    ga.at(i, k) += s;
                }
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.acc(ib);  // dB = A^T G
            for (std::size_t i = 0; i < A.rows; ++i) {
                const double* ar = A.row(i);
                const double* gr = g.row(i);
                for (std::size_t k = 0; k < A.cols; ++k) {
                    double av = ar[k];
                    double* gbr = gb.row(k);
                    for (std::size_t j = 0; j < g.cols; ++j) gbr[j] += av * gr[j];
                }
            }
        }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols != B.cols) throw ShapeError("matmul_nt: inner dimensions differ");
    Tensor out(A.rows, B.rows);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* ar = A.row(i);
        for (std::size_t j = 0; j < B.rows; ++j) {
            const double* br = B.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols; ++k) s += ar[k] * br[k];
            out.at(i, j) = s;
        }
    }
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ia].value;
        const Tensor& B = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);  // dA = G B
            for (std::size_t i = 0; i < A.rows; ++i) {
                const double* gr = g.row(i);
                double* gar = ga.row(i);
                for (std::size_t j = 0; j < B.rows; ++j) {
                    double gv = gr[j];
                    const double* br = B.row(j);
                    for (std::size_t k = 0; k < A.cols; ++k) gar[k] += gv * br[k];
                }
            }
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.acc(ib);  // dB = G^T A
            for (std::size_t i = 0; i < A.rows; ++i) {
                const double* gr = g.row(i);
                const double* ar = A.row(i);
                for (std::size_t j = 0; j < B.rows; ++j) {
                    double gv = gr[j];
                    double* gbr = gb.row(j);
                    for (std::size_t k = 0; k < A.cols; ++k) gbr[k] += gv * ar[k];
                }
            }
        }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Tensor& g) {
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.acc(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("sub: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Tensor& g) {
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.acc(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("mul: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ia].value;
        const Tensor& B = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& gb = t.acc(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    std::size_t ia = check(a);
    return push(std::move(out), needs(a), [ia, c](Tape& t, const Tensor& g) {
        if (!t.nodes_[ia].requires_grad) return;
        Tensor& ga = t.acc(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += c * g.data[i];
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& A = val(a);
    const Tensor& V = val(v);
    if (V.rows != 1 || V.cols != A.cols) throw ShapeError("add_rowvec: bias must be 1 x cols");
    Tensor out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) += V.data[j];
    std::size_t ia = check(a), iv = check(v);
    return push(std::move(out), needs(a) || needs(v), [ia, iv](Tape& t, const Tensor& g) {
        if (t.nodes_[ia].requires_grad) {
            Tensor& ga = t.acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[iv].requires_grad) {
            Tensor& gv = t.acc(iv);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) gv.data[j] += g.at(i, j);
        }
    });
}

Var Tape::tanh_act(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::tanh(v);
    std::size_t ia = check(a), self = nodes_.size();
    return push(std::move(out), needs(a), [ia, self](Tape& t, const Tensor& g) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& y = t.nodes_[self].value;
        Tensor& ga = t.acc(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    });
}

Var Tape::relu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    std::size_t ia = check(a);
    return push(std::move(out), needs(a), [ia](Tape& t, const Tensor& g) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& x = t.nodes_[ia].value;
        Tensor& ga = t.acc(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    });
}

Var Tape::gather_rows(Var a, std::vector<std::int64_t> idx) {
    const Tensor& A = val(a);
    Tensor out(idx.size(), A.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto r = idx[i];
        if (r < 0 || static_cast<std::size_t>(r) >= A.rows)
            throw ShapeError("gather_rows: index out of range");
        std::copy(A.row(static_cast<std::size_t>(r)), A.row(static_cast<std::size_t>(r)) + A.cols,
                  out.row(i));
    }
    std::size_t ia = check(a);
    return push(std::move(out), needs(a),
                [ia, idx = std::move(idx)](Tape& t, const Tensor& g) {
                    if (!t.nodes_[ia].requires_grad) return;
                    Tensor& ga = t.acc(ia);
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                        double* dst = ga.row(static_cast<std::size_t>(idx[i]));
                        const double* src = g.row(i);
                        for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
                    }
                });
}

Var Tape::scatter_add_rows(Var a, std::vector<std::int64_t> idx, std::size_t out_rows) {
    const Tensor& A = val(a);
    if (idx.size() != A.rows) throw ShapeError("scatter_add_rows: index length mismatch");
    Tensor out(out_rows, A.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto r = idx[i];
        if (r < 0 || static_cast<std::size_t>(r) >= out_rows)
            throw ShapeError("scatter_add_rows: index out of range");
        double* dst = out.row(static_cast<std::size_t>(r));
        const double* src = A.row(i);
        for (std::size_t j = 0; j < A.cols; ++j) dst[j] += src[j];
    }
    std::size_t ia = check(a);
    return push(std::move(out), needs(a),
                [ia, idx = std::move(idx)](Tape& t, const Tensor& g) {
                    if (!t.nodes_[ia].requires_grad) return;
                    Tensor& ga = t.acc(ia);
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                        const double* src = g.row(static_cast<std::size_t>(idx[i]));
                        double* dst = ga.row(i);
                        for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
                    }
                });
}

Var Tape::group_matmul(Var a, const std::vector<Var>& weights, std::vector<std::int32_t> group) {
    const Tensor& A = val(a);
    if (group.size() != A.rows) throw ShapeError("group_matmul: group length mismatch");
    std::vector<std::size_t> wid;
    wid.reserve(weights.size());
    bool req = needs(a);
    for (Var w : weights) {
        const Tensor& W = val(w);
        if (W.rows != A.cols) throw ShapeError("group_matmul: weight rows mismatch");
        if (W.cols != val(weights[0]).cols) throw ShapeError("group_matmul: weight cols differ");
        wid.push_back(check(w));
        req = req || needs(w);
    }
    std::size_t out_cols = val(weights[0]).cols;
    Tensor out(A.rows, out_cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        auto gsel = group[i];
        if (gsel < 0 || static_cast<std::size_t>(gsel) >= weights.size())
            throw ShapeError("group_matmul: group id out of range");
        const Tensor& W = val(weights[static_cast<std::size_t>(gsel)]);
        const double* ar = A.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < A.cols; ++k) {
            double av = ar[k];
            const double* wr = W.row(k);
            for (std::size_t j = 0; j < out_cols; ++j) orow[j] += av * wr[j];
        }
    }
    std::size_t ia = check(a);
    return push(std::move(out), req,
                [ia, wid, group = std::move(group)](Tape& t, const Tensor& g) {
                    const Tensor& A = t.nodes_[ia].value;
                    for (std::size_t i = 0; i < A.rows; ++i) {
                        std::size_t w = static_cast<std::size_t>(group[i]);
                        const Tensor& W = t.nodes_[wid[w]].value;
                        const double* gr = g.row(i);
                        if (t.nodes_[ia].requires_grad) {
                            double* gar = t.acc(ia).row(i);
                            for (std::size_t k = 0; k < A.cols; ++k) {
                                const double* wr = W.row(k);
                                double s = 0.0;
                                for (std::size_t j = 0; j < g.cols; ++j) s += gr[j] * wr[j];
                                gar[k] += s;
                            }
                        }
                        if (t.nodes_[wid[w]].requires_grad) {
                            Tensor& gw = t.acc(wid[w]);
                            const double* ar = A.row(i);
                            for (std::size_t k = 0; k < A.cols; ++k) {
                                double av = ar[k];
                                double* gwr = gw.row(k);
                                for (std::size_t j = 0; j < g.cols; ++j) gwr[j] += av * gr[j];
                            }
                        }
                    }
                });
}

namespace {

void phi_row_forward(const double* e, const double* r, double* out, std::size_t d,
                     PhiKind kind) {
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
}

void phi_row_backward(const double* e, const double* r, const double* g, double* ge, double* gr,
                      std::size_t d, PhiKind kind) {
    switch (kind) {
        case PhiKind::Mult:
            for (std::size_t i = 0; i < d; ++i) {
                ge[i] += g[i] * r[i];
                gr[i] += g[i] * e[i];
            }
            break;
        case PhiKind::Ccorr:
            for (std::size_t k = 0; k < d; ++k) {
                double gv = g[k];
                for (std::size_t i = 0; i < d; ++i) {
                    ge[i] += gv * r[(i + k) % d];
                    gr[(i + k) % d] += gv * e[i];
                }
            }
            break;
        case PhiKind::Rotate: {
            const std::size_t m = d / 2;
            for (std::size_t j = 0; j < m; ++j) {
                double a = e[j], b = e[m + j];
                double c = r[j], s = r[m + j];
                double gre = g[j], gim = g[m + j];
                ge[j] += gre * c + gim * s;
                ge[m + j] += -gre * s + gim * c;
                gr[j] += gre * a + gim * b;
                gr[m + j] += -gre * b + gim * a;
            }
            break;
        }
    }
}

}  // namespace

Var Tape::phi_rows(Var ent, Var rel, PhiKind kind) {
    const Tensor& E = val(ent);
    const Tensor& R = val(rel);
    if (E.rows != R.rows) throw ShapeError("phi_rows: row count mismatch");
    std::size_t blocks = 1;
    if (R.cols == 2 * E.cols)
        blocks = 2;
    else if (R.cols != E.cols)
        throw ShapeError("phi_rows: column mismatch");
    const std::size_t d = E.cols;
    if (kind == PhiKind::Rotate && d % 2 != 0)
        throw ShapeError("phi_rows: rotate requires even dimension");
    Tensor out(E.rows, R.cols);
    for (std::size_t i = 0; i < E.rows; ++i)
        for (std::size_t blk = 0; blk < blocks; ++blk)
            phi_row_forward(E.row(i), R.row(i) + blk * d, out.row(i) + blk * d, d, kind);
    std::size_t ie = check(ent), ir = check(rel);
    return push(std::move(out), needs(ent) || needs(rel),
                [ie, ir, kind, d, blocks](Tape& t, const Tensor& g) {
                    const Tensor& E = t.nodes_[ie].value;
                    const Tensor& R = t.nodes_[ir].value;
                    bool we = t.nodes_[ie].requires_grad;
                    bool wr = t.nodes_[ir].requires_grad;
                    Tensor scratch_e(1, d), scratch_r(1, d);
                    for (std::size_t i = 0; i < E.rows; ++i) {
                        for (std::size_t blk = 0; blk < blocks; ++blk) {
                            scratch_e.fill(0.0);
                            scratch_r.fill(0.0);
                            phi_row_backward(E.row(i), R.row(i) + blk * d, g.row(i) + blk * d,
                                             scratch_e.data.data(), scratch_r.data.data(), d,
                                             kind);
                            if (we) {
                                double* dst = t.acc(ie).row(i);
                                for (std::size_t j = 0; j < d; ++j) dst[j] += scratch_e.data[j];
                            }
                            if (wr) {
                                double* dst = t.acc(ir).row(i) + blk * d;
                                for (std::size_t j = 0; j < d; ++j) dst[j] += scratch_r.data[j];
                            }
                        }
                    }
                });
}

Var Tape::where_rows(std::vector<std::uint8_t> pick_a, Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("where_rows: shape mismatch");
    if (pick_a.size() != A.rows) throw ShapeError("where_rows: mask length mismatch");
    Tensor out(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* src = pick_a[i] ? A.row(i) : B.row(i);
        std::copy(src, src + A.cols, out.row(i));
    }
    std::size_t ia = check(a), ib = check(b);
    return push(std::move(out), needs(a) || needs(b),
                [ia, ib, pick = std::move(pick_a)](Tape& t, const Tensor& g) {
                    for (std::size_t i = 0; i < g.rows; ++i) {
                        std::size_t target = pick[i] ? ia : ib;
                        if (!t.nodes_[target].requires_grad) continue;
                        double* dst = t.acc(target).row(i);
                        const double* src = g.row(i);
                        for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
                    }
                });
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rows != B.rows) throw ShapeError("concat_cols: row mismatch");
    Tensor out(A.rows, A.cols + B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        std::copy(A.row(i), A.row(i) + A.cols, out.row(i));
        std::copy(B.row(i), B.row(i) + B.cols, out.row(i) + A.cols);
    }
    std::size_t ia = check(a), ib = check(b);
    std::size_t ca = A.cols;
    return push(std::move(out), needs(a) || needs(b),
                [ia, ib, ca](Tape& t, const Tensor& g) {
                    if (t.nodes_[ia].requires_grad) {
                        Tensor& ga = t.acc(ia);
                        for (std::size_t i = 0; i < g.rows; ++i)
                            for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
                    }
                    if (t.nodes_[ib].requires_grad) {
                        Tensor& gb = t.acc(ib);
                        for (std::size_t i = 0; i < g.rows; ++i)
                            for (std::size_t j = ca; j < g.cols; ++j)
                                gb.at(i, j - ca) += g.at(i, j);
                    }
                });
}

Var Tape::scale_rows(Var a, std::vector<double> factors) {
    const Tensor& A = val(a);
    if (factors.size() != A.rows) throw ShapeError("scale_rows: factor length mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) *= factors[i];
    std::size_t ia = check(a);
    return push(std::move(out), needs(a),
                [ia, f = std::move(factors)](Tape& t, const Tensor& g) {
                    if (!t.nodes_[ia].requires_grad) return;
                    Tensor& ga = t.acc(ia);
                    for (std::size_t i = 0; i < g.rows; ++i)
                        for (std::size_t j = 0; j < g.cols; ++j) ga.at(i, j) += f[i] * g.at(i, j);
                });
}

Var Tape::reshape(Var a, std::size_t rows, std::size_t cols) {
    const Tensor& A = val(a);
    if (rows * cols != A.size()) throw ShapeError("reshape: element count mismatch");
    Tensor out = A;
    out.rows = rows;
    out.cols = cols;
    std::size_t ia = check(a);
    return push(std::move(out), needs(a), [ia](Tape& t, const Tensor& g) {
        if (!t.nodes_[ia].requires_grad) return;
        Tensor& ga = t.acc(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    });
}

Var Tape::masked_softmax_rows(Var scores, Tensor keep) {
    const Tensor& S = val(scores);
    if (!S.same_shape(keep)) throw ShapeError("masked_softmax_rows: mask shape mismatch");
    Tensor out(S.rows, S.cols);
    for (std::size_t i = 0; i < S.rows; ++i) {
        double mx = -1e300;
        bool any = false;
        for (std::size_t j = 0; j < S.cols; ++j)
            if (keep.at(i, j) != 0.0) {
                mx = std::max(mx, S.at(i, j));
                any = true;
            }
        if (!any) throw ShapeError("masked_softmax_rows: fully masked row");
        double z = 0.0;
        for (std::size_t j = 0; j < S.cols; ++j)
            if (keep.at(i, j) != 0.0) {
                out.at(i, j) = std::exp(S.at(i, j) - mx);
                z += out.at(i, j);
            }
        for (std::size_t j = 0; j < S.cols; ++j) out.at(i, j) /= z;
    }
    std::size_t is = check(scores), self = nodes_.size();
    return push(std::move(out), needs(scores),
                [is, self, keep = std::move(keep)](Tape& t, const Tensor& g) {
                    if (!t.nodes_[is].requires_grad) return;
                    const Tensor& P = t.nodes_[self].value;
                    Tensor& gs = t.acc(is);
                    for (std::size_t i = 0; i < P.rows; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < P.cols; ++j) dot += g.at(i, j) * P.at(i, j);
                        for (std::size_t j = 0; j < P.cols; ++j)
                            if (keep.at(i, j) != 0.0)
                                gs.at(i, j) += P.at(i, j) * (g.at(i, j) - dot);
                    }
                });
}

Var Tape::attn_scores(Var q, Var k, std::size_t batch, std::size_t len, std::size_t heads) {
    const Tensor& Q = val(q);
    const Tensor& K = val(k);
    if (Q.rows != batch * len || !Q.same_shape(K))
        throw ShapeError("attn_scores: bad input shapes");
    if (Q.cols % heads != 0) throw ShapeError("attn_scores: width not divisible by heads");
    const std::size_t dh = Q.cols / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out(batch * heads * len, len);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < len; ++i) {
                const double* qr = Q.row(b * len + i) + h * dh;
                double* orow = out.row((b * heads + h) * len + i);
                for (std::size_t j = 0; j < len; ++j) {
                    const double* kr = K.row(b * len + j) + h * dh;
                    double s = 0.0;
                    for (std::size_t t = 0; t < dh; ++t) s += qr[t] * kr[t];
                    orow[j] = s * inv;
                }
            }
    std::size_t iq = check(q), ik = check(k);
    return push(std::move(out), needs(q) || needs(k),
                [iq, ik, batch, len, heads, dh, inv](Tape& t, const Tensor& g) {
                    const Tensor& Q = t.nodes_[iq].value;
                    const Tensor& K = t.nodes_[ik].value;
                    bool wq = t.nodes_[iq].requires_grad;
                    bool wk = t.nodes_[ik].requires_grad;
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t h = 0; h < heads; ++h)
                            for (std::size_t i = 0; i < len; ++i) {
                                const double* gr = g.row((b * heads + h) * len + i);
                                for (std::size_t j = 0; j < len; ++j) {
                                    double gv = gr[j] * inv;
                                    if (gv == 0.0) continue;
                                    const double* qr = Q.row(b * len + i) + h * dh;
                                    const double* kr = K.row(b * len + j) + h * dh;
                                    if (wq) {
                                        double* dst = t.acc(iq).row(b * len + i) + h * dh;
                                        for (std::size_t u = 0; u < dh; ++u) dst[u] += gv * kr[u];
                                    }
                                    if (wk) {
                                        double* dst = t.acc(ik).row(b * len + j) + h * dh;
                                        for (std::size_t u = 0; u < dh; ++u) dst[u] += gv * qr[u];
                                    }
                                }
                            }
                });
}

Var Tape::attn_mix(Var probs, Var v, std::size_t batch, std::size_t len, std::size_t heads) {
    const Tensor& P = val(probs);
    const Tensor& V = val(v);
    if (P.rows != batch * heads * len || P.cols != len)
        throw ShapeError("attn_mix: bad probability shape");
    if (V.rows != batch * len || V.cols % heads != 0)
        throw ShapeError("attn_mix: bad value shape");
    const std::size_t dh = V.cols / heads;
    Tensor out(batch * len, V.cols);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < len; ++i) {
                const double* pr = P.row((b * heads + h) * len + i);
                double* orow = out.row(b * len + i) + h * dh;
                for (std::size_t j = 0; j < len; ++j) {
                    double pv = pr[j];
                    if (pv == 0.0) continue;
                    const double* vr = V.row(b * len + j) + h * dh;
                    for (std::size_t t = 0; t < dh; ++t) orow[t] += pv * vr[t];
                }
            }
    std::size_t ip = check(probs), iv = check(v);
    return push(std::move(out), needs(probs) || needs(v),
                [ip, iv, batch, len, heads, dh](Tape& t, const Tensor& g) {
                    const Tensor& P = t.nodes_[ip].value;
                    const Tensor& V = t.nodes_[iv].value;
                    bool wp = t.nodes_[ip].requires_grad;
                    bool wv = t.nodes_[iv].requires_grad;
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t h = 0; h < heads; ++h)
                            for (std::size_t i = 0; i < len; ++i) {
                                const double* gr = g.row(b * len + i) + h * dh;
                                for (std::size_t j = 0; j < len; ++j) {
                                    const double* vr = V.row(b * len + j) + h * dh;
                                    if (wp) {
                                        double s = 0.0;
                                        for (std::size_t u = 0; u < dh; ++u) s += gr[u] * vr[u];
                                        t.acc(ip).at((b * heads + h) * len + i, j) += s;
                                    }
                                    if (wv) {
                                        double pv = P.at((b * heads + h) * len + i, j);
                                        if (pv == 0.0) continue;
                                        double* dst = t.acc(iv).row(b * len + j) + h * dh;
                                        for (std::size_t u = 0; u < dh; ++u) dst[u] += pv * gr[u];
                                    }
                                }
                            }
                });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& X = val(x);
    const Tensor& G = val(gain);
    const Tensor& B = val(bias);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw ShapeError("layer_norm: gain/bias must be 1 x cols");
    const std::size_t d = X.cols;
    Tensor out(X.rows, d);
    Tensor xhat(X.rows, d);
    std::vector<double> istd(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double* xr = X.row(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        istd[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            double xh = (xr[j] - mu) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = G.data[j] * xh + B.data[j];
        }
    }
    std::size_t ix = check(x), ig = check(gain), ib = check(bias);
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [ix, ig, ib, xhat = std::move(xhat), istd = std::move(istd)](Tape& t,
                                                                             const Tensor& g) {
                    const Tensor& G = t.nodes_[ig].value;
                    const std::size_t d = g.cols;
                    if (t.nodes_[ig].requires_grad) {
                        Tensor& gg = t.acc(ig);
                        for (std::size_t i = 0; i < g.rows; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                                gg.data[j] += g.at(i, j) * xhat.at(i, j);
                    }
                    if (t.nodes_[ib].requires_grad) {
                        Tensor& gb = t.acc(ib);
                        for (std::size_t i = 0; i < g.rows; ++i)
                            for (std::size_t j = 0; j < d; ++j) gb.data[j] += g.at(i, j);
                    }
                    if (t.nodes_[ix].requires_grad) {
                        Tensor& gx = t.acc(ix);
                        for (std::size_t i = 0; i < g.rows; ++i) {
                            double m1 = 0.0, m2 = 0.0;
                            for (std::size_t j = 0; j < d; ++j) {
                                double dxh = g.at(i, j) * G.data[j];
                                m1 += dxh;
                                m2 += dxh * xhat.at(i, j);
                            }
                            m1 /= static_cast<double>(d);
                            m2 /= static_cast<double>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                                double dxh = g.at(i, j) * G.data[j];
                                gx.at(i, j) += istd[i] * (dxh - m1 - xhat.at(i, j) * m2);
                            }
                        }
                    }
                });
}

Var Tape::masked_mean_rows(Var x, std::vector<std::uint8_t> keep, std::size_t batch,
                           std::size_t len) {
    const Tensor& X = val(x);
    if (X.rows != batch * len || keep.size() != batch * len)
        throw ShapeError("masked_mean_rows: shape mismatch");
    Tensor out(batch, X.cols);
    std::vector<double> inv_count(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t c = 0;
        for (std::size_t p = 0; p < len; ++p)
            if (keep[b * len + p]) ++c;
        if (c == 0) throw ShapeError("masked_mean_rows: empty batch row");
        inv_count[b] = 1.0 / static_cast<double>(c);
        for (std::size_t p = 0; p < len; ++p) {
            if (!keep[b * len + p]) continue;
            const double* xr = X.row(b * len + p);
            double* orow = out.row(b);
            for (std::size_t j = 0; j < X.cols; ++j) orow[j] += xr[j];
        }
        for (std::size_t j = 0; j < X.cols; ++j) out.at(b, j) *= inv_count[b];
    }
    std::size_t ix = check(x);
    return push(std::move(out), needs(x),
                [ix, keep = std::move(keep), inv_count = std::move(inv_count), batch,
                 len](Tape& t, const Tensor& g) {
                    if (!t.nodes_[ix].requires_grad) return;
                    Tensor& gx = t.acc(ix);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t p = 0; p < len; ++p) {
                            if (!keep[b * len + p]) continue;
                            double* dst = gx.row(b * len + p);
                            const double* src = g.row(b);
                            for (std::size_t j = 0; j < g.cols; ++j)
                                dst[j] += src[j] * inv_count[b];
                        }
                });
}

Var Tape::dropout(Var x, double p, std::mt19937_64& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw ShapeError("dropout: rate must be < 1");
    const Tensor& X = val(x);
    std::bernoulli_distribution keep_dist(1.0 - p);
    std::vector<std::uint8_t> mask(X.size());
    const double scl = 1.0 / (1.0 - p);
    Tensor out = X;
    for (std::size_t i = 0; i < X.size(); ++i) {
        mask[i] = keep_dist(rng) ? 1 : 0;
        out.data[i] = mask[i] ? out.data[i] * scl : 0.0;
    }
    std::size_t ix = check(x);
    return push(std::move(out), needs(x),
                [ix, mask = std::move(mask), scl](Tape& t, const Tensor& g) {
                    if (!t.nodes_[ix].requires_grad) return;
                    Tensor& gx = t.acc(ix);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (mask[i]) gx.data[i] += g.data[i] * scl;
                });
}

Var Tape::conv2d(Var x, Var kernel, Var bias, ConvDims dims) {
    const Tensor& X = val(x);
    const Tensor& K = val(kernel);
    const Tensor& B = val(bias);
    if (X.rows != dims.batch || X.cols != dims.in_h * dims.in_w)
        throw ShapeError("conv2d: bad input shape");
    if (dims.k_h > dims.in_h || dims.k_w > dims.in_w)
        throw ShapeError("conv2d: kernel larger than image");
    if (K.rows != dims.filters || K.cols != dims.k_h * dims.k_w)
        throw ShapeError("conv2d: bad kernel shape");
    if (B.rows != 1 || B.cols != dims.filters) throw ShapeError("conv2d: bad bias shape");
    const std::size_t oh = dims.out_h(), ow = dims.out_w();
    Tensor out(dims.batch, dims.filters * oh * ow);
    for (std::size_t b = 0; b < dims.batch; ++b) {
        const double* img = X.row(b);
        double* orow = out.row(b);
        for (std::size_t f = 0; f < dims.filters; ++f) {
            const double* ker = K.row(f);
            for (std::size_t oi = 0; oi < oh; ++oi)
                for (std::size_t oj = 0; oj < ow; ++oj) {
                    double s = B.data[f];
                    for (std::size_t ki = 0; ki < dims.k_h; ++ki)
                        for (std::size_t kj = 0; kj < dims.k_w; ++kj)
                            s += img[(oi + ki) * dims.in_w + (oj + kj)] *
                                 ker[ki * dims.k_w + kj];
                    orow[f * oh * ow + oi * ow + oj] = s;
                }
        }
    }
    std::size_t ix = check(x), ik = check(kernel), ib = check(bias);
    return push(std::move(out), needs(x) || needs(kernel) || needs(bias),
                [ix, ik, ib, dims](Tape& t, const Tensor& g) {
                    const Tensor& X = t.nodes_[ix].value;
                    const Tensor& K = t.nodes_[ik].value;
                    const std::size_t oh = dims.out_h(), ow = dims.out_w();
                    bool wx = t.nodes_[ix].requires_grad;
                    bool wk = t.nodes_[ik].requires_grad;
                    bool wb = t.nodes_[ib].requires_grad;
                    for (std::size_t b = 0; b < dims.batch; ++b) {
                        const double* img = X.row(b);
                        const double* grow = g.row(b);
                        for (std::size_t f = 0; f < dims.filters; ++f) {
                            const double* ker = K.row(f);
                            for (std::size_t oi = 0; oi < oh; ++oi)
                                for (std::size_t oj = 0; oj < ow; ++oj) {
                                    double gv = grow[f * oh * ow + oi * ow + oj];
                                    if (gv == 0.0) continue;
                                    if (wb) t.acc(ib).data[f] += gv;
                                    for (std::size_t ki = 0; ki < dims.k_h; ++ki)
                                        for (std::size_t kj = 0; kj < dims.k_w; ++kj) {
                                            std::size_t px = (oi + ki) * dims.in_w + (oj + kj);
                                            if (wx)
                                                t.acc(ix).row(b)[px] +=
                                                    gv * ker[ki * dims.k_w + kj];
                                            if (wk)
                                                t.acc(ik).row(f)[ki * dims.k_w + kj] +=
                                                    gv * img[px];
                                        }
                                }
                        }
                    }
                });
}

Var Tape::bce_with_logits(Var scores, Tensor labels, std::vector<std::uint8_t> col_keep) {
    const Tensor& S = val(scores);
    if (!S.same_shape(labels)) throw ShapeError("bce_with_logits: label shape mismatch");
    if (col_keep.size() != S.cols) throw ShapeError("bce_with_logits: mask length mismatch");
    if (!S.all_finite()) throw Error("bce_with_logits: non-finite score input");
    std::size_t kept = 0;
    for (auto k : col_keep) kept += k ? 1 : 0;
    if (kept == 0) throw ShapeError("bce_with_logits: no columns kept");
    const double n = static_cast<double>(kept * S.rows);
    double loss = 0.0;
    for (std::size_t i = 0; i < S.rows; ++i)
        for (std::size_t j = 0; j < S.cols; ++j) {
            if (!col_keep[j]) continue;
            double x = S.at(i, j), y = labels.at(i, j);
            loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        }
    Tensor out(1, 1);
    out.data[0] = loss / n;
    std::size_t is = check(scores);
    return push(std::move(out), needs(scores),
                [is, labels = std::move(labels), keep = std::move(col_keep), n](
                    Tape& t, const Tensor& g) {
                    if (!t.nodes_[is].requires_grad) return;
                    const Tensor& S = t.nodes_[is].value;
                    Tensor& gs = t.acc(is);
                    double gv = g.data[0] / n;
                    for (std::size_t i = 0; i < S.rows; ++i)
                        for (std::size_t j = 0; j < S.cols; ++j) {
                            if (!keep[j]) continue;
                            double x = S.at(i, j);
                            double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                  : std::exp(x) / (1.0 + std::exp(x));
                            gs.at(i, j) += gv * (sig - labels.at(i, j));
                        }
                });
}

Var Tape::sum_all(Var a) {
    const Tensor& A = val(a);
    Tensor out(1, 1);
    for (double v : A.data) out.data[0] += v;
    std::size_t ia = check(a);
    return push(std::move(out), needs(a), [ia](Tape& t, const Tensor& g) {
        if (!t.nodes_[ia].requires_grad) return;
        Tensor& ga = t.acc(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[0];
    });
}

}  // namespace stare
