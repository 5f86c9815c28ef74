#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pxf {

namespace {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got shape " + shape_str(t.shape));
    }
}

}  // namespace

template <typename T>
void Tape<T>::check(Var v, const char* op) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) {
        throw std::invalid_argument(std::string(op) + ": invalid tape variable");
    }
}

template <typename T>
typename Tape<T>::Var Tape<T>::push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> back) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Tape<T>::accum(int id, const Tensor<T>& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    T* dst = n.grad.data.data();
    const T* src = g.data.data();
    const int64_t cnt = g.numel();
    for (int64_t i = 0; i < cnt; ++i) dst[i] += src[i];
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> value) {
    return push(std::move(value), false, nullptr);
}

template <typename T>
typename Tape<T>::Var Tape<T>::param(const Tensor<T>* value) {
    if (!value) throw std::invalid_argument("param: null tensor");
    Node n;
    n.external = value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul(Var a, Var b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    if (bv.shape[0] != k) {
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape));
    }
    Tensor<T> out({m, n});
    kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    bool rg = wants(a.id) || wants(b.id);
    int ai = a.id, bi = b.id;
    return push(std::move(out), rg, [ai, bi, m, k, n](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (t.wants(ai)) {
            Tensor<T> ga({m, k});
            kernels::matmul_nt(g.data.data(), t.val(bi).data.data(), ga.data.data(), m, n, k);
            t.accum(ai, ga);
        }
        if (t.wants(bi)) {
            Tensor<T> gb({k, n});
            kernels::matmul_tn(t.val(ai).data.data(), g.data.data(), gb.data.data(), k, m, n);
            t.accum(bi, gb);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul_nt(Var a, Var b) {
    check(a, "matmul_nt");
    check(b, "matmul_nt");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require_rank2(av, "matmul_nt");
    require_rank2(bv, "matmul_nt");
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[0];
    if (bv.shape[1] != k) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch " + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape));
    }
    Tensor<T> out({m, n});
    kernels::matmul_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    bool rg = wants(a.id) || wants(b.id);
    int ai = a.id, bi = b.id;
    return push(std::move(out), rg, [ai, bi, m, k, n](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (t.wants(ai)) {
            Tensor<T> ga({m, k});
            kernels::matmul(g.data.data(), t.val(bi).data.data(), ga.data.data(), m, n, k);
            t.accum(ai, ga);
        }
        if (t.wants(bi)) {
            Tensor<T> gb({n, k});
            kernels::matmul_tn(g.data.data(), t.val(ai).data.data(), gb.data.data(), n, m, k);
            t.accum(bi, gb);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
    check(a, "add");
    check(b, "add");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require_same_shape(av.shape, bv.shape, "add");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
    bool rg = wants(a.id) || wants(b.id);
    int ai = a.id, bi = b.id;
    return push(std::move(out), rg, [ai, bi](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        t.accum(ai, g);
        t.accum(bi, g);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_rowvec(Var a, Var r) {
    check(a, "add_rowvec");
    check(r, "add_rowvec");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& rv = val(r.id);
    require_rank2(av, "add_rowvec");
    const int n = av.shape[0], d = av.shape[1];
    if (rv.numel() != d) {
        throw std::invalid_argument("add_rowvec: row length mismatch " + shape_str(av.shape) + " vs " +
                                    shape_str(rv.shape));
    }
    Tensor<T> out(av.shape);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) out.data[static_cast<size_t>(i) * d + j] = av.at(i, j) + rv.data[static_cast<size_t>(j)];
    }
    bool rg = wants(a.id) || wants(r.id);
    int ai = a.id, ri = r.id;
    return push(std::move(out), rg, [ai, ri, n, d](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        t.accum(ai, g);
        if (t.wants(ri)) {
            Tensor<T> gr(t.val(ri).shape);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) gr.data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(i) * d + j];
            }
            t.accum(ri, gr);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::mul(Var a, Var b) {
    check(a, "multiply");
    check(b, "multiply");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require_same_shape(av.shape, bv.shape, "multiply");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
    bool rg = wants(a.id) || wants(b.id);
    int ai = a.id, bi = b.id;
    return push(std::move(out), rg, [ai, bi](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (t.wants(ai)) {
            Tensor<T> ga(g.shape);
            const Tensor<T>& bv2 = t.val(bi);
            for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] = g.data[i] * bv2.data[i];
            t.accum(ai, ga);
        }
        if (t.wants(bi)) {
            Tensor<T> gb(g.shape);
            const Tensor<T>& av2 = t.val(ai);
            for (int64_t i = 0; i < g.numel(); ++i) gb.data[i] = g.data[i] * av2.data[i];
            t.accum(bi, gb);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::scale(Var a, T s) {
    check(a, "scale");
    const Tensor<T>& av = val(a.id);
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * s;
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai, s](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (!t.wants(ai)) return;
        Tensor<T> ga(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] = g.data[i] * s;
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::affine_const(Var a, T s, Tensor<T> c) {
    check(a, "affine_const");
    const Tensor<T>& av = val(a.id);
    require_same_shape(av.shape, c.shape, "affine_const");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * s + c.data[i];
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai, s](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (!t.wants(ai)) return;
        Tensor<T> ga(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] = g.data[i] * s;
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::gelu(Var a) {
    check(a, "gelu");
    const Tensor<T>& av = val(a.id);
    Tensor<T> out(av.shape);
    kernels::gelu(av.data.data(), out.data.data(), av.numel());
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (!t.wants(ai)) return;
        const Tensor<T>& x = t.val(ai);
        Tensor<T> ga(g.shape);
        constexpr T inv_sqrt2 = T(0.7071067811865475244);
        constexpr T inv_sqrt2pi = T(0.3989422804014326779);
        for (int64_t i = 0; i < g.numel(); ++i) {
            const T xi = x.data[i];
            const T cdf = T(0.5) * (T(1) + std::erf(xi * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xi * xi);
            ga.data[i] = g.data[i] * (cdf + xi * pdf);
        }
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::layernorm(Var x, Var gamma, Var beta, T eps) {
    check(x, "layernorm");
    check(gamma, "layernorm");
    check(beta, "layernorm");
    const Tensor<T>& xv = val(x.id);
    require_rank2(xv, "layernorm");
    const int n = xv.shape[0], d = xv.shape[1];
    const Tensor<T>& gv = val(gamma.id);
    const Tensor<T>& bv = val(beta.id);
    if (gv.numel() != d || bv.numel() != d) {
        throw std::invalid_argument("layernorm: gamma/beta length mismatch with " + shape_str(xv.shape));
    }
    Tensor<T> out(xv.shape);
    Tensor<T> xhat(xv.shape);
    Tensor<T> inv_std({n});
    for (int i = 0; i < n; ++i) {
        const T* xr = xv.data.data() + static_cast<size_t>(i) * d;
        T mu = T(0);
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= T(d);
        T var = T(0);
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std.data[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < d; ++j) {
            const T xh = (xr[j] - mu) * inv;
            xhat.data[static_cast<size_t>(i) * d + j] = xh;
            out.data[static_cast<size_t>(i) * d + j] = gv.data[static_cast<size_t>(j)] * xh + bv.data[static_cast<size_t>(j)];
        }
    }
    bool rg = wants(x.id) || wants(gamma.id) || wants(beta.id);
    int xi = x.id, gi = gamma.id, bi = beta.id;
    return push(std::move(out), rg,
                [xi, gi, bi, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        const Tensor<T>& gv2 = t.val(gi);
        if (t.wants(gi) || t.wants(bi)) {
            Tensor<T> dgamma(t.val(gi).shape);
            Tensor<T> dbeta(t.val(bi).shape);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    const T gy = g.data[static_cast<size_t>(i) * d + j];
                    dgamma.data[static_cast<size_t>(j)] += gy * xhat.data[static_cast<size_t>(i) * d + j];
                    dbeta.data[static_cast<size_t>(j)] += gy;
                }
            }
            t.accum(gi, dgamma);
            t.accum(bi, dbeta);
        }
        if (t.wants(xi)) {
            Tensor<T> dx({n, d});
            for (int i = 0; i < n; ++i) {
                T m1 = T(0), m2 = T(0);
                for (int j = 0; j < d; ++j) {
                    const T dxh = g.data[static_cast<size_t>(i) * d + j] * gv2.data[static_cast<size_t>(j)];
                    m1 += dxh;
                    m2 += dxh * xhat.data[static_cast<size_t>(i) * d + j];
                }
                m1 /= T(d);
                m2 /= T(d);
                const T inv = inv_std.data[static_cast<size_t>(i)];
                for (int j = 0; j < d; ++j) {
                    const T dxh = g.data[static_cast<size_t>(i) * d + j] * gv2.data[static_cast<size_t>(j)];
                    dx.data[static_cast<size_t>(i) * d + j] =
                        inv * (dxh - m1 - xhat.data[static_cast<size_t>(i) * d + j] * m2);
                }
            }
            t.accum(xi, dx);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::masked_softmax(Var scores, Tensor<uint8_t> allow) {
    check(scores, "softmax");
    const Tensor<T>& sv = val(scores.id);
    require_rank2(sv, "softmax");
    const int n = sv.shape[0], d = sv.shape[1];
    if (allow.numel() > 0 && allow.shape != sv.shape) {
        throw std::invalid_argument("softmax: mask shape mismatch " + shape_str(sv.shape) + " vs " +
                                    shape_str(allow.shape));
    }
    Tensor<T> out(sv.shape);
    const uint8_t* ap = allow.numel() > 0 ? allow.data.data() : nullptr;
    kernels::softmax_rows(sv.data.data(), ap, out.data.data(), n, d);
    Tensor<T> probs = out;  // kept for backward
    int si = scores.id;
    return push(std::move(out), wants(scores.id), [si, n, d, probs = std::move(probs)](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (!t.wants(si)) return;
        Tensor<T> ds({n, d});
        for (int i = 0; i < n; ++i) {
            T dot = T(0);
            for (int j = 0; j < d; ++j) {
                dot += g.data[static_cast<size_t>(i) * d + j] * probs.data[static_cast<size_t>(i) * d + j];
            }
            for (int j = 0; j < d; ++j) {
                const size_t idx = static_cast<size_t>(i) * d + j;
                ds.data[idx] = probs.data[idx] * (g.data[idx] - dot);
            }
        }
        t.accum(si, ds);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::embedding(Var table, std::vector<int> ids) {
    check(table, "embedding");
    const Tensor<T>& tv = val(table.id);
    require_rank2(tv, "embedding");
    const int v = tv.shape[0], d = tv.shape[1];
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                                    " out of range [0," + std::to_string(v) + ")");
        }
    }
    const int n = static_cast<int>(ids.size());
    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i) {
        const T* src = tv.data.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d;
        std::copy(src, src + d, out.data.data() + static_cast<size_t>(i) * d);
    }
    int ti = table.id;
    return push(std::move(out), wants(table.id), [ti, d, ids = std::move(ids)](Tape& t) {
        if (!t.wants(ti)) return;
        const Tensor<T>& g = t.gbuf(t.top_);
        Tensor<T> gt(t.val(ti).shape);
        for (size_t i = 0; i < ids.size(); ++i) {
            T* dst = gt.data.data() + static_cast<size_t>(ids[i]) * d;
            const T* src = g.data.data() + i * static_cast<size_t>(d);
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
        t.accum(ti, gt);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::replace_rows(Var x, std::vector<int> rows, Var row) {
    check(x, "replace_rows");
    check(row, "replace_rows");
    const Tensor<T>& xv = val(x.id);
    require_rank2(xv, "replace_rows");
    const int n = xv.shape[0], d = xv.shape[1];
    const Tensor<T>& rv = val(row.id);
    if (rv.numel() != d) {
        throw std::invalid_argument("replace_rows: row length mismatch " + shape_str(xv.shape) + " vs " +
                                    shape_str(rv.shape));
    }
    for (int r : rows) {
        if (r < 0 || r >= n) {
            throw std::out_of_range("replace_rows: index " + std::to_string(r) + " out of range [0," +
                                    std::to_string(n) + ")");
        }
    }
    Tensor<T> out = xv;
    for (int r : rows) {
        std::copy(rv.data.data(), rv.data.data() + d, out.data.data() + static_cast<size_t>(r) * d);
    }
    bool rg = wants(x.id) || wants(row.id);
    int xi = x.id, ri = row.id;
    return push(std::move(out), rg, [xi, ri, d, rows = std::move(rows)](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        if (t.wants(xi)) {
            Tensor<T> gx = g;
            for (int r : rows) {
                std::fill(gx.data.data() + static_cast<size_t>(r) * d, gx.data.data() + static_cast<size_t>(r + 1) * d,
                          T(0));
            }
            t.accum(xi, gx);
        }
        if (t.wants(ri)) {
            Tensor<T> gr(t.val(ri).shape);
            for (int r : rows) {
                const T* src = g.data.data() + static_cast<size_t>(r) * d;
                for (int j = 0; j < d; ++j) gr.data[static_cast<size_t>(j)] += src[j];
            }
            t.accum(ri, gr);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::slice_rows(Var a, int r0, int r1) {
    check(a, "slice_rows");
    const Tensor<T>& av = val(a.id);
    require_rank2(av, "slice_rows");
    const int n = av.shape[0], d = av.shape[1];
    if (r0 < 0 || r1 > n || r0 >= r1) {
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") for " + shape_str(av.shape));
    }
    Tensor<T> out({r1 - r0, d});
    std::copy(av.data.data() + static_cast<size_t>(r0) * d, av.data.data() + static_cast<size_t>(r1) * d,
              out.data.data());
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai, r0, d](Tape& t) {
        if (!t.wants(ai)) return;
        const Tensor<T>& g = t.gbuf(t.top_);
        Tensor<T> ga(t.val(ai).shape);
        std::copy(g.data.begin(), g.data.end(), ga.data.begin() + static_cast<size_t>(r0) * d);
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::slice_cols(Var a, int c0, int c1) {
    check(a, "slice_cols");
    const Tensor<T>& av = val(a.id);
    require_rank2(av, "slice_cols");
    const int n = av.shape[0], d = av.shape[1];
    if (c0 < 0 || c1 > d || c0 >= c1) {
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") for " + shape_str(av.shape));
    }
    const int w = c1 - c0;
    Tensor<T> out({n, w});
    for (int i = 0; i < n; ++i) {
        std::copy(av.data.data() + static_cast<size_t>(i) * d + c0, av.data.data() + static_cast<size_t>(i) * d + c1,
                  out.data.data() + static_cast<size_t>(i) * w);
    }
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai, c0, n, d, w](Tape& t) {
        if (!t.wants(ai)) return;
        const Tensor<T>& g = t.gbuf(t.top_);
        Tensor<T> ga({n, d});
        for (int i = 0; i < n; ++i) {
            std::copy(g.data.data() + static_cast<size_t>(i) * w, g.data.data() + static_cast<size_t>(i + 1) * w,
                      ga.data.data() + static_cast<size_t>(i) * d + c0);
        }
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    int d = -1, total = 0;
    bool rg = false;
    for (Var p : parts) {
        check(p, "concat_rows");
        const Tensor<T>& pv = val(p.id);
        require_rank2(pv, "concat_rows");
        if (d < 0) d = pv.shape[1];
        if (pv.shape[1] != d) {
            throw std::invalid_argument("concat_rows: column mismatch " + std::to_string(d) + " vs " +
                                        shape_str(pv.shape));
        }
        total += pv.shape[0];
        rg = rg || wants(p.id);
    }
    Tensor<T> out({total, d});
    int row = 0;
    std::vector<std::pair<int, int>> spans;  // (node id, start row)
    for (Var p : parts) {
        const Tensor<T>& pv = val(p.id);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + static_cast<size_t>(row) * d);
        spans.emplace_back(p.id, row);
        row += pv.shape[0];
    }
    return push(std::move(out), rg, [d, spans = std::move(spans)](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        for (auto [id, start] : spans) {
            if (!t.wants(id)) continue;
            const Tensor<T>& pv = t.val(id);
            Tensor<T> gp(pv.shape);
            std::copy(g.data.begin() + static_cast<size_t>(start) * d,
                      g.data.begin() + static_cast<size_t>(start + pv.shape[0]) * d, gp.data.begin());
            t.accum(id, gp);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    int n = -1, total = 0;
    bool rg = false;
    for (Var p : parts) {
        check(p, "concat_cols");
        const Tensor<T>& pv = val(p.id);
        require_rank2(pv, "concat_cols");
        if (n < 0) n = pv.shape[0];
        if (pv.shape[0] != n) {
            throw std::invalid_argument("concat_cols: row mismatch " + std::to_string(n) + " vs " +
                                        shape_str(pv.shape));
        }
        total += pv.shape[1];
        rg = rg || wants(p.id);
    }
    Tensor<T> out({n, total});
    int col = 0;
    std::vector<std::pair<int, int>> spans;
    for (Var p : parts) {
        const Tensor<T>& pv = val(p.id);
        const int w = pv.shape[1];
        for (int i = 0; i < n; ++i) {
            std::copy(pv.data.data() + static_cast<size_t>(i) * w, pv.data.data() + static_cast<size_t>(i + 1) * w,
                      out.data.data() + static_cast<size_t>(i) * total + col);
        }
        spans.emplace_back(p.id, col);
        col += w;
    }
    return push(std::move(out), rg, [n, total, spans = std::move(spans)](Tape& t) {
        const Tensor<T>& g = t.gbuf(t.top_);
        for (auto [id, start] : spans) {
            if (!t.wants(id)) continue;
            const Tensor<T>& pv = t.val(id);
            const int w = pv.shape[1];
            Tensor<T> gp(pv.shape);
            for (int i = 0; i < n; ++i) {
                std::copy(g.data.data() + static_cast<size_t>(i) * total + start,
                          g.data.data() + static_cast<size_t>(i) * total + start + w,
                          gp.data.data() + static_cast<size_t>(i) * w);
            }
            t.accum(id, gp);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::permute_elements(Var a, std::vector<int64_t> perm, std::vector<int> out_shape) {
    check(a, "permute_elements");
    const Tensor<T>& av = val(a.id);
    if (static_cast<int64_t>(perm.size()) != av.numel() || numel_of(out_shape) != av.numel()) {
        throw std::invalid_argument("permute_elements: size mismatch for " + shape_str(av.shape));
    }
    Tensor<T> out(out_shape);
    for (size_t i = 0; i < perm.size(); ++i) out.data[i] = av.data[static_cast<size_t>(perm[i])];
    int ai = a.id;
    return push(std::move(out), wants(a.id), [ai, perm = std::move(perm)](Tape& t) {
        if (!t.wants(ai)) return;
        const Tensor<T>& g = t.gbuf(t.top_);
        Tensor<T> ga(t.val(ai).shape);
        for (size_t i = 0; i < perm.size(); ++i) ga.data[static_cast<size_t>(perm[i])] = g.data[i];
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::sum(Var a) {
    check(a, "sum");
    const Tensor<T>& av = val(a.id);
    T s = T(0);
    for (int64_t i = 0; i < av.numel(); ++i) s += av.data[i];
    int ai = a.id;
    return push(Tensor<T>::scalar(s), wants(a.id), [ai](Tape& t) {
        if (!t.wants(ai)) return;
        const T g = t.gbuf(t.top_).data[0];
        Tensor<T> ga(t.val(ai).shape);
        for (auto& x : ga.data) x = g;
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::mean(Var a) {
    check(a, "mean");
    const Tensor<T>& av = val(a.id);
    T s = T(0);
    for (int64_t i = 0; i < av.numel(); ++i) s += av.data[i];
    const T inv = T(1) / T(av.numel());
    int ai = a.id;
    return push(Tensor<T>::scalar(s * inv), wants(a.id), [ai, inv](Tape& t) {
        if (!t.wants(ai)) return;
        const T g = t.gbuf(t.top_).data[0] * inv;
        Tensor<T> ga(t.val(ai).shape);
        for (auto& x : ga.data) x = g;
        t.accum(ai, ga);
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::mse(Var a, Var b) {
    check(a, "squared_error");
    check(b, "squared_error");
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require_same_shape(av.shape, bv.shape, "squared_error");
    T s = T(0);
    for (int64_t i = 0; i < av.numel(); ++i) {
        const T d = av.data[i] - bv.data[i];
        s += d * d;
    }
    const T inv = T(1) / T(av.numel());
    int ai = a.id, bi = b.id;
    return push(Tensor<T>::scalar(s * inv), wants(a.id) || wants(b.id), [ai, bi, inv](Tape& t) {
        const T g = t.gbuf(t.top_).data[0];
        const Tensor<T>& av2 = t.val(ai);
        const Tensor<T>& bv2 = t.val(bi);
        const T c = T(2) * inv * g;
        if (t.wants(ai)) {
            Tensor<T> ga(av2.shape);
            for (int64_t i = 0; i < av2.numel(); ++i) ga.data[i] = c * (av2.data[i] - bv2.data[i]);
            t.accum(ai, ga);
        }
        if (t.wants(bi)) {
            Tensor<T> gb(bv2.shape);
            for (int64_t i = 0; i < bv2.numel(); ++i) gb.data[i] = c * (bv2.data[i] - av2.data[i]);
            t.accum(bi, gb);
        }
    });
}

template <typename T>
typename Tape<T>::Var Tape<T>::mse_const(Var a, Tensor<T> b) {
    Var bi = input(std::move(b));
    return mse(a, bi);
}

template <typename T>
typename Tape<T>::Var Tape<T>::cross_entropy(Var logits, std::vector<int> targets) {
    check(logits, "cross_entropy");
    const Tensor<T>& lv = val(logits.id);
    require_rank2(lv, "cross_entropy");
    const int n = lv.shape[0], v = lv.shape[1];
    if (static_cast<int>(targets.size()) != n) {
        throw std::invalid_argument("cross_entropy: got " + std::to_string(targets.size()) + " targets for " +
                                    shape_str(lv.shape));
    }
    if (n == 0) throw std::invalid_argument("cross_entropy: empty target set");
    for (int tgt : targets) {
        if (tgt < 0 || tgt >= v) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(tgt) + " out of range [0," +
                                    std::to_string(v) + ")");
        }
    }
    // softmax probabilities are kept for the backward pass
    Tensor<T> probs({n, v});
    T loss = T(0);
    for (int i = 0; i < n; ++i) {
        const T* zr = lv.data.data() + static_cast<size_t>(i) * v;
        T mx = zr[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, zr[j]);
        T sum = T(0);
        for (int j = 0; j < v; ++j) {
            const T e = std::exp(zr[j] - mx);
            probs.data[static_cast<size_t>(i) * v + j] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < v; ++j) probs.data[static_cast<size_t>(i) * v + j] *= inv;
        const T lse = mx + std::log(sum);
        loss += lse - zr[static_cast<size_t>(targets[static_cast<size_t>(i)])];
    }
    loss /= T(n);
    int li = logits.id;
    return push(Tensor<T>::scalar(loss), wants(logits.id),
                [li, n, v, probs = std::move(probs), targets = std::move(targets)](Tape& t) {
        if (!t.wants(li)) return;
        const T g = t.gbuf(t.top_).data[0] / T(n);
        Tensor<T> gl({n, v});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < v; ++j) {
                const size_t idx = static_cast<size_t>(i) * v + j;
                T p = probs.data[idx];
                if (j == targets[static_cast<size_t>(i)]) p -= T(1);
                gl.data[idx] = g * p;
            }
        }
        t.accum(li, gl);
    });
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
    check(v, "value");
    return val(v.id);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
    check(v, "grad");
    if (!ran_backward_) throw std::logic_error("grad: backward() has not run");
    return nodes_[static_cast<size_t>(v.id)].grad;
}

template <typename T>
void Tape<T>::backward(Var scalar_loss) {
    check(scalar_loss, "backward");
    if (ran_backward_) throw std::logic_error("backward: already run on this tape");
    const Tensor<T>& lv = val(scalar_loss.id);
    if (lv.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(lv.shape));
    }
    ran_backward_ = true;
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Tensor<T>(n.external ? n.external->shape : n.owned.shape);
    }
    if (!nodes_[static_cast<size_t>(scalar_loss.id)].requires_grad) return;
    nodes_[static_cast<size_t>(scalar_loss.id)].grad.data[0] = T(1);
    for (int id = scalar_loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.requires_grad && n.back) {
            top_ = id;
            n.back(*this);
        }
    }
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// named tensors, forward_backward, finite differences
// ---------------------------------------------------------------------------

template <typename T>
void NamedTensors<T>::add(std::string name, Tensor<T> value) {
    if (index_of(name) >= 0) throw std::invalid_argument("NamedTensors: duplicate name '" + name + "'");
    names.push_back(std::move(name));
    values.push_back(std::move(value));
}

template <typename T>
int NamedTensors<T>::index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

template struct NamedTensors<float>;
template struct NamedTensors<double>;

template <typename T>
std::pair<T, NamedTensors<T>> forward_backward(const ScalarFn<T>& f, const NamedTensors<T>& params) {
    Tape<T> tape;
    std::vector<typename Tape<T>::Var> vars;
    vars.reserve(params.size());
    for (const auto& v : params.values) vars.push_back(tape.param(&v));
    auto out = f(tape, vars);
    const Tensor<T>& v = tape.value(out);
    if (v.numel() != 1) {
        throw std::invalid_argument("forward_backward: computation must be scalar, got " + shape_str(v.shape));
    }
    tape.backward(out);
    NamedTensors<T> grads;
    for (size_t i = 0; i < params.size(); ++i) grads.add(params.names[i], tape.grad(vars[i]));
    return {v.data[0], std::move(grads)};
}

template std::pair<float, NamedTensors<float>> forward_backward(const ScalarFn<float>&, const NamedTensors<float>&);
template std::pair<double, NamedTensors<double>> forward_backward(const ScalarFn<double>&,
                                                                  const NamedTensors<double>&);

namespace {

double eval_scalar(const ScalarFn<double>& f, const std::vector<const Tensor<double>*>& ptrs) {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    vars.reserve(ptrs.size());
    for (const auto* p : ptrs) vars.push_back(tape.param(p));
    auto out = f(tape, vars);
    const Tensor<double>& v = tape.value(out);
    if (v.numel() != 1) {
        throw std::invalid_argument("finite_diff: computation must be scalar, got " + shape_str(v.shape));
    }
    return v.data[0];
}

}  // namespace

NamedTensors<double> finite_diff(const ScalarFn<double>& f, const NamedTensors<double>& params, double eps) {
    if (eps <= 0) throw std::invalid_argument("finite_diff: eps must be positive");
    NamedTensors<double> grads;
    for (size_t i = 0; i < params.size(); ++i) grads.add(params.names[i], Tensor<double>(params.values[i].shape));

    // flatten (tensor, coordinate) pairs so coordinates can run in parallel
    struct Coord {
        int t;
        int64_t i;
    };
    std::vector<Coord> coords;
    for (size_t t = 0; t < params.size(); ++t) {
        for (int64_t i = 0; i < params.values[t].numel(); ++i) coords.push_back({static_cast<int>(t), i});
    }

    std::string error;
    bool failed = false;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) if (kernels::parallel_enabled())
#endif
    for (int64_t c = 0; c < static_cast<int64_t>(coords.size()); ++c) {
        if (failed) continue;
        const auto [t, i] = coords[static_cast<size_t>(c)];
        Tensor<double> bumped = params.values[static_cast<size_t>(t)];
        std::vector<const Tensor<double>*> ptrs;
        for (size_t k = 0; k < params.size(); ++k) {
            ptrs.push_back(static_cast<int>(k) == t ? &bumped : &params.values[k]);
        }
        const double orig = bumped.data[static_cast<size_t>(i)];
        bumped.data[static_cast<size_t>(i)] = orig + eps;
        const double fp = eval_scalar(f, ptrs);
        bumped.data[static_cast<size_t>(i)] = orig - eps;
        const double fm = eval_scalar(f, ptrs);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                failed = true;
                error = "finite_diff: non-finite evaluation at parameter '" +
                        params.names[static_cast<size_t>(t)] + "' index " + std::to_string(i);
            }
            continue;
        }
        grads.values[static_cast<size_t>(t)].data[static_cast<size_t>(i)] = (fp - fm) / (2.0 * eps);
    }
    if (failed) throw std::runtime_error(error);
    return grads;
}

GradReport check_gradients(const ScalarFn<double>& f, const NamedTensors<double>& params, double eps, double tol) {
    auto [value, ad] = forward_backward(f, params);
    (void)value;
    auto fd = finite_diff(f, params, eps);
    GradReport report;
    report.eps = eps;
    report.tol = tol;
    // Central differences carry ~machine_eps * |f| / eps of absolute noise,
    // so coordinates far below kGradFloor cannot be verified relatively; the
    // floor keeps that noise from registering as gradient error.
    constexpr double kGradFloor = 1e-4;
    for (size_t t = 0; t < params.size(); ++t) {
        for (int64_t i = 0; i < ad.values[t].numel(); ++i) {
            const double a = ad.values[t].data[static_cast<size_t>(i)];
            const double b = fd.values[t].data[static_cast<size_t>(i)];
            const double denom = std::max({std::fabs(a), std::fabs(b), kGradFloor});
            const double rel = std::fabs(a - b) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params.names[t];
                report.worst_index = i;
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace pxf
