#include "calad/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "calad/errors.hpp"

namespace calad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

// C [m,n] += or = A [m,k] * B [k,n], all row-major contiguous.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
    MapConstMat A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    MapConstMat B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MapMat C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (accumulate) {
        C.noalias() += A * B;
    } else {
        C.noalias() = A * B;
    }
}

// C [m,n] += A^T with A [k,m] times B [k,n].
void gemm_at_b(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
               std::size_t n) {
    MapConstMat A(a, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    MapConstMat B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MapMat C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    C.noalias() += A.transpose() * B;
}

// C [m,k] += A [m,n] times B^T with B [k,n].
void gemm_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k) {
    MapConstMat A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    MapConstMat B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MapMat C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    C.noalias() += A * B.transpose();
}

std::vector<std::size_t> row_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

}  // namespace

const Tensor& Var::value() const {
    if (!tape_) throw UsageError("value() on default-constructed Var");
    return tape_->value(*this);
}

const Tensor& Tape::value(Var v) const {
    check_same_tape(v);
    return nodes_[v.idx_].value;
}

void Tape::check_same_tape(Var v) const {
    if (v.tape_ != this) throw UsageError("Var does not belong to this tape");
    if (v.idx_ >= nodes_.size()) throw UsageError("Var index out of range (tape cleared?)");
}

std::size_t Tape::push(Tensor value, bool requires_grad,
                       std::function<void(Tape&, std::size_t)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = requires_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Tensor& Tape::grad_of(std::size_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Var Tape::input(Tensor v) {
    return Var(this, push(std::move(v), false, nullptr));
}

Var Tape::leaf(Parameter& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return Var(this, it->second);
    std::size_t idx = push(p.value, true, nullptr);
    nodes_[idx].param = &p;
    leaves_.emplace(&p, idx);
    return Var(this, idx);
}

Var Tape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (!ta.same_shape(tb)) {
        throw DimensionError("add: shape mismatch " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ai].requires_grad) {
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[bi].requires_grad) {
            Tensor& gb = t.grad_of(bi);
            for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
        }
    });
    return Var(this, idx);
}

Var Tape::sub(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (!ta.same_shape(tb)) {
        throw DimensionError("sub: shape mismatch " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ai].requires_grad) {
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[bi].requires_grad) {
            Tensor& gb = t.grad_of(bi);
            for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
        }
    });
    return Var(this, idx);
}

Var Tape::mul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (!ta.same_shape(tb)) {
        throw DimensionError("mul: shape mismatch " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ai].value;
        const Tensor& vb = t.nodes_[bi].value;
        if (t.nodes_[ai].requires_grad) {
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
        }
        if (t.nodes_[bi].requires_grad) {
            Tensor& gb = t.grad_of(bi);
            for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
        }
    });
    return Var(this, idx);
}

Var Tape::scale(Var a, double s) {
    check_same_tape(a);
    Tensor out = nodes_[a.idx_].value;
    for (double& v : out.data) v *= s;
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai, s](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * s;
        });
    return Var(this, idx);
}

Var Tape::add_scalar(Var a, double s) {
    check_same_tape(a);
    Tensor out = nodes_[a.idx_].value;
    for (double& v : out.data) v += s;
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        });
    return Var(this, idx);
}

Var Tape::add_bcast(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (tb.ndim() > ta.ndim()) {
        throw DimensionError("add_bcast: rhs rank exceeds lhs rank");
    }
    std::size_t off = ta.ndim() - tb.ndim();
    for (std::size_t i = 0; i < tb.ndim(); ++i) {
        if (ta.shape[off + i] != tb.shape[i]) {
            throw DimensionError("add_bcast: " + shape_str(tb.shape) +
                                 " is not a trailing suffix of " + shape_str(ta.shape));
        }
    }
    const std::size_t nb = tb.numel();
    const std::size_t rep = ta.numel() / std::max<std::size_t>(nb, 1);
    Tensor out = ta;
    for (std::size_t r = 0; r < rep; ++r) {
        double* o = out.data.data() + r * nb;
        for (std::size_t j = 0; j < nb; ++j) o[j] += tb.data[j];
    }
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi, rep, nb](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ai].requires_grad) {
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[bi].requires_grad) {
            Tensor& gb = t.grad_of(bi);
            for (std::size_t r = 0; r < rep; ++r) {
                const double* gp = g.data.data() + r * nb;
                for (std::size_t j = 0; j < nb; ++j) gb.data[j] += gp[j];
            }
        }
    });
    return Var(this, idx);
}

Var Tape::matmul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (ta.ndim() < 1 || tb.ndim() != 2) {
        throw DimensionError("matmul: expected a[..., k] and b[k, n]");
    }
    const std::size_t k = ta.shape.back();
    if (k != tb.shape[0]) {
        throw DimensionError("matmul: inner dims " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    const std::size_t n = tb.shape[1];
    const std::size_t m = ta.numel() / k;
    Shape out_shape = ta.shape;
    out_shape.back() = n;
    Tensor out(out_shape);
    gemm(ta.data.data(), tb.data.data(), out.data.data(), m, k, n, false);
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ai].value;
        const Tensor& vb = t.nodes_[bi].value;
        if (t.nodes_[ai].requires_grad) {
            gemm_a_bt(g.data.data(), vb.data.data(), t.grad_of(ai).data.data(), m, n, k);
        }
        if (t.nodes_[bi].requires_grad) {
            gemm_at_b(va.data.data(), g.data.data(), t.grad_of(bi).data.data(), m, k, n);
        }
    });
    return Var(this, idx);
}

Var Tape::bmm(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& ta = nodes_[a.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (ta.ndim() != 3 || tb.ndim() != 3 || ta.shape[0] != tb.shape[0] ||
        ta.shape[2] != tb.shape[1]) {
        throw DimensionError("bmm: expected [B,m,k] x [B,k,n], got " + shape_str(ta.shape) +
                             " x " + shape_str(tb.shape));
    }
    const std::size_t B = ta.shape[0], m = ta.shape[1], k = ta.shape[2], n = tb.shape[2];
    Tensor out(Shape{B, m, n});
    for (std::size_t i = 0; i < B; ++i) {
        gemm(ta.data.data() + i * m * k, tb.data.data() + i * k * n, out.data.data() + i * m * n,
             m, k, n, false);
    }
    bool rg = nodes_[a.idx_].requires_grad || nodes_[b.idx_].requires_grad;
    std::size_t ai = a.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [ai, bi, B, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ai].value;
        const Tensor& vb = t.nodes_[bi].value;
        if (t.nodes_[ai].requires_grad) {
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < B; ++i) {
                gemm_a_bt(g.data.data() + i * m * n, vb.data.data() + i * k * n,
                          ga.data.data() + i * m * k, m, n, k);
            }
        }
        if (t.nodes_[bi].requires_grad) {
            Tensor& gb = t.grad_of(bi);
            for (std::size_t i = 0; i < B; ++i) {
                gemm_at_b(va.data.data() + i * m * k, g.data.data() + i * m * n,
                          gb.data.data() + i * k * n, m, k, n);
            }
        }
    });
    return Var(this, idx);
}

namespace {

Tensor permute_tensor(const Tensor& in, const std::vector<std::size_t>& perm) {
    const std::size_t nd = in.ndim();
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = in.shape[perm[i]];
    Tensor out(out_shape);
    auto in_strides = row_strides(in.shape);
    auto out_strides = row_strides(out_shape);
    std::vector<std::size_t> step(nd);  // stride in input per output axis
    for (std::size_t i = 0; i < nd; ++i) step[i] = in_strides[perm[i]];
    const std::size_t total = in.numel();
    std::vector<std::size_t> idx(nd, 0);
    std::size_t in_off = 0;
    for (std::size_t o = 0; o < total; ++o) {
        out.data[o] = in.data[in_off];
        for (std::size_t ax = nd; ax-- > 0;) {
            idx[ax] += 1;
            in_off += step[ax];
            if (idx[ax] < out_shape[ax]) break;
            in_off -= step[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

}  // namespace

Var Tape::permute(Var a, const std::vector<std::size_t>& perm) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    if (perm.size() != ta.ndim()) throw DimensionError("permute: rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) throw UsageError("permute: invalid permutation");
        seen[p] = true;
    }
    Tensor out = permute_tensor(ta, perm);
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai, inv](Tape& t, std::size_t self) {
            Tensor gi = permute_tensor(t.nodes_[self].grad, inv);
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < gi.data.size(); ++i) ga.data[i] += gi.data[i];
        });
    return Var(this, idx);
}

Var Tape::reshape(Var a, Shape s) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    if (shape_numel(s) != ta.numel()) {
        throw DimensionError("reshape: element count mismatch " + shape_str(ta.shape) + " -> " +
                             shape_str(s));
    }
    Tensor out(std::move(s), ta.data);
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        });
    return Var(this, idx);
}

Var Tape::relu(Var a) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    Tensor out = ta;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.nodes_[ai].value;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                if (x.data[i] > 0.0) ga.data[i] += g.data[i];
            }
        });
    return Var(this, idx);
}

Var Tape::softmax(Var a) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    if (ta.ndim() < 1) throw DimensionError("softmax: needs at least one axis");
    if (!ta.all_finite()) throw NumericError("softmax: non-finite input");
    const std::size_t K = ta.shape.back();
    const std::size_t rows = ta.numel() / K;
    Tensor out = ta;
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.data.data() + r * K;
        double mx = o[0];
        for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, o[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            o[j] = std::exp(o[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < K; ++j) o[j] /= sum;
    }
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai, K, rows](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& y = t.nodes_[self].value;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gp = g.data.data() + r * K;
                const double* yp = y.data.data() + r * K;
                double dot = 0.0;
                for (std::size_t j = 0; j < K; ++j) dot += gp[j] * yp[j];
                double* gap = ga.data.data() + r * K;
                for (std::size_t j = 0; j < K; ++j) gap[j] += yp[j] * (gp[j] - dot);
            }
        });
    return Var(this, idx);
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    check_same_tape(x);
    check_same_tape(gain);
    check_same_tape(bias);
    const Tensor& tx = nodes_[x.idx_].value;
    const Tensor& tg = nodes_[gain.idx_].value;
    const Tensor& tb = nodes_[bias.idx_].value;
    const std::size_t d = tx.shape.back();
    if (tg.numel() != d || tb.numel() != d) {
        throw DimensionError("layer_norm: gain/bias must have the trailing extent");
    }
    const std::size_t rows = tx.numel() / d;
    Tensor out(tx.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xp = tx.data.data() + r * d;
        double* op = out.data.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xp[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double c = xp[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            op[j] = tg.data[j] * ((xp[j] - mu) * inv) + tb.data[j];
        }
    }
    bool rg = nodes_[x.idx_].requires_grad || nodes_[gain.idx_].requires_grad ||
              nodes_[bias.idx_].requires_grad;
    std::size_t xi = x.idx_, gi = gain.idx_, bi = bias.idx_;
    std::size_t idx = push(std::move(out), rg, [xi, gi, bi, d, rows, eps](Tape& t,
                                                                          std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vx = t.nodes_[xi].value;
        const Tensor& vg = t.nodes_[gi].value;
        const bool need_x = t.nodes_[xi].requires_grad;
        const bool need_g = t.nodes_[gi].requires_grad;
        const bool need_b = t.nodes_[bi].requires_grad;
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xp = vx.data.data() + r * d;
            const double* gp = g.data.data() + r * d;
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += xp[j];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double c = xp[j] - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            double inv = 1.0 / std::sqrt(var + eps);
            for (std::size_t j = 0; j < d; ++j) xhat[j] = (xp[j] - mu) * inv;
            if (need_g) {
                Tensor& gg = t.grad_of(gi);
                for (std::size_t j = 0; j < d; ++j) gg.data[j] += gp[j] * xhat[j];
            }
            if (need_b) {
                Tensor& gb = t.grad_of(bi);
                for (std::size_t j = 0; j < d; ++j) gb.data[j] += gp[j];
            }
            if (need_x) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    dxhat[j] = gp[j] * vg.data[j];
                    m1 += dxhat[j];
                    m2 += dxhat[j] * xhat[j];
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                Tensor& gx = t.grad_of(xi);
                double* gxp = gx.data.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) {
                    gxp[j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
                }
            }
        }
    });
    return Var(this, idx);
}

namespace {

// Gathers the k*c_in patch matrix for one sample: M [T, k*c_in].
void im2col(const double* x, std::size_t T, std::size_t c_in, std::size_t k, double* m) {
    const std::size_t pad = (k - 1) / 2;
    for (std::size_t t = 0; t < T; ++t) {
        double* row = m + t * k * c_in;
        for (std::size_t dt = 0; dt < k; ++dt) {
            std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + dt) -
                                 static_cast<std::ptrdiff_t>(pad);
            double* dst = row + dt * c_in;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) {
                for (std::size_t ci = 0; ci < c_in; ++ci) dst[ci] = 0.0;
            } else {
                const double* s = x + static_cast<std::size_t>(src) * c_in;
                for (std::size_t ci = 0; ci < c_in; ++ci) dst[ci] = s[ci];
            }
        }
    }
}

}  // namespace

Var Tape::conv1d_same(Var x, Var w, Var b) {
    check_same_tape(x);
    check_same_tape(w);
    check_same_tape(b);
    const Tensor& tx = nodes_[x.idx_].value;
    const Tensor& tw = nodes_[w.idx_].value;
    const Tensor& tb = nodes_[b.idx_].value;
    if (tx.ndim() != 3 || tw.ndim() != 3) {
        throw DimensionError("conv1d_same: expected x[n,T,c_in], w[k,c_in,c_out]");
    }
    const std::size_t n = tx.shape[0], T = tx.shape[1], c_in = tx.shape[2];
    const std::size_t k = tw.shape[0], c_out = tw.shape[2];
    if (tw.shape[1] != c_in || tb.numel() != c_out || k % 2 == 0) {
        throw DimensionError("conv1d_same: weight/bias shapes do not conform");
    }
    Tensor out(Shape{n, T, c_out});
    std::vector<double> m(T * k * c_in);
    for (std::size_t i = 0; i < n; ++i) {
        im2col(tx.data.data() + i * T * c_in, T, c_in, k, m.data());
        gemm(m.data(), tw.data.data(), out.data.data() + i * T * c_out, T, k * c_in, c_out,
             false);
        double* o = out.data.data() + i * T * c_out;
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t co = 0; co < c_out; ++co) o[t * c_out + co] += tb.data[co];
        }
    }
    bool rg = nodes_[x.idx_].requires_grad || nodes_[w.idx_].requires_grad ||
              nodes_[b.idx_].requires_grad;
    std::size_t xi = x.idx_, wi = w.idx_, bi = b.idx_;
    std::size_t idx = push(std::move(out), rg, [xi, wi, bi, n, T, c_in, k, c_out](
                                                   Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vx = t.nodes_[xi].value;
        const Tensor& vw = t.nodes_[wi].value;
        const bool need_x = t.nodes_[xi].requires_grad;
        const bool need_w = t.nodes_[wi].requires_grad;
        const bool need_b = t.nodes_[bi].requires_grad;
        const std::size_t pad = (k - 1) / 2;
        std::vector<double> m(T * k * c_in);
        std::vector<double> dm(T * k * c_in);
        for (std::size_t i = 0; i < n; ++i) {
            const double* gy = g.data.data() + i * T * c_out;
            if (need_w) {
                im2col(vx.data.data() + i * T * c_in, T, c_in, k, m.data());
                gemm_at_b(m.data(), gy, t.grad_of(wi).data.data(), T, k * c_in, c_out);
            }
            if (need_b) {
                Tensor& gb = t.grad_of(bi);
                for (std::size_t tt = 0; tt < T; ++tt) {
                    for (std::size_t co = 0; co < c_out; ++co) {
                        gb.data[co] += gy[tt * c_out + co];
                    }
                }
            }
            if (need_x) {
                std::fill(dm.begin(), dm.end(), 0.0);
                gemm_a_bt(gy, vw.data.data(), dm.data(), T, c_out, k * c_in);
                Tensor& gx = t.grad_of(xi);
                double* gxp = gx.data.data() + i * T * c_in;
                for (std::size_t tt = 0; tt < T; ++tt) {
                    const double* row = dm.data() + tt * k * c_in;
                    for (std::size_t dt = 0; dt < k; ++dt) {
                        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt + dt) -
                                             static_cast<std::ptrdiff_t>(pad);
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                        double* dst = gxp + static_cast<std::size_t>(src) * c_in;
                        const double* s = row + dt * c_in;
                        for (std::size_t ci = 0; ci < c_in; ++ci) dst[ci] += s[ci];
                    }
                }
            }
        }
    });
    return Var(this, idx);
}

Var Tape::mean_time(Var x) {
    check_same_tape(x);
    const Tensor& tx = nodes_[x.idx_].value;
    if (tx.ndim() != 3) throw DimensionError("mean_time: expected [n,T,d]");
    const std::size_t n = tx.shape[0], T = tx.shape[1], d = tx.shape[2];
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            const double* xp = tx.data.data() + (i * T + t) * d;
            double* op = out.data.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) op[j] += xp[j];
        }
    }
    const double invT = 1.0 / static_cast<double>(T);
    for (double& v : out.data) v *= invT;
    std::size_t xi = x.idx_;
    std::size_t idx = push(std::move(out), nodes_[x.idx_].requires_grad,
                           [xi, n, T, d, invT](Tape& t, std::size_t self) {
                               const Tensor& g = t.nodes_[self].grad;
                               Tensor& gx = t.grad_of(xi);
                               for (std::size_t i = 0; i < n; ++i) {
                                   const double* gp = g.data.data() + i * d;
                                   for (std::size_t tt = 0; tt < T; ++tt) {
                                       double* gxp = gx.data.data() + (i * T + tt) * d;
                                       for (std::size_t j = 0; j < d; ++j) {
                                           gxp[j] += gp[j] * invT;
                                       }
                                   }
                               }
                           });
    return Var(this, idx);
}

Var Tape::sum_all(Var a) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    double s = 0.0;
    for (double v : ta.data) s += v;
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(Tensor::scalar(s), nodes_[a.idx_].requires_grad, [ai](Tape& t, std::size_t self) {
            double g = t.nodes_[self].grad.data[0];
            Tensor& ga = t.grad_of(ai);
            for (double& v : ga.data) v += g;
        });
    return Var(this, idx);
}

Var Tape::mean_all(Var a) {
    check_same_tape(a);
    const std::size_t n = nodes_[a.idx_].value.numel();
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Tape::sum_lastdim(Var a) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    if (ta.ndim() < 1) throw DimensionError("sum_lastdim: needs at least one axis");
    const std::size_t K = ta.shape.back();
    const std::size_t rows = ta.numel() / K;
    Shape out_shape(ta.shape.begin(), ta.shape.end() - 1);
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* ap = ta.data.data() + r * K;
        double s = 0.0;
        for (std::size_t j = 0; j < K; ++j) s += ap[j];
        out.data[r] = s;
    }
    std::size_t ai = a.idx_;
    std::size_t idx = push(std::move(out), nodes_[a.idx_].requires_grad,
                           [ai, K, rows](Tape& t, std::size_t self) {
                               const Tensor& g = t.nodes_[self].grad;
                               Tensor& ga = t.grad_of(ai);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double gv = g.data[r];
                                   double* gap = ga.data.data() + r * K;
                                   for (std::size_t j = 0; j < K; ++j) gap[j] += gv;
                               }
                           });
    return Var(this, idx);
}

Var Tape::log(Var a) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    Tensor out = ta;
    for (double& v : out.data) v = std::log(v);
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.nodes_[ai].value;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / x.data[i];
        });
    return Var(this, idx);
}

Var Tape::clamp(Var a, double lo, double hi) {
    check_same_tape(a);
    const Tensor& ta = nodes_[a.idx_].value;
    Tensor out = ta;
    for (double& v : out.data) v = std::min(std::max(v, lo), hi);
    std::size_t ai = a.idx_;
    std::size_t idx =
        push(std::move(out), nodes_[a.idx_].requires_grad, [ai, lo, hi](Tape& t, std::size_t self) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.nodes_[ai].value;
            Tensor& ga = t.grad_of(ai);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                if (x.data[i] > lo && x.data[i] < hi) ga.data[i] += g.data[i];
            }
        });
    return Var(this, idx);
}

void Tape::backward(Var loss) {
    check_same_tape(loss);
    const Node& ln = nodes_[loss.idx_];
    if (!ln.value.is_scalar()) {
        throw UsageError("backward: loss must be scalar, got " + shape_str(ln.value.shape));
    }
    grad_of(loss.idx_).data[0] = 1.0;
    for (std::size_t i = loss.idx_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.data.empty()) continue;
        if (n.back) n.back(*this, i);
        if (n.param) {
            Tensor& pg = n.param->grad;
            for (std::size_t j = 0; j < pg.data.size(); ++j) pg.data[j] += n.grad.data[j];
        }
    }
    clear();
}

void Tape::clear() {
    nodes_.clear();
    leaves_.clear();
}

Var mse(Tape& t, Var a, Var b) {
    Var d = t.sub(a, b);
    return t.mean_all(t.mul(d, d));
}

Var squared_distance_rows(Tape& t, Var a, Var b) {
    Var d = t.sub(a, b);
    return t.sum_lastdim(t.mul(d, d));
}

Var dot_rows(Tape& t, Var a, Var b) {
    return t.sum_lastdim(t.mul(a, b));
}

}  // namespace calad
