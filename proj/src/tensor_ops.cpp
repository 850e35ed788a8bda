#include "clmpt/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "clmpt/error.hpp"

namespace clmpt {

namespace {

using detail::Node;

Tensor make_op(const char* op, std::vector<int64_t> shape, std::vector<double> values,
               const std::vector<Tensor>& parents, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool rg = false;
    if (grad_enabled())
        for (const Tensor& p : parents)
            if (p.requires_grad()) rg = true;
    if (rg) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const Tensor& p : parents) node->parents.push_back(p.node());
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error::shape(std::string(op) + ": operand shapes differ");
}

void require_even_last(const char* op, const Tensor& a) {
    if (a.rank() < 1 || a.dim(-1) % 2 != 0)
        throw Error::shape(std::string(op) + ": complex tensors need an even last extent");
}

// Adds src*scale into dst if the parent participates in the tape.
void accumulate(Node& out, size_t parent, const std::vector<double>& contribution) {
    Node* p = out.parents[parent].get();
    if (!p->requires_grad) return;
    for (size_t i = 0; i < contribution.size(); ++i) p->grad[i] += contribution[i];
}

struct RowSpec {
    int64_t rows;
    int64_t width;
};

RowSpec last_axis_rows(const Tensor& a) {
    const int64_t width = a.dim(-1);
    return {a.numel() / width, width};
}

std::vector<int64_t> drop_last_axis(const Tensor& a) {
    std::vector<int64_t> s(a.shape().begin(), a.shape().end() - 1);
    if (s.empty()) s.push_back(1);
    return s;
}

struct AxisSpec {
    int64_t outer;
    int64_t n;
    int64_t inner;
    std::vector<int64_t> out_shape;
};

AxisSpec axis_spec(const char* op, const Tensor& a, int64_t axis) {
    const auto& shape = a.shape();
    if (axis < 0) axis += a.rank();
    if (axis < 0 || axis >= a.rank())
        throw Error::shape(std::string(op) + ": reduction axis out of range");
    AxisSpec spec{1, shape[static_cast<size_t>(axis)], 1, {}};
    for (int64_t i = 0; i < axis; ++i) spec.outer *= shape[static_cast<size_t>(i)];
    for (int64_t i = axis + 1; i < a.rank(); ++i) spec.inner *= shape[static_cast<size_t>(i)];
    for (int64_t i = 0; i < a.rank(); ++i)
        if (i != axis) spec.out_shape.push_back(shape[static_cast<size_t>(i)]);
    if (spec.out_shape.empty()) spec.out_shape.push_back(1);
    return spec;
}

} // namespace

// ------------------------------------------------------------ elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
    return make_op("add", a.shape(), std::move(v), {a, b}, [](Node& out) {
        accumulate(out, 0, out.grad);
        accumulate(out, 1, out.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
    return make_op("sub", a.shape(), std::move(v), {a, b}, [](Node& out) {
        accumulate(out, 0, out.grad);
        if (Node* p = out.parents[1].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i) p->grad[i] -= out.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
    return make_op("mul", a.shape(), std::move(v), {a, b}, [](Node& out) {
        Node* pa = out.parents[0].get();
        Node* pb = out.parents[1].get();
        if (pa->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i)
                pa->grad[i] += out.grad[i] * pb->values[i];
        if (pb->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i)
                pb->grad[i] += out.grad[i] * pa->values[i];
    });
}

Tensor scalar_mul(const Tensor& a, double s) {
    std::vector<double> v(a.values());
    for (double& x : v) x *= s;
    return make_op("scalar_mul", a.shape(), std::move(v), {a}, [s](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i) p->grad[i] += s * out.grad[i];
    });
}

Tensor exp(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::exp(x);
    return make_op("exp", a.shape(), std::move(v), {a}, [](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i)
                p->grad[i] += out.grad[i] * out.values[i];
    });
}

Tensor log(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::log(x);
    return make_op("log", a.shape(), std::move(v), {a}, [](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i)
                p->grad[i] += out.grad[i] / p->values[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v)
        x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return make_op("sigmoid", a.shape(), std::move(v), {a}, [](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i) {
                const double s = out.values[i];
                p->grad[i] += out.grad[i] * s * (1.0 - s);
            }
    });
}

// --------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw Error::shape("matmul: expected (m,k)x(k,n)");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> v(static_cast<size_t>(m * n), 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = bv + kk * n;
            double* crow = v.data() + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    return make_op("matmul", {m, n}, std::move(v), {a, b}, [m, k, n](Node& out) {
        Node* pa = out.parents[0].get();
        Node* pb = out.parents[1].get();
        const double* g = out.grad.data();
        if (pa->requires_grad) {
            // dA = G * B^T
            const double* bv = pb->values.data();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t kk = 0; kk < k; ++kk) {
                    double acc = 0.0;
                    const double* grow = g + i * n;
                    const double* brow = bv + kk * n;
                    for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    pa->grad[i * k + kk] += acc;
                }
        }
        if (pb->requires_grad) {
            // dB = A^T * G
            const double* av = pa->values.data();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double aik = av[i * k + kk];
                    if (aik == 0.0) continue;
                    const double* grow = g + i * n;
                    double* brow = pb->grad.data() + kk * n;
                    for (int64_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw Error::shape("transpose: expected a 2-D tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> v(static_cast<size_t>(m * n));
    const auto& av = a.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) v[static_cast<size_t>(j * m + i)] = av[static_cast<size_t>(i * n + j)];
    return make_op("transpose", {n, m}, std::move(v), {a}, [m, n](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    p->grad[static_cast<size_t>(i * n + j)] += out.grad[static_cast<size_t>(j * m + i)];
    });
}

Tensor add_rowwise(const Tensor& mat, const Tensor& vec) {
    if (mat.rank() != 2 || vec.rank() != 1 || mat.dim(1) != vec.dim(0))
        throw Error::shape("add_rowwise: expected (m,n) + (n)");
    const int64_t m = mat.dim(0), n = mat.dim(1);
    std::vector<double> v(mat.values());
    const auto& bv = vec.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) v[static_cast<size_t>(i * n + j)] += bv[static_cast<size_t>(j)];
    return make_op("add_rowwise", mat.shape(), std::move(v), {mat, vec}, [m, n](Node& out) {
        accumulate(out, 0, out.grad);
        if (Node* p = out.parents[1].get(); p->requires_grad)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    p->grad[static_cast<size_t>(j)] += out.grad[static_cast<size_t>(i * n + j)];
    });
}

Tensor mul_rowwise(const Tensor& mat, const Tensor& vec) {
    if (mat.rank() != 2 || vec.rank() != 1 || mat.dim(1) != vec.dim(0))
        throw Error::shape("mul_rowwise: expected (m,n) * (n)");
    const int64_t m = mat.dim(0), n = mat.dim(1);
    std::vector<double> v(mat.values());
    const auto& bv = vec.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) v[static_cast<size_t>(i * n + j)] *= bv[static_cast<size_t>(j)];
    return make_op("mul_rowwise", mat.shape(), std::move(v), {mat, vec}, [m, n](Node& out) {
        Node* pm = out.parents[0].get();
        Node* pv = out.parents[1].get();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const double g = out.grad[static_cast<size_t>(i * n + j)];
                if (pm->requires_grad)
                    pm->grad[static_cast<size_t>(i * n + j)] += g * pv->values[static_cast<size_t>(j)];
                if (pv->requires_grad)
                    pv->grad[static_cast<size_t>(j)] += g * pm->values[static_cast<size_t>(i * n + j)];
            }
    });
}

// ----------------------------------------------------------------- complex

Tensor complex_hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape("complex_hadamard", a, b);
    require_even_last("complex_hadamard", a);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> v(av.size());
    for (size_t i = 0; i < v.size(); i += 2) {
        v[i] = av[i] * bv[i] - av[i + 1] * bv[i + 1];
        v[i + 1] = av[i] * bv[i + 1] + av[i + 1] * bv[i];
    }
    return make_op("complex_hadamard", a.shape(), std::move(v), {a, b}, [](Node& out) {
        Node* pa = out.parents[0].get();
        Node* pb = out.parents[1].get();
        // d(a*b)/da accumulates g * conj(b), and symmetrically for b.
        for (size_t i = 0; i < out.grad.size(); i += 2) {
            const double gr = out.grad[i], gi = out.grad[i + 1];
            if (pa->requires_grad) {
                pa->grad[i] += gr * pb->values[i] + gi * pb->values[i + 1];
                pa->grad[i + 1] += -gr * pb->values[i + 1] + gi * pb->values[i];
            }
            if (pb->requires_grad) {
                pb->grad[i] += gr * pa->values[i] + gi * pa->values[i + 1];
                pb->grad[i + 1] += -gr * pa->values[i + 1] + gi * pa->values[i];
            }
        }
    });
}

Tensor conjugate(const Tensor& a) {
    require_even_last("conjugate", a);
    std::vector<double> v(a.values());
    for (size_t i = 1; i < v.size(); i += 2) v[i] = -v[i];
    return make_op("conjugate", a.shape(), std::move(v), {a}, [](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < out.grad.size(); ++i)
                p->grad[i] += (i % 2 == 0) ? out.grad[i] : -out.grad[i];
    });
}

// -------------------------------------------------------------- reductions

Tensor softmax_lastdim(const Tensor& a) {
    const auto [rows, width] = last_axis_rows(a);
    std::vector<double> v(a.values());
    for (int64_t r = 0; r < rows; ++r) {
        double* x = v.data() + r * width;
        double mx = x[0];
        for (int64_t j = 1; j < width; ++j) mx = std::max(mx, x[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            x[j] = std::exp(x[j] - mx);
            denom += x[j];
        }
        for (int64_t j = 0; j < width; ++j) x[j] /= denom;
    }
    return make_op("softmax", a.shape(), std::move(v), {a}, [rows = rows, width = width](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t r = 0; r < rows; ++r) {
                const double* s = out.values.data() + r * width;
                const double* g = out.grad.data() + r * width;
                double dot = 0.0;
                for (int64_t j = 0; j < width; ++j) dot += g[j] * s[j];
                double* pg = p->grad.data() + r * width;
                for (int64_t j = 0; j < width; ++j) pg[j] += s[j] * (g[j] - dot);
            }
    });
}

Tensor logsumexp_lastdim(const Tensor& a) {
    const auto [rows, width] = last_axis_rows(a);
    const auto& av = a.values();
    std::vector<double> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * width;
        int64_t amax = 0;
        for (int64_t j = 1; j < width; ++j)
            if (x[j] > x[amax]) amax = j;
        double tail = 0.0;
        for (int64_t j = 0; j < width; ++j)
            if (j != amax) tail += std::exp(x[j] - x[amax]);
        v[static_cast<size_t>(r)] = x[amax] + std::log1p(tail);
    }
    return make_op("logsumexp", drop_last_axis(a), std::move(v), {a},
                   [rows = rows, width = width](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad)
                           for (int64_t r = 0; r < rows; ++r) {
                               const double* x = p->values.data() + r * width;
                               const double lse = out.values[static_cast<size_t>(r)];
                               const double g = out.grad[static_cast<size_t>(r)];
                               double* pg = p->grad.data() + r * width;
                               for (int64_t j = 0; j < width; ++j)
                                   pg[j] += g * std::exp(x[j] - lse);
                           }
                   });
}

Tensor layer_norm_lastdim(const Tensor& a, double eps) {
    const auto [rows, width] = last_axis_rows(a);
    const auto& av = a.values();
    std::vector<double> v(av.size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * width;
        double mu = 0.0;
        for (int64_t j = 0; j < width; ++j) mu += x[j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (int64_t j = 0; j < width; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(width);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int64_t j = 0; j < width; ++j)
            v[static_cast<size_t>(r * width + j)] = (x[j] - mu) * inv;
    }
    return make_op("layer_norm", a.shape(), std::move(v), {a},
                   [rows = rows, width = width, inv_std = std::move(inv_std)](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad)
                           for (int64_t r = 0; r < rows; ++r) {
                               const double* xh = out.values.data() + r * width;
                               const double* g = out.grad.data() + r * width;
                               const double inv = inv_std[static_cast<size_t>(r)];
                               double gmean = 0.0, gxmean = 0.0;
                               for (int64_t j = 0; j < width; ++j) {
                                   gmean += g[j];
                                   gxmean += g[j] * xh[j];
                               }
                               gmean /= static_cast<double>(width);
                               gxmean /= static_cast<double>(width);
                               double* pg = p->grad.data() + r * width;
                               for (int64_t j = 0; j < width; ++j)
                                   pg[j] += inv * (g[j] - gmean - xh[j] * gxmean);
                           }
                   });
}

Tensor sum(const Tensor& a, int64_t axis) {
    const AxisSpec s = axis_spec("sum", a, axis);
    const auto& av = a.values();
    std::vector<double> v(static_cast<size_t>(s.outer * s.inner), 0.0);
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t j = 0; j < s.n; ++j)
            for (int64_t i = 0; i < s.inner; ++i)
                v[static_cast<size_t>(o * s.inner + i)] +=
                    av[static_cast<size_t>((o * s.n + j) * s.inner + i)];
    return make_op("sum", s.out_shape, std::move(v), {a}, [s](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t o = 0; o < s.outer; ++o)
                for (int64_t j = 0; j < s.n; ++j)
                    for (int64_t i = 0; i < s.inner; ++i)
                        p->grad[static_cast<size_t>((o * s.n + j) * s.inner + i)] +=
                            out.grad[static_cast<size_t>(o * s.inner + i)];
    });
}

Tensor mean(const Tensor& a, int64_t axis) {
    const AxisSpec s = axis_spec("mean", a, axis);
    Tensor total = sum(a, axis);
    return scalar_mul(total, 1.0 / static_cast<double>(s.n));
}

Tensor max(const Tensor& a, int64_t axis) {
    const AxisSpec s = axis_spec("max", a, axis);
    const auto& av = a.values();
    std::vector<double> v(static_cast<size_t>(s.outer * s.inner));
    std::vector<int64_t> argmax(v.size());
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
            int64_t best = 0;
            double bv = av[static_cast<size_t>(o * s.n * s.inner + i)];
            for (int64_t j = 1; j < s.n; ++j) {
                const double x = av[static_cast<size_t>((o * s.n + j) * s.inner + i)];
                if (x > bv) {  // strict: ties resolve to the first index
                    bv = x;
                    best = j;
                }
            }
            v[static_cast<size_t>(o * s.inner + i)] = bv;
            argmax[static_cast<size_t>(o * s.inner + i)] = best;
        }
    return make_op("max", s.out_shape, std::move(v), {a},
                   [s, argmax = std::move(argmax)](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad)
                           for (int64_t o = 0; o < s.outer; ++o)
                               for (int64_t i = 0; i < s.inner; ++i) {
                                   const int64_t j = argmax[static_cast<size_t>(o * s.inner + i)];
                                   p->grad[static_cast<size_t>((o * s.n + j) * s.inner + i)] +=
                                       out.grad[static_cast<size_t>(o * s.inner + i)];
                               }
                   });
}

Tensor sum_all(const Tensor& a) {
    double total = 0.0;
    for (double x : a.values()) total += x;
    return make_op("sum_all", {1}, {total}, {a}, [](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += out.grad[0];
    });
}

Tensor l2_norm_lastdim(const Tensor& a) {
    const auto [rows, width] = last_axis_rows(a);
    const auto& av = a.values();
    std::vector<double> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            const double x = av[static_cast<size_t>(r * width + j)];
            acc += x * x;
        }
        v[static_cast<size_t>(r)] = std::sqrt(acc);
    }
    return make_op("l2_norm", drop_last_axis(a), std::move(v), {a},
                   [rows = rows, width = width](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad)
                           for (int64_t r = 0; r < rows; ++r) {
                               const double norm = out.values[static_cast<size_t>(r)];
                               if (norm == 0.0) continue;
                               const double g = out.grad[static_cast<size_t>(r)] / norm;
                               for (int64_t j = 0; j < width; ++j)
                                   p->grad[static_cast<size_t>(r * width + j)] +=
                                       g * p->values[static_cast<size_t>(r * width + j)];
                           }
                   });
}

Tensor cube_norm_penalty(const Tensor& a) {
    require_even_last("cube_norm_penalty", a);
    const auto [rows, width] = last_axis_rows(a);
    const auto& av = a.values();
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < width; j += 2) {
            const double re = av[static_cast<size_t>(r * width + j)];
            const double im = av[static_cast<size_t>(r * width + j + 1)];
            total += std::pow(re * re + im * im, 1.5);
        }
    total /= static_cast<double>(rows);
    return make_op("cube_norm_penalty", {1}, {total}, {a},
                   [rows = rows, width = width](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad) {
                           const double scale = out.grad[0] / static_cast<double>(rows);
                           for (int64_t r = 0; r < rows; ++r)
                               for (int64_t j = 0; j < width; j += 2) {
                                   const double re = p->values[static_cast<size_t>(r * width + j)];
                                   const double im =
                                       p->values[static_cast<size_t>(r * width + j + 1)];
                                   const double mod = std::sqrt(re * re + im * im);
                                   p->grad[static_cast<size_t>(r * width + j)] += scale * 3.0 * mod * re;
                                   p->grad[static_cast<size_t>(r * width + j + 1)] +=
                                       scale * 3.0 * mod * im;
                               }
                       }
                   });
}

namespace {

// Shared forward/backward for cosine over one row pair.
struct CosRow {
    double dot = 0.0, na = 0.0, nb = 0.0, cos = 0.0;
};

CosRow cos_row(const double* a, const double* b, int64_t n) {
    CosRow r;
    for (int64_t j = 0; j < n; ++j) {
        r.dot += a[j] * b[j];
        r.na += a[j] * a[j];
        r.nb += b[j] * b[j];
    }
    r.na = std::sqrt(r.na);
    r.nb = std::sqrt(r.nb);
    r.cos = (r.na == 0.0 || r.nb == 0.0) ? 0.0 : r.dot / (r.na * r.nb);
    return r;
}

void cos_row_backward(const double* a, const double* b, int64_t n, const CosRow& r, double g,
                      double* ga, double* gb) {
    if (r.na == 0.0 || r.nb == 0.0) return;
    const double inv = 1.0 / (r.na * r.nb);
    for (int64_t j = 0; j < n; ++j) {
        if (ga) ga[j] += g * (b[j] * inv - r.cos * a[j] / (r.na * r.na));
        if (gb) gb[j] += g * (a[j] * inv - r.cos * b[j] / (r.nb * r.nb));
    }
}

} // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    require_same_shape("cosine_similarity", a, b);
    const auto [rows, width] = last_axis_rows(a);
    std::vector<double> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r)
        v[static_cast<size_t>(r)] =
            cos_row(a.values().data() + r * width, b.values().data() + r * width, width).cos;
    return make_op("cosine_similarity", drop_last_axis(a), std::move(v), {a, b},
                   [rows = rows, width = width](Node& out) {
                       Node* pa = out.parents[0].get();
                       Node* pb = out.parents[1].get();
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* av = pa->values.data() + r * width;
                           const double* bv = pb->values.data() + r * width;
                           const CosRow cr = cos_row(av, bv, width);
                           cos_row_backward(av, bv, width, cr, out.grad[static_cast<size_t>(r)],
                                            pa->requires_grad ? pa->grad.data() + r * width : nullptr,
                                            pb->requires_grad ? pb->grad.data() + r * width : nullptr);
                       }
                   });
}

Tensor cosine_similarity_rows(const Tensor& mat, const Tensor& vec) {
    if (mat.rank() != 2 || vec.rank() != 1 || mat.dim(1) != vec.dim(0))
        throw Error::shape("cosine_similarity_rows: expected (k,n) and (n)");
    const int64_t rows = mat.dim(0), width = mat.dim(1);
    std::vector<double> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r)
        v[static_cast<size_t>(r)] =
            cos_row(mat.values().data() + r * width, vec.values().data(), width).cos;
    return make_op("cosine_similarity_rows", {rows}, std::move(v), {mat, vec},
                   [rows, width](Node& out) {
                       Node* pm = out.parents[0].get();
                       Node* pv = out.parents[1].get();
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* av = pm->values.data() + r * width;
                           const double* bv = pv->values.data();
                           const CosRow cr = cos_row(av, bv, width);
                           cos_row_backward(av, bv, width, cr, out.grad[static_cast<size_t>(r)],
                                            pm->requires_grad ? pm->grad.data() + r * width : nullptr,
                                            pv->requires_grad ? pv->grad.data() : nullptr);
                       }
                   });
}

// --------------------------------------------------------------- reshaping

Tensor reshape(const Tensor& a, std::vector<int64_t> new_shape) {
    int64_t n = 1;
    for (int64_t d : new_shape) n *= d;
    if (n != a.numel()) throw Error::shape("reshape: element count mismatch");
    return make_op("reshape", std::move(new_shape), a.values(), {a}, [](Node& out) {
        accumulate(out, 0, out.grad);
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw Error::contract("stack_rows: empty input");
    const int64_t width = rows[0].numel();
    std::vector<double> v;
    v.reserve(static_cast<size_t>(width) * rows.size());
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.numel() != width)
            throw Error::shape("stack_rows: rows must be equal-length vectors");
        v.insert(v.end(), r.values().begin(), r.values().end());
    }
    return make_op("stack_rows", {static_cast<int64_t>(rows.size()), width}, std::move(v), rows,
                   [width](Node& out) {
                       for (size_t r = 0; r < out.parents.size(); ++r) {
                           Node* p = out.parents[r].get();
                           if (!p->requires_grad) continue;
                           const double* g = out.grad.data() + r * static_cast<size_t>(width);
                           for (int64_t j = 0; j < width; ++j) p->grad[static_cast<size_t>(j)] += g[j];
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& mats) {
    if (mats.empty()) throw Error::contract("concat_rows: empty input");
    const int64_t width = mats[0].dim(1);
    int64_t total_rows = 0;
    for (const Tensor& m : mats) {
        if (m.rank() != 2 || m.dim(1) != width)
            throw Error::shape("concat_rows: matrices must share the column count");
        total_rows += m.dim(0);
    }
    std::vector<double> v;
    v.reserve(static_cast<size_t>(total_rows * width));
    std::vector<int64_t> row_counts;
    for (const Tensor& m : mats) {
        v.insert(v.end(), m.values().begin(), m.values().end());
        row_counts.push_back(m.dim(0));
    }
    return make_op("concat_rows", {total_rows, width}, std::move(v), mats,
                   [width, row_counts = std::move(row_counts)](Node& out) {
                       int64_t offset = 0;
                       for (size_t m = 0; m < out.parents.size(); ++m) {
                           Node* p = out.parents[m].get();
                           const int64_t count = row_counts[m] * width;
                           if (p->requires_grad)
                               for (int64_t j = 0; j < count; ++j)
                                   p->grad[static_cast<size_t>(j)] +=
                                       out.grad[static_cast<size_t>(offset + j)];
                           offset += count;
                       }
                   });
}

Tensor concat_cols(const std::vector<Tensor>& mats) {
    if (mats.empty()) throw Error::contract("concat_cols: empty input");
    const int64_t rows = mats[0].dim(0);
    int64_t total_cols = 0;
    for (const Tensor& m : mats) {
        if (m.rank() != 2 || m.dim(0) != rows)
            throw Error::shape("concat_cols: matrices must share the row count");
        total_cols += m.dim(1);
    }
    std::vector<double> v(static_cast<size_t>(rows * total_cols));
    std::vector<int64_t> col_counts;
    int64_t offset = 0;
    for (const Tensor& m : mats) {
        const int64_t c = m.dim(1);
        const auto& mv = m.values();
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < c; ++j)
                v[static_cast<size_t>(i * total_cols + offset + j)] = mv[static_cast<size_t>(i * c + j)];
        offset += c;
        col_counts.push_back(c);
    }
    return make_op("concat_cols", {rows, total_cols}, std::move(v), mats,
                   [rows, total_cols, col_counts = std::move(col_counts)](Node& out) {
                       int64_t offset = 0;
                       for (size_t m = 0; m < out.parents.size(); ++m) {
                           Node* p = out.parents[m].get();
                           const int64_t c = col_counts[m];
                           if (p->requires_grad)
                               for (int64_t i = 0; i < rows; ++i)
                                   for (int64_t j = 0; j < c; ++j)
                                       p->grad[static_cast<size_t>(i * c + j)] +=
                                           out.grad[static_cast<size_t>(i * total_cols + offset + j)];
                           offset += c;
                       }
                   });
}

Tensor concat_vecs(const std::vector<Tensor>& vecs) {
    if (vecs.empty()) throw Error::contract("concat_vecs: empty input");
    std::vector<double> v;
    std::vector<int64_t> lens;
    for (const Tensor& t : vecs) {
        if (t.rank() != 1) throw Error::shape("concat_vecs: inputs must be vectors");
        v.insert(v.end(), t.values().begin(), t.values().end());
        lens.push_back(t.numel());
    }
    const int64_t total = static_cast<int64_t>(v.size());
    return make_op("concat_vecs", {total}, std::move(v), vecs,
                   [lens = std::move(lens)](Node& out) {
                       int64_t offset = 0;
                       for (size_t i = 0; i < out.parents.size(); ++i) {
                           Node* p = out.parents[i].get();
                           if (p->requires_grad)
                               for (int64_t j = 0; j < lens[i]; ++j)
                                   p->grad[static_cast<size_t>(j)] +=
                                       out.grad[static_cast<size_t>(offset + j)];
                           offset += lens[i];
                       }
                   });
}

Tensor slice_rows(const Tensor& a, int64_t start, int64_t len) {
    if (a.rank() != 2) throw Error::shape("slice_rows: expected a 2-D tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > m) throw Error::index("slice_rows: range out of bounds");
    std::vector<double> v(a.values().begin() + start * n, a.values().begin() + (start + len) * n);
    return make_op("slice_rows", {len, n}, std::move(v), {a}, [start, len, n](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t j = 0; j < len * n; ++j)
                p->grad[static_cast<size_t>(start * n + j)] += out.grad[static_cast<size_t>(j)];
    });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t len) {
    if (a.rank() != 2) throw Error::shape("slice_cols: expected a 2-D tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > n) throw Error::index("slice_cols: range out of bounds");
    std::vector<double> v(static_cast<size_t>(m * len));
    const auto& av = a.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < len; ++j)
            v[static_cast<size_t>(i * len + j)] = av[static_cast<size_t>(i * n + start + j)];
    return make_op("slice_cols", {m, len}, std::move(v), {a}, [m, n, start, len](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < len; ++j)
                    p->grad[static_cast<size_t>(i * n + start + j)] +=
                        out.grad[static_cast<size_t>(i * len + j)];
    });
}

Tensor slice_vec(const Tensor& a, int64_t start, int64_t len) {
    if (a.rank() != 1) throw Error::shape("slice_vec: expected a 1-D tensor");
    if (start < 0 || len <= 0 || start + len > a.numel())
        throw Error::index("slice_vec: range out of bounds");
    std::vector<double> v(a.values().begin() + start, a.values().begin() + start + len);
    return make_op("slice_vec", {len}, std::move(v), {a}, [start, len](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t j = 0; j < len; ++j)
                p->grad[static_cast<size_t>(start + j)] += out.grad[static_cast<size_t>(j)];
    });
}

Tensor row(const Tensor& a, int64_t i) {
    if (a.rank() != 2) throw Error::shape("row: expected a 2-D tensor");
    if (i < 0 || i >= a.dim(0)) throw Error::index("row: index out of bounds");
    const int64_t n = a.dim(1);
    std::vector<double> v(a.values().begin() + i * n, a.values().begin() + (i + 1) * n);
    return make_op("row", {n}, std::move(v), {a}, [i, n](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad)
            for (int64_t j = 0; j < n; ++j)
                p->grad[static_cast<size_t>(i * n + j)] += out.grad[static_cast<size_t>(j)];
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& indices) {
    if (a.rank() != 2) throw Error::shape("gather_rows: expected a 2-D tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> v;
    v.reserve(indices.size() * static_cast<size_t>(n));
    for (int64_t idx : indices) {
        if (idx < 0 || idx >= m) throw Error::index("gather_rows: row index out of bounds");
        v.insert(v.end(), a.values().begin() + idx * n, a.values().begin() + (idx + 1) * n);
    }
    return make_op("gather_rows", {static_cast<int64_t>(indices.size()), n}, std::move(v), {a},
                   [indices, n](Node& out) {
                       if (Node* p = out.parents[0].get(); p->requires_grad)
                           for (size_t r = 0; r < indices.size(); ++r) {
                               const double* g = out.grad.data() + r * static_cast<size_t>(n);
                               double* pg = p->grad.data() + indices[r] * n;
                               for (int64_t j = 0; j < n; ++j) pg[j] += g[j];
                           }
                   });
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int64_t>& labels) {
    if (logits.rank() != 2) throw Error::shape("cross_entropy_mean: expected (batch, classes)");
    const int64_t b = logits.dim(0), n = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != b)
        throw Error::shape("cross_entropy_mean: one label per row required");
    const auto& x = logits.values();
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= n)
            throw Error::index("cross_entropy_mean: label out of range");
        const double* r = x.data() + i * n;
        double mx = r[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) denom += std::exp(r[j] - mx);
        total += mx + std::log(denom) - r[labels[static_cast<size_t>(i)]];
    }
    total /= static_cast<double>(b);
    return make_op("cross_entropy_mean", {1}, {total}, {logits}, [b, n, labels](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad) {
            const double scale = out.grad[0] / static_cast<double>(b);
            for (int64_t i = 0; i < b; ++i) {
                const double* r = p->values.data() + i * n;
                double mx = r[0];
                for (int64_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
                double denom = 0.0;
                for (int64_t j = 0; j < n; ++j) denom += std::exp(r[j] - mx);
                double* pg = p->grad.data() + i * n;
                for (int64_t j = 0; j < n; ++j)
                    pg[j] += scale * std::exp(r[j] - mx) / denom;
                pg[labels[static_cast<size_t>(i)]] -= scale;
            }
        }
    });
}

Tensor neg_log_softmax_first(const Tensor& logits) {
    if (logits.rank() != 1 || logits.numel() < 1)
        throw Error::shape("neg_log_softmax_first: expected a non-empty vector");
    const auto& x = logits.values();
    const int64_t n = logits.numel();

    // loss = log1p(sum_{i>0} e^{x_i - x_0}) unless the shifted exponents
    // could overflow, in which case fall back to max-subtraction.
    double max_shift = 0.0;
    for (int64_t i = 1; i < n; ++i) max_shift = std::max(max_shift, x[static_cast<size_t>(i)] - x[0]);
    double loss;
    if (max_shift < 600.0) {
        double tail = 0.0;
        for (int64_t i = 1; i < n; ++i) tail += std::exp(x[static_cast<size_t>(i)] - x[0]);
        loss = std::log1p(tail);
    } else {
        double mx = x[0];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[static_cast<size_t>(i)]);
        double denom = 0.0;
        for (int64_t i = 0; i < n; ++i) denom += std::exp(x[static_cast<size_t>(i)] - mx);
        loss = mx + std::log(denom) - x[0];
    }
    return make_op("neg_log_softmax_first", {1}, {loss}, {logits}, [n](Node& out) {
        if (Node* p = out.parents[0].get(); p->requires_grad) {
            const double* x = p->values.data();
            double mx = x[0];
            for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
            double denom = 0.0;
            for (int64_t i = 0; i < n; ++i) denom += std::exp(x[i] - mx);
            const double g = out.grad[0];
            for (int64_t i = 0; i < n; ++i)
                p->grad[static_cast<size_t>(i)] += g * std::exp(x[i] - mx) / denom;
            p->grad[0] -= g;
        }
    });
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  const std::vector<Tensor>& inputs, double step) {
    std::vector<Tensor> work;
    work.reserve(inputs.size());
    for (const Tensor& t : inputs) {
        Tensor copy = t.detach();
        copy.set_requires_grad(true);
        work.push_back(copy);
    }
    Tensor out = fn(work);
    if (out.numel() != 1) throw Error::contract("grad_check: function must be scalar-valued");
    backward(out);
    std::vector<std::vector<double>> analytic;
    for (Tensor& t : work) analytic.push_back(t.grad().values());

    double worst = 0.0;
    for (size_t i = 0; i < work.size(); ++i) {
        auto& vals = work[i].raw_values();
        for (size_t c = 0; c < vals.size(); ++c) {
            const double saved = vals[c];
            vals[c] = saved + step;
            const double f_plus = fn(work).scalar_value();
            vals[c] = saved - step;
            const double f_minus = fn(work).scalar_value();
            vals[c] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[i][c];
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace clmpt
