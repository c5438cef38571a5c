#include "icflow/graph.hpp"

#include <cmath>

namespace icflow {

namespace {

// C(m x n) += A(m x k) * B(k x n)
void matmul_acc(const double* A, const double* B, double* C, Index m, Index k, Index n) {
    for (Index i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (Index p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (Index j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// GA(m x k) += G(m x n) * B^T  (B is k x n)
void matmul_acc_bt(const double* G, const double* B, double* GA, Index m, Index k, Index n) {
    for (Index i = 0; i < m; ++i) {
        const double* gr = G + i * n;
        double* ga = GA + i * k;
        for (Index p = 0; p < k; ++p) {
            const double* b = B + p * n;
            double s = 0.0;
            for (Index j = 0; j < n; ++j) s += gr[j] * b[j];
            ga[p] += s;
        }
    }
}

// GB(k x n) += A^T * G  (A is m x k, G is m x n)
void matmul_acc_at(const double* A, const double* G, double* GB, Index m, Index k, Index n) {
    for (Index i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* gr = G + i * n;
        for (Index p = 0; p < k; ++p) {
            const double av = a[p];
            double* gb = GB + p * n;
            for (Index j = 0; j < n; ++j) gb[j] += av * gr[j];
        }
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_fwd(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + t.shape_str());
}

}  // namespace

Value Graph::make(Tensor value, std::vector<int> parents, std::function<void(Graph&, int)> backprop,
                  const char* opname) {
    value.check_finite(opname);
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (int p : n.parents)
        if (node(p).requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
    Node& n = node(id);
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

Value Graph::input(Tensor v) {
    v.check_finite("input");
    Node n;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Graph::param(Tensor v) {
    v.check_finite("param");
    Node n;
    n.value = std::move(v);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Tensor Graph::grad(Value v) const {
    const Node& n = node(v);
    if (!n.has_grad) return Tensor::zeros(n.value.shape());
    return n.grad;
}

Value Graph::add(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("add: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) += tb.at(i);
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        for (int pi = 0; pi < 2; ++pi) {
            if (!g.node(n.parents[pi]).requires_grad) continue;
            Tensor& gp = g.grad_buf(n.parents[pi]);
            for (Index i = 0; i < gy.numel(); ++i) gp.at(i) += gy.at(i);
        }
    }, "add");
}

Value Graph::sub(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("sub: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) -= tb.at(i);
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& ga = g.grad_buf(n.parents[0]);
            for (Index i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i);
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gb = g.grad_buf(n.parents[1]);
            for (Index i = 0; i < gy.numel(); ++i) gb.at(i) -= gy.at(i);
        }
    }, "sub");
}

Value Graph::mul(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) *= tb.at(i);
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        const Tensor& ta = g.node(n.parents[0]).value;
        const Tensor& tb = g.node(n.parents[1]).value;
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& ga = g.grad_buf(n.parents[0]);
            for (Index i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i) * tb.at(i);
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gb = g.grad_buf(n.parents[1]);
            for (Index i = 0; i < gy.numel(); ++i) gb.at(i) += gy.at(i) * ta.at(i);
        }
    }, "mul");
}

Value Graph::div(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("div: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) /= tb.at(i);
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        const Tensor& y = n.value;
        const Tensor& tb = g.node(n.parents[1]).value;
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& ga = g.grad_buf(n.parents[0]);
            for (Index i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i) / tb.at(i);
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gb = g.grad_buf(n.parents[1]);
            for (Index i = 0; i < gy.numel(); ++i) gb.at(i) -= gy.at(i) * y.at(i) / tb.at(i);
        }
    }, "div");
}

Value Graph::scale(Value a, double c) {
    Tensor out = val(a);
    for (Index i = 0; i < out.numel(); ++i) out.at(i) *= c;
    return make(std::move(out), {a.id}, [c](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i) ga.at(i) += c * n.grad.at(i);
    }, "scale");
}

Value Graph::add_const(Value a, double c) {
    Tensor out = val(a);
    for (Index i = 0; i < out.numel(); ++i) out.at(i) += c;
    return make(std::move(out), {a.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i) ga.at(i) += n.grad.at(i);
    }, "add_const");
}

Value Graph::gelu(Value a) {
    Tensor out = val(a);
    for (Index i = 0; i < out.numel(); ++i) out.at(i) = gelu_fwd(out.at(i));
    return make(std::move(out), {a.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& x = g.node(n.parents[0]).value;
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i) ga.at(i) += n.grad.at(i) * gelu_bwd(x.at(i));
    }, "gelu");
}

Value Graph::esqrt(Value a) {
    Tensor out = val(a);
    for (Index i = 0; i < out.numel(); ++i) {
        if (out.at(i) < 0.0) throw DomainError("esqrt of negative value");
        out.at(i) = std::sqrt(out.at(i));
    }
    return make(std::move(out), {a.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& y = n.value;
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i) ga.at(i) += n.grad.at(i) / (2.0 * y.at(i));
    }, "esqrt");
}

Value Graph::mul_scalar(Value x, Value s) {
    const Tensor& tx = val(x);
    const Tensor& ts = val(s);
    if (ts.numel() != 1) throw ShapeError("mul_scalar: scale must have one element");
    Tensor out = tx;
    const double sv = ts.at(0);
    for (Index i = 0; i < out.numel(); ++i) out.at(i) *= sv;
    return make(std::move(out), {x.id, s.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        const Tensor& tx = g.node(n.parents[0]).value;
        const double sv = g.node(n.parents[1]).value.at(0);
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& gx = g.grad_buf(n.parents[0]);
            for (Index i = 0; i < gy.numel(); ++i) gx.at(i) += gy.at(i) * sv;
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gs = g.grad_buf(n.parents[1]);
            double acc = 0.0;
            for (Index i = 0; i < gy.numel(); ++i) acc += gy.at(i) * tx.at(i);
            gs.at(0) += acc;
        }
    }, "mul_scalar");
}

Value Graph::add_rowvec(Value x, Value v) {
    const Tensor& tx = val(x);
    const Tensor& tv = val(v);
    require_2d(tx, "add_rowvec");
    if (tv.rank() != 1 || tv.numel() != tx.cols())
        throw ShapeError("add_rowvec: vector " + tv.shape_str() + " vs cols of " + tx.shape_str());
    Tensor out = tx;
    for (Index r = 0; r < tx.rows(); ++r)
        for (Index c = 0; c < tx.cols(); ++c) out.at(r, c) += tv.at(c);
    return make(std::move(out), {x.id, v.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& gx = g.grad_buf(n.parents[0]);
            for (Index i = 0; i < gy.numel(); ++i) gx.at(i) += gy.at(i);
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gv = g.grad_buf(n.parents[1]);
            for (Index r = 0; r < gy.rows(); ++r)
                for (Index c = 0; c < gy.cols(); ++c) gv.at(c) += gy.at(r, c);
        }
    }, "add_rowvec");
}

Value Graph::mul_rowvec(Value x, Value v) {
    const Tensor& tx = val(x);
    const Tensor& tv = val(v);
    require_2d(tx, "mul_rowvec");
    if (tv.rank() != 1 || tv.numel() != tx.cols())
        throw ShapeError("mul_rowvec: vector " + tv.shape_str() + " vs cols of " + tx.shape_str());
    Tensor out = tx;
    for (Index r = 0; r < tx.rows(); ++r)
        for (Index c = 0; c < tx.cols(); ++c) out.at(r, c) *= tv.at(c);
    return make(std::move(out), {x.id, v.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        const Tensor& tx = g.node(n.parents[0]).value;
        const Tensor& tv = g.node(n.parents[1]).value;
        if (g.node(n.parents[0]).requires_grad) {
            Tensor& gx = g.grad_buf(n.parents[0]);
            for (Index r = 0; r < gy.rows(); ++r)
                for (Index c = 0; c < gy.cols(); ++c) gx.at(r, c) += gy.at(r, c) * tv.at(c);
        }
        if (g.node(n.parents[1]).requires_grad) {
            Tensor& gv = g.grad_buf(n.parents[1]);
            for (Index r = 0; r < gy.rows(); ++r)
                for (Index c = 0; c < gy.cols(); ++c) gv.at(c) += gy.at(r, c) * tx.at(r, c);
        }
    }, "mul_rowvec");
}

Value Graph::matmul(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_2d(ta, "matmul");
    require_2d(tb, "matmul");
    if (ta.cols() != tb.rows())
        throw ShapeError("matmul: inner extents " + ta.shape_str() + " vs " + tb.shape_str());
    const Index m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    matmul_acc(ta.data(), tb.data(), out.data(), m, k, n);
    return make(std::move(out), {a.id, b.id}, [m, k, n](Graph& g, int id) {
        const Node& nd = g.node(id);
        const Tensor& gy = nd.grad;
        const Tensor& ta = g.node(nd.parents[0]).value;
        const Tensor& tb = g.node(nd.parents[1]).value;
        if (g.node(nd.parents[0]).requires_grad)
            matmul_acc_bt(gy.data(), tb.data(), g.grad_buf(nd.parents[0]).data(), m, k, n);
        if (g.node(nd.parents[1]).requires_grad)
            matmul_acc_at(ta.data(), gy.data(), g.grad_buf(nd.parents[1]).data(), m, k, n);
    }, "matmul");
}

Value Graph::transpose(Value a) {
    const Tensor& ta = val(a);
    require_2d(ta, "transpose");
    Tensor out({ta.cols(), ta.rows()});
    for (Index r = 0; r < ta.rows(); ++r)
        for (Index c = 0; c < ta.cols(); ++c) out.at(c, r) = ta.at(r, c);
    return make(std::move(out), {a.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index r = 0; r < gy.rows(); ++r)
            for (Index c = 0; c < gy.cols(); ++c) ga.at(c, r) += gy.at(r, c);
    }, "transpose");
}

Value Graph::softmax_rows(Value x) {
    const Tensor& tx = val(x);
    require_2d(tx, "softmax");
    if (tx.cols() < 1) throw DomainError("softmax over empty axis");
    Tensor out = tx;
    for (Index r = 0; r < tx.rows(); ++r) {
        double m = out.at(r, 0);
        for (Index c = 1; c < tx.cols(); ++c) m = std::max(m, out.at(r, c));
        double z = 0.0;
        for (Index c = 0; c < tx.cols(); ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - m);
            z += out.at(r, c);
        }
        for (Index c = 0; c < tx.cols(); ++c) out.at(r, c) /= z;
    }
    return make(std::move(out), {x.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        const Tensor& p = n.value;
        Tensor& gx = g.grad_buf(n.parents[0]);
        for (Index r = 0; r < gy.rows(); ++r) {
            double s = 0.0;
            for (Index c = 0; c < gy.cols(); ++c) s += gy.at(r, c) * p.at(r, c);
            for (Index c = 0; c < gy.cols(); ++c) gx.at(r, c) += p.at(r, c) * (gy.at(r, c) - s);
        }
    }, "softmax");
}

Value Graph::layernorm_rows(Value x, double eps) {
    const Tensor& tx = val(x);
    require_2d(tx, "layernorm");
    if (tx.cols() < 2) throw ShapeError("layernorm: normalized extent must be >= 2");
    const Index n = tx.cols();
    Tensor out(tx.shape());
    Tensor inv_std({tx.rows()});
    for (Index r = 0; r < tx.rows(); ++r) {
        double mean = 0.0;
        for (Index c = 0; c < n; ++c) mean += tx.at(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (Index c = 0; c < n; ++c) {
            const double d = tx.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(r) = is;
        for (Index c = 0; c < n; ++c) out.at(r, c) = (tx.at(r, c) - mean) * is;
    }
    auto saved = std::make_shared<Tensor>(std::move(inv_std));
    return make(std::move(out), {x.id}, [saved](Graph& g, int id) {
        const Node& nd = g.node(id);
        const Tensor& gy = nd.grad;
        const Tensor& xhat = nd.value;
        Tensor& gx = g.grad_buf(nd.parents[0]);
        const Index n = gy.cols();
        for (Index r = 0; r < gy.rows(); ++r) {
            double mg = 0.0, mgx = 0.0;
            for (Index c = 0; c < n; ++c) {
                mg += gy.at(r, c);
                mgx += gy.at(r, c) * xhat.at(r, c);
            }
            mg /= static_cast<double>(n);
            mgx /= static_cast<double>(n);
            const double is = saved->at(r);
            for (Index c = 0; c < n; ++c)
                gx.at(r, c) += is * (gy.at(r, c) - mg - xhat.at(r, c) * mgx);
        }
    }, "layernorm");
}

Value Graph::reshape(Value a, Shape new_shape) {
    Tensor out = val(a).reshaped(std::move(new_shape));
    auto old_shape = std::make_shared<Shape>(val(a).shape());
    return make(std::move(out), {a.id}, [old_shape](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& ga = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i) ga.at(i) += n.grad.at(i);
    }, "reshape");
}

Value Graph::slice_rows(Value x, Index start, Index len) {
    const Tensor& tx = val(x);
    require_2d(tx, "slice_rows");
    if (start < 0 || len <= 0 || start + len > tx.rows()) throw ShapeError("slice_rows out of range");
    const Index d = tx.cols();
    Tensor out({len, d});
    for (Index r = 0; r < len; ++r)
        for (Index c = 0; c < d; ++c) out.at(r, c) = tx.at(start + r, c);
    return make(std::move(out), {x.id}, [start](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        Tensor& gx = g.grad_buf(n.parents[0]);
        for (Index r = 0; r < gy.rows(); ++r)
            for (Index c = 0; c < gy.cols(); ++c) gx.at(start + r, c) += gy.at(r, c);
    }, "slice_rows");
}

Value Graph::slice_cols(Value x, Index start, Index len) {
    const Tensor& tx = val(x);
    require_2d(tx, "slice_cols");
    if (start < 0 || len <= 0 || start + len > tx.cols()) throw ShapeError("slice_cols out of range");
    Tensor out({tx.rows(), len});
    for (Index r = 0; r < tx.rows(); ++r)
        for (Index c = 0; c < len; ++c) out.at(r, c) = tx.at(r, start + c);
    return make(std::move(out), {x.id}, [start](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        Tensor& gx = g.grad_buf(n.parents[0]);
        for (Index r = 0; r < gy.rows(); ++r)
            for (Index c = 0; c < gy.cols(); ++c) gx.at(r, start + c) += gy.at(r, c);
    }, "slice_cols");
}

Value Graph::concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const Index d = val(parts[0]).cols();
    Index total = 0;
    for (Value p : parts) {
        require_2d(val(p), "concat_rows");
        if (val(p).cols() != d) throw ShapeError("concat_rows: column mismatch");
        total += val(p).rows();
    }
    Tensor out({total, d});
    std::vector<int> ids;
    auto offsets = std::make_shared<std::vector<Index>>();
    Index row = 0;
    for (Value p : parts) {
        const Tensor& tp = val(p);
        offsets->push_back(row);
        for (Index r = 0; r < tp.rows(); ++r)
            for (Index c = 0; c < d; ++c) out.at(row + r, c) = tp.at(r, c);
        row += tp.rows();
        ids.push_back(p.id);
    }
    return make(std::move(out), std::move(ids), [offsets](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
            if (!g.node(n.parents[pi]).requires_grad) continue;
            Tensor& gp = g.grad_buf(n.parents[pi]);
            const Index off = (*offsets)[pi];
            for (Index r = 0; r < gp.rows(); ++r)
                for (Index c = 0; c < gp.cols(); ++c) gp.at(r, c) += gy.at(off + r, c);
        }
    }, "concat_rows");
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const Index rows = val(parts[0]).rows();
    Index total = 0;
    for (Value p : parts) {
        require_2d(val(p), "concat_cols");
        if (val(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
        total += val(p).cols();
    }
    Tensor out({rows, total});
    std::vector<int> ids;
    auto offsets = std::make_shared<std::vector<Index>>();
    Index col = 0;
    for (Value p : parts) {
        const Tensor& tp = val(p);
        offsets->push_back(col);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < tp.cols(); ++c) out.at(r, col + c) = tp.at(r, c);
        col += tp.cols();
        ids.push_back(p.id);
    }
    return make(std::move(out), std::move(ids), [offsets](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
            if (!g.node(n.parents[pi]).requires_grad) continue;
            Tensor& gp = g.grad_buf(n.parents[pi]);
            const Index off = (*offsets)[pi];
            for (Index r = 0; r < gp.rows(); ++r)
                for (Index c = 0; c < gp.cols(); ++c) gp.at(r, c) += gy.at(r, off + c);
        }
    }, "concat_cols");
}

Value Graph::gather(Value x, std::shared_ptr<const std::vector<Index>> perm, Shape out_shape) {
    const Tensor& tx = val(x);
    if (static_cast<Index>(perm->size()) != shape_numel(out_shape) ||
        static_cast<Index>(perm->size()) != tx.numel())
        throw ShapeError("gather: permutation size mismatch");
    Tensor out(std::move(out_shape));
    for (Index i = 0; i < out.numel(); ++i) out.at(i) = tx.at((*perm)[static_cast<std::size_t>(i)]);
    return make(std::move(out), {x.id}, [perm](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& gx = g.grad_buf(n.parents[0]);
        for (Index i = 0; i < n.grad.numel(); ++i)
            gx.at((*perm)[static_cast<std::size_t>(i)]) += n.grad.at(i);
    }, "gather");
}

Value Graph::sum_all(Value x) {
    const Tensor& tx = val(x);
    double s = 0.0;
    for (Index i = 0; i < tx.numel(); ++i) s += tx.at(i);
    return make(Tensor({1}, {s}), {x.id}, [](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& gx = g.grad_buf(n.parents[0]);
        const double gy = n.grad.at(0);
        for (Index i = 0; i < gx.numel(); ++i) gx.at(i) += gy;
    }, "sum_all");
}

Value Graph::mean_all(Value x) {
    const Tensor& tx = val(x);
    double s = 0.0;
    for (Index i = 0; i < tx.numel(); ++i) s += tx.at(i);
    const double inv_n = 1.0 / static_cast<double>(tx.numel());
    return make(Tensor({1}, {s * inv_n}), {x.id}, [inv_n](Graph& g, int id) {
        const Node& n = g.node(id);
        Tensor& gx = g.grad_buf(n.parents[0]);
        const double gy = n.grad.at(0) * inv_n;
        for (Index i = 0; i < gx.numel(); ++i) gx.at(i) += gy;
    }, "mean_all");
}

Value Graph::rope(Value x, std::shared_ptr<const RopeTable> table) {
    const Tensor& tx = val(x);
    require_2d(tx, "rope");
    if (tx.rows() != table->n_rows || tx.cols() != 2 * table->n_pairs)
        throw ShapeError("rope: table does not match " + tx.shape_str());
    const Index np = table->n_pairs;
    Tensor out(tx.shape());
    for (Index r = 0; r < tx.rows(); ++r) {
        for (Index p = 0; p < np; ++p) {
            const double c = table->cosv[static_cast<std::size_t>(r * np + p)];
            const double s = table->sinv[static_cast<std::size_t>(r * np + p)];
            const double x0 = tx.at(r, 2 * p);
            const double x1 = tx.at(r, 2 * p + 1);
            out.at(r, 2 * p) = c * x0 - s * x1;
            out.at(r, 2 * p + 1) = s * x0 + c * x1;
        }
    }
    return make(std::move(out), {x.id}, [table](Graph& g, int id) {
        const Node& n = g.node(id);
        const Tensor& gy = n.grad;
        Tensor& gx = g.grad_buf(n.parents[0]);
        const Index np = table->n_pairs;
        for (Index r = 0; r < gy.rows(); ++r) {
            for (Index p = 0; p < np; ++p) {
                const double c = table->cosv[static_cast<std::size_t>(r * np + p)];
                const double s = table->sinv[static_cast<std::size_t>(r * np + p)];
                const double g0 = gy.at(r, 2 * p);
                const double g1 = gy.at(r, 2 * p + 1);
                gx.at(r, 2 * p) += c * g0 + s * g1;
                gx.at(r, 2 * p + 1) += -s * g0 + c * g1;
            }
        }
    }, "rope");
}

Value Graph::attention(Value q, Value k, Value v, std::optional<Value> mask) {
    const Tensor& tq = val(q);
    const Tensor& tk = val(k);
    const Tensor& tv = val(v);
    require_2d(tq, "attention");
    require_2d(tk, "attention");
    require_2d(tv, "attention");
    if (tq.cols() != tk.cols())
        throw ShapeError("attention: head dim mismatch " + tq.shape_str() + " vs " + tk.shape_str());
    if (tk.rows() != tv.rows()) throw ShapeError("attention: key/value count mismatch");
    Value logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(tq.cols())));
    if (mask) logits = add(logits, *mask);
    return matmul(softmax_rows(logits), v);
}

void Graph::backward(Value root) {
    Node& r = node(root);
    if (r.value.numel() != 1) throw ShapeError("backward: root must be a scalar");
    if (!r.requires_grad) return;
    grad_buf(root.id).at(0) = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.has_grad || !n.backprop) continue;
        n.backprop(*this, id);
    }
}

Value linear(Graph& g, Value x, Value w, Value b) {
    return g.add_rowvec(g.matmul(x, w), b);
}

Value layernorm(Graph& g, Value x, Value scale, Value shift, double eps) {
    return g.add_rowvec(g.mul_rowvec(g.layernorm_rows(x, eps), scale), shift);
}

Value mse(Graph& g, Value a, Value b) {
    Value d = g.sub(a, b);
    return g.mean_all(g.mul(d, d));
}

}  // namespace icflow
