#include "mcqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mcqa {

namespace {

thread_local Graph* g_current_graph = nullptr;

std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

bool should_record(std::initializer_list<const Tensor*> operands) {
    if (!Graph::current()) return false;
    for (const Tensor* t : operands)
        if (t->requires_grad()) return true;
    return false;
}

std::vector<double>& grad_buf(const std::shared_ptr<detail::TensorImpl>& t) { return t->grad; }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    if (n != data.size())
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Graph::Scope::Scope(Graph& g) : prev_(g_current_graph) { g_current_graph = &g; }
Graph::Scope::~Scope() { g_current_graph = prev_; }

Graph* Graph::current() { return g_current_graph; }

void Graph::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
    for (auto& node : nodes_) {
        if (node.result->requires_grad && node.result->grad.empty())
            node.result->grad.assign(node.result->data.size(), 0.0);
        for (auto& op : node.operands)
            if (op->requires_grad && op->grad.empty()) op->grad.assign(op->data.size(), 0.0);
    }
    if (!loss.requires_grad())
        throw ContractError("backward: loss is not reachable from recorded operations");
    auto loss_impl = loss.impl();
    if (loss_impl->grad.empty()) loss_impl->grad.assign(1, 0.0);
    loss_impl->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

// --- op helpers -----------------------------------------------------------

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

void record_op(const Tensor& result, std::vector<Tensor> operands, std::function<void()> bw) {
    Graph::Node node;
    node.result = result.impl();
    for (auto& t : operands) node.operands.push_back(t.impl());
    node.backward = std::move(bw);
    Graph::current()->record(std::move(node));
}

void require_matrix(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace

// --- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += da[i * k + t] * db[t * n + j];
            out[i * n + j] = acc;
        }
    Tensor r({m, n}, std::move(out));
    if (should_record({&a, &b})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), ri = r.impl();
        record_op(r, {a, b}, [ai, bi, ri, m, k, n] {
            const auto& g = ri->grad;
            if (ai->requires_grad) {
                auto& ga = grad_buf(ai);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bi->data[t * n + j];
                        ga[i * k + t] += acc;
                    }
            }
            if (bi->requires_grad) {
                auto& gb = grad_buf(bi);
                for (std::size_t t = 0; t < k; ++t)
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i) acc += ai->data[i * k + t] * g[i * n + j];
                        gb[t * n + j] += acc;
                    }
            }
        });
    }
    return r;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    Tensor r({n, m}, std::move(out));
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri, m, n] {
            if (!ai->requires_grad) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += ri->grad[j * m + i];
        });
    }
    return r;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor r(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), ri = r.impl();
        record_op(r, {a, b}, [ai, bi, ri] {
            for (std::size_t i = 0; i < ri->grad.size(); ++i) {
                if (ai->requires_grad) ai->grad[i] += ri->grad[i];
                if (bi->requires_grad) bi->grad[i] += ri->grad[i];
            }
        });
    }
    return r;
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    Tensor r(a.shape(), std::move(out));
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri, c] {
            if (!ai->requires_grad) return;
            for (std::size_t i = 0; i < ri->grad.size(); ++i) ai->grad[i] += c * ri->grad[i];
        });
    }
    return r;
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    Tensor r(a.shape(), std::move(out));
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri] {
            if (!ai->requires_grad) return;
            for (std::size_t i = 0; i < ri->grad.size(); ++i)
                if (ai->data[i] > 0.0) ai->grad[i] += ri->grad[i];
        });
    }
    return r;
}

Tensor softmax(const Tensor& x) {
    if (x.numel() == 0) throw ContractError("softmax: empty input");
    double mx = x.data()[0];
    for (double v : x.data()) mx = std::max(mx, v);
    std::vector<double> out(x.numel());
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(x.data()[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    Tensor r(x.shape(), std::move(out));
    if (should_record({&x})) {
        r.set_requires_grad(true);
        auto xi = x.impl(), ri = r.impl();
        record_op(r, {x}, [xi, ri] {
            if (!xi->requires_grad) return;
            double dot = 0.0;
            for (std::size_t i = 0; i < ri->grad.size(); ++i) dot += ri->grad[i] * ri->data[i];
            for (std::size_t i = 0; i < ri->grad.size(); ++i)
                xi->grad[i] += ri->data[i] * (ri->grad[i] - dot);
        });
    }
    return r;
}

Tensor nll_loss(const Tensor& probs, std::size_t index) {
    if (index >= probs.numel())
        throw ContractError("nll_loss: index " + std::to_string(index) + " out of range");
    Tensor r = Tensor::scalar(-std::log(probs.data()[index]));
    if (should_record({&probs})) {
        r.set_requires_grad(true);
        auto pi = probs.impl(), ri = r.impl();
        record_op(r, {probs}, [pi, ri, index] {
            if (!pi->requires_grad) return;
            pi->grad[index] += -ri->grad[0] / pi->data[index];
        });
    }
    return r;
}

Tensor embed_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
    require_matrix(table, "embed_lookup");
    const std::size_t V = table.dim(0), d = table.dim(1);
    for (std::size_t id : ids)
        if (id >= V)
            throw ContractError("embed_lookup: id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(V) + ")");
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
    Tensor r({ids.size(), d}, std::move(out));
    if (!ids.empty() && should_record({&table})) {
        r.set_requires_grad(true);
        auto ti = table.impl(), ri = r.impl();
        auto ids_copy = ids;
        record_op(r, {table}, [ti, ri, ids_copy, d] {
            if (!ti->requires_grad) return;
            for (std::size_t i = 0; i < ids_copy.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    ti->grad[ids_copy[i] * d + j] += ri->grad[i * d + j];
        });
    }
    return r;
}

Tensor conv1d(const Tensor& seq, const Tensor& filters, const Tensor& bias) {
    require_matrix(seq, "conv1d");
    if (filters.rank() != 3)
        throw ShapeError("conv1d: filters must be rank 3, got " + shape_str(filters.shape()));
    const std::size_t L = seq.dim(0), din = seq.dim(1);
    const std::size_t w = filters.dim(0), fin = filters.dim(1), dout = filters.dim(2);
    if (w % 2 == 0) throw ConfigError("conv1d: window width must be odd, got " + std::to_string(w));
    if (fin != din)
        throw ShapeError("conv1d: input channels " + std::to_string(din) + " vs filter channels " +
                         std::to_string(fin));
    if (bias.numel() != dout) throw ShapeError("conv1d: bias length must equal d_out");
    const std::size_t h = w / 2;
    std::vector<double> pre(L * dout);
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t o = 0; o < dout; ++o) {
            double acc = bias.data()[o];
            for (std::size_t dt = 0; dt < w; ++dt) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(h);
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                for (std::size_t i = 0; i < din; ++i)
                    acc += seq.data()[static_cast<std::size_t>(s) * din + i] *
                           filters.data()[(dt * din + i) * dout + o];
            }
            pre[t * dout + o] = acc;
        }
    std::vector<double> out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    Tensor r({L, dout}, std::move(out));
    if (should_record({&seq, &filters, &bias})) {
        r.set_requires_grad(true);
        auto si = seq.impl(), fi = filters.impl(), bi = bias.impl(), ri = r.impl();
        auto pre_copy = std::move(pre);
        record_op(r, {seq, filters, bias}, [si, fi, bi, ri, pre_copy, L, din, w, dout, h] {
            for (std::size_t t = 0; t < L; ++t)
                for (std::size_t o = 0; o < dout; ++o) {
                    if (pre_copy[t * dout + o] <= 0.0) continue;
                    const double g = ri->grad[t * dout + o];
                    if (g == 0.0) continue;
                    if (bi->requires_grad) bi->grad[o] += g;
                    for (std::size_t dt = 0; dt < w; ++dt) {
                        const std::ptrdiff_t s =
                            static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(h);
                        if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                        for (std::size_t i = 0; i < din; ++i) {
                            const std::size_t sidx = static_cast<std::size_t>(s) * din + i;
                            const std::size_t fidx = (dt * din + i) * dout + o;
                            if (fi->requires_grad) fi->grad[fidx] += g * si->data[sidx];
                            if (si->requires_grad) si->grad[sidx] += g * fi->data[fidx];
                        }
                    }
                }
        });
    }
    return r;
}

Tensor row_max(const Tensor& a) {
    require_matrix(a, "row_max");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m);
    std::vector<std::size_t> arg(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (a.data()[i * n + j] > a.data()[i * n + best]) best = j;
        arg[i] = best;
        out[i] = a.data()[i * n + best];
    }
    Tensor r({m, 1}, std::move(out));
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri, arg, n] {
            if (!ai->requires_grad) return;
            for (std::size_t i = 0; i < arg.size(); ++i) ai->grad[i * n + arg[i]] += ri->grad[i];
        });
    }
    return r;
}

Tensor max_all(const Tensor& a) {
    if (a.numel() == 0) throw ContractError("max_all: empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.numel(); ++i)
        if (a.data()[i] > a.data()[best]) best = i;
    Tensor r = Tensor::scalar(a.data()[best]);
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri, best] {
            if (ai->requires_grad) ai->grad[best] += ri->grad[0];
        });
    }
    return r;
}

Tensor mean_rows(const Tensor& a) {
    require_matrix(a, "mean_rows");
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (m == 0) throw ContractError("mean_rows: no rows");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
    for (double& v : out) v /= static_cast<double>(m);
    Tensor r({1, n}, std::move(out));
    if (should_record({&a})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), ri = r.impl();
        record_op(r, {a}, [ai, ri, m, n] {
            if (!ai->requires_grad) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    ai->grad[i * n + j] += ri->grad[j] / static_cast<double>(m);
        });
    }
    return r;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const std::size_t n = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.dim(1) != n) throw ShapeError("concat_rows: column counts differ");
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    Tensor r({rows, n}, std::move(out));
    bool rec = Graph::current() != nullptr;
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    if (rec && any_grad) {
        r.set_requires_grad(true);
        auto ri = r.impl();
        std::vector<Impl> impls;
        for (const auto& p : parts) impls.push_back(p.impl());
        Graph::Node node;
        node.result = ri;
        node.operands = impls;
        node.backward = [ri, impls] {
            std::size_t off = 0;
            for (const auto& pi : impls) {
                const std::size_t sz = pi->data.size();
                if (pi->requires_grad)
                    for (std::size_t i = 0; i < sz; ++i) pi->grad[i] += ri->grad[off + i];
                off += sz;
            }
        };
        Graph::current()->record(std::move(node));
    }
    return r;
}

Tensor cosine_map(const Tensor& a, const Tensor& b) {
    require_matrix(a, "cosine_map");
    require_matrix(b, "cosine_map");
    if (a.dim(1) != b.dim(1)) throw ShapeError("cosine_map: embedding dims differ");
    const std::size_t L = a.dim(0), M = b.dim(0), d = a.dim(1);
    std::vector<double> na(L), nb(M);
    for (std::size_t i = 0; i < L; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += a.at2(i, k) * a.at2(i, k);
        na[i] = std::sqrt(s);
    }
    for (std::size_t j = 0; j < M; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += b.at2(j, k) * b.at2(j, k);
        nb[j] = std::sqrt(s);
    }
    std::vector<double> out(L * M, 0.0);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < M; ++j) {
            if (na[i] == 0.0 || nb[j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += a.at2(i, k) * b.at2(j, k);
            out[i * M + j] = dot / (na[i] * nb[j]);
        }
    Tensor r({L, M}, std::move(out));
    if (should_record({&a, &b})) {
        r.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), ri = r.impl();
        record_op(r, {a, b}, [ai, bi, ri, na, nb, L, M, d] {
            for (std::size_t i = 0; i < L; ++i)
                for (std::size_t j = 0; j < M; ++j) {
                    if (na[i] == 0.0 || nb[j] == 0.0) continue;
                    const double g = ri->grad[i * M + j];
                    if (g == 0.0) continue;
                    const double cos = ri->data[i * M + j];
                    for (std::size_t k = 0; k < d; ++k) {
                        const double av = ai->data[i * d + k], bv = bi->data[j * d + k];
                        if (ai->requires_grad)
                            ai->grad[i * d + k] +=
                                g * (bv / (na[i] * nb[j]) - cos * av / (na[i] * na[i]));
                        if (bi->requires_grad)
                            bi->grad[j * d + k] +=
                                g * (av / (na[i] * nb[j]) - cos * bv / (nb[j] * nb[j]));
                    }
                }
        });
    }
    return r;
}

// --- ParamStore -----------------------------------------------------------

void ParamStore::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ContractError("ParamStore: duplicate parameter " + name);
    t.set_requires_grad(true);
    params_.emplace(name, std::move(t));
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("ParamStore: unknown parameter " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
    if (!params_.count(name)) throw ContractError("ParamStore: unknown parameter " + name);
    if (frozen)
        frozen_.insert(name);
    else if (!pinned_.count(name))
        frozen_.erase(name);
}

void ParamStore::pin(const std::string& name) {
    if (!params_.count(name)) throw ContractError("ParamStore: unknown parameter " + name);
    pinned_.insert(name);
    frozen_.insert(name);
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& [k, v] : params_) out.params_.emplace(k, v.clone());
    for (auto& [k, v] : out.params_) v.set_requires_grad(true);
    out.frozen_ = frozen_;
    out.pinned_ = pinned_;
    return out;
}

void ParamStore::clear_grads() {
    for (auto& [k, v] : params_) v.clear_grad();
}

void sgd_step(ParamStore& store, double lr) {
    if (lr < 0.0) throw ConfigError("sgd_step: learning rate must be nonnegative");
    for (auto& [name, p] : store) {
        if (store.is_frozen(name)) continue;
        if (!p.has_grad()) throw ContractError("sgd_step: unfrozen parameter has no grad: " + name);
        auto& d = p.mutable_data();
        const auto& g = p.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
    }
    store.clear_grads();
}

}  // namespace mcqa
