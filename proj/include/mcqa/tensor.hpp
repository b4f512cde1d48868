#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcqa {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty means absent
};
}  // namespace detail

// Dense row-major 64-bit tensor. Value-like handle over shared storage so
// recorded operations can reference operands after the fact.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t numel() const { return impl_->data.size(); }

    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& mutable_data() { return impl_->data; }
    double item() const;
    double at(std::size_t i) const { return impl_->data[i]; }
    double at2(std::size_t r, std::size_t c) const { return impl_->data[r * impl_->shape[1] + c]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }
    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const { return impl_->grad; }
    void clear_grad() { impl_->grad.clear(); }

    // Deep copy; grad is not copied.
    Tensor clone() const;

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Tape of executed differentiable operations. Confined to one thread for its
// lifetime; made active via Graph::Scope.
class Graph {
public:
    struct Node {
        std::shared_ptr<detail::TensorImpl> result;
        std::vector<std::shared_ptr<detail::TensorImpl>> operands;
        std::function<void()> backward;
    };

    class Scope {
    public:
        explicit Scope(Graph& g);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Graph* prev_;
    };

    static Graph* current();

    void record(Node node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const { return nodes_.size(); }

    // Reverse-mode sweep from a scalar loss. Allocates zero grad buffers for
    // every grad-requiring tensor touched by the tape, then visits each
    // recorded node exactly once in reverse order.
    void backward(const Tensor& loss);

    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

// --- differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);

// Whole tensor treated as one distribution; shape preserved.
Tensor softmax(const Tensor& x);

// -log(probs[index]); probs is a probability vector.
Tensor nll_loss(const Tensor& probs, std::size_t index);

// Rows of `table` selected by `ids`; gradient scatters into those rows only.
Tensor embed_lookup(const Tensor& table, const std::vector<std::size_t>& ids);

// Same-padded 1-D convolution over the row axis followed by ReLU.
// seq: L x d_in, filters: w x d_in x d_out (w odd), bias: d_out.
Tensor conv1d(const Tensor& seq, const Tensor& filters, const Tensor& bias);

// Row-wise max over columns: m x n -> m x 1. Ties take the first column.
Tensor row_max(const Tensor& a);
// Max over all entries -> scalar.
Tensor max_all(const Tensor& a);

// Mean over rows: m x n -> 1 x n.
Tensor mean_rows(const Tensor& a);

// Vertical concatenation; all inputs share the column count.
Tensor concat_rows(const std::vector<Tensor>& parts);

// Entry (i,j) = cosine(a_i, b_j); zero-norm rows yield 0 with zero gradient.
Tensor cosine_map(const Tensor& a, const Tensor& b);

// --- parameters -----------------------------------------------------------

// Named parameter tensors with per-name freeze flags. Iteration is
// lexicographic, so updates and serialization are deterministic.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<std::string> names() const;

    void set_frozen(const std::string& name, bool frozen);
    bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }

    // Pinned parameters stay frozen under every freeze spec (pretrained
    // embeddings that must never update).
    void pin(const std::string& name);
    bool is_pinned(const std::string& name) const { return pinned_.count(name) != 0; }

    ParamStore clone() const;
    void clear_grads();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
    std::set<std::string> frozen_;
    std::set<std::string> pinned_;
};

// p <- p - lr * grad for every unfrozen parameter; frozen parameters are
// untouched bit for bit. Grads are cleared afterwards. An unfrozen parameter
// with no populated grad is a contract violation.
void sgd_step(ParamStore& store, double lr);

}  // namespace mcqa
