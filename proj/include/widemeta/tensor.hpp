#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "widemeta/errors.hpp"

namespace widemeta {

// All numeric buffers are 64-byte aligned so Eigen's kernel peeling sees the
// same address phase for every allocation; this is what makes repeated runs
// bit-identical under vectorized builds.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <typename U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Align}));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{Align}); }
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

// Dense row-major tensor. Copies are shallow (shared storage); use clone()
// for an independent buffer. The tape fields are bookkeeping set by ops when
// a forward pass records onto a Tape; they never affect values.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::shared_ptr<Buffer<T>> data;

    bool requires_grad = false;

    // Node handle into the tape of the current forward pass. Valid only while
    // tape_epoch matches that tape's epoch.
    mutable int node = -1;
    mutable std::uint64_t tape_epoch = 0;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)),
          data(std::make_shared<Buffer<T>>(count(shape), T{0})) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> values)
        : shape(std::move(s)), data(std::make_shared<Buffer<T>>(values.begin(), values.end())) {
        if (count(shape) != data->size())
            throw DimensionError("tensor data length " + std::to_string(data->size()) +
                                 " does not match shape product " + std::to_string(count(shape)));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data->begin(), t.data->end(), v);
        return t;
    }

    std::size_t size() const { return data ? data->size() : 0; }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T& at(std::size_t i) { return (*data)[i]; }
    T at(std::size_t i) const { return (*data)[i]; }

    bool is_scalar() const { return size() == 1; }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.data = data ? std::make_shared<Buffer<T>>(*data) : nullptr;
        t.requires_grad = requires_grad;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.data = std::make_shared<Buffer<U>>(size());
        for (std::size_t i = 0; i < size(); ++i) (*t.data)[i] = static_cast<U>((*data)[i]);
        t.requires_grad = requires_grad;
        return t;
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Reverse-mode tape for one forward pass. Ops append nodes in execution
// order, so reverse index order is a valid topological backward order.
// A tape is consumed by one backward() and cannot be reused.
template <typename T>
class Tape {
  public:
    using BackwardFn = std::function<void(const Buffer<T>& grad_out, Tape& tape)>;

    Tape() : epoch_(next_epoch()) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t epoch() const { return epoch_; }
    bool consumed() const { return consumed_; }

    // Node id of t on this tape; registers a leaf for requires_grad tensors
    // seen for the first time. Returns -1 for untracked constants.
    int node_of(const Tensor<T>& t) {
        if (t.tape_epoch == epoch_ && t.node >= 0) return t.node;
        if (!t.requires_grad) return -1;
        int id = add_node(t.size(), {}, nullptr);
        t.node = id;
        t.tape_epoch = epoch_;
        return id;
    }

    // Records an op output. Returns the new node id and stamps `out`.
    int record(const Tensor<T>& out, std::vector<int> parents, BackwardFn fn) {
        int id = add_node(out.size(), std::move(parents), std::move(fn));
        out.node = id;
        out.tape_epoch = epoch_;
        return id;
    }

    bool tracks(const Tensor<T>& t) const {
        return t.tape_epoch == epoch_ && t.node >= 0;
    }

    // Accumulates into a node's gradient buffer, allocating lazily.
    void add_grad(int node, const T* g, std::size_t n) {
        auto& buf = nodes_[static_cast<std::size_t>(node)].grad;
        if (buf.empty()) buf.assign(n, T{0});
        for (std::size_t i = 0; i < n; ++i) buf[i] += g[i];
    }

    Buffer<T>& grad_buffer(int node, std::size_t n) {
        auto& buf = nodes_[static_cast<std::size_t>(node)].grad;
        if (buf.empty()) buf.assign(n, T{0});
        return buf;
    }

    // Gradient of a leaf after backward(); empty if never reached.
    const Buffer<T>& grad(int node) const {
        return nodes_[static_cast<std::size_t>(node)].grad;
    }

    // Reverse sweep seeded with d(loss)/d(loss) = 1. Single use.
    void run_backward(const Tensor<T>& loss) {
        if (!loss.is_scalar()) throw ContractError("backward requires a scalar loss");
        if (!tracks(loss)) throw ContractError("loss is not on the active tape");
        if (consumed_) throw ContractError("tape already consumed by a previous backward");
        consumed_ = true;
        nodes_[static_cast<std::size_t>(loss.node)].grad.assign(1, T{1});
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (n.grad.empty() || !n.backward) continue;
            n.backward(n.grad, *this);
        }
    }

  private:
    struct Node {
        std::size_t size;
        std::vector<int> parents;
        BackwardFn backward;  // null for leaves
        Buffer<T> grad;
    };

    int add_node(std::size_t size, std::vector<int> parents, BackwardFn fn) {
        nodes_.push_back(Node{size, std::move(parents), std::move(fn), {}});
        return static_cast<int>(nodes_.size()) - 1;
    }

    static std::uint64_t next_epoch() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1);
    }

    std::vector<Node> nodes_;
    std::uint64_t epoch_;
    bool consumed_ = false;
};

}  // namespace widemeta
