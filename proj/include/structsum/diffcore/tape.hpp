#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "structsum/diffcore/tensor.hpp"

namespace structsum::diffcore {

// A learned tensor. Its gradient buffer is filled directly by Tape::backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

// Owns every parameter of a model in registration order. The order is the
// checkpoint order and the optimizer order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter* add(const std::string& name, Tensor value) {
    if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    by_name_[name] = params_.back().get();
    return params_.back().get();
  }

  // uniform(-scale, scale) weights.
  Parameter* add_uniform(const std::string& name, Shape shape, std::mt19937_64& rng, double scale = 0.1) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& v : t.values()) v = dist(rng);
    return add(name, std::move(t));
  }

  Parameter* add_zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape))); }

  Parameter* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, std::uint32_t self, const Tensor& grad_out)>;

// Dynamic reverse-mode tape, rebuilt for every forward pass. Nodes are
// appended in evaluation order, so parents always precede children.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false, nullptr});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  // Leaf that collects a gradient in the tape itself (read it with grad()).
  Var variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, true, nullptr});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  // Leaf bound to a parameter. Gradients flow straight into param.grad.
  // Binding the same parameter twice returns the same node.
  Var param(Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var(this, it->second);
    nodes_.push_back(Node{{}, {}, &p.value, &p.grad, true, nullptr});
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    bound_[&p] = id;
    return Var(this, id);
  }

  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, needs, needs ? std::move(backward) : nullptr});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, needs, needs ? std::move(backward) : nullptr});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const Tensor& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external_value ? *n.external_value : n.value;
  }

  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, allocated on first use.
  Tensor& grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.external_grad) return *n.external_grad;
    if (n.grad.size() != value(id).size() || n.grad.shape() != value(id).shape()) {
      n.grad = Tensor(value(id).shape());
    }
    return n.grad;
  }

  bool has_grad(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external_grad != nullptr || !n.grad.storage().empty();
  }

  // Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  // Parameter gradients accumulate on top of whatever they already hold.
  void backward(Var root) {
    if (root.value().size() != 1) {
      throw ShapeMismatch("backward() requires a scalar root, got " + shape_string(root.shape()));
    }
    if (!nodes_[root.id()].requires_grad) return;
    grad(root.id())[0] += 1.0;
    for (std::int64_t i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.storage().empty()) continue;
      n.backward(*this, static_cast<std::uint32_t>(i), n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Drops every node recorded after `mark`. Vars past the mark become invalid.
  void rewind(std::size_t mark) {
    while (nodes_.size() > mark) {
      const Node& n = nodes_.back();
      if (n.external_value) {
        for (auto it = bound_.begin(); it != bound_.end(); ++it) {
          if (it->second == nodes_.size() - 1) {
            bound_.erase(it);
            break;
          }
        }
      }
      nodes_.pop_back();
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    const Tensor* external_value;
    Tensor* external_grad;
    bool requires_grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> bound_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace structsum::diffcore
