#include "logrecon/autodiff.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace logrecon {

Tensor::Tensor(std::vector<int> shape_, Real fill) : shape(std::move(shape_)), data(count(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, RealBuffer values) : shape(std::move(shape_)), data(std::move(values)) {
  if (data.size() != count(shape)) throw std::invalid_argument("Tensor: value count does not match shape " + shape_string());
}

std::size_t Tensor::count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  bool needs = false;
  for (int i : inputs) {
    if (i < 0 || i >= static_cast<int>(nodes_.size())) throw std::logic_error("Tape: input node does not precede output");
    needs = needs || nodes_[static_cast<std::size_t>(i)].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), needs ? std::move(backward) : nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.data.size() != n.value.data.size()) {
    // Never reached by backward: the gradient is zero.
    static thread_local Tensor zeros;
    zeros = Tensor(n.value.shape);
    return zeros;
  }
  return n.grad;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.data.size() != n.value.data.size()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to a different tape");
  const int root = loss.id();
  if (nodes_.at(static_cast<std::size_t>(root)).value.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                nodes_[static_cast<std::size_t>(root)].value.shape_string());
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(root).data[0] = 1.0f;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.data.empty()) continue;
    n.backward(*this, id);
  }
}

void ParameterSet::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second)
    throw std::invalid_argument("ParameterSet: duplicate parameter name '" + name + "'");
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterSet: no parameter named '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterSet: no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

std::map<std::string, Var> bind_parameters(Tape& tape, const ParameterSet& params) {
  std::map<std::string, Var> bound;
  for (const auto& [name, t] : params) bound.emplace(name, tape.variable(t));
  return bound;
}

GradientMap collect_gradients(const std::map<std::string, Var>& bound) {
  GradientMap grads;
  for (const auto& [name, v] : bound) grads.emplace(name, v.grad());
  return grads;
}

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, const AdamOptions& opts) {
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
    if (g->second.shape != p.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    for (Real x : g->second.data)
      if (!std::isfinite(x)) throw std::domain_error("adam_step: non-finite gradient in parameter '" + name + "'");
    auto m = state.m.find(name);
    if (m != state.m.end() && m->second.shape != p.shape)
      throw std::invalid_argument("adam_step: optimizer state shape mismatch for '" + name + "'");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(opts.beta1, t);
  const double bc2 = 1.0 - std::pow(opts.beta2, t);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = state.m.try_emplace(name, Tensor(p.shape));
    auto [vit, v_new] = state.v.try_emplace(name, Tensor(p.shape));
    auto& m = mit->second.data;
    auto& v = vit->second.data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i];
      const double mi = opts.beta1 * m[i] + (1.0 - opts.beta1) * gi;
      const double vi = opts.beta2 * v[i] + (1.0 - opts.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update = opts.lr * (mi / bc1) / (std::sqrt(vi / bc2) + opts.eps);
      p.data[i] = static_cast<Real>(p.data[i] - update);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be > 0");
  if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step outside [0, total_steps]");
  const double phase = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * phase));
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace logrecon
