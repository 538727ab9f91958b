#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "logrecon/geometry.hpp"

namespace logrecon {

// Network scalar. The library is normally built with float; gradient checks
// build a second copy with LOGRECON_REAL=double.
#ifndef LOGRECON_REAL
#define LOGRECON_REAL float
#endif
using Real = LOGRECON_REAL;

// 64-byte aligned storage. Eigen's vectorised reductions peel to the first
// aligned element, so unaligned buffers make results depend on the address.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using RealBuffer = std::vector<Real, AlignedAllocator<Real>>;

/// Dense array of up to four axes (batch, channel, height, width).
struct Tensor {
  std::vector<int> shape;
  RealBuffer data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, Real fill = 0);
  Tensor(std::vector<int> shape_, RealBuffer values);

  static std::size_t count(const std::vector<int>& shape);
  std::size_t numel() const { return data.size(); }
  int dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t ndim() const { return shape.size(); }
  std::string shape_string() const;

  bool operator==(const Tensor&) const = default;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<int>& shape() const { return value().shape; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records one forward pass; nodes are appended in evaluation order so the
/// node list is already a topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends a node computed from `inputs`. `backward` reads this node's gradient
  // and accumulates into the inputs that require gradients.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  // Gradient buffer of an input, allocated on first use; callers accumulate into it.
  Tensor& grad_buffer(int id);

  /// Reverse accumulation from a scalar node. Gradients from any previous call are
  /// cleared first, so repeated calls give identical results.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. Shapes follow the (batch, channel, height, width) layout.

inline constexpr int kConvKernel = 7;

/// Same-size 2D cross-correlation with zero padding kernel/2 and stride 1.
Var conv2d(Var input, Var weight, Var bias);
Var prelu(Var input, Var slope);
Var add(Var a, Var b);
Var scale(Var a, Real factor);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(Var input, int start, int count);
Var sum(Var input);
Var mse_loss(Var pred, Var target);

enum class ProjectDirection { Forward, Adjoint };

/// Applies the ray transform (or its adjoint) to every (batch, channel) plane.
/// `geoms` holds one geometry per plane in batch-major order, or a single entry
/// shared by all planes.
Var project_node(Var input, std::vector<std::shared_ptr<const FanBeamGeometry>> geoms,
                 ProjectDirection direction);

/// Named learnable tensors in a stable (lexicographic) order.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t size() const { return params_.size(); }
  std::size_t total_count() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, Tensor> params_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Leaves for every parameter, recorded as gradient-requiring variables.
std::map<std::string, Var> bind_parameters(Tape& tape, const ParameterSet& params);

/// Gradients of bound parameters after Tape::backward; unused parameters get zeros.
GradientMap collect_gradients(const std::map<std::string, Var>& bound);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t step = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws std::domain_error naming the first
/// parameter with a non-finite gradient, leaving params and state untouched.
void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, const AdamOptions& opts);

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min);

/// Checkpoint provenance and model tags stored alongside the parameters.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;
  std::map<std::string, std::string> tags;
};

// Layout: "RVFP", u32 version, u64 seed, u64 spec hash, u32 tag count, tags as
// (u32 len, bytes) pairs, u32 parameter count, manifest entries
// (u32 name len, name, u32 ndim, u32 dims..., u64 offset in floats), then all
// values as little-endian float32 in manifest order (converted from Real).
void save_checkpoint(const std::string& path, const ParameterSet& params, const CheckpointInfo& info);
ParameterSet load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

// FNV-1a, used for provenance hashes of configuration text.
std::uint64_t fnv1a(const std::string& text);

}  // namespace logrecon
