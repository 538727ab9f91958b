#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "logrecon/autodiff.hpp"
#include "logrecon/projector.hpp"

namespace logrecon {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_4d(const Tensor& t, const char* what) {
  if (t.ndim() != 4) throw std::invalid_argument(std::string(what) + ": expected a 4-axis tensor, got " + t.shape_string());
}

// Column buffer of shape (channels*K*K) x (H*W) for one sample.
void im2col(const Real* src, int channels, int h, int w, Real* cols) {
  constexpr int k = kConvKernel, pad = kConvKernel / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const Real* plane = src + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Real* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          Real* out = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(out, out + w, 0.0f);
            continue;
          }
          std::fill(out, out + x0, 0.0f);
          std::memcpy(out + x0, plane + static_cast<std::size_t>(sy) * w + x0 + dx,
                      sizeof(Real) * static_cast<std::size_t>(x1 - x0));
          std::fill(out + x1, out + w, 0.0f);
        }
      }
    }
  }
}

void col2im_add(const Real* cols, int channels, int h, int w, Real* dst) {
  constexpr int k = kConvKernel, pad = kConvKernel / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    Real* plane = dst + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Real* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const Real* in = row + static_cast<std::size_t>(y) * w;
          Real* out = plane + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x0; x < x1; ++x) out[x] += in[x];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& wt = weight.value();
  const Tensor& b = bias.value();
  require_4d(x, "conv2d input");
  require_4d(wt, "conv2d weight");
  if (wt.dim(2) != kConvKernel || wt.dim(3) != kConvKernel)
    throw std::invalid_argument("conv2d: kernel must be 7x7, got " + wt.shape_string());
  if (wt.dim(1) != x.dim(1))
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(wt.dim(1)) + " input channels, input has " +
                                std::to_string(x.dim(1)));
  if (b.ndim() != 1 || b.dim(0) != wt.dim(0)) throw std::invalid_argument("conv2d: bias length must equal output channels");

  const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = wt.dim(0);
  const int patch = cin * kConvKernel * kConvKernel;
  const int hw = h * w;
  Tensor out({batch, cout, h, w});
  RealBuffer cols(static_cast<std::size_t>(patch) * hw);
  ConstMatrixMap wmat(wt.data.data(), cout, patch);
  Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> bvec(b.data.data(), cout);
  for (int n = 0; n < batch; ++n) {
    im2col(x.data.data() + static_cast<std::size_t>(n) * cin * hw, cin, h, w, cols.data());
    MatrixMap omat(out.data.data() + static_cast<std::size_t>(n) * cout * hw, cout, hw);
    omat.noalias() = wmat * ConstMatrixMap(cols.data(), patch, hw);
    omat.colwise() += bvec;
  }

  return input.tape()->record(std::move(out), {input.id(), weight.id(), bias.id()}, [=](Tape& tape, int self) {
    const Tensor& gout = tape.grad(self);
    const Tensor& xv = tape.value(input.id());
    const Tensor& wv = tape.value(weight.id());
    const bool need_x = tape.requires_grad(input.id());
    const bool need_w = tape.requires_grad(weight.id());
    const bool need_b = tape.requires_grad(bias.id());
    RealBuffer cbuf(static_cast<std::size_t>(patch) * hw);
    ConstMatrixMap wm(wv.data.data(), cout, patch);
    for (int n = 0; n < batch; ++n) {
      ConstMatrixMap g(gout.data.data() + static_cast<std::size_t>(n) * cout * hw, cout, hw);
      if (need_w) {
        im2col(xv.data.data() + static_cast<std::size_t>(n) * cin * hw, cin, h, w, cbuf.data());
        MatrixMap gw(tape.grad_buffer(weight.id()).data.data(), cout, patch);
        gw.noalias() += g * ConstMatrixMap(cbuf.data(), patch, hw).transpose();
      }
      if (need_b) {
        Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> gb(tape.grad_buffer(bias.id()).data.data(), cout);
        gb += g.rowwise().sum();
      }
      if (need_x) {
        MatrixMap gcols(cbuf.data(), patch, hw);
        gcols.noalias() = wm.transpose() * g;
        col2im_add(cbuf.data(), cin, h, w, tape.grad_buffer(input.id()).data.data() + static_cast<std::size_t>(n) * cin * hw);
      }
    }
  });
}

Var prelu(Var input, Var slope) {
  const Tensor& x = input.value();
  const Tensor& a = slope.value();
  if (x.ndim() < 2) throw std::invalid_argument("prelu: input needs a channel axis");
  if (a.ndim() != 1 || a.dim(0) != x.dim(1)) throw std::invalid_argument("prelu: slope length must equal channel count");
  const int batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = x.numel() / (static_cast<std::size_t>(batch) * channels);
  Tensor out(x.shape);
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      const Real ac = a.data[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) {
        const Real v = x.data[off + i];
        out.data[off + i] = v >= 0.0f ? v : ac * v;
      }
    }
  return input.tape()->record(std::move(out), {input.id(), slope.id()}, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    const Tensor& xv = tape.value(input.id());
    const Tensor& av = tape.value(slope.id());
    const bool need_x = tape.requires_grad(input.id());
    const bool need_a = tape.requires_grad(slope.id());
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
        const Real ac = av.data[static_cast<std::size_t>(c)];
        if (need_x) {
          Real* gx = tape.grad_buffer(input.id()).data.data() + off;
          for (std::size_t i = 0; i < plane; ++i) gx[i] += xv.data[off + i] >= 0.0f ? g.data[off + i] : ac * g.data[off + i];
        }
        if (need_a) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i)
            if (xv.data[off + i] < 0.0f) acc += static_cast<double>(g.data[off + i]) * xv.data[off + i];
          tape.grad_buffer(slope.id()).data[static_cast<std::size_t>(c)] += static_cast<Real>(acc);
        }
      }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) throw std::invalid_argument("add: shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
  Tensor out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
  return a.tape()->record(std::move(out), {a.id(), b.id()}, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    for (int id : {a.id(), b.id()}) {
      if (!tape.requires_grad(id)) continue;
      auto& dst = tape.grad_buffer(id).data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
    }
  });
}

Var scale(Var a, Real factor) {
  Tensor out(a.value().shape);
  const auto& src = a.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = factor * src[i];
  return a.tape()->record(std::move(out), {a.id()}, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    auto& dst = tape.grad_buffer(a.id()).data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g.data[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = parts.front().value();
  require_4d(first, "concat_channels");
  const int batch = first.dim(0), h = first.dim(2), w = first.dim(3);
  int channels = 0;
  std::vector<int> ids;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    require_4d(t, "concat_channels");
    if (t.dim(0) != batch || t.dim(2) != h || t.dim(3) != w)
      throw std::invalid_argument("concat_channels: incompatible shapes " + first.shape_string() + " and " + t.shape_string());
    offsets.push_back(channels);
    channels += t.dim(1);
    ids.push_back(p.id());
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({batch, channels, h, w});
  for (int n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Tensor& t = parts[i].value();
      const std::size_t len = static_cast<std::size_t>(t.dim(1)) * plane;
      std::copy_n(t.data.data() + n * len, len,
                  out.data.data() + (static_cast<std::size_t>(n) * channels + offsets[i]) * plane);
    }
  return parts.front().tape()->record(std::move(out), ids, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tape.requires_grad(ids[i])) continue;
      Tensor& dst = tape.grad_buffer(ids[i]);
      const std::size_t len = static_cast<std::size_t>(dst.dim(1)) * plane;
      for (int n = 0; n < batch; ++n) {
        const Real* src = g.data.data() + (static_cast<std::size_t>(n) * channels + offsets[i]) * plane;
        Real* d = dst.data.data() + n * len;
        for (std::size_t k = 0; k < len; ++k) d[k] += src[k];
      }
    }
  });
}

Var slice_channels(Var input, int start, int count) {
  const Tensor& x = input.value();
  require_4d(x, "slice_channels");
  const int batch = x.dim(0), channels = x.dim(1);
  if (start < 0 || count < 1 || start + count > channels)
    throw std::invalid_argument("slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                ") outside " + std::to_string(channels) + " channels");
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out({batch, count, x.dim(2), x.dim(3)});
  for (int n = 0; n < batch; ++n)
    std::copy_n(x.data.data() + (static_cast<std::size_t>(n) * channels + start) * plane, count * plane,
                out.data.data() + static_cast<std::size_t>(n) * count * plane);
  return input.tape()->record(std::move(out), {input.id()}, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    Real* dst = tape.grad_buffer(input.id()).data.data();
    for (int n = 0; n < batch; ++n) {
      const Real* src = g.data.data() + static_cast<std::size_t>(n) * count * plane;
      Real* d = dst + (static_cast<std::size_t>(n) * channels + start) * plane;
      for (std::size_t k = 0; k < count * plane; ++k) d[k] += src[k];
    }
  });
}

Var sum(Var input) {
  double acc = 0.0;
  for (Real v : input.value().data) acc += v;
  Tensor out({1}, static_cast<Real>(acc));
  return input.tape()->record(std::move(out), {input.id()}, [=](Tape& tape, int self) {
    const Real g = tape.grad(self).data[0];
    for (Real& d : tape.grad_buffer(input.id()).data) d += g;
  });
}

Var mse_loss(Var pred, Var target) {
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  if (p.shape != t.shape)
    throw std::invalid_argument("mse_loss: shape mismatch " + p.shape_string() + " vs " + t.shape_string());
  if (p.numel() == 0) throw std::invalid_argument("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = static_cast<double>(p.data[i]) - t.data[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.numel());
  Tensor out({1}, static_cast<Real>(acc / n));
  return pred.tape()->record(std::move(out), {pred.id(), target.id()}, [=](Tape& tape, int self) {
    const double g = tape.grad(self).data[0];
    const Tensor& pv = tape.value(pred.id());
    const Tensor& tv = tape.value(target.id());
    const double k = 2.0 * g / n;
    if (tape.requires_grad(pred.id())) {
      auto& d = tape.grad_buffer(pred.id()).data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += static_cast<Real>(k * (static_cast<double>(pv.data[i]) - tv.data[i]));
    }
    if (tape.requires_grad(target.id())) {
      auto& d = tape.grad_buffer(target.id()).data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= static_cast<Real>(k * (static_cast<double>(pv.data[i]) - tv.data[i]));
    }
  });
}

namespace {

void apply_planes(const Tensor& in, const std::vector<std::shared_ptr<const FanBeamGeometry>>& geoms,
                  ProjectDirection direction, Tensor& out) {
  const int planes = in.dim(0) * in.dim(1);
  const std::size_t in_plane = in.numel() / static_cast<std::size_t>(planes);
  const std::size_t out_plane = out.numel() / static_cast<std::size_t>(planes);
  for (int p = 0; p < planes; ++p) {
    const FanBeamGeometry& g = *geoms[geoms.size() == 1 ? 0 : static_cast<std::size_t>(p)];
    std::span<const Real> src(in.data.data() + p * in_plane, in_plane);
    std::span<Real> dst(out.data.data() + p * out_plane, out_plane);
    if (direction == ProjectDirection::Forward)
      forward_project(src, g, dst);
    else
      back_project(src, g, dst);
  }
}

}  // namespace

Var project_node(Var input, std::vector<std::shared_ptr<const FanBeamGeometry>> geoms, ProjectDirection direction) {
  const Tensor& x = input.value();
  require_4d(x, "project_node");
  const int planes = x.dim(0) * x.dim(1);
  if (geoms.empty() || (geoms.size() != 1 && geoms.size() != static_cast<std::size_t>(planes)))
    throw std::invalid_argument("project_node: need one geometry or one per (batch, channel) plane");
  const FanBeamGeometry& g0 = *geoms.front();
  for (const auto& g : geoms) {
    if (!g) throw std::invalid_argument("project_node: null geometry");
    if (!(g->grid() == g0.grid()) || g->n_sources() != g0.n_sources() || g->n_detector_bins() != g0.n_detector_bins())
      throw std::invalid_argument("project_node: geometries in one call must share grid and sinogram shape");
  }
  const int ny = g0.grid().n_y, nx = g0.grid().n_x, ns = g0.n_sources(), nd = g0.n_detector_bins();
  std::vector<int> in_hw, out_hw;
  if (direction == ProjectDirection::Forward) {
    in_hw = {ny, nx};
    out_hw = {ns, nd};
  } else {
    in_hw = {ns, nd};
    out_hw = {ny, nx};
  }
  if (x.dim(2) != in_hw[0] || x.dim(3) != in_hw[1])
    throw std::invalid_argument("project_node: spatial shape " + x.shape_string() + " does not match geometry");
  Tensor out({x.dim(0), x.dim(1), out_hw[0], out_hw[1]});
  apply_planes(x, geoms, direction, out);
  const ProjectDirection reverse =
      direction == ProjectDirection::Forward ? ProjectDirection::Adjoint : ProjectDirection::Forward;
  return input.tape()->record(std::move(out), {input.id()}, [=](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    Tensor back(tape.value(input.id()).shape);
    apply_planes(g, geoms, reverse, back);
    auto& d = tape.grad_buffer(input.id()).data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += back.data[i];
  });
}

}  // namespace logrecon
