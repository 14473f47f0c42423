#include "vsseg/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vsseg::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Var& x, size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_string(x.shape()));
  }
}

// Applies an elementwise map whose derivative depends on (input, output).
template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out = Tensor::zeros_like(x.value());
  const Tensor& in = x.value();
  for (int64_t i = 0; i < in.numel(); ++i) out[i] = fwd(in[i]);
  return make_result(std::move(out), {x}, [deriv](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * deriv(px.value[i], self.value[i]);
  });
}

struct ConvDims {
  int64_t n, ci, z, y, x;
  int64_t co, kz, ky, kx;
  int64_t zo, yo, xo;
  int64_t rows() const { return ci * kz * ky * kx; }
  int64_t in_plane() const { return z * y * x; }
  int64_t out_plane() const { return zo * yo * xo; }
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, const ConvGeometry& g) {
  ConvDims d{xs[0], xs[1], xs[2], xs[3], xs[4], ws[0], ws[2], ws[3], ws[4], 0, 0, 0};
  if (ws[1] != d.ci) {
    throw std::invalid_argument("conv3d: weight expects " + std::to_string(ws[1]) +
                                " input channels, got " + std::to_string(d.ci));
  }
  const Axes3 in{d.z, d.y, d.x};
  const Axes3 k{d.kz, d.ky, d.kx};
  Axes3 out{};
  for (size_t a = 0; a < 3; ++a) {
    if (g.stride[a] < 1 || g.padding[a] < 0) throw std::invalid_argument("conv3d: bad geometry");
    const int64_t span = in[a] + 2 * g.padding[a] - k[a];
    if (span < 0) {
      throw std::invalid_argument("conv3d: kernel larger than padded input " + shape_string(xs));
    }
    out[a] = span / g.stride[a] + 1;
  }
  d.zo = out[0];
  d.yo = out[1];
  d.xo = out[2];
  return d;
}

bool is_pointwise(const ConvDims& d, const ConvGeometry& g) {
  return d.kz == 1 && d.ky == 1 && d.kx == 1 && g.stride == Axes3{1, 1, 1} && g.padding == Axes3{0, 0, 0};
}

// Unfolds one batch item into a (rows x out_plane) matrix.
void im2col(const double* src, const ConvDims& d, const ConvGeometry& g, double* col) {
  const int64_t plane = d.out_plane();
  int64_t r = 0;
  for (int64_t c = 0; c < d.ci; ++c) {
    const double* chan = src + c * d.in_plane();
    for (int64_t kz = 0; kz < d.kz; ++kz) {
      for (int64_t ky = 0; ky < d.ky; ++ky) {
        for (int64_t kx = 0; kx < d.kx; ++kx, ++r) {
          double* dst = col + r * plane;
          for (int64_t oz = 0; oz < d.zo; ++oz) {
            const int64_t iz = oz * g.stride[0] - g.padding[0] + kz;
            for (int64_t oy = 0; oy < d.yo; ++oy) {
              const int64_t iy = oy * g.stride[1] - g.padding[1] + ky;
              double* row = dst + (oz * d.yo + oy) * d.xo;
              if (iz < 0 || iz >= d.z || iy < 0 || iy >= d.y) {
                std::fill(row, row + d.xo, 0.0);
                continue;
              }
              const double* line = chan + (iz * d.y + iy) * d.x;
              for (int64_t ox = 0; ox < d.xo; ++ox) {
                const int64_t ix = ox * g.stride[2] - g.padding[2] + kx;
                row[ox] = (ix >= 0 && ix < d.x) ? line[ix] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvDims& d, const ConvGeometry& g, double* dst) {
  const int64_t plane = d.out_plane();
  int64_t r = 0;
  for (int64_t c = 0; c < d.ci; ++c) {
    double* chan = dst + c * d.in_plane();
    for (int64_t kz = 0; kz < d.kz; ++kz) {
      for (int64_t ky = 0; ky < d.ky; ++ky) {
        for (int64_t kx = 0; kx < d.kx; ++kx, ++r) {
          const double* src = col + r * plane;
          for (int64_t oz = 0; oz < d.zo; ++oz) {
            const int64_t iz = oz * g.stride[0] - g.padding[0] + kz;
            if (iz < 0 || iz >= d.z) continue;
            for (int64_t oy = 0; oy < d.yo; ++oy) {
              const int64_t iy = oy * g.stride[1] - g.padding[1] + ky;
              if (iy < 0 || iy >= d.y) continue;
              const double* row = src + (oz * d.yo + oy) * d.xo;
              double* line = chan + (iz * d.y + iy) * d.x;
              for (int64_t ox = 0; ox < d.xo; ++ox) {
                const int64_t ix = ox * g.stride[2] - g.padding[2] + kx;
                if (ix >= 0 && ix < d.x) line[ix] += row[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geom) {
  require_rank(x, 5, "conv3d");
  require_rank(weight, 5, "conv3d");
  const ConvDims d = conv_dims(x.shape(), weight.shape(), geom);
  if (bias.defined() && (bias.value().rank() != 1 || bias.shape()[0] != d.co)) {
    throw std::invalid_argument("conv3d: bias shape mismatch");
  }
  const bool pointwise = is_pointwise(d, geom);
  Tensor out(Shape{d.n, d.co, d.zo, d.yo, d.xo});
  std::vector<double> col(pointwise ? 0 : static_cast<size_t>(d.rows() * d.out_plane()));
  ConstMapMat w(weight.value().data(), d.co, d.rows());
  for (int64_t n = 0; n < d.n; ++n) {
    const double* src = x.value().data() + n * d.ci * d.in_plane();
    const double* cols = src;
    if (!pointwise) {
      im2col(src, d, geom, col.data());
      cols = col.data();
    }
    MapMat o(out.data() + n * d.co * d.out_plane(), d.co, d.out_plane());
    o.noalias() = w * ConstMapMat(cols, d.rows(), d.out_plane());
    if (bias.defined()) {
      for (int64_t c = 0; c < d.co; ++c) o.row(c).array() += bias.value()[c];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), inputs, [d, geom, pointwise](Node& self) {
    Node& px = *self.inputs[0];
    Node& pw = *self.inputs[1];
    Node* pb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    std::vector<double> col(pointwise ? 0 : static_cast<size_t>(d.rows() * d.out_plane()));
    std::vector<double> dcol(col.size());
    ConstMapMat w(pw.value.data(), d.co, d.rows());
    for (int64_t n = 0; n < d.n; ++n) {
      ConstMapMat go(self.grad.data() + n * d.co * d.out_plane(), d.co, d.out_plane());
      const double* src = px.value.data() + n * d.ci * d.in_plane();
      if (pw.requires_grad) {
        const double* cols = src;
        if (!pointwise) {
          im2col(src, d, geom, col.data());
          cols = col.data();
        }
        MapMat gw(pw.grad_buffer().data(), d.co, d.rows());
        gw.noalias() += go * ConstMapMat(cols, d.rows(), d.out_plane()).transpose();
      }
      if (pb && pb->requires_grad) {
        Tensor& gb = pb->grad_buffer();
        for (int64_t c = 0; c < d.co; ++c) gb[c] += go.row(c).sum();
      }
      if (px.requires_grad) {
        double* gx = px.grad_buffer().data() + n * d.ci * d.in_plane();
        if (pointwise) {
          MapMat(gx, d.ci, d.in_plane()).noalias() += w.transpose() * go;
        } else {
          MapMat(dcol.data(), d.rows(), d.out_plane()).noalias() = w.transpose() * go;
          col2im(dcol.data(), d, geom, gx);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.inputs[0];
    Node& pb = *self.inputs[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var scale(const Var& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var leaky_relu(const Var& x, double negative_slope) {
  return unary(
      x, [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
      [negative_slope](double v, double) { return v > 0.0 ? 1.0 : negative_slope; });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var atanh_clamped(const Var& x, double limit) {
  return unary(
      x, [limit](double v) { return std::atanh(std::clamp(v, -limit, limit)); },
      [limit](double v, double) { return std::abs(v) < limit ? 1.0 / (1.0 - v * v) : 0.0; });
}

Var detach(const Var& x) { return Var(x.value(), false); }

Var instance_norm(const Var& x, double eps) {
  if (x.value().rank() < 3) throw std::invalid_argument("instance_norm: need (N, C, spatial...)");
  const int64_t planes = x.shape()[0] * x.shape()[1];
  const int64_t size = x.value().numel() / planes;
  Tensor out = Tensor::zeros_like(x.value());
  std::vector<double> inv_std(static_cast<size_t>(planes));
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = x.value().data() + p * size;
    double m = 0.0;
    for (int64_t i = 0; i < size; ++i) m += src[i];
    m /= static_cast<double>(size);
    double var = 0.0;
    for (int64_t i = 0; i < size; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(size);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(p)] = is;
    double* dst = out.data() + p * size;
    for (int64_t i = 0; i < size; ++i) dst[i] = (src[i] - m) * is;
  }
  return make_result(std::move(out), {x}, [planes, size, inv_std = std::move(inv_std)](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    const double n = static_cast<double>(size);
    for (int64_t p = 0; p < planes; ++p) {
      const double* gy = self.grad.data() + p * size;
      const double* y = self.value.data() + p * size;
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (int64_t i = 0; i < size; ++i) {
        mean_g += gy[i];
        mean_gy += gy[i] * y[i];
      }
      mean_g /= n;
      mean_gy /= n;
      const double is = inv_std[static_cast<size_t>(p)];
      double* dst = gx.data() + p * size;
      for (int64_t i = 0; i < size; ++i) dst[i] += is * (gy[i] - mean_g - y[i] * mean_gy);
    }
  });
}

Var max_pool(const Var& x, const Axes3& window) {
  require_rank(x, 5, "max_pool");
  const Shape& s = x.shape();
  for (size_t a = 0; a < 3; ++a) {
    if (window[a] < 1 || s[2 + a] % window[a] != 0) {
      throw std::invalid_argument("max_pool: extent " + shape_string(s) + " not divisible by window");
    }
  }
  const int64_t zo = s[2] / window[0], yo = s[3] / window[1], xo = s[4] / window[2];
  Tensor out(Shape{s[0], s[1], zo, yo, xo});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const double* src = x.value().data();
  int64_t o = 0;
  for (int64_t p = 0; p < s[0] * s[1]; ++p) {
    const int64_t base = p * s[2] * s[3] * s[4];
    for (int64_t z = 0; z < zo; ++z) {
      for (int64_t y = 0; y < yo; ++y) {
        for (int64_t xx = 0; xx < xo; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_i = -1;
          for (int64_t dz = 0; dz < window[0]; ++dz) {
            for (int64_t dy = 0; dy < window[1]; ++dy) {
              for (int64_t dx = 0; dx < window[2]; ++dx) {
                const int64_t i =
                    base + ((z * window[0] + dz) * s[3] + (y * window[1] + dy)) * s[4] + xx * window[2] + dx;
                if (best_i < 0 || src[i] > best) {
                  best = src[i];
                  best_i = i;
                }
              }
            }
          }
          out[o] = best;
          argmax[static_cast<size_t>(o)] = best_i;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[static_cast<int64_t>(o)];
  });
}

Var upsample_nearest(const Var& x, const Axes3& factor) {
  require_rank(x, 5, "upsample_nearest");
  const Shape& s = x.shape();
  const Shape os{s[0], s[1], s[2] * factor[0], s[3] * factor[1], s[4] * factor[2]};
  Tensor out(os);
  const auto source_index = [s, os, factor](int64_t p, int64_t z, int64_t y, int64_t xx) {
    return ((p * s[2] + z / factor[0]) * s[3] + y / factor[1]) * s[4] + xx / factor[2];
  };
  int64_t o = 0;
  for (int64_t p = 0; p < s[0] * s[1]; ++p)
    for (int64_t z = 0; z < os[2]; ++z)
      for (int64_t y = 0; y < os[3]; ++y)
        for (int64_t xx = 0; xx < os[4]; ++xx, ++o) out[o] = x.value()[source_index(p, z, y, xx)];
  return make_result(std::move(out), {x}, [os, source_index](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    int64_t o = 0;
    for (int64_t p = 0; p < os[0] * os[1]; ++p)
      for (int64_t z = 0; z < os[2]; ++z)
        for (int64_t y = 0; y < os[3]; ++y)
          for (int64_t xx = 0; xx < os[4]; ++xx, ++o) g[source_index(p, z, y, xx)] += self.grad[o];
  });
}

Var softmax_channels(const Var& x) {
  if (x.value().rank() < 2) throw std::invalid_argument("softmax_channels: need (N, C, ...)");
  const int64_t n = x.shape()[0], c = x.shape()[1];
  const int64_t size = x.value().numel() / (n * c);
  Tensor out = Tensor::zeros_like(x.value());
  for (int64_t b = 0; b < n; ++b) {
    const double* src = x.value().data() + b * c * size;
    double* dst = out.data() + b * c * size;
    for (int64_t i = 0; i < size; ++i) {
      double mx = src[i];
      for (int64_t k = 1; k < c; ++k) mx = std::max(mx, src[k * size + i]);
      double total = 0.0;
      for (int64_t k = 0; k < c; ++k) {
        dst[k * size + i] = std::exp(src[k * size + i] - mx);
        total += dst[k * size + i];
      }
      for (int64_t k = 0; k < c; ++k) dst[k * size + i] /= total;
    }
  }
  return make_result(std::move(out), {x}, [n, c, size](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (int64_t b = 0; b < n; ++b) {
      const double* y = self.value.data() + b * c * size;
      const double* gy = self.grad.data() + b * c * size;
      double* gx = g.data() + b * c * size;
      for (int64_t i = 0; i < size; ++i) {
        double dot = 0.0;
        for (int64_t k = 0; k < c; ++k) dot += gy[k * size + i] * y[k * size + i];
        for (int64_t k = 0; k < c; ++k) gx[k * size + i] += y[k * size + i] * (gy[k * size + i] - dot);
      }
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return make_result(Tensor::scalar(total), {x}, [](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var mean_abs_error(const Var& a, const Var& b) { return mean(abs(sub(a, b))); }

Var mean_squared_to(const Var& x, double target) {
  const double n = static_cast<double>(x.value().numel());
  double total = 0.0;
  for (double v : x.value().values()) total += (v - target) * (v - target);
  return make_result(Tensor::scalar(total / n), {x}, [target, n](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0] * 2.0 * (px.value[i] - target) / n;
  });
}

Var gather_positions(const Var& x, int64_t batch_index, std::span<const int64_t> positions) {
  require_rank(x, 5, "gather_positions");
  const Shape& s = x.shape();
  const int64_t c = s[1];
  const int64_t plane = s[2] * s[3] * s[4];
  if (batch_index < 0 || batch_index >= s[0]) throw std::out_of_range("gather_positions: batch index");
  std::vector<int64_t> pos(positions.begin(), positions.end());
  const int64_t p = static_cast<int64_t>(pos.size());
  Tensor out(Shape{p, c});
  const double* src = x.value().data() + batch_index * c * plane;
  for (int64_t i = 0; i < p; ++i) {
    if (pos[i] < 0 || pos[i] >= plane) throw std::out_of_range("gather_positions: position");
    for (int64_t k = 0; k < c; ++k) out[i * c + k] = src[k * plane + pos[i]];
  }
  return make_result(std::move(out), {x}, [pos = std::move(pos), c, plane, batch_index](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    double* g = px.grad_buffer().data() + batch_index * c * plane;
    for (size_t i = 0; i < pos.size(); ++i)
      for (int64_t k = 0; k < c; ++k) g[k * plane + pos[i]] += self.grad[static_cast<int64_t>(i) * c + k];
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int64_t p = x.shape()[0], c = x.shape()[1], d = weight.shape()[1];
  if (weight.shape()[0] != c) throw std::invalid_argument("linear: inner dimension mismatch");
  Tensor out(Shape{p, d});
  MapMat o(out.data(), p, d);
  o.noalias() = ConstMapMat(x.value().data(), p, c) * ConstMapMat(weight.value().data(), c, d);
  if (bias.defined()) {
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < d; ++j) out[i * d + j] += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), inputs, [p, c, d](Node& self) {
    Node& px = *self.inputs[0];
    Node& pw = *self.inputs[1];
    ConstMapMat go(self.grad.data(), p, d);
    if (px.requires_grad) {
      MapMat(px.grad_buffer().data(), p, c).noalias() += go * ConstMapMat(pw.value.data(), c, d).transpose();
    }
    if (pw.requires_grad) {
      MapMat(pw.grad_buffer().data(), c, d).noalias() += ConstMapMat(px.value.data(), p, c).transpose() * go;
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int64_t i = 0; i < p; ++i)
        for (int64_t j = 0; j < d; ++j) gb[j] += self.grad[i * d + j];
    }
  });
}

Var l2_normalize_rows(const Var& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const int64_t p = x.shape()[0], d = x.shape()[1];
  Tensor out = Tensor::zeros_like(x.value());
  std::vector<double> norms(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < d; ++j) sq += x.value()[i * d + j] * x.value()[i * d + j];
    norms[static_cast<size_t>(i)] = std::sqrt(sq);
    for (int64_t j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] / (norms[static_cast<size_t>(i)] + eps);
  }
  return make_result(std::move(out), {x}, [p, d, eps, norms = std::move(norms)](Node& self) {
    Node& px = *self.inputs[0];
    if (!px.requires_grad) return;
    Tensor& g = px.grad_buffer();
    for (int64_t i = 0; i < p; ++i) {
      const double n = norms[static_cast<size_t>(i)];
      const double denom = n + eps;
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += px.value[i * d + j] * self.grad[i * d + j];
      const double coef = n > 0.0 ? dot / (n * denom * denom) : 0.0;
      for (int64_t j = 0; j < d; ++j) {
        g[i * d + j] += self.grad[i * d + j] / denom - px.value[i * d + j] * coef;
      }
    }
  });
}

Var patch_nce(const Var& q, const Var& k, double temperature) {
  require_rank(q, 2, "patch_nce");
  require_rank(k, 2, "patch_nce");
  if (q.shape() != k.shape()) {
    throw std::invalid_argument("patch_nce: feature count mismatch " + shape_string(q.shape()) + " vs " +
                                shape_string(k.shape()));
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("patch_nce: temperature must be positive");
  const int64_t p = q.shape()[0], d = q.shape()[1];
  RowMat logits = ConstMapMat(q.value().data(), p, d) * ConstMapMat(k.value().data(), p, d).transpose();
  logits /= temperature;
  RowMat soft(p, p);
  double loss = 0.0;
  for (int64_t i = 0; i < p; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, i);
    soft.row(i) = (logits.row(i).array() - lse).exp();
  }
  loss /= static_cast<double>(p);
  return make_result(Tensor::scalar(loss), {q, k}, [p, d, temperature, soft = std::move(soft)](Node& self) {
    RowMat dlogits = soft;
    dlogits.diagonal().array() -= 1.0;
    dlogits *= self.grad[0] / (static_cast<double>(p) * temperature);
    Node& pq = *self.inputs[0];
    Node& pk = *self.inputs[1];
    if (pq.requires_grad) {
      MapMat(pq.grad_buffer().data(), p, d).noalias() += dlogits * ConstMapMat(pk.value.data(), p, d);
    }
    if (pk.requires_grad) {
      MapMat(pk.grad_buffer().data(), p, d).noalias() += dlogits.transpose() * ConstMapMat(pq.value.data(), p, d);
    }
  });
}

Var soft_dice_cross_entropy(const Var& probs, std::span<const uint8_t> labels, double smooth) {
  if (probs.value().rank() < 3 || probs.shape()[0] != 1) {
    throw std::invalid_argument("seg loss: expected probabilities of shape (1, C, ...)");
  }
  const int64_t c = probs.shape()[1];
  const int64_t size = probs.value().numel() / c;
  if (static_cast<int64_t>(labels.size()) != size) {
    throw std::invalid_argument("seg loss: label count " + std::to_string(labels.size()) +
                                " does not match score grid " + shape_string(probs.shape()));
  }
  if (c < 2) throw std::invalid_argument("seg loss: need at least two classes");
  constexpr double kTiny = 1e-12;
  const double* p = probs.value().data();
  std::vector<uint8_t> lab(labels.begin(), labels.end());

  double ce = 0.0;
  for (int64_t v = 0; v < size; ++v) {
    if (lab[v] >= c) throw std::invalid_argument("seg loss: label outside class range");
    ce -= std::log(std::max(p[lab[v] * size + v], kTiny));
  }
  ce /= static_cast<double>(size);

  std::vector<double> inter(c, 0.0), psum(c, 0.0), gsum(c, 0.0);
  for (int64_t k = 1; k < c; ++k) {
    for (int64_t v = 0; v < size; ++v) {
      const double pv = p[k * size + v];
      psum[k] += pv;
      if (lab[v] == k) {
        inter[k] += pv;
        gsum[k] += 1.0;
      }
    }
  }
  double dice_loss = 0.0;
  for (int64_t k = 1; k < c; ++k) {
    dice_loss += 1.0 - (2.0 * inter[k] + smooth) / (psum[k] + gsum[k] + smooth);
  }
  dice_loss /= static_cast<double>(c - 1);

  return make_result(Tensor::scalar(dice_loss + ce), {probs},
                     [c, size, smooth, lab = std::move(lab), inter, psum, gsum](Node& self) {
                       Node& pp = *self.inputs[0];
                       if (!pp.requires_grad) return;
                       const double up = self.grad[0];
                       Tensor& g = pp.grad_buffer();
                       const double n = static_cast<double>(size);
                       for (int64_t v = 0; v < size; ++v) {
                         const double pv = pp.value[lab[v] * size + v];
                         if (pv > kTiny) g[lab[v] * size + v] -= up / (n * pv);
                       }
                       for (int64_t k = 1; k < c; ++k) {
                         const double den = psum[k] + gsum[k] + smooth;
                         const double num = 2.0 * inter[k] + smooth;
                         const double w = -up / static_cast<double>(c - 1);
                         for (int64_t v = 0; v < size; ++v) {
                           const double gk = lab[v] == k ? 1.0 : 0.0;
                           g[k * size + v] += w * (2.0 * gk * den - num) / (den * den);
                         }
                       }
                     });
}

}  // namespace vsseg::nn
