#include "harkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace harkit::ad {

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

// outer × axis × inner decomposition used by concat/slice.
void axis_split(const Shape& s, int axis, std::int64_t& outer, std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y = make_node(a.shape(), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.data.size();
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pb.grad[i] += self.grad[i];
  });
  const Real* x = a.data();
  const Real* z = b.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + z[i];
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y = make_node(a.shape(), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.data.size();
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pb.grad[i] -= self.grad[i];
  });
  const Real* x = a.data();
  const Real* z = b.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - z[i];
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = make_node(a.shape(), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.data.size();
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pa.grad[i] += self.grad[i] * pb.data[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n; ++i) pb.grad[i] += self.grad[i] * pa.data[i];
  });
  const Real* x = a.data();
  const Real* z = b.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * z[i];
  return y;
}

Tensor affine(const Tensor& x, Real scale, Real shift) {
  Tensor y = make_node(x.shape(), {x}, [scale](detail::Node& self) {
    auto& p = *self.parents[0];
    const std::size_t n = self.data.size();
    for (std::size_t i = 0; i < n; ++i) p.grad[i] += scale * self.grad[i];
  });
  const Real* in = x.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = scale * in[i] + shift;
  return y;
}

Tensor tanh_act(const Tensor& x) {
  Tensor y = make_node(x.shape(), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    const std::size_t n = self.data.size();
    for (std::size_t i = 0; i < n; ++i)
      p.grad[i] += self.grad[i] * (Real{1} - self.data[i] * self.data[i]);
  });
  const Real* in = x.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = make_node(x.shape(), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    const std::size_t n = self.data.size();
    for (std::size_t i = 0; i < n; ++i)
      p.grad[i] += self.grad[i] * self.data[i] * (Real{1} - self.data[i]);
  });
  const Real* in = x.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = Real{1} / (Real{1} + std::exp(-in[i]));
  return y;
}

Tensor lrelu(const Tensor& x, Real negative_slope) {
  Tensor y = make_node(x.shape(), {x}, [negative_slope](detail::Node& self) {
    auto& p = *self.parents[0];
    const std::size_t n = self.data.size();
    for (std::size_t i = 0; i < n; ++i)
      p.grad[i] += self.grad[i] * (p.data[i] > Real{0} ? Real{1} : negative_slope);
  });
  const Real* in = x.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > Real{0} ? in[i] : negative_slope * in[i];
  return y;
}

Tensor gated(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "gated");
  Tensor y = make_node(a.shape(), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.data.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Real t = std::tanh(pa.data[i]);
      const Real s = Real{1} / (Real{1} + std::exp(-pb.data[i]));
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * s * (Real{1} - t * t);
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * t * s * (Real{1} - s);
    }
  });
  const Real* xa = a.data();
  const Real* xb = b.data();
  Real* out = y.data();
  const std::size_t n = static_cast<std::size_t>(y.numel());
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::tanh(xa[i]) / (Real{1} + std::exp(-xb[i]));
  return y;
}

Tensor softmax(const Tensor& x) {
  check(x.ndim() >= 1, "softmax: rank-0 input");
  const int classes = x.shape().back();
  const std::int64_t rows = x.numel() / classes;
  Tensor y = make_node(x.shape(), {x}, [classes, rows](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::int64_t r = 0; r < rows; ++r) {
      const Real* yr = self.data.data() + r * classes;
      const Real* gr = self.grad.data() + r * classes;
      Real dot = 0;
      for (int c = 0; c < classes; ++c) dot += yr[c] * gr[c];
      Real* pg = p.grad.data() + r * classes;
      for (int c = 0; c < classes; ++c) pg[c] += yr[c] * (gr[c] - dot);
    }
  });
  const Real* in = x.data();
  Real* out = y.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = in + r * classes;
    Real* yr = out + r * classes;
    Real mx = xr[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, xr[c]);
    Real sum = 0;
    for (int c = 0; c < classes; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    for (int c = 0; c < classes; ++c) yr[c] /= sum;
  }
  return y;
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  check(x.ndim() == 2 && w.ndim() == 2, "matmul: both inputs must be rank 2");
  check(x.dim(1) == w.dim(0), "matmul: inner dims " + shape_str(x.shape()) + " x " +
                                  shape_str(w.shape()));
  const int n = x.dim(0), k = x.dim(1), m = w.dim(1);
  Tensor y = make_node({n, m}, {x, w}, [n, k, m](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const Real* g = self.grad.data();
    if (px.requires_grad) {
      // dx = g · wᵀ
      const Real* wd = pw.data.data();
      for (int i = 0; i < n; ++i) {
        const Real* gi = g + static_cast<std::int64_t>(i) * m;
        Real* dxi = px.grad.data() + static_cast<std::int64_t>(i) * k;
        for (int l = 0; l < k; ++l) {
          const Real* wl = wd + static_cast<std::int64_t>(l) * m;
          Real acc = 0;
          for (int j = 0; j < m; ++j) acc += gi[j] * wl[j];
          dxi[l] += acc;
        }
      }
    }
    if (pw.requires_grad) {
      // dw = xᵀ · g
      const Real* xd = px.data.data();
      for (int i = 0; i < n; ++i) {
        const Real* xi = xd + static_cast<std::int64_t>(i) * k;
        const Real* gi = g + static_cast<std::int64_t>(i) * m;
        for (int l = 0; l < k; ++l) {
          const Real a = xi[l];
          if (a == Real{0}) continue;
          Real* dwl = pw.grad.data() + static_cast<std::int64_t>(l) * m;
          for (int j = 0; j < m; ++j) dwl[j] += a * gi[j];
        }
      }
    }
  });
  const Real* xd = x.data();
  const Real* wd = w.data();
  Real* yd = y.data();
  for (int i = 0; i < n; ++i) {
    Real* yi = yd + static_cast<std::int64_t>(i) * m;
    const Real* xi = xd + static_cast<std::int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const Real a = xi[l];
      if (a == Real{0}) continue;
      const Real* wl = wd + static_cast<std::int64_t>(l) * m;
      for (int j = 0; j < m; ++j) yi[j] += a * wl[j];
    }
  }
  return y;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.ndim() == 2 && w.ndim() == 2 && b.ndim() == 1, "fully_connected: ranks must be 2,2,1");
  check(x.dim(1) == w.dim(0), "fully_connected: x " + shape_str(x.shape()) + " does not conform with W " +
                                  shape_str(w.shape()));
  check(w.dim(1) == b.dim(0), "fully_connected: bias " + shape_str(b.shape()) +
                                  " does not match W " + shape_str(w.shape()));
  const int n = x.dim(0), k = x.dim(1), m = w.dim(1);
  Tensor y = make_node({n, m}, {x, w, b}, [n, k, m](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const Real* g = self.grad.data();
    if (px.requires_grad) {
      const Real* wd = pw.data.data();
      for (int i = 0; i < n; ++i) {
        const Real* gi = g + static_cast<std::int64_t>(i) * m;
        Real* dxi = px.grad.data() + static_cast<std::int64_t>(i) * k;
        for (int l = 0; l < k; ++l) {
          const Real* wl = wd + static_cast<std::int64_t>(l) * m;
          Real acc = 0;
          for (int j = 0; j < m; ++j) acc += gi[j] * wl[j];
          dxi[l] += acc;
        }
      }
    }
    if (pw.requires_grad) {
      const Real* xd = px.data.data();
      for (int i = 0; i < n; ++i) {
        const Real* xi = xd + static_cast<std::int64_t>(i) * k;
        const Real* gi = g + static_cast<std::int64_t>(i) * m;
        for (int l = 0; l < k; ++l) {
          const Real a = xi[l];
          if (a == Real{0}) continue;
          Real* dwl = pw.grad.data() + static_cast<std::int64_t>(l) * m;
          for (int j = 0; j < m; ++j) dwl[j] += a * gi[j];
        }
      }
    }
    if (pb.requires_grad) {
      for (int i = 0; i < n; ++i) {
        const Real* gi = g + static_cast<std::int64_t>(i) * m;
        for (int j = 0; j < m; ++j) pb.grad[static_cast<std::size_t>(j)] += gi[j];
      }
    }
  });
  const Real* xd = x.data();
  const Real* wd = w.data();
  const Real* bd = b.data();
  Real* yd = y.data();
  for (int i = 0; i < n; ++i) {
    Real* yi = yd + static_cast<std::int64_t>(i) * m;
    for (int j = 0; j < m; ++j) yi[j] = bd[j];
    const Real* xi = xd + static_cast<std::int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const Real a = xi[l];
      if (a == Real{0}) continue;
      const Real* wl = wd + static_cast<std::int64_t>(l) * m;
      for (int j = 0; j < m; ++j) yi[j] += a * wl[j];
    }
  }
  return y;
}

namespace {

struct Conv1dDims {
  int n, ci, t, co, k, stride, t_out, pad_left;
};

Conv1dDims conv1d_dims(const Tensor& x, const Tensor& w, int stride) {
  check(x.ndim() == 3, "conv1d: input must be (n, c_in, t), got " + shape_str(x.shape()));
  check(w.ndim() == 3, "conv1d: kernels must be (c_out, c_in, k), got " + shape_str(w.shape()));
  check(stride >= 1, "conv1d: stride must be >= 1");
  check(x.dim(1) == w.dim(1), "conv1d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                  shape_str(w.shape()));
  Conv1dDims d;
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.t = x.dim(2);
  d.co = w.dim(0);
  d.k = w.dim(2);
  d.stride = stride;
  d.t_out = (d.t + stride - 1) / stride;
  const int pad_total = (d.t_out - 1) * stride + d.k - d.t;
  check(pad_total >= 0 && d.k <= d.t + pad_total,
        "conv1d: kernel length " + std::to_string(d.k) + " exceeds padded input of length " +
            std::to_string(d.t));
  d.pad_left = pad_total / 2;
  return d;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride) {
  const Conv1dDims d = conv1d_dims(x, kernels, stride);
  Tensor y = make_node({d.n, d.co, d.t_out}, {x, kernels}, [d](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const Real* g = self.grad.data();
    for (int b = 0; b < d.n; ++b) {
      for (int o = 0; o < d.co; ++o) {
        const Real* gy = g + (static_cast<std::int64_t>(b) * d.co + o) * d.t_out;
        for (int c = 0; c < d.ci; ++c) {
          const std::int64_t xoff = (static_cast<std::int64_t>(b) * d.ci + c) * d.t;
          const std::int64_t woff = (static_cast<std::int64_t>(o) * d.ci + c) * d.k;
          for (int j = 0; j < d.k; ++j) {
            const int shift = j - d.pad_left;
            // valid output index range for this tap
            int jo_lo = 0, jo_hi = d.t_out;
            if (shift < 0) jo_lo = (-shift + d.stride - 1) / d.stride;
            if (shift > 0) {
              const int max_i = d.t - 1 - shift;
              jo_hi = max_i < 0 ? 0 : max_i / d.stride + 1;
            }
            if (jo_hi <= jo_lo) continue;
            if (px.requires_grad) {
              const Real wv = pw.data[static_cast<std::size_t>(woff + j)];
              Real* dx = px.grad.data() + xoff;
              for (int jo = jo_lo; jo < jo_hi; ++jo)
                dx[jo * d.stride + shift] += wv * gy[jo];
            }
            if (pw.requires_grad) {
              const Real* xr = px.data.data() + xoff;
              Real acc = 0;
              for (int jo = jo_lo; jo < jo_hi; ++jo) acc += xr[jo * d.stride + shift] * gy[jo];
              pw.grad[static_cast<std::size_t>(woff + j)] += acc;
            }
          }
        }
      }
    }
  });
  const Real* xd = x.data();
  const Real* wd = kernels.data();
  Real* yd = y.data();
  for (int b = 0; b < d.n; ++b) {
    for (int o = 0; o < d.co; ++o) {
      Real* yo = yd + (static_cast<std::int64_t>(b) * d.co + o) * d.t_out;
      for (int c = 0; c < d.ci; ++c) {
        const Real* xr = xd + (static_cast<std::int64_t>(b) * d.ci + c) * d.t;
        const Real* wr = wd + (static_cast<std::int64_t>(o) * d.ci + c) * d.k;
        for (int j = 0; j < d.k; ++j) {
          const Real wv = wr[j];
          if (wv == Real{0}) continue;
          const int shift = j - d.pad_left;
          int jo_lo = 0, jo_hi = d.t_out;
          if (shift < 0) jo_lo = (-shift + d.stride - 1) / d.stride;
          if (shift > 0) {
            const int max_i = d.t - 1 - shift;
            jo_hi = max_i < 0 ? 0 : max_i / d.stride + 1;
          }
          for (int jo = jo_lo; jo < jo_hi; ++jo) yo[jo] += wv * xr[jo * d.stride + shift];
        }
      }
    }
  }
  return y;
}

namespace {

struct Conv2dDims {
  int n, ci, h, t, co, kh, kt, sh, st, h_out, t_out, pad_left;
};

Conv2dDims conv2d_dims(const Tensor& x, const Tensor& w, int sh, int st) {
  check(x.ndim() == 4, "conv2d: input must be (n, c_in, h, t), got " + shape_str(x.shape()));
  check(w.ndim() == 4, "conv2d: kernels must be (c_out, c_in, kh, kt), got " + shape_str(w.shape()));
  check(sh >= 1 && st >= 1, "conv2d: strides must be >= 1");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch");
  Conv2dDims d;
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.t = x.dim(3);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kt = w.dim(3);
  d.sh = sh;
  d.st = st;
  check(d.kh <= d.h, "conv2d: spatial kernel " + std::to_string(d.kh) + " exceeds input height " +
                         std::to_string(d.h));
  d.h_out = (d.h - d.kh) / sh + 1;
  d.t_out = (d.t + st - 1) / st;
  const int pad_total = (d.t_out - 1) * st + d.kt - d.t;
  check(pad_total >= 0 && d.kt <= d.t + pad_total, "conv2d: temporal kernel exceeds padded input");
  d.pad_left = pad_total / 2;
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride_h, int stride_t) {
  const Conv2dDims d = conv2d_dims(x, kernels, stride_h, stride_t);
  Tensor y = make_node({d.n, d.co, d.h_out, d.t_out}, {x, kernels}, [d](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const Real* g = self.grad.data();
    for (int b = 0; b < d.n; ++b) {
      for (int o = 0; o < d.co; ++o) {
        for (int io = 0; io < d.h_out; ++io) {
          const Real* gy =
              g + ((static_cast<std::int64_t>(b) * d.co + o) * d.h_out + io) * d.t_out;
          for (int c = 0; c < d.ci; ++c) {
            for (int dh = 0; dh < d.kh; ++dh) {
              const int hi = io * d.sh + dh;
              const std::int64_t xoff =
                  ((static_cast<std::int64_t>(b) * d.ci + c) * d.h + hi) * d.t;
              const std::int64_t woff =
                  ((static_cast<std::int64_t>(o) * d.ci + c) * d.kh + dh) * d.kt;
              for (int j = 0; j < d.kt; ++j) {
                const int shift = j - d.pad_left;
                int jo_lo = 0, jo_hi = d.t_out;
                if (shift < 0) jo_lo = (-shift + d.st - 1) / d.st;
                if (shift > 0) {
                  const int max_i = d.t - 1 - shift;
                  jo_hi = max_i < 0 ? 0 : max_i / d.st + 1;
                }
                if (jo_hi <= jo_lo) continue;
                if (px.requires_grad) {
                  const Real wv = pw.data[static_cast<std::size_t>(woff + j)];
                  Real* dx = px.grad.data() + xoff;
                  for (int jo = jo_lo; jo < jo_hi; ++jo)
                    dx[jo * d.st + shift] += wv * gy[jo];
                }
                if (pw.requires_grad) {
                  const Real* xr = px.data.data() + xoff;
                  Real acc = 0;
                  for (int jo = jo_lo; jo < jo_hi; ++jo)
                    acc += xr[jo * d.st + shift] * gy[jo];
                  pw.grad[static_cast<std::size_t>(woff + j)] += acc;
                }
              }
            }
          }
        }
      }
    }
  });
  const Real* xd = x.data();
  const Real* wd = kernels.data();
  Real* yd = y.data();
  for (int b = 0; b < d.n; ++b) {
    for (int o = 0; o < d.co; ++o) {
      for (int io = 0; io < d.h_out; ++io) {
        Real* yo = yd + ((static_cast<std::int64_t>(b) * d.co + o) * d.h_out + io) * d.t_out;
        for (int c = 0; c < d.ci; ++c) {
          for (int dh = 0; dh < d.kh; ++dh) {
            const int hi = io * d.sh + dh;
            const Real* xr = xd + ((static_cast<std::int64_t>(b) * d.ci + c) * d.h + hi) * d.t;
            const Real* wr =
                wd + ((static_cast<std::int64_t>(o) * d.ci + c) * d.kh + dh) * d.kt;
            for (int j = 0; j < d.kt; ++j) {
              const Real wv = wr[j];
              if (wv == Real{0}) continue;
              const int shift = j - d.pad_left;
              int jo_lo = 0, jo_hi = d.t_out;
              if (shift < 0) jo_lo = (-shift + d.st - 1) / d.st;
              if (shift > 0) {
                const int max_i = d.t - 1 - shift;
                jo_hi = max_i < 0 ? 0 : max_i / d.st + 1;
              }
              for (int jo = jo_lo; jo < jo_hi; ++jo) yo[jo] += wv * xr[jo * d.st + shift];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor dilated_causal_conv1d(const Tensor& x, const Tensor& kernels, int dilation) {
  check(x.ndim() == 3, "dilated_conv1d: input must be (n, c, t)");
  check(kernels.ndim() == 3, "dilated_conv1d: kernels must be (c_out, c_in, k)");
  check(dilation >= 1, "dilated_conv1d: dilation must be >= 1");
  check(x.dim(1) == kernels.dim(1), "dilated_conv1d: channel mismatch");
  const int n = x.dim(0), ci = x.dim(1), t = x.dim(2);
  const int co = kernels.dim(0), k = kernels.dim(2);
  Tensor y = make_node({n, co, t}, {x, kernels}, [n, ci, t, co, k, dilation](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const Real* g = self.grad.data();
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < co; ++o) {
        const Real* gy = g + (static_cast<std::int64_t>(b) * co + o) * t;
        for (int c = 0; c < ci; ++c) {
          const std::int64_t xoff = (static_cast<std::int64_t>(b) * ci + c) * t;
          const std::int64_t woff = (static_cast<std::int64_t>(o) * ci + c) * k;
          for (int j = 0; j < k; ++j) {
            const int back = (k - 1 - j) * dilation;  // tap reaches x[i - back]
            if (back >= t) continue;
            if (px.requires_grad) {
              const Real wv = pw.data[static_cast<std::size_t>(woff + j)];
              Real* dx = px.grad.data() + xoff;
              for (int i = back; i < t; ++i) dx[i - back] += wv * gy[i];
            }
            if (pw.requires_grad) {
              const Real* xr = px.data.data() + xoff;
              Real acc = 0;
              for (int i = back; i < t; ++i) acc += xr[i - back] * gy[i];
              pw.grad[static_cast<std::size_t>(woff + j)] += acc;
            }
          }
        }
      }
    }
  });
  const Real* xd = x.data();
  const Real* wd = kernels.data();
  Real* yd = y.data();
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < co; ++o) {
      Real* yo = yd + (static_cast<std::int64_t>(b) * co + o) * t;
      for (int c = 0; c < ci; ++c) {
        const Real* xr = xd + (static_cast<std::int64_t>(b) * ci + c) * t;
        const Real* wr = wd + (static_cast<std::int64_t>(o) * ci + c) * k;
        for (int j = 0; j < k; ++j) {
          const Real wv = wr[j];
          if (wv == Real{0}) continue;
          const int back = (k - 1 - j) * dilation;
          for (int i = back; i < t; ++i) yo[i] += wv * xr[i - back];
        }
      }
    }
  }
  return y;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  check(x.ndim() >= 2, "add_channel_bias: input must have a channel axis");
  check(b.ndim() == 1 && b.dim(0) == x.dim(1),
        "add_channel_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::int64_t inner = 1;
  for (int i = 2; i < x.ndim(); ++i) inner *= x.dim(i);
  Tensor y = make_node(x.shape(), {x, b}, [n, c, inner](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    const Real* g = self.grad.data();
    if (px.requires_grad) {
      const std::size_t total = self.data.size();
      for (std::size_t i = 0; i < total; ++i) px.grad[i] += g[i];
    }
    if (pb.requires_grad) {
      for (int bi = 0; bi < n; ++bi)
        for (int ch = 0; ch < c; ++ch) {
          const Real* gr = g + (static_cast<std::int64_t>(bi) * c + ch) * inner;
          Real acc = 0;
          for (std::int64_t i = 0; i < inner; ++i) acc += gr[i];
          pb.grad[static_cast<std::size_t>(ch)] += acc;
        }
    }
  });
  const Real* xd = x.data();
  const Real* bd = b.data();
  Real* yd = y.data();
  for (int bi = 0; bi < n; ++bi)
    for (int ch = 0; ch < c; ++ch) {
      const Real* xr = xd + (static_cast<std::int64_t>(bi) * c + ch) * inner;
      Real* yr = yd + (static_cast<std::int64_t>(bi) * c + ch) * inner;
      const Real bv = bd[ch];
      for (std::int64_t i = 0; i < inner; ++i) yr[i] = xr[i] + bv;
    }
  return y;
}

Tensor sum_all(const Tensor& x) {
  Tensor y = make_node({1}, {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    const Real g = self.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
  const Real* in = x.data();
  Real acc = 0;
  const std::size_t n = static_cast<std::size_t>(x.numel());
  for (std::size_t i = 0; i < n; ++i) acc += in[i];
  y.data()[0] = acc;
  return y;
}

Tensor mean_all(const Tensor& x) {
  const Real inv = Real{1} / static_cast<Real>(x.numel());
  Tensor y = make_node({1}, {x}, [inv](detail::Node& self) {
    auto& p = *self.parents[0];
    const Real g = self.grad[0] * inv;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
  const Real* in = x.data();
  Real acc = 0;
  const std::size_t n = static_cast<std::size_t>(x.numel());
  for (std::size_t i = 0; i < n; ++i) acc += in[i];
  y.data()[0] = acc * inv;
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(numel_of(shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor y = make_node(std::move(shape), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
  std::copy(x.data(), x.data() + x.numel(), y.data());
  return y;
}

Tensor transpose2d(const Tensor& x) {
  check(x.ndim() == 2, "transpose2d: input must be rank 2");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = make_node({c, r}, {x}, [r, c](detail::Node& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        p.grad[static_cast<std::size_t>(i) * c + j] +=
            self.grad[static_cast<std::size_t>(j) * r + i];
  });
  const Real* in = x.data();
  Real* out = y.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::int64_t>(j) * r + i] = in[static_cast<std::int64_t>(i) * c + j];
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  check(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
  int axis_total = 0;
  for (const Tensor& p : parts) {
    check(p.ndim() == static_cast<int>(s0.size()), "concat: rank mismatch");
    for (int i = 0; i < p.ndim(); ++i)
      check(i == axis || p.dim(i) == s0[static_cast<std::size_t>(i)],
            "concat: shape mismatch on non-concat axis");
    axis_total += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  std::int64_t outer, inner;
  axis_split(out_shape, axis, outer, inner);
  std::vector<std::int64_t> strides;  // per-part axis-dim * inner
  strides.reserve(parts.size());
  for (const Tensor& p : parts) strides.push_back(static_cast<std::int64_t>(p.dim(axis)) * inner);

  Tensor y = make_node(out_shape, parts, [outer, inner, strides, axis_total](detail::Node& self) {
    const std::int64_t out_stride = static_cast<std::int64_t>(axis_total) * inner;
    std::int64_t base = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      auto& p = *self.parents[pi];
      if (p.requires_grad) {
        for (std::int64_t o = 0; o < outer; ++o) {
          const Real* g = self.grad.data() + o * out_stride + base;
          Real* pg = p.grad.data() + o * strides[pi];
          for (std::int64_t i = 0; i < strides[pi]; ++i) pg[i] += g[i];
        }
      }
      base += strides[pi];
    }
  });
  Real* out = y.data();
  const std::int64_t out_stride = static_cast<std::int64_t>(axis_total) * inner;
  std::int64_t base = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Real* in = parts[pi].data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(in + o * strides[pi], in + (o + 1) * strides[pi], out + o * out_stride + base);
    base += strides[pi];
  }
  return y;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  check(axis >= 0 && axis < x.ndim(), "slice: bad axis");
  check(start >= 0 && len >= 0 && start + len <= x.dim(axis),
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for axis of size " + std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer, inner;
  axis_split(x.shape(), axis, outer, inner);
  const std::int64_t in_stride = static_cast<std::int64_t>(x.dim(axis)) * inner;
  const std::int64_t out_stride = static_cast<std::int64_t>(len) * inner;
  const std::int64_t off = static_cast<std::int64_t>(start) * inner;

  Tensor y = make_node(out_shape, {x}, [outer, in_stride, out_stride, off](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::int64_t o = 0; o < outer; ++o) {
      const Real* g = self.grad.data() + o * out_stride;
      Real* pg = p.grad.data() + o * in_stride + off;
      for (std::int64_t i = 0; i < out_stride; ++i) pg[i] += g[i];
    }
  });
  const Real* in = x.data();
  Real* out = y.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(in + o * in_stride + off, in + o * in_stride + off + out_stride,
              out + o * out_stride);
  return y;
}

Tensor row(const Tensor& x, int i) {
  check(x.ndim() == 2, "row: input must be rank 2");
  return slice(x, 0, i, 1);
}

Tensor flip_rows(const Tensor& x) {
  check(x.ndim() == 2, "flip_rows: input must be rank 2");
  const int r = x.dim(0), c = x.dim(1);
  Tensor y = make_node(x.shape(), {x}, [r, c](detail::Node& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i) {
      const Real* g = self.grad.data() + static_cast<std::int64_t>(i) * c;
      Real* pg = p.grad.data() + static_cast<std::int64_t>(r - 1 - i) * c;
      for (int j = 0; j < c; ++j) pg[j] += g[j];
    }
  });
  const Real* in = x.data();
  Real* out = y.data();
  for (int i = 0; i < r; ++i)
    std::copy(in + static_cast<std::int64_t>(r - 1 - i) * c,
              in + static_cast<std::int64_t>(r - i) * c, out + static_cast<std::int64_t>(i) * c);
  return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  check(logits.ndim() == 2, "cross_entropy: logits must be (n, classes)");
  const int n = logits.dim(0), classes = logits.dim(1);
  check(static_cast<int>(targets.size()) == n, "cross_entropy: " + std::to_string(targets.size()) +
                                                   " labels for " + std::to_string(n) + " rows");
  for (int t : targets)
    check(t >= 0 && t < classes,
          "cross_entropy: label " + std::to_string(t) + " out of range [0," +
              std::to_string(classes) + ")");
  check(n > 0, "cross_entropy: empty batch");

  Tensor y = make_node({1}, {logits}, [n, classes, targets](detail::Node& self) {
    auto& p = *self.parents[0];
    const Real g = self.grad[0] / static_cast<Real>(n);
    for (int i = 0; i < n; ++i) {
      const Real* xr = p.data.data() + static_cast<std::int64_t>(i) * classes;
      Real* pg = p.grad.data() + static_cast<std::int64_t>(i) * classes;
      Real mx = xr[0];
      for (int c = 1; c < classes; ++c) mx = std::max(mx, xr[c]);
      Real sum = 0;
      for (int c = 0; c < classes; ++c) sum += std::exp(xr[c] - mx);
      for (int c = 0; c < classes; ++c) {
        const Real pcls = std::exp(xr[c] - mx) / sum;
        pg[c] += g * (pcls - (c == targets[static_cast<std::size_t>(i)] ? Real{1} : Real{0}));
      }
    }
  });
  const Real* xd = logits.data();
  Real loss = 0;
  for (int i = 0; i < n; ++i) {
    const Real* xr = xd + static_cast<std::int64_t>(i) * classes;
    Real mx = xr[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, xr[c]);
    Real sum = 0;
    for (int c = 0; c < classes; ++c) sum += std::exp(xr[c] - mx);
    loss += std::log(sum) + mx - xr[targets[static_cast<std::size_t>(i)]];
  }
  y.data()[0] = loss / static_cast<Real>(n);
  return y;
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  const int hidden = h_prev.dim(1);
  Tensor gx = fully_connected(x, p.wx, p.b);          // (b, 3h)
  Tensor gh = matmul(h_prev, p.wh_zr);                // (b, 2h)
  Tensor z = sigmoid(add(slice(gx, 1, 0, hidden), slice(gh, 1, 0, hidden)));
  Tensor r = sigmoid(add(slice(gx, 1, hidden, hidden), slice(gh, 1, hidden, hidden)));
  Tensor cand = tanh_act(add(slice(gx, 1, 2 * hidden, hidden), matmul(mul(r, h_prev), p.wh_n)));
  return add(mul(affine(z, -1, 1), h_prev), mul(z, cand));
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p) {
  const int hidden = h_prev.dim(1);
  Tensor s = add(fully_connected(x, p.wx, p.b), matmul(h_prev, p.wh));  // (b, 4h)
  Tensor i = sigmoid(slice(s, 1, 0, hidden));
  Tensor f = sigmoid(slice(s, 1, hidden, hidden));
  Tensor g = tanh_act(slice(s, 1, 2 * hidden, hidden));
  Tensor o = sigmoid(slice(s, 1, 3 * hidden, hidden));
  Tensor c_next = add(mul(f, c_prev), mul(i, g));
  Tensor h_next = mul(o, tanh_act(c_next));
  return {h_next, c_next};
}

std::vector<int> argmax_rows(const Tensor& x) {
  const int classes = x.shape().back();
  const std::int64_t rows = x.numel() / classes;
  std::vector<int> out(static_cast<std::size_t>(rows));
  const Real* d = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = d + r * classes;
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (xr[c] > xr[best]) best = c;
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace harkit::ad
