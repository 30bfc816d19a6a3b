#include "forge/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace forge::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// Scratch buffers for im2col; one per thread so concurrent inference stays safe.
template <typename T>
std::vector<T>& column_buffer() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <typename T>
std::vector<T>& column_grad_buffer() {
  thread_local std::vector<T> buffer;
  return buffer;
}

// Pixel budget per im2col tile; keeps the column buffer cache resident.
constexpr int kTilePixels = 1024;

int tile_rows(int width) { return std::max(1, kTilePixels / width); }

// Fixed-order sums. Eigen reductions peel a head that depends on the buffer address,
// so their rounding changes from call to call.
constexpr std::size_t kLanes = 8;

template <typename T, typename F>
double lane_sum(std::size_t n, F&& term) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += static_cast<double>(term(i + l));
  }
  for (; i < n; ++i) acc[i % kLanes] += static_cast<double>(term(i));
  double total = 0.0;
  for (double a : acc) total += a;
  return total;
}

// 3x3, pad 1, output rows [y0, y1):
// col[(ci*9 + ky*3 + kx)][(y-y0)*W + x] = src[ci][y+ky-1][x+kx-1] (0 outside).
template <typename T>
void im2col3(const T* src, int channels, int height, int width, int y0, int y1, T* col) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  const std::size_t tile = static_cast<std::size_t>(y1 - y0) * width;
  for (int ci = 0; ci < channels; ++ci) {
    const T* plane = src + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + ((ci * 3 + ky) * 3 + kx) * tile;
        for (int y = y0; y < y1; ++y) {
          T* row = dst + static_cast<std::size_t>(y - y0) * width;
          const int iy = y + ky - 1;
          if (iy < 0 || iy >= height) {
            std::fill(row, row + width, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * width;
          if (kx == 0) {
            row[0] = T(0);
            std::memcpy(row + 1, in, sizeof(T) * (width - 1));
          } else if (kx == 1) {
            std::memcpy(row, in, sizeof(T) * width);
          } else {
            std::memcpy(row, in + 1, sizeof(T) * (width - 1));
            row[width - 1] = T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col3 for one tile: accumulates column gradients into dst.
template <typename T>
void col2im3(const T* col, int channels, int height, int width, int y0, int y1, T* dst) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  const std::size_t tile = static_cast<std::size_t>(y1 - y0) * width;
  for (int ci = 0; ci < channels; ++ci) {
    T* plane = dst + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + ((ci * 3 + ky) * 3 + kx) * tile;
        for (int y = y0; y < y1; ++y) {
          const int iy = y + ky - 1;
          if (iy < 0 || iy >= height) continue;
          const T* row = src + static_cast<std::size_t>(y - y0) * width;
          T* out = plane + static_cast<std::size_t>(iy) * width;
          if (kx == 0) {
            for (int x = 1; x < width; ++x) out[x - 1] += row[x];
          } else if (kx == 1) {
            for (int x = 0; x < width; ++x) out[x] += row[x];
          } else {
            for (int x = 0; x + 1 < width; ++x) out[x + 1] += row[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const T* weight, const T* bias, int out_channels, int kernel, Tensor<T>& y) {
  if (kernel != 1 && kernel != 3) throw ShapeError("conv kernel must be 1 or 3");
  const int hw = x.h * x.w;
  const int k = x.c * kernel * kernel;
  y.resize(x.n, out_channels, x.h, x.w);
  ConstMatrixMap<T> w(weight, out_channels, k);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias, out_channels);
  auto& col = column_buffer<T>();
  const int rows = tile_rows(x.w);
  if (kernel == 3) col.resize(static_cast<std::size_t>(k) * rows * x.w);
  for (int i = 0; i < x.n; ++i) {
    MatrixMap<T> out(y.sample(i), out_channels, hw);
    if (kernel == 1) {
      out.noalias() = w * ConstMatrixMap<T>(x.sample(i), k, hw);
    } else {
      for (int y0 = 0; y0 < x.h; y0 += rows) {
        const int y1 = std::min(x.h, y0 + rows);
        const int cols = (y1 - y0) * x.w;
        im2col3(x.sample(i), x.c, x.h, x.w, y0, y1, col.data());
        out.middleCols(y0 * x.w, cols).noalias() = w * ConstMatrixMap<T>(col.data(), k, cols);
      }
    }
    out.colwise() += b;
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weight, int out_channels, int kernel, const Tensor<T>& dy,
                     T* dweight, T* dbias, Tensor<T>* dx) {
  const int hw = x.h * x.w;
  const int k = x.c * kernel * kernel;
  ConstMatrixMap<T> w(weight, out_channels, k);
  MatrixMap<T> dw(dweight, out_channels, k);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(dbias, out_channels);
  if (dx != nullptr) dx->resize(x.n, x.c, x.h, x.w);
  auto& col = column_buffer<T>();
  auto& dcol = column_grad_buffer<T>();
  const int rows = tile_rows(x.w);
  if (kernel == 3) {
    col.resize(static_cast<std::size_t>(k) * rows * x.w);
    if (dx != nullptr) dcol.resize(col.size());
  }
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> g(dy.sample(i), out_channels, hw);
    for (int o = 0; o < out_channels; ++o) {
      const T* row = dy.sample(i) + static_cast<std::size_t>(o) * hw;
      db[o] += static_cast<T>(lane_sum<T>(static_cast<std::size_t>(hw), [row](std::size_t j) { return row[j]; }));
    }
    if (kernel == 1) {
      dw.noalias() += g * ConstMatrixMap<T>(x.sample(i), k, hw).transpose();
      if (dx != nullptr) MatrixMap<T>(dx->sample(i), k, hw).noalias() = w.transpose() * g;
      continue;
    }
    for (int y0 = 0; y0 < x.h; y0 += rows) {
      const int y1 = std::min(x.h, y0 + rows);
      const int cols = (y1 - y0) * x.w;
      const auto g_tile = g.middleCols(y0 * x.w, cols);
      im2col3(x.sample(i), x.c, x.h, x.w, y0, y1, col.data());
      dw.noalias() += g_tile * ConstMatrixMap<T>(col.data(), k, cols).transpose();
      if (dx != nullptr) {
        MatrixMap<T>(dcol.data(), k, cols).noalias() = w.transpose() * g_tile;
        col2im3(dcol.data(), x.c, x.h, x.w, y0, y1, dx->sample(i));
      }
    }
  }
}

template <typename T>
void group_norm_forward(const Tensor<T>& x, const T* gamma, const T* beta, int groups, double eps, Tensor<T>& y,
                        GroupNormStats& stats) {
  if (groups < 1 || x.c % groups != 0) throw ShapeError("group count must divide channel count");
  const int per_group = x.c / groups;
  const Eigen::Index plane = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index group_size = per_group * plane;
  const double count = static_cast<double>(group_size);
  y.resize(x.n, x.c, x.h, x.w);
  stats.mean.assign(static_cast<std::size_t>(x.n) * groups, 0.0);
  stats.rstd.assign(static_cast<std::size_t>(x.n) * groups, 0.0);
  for (int i = 0; i < x.n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const T* src = x.channel(i, g * per_group);
      const auto n = static_cast<std::size_t>(group_size);
      const double mean = lane_sum<T>(n, [src](std::size_t j) { return static_cast<double>(src[j]); }) / count;
      const double var = lane_sum<T>(n, [src, mean](std::size_t j) {
                           const double d = static_cast<double>(src[j]) - mean;
                           return d * d;
                         }) /
                         count;
      const double rstd = 1.0 / std::sqrt(var + eps);
      stats.mean[i * groups + g] = mean;
      stats.rstd[i * groups + g] = rstd;
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = g * per_group + cc;
        const T scale = static_cast<T>(rstd * gamma[ch]);
        const T shift = static_cast<T>(beta[ch] - mean * rstd * gamma[ch]);
        ArrayMap<T>(y.channel(i, ch), plane) = ConstArrayMap<T>(x.channel(i, ch), plane) * scale + shift;
      }
    }
  }
}

template <typename T>
void group_norm_backward(const Tensor<T>& x, const T* gamma, int groups, const GroupNormStats& stats,
                         const Tensor<T>& dy, T* dgamma, T* dbeta, Tensor<T>& dx) {
  const int per_group = x.c / groups;
  const Eigen::Index plane = static_cast<Eigen::Index>(x.plane());
  const double count = static_cast<double>(per_group) * plane;
  dx.resize(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const double mean = stats.mean[i * groups + g];
      const double rstd = stats.rstd[i * groups + g];
      // with xhat = (x - mean) * rstd: sums of dxhat and dxhat * xhat over the group
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = g * per_group + cc;
        const T* in = x.channel(i, ch);
        const T* grad = dy.channel(i, ch);
        const auto n = static_cast<std::size_t>(plane);
        const double sum_grad = lane_sum<T>(n, [grad](std::size_t j) { return static_cast<double>(grad[j]); });
        const double sum_grad_xhat =
            lane_sum<T>(n, [grad, in, mean](std::size_t j) { return grad[j] * (static_cast<double>(in[j]) - mean); }) *
            rstd;
        dgamma[ch] += static_cast<T>(sum_grad_xhat);
        dbeta[ch] += static_cast<T>(sum_grad);
        sum_dxhat += sum_grad * gamma[ch];
        sum_dxhat_xhat += sum_grad_xhat * gamma[ch];
      }
      const double mean_dxhat = sum_dxhat / count;
      const double mean_dxhat_xhat = sum_dxhat_xhat / count;
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = g * per_group + cc;
        // dx = rstd * (dy * gamma - mean_dxhat - xhat * mean_dxhat_xhat)
        const T a = static_cast<T>(rstd * gamma[ch]);
        const T b = static_cast<T>(-rstd * rstd * mean_dxhat_xhat);
        const T c = static_cast<T>(-rstd * mean_dxhat);
        ArrayMap<T>(dx.channel(i, ch), plane) = a * ConstArrayMap<T>(dy.channel(i, ch), plane) +
                                                b * (ConstArrayMap<T>(x.channel(i, ch), plane) - static_cast<T>(mean)) + c;
      }
    }
  }
}

template <typename T>
T silu(T v) {
  return v / (T(1) + std::exp(-v));
}

template <typename T>
T silu_grad(T v) {
  const T s = T(1) / (T(1) + std::exp(-v));
  return s * (T(1) + v * (T(1) - s));
}

// Scalar loops: Eigen's vectorized exp differs from the scalar one in the last bit,
// and which elements take which path depends on the buffer address.
template <typename T>
void silu_forward(const Tensor<T>& x, Tensor<T>& y) {
  y.resize(x.n, x.c, x.h, x.w);
  const T* in = x.values.data();
  T* out = y.values.data();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) out[i] = silu(in[i]);
}

template <typename T>
void silu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  dx.resize(x.n, x.c, x.h, x.w);
  const T* in = x.values.data();
  const T* g = dy.values.data();
  T* out = dx.values.data();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) out[i] = g[i] * silu_grad(in[i]);
}

template <typename T>
void avg_pool2_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("average pooling needs even spatial size");
  y.resize(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* in = x.channel(i, ch);
      T* out = y.channel(i, ch);
      for (int yy = 0; yy < y.h; ++yy) {
        const T* r0 = in + static_cast<std::size_t>(2 * yy) * x.w;
        const T* r1 = r0 + x.w;
        for (int xx = 0; xx < y.w; ++xx) {
          out[yy * y.w + xx] = T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
        }
      }
    }
  }
}

template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  dx.resize(dy.n, dy.c, dy.h * 2, dy.w * 2);
  for (int i = 0; i < dy.n; ++i) {
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* in = dy.channel(i, ch);
      T* out = dx.channel(i, ch);
      for (int yy = 0; yy < dx.h; ++yy) {
        for (int xx = 0; xx < dx.w; ++xx) out[yy * dx.w + xx] = T(0.25) * in[(yy / 2) * dy.w + xx / 2];
      }
    }
  }
}

template <typename T>
void upsample2_forward(const Tensor<T>& x, Tensor<T>& y) {
  y.resize(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* in = x.channel(i, ch);
      T* out = y.channel(i, ch);
      for (int yy = 0; yy < y.h; ++yy) {
        const T* row = in + static_cast<std::size_t>(yy / 2) * x.w;
        T* dst = out + static_cast<std::size_t>(yy) * y.w;
        for (int xx = 0; xx < y.w; ++xx) dst[xx] = row[xx / 2];
      }
    }
  }
}

template <typename T>
void upsample2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  dx.resize(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int i = 0; i < dy.n; ++i) {
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* in = dy.channel(i, ch);
      T* out = dx.channel(i, ch);
      for (int yy = 0; yy < dy.h; ++yy) {
        const T* row = in + static_cast<std::size_t>(yy) * dy.w;
        T* dst = out + static_cast<std::size_t>(yy / 2) * dx.w;
        for (int xx = 0; xx < dy.w; ++xx) dst[xx / 2] += row[xx];
      }
    }
  }
}

template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw ShapeError("concat inputs differ in batch or spatial size");
  out.resize(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
}

template <typename T>
void split_channels(const Tensor<T>& d, int a_channels, Tensor<T>& da, Tensor<T>& db) {
  da.resize(d.n, a_channels, d.h, d.w);
  db.resize(d.n, d.c - a_channels, d.h, d.w);
  for (int i = 0; i < d.n; ++i) {
    const T* src = d.sample(i);
    std::copy(src, src + da.sample_size(), da.sample(i));
    std::copy(src + da.sample_size(), src + d.sample_size(), db.sample(i));
  }
}

template <typename T>
void linear_forward(const T* x, int rows, int in, int out, const T* weight, const T* bias, T* y) {
  for (int r = 0; r < rows; ++r) {
    for (int o = 0; o < out; ++o) {
      T acc = bias[o];
      for (int i = 0; i < in; ++i) acc += weight[o * in + i] * x[r * in + i];
      y[r * out + o] = acc;
    }
  }
}

template <typename T>
void linear_backward(const T* x, int rows, int in, int out, const T* weight, const T* dy, T* dweight, T* dbias,
                     T* dx) {
  if (dx != nullptr) std::fill(dx, dx + static_cast<std::size_t>(rows) * in, T(0));
  for (int r = 0; r < rows; ++r) {
    for (int o = 0; o < out; ++o) {
      const T g = dy[r * out + o];
      dbias[o] += g;
      for (int i = 0; i < in; ++i) {
        dweight[o * in + i] += g * x[r * in + i];
        if (dx != nullptr) dx[r * in + i] += g * weight[o * in + i];
      }
    }
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& x, const T* bias) {
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T b = bias[i * x.c + ch];
      T* p = x.channel(i, ch);
      for (std::size_t k = 0; k < x.plane(); ++k) p[k] += b;
    }
  }
}

template <typename T>
void channel_bias_backward(const Tensor<T>& dy, T* dbias) {
  for (int i = 0; i < dy.n; ++i) {
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* p = dy.channel(i, ch);
      double acc = 0.0;
      for (std::size_t k = 0; k < dy.plane(); ++k) acc += p[k];
      dbias[i * dy.c + ch] = static_cast<T>(acc);
    }
  }
}

#define FORGE_INSTANTIATE_LAYERS(T)                                                                         \
  template void conv2d_forward<T>(const Tensor<T>&, const T*, const T*, int, int, Tensor<T>&);              \
  template void conv2d_backward<T>(const Tensor<T>&, const T*, int, int, const Tensor<T>&, T*, T*,          \
                                   Tensor<T>*);                                                             \
  template void group_norm_forward<T>(const Tensor<T>&, const T*, const T*, int, double, Tensor<T>&,        \
                                      GroupNormStats&);                                                     \
  template void group_norm_backward<T>(const Tensor<T>&, const T*, int, const GroupNormStats&,              \
                                       const Tensor<T>&, T*, T*, Tensor<T>&);                               \
  template T silu<T>(T);                                                                                    \
  template T silu_grad<T>(T);                                                                               \
  template void silu_forward<T>(const Tensor<T>&, Tensor<T>&);                                              \
  template void silu_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                           \
  template void avg_pool2_forward<T>(const Tensor<T>&, Tensor<T>&);                                         \
  template void avg_pool2_backward<T>(const Tensor<T>&, Tensor<T>&);                                        \
  template void upsample2_forward<T>(const Tensor<T>&, Tensor<T>&);                                         \
  template void upsample2_backward<T>(const Tensor<T>&, Tensor<T>&);                                        \
  template void concat_channels<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                         \
  template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);                           \
  template void linear_forward<T>(const T*, int, int, int, const T*, const T*, T*);                         \
  template void linear_backward<T>(const T*, int, int, int, const T*, const T*, T*, T*, T*);                \
  template void add_channel_bias<T>(Tensor<T>&, const T*);                                                  \
  template void channel_bias_backward<T>(const Tensor<T>&, T*);

FORGE_INSTANTIATE_LAYERS(float)
FORGE_INSTANTIATE_LAYERS(double)

#undef FORGE_INSTANTIATE_LAYERS

}  // namespace forge::nn
