#include "adrs/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "adrs/error.hpp"

namespace adrs {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

constexpr std::size_t kColBudget = std::size_t{1} << 22;  // floats per im2col chunk
constexpr float kNormEps = 1e-5f;

int conv_out(int n, int k, int stride) { return (n + 2 * (k / 2) - k) / stride + 1; }

/// Output rows [r0, r1) of a 3x3 / pad 1 convolution unrolled to columns.
void im2col3(const Tensor& x, int stride, int out_w, int r0, int r1, float* col) {
  const int n = (r1 - r0) * out_w;
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.channel(c);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = col + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * n;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * stride + ky - 1;
          float* dst = row + static_cast<std::size_t>(oy - r0) * out_w;
          if (iy < 0 || iy >= x.height) {
            std::fill(dst, dst + out_w, 0.0f);
            continue;
          }
          const float* line = src + static_cast<std::size_t>(iy) * x.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - 1;
            dst[ox] = (ix >= 0 && ix < x.width) ? line[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im3(const float* col, int stride, int out_w, int r0, int r1, Tensor& dx) {
  const int n = (r1 - r0) * out_w;
  for (int c = 0; c < dx.channels; ++c) {
    float* dst = dx.channel(c);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = col + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * n;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= dx.height) continue;
          const float* src = row + static_cast<std::size_t>(oy - r0) * out_w;
          float* line = dst + static_cast<std::size_t>(iy) * dx.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < dx.width) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

int rows_per_chunk(int channels, int out_w, int out_h) {
  const std::size_t per_row = static_cast<std::size_t>(channels) * 9 * out_w;
  return std::clamp(static_cast<int>(kColBudget / std::max<std::size_t>(per_row, 1)), 1, out_h);
}

struct Taps {
  int i0, i1;
  float w0, w1;
};

std::vector<Taps> bilinear_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double f = std::clamp((o + 0.5) * scale - 0.5, 0.0, in - 1.0);
    const int i0 = static_cast<int>(f);
    const int i1 = std::min(i0 + 1, in - 1);
    const auto w1 = static_cast<float>(f - i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0f - w1, w1};
  }
  return taps;
}

}  // namespace

std::size_t Param::count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::size_t ModelParams::add(std::string name, std::vector<int> shape, std::vector<float> value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter " + name);
  Param p{std::move(name), std::move(shape), std::move(value)};
  if (p.value.size() != p.count()) throw ShapeError("parameter " + p.name + " value count does not match its shape");
  index_.emplace(p.name, params_.size());
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ModelParams::add(std::string name, std::vector<int> shape, float fill) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  return add(std::move(name), std::move(shape), std::vector<float>(n, fill));
}

bool ModelParams::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ModelParams::id(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + std::string(name));
  return it->second;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------

Graph::Graph(const ModelParams& params, bool record)
    : params_(params), record_(record), param_grads_(params.size()) {}

Graph::Var Graph::push(Tensor t) {
  values_.push_back(std::move(t));
  grads_.emplace_back();
  return values_.size() - 1;
}

Graph::Var Graph::input(Tensor t) { return push(std::move(t)); }

void Graph::drop(Var v) {
  if (!record_) values_[v] = Tensor();
}

Tensor& Graph::grad_of(Var v) {
  Tensor& g = grads_[v];
  if (g.data.empty()) g = Tensor(values_[v].channels, values_[v].height, values_[v].width);
  return g;
}

std::vector<float>& Graph::pgrad(std::size_t id) {
  auto& g = param_grads_[id];
  if (g.empty()) g.assign(params_[id].value.size(), 0.0f);
  return g;
}

Graph::Var Graph::conv(Var xv, std::size_t wid, std::size_t bid, int stride) {
  const Tensor& x = values_[xv];
  const Param& w = params_[wid];
  if (w.shape.size() != 4 || w.shape[1] != x.channels || w.shape[2] != w.shape[3] ||
      (w.shape[2] != 1 && w.shape[2] != 3)) {
    throw ShapeError("conv: weight " + w.name + " does not match a " + std::to_string(x.channels) + "-channel input");
  }
  const int k = w.shape[2];
  const int cout = w.shape[0];
  const int kk = x.channels * k * k;
  const int oh = conv_out(x.height, k, stride);
  const int ow = conv_out(x.width, k, stride);
  Tensor out(cout, oh, ow);
  CMapR wm(w.value.data(), cout, kk);
  MapR om(out.data.data(), cout, static_cast<Eigen::Index>(out.plane()));

  if (k == 1 && stride == 1) {
    CMapR xm(x.data.data(), x.channels, static_cast<Eigen::Index>(x.plane()));
    om.noalias() = wm * xm;
  } else if (k == 1) {
    throw ShapeError("conv: strided 1x1 convolution is not supported");
  } else {
    const int chunk = rows_per_chunk(x.channels, ow, oh);
    std::vector<float> col(static_cast<std::size_t>(kk) * chunk * ow);
    for (int r0 = 0; r0 < oh; r0 += chunk) {
      const int r1 = std::min(oh, r0 + chunk);
      const int n = (r1 - r0) * ow;
      im2col3(x, stride, ow, r0, r1, col.data());
      MapR cm(col.data(), kk, n);
      om.middleCols(static_cast<Eigen::Index>(r0) * ow, n).noalias() = wm * cm;
    }
  }
  if (bid != npos) {
    const Param& b = params_[bid];
    if (b.value.size() != static_cast<std::size_t>(cout)) throw ShapeError("conv: bias " + b.name + " has the wrong size");
    for (int c = 0; c < cout; ++c) {
      float* ch = out.channel(c);
      std::for_each(ch, ch + out.plane(), [v = b.value[static_cast<std::size_t>(c)]](float& o) { o += v; });
    }
  }
  const Var y = push(std::move(out));
  if (!record_) return y;

  backward_.push_back([this, xv, y, wid, bid, stride, k, cout, kk, oh, ow] {
    const Tensor& x = values_[xv];
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Param& w = params_[wid];
    CMapR wm(w.value.data(), cout, kk);
    MapR gw(pgrad(wid).data(), cout, kk);
    CMapR gym(gy.data.data(), cout, static_cast<Eigen::Index>(gy.plane()));
    Tensor& gx = grad_of(xv);
    if (k == 1) {
      CMapR xm(x.data.data(), x.channels, static_cast<Eigen::Index>(x.plane()));
      gw.noalias() += gym * xm.transpose();
      MapR gxm(gx.data.data(), x.channels, static_cast<Eigen::Index>(x.plane()));
      gxm.noalias() += wm.transpose() * gym;
    } else {
      const int chunk = rows_per_chunk(x.channels, ow, oh);
      std::vector<float> col(static_cast<std::size_t>(kk) * chunk * ow);
      std::vector<float> dcol(col.size());
      for (int r0 = 0; r0 < oh; r0 += chunk) {
        const int r1 = std::min(oh, r0 + chunk);
        const int n = (r1 - r0) * ow;
        im2col3(x, stride, ow, r0, r1, col.data());
        MapR cm(col.data(), kk, n);
        const auto gblock = gym.middleCols(static_cast<Eigen::Index>(r0) * ow, n);
        gw.noalias() += gblock * cm.transpose();
        MapR dm(dcol.data(), kk, n);
        dm.noalias() = wm.transpose() * gblock;
        col2im3(dcol.data(), stride, ow, r0, r1, gx);
      }
    }
    if (bid != npos) {
      auto& gb = pgrad(bid);
      for (int c = 0; c < cout; ++c) {
        const float* ch = gy.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < gy.plane(); ++i) s += ch[i];
        gb[static_cast<std::size_t>(c)] += static_cast<float>(s);
      }
    }
  });
  return y;
}

Graph::Var Graph::depthwise3x3(Var xv, std::size_t wid, std::size_t bid) {
  const Tensor& x = values_[xv];
  const Param& w = params_[wid];
  const Param& b = params_[bid];
  if (w.value.size() != static_cast<std::size_t>(x.channels) * 9 || b.value.size() != static_cast<std::size_t>(x.channels)) {
    throw ShapeError("depthwise3x3: parameters do not match the input channels");
  }
  const int h = x.height, wd = x.width;
  Tensor out(x.channels, h, wd);
  for (int c = 0; c < x.channels; ++c) {
    const float* k = w.value.data() + static_cast<std::size_t>(c) * 9;
    const float* src = x.channel(c);
    float* dst = out.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < wd; ++xx) {
        float acc = b.value[static_cast<std::size_t>(c)];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = y + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = xx + kx - 1;
            if (ix < 0 || ix >= wd) continue;
            acc += k[ky * 3 + kx] * src[static_cast<std::size_t>(iy) * wd + ix];
          }
        }
        dst[static_cast<std::size_t>(y) * wd + xx] = acc;
      }
    }
  }
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, xv, y, wid, bid] {
    const Tensor& x = values_[xv];
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Param& w = params_[wid];
    auto& gw = pgrad(wid);
    auto& gb = pgrad(bid);
    Tensor& gx = grad_of(xv);
    const int h = x.height, wd = x.width;
    for (int c = 0; c < x.channels; ++c) {
      const float* k = w.value.data() + static_cast<std::size_t>(c) * 9;
      float* gk = gw.data() + static_cast<std::size_t>(c) * 9;
      const float* src = x.channel(c);
      const float* g = gy.channel(c);
      float* gsrc = gx.channel(c);
      double bsum = 0.0;
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < wd; ++xx) {
          const float go = g[static_cast<std::size_t>(yy) * wd + xx];
          bsum += go;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = yy + ky - 1;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = xx + kx - 1;
              if (ix < 0 || ix >= wd) continue;
              const auto idx = static_cast<std::size_t>(iy) * wd + ix;
              gk[ky * 3 + kx] += go * src[idx];
              gsrc[idx] += go * k[ky * 3 + kx];
            }
          }
        }
      }
      gb[static_cast<std::size_t>(c)] += static_cast<float>(bsum);
    }
  });
  return y;
}

Graph::Var Graph::instance_norm(Var xv, std::size_t gid, std::size_t bid) {
  const Tensor& x = values_[xv];
  const Param& gamma = params_[gid];
  const Param& beta = params_[bid];
  if (gamma.value.size() != static_cast<std::size_t>(x.channels) ||
      beta.value.size() != static_cast<std::size_t>(x.channels)) {
    throw ShapeError("instance_norm: affine parameters do not match the input channels");
  }
  const std::size_t n = x.plane();
  Tensor out(x.channels, x.height, x.width);
  std::vector<float> inv_std(static_cast<std::size_t>(x.channels));
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.channel(c);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(n);
    const auto inv = static_cast<float>(1.0 / std::sqrt(var + kNormEps));
    inv_std[static_cast<std::size_t>(c)] = inv;
    const float g = gamma.value[static_cast<std::size_t>(c)];
    const float b = beta.value[static_cast<std::size_t>(c)];
    float* dst = out.channel(c);
    const auto m = static_cast<float>(mean);
    for (std::size_t i = 0; i < n; ++i) dst[i] = g * (src[i] - m) * inv + b;
  }
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, xv, y, gid, bid, inv_std = std::move(inv_std)] {
    const Tensor& x = values_[xv];
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Param& gamma = params_[gid];
    auto& gg = pgrad(gid);
    auto& gbeta = pgrad(bid);
    Tensor& gx = grad_of(xv);
    const std::size_t n = x.plane();
    for (int c = 0; c < x.channels; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const float g = gamma.value[ci];
      const float* go = gy.channel(c);
      float* gsrc = gx.channel(c);
      const float* src = x.channel(c);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += src[i];
      mean /= static_cast<double>(n);
      const float inv = inv_std[ci];
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double xhat = (src[i] - mean) * inv;
        sum_g += go[i];
        sum_gx += go[i] * xhat;
      }
      gg[ci] += static_cast<float>(sum_gx);
      gbeta[ci] += static_cast<float>(sum_g);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double xhat = (src[i] - mean) * inv;
        gsrc[i] += static_cast<float>(g * inv * (go[i] - inv_n * sum_g - xhat * inv_n * sum_gx));
      }
    }
  });
  return y;
}

Graph::Var Graph::relu(Var xv) {
  Tensor out = values_[xv];
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, xv, y] {
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Tensor& out = values_[y];
    Tensor& gx = grad_of(xv);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      if (out.data[i] > 0.0f) gx.data[i] += gy.data[i];
    }
  });
  return y;
}

Graph::Var Graph::sigmoid(Var xv) {
  Tensor out = values_[xv];
  for (float& v : out.data) v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, xv, y] {
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Tensor& out = values_[y];
    Tensor& gx = grad_of(xv);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i] * out.data[i] * (1.0f - out.data[i]);
  });
  return y;
}

Graph::Var Graph::mul(Var av, Var bv) {
  const Tensor& a = values_[av];
  const Tensor& b = values_[bv];
  if (!a.same_shape(b)) throw ShapeError("mul: operand shapes differ");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, av, bv, y] {
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    const Tensor& a = values_[av];
    const Tensor& b = values_[bv];
    Tensor& ga = grad_of(av);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += gy.data[i] * b.data[i];
    Tensor& gb = grad_of(bv);
    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gy.data[i] * a.data[i];
  });
  return y;
}

Graph::Var Graph::concat(Var av, Var bv) {
  const Tensor& a = values_[av];
  const Tensor& b = values_[bv];
  if (a.height != b.height || a.width != b.width) throw ShapeError("concat: spatial sizes differ");
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, av, bv, y] {
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    Tensor& ga = grad_of(av);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += gy.data[i];
    Tensor& gb = grad_of(bv);
    const std::size_t off = ga.data.size();
    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gy.data[off + i];
  });
  return y;
}

Graph::Var Graph::resize(Var xv, int height, int width) {
  const Tensor& x = values_[xv];
  if (x.height == height && x.width == width) return xv;
  const auto ty = bilinear_taps(x.height, height);
  const auto tx = bilinear_taps(x.width, width);
  Tensor out(x.channels, height, width);
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.channel(c);
    float* dst = out.channel(c);
    for (int y = 0; y < height; ++y) {
      const Taps& a = ty[static_cast<std::size_t>(y)];
      const float* r0 = src + static_cast<std::size_t>(a.i0) * x.width;
      const float* r1 = src + static_cast<std::size_t>(a.i1) * x.width;
      for (int xx = 0; xx < width; ++xx) {
        const Taps& b = tx[static_cast<std::size_t>(xx)];
        dst[static_cast<std::size_t>(y) * width + xx] =
            a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  const Var y = push(std::move(out));
  if (!record_) return y;
  backward_.push_back([this, xv, y, ty, tx] {
    const Tensor& gy = grads_[y];
    if (gy.data.empty()) return;
    Tensor& gx = grad_of(xv);
    for (int c = 0; c < gx.channels; ++c) {
      const float* g = gy.channel(c);
      float* dst = gx.channel(c);
      for (int yy = 0; yy < gy.height; ++yy) {
        const Taps& a = ty[static_cast<std::size_t>(yy)];
        float* r0 = dst + static_cast<std::size_t>(a.i0) * gx.width;
        float* r1 = dst + static_cast<std::size_t>(a.i1) * gx.width;
        for (int xx = 0; xx < gy.width; ++xx) {
          const Taps& b = tx[static_cast<std::size_t>(xx)];
          const float v = g[static_cast<std::size_t>(yy) * gy.width + xx];
          r0[b.i0] += a.w0 * b.w0 * v;
          r0[b.i1] += a.w0 * b.w1 * v;
          r1[b.i0] += a.w1 * b.w0 * v;
          r1[b.i1] += a.w1 * b.w1 * v;
        }
      }
    }
  });
  return y;
}

void Graph::backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  if (!record_) throw ValidationError("backward on a graph that did not record");
  for (const auto& [v, g] : seeds) {
    if (!g.same_shape(values_[v])) throw ShapeError("backward: seed gradient shape mismatch");
    Tensor& dst = grad_of(v);
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
  }
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
}

}  // namespace adrs
