#include "spamri/tiny_unet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "spamri/error.hpp"
#include "spamri/tensor_io.hpp"

namespace spamri {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

struct Feature {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Feature() = default;
  Feature(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0f) {}
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline float silu_grad(float x) {
  const float s = 1.0f / (1.0f + std::exp(-x));
  return s * (1.0f + x * (1.0f - s));
}

Feature apply_silu(const Feature& pre) {
  Feature out = pre;
  for (auto& x : out.v) x = silu(x);
  return out;
}

void silu_backward_inplace(Feature& grad, const Feature& pre) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) grad.v[i] *= silu_grad(pre.v[i]);
}

// col has shape (c * 9, h * w), zero padding of one pixel.
void im2col(const Feature& in, std::vector<float>& col) {
  const int H = in.h;
  const int W = in.w;
  const std::size_t hw = in.plane();
  col.assign(static_cast<std::size_t>(in.c) * 9 * hw, 0.0f);
  for (int c = 0; c < in.c; ++c) {
    const float* src = in.v.data() + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* dst = col.data() + ((static_cast<std::size_t>(c) * 3 + ky) * 3 + kx) * hw;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const float* srow = src + static_cast<std::size_t>(sy) * W;
          float* drow = dst + static_cast<std::size_t>(y) * W;
          for (int x = x0; x < x1; ++x) drow[x] = srow[x + dx];
        }
      }
    }
  }
}

void col2im(const std::vector<float>& col, Feature& out) {
  const int H = out.h;
  const int W = out.w;
  const std::size_t hw = out.plane();
  std::fill(out.v.begin(), out.v.end(), 0.0f);
  for (int c = 0; c < out.c; ++c) {
    float* dst = out.v.data() + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* src = col.data() + ((static_cast<std::size_t>(c) * 3 + ky) * 3 + kx) * hw;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          float* drow = dst + static_cast<std::size_t>(sy) * W;
          const float* srow = src + static_cast<std::size_t>(y) * W;
          for (int x = x0; x < x1; ++x) drow[x + dx] += srow[x];
        }
      }
    }
  }
}

Feature avgpool(const Feature& in) {
  Feature out(in.c, in.h / 2, in.w / 2);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const std::size_t base = (static_cast<std::size_t>(c) * in.h + 2 * y) * in.w + 2 * x;
        out.v[(static_cast<std::size_t>(c) * out.h + y) * out.w + x] =
            0.25f * (in.v[base] + in.v[base + 1] + in.v[base + in.w] + in.v[base + in.w + 1]);
      }
    }
  }
  return out;
}

Feature avgpool_backward(const Feature& grad_out, int h, int w) {
  Feature g(grad_out.c, h, w);
  for (int c = 0; c < g.c; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        g.v[(static_cast<std::size_t>(c) * h + y) * w + x] =
            0.25f * grad_out.v[(static_cast<std::size_t>(c) * grad_out.h + y / 2) * grad_out.w + x / 2];
      }
    }
  }
  return g;
}

Feature upsample(const Feature& in) {
  Feature out(in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        out.v[(static_cast<std::size_t>(c) * out.h + y) * out.w + x] =
            in.v[(static_cast<std::size_t>(c) * in.h + y / 2) * in.w + x / 2];
      }
    }
  }
  return out;
}

Feature upsample_backward(const Feature& grad_out) {
  Feature g(grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int c = 0; c < grad_out.c; ++c) {
    for (int y = 0; y < grad_out.h; ++y) {
      for (int x = 0; x < grad_out.w; ++x) {
        g.v[(static_cast<std::size_t>(c) * g.h + y / 2) * g.w + x / 2] +=
            grad_out.v[(static_cast<std::size_t>(c) * grad_out.h + y) * grad_out.w + x];
      }
    }
  }
  return g;
}

// Parameter slots, resolved once per config.
struct ConvSlot {
  int weight = -1;
  int bias = -1;
  int cin = 0;
  int cout = 0;
};

struct Layout {
  int L = 0;
  int fc1_w = -1, fc1_b = -1;
  std::vector<int> temb_w, temb_b;
  std::vector<ConvSlot> enc1, enc2;  // per level
  std::vector<ConvSlot> dec1, dec2;  // per level 0..L-2
  ConvSlot out;
};

std::vector<NamedTensor> make_params(const TinyDenoiserConfig& cfg, Layout& lay) {
  std::vector<NamedTensor> p;
  auto add = [&p](std::string name, std::vector<int> dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    p.push_back({std::move(name), std::move(dims), std::vector<float>(n, 0.0f)});
    return static_cast<int>(p.size()) - 1;
  };
  auto add_conv = [&add](const std::string& name, int cin, int cout) {
    ConvSlot s;
    s.cin = cin;
    s.cout = cout;
    s.weight = add(name + ".w", {cout, cin, 3, 3});
    s.bias = add(name + ".b", {cout});
    return s;
  };

  const int L = cfg.levels;
  lay.L = L;
  lay.fc1_w = add("temb.fc1.w", {cfg.hidden_dim, cfg.embed_dim});
  lay.fc1_b = add("temb.fc1.b", {cfg.hidden_dim});
  lay.temb_w.resize(L);
  lay.temb_b.resize(L);
  for (int l = 0; l < L; ++l) {
    lay.temb_w[l] = add("temb.level" + std::to_string(l) + ".w", {cfg.width(l), cfg.hidden_dim});
    lay.temb_b[l] = add("temb.level" + std::to_string(l) + ".b", {cfg.width(l)});
  }
  lay.enc1.resize(L);
  lay.enc2.resize(L);
  for (int l = 0; l < L; ++l) {
    const int cin = l == 0 ? cfg.in_channels : cfg.width(l - 1);
    lay.enc1[l] = add_conv("enc" + std::to_string(l) + ".conv1", cin, cfg.width(l));
    lay.enc2[l] = add_conv("enc" + std::to_string(l) + ".conv2", cfg.width(l), cfg.width(l));
  }
  lay.dec1.resize(L - 1);
  lay.dec2.resize(L - 1);
  for (int l = L - 2; l >= 0; --l) {
    lay.dec1[l] = add_conv("dec" + std::to_string(l) + ".conv1", cfg.width(l + 1), cfg.width(l));
    lay.dec2[l] = add_conv("dec" + std::to_string(l) + ".conv2", cfg.width(l), cfg.width(l));
  }
  lay.out = add_conv("out", cfg.width(0), cfg.in_channels);
  return p;
}

Layout layout_for(const TinyDenoiserConfig& cfg) {
  Layout lay;
  make_params(cfg, lay);
  return lay;
}

std::vector<float> timestep_embedding(int t, int dim) {
  std::vector<float> e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[k] = static_cast<float>(std::sin(t * freq));
    e[k + half] = static_cast<float>(std::cos(t * freq));
  }
  return e;
}

struct ConvRecord {
  std::vector<float> col;
  Feature pre;  // pre-activation output
};

struct ForwardCache {
  std::vector<float> emb;
  std::vector<float> hidden_pre;
  std::vector<float> hidden;
  std::vector<ConvRecord> enc1, enc2, dec1, dec2;
  ConvRecord out;
  std::vector<std::array<int, 2>> level_hw;
};

void conv_forward(const std::vector<NamedTensor>& p, const ConvSlot& s, const Feature& in,
                  std::vector<float>& col, Feature& out) {
  im2col(in, col);
  const int hw = in.h * in.w;
  out.c = s.cout;
  out.h = in.h;
  out.w = in.w;
  out.v.resize(static_cast<std::size_t>(s.cout) * hw);
  ConstMatMap wmat(p[s.weight].values.data(), s.cout, s.cin * 9);
  ConstMatMap cmat(col.data(), s.cin * 9, hw);
  MatMap omat(out.v.data(), s.cout, hw);
  omat.noalias() = wmat * cmat;
  ConstVecMap bias(p[s.bias].values.data(), s.cout);
  omat.colwise() += bias;
}

// Accumulates weight/bias gradients and optionally returns the input gradient.
void conv_backward(const std::vector<NamedTensor>& p, std::vector<NamedTensor>& g, const ConvSlot& s,
                   const std::vector<float>& col, const Feature& grad_out, Feature* grad_in) {
  const int hw = grad_out.h * grad_out.w;
  ConstMatMap gout(grad_out.v.data(), s.cout, hw);
  ConstMatMap cmat(col.data(), s.cin * 9, hw);
  MatMap gw(g[s.weight].values.data(), s.cout, s.cin * 9);
  gw.noalias() += gout * cmat.transpose();
  // Plain loop: Eigen's vectorised row sum depends on buffer alignment, which
  // would make training results vary with heap layout.
  for (int c = 0; c < s.cout; ++c) {
    const float* row = grad_out.v.data() + static_cast<std::size_t>(c) * hw;
    g[s.bias].values[c] += std::accumulate(row, row + hw, 0.0f);
  }
  if (grad_in != nullptr) {
    thread_local std::vector<float> dcol;
    dcol.resize(static_cast<std::size_t>(s.cin) * 9 * hw);
    MatMap dmat(dcol.data(), s.cin * 9, hw);
    ConstMatMap wmat(p[s.weight].values.data(), s.cout, s.cin * 9);
    dmat.noalias() = wmat.transpose() * gout;
    *grad_in = Feature(s.cin, grad_out.h, grad_out.w);
    col2im(dcol, *grad_in);
  }
}

void add_channel_bias(Feature& f, const std::vector<float>& b) {
  const std::size_t hw = f.plane();
  for (int c = 0; c < f.c; ++c) {
    float* row = f.v.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] += b[c];
  }
}

Feature run_forward(const TinyDenoiserWeights& w, const Layout& lay, const Feature& x, int t,
                    ForwardCache* cache) {
  const auto& cfg = w.config();
  const auto& p = w.params();
  const int L = lay.L;

  // Timestep MLP.
  std::vector<float> emb = timestep_embedding(t, cfg.embed_dim);
  std::vector<float> hidden_pre(cfg.hidden_dim);
  {
    ConstMatMap w1(p[lay.fc1_w].values.data(), cfg.hidden_dim, cfg.embed_dim);
    VecMap hp(hidden_pre.data(), cfg.hidden_dim);
    hp.noalias() = w1 * ConstVecMap(emb.data(), cfg.embed_dim);
    hp += ConstVecMap(p[lay.fc1_b].values.data(), cfg.hidden_dim);
  }
  std::vector<float> hidden(hidden_pre);
  for (auto& v : hidden) v = silu(v);
  std::vector<std::vector<float>> temb(L);
  for (int l = 0; l < L; ++l) {
    const int wl = cfg.width(l);
    temb[l].resize(wl);
    ConstMatMap wt(p[lay.temb_w[l]].values.data(), wl, cfg.hidden_dim);
    VecMap tv(temb[l].data(), wl);
    tv.noalias() = wt * ConstVecMap(hidden.data(), cfg.hidden_dim);
    tv += ConstVecMap(p[lay.temb_b[l]].values.data(), wl);
  }

  // Buffers persist per thread so repeated calls do not churn the allocator.
  thread_local ForwardCache scratch;
  ForwardCache& c = cache != nullptr ? *cache : scratch;
  c.enc1.resize(L);
  c.enc2.resize(L);
  c.dec1.resize(std::max(0, L - 1));
  c.dec2.resize(std::max(0, L - 1));
  c.level_hw.assign(L, {0, 0});

  std::vector<Feature> skips(L);
  Feature cur = x;
  for (int l = 0; l < L; ++l) {
    if (l > 0) cur = avgpool(cur);
    c.level_hw[l] = {cur.h, cur.w};
    conv_forward(p, lay.enc1[l], cur, c.enc1[l].col, c.enc1[l].pre);
    add_channel_bias(c.enc1[l].pre, temb[l]);
    Feature a = apply_silu(c.enc1[l].pre);
    conv_forward(p, lay.enc2[l], a, c.enc2[l].col, c.enc2[l].pre);
    skips[l] = apply_silu(c.enc2[l].pre);
    cur = skips[l];
  }
  for (int l = L - 2; l >= 0; --l) {
    Feature u = upsample(cur);
    conv_forward(p, lay.dec1[l], u, c.dec1[l].col, c.dec1[l].pre);
    for (std::size_t i = 0; i < c.dec1[l].pre.v.size(); ++i) c.dec1[l].pre.v[i] += skips[l].v[i];
    Feature a = apply_silu(c.dec1[l].pre);
    conv_forward(p, lay.dec2[l], a, c.dec2[l].col, c.dec2[l].pre);
    cur = apply_silu(c.dec2[l].pre);
  }
  Feature out;
  conv_forward(p, lay.out, cur, c.out.col, out);

  if (cache != nullptr) {
    c.emb = std::move(emb);
    c.hidden_pre = std::move(hidden_pre);
    c.hidden = std::move(hidden);
  }
  return out;
}

void run_backward(const TinyDenoiserWeights& w, const Layout& lay, const ForwardCache& c,
                  const Feature& grad_out, std::vector<NamedTensor>& g) {
  const auto& cfg = w.config();
  const auto& p = w.params();
  const int L = lay.L;

  Feature d_cur;
  conv_backward(p, g, lay.out, c.out.col, grad_out, &d_cur);

  std::vector<Feature> d_skip(L);
  for (int l = 0; l <= L - 2; ++l) {
    silu_backward_inplace(d_cur, c.dec2[l].pre);
    Feature d_a;
    conv_backward(p, g, lay.dec2[l], c.dec2[l].col, d_cur, &d_a);
    silu_backward_inplace(d_a, c.dec1[l].pre);
    d_skip[l] = d_a;
    Feature d_u;
    conv_backward(p, g, lay.dec1[l], c.dec1[l].col, d_a, &d_u);
    d_cur = upsample_backward(d_u);
  }

  std::vector<float> d_hidden(cfg.hidden_dim, 0.0f);
  Feature d_in_next;
  for (int l = L - 1; l >= 0; --l) {
    Feature d_a2;
    if (l == L - 1) {
      d_a2 = std::move(d_cur);
    } else {
      d_a2 = avgpool_backward(d_in_next, c.level_hw[l][0], c.level_hw[l][1]);
      for (std::size_t i = 0; i < d_a2.v.size(); ++i) d_a2.v[i] += d_skip[l].v[i];
    }
    silu_backward_inplace(d_a2, c.enc2[l].pre);
    Feature d_a;
    conv_backward(p, g, lay.enc2[l], c.enc2[l].col, d_a2, &d_a);
    silu_backward_inplace(d_a, c.enc1[l].pre);

    // Timestep bias for this level.
    const int wl = cfg.width(l);
    std::vector<float> d_temb(wl, 0.0f);
    const std::size_t hw = d_a.plane();
    for (int ch = 0; ch < wl; ++ch) {
      const float* row = d_a.v.data() + ch * hw;
      d_temb[ch] = std::accumulate(row, row + hw, 0.0f);
    }
    {
      MatMap gw(g[lay.temb_w[l]].values.data(), wl, cfg.hidden_dim);
      ConstVecMap dt(d_temb.data(), wl);
      gw.noalias() += dt * ConstVecMap(c.hidden.data(), cfg.hidden_dim).transpose();
      VecMap(g[lay.temb_b[l]].values.data(), wl) += dt;
      ConstMatMap wt(p[lay.temb_w[l]].values.data(), wl, cfg.hidden_dim);
      VecMap(d_hidden.data(), cfg.hidden_dim).noalias() += wt.transpose() * dt;
    }

    Feature d_in;
    conv_backward(p, g, lay.enc1[l], c.enc1[l].col, d_a, l > 0 ? &d_in : nullptr);
    d_in_next = std::move(d_in);
  }

  for (int i = 0; i < cfg.hidden_dim; ++i) d_hidden[i] *= silu_grad(c.hidden_pre[i]);
  MatMap gw1(g[lay.fc1_w].values.data(), cfg.hidden_dim, cfg.embed_dim);
  ConstVecMap dh(d_hidden.data(), cfg.hidden_dim);
  gw1.noalias() += dh * ConstVecMap(c.emb.data(), cfg.embed_dim).transpose();
  VecMap(g[lay.fc1_b].values.data(), cfg.hidden_dim) += dh;
}

void check_input(const TinyDenoiserConfig& cfg, const PseudoRealStack& x) {
  const int div = 1 << (cfg.levels - 1);
  if (x.channels() != cfg.in_channels || x.rows() % div != 0 || x.cols() % div != 0) {
    throw Error(ErrorCode::ShapeMismatch,
                "tiny denoiser expects " + std::to_string(cfg.in_channels) +
                    " channels and rows/cols divisible by " + std::to_string(div));
  }
}

Feature to_feature(const PseudoRealStack& x) {
  Feature f(x.channels(), x.rows(), x.cols());
  for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = static_cast<float>(x[i]);
  return f;
}

}  // namespace

int TinyDenoiserConfig::width(int level) const { return std::min(64, base_width << level); }

void TinyDenoiserConfig::validate() const {
  if (in_channels < 1 || base_width < 1 || base_width > 64 || levels < 1 || levels > 6 ||
      embed_dim < 2 || embed_dim % 2 != 0 || hidden_dim < 1) {
    throw Error(ErrorCode::InvalidParameter, "invalid tiny denoiser configuration");
  }
}

TinyDenoiserWeights::TinyDenoiserWeights(const TinyDenoiserConfig& cfg) : config_(cfg) {
  cfg.validate();
  Layout lay;
  params_ = make_params(cfg, lay);
}

const NamedTensor& TinyDenoiserWeights::param(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::InvalidParameter, "no parameter named " + std::string(name));
}

NamedTensor& TinyDenoiserWeights::param(std::string_view name) {
  return const_cast<NamedTensor&>(std::as_const(*this).param(name));
}

std::size_t TinyDenoiserWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values.size();
  return n;
}

bool TinyDenoiserWeights::all_finite() const {
  for (const auto& p : params_) {
    for (float v : p.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

namespace {

// Gradient of mean((eps - target)^2) / batch, accumulated into grad.
double loss_grad_impl(const TinyDenoiserWeights& w, const Layout& lay, const PseudoRealStack& x_t, int t,
                      const PseudoRealStack& target, TinyDenoiserWeights& grad, float batch) {
  thread_local ForwardCache cache;
  const Feature pred = run_forward(w, lay, to_feature(x_t), t, &cache);
  const std::size_t n = pred.v.size();
  Feature dout(pred.c, pred.h, pred.w);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float diff = pred.v[i] - static_cast<float>(target[i]);
    loss += static_cast<double>(diff) * diff;
    dout.v[i] = 2.0f * diff / (static_cast<float>(n) * batch);
  }
  run_backward(w, lay, cache, dout, grad.params());
  return loss / static_cast<double>(n);
}

}  // namespace

double tiny_denoiser_loss_grad(const TinyDenoiserWeights& w, const PseudoRealStack& x_t, int t,
                               const PseudoRealStack& target, TinyDenoiserWeights& grad) {
  check_input(w.config(), x_t);
  require_same_shape(x_t, target, "tiny_denoiser_loss_grad");
  if (!(grad.config() == w.config()) || grad.params().size() != w.params().size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer has a different architecture");
  }
  return loss_grad_impl(w, layout_for(w.config()), x_t, t, target, grad, 1.0f);
}

TinyDenoiserWeights init_tiny_denoiser(const TinyDenoiserConfig& cfg, std::uint64_t seed) {
  TinyDenoiserWeights w(cfg);
  std::mt19937_64 rng(seed);
  for (auto& p : w.params()) {
    if (p.dims.size() < 2) continue;  // biases stay zero
    int fan_in = 1;
    for (std::size_t i = 1; i < p.dims.size(); ++i) fan_in *= p.dims[i];
    const float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : p.values) v = dist(rng);
  }
  return w;
}

PseudoRealStack tiny_denoiser_eps(const TinyDenoiserWeights& w, const PseudoRealStack& x_t, int t) {
  check_input(w.config(), x_t);
  const Layout lay = layout_for(w.config());
  const Feature out = run_forward(w, lay, to_feature(x_t), t, nullptr);
  PseudoRealStack result(x_t.channels(), x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = out.v[i];
  return result;
}

TrainResult train_tiny_denoiser(std::span<const PseudoRealStack> dataset, const NoiseSchedule& s,
                                const TrainOptions& opts) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "training needs at least one sample");
  if (opts.epochs < 0 || opts.batch_size < 1 || !(opts.lr > 0.0) || !(opts.ema_decay >= 0.0 && opts.ema_decay < 1.0)) {
    throw Error(ErrorCode::InvalidParameter,
                "epochs >= 0, batch_size >= 1, lr > 0 and ema_decay in [0, 1) are required");
  }
  TinyDenoiserConfig cfg = opts.model;
  cfg.in_channels = dataset.front().channels();
  for (const auto& x : dataset) {
    check_input(cfg, x);
    require_same_shape(x, dataset.front(), "training samples must share a shape");
  }

  TrainResult result{init_tiny_denoiser(cfg, opts.seed), {}};
  TinyDenoiserWeights& w = result.weights;
  const Layout lay = layout_for(cfg);

  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick_t(0, s.steps() - 1);
  std::normal_distribution<float> gauss(0.0f, 1.0f);

  TinyDenoiserWeights grad(cfg);
  TinyDenoiserWeights m1(cfg);
  TinyDenoiserWeights m2(cfg);
  long step = 0;
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;

  const std::size_t batches_per_epoch = (dataset.size() + opts.batch_size - 1) / opts.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch) * opts.epochs;
  TinyDenoiserWeights ema = w;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t n_el = dataset.front().size();

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      const auto batch = static_cast<float>(stop - start);
      for (auto& gp : grad.params()) std::fill(gp.values.begin(), gp.values.end(), 0.0f);

      for (std::size_t b = start; b < stop; ++b) {
        const PseudoRealStack& x0 = dataset[order[b]];
        const int t = pick_t(rng);
        const float sa = static_cast<float>(std::sqrt(s.alpha_bar(t)));
        const float sn = static_cast<float>(std::sqrt(1.0 - s.alpha_bar(t)));
        PseudoRealStack xt(x0.channels(), x0.rows(), x0.cols());
        PseudoRealStack noise(x0.channels(), x0.rows(), x0.cols());
        for (std::size_t i = 0; i < n_el; ++i) {
          noise[i] = gauss(rng);
          xt[i] = sa * static_cast<float>(x0[i]) + sn * static_cast<float>(noise[i]);
        }
        loss_sum += loss_grad_impl(w, lay, xt, t, noise, grad, batch);
      }

      const double lr = opts.cosine_decay
                            ? opts.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps))
                            : opts.lr;
      ++step;
      auto& params = w.params();
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& pv = params[k].values;
        const auto& gv = grad.params()[k].values;
        if (opts.optimizer == OptimizerKind::Sgd) {
          for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= static_cast<float>(lr) * gv[i];
          continue;
        }
        auto& mv = m1.params()[k].values;
        auto& vv = m2.params()[k].values;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        const float lr_t = static_cast<float>(lr * std::sqrt(c2) / c1);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          mv[i] = static_cast<float>(beta1) * mv[i] + static_cast<float>(1.0 - beta1) * gv[i];
          vv[i] = static_cast<float>(beta2) * vv[i] + static_cast<float>(1.0 - beta2) * gv[i] * gv[i];
          pv[i] -= lr_t * mv[i] / (std::sqrt(vv[i]) + static_cast<float>(adam_eps));
        }
      }
      if (opts.ema_decay > 0.0) {
        const auto d = static_cast<float>(opts.ema_decay);
        for (std::size_t k = 0; k < params.size(); ++k) {
          auto& ev = ema.params()[k].values;
          const auto& pv = params[k].values;
          for (std::size_t i = 0; i < ev.size(); ++i) ev[i] = d * ev[i] + (1.0f - d) * pv[i];
        }
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(dataset.size());
    result.epoch_losses.push_back(epoch_loss);
    if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
  }
  if (opts.ema_decay > 0.0 && opts.epochs > 0) w = std::move(ema);
  return result;
}

TinyDenoiser::TinyDenoiser(TinyDenoiserWeights w) : weights_(std::move(w)) {
  weights_.config().validate();
  if (!weights_.all_finite()) throw Error(ErrorCode::InvalidParameter, "weights contain non-finite values");
}

PseudoRealStack TinyDenoiser::eps(const PseudoRealStack& x_t, int t) const {
  return tiny_denoiser_eps(weights_, x_t, t);
}

namespace {
constexpr std::array<char, 4> kWeightsMagic{'S', 'P', 'A', 'W'};

void write_record(std::ostream& os, const std::string& name, const std::vector<int>& dims,
                  std::span<const float> values) {
  detail::write_le_u16(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  std::vector<std::uint64_t> d(dims.begin(), dims.end());
  detail::write_dims(os, d);
  detail::write_f32_payload(os, values);
}
}  // namespace

void save_weights(const std::filesystem::path& path, const TinyDenoiserWeights& w) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os.write(kWeightsMagic.data(), kWeightsMagic.size());
  detail::write_le_u16(os, TinyDenoiserWeights::kFormatVersion);
  const auto& cfg = w.config();
  const std::array<float, 5> meta{static_cast<float>(cfg.in_channels), static_cast<float>(cfg.base_width),
                                  static_cast<float>(cfg.levels), static_cast<float>(cfg.embed_dim),
                                  static_cast<float>(cfg.hidden_dim)};
  write_record(os, "config", {5}, meta);
  for (const auto& p : w.params()) write_record(os, p.name, p.dims, p.values);
  if (!os) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

TinyDenoiserWeights load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kWeightsMagic) throw Error(ErrorCode::Format, "bad SPAW magic");
  const auto version = detail::read_le_u16(is);
  if (version != TinyDenoiserWeights::kFormatVersion) {
    throw Error(ErrorCode::Format, "unsupported weight format version " + std::to_string(version));
  }

  std::vector<NamedTensor> records;
  while (is.peek() != std::char_traits<char>::eof()) {
    NamedTensor rec;
    const auto len = detail::read_le_u16(is);
    rec.name.resize(len);
    is.read(rec.name.data(), len);
    if (!is) throw Error(ErrorCode::Format, "truncated record name");
    const auto dims = detail::read_dims(is);
    std::size_t n = 1;
    for (auto d : dims) {
      rec.dims.push_back(static_cast<int>(d));
      n *= static_cast<std::size_t>(d);
    }
    rec.values = detail::read_f32_payload(is, n);
    records.push_back(std::move(rec));
  }
  if (records.empty() || records.front().name != "config" || records.front().values.size() != 5) {
    throw Error(ErrorCode::Format, "weight file lacks a config record");
  }
  const auto& meta = records.front().values;
  TinyDenoiserConfig cfg;
  cfg.in_channels = static_cast<int>(meta[0]);
  cfg.base_width = static_cast<int>(meta[1]);
  cfg.levels = static_cast<int>(meta[2]);
  cfg.embed_dim = static_cast<int>(meta[3]);
  cfg.hidden_dim = static_cast<int>(meta[4]);
  TinyDenoiserWeights w(cfg);
  if (records.size() != w.params().size() + 1) {
    throw Error(ErrorCode::Format, "weight file has the wrong number of records");
  }
  for (std::size_t i = 0; i < w.params().size(); ++i) {
    auto& dst = w.params()[i];
    auto& src = records[i + 1];
    if (src.name != dst.name || src.dims != dst.dims) {
      throw Error(ErrorCode::Format, "unexpected record " + src.name);
    }
    dst.values = std::move(src.values);
  }
  if (!w.all_finite()) throw Error(ErrorCode::Format, "weight file contains non-finite values");
  return w;
}

}  // namespace spamri
