#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "upv/error.hpp"
#include "upv/rng.hpp"
#include "upv/tensor.hpp"

namespace upv {

// Architecture constants shared by the generation and detection networks:
// token embeddings are 64-wide, the classifier hidden width is 64, the
// recurrent hidden width is 128.
inline constexpr int kEmbedDim = 64;
inline constexpr int kFfnHidden = 64;
inline constexpr int kLstmHidden = 128;
inline constexpr int kEmbedLayers = 5;

enum class activation { none, relu, sigmoid };

inline const char* activation_name(activation a) {
  switch (a) {
    case activation::none: return "none";
    case activation::relu: return "relu";
    case activation::sigmoid: return "sigmoid";
  }
  return "?";
}

template <class T>
inline T sigmoid(T x) {
  if (x >= T{0}) {
    T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  T e = std::exp(x);
  return e / (T{1} + e);
}

/// Numerically clamped binary cross entropy: -[y log p + (1-y) log(1-p)],
/// p clamped to [1e-7, 1 - 1e-7].
template <class T>
inline T bce_loss(T p, int y) {
  const T lo = static_cast<T>(1e-7);
  const T hi = T{1} - lo;
  if (p < lo) p = lo;
  if (p > hi) p = hi;
  return y ? -std::log(p) : -std::log(T{1} - p);
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

template <class T>
struct dense_layer_t {
  tensor_t<T> w;  // [out x in]
  tensor_t<T> b;  // [out]
  activation act = activation::none;

  dense_layer_t() = default;
  dense_layer_t(int out, int in, activation a)
      : w({out, in}), b({out}), act(a) {}

  int in_dim() const { return w.cols(); }
  int out_dim() const { return w.rows(); }
  std::int64_t param_count() const { return w.numel() + b.numel(); }
};

template <class T>
struct dense_cache_t {
  std::vector<T> input;
  std::vector<T> pre;  // pre-activation
  bool recorded = false;
};

template <class T>
inline void dense_forward(const dense_layer_t<T>& layer, std::span<const T> x, std::span<T> y,
                          dense_cache_t<T>* cache = nullptr) {
  require(static_cast<int>(x.size()) == layer.in_dim(), errc::shape_mismatch,
          "dense input dim " + std::to_string(x.size()) + " != " + std::to_string(layer.in_dim()));
  require(static_cast<int>(y.size()) == layer.out_dim(), errc::shape_mismatch,
          "dense output dim mismatch");
  matvec_bias(layer.w, x.data(), layer.b.data.data(), y.data());
  if (cache) {
    cache->input.assign(x.begin(), x.end());
    cache->pre.assign(y.begin(), y.end());
    cache->recorded = true;
  }
  switch (layer.act) {
    case activation::none:
      break;
    case activation::relu:
      for (auto& v : y) v = v > T{0} ? v : T{0};
      break;
    case activation::sigmoid:
      for (auto& v : y) v = sigmoid(v);
      break;
  }
}

template <class T>
inline std::vector<T> dense_forward(const dense_layer_t<T>& layer, std::span<const T> x,
                                    dense_cache_t<T>* cache = nullptr) {
  std::vector<T> y(static_cast<std::size_t>(layer.out_dim()));
  dense_forward(layer, x, std::span<T>(y), cache);
  return y;
}

template <class T>
struct dense_grads_t {
  tensor_t<T> w;
  tensor_t<T> b;

  explicit dense_grads_t(const dense_layer_t<T>& layer)
      : w(layer.w.shape), b(layer.b.shape) {}
  dense_grads_t() = default;

  void zero() {
    w.fill(T{});
    b.fill(T{});
  }
};

/// Accumulates parameter gradients into `grads` and returns dL/dx.
/// `dy` is dL/d(output after activation).
template <class T>
inline void dense_backward(const dense_layer_t<T>& layer, const dense_cache_t<T>& cache,
                           std::span<const T> dy, dense_grads_t<T>& grads,
                           std::span<T> dx_out) {
  require(cache.recorded, errc::no_forward_recorded, "dense_backward without recorded forward");
  const int out = layer.out_dim();
  const int in = layer.in_dim();
  require(static_cast<int>(dy.size()) == out, errc::shape_mismatch, "dense dy dim mismatch");

  // dL/d(pre-activation)
  std::vector<T> dpre(dy.begin(), dy.end());
  switch (layer.act) {
    case activation::none:
      break;
    case activation::relu:
      for (int o = 0; o < out; ++o) {
        if (cache.pre[static_cast<std::size_t>(o)] <= T{0}) dpre[static_cast<std::size_t>(o)] = T{};
      }
      break;
    case activation::sigmoid:
      for (int o = 0; o < out; ++o) {
        T s = sigmoid(cache.pre[static_cast<std::size_t>(o)]);
        dpre[static_cast<std::size_t>(o)] *= s * (T{1} - s);
      }
      break;
  }

  for (int o = 0; o < out; ++o) {
    grads.b.data[static_cast<std::size_t>(o)] += dpre[static_cast<std::size_t>(o)];
    axpy(dpre[static_cast<std::size_t>(o)], cache.input.data(), grads.w.row(o), in);
  }
  if (!dx_out.empty()) {
    require(static_cast<int>(dx_out.size()) == in, errc::shape_mismatch, "dense dx dim mismatch");
    for (int o = 0; o < out; ++o) axpy(dpre[static_cast<std::size_t>(o)], layer.w.row(o), dx_out.data(), in);
  }
}

// ---------------------------------------------------------------------------
// LSTM layer (standard cell: i,f,o sigmoid gates, g tanh, c' = f.c + i.g,
// h' = o.tanh(c')). Gate weights are packed [4H x in] / [4H x H] in the
// order i, f, g, o.
// ---------------------------------------------------------------------------

template <class T>
struct lstm_layer_t {
  int input_dim = 0;
  int hidden_dim = 0;
  tensor_t<T> w;  // [4H x input]
  tensor_t<T> u;  // [4H x hidden]
  tensor_t<T> b;  // [4H]

  lstm_layer_t() = default;
  lstm_layer_t(int in, int hidden)
      : input_dim(in), hidden_dim(hidden), w({4 * hidden, in}), u({4 * hidden, hidden}),
        b({4 * hidden}) {}

  std::int64_t param_count() const { return w.numel() + u.numel() + b.numel(); }
};

template <class T>
struct lstm_step_cache_t {
  std::vector<T> x;
  std::vector<T> h_prev;
  std::vector<T> c_prev;
  std::vector<T> gates;   // post-nonlinearity, packed i,f,g,o
  std::vector<T> c;       // new cell state
  std::vector<T> tanh_c;  // tanh of new cell state
};

template <class T>
inline void lstm_step(const lstm_layer_t<T>& layer, std::span<const T> x, std::span<const T> h,
                      std::span<const T> c, std::span<T> h_out, std::span<T> c_out,
                      lstm_step_cache_t<T>* cache = nullptr) {
  const int hid = layer.hidden_dim;
  require(static_cast<int>(x.size()) == layer.input_dim, errc::shape_mismatch, "lstm x dim");
  require(static_cast<int>(h.size()) == hid && static_cast<int>(c.size()) == hid,
          errc::shape_mismatch, "lstm state dim");

  std::vector<T> a(static_cast<std::size_t>(4 * hid));
  matvec_bias(layer.w, x.data(), layer.b.data.data(), a.data());
  matvec_add(layer.u, h.data(), a.data());

  T* gi = a.data();
  T* gf = a.data() + hid;
  T* gg = a.data() + 2 * hid;
  T* go = a.data() + 3 * hid;
  for (int j = 0; j < hid; ++j) {
    gi[j] = sigmoid(gi[j]);
    gf[j] = sigmoid(gf[j]);
    gg[j] = std::tanh(gg[j]);
    go[j] = sigmoid(go[j]);
  }
  for (int j = 0; j < hid; ++j) c_out[j] = gf[j] * c[j] + gi[j] * gg[j];
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h.begin(), h.end());
    cache->c_prev.assign(c.begin(), c.end());
    cache->gates.assign(a.begin(), a.end());
    cache->c.assign(c_out.begin(), c_out.end());
    cache->tanh_c.resize(static_cast<std::size_t>(hid));
  }
  for (int j = 0; j < hid; ++j) {
    T tc = std::tanh(c_out[j]);
    if (cache) cache->tanh_c[static_cast<std::size_t>(j)] = tc;
    h_out[j] = go[j] * tc;
  }
}

template <class T>
struct lstm_grads_t {
  tensor_t<T> w;
  tensor_t<T> u;
  tensor_t<T> b;

  explicit lstm_grads_t(const lstm_layer_t<T>& layer)
      : w(layer.w.shape), u(layer.u.shape), b(layer.b.shape) {}
  lstm_grads_t() = default;

  void zero() {
    w.fill(T{});
    u.fill(T{});
    b.fill(T{});
  }
};

/// One step of backpropagation through time. `dh` is dL/dh_t (including any
/// recurrent contribution already added by the caller), `dc` is the running
/// dL/dc_t. Outputs: gradients accumulated, dx, and dh_prev/dc_prev for the
/// next (earlier) step.
template <class T>
inline void lstm_step_backward(const lstm_layer_t<T>& layer, const lstm_step_cache_t<T>& cache,
                               std::span<const T> dh, std::span<T> dc, lstm_grads_t<T>& grads,
                               std::span<T> dx_out, std::span<T> dh_prev, std::span<T> dc_prev) {
  require(!cache.gates.empty(), errc::no_forward_recorded, "lstm backward without recorded step");
  const int hid = layer.hidden_dim;
  const T* gi = cache.gates.data();
  const T* gf = cache.gates.data() + hid;
  const T* gg = cache.gates.data() + 2 * hid;
  const T* go = cache.gates.data() + 3 * hid;

  std::vector<T> da(static_cast<std::size_t>(4 * hid));
  T* dai = da.data();
  T* daf = da.data() + hid;
  T* dag = da.data() + 2 * hid;
  T* dao = da.data() + 3 * hid;

  for (int j = 0; j < hid; ++j) {
    const T tc = cache.tanh_c[static_cast<std::size_t>(j)];
    const T dct = dc[j] + dh[j] * go[j] * (T{1} - tc * tc);
    const T d_o = dh[j] * tc;
    const T d_i = dct * gg[j];
    const T d_g = dct * gi[j];
    const T d_f = dct * cache.c_prev[static_cast<std::size_t>(j)];
    dc_prev[j] = dct * gf[j];
    dai[j] = d_i * gi[j] * (T{1} - gi[j]);
    daf[j] = d_f * gf[j] * (T{1} - gf[j]);
    dag[j] = d_g * (T{1} - gg[j] * gg[j]);
    dao[j] = d_o * go[j] * (T{1} - go[j]);
  }

  for (int r = 0; r < 4 * hid; ++r) {
    const T d = da[static_cast<std::size_t>(r)];
    grads.b.data[static_cast<std::size_t>(r)] += d;
    axpy(d, cache.x.data(), grads.w.row(r), layer.input_dim);
    axpy(d, cache.h_prev.data(), grads.u.row(r), hid);
  }
  if (!dx_out.empty()) {
    matvec_transpose_add(layer.w, da.data(), dx_out.data());
  }
  std::fill(dh_prev.begin(), dh_prev.end(), T{});
  matvec_transpose_add(layer.u, da.data(), dh_prev.data());
}

// ---------------------------------------------------------------------------
// Adam optimizer (bias-corrected moments, beta1 0.9, beta2 0.999, eps 1e-8)
// ---------------------------------------------------------------------------

template <class T>
struct adam_t {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<tensor_t<T>> m;
  std::vector<tensor_t<T>> v;

  void init(const std::vector<tensor_t<T>*>& params) {
    m.clear();
    v.clear();
    for (const tensor_t<T>* p : params) {
      m.emplace_back(p->shape);
      v.emplace_back(p->shape);
    }
  }

  void update(const std::vector<tensor_t<T>*>& params, const std::vector<const tensor_t<T>*>& grads) {
    require(params.size() == grads.size() && params.size() == m.size(), errc::shape_mismatch,
            "adam: parameter/gradient count mismatch");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      tensor_t<T>& p = *params[k];
      const tensor_t<T>& g = *grads[k];
      require(p.same_shape(g), errc::shape_mismatch, "adam: gradient shape mismatch");
      T* pd = p.data.data();
      const T* gd = g.data.data();
      T* md = m[k].data.data();
      T* vd = v[k].data.data();
      const std::size_t n = p.data.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(gd[i]);
        const double mi = beta1 * static_cast<double>(md[i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(vd[i]) + (1.0 - beta2) * gi * gi;
        md[i] = static_cast<T>(mi);
        vd[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        pd[i] = static_cast<T>(static_cast<double>(pd[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Glorot-uniform weights in [-sqrt(6/(fan_in+fan_out)), +...], zero biases.
template <class T>
inline void glorot_init(tensor_t<T>& w, int fan_in, int fan_out, seeded_rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data) v = static_cast<T>(rng.next_uniform(-limit, limit));
}

template <class T>
inline void init_dense(dense_layer_t<T>& layer, seeded_rng& rng) {
  glorot_init(layer.w, layer.in_dim(), layer.out_dim(), rng);
  layer.b.fill(T{});
}

template <class T>
inline void init_lstm(lstm_layer_t<T>& layer, seeded_rng& rng) {
  // Each of the four gate blocks is its own [H x in] / [H x H] matrix.
  const int hid = layer.hidden_dim;
  const double wl = std::sqrt(6.0 / static_cast<double>(layer.input_dim + hid));
  const double ul = std::sqrt(6.0 / static_cast<double>(hid + hid));
  for (auto& v : layer.w.data) v = static_cast<T>(rng.next_uniform(-wl, wl));
  for (auto& v : layer.u.data) v = static_cast<T>(rng.next_uniform(-ul, ul));
  layer.b.fill(T{});
}

}  // namespace upv
