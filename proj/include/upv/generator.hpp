#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "upv/config.hpp"
#include "upv/error.hpp"
#include "upv/nn.hpp"
#include "upv/parallel.hpp"
#include "upv/rng.hpp"

namespace upv {

/// Anything that can assign a 0/1 watermark label to a w-token window.
template <class L>
concept window_labeler = requires(const L& l, std::span<const token_id> w) {
  { l.label(w) } -> std::convertible_to<int>;
};

/// The watermark generation network: a shared token-embedding MLP
/// (bit_width -> 64, then 64 -> 64 four times) followed by a classifier over
/// the concatenated window embeddings (64w -> 64 -> 64 -> 1, sigmoid output).
template <class T>
struct generator_network_t {
  watermark_config config;
  std::array<dense_layer_t<T>, kEmbedLayers> embedding;
  std::array<dense_layer_t<T>, 3> ffn;

  static generator_network_t init(const watermark_config& cfg, seeded_rng rng) {
    cfg.validate();
    generator_network_t net;
    net.config = cfg;
    net.embedding[0] = dense_layer_t<T>(kEmbedDim, cfg.vocab.bit_width, activation::relu);
    for (int i = 1; i < kEmbedLayers; ++i) {
      net.embedding[static_cast<std::size_t>(i)] = dense_layer_t<T>(kEmbedDim, kEmbedDim, activation::relu);
    }
    net.ffn[0] = dense_layer_t<T>(kFfnHidden, kEmbedDim * cfg.window, activation::relu);
    net.ffn[1] = dense_layer_t<T>(kFfnHidden, kFfnHidden, activation::relu);
    // Final layer kept linear; the sigmoid is applied at network level so
    // training can feed d/d(logit) = p - y without dividing by p(1-p).
    net.ffn[2] = dense_layer_t<T>(1, kFfnHidden, activation::none);
    for (auto& l : net.embedding) init_dense(l, rng);
    for (auto& l : net.ffn) init_dense(l, rng);
    return net;
  }

  std::vector<T> embed_token(token_id t) const {
    bit_vector bits = encode_token_binary(t, config.vocab);
    std::vector<T> x(bits.begin(), bits.end());
    for (const auto& l : embedding) x = dense_forward(l, std::span<const T>(x));
    return x;
  }

  void check_window(std::span<const token_id> window) const {
    require(static_cast<int>(window.size()) == config.window, errc::window_size_mismatch,
            "window length " + std::to_string(window.size()) + " != " +
                std::to_string(config.window));
    for (token_id t : window) {
      require(t < config.vocab.size, errc::out_of_vocab, "token " + std::to_string(t));
    }
  }

  /// Watermark score in (0,1) for a full window of `config.window` tokens.
  T forward(std::span<const token_id> window) const {
    check_window(window);
    std::vector<T> concat(static_cast<std::size_t>(kEmbedDim) * window.size());
    for (std::size_t p = 0; p < window.size(); ++p) {
      std::vector<T> e = embed_token(window[p]);
      std::copy(e.begin(), e.end(), concat.begin() + static_cast<std::ptrdiff_t>(p * kEmbedDim));
    }
    std::vector<T> h(concat);
    for (const auto& l : ffn) h = dense_forward(l, std::span<const T>(h));
    return sigmoid(h[0]);
  }

  /// Hard label: 1 iff score >= 0.5 (ties label 1).
  int label(std::span<const token_id> window) const { return forward(window) >= T{0.5} ? 1 : 0; }

  std::vector<tensor_t<T>*> params(bool include_embedding = true) {
    std::vector<tensor_t<T>*> out;
    if (include_embedding) {
      for (auto& l : embedding) {
        out.push_back(&l.w);
        out.push_back(&l.b);
      }
    }
    for (auto& l : ffn) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& l : embedding) n += l.param_count();
    for (const auto& l : ffn) n += l.param_count();
    return n;
  }
};

using generator_network = generator_network_t<float>;

// --------------------------------------------------------------------------
// Training-path forward/backward with recorded intermediates
// --------------------------------------------------------------------------

template <class T>
struct generator_cache_t {
  std::vector<std::array<dense_cache_t<T>, kEmbedLayers>> embed;  // per window position
  std::array<dense_cache_t<T>, 3> ffn;
  bool recorded = false;
};

template <class T>
struct generator_grads_t {
  std::array<dense_grads_t<T>, kEmbedLayers> embedding;
  std::array<dense_grads_t<T>, 3> ffn;

  explicit generator_grads_t(const generator_network_t<T>& net) {
    for (std::size_t i = 0; i < kEmbedLayers; ++i) embedding[i] = dense_grads_t<T>(net.embedding[i]);
    for (std::size_t i = 0; i < 3; ++i) ffn[i] = dense_grads_t<T>(net.ffn[i]);
  }

  void zero() {
    for (auto& g : embedding) g.zero();
    for (auto& g : ffn) g.zero();
  }

  void add(const generator_grads_t& o) {
    for (std::size_t i = 0; i < kEmbedLayers; ++i) {
      for (std::size_t k = 0; k < embedding[i].w.data.size(); ++k) embedding[i].w.data[k] += o.embedding[i].w.data[k];
      for (std::size_t k = 0; k < embedding[i].b.data.size(); ++k) embedding[i].b.data[k] += o.embedding[i].b.data[k];
    }
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < ffn[i].w.data.size(); ++k) ffn[i].w.data[k] += o.ffn[i].w.data[k];
      for (std::size_t k = 0; k < ffn[i].b.data.size(); ++k) ffn[i].b.data[k] += o.ffn[i].b.data[k];
    }
  }

  void scale(T s) {
    for (auto& g : embedding) {
      for (auto& v : g.w.data) v *= s;
      for (auto& v : g.b.data) v *= s;
    }
    for (auto& g : ffn) {
      for (auto& v : g.w.data) v *= s;
      for (auto& v : g.b.data) v *= s;
    }
  }

  std::vector<const tensor_t<T>*> tensors(bool include_embedding = true) const {
    std::vector<const tensor_t<T>*> out;
    if (include_embedding) {
      for (const auto& g : embedding) {
        out.push_back(&g.w);
        out.push_back(&g.b);
      }
    }
    for (const auto& g : ffn) {
      out.push_back(&g.w);
      out.push_back(&g.b);
    }
    return out;
  }
};

template <class T>
inline T generator_forward_cached(const generator_network_t<T>& net,
                                  std::span<const token_id> window, generator_cache_t<T>& cache) {
  net.check_window(window);
  const std::size_t w = window.size();
  cache.embed.resize(w);
  std::vector<T> concat(static_cast<std::size_t>(kEmbedDim) * w);
  for (std::size_t p = 0; p < w; ++p) {
    bit_vector bits = encode_token_binary(window[p], net.config.vocab);
    std::vector<T> x(bits.begin(), bits.end());
    for (std::size_t li = 0; li < kEmbedLayers; ++li) {
      x = dense_forward(net.embedding[li], std::span<const T>(x), &cache.embed[p][li]);
    }
    std::copy(x.begin(), x.end(), concat.begin() + static_cast<std::ptrdiff_t>(p * kEmbedDim));
  }
  std::vector<T> h(concat);
  for (std::size_t li = 0; li < 3; ++li) {
    h = dense_forward(net.ffn[li], std::span<const T>(h), &cache.ffn[li]);
  }
  cache.recorded = true;
  return sigmoid(h[0]);
}

/// Backpropagates dL/d(logit) (the pre-sigmoid output) through the classifier
/// and (optionally) the shared embedding, accumulating into `grads`.
template <class T>
inline void generator_backward(const generator_network_t<T>& net, const generator_cache_t<T>& cache,
                               T d_logit, generator_grads_t<T>& grads,
                               bool include_embedding = true) {
  require(cache.recorded, errc::no_forward_recorded, "generator backward without forward");
  const std::size_t w = cache.embed.size();

  std::vector<T> d1{d_logit};
  std::vector<T> d_h2(static_cast<std::size_t>(kFfnHidden));
  dense_backward(net.ffn[2], cache.ffn[2], std::span<const T>(d1), grads.ffn[2], std::span<T>(d_h2));
  std::vector<T> d_h1(static_cast<std::size_t>(kFfnHidden));
  dense_backward(net.ffn[1], cache.ffn[1], std::span<const T>(d_h2), grads.ffn[1], std::span<T>(d_h1));
  std::vector<T> d_concat(static_cast<std::size_t>(kEmbedDim) * w);
  dense_backward(net.ffn[0], cache.ffn[0], std::span<const T>(d_h1), grads.ffn[0], std::span<T>(d_concat));

  if (!include_embedding) return;
  for (std::size_t p = 0; p < w; ++p) {
    std::vector<T> dy(d_concat.begin() + static_cast<std::ptrdiff_t>(p * kEmbedDim),
                      d_concat.begin() + static_cast<std::ptrdiff_t>((p + 1) * kEmbedDim));
    for (int li = kEmbedLayers - 1; li >= 0; --li) {
      const auto& layer = net.embedding[static_cast<std::size_t>(li)];
      std::vector<T> dx(static_cast<std::size_t>(layer.in_dim()));
      dense_backward(layer, cache.embed[p][static_cast<std::size_t>(li)], std::span<const T>(dy),
                     grads.embedding[static_cast<std::size_t>(li)],
                     li == 0 ? std::span<T>{} : std::span<T>(dx));
      dy = std::move(dx);
    }
  }
}

// --------------------------------------------------------------------------
// Training data and training loop
// --------------------------------------------------------------------------

struct window_sample {
  std::vector<token_id> tokens;
  int label = 0;
};

namespace detail {

inline std::uint64_t window_fingerprint(std::span<const token_id> window) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (token_id t : window) {
    h ^= mix64(static_cast<std::uint64_t>(t) + 0x9e3779b97f4a7c15ULL);
    h = mix64(h);
  }
  return h;
}

}  // namespace detail

/// n unique uniform-random windows with exactly floor(gamma*n) positive
/// labels, assignment order randomized.
inline std::vector<window_sample> build_generator_training_set(seeded_rng& rng,
                                                               const watermark_config& cfg, int n) {
  require(n >= 1, errc::invariant_violation, "training set size must be >= 1");
  // Reject vocab^window < n up front (overflow-safe).
  double log_capacity = cfg.window * std::log2(static_cast<double>(cfg.vocab.size));
  if (log_capacity < 62.0 &&
      std::pow(static_cast<double>(cfg.vocab.size), cfg.window) < static_cast<double>(n)) {
    raise(errc::degenerate_vocab, "vocab^window smaller than requested dataset");
  }

  std::vector<window_sample> out;
  out.reserve(static_cast<std::size_t>(n));
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(static_cast<std::size_t>(n) * 2);
  std::int64_t attempts = 0;
  const std::int64_t max_attempts = static_cast<std::int64_t>(n) * 100 + 10000;
  while (static_cast<int>(out.size()) < n) {
    require(attempts++ < max_attempts, errc::construction_failure,
            "window dedup retry budget exhausted");
    window_sample s;
    s.tokens.resize(static_cast<std::size_t>(cfg.window));
    for (auto& t : s.tokens) t = rng.next_below(cfg.vocab.size);
    if (!seen.insert(detail::window_fingerprint(s.tokens)).second) continue;
    out.push_back(std::move(s));
  }

  const int positives = static_cast<int>(std::floor(cfg.gamma * static_cast<double>(n)));
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + positives, 1);
  for (int i = n - 1; i > 0; --i) {
    std::swap(labels[static_cast<std::size_t>(i)],
              labels[rng.next_below(static_cast<std::uint32_t>(i + 1))]);
  }
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].label = labels[static_cast<std::size_t>(i)];
  return out;
}

struct train_report {
  std::vector<double> losses;  // mean batch loss per optimizer step
  double final_loss = 0.0;
  double final_accuracy = 0.0;
};

/// Trains with Adam on BCE. `steps` counts optimizer updates; batches cycle
/// through a reshuffled copy of the dataset.
template <class T>
train_report train_generator(generator_network_t<T>& net, std::span<const window_sample> dataset,
                             int steps, int batch_size, double lr, seeded_rng rng,
                             bool include_embedding = true) {
  require(!dataset.empty(), errc::empty_input, "empty generator training set");
  adam_t<T> opt;
  opt.lr = lr;
  auto params = net.params(include_embedding);
  opt.init(params);

  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  int cursor = n;  // force shuffle on first step

  constexpr int kGradBlocks = 8;
  std::vector<generator_grads_t<T>> block_grads;
  block_grads.reserve(kGradBlocks);
  for (int b = 0; b < kGradBlocks; ++b) block_grads.emplace_back(net);

  train_report report;
  report.losses.reserve(static_cast<std::size_t>(steps));

  std::vector<int> batch(static_cast<std::size_t>(batch_size));
  for (int step = 0; step < steps; ++step) {
    for (int k = 0; k < batch_size; ++k) {
      if (cursor >= n) {
        for (int i = n - 1; i > 0; --i) {
          std::swap(order[static_cast<std::size_t>(i)],
                    order[rng.next_below(static_cast<std::uint32_t>(i + 1))]);
        }
        cursor = 0;
      }
      batch[static_cast<std::size_t>(k)] = order[static_cast<std::size_t>(cursor++)];
    }

    std::array<double, kGradBlocks> block_loss{};
    for (auto& g : block_grads) g.zero();
    parallel_for_blocks(batch_size, kGradBlocks, [&](int blk, std::int64_t begin, std::int64_t end) {
      generator_cache_t<T> cache;
      for (std::int64_t i = begin; i < end; ++i) {
        const window_sample& s = dataset[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
        T p = generator_forward_cached(net, s.tokens, cache);
        block_loss[static_cast<std::size_t>(blk)] += static_cast<double>(bce_loss(p, s.label));
        // d(BCE(sigmoid(a)))/da = p - y
        generator_backward(net, cache, p - static_cast<T>(s.label),
                           block_grads[static_cast<std::size_t>(blk)], include_embedding);
      }
    });

    generator_grads_t<T>& total = block_grads[0];
    for (int b = 1; b < kGradBlocks; ++b) total.add(block_grads[static_cast<std::size_t>(b)]);
    total.scale(T{1} / static_cast<T>(batch_size));

    double loss = 0.0;
    for (double l : block_loss) loss += l;
    loss /= batch_size;
    require(std::isfinite(loss), errc::divergence, "generator training loss is not finite");
    report.losses.push_back(loss);

    std::vector<const tensor_t<T>*> grads = total.tensors(include_embedding);
    opt.update(params, grads);
  }

  report.final_loss = report.losses.empty() ? 0.0 : report.losses.back();
  std::vector<int> correct(static_cast<std::size_t>(n), 0);
  parallel_for_each(n, [&](std::int64_t i) {
    const window_sample& s = dataset[static_cast<std::size_t>(i)];
    correct[static_cast<std::size_t>(i)] = net.label(s.tokens) == s.label ? 1 : 0;
  });
  std::int64_t ok = 0;
  for (int c : correct) ok += c;
  report.final_accuracy = static_cast<double>(ok) / static_cast<double>(n);
  return report;
}

// --------------------------------------------------------------------------
// Ratio statistics
// --------------------------------------------------------------------------

/// Per-batch green fraction over independent uniform-random windows.
/// `stddev` is the raw sample std across batches; `excess_std()` removes the
/// binomial sampling noise floor p(1-p)/batch_size and estimates the
/// network's own ratio deviation (the sigma used in the corrected z-test).
struct ratio_stats {
  double mean = 0.0;
  double stddev = 0.0;
  int batch_size = 0;
  int batches = 0;

  double excess_std() const {
    const double noise = mean * (1.0 - mean) / static_cast<double>(batch_size);
    const double excess = stddev * stddev - noise;
    return excess > 0.0 ? std::sqrt(excess) : 0.0;
  }
};

template <window_labeler L>
ratio_stats estimate_ratio_stats_fn(const L& labeler, const vocabulary& vocab, int window,
                                    seeded_rng& rng, int batch_size, int batches) {
  require(batch_size >= 1, errc::invariant_violation, "batch_size must be >= 1");
  require(batches >= 2, errc::invariant_violation, "need at least 2 batches");

  std::vector<std::uint64_t> batch_seeds(static_cast<std::size_t>(batches));
  for (auto& s : batch_seeds) s = rng.next_u64();

  std::vector<double> fractions(static_cast<std::size_t>(batches), 0.0);
  parallel_for_each(batches, [&](std::int64_t bi) {
    seeded_rng local(batch_seeds[static_cast<std::size_t>(bi)]);
    std::vector<token_id> w(static_cast<std::size_t>(window));
    int greens = 0;
    for (int i = 0; i < batch_size; ++i) {
      for (auto& t : w) t = local.next_below(vocab.size);
      greens += labeler.label(std::span<const token_id>(w)) ? 1 : 0;
    }
    fractions[static_cast<std::size_t>(bi)] = static_cast<double>(greens) / batch_size;
  });

  ratio_stats st;
  st.batch_size = batch_size;
  st.batches = batches;
  for (double f : fractions) st.mean += f;
  st.mean /= batches;
  double ss = 0.0;
  for (double f : fractions) ss += (f - st.mean) * (f - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(batches - 1));
  return st;
}

}  // namespace upv
