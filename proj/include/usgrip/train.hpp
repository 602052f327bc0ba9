#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "usgrip/dataset.hpp"
#include "usgrip/grad.hpp"
#include "usgrip/model.hpp"
#include "usgrip/ops.hpp"

namespace usgrip {

struct TrainConfig {
  float learning_rate = 1e-3f;
  int epochs = 20;           // 25/50 for baseline analysis, 20 for deployment
  int batch_size = 32;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  uint64_t seed = 42;
  float test_fraction = 0.25f;

  void validate() const {
    require(learning_rate > 0.0f, Errc::bad_config, "learning rate must be positive");
    require(test_fraction > 0.0f && test_fraction < 1.0f, Errc::bad_config,
            "test fraction must be in (0,1)");
    require(epochs >= 1 && batch_size >= 1, Errc::bad_config, "epochs/batch size must be >= 1");
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running metric over the epoch's batches
  double test_accuracy = 0.0;
};

struct TrainResult {
  ModelGraph model;
  std::vector<EpochStats> history;
};

// One Adam update with bias correction. beta powers are beta^t for the
// current (1-based) step, tracked by the caller in double precision.
inline void adam_step(std::span<float> w, std::span<const float> g, std::span<float> m,
                      std::span<float> v, float lr, float beta1, float beta2, float eps,
                      double beta1_pow, double beta2_pow) {
  const float c1 = static_cast<float>(1.0 / (1.0 - beta1_pow));
  const float c2 = static_cast<float>(1.0 / (1.0 - beta2_pow));
  for (size_t i = 0; i < w.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] * c1;
    const float vhat = v[i] * c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace detail {

// [B, rest...] <-> [rest...] sample copies.
inline Tensor batch_slice(const Tensor& batch, int b) {
  std::vector<int> shape(batch.shape().begin() + 1, batch.shape().end());
  const int64_t n = batch.size() / batch.dim(0);
  Tensor t(shape);
  std::memcpy(t.data(), batch.data() + static_cast<int64_t>(b) * n,
              sizeof(float) * static_cast<size_t>(n));
  return t;
}

inline void batch_store(Tensor& batch, int b, const Tensor& t) {
  const int64_t n = batch.size() / batch.dim(0);
  std::memcpy(batch.data() + static_cast<int64_t>(b) * n, t.data(),
              sizeof(float) * static_cast<size_t>(n));
}

inline std::vector<int> batched_shape(int b, const std::vector<int>& rest) {
  std::vector<int> s{b};
  s.insert(s.end(), rest.begin(), rest.end());
  return s;
}

struct LayerCache {
  Tensor input;                                   // batch input to the layer
  std::vector<std::vector<int32_t>> pool_argmax;  // per sample
  BnBatchStats<float> bn_stats;
};

struct GradBuffers {
  // Parallel to model params; empty tensors for non-learnable slots.
  std::vector<std::vector<Tensor>> g;

  explicit GradBuffers(const ModelGraph& m) {
    g.resize(m.layers.size());
    for (size_t li = 0; li < m.layers.size(); ++li) {
      const LayerKind kind = m.layers[li].kind;
      const int learnable = (kind == LayerKind::conv || kind == LayerKind::dense) ? 2
                            : (kind == LayerKind::batchnorm)                      ? 2
                                                                                  : 0;
      for (int i = 0; i < learnable; ++i) {
        g[li].push_back(Tensor(m.params[li][static_cast<size_t>(i)].shape));
      }
    }
  }

  void zero() {
    for (auto& lp : g)
      for (auto& t : lp) std::memset(t.data(), 0, sizeof(float) * static_cast<size_t>(t.size()));
  }

  void add(size_t li, size_t pi, const Tensor& delta) {
    Tensor& acc = g[li][pi];
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += delta[i];
  }
};

}  // namespace detail

class Trainer {
 public:
  Trainer(const ModelGraph& model, const Dataset& data, const TrainConfig& cfg)
      : model_(model), data_(data), cfg_(cfg), grads_(model) {
    cfg_.validate();
    require(model_.quant == QuantMode::f32, Errc::bad_config,
            "training requires an unquantized model");
    require(data_.count() > 0, Errc::empty_dataset, "dataset is empty");
    require(data_.height == model_.meta.input_h && data_.width == model_.meta.input_w,
            Errc::shape_mismatch,
            "dataset frames are " + std::to_string(data_.height) + "x" +
                std::to_string(data_.width) + ", model expects " +
                std::to_string(model_.meta.input_h) + "x" + std::to_string(model_.meta.input_w));

    train_idx_ = data_.indices_of_split(kSplitTrain);
    test_idx_ = data_.indices_of_split(kSplitTest);
    require(!train_idx_.empty(), Errc::empty_dataset, "train split is empty");
    require(train_idx_.size() + test_idx_.size() == static_cast<size_t>(data_.count()),
            Errc::bad_split, "split assignments must cover every frame");
    require(cfg_.batch_size <= static_cast<int>(train_idx_.size()), Errc::bad_config,
            "batch size exceeds train split size");

    // Adam moment buffers parallel to the gradient buffers.
    adam_m_.resize(grads_.g.size());
    adam_v_.resize(grads_.g.size());
    for (size_t li = 0; li < grads_.g.size(); ++li) {
      for (const Tensor& t : grads_.g[li]) {
        adam_m_[li].push_back(Tensor(t.shape()));
        adam_v_[li].push_back(Tensor(t.shape()));
      }
    }
  }

  TrainResult run() {
    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      EpochStats stats;
      Xoshiro256ss shuffle_rng(stream_seed(cfg_.seed, 1000 + static_cast<uint64_t>(epoch)));
      shuffle(train_idx_, shuffle_rng);

      double loss_sum = 0.0;
      int64_t seen = 0, correct = 0;
      const int n_train = static_cast<int>(train_idx_.size());
      for (int start = 0; start < n_train; start += cfg_.batch_size) {
        const int bsz = std::min(cfg_.batch_size, n_train - start);
        const double loss =
            train_batch(std::span<const int>(train_idx_).subspan(static_cast<size_t>(start),
                                                                 static_cast<size_t>(bsz)),
                        epoch, start / cfg_.batch_size, &correct);
        loss_sum += loss * bsz;
        seen += bsz;
      }
      stats.train_loss = loss_sum / static_cast<double>(seen);
      stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
      stats.test_accuracy = evaluate_split(test_idx_);
      history.push_back(stats);
    }
    model_.meta.trained_epochs = static_cast<uint32_t>(cfg_.epochs);
    return TrainResult{std::move(model_), std::move(history)};
  }

 private:
  Tensor make_batch(std::span<const int> idx) const {
    Tensor x(detail::batched_shape(static_cast<int>(idx.size()),
                                   {data_.height, data_.width, 1}));
    float* out = x.data();
    for (size_t b = 0; b < idx.size(); ++b) {
      const auto frame = data_.frame(idx[b]);
      for (size_t i = 0; i < frame.size(); ++i) {
        out[b * frame.size() + i] = static_cast<float>(frame[i]) / 255.0f;
      }
    }
    return x;
  }

  double train_batch(std::span<const int> idx, int epoch, int batch_no, int64_t* correct) {
    try {
      return train_batch_impl(idx, correct);
    } catch (const Error& e) {
      if (e.code() != Errc::numeric) throw;
      fail(Errc::numeric, "at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_no) + ": " + e.what());
    }
  }

  double train_batch_impl(std::span<const int> idx, int64_t* correct) {
    const int bsz = static_cast<int>(idx.size());
    std::vector<uint8_t> labels(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) labels[i] = data_.labels[static_cast<size_t>(idx[i])];

    // Forward with caches.
    std::vector<detail::LayerCache> caches(model_.layers.size());
    Tensor x = make_batch(idx);
    for (size_t li = 0; li < model_.layers.size(); ++li) {
      const LayerSpec& layer = model_.layers[li];
      auto& p = model_.params[li];
      detail::LayerCache& cache = caches[li];
      cache.input = x;
      switch (layer.kind) {
        case LayerKind::conv: {
          Tensor out;
          for (int b = 0; b < bsz; ++b) {
            Tensor sample = detail::batch_slice(x, b);
            Tensor conv = conv2d(sample, p[0].f32, p[1].f32, Padding::same, 1);
            if (b == 0) out = Tensor(detail::batched_shape(bsz, conv.shape()));
            detail::batch_store(out, b, conv);
          }
          x = std::move(out);
          break;
        }
        case LayerKind::batchnorm:
          x = batchnorm_train(x, p[0].f32, p[1].f32, p[2].f32, p[3].f32, kBnEpsilon, kBnMomentum,
                              &cache.bn_stats);
          break;
        case LayerKind::relu:
          x = relu(x);
          break;
        case LayerKind::maxpool: {
          Tensor out;
          cache.pool_argmax.resize(static_cast<size_t>(bsz));
          for (int b = 0; b < bsz; ++b) {
            Tensor sample = detail::batch_slice(x, b);
            auto pooled = maxpool2d_with_argmax(sample);
            cache.pool_argmax[static_cast<size_t>(b)] = std::move(pooled.argmax);
            if (b == 0) out = Tensor(detail::batched_shape(bsz, pooled.out.shape()));
            detail::batch_store(out, b, pooled.out);
          }
          x = std::move(out);
          break;
        }
        case LayerKind::flatten:
          x = x.reshaped({bsz, static_cast<int>(x.size() / bsz)});
          break;
        case LayerKind::dense: {
          Tensor out({bsz, static_cast<int>(layer.dims[1])});
          for (int b = 0; b < bsz; ++b) {
            Tensor sample = detail::batch_slice(x, b);
            detail::batch_store(out, b, dense(sample, p[0].f32, p[1].f32));
          }
          x = std::move(out);
          break;
        }
        case LayerKind::softmax: {
          Tensor out(x.shape());
          for (int b = 0; b < bsz; ++b) {
            detail::batch_store(out, b, softmax(detail::batch_slice(x, b)));
          }
          x = std::move(out);
          break;
        }
        case LayerKind::meta:
          fail(Errc::bad_layer_graph, "meta pseudo-layer in graph");
      }
    }

    const Tensor& probs = x;
    const double loss = cross_entropy_loss(probs, labels);
    require(std::isfinite(loss), Errc::numeric, "non-finite loss");
    for (int b = 0; b < bsz; ++b) {
      int arg = 0;
      for (int j = 1; j < 4; ++j) {
        if (probs.at2(b, j) > probs.at2(b, arg)) arg = j;
      }
      *correct += (arg == labels[static_cast<size_t>(b)]);
    }

    // Backward. The softmax layer pairs with the cross-entropy loss, so the
    // chain starts from the fused gradient w.r.t. the dense logits.
    grads_.zero();
    Tensor d = softmax_crossentropy_grad(probs, labels);
    for (size_t li_plus = model_.layers.size(); li_plus-- > 0;) {
      const size_t li = li_plus;
      const LayerSpec& layer = model_.layers[li];
      auto& p = model_.params[li];
      detail::LayerCache& cache = caches[li];
      switch (layer.kind) {
        case LayerKind::softmax:
          break;  // fused above
        case LayerKind::dense: {
          Tensor dx(cache.input.shape());
          for (int b = 0; b < bsz; ++b) {
            DenseGrads<float> g =
                dense_grad(detail::batch_slice(cache.input, b), p[0].f32, detail::batch_slice(d, b));
            grads_.add(li, 0, g.dweights);
            grads_.add(li, 1, g.dbias);
            detail::batch_store(dx, b, g.dinput);
          }
          d = std::move(dx);
          break;
        }
        case LayerKind::flatten:
          d = d.reshaped(cache.input.shape());
          break;
        case LayerKind::relu:
          d = relu_grad(cache.input, d);
          break;
        case LayerKind::maxpool: {
          require(!cache.pool_argmax.empty(), Errc::missing_cache, "missing pool cache");
          Tensor dx(cache.input.shape());
          std::vector<int> sample_shape(cache.input.shape().begin() + 1,
                                        cache.input.shape().end());
          for (int b = 0; b < bsz; ++b) {
            Tensor dsample = maxpool2d_grad(sample_shape, cache.pool_argmax[static_cast<size_t>(b)],
                                            detail::batch_slice(d, b));
            detail::batch_store(dx, b, dsample);
          }
          d = std::move(dx);
          break;
        }
        case LayerKind::batchnorm: {
          BnGrads<float> g = batchnorm_grad(cache.input, p[0].f32, cache.bn_stats, d);
          grads_.add(li, 0, g.dgamma);
          grads_.add(li, 1, g.dbeta);
          d = std::move(g.dinput);
          break;
        }
        case LayerKind::conv: {
          Tensor dx(cache.input.shape());
          for (int b = 0; b < bsz; ++b) {
            Conv2dGrads<float> g = conv2d_grad(detail::batch_slice(cache.input, b), p[0].f32,
                                               detail::batch_slice(d, b), Padding::same, 1);
            grads_.add(li, 0, g.dkernels);
            grads_.add(li, 1, g.dbias);
            detail::batch_store(dx, b, g.dinput);
          }
          d = std::move(dx);
          break;
        }
        case LayerKind::meta:
          fail(Errc::bad_layer_graph, "meta pseudo-layer in graph");
      }
    }

    // Adam update, layers ascending, weight tensor before bias.
    ++step_;
    beta1_pow_ *= cfg_.beta1;
    beta2_pow_ *= cfg_.beta2;
    for (size_t li = 0; li < grads_.g.size(); ++li) {
      for (size_t pi = 0; pi < grads_.g[li].size(); ++pi) {
        Tensor& w = model_.params[li][pi].f32;
        Tensor& gt = grads_.g[li][pi];
        adam_step(w.values(), gt.values(), adam_m_[li][pi].values(), adam_v_[li][pi].values(),
                  cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.epsilon, beta1_pow_, beta2_pow_);
      }
    }
    return loss;
  }

  double evaluate_split(const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    int64_t correct = 0;
    for (int i : idx) {
      const Tensor probs = forward(model_, frame_from_bytes(data_.frame(i), model_.meta));
      int arg = 0;
      for (int j = 1; j < 4; ++j) {
        if (probs[j] > probs[arg]) arg = j;
      }
      correct += (arg == data_.labels[static_cast<size_t>(i)]);
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  }

  ModelGraph model_;
  const Dataset& data_;
  TrainConfig cfg_;
  detail::GradBuffers grads_;
  std::vector<std::vector<Tensor>> adam_m_, adam_v_;
  std::vector<int> train_idx_, test_idx_;
  int64_t step_ = 0;
  double beta1_pow_ = 1.0;
  double beta2_pow_ = 1.0;
};

inline TrainResult train(const ModelGraph& model, const Dataset& data, const TrainConfig& cfg) {
  Trainer t(model, data, cfg);
  return t.run();
}

}  // namespace usgrip
