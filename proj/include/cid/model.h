/// @file
/// @brief CNN and CRNN composer classifiers.
///
/// Both architectures share an 8-layer convolutional stack (conv3x3 -> ReLU
/// -> batch norm), with 2x2 average pooling after every second layer and
/// dropout 0.2 after each pooled block. The CNN summarizes feature maps with
/// global max pooling; the CRNN averages over the frequency axis, runs a
/// biGRU and summarizes over time. A shared two-layer head with dropout 0.5
/// produces class logits.

#ifndef CID_MODEL_H
#define CID_MODEL_H

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cid/gru.h"
#include "cid/ops.h"
#include "cid/rng.h"
#include "cid/tensor.h"

namespace cid {

enum class Arch { kCnn, kCrnn };
enum class GruSummary { kTemporalMax, kLastState };

struct ModelConfig {
  Arch architecture = Arch::kCnn;
  int64_t in_channels = 3;
  std::array<int64_t, 8> conv_channels = {64, 64, 128, 128, 256, 256, 512, 512};
  int64_t num_classes = 10;
  int64_t gru_hidden = 256;
  int64_t fc_hidden = 512;
  double dropout_conv = 0.2;
  double dropout_fc = 0.5;
  GruSummary gru_summary = GruSummary::kTemporalMax;
};

inline Arch arch_from_string(const std::string& s) {
  if (s == "cnn") return Arch::kCnn;
  if (s == "crnn") return Arch::kCrnn;
  throw std::invalid_argument("unknown architecture: " + s);
}

inline const char* arch_name(Arch a) { return a == Arch::kCnn ? "cnn" : "crnn"; }

template <typename S>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg), dropout_rng_(0) {
    if (cfg.in_channels < 1 || cfg.in_channels > 3)
      throw std::invalid_argument("model: in_channels must be 1, 2 or 3");
    if (cfg.num_classes < 2)
      throw std::invalid_argument("model: need at least 2 classes");
    int64_t cin = cfg.in_channels;
    for (int i = 0; i < 8; ++i) {
      const int64_t cout = cfg.conv_channels[static_cast<size_t>(i)];
      blocks_[i].w = TensorT<S>({cout, cin, 3, 3});
      blocks_[i].b = TensorT<S>({cout});
      blocks_[i].gamma = TensorT<S>({cout});
      blocks_[i].beta = TensorT<S>({cout});
      blocks_[i].run_mean = TensorT<S>({cout});
      blocks_[i].run_var = TensorT<S>({cout});
      blocks_[i].gamma.fill(S(1));
      blocks_[i].run_var.fill(S(1));
      cin = cout;
    }
    const int64_t emb = embedding_dim();
    fc1_w_ = TensorT<S>({emb, cfg.fc_hidden});
    fc1_b_ = TensorT<S>({cfg.fc_hidden});
    fc2_w_ = TensorT<S>({cfg.fc_hidden, cfg.num_classes});
    fc2_b_ = TensorT<S>({cfg.num_classes});
    if (cfg.architecture == Arch::kCrnn)
      gru_ = BiGru<S>(cfg.conv_channels.back(), cfg.gru_hidden);
  }

  const ModelConfig& config() const { return cfg_; }

  int64_t embedding_dim() const {
    return cfg_.architecture == Arch::kCnn ? cfg_.conv_channels.back()
                                           : 2 * cfg_.gru_hidden;
  }

  /// Glorot-uniform conv/linear weights, orthogonal GRU recurrences,
  /// zero biases.
  void init_params(uint64_t seed) {
    Rng rng(derive_seed(seed, "model_init"));
    for (int i = 0; i < 8; ++i) {
      TensorT<S>& w = blocks_[i].w;
      const int64_t fan_in = w.dim(1) * 9, fan_out = w.dim(0) * 9;
      const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : w.data) v = static_cast<S>(rng.uniform(-lim, lim));
    }
    glorot(fc1_w_, rng);
    glorot(fc2_w_, rng);
    if (cfg_.architecture == Arch::kCrnn) gru_.init_params(rng);
  }

  void set_dropout_seed(uint64_t seed) { dropout_rng_ = Rng(seed); }

  /// Conv stack only: B x C x T x K -> B x 512 x T' x K'.
  TensorT<S> forward_features(const TensorT<S>& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
      throw std::invalid_argument("model: input channel mismatch");
    TensorT<S> cur = x;
    for (int i = 0; i < 8; ++i) {
      ConvBlock& blk = blocks_[i];
      if (train) cache_.conv_in[i] = cur;
      TensorT<S> conv_out;
      conv2d_forward(cur, blk.w, blk.b, conv_out);
      TensorT<S> relu_out;
      relu_forward(conv_out, relu_out);
      conv_out = TensorT<S>();  // release before BN allocates
      if (train) cache_.relu_out[i] = relu_out;
      batch_norm2d_forward(relu_out, blk.gamma, blk.beta, blk.run_mean,
                           blk.run_var, train, cur, cache_.bn[i]);
      relu_out = TensorT<S>();
      if (i % 2 == 1) {
        const int p = i / 2;
        cache_.pool_in_shape[p] = cur.shape;
        TensorT<S> pooled;
        avg_pool2x2_forward(cur, pooled);
        dropout_forward(pooled, cfg_.dropout_conv, train, dropout_rng_, cur,
                        cache_.conv_drop_mask[p]);
      }
    }
    return cur;
  }

  /// Full forward pass to logits (B x num_classes).
  TensorT<S> forward(const TensorT<S>& x, bool train) {
    TensorT<S> feat = forward_features(x, train);
    cache_.feat_shape = feat.shape;
    TensorT<S> emb;
    if (cfg_.architecture == Arch::kCnn) {
      global_max_pool_forward(feat, emb, cache_.gmp_argmax);
    } else {
      TensorT<S> seq;
      freq_mean_forward(feat, seq);
      feat = TensorT<S>();
      TensorT<S> gru_out = gru_.forward(seq, train);
      cache_.gru_out_shape = gru_out.shape;
      if (cfg_.gru_summary == GruSummary::kTemporalMax) {
        temporal_max_pool_forward(gru_out, emb, cache_.tmp_argmax);
      } else {
        last_state_forward(gru_out, emb);
      }
    }
    if (train) cache_.fc1_in = emb;
    TensorT<S> h;
    linear_forward(emb, fc1_w_, fc1_b_, h);
    TensorT<S> hr;
    relu_forward(h, hr);
    if (train) cache_.fc1_relu = hr;
    TensorT<S> hd;
    dropout_forward(hr, cfg_.dropout_fc, train, dropout_rng_, hd,
                    cache_.fc_drop_mask);
    if (train) cache_.fc2_in = hd;
    TensorT<S> logits;
    linear_forward(hd, fc2_w_, fc2_b_, logits);
    return logits;
  }

  /// Backpropagates dlogits; parameter gradients accumulate into .grad.
  /// Must follow a forward(train=true) on the same input.
  TensorT<S> backward(const TensorT<S>& dlogits) {
    TensorT<S> d = linear_backward(cache_.fc2_in, fc2_w_, fc2_b_, dlogits);
    d = dropout_backward(d, cfg_.dropout_fc, cache_.fc_drop_mask);
    d = relu_backward(cache_.fc1_relu, d);
    d = linear_backward(cache_.fc1_in, fc1_w_, fc1_b_, d);
    if (cfg_.architecture == Arch::kCnn) {
      d = global_max_pool_backward(cache_.feat_shape, d, cache_.gmp_argmax);
    } else {
      TensorT<S> dgru;
      if (cfg_.gru_summary == GruSummary::kTemporalMax) {
        dgru = temporal_max_pool_backward(cache_.gru_out_shape, d, cache_.tmp_argmax);
      } else {
        dgru = last_state_backward(cache_.gru_out_shape, d);
      }
      TensorT<S> dseq = gru_.backward(dgru);
      dgru = TensorT<S>();
      d = freq_mean_backward(cache_.feat_shape, dseq);
    }
    for (int i = 7; i >= 0; --i) {
      ConvBlock& blk = blocks_[i];
      if (i % 2 == 1) {
        const int p = i / 2;
        d = dropout_backward(d, cfg_.dropout_conv, cache_.conv_drop_mask[p]);
        d = avg_pool2x2_backward(cache_.pool_in_shape[p], d);
      }
      d = batch_norm2d_backward(cache_.relu_out[i], blk.gamma, blk.beta, d,
                                cache_.bn[i]);
      d = relu_backward(cache_.relu_out[i], d);
      d = conv2d_backward(cache_.conv_in[i], blk.w, blk.b, d);
    }
    return d;
  }

  std::vector<std::pair<std::string, TensorT<S>*>> named_params() {
    std::vector<std::pair<std::string, TensorT<S>*>> out;
    for (int i = 0; i < 8; ++i) {
      const std::string p = "conv" + std::to_string(i + 1);
      out.emplace_back(p + ".w", &blocks_[i].w);
      out.emplace_back(p + ".b", &blocks_[i].b);
      out.emplace_back(p + ".bn.gamma", &blocks_[i].gamma);
      out.emplace_back(p + ".bn.beta", &blocks_[i].beta);
    }
    if (cfg_.architecture == Arch::kCrnn) gru_.collect_params("gru", out);
    out.emplace_back("fc1.w", &fc1_w_);
    out.emplace_back("fc1.b", &fc1_b_);
    out.emplace_back("fc2.w", &fc2_w_);
    out.emplace_back("fc2.b", &fc2_b_);
    return out;
  }

  /// Non-trained state (batch norm running statistics).
  std::vector<std::pair<std::string, TensorT<S>*>> named_buffers() {
    std::vector<std::pair<std::string, TensorT<S>*>> out;
    for (int i = 0; i < 8; ++i) {
      const std::string p = "conv" + std::to_string(i + 1);
      out.emplace_back(p + ".bn.running_mean", &blocks_[i].run_mean);
      out.emplace_back(p + ".bn.running_var", &blocks_[i].run_var);
    }
    return out;
  }

  void zero_grads() {
    for (auto& [name, t] : named_params()) {
      t->require_grad();
      t->zero_grad();
    }
  }

  void release_caches() { cache_ = Caches{}; }

 private:
  struct ConvBlock {
    TensorT<S> w, b, gamma, beta, run_mean, run_var;
  };

  struct Caches {
    std::array<TensorT<S>, 8> conv_in;
    std::array<TensorT<S>, 8> relu_out;
    std::array<BnCache<S>, 8> bn;
    std::array<std::vector<int64_t>, 4> pool_in_shape;
    std::array<std::vector<uint8_t>, 4> conv_drop_mask;
    std::vector<int64_t> feat_shape;
    std::vector<int64_t> gru_out_shape;
    std::vector<int64_t> gmp_argmax;
    std::vector<int64_t> tmp_argmax;
    TensorT<S> fc1_in, fc1_relu, fc2_in;
    std::vector<uint8_t> fc_drop_mask;
  };

  static void glorot(TensorT<S>& w, Rng& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(w.dim(0) + w.dim(1)));
    for (auto& v : w.data) v = static_cast<S>(rng.uniform(-lim, lim));
  }

  /// Concatenation of the forward direction's last state and the backward
  /// direction's state at t = 0 (each direction's final step).
  void last_state_forward(const TensorT<S>& gru_out, TensorT<S>& emb) const {
    const int64_t B = gru_out.dim(0), T = gru_out.dim(1);
    const int64_t H2 = gru_out.dim(2), H = H2 / 2;
    emb = TensorT<S>({B, H2});
    for (int64_t n = 0; n < B; ++n) {
      const S* fwd = gru_out.ptr() + ((n * T + (T - 1)) * H2);
      const S* bwd = gru_out.ptr() + (n * T * H2) + H;
      std::copy(fwd, fwd + H, emb.ptr() + n * H2);
      std::copy(bwd, bwd + H, emb.ptr() + n * H2 + H);
    }
  }

  TensorT<S> last_state_backward(const std::vector<int64_t>& shape,
                                 const TensorT<S>& demb) const {
    const int64_t B = shape[0], T = shape[1], H2 = shape[2], H = H2 / 2;
    TensorT<S> d(shape);
    for (int64_t n = 0; n < B; ++n) {
      const S* src = demb.ptr() + n * H2;
      std::copy(src, src + H, d.ptr() + ((n * T + (T - 1)) * H2));
      std::copy(src + H, src + H2, d.ptr() + (n * T * H2) + H);
    }
    return d;
  }

  ModelConfig cfg_;
  std::array<ConvBlock, 8> blocks_;
  BiGru<S> gru_;
  TensorT<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  Rng dropout_rng_;
  Caches cache_;
};

using ModelF = Model<float>;

}  // namespace cid

#endif  // CID_MODEL_H
