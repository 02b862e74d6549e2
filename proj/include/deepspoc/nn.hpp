#pragma once

// Fully connected networks with a hand-written batched reverse pass.

#include <cmath>
#include <string>
#include <vector>

#include "deepspoc/error.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

enum class Activation { relu, softplus, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
  }
  return "unknown";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

/// Layer sizes [in, h_1, ..., h_k, out] with the activation on every hidden
/// layer and a linear output. Parameters live in an external flat array:
/// for each layer, the weight matrix (out x in, column-major) then the bias.
class DenseNet {
 public:
  /// Per-batch intermediates kept for the reverse pass.
  struct Cache {
    std::vector<ColMatrix> pre;   ///< pre-activations of every layer
    std::vector<ColMatrix> post;  ///< post[0] is the input, post[l+1] the output of layer l
  };

  DenseNet() = default;
  DenseNet(std::vector<std::size_t> sizes, Activation act, double beta = 20.0)
      : sizes_(std::move(sizes)), act_(act), beta_(beta) {
    if (sizes_.size() < 2) throw InvalidParameter("network needs input and output sizes");
    for (auto s : sizes_) {
      if (s == 0) throw InvalidParameter("network layer sizes must be positive");
    }
    if (act_ == Activation::softplus && !(beta_ > 0.0)) throw InvalidParameter("softplus beta must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l + 1] * sizes_[l];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    n_params_ = off;
  }

  std::size_t num_params() const { return n_params_; }
  std::size_t layers() const { return w_off_.size(); }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  double beta() const { return beta_; }

  /// Weights uniform in +-gain*sqrt(3/fan_in), biases zero. The output layer
  /// is scaled by `out_scale` (0 gives a zero output layer).
  void initialize(double* params, CounterRng& rng, double out_scale = 1.0) const {
    const double gain = act_ == Activation::tanh ? 5.0 / 3.0 : std::sqrt(2.0);
    for (std::size_t l = 0; l < layers(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]);
      double bound = gain * std::sqrt(3.0 / fan_in);
      if (l + 1 == layers()) bound *= out_scale;
      const std::size_t nw = sizes_[l + 1] * sizes_[l];
      for (std::size_t i = 0; i < nw; ++i) params[w_off_[l] + i] = bound == 0.0 ? 0.0 : rng.uniform(-bound, bound);
      for (std::size_t i = 0; i < sizes_[l + 1]; ++i) params[b_off_[l] + i] = 0.0;
    }
  }

  double* output_bias(double* params) const { return params + b_off_.back(); }

  /// Forward pass on a batch (one sample per column).
  void forward(const double* params, const ColMatrix& in, ColMatrix& out, Cache* cache = nullptr) const {
    if (in.rows() != static_cast<Eigen::Index>(input_size())) {
      throw DimensionError("network input has " + std::to_string(in.rows()) + " rows, expected " +
                           std::to_string(input_size()));
    }
    if (cache) {
      cache->pre.resize(layers());
      cache->post.resize(layers() + 1);
      cache->post[0] = in;
    }
    ColMatrix a = in;
    for (std::size_t l = 0; l < layers(); ++l) {
      Eigen::Map<const ColMatrix> w(params + w_off_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                                    static_cast<Eigen::Index>(sizes_[l]));
      Eigen::Map<const Vector> b(params + b_off_[l], static_cast<Eigen::Index>(sizes_[l + 1]));
      ColMatrix z = w * a;
      z.colwise() += b;
      if (l + 1 == layers()) {
        if (cache) cache->pre[l] = z;
        a = std::move(z);
      } else {
        ColMatrix h = apply(z);
        if (cache) cache->pre[l] = std::move(z);
        a = std::move(h);
      }
      if (cache) cache->post[l + 1] = a;
    }
    out = std::move(a);
  }

  /// Reverse pass for the upstream gradient g_out (out x B). Adds parameter
  /// gradients into `grad` when non-null and writes the input gradient into
  /// `g_in` when non-null.
  void backward(const double* params, const Cache& cache, const ColMatrix& g_out, double* grad,
                ColMatrix* g_in) const {
    ColMatrix g = g_out;
    for (std::size_t l = layers(); l-- > 0;) {
      if (l + 1 != layers()) g.array() *= derivative(cache.pre[l]).array();
      Eigen::Map<const ColMatrix> w(params + w_off_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                                    static_cast<Eigen::Index>(sizes_[l]));
      if (grad) {
        Eigen::Map<ColMatrix> gw(grad + w_off_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                                 static_cast<Eigen::Index>(sizes_[l]));
        Eigen::Map<Vector> gb(grad + b_off_[l], static_cast<Eigen::Index>(sizes_[l + 1]));
        gw.noalias() += g * cache.post[l].transpose();
        gb.noalias() += g.rowwise().sum();
      }
      if (l > 0 || g_in) {
        ColMatrix next = w.transpose() * g;
        g = std::move(next);
      }
    }
    if (g_in) *g_in = std::move(g);
  }

 private:
  ColMatrix apply(const ColMatrix& z) const {
    switch (act_) {
      case Activation::relu: return z.cwiseMax(0.0);
      case Activation::tanh: return z.array().tanh().matrix();
      case Activation::softplus:
        return z.unaryExpr([b = beta_](double v) {
          const double s = b * v;
          return s > 0.0 ? v + std::log1p(std::exp(-s)) / b : std::log1p(std::exp(s)) / b;
        });
    }
    return z;
  }

  ColMatrix derivative(const ColMatrix& z) const {
    switch (act_) {
      case Activation::relu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
      case Activation::tanh:
        return z.unaryExpr([](double v) {
          const double t = std::tanh(v);
          return 1.0 - t * t;
        });
      case Activation::softplus:
        return z.unaryExpr([b = beta_](double v) {
          const double s = b * v;
          return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
        });
    }
    return z;
  }

  std::vector<std::size_t> sizes_;
  Activation act_ = Activation::relu;
  double beta_ = 20.0;
  std::vector<std::size_t> w_off_;
  std::vector<std::size_t> b_off_;
  std::size_t n_params_ = 0;
};

}  // namespace deepspoc
