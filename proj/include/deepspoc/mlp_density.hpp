#pragma once

// Fully connected network density rho_theta(t, x).

#include <algorithm>
#include <memory>
#include <span>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/nn.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/sde_engine.hpp"

namespace deepspoc {

struct MlpConfig {
  std::vector<std::size_t> hidden = std::vector<std::size_t>(6, 512);
  Activation activation = Activation::relu;
  double beta = 20.0;
  double output_scale = 0.1;  ///< init scale of the output layer weights
  std::uint64_t seed = 0;
};

/// Raw output of a network on (t, x), with t mapped from the time window and
/// x from the box to [-1, 1]. The output bias starts at 1/|box| so the initial
/// model is close to the uniform density.
class MlpDensity final : public DensityModel {
 public:
  static constexpr std::size_t kBatch = 2048;

  MlpDensity(Box box, double t0, double horizon, const MlpConfig& cfg)
      : box_(std::move(box)), t0_(t0), horizon_(horizon), cfg_(cfg) {
    box_.validate();
    if (!(horizon > 0.0)) throw InvalidParameter("mlp: time window must be positive");
    std::vector<std::size_t> sizes{box_.dim() + 1};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    net_ = DenseNet(sizes, cfg.activation, cfg.beta);
    theta_.assign(net_.num_params(), 0.0);
    CounterRng rng(cfg.seed, 0, Lane::model_init, 0, 0);
    net_.initialize(theta_.data(), rng, cfg.output_scale);
    *net_.output_bias(theta_.data()) = 1.0 / box_.volume();
  }

  MlpDensity(Box box, const TimeGrid& grid, const MlpConfig& cfg)
      : MlpDensity(std::move(box), grid.t0(), grid.horizon(), cfg) {}

  ModelKind kind() const override { return ModelKind::mlp; }
  std::size_t dim() const override { return box_.dim(); }
  const Box& domain() const override { return box_; }
  Capabilities capabilities() const override {
    return {false, false, cfg_.activation != Activation::relu};
  }

  const DenseNet& net() const { return net_; }
  const MlpConfig& config() const { return cfg_; }
  double t0() const { return t0_; }
  double horizon() const { return horizon_; }

  void eval(double t, const Matrix& x, Vector& out) const override {
    check_input(x);
    out.resize(x.rows());
    const std::size_t n = static_cast<std::size_t>(x.rows());
    parallel_chunks(
        n,
        [&](std::size_t, std::size_t begin, std::size_t end) {
          ColMatrix in = inputs(t, x, begin, end);
          ColMatrix o;
          net_.forward(theta_.data(), in, o);
          out.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = o.row(0).transpose();
        },
        kBatch);
  }

  void grad_x(double t, const Matrix& x, Matrix& out) const override {
    if (!capabilities().spatial_gradient) {
      throw CapabilityError("mlp spatial gradient needs a smooth activation (relu mode has none)");
    }
    check_input(x);
    out.resize(x.rows(), x.cols());
    const std::size_t n = static_cast<std::size_t>(x.rows());
    parallel_chunks(
        n,
        [&](std::size_t, std::size_t begin, std::size_t end) {
          ColMatrix in = inputs(t, x, begin, end);
          DenseNet::Cache cache;
          ColMatrix o;
          net_.forward(theta_.data(), in, o, &cache);
          ColMatrix g_in;
          net_.backward(theta_.data(), cache, ColMatrix::Ones(1, o.cols()), nullptr, &g_in);
          for (std::size_t j = begin; j < end; ++j) {
            for (std::size_t k = 0; k < dim(); ++k) {
              out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                  g_in(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(j - begin)) * 2.0 / box_.width(k);
            }
          }
        },
        kBatch);
  }

  void accumulate_param_grad(double t, const Matrix& x, const Vector& w,
                             std::span<double> grad) const override {
    check_input(x);
    check_batch(x, w, dim());
    check_grad_size(grad, num_params());
    const std::size_t n = static_cast<std::size_t>(x.rows());
    for (std::size_t begin = 0; begin < n; begin += kBatch) {
      const std::size_t end = std::min(n, begin + kBatch);
      ColMatrix in = inputs(t, x, begin, end);
      DenseNet::Cache cache;
      ColMatrix o;
      net_.forward(theta_.data(), in, o, &cache);
      ColMatrix g = w.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)).transpose();
      net_.backward(theta_.data(), cache, g, grad.data(), nullptr);
    }
  }

  std::size_t num_params() const override { return theta_.size(); }
  std::span<const double> params() const override { return theta_; }
  std::span<double> params_mut() override { return theta_; }
  std::unique_ptr<DensityModel> clone() const override { return std::make_unique<MlpDensity>(*this); }

 private:
  void check_input(const Matrix& x) const {
    if (x.cols() != static_cast<Eigen::Index>(dim())) throw DimensionError("mlp: point dimension mismatch");
    if (!x.allFinite()) throw NumericError("mlp: non-finite input point");
  }

  ColMatrix inputs(double t, const Matrix& x, std::size_t begin, std::size_t end) const {
    const std::size_t d = dim();
    ColMatrix in(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(end - begin));
    const double tn = 2.0 * (t - t0_) / horizon_ - 1.0;
    for (std::size_t j = begin; j < end; ++j) {
      const auto c = static_cast<Eigen::Index>(j - begin);
      in(0, c) = tn;
      for (std::size_t k = 0; k < d; ++k) {
        in(static_cast<Eigen::Index>(k + 1), c) =
            2.0 * (x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) - box_.lo[k]) / box_.width(k) - 1.0;
      }
    }
    return in;
  }

  Box box_;
  double t0_;
  double horizon_;
  MlpConfig cfg_;
  DenseNet net_;
  std::vector<double> theta_;
};

}  // namespace deepspoc
