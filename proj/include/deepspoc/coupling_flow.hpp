#pragma once

// Temporal affine-coupling normalising flow.

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/nn.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/sde_engine.hpp"

namespace deepspoc {

struct FlowConfig {
  std::size_t blocks = 6;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  double scale_limit = 4.0;  ///< s = c tanh(raw / c)
  std::uint64_t seed = 0;
};

/// x = F_t(z), z ~ N(0, I), with F_t a composition of affine couplings. In
/// block k the coordinates j with (j + k) even are transformed using scale
/// and shift produced from (t, remaining coordinates). In 1D every block
/// transforms the single coordinate from t alone.
class CouplingFlowDensity final : public DensityModel {
 public:
  static constexpr std::size_t kBatch = 2048;

  CouplingFlowDensity(Box box, double t0, double horizon, const FlowConfig& cfg)
      : box_(std::move(box)), t0_(t0), horizon_(horizon), cfg_(cfg) {
    box_.validate();
    if (cfg.blocks == 0) throw InvalidParameter("flow needs at least one coupling block");
    if (!(horizon > 0.0)) throw InvalidParameter("flow: time window must be positive");
    if (!(cfg.scale_limit > 0.0)) throw InvalidParameter("flow: scale limit must be positive");
    const std::size_t d = box_.dim();
    std::size_t off = 0;
    for (std::size_t k = 0; k < cfg.blocks; ++k) {
      Block b;
      for (std::size_t j = 0; j < d; ++j) {
        if (d == 1 || (j + k) % 2 == 0) {
          b.active.push_back(j);
        } else {
          b.passive.push_back(j);
        }
      }
      std::vector<std::size_t> sizes{1 + b.passive.size()};
      sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
      sizes.push_back(2 * b.active.size());
      b.net = DenseNet(sizes, cfg.activation);
      b.offset = off;
      off += b.net.num_params();
      blocks_.push_back(std::move(b));
    }
    theta_.assign(off, 0.0);
    CounterRng rng(cfg.seed, 0, Lane::model_init, 0, 0);
    for (const auto& b : blocks_) b.net.initialize(theta_.data() + b.offset, rng, 0.0);
  }

  CouplingFlowDensity(Box box, const TimeGrid& grid, const FlowConfig& cfg)
      : CouplingFlowDensity(std::move(box), grid.t0(), grid.horizon(), cfg) {}

  ModelKind kind() const override { return ModelKind::flow; }
  std::size_t dim() const override { return box_.dim(); }
  const Box& domain() const override { return box_; }
  Capabilities capabilities() const override { return {true, true, true}; }
  const FlowConfig& config() const { return cfg_; }
  double t0() const { return t0_; }
  double horizon() const { return horizon_; }

  /// x = F_t(z) for each row of z; logdet receives log|det dF/dz|.
  Matrix forward(double t, const Matrix& z, Vector* logdet = nullptr) const {
    check_input(z);
    ColMatrix u = z.transpose();
    Vector ld = Vector::Zero(z.rows());
    for (const auto& b : blocks_) {
      ColMatrix s, sh, raw;
      conditioner(b, t, u, s, sh, nullptr, raw);
      for (std::size_t a = 0; a < b.active.size(); ++a) {
        const auto j = static_cast<Eigen::Index>(b.active[a]);
        const auto r = static_cast<Eigen::Index>(a);
        u.row(j) = (u.row(j).array() * s.row(r).array().exp() + sh.row(r).array()).matrix();
      }
      ld += s.colwise().sum().transpose();
    }
    if (logdet) *logdet = ld;
    return u.transpose();
  }

  /// z = F_t^{-1}(x); logdet receives log|det dF^{-1}/dx|.
  Matrix inverse(double t, const Matrix& x, Vector* logdet = nullptr) const {
    check_input(x);
    ColMatrix u = x.transpose();
    Vector ld = Vector::Zero(x.rows());
    for (std::size_t k = blocks_.size(); k-- > 0;) {
      const Block& b = blocks_[k];
      ColMatrix s, sh, raw;
      conditioner(b, t, u, s, sh, nullptr, raw);
      for (std::size_t a = 0; a < b.active.size(); ++a) {
        const auto j = static_cast<Eigen::Index>(b.active[a]);
        const auto r = static_cast<Eigen::Index>(a);
        u.row(j) = ((u.row(j).array() - sh.row(r).array()) * (-s.row(r).array()).exp()).matrix();
      }
      ld -= s.colwise().sum().transpose();
    }
    if (!u.allFinite()) throw NumericError("flow inverse produced a non-finite point");
    if (logdet) *logdet = ld;
    return u.transpose();
  }

  void log_eval(double t, const Matrix& x, Vector& out) const override {
    Vector ld;
    Matrix z = inverse(t, x, &ld);
    const double c = -0.5 * static_cast<double>(dim()) * std::log(2.0 * kPi);
    out = (c - 0.5 * z.rowwise().squaredNorm().array()).matrix() + ld;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (!std::isfinite(out(i))) {
        throw NumericError("flow log density is non-finite at point " + std::to_string(i));
      }
    }
  }

  void eval(double t, const Matrix& x, Vector& out) const override {
    log_eval(t, x, out);
    out = out.array().exp();
  }

  void grad_x(double t, const Matrix& x, Matrix& out) const override {
    check_input(x);
    Vector w = Vector::Ones(x.rows());
    Vector logp;
    out = log_backward(t, x, w, nullptr, &logp);
    out.array().colwise() *= logp.array().exp();
  }

  Matrix sample_direct(double t, std::size_t n, CounterRng& rng) const override {
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (Eigen::Index k = 0; k < z.cols(); ++k) z(i, k) = rng.normal();
    }
    return forward(t, z);
  }

  void accumulate_log_param_grad(double t, const Matrix& x, const Vector& w,
                                 std::span<double> grad) const override {
    check_batch(x, w, dim());
    check_grad_size(grad, num_params());
    log_backward(t, x, w, grad.data(), nullptr);
  }

  /// d/dtheta sum_j w_j p(x_j) = sum_j w_j p(x_j) d log p(x_j).
  void accumulate_param_grad(double t, const Matrix& x, const Vector& w,
                             std::span<double> grad) const override {
    check_batch(x, w, dim());
    check_grad_size(grad, num_params());
    Vector p;
    eval(t, x, p);
    Vector wp = w.cwiseProduct(p);
    log_backward(t, x, wp, grad.data(), nullptr);
  }

  std::size_t num_params() const override { return theta_.size(); }
  std::span<const double> params() const override { return theta_; }
  std::span<double> params_mut() override { return theta_; }
  std::unique_ptr<DensityModel> clone() const override { return std::make_unique<CouplingFlowDensity>(*this); }

 private:
  struct Block {
    std::vector<std::size_t> active;
    std::vector<std::size_t> passive;
    DenseNet net;
    std::size_t offset = 0;
  };

  void check_input(const Matrix& x) const {
    if (x.cols() != static_cast<Eigen::Index>(dim())) throw DimensionError("flow: point dimension mismatch");
    if (!x.allFinite()) throw NumericError("flow: non-finite input point");
  }

  double time_input(double t) const { return 2.0 * (t - t0_) / horizon_ - 1.0; }

  /// Scale s and shift sh (|active| x B) of block b at the current points u.
  void conditioner(const Block& b, double t, const ColMatrix& u, ColMatrix& s, ColMatrix& sh,
                   DenseNet::Cache* cache, ColMatrix& raw) const {
    const Eigen::Index n = u.cols();
    ColMatrix in(static_cast<Eigen::Index>(1 + b.passive.size()), n);
    in.row(0).setConstant(time_input(t));
    for (std::size_t p = 0; p < b.passive.size(); ++p) {
      in.row(static_cast<Eigen::Index>(p + 1)) = u.row(static_cast<Eigen::Index>(b.passive[p]));
    }
    ColMatrix out;
    b.net.forward(theta_.data() + b.offset, in, out, cache);
    const auto na = static_cast<Eigen::Index>(b.active.size());
    raw = out.topRows(na);
    const double c = cfg_.scale_limit;
    s = (raw.array() / c).tanh() * c;
    sh = out.bottomRows(na);
  }

  /// Reverse pass of sum_j w_j log p(x_j). Returns the gradient with respect
  /// to x (rows scaled by w_j); adds parameter gradients into grad if set.
  Matrix log_backward(double t, const Matrix& x, const Vector& w, double* grad, Vector* logp) const {
    check_input(x);
    const std::size_t n = static_cast<std::size_t>(x.rows());
    const std::size_t d = dim();
    Matrix gx(x.rows(), x.cols());
    if (logp) logp->resize(x.rows());
    for (std::size_t begin = 0; begin < n; begin += kBatch) {
      const std::size_t end = std::min(n, begin + kBatch);
      const auto bsz = static_cast<Eigen::Index>(end - begin);
      ColMatrix u = x.middleRows(static_cast<Eigen::Index>(begin), bsz).transpose();
      const Vector wc = w.segment(static_cast<Eigen::Index>(begin), bsz);
      const std::size_t nb = blocks_.size();
      std::vector<DenseNet::Cache> caches(nb);
      std::vector<ColMatrix> s(nb), raw(nb), after(nb);
      Vector ld = Vector::Zero(bsz);
      for (std::size_t k = nb; k-- > 0;) {
        const Block& b = blocks_[k];
        ColMatrix sh;
        conditioner(b, t, u, s[k], sh, &caches[k], raw[k]);
        for (std::size_t a = 0; a < b.active.size(); ++a) {
          const auto j = static_cast<Eigen::Index>(b.active[a]);
          const auto r = static_cast<Eigen::Index>(a);
          u.row(j) = ((u.row(j).array() - sh.row(r).array()) * (-s[k].row(r).array()).exp()).matrix();
        }
        after[k] = u;
        ld -= s[k].colwise().sum().transpose();
      }
      if (!u.allFinite()) throw NumericError("flow inverse produced a non-finite point");
      if (logp) {
        const double c = -0.5 * static_cast<double>(d) * std::log(2.0 * kPi);
        logp->segment(static_cast<Eigen::Index>(begin), bsz) =
            (c - 0.5 * u.colwise().squaredNorm().array()).matrix().transpose() + ld;
      }
      // Adjoint of the base log density with respect to z.
      ColMatrix g = -u;
      g.array().rowwise() *= wc.transpose().array();
      for (std::size_t k = 0; k < nb; ++k) {
        const Block& b = blocks_[k];
        const auto na = static_cast<Eigen::Index>(b.active.size());
        ColMatrix g_out(2 * na, bsz);
        ColMatrix g_before = g;
        for (Eigen::Index a = 0; a < na; ++a) {
          const auto j = static_cast<Eigen::Index>(b.active[static_cast<std::size_t>(a)]);
          const Eigen::ArrayXXd es = (-s[k].row(a).array()).exp();
          const Eigen::ArrayXXd ga = g.row(j).array();
          const Eigen::ArrayXXd gs = ga * (-after[k].row(j).array()) - wc.transpose().array();
          const Eigen::ArrayXXd th = (raw[k].row(a).array() / cfg_.scale_limit).tanh();
          g_out.row(a) = (gs * (1.0 - th * th)).matrix();
          g_out.row(na + a) = (-ga * es).matrix();
          g_before.row(j) = (ga * es).matrix();
        }
        ColMatrix g_in;
        b.net.backward(theta_.data() + b.offset, caches[k], g_out, grad ? grad + b.offset : nullptr, &g_in);
        for (std::size_t p = 0; p < b.passive.size(); ++p) {
          g_before.row(static_cast<Eigen::Index>(b.passive[p])) += g_in.row(static_cast<Eigen::Index>(p + 1));
        }
        g = std::move(g_before);
      }
      gx.middleRows(static_cast<Eigen::Index>(begin), bsz) = g.transpose();
    }
    return gx;
  }

  Box box_;
  double t0_;
  double horizon_;
  FlowConfig cfg_;
  std::vector<Block> blocks_;
  std::vector<double> theta_;
};

}  // namespace deepspoc
