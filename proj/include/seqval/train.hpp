#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "seqval/dataset.hpp"
#include "seqval/error.hpp"
#include "seqval/lstm.hpp"
#include "seqval/rng.hpp"

namespace seqval {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  double clip_norm = 5.0;  // global gradient norm; 0 disables clipping

  bool operator==(const OptimizerConfig&) const = default;
};

template <class Scalar>
class Adam {
 public:
  explicit Adam(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Scalar> params, std::span<const Scalar> grad) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      double g = grad[k];
      m_[k] = cfg_.beta1 * m_[k] + (1 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1 - cfg_.beta2) * g * g;
      params[k] -= static_cast<Scalar>(cfg_.learning_rate * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg_.epsilon));
    }
  }

  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the original norm.
template <class Scalar>
double clip_gradient(std::span<Scalar> grad, double max_norm) {
  double sq = 0;
  for (Scalar g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    auto s = static_cast<Scalar>(max_norm / norm);
    for (auto& g : grad) g *= s;
  }
  return norm;
}

struct TrainRecord {
  std::size_t step;
  double loss;  // mean over the minibatch, before the update
  double seconds;
};

inline void write_train_log(std::ostream& out, const std::vector<TrainRecord>& log) {
  out << "step,loss,seconds\n";
  for (const auto& r : log) out << r.step << ',' << r.loss << ',' << r.seconds << '\n';
}

/// Minibatch Adam on the mean NLL with dropout masks drawn per example.
/// Batches are drawn from reshuffled epochs; a change in dataset size starts a new epoch.
template <class Scalar = float>
class Trainer {
 public:
  Trainer(LstmModel<Scalar>& model, OptimizerConfig opt, std::uint64_t seed)
      : model_(model), opt_(opt), adam_(opt), rng_(make_rng(seed, 0x7a11)), start_(Clock::now()) {}

  /// One gradient step; throws NonFiniteLoss with the weights left at the last good state.
  double step(const Dataset& data) {
    if (data.empty()) throw Error("cannot train on an empty dataset");
    const std::size_t B = std::min(opt_.batch_size, data.size());
    batch_.clear();
    for (std::size_t k = 0; k < B; ++k) batch_.push_back(&data.examples[next_index(data.size())]);
    Masks<Scalar> masks;
    if (model_.has_dropout()) masks = model_.sample_masks(B, rng_);
    std::fill(grad_.begin(), grad_.end(), Scalar(0));
    double loss;
    try {
      loss = model_.nll(std::span<const LabeledExample* const>(batch_), model_.has_dropout() ? &masks : nullptr, &grad_);
    } catch (const NonFiniteLoss&) {
      throw NonFiniteLoss(steps_);
    }
    loss /= static_cast<double>(B);
    const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(B));
    for (auto& g : grad_) g *= inv;
    double norm = clip_gradient<Scalar>(grad_, opt_.clip_norm);
    if (!std::isfinite(norm)) throw NonFiniteLoss(steps_);
    backup_ = model_.params();
    adam_.step(model_.params(), grad_);
    if (!std::all_of(model_.params().begin(), model_.params().end(), [](Scalar p) { return std::isfinite(p); })) {
      model_.params() = backup_;
      throw NonFiniteLoss(steps_);
    }
    log_.push_back({steps_, loss, std::chrono::duration<double>(Clock::now() - start_).count()});
    ++steps_;
    return loss;
  }

  void train(const Dataset& data, std::size_t steps) {
    for (std::size_t k = 0; k < steps; ++k) step(data);
  }

  std::size_t steps() const { return steps_; }
  const std::vector<TrainRecord>& log() const { return log_; }

 private:
  using Clock = std::chrono::steady_clock;
  LstmModel<Scalar>& model_;
  OptimizerConfig opt_;
  Adam<Scalar> adam_;
  Rng rng_;
  Clock::time_point start_;
  ParamVector<Scalar> grad_ = ParamVector<Scalar>(model_.params().size(), Scalar(0));
  ParamVector<Scalar> backup_;
  std::vector<const LabeledExample*> batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t steps_ = 0;
  std::vector<TrainRecord> log_;

  std::size_t next_index(std::size_t n) {
    if (order_.size() != n || cursor_ == n) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }
};

}  // namespace seqval
