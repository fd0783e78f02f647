#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/dataset.hpp"
#include "seqval/error.hpp"
#include "seqval/rng.hpp"

namespace seqval {

/// Flat parameter storage, over-aligned for Eigen.
template <class Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

struct ModelConfig {
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 128;
  std::size_t layers = 1;
  double input_dropout = 0.2;
  double hidden_dropout = 0.2;
  std::size_t alphabet_size = 0;
  std::size_t seq_len = 0;

  void validate() const {
    if (embedding_dim < 1 || hidden_dim < 1 || layers < 1) throw Error("model dimensions must be at least 1");
    if (alphabet_size < 1) throw Error("model alphabet size must be at least 1");
    if (!(input_dropout >= 0 && input_dropout < 1) || !(hidden_dropout >= 0 && hidden_dropout < 1))
      throw Error("dropout rates must lie in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// log(1 - exp(x)) for x <= 0.
inline double log1mexp(double x) { return x > -0.6931471805599453 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x)); }

/// log σ(a), stable for large |a|.
inline double log_sigmoid(double a) { return a >= 0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a)); }

inline double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

struct TensorInfo {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
  std::size_t size() const { return rows * cols; }
};

/// Dropout masks for a batch of columns, already scaled by 1/(1-p).
/// Empty matrices mean no dropout.
template <class Scalar>
struct Masks {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat input;
  std::vector<Mat> hidden;

  bool empty() const { return input.size() == 0; }
  std::size_t columns() const { return static_cast<std::size_t>(input.cols()); }
};

/// Single- or multi-layer LSTM with C independent logistic heads.
/// Column C of the embedding is the START token. Gate blocks are ordered i, f, g, o.
template <class Scalar = float>
class LstmModel {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  LstmModel() = default;

  explicit LstmModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t E = config_.embedding_dim, H = config_.hidden_dim, C = config_.alphabet_size;
    add_tensor("embedding", E, C + 1);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      add_tensor(p + "input", 4 * H, l == 0 ? E : H);
      add_tensor(p + "recurrent", 4 * H, H);
      add_tensor(p + "bias", 4 * H, 1);
    }
    add_tensor("output.weight", C, H);
    add_tensor("output.bias", C, 1);
    params_.assign(total_, Scalar(0));
  }

  const ModelConfig& config() const { return config_; }
  std::size_t alphabet_size() const { return config_.alphabet_size; }
  std::size_t start_token() const { return config_.alphabet_size; }

  ParamVector<Scalar>& params() { return params_; }
  const ParamVector<Scalar>& params() const { return params_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }

  /// Uniform(-0.08, 0.08) matrices, zero biases except forget gate = 1.
  void initialize(std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x1417);
    for (const auto& t : tensors_) {
      bool bias = t.name.ends_with("bias");
      for (std::size_t k = 0; k < t.size(); ++k)
        params_[t.offset + k] = bias ? Scalar(0) : static_cast<Scalar>(-0.08 + 0.16 * uniform01(rng));
    }
    const std::size_t H = config_.hidden_dim;
    for (std::size_t l = 0; l < config_.layers; ++l) bias(l).middleRows(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H)).setOnes();
  }

  MatMap embedding() { return map(0); }
  ConstMatMap embedding() const { return cmap(0); }
  MatMap input_weight(std::size_t l) { return map(1 + 3 * l); }
  ConstMatMap input_weight(std::size_t l) const { return cmap(1 + 3 * l); }
  MatMap recurrent_weight(std::size_t l) { return map(2 + 3 * l); }
  ConstMatMap recurrent_weight(std::size_t l) const { return cmap(2 + 3 * l); }
  MatMap bias(std::size_t l) { return map(3 + 3 * l); }
  ConstMatMap bias(std::size_t l) const { return cmap(3 + 3 * l); }
  MatMap output_weight() { return map(1 + 3 * config_.layers); }
  ConstMatMap output_weight() const { return cmap(1 + 3 * config_.layers); }
  MatMap output_bias() { return map(2 + 3 * config_.layers); }
  ConstMatMap output_bias() const { return cmap(2 + 3 * config_.layers); }

  /// Fresh dropout masks for `columns` sequences.
  Masks<Scalar> sample_masks(std::size_t columns, Rng& rng) const {
    Masks<Scalar> m;
    auto fill = [&](Mat& mat, std::size_t rows, double p) {
      mat.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns));
      const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
      for (Eigen::Index j = 0; j < mat.cols(); ++j)
        for (Eigen::Index i = 0; i < mat.rows(); ++i) mat(i, j) = (p > 0 && uniform01(rng) < p) ? Scalar(0) : keep;
    };
    fill(m.input, config_.embedding_dim, config_.input_dropout);
    m.hidden.resize(config_.layers);
    for (auto& h : m.hidden) fill(h, config_.hidden_dim, config_.hidden_dropout);
    return m;
  }

  bool has_dropout() const { return config_.input_dropout > 0 || config_.hidden_dropout > 0; }

  /// Per-position output logits for one sequence: column t holds the logits
  /// of y(· | x_<t); the last token is never consumed.
  Mat forward_logits(std::span<const TokenId> seq, const Masks<Scalar>* masks = nullptr) const;

  /// Per-position probabilities y(c | x_<t), one column per position.
  Mat forward(std::span<const TokenId> seq, const Masks<Scalar>* masks = nullptr) const {
    Mat a = forward_logits(seq, masks);
    return a.unaryExpr([](Scalar v) { return static_cast<Scalar>(sigmoid(static_cast<double>(v))); });
  }

  /// Σ_t log y(x_t | x_<t).
  double sequence_log_prob_valid(std::span<const TokenId> seq, const Masks<Scalar>* masks = nullptr) const {
    Mat a = forward_logits(seq, masks);
    double s = 0;
    for (std::size_t t = 0; t < seq.size(); ++t) s += log_sigmoid(static_cast<double>(a(seq[t], t)));
    return s;
  }

  /// Π_t 1[y(x_t | x_<t) >= 0.5] with dropout disabled.
  bool predict_valid(std::span<const TokenId> seq) const {
    Mat a = forward_logits(seq);
    for (std::size_t t = 0; t < seq.size(); ++t)
      if (a(seq[t], t) < Scalar(0)) return false;
    return true;
  }

  /// Summed negative log-likelihood of a batch of equal-length sequences.
  /// Adds the gradient of that sum into `grad` when non-null.
  /// `masks` holds one column per example, or is null for no dropout.
  double nll(std::span<const LabeledExample* const> batch, const Masks<Scalar>* masks, ParamVector<Scalar>* grad) const;

  double nll(const std::vector<LabeledExample>& examples, const Masks<Scalar>* masks = nullptr,
             ParamVector<Scalar>* grad = nullptr) const {
    std::vector<const LabeledExample*> ptrs;
    for (const auto& e : examples) ptrs.push_back(&e);
    return nll(std::span<const LabeledExample* const>(ptrs), masks, grad);
  }

  template <class Other>
  LstmModel<Other> cast() const {
    LstmModel<Other> out(config_);
    for (std::size_t k = 0; k < params_.size(); ++k) out.params()[k] = static_cast<Other>(params_[k]);
    return out;
  }

 private:
  ModelConfig config_;
  std::vector<TensorInfo> tensors_;
  ParamVector<Scalar> params_;
  std::size_t total_ = 0;

  void add_tensor(std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
  }
  MatMap map(std::size_t i) {
    const auto& t = tensors_[i];
    return MatMap(params_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  ConstMatMap cmap(std::size_t i) const {
    const auto& t = tensors_[i];
    return ConstMatMap(params_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }

  template <class S>
  friend class LstmRunner;
};

/// Incremental evaluation of B sequences in lockstep; each column carries its own masks.
template <class Scalar = float>
class LstmRunner {
 public:
  using Model = LstmModel<Scalar>;
  using Mat = typename Model::Mat;

  LstmRunner(const Model& model, std::size_t columns, Masks<Scalar> masks = {})
      : model_(model), masks_(std::move(masks)), B_(columns) {
    if (!masks_.empty() && masks_.columns() != columns) throw Error("mask columns do not match runner width");
    const auto H = static_cast<Eigen::Index>(model.config().hidden_dim);
    h_.assign(model.config().layers, Mat::Zero(H, static_cast<Eigen::Index>(B_)));
    c_ = h_;
  }

  std::size_t columns() const { return B_; }

  /// Consumes one token per column and returns the logits of the next
  /// position (C x B). The first call should feed START.
  const Mat& step(std::span<const TokenId> tokens) {
    if (tokens.size() != B_) throw Error("runner step expects one token per column");
    const auto& cfg = model_.config();
    const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
    auto emb = model_.embedding();
    x_.resize(emb.rows(), static_cast<Eigen::Index>(B_));
    for (std::size_t j = 0; j < B_; ++j) {
      if (tokens[j] > cfg.alphabet_size) throw Error("token id outside the model alphabet");
      x_.col(static_cast<Eigen::Index>(j)) = emb.col(tokens[j]);
    }
    if (!masks_.empty()) x_.array() *= masks_.input.array();
    const Mat* in = &x_;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      z_.noalias() = model_.input_weight(l) * *in;
      z_.noalias() += model_.recurrent_weight(l) * h_[l];
      z_.colwise() += model_.bias(l).col(0);
      auto i = z_.topRows(H).array();
      auto f = z_.middleRows(H, H).array();
      auto g = z_.middleRows(2 * H, H).array();
      auto o = z_.bottomRows(H).array();
      c_[l].array() = sig(f) * c_[l].array() + sig(i) * g.tanh();
      h_[l].array() = sig(o) * c_[l].array().tanh();
      if (!masks_.empty()) h_[l].array() *= masks_.hidden[l].array();
      in = &h_[l];
    }
    out_.noalias() = model_.output_weight() * *in;
    out_.colwise() += model_.output_bias().col(0);
    return out_;
  }

  const Mat& start() {
    std::vector<TokenId> s(B_, static_cast<TokenId>(model_.start_token()));
    return step(s);
  }

 private:
  const Model& model_;
  Masks<Scalar> masks_;
  std::size_t B_;
  std::vector<Mat> h_, c_;
  Mat x_, z_, out_;

  template <class A>
  static auto sig(const A& a) {
    return (Scalar(1) + (-a).exp()).inverse();
  }
};

template <class Scalar>
typename LstmModel<Scalar>::Mat LstmModel<Scalar>::forward_logits(std::span<const TokenId> seq,
                                                                  const Masks<Scalar>* masks) const {
  for (TokenId t : seq)
    if (t >= config_.alphabet_size) throw Error("token id outside the model alphabet");
  LstmRunner<Scalar> run(*this, 1, masks ? *masks : Masks<Scalar>{});
  Mat out(static_cast<Eigen::Index>(config_.alphabet_size), static_cast<Eigen::Index>(seq.size()));
  TokenId prev = static_cast<TokenId>(start_token());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    out.col(static_cast<Eigen::Index>(t)) = run.step(std::span<const TokenId>(&prev, 1));
    prev = seq[t];
  }
  return out;
}

template <class Scalar>
double LstmModel<Scalar>::nll(std::span<const LabeledExample* const> batch, const Masks<Scalar>* masks,
                              ParamVector<Scalar>* grad) const {
  if (batch.empty()) return 0.0;
  const std::size_t B = batch.size(), T = batch.front()->sequence.size(), L = config_.layers;
  const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
  const auto Bi = static_cast<Eigen::Index>(B);
  for (const auto* e : batch) {
    if (e->sequence.size() != T) throw Error("batch sequences must share one length");
    for (TokenId t : e->sequence)
      if (t >= config_.alphabet_size) throw Error("token id outside the model alphabet");
  }
  if (masks && !masks->empty() && masks->columns() != B) throw Error("mask columns do not match batch size");
  const bool drop = masks && !masks->empty();
  auto sig = [](const auto& a) { return (Scalar(1) + (-a).exp()).inverse(); };

  // Cached activations per time step and layer.
  std::vector<Mat> xs(T);                                       // dropped embeddings
  std::vector<std::vector<Mat>> gates(T, std::vector<Mat>(L));  // i f g o after nonlinearity
  std::vector<std::vector<Mat>> cs(T, std::vector<Mat>(L)), tcs(T, std::vector<Mat>(L)), hds(T, std::vector<Mat>(L));
  std::vector<Mat> logits(T);
  auto emb = embedding();
  for (std::size_t t = 0; t < T; ++t) {
    Mat& x = xs[t];
    x.resize(emb.rows(), Bi);
    for (std::size_t j = 0; j < B; ++j) {
      TokenId tok = t == 0 ? static_cast<TokenId>(start_token()) : batch[j]->sequence[t - 1];
      x.col(static_cast<Eigen::Index>(j)) = emb.col(tok);
    }
    if (drop) x.array() *= masks->input.array();
    const Mat* in = &x;
    for (std::size_t l = 0; l < L; ++l) {
      Mat z = input_weight(l) * *in;
      if (t > 0) z.noalias() += recurrent_weight(l) * hds[t - 1][l];
      z.colwise() += bias(l).col(0);
      Mat& gt = gates[t][l];
      gt.resize(4 * H, Bi);
      gt.topRows(H).array() = sig(z.topRows(H).array());
      gt.middleRows(H, H).array() = sig(z.middleRows(H, H).array());
      gt.middleRows(2 * H, H).array() = z.middleRows(2 * H, H).array().tanh();
      gt.bottomRows(H).array() = sig(z.bottomRows(H).array());
      cs[t][l] = gt.topRows(H).cwiseProduct(gt.middleRows(2 * H, H));
      if (t > 0) cs[t][l].array() += gt.middleRows(H, H).array() * cs[t - 1][l].array();
      tcs[t][l] = cs[t][l].array().tanh();
      hds[t][l] = gt.bottomRows(H).cwiseProduct(tcs[t][l]);
      if (drop) hds[t][l].array() *= masks->hidden[l].array();
      in = &hds[t][l];
    }
    logits[t] = output_weight() * *in;
    logits[t].colwise() += output_bias().col(0);
  }

  // Loss and dL/ds per example, s = Σ_t log σ(a_t[x_t]).
  double loss = 0;
  std::vector<double> dls(B);
  for (std::size_t j = 0; j < B; ++j) {
    double s = 0;
    for (std::size_t t = 0; t < T; ++t)
      s += log_sigmoid(static_cast<double>(logits[t](batch[j]->sequence[t], static_cast<Eigen::Index>(j))));
    double lj;
    if (batch[j]->label == 1) {
      lj = -s;
      dls[j] = -1.0;
    } else {
      lj = -log1mexp(s);
      dls[j] = 1.0 / std::expm1(-s);
    }
    loss += lj;
  }
  if (!std::isfinite(loss)) throw NonFiniteLoss(0);
  if (!grad) return loss;

  if (grad->size() != params_.size()) grad->assign(params_.size(), Scalar(0));
  auto gmap = [&](std::size_t i) {
    const auto& ti = tensors_[i];
    return MatMap(grad->data() + ti.offset, static_cast<Eigen::Index>(ti.rows), static_cast<Eigen::Index>(ti.cols));
  };
  MatMap g_emb = gmap(0), g_out = gmap(1 + 3 * L), g_outb = gmap(2 + 3 * L);

  std::vector<Mat> dh_next(L, Mat::Zero(H, Bi)), dc_next(L, Mat::Zero(H, Bi));
  Mat da = Mat::Zero(static_cast<Eigen::Index>(config_.alphabet_size), Bi);
  Mat dz(4 * H, Bi);
  for (std::size_t t = T; t-- > 0;) {
    da.setZero();
    for (std::size_t j = 0; j < B; ++j) {
      auto row = static_cast<Eigen::Index>(batch[j]->sequence[t]);
      auto col = static_cast<Eigen::Index>(j);
      da(row, col) = static_cast<Scalar>(dls[j] * sigmoid(-static_cast<double>(logits[t](row, col))));
    }
    g_out.noalias() += da * hds[t][L - 1].transpose();
    g_outb.col(0) += da.rowwise().sum();
    Mat dhd = output_weight().transpose() * da;
    for (std::size_t l = L; l-- > 0;) {
      dhd += dh_next[l];
      if (drop) dhd.array() *= masks->hidden[l].array();
      const Mat& gt = gates[t][l];
      auto i = gt.topRows(H).array();
      auto f = gt.middleRows(H, H).array();
      auto g = gt.middleRows(2 * H, H).array();
      auto o = gt.bottomRows(H).array();
      auto tc = tcs[t][l].array();
      Mat dc = dc_next[l];
      dc.array() += dhd.array() * o * (Scalar(1) - tc * tc);
      dz.topRows(H).array() = dc.array() * g * i * (Scalar(1) - i);
      if (t > 0)
        dz.middleRows(H, H).array() = dc.array() * cs[t - 1][l].array() * f * (Scalar(1) - f);
      else
        dz.middleRows(H, H).setZero();
      dz.middleRows(2 * H, H).array() = dc.array() * i * (Scalar(1) - g * g);
      dz.bottomRows(H).array() = dhd.array() * tc * o * (Scalar(1) - o);
      dc_next[l].array() = dc.array() * f;

      const Mat& in = l == 0 ? xs[t] : hds[t][l - 1];
      gmap(1 + 3 * l).noalias() += dz * in.transpose();
      if (t > 0) {
        gmap(2 + 3 * l).noalias() += dz * hds[t - 1][l].transpose();
        dh_next[l].noalias() = recurrent_weight(l).transpose() * dz;
      }
      gmap(3 + 3 * l).col(0) += dz.rowwise().sum();
      Mat din = input_weight(l).transpose() * dz;
      if (l > 0) {
        dhd = std::move(din);
      } else {
        if (drop) din.array() *= masks->input.array();
        for (std::size_t j = 0; j < B; ++j) {
          TokenId tok = t == 0 ? static_cast<TokenId>(start_token()) : batch[j]->sequence[t - 1];
          g_emb.col(tok) += din.col(static_cast<Eigen::Index>(j));
        }
      }
    }
  }
  return loss;
}

}  // namespace seqval
