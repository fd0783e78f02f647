#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqval/acquisition.hpp"
#include "seqval/dataset.hpp"
#include "seqval/lstm.hpp"
#include "seqval/sampling.hpp"
#include "seqval/train.hpp"
#include "seqval/verdict.hpp"

namespace seqval {

enum class LabelSource { Passive, Active };

inline std::string to_string(LabelSource s) { return s == LabelSource::Passive ? "passive" : "active"; }

/// Rounds of: acquire L labeled sequences, add them to the pool, take
/// `steps_per_round` gradient steps on the pool.
struct LearningConfig {
  LabelSource source = LabelSource::Passive;
  std::size_t T = 10;
  std::size_t rounds = 10;
  std::size_t steps_per_round = 100;
  AcquisitionConfig acquisition;  // L is used by both sources
  std::size_t eval_every = 0;     // evaluate when the pool crosses a multiple of this many labels; 0 = final only
  std::vector<double> taus = default_tau_grid();
  std::size_t eval_n = 1000;
  std::size_t threads = 1;
};

struct CurvePoint {
  std::size_t labels = 0;
  std::size_t steps = 0;
  EvalReport report;
};

struct LearningResult {
  Dataset pool;
  std::vector<CurvePoint> curve;
};

/// Round r draws its labels with stream r of `data_seed` and evaluates with stream r of `eval_seed`.
template <class Scalar>
LearningResult run_learning(LstmModel<Scalar>& model, Trainer<Scalar>& trainer, const SequenceValidator& validator,
                            const LearningConfig& cfg, std::uint64_t data_seed, std::uint64_t eval_seed,
                            const std::function<void(const CurvePoint&)>& on_eval = {}) {
  cfg.acquisition.validate();
  LearningResult out;
  out.pool.alphabet_id = validator.alphabet().fingerprint();
  auto evaluate = [&](std::size_t r) {
    CurvePoint p;
    p.labels = out.pool.size();
    p.steps = trainer.steps();
    p.report = validity_entropy_curve(model_sampler(model, cfg.T, cfg.threads), validator, cfg.taus, cfg.eval_n,
                                      derive_seed(eval_seed, r), cfg.threads);
    out.curve.push_back(p);
    if (on_eval) on_eval(p);
  };
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    std::uint64_t s = derive_seed(data_seed, r);
    Dataset batch = cfg.source == LabelSource::Active
                        ? generate_active_batch(model, validator, cfg.acquisition, cfg.T, s, cfg.threads)
                        : label_sequences(sample_uniform(validator.alphabet(), cfg.T, cfg.acquisition.L, s), validator,
                                          cfg.threads);
    out.pool.append(batch);
    trainer.train(out.pool, cfg.steps_per_round);
    bool last = r + 1 == cfg.rounds;
    bool crossed = cfg.eval_every > 0 && out.pool.size() / cfg.eval_every > (out.pool.size() - batch.size()) / cfg.eval_every;
    if (last || crossed) evaluate(r);
  }
  return out;
}

}  // namespace seqval
