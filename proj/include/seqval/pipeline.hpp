#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "seqval/acquisition.hpp"
#include "seqval/alphabet.hpp"
#include "seqval/checkpoint.hpp"
#include "seqval/config.hpp"
#include "seqval/dataset.hpp"
#include "seqval/digest.hpp"
#include "seqval/learning.hpp"
#include "seqval/pyexpr.hpp"
#include "seqval/sampling.hpp"
#include "seqval/smiles.hpp"
#include "seqval/train.hpp"

namespace seqval {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kManifestVersion = 1;

/// A module error tagged with the pipeline stage it came from.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage(std::move(stage)) {}
  std::string stage;
};

inline Alphabet make_alphabet(const std::string& oracle, const std::string& alphabet_file) {
  if (!alphabet_file.empty()) return load_alphabet(alphabet_file);
  if (oracle == "expr") return expression_alphabet();
  if (oracle == "smiles") return smiles_alphabet();
  throw Error("unknown oracle '" + oracle + "' (expected expr or smiles)");
}

inline std::unique_ptr<SequenceValidator> make_validator(const std::string& oracle, const Alphabet& alphabet) {
  if (oracle == "expr") return std::make_unique<ExpressionValidator>(alphabet);
  if (oracle == "smiles") return std::make_unique<SmilesValidator>(alphabet);
  throw Error("unknown oracle '" + oracle + "' (expected expr or smiles)");
}

inline void save_dataset_file(const std::string& path, const Dataset& ds, const Alphabet& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_dataset(out, ds, a);
}

inline void save_report_file(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_report_csv(out, r);
}

inline void save_train_log(const std::string& path, const std::vector<TrainRecord>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_train_log(out, log);
}

/// Digest of a training log without its wall-clock column.
inline std::string train_log_digest(const std::vector<TrainRecord>& log) {
  std::ostringstream s;
  s.precision(17);
  for (const auto& r : log) s << r.step << ',' << r.loss << '\n';
  return digest_string(s.str());
}

struct Manifest {
  nlohmann::json doc;

  explicit Manifest(const ExperimentConfig& cfg) {
    nlohmann::ordered_json config;
    for (const auto& k : ExperimentConfig::keys()) config[k] = cfg.get(k);
    doc = {{"format", "seqval-manifest"},
           {"manifest_version", kManifestVersion},
           {"status", "incomplete"},
           {"config", config},
           {"config_digest", digest_string(cfg.to_string())},
           {"seeds", {{"data", cfg.data_seed}, {"model", cfg.model_seed}, {"sampling", cfg.sampling_seed}}},
           {"versions",
            {{"seqval", kVersion},
             {"checkpoint_format", kCheckpointVersion},
             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                           std::to_string(EIGEN_MINOR_VERSION)},
             {"compiler", __VERSION__}}},
           {"artifacts", nlohmann::json::array()}};
  }

  void add(const std::string& root, const std::string& rel) {
    doc["artifacts"].push_back({{"path", rel}, {"digest", digest_file(root + "/" + rel)}});
  }

  void add_log(const std::string& rel, const std::vector<TrainRecord>& log) {
    doc["artifacts"].push_back({{"path", rel}, {"digest", train_log_digest(log)}, {"digest_scope", "step,loss"}});
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest '" + path + "'");
    out << doc.dump(2) << '\n';
  }
};

namespace detail {

inline LearningConfig learning_config(const ExperimentConfig& cfg, LabelSource source) {
  LearningConfig lc;
  lc.source = source;
  lc.T = cfg.T;
  lc.rounds = cfg.rounds;
  lc.steps_per_round = cfg.steps_per_round;
  lc.acquisition = cfg.acquisition;
  lc.eval_every = cfg.eval_every;
  lc.taus = cfg.taus;
  lc.eval_n = cfg.eval_n;
  lc.threads = cfg.threads;
  return lc;
}

inline void write_curve(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out.precision(17);
  out << "labels,steps,auc\n";
  for (const auto& p : curve) out << p.labels << ',' << p.steps << ',' << p.report.auc << '\n';
}

/// One passive, active or perturb run into `dir`; artifact paths are recorded relative to `root`.
inline void run_single(const ExperimentConfig& cfg, const std::string& mode, const std::string& root,
                       const std::string& sub, Manifest& manifest) {
  const std::string dir = sub.empty() ? root : root + "/" + sub;
  auto rel = [&](const std::string& f) { return sub.empty() ? f : sub + "/" + f; };
  std::string stage = "setup";
  try {
    std::filesystem::create_directories(dir);
    Alphabet alphabet = make_alphabet(cfg.oracle, cfg.alphabet);
    auto validator = make_validator(cfg.oracle, alphabet);
    ModelConfig mc = cfg.model;
    mc.alphabet_size = alphabet.size();
    mc.seq_len = cfg.T;
    LstmModel<float> model(mc);
    model.initialize(cfg.model_seed);
    Trainer<float> trainer(model, cfg.optimizer, cfg.model_seed);

    if (mode == "perturb") {
      stage = "data";
      auto corpus = load_valid_corpus(read_lines(cfg.corpus), *validator);
      AugmentationStats st;
      Dataset ds = build_augmented_dataset(corpus, *validator, cfg.T, cfg.n, {cfg.gamma, cfg.exclude_original},
                                           cfg.data_seed, &st, cfg.threads);
      save_dataset_file(dir + "/dataset.tsv", ds, alphabet);
      manifest.add(root, rel("dataset.tsv"));
      manifest.doc["class_balance"][mode] = {{"n", st.total}, {"valid", st.valid}, {"mean_hamming", st.mean_hamming}};
      stage = "train";
      try {
        trainer.train(ds, cfg.train_steps);
      } catch (const NonFiniteLoss&) {
        save_checkpoint(dir + "/model.last-good.svqm", model, alphabet);
        throw;
      }
    } else {
      stage = "train";
      auto source = mode == "active" ? LabelSource::Active : LabelSource::Passive;
      LearningResult res;
      try {
        res = run_learning(model, trainer, *validator, learning_config(cfg, source), cfg.data_seed, cfg.sampling_seed);
      } catch (const NonFiniteLoss&) {
        save_checkpoint(dir + "/model.last-good.svqm", model, alphabet);
        throw;
      }
      save_dataset_file(dir + "/dataset.tsv", res.pool, alphabet);
      manifest.add(root, rel("dataset.tsv"));
      write_curve(dir + "/curve.csv", res.curve);
      manifest.add(root, rel("curve.csv"));
    }
    save_checkpoint(dir + "/model.svqm", model, alphabet);
    manifest.add(root, rel("model.svqm"));
    save_train_log(dir + "/train_log.csv", trainer.log());
    manifest.add_log(rel("train_log.csv"), trainer.log());

    stage = "eval";
    EvalReport report = validity_entropy_curve(model_sampler(model, cfg.T, cfg.threads), *validator, cfg.taus,
                                               cfg.eval_n, derive_seed(cfg.sampling_seed, 0xe7a1), cfg.threads);
    save_report_file(dir + "/eval.csv", report);
    manifest.add(root, rel("eval.csv"));
    manifest.doc["auc"][mode] = report.auc;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

/// Runs the configured experiment into cfg.out and writes manifest.json there.
/// On failure the manifest is written with status "incomplete" and the failing stage.
inline Manifest run_experiment(const ExperimentConfig& cfg) {
  Manifest manifest(cfg);
  const std::string root = cfg.out;
  try {
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
    std::filesystem::create_directories(root);
    {
      std::ofstream c(root + "/config.ini");
      write_config(c, cfg);
    }
    manifest.add(root, "config.ini");
    if (cfg.mode == "paired") {
      detail::run_single(cfg, "passive", root, "passive", manifest);
      detail::run_single(cfg, "active", root, "active", manifest);
    } else {
      detail::run_single(cfg, cfg.mode, root, "", manifest);
    }
    manifest.doc["status"] = "complete";
  } catch (const StageError& e) {
    manifest.doc["status"] = "incomplete";
    manifest.doc["failed_stage"] = e.stage;
    manifest.doc["error"] = e.what();
    if (std::filesystem::is_directory(root)) manifest.write(root + "/manifest.json");
    throw;
  }
  manifest.write(root + "/manifest.json");
  return manifest;
}

}  // namespace seqval
