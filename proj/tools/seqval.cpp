// seqval: command-line front end for the sequence-validity library.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "seqval/seqval.hpp"
#include "seqval/pipeline.hpp"

using namespace seqval;

namespace {

struct OracleOpts {
  std::string oracle = "expr";
  std::string alphabet;
};

void add_oracle_opts(CLI::App* cmd, OracleOpts& o, bool required = true) {
  auto* opt = cmd->add_option("--oracle", o.oracle, "expr or smiles")->check(CLI::IsMember({"expr", "smiles"}));
  if (required) opt->required();
  cmd->add_option("--alphabet", o.alphabet, "alphabet file (default: built-in alphabet of the oracle)");
}

struct ModelOpts {
  ModelConfig model;
  OptimizerConfig opt;
};

void add_model_opts(CLI::App* cmd, ModelOpts& m) {
  cmd->add_option("--embedding", m.model.embedding_dim, "embedding size")->capture_default_str();
  cmd->add_option("--hidden", m.model.hidden_dim, "hidden units")->capture_default_str();
  cmd->add_option("--layers", m.model.layers, "recurrent layers")->capture_default_str();
  cmd->add_option("--dropout-in", m.model.input_dropout, "input dropout rate")->capture_default_str();
  cmd->add_option("--dropout-h", m.model.hidden_dropout, "hidden dropout rate")->capture_default_str();
  cmd->add_option("--lr", m.opt.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", m.opt.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--clip", m.opt.clip_norm, "gradient norm clip (0 disables)")->capture_default_str();
}

std::vector<std::string> read_input_lines(const std::string& path) {
  std::vector<std::string> out;
  std::ifstream file;
  std::istream* in = &std::cin;
  if (!path.empty() && path != "-") {
    file.open(path);
    if (!file) throw Error("cannot open '" + path + "'");
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::vector<double> parse_taus(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::size_t resolve_T(std::size_t flag, const Checkpoint& ck) {
  std::size_t T = flag ? flag : ck.model.config().seq_len;
  if (T == 0) throw Error("sequence length unknown: pass --T");
  return T;
}

std::string error_type(const seqval::Error& e) {
  using namespace seqval;
  if (dynamic_cast<const UnknownSymbol*>(&e)) return "UnknownSymbol";
  if (dynamic_cast<const TooLong*>(&e)) return "TooLong";
  if (dynamic_cast<const NoPadToken*>(&e)) return "NoPadToken";
  if (dynamic_cast<const TooLargeToEnumerate*>(&e)) return "TooLargeToEnumerate";
  if (dynamic_cast<const NonFiniteLoss*>(&e)) return "NonFiniteLoss";
  if (dynamic_cast<const CorruptFile*>(&e)) return "CorruptFile";
  if (dynamic_cast<const VersionMismatch*>(&e)) return "VersionMismatch";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const DeadEnd*>(&e)) return "DeadEnd";
  if (dynamic_cast<const EmptyRow*>(&e)) return "EmptyRow";
  if (dynamic_cast<const CorpusInvalidEntry*>(&e)) return "CorpusInvalidEntry";
  return "Error";
}

void print_json_error(const std::string& command, const std::string& type, const std::string& message) {
  nlohmann::json j = {{"error", message}, {"type", type}, {"command", command}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned and exact validity models for sequences"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker threads; results are reproducible only with 1")->capture_default_str();

  // oracle
  OracleOpts o_oracle;
  std::string o_input;
  std::optional<std::size_t> o_remaining;
  bool o_reasons = false;
  auto* c_oracle = app.add_subcommand("oracle", "label each input line as valid (1) or invalid (0)");
  add_oracle_opts(c_oracle, o_oracle);
  c_oracle->add_option("--input", o_input, "input file, one sequence per line (default stdin)");
  c_oracle->add_option("--remaining", o_remaining,
                       "treat lines as prefixes: 1 iff some completion with exactly this many more tokens is valid");
  c_oracle->add_flag("--reasons", o_reasons, "append the rejection reason as a third column");

  // gen-data
  OracleOpts g_oracle;
  std::string g_mode = "passive", g_corpus, g_out;
  double g_gamma = 0.05;
  std::size_t g_n = 1000, g_T = 10;
  std::uint64_t g_seed = 1;
  bool g_keep_original = false;
  auto* c_gen = app.add_subcommand("gen-data", "build a labeled dataset");
  add_oracle_opts(c_gen, g_oracle);
  c_gen->add_option("--mode", g_mode, "passive or perturb")->check(CLI::IsMember({"passive", "perturb"}))->capture_default_str();
  c_gen->add_option("--corpus", g_corpus, "valid corpus, one sequence per line (perturb mode)");
  c_gen->add_option("--gamma", g_gamma, "per-position perturbation probability")->capture_default_str();
  c_gen->add_flag("--allow-same", g_keep_original, "let a resampled position keep its original symbol");
  c_gen->add_option("--n", g_n, "number of examples")->capture_default_str();
  c_gen->add_option("--T", g_T, "sequence length")->capture_default_str();
  c_gen->add_option("--seed", g_seed, "random seed")->capture_default_str();
  c_gen->add_option("--out", g_out, "output dataset file")->required();

  // train
  OracleOpts t_oracle;
  ModelOpts t_model;
  std::string t_data, t_out, t_log;
  std::size_t t_steps = 1000;
  std::uint64_t t_seed = 1;
  auto* c_train = app.add_subcommand("train", "fit a validity model to a labeled dataset");
  add_oracle_opts(c_train, t_oracle);
  add_model_opts(c_train, t_model);
  c_train->add_option("--data", t_data, "dataset file")->required();
  c_train->add_option("--steps", t_steps, "gradient steps")->capture_default_str();
  c_train->add_option("--seed", t_seed, "random seed")->capture_default_str();
  c_train->add_option("--out", t_out, "checkpoint to write")->required();
  c_train->add_option("--log", t_log, "training log CSV (step,loss,seconds)");

  // active-train
  OracleOpts a_oracle;
  ModelOpts a_model;
  AcquisitionConfig a_acq;
  std::size_t a_T = 10, a_rounds = 10, a_steps = 100;
  std::uint64_t a_seed = 1;
  std::string a_out, a_data_out, a_log;
  auto* c_active = app.add_subcommand("active-train", "train with mutual-information active learning");
  add_oracle_opts(c_active, a_oracle);
  add_model_opts(c_active, a_model);
  c_active->add_option("--T", a_T, "sequence length")->capture_default_str();
  c_active->add_option("--K", a_acq.K, "posterior draws per sequence")->capture_default_str();
  c_active->add_option("--theta", a_acq.theta, "acquisition temperature")->capture_default_str();
  c_active->add_option("--L", a_acq.L, "sequences per round")->capture_default_str();
  c_active->add_option("--rounds", a_rounds, "acquisition rounds")->capture_default_str();
  c_active->add_option("--steps-per-round", a_steps, "gradient steps per round")->capture_default_str();
  c_active->add_option("--seed", a_seed, "random seed")->capture_default_str();
  c_active->add_option("--out", a_out, "checkpoint to write")->required();
  c_active->add_option("--data-out", a_data_out, "write the acquired dataset here");
  c_active->add_option("--log", a_log, "training log CSV");

  // sample
  std::string s_ckpt;
  double s_tau = 1.0;
  std::size_t s_n = 10, s_T = 0;
  std::uint64_t s_seed = 1;
  auto* c_sample = app.add_subcommand("sample", "draw sequences from a trained model");
  c_sample->add_option("--ckpt", s_ckpt, "checkpoint")->required();
  c_sample->add_option("--tau", s_tau, "temperature")->capture_default_str();
  c_sample->add_option("--n", s_n, "number of sequences")->capture_default_str();
  c_sample->add_option("--T", s_T, "length (default: training length)");
  c_sample->add_option("--seed", s_seed, "random seed")->capture_default_str();

  // eval-curve
  std::string e_ckpt, e_oracle = "expr", e_taus, e_out;
  std::size_t e_n = 1000, e_T = 0;
  std::uint64_t e_seed = 1;
  auto* c_eval = app.add_subcommand("eval-curve", "validity and entropy across temperatures");
  c_eval->add_option("--ckpt", e_ckpt, "checkpoint")->required();
  c_eval->add_option("--oracle", e_oracle, "expr or smiles")->check(CLI::IsMember({"expr", "smiles"}))->required();
  c_eval->add_option("--taus", e_taus, "comma-separated ascending temperatures (default grid if omitted)");
  c_eval->add_option("--n", e_n, "samples per temperature")->capture_default_str();
  c_eval->add_option("--T", e_T, "length (default: training length)");
  c_eval->add_option("--seed", e_seed, "random seed")->capture_default_str();
  c_eval->add_option("--out", e_out, "report CSV (tau,validity,entropy_nats,n)")->required();

  // coverage
  std::string v_ckpt, v_oracle = "expr";
  double v_tau = 0.1;
  std::size_t v_n = 10000, v_T = 0;
  std::uint64_t v_seed = 1;
  auto* c_cov = app.add_subcommand("coverage", "lower bound on the number of valid sequences the model generates");
  c_cov->add_option("--ckpt", v_ckpt, "checkpoint")->required();
  c_cov->add_option("--oracle", v_oracle, "expr or smiles")->check(CLI::IsMember({"expr", "smiles"}))->required();
  c_cov->add_option("--tau", v_tau, "temperature")->capture_default_str();
  c_cov->add_option("--n", v_n, "Monte Carlo samples")->capture_default_str();
  c_cov->add_option("--T", v_T, "length (default: training length)");
  c_cov->add_option("--seed", v_seed, "random seed")->capture_default_str();

  // accuracy
  std::string q_ckpt, q_data;
  auto* c_acc = app.add_subcommand("accuracy", "fraction of examples whose predicted validity matches the label");
  c_acc->add_option("--ckpt", q_ckpt, "checkpoint")->required();
  c_acc->add_option("--data", q_data, "dataset file")->required();

  // mask-decode
  std::string m_masker, m_ckpt, m_oracle = "smiles", m_alphabet, m_rows;
  std::size_t m_n = 1;
  std::uint64_t m_seed = 1;
  auto* c_mask = app.add_subcommand("mask-decode", "sample from decoder weights, masking infeasible tokens");
  c_mask->add_option("--masker", m_masker, "ckpt or oracle")->check(CLI::IsMember({"ckpt", "oracle"}))->required();
  c_mask->add_option("--ckpt", m_ckpt, "checkpoint (masker ckpt)");
  c_mask->add_option("--oracle", m_oracle, "expr or smiles (masker oracle)")->check(CLI::IsMember({"expr", "smiles"}));
  c_mask->add_option("--alphabet", m_alphabet, "alphabet file (masker oracle)");
  c_mask->add_option("--rows", m_rows, "CSV, one row of C non-negative weights per step")->required();
  c_mask->add_option("--n", m_n, "number of sequences to decode")->capture_default_str();
  c_mask->add_option("--seed", m_seed, "random seed")->capture_default_str();

  // run
  std::string r_config;
  std::vector<std::string> r_set;
  auto* c_run = app.add_subcommand("run", "run a config-driven experiment");
  c_run->add_option("--config", r_config, "experiment config file");
  c_run->add_option("--set", r_set, "override a config key: section.key=value")->take_all();

  std::string command = "seqval";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_json_error(command, "usage", e.what());
    return 2;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    if (*c_oracle) {
      Alphabet a = make_alphabet(o_oracle.oracle, o_oracle.alphabet);
      auto v = make_validator(o_oracle.oracle, a);
      std::unique_ptr<PrefixOracle> prefix;
      if (o_remaining) {
        if (o_oracle.oracle == "smiles")
          prefix = std::make_unique<SmilesPrefixOracle>(a);
        else
          prefix = std::make_unique<BruteForcePrefixOracle>(*v);
      }
      for (const auto& line : read_input_lines(o_input)) {
        Sequence s;
        std::string reason;
        bool ok = false;
        try {
          s = tokenize(line, a);
          if (prefix) {
            ok = prefix->feasible(s, *o_remaining);
            if (!ok) reason = "no valid completion";
          } else {
            Verdict verdict = v->check(s);
            ok = verdict.valid;
            reason = verdict.reason;
          }
        } catch (const UnknownSymbol& e) {
          reason = e.what();
        }
        std::cout << (ok ? 1 : 0) << '\t' << line;
        if (o_reasons) std::cout << '\t' << reason;
        std::cout << '\n';
      }
    } else if (*c_gen) {
      Alphabet a = make_alphabet(g_oracle.oracle, g_oracle.alphabet);
      auto v = make_validator(g_oracle.oracle, a);
      Dataset ds;
      AugmentationStats st;
      if (g_mode == "passive") {
        ds = label_sequences(sample_uniform(a, g_T, g_n, g_seed), *v, threads);
        st.total = ds.size();
        for (const auto& e : ds.examples) st.valid += static_cast<std::size_t>(e.label);
      } else {
        if (g_corpus.empty()) throw Error("--corpus is required in perturb mode");
        auto corpus = load_valid_corpus(read_lines(g_corpus), *v);
        ds = build_augmented_dataset(corpus, *v, g_T, g_n, {g_gamma, !g_keep_original}, g_seed, &st, threads);
      }
      save_dataset_file(g_out, ds, a);
      nlohmann::json j = {{"n", st.total}, {"valid", st.valid}, {"valid_fraction", st.valid_fraction()}};
      if (g_mode == "perturb") j["mean_hamming"] = st.mean_hamming;
      std::cout << j.dump() << '\n';
    } else if (*c_train) {
      Alphabet a = make_alphabet(t_oracle.oracle, t_oracle.alphabet);
      Dataset ds = load_dataset(t_data, a);
      ModelConfig mc = t_model.model;
      mc.alphabet_size = a.size();
      mc.seq_len = ds.seq_len();
      LstmModel<float> model(mc);
      model.initialize(t_seed);
      Trainer<float> tr(model, t_model.opt, t_seed);
      try {
        tr.train(ds, t_steps);
      } catch (const NonFiniteLoss&) {
        save_checkpoint(t_out, model, a);
        if (!t_log.empty()) save_train_log(t_log, tr.log());
        throw;
      }
      save_checkpoint(t_out, model, a);
      if (!t_log.empty()) save_train_log(t_log, tr.log());
      std::cout << nlohmann::json{{"steps", tr.steps()}, {"final_loss", tr.log().empty() ? 0.0 : tr.log().back().loss}}.dump()
                << '\n';
    } else if (*c_active) {
      Alphabet a = make_alphabet(a_oracle.oracle, a_oracle.alphabet);
      auto v = make_validator(a_oracle.oracle, a);
      ModelConfig mc = a_model.model;
      mc.alphabet_size = a.size();
      mc.seq_len = a_T;
      LstmModel<float> model(mc);
      model.initialize(a_seed);
      Trainer<float> tr(model, a_model.opt, a_seed);
      LearningConfig lc;
      lc.source = LabelSource::Active;
      lc.T = a_T;
      lc.rounds = a_rounds;
      lc.steps_per_round = a_steps;
      lc.acquisition = a_acq;
      lc.taus = {1.0};
      lc.eval_n = 1;
      lc.threads = threads;
      LearningResult res;
      try {
        res = run_learning(model, tr, *v, lc, derive_seed(a_seed, 1), derive_seed(a_seed, 2));
      } catch (const NonFiniteLoss&) {
        save_checkpoint(a_out, model, a);
        throw;
      }
      save_checkpoint(a_out, model, a);
      if (!a_data_out.empty()) save_dataset_file(a_data_out, res.pool, a);
      if (!a_log.empty()) save_train_log(a_log, tr.log());
      std::cout << nlohmann::json{{"labels", res.pool.size()}, {"valid_fraction", res.pool.valid_fraction()}, {"steps", tr.steps()}}.dump()
                << '\n';
    } else if (*c_sample) {
      Checkpoint ck = load_checkpoint(s_ckpt);
      for (const auto& s : boltzmann_sample(ck.model, s_tau, s_n, resolve_T(s_T, ck), s_seed, threads))
        std::cout << detokenize(s.sequence, ck.alphabet) << '\n';
    } else if (*c_eval) {
      Checkpoint ck = load_checkpoint(e_ckpt);
      auto v = make_validator(e_oracle, ck.alphabet);
      auto taus = e_taus.empty() ? default_tau_grid() : parse_taus(e_taus);
      EvalReport r = validity_entropy_curve(model_sampler(ck.model, resolve_T(e_T, ck), threads), *v, taus, e_n, e_seed, threads);
      save_report_file(e_out, r);
      std::cout << nlohmann::json{{"auc", r.auc}}.dump() << '\n';
    } else if (*c_cov) {
      Checkpoint ck = load_checkpoint(v_ckpt);
      auto v = make_validator(v_oracle, ck.alphabet);
      CoverageReport r = estimate_coverage(ck.model, *v, v_tau, v_n, resolve_T(v_T, ck), v_seed, threads);
      std::cout << nlohmann::json{{"f_plus", r.f_plus},     {"f_plus_stderr", r.f_plus_stderr}, {"N_plus", r.n_plus},
                                  {"entropy_nats", r.entropy}, {"N_model", r.n_model},          {"validity", r.validity}}
                       .dump()
                << '\n';
    } else if (*c_acc) {
      Checkpoint ck = load_checkpoint(q_ckpt);
      Dataset ds = load_dataset(q_data, ck.alphabet);
      std::cout << nlohmann::json{{"accuracy", model_accuracy(ck.model, ds, threads)}, {"n", ds.size()}}.dump() << '\n';
    } else if (*c_mask) {
      std::ifstream rows_in(m_rows);
      if (!rows_in) throw Error("cannot open '" + m_rows + "'");
      DecoderRows rows = read_decoder_rows(rows_in);
      std::optional<Checkpoint> ck;
      Alphabet a;
      std::unique_ptr<SequenceValidator> v;
      std::unique_ptr<PrefixOracle> oracle;
      std::unique_ptr<StepMasker> masker;
      if (m_masker == "ckpt") {
        if (m_ckpt.empty()) throw Error("--ckpt is required with --masker ckpt");
        ck = load_checkpoint(m_ckpt);
        a = ck->alphabet;
        masker = std::make_unique<ModelMasker<float>>(ck->model);
      } else {
        a = make_alphabet(m_oracle, m_alphabet);
        if (m_oracle == "smiles") {
          auto so = std::make_unique<SmilesPrefixOracle>(a);
          masker = std::make_unique<SmilesMasker>(*so);
          oracle = std::move(so);
        } else {
          v = make_validator(m_oracle, a);
          oracle = std::make_unique<BruteForcePrefixOracle>(*v);
          masker = std::make_unique<OracleMasker>(*oracle);
        }
      }
      std::size_t fallbacks = 0;
      for (std::size_t i = 0; i < m_n; ++i) {
        Rng rng = make_rng(m_seed, i);
        DecodeResult r = mask_decode(rows, *masker, rng);
        fallbacks += r.fallbacks;
        std::cout << detokenize(r.sequence, a) << '\n';
      }
      std::cerr << nlohmann::json{{"decoded", m_n}, {"fallback_steps", fallbacks}}.dump() << '\n';
    } else if (*c_run) {
      ExperimentConfig cfg = r_config.empty() ? ExperimentConfig{} : load_config(r_config);
      for (const auto& kv : r_set) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--set expects section.key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (app.get_option("--threads")->count() > 0) cfg.threads = threads;
      Manifest m = run_experiment(cfg);
      std::cout << nlohmann::json{{"status", m.doc["status"]}, {"out", cfg.out}, {"auc", m.doc.value("auc", nlohmann::json::object())}}.dump()
                << '\n';
    }
  } catch (const StageError& e) {
    print_json_error(command, "stage:" + e.stage, e.what());
    return 1;
  } catch (const Error& e) {
    print_json_error(command, error_type(e), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_json_error(command, "exception", e.what());
    return 1;
  }
  return 0;
}
