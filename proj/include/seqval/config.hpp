#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "seqval/acquisition.hpp"
#include "seqval/error.hpp"
#include "seqval/lstm.hpp"
#include "seqval/sampling.hpp"
#include "seqval/train.hpp"

namespace seqval {

/// Every parameter of an experiment. Serialized as `key = value` lines under
/// `[section]` headers; keys are addressed as `section.key`.
struct ExperimentConfig {
  std::string oracle = "expr";  // expr | smiles
  std::string alphabet;         // alphabet file; empty selects the built-in alphabet
  std::size_t T = 10;
  std::size_t threads = 1;
  std::string out = "run";

  ModelConfig model;
  OptimizerConfig optimizer;

  std::string mode = "passive";  // passive | active | perturb | paired
  std::size_t n = 10000;         // perturb: number of augmented examples
  std::string corpus;
  double gamma = 0.05;
  bool exclude_original = true;
  std::size_t train_steps = 2000;  // perturb: gradient steps on the fixed dataset
  AcquisitionConfig acquisition;
  std::size_t rounds = 100;
  std::size_t steps_per_round = 100;

  std::vector<double> taus = default_tau_grid();
  std::size_t eval_n = 1000;
  std::size_t eval_every = 0;

  std::uint64_t data_seed = 1;
  std::uint64_t model_seed = 2;
  std::uint64_t sampling_seed = 3;

  bool operator==(const ExperimentConfig& o) const { return to_string() == o.to_string(); }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  std::string to_string() const;
  void validate() const;
};

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw Error("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config key '" + key + "': '" + v + "' is not a boolean");
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigField {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <class T>
ConfigField uint_field(T ExperimentConfig::*m) {
  return {[m](const ExperimentConfig& c) { return std::to_string(c.*m); },
          [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = static_cast<T>(parse_uint(k, v)); }};
}

inline ConfigField double_field(double ExperimentConfig::*m) {
  return {[m](const ExperimentConfig& c) { return format_double(c.*m); },
          [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); }};
}

inline ConfigField string_field(std::string ExperimentConfig::*m) {
  return {[m](const ExperimentConfig& c) { return c.*m; },
          [m](ExperimentConfig& c, const std::string&, const std::string& v) { c.*m = v; }};
}

template <class S, class T>
ConfigField nested_uint(S ExperimentConfig::*s, T S::*m) {
  return {[s, m](const ExperimentConfig& c) { return std::to_string(c.*s.*m); },
          [s, m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*s.*m = static_cast<T>(parse_uint(k, v));
          }};
}

template <class S>
ConfigField nested_double(S ExperimentConfig::*s, double S::*m) {
  return {[s, m](const ExperimentConfig& c) { return format_double(c.*s.*m); },
          [s, m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*s.*m = parse_double(k, v); }};
}

inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      {"experiment.oracle", string_field(&C::oracle)},
      {"experiment.alphabet", string_field(&C::alphabet)},
      {"experiment.T", uint_field(&C::T)},
      {"experiment.threads", uint_field(&C::threads)},
      {"experiment.out", string_field(&C::out)},
      {"model.embedding_dim", nested_uint(&C::model, &ModelConfig::embedding_dim)},
      {"model.hidden_dim", nested_uint(&C::model, &ModelConfig::hidden_dim)},
      {"model.layers", nested_uint(&C::model, &ModelConfig::layers)},
      {"model.input_dropout", nested_double(&C::model, &ModelConfig::input_dropout)},
      {"model.hidden_dropout", nested_double(&C::model, &ModelConfig::hidden_dropout)},
      {"optimizer.learning_rate", nested_double(&C::optimizer, &OptimizerConfig::learning_rate)},
      {"optimizer.beta1", nested_double(&C::optimizer, &OptimizerConfig::beta1)},
      {"optimizer.beta2", nested_double(&C::optimizer, &OptimizerConfig::beta2)},
      {"optimizer.epsilon", nested_double(&C::optimizer, &OptimizerConfig::epsilon)},
      {"optimizer.batch_size", nested_uint(&C::optimizer, &OptimizerConfig::batch_size)},
      {"optimizer.clip_norm", nested_double(&C::optimizer, &OptimizerConfig::clip_norm)},
      {"data.mode", string_field(&C::mode)},
      {"data.n", uint_field(&C::n)},
      {"data.corpus", string_field(&C::corpus)},
      {"data.gamma", double_field(&C::gamma)},
      {"data.exclude_original",
       {[](const C& c) { return std::string(c.exclude_original ? "true" : "false"); },
        [](C& c, const std::string& k, const std::string& v) { c.exclude_original = parse_bool(k, v); }}},
      {"data.train_steps", uint_field(&C::train_steps)},
      {"data.K", nested_uint(&C::acquisition, &AcquisitionConfig::K)},
      {"data.theta", nested_double(&C::acquisition, &AcquisitionConfig::theta)},
      {"data.L", nested_uint(&C::acquisition, &AcquisitionConfig::L)},
      {"data.rounds", uint_field(&C::rounds)},
      {"data.steps_per_round", uint_field(&C::steps_per_round)},
      {"eval.taus",
       {[](const C& c) {
          std::string s;
          for (std::size_t i = 0; i < c.taus.size(); ++i) s += (i ? "," : "") + format_double(c.taus[i]);
          return s;
        },
        [](C& c, const std::string& k, const std::string& v) {
          c.taus.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.taus.push_back(parse_double(k, trim(item)));
        }}},
      {"eval.n", uint_field(&C::eval_n)},
      {"eval.every", uint_field(&C::eval_every)},
      {"seeds.data", uint_field(&C::data_seed)},
      {"seeds.model", uint_field(&C::model_seed)},
      {"seeds.sampling", uint_field(&C::sampling_seed)},
  };
  return fields;
}

inline const ConfigField& config_field(const std::string& key) {
  for (const auto& [k, f] : config_fields())
    if (k == key) return f;
  throw Error("unknown config key '" + key + "'");
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  detail::config_field(key).set(*this, key, value);
}

inline std::string ExperimentConfig::get(const std::string& key) const { return detail::config_field(key).get(*this); }

inline const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::config_fields()) out.push_back(f.first);
    return out;
  }();
  return k;
}

inline std::string ExperimentConfig::to_string() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : detail::config_fields()) {
    auto dot = key.find('.');
    std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << field.get(*this) << '\n';
  }
  return out.str();
}

inline void ExperimentConfig::validate() const {
  if (oracle != "expr" && oracle != "smiles") throw Error("experiment.oracle must be 'expr' or 'smiles'");
  if (mode != "passive" && mode != "active" && mode != "perturb" && mode != "paired")
    throw Error("data.mode must be one of passive, active, perturb, paired");
  if (T < 1) throw Error("experiment.T must be at least 1");
  if (threads < 1) throw Error("experiment.threads must be at least 1");
  ModelConfig m = model;
  m.alphabet_size = 1;
  m.validate();
  if (optimizer.batch_size < 1) throw Error("optimizer.batch_size must be at least 1");
  if (!(optimizer.learning_rate > 0)) throw Error("optimizer.learning_rate must be positive");
  if (!(gamma >= 0 && gamma <= 1)) throw Error("data.gamma must lie in [0, 1]");
  acquisition.validate();
  if (taus.empty() || !std::is_sorted(taus.begin(), taus.end()) || !(taus.front() > 0))
    throw Error("eval.taus must be a non-empty ascending list of positive temperatures");
  if (eval_n < 1) throw Error("eval.n must be at least 1");
  if (mode == "perturb" && corpus.empty()) throw Error("data.corpus is required in perturb mode");
}

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment line.
/// Keys not listed in ExperimentConfig::keys() are rejected.
inline ExperimentConfig read_config(std::istream& in) {
  ExperimentConfig c;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", lineno);
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    if (section.empty()) throw ParseError("key outside of any section", lineno);
    std::string key = section + "." + detail::trim(t.substr(0, eq));
    try {
      c.set(key, detail::trim(t.substr(eq + 1)));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  return read_config(in);
}

inline void write_config(std::ostream& out, const ExperimentConfig& c) { out << c.to_string(); }

}  // namespace seqval
