#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "seqval/pipeline.hpp"

using namespace seqval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(testing::TempDir()) / ("seqval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const std::string& stdin_text = "") {
  fs::path in = fs::path(testing::TempDir()) / "seqval_cli_stdin.txt";
  fs::path err = fs::path(testing::TempDir()) / "seqval_cli_stderr.txt";
  {
    std::ofstream f(in);
    f << stdin_text;
  }
  std::string cmd = std::string(SEQVAL_CLI) + " " + args + " < " + in.string() + " 2> " + err.string();
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), got);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (r.code != 0) r.out = slurp(err);
  return r;
}

ExperimentConfig tiny_experiment(const fs::path& out) {
  ExperimentConfig c;
  c.out = out.string();
  c.T = 6;
  c.model.hidden_dim = 8;
  c.model.embedding_dim = 4;
  c.rounds = 3;
  c.steps_per_round = 4;
  c.acquisition.L = 16;
  c.acquisition.K = 4;
  c.eval_n = 40;
  c.taus = {0.1, 1.0};
  return c;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  ExperimentConfig c;
  std::stringstream ss;
  write_config(ss, c);
  EXPECT_EQ(read_config(ss), c);
}

TEST(Config, EditedValuesRoundTrip) {
  ExperimentConfig c;
  c.set("experiment.oracle", "smiles");
  c.set("model.hidden_dropout", "0.35");
  c.set("eval.taus", "0.01, 0.5,2");
  c.set("data.exclude_original", "false");
  c.set("seeds.data", "18446744073709551615");
  std::stringstream ss(c.to_string());
  ExperimentConfig back = read_config(ss);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.model.hidden_dropout, 0.35);
  EXPECT_EQ(back.taus, (std::vector<double>{0.01, 0.5, 2.0}));
  EXPECT_FALSE(back.exclude_original);
  EXPECT_EQ(back.data_seed, 18446744073709551615ull);
  EXPECT_EQ(back.get("eval.taus"), "0.01,0.5,2");
}

TEST(Config, RejectsUnknownKeysWithLine) {
  std::stringstream ss("[model]\nhidden_dim = 4\n\n[model]\nwidth = 3\n");
  try {
    read_config(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 5u);
    EXPECT_NE(std::string(e.what()).find("model.width"), std::string::npos);
  }
  ExperimentConfig c;
  EXPECT_THROW(c.set("nope.key", "1"), Error);
}

TEST(Config, RejectsMalformedLines) {
  for (const char* text : {"key = 1\n", "[model\n", "[model]\nhidden_dim\n", "[model]\nhidden_dim = -3\n",
                           "[data]\ngamma = abc\n", "[data]\nexclude_original = maybe\n"}) {
    std::stringstream ss(text);
    EXPECT_THROW(read_config(ss), ParseError) << text;
  }
}

TEST(Config, Validation) {
  ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.mode = "perturb";
  EXPECT_THROW(c.validate(), Error);
  c.corpus = "x.smi";
  EXPECT_NO_THROW(c.validate());
  c.taus = {0.5, 0.1};
  EXPECT_THROW(c.validate(), Error);
  c = ExperimentConfig{};
  c.oracle = "regex";
  EXPECT_THROW(c.validate(), Error);
}

TEST(Pipeline, RerunIsByteIdentical) {
  auto d = scratch("rerun");
  ExperimentConfig c = tiny_experiment(d / "run");
  c.mode = "paired";
  const std::vector<std::string> files{"config.ini",         "manifest.json",     "passive/dataset.tsv",
                                       "active/dataset.tsv", "passive/model.svqm", "active/model.svqm",
                                       "passive/eval.csv",   "active/curve.csv"};
  run_experiment(c);
  std::map<std::string, std::string> first;
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(d / "run" / f)) << f;
    first[f] = slurp(d / "run" / f);
  }
  fs::remove_all(d / "run");
  run_experiment(c);
  for (const auto& f : files) EXPECT_EQ(slurp(d / "run" / f), first[f]) << f;
  EXPECT_EQ(nlohmann::json::parse(first["manifest.json"])["status"], "complete");
}

TEST(Pipeline, ManifestListsArtifactsWithDigests) {
  auto d = scratch("manifest");
  ExperimentConfig c = tiny_experiment(d / "run");
  auto m = run_experiment(c);
  EXPECT_EQ(m.doc["format"], "seqval-manifest");
  EXPECT_EQ(m.doc["seeds"]["model"], c.model_seed);
  EXPECT_EQ(m.doc["versions"]["checkpoint_format"], kCheckpointVersion);
  for (const auto& a : m.doc["artifacts"]) {
    std::string path = a["path"];
    ASSERT_TRUE(fs::exists(d / "run" / path)) << path;
    if (!a.contains("digest_scope")) {
      EXPECT_EQ(a["digest"], digest_file((d / "run" / path).string())) << path;
    }
  }
  auto ck = load_checkpoint((d / "run/model.svqm").string());
  EXPECT_EQ(ck.model.config().hidden_dim, 8u);
}

TEST(Pipeline, MissingCorpusIsAttributedToTheDataStage) {
  auto d = scratch("missing_corpus");
  ExperimentConfig c = tiny_experiment(d / "run");
  c.oracle = "smiles";
  c.mode = "perturb";
  c.corpus = (d / "absent.smi").string();
  try {
    run_experiment(c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "data");
  }
  auto m = nlohmann::json::parse(slurp(d / "run/manifest.json"));
  EXPECT_EQ(m["status"], "incomplete");
  EXPECT_EQ(m["failed_stage"], "data");
}

TEST(Pipeline, InvalidConfigIsAttributedToTheConfigStage) {
  auto d = scratch("bad_config");
  ExperimentConfig c = tiny_experiment(d / "run");
  c.eval_n = 0;
  try {
    run_experiment(c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "config");
  }
}

TEST(Datasets, BadLabelNamesTheLine) {
  Alphabet a = Alphabet::from_chars("1+");
  std::stringstream ss("1\t1+1\n0\t+++\n2\t111\n");
  try {
    read_dataset(ss, a);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
  }
}

TEST(Cli, OracleLabelsLines) {
  auto r = cli("oracle --oracle expr", "1+1\n1+\n(2*3)\n");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "1\t1+1\n0\t1+\n1\t(2*3)\n");
  auto p = cli("oracle --oracle smiles --remaining 2", "C(\nC)\n");
  ASSERT_EQ(p.code, 0) << p.out;
  EXPECT_EQ(p.out, "1\tC(\n0\tC)\n");
}

TEST(Cli, TrainSampleEvaluateRoundTrip) {
  auto d = scratch("cli");
  std::string data = (d / "data.tsv").string(), ck = (d / "m.svqm").string(), rep = (d / "eval.csv").string();
  auto g = cli("gen-data --oracle expr --n 300 --T 5 --seed 4 --out " + data);
  ASSERT_EQ(g.code, 0) << g.out;
  auto stats = nlohmann::json::parse(g.out);
  EXPECT_EQ(stats["n"], 300);
  auto t = cli("train --oracle expr --data " + data + " --steps 5 --hidden 8 --embedding 4 --out " + ck);
  ASSERT_EQ(t.code, 0) << t.out;
  auto s = cli("sample --ckpt " + ck + " --n 7 --tau 0.5");
  ASSERT_EQ(s.code, 0) << s.out;
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 7);
  auto e = cli("eval-curve --ckpt " + ck + " --oracle expr --taus 0.1,1 --n 20 --out " + rep);
  ASSERT_EQ(e.code, 0) << e.out;
  std::ifstream rf(rep);
  EXPECT_EQ(read_report_csv(rf).points.size(), 2u);
  auto a = cli("accuracy --ckpt " + ck + " --data " + data);
  ASSERT_EQ(a.code, 0) << a.out;
}

TEST(Cli, ErrorsAreJsonWithNonzeroExit) {
  auto d = scratch("cli_err");
  auto r = cli("gen-data --oracle smiles --mode perturb --corpus " + (d / "none.smi").string() + " --out " +
               (d / "x.tsv").string());
  EXPECT_EQ(r.code, 1);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["command"], "gen-data");
  EXPECT_TRUE(j.contains("error"));
  auto bad = cli("sample --ckpt " + (d / "none.svqm").string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(cli("no-such-command").code, 0);
}

TEST(Cli, TruncatedCheckpointIsReportedAsCorrupt) {
  auto d = scratch("cli_corrupt");
  LstmModel<float> m([] {
    ModelConfig c;
    c.hidden_dim = 4;
    c.embedding_dim = 2;
    c.alphabet_size = 2;
    c.seq_len = 3;
    return c;
  }());
  auto bytes = encode_checkpoint(m, Alphabet::from_chars("1+"));
  {
    std::ofstream f(d / "cut.svqm", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  auto r = cli("sample --ckpt " + (d / "cut.svqm").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.out)["type"], "CorruptFile");
}
