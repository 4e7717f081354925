// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "gfolds/jsonl.hpp"
#include "manifest.hpp"
#include "support/graph_fixtures.hpp"

using namespace gfolds;
using namespace gfolds::cli;
using gfolds::testing::temp_dir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
  nlohmann::json json() const { return nlohmann::json::parse(out); }
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kSmallModel =
    "model.d_model = 16\n"
    "model.d_swa = 8\n"
    "model.n_heads = 2\n"
    "model.n_swa_layers = 1\n"
    "model.n_encoder_layers = 1\n"
    "train.batch_size = 8\n"
    "train.epochs = 2\n";

// synth -> preprocess into `dir`; returns {docs, vocab}.
std::pair<fs::path, fs::path> small_corpus(const fs::path& dir) {
  const auto raw = dir / "raw.jsonl";
  REQUIRE(run({"synth", "--out", raw.string(), "--num-graphs", "30", "--seed", "4"}).code == 0);
  const auto docs = dir / "docs.jsonl";
  const auto vocab = dir / "vocab.txt";
  REQUIRE(run({"preprocess", "--in", raw.string(), "--out", docs.string(), "--vocab-out",
               vocab.string()})
              .code == 0);
  return {docs, vocab};
}

}  // namespace

TEST_CASE("help documents every flag") {
  const auto inventory = option_inventory();
  std::set<std::string> commands;
  for (const auto& item : inventory) {
    CHECK_MESSAGE(!item.description.empty(), item.command << " " << item.name);
    commands.insert(item.command);
  }
  for (const char* c : {"synth", "preprocess", "pretrain", "eval", "eval map", "eval precision",
                        "eval veridicality", "finetune", "count-params", "scaling"}) {
    CHECK(commands.contains(c));
  }
  for (const auto& command : commands) {
    std::vector<std::string> args;
    std::istringstream words(command);
    for (std::string w; words >> w;) {
      args.push_back(w);
    }
    args.push_back("--help");
    const auto r = run(args);
    CHECK(r.code == kExitOk);
    for (const auto& item : inventory) {
      if (item.command == command && !item.name.empty()) {
        CHECK_MESSAGE(r.out.find(item.name) != std::string::npos, command << " " << item.name);
      }
    }
  }
}

TEST_CASE("usage errors exit with the config code") {
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"synth"}).code == kExitConfig);
  CHECK(run({"synth", "--out", "x", "--bogus"}).code == kExitConfig);
  CHECK(run({"eval"}).code == kExitConfig);
  CHECK(run({"scaling"}).code == kExitConfig);
  const auto dir = temp_dir("cli-badkey");
  write_text(dir / "bad.cfg", "model.d_modle = 3\n");
  CHECK(run({"count-params", "--config", (dir / "bad.cfg").string()}).code == kExitConfig);
}

TEST_CASE("git blob hash") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(git_blob_sha1_of("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1_of("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("synth is deterministic and leaves a manifest") {
  const auto dir = temp_dir("cli-synth");
  const auto a = dir / "a.jsonl";
  const auto b = dir / "b.jsonl";
  const auto ra = run({"synth", "--out", a.string(), "--num-graphs", "25", "--seed", "11"});
  const auto rb = run({"synth", "--out", b.string(), "--num-graphs", "25", "--seed", "11"});
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(ra.json()["graphs"] == 25);
  CHECK(ra.json()["sha1"] == git_blob_sha1(a));

  const auto manifest = nlohmann::json::parse(slurp(fs::path(a.string() + ".manifest.json")));
  CHECK(manifest["command"] == "synth");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["config"]["num_graphs"] == "25");
  CHECK(manifest["outputs"][0]["sha1"] == git_blob_sha1(a));
  CHECK(manifest.contains("started"));

  const auto c = dir / "c.jsonl";
  REQUIRE(run({"synth", "--out", c.string(), "--num-graphs", "25", "--seed", "12"}).code == 0);
  CHECK(slurp(a) != slurp(c));
}

TEST_CASE("seed falls back to the environment") {
  const auto dir = temp_dir("cli-env");
  ::setenv("GFOLDS_SEED", "11", 1);
  const auto r = run({"synth", "--out", (dir / "e.jsonl").string(), "--num-graphs", "25"});
  ::unsetenv("GFOLDS_SEED");
  REQUIRE(r.code == 0);
  CHECK(r.json()["seed"] == 11);
  REQUIRE(run({"synth", "--out", (dir / "f.jsonl").string(), "--num-graphs", "25", "--seed",
               "11"})
              .code == 0);
  CHECK(slurp(dir / "e.jsonl") == slurp(dir / "f.jsonl"));

  ::setenv("GFOLDS_SEED", "eleven", 1);
  const auto bad = run({"synth", "--out", (dir / "g.jsonl").string()});
  ::unsetenv("GFOLDS_SEED");
  CHECK(bad.code == kExitConfig);
}

TEST_CASE("malformed data exits with the data code") {
  const auto dir = temp_dir("cli-data");
  write_text(dir / "bad.jsonl", "{\"id\": 1,\n");
  const auto r = run({"preprocess", "--in", (dir / "bad.jsonl").string(), "--out",
                      (dir / "out.jsonl").string(), "--vocab-out", (dir / "v.txt").string()});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("line 1") != std::string::npos);
}

TEST_CASE("count-params") {
  const auto r = run({"count-params", "--paper"});
  REQUIRE(r.code == 0);
  const auto j = r.json();
  CHECK(j["per_edge_label"] == 4194304);
  std::size_t sum = 0;
  for (const auto& g : j["groups"]) {
    sum += g["count"].get<std::size_t>();
  }
  CHECK(sum == j["total"].get<std::size_t>());

  const auto dir = temp_dir("cli-count");
  write_text(dir / "m.cfg",
             "model.edge_labels = ARG1,ARG2,ARG3,ARG4,MOD,RSTR,INDEX,HNDL,EXTRA\n");
  const auto more = run({"count-params", "--paper", "--config", (dir / "m.cfg").string()});
  REQUIRE(more.code == 0);
  CHECK(more.json()["total"].get<std::size_t>() - j["total"].get<std::size_t>() == 4194304);
}

TEST_CASE("scaling") {
  const auto r = run({"scaling", "--d-opt-for-params", "1.74e8"});
  REQUIRE(r.code == 0);
  const double d = r.json()["d_opt_for_params"]["D_opt"];
  CHECK(d > 2.5e9);
  CHECK(d < 1e10);

  const auto q = run({"scaling", "--params", "1e8", "--unique-data", "1e10", "--epochs", "4",
                      "--audit"});
  REQUIRE(q.code == 0);
  const auto j = q.json();
  for (const char* key : {"N", "D", "C", "loss_unique", "loss_repeated", "branch", "d_hat",
                          "n_hat"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["branch"] == "under");
  CHECK(j["audit"]["verdict"] == "underparameterized at both runs");

  CHECK(run({"scaling", "--audit", "--params", "1e8"}).code == kExitConfig);
  CHECK(run({"scaling", "--compute", "-1"}).code == kExitConfig);
}

TEST_CASE("pretrain, resume, finetune and eval") {
  const auto dir = temp_dir("cli-run");
  const auto [docs, vocab] = small_corpus(dir);
  write_text(dir / "t.cfg", std::string(kSmallModel) + "train.lr_knots = 0:1e-3,2:1e-4\n");

  const auto full = dir / "full";
  const auto r = run({"pretrain", "--corpus", docs.string(), "--vocab", vocab.string(),
                      "--config", (dir / "t.cfg").string(), "--out-dir", full.string(),
                      "--seed", "5", "--checkpoint-every", "3"});
  REQUIRE(r.code == 0);
  const auto j = r.json();
  CHECK(j["steps"] == 8);
  CHECK(j["checkpoints"].size() == 2);
  CHECK(fs::exists(full / "final.gfld"));
  CHECK(fs::exists(full / "manifest.json"));

  SUBCASE("resume replays the trace") {
    const auto resumed = dir / "resumed";
    REQUIRE(run({"pretrain", "--corpus", docs.string(), "--vocab", vocab.string(),
                 "--out-dir", resumed.string(), "--resume", (full / "ckpt-3.gfld").string()})
                .code == 0);
    CHECK(slurp(resumed / "final.gfld") == slurp(full / "final.gfld"));
    const auto a = slurp(full / "trace.csv");
    const auto b = slurp(resumed / "trace.csv");
    CHECK(a.substr(a.size() - 80) == b.substr(b.size() - 80));
  }

  SUBCASE("finetune then veridicality") {
    const auto raw = read_raw_jsonl(dir / "raw.jsonl");
    {
      std::ofstream lab(dir / "lab.jsonl");
      std::ofstream ver(dir / "ver.jsonl");
      for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto g = nlohmann::json::parse(raw_graph_to_json(raw[i]));
        lab << nlohmann::json{{"graph", g}, {"label", static_cast<int>(i % 2)}}.dump() << '\n';
        const auto h = nlohmann::json::parse(raw_graph_to_json(raw[(i + 1) % raw.size()]));
        ver << nlohmann::json{{"premise", g}, {"hypothesis", h}, {"labels", {"yes", "no", "yes"}}}
                   .dump()
            << '\n';
      }
    }
    const auto ft = dir / "ft.gfld";
    const auto f = run({"finetune", "--model", (full / "final.gfld").string(), "--vocab",
                        vocab.string(), "--train", (dir / "lab.jsonl").string(), "--test",
                        (dir / "lab.jsonl").string(), "--out", ft.string(), "--epochs", "1"});
    REQUIRE(f.code == 0);
    CHECK(f.json()["epoch_loss"].size() == 1);
    CHECK(fs::exists(ft.string() + ".manifest.json"));

    const auto e = run({"eval", "veridicality", "--model", ft.string(), "--vocab",
                        vocab.string(), "--data", (dir / "ver.jsonl").string(), "--manifest",
                        (dir / "ver.manifest.json").string()});
    REQUIRE(e.code == 0);
    const auto m = e.json();
    CHECK(m["metric"] == "accuracy");
    CHECK(m["n"] == raw.size());
    CHECK(m["per_item"].size() == raw.size());
    CHECK(fs::exists(dir / "ver.manifest.json"));

    // the pretrained checkpoint has no classifier
    CHECK(run({"eval", "veridicality", "--model", (full / "final.gfld").string(), "--vocab",
               vocab.string(), "--data", (dir / "ver.jsonl").string()})
              .code == kExitConfig);
  }

  SUBCASE("map and precision") {
    const auto raw = read_raw_jsonl(dir / "raw.jsonl");
    {
      std::ofstream ret(dir / "ret.jsonl");
      std::ofstream cls(dir / "cls.jsonl");
      const std::string terms[2] = {raw[0].nodes[0].label, raw[1].nodes[0].label};
      REQUIRE(terms[0] != terms[1]);
      for (std::size_t i = 0; i < 4; ++i) {
        auto g = nlohmann::json::parse(raw_graph_to_json(raw[i]));
        g["nodes"][0]["label"] = "[MASK]";
        ret << nlohmann::json{{"term", terms[i % 2]},
                              {"hypernym", "thing"},
                              {"property_graph", g},
                              {"query_node", 0}}
                   .dump()
            << '\n';
        cls << nlohmann::json{{"graph", g}, {"query_node", 0}, {"class", "verb"}}.dump() << '\n';
      }
    }
    const auto m = run({"eval", "map", "--model", (full / "final.gfld").string(), "--vocab",
                        vocab.string(), "--data", (dir / "ret.jsonl").string()});
    REQUIRE_MESSAGE(m.code == 0, m.err);
    CHECK(m.json()["metric"] == "map");
    const double v = m.json()["value"];
    CHECK(v > 0);
    CHECK(v <= 1);

    const auto p = run({"eval", "precision", "--model", (full / "final.gfld").string(),
                        "--vocab", vocab.string(), "--data", (dir / "cls.jsonl").string(),
                        "--k", "5"});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    CHECK(p.json()["metric"] == "precision_at_k");
    CHECK(p.json()["n"] == 4);
  }

  SUBCASE("vocabulary mismatch is a config error") {
    const auto other = dir / "other";
    fs::create_directories(other);
    REQUIRE(run({"synth", "--out", (other / "raw.jsonl").string(), "--num-graphs", "3",
                 "--seed", "9"})
                .code == 0);
    REQUIRE(run({"preprocess", "--in", (other / "raw.jsonl").string(), "--out",
                 (other / "d.jsonl").string(), "--vocab-out", (other / "v.txt").string()})
                .code == 0);
    CHECK(run({"eval", "map", "--model", (full / "final.gfld").string(), "--vocab",
               (other / "v.txt").string(), "--data", (other / "d.jsonl").string()})
              .code == kExitConfig);
  }
}

TEST_CASE("non-finite training exits with the numerical code") {
  const auto dir = temp_dir("cli-nan");
  const auto [docs, vocab] = small_corpus(dir);
  write_text(dir / "nan.cfg", std::string(kSmallModel) + "train.lr_knots = 0:1e30,2:1e30\n");
  const auto r = run({"pretrain", "--corpus", docs.string(), "--vocab", vocab.string(),
                      "--config", (dir / "nan.cfg").string(), "--out-dir",
                      (dir / "out").string()});
  CHECK(r.code == kExitNumerical);
  CHECK(r.err.find("non-finite") != std::string::npos);
}
