#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "rgfm/cli.hpp"

using namespace rgfm;
namespace fs = std::filesystem;

namespace {

const std::string kKarate = std::string(RGFM_DATA_DIR) + "/karate.edges";
const std::string kLabels = std::string(RGFM_DATA_DIR) + "/karate.labels";

fs::path workdir() {
  const fs::path dir = fs::temp_directory_path() / "rgfm_test_cli";
  fs::create_directories(dir);
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

int run(std::vector<std::string> args) {
  std::ostringstream log;
  return cli::run_cli(args, log);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> small(std::vector<std::string> args) {
  for (std::string s : {"--dim", "6", "--hidden", "8"}) args.push_back(s);
  return args;
}

}  // namespace

TEST_CASE("pretrain with zero epochs writes a checkpoint and an empty trace") {
  REQUIRE(run(small({"pretrain", "--graph", kKarate, "--out", at("zero.bin"), "--epochs", "0"})) == 0);
  const Checkpoint ck = load_checkpoint(at("zero.bin"));
  CHECK(ck.epochs_done == 0);
  CHECK(ck.model.tree_spec.dim() == 6);
  std::istringstream trace(slurp(at("zero.bin.trace")));
  for (std::string line; std::getline(trace, line);) CHECK(line.rfind("#", 0) == 0);
  CHECK(slurp(at("zero.bin.meta")).find("num_scalars") != std::string::npos);
}

TEST_CASE("pretrain, embed and evaluate on the karate club") {
  REQUIRE(run(small({"pretrain", "--graph", kKarate, "--out", at("k.bin"), "--epochs", "2"})) == 0);
  REQUIRE(run({"embed", "--graph", kKarate, "--checkpoint", at("k.bin"), "--out", at("k.emb")}) == 0);
  std::istringstream emb(slurp(at("k.emb")));
  std::string line;
  while (std::getline(emb, line) && line.rfind("#", 0) == 0) {
  }
  CHECK(line == "34 12");
  int rows = 0;
  while (std::getline(emb, line)) {
    std::istringstream fields(line);
    int id = -1;
    fields >> id;
    CHECK(id == rows);
    int cols = 0;
    for (double x; fields >> x; ++cols) CHECK(std::isfinite(x));
    CHECK(cols == 12);
    ++rows;
  }
  CHECK(rows == 34);

  REQUIRE(run({"eval-link", "--graph", kKarate, "--checkpoint", at("k.bin"), "--out", at("k.link"), "--seed", "7"}) == 0);
  const auto link = nlohmann::json::parse(slurp(at("k.link.json")));
  CHECK(std::isfinite(link["auc"].get<double>()));
  CHECK(link["acc"].is_null());
  CHECK(link["seed"] == 7);
  CHECK(link["config"]["scorer"] == "dot");

  REQUIRE(run({"eval-node", "--graph", kKarate, "--labels", kLabels, "--checkpoint", at("k.bin"), "--out",
               at("k.node"), "--k-shots", "3"}) == 0);
  const auto node = nlohmann::json::parse(slurp(at("k.node.json")));
  CHECK(node["acc"].get<double>() >= 0.0);
  CHECK(node["acc"].get<double>() <= 1.0);
  CHECK(node["k"] == 3);
  CHECK(slurp(at("k.node")).find("weighted_f1 = ") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run({"embed", "--graph", "/nonexistent.edges", "--checkpoint", at("k.bin"), "--out", at("x")}) ==
        cli::exit_code::missing_file);
  CHECK(run({"pretrain", "--graph", kKarate, "--out", at("x"), "--lr", "-1"}) == cli::exit_code::bad_config);
  CHECK(run({"pretrain", "--graph", kKarate, "--out", at("x"), "--bogus", "1"}) == cli::exit_code::bad_config);
  CHECK(run({"frobnicate"}) == cli::exit_code::bad_config);
  CHECK(run({"pretrain", "--out", at("x")}) == cli::exit_code::bad_config);
  REQUIRE(run(small({"pretrain", "--graph", kKarate, "--out", at("d.bin"), "--epochs", "0"})) == 0);
  CHECK(run({"embed", "--graph", kKarate, "--checkpoint", at("d.bin"), "--out", at("x"), "--dim", "7"}) ==
        cli::exit_code::dimension_mismatch);
  CHECK(run({"embed", "--graph", kKarate, "--checkpoint", at("d.bin"), "--out", at("x"), "--layers", "3"}) ==
        cli::exit_code::dimension_mismatch);
}

TEST_CASE("config files set defaults that flags override") {
  std::ofstream(at("run.toml")) << "epochs = 1\nbatch_size = 4\nseed = 3\ndim = 6\nhidden = 8\n";
  REQUIRE(run({"pretrain", "--config", at("run.toml"), "--graph", kKarate, "--out", at("c.bin"), "--seed", "5"}) == 0);
  const std::string meta = slurp(at("c.bin.meta"));
  CHECK(meta.find("# seed = 5\n") != std::string::npos);
  CHECK(meta.find("# batch_size = 4\n") != std::string::npos);
  CHECK(meta.find("# epochs = 1\n") != std::string::npos);
  CHECK(load_checkpoint(at("c.bin")).seed == 5);
  std::ofstream(at("bad.toml")) << "epochs = 1\nnot_a_key = 2\n";
  CHECK(run({"pretrain", "--config", at("bad.toml"), "--graph", kKarate, "--out", at("x")}) ==
        cli::exit_code::bad_config);
}

TEST_CASE("repeated runs produce byte-identical artifacts") {
  for (const char* tag : {"r1", "r2"}) {
    const std::string t = tag;
    REQUIRE(run(small({"pretrain", "--graph", kKarate, "--out", at(t + ".bin"), "--epochs", "2"})) == 0);
    REQUIRE(run({"eval-link", "--graph", kKarate, "--checkpoint", at(t + ".bin"), "--out", at(t + ".link")}) == 0);
  }
  CHECK(slurp(at("r1.bin")) == slurp(at("r2.bin")));
  CHECK(slurp(at("r1.bin.trace")).substr(slurp(at("r1.bin.trace")).find("# epoch")) ==
        slurp(at("r2.bin.trace")).substr(slurp(at("r2.bin.trace")).find("# epoch")));
  const auto a = nlohmann::json::parse(slurp(at("r1.link.json")));
  const auto b = nlohmann::json::parse(slurp(at("r2.link.json")));
  CHECK(a["auc"] == b["auc"]);
  CHECK(a["ap"] == b["ap"]);
}

TEST_CASE("the Euclidean ablation runs end to end") {
  REQUIRE(run(small({"pretrain", "--graph", kKarate, "--out", at("e.bin"), "--epochs", "1", "--kappa-tree", "0",
                     "--kappa-cycle", "0"})) == 0);
  REQUIRE(run({"eval-link", "--graph", kKarate, "--checkpoint", at("e.bin"), "--out", at("e.link")}) == 0);
  CHECK(std::isfinite(nlohmann::json::parse(slurp(at("e.link.json")))["auc"].get<double>()));
}

TEST_CASE("selfcheck at a reduced scale") {
  REQUIRE(run({"selfcheck", "--scale", "0.02", "--out", at("self.txt")}) == 0);
  const std::string report = slurp(at("self.txt"));
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(report.find("PASS") != std::string::npos);
}
