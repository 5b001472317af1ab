#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcran/binary_io.hpp"
#include "abcran/pde_data.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using namespace abcran;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "abcran");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Tiny network so a CLI training run takes milliseconds.
std::vector<std::string> tiny_train(const fs::path& data, const fs::path& out) {
  return {"train",     "--data",   data.string(), "--out",     out.string(), "--channels", "2,3", "--dense",
          "6",         "--hidden", "4",           "--kernel",  "3",          "--k-in",     "3",   "--k-out",
          "3",         "--n-val",  "1",           "--batch-size", "4",       "--max-epochs", "2"};
}

fs::path tiny_data(const std::string& name) {
  const auto dir = testing::scratch_dir(name);
  REQUIRE(run({"gen", "--nx", "16", "--nt", "12", "--n-train", "4", "--t-final", "0.5", "--x-center", "0.2",
               "--sigma-g", "0.01", "--out", dir.string()})
              .code == 0);
  return dir;
}

}  // namespace

TEST_CASE("gen with the reference settings") {
  const auto dir = testing::scratch_dir("cli_gen");
  auto r = run({"gen", "--nx", "256", "--nt", "200", "--mu-min", "0.775", "--mu-max", "1.25", "--n-train", "20",
                "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto train = data::read_dataset(dir / "train");
  CHECK(train.snapshots.shape() == Shape{20, 200, 256});
  const auto grid = io::read_json(dir / "mu_grid.json");
  const auto test_mu = grid["mu_test"].get<std::vector<double>>();
  CHECK(test_mu.size() == 19);
  CHECK(std::find(test_mu.begin(), test_mu.end(), 1.0125) != test_mu.end());
  CHECK(data::read_dataset(dir / "test").mu_values == test_mu);
  const auto manifest = io::read_json(dir / "manifest.json");
  CHECK(manifest["command"] == "gen");
  CHECK(manifest["config"]["nx"] == 256);
  CHECK(manifest.contains("duration_s"));
}

TEST_CASE("decompose of identical files is all zeros") {
  const auto dir = testing::scratch_dir("cli_decompose");
  io::write_f64le(dir / "a.bin", std::vector<double>{0.1, -2.0, 3.5, 7.25, 0.0, 1.0});
  io::write_f64le(dir / "b.bin", std::vector<double>{0.1, -2.0, 3.5, 7.25, 0.0, 1.0});
  for (std::vector<std::string> extra : {std::vector<std::string>{}, std::vector<std::string>{"--nx", "3"}}) {
    std::vector<std::string> args{"decompose", "--truth", (dir / "a.bin").string(), "--pred", (dir / "b.bin").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = run(args);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["tau"] == 0.0);
    CHECK(j["tau_diss"] == 0.0);
    CHECK(j["tau_disp"] == 0.0);
    CHECK(j["rho"] == 1.0);
  }
  auto bad = run({"decompose", "--truth", (dir / "a.bin").string(), "--pred", (dir / "b.bin").string(), "--nx", "4"});
  CHECK(bad.code == 2);
  auto out = testing::scratch_dir("cli_decompose_out");
  CHECK(run({"decompose", "--truth", (dir / "a.bin").string(), "--pred", (dir / "b.bin").string(), "--out",
             out.string()})
            .code == 0);
  CHECK(fs::exists(out / "decomposition.json"));
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("train twice with the same flags gives byte-identical artifacts") {
  const auto data = tiny_data("cli_train_data");
  const auto root = testing::scratch_dir("cli_train_runs");
  for (const char* name : {"run1", "run2"}) {
    auto args = tiny_train(data, root / name);
    for (const char* extra : {"--loss", "decomposed", "--alpha", "0.7", "--beta", "0.7", "--seed", "1"}) {
      args.push_back(extra);
    }
    auto r = run(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  for (const char* f : {"weights.bin", "arch.json", "report.csv", "summary.json"}) {
    CHECK_MESSAGE(testing::slurp(root / "run1" / f) == testing::slurp(root / "run2" / f), f);
  }
  CHECK(testing::slurp(root / "run1" / "report.csv").rfind("epoch,lr,train_loss,val_loss,tau_diss,tau_disp\n", 0) ==
        0);
  const auto manifest = io::read_json(root / "run1" / "manifest.json");
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["config"]["alpha"] == 0.7);
  CHECK(manifest["config"]["noise-std"].is_null());

  // A different seed changes the weights.
  auto args = tiny_train(data, root / "run3");
  args.insert(args.end(), {"--seed", "2"});
  REQUIRE(run(args).code == 0);
  CHECK(testing::slurp(root / "run1" / "weights.bin") != testing::slurp(root / "run3" / "weights.bin"));
}

TEST_CASE("config precedence: flags over config file over defaults, and manifest replay") {
  const auto data = tiny_data("cli_cfg_data");
  const auto root = testing::scratch_dir("cli_cfg_runs");
  io::write_json(root / "cfg.json", {{"max-epochs", 3}, {"alpha", 0.4}, {"beta", 0.2}});
  auto args = tiny_train(data, root / "a");
  args.erase(args.end() - 2, args.end());  // drop --max-epochs
  args.insert(args.end(), {"--config", (root / "cfg.json").string(), "--alpha", "0.9"});
  auto r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto m = io::read_json(root / "a" / "manifest.json");
  CHECK(m["config"]["alpha"] == 0.9);
  CHECK(m["config"]["beta"] == 0.2);
  CHECK(m["config"]["max-epochs"] == 3);
  CHECK(m["config"]["lr"] == 1e-3);
  const std::string csv = testing::slurp(root / "a" / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  r = run({"train", "--config", (root / "a" / "manifest.json").string(), "--out", (root / "b").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(testing::slurp(root / "a" / "weights.bin") == testing::slurp(root / "b" / "weights.bin"));
  CHECK(testing::slurp(root / "a" / "report.csv") == testing::slurp(root / "b" / "report.csv"));

  io::write_text(root / "broken.json", "{not json");
  CHECK(run({"train", "--config", (root / "broken.json").string()}).code == 1);
}

TEST_CASE("eval, compare, sweep and info end to end") {
  const auto data = tiny_data("cli_e2e_data");
  const auto root = testing::scratch_dir("cli_e2e");
  REQUIRE(run(tiny_train(data, root / "m1")).code == 0);
  auto args = tiny_train(data, root / "m2");
  args.insert(args.end(), {"--loss", "mse"});
  REQUIRE(run(args).code == 0);

  auto r = run({"eval", "--model", (root / "m1").string(), "--data", data.string(), "--out", (root / "ev").string(),
                "--horizon", "5", "--mu-index", "0,2"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string csv = testing::slurp(root / "ev" / "rollout.csv");
  CHECK(csv.rfind("mu,step,t,mse,tau_diss,tau_disp,rho,phase_lag\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  CHECK(io::read_json(root / "ev" / "error_fields" / "meta.json")["shape"] == std::vector<std::size_t>{2, 5, 16});

  const auto test_mu = data::read_dataset(data / "test").mu_values;
  std::ostringstream mu;
  mu.precision(17);
  mu << test_mu[1];
  r = run({"compare", "--model-a", (root / "m1").string(), "--model-b", (root / "m2").string(), "--data",
           data.string(), "--out", (root / "cmp").string(), "--mu", mu.str(), "--horizon", "4"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(root / "cmp" / "comparison.csv"));
  CHECK(io::read_json(root / "cmp" / "summary.json").contains("delta"));
  CHECK(run({"eval", "--model", (root / "m1").string(), "--data", data.string(), "--out", (root / "x").string(),
             "--mu", "3.5"})
            .code == 2);
  CHECK(run({"eval", "--model", (root / "m1").string(), "--data", data.string(), "--out", (root / "x").string(),
             "--horizon", "50"})
            .code == 2);

  args = tiny_train(data, root / "sw");
  args[0] = "sweep";
  args.erase(args.end() - 2, args.end());
  args.insert(args.end(), {"--alphas", "0.3,0.7", "--betas", "0.7", "--initial-epochs", "1"});
  r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string sw = testing::slurp(root / "sw" / "sweep.csv");
  CHECK(std::count(sw.begin(), sw.end(), '\n') == 4);
  CHECK(io::read_json(root / "sw" / "best.json")["runs"] == 3);

  r = run({"info", "--data", data.string(), "--model", (root / "m1").string()});
  REQUIRE(r.code == 0);
  const auto info = nlohmann::json::parse(r.out);
  CHECK(info["train"]["shape"] == std::vector<std::size_t>{4, 12, 16});
  CHECK(info["model"]["layers"].size() == 15);
}

TEST_CASE("exit codes") {
  auto r = run({"bogus"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"train", "--out", "x"}).code == 1);
  CHECK(run({"train", "--data", "d", "--out", "x", "--loss", "l1"}).code == 1);

  const auto root = testing::scratch_dir("cli_codes");
  CHECK(run({"train", "--data", (root / "missing").string(), "--out", (root / "o").string()}).code == 2);
  const auto data = tiny_data("cli_codes_data");
  io::write_text(data / "train" / "meta.json", "{\"version\": 99}");
  CHECK(run(tiny_train(data, root / "o")).code == 2);

  const auto good = tiny_data("cli_codes_good");
  auto args = tiny_train(good, root / "blowup");
  args.insert(args.end(), {"--lr", "1e200", "--lr-min", "0"});
  r = run(args);
  CHECK(r.code == 3);
  CHECK(r.err.find("numerical") != std::string::npos);
}

TEST_CASE("every subcommand documents its flags and defaults") {
  auto r = run({"train", "--help"});
  REQUIRE(r.code == 0);
  for (const char* s : {"--alpha FLOAT [0.7]", "--beta FLOAT [0.7]", "--lr FLOAT [0.001]", "--lr-min FLOAT [1e-05]",
                        "--weight-decay FLOAT [0.0001]", "--t0 UINT [25]", "--t-mult UINT [2]",
                        "--batch-size UINT [16]", "--max-epochs UINT [500]", "--noise-rel FLOAT [0.01]", "--config"}) {
    CHECK_MESSAGE(r.out.find(s) != std::string::npos, s);
  }
  r = run({"gen", "--help"});
  for (const char* s : {"--nx UINT [256]", "--nt UINT [200]", "--mu-min FLOAT [0.775]", "--mu-max FLOAT [1.25]",
                        "--n-train UINT [20]", "--sigma-g FLOAT [0.005]"}) {
    CHECK_MESSAGE(r.out.find(s) != std::string::npos, s);
  }
  for (const char* sub : {"sweep", "eval", "compare", "decompose", "info"}) {
    r = run({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--seed") != std::string::npos);
  }
}
