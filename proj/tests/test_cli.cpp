#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "golde/data.hpp"
#include "toy_kg.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "golde_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(GOLDE_CLI_BIN) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const fs::path& toy_dir() {
  // left behind under the build tree as a ready-made example dataset
  static const fs::path dir = [] {
    const fs::path d = fs::current_path() / "toy_kg_data";
    toy::write_dataset_dir(toy::make_toy_kg(2024).dataset, d.string());
    return d;
  }();
  return dir;
}

std::string train_args(const fs::path& out, int steps, int seed) {
  std::stringstream ss;
  ss << "train --data " << toy_dir().string() << " --out " << out.string()
     << " --dim 16 --kstar 12 --mp 2 --mq 2 --batch-size 64 --neg-size 16 --gamma 1.0"
     << " --lr 0.005 --steps " << steps << " --valid-every 50 --seed " << seed
     << " --filter-accidental --threads 2";
  return ss.str();
}

double parse_metric(const std::string& text, const std::string& key) {
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind(key, 0) == 0) {
      return std::stod(line.substr(key.size()));
    }
  }
  FAIL("metric '" << key << "' not found in output:\n" << text);
  return 0.0;
}

}  // namespace

TEST_CASE("cli usage errors") {
  CHECK(run_cli("").exit_code != 0);
  CHECK(run_cli("--no-such-flag").exit_code != 0);
  CHECK(run_cli("train").exit_code != 0);  // --data is required
  // kstar not divisible by mp fails before any training output appears
  const auto r = run_cli("train --data " + toy_dir().string() +
                         " --out /tmp/golde_cli_cfgerr --dim 16 --mp 3 --kstar 10 --steps 1");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("divisible") != std::string::npos);
}

TEST_CASE("cli train/eval/diagnose round trip") {
  const fs::path out1 = fs::temp_directory_path() / "golde_cli_run1";
  const fs::path out2 = fs::temp_directory_path() / "golde_cli_run2";
  fs::remove_all(out1);
  fs::remove_all(out2);

  const auto r1 = run_cli(train_args(out1, 150, 30));
  CHECK(r1.exit_code == 0);
  CHECK(fs::exists(out1 / "model.ckpt"));
  CHECK(fs::exists(out1 / "metrics.tsv"));
  CHECK(fs::exists(out1 / "run.cfg"));
  CHECK(r1.out.find("best validation MRR") != std::string::npos);

  SUBCASE("identical command, identical outputs") {
    const auto r2 = run_cli(train_args(out2, 150, 30));
    CHECK(r2.exit_code == 0);
    CHECK(slurp(out1 / "metrics.tsv") == slurp(out2 / "metrics.tsv"));
    CHECK(slurp(out1 / "model.ckpt") == slurp(out2 / "model.ckpt"));
  }

  SUBCASE("replay from the echoed config reproduces the run byte-for-byte") {
    const std::string metrics_before = slurp(out1 / "metrics.tsv");
    const std::string ckpt_before = slurp(out1 / "model.ckpt");
    const std::string cfg_before = slurp(out1 / "run.cfg");
    const auto r = run_cli("train --config " + (out1 / "run.cfg").string());
    CHECK(r.exit_code == 0);
    CHECK(slurp(out1 / "metrics.tsv") == metrics_before);
    CHECK(slurp(out1 / "model.ckpt") == ckpt_before);
    CHECK(slurp(out1 / "run.cfg") == cfg_before);
  }

  SUBCASE("explicit flags override config-file values") {
    const fs::path out3 = fs::temp_directory_path() / "golde_cli_run3";
    fs::remove_all(out3);
    const auto r = run_cli("train --config " + (out1 / "run.cfg").string() + " --out " +
                           out3.string() + " --seed 99 --steps 60");
    CHECK(r.exit_code == 0);
    const std::string cfg = slurp(out3 / "run.cfg");
    CHECK(cfg.find("seed=99") != std::string::npos);
    CHECK(cfg.find("steps=60") != std::string::npos);
    // run settings that were not overridden came from the file
    CHECK(cfg.find("gamma=1") != std::string::npos);
    CHECK(slurp(out3 / "model.ckpt") != slurp(out1 / "model.ckpt"));
  }

  SUBCASE("unknown config keys are rejected") {
    const fs::path bad_cfg = fs::temp_directory_path() / "golde_bad.cfg";
    std::ofstream(bad_cfg) << "data=" << toy_dir().string() << "\nnot-a-key=1\n";
    const auto r = run_cli("train --config " + bad_cfg.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("not-a-key") != std::string::npos);
  }

  SUBCASE("eval reproduces the validation MRR logged at the best step") {
    // find the best validation row in the metrics log
    std::stringstream log(slurp(out1 / "metrics.tsv"));
    std::string line;
    double best_mrr = -1.0;
    while (std::getline(log, line)) {
      if (line.find("\tvalid\t") == std::string::npos) continue;
      std::stringstream row(line);
      std::string step, loss, split, mr, mrr;
      std::getline(row, step, '\t');
      std::getline(row, loss, '\t');
      std::getline(row, split, '\t');
      std::getline(row, mr, '\t');
      std::getline(row, mrr, '\t');
      best_mrr = std::max(best_mrr, std::stod(mrr));
    }
    REQUIRE(best_mrr >= 0.0);
    const auto r = run_cli("eval --checkpoint " + (out1 / "model.ckpt").string() + " --data " +
                           toy_dir().string() + " --split valid --threads 2");
    CHECK(r.exit_code == 0);
    CHECK(parse_metric(r.out, "MRR") == doctest::Approx(best_mrr).epsilon(1e-9));
  }

  SUBCASE("per-relation rows sum to the split size") {
    const auto r = run_cli("eval --checkpoint " + (out1 / "model.ckpt").string() + " --data " +
                           toy_dir().string() + " --split test --per-relation --threads 2");
    CHECK(r.exit_code == 0);
    const golde::Dataset d = golde::Dataset::load_dir(toy_dir().string());
    std::stringstream ss(r.out);
    std::string line;
    std::int64_t sum = 0;
    bool in_table = false;
    while (std::getline(ss, line)) {
      if (line.rfind("relation\t", 0) == 0) {
        in_table = true;
        continue;
      }
      if (!in_table) continue;
      std::stringstream row(line);
      std::string name, count;
      std::getline(row, name, '\t');
      if (!std::getline(row, count, '\t')) continue;
      sum += std::stoll(count);
    }
    CHECK(sum == std::int64_t(d.test.size()));
  }

  SUBCASE("diagnose prints defects and validates names") {
    const auto all = run_cli("diagnose --checkpoint " + (out1 / "model.ckpt").string() +
                             " --data " + toy_dir().string());
    CHECK(all.exit_code == 0);
    CHECK(all.out.find("relation similar:") != std::string::npos);
    CHECK(all.out.find("orthogonality defect") != std::string::npos);

    const auto pair = run_cli("diagnose --checkpoint " + (out1 / "model.ckpt").string() +
                              " --data " + toy_dir().string() + " next prev");
    CHECK(pair.exit_code == 0);
    CHECK(pair.out.find("inversion defect (next, prev)") != std::string::npos);

    const auto bad = run_cli("diagnose --checkpoint " + (out1 / "model.ckpt").string() +
                             " --data " + toy_dir().string() + " no_such_rel");
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("similar") != std::string::npos);  // lists available names
  }

  SUBCASE("corrupt checkpoints fail cleanly with no partial report") {
    const fs::path bad = fs::temp_directory_path() / "golde_cli_bad.ckpt";
    std::ofstream(bad, std::ios::binary) << "garbage";
    const auto r = run_cli("eval --checkpoint " + bad.string() + " --data " +
                           toy_dir().string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("MRR") == std::string::npos);
  }
}

TEST_CASE("cli diagnose on a freshly initialized model") {
  const fs::path out = fs::temp_directory_path() / "golde_cli_init";
  fs::remove_all(out);
  // zero steps saves the untouched initialization
  const auto r1 = run_cli(train_args(out, 0, 5));
  REQUIRE(r1.exit_code == 0);
  const auto r2 = run_cli("diagnose --checkpoint " + (out / "model.ckpt").string() + " --data " +
                          toy_dir().string());
  CHECK(r2.exit_code == 0);
  std::stringstream ss(r2.out);
  std::string line;
  int rows = 0;
  while (std::getline(ss, line)) {
    const auto pos = line.find("orthogonality defect ");
    if (pos == std::string::npos) continue;
    ++rows;
    const double defect = std::stod(line.substr(pos + 21));
    CHECK(defect <= 1e-9);
  }
  CHECK(rows == 4);
}

TEST_CASE("cli manifold and precision variants") {
  const fs::path base = fs::temp_directory_path() / "golde_cli_variants";
  fs::remove_all(base);
  const std::string data = " --data " + toy_dir().string() + " --steps 20 --batch-size 16"
                           " --neg-size 4 --valid-every 20 --seed 3 --threads 2 --out ";

  SUBCASE("explicit component list") {
    const auto r = run_cli("train" + data + (base / "m").string() + " --manifold P4,Q3,Q3,P4");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("P4,Q3,Q3,P4") != std::string::npos);
  }
  SUBCASE("pure elliptic partition") {
    const auto r = run_cli("train" + data + (base / "e").string() + " --dim 8 --kstar 8 --mp 2 --mq 0");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("P4,P4") != std::string::npos);
  }
  SUBCASE("pure hyperbolic partition") {
    const auto r = run_cli("train" + data + (base / "q").string() + " --dim 8 --kstar 0 --mp 0 --mq 2");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("Q5,Q5") != std::string::npos);
  }
  SUBCASE("f32 storage mode round-trips through eval") {
    const auto r = run_cli("train" + data + (base / "f").string() + " --precision f32");
    CHECK(r.exit_code == 0);
    const auto e = run_cli("eval --checkpoint " + (base / "f" / "model.ckpt").string() +
                           " --data " + toy_dir().string() + " --split test --threads 2");
    CHECK(e.exit_code == 0);
    const double mrr = parse_metric(e.out, "MRR");
    CHECK(mrr >= 0.0);
    CHECK(mrr <= 1.0);
  }
}

TEST_CASE("cli selfcheck") {
  const auto ok = run_cli("selfcheck --trials 60 --seed 3");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("properties passed") != std::string::npos);

  const auto f32 = run_cli("selfcheck --precision f32");
  CHECK(f32.exit_code == 1);
  CHECK(f32.err.find("double precision") != std::string::npos);
}
