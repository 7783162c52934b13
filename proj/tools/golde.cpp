#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "golde/data.hpp"
#include "golde/evaluation.hpp"
#include "golde/model.hpp"
#include "golde/selfcheck.hpp"
#include "golde/training.hpp"

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure, 4 selfcheck failure.
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitSelfcheck = 4;

struct TrainArgs {
  std::string data_dir;
  std::string out_dir = "golde_out";
  std::int64_t dim = 32;
  std::int64_t kstar = -1;  // -1: dim/2 when both partitions present
  std::int64_t mp = 2;
  std::int64_t mq = 2;
  std::string manifold;  // explicit component list overrides the partition
  std::string precision = "f64";
  std::string config_file;
  golde::TrainConfig cfg;
  bool filter_accidental = false;
  bool freeze_elliptic_weights = false;
};

/// key=value run configuration; values only apply where the command line did
/// not already set the flag.
void apply_config_file(const CLI::App& cmd, TrainArgs& a) {
  std::ifstream in(a.config_file);
  if (!in) throw golde::ConfigError("cannot open config file: " + a.config_file);
  auto parse_i64 = [](const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const std::int64_t x = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw golde::ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
  };
  auto parse_f64 = [](const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw golde::ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
  };
  auto parse_bool = [](const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw golde::ConfigError("config key '" + key + "': bad boolean '" + v + "'");
  };

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw golde::ConfigError(a.config_file + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (cmd.count("--" + key) > 0) continue;  // command line wins
    if (key == "data") a.data_dir = value;
    else if (key == "out") a.out_dir = value;
    else if (key == "dim") a.dim = parse_i64(key, value);
    else if (key == "kstar") a.kstar = parse_i64(key, value);
    else if (key == "mp") a.mp = parse_i64(key, value);
    else if (key == "mq") a.mq = parse_i64(key, value);
    else if (key == "manifold") a.manifold = value;
    else if (key == "batch-size") a.cfg.batch_size = parse_i64(key, value);
    else if (key == "alpha") a.cfg.alpha = parse_f64(key, value);
    else if (key == "gamma") a.cfg.margin = parse_f64(key, value);
    else if (key == "lr") a.cfg.lr = parse_f64(key, value);
    else if (key == "neg-size") a.cfg.neg_size = parse_i64(key, value);
    else if (key == "steps") a.cfg.steps = parse_i64(key, value);
    else if (key == "valid-every") a.cfg.valid_every = parse_i64(key, value);
    else if (key == "norm") a.cfg.norm = int(parse_i64(key, value));
    else if (key == "seed") a.cfg.seed = std::uint64_t(parse_i64(key, value));
    else if (key == "precision") a.precision = value;
    else if (key == "threads") a.cfg.threads = int(parse_i64(key, value));
    else if (key == "valid-candidates") a.cfg.valid_candidates = parse_i64(key, value);
    else if (key == "filter-accidental") a.filter_accidental = parse_bool(key, value);
    else if (key == "freeze-elliptic-weights") a.freeze_elliptic_weights = parse_bool(key, value);
    else throw golde::ConfigError("unknown config key '" + key + "'");
  }
}

golde::ProductManifoldConfig resolve_manifold(const TrainArgs& a) {
  if (!a.manifold.empty()) {
    return golde::ProductManifoldConfig::parse_compact(a.manifold, a.cfg.norm);
  }
  std::int64_t kstar = a.kstar;
  if (kstar < 0) {
    if (a.mp == 0) {
      kstar = 0;
    } else if (a.mq == 0) {
      kstar = a.dim;
    } else {
      kstar = a.dim / 2;
    }
  }
  return golde::ProductManifoldConfig::from_partition(a.dim, kstar, a.mp, a.mq, a.cfg.norm);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string metrics_cells(const golde::MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%.6f\t%.6f\t%.6f", r.mr, r.mrr, r.h1, r.h3,
                r.h10);
  return buf;
}

void print_report(const std::string& split, std::size_t triples,
                  const golde::MetricsReport& rep) {
  std::printf("split %s: %zu triples, %lld rank samples\n", split.c_str(), triples,
              (long long)rep.samples);
  std::printf("MR    %.6f\n", rep.mr);
  std::printf("MRR   %.6f\n", rep.mrr);
  std::printf("H@1   %.6f\n", rep.h1);
  std::printf("H@3   %.6f\n", rep.h3);
  std::printf("H@10  %.6f\n", rep.h10);
  std::printf("tsv\t%s\t%s\n", split.c_str(), metrics_cells(rep).c_str());
}

void echo_run_config(const TrainArgs& a, const golde::ProductManifoldConfig& mf,
                     const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw golde::Error("cannot write " + path);
  out << "data=" << a.data_dir << "\n";
  out << "out=" << a.out_dir << "\n";
  out << "manifold=" << mf.compact() << "\n";
  out << "batch-size=" << a.cfg.batch_size << "\n";
  out << "alpha=" << format_double(a.cfg.alpha) << "\n";
  out << "gamma=" << format_double(a.cfg.margin) << "\n";
  out << "lr=" << format_double(a.cfg.lr) << "\n";
  out << "neg-size=" << a.cfg.neg_size << "\n";
  out << "steps=" << a.cfg.steps << "\n";
  out << "valid-every=" << a.cfg.valid_every << "\n";
  out << "norm=" << a.cfg.norm << "\n";
  out << "seed=" << a.cfg.seed << "\n";
  out << "precision=" << a.precision << "\n";
  out << "threads=" << a.cfg.threads << "\n";
  out << "valid-candidates=" << a.cfg.valid_candidates << "\n";
  out << "filter-accidental=" << (a.filter_accidental ? "true" : "false") << "\n";
  out << "freeze-elliptic-weights=" << (a.freeze_elliptic_weights ? "true" : "false") << "\n";
}

int cmd_train(const CLI::App& cmd, TrainArgs& a) {
  if (!a.config_file.empty()) apply_config_file(cmd, a);
  if (a.data_dir.empty()) throw golde::ConfigError("--data is required");
  a.cfg.precision = golde::parse_precision(a.precision);
  a.cfg.filter_accidental = a.filter_accidental;
  a.cfg.train_elliptic_weights = !a.freeze_elliptic_weights;
  a.cfg.validate();
  const golde::ProductManifoldConfig mf = resolve_manifold(a);

  const golde::Dataset data = golde::Dataset::load_dir(a.data_dir);
  const auto stats = golde::dataset_stats(data);
  std::printf("dataset: %lld entities, %lld relations, train/valid/test = %lld/%lld/%lld\n",
              (long long)stats.num_entities, (long long)stats.num_relations,
              (long long)stats.train, (long long)stats.valid, (long long)stats.test);
  std::printf("manifold: %s\n", mf.describe().c_str());
  if (mf.stored_dim() != std::int64_t(golde::ModelLayout::build(mf).entity_dim)) {
    throw golde::ConfigError("internal: stored dimension accounting mismatch");
  }

  fs::create_directories(a.out_dir);
  echo_run_config(a, mf, (fs::path(a.out_dir) / "run.cfg").string());

  std::ofstream log((fs::path(a.out_dir) / "metrics.tsv").string(), std::ios::trunc);
  if (!log) throw golde::Error("cannot write metrics.tsv under " + a.out_dir);
  log << "step\tloss\tsplit\tMR\tMRR\tH@1\tH@3\tH@10\n";
  auto sink = [&](const golde::MetricsRow& row) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", row.loss);
    if (row.has_metrics) {
      log << row.step << '\t' << buf << '\t' << row.split << '\t'
          << metrics_cells(row.metrics) << '\n';
      std::printf("step %lld loss %s valid MRR %.6f MR %.1f H@10 %.6f\n", (long long)row.step,
                  buf, row.metrics.mrr, row.metrics.mr, row.metrics.h10);
    } else {
      log << row.step << '\t' << buf << "\ttrain\t-\t-\t-\t-\t-\n";
    }
  };

  const golde::TrainResult result = golde::train(data, mf, a.cfg, sink);
  log.flush();

  const std::string ckpt = (fs::path(a.out_dir) / "model.ckpt").string();
  golde::save_checkpoint(result.model, ckpt,
                         {a.cfg.seed, result.best_step, a.cfg.precision});
  if (result.best_valid_mrr >= 0.0) {
    std::printf("best validation MRR %.6f at step %lld\n", result.best_valid_mrr,
                (long long)result.best_step);
  } else {
    std::printf("no validation split; saved final model at step %lld\n",
                (long long)result.best_step);
  }
  std::printf("checkpoint: %s\n", ckpt.c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  bool per_relation = false;
  int threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  const golde::LoadedModel lm = golde::load_checkpoint(a.checkpoint);
  const golde::Dataset data = golde::Dataset::load_dir(a.data_dir);
  if (lm.model.num_entities != data.vocab.num_entities() ||
      lm.model.num_relations != data.vocab.num_relations()) {
    throw golde::ContractError(
        "checkpoint is incompatible with this dataset: vocabulary sizes differ");
  }
  const std::vector<golde::Triple>* split = nullptr;
  if (a.split == "train") split = &data.train;
  else if (a.split == "valid") split = &data.valid;
  else if (a.split == "test") split = &data.test;
  else throw golde::ConfigError("unknown split '" + a.split + "'");
  if (split->empty()) throw golde::ConfigError("split '" + a.split + "' is empty");

  const golde::FilterIndex filter = golde::FilterIndex::build(data.train, data.valid, data.test);
  const int threads = a.threads > 0 ? a.threads : golde::default_threads();
  const auto ranks = golde::rank_split(lm.model, *split, filter, threads);
  print_report(a.split, split->size(), golde::aggregate_ranks(ranks));
  if (a.per_relation) {
    std::printf("relation\t#triple\tMR\tMRR\tH@1\tH@3\tH@10\n");
    for (const auto& rr : golde::per_relation_report(ranks)) {
      std::printf("%s\t%lld\t%s\n", data.vocab.relation_names[std::size_t(rr.relation)].c_str(),
                  (long long)rr.triple_count, metrics_cells(rr.metrics).c_str());
    }
  }
  return 0;
}

struct DiagnoseArgs {
  std::string checkpoint;
  std::string data_dir;
  std::vector<std::string> relations;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const golde::LoadedModel lm = golde::load_checkpoint(a.checkpoint);
  const golde::Dataset data = golde::Dataset::load_dir(a.data_dir);
  if (lm.model.num_relations != data.vocab.num_relations()) {
    throw golde::ContractError("checkpoint is incompatible with this dataset");
  }
  auto id_of = [&](const std::string& name) {
    const auto it = data.vocab.relation_ids.find(name);
    if (it == data.vocab.relation_ids.end()) {
      std::string available;
      for (const auto& n : data.vocab.relation_names) {
        if (!available.empty()) available += ", ";
        available += n;
      }
      throw golde::ConfigError("unknown relation '" + name + "'; available: " + available);
    }
    return std::int64_t(it->second);
  };

  std::vector<std::int64_t> ids;
  for (const auto& name : a.relations) ids.push_back(id_of(name));
  if (ids.empty()) {
    for (std::int64_t r = 0; r < lm.model.num_relations; ++r) ids.push_back(r);
  }
  for (std::int64_t r : ids) {
    std::printf("relation %s: orthogonality defect %.3e, symmetry defect %.3e\n",
                data.vocab.relation_names[std::size_t(r)].c_str(),
                golde::relation_orthogonality_defect(lm.model, r),
                golde::symmetry_defect(lm.model, r));
  }
  if (a.relations.size() >= 2) {
    std::printf("inversion defect (%s, %s): %.3e\n", a.relations[0].c_str(),
                a.relations[1].c_str(), golde::inversion_defect(lm.model, ids[0], ids[1]));
  }
  if (a.relations.size() == 3) {
    std::printf("composition defect (%s vs %s after %s): %.3e\n", a.relations[0].c_str(),
                a.relations[2].c_str(), a.relations[1].c_str(),
                golde::composition_defect(lm.model, ids[0], ids[1], ids[2]));
  }
  return 0;
}

int cmd_selfcheck(std::int64_t trials, std::uint64_t seed, const std::string& precision) {
  if (precision != "f64") {
    throw golde::ConfigError("selfcheck runs in double precision only (got --precision " +
                             precision + ")");
  }
  const auto results = golde::run_selfcheck(trials, seed);
  int fails = 0;
  for (const auto& r : results) {
    std::printf("%s  %-45s worst %.3e (budget %.1e)\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.budget);
    if (!r.pass) ++fails;
  }
  std::printf("%d/%zu properties passed\n", int(results.size()) - fails, results.size());
  return fails == 0 ? 0 : kExitSelfcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"golde: knowledge graph embedding with generalized Householder orthogonal "
               "relation transformations on product manifolds"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
  train_cmd->add_option("--data", ta.data_dir, "dataset directory with train/valid/test.txt");
  train_cmd->add_option("--out", ta.out_dir, "output directory")->capture_default_str();
  train_cmd->add_option("--dim", ta.dim, "stored entity dimension")->capture_default_str();
  train_cmd->add_option("--kstar", ta.kstar,
                        "stored dimensions assigned to elliptic components (default dim/2)");
  train_cmd->add_option("--mp", ta.mp, "number of elliptic components")->capture_default_str();
  train_cmd->add_option("--mq", ta.mq, "number of hyperbolic components")->capture_default_str();
  train_cmd->add_option("--manifold", ta.manifold,
                        "explicit component list, e.g. P4,P4,Q5,Q5 (overrides dim/kstar/mp/mq)");
  train_cmd->add_option("--batch-size", ta.cfg.batch_size, "positives per step")
      ->capture_default_str();
  train_cmd->add_option("--alpha", ta.cfg.alpha, "self-adversarial temperature")
      ->capture_default_str();
  train_cmd->add_option("--gamma", ta.cfg.margin, "margin")->capture_default_str();
  train_cmd->add_option("--lr", ta.cfg.lr, "learning rate")->capture_default_str();
  train_cmd->add_option("--neg-size", ta.cfg.neg_size, "negative samples per positive")
      ->capture_default_str();
  train_cmd->add_option("--steps", ta.cfg.steps, "training steps")->capture_default_str();
  train_cmd->add_option("--valid-every", ta.cfg.valid_every, "validation interval")
      ->capture_default_str();
  train_cmd->add_option("--norm", ta.cfg.norm, "distance exponent (1 or 2)")
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.cfg.seed, "random seed")->capture_default_str();
  train_cmd->add_option("--precision", ta.precision, "checkpoint precision (f64 or f32)")
      ->capture_default_str();
  train_cmd->add_option("--threads", ta.cfg.threads, "worker threads (0 = all cores)")
      ->capture_default_str();
  train_cmd->add_option("--valid-candidates", ta.cfg.valid_candidates,
                        "candidate subsample size during validation (0 = exact)")
      ->capture_default_str();
  train_cmd->add_flag("--filter-accidental", ta.filter_accidental,
                      "resample negatives that collide with known-true triples");
  train_cmd->add_flag("--freeze-elliptic-weights", ta.freeze_elliptic_weights,
                      "keep elliptic weights at 1 (Euclidean orthogonal mode)");
  train_cmd->add_option("--config", ta.config_file,
                        "key=value file (the echoed run.cfg replays a run); command line takes "
                        "precedence");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "filtered-ranking evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--data", ea.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", ea.split, "train, valid or test")->capture_default_str();
  eval_cmd->add_flag("--per-relation", ea.per_relation, "per-relation metric breakdown");
  eval_cmd->add_option("--threads", ea.threads, "worker threads (0 = all cores)");

  DiagnoseArgs da;
  auto* diag_cmd = app.add_subcommand("diagnose", "logical-pattern defects of trained relations");
  diag_cmd->add_option("--checkpoint", da.checkpoint, "checkpoint path")->required();
  diag_cmd->add_option("--data", da.data_dir, "dataset directory (for relation names)")
      ->required();
  diag_cmd->add_option("relations", da.relations,
                       "one, two or three relation names (two adds the inversion defect, three "
                       "adds the composition defect; none means all relations)")
      ->expected(0, 3);

  std::int64_t sc_trials = 1000;
  std::uint64_t sc_seed = 42;
  std::string sc_precision = "f64";
  auto* check_cmd = app.add_subcommand("selfcheck", "run the embedded property suite");
  check_cmd->add_option("--trials", sc_trials, "trial count for sampled properties")
      ->capture_default_str();
  check_cmd->add_option("--seed", sc_seed, "random seed")->capture_default_str();
  check_cmd->add_option("--precision", sc_precision, "must be f64")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(*train_cmd, ta);
    if (eval_cmd->parsed()) return cmd_eval(ea);
    if (diag_cmd->parsed()) return cmd_diagnose(da);
    if (check_cmd->parsed()) return cmd_selfcheck(sc_trials, sc_seed, sc_precision);
  } catch (const golde::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const golde::DiagnosticsError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const golde::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const golde::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
