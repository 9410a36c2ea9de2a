// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_CLI_HPP_
#define TSEGRID_CLI_HPP_

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "tsegrid/config.hpp"
#include "tsegrid/report.hpp"

namespace tsegrid {
namespace cli {

// exit codes, one per error class
enum ExitCode {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kInput = 4,
  kNumeric = 5,
  kInternal = 6,
};

using TrainScalar = float;

struct CommonArgs {
  std::string config_path;
  std::string cache_dir;
  std::string out_dir;
  uint64_t seed = 7;
  size_t jobs = 1;
};

inline KvConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return KvConfig{};
  KvConfig c = KvConfig::load(path);
  reject_unknown_keys(c);
  return c;
}

inline std::string resolve_cache(const KvConfig& cfg,
                                 const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  return cfg.get("cache_dir", "scenes");
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("short write: " + path);
}

inline std::set<CueKind> parse_cue_set(const std::string& csv) {
  std::set<CueKind> cues;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) cues.insert(parse_cue(tok));
  if (cues.empty()) throw ConfigError("empty cue set");
  if (!cues.count(CueKind::lip))
    throw ConfigError("the lip cue is always required (got '" + csv + "')");
  return cues;
}

inline std::string cue_set_slug(const std::set<CueKind>& cues) {
  std::string s = "lip";
  if (cues.count(CueKind::expression)) s += "-expr";
  if (cues.count(CueKind::face)) s += "-face";
  if (cues.count(CueKind::voice)) s += "-aux";
  return s;
}

inline std::string missing_slug(double rate) {
  return "m" + std::to_string(static_cast<int>(std::lround(rate * 100)));
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------
inline int cmd_generate(const std::string& config_path,
                        const std::string& out_dir) {
  KvConfig cfg = load_config_or_default(config_path);
  SceneConfig sc = scene_config_from(cfg);
  std::vector<ManifestRow> rows = generate_cache<TrainScalar>(sc, out_dir);
  size_t train = 0, dev = 0, test = 0;
  for (const ManifestRow& r : rows) {
    if (r.split == "train") ++train;
    if (r.split == "dev") ++dev;
    if (r.split == "test") ++test;
  }
  std::cout << "generated " << train << " train + " << dev << " dev + " << test
            << " test scenes in " << out_dir << std::endl;
  return kOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
struct TrainOutputs {
  std::string checkpoint;
  std::string meta;
  std::string trainlog;
};

inline TrainOutputs train_paths(const std::string& out_dir,
                                const std::set<CueKind>& cues,
                                double train_missing) {
  std::string stem = cue_set_slug(cues) + "_" + missing_slug(train_missing);
  return {out_dir + "/ckpt_" + stem + ".tsgc",
          out_dir + "/ckpt_" + stem + ".tsgc.meta",
          out_dir + "/trainlog_" + stem + ".csv"};
}

inline TrainResult run_training(const KvConfig& cfg,
                                const std::string& cache_dir,
                                const std::set<CueKind>& cues,
                                double train_missing, uint64_t seed,
                                size_t jobs, const TrainOutputs& paths,
                                bool resume, bool verbose) {
  namespace fs = std::filesystem;
  if (resume && fs::exists(paths.checkpoint) && fs::exists(paths.meta)) {
    CheckpointMeta meta = checkpoint_meta_from_file(paths.meta);
    if (meta.model.active_cues == cues &&
        std::abs(meta.train_missing - train_missing) < 1e-9 &&
        meta.seed == seed) {
      if (verbose)
        std::cout << "reusing checkpoint " << paths.checkpoint << std::endl;
      return TrainResult{};
    }
    throw ConfigError("existing checkpoint " + paths.checkpoint +
                      " was trained with a different configuration; remove it "
                      "or drop --resume");
  }
  ModelConfig mc = model_config_from(cfg);
  mc.active_cues = cues;
  TrainConfig tc = train_config_from(cfg, mc);
  tc.train_missing_rate = train_missing;
  tc.seed = seed;
  tc.jobs = thread_cap(jobs);

  auto train_scenes = load_split<TrainScalar>(cache_dir, "train");
  auto dev_scenes = load_split<TrainScalar>(cache_dir, "dev");

  Model<TrainScalar> model(mc);
  TrainResult result = train(model, tc, train_scenes, dev_scenes,
                             verbose ? &std::cout : nullptr);
  fs::create_directories(fs::path(paths.checkpoint).parent_path());
  save_checkpoint(paths.checkpoint, model.parameters(), tc.seed);
  write_text_file(paths.meta, model_config_to_kv(mc, train_missing, seed));
  write_text_file(paths.trainlog, result.log.to_csv());
  return result;
}

inline int cmd_train(const std::string& config_path,
                     const std::string& cache_flag, const std::string& cues_csv,
                     double train_missing, const std::string& out_dir,
                     uint64_t seed, size_t jobs, bool resume) {
  KvConfig cfg = load_config_or_default(config_path);
  std::set<CueKind> cues = parse_cue_set(cues_csv);
  if (train_missing < 0.0 || train_missing > 1.0)
    throw ConfigError("--train-missing outside [0,1]");
  std::string cache_dir = resolve_cache(cfg, cache_flag);
  std::filesystem::create_directories(out_dir);
  TrainOutputs paths = train_paths(out_dir, cues, train_missing);
  run_training(cfg, cache_dir, cues, train_missing, seed, jobs, paths, resume,
               /*verbose=*/true);
  std::cout << "checkpoint " << paths.checkpoint << std::endl;
  return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
inline EvalReport eval_checkpoint(const std::string& ckpt_path,
                                  const std::string& cache_dir,
                                  double test_missing, uint64_t seed,
                                  size_t mask_block) {
  CheckpointMeta meta = checkpoint_meta_from_file(ckpt_path + ".meta");
  Model<TrainScalar> model(meta.model);
  ParamList<TrainScalar> params = model.parameters();
  load_checkpoint(ckpt_path, params);
  auto test_scenes = load_split<TrainScalar>(cache_dir, "test");
  EvalReport rep;
  rep.train_missing = meta.train_missing;
  rep.test_missing = test_missing;
  rep.n_scenes = test_scenes.size();
  rep.seed = seed;
  rep.rows.push_back(
      evaluate_model(model, test_scenes, test_missing, seed, mask_block));
  return rep;
}

inline int cmd_eval(const std::string& config_path,
                    const std::string& cache_flag,
                    const std::string& ckpt_path, double test_missing,
                    uint64_t seed, bool mix_only, const std::string& out_file) {
  KvConfig cfg = load_config_or_default(config_path);
  if (test_missing < 0.0 || test_missing > 1.0)
    throw ConfigError("--test-missing outside [0,1]");
  std::string cache_dir = resolve_cache(cfg, cache_flag);
  size_t mask_block =
      static_cast<size_t>(cfg.get_i("scene.mask_block", 10));
  EvalReport rep;
  if (mix_only) {
    auto test_scenes = load_split<TrainScalar>(cache_dir, "test");
    rep.test_missing = test_missing;
    rep.n_scenes = test_scenes.size();
    rep.seed = seed;
    rep.rows.push_back(mixture_baseline(test_scenes));
  } else {
    if (ckpt_path.empty())
      throw ConfigError("--checkpoint required unless --mix is given");
    rep = eval_checkpoint(ckpt_path, cache_dir, test_missing, seed, mask_block);
  }
  std::string csv = rep.to_csv();
  if (!out_file.empty())
    write_text_file(out_file, csv);
  else
    std::cout << csv;
  return kOk;
}

// ---------------------------------------------------------------------------
// grid: 6 cue configurations x {0%, 80%} train missing, each evaluated at
// {0%, 40%, 80%} test missing; six tables in the published row order
// ---------------------------------------------------------------------------
inline const std::vector<std::set<CueKind>>& grid_cue_sets() {
  static const std::vector<std::set<CueKind>> kSets = {
      {CueKind::lip},
      {CueKind::lip, CueKind::expression},
      {CueKind::lip, CueKind::face},
      {CueKind::lip, CueKind::voice},
      {CueKind::lip, CueKind::expression, CueKind::face},
      {CueKind::lip, CueKind::expression, CueKind::face, CueKind::voice},
  };
  return kSets;
}

inline std::string grid_table_name(double train_missing, double test_missing) {
  int table = 0;
  int tm = static_cast<int>(std::lround(train_missing * 100));
  int te = static_cast<int>(std::lround(test_missing * 100));
  if (tm == 0)
    table = te == 0 ? 1 : (te == 40 ? 2 : 3);
  else
    table = te == 0 ? 4 : (te == 40 ? 5 : 6);
  return "table" + std::to_string(table) + "_train" + std::to_string(tm) +
         "_test" + std::to_string(te);
}

inline int cmd_grid(const std::string& config_path,
                    const std::string& cache_flag, const std::string& out_dir,
                    uint64_t seed, size_t jobs, bool resume, bool budget_ack,
                    bool check_direction) {
  if (!budget_ack)
    throw ConfigError("grid trains 12 checkpoints; pass --yes to acknowledge "
                      "the compute budget");
  KvConfig cfg = load_config_or_default(config_path);
  std::string cache_dir = resolve_cache(cfg, cache_flag);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/checkpoints");
  size_t mask_block = static_cast<size_t>(cfg.get_i("scene.mask_block", 10));

  const std::vector<double> train_rates = {0.0, 0.8};
  const std::vector<double> test_rates = {0.0, 0.4, 0.8};

  for (size_t ti = 0; ti < train_rates.size(); ++ti) {
    for (size_t ci = 0; ci < grid_cue_sets().size(); ++ci) {
      const std::set<CueKind>& cues = grid_cue_sets()[ci];
      double tm = train_rates[ti];
      TrainOutputs paths = train_paths(out_dir + "/checkpoints", cues, tm);
      uint64_t cell_seed = mix_seed(seed, "grid-cell", ci, ti);
      std::cout << "[grid] train " << cue_set_slug(cues) << " "
                << missing_slug(tm) << std::endl;
      run_training(cfg, cache_dir, cues, tm, cell_seed, jobs, paths, resume,
                   /*verbose=*/true);
    }
  }

  auto test_scenes = load_split<TrainScalar>(cache_dir, "test");
  EvalRow mix_row = mixture_baseline(test_scenes);
  for (double tm : train_rates) {
    for (double te : test_rates) {
      EvalReport rep;
      rep.train_missing = tm;
      rep.test_missing = te;
      rep.n_scenes = test_scenes.size();
      rep.seed = seed;
      rep.rows.push_back(mix_row);
      for (const std::set<CueKind>& cues : grid_cue_sets()) {
        TrainOutputs paths = train_paths(out_dir + "/checkpoints", cues, tm);
        CheckpointMeta meta = checkpoint_meta_from_file(paths.meta);
        Model<TrainScalar> model(meta.model);
        ParamList<TrainScalar> params = model.parameters();
        load_checkpoint(paths.checkpoint, params);
        rep.rows.push_back(
            evaluate_model(model, test_scenes, te, seed, mask_block));
      }
      std::string stem = out_dir + "/" + grid_table_name(tm, te);
      write_text_file(stem + ".csv", rep.to_csv());
      write_text_file(stem + ".md", rep.to_markdown());
      std::cout << "[grid] wrote " << stem << ".csv" << std::endl;
    }
  }

  if (check_direction) {
    std::ostringstream out;
    auto load_table = [&](double tm, double te) {
      std::ifstream is(out_dir + "/" + grid_table_name(tm, te) + ".csv");
      std::stringstream ss;
      ss << is.rdbuf();
      return parse_report_csv(ss.str());
    };
    EvalReport t1 = load_table(0.0, 0.0), t3 = load_table(0.0, 0.8);
    EvalReport t4 = load_table(0.8, 0.0), t6 = load_table(0.8, 0.8);
    out << "# directional checks (rows exclude Mix)\n";
    for (size_t i = 1; i < t1.rows.size(); ++i) {
      double drop = t1.rows[i].si_snr - t3.rows[i].si_snr;
      out << "degradation " << t1.rows[i].name << " "
          << format_fixed(drop, 3) << " dB (>= 2 expected)\n";
    }
    for (size_t i = 1; i < t3.rows.size(); ++i) {
      double gain = t6.rows[i].si_snr - t3.rows[i].si_snr;
      out << "robust-training-gain " << t3.rows[i].name << " "
          << format_fixed(gain, 3) << " dB (>= 1 expected)\n";
    }
    double retention = t4.rows.back().si_snr - t6.rows.back().si_snr;
    out << "full-model-retention-drop " << format_fixed(retention, 3)
        << " dB (<= 2 expected)\n";
    write_text_file(out_dir + "/directional.txt", out.str());
    std::cout << out.str();
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// argument surface
// ---------------------------------------------------------------------------
inline int run(int argc, const char* const* argv) {
  CLI::App app{"tsegrid: multimodal target speaker extraction experiments"};
  app.require_subcommand(1);

  std::string config_path, cache_dir, out_path, cues_csv = "lip";
  std::string checkpoint, out_file;
  double train_missing = 0.0, test_missing = 0.0;
  uint64_t seed = 7;
  size_t jobs = 1;
  bool resume = false, mix_only = false, budget_ack = false,
       check_direction = false;

  CLI::App* gen = app.add_subcommand("generate", "materialize the scene cache");
  gen->add_option("--config", config_path, "key=value config file");
  gen->add_option("--out", out_path, "cache output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("--cache", cache_dir, "scene cache directory");
  tr->add_option("--cues", cues_csv, "comma list: lip,expr,face,aux");
  tr->add_option("--train-missing", train_missing, "training missing rate");
  tr->add_option("--out", out_path, "output directory")->required();
  tr->add_option("--seed", seed, "training seed");
  tr->add_option("--jobs", jobs, "worker threads");
  tr->add_flag("--resume", resume, "reuse an existing checkpoint");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--config", config_path, "key=value config file");
  ev->add_option("--cache", cache_dir, "scene cache directory");
  ev->add_option("--checkpoint", checkpoint, "checkpoint path");
  ev->add_option("--test-missing", test_missing, "test missing rate");
  ev->add_option("--seed", seed, "mask sampling seed");
  ev->add_option("--out", out_file, "write the report here (else stdout)");
  ev->add_flag("--mix", mix_only, "evaluate the unprocessed mixture baseline");

  CLI::App* gr = app.add_subcommand("grid", "run the full experiment grid");
  gr->add_option("--config", config_path, "key=value config file");
  gr->add_option("--cache", cache_dir, "scene cache directory");
  gr->add_option("--out", out_path, "grid output directory")->required();
  gr->add_option("--seed", seed, "base seed");
  gr->add_option("--jobs", jobs, "worker threads");
  gr->add_flag("--resume", resume, "reuse existing checkpoints");
  gr->add_flag("--yes", budget_ack, "acknowledge the 12-training budget");
  gr->add_flag("--check-direction", check_direction,
               "emit directional comparisons across tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, out_path);
    if (tr->parsed())
      return cmd_train(config_path, cache_dir, cues_csv, train_missing,
                       out_path, seed, jobs, resume);
    if (ev->parsed())
      return cmd_eval(config_path, cache_dir, checkpoint, test_missing, seed,
                      mix_only, out_file);
    if (gr->parsed())
      return cmd_grid(config_path, cache_dir, out_path, seed, jobs, resume,
                      budget_ack, check_direction);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << std::endl;
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << e.what() << std::endl;
    return kIo;
  } catch (const InputError& e) {
    std::cerr << e.what() << std::endl;
    return kInput;
  } catch (const NumericError& e) {
    std::cerr << e.what() << std::endl;
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kInternal;
  }
  return kUsage;
}

}  // namespace cli
}  // namespace tsegrid

#endif  // TSEGRID_CLI_HPP_
