// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// dkp: command-line driver.
//   init-config | train | report | bench | ablate-doping
// Exit codes: 0 ok, 2 config/input error, 3 numerical abort.
// DKP_LOG_LEVEL (trace, debug, info, warn, error, off) sets stderr verbosity.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dkp/bench.hpp"
#include "dkp/checkpoint.hpp"
#include "dkp/error.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace dkp;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw FormatError("cannot write " + path.string());
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dkp");
  logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("DKP_LOG_LEVEL"))
    spdlog::set_level(spdlog::level::from_str(lvl));
}

// ---- init-config ------------------------------------------------------------

struct InitArgs {
  std::string preset = "medium-lm-toy";
  std::string out;
};

void run_init(const InitArgs& a) {
  const TrainConfig c = preset(a.preset);
  c.validate();
  const std::string text = to_json(c) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_file(a.out, text);
    spdlog::info("wrote {} config to {}", a.preset, a.out);
  }
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool resume = false;
  std::int64_t stop_after = -1;
};

void run_train(const TrainArgs& a) {
  const TrainConfig cfg = config_from_json(slurp(a.config));
  const Corpus corpus = load_corpus(a.data, cfg.vocab_size);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  const fs::path ckpt = out / "checkpoint.dkpt";
  const fs::path log_path = out / "log.jsonl";

  TrainState st;
  if (a.resume && fs::exists(ckpt)) {
    st = load_checkpoint(ckpt.string());
    if (to_json(st.config) != to_json(cfg))
      throw ConfigError("--resume: checkpoint config differs from " + a.config);
    if (!(st.vocab == corpus.vocab))
      throw ConfigError("--resume: checkpoint vocabulary differs from " + a.data);
    spdlog::info("resuming at epoch {} step {}", st.epoch, st.step);
  } else {
    st = init_training(cfg, corpus.vocab);
  }
  write_file(out / "config.json", to_json(cfg) + "\n");
  {
    std::string prior;
    for (const auto& e : st.log) prior += e.to_json() + "\n";
    write_file(log_path, prior);
  }
  spdlog::info("vocab {} | train {} valid {} tokens", corpus.vocab.size(),
               corpus.train.size(), corpus.valid.size());
  for (std::size_t l = 0; l < st.model.layers.size(); ++l) {
    const DopedWeight& w = st.model.layers[l].w;
    spdlog::info("layer{}: {} {}x{} structured params {} nnz target {}", l,
                 to_string(w.kind()), w.rows(), w.cols(), param_count(w.structured),
                 w.nnz_target);
  }

  TrainHooks hooks;
  hooks.stop_after_epoch = a.stop_after;
  hooks.on_epoch = [&](const EpochLog& e) {
    const std::string line = e.to_json();
    std::cout << line << std::endl;
    std::ofstream f(log_path, std::ios::app);
    f << line << '\n';
  };
  hooks.on_epoch_end = [&](const TrainState& s) {
    save_checkpoint(s, ckpt.string());
    spdlog::debug("checkpoint written at epoch {}", s.epoch);
  };
  train(st, corpus, hooks);
  save_checkpoint(st, ckpt.string());
  write_file(out / "macs.json", count_macs(st.model).to_json() + "\n");
  spdlog::info("done: epoch {} step {}; checkpoint {}", st.epoch, st.step,
               ckpt.string());
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::string checkpoint;
  std::string json_out;
};

void run_report(const ReportArgs& a) {
  const TrainState st = load_checkpoint(a.checkpoint);
  const MacReport r = count_macs(st.model);
  std::cout << r.to_table() << '\n' << r.to_json() << std::endl;
  if (!a.json_out.empty()) write_file(a.json_out, r.to_json() + "\n");
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> kinds{"dense"};
  std::size_t rows = 256;
  std::size_t cols = 256;
  std::vector<double> sparsity{0.0};
  std::vector<std::size_t> kp;
  std::size_t iters = 30;
  std::size_t warmup = 10;
  bool f32 = false;
  std::uint64_t seed = 1;
  std::string out = "bench";
};

void run_bench(const BenchArgs& a) {
  std::optional<KronShape> kp;
  if (!a.kp.empty()) {
    if (a.kp.size() != 4) throw ConfigError("--kp takes m1,n1,m2,n2");
    kp = KronShape{a.kp[0], a.kp[1], a.kp[2], a.kp[3]};
  }
  std::vector<TimingResult> results;
  for (const auto& k : a.kinds) {
    const KernelKind kind = kernel_from_string(k);
    const bool sparse = kind == KernelKind::kCsr || kind == KernelKind::kDoped;
    for (double s : sparse ? a.sparsity : std::vector<double>{0.0}) {
      TimingSpec t;
      t.kind = kind;
      t.rows = a.rows;
      t.cols = a.cols;
      t.sparsity = s;
      if (kind == KernelKind::kKp || kind == KernelKind::kDoped) t.kp = kp;
      t.iterations = a.iters;
      t.warmup = a.warmup;
      t.single_precision = a.f32;
      t.seed = a.seed;
      const TimingResult r = time_matvec(t);
      spdlog::info("{} {}x{} sparsity {:.4f}: median {:.3e} s, speedup {:.2f}",
                   k, a.rows, a.cols, s, r.median_s, r.speedup);
      results.push_back(r);
    }
  }
  emit_report(results, a.out + ".csv", a.out + ".json");
  std::cout << results_csv(results);
}

// ---- ablate-doping ----------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string data;
  std::string grid;
  std::string out;
  double overall_cf = 0.0;  // 0: config target_cf
  int jobs = 1;
};

struct Cell {
  double kp_cf = 0.0;
  double doping_pct = 0.0;
};

std::vector<Cell> parse_grid(const std::string& grid) {
  std::vector<Cell> cells;
  std::stringstream ss(grid);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::string t;
    for (std::size_t i = 0; i < tok.size(); ++i) {
      if (tok.compare(i, 2, "\xC3\x97") == 0) {  // UTF-8 multiplication sign
        t += 'x';
        ++i;
      } else if (tok[i] != ' ' && tok[i] != '%') {
        t += static_cast<char>(tok[i] == 'X' ? 'x' : tok[i]);
      }
    }
    const auto x = t.find('x');
    if (x == std::string::npos)
      throw ConfigError("--grid cell '" + tok + "' is not kp_cf x doping%");
    try {
      cells.push_back({std::stod(t.substr(0, x)), std::stod(t.substr(x + 1))});
    } catch (const std::exception&) {
      throw ConfigError("--grid cell '" + tok + "' is not kp_cf x doping%");
    }
    if (!(cells.back().kp_cf >= 1.0) || !(cells.back().doping_pct >= 0.0) ||
        cells.back().doping_pct >= 100.0)
      throw ConfigError("--grid cell '" + tok + "' out of range");
  }
  if (cells.empty()) throw ConfigError("--grid is empty");
  return cells;
}

int spawn_train(const std::string& exe, const fs::path& cfg,
                const std::string& data, const fs::path& out, pid_t* pid) {
  std::vector<std::string> args{exe, "train", "--config", cfg.string(),
                                "--data", data, "--out", out.string()};
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  const std::string log = (out / "stdout.txt").string();
  posix_spawn_file_actions_addopen(&fa, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  const int rc = posix_spawn(pid, exe.c_str(), &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  return rc;
}

void run_ablate(const AblateArgs& a) {
  const TrainConfig base = config_from_json(slurp(a.config));
  const std::vector<Cell> cells = parse_grid(a.grid);
  const double overall = a.overall_cf > 0.0 ? a.overall_cf : base.variant(0).target_cf;
  const std::size_t m = 4 * base.hidden_size;
  const std::size_t n_first = base.embed_size + base.hidden_size;
  fs::create_directories(a.out);
  const std::string exe = fs::read_symlink("/proc/self/exe").string();

  struct Job {
    Cell cell;
    fs::path dir;
    bool feasible = true;
    std::string why;
    pid_t pid = 0;
    int status = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    Job j;
    j.cell = cells[i];
    j.dir = fs::path(a.out) / ("cell" + std::to_string(i));
    const double implied =
        1.0 / (1.0 / j.cell.kp_cf + j.cell.doping_pct / 100.0);
    TrainConfig c = base;
    c.cmr.enabled = base.cmr.enabled && j.cell.doping_pct > 0.0;
    for (auto& v : c.variants) {
      v.kind = VariantKind::kKp;
      v.kp_shape.reset();
      v.structured_cf = j.cell.kp_cf;
      v.doping = j.cell.doping_pct > 0.0;
      v.target_cf = overall;
    }
    if (std::abs(implied / overall - 1.0) > 0.02) {
      j.feasible = false;
      j.why = "implied overall CF " + std::to_string(implied) + " != " +
              std::to_string(overall);
    } else {
      try {
        Rng probe(0);
        for (std::size_t l = 0; l < c.layers; ++l)
          make_doped(m, l == 0 ? n_first : 2 * c.hidden_size, c.variant(l), probe);
        c.validate();
      } catch (const Error& e) {
        j.feasible = false;
        j.why = e.what();
      }
    }
    if (j.feasible) {
      fs::create_directories(j.dir);
      write_file(j.dir / "config.json", to_json(c) + "\n");
    } else {
      spdlog::warn("cell {}x{}% infeasible: {}", j.cell.kp_cf, j.cell.doping_pct, j.why);
    }
    jobs.push_back(std::move(j));
  }

  std::size_t next = 0, running = 0;
  auto reap_one = [&] {
    int status = 0;
    const pid_t pid = wait(&status);
    for (auto& j : jobs)
      if (j.pid == pid) j.status = status;
    --running;
  };
  while (next < jobs.size() || running > 0) {
    if (next < jobs.size() && running < static_cast<std::size_t>(std::max(1, a.jobs))) {
      Job& j = jobs[next++];
      if (!j.feasible) continue;
      spdlog::info("cell {}x{}%: training in {}", j.cell.kp_cf, j.cell.doping_pct,
                   j.dir.string());
      if (spawn_train(exe, j.dir / "config.json", a.data, j.dir, &j.pid) != 0)
        throw ConfigError("could not start training process");
      ++running;
    } else {
      reap_one();
    }
  }

  std::ostringstream csv;
  csv << "kp_cf,doping_pct,overall_cf,final_ppl,status\n";
  for (const auto& j : jobs) {
    if (!j.feasible) {
      csv << j.cell.kp_cf << ',' << j.cell.doping_pct << ",,,infeasible\n";
      continue;
    }
    const bool ok = WIFEXITED(j.status) && WEXITSTATUS(j.status) == 0;
    if (!ok) {
      csv << j.cell.kp_cf << ',' << j.cell.doping_pct << ",,,failed\n";
      continue;
    }
    const TrainState st = load_checkpoint((j.dir / "checkpoint.dkpt").string());
    const MacReport r = count_macs(st.model);
    std::size_t structured = 0, nnz = 0;
    for (const auto& e : r.entries) {
      structured += e.structured_params;
      nnz += e.nnz;
    }
    const double size = static_cast<double>(r.dense_macs);
    char line[256];
    std::snprintf(line, sizeof line, "%.4f,%.4f,%.4f,%.6f,ok\n",
                  size / static_cast<double>(structured),
                  100.0 * static_cast<double>(nnz) / size, r.compression_factor,
                  st.log.back().valid_ppl);
    csv << line;
  }
  write_file(fs::path(a.out) / "ablation.csv", csv.str());
  std::cout << csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"dkp: doped Kronecker product compression toolkit"};
  app.require_subcommand(1);

  InitArgs init;
  auto* c_init = app.add_subcommand("init-config", "write a run configuration");
  c_init->add_option("--preset", init.preset, "medium-lm-toy | kp-only | doped-lmf");
  c_init->add_option("--out", init.out, "output path (default stdout)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a language model");
  c_train->add_option("--config", tr.config)->required();
  c_train->add_option("--data", tr.data, "directory with train/valid/test.txt or one text file")
      ->required();
  c_train->add_option("--out", tr.out)->required();
  c_train->add_flag("--resume", tr.resume, "continue from OUT/checkpoint.dkpt if present");
  c_train->add_option("--stop-after-epoch", tr.stop_after, "stop once this many epochs are done");

  ReportArgs rep;
  auto* c_report = app.add_subcommand("report", "per-layer CF, sparsity and MACs");
  c_report->add_option("--checkpoint", rep.checkpoint)->required();
  c_report->add_option("--json", rep.json_out, "also write the JSON report here");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "time matvec kernels");
  c_bench->add_option("--kind", bench.kinds, "dense csr kp doped")->delimiter(',');
  c_bench->add_option("--rows", bench.rows);
  c_bench->add_option("--cols", bench.cols);
  c_bench->add_option("--sparsity", bench.sparsity, "one or more values")->delimiter(',');
  c_bench->add_option("--kp", bench.kp, "m1,n1,m2,n2")->delimiter(',');
  c_bench->add_option("--iters", bench.iters);
  c_bench->add_option("--warmup", bench.warmup);
  c_bench->add_flag("--f32", bench.f32, "32-bit operands");
  c_bench->add_option("--seed", bench.seed);
  c_bench->add_option("--out", bench.out, "writes OUT.csv and OUT.json");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate-doping", "KP-vs-doping split at fixed CF");
  c_ab->add_option("--config", ab.config)->required();
  c_ab->add_option("--data", ab.data)->required();
  c_ab->add_option("--grid", ab.grid, "cells kp_cf x doping%, e.g. \"20x0,40x2.5\"")
      ->required();
  c_ab->add_option("--out", ab.out)->required();
  c_ab->add_option("--overall-cf", ab.overall_cf, "default: config target_cf");
  c_ab->add_option("--jobs", ab.jobs, "cells trained concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (c_init->parsed()) run_init(init);
    if (c_train->parsed()) run_train(tr);
    if (c_report->parsed()) run_report(rep);
    if (c_bench->parsed()) run_bench(bench);
    if (c_ab->parsed()) run_ablate(ab);
  } catch (const NumericalAbort& e) {
    spdlog::error("numerical abort: {}", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return 0;
}
