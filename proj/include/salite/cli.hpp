#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "salite/gradcheck_suite.hpp"
#include "salite/pipeline.hpp"

namespace salite {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2, kExitNumeric = 3 };

namespace cli {

/// Raised for command-line misuse that CLI11 cannot see (mutually required flags and the like).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

inline Overrides parse_overrides(const std::vector<std::string>& sets) {
  Overrides out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + s, "expected KEY=VALUE");
    out.emplace_back(detail::trim(s.substr(0, eq)), s.substr(eq + 1));
  }
  return out;
}

inline RunConfig config_from(const std::string& file, const std::vector<std::string>& sets) {
  return parse_config(file == "default" ? std::filesystem::path() : std::filesystem::path(file), parse_overrides(sets));
}

/// A model rebuilt from a checkpoint: the stored config is the base, then `file` and `sets` on top.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<SaliteModel<float>> model;
  Checkpoint checkpoint;
};

inline LoadedModel load_model(const std::string& path, const std::string& file = "", const std::vector<std::string>& sets = {}) {
  LoadedModel lm;
  lm.checkpoint = load_checkpoint(path);
  apply_config_text(lm.config, lm.checkpoint.config, path + " (stored config)");
  if (!file.empty() && file != "default") {
    std::ifstream in(file);
    if (!in) throw IoError(file + ": cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(lm.config, ss.str(), file);
  }
  for (const auto& [k, v] : parse_overrides(sets)) lm.config.set(k, v, "--set " + k);
  lm.model = std::make_unique<SaliteModel<float>>(model_spec_from(lm.config));
  restore_params(lm.model->params(), lm.checkpoint);
  return lm;
}

inline void write_report_file(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open report for writing");
  write_report(out, r);
  if (!out) throw IoError(path + ": write failed");
}

inline void add_set(CLI::App* app, std::vector<std::string>& sets) {
  app->add_option("--set", sets, "override a config key, KEY=VALUE (repeatable)")->default_str("none");
}

inline void add_threads(CLI::App* app, int& threads, const char* doc) {
  app->add_option("--threads", threads, doc)->capture_default_str()->check(CLI::PositiveNumber);
}

/// Footer text listing every config key with its default.
inline std::string config_key_table() {
  std::string s = "Config keys (--config file or --set KEY=VALUE):\n";
  for (const auto& k : config_keys()) {
    char line[200];
    std::snprintf(line, sizeof line, "  %-26s %-24s %s\n", k.name, ("[" + std::string(k.fallback) + "]").c_str(), k.doc);
    s += line;
  }
  return s;
}

// ---- subcommands ----------------------------------------------------------

struct SynthArgs {
  std::string out, spec = "default";
  std::vector<std::string> sets;
  int threads = 1;
};

inline int run_synth(const SynthArgs& a, std::ostream& out) {
  const auto spec = synth_spec_from(config_from(a.spec, a.sets));
  const auto m = synth_generate(spec, a.out);
  out << "wrote " << m.size() << " samples, manifest " << (std::filesystem::path(a.out) / "manifest.tsv").string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string manifest, config = "default", out, resume;
  std::vector<std::string> sets;
  int threads = 1;
  bool quiet = false;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = config_from(a.config, a.sets);
  const auto spec = model_spec_from(cfg);
  const auto lw = loss_weights_from(cfg);
  const auto tc = train_config_from(cfg);
  const auto manifest = load_manifest(a.manifest);
  if (manifest.size() == 0) throw ManifestError(a.manifest, 0, "no rows");
  const auto data = load_training_set<float>(manifest, spec.input_size(), lw);
  Checkpoint resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  SaliteModel<float> model(spec, tc.seed);
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.log = a.quiet ? nullptr : &out;
  opts.config_text = cfg.to_text();
  opts.loss = lw;
  opts.resume = a.resume.empty() ? nullptr : &resume;
  const auto last = train_loop(data, model, tc, opts);
  out << "done at step " << last.step << ", checkpoint " << (std::filesystem::path(a.out) / "last.salt").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string manifest, checkpoint, maps, report, config = "default";
  std::vector<std::string> sets;
  int threads = 1;
};

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.maps.empty()) throw UsageError("eval: give exactly one of --checkpoint and --maps");
  const auto manifest = load_manifest(a.manifest);
  EvalReport r;
  if (!a.checkpoint.empty()) {
    auto lm = load_model(a.checkpoint, a.config, a.sets);
    r = evaluate_model<float>(*lm.model, manifest, lm.config.real("metrics.beta2"), nullptr, a.threads);
  } else {
    const auto cfg = config_from(a.config, a.sets);
    r = evaluate_maps(a.maps, manifest, static_cast<int>(cfg.integer("model.input_size")), cfg.real("metrics.beta2"));
  }
  write_report_file(a.report, r);
  std::ostringstream summary;
  summary.precision(6);
  summary << std::fixed << r.dataset << "\timages " << r.count() << "\tmaxF " << r.mean_max_f << "\tadaptF "
          << r.mean_adaptive_f << "\tMAE " << r.mean_mae << '\n';
  out << summary.str();
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint, image, out;
  int threads = 1;
};

inline int run_infer(const InferArgs& a, std::ostream& out) {
  auto lm = load_model(a.checkpoint);
  const auto img = load_image<float>(a.image, lm.model->spec().input_size());
  const auto s = predict(*lm.model, detail::as_batch(img));
  for (auto v : s.data())
    if (!std::isfinite(v)) throw NumericError("infer: non-finite saliency");
  save_map(s, a.out);
  const auto d = s.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  out << a.out << '\t' << s.dim(3) << 'x' << s.dim(2) << "\tmin " << int(map_level(*lo)) << "\tmax " << int(map_level(*hi)) << '\n';
  return kExitOk;
}

struct GradCheckArgs {
  std::string op;
  bool full = false, list = false;
  int threads = 1;
};

inline int run_gradcheck(const GradCheckArgs& a, std::ostream& out) {
  if (!a.op.empty() && a.full) throw UsageError("gradcheck: --op and --full are exclusive");
  const auto all = gradcheck_cases();
  if (a.list) {
    for (const auto& c : all) out << c.name << "\ttol " << c.tol << '\n';
    return kExitOk;
  }
  std::vector<const GradCheckCase*> chosen;
  for (const auto& c : all) {
    if (!a.op.empty() ? c.name == a.op : (a.full || c.tol <= 1e-4)) chosen.push_back(&c);
  }
  if (chosen.empty()) throw UsageError("gradcheck: unknown op '" + a.op + "' (see --list)");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckReport> reps(chosen.size());
  std::size_t next = 0;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next == chosen.size()) return;
        i = next++;
      }
      reps[i] = chosen[i]->run(chosen[i]->tol);
    }
  };
  const int workers = std::clamp(a.threads, 1, static_cast<int>(chosen.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  int failed = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& r = reps[i];
    char line[160];
    std::snprintf(line, sizeof line, "%-22s max_rel %.3e  tol %.0e  coords %zu  kinks %zu  %s\n", r.name.c_str(),
                  r.max_rel_error, chosen[i]->tol, r.coords_checked, r.kinks_skipped, r.passed ? "PASS" : "FAIL");
    out << line;
    failed += !r.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << chosen.size() - failed << "/" << chosen.size() << " passed in " << secs << " s\n";
  return failed ? kExitNumeric : kExitOk;
}

struct ParamsArgs {
  std::string checkpoint, spec;
  std::vector<std::string> sets;
  int threads = 1;
};

inline void print_param_table(const ParamStore<float>& store, std::ostream& out) {
  auto row = [&](const std::string& name, long long n) {
    char line[128];
    std::snprintf(line, sizeof line, "%-34s %12lld\n", name.c_str(), n);
    out << line;
  };
  for (const auto& [layer, n] : count_params(store).per_layer) row(layer, n);
  const auto enc = count_params(store, "encoder.").total;
  const auto tail = count_params(store, "encoder.tail").total;
  out << '\n';
  row("encoder", enc);
  row("encoder excluding tail", enc - tail);
  row("decoder", count_params(store, "decoder.").total);
  row("total", count_params(store).total);
}

inline int run_params(const ParamsArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.spec.empty()) throw UsageError("params: give exactly one of --checkpoint and --spec");
  if (!a.checkpoint.empty()) {
    auto lm = load_model(a.checkpoint, "", a.sets);
    print_param_table(lm.model->params(), out);
  } else {
    SaliteModel<float> model(model_spec_from(config_from(a.spec, a.sets)));
    print_param_table(model.params(), out);
  }
  return kExitOk;
}

}  // namespace cli

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 validation or usage,
/// 2 I/O, 3 numeric failure. Usage errors print the subcommand help to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"salite: salient object detection with global and local pixel attention"};
  app.name("salite");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  cli::SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic image/mask dataset and manifest.tsv");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--spec", sa.spec, "config file with synth.* keys, or 'default'")->capture_default_str();
  cli::add_set(synth, sa.sets);
  cli::add_threads(synth, sa.threads, "accepted for uniformity; generation is single-threaded");

  cli::TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoints and train.log under --out");
  train->add_option("--manifest", ta.manifest, "training manifest (image<TAB>mask)")->required();
  train->add_option("--config", ta.config, "config file, or 'default'")->capture_default_str();
  train->add_option("--out", ta.out, "run directory")->required();
  train->add_option("--resume", ta.resume, "checkpoint to continue from")->default_str("none");
  cli::add_set(train, ta.sets);
  train->footer(cli::config_key_table());
  cli::add_threads(train, ta.threads, "accepted for uniformity; training is single-threaded");
  train->add_flag("--quiet", ta.quiet, "no per-step lines on standard output")->default_str("false");

  cli::EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a model or stored maps against a manifest");
  eval->add_option("--manifest", ea.manifest, "evaluation manifest")->required();
  auto* ckpt = eval->add_option("--checkpoint", ea.checkpoint, "model checkpoint")->default_str("none");
  auto* maps = eval->add_option("--maps", ea.maps, "directory of <stem>.pgm saliency maps")->default_str("none");
  ckpt->excludes(maps);
  eval->add_option("--report", ea.report, "report file (per-image rows and summary)")->required();
  eval->add_option("--config", ea.config, "config file applied on top (beta2, input size for --maps)")->capture_default_str();
  cli::add_set(eval, ea.sets);
  cli::add_threads(eval, ea.threads, "images scored in parallel");

  cli::InferArgs ia;
  auto* infer = app.add_subcommand("infer", "write the saliency map of one image as PGM");
  infer->add_option("--checkpoint", ia.checkpoint, "model checkpoint")->required();
  infer->add_option("--image", ia.image, "input PPM/PGM")->required();
  infer->add_option("--out", ia.out, "output PGM")->required();
  cli::add_threads(infer, ia.threads, "accepted for uniformity; inference is single-threaded");

  cli::GradCheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks in 64-bit arithmetic");
  gc->add_option("--op", ga.op, "run one named check")->default_str("none");
  gc->add_flag("--full", ga.full, "all checks including the reduced-geometry network")->default_str("false");
  gc->add_flag("--list", ga.list, "list check names and tolerances")->default_str("false");
  cli::add_threads(gc, ga.threads, "checks run in parallel");

  cli::ParamsArgs pa;
  auto* params = app.add_subcommand("params", "print the learnable parameter table");
  auto* pc = params->add_option("--checkpoint", pa.checkpoint, "model checkpoint")->default_str("none");
  auto* ps = params->add_option("--spec", pa.spec, "config file, or 'default'")->default_str("none");
  pc->excludes(ps);
  cli::add_set(params, pa.sets);
  cli::add_threads(params, pa.threads, "accepted for uniformity; counting is single-threaded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << (sub == &app ? app.help() : sub->help("salite"));
    return kExitValidation;
  }

  try {
    if (*synth) return cli::run_synth(sa, out);
    if (*train) return cli::run_train(ta, out);
    if (*eval) return cli::run_eval(ea, out);
    if (*infer) return cli::run_infer(ia, out);
    if (*gc) return cli::run_gradcheck(ga, out);
    if (*params) return cli::run_params(pa, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const cli::UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help("salite");
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    // ConfigError, ManifestError, DimensionError
    err << "invalid: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace salite
