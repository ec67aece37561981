// SPDX-License-Identifier: Apache-2.0
#include "hkd/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>

#include "hkd/errors.hpp"

#ifndef HKD_BUILD_TAG
#define HKD_BUILD_TAG "unknown"
#endif

namespace hkd::cli {

namespace fs = std::filesystem;

std::string checkpoint_name(std::size_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_step%06zu.ckpt", step);
  return buf;
}

std::string build_tag() { return HKD_BUILD_TAG; }

MetricsRecord train_run(const RunSettings& settings, const Dataset& train, const Dataset& eval,
                        const RunPaths& paths) {
  settings.train.validate();
  CollaborativeTrainer trainer(settings.train, train, eval);

  fs::create_directories(paths.out);
  const fs::path metrics_path = paths.out / kMetricsFile;
  {
    std::ofstream manifest(paths.out / kManifestFile, std::ios::binary | std::ios::trunc);
    manifest << render_settings(settings);
    manifest << "run.build_tag = " << build_tag() << "\n";
    manifest << "run.data = " << paths.data.string() << "\n";
    manifest << "run.eval_data = " << paths.eval_data.string() << "\n";
    manifest << "run.out = " << paths.out.string() << "\n";
    manifest << "run.metrics = " << metrics_path.string() << "\n";
    if (!manifest) throw FormatError("cannot write manifest in " + paths.out.string());
  }

  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw FormatError("cannot write " + metrics_path.string());
  MetricsRecord last;
  trainer.run([&](const MetricsRecord& rec) {
    metrics << format_metrics_line(rec) << '\n';
    metrics.flush();
    if (settings.checkpoint_every != 0 && rec.step % settings.checkpoint_every == 0) {
      save_checkpoint(paths.out / checkpoint_name(rec.step), trainer.checkpoint());
    }
    last = rec;
  });
  save_checkpoint(paths.out / kFinalCheckpoint, trainer.checkpoint());
  return last;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Options shared by train, ablate and sweep.
struct TrainArgs {
  std::string config;
  std::string data;
  std::string eval_data;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t batch = 0;
  double alpha = 0, beta = 0, gamma = 0;
  std::size_t checkpoint_every = 0;
  std::size_t eval_every = 0;
  std::vector<std::string> sets;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* beta_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* ckpt_opt = nullptr;
  CLI::Option* eval_opt = nullptr;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, bool eval_required) {
  cmd->add_option("--config", a.config, "config file of key = value lines");
  cmd->add_option("--data", a.data, "training dataset directory")->required();
  auto* ev = cmd->add_option("--eval-data", a.eval_data, "evaluation dataset directory");
  if (eval_required) ev->required();
  cmd->add_option("--out", a.out, "output directory")->required();
  a.seed_opt = cmd->add_option("--seed", a.seed, "run seed");
  a.steps_opt = cmd->add_option("--steps", a.steps, "training iterations");
  a.batch_opt = cmd->add_option("--batch", a.batch, "images per step");
  a.alpha_opt = cmd->add_option("--alpha", a.alpha, "pixel term weight");
  a.beta_opt = cmd->add_option("--beta", a.beta, "feature distillation weight");
  a.gamma_opt = cmd->add_option("--gamma", a.gamma, "selective distillation weight");
  a.ckpt_opt = cmd->add_option("--checkpoint-every", a.checkpoint_every, "checkpoint period in steps");
  a.eval_opt = cmd->add_option("--eval-every", a.eval_every, "evaluation period in steps");
  cmd->add_option("--set", a.sets, "extra key=value assignment (repeatable)");
}

RunSettings resolve_settings(const TrainArgs& a) {
  RunSettings s;
  if (!a.config.empty()) apply_config_file(s, a.config);
  if (a.seed_opt->count()) s.train.seed = a.seed;
  if (a.steps_opt->count()) s.train.max_iterations = a.steps;
  if (a.batch_opt->count()) s.train.batch_size = a.batch;
  if (a.alpha_opt->count()) s.train.alpha = a.alpha;
  if (a.beta_opt->count()) s.train.beta = a.beta;
  if (a.gamma_opt->count()) s.train.gamma = a.gamma;
  if (a.ckpt_opt->count()) s.checkpoint_every = a.checkpoint_every;
  if (a.eval_opt->count()) s.train.eval_every = a.eval_every;
  for (const std::string& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_option(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  s.train.validate();
  return s;
}

Dataset load_optional(const std::string& dir) {
  return dir.empty() ? Dataset{} : read_dataset(dir);
}

RunPaths paths_for(const TrainArgs& a, const fs::path& out) {
  return {a.data, a.eval_data, out};
}

struct GenArgs {
  SynthSpec spec;
  std::size_t size = 0;
  std::size_t count = 64;
  std::string out;
  CLI::Option* size_opt = nullptr;
  CLI::Option* height_opt = nullptr;
  CLI::Option* width_opt = nullptr;
};

int cmd_gen(GenArgs& g, std::ostream& out) {
  if (g.size_opt->count()) {
    if (!g.height_opt->count()) g.spec.height = g.size;
    if (!g.width_opt->count()) g.spec.width = g.size;
  }
  g.spec.validate();
  const Dataset data = generate_dataset(g.spec, g.count);
  write_dataset(g.out, data);
  out << "wrote " << data.size() << " records to " << g.out << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunSettings s = resolve_settings(a);
  const Dataset train = read_dataset(a.data);
  const Dataset eval = load_optional(a.eval_data);
  const MetricsRecord last = train_run(s, train, eval, paths_for(a, a.out));
  out << "steps " << last.step << "\n";
  out << "l_ce_c " << fmt9(last.l_ce_c) << "\n";
  out << "l_ce_v " << fmt9(last.l_ce_v) << "\n";
  if (!eval.empty()) {
    out << "miou_c " << fmt9(last.miou_c) << "\n";
    out << "miou_v " << fmt9(last.miou_v) << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, std::ostream& out,
             std::ostream& err) {
  if (!fs::is_regular_file(checkpoint)) {
    err << "error: checkpoint " << checkpoint << " not found\n";
    return kExitUsage;
  }
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const EvalResult r = evaluate_students(ckpt.cnn, ckpt.vit, ckpt.arch, read_dataset(data));
  out << "miou_c " << fmt9(r.miou_c) << "\n";
  out << "miou_v " << fmt9(r.miou_v) << "\n";
  return kExitOk;
}

std::string toggle_dir(const LossToggles& t) {
  return std::string("hfd") + (t.hfd ? "1" : "0") + "_region" + (t.region_bsd ? "1" : "0") +
         "_pixel" + (t.pixel_bsd ? "1" : "0");
}

int cmd_ablate(const TrainArgs& a, std::ostream& out) {
  const RunSettings base = resolve_settings(a);
  const Dataset train = read_dataset(a.data);
  const Dataset eval = read_dataset(a.eval_data);

  struct Row {
    LossToggles toggles;
    MetricsRecord last;
  };
  std::vector<Row> rows;
  for (unsigned bits = 0; bits < 8; ++bits) {
    RunSettings s = base;
    s.train.toggles = {(bits & 4u) != 0, (bits & 2u) != 0, (bits & 1u) != 0};
    const fs::path dir = fs::path(a.out) / toggle_dir(s.train.toggles);
    rows.push_back({s.train.toggles, train_run(s, train, eval, paths_for(a, dir))});
  }

  const double off_c = rows.front().last.miou_c;
  const double off_v = rows.front().last.miou_v;
  std::string table = "HFD\tR-BSD\tP-BSD\tmIoU_C\tmIoU_V\tDelta\n";
  for (const Row& r : rows) {
    const double delta = (r.last.miou_c - off_c) + (r.last.miou_v - off_v);
    table += std::string(r.toggles.hfd ? "on" : "off") + "\t" + (r.toggles.region_bsd ? "on" : "off") +
             "\t" + (r.toggles.pixel_bsd ? "on" : "off") + "\t" + fmt17(r.last.miou_c) + "\t" +
             fmt17(r.last.miou_v) + "\t" + fmt17(delta) + "\n";
  }
  std::ofstream(fs::path(a.out) / "ablation.tsv", std::ios::binary | std::ios::trunc) << table;
  out << table;
  return kExitOk;
}

int cmd_sweep(const TrainArgs& a, const std::string& param, const std::vector<double>& values,
              const std::vector<std::uint64_t>& seeds, std::ostream& out) {
  const RunSettings base = resolve_settings(a);
  const Dataset train = read_dataset(a.data);
  const Dataset eval = read_dataset(a.eval_data);

  std::string table = param + "\tseed\tmIoU_C\tmIoU_V\tsum\n";
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    for (const std::uint64_t seed : seeds) {
      RunSettings s = base;
      set_option(s, param, format_real(values[vi]));
      s.train.seed = seed;
      const fs::path dir =
          fs::path(a.out) / (param + "_" + std::to_string(vi) + "_seed" + std::to_string(seed));
      const MetricsRecord last = train_run(s, train, eval, paths_for(a, dir));
      table += format_real(values[vi]) + "\t" + std::to_string(seed) + "\t" + fmt17(last.miou_c) +
               "\t" + fmt17(last.miou_v) + "\t" + fmt17(last.miou_c + last.miou_v) + "\n";
    }
  }
  std::ofstream(fs::path(a.out) / "sweep.tsv", std::ios::binary | std::ios::trunc) << table;
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collaborative CNN/ViT distillation on synthetic segmentation data", "hkd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_tag());

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset directory");
  gen_cmd->add_option("--classes", gen.spec.num_classes, "number of classes");
  gen.size_opt = gen_cmd->add_option("--size", gen.size, "image height and width");
  gen.height_opt = gen_cmd->add_option("--height", gen.spec.height, "image height");
  gen.width_opt = gen_cmd->add_option("--width", gen.spec.width, "image width");
  gen_cmd->add_option("--n", gen.count, "number of samples");
  gen_cmd->add_option("--seed", gen.spec.seed, "generation seed");
  gen_cmd->add_option("--noise", gen.spec.noise, "pixel noise amplitude");
  gen_cmd->add_option("--min-shapes", gen.spec.min_shapes, "fewest shapes per image");
  gen_cmd->add_option("--max-shapes", gen.spec.max_shapes, "most shapes per image");
  gen_cmd->add_option("--jitter", gen.spec.color_jitter, "per-shape color jitter");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train both students collaboratively");
  add_train_options(train_cmd, train, false);
  bool no_hfd = false, no_region = false, no_pixel = false;
  train_cmd->add_flag("--no-hfd", no_hfd, "disable feature distillation");
  train_cmd->add_flag("--no-region", no_region, "disable region-level selective distillation");
  train_cmd->add_flag("--no-pixel", no_pixel, "disable pixel-level selective distillation");

  std::string eval_ckpt, eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();

  TrainArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "run the 8-row toggle grid");
  add_train_options(ablate_cmd, ablate, true);

  TrainArgs sweep;
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::vector<std::uint64_t> sweep_seeds;
  auto* sweep_cmd = app.add_subcommand("sweep", "vary one loss weight over a list");
  add_train_options(sweep_cmd, sweep, true);
  sweep_cmd->add_option("--param", sweep_param, "alpha, beta or gamma")
      ->required()
      ->check(CLI::IsMember({"alpha", "beta", "gamma"}));
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds")->required()->delimiter(',');

  std::vector<std::string> argv_store{"hkd"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (train_cmd->parsed()) {
      if (no_hfd) train.sets.push_back("hfd=false");
      if (no_region) train.sets.push_back("region_bsd=false");
      if (no_pixel) train.sets.push_back("pixel_bsd=false");
      return cmd_train(train, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, out, err);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, sweep_param, sweep_values, sweep_seeds, out);
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace hkd::cli
