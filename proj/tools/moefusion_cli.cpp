/* Copyright 2026 The moefusion Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moefusion/moefusion.h"

namespace {

enum Exit : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitResolution = 5,
  kExitNumeric = 6,
  kExitInternal = 7,
};

int exit_code(mf_status s) {
  switch (s) {
    case MF_OK: return kExitOk;
    case MF_ERR_CHECK_FAILED: return kExitCheckFailed;
    case MF_ERR_INVALID_ARGUMENT: return kExitUsage;
    case MF_ERR_IO: return kExitIo;
    case MF_ERR_FORMAT:
    case MF_ERR_SHAPE: return kExitFormat;
    case MF_ERR_RESOLUTION: return kExitResolution;
    case MF_ERR_NUMERIC: return kExitNumeric;
    case MF_ERR_INTERNAL: return kExitInternal;
  }
  return kExitInternal;
}

int report(mf_status s, const char* what) {
  if (s != MF_OK) std::fprintf(stderr, "moefusion %s: %s: %s\n", what, mf_status_name(s), mf_last_error());
  return exit_code(s);
}

struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file of key = value lines")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "RNG seed (overrides the config file)");
    cmd->add_option("--set", sets, "Override one config key, key=value (repeatable)");
  }
};

struct ConfigHandle {
  mf_config* ptr = nullptr;
  ~ConfigHandle() { mf_config_destroy(ptr); }
};

struct ModelHandle {
  mf_model* ptr = nullptr;
  ~ModelHandle() { mf_model_destroy(ptr); }
};

mf_status apply_sets(mf_config* cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "moefusion: --set expects key=value, got '%s'\n", kv.c_str());
      return MF_ERR_INVALID_ARGUMENT;
    }
    if (mf_status s = mf_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != MF_OK)
      return s;
  }
  return MF_OK;
}

mf_status build_config(const ConfigFlags& flags, ConfigHandle& out) {
  if (mf_status s = mf_config_create(&out.ptr); s != MF_OK) return s;
  if (!flags.config_path.empty())
    if (mf_status s = mf_config_merge_file(out.ptr, flags.config_path.c_str()); s != MF_OK) return s;
  if (flags.seed)
    if (mf_status s = mf_config_set(out.ptr, "seed", std::to_string(*flags.seed).c_str()); s != MF_OK)
      return s;
  return apply_sets(out.ptr, flags.sets);
}

std::string config_value(const mf_config* cfg, const char* key) {
  std::size_t needed = 0;
  mf_config_get(cfg, key, nullptr, 0, &needed);
  std::string out(needed, '\0');
  mf_config_get(cfg, key, out.data(), out.size(), &needed);
  out.resize(needed - 1);
  return out;
}

void print_line(const char* line, void*) { std::printf("%s\n", line); }
void print_err(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

struct ProgressState {
  unsigned every;
  unsigned seen = 0;
};

void print_progress(const char* line, void* user) {
  auto* st = static_cast<ProgressState*>(user);
  if (st->every != 0 && st->seen++ % st->every == 0) std::printf("%s\n", line);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moefusion: infrared-visible image fusion with mixtures of experts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mf_version()));

  // synth
  ConfigFlags synth_cfg;
  std::string synth_out;
  std::size_t synth_count = 8;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus");
  synth_cfg.attach(synth);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of scenes")->check(CLI::PositiveNumber);

  // train
  ConfigFlags train_cfg;
  std::string train_out, train_data, train_resume;
  unsigned log_every = 10;
  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.bin, train_log.csv, importance.csv");
  train_cfg.attach(train);
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--data", train_data, "pairs.txt manifest (default: seeded synthetic corpus)")
      ->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--log-every", log_every, "Print every Nth step (0 = quiet)");

  // fuse
  std::string fuse_ckpt, fuse_vis, fuse_ir, fuse_out;
  bool fuse_color = false;
  auto* fuse = app.add_subcommand("fuse", "Fuse one visible/infrared pair");
  fuse->add_option("--checkpoint", fuse_ckpt, "Model checkpoint")->required();
  fuse->add_option("--visible", fuse_vis, "Visible image (P5/P6)")->required();
  fuse->add_option("--infrared", fuse_ir, "Infrared image (P5)")->required();
  fuse->add_option("--out", fuse_out, "Output image path")->required();
  fuse->add_flag("--color", fuse_color, "Write a colour pixmap using the visible chroma");

  // eval
  std::string eval_manifest, eval_out;
  bool eval_regions = false;
  auto* eval = app.add_subcommand("eval", "Metric report over a manifest of fused triples");
  eval->add_option("--manifest", eval_manifest, "Lines of 'visible infrared fused [boxes]'")->required();
  eval->add_option("--out", eval_out, "Output CSV path")->required();
  eval->add_flag("--regions", eval_regions, "Add foreground/background rows (needs boxes)");

  // gradcheck
  std::string gc_module;
  std::uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gradcheck->add_option("--module", gc_module, "autodiff-core | gating | fusion-net | losses")->required();
  gradcheck->add_option("--seed", gc_seed, "Audit seed");

  // sweep
  ConfigFlags sweep_cfg;
  std::string sweep_out, sweep_grid = "E2K2,E4K2,E4K1";
  auto* sweep = app.add_subcommand("sweep", "Train and score a grid of expert settings");
  sweep_cfg.attach(sweep);
  sweep->add_option("--grid", sweep_grid, "Comma-separated E<N>K<K> entries")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Output directory (writes sweep.csv)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*synth) {
    ConfigHandle cfg;
    if (mf_status s = build_config(synth_cfg, cfg); s != MF_OK) return report(s, "synth");
    if (mf_status s = mf_synth(cfg.ptr, synth_out.c_str(), synth_count); s != MF_OK)
      return report(s, "synth");
    std::printf("wrote %zu scenes to %s\n", synth_count, synth_out.c_str());
    return kExitOk;
  }

  if (*train) {
    ModelHandle model;
    if (!train_resume.empty()) {
      if (!train_cfg.config_path.empty() || train_cfg.seed) {
        std::fprintf(stderr, "moefusion train: --resume takes its config from the checkpoint; only --set steps=/epochs= may change\n");
        return kExitUsage;
      }
      if (mf_status s = mf_model_load(train_resume.c_str(), &model.ptr); s != MF_OK) return report(s, "train");
      ConfigHandle cfg;
      if (mf_status s = mf_model_config(model.ptr, &cfg.ptr); s != MF_OK) return report(s, "train");
      for (const auto& kv : train_cfg.sets) {
        const std::string key = kv.substr(0, kv.find('='));
        if (key != "steps" && key != "epochs") {
          std::fprintf(stderr, "moefusion train: cannot change '%s' when resuming\n", key.c_str());
          return kExitUsage;
        }
      }
      if (mf_status s = apply_sets(cfg.ptr, train_cfg.sets); s != MF_OK) return report(s, "train");
      const auto epochs = std::stoull(config_value(cfg.ptr, "epochs"));
      const auto steps = std::stoull(config_value(cfg.ptr, "steps"));
      if (mf_status s = mf_model_set_schedule(model.ptr, epochs, steps); s != MF_OK) return report(s, "train");
      std::printf("resuming from step %llu\n", static_cast<unsigned long long>(mf_model_step(model.ptr)));
    } else {
      ConfigHandle cfg;
      if (mf_status s = build_config(train_cfg, cfg); s != MF_OK) return report(s, "train");
      if (mf_status s = mf_model_create(cfg.ptr, &model.ptr); s != MF_OK) return report(s, "train");
    }
    ProgressState progress{log_every};
    const mf_status s = mf_train(model.ptr, train_data.empty() ? nullptr : train_data.c_str(),
                                 train_out.c_str(), print_progress, &progress);
    if (s != MF_OK) return report(s, "train");
    std::printf("trained to step %llu; outputs in %s\n",
                static_cast<unsigned long long>(mf_model_step(model.ptr)), train_out.c_str());
    return kExitOk;
  }

  if (*fuse) {
    ModelHandle model;
    if (mf_status s = mf_model_load(fuse_ckpt.c_str(), &model.ptr); s != MF_OK) return report(s, "fuse");
    const mf_status s = mf_fuse_files(model.ptr, fuse_vis.c_str(), fuse_ir.c_str(), fuse_out.c_str(),
                                      fuse_color ? 1 : 0);
    return report(s, "fuse");
  }

  if (*eval) return report(mf_eval(eval_manifest.c_str(), eval_out.c_str(), eval_regions ? 1 : 0), "eval");

  if (*gradcheck) {
    double worst = 0.0;
    const mf_status s = mf_gradcheck(gc_module.c_str(), gc_seed, &worst, print_line, nullptr);
    if (s == MF_OK || s == MF_ERR_CHECK_FAILED)
      std::printf("worst relative error: %.3e\n", worst);
    return report(s, "gradcheck");
  }

  if (*sweep) {
    ConfigHandle cfg;
    if (mf_status s = build_config(sweep_cfg, cfg); s != MF_OK) return report(s, "sweep");
    const std::string csv = (std::filesystem::path(sweep_out) / "sweep.csv").string();
    const mf_status s = mf_sweep(cfg.ptr, sweep_grid.c_str(), csv.c_str(), print_err, nullptr);
    if (s == MF_OK) std::printf("wrote %s\n", csv.c_str());
    return report(s, "sweep");
  }
  return kExitUsage;
}
