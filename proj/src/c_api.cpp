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

#include "moefusion/moefusion.h"

#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "moefusion/audit.hpp"
#include "moefusion/checkpoint.hpp"
#include "moefusion/error.hpp"
#include "moefusion/evaluation.hpp"
#include "moefusion/synth.hpp"
#include "moefusion/training.hpp"

struct mf_config {
  moefusion::FusionConfig cfg;
};

struct mf_model {
  std::unique_ptr<moefusion::FusionModel> model;
  std::uint64_t step = 0;
};

namespace {

using namespace moefusion;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

mf_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return MF_ERR_INVALID_ARGUMENT;
    case ErrorCode::kShape: return MF_ERR_SHAPE;
    case ErrorCode::kIo: return MF_ERR_IO;
    case ErrorCode::kFormat: return MF_ERR_FORMAT;
    case ErrorCode::kResolution: return MF_ERR_RESOLUTION;
    case ErrorCode::kNumeric: return MF_ERR_NUMERIC;
    case ErrorCode::kInternal: return MF_ERR_INTERNAL;
  }
  return MF_ERR_INTERNAL;
}

mf_status set_error(mf_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
mf_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MF_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MF_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

mf_status copy_out(const std::string& text, char* buf, std::size_t cap, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf) return MF_OK;
  if (cap < text.size() + 1) return set_error(MF_ERR_INVALID_ARGUMENT, "output buffer too small");
  std::copy(text.begin(), text.end(), buf);
  buf[text.size()] = '\0';
  return MF_OK;
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory '" + dir + "': " + ec.message());
}

std::vector<AnnotatedPair> training_data(const FusionConfig& cfg, const char* manifest) {
  if (manifest) return read_corpus(manifest);
  std::vector<AnnotatedPair> out;
  for (auto& s : synth_corpus(cfg.train_pairs, cfg.seed, cfg.height, cfg.width))
    out.push_back(std::move(s.pair));
  return out;
}

void emit(mf_message_fn fn, void* user, const std::string& line) {
  if (fn) fn(line.c_str(), user);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

extern "C" {

const char* mf_version(void) { return "0.1.0"; }

const char* mf_status_name(mf_status status) {
  switch (status) {
    case MF_OK: return "ok";
    case MF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MF_ERR_SHAPE: return "shape mismatch";
    case MF_ERR_IO: return "i/o error";
    case MF_ERR_FORMAT: return "format error";
    case MF_ERR_RESOLUTION: return "resolution mismatch";
    case MF_ERR_NUMERIC: return "numeric error";
    case MF_ERR_INTERNAL: return "internal error";
    case MF_ERR_CHECK_FAILED: return "check failed";
  }
  return "unknown status";
}

const char* mf_last_error(void) { return g_last_error.c_str(); }

mf_status mf_config_create(mf_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new mf_config{};
    return MF_OK;
  });
}

void mf_config_destroy(mf_config* config) { delete config; }

mf_status mf_config_merge_file(mf_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    FusionConfig next = config->cfg;
    next.merge_file(path);
    config->cfg = next;
    return MF_OK;
  });
}

mf_status mf_config_set(mf_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->cfg.set(key, value);
    return MF_OK;
  });
}

mf_status mf_config_get(const mf_config* config, const char* key, char* buf, size_t cap,
                        size_t* needed) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    return copy_out(config->cfg.get(key), buf, cap, needed);
  });
}

mf_status mf_config_to_text(const mf_config* config, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(config, "config");
    return copy_out(config->cfg.to_text(), buf, cap, needed);
  });
}

mf_status mf_model_create(const mf_config* config, mf_model** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    auto m = std::make_unique<mf_model>();
    m->model = std::make_unique<FusionModel>(config->cfg);
    *out = m.release();
    return MF_OK;
  });
}

mf_status mf_model_load(const char* checkpoint_path, mf_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    LoadedModel loaded = load_checkpoint(checkpoint_path);
    *out = new mf_model{std::move(loaded.model), loaded.step};
    return MF_OK;
  });
}

mf_status mf_model_save(const mf_model* model, const char* checkpoint_path) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint_path, "checkpoint_path");
    save_checkpoint(checkpoint_path, *model->model, model->step);
    return MF_OK;
  });
}

void mf_model_destroy(mf_model* model) { delete model; }

mf_status mf_model_config(const mf_model* model, mf_config** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = new mf_config{model->model->config()};
    return MF_OK;
  });
}

uint64_t mf_model_step(const mf_model* model) { return model ? model->step : 0; }

mf_status mf_model_set_schedule(mf_model* model, size_t epochs, size_t steps) {
  return guarded([&] {
    need(model, "model");
    model->model->set_schedule(epochs, steps);
    return MF_OK;
  });
}

mf_status mf_synth(const mf_config* config, const char* out_dir, size_t count) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    require(count > 0, ErrorCode::kInvalidArgument, "synth: count must be positive");
    const FusionConfig& c = config->cfg;
    write_corpus(out_dir, synth_corpus(count, c.seed, c.height, c.width));
    return MF_OK;
  });
}

mf_status mf_train(mf_model* model, const char* pairs_manifest, const char* out_dir,
                   mf_message_fn progress, void* user) {
  return guarded([&] {
    need(model, "model");
    need(out_dir, "out_dir");
    FusionModel& m = *model->model;
    const FusionConfig& cfg = m.config();
    const auto data = training_data(cfg, pairs_manifest);
    ensure_dir(out_dir);

    std::vector<StepRecord> steps;
    TrainOptions options;
    options.on_step = [&](const StepRecord& r) {
      steps.push_back(r);
      emit(progress, user, "step " + std::to_string(r.step) + " total " + fmt(r.total) +
                               " pixel_fg " + fmt(r.pixel_fg) + " pixel_bg " + fmt(r.pixel_bg) +
                               " grad " + fmt(r.grad));
    };
    const fs::path dir(out_dir);
    TrainResult result;
    try {
      result = train(m, data, model->step, options);
    } catch (const Error&) {
      // Keep the log of the steps that completed before the failure.
      write_text((dir / "train_log.csv").string(), format_train_log(cfg, steps));
      throw;
    }
    model->step = result.final_step;
    save_checkpoint((dir / "checkpoint.bin").string(), m, model->step);
    write_text((dir / "train_log.csv").string(), format_train_log(cfg, result.steps));
    write_text((dir / "importance.csv").string(), format_importance_log(cfg, result.epochs));
    return MF_OK;
  });
}

mf_status mf_fuse_files(mf_model* model, const char* visible_path, const char* infrared_path,
                        const char* out_path, int color) {
  return guarded([&] {
    need(model, "model");
    need(visible_path, "visible_path");
    need(infrared_path, "infrared_path");
    need(out_path, "out_path");
    FusionModel& m = *model->model;
    const FusionConfig& cfg = m.config();
    Tensor visible = to_tensor(read_pnm(visible_path));
    const Tensor infrared = to_tensor(read_pnm(infrared_path));
    require(infrared.shape().c == 1, ErrorCode::kFormat,
            std::string(infrared_path) + ": infrared image must be a graymap (P5)");
    const Shape vs = visible.shape(), is = infrared.shape();
    require(vs.h == is.h && vs.w == is.w, ErrorCode::kResolution,
            "visible is " + std::to_string(vs.w) + "x" + std::to_string(vs.h) + " but infrared is " +
                std::to_string(is.w) + "x" + std::to_string(is.h));
    require(vs.h == cfg.height && vs.w == cfg.width, ErrorCode::kResolution,
            "input resolution " + std::to_string(vs.h) + "x" + std::to_string(vs.w) +
                " does not match the checkpoint's configured " + std::to_string(cfg.height) + "x" +
                std::to_string(cfg.width));
    const Tensor fused = fuse_image(m, visible, infrared);
    Tensor image = fused;
    if (color) {
      if (vs.c == 1) {
        Tensor rgb({1, 3, vs.h, vs.w});
        for (std::size_t c = 0; c < 3; ++c)
          std::copy_n(visible.data(), visible.size(), rgb.data() + c * visible.size());
        visible = std::move(rgb);
      }
      image = colorize_fused(fused, visible);
    }
    write_pnm(out_path, from_tensor(image),
              "moefusion fused step=" + std::to_string(model->step) + " " + cfg.summary());
    return MF_OK;
  });
}

mf_status mf_eval(const char* manifest_path, const char* out_csv, int regions) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    need(out_csv, "out_csv");
    const auto rows = evaluate_manifest(manifest_path, regions != 0);
    const std::string header = "moefusion eval manifest=" +
                               fs::path(manifest_path).filename().string() +
                               " regions=" + (regions ? "on" : "off");
    write_text(out_csv, format_metric_csv(rows, header));
    return MF_OK;
  });
}

mf_status mf_gradcheck(const char* module, uint64_t seed, double* worst_rel_error,
                       mf_message_fn report, void* user) {
  return guarded([&] {
    need(module, "module");
    const AuditReport rep = run_audit(module, seed);
    for (const auto& c : rep.cases) {
      char line[256];
      std::snprintf(line, sizeof line, "%-26s rel_error %.3e threshold %.0e probes %zu skipped %zu %s",
                    c.name.c_str(), c.rel_error, c.threshold, c.probes, c.skipped,
                    c.passed() ? "PASS" : "FAIL");
      emit(report, user, line);
    }
    const AuditCase& worst = rep.worst();
    if (worst_rel_error) *worst_rel_error = worst.rel_error;
    if (!rep.passed()) {
      std::string failed;
      for (const auto& c : rep.cases)
        if (!c.passed()) failed += (failed.empty() ? "" : ", ") + c.name;
      return set_error(MF_ERR_CHECK_FAILED, "gradcheck " + rep.module + ": failing cases: " + failed);
    }
    return MF_OK;
  });
}

mf_status mf_sweep(const mf_config* config, const char* grid, const char* out_csv,
                   mf_message_fn warn, void* user) {
  return guarded([&] {
    need(config, "config");
    need(grid, "grid");
    need(out_csv, "out_csv");
    const SweepGrid parsed = parse_sweep_grid(grid);
    for (const auto& w : parsed.warnings) emit(warn, user, "warning: " + w);
    require(!parsed.settings.empty(), ErrorCode::kInvalidArgument,
            "sweep: no valid grid entries in '" + std::string(grid) + "'");
    std::vector<SweepRow> rows;
    for (const auto& s : parsed.settings) {
      emit(warn, user, "training " + s.label);
      rows.push_back(run_sweep_setting(config->cfg, s));
    }
    const fs::path parent = fs::path(out_csv).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    write_text(out_csv, format_sweep_csv(config->cfg, rows));
    return MF_OK;
  });
}

}  // extern "C"
