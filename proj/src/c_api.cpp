#include "mrtumor/mrtumor.h"

#include <cstdio>
#include <fstream>
#include <new>
#include <string>

#include "mrtumor/error.hpp"
#include "mrtumor/forest.hpp"
#include "mrtumor/nifti.hpp"
#include "mrtumor/pipeline.hpp"
#include "mrtumor/preprocess.hpp"
#include "mrtumor/svm.hpp"

struct mrt_volume {
  mrtumor::Volume v;
};
struct mrt_config {
  mrtumor::PipelineConfig cfg;
  std::string json;
};
struct mrt_svm {
  mrtumor::LinearModel m;
};
struct mrt_forest {
  mrtumor::Forest f;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mrt_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MRT_OK;
  } catch (const mrtumor::Error& e) {
    g_last_error = e.what();
    return static_cast<mrt_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MRT_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MRT_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (!p) mrtumor::fail(mrtumor::ErrorCode::kInvalidArgument, std::string(name) + " is null");
}

nlohmann::json read_json_file(const char* path) {
  std::ifstream in(path);
  if (!in) mrtumor::fail(mrtumor::ErrorCode::kConfigInvalid, std::string("config file not found: ") + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    mrtumor::fail(mrtumor::ErrorCode::kConfigInvalid, std::string(path) + ": " + e.what());
  }
}

}  // namespace

extern "C" {

const char* mrt_version(void) { return "1.0.0"; }

const char* mrt_status_name(mrt_status s) {
  if (s == MRT_OK) return "Ok";
  if (s == MRT_INTERNAL) return "Internal";
  if (s < MRT_BAD_MAGIC || s > MRT_BAD_MODEL) return "Unknown";
  return mrtumor::error_code_name(static_cast<mrtumor::ErrorCode>(s));
}

const char* mrt_last_error(void) { return g_last_error.c_str(); }

void mrt_set_log_callback(mrt_log_fn fn, void* user) {
  if (!fn) {
    mrtumor::set_log_sink([](std::string_view line) {
      std::fprintf(stderr, "%.*s\n", static_cast<int>(line.size()), line.data());
    });
    return;
  }
  mrtumor::set_log_sink([fn, user](std::string_view line) { fn(std::string(line).c_str(), user); });
}

mrt_status mrt_volume_create(int64_t nx, int64_t ny, int64_t nz, const float pixdim[3], mrt_volume** out) {
  return guarded([&] {
    need(out, "out");
    if (nx < 1 || ny < 1 || nz < 1) mrtumor::fail(mrtumor::ErrorCode::kBadDims, "dimensions must be >= 1");
    std::array<float, 3> pd{1.0f, 1.0f, 1.0f};
    if (pixdim) pd = {pixdim[0], pixdim[1], pixdim[2]};
    *out = new mrt_volume{mrtumor::Volume(nx, ny, nz, pd)};
  });
}

mrt_status mrt_volume_read(const char* path, mrt_volume** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mrt_volume{mrtumor::read_volume(path)};
  });
}

mrt_status mrt_volume_parse(const uint8_t* bytes, size_t size, mrt_volume** out) {
  return guarded([&] {
    need(out, "out");
    if (size > 0) need(bytes, "bytes");
    *out = new mrt_volume{mrtumor::parse_volume({bytes, size})};
  });
}

mrt_status mrt_volume_write(const mrt_volume* v, const char* path) {
  return guarded([&] {
    need(v, "volume");
    need(path, "path");
    mrtumor::write_volume(v->v, path);
  });
}

mrt_status mrt_volume_dims(const mrt_volume* v, int64_t dims[3]) {
  return guarded([&] {
    need(v, "volume");
    need(dims, "dims");
    for (int i = 0; i < 3; ++i) dims[i] = v->v.header.dims[i];
  });
}

float* mrt_volume_data(mrt_volume* v) { return v ? v->v.data.data() : nullptr; }

void mrt_volume_free(mrt_volume* v) { delete v; }

mrt_status mrt_ncc(const double* f, const double* g, size_t n, double* out) {
  return guarded([&] {
    need(f, "f");
    need(g, "g");
    need(out, "out");
    *out = mrtumor::ncc({f, n}, {g, n});
  });
}

mrt_status mrt_config_create(const char* json, mrt_config** out) {
  return guarded([&] {
    need(out, "out");
    nlohmann::json j = nlohmann::json::object();
    if (json && *json) {
      try {
        j = nlohmann::json::parse(json);
      } catch (const nlohmann::json::exception& e) {
        mrtumor::fail(mrtumor::ErrorCode::kConfigInvalid, std::string("config: ") + e.what());
      }
    }
    *out = new mrt_config{mrtumor::pipeline_config_from_json(j), {}};
  });
}

mrt_status mrt_config_load(const char* path, mrt_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mrt_config{mrtumor::pipeline_config_from_json(read_json_file(path)), {}};
  });
}

mrt_status mrt_config_set_seed(mrt_config* c, uint64_t seed) {
  return guarded([&] {
    need(c, "config");
    c->cfg.seed = seed;
  });
}

mrt_status mrt_config_set_workers(mrt_config* c, int workers) {
  return guarded([&] {
    need(c, "config");
    if (workers < 1) mrtumor::fail(mrtumor::ErrorCode::kConfigInvalid, "workers: must be >= 1");
    c->cfg.workers = workers;
  });
}

mrt_status mrt_config_set_root(mrt_config* c, const char* root) {
  return guarded([&] {
    need(c, "config");
    need(root, "root");
    const std::filesystem::path r(root);
    c->cfg.data_dir = r / "data";
    c->cfg.model_dir = r / "models";
    c->cfg.output_dir = r / "out";
  });
}

mrt_status mrt_config_set_output_dir(mrt_config* c, const char* dir) {
  return guarded([&] {
    need(c, "config");
    need(dir, "dir");
    c->cfg.output_dir = dir;
  });
}

const char* mrt_config_json(mrt_config* c) {
  if (!c) return nullptr;
  c->json = mrtumor::to_json(c->cfg).dump(2);
  return c->json.c_str();
}

void mrt_config_free(mrt_config* c) { delete c; }

mrt_status mrt_cmd_phantom(const mrt_config* c) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_phantom(c->cfg);
  });
}

mrt_status mrt_cmd_train(const mrt_config* c) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_train(c->cfg);
  });
}

mrt_status mrt_cmd_classify(const mrt_config* c, const char* patients) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_classify(c->cfg, mrtumor::patient_selection_from_string(patients ? patients : "test"));
  });
}

mrt_status mrt_cmd_segment(const mrt_config* c, const char* patients) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_segment(c->cfg, mrtumor::patient_selection_from_string(patients ? patients : "test"));
  });
}

mrt_status mrt_cmd_evaluate(const mrt_config* c) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_evaluate(c->cfg);
  });
}

mrt_status mrt_cmd_pipeline(const mrt_config* c) {
  return guarded([&] {
    need(c, "config");
    mrtumor::cmd_pipeline(c->cfg);
  });
}

mrt_status mrt_cmd_sweep(const mrt_config* c, double* threshold, int* patch_min_count) {
  return guarded([&] {
    need(c, "config");
    const auto r = mrtumor::cmd_sweep(c->cfg);
    if (threshold) *threshold = r.threshold;
    if (patch_min_count) *patch_min_count = r.patch_min_count;
  });
}

mrt_status mrt_svm_load(const char* path, mrt_svm** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path);
    if (!in) mrtumor::fail(mrtumor::ErrorCode::kMissingModel, std::string("SVM model not found: ") + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      mrtumor::fail(mrtumor::ErrorCode::kBadModel, std::string(path) + ": " + e.what());
    }
    *out = new mrt_svm{mrtumor::svm_from_json(j)};
  });
}

mrt_status mrt_svm_decision(const mrt_svm* m, const double* x, size_t n, double* out) {
  return guarded([&] {
    need(m, "model");
    need(x, "x");
    need(out, "out");
    if (n != m->m.w.size())
      mrtumor::fail(mrtumor::ErrorCode::kDimensionMismatch, "feature vector length does not match the model");
    *out = mrtumor::decision_value(m->m, {x, n});
  });
}

void mrt_svm_free(mrt_svm* m) { delete m; }

mrt_status mrt_forest_load(const char* path, mrt_forest** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path);
    if (!in) mrtumor::fail(mrtumor::ErrorCode::kMissingModel, std::string("forest model not found: ") + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      mrtumor::fail(mrtumor::ErrorCode::kBadModel, std::string(path) + ": " + e.what());
    }
    *out = new mrt_forest{mrtumor::forest_from_json(j)};
  });
}

mrt_status mrt_forest_predict(const mrt_forest* f, const double* x, size_t n, int* cls, int* votes) {
  return guarded([&] {
    need(f, "forest");
    need(x, "x");
    if (n != static_cast<size_t>(f->f.dimension))
      mrtumor::fail(mrtumor::ErrorCode::kDimensionMismatch, "feature vector length does not match the forest");
    const int v = mrtumor::tumor_votes(f->f, {x, n});
    if (votes) *votes = v;
    if (cls) *cls = mrtumor::predict_forest(f->f, {x, n});
  });
}

void mrt_forest_free(mrt_forest* f) { delete f; }

}  // extern "C"
