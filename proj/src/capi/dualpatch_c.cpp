#include "dualpatch/dualpatch.h"

#include <cstring>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include "dualpatch/config.hpp"
#include "dualpatch/error.hpp"
#include "dualpatch/fixtures.hpp"
#include "dualpatch/geometry.hpp"
#include "dualpatch/harness.hpp"
#include "dualpatch/log.hpp"
#include "dualpatch/parallel.hpp"
#include "dualpatch/pipeline.hpp"

using namespace dualpatch;

struct dp_shape {
  PolygonShape shape;
};
struct dp_config {
  RunConfig config;
};
struct dp_dataset {
  DatasetStore store;
};
struct dp_run {
  std::unique_ptr<Pipeline> pipeline;
};

namespace {

thread_local std::string last_error;

dp_status status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return DP_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return DP_ERR_CONFIG;
    case ErrorKind::Io: return DP_ERR_IO;
    case ErrorKind::Detector: return DP_ERR_DETECTOR;
    case ErrorKind::Numeric: return DP_ERR_NUMERIC;
    case ErrorKind::State: return DP_ERR_STATE;
  }
  return DP_ERR_INTERNAL;
}

template <typename F>
dp_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return DP_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return DP_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return DP_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

void copy_out(const std::string& s, char* buffer, std::size_t size) {
  if (buffer == nullptr) return;
  require(size > s.size(), "output buffer too small");
  std::memcpy(buffer, s.c_str(), s.size() + 1);
}

std::mutex log_mutex;
dp_log_fn log_fn = nullptr;
void* log_user = nullptr;

}  // namespace

extern "C" {

const char* dp_version(void) { return "0.1.0"; }

const char* dp_status_string(dp_status status) {
  switch (status) {
    case DP_OK: return "ok";
    case DP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DP_ERR_CONFIG: return "config error";
    case DP_ERR_IO: return "io error";
    case DP_ERR_DETECTOR: return "detector error";
    case DP_ERR_NUMERIC: return "numeric error";
    case DP_ERR_STATE: return "state error";
    case DP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dp_last_error(void) { return last_error.c_str(); }

void dp_set_log_callback(dp_log_fn fn, void* user) {
  {
    std::lock_guard lock(log_mutex);
    log_fn = fn;
    log_user = user;
  }
  if (fn == nullptr) {
    set_log_sink(nullptr);
    return;
  }
  set_log_sink([](LogLevel level, const std::string& msg) {
    std::lock_guard lock(log_mutex);
    if (log_fn) log_fn(static_cast<dp_log_level>(level), msg.c_str(), log_user);
  });
}

dp_status dp_shape_create(const double* radii, const double* angles, size_t count, dp_shape** out) {
  return guarded([&] {
    require(out != nullptr && (count == 0 || (radii != nullptr && angles != nullptr)), "null argument");
    std::vector<PolarVertex> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = {radii[i], angles[i]};
    *out = new dp_shape{PolygonShape(std::move(v))};
  });
}

dp_status dp_shape_regular(size_t vertices, double area, dp_shape** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = new dp_shape{PolygonShape::regular(vertices, area)};
  });
}

dp_status dp_shape_load(const char* path, dp_shape** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new dp_shape{load_shape(path)};
  });
}

dp_status dp_shape_save(const dp_shape* shape, const char* path) {
  return guarded([&] {
    require(shape != nullptr && path != nullptr, "null argument");
    save_shape(shape->shape, path);
  });
}

size_t dp_shape_vertex_count(const dp_shape* shape) { return shape ? shape->shape.size() : 0; }

dp_status dp_shape_vertex(const dp_shape* shape, size_t index, double* radius, double* angle) {
  return guarded([&] {
    require(shape != nullptr, "null argument");
    require(index < shape->shape.size(), "vertex index out of range");
    const auto& v = shape->shape.vertices()[index];
    if (radius) *radius = v.radius;
    if (angle) *angle = v.angle;
  });
}

double dp_shape_area(const dp_shape* shape) { return shape ? polygon_area(shape->shape) : 0.0; }

dp_status dp_shape_normalize_area(const dp_shape* shape, double target, dp_shape** out) {
  return guarded([&] {
    require(shape != nullptr && out != nullptr, "null argument");
    *out = new dp_shape{normalize_area(shape->shape, target)};
  });
}

dp_status dp_shape_rasterize(const dp_shape* shape, double x, double y, double w, double h,
                             int width, int height, uint8_t* mask) {
  return guarded([&] {
    require(shape != nullptr && mask != nullptr, "null argument");
    const BitMask m = rasterize(shape->shape, Rect{x, y, w, h}, width, height);
    for (int yy = 0; yy < height; ++yy) {
      for (int xx = 0; xx < width; ++xx) {
        mask[static_cast<size_t>(yy) * static_cast<size_t>(width) + static_cast<size_t>(xx)] =
            m.get(xx, yy) ? 1 : 0;
      }
    }
  });
}

void dp_shape_free(dp_shape* shape) { delete shape; }

dp_status dp_config_load(const char* path, dp_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new dp_config{load_run_config(path)};
  });
}

dp_status dp_config_parse(const char* json, const char* base_dir, dp_config** out) {
  return guarded([&] {
    require(json != nullptr && out != nullptr, "null argument");
    const std::filesystem::path base =
        base_dir ? std::filesystem::path(base_dir) : std::filesystem::current_path();
    *out = new dp_config{parse_run_config(std::string(json), base)};
  });
}

dp_status dp_config_override_seed(dp_config* config, uint64_t seed) {
  return guarded([&] {
    require(config != nullptr, "null argument");
    override_seed(config->config, seed);
  });
}

dp_status dp_config_hash(const dp_config* config, char* buffer, size_t size) {
  return guarded([&] {
    require(config != nullptr && buffer != nullptr, "null argument");
    copy_out(config_hash(config->config), buffer, size);
  });
}

void dp_config_free(dp_config* config) { delete config; }

dp_status dp_generate_fixtures(const char* out_dir, int frames, uint64_t seed, char* manifest_out,
                               size_t manifest_size) {
  return guarded([&] {
    require(out_dir != nullptr, "null argument");
    FixtureOptions opts;
    opts.frames = frames;
    opts.seed = seed;
    const auto manifest = generate_fixtures(out_dir, opts);
    copy_out(manifest.string(), manifest_out, manifest_size);
  });
}

dp_status dp_dataset_load(const char* manifest, dp_dataset** out) {
  return guarded([&] {
    require(manifest != nullptr && out != nullptr, "null argument");
    *out = new dp_dataset{load_dataset(manifest)};
  });
}

size_t dp_dataset_frame_count(const dp_dataset* dataset) {
  return dataset ? dataset->store.frames.size() : 0;
}

size_t dp_dataset_person_count(const dp_dataset* dataset) {
  if (!dataset) return 0;
  size_t n = 0;
  for (const auto& f : dataset->store.frames) n += f.persons.size();
  return n;
}

void dp_dataset_free(dp_dataset* dataset) { delete dataset; }

dp_status dp_run_open(const dp_config* config, const char* out_dir, int workers, int keep_going,
                      dp_run** out) {
  return guarded([&] {
    require(config != nullptr && out != nullptr, "null argument");
    require(workers >= 0, "workers must be >= 0");
    RunOptions opts;
    if (out_dir) opts.out_dir = out_dir;
    opts.workers = workers == 0 ? default_workers() : workers;
    opts.keep_going = keep_going != 0;
    *out = new dp_run{std::make_unique<Pipeline>(config->config, opts)};
  });
}

#define DP_RUN_STAGE(fn, method)                    \
  dp_status fn(dp_run* run) {                       \
    return guarded([&] {                            \
      require(run != nullptr, "null argument");     \
      run->pipeline->method();                      \
    });                                             \
  }

DP_RUN_STAGE(dp_run_shape_search, shape_search)
DP_RUN_STAGE(dp_run_texture_opt, texture_opt)
DP_RUN_STAGE(dp_run_eval, eval)
DP_RUN_STAGE(dp_run_report, report)
DP_RUN_STAGE(dp_run_pipeline, run_all)

#undef DP_RUN_STAGE

void dp_run_close(dp_run* run) { delete run; }

dp_status dp_asr(long n_clean, long n_patch, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = asr(n_clean, n_patch);
  });
}

}  // extern "C"
