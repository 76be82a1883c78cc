#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "saco/model.hpp"
#include "saco/retrieval.hpp"
#include "saco/training.hpp"

namespace saco::cli {

// Everything a run needs. Serialized as
//   {"data": {...}, "model": {...}, "train": {...}, "sampler": {...}, "out": "..."}
// with unknown keys rejected at every level.
struct RunConfig {
  std::filesystem::path manifest;
  int min_freq = 1;
  ModelConfig model;  // data-derived fields are filled in after loading the manifest
  training::TrainConfig train;
  retrieval::SamplerConfig sampler;
  std::filesystem::path out = "runs/latest";

  nlohmann::ordered_json to_json() const;
  // Relative paths resolve against `base_dir`.
  void merge_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

RunConfig load_run_config(const std::filesystem::path& path);

// Entry point of the `saco` binary. Returns the process exit code:
// 0 success, 1 validation error, 2 runtime failure.
int dispatch(int argc, char** argv);

}  // namespace saco::cli
