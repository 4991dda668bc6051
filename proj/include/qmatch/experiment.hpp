#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qmatch/trainer.hpp"

namespace qmatch {

struct DatasetSpec {
  std::string kind = "six_blobs";  // six_blobs | two_moons
  std::uint64_t seed = 7;
  double radius = 8.0;                  // six_blobs
  std::vector<std::size_t> counts;      // six_blobs, empty = defaults
  std::size_t n = 400;                  // two_moons
  double noise = 0.05;                  // two_moons
};

struct CorruptionSpec {
  std::vector<std::string> kinds;  // applied in order
  std::vector<double> matrix;
  std::vector<double> offset;
  double rotation_deg = 0.0;
  std::vector<double> shift;
  double noise_sigma = 0.0;
  std::uint64_t seed = 11;
};

struct AdapterSpec {
  std::string kind = "affine";
  std::size_t hidden = 8;
  std::string init = "identity";  // identity | rotation
  double init_rotation_deg = 0.0;
  std::uint64_t seed = 3;
};

struct FeatureMapSpec {
  std::string kind = "identity";
  std::size_t out_dim = 0;  // 0 = input dimension
  std::size_t hidden = 8;
  std::uint64_t seed = 5;
};

struct ExperimentSpec {
  std::string name = "experiment";
  DatasetSpec dataset;
  CorruptionSpec corruption;
  AdapterSpec adapter;
  FeatureMapSpec feature_map;
  TrainConfig train;
  double mse_plateau_ratio = 0.5;
  std::filesystem::path output_dir = "out";
  bool record_wall_time = false;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sectioned key = value text ([experiment], [dataset], [corruption],
// [adapter], [feature_map], [train], [output]). Unknown keys are errors.
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
ExperimentSpec parse_experiment_spec(const std::string& text);

struct ExperimentOutcome {
  TrainResult result;
  double pearson_qloss_mse = 0.0;
  bool mse_plateau = false;
  std::filesystem::path trace_path;
  std::filesystem::path summary_path;
};

// Builds the data, trains, and writes trace.csv, summary.json, clean.csv,
// corrupted.csv and adapted.csv into spec.output_dir.
ExperimentOutcome run_experiment(const ExperimentSpec& spec);

}  // namespace qmatch
