#pragma once

// End-to-end orchestration: phantom cohort -> training -> stage-1 SVM
// classification -> forest slice selection -> contralateral segmentation
// -> evaluation. Every output is a pure function of (inputs, config, seed).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mrtumor/forest.hpp"
#include "mrtumor/metrics.hpp"
#include "mrtumor/phantom.hpp"
#include "mrtumor/segment.hpp"
#include "mrtumor/svm.hpp"

namespace mrtumor {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path data_dir = "data";
  fs::path model_dir = "models";
  fs::path output_dir = "out";
  fs::path template_path;  // empty: <data_dir>/template.nii
  std::uint64_t seed = 7;
  int workers = 1;
  double split_ratio = 3.0;  // train : test within each group
  CohortSpec cohort;
  SvmConfig svm;
  ForestConfig forest;
  SegConfig seg;
  int sweep_normal = 20;
  int sweep_tumor = 20;

  fs::path template_file() const { return template_path.empty() ? data_dir / "template.nii" : template_path; }
};

/// Missing keys keep their defaults; unknown keys and bad values raise
/// kConfigInvalid naming the field.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& cfg);
void validate(const PipelineConfig& cfg);

/// Sink for progress/timing lines. Defaults to stderr.
using LogSink = std::function<void(std::string_view)>;
void set_log_sink(LogSink sink);
void log_line(std::string_view line);

struct ManifestEntry {
  std::string id;
  int label = -1;  // +1 tumor, -1 normal
  std::string volume;
  std::string mask;
  std::vector<int> tumor_slices;  // volume slice indices
  std::vector<int> stack_slices;  // indices into the 12-slice stack
};

struct Manifest {
  std::uint64_t seed = 0;
  std::string template_file = "template.nii";
  std::vector<ManifestEntry> patients;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest load_manifest(const fs::path& data_dir);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Stratified per label: each group is shuffled with the seed and
/// round(n / (ratio + 1)) patients (at least one when n >= 2) go to test.
Split make_split(const Manifest& m, double ratio, std::uint64_t seed);
/// Throws kConfigInvalid if the split repeats a patient or names one that is
/// not in the manifest.
void check_split(const Split& s, const Manifest& m);
nlohmann::json to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

// Subcommands. Each throws Error on failure (kMissingModel, kMissingTemplate,
// kConfigInvalid, kIoFailure, ...).
void cmd_phantom(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);

enum class PatientSelection { kTest, kTrain, kAll };
PatientSelection patient_selection_from_string(std::string_view s);

void cmd_classify(const PipelineConfig& cfg, PatientSelection which = PatientSelection::kTest);
void cmd_segment(const PipelineConfig& cfg, PatientSelection which = PatientSelection::kTest);

struct EvaluationSummary {
  ConfusionCounts stage1_test;
  ConfusionCounts final_test;
  ConfusionCounts slices_test;          // forest, slices of truly-tumor test patients
  double mean_tp_dice = 0.0;            // test slices with tumor in truth and prediction
  int tp_dice_slices = 0;
  int clean_normals = 0;                // test normals with zero flagged voxels on all slices
  int normals = 0;
  int report_rows = 0;
};

EvaluationSummary cmd_evaluate(const PipelineConfig& cfg);

struct SweepResult {
  double threshold = 0.0;
  int patch_min_count = 0;
  double mean_dice = 0.0;
  double normal_fp_rate = 0.0;
};

SweepResult cmd_sweep(const PipelineConfig& cfg);

/// phantom -> train -> classify -> segment -> evaluate, sharing preprocessed
/// stacks between stages.
EvaluationSummary cmd_pipeline(const PipelineConfig& cfg);

}  // namespace mrtumor
