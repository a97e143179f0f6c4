#include "mrtumor/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "mrtumor/dwt.hpp"
#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "mrtumor/parallel.hpp"
#include "mrtumor/preprocess.hpp"
#include "mrtumor/rng.hpp"

namespace mrtumor {

namespace {

using nlohmann::json;

// Independent random streams derived from the global seed.
constexpr std::uint64_t kSplitStream = 0x5011;
constexpr std::uint64_t kSvmStream = 0x5012;
constexpr std::uint64_t kForestStream = 0x5013;
constexpr std::uint64_t kSweepStream = 0x5014;

constexpr int kManifestVersion = 1;

std::mutex& log_mutex() {
  static std::mutex mu;
  return mu;
}

LogSink& log_sink() {
  static LogSink sink = [](std::string_view line) { std::cerr << line << '\n'; };
  return sink;
}

class StageTimer {
 public:
  explicit StageTimer(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "[%s] took %.2f s", name_.c_str(), s);
    log_line(buf);
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

// ---- config parsing -------------------------------------------------------

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::kConfigInvalid, where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(ErrorCode::kConfigInvalid, where + "." + key + ": unknown field");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kConfigInvalid, where + "." + key + ": wrong type");
  }
}

void read_path(const json& j, const char* key, fs::path& out, const std::string& where) {
  std::string s = out.string();
  read(j, key, s, where);
  out = s;
}

PhantomSpec phantom_from_json(const json& j, PhantomSpec s, const std::string& where) {
  check_keys(j, where, {"dims", "pixdim", "brain_semi_axes", "background", "tissue", "noise_sigma",
                        "tumor_radius_min", "tumor_radius_max", "tumor_span_min", "tumor_span_max"});
  read(j, "dims", s.dims, where);
  read(j, "pixdim", s.pixdim, where);
  read(j, "brain_semi_axes", s.brain_semi_axes, where);
  read(j, "background", s.background, where);
  read(j, "tissue", s.tissue, where);
  read(j, "noise_sigma", s.noise_sigma, where);
  read(j, "tumor_radius_min", s.tumor_radius_min, where);
  read(j, "tumor_radius_max", s.tumor_radius_max, where);
  read(j, "tumor_span_min", s.tumor_span_min, where);
  read(j, "tumor_span_max", s.tumor_span_max, where);
  return s;
}

json phantom_to_json(const PhantomSpec& s) {
  return {{"dims", s.dims},
          {"pixdim", s.pixdim},
          {"brain_semi_axes", s.brain_semi_axes},
          {"background", s.background},
          {"tissue", s.tissue},
          {"noise_sigma", s.noise_sigma},
          {"tumor_radius_min", s.tumor_radius_min},
          {"tumor_radius_max", s.tumor_radius_max},
          {"tumor_span_min", s.tumor_span_min},
          {"tumor_span_max", s.tumor_span_max}};
}

template <typename Fn>
auto rethrow_as_config(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigInvalid) throw;
    fail(ErrorCode::kConfigInvalid, where + ": " + e.what());
  }
}

// ---- dataset --------------------------------------------------------------

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot create " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIoFailure, "write error on " + path.string());
}

json read_json(const fs::path& path, ErrorCode missing_code, const std::string& what) {
  std::ifstream in(path);
  if (!in) fail(missing_code, what + " not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(missing_code == ErrorCode::kMissingModel ? ErrorCode::kBadModel : ErrorCode::kConfigInvalid,
         "cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot create " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIoFailure, "write error on " + path.string());
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorCode::kIoFailure, "cannot create directory " + p.string() + ": " + ec.message());
}

std::vector<Mask> truth_stack_masks(const Volume& truth, const RigidTransform& t, std::array<float, 3> pixdim) {
  Volume soft(truth.nx(), truth.ny(), truth.nz(), truth.header.pixdim);
  for (std::size_t i = 0; i < truth.data.size(); ++i) soft.data[i] = truth.data[i] > 0.5f ? 1.0f : 0.0f;
  const Volume grid = resample(soft, t, {kGridSize, kGridSize, kResampledSlices}, pixdim);
  std::vector<Mask> out;
  for (const auto& slice : trim_slices(grid)) {
    Mask m(slice.rows, slice.cols);
    for (int r = 0; r < slice.rows; ++r)
      for (int c = 0; c < slice.cols; ++c) m.set(r, c, slice.at(r, c) >= 0.5);
    out.push_back(std::move(m));
  }
  return out;
}

Volume truth_volume(const GroundTruth& gt, std::array<float, 3> pixdim) {
  const auto& first = gt.masks.front();
  Volume v(first.cols, first.rows, static_cast<std::int64_t>(gt.masks.size()), pixdim);
  v.header.datatype = Datatype::kUint8;
  for (std::size_t z = 0; z < gt.masks.size(); ++z)
    for (int r = 0; r < first.rows; ++r)
      for (int c = 0; c < first.cols; ++c)
        if (gt.masks[z].at(r, c)) v.at(c, r, static_cast<std::int64_t>(z)) = 1.0f;
  return v;
}

struct PatientData {
  PreprocessResult pre;
  std::vector<Mask> truth;  // per stack slice
};

class Workspace {
 public:
  explicit Workspace(const PipelineConfig& cfg) : cfg_(cfg) {}

  void load() {
    if (loaded_) return;
    manifest_ = load_manifest(cfg_.data_dir);
    const fs::path tp = cfg_.template_file();
    if (!fs::exists(tp)) fail(ErrorCode::kMissingTemplate, "template not found: " + tp.string());
    templ_ = read_volume(tp);
    if (templ_.nx() != kGridSize || templ_.ny() != kGridSize || templ_.nz() != kResampledSlices)
      fail(ErrorCode::kConfigInvalid, "template " + tp.string() + " must be 64x64x16");
    data_.assign(manifest_.patients.size(), std::nullopt);
    for (std::size_t i = 0; i < manifest_.patients.size(); ++i) index_[manifest_.patients[i].id] = i;
    loaded_ = true;
  }

  const Manifest& manifest() const { return manifest_; }
  const Volume& templ() const { return templ_; }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::kConfigInvalid, "patient " + id + " is not in the manifest");
    return it->second;
  }

  void ensure(const std::vector<std::size_t>& which) {
    std::vector<std::size_t> todo;
    for (auto i : which)
      if (!data_[i]) todo.push_back(i);
    if (todo.empty()) return;
    StageTimer timer("preprocess " + std::to_string(todo.size()) + " patients");
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
      const std::size_t i = todo[k];
      const auto& entry = manifest_.patients[i];
      const Volume vol = read_volume(cfg_.data_dir / entry.volume);
      PatientData d;
      d.pre = preprocess(vol, templ_, entry.id);
      if (!entry.mask.empty()) {
        d.truth = truth_stack_masks(read_volume(cfg_.data_dir / entry.mask), d.pre.registration.transform,
                                    templ_.header.pixdim);
      } else {
        d.truth.assign(kStackSlices, Mask(kGridSize, kGridSize));
      }
      data_[i] = std::move(d);
    });
  }

  const PatientData& data(std::size_t i) const { return *data_[i]; }

 private:
  const PipelineConfig& cfg_;
  bool loaded_ = false;
  Manifest manifest_;
  Volume templ_;
  std::vector<std::optional<PatientData>> data_;
  std::map<std::string, std::size_t> index_;
};

struct Models {
  LinearModel svm;
  Forest forest;
  Split split;
};

Split load_split(const PipelineConfig& cfg, const Manifest& m) {
  Split s = split_from_json(read_json(cfg.model_dir / "split.json", ErrorCode::kMissingModel, "split file"));
  check_split(s, m);
  return s;
}

LinearModel load_svm(const PipelineConfig& cfg) {
  return svm_from_json(read_json(cfg.model_dir / "svm.json", ErrorCode::kMissingModel, "SVM model"));
}

Forest load_forest(const PipelineConfig& cfg) {
  return forest_from_json(read_json(cfg.model_dir / "forest.json", ErrorCode::kMissingModel, "forest model"));
}

std::vector<std::size_t> indices_for(const Workspace& ws, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  for (const auto& id : ids) out.push_back(ws.index_of(id));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> select(const Workspace& ws, const Split& split, PatientSelection which) {
  switch (which) {
    case PatientSelection::kTest: return indices_for(ws, split.test);
    case PatientSelection::kTrain: return indices_for(ws, split.train);
    case PatientSelection::kAll: break;
  }
  std::vector<std::size_t> all(ws.manifest().patients.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

Models train_impl(const PipelineConfig& cfg, Workspace& ws) {
  ws.load();
  Models models;
  models.split = make_split(ws.manifest(), cfg.split_ratio, derive_seed(cfg.seed, kSplitStream));
  check_split(models.split, ws.manifest());
  const auto train = indices_for(ws, models.split.train);
  ws.ensure(train);

  std::vector<std::vector<double>> px;
  std::vector<int> py;
  std::vector<std::vector<double>> sx;
  std::vector<int> sy;
  for (auto i : train) {
    const auto& entry = ws.manifest().patients[i];
    const auto& stack = ws.data(i).pre.stack;
    px.push_back(patient_features(stack));
    py.push_back(entry.label);
    if (entry.label != 1) continue;
    for (int s = 0; s < kStackSlices; ++s) {
      sx.push_back(slice_features(stack.slices[s]));
      const bool tumor = std::find(entry.stack_slices.begin(), entry.stack_slices.end(), s) != entry.stack_slices.end();
      sy.push_back(tumor ? kTumor : kClean);
    }
  }

  {
    StageTimer timer("train svm");
    SvmConfig svm_cfg = cfg.svm;
    svm_cfg.seed = derive_seed(cfg.seed, kSvmStream);
    auto r = train_svm(px, py, svm_cfg);
    if (!r.converged) log_line("warning: SVM did not reach tolerance; using best iterate");
    models.svm = std::move(r.model);
    make_dirs(cfg.model_dir);
    write_json(svm_to_json(models.svm, svm_cfg), cfg.model_dir / "svm.json");
  }
  {
    StageTimer timer("train forest");
    ForestConfig forest_cfg = cfg.forest;
    forest_cfg.seed = derive_seed(cfg.seed, kForestStream);
    models.forest = train_forest(sx, sy, forest_cfg, cfg.workers);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "forest: %zu trees, out-of-bag error %.4f", models.forest.trees.size(),
                  models.forest.oob_error);
    log_line(buf);
    write_json(forest_to_json(models.forest), cfg.model_dir / "forest.json");
  }
  write_json(to_json(models.split), cfg.model_dir / "split.json");
  return models;
}

struct Outcome {
  double decision = 0.0;
  int stage1 = -1;
  std::set<int> forest_slices;
  Segmentation seg;
  int final_label = -1;
};

std::map<std::size_t, Outcome> infer(const PipelineConfig& cfg, Workspace& ws, const LinearModel& svm,
                                     const Forest* forest, const std::vector<std::size_t>& which) {
  ws.ensure(which);
  StageTimer timer(forest ? "classify + segment" : "classify");
  std::vector<Outcome> out(which.size());
  parallel_for(which.size(), cfg.workers, [&](std::size_t k) {
    const auto& stack = ws.data(which[k]).pre.stack;
    Outcome& o = out[k];
    o.decision = decision_value(svm, patient_features(stack));
    o.stage1 = o.decision >= 0.0 ? 1 : -1;
    if (!forest) return;
    if (o.stage1 == 1) o.forest_slices = select_slices(*forest, stack);
    o.seg = segment_patient(stack, o.forest_slices, cfg.seg);
    o.final_label = o.seg.has_tumor ? 1 : -1;
  });
  std::map<std::size_t, Outcome> result;
  for (std::size_t k = 0; k < which.size(); ++k) result.emplace(which[k], std::move(out[k]));
  return result;
}

const char* split_name(const Split& s, const std::string& id) {
  if (std::find(s.test.begin(), s.test.end(), id) != s.test.end()) return "test";
  if (std::find(s.train.begin(), s.train.end(), id) != s.train.end()) return "train";
  return "none";
}

void write_classify(const PipelineConfig& cfg, const Workspace& ws, const Split& split,
                    const std::map<std::size_t, Outcome>& outcomes) {
  std::ostringstream csv;
  csv << "patient_id,split,decision_value,stage1_label\n";
  for (const auto& [i, o] : outcomes) {
    const auto& id = ws.manifest().patients[i].id;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", o.decision);
    csv << id << ',' << split_name(split, id) << ',' << buf << ',' << o.stage1 << '\n';
  }
  make_dirs(cfg.output_dir);
  write_text(csv.str(), cfg.output_dir / "classify.csv");
}

json to_json_set(const std::set<int>& s) { return json(std::vector<int>(s.begin(), s.end())); }

void write_segment(const PipelineConfig& cfg, const Workspace& ws, const Split& split,
                   const std::map<std::size_t, Outcome>& outcomes) {
  const fs::path dir = cfg.output_dir / "segmentation";
  make_dirs(dir);
  json patients = json::array();
  for (const auto& [i, o] : outcomes) {
    const auto& id = ws.manifest().patients[i].id;
    write_volume(o.seg.overlay, dir / (id + "_overlay.nii"));
    write_volume(mask_volume(o.seg, ws.templ().header.pixdim), dir / (id + "_mask.nii"));
    json counts = json::object();
    for (const auto& m : o.seg.masks)
      if (!m.grid.empty()) counts[std::to_string(m.slice)] = m.grid.count();
    patients.push_back({{"patient_id", id},
                        {"split", split_name(split, id)},
                        {"stage1_label", o.stage1},
                        {"forest_slices", to_json_set(o.forest_slices)},
                        {"slices", to_json_set(o.seg.final_slices)},
                        {"final_label", o.final_label},
                        {"flagged_voxels", counts}});
  }
  write_json({{"format_version", 1}, {"segment_config", to_json(cfg.seg)}, {"patients", patients}},
             cfg.output_dir / "segmentation_report.json");
}

EvaluationSummary evaluate_impl(const PipelineConfig& cfg, Workspace& ws, const Models& models,
                                const std::map<std::size_t, Outcome>& outcomes) {
  StageTimer timer("evaluate");
  EvaluationSummary sum;
  ConfusionCounts stage1_train, final_train;
  double dice_total = 0.0;
  std::ostringstream csv;
  csv << "patient_id,split,truth,stage1_label,final_label,slice_dice\n";
  for (const auto& [i, o] : outcomes) {
    const auto& entry = ws.manifest().patients[i];
    const auto& data = ws.data(i);
    const bool test = std::string(split_name(models.split, entry.id)) == "test";
    const bool truth = entry.label == 1;
    (test ? sum.stage1_test : stage1_train).add(truth, o.stage1 == 1);
    (test ? sum.final_test : final_train).add(truth, o.final_label == 1);

    std::string dice_col;
    for (int s = 0; s < kStackSlices; ++s) {
      const Mask& pred = o.seg.masks[s].grid;
      const Mask& gt = data.truth[s];
      if (pred.empty() && gt.empty()) continue;
      const double d = dice(pred, gt);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%d:%.4f", dice_col.empty() ? "" : ";", s, d);
      dice_col += buf;
      if (test && !pred.empty() && !gt.empty()) {
        dice_total += d;
        ++sum.tp_dice_slices;
      }
    }
    if (test && truth) {
      for (int s = 0; s < kStackSlices; ++s) {
        const bool is_tumor = !data.truth[s].empty();
        const bool predicted = predict_forest(models.forest, slice_features(data.pre.stack.slices[s])) == kTumor;
        sum.slices_test.add(is_tumor, predicted);
      }
    }
    if (test && !truth) {
      ++sum.normals;
      bool clean = true;
      for (const auto& slice : data.pre.stack.slices)
        if (!slice_tumor_mask(slice, cfg.seg).empty()) {
          clean = false;
          break;
        }
      if (clean) ++sum.clean_normals;
    }
    csv << entry.id << ',' << (test ? "test" : "train") << ',' << entry.label << ',' << o.stage1 << ','
        << o.final_label << ',' << dice_col << '\n';
    ++sum.report_rows;
  }
  sum.mean_tp_dice = sum.tp_dice_slices > 0 ? dice_total / sum.tp_dice_slices : 0.0;

  auto row = [](const std::string& split, const std::string& stage, const ConfusionCounts& c) {
    auto pct = [&](double (*fn)(const ConfusionCounts&)) {
      try {
        return format_percent(fn(c));
      } catch (const Error&) {
        return std::string("NA");
      }
    };
    return split + "," + stage + "," + std::to_string(c.tp) + "," + std::to_string(c.fn) + "," +
           std::to_string(c.tn) + "," + std::to_string(c.fp) + "," + pct(accuracy) + "," + pct(sensitivity) + "," +
           pct(specificity) + "\n";
  };
  std::string metrics = "split,stage,tp,fn,tn,fp,accuracy,sensitivity,specificity\n";
  metrics += row("train", "stage1_svm", stage1_train);
  metrics += row("train", "final", final_train);
  metrics += row("test", "stage1_svm", sum.stage1_test);
  metrics += row("test", "final", sum.final_test);
  metrics += row("test", "slice_forest", sum.slices_test);
  char extra[160];
  std::snprintf(extra, sizeof(extra), "test,mean_tp_dice,%d,,,,%.4f,,\ntest,clean_normals,%d,,,,%d,,\n",
                sum.tp_dice_slices, sum.mean_tp_dice, sum.clean_normals, sum.normals);
  metrics += extra;

  make_dirs(cfg.output_dir);
  write_text(csv.str(), cfg.output_dir / "evaluation.csv");
  write_text(metrics, cfg.output_dir / "metrics.csv");
  log_line("stage1 test: accuracy " + format_percent(accuracy(sum.stage1_test)) + "%");
  return sum;
}

}  // namespace

// ---- public ---------------------------------------------------------------

void set_log_sink(LogSink sink) {
  std::lock_guard lock(log_mutex());
  log_sink() = sink ? std::move(sink) : [](std::string_view) {};
}

void log_line(std::string_view line) {
  std::lock_guard lock(log_mutex());
  log_sink()(line);
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig cfg;
  const std::string root = "config";
  check_keys(j, root, {"data_dir", "model_dir", "output_dir", "template", "seed", "workers", "split_ratio",
                       "cohort", "svm", "forest", "segment", "sweep"});
  read_path(j, "data_dir", cfg.data_dir, root);
  read_path(j, "model_dir", cfg.model_dir, root);
  read_path(j, "output_dir", cfg.output_dir, root);
  read_path(j, "template", cfg.template_path, root);
  read(j, "seed", cfg.seed, root);
  read(j, "workers", cfg.workers, root);
  read(j, "split_ratio", cfg.split_ratio, root);
  if (j.contains("cohort")) {
    const auto& c = j.at("cohort");
    const std::string where = root + ".cohort";
    check_keys(c, where, {"n_normal", "n_tumor", "contrast_min", "contrast_max", "brain_scale_jitter",
                          "tissue_jitter", "two_blob_probability", "phantom"});
    read(c, "n_normal", cfg.cohort.n_normal, where);
    read(c, "n_tumor", cfg.cohort.n_tumor, where);
    read(c, "contrast_min", cfg.cohort.contrast_min, where);
    read(c, "contrast_max", cfg.cohort.contrast_max, where);
    read(c, "brain_scale_jitter", cfg.cohort.brain_scale_jitter, where);
    read(c, "tissue_jitter", cfg.cohort.tissue_jitter, where);
    read(c, "two_blob_probability", cfg.cohort.two_blob_probability, where);
    if (c.contains("phantom")) cfg.cohort.base = phantom_from_json(c.at("phantom"), cfg.cohort.base, where + ".phantom");
  }
  if (j.contains("svm")) {
    check_keys(j.at("svm"), root + ".svm", {"c", "max_epochs", "tolerance", "seed", "solver"});
    cfg.svm = svm_config_from_json(j.at("svm"), cfg.svm);
  }
  if (j.contains("forest")) {
    check_keys(j.at("forest"), root + ".forest",
               {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "seed"});
    cfg.forest = forest_config_from_json(j.at("forest"), cfg.forest);
  }
  if (j.contains("segment")) {
    check_keys(j.at("segment"), root + ".segment", {"threshold", "patch_min_count"});
    cfg.seg = seg_config_from_json(j.at("segment"), cfg.seg);
  }
  if (j.contains("sweep")) {
    check_keys(j.at("sweep"), root + ".sweep", {"n_normal", "n_tumor"});
    read(j.at("sweep"), "n_normal", cfg.sweep_normal, root + ".sweep");
    read(j.at("sweep"), "n_tumor", cfg.sweep_tumor, root + ".sweep");
  }
  validate(cfg);
  return cfg;
}

json to_json(const PipelineConfig& cfg) {
  const auto& c = cfg.cohort;
  return {{"data_dir", cfg.data_dir.string()},
          {"model_dir", cfg.model_dir.string()},
          {"output_dir", cfg.output_dir.string()},
          {"template", cfg.template_path.string()},
          {"seed", cfg.seed},
          {"workers", cfg.workers},
          {"split_ratio", cfg.split_ratio},
          {"cohort",
           {{"n_normal", c.n_normal},
            {"n_tumor", c.n_tumor},
            {"contrast_min", c.contrast_min},
            {"contrast_max", c.contrast_max},
            {"brain_scale_jitter", c.brain_scale_jitter},
            {"tissue_jitter", c.tissue_jitter},
            {"two_blob_probability", c.two_blob_probability},
            {"phantom", phantom_to_json(c.base)}}},
          {"svm", to_json(cfg.svm)},
          {"forest", to_json(cfg.forest)},
          {"segment", to_json(cfg.seg)},
          {"sweep", {{"n_normal", cfg.sweep_normal}, {"n_tumor", cfg.sweep_tumor}}}};
}

void validate(const PipelineConfig& cfg) {
  if (cfg.workers < 1) fail(ErrorCode::kConfigInvalid, "config.workers: must be >= 1");
  if (!(cfg.split_ratio > 0.0) || !std::isfinite(cfg.split_ratio))
    fail(ErrorCode::kConfigInvalid, "config.split_ratio: must be > 0");
  if (cfg.sweep_normal < 1 || cfg.sweep_tumor < 1)
    fail(ErrorCode::kConfigInvalid, "config.sweep: counts must be >= 1");
  rethrow_as_config("config.cohort", [&] { validate(cfg.cohort); return 0; });
  rethrow_as_config("config.svm", [&] { validate(cfg.svm); return 0; });
  rethrow_as_config("config.forest", [&] { validate(cfg.forest); return 0; });
  rethrow_as_config("config.segment", [&] { validate(cfg.seg); return 0; });
}

json to_json(const Manifest& m) {
  json patients = json::array();
  for (const auto& p : m.patients)
    patients.push_back({{"id", p.id},
                        {"label", p.label},
                        {"volume", p.volume},
                        {"mask", p.mask},
                        {"tumor_slices", p.tumor_slices},
                        {"stack_slices", p.stack_slices}});
  return {{"format_version", kManifestVersion}, {"seed", m.seed}, {"template", m.template_file}, {"patients", patients}};
}

Manifest manifest_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kManifestVersion)
      fail(ErrorCode::kConfigInvalid, "manifest: unsupported format_version");
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.template_file = j.at("template").get<std::string>();
    std::set<std::string> seen;
    for (const auto& p : j.at("patients")) {
      ManifestEntry e;
      e.id = p.at("id").get<std::string>();
      e.label = p.at("label").get<int>();
      e.volume = p.at("volume").get<std::string>();
      e.mask = p.value("mask", std::string());
      e.tumor_slices = p.value("tumor_slices", std::vector<int>{});
      e.stack_slices = p.value("stack_slices", std::vector<int>{});
      if (e.label != 1 && e.label != -1) fail(ErrorCode::kConfigInvalid, "manifest: label of " + e.id + " must be +1/-1");
      if (!seen.insert(e.id).second) fail(ErrorCode::kConfigInvalid, "manifest: duplicate patient id " + e.id);
      m.patients.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigInvalid, std::string("manifest: ") + e.what());
  }
}

Manifest load_manifest(const fs::path& data_dir) {
  return manifest_from_json(read_json(data_dir / "manifest.json", ErrorCode::kConfigInvalid, "manifest"));
}

Split make_split(const Manifest& m, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0)) fail(ErrorCode::kConfigInvalid, "split ratio must be > 0");
  Split s;
  Rng rng(seed);
  for (int label : {1, -1}) {
    std::vector<std::string> group;
    for (const auto& p : m.patients)
      if (p.label == label) group.push_back(p.id);
    std::sort(group.begin(), group.end());
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng.below(i)]);
    std::size_t n_test = static_cast<std::size_t>(std::llround(group.size() / (ratio + 1.0)));
    if (group.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, group.size() - 1);
    else n_test = 0;
    s.test.insert(s.test.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_test), group.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void check_split(const Split& s, const Manifest& m) {
  std::set<std::string> known;
  for (const auto& p : m.patients) known.insert(p.id);
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.test})
    for (const auto& id : *part) {
      if (!known.count(id)) fail(ErrorCode::kConfigInvalid, "split names unknown patient " + id);
      if (!seen.insert(id).second)
        fail(ErrorCode::kConfigInvalid, "patient " + id + " appears more than once across train/test");
    }
}

json to_json(const Split& s) { return {{"train", s.train}, {"test", s.test}}; }

Split split_from_json(const json& j) {
  try {
    return {j.at("train").get<std::vector<std::string>>(), j.at("test").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kBadModel, std::string("split file: ") + e.what());
  }
}

PatientSelection patient_selection_from_string(std::string_view s) {
  if (s == "test") return PatientSelection::kTest;
  if (s == "train") return PatientSelection::kTrain;
  if (s == "all") return PatientSelection::kAll;
  fail(ErrorCode::kConfigInvalid, "patients: expected test, train or all");
}

void cmd_phantom(const PipelineConfig& cfg) {
  validate(cfg);
  StageTimer timer("phantom");
  make_dirs(cfg.data_dir);
  const auto patients = generate_cohort(cfg.cohort, cfg.seed, cfg.workers);
  Manifest m;
  m.seed = cfg.seed;
  parallel_for(patients.size(), cfg.workers, [&](std::size_t k) {
    const auto& p = patients[k];
    write_volume(p.volume, cfg.data_dir / (p.id + ".nii"));
    write_volume(truth_volume(p.truth, p.volume.header.pixdim), cfg.data_dir / (p.id + "_mask.nii"));
  });
  for (const auto& p : patients)
    m.patients.push_back({p.id, p.label, p.id + ".nii", p.id + "_mask.nii", p.truth.tumor_slices,
                          p.truth.stack_slices()});
  write_volume(make_template(cfg.cohort.base), cfg.data_dir / m.template_file);
  write_json(to_json(m), cfg.data_dir / "manifest.json");
}

void cmd_train(const PipelineConfig& cfg) {
  validate(cfg);
  Workspace ws(cfg);
  train_impl(cfg, ws);
}

void cmd_classify(const PipelineConfig& cfg, PatientSelection which) {
  validate(cfg);
  const LinearModel svm = load_svm(cfg);
  Workspace ws(cfg);
  ws.load();
  const Split split = load_split(cfg, ws.manifest());
  write_classify(cfg, ws, split, infer(cfg, ws, svm, nullptr, select(ws, split, which)));
}

void cmd_segment(const PipelineConfig& cfg, PatientSelection which) {
  validate(cfg);
  // Models first so a missing model is reported ahead of missing data.
  const LinearModel svm = load_svm(cfg);
  const Forest forest = load_forest(cfg);
  Workspace ws(cfg);
  ws.load();
  const Split split = load_split(cfg, ws.manifest());
  write_segment(cfg, ws, split, infer(cfg, ws, svm, &forest, select(ws, split, which)));
}

EvaluationSummary cmd_evaluate(const PipelineConfig& cfg) {
  validate(cfg);
  LinearModel svm = load_svm(cfg);
  Forest forest = load_forest(cfg);
  Workspace ws(cfg);
  ws.load();
  Models models{std::move(svm), std::move(forest), load_split(cfg, ws.manifest())};
  const auto outcomes = infer(cfg, ws, models.svm, &models.forest, select(ws, models.split, PatientSelection::kAll));
  return evaluate_impl(cfg, ws, models, outcomes);
}

EvaluationSummary cmd_pipeline(const PipelineConfig& cfg) {
  validate(cfg);
  StageTimer timer("pipeline");
  cmd_phantom(cfg);
  Workspace ws(cfg);
  Models models = train_impl(cfg, ws);
  const auto all = select(ws, models.split, PatientSelection::kAll);
  const auto outcomes = infer(cfg, ws, models.svm, &models.forest, all);
  std::map<std::size_t, Outcome> test_only;
  for (auto i : indices_for(ws, models.split.test)) test_only.emplace(i, outcomes.at(i));
  write_classify(cfg, ws, models.split, test_only);
  write_segment(cfg, ws, models.split, test_only);
  return evaluate_impl(cfg, ws, models, outcomes);
}

SweepResult cmd_sweep(const PipelineConfig& cfg) {
  validate(cfg);
  StageTimer timer("sweep");
  CohortSpec spec = cfg.cohort;
  spec.n_normal = cfg.sweep_normal;
  spec.n_tumor = cfg.sweep_tumor;
  const auto patients = generate_cohort(spec, derive_seed(cfg.seed, kSweepStream), cfg.workers);
  const Volume templ = make_template(spec.base);

  struct Prepared {
    std::vector<Image> approx;
    std::vector<Mask> truth;
    bool tumor = false;
  };
  std::vector<Prepared> prepared(patients.size());
  parallel_for(patients.size(), cfg.workers, [&](std::size_t k) {
    const auto& p = patients[k];
    auto pre = preprocess(p.volume, templ, p.id);
    Prepared& out = prepared[k];
    for (const auto& s : pre.stack.slices) out.approx.push_back(approximation_image(s));
    out.truth = truth_stack_masks(truth_volume(p.truth, p.volume.header.pixdim), pre.registration.transform,
                                  templ.header.pixdim);
    out.tumor = p.truth.has_tumor;
  });

  std::vector<double> thresholds;
  for (int k = 0; k <= 12; ++k) thresholds.push_back(0.10 + 0.025 * k);
  std::ostringstream csv;
  csv << "threshold,patch_min_count,mean_dice,normal_fp_rate\n";
  SweepResult best;
  bool have_best = false;
  for (double theta : thresholds) {
    // Raw masks per (patient, slice) for this threshold.
    std::vector<std::vector<Mask>> raw(prepared.size());
    for (std::size_t k = 0; k < prepared.size(); ++k)
      for (const auto& a : prepared[k].approx) raw[k].push_back(contralateral_mask(a, theta));
    for (int kappa = 1; kappa <= kPatchSize * kPatchSize; ++kappa) {
      double dice_sum = 0.0;
      int dice_n = 0, normals = 0, fp = 0;
      for (std::size_t k = 0; k < prepared.size(); ++k) {
        const auto& pr = prepared[k];
        if (pr.tumor) {
          for (int s = 0; s < kStackSlices; ++s) {
            if (pr.truth[s].empty()) continue;
            dice_sum += dice(patch_filter(raw[k][s], kappa), pr.truth[s]);
            ++dice_n;
          }
        } else {
          ++normals;
          for (int s = 0; s < kStackSlices; ++s)
            if (!patch_filter(raw[k][s], kappa).empty()) {
              ++fp;
              break;
            }
        }
      }
      SweepResult r{theta, kappa, dice_n ? dice_sum / dice_n : 0.0, normals ? static_cast<double>(fp) / normals : 0.0};
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%.3f,%d,%.4f,%.4f\n", r.threshold, r.patch_min_count, r.mean_dice,
                    r.normal_fp_rate);
      csv << buf;
      // Ties go to the later, more conservative setting.
      if (r.normal_fp_rate <= 0.05 && (!have_best || r.mean_dice >= best.mean_dice)) {
        best = r;
        have_best = true;
      }
    }
  }
  make_dirs(cfg.output_dir);
  write_text(csv.str(), cfg.output_dir / "sweep.csv");
  write_json({{"threshold", best.threshold},
              {"patch_min_count", best.patch_min_count},
              {"mean_dice", best.mean_dice},
              {"normal_fp_rate", best.normal_fp_rate},
              {"found", have_best}},
             cfg.output_dir / "sweep.json");
  return best;
}

}  // namespace mrtumor
