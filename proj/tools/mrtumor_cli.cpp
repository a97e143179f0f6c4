// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrtumor/mrtumor.h"

namespace {

struct Options {
  std::string config;
  std::optional<unsigned long long> seed;
  std::optional<int> workers;
  std::string out;
  std::string patients = "test";
};

int report(mrt_status s, const char* what) {
  if (s == MRT_OK) return 0;
  std::fprintf(stderr, "mrtumor %s: %s: %s\n", what, mrt_status_name(s), mrt_last_error());
  return static_cast<int>(s);
}

int run(const std::string& name, const Options& opt) {
  mrt_config* cfg = nullptr;
  mrt_status s = opt.config.empty() ? mrt_config_create(nullptr, &cfg) : mrt_config_load(opt.config.c_str(), &cfg);
  if (s != MRT_OK) return report(s, "config");
  if (s == MRT_OK && opt.seed) s = mrt_config_set_seed(cfg, *opt.seed);
  if (s == MRT_OK && opt.workers) s = mrt_config_set_workers(cfg, *opt.workers);
  if (s == MRT_OK && !opt.out.empty()) s = mrt_config_set_root(cfg, opt.out.c_str());
  if (s != MRT_OK) {
    mrt_config_free(cfg);
    return report(s, "config");
  }

  if (name == "phantom") {
    s = mrt_cmd_phantom(cfg);
  } else if (name == "train") {
    s = mrt_cmd_train(cfg);
  } else if (name == "classify") {
    s = mrt_cmd_classify(cfg, opt.patients.c_str());
  } else if (name == "segment") {
    s = mrt_cmd_segment(cfg, opt.patients.c_str());
  } else if (name == "evaluate") {
    s = mrt_cmd_evaluate(cfg);
  } else if (name == "pipeline") {
    s = mrt_cmd_pipeline(cfg);
  } else if (name == "sweep") {
    double threshold = 0.0;
    int kappa = 0;
    s = mrt_cmd_sweep(cfg, &threshold, &kappa);
    if (s == MRT_OK) std::printf("threshold=%.3f patch_min_count=%d\n", threshold, kappa);
  } else if (name == "config") {
    std::printf("%s\n", mrt_config_json(cfg));
  }
  mrt_config_free(cfg);
  return report(s, name.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phantom-validated MR brain tumor classification and segmentation"};
  app.require_subcommand(1);
  Options opt;

  const std::pair<const char*, const char*> commands[] = {
      {"phantom", "Generate a synthetic cohort with ground-truth masks"},
      {"train", "Train the patient SVM and the slice forest"},
      {"classify", "Stage-1 patient labels to CSV"},
      {"segment", "Tumor overlays, masks and a JSON report"},
      {"evaluate", "Metrics and per-patient evaluation CSV"},
      {"pipeline", "phantom, train, classify, segment and evaluate in sequence"},
      {"sweep", "Calibrate the segmentation threshold and patch count"},
      {"config", "Print the effective configuration"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Global seed");
    sub->add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Root directory for data/, models/ and out/");
    if (std::string(name) == "classify" || std::string(name) == "segment")
      sub->add_option("--patients", opt.patients, "test, train or all")
          ->check(CLI::IsMember({"test", "train", "all"}));
  }

  CLI11_PARSE(app, argc, argv);
  return run(app.get_subcommands().front()->get_name(), opt);
}
