#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mrtumor/image.hpp"
#include "mrtumor/preprocess.hpp"
#include "mrtumor/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("mrtumor_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline mrtumor::Image random_image(mrtumor::Rng& rng, int rows = mrtumor::kGridSize,
                                   int cols = mrtumor::kGridSize) {
  mrtumor::Image img(rows, cols);
  for (auto& v : img.px) v = rng.uniform();
  return img;
}

inline mrtumor::Mask random_mask(mrtumor::Rng& rng, double density, int rows = mrtumor::kGridSize,
                                 int cols = mrtumor::kGridSize) {
  mrtumor::Mask m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.set(r, c, rng.uniform() < density);
  return m;
}

// Stack built from a phantom's own slices 2..13, each divided by its maximum.
inline mrtumor::SliceStack stack_from_volume(const mrtumor::Volume& v, const std::string& id = "T") {
  mrtumor::SliceStack s;
  s.patient_id = id;
  for (const auto& img : mrtumor::trim_slices(v)) s.slices.push_back(mrtumor::intensity_normalize(img));
  return s;
}

}  // namespace testing
