#include "mrtumor/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mrtumor/error.hpp"

namespace mrtumor {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rotation_matrix(const std::array<double, 3>& a) {
  const double cx = std::cos(a[0]), sx = std::sin(a[0]);
  const double cy = std::cos(a[1]), sy = std::sin(a[1]);
  const double cz = std::cos(a[2]), sz = std::sin(a[2]);
  // Rz * Ry * Rx
  return Mat3{{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
               {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
               {-sy, cy * sx, cy * cx}}};
}

// Maps canonical grid voxels to continuous voxel coordinates of a source
// volume through T^-1.
class InverseMapper {
 public:
  InverseMapper(const RigidTransform& t, std::array<int, 3> grid, std::array<float, 3> pixdim,
                const Volume& src)
      : identity_(t.is_identity()), rot_(rotation_matrix(t.angles)), t_(t.translation) {
    for (int k = 0; k < 3; ++k) {
      center_[k] = (grid[k] - 1) / 2.0;
      pix_[k] = pixdim[k];
      scale_[k] = static_cast<double>(src.header.dims[k]) / grid[k];
    }
  }

  std::array<double, 3> operator()(double x, double y, double z) const {
    std::array<double, 3> q{x, y, z};
    if (!identity_) {
      std::array<double, 3> d;
      for (int k = 0; k < 3; ++k) d[k] = (q[k] - center_[k] - t_[k]) * pix_[k];
      for (int k = 0; k < 3; ++k) {
        // R^T d
        const double mm = rot_[0][k] * d[0] + rot_[1][k] * d[1] + rot_[2][k] * d[2];
        q[k] = mm / pix_[k] + center_[k];
      }
    }
    for (int k = 0; k < 3; ++k) q[k] = (q[k] + 0.5) * scale_[k] - 0.5;
    return q;
  }

 private:
  bool identity_;
  Mat3 rot_;
  std::array<double, 3> t_;
  std::array<double, 3> center_{}, pix_{}, scale_{};
};

// Trilinear sample; returns false outside the volume.
bool sample(const Volume& v, const std::array<double, 3>& u, double& out) {
  constexpr double kEps = 1e-9;
  std::array<std::int64_t, 3> i0, i1;
  std::array<double, 3> f;
  for (int k = 0; k < 3; ++k) {
    const double hi = static_cast<double>(v.header.dims[k] - 1);
    double c = u[k];
    if (c < -kEps || c > hi + kEps) return false;
    c = std::clamp(c, 0.0, hi);
    const double fl = std::floor(c);
    i0[k] = static_cast<std::int64_t>(fl);
    f[k] = c - fl;
    i1[k] = std::min<std::int64_t>(i0[k] + 1, v.header.dims[k] - 1);
  }
  auto at = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return static_cast<double>(v.at(x, y, z));
  };
  const double c00 = at(i0[0], i0[1], i0[2]) * (1 - f[0]) + at(i1[0], i0[1], i0[2]) * f[0];
  const double c10 = at(i0[0], i1[1], i0[2]) * (1 - f[0]) + at(i1[0], i1[1], i0[2]) * f[0];
  const double c01 = at(i0[0], i0[1], i1[2]) * (1 - f[0]) + at(i1[0], i0[1], i1[2]) * f[0];
  const double c11 = at(i0[0], i1[1], i1[2]) * (1 - f[0]) + at(i1[0], i1[1], i1[2]) * f[0];
  const double c0 = c00 * (1 - f[1]) + c10 * f[1];
  const double c1 = c01 * (1 - f[1]) + c11 * f[1];
  out = c0 * (1 - f[2]) + c1 * f[2];
  return true;
}

bool is_constant(const Volume& v) {
  if (v.data.empty()) return true;
  const float first = v.data.front();
  return std::all_of(v.data.begin(), v.data.end(), [&](float x) { return x == first; });
}

// Maps moving-volume voxels into canonical grid coordinates through T.
class ForwardMapper {
 public:
  ForwardMapper(const RigidTransform& t, std::array<int, 3> grid, std::array<float, 3> pixdim,
                const Volume& src)
      : rot_(rotation_matrix(t.angles)), t_(t.translation) {
    for (int k = 0; k < 3; ++k) {
      center_[k] = (grid[k] - 1) / 2.0;
      pix_[k] = pixdim[k];
      scale_[k] = static_cast<double>(src.header.dims[k]) / grid[k];
    }
  }

  std::array<double, 3> operator()(double x, double y, double z) const {
    std::array<double, 3> u{x, y, z};
    std::array<double, 3> d;
    for (int k = 0; k < 3; ++k) d[k] = ((u[k] + 0.5) / scale_[k] - 0.5 - center_[k]) * pix_[k];
    std::array<double, 3> q;
    for (int k = 0; k < 3; ++k) {
      const double mm = rot_[k][0] * d[0] + rot_[k][1] * d[1] + rot_[k][2] * d[2];
      q[k] = mm / pix_[k] + center_[k] + t_[k];
    }
    return q;
  }

 private:
  Mat3 rot_;
  std::array<double, 3> t_;
  std::array<double, 3> center_{}, pix_{}, scale_{};
};

// Similarity of the moving voxels with the template sampled at their
// transformed positions. Interpolating the noise-free template rather than
// the noisy moving volume keeps interpolation smoothing from rewarding
// off-grid transforms.
// Two passes of a [1 2 1]/4 kernel along x and y.
Volume smooth_in_plane(const Volume& v) {
  Volume out = v;
  Volume tmp = v;
  const std::int64_t nx = v.nx(), ny = v.ny();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::int64_t z = 0; z < v.nz(); ++z)
      for (std::int64_t y = 0; y < ny; ++y)
        for (std::int64_t x = 0; x < nx; ++x)
          tmp.at(x, y, z) = 0.25f * out.at(std::max<std::int64_t>(x - 1, 0), y, z) + 0.5f * out.at(x, y, z) +
                            0.25f * out.at(std::min(x + 1, nx - 1), y, z);
    for (std::int64_t z = 0; z < v.nz(); ++z)
      for (std::int64_t y = 0; y < ny; ++y)
        for (std::int64_t x = 0; x < nx; ++x)
          out.at(x, y, z) = 0.25f * tmp.at(x, std::max<std::int64_t>(y - 1, 0), z) + 0.5f * tmp.at(x, y, z) +
                            0.25f * tmp.at(x, std::min(y + 1, ny - 1), z);
  }
  return out;
}

class NccObjective {
 public:
  NccObjective(const Volume& moving, const Volume& templ) : moving_(moving), templ_(smooth_in_plane(templ)) {
    grid_ = {static_cast<int>(templ.nx()), static_cast<int>(templ.ny()), static_cast<int>(templ.nz())};
  }

  double operator()(const RigidTransform& t, int stride) {
    f_.clear();
    g_.clear();
    ForwardMapper map(t, grid_, templ_.header.pixdim, moving_);
    for (std::int64_t z = 0; z < moving_.nz(); ++z)
      for (std::int64_t y = 0; y < moving_.ny(); y += stride)
        for (std::int64_t x = 0; x < moving_.nx(); x += stride) {
          double tv;
          if (!sample(templ_, map(x, y, z), tv)) continue;
          f_.push_back(tv);
          g_.push_back(moving_.at(x, y, z));
        }
    if (f_.size() < 2) return 0.0;
    return ncc(f_, g_);
  }

 private:
  const Volume& moving_;
  Volume templ_;
  std::array<int, 3> grid_{};
  std::vector<double> f_, g_;
};

// NCC over the overlap of the template and the moving volume resampled onto
// the template grid.
double overlap_ncc(const Volume& moving, const Volume& templ, const RigidTransform& t) {
  const std::array<int, 3> grid{static_cast<int>(templ.nx()), static_cast<int>(templ.ny()),
                                static_cast<int>(templ.nz())};
  InverseMapper map(t, grid, templ.header.pixdim, moving);
  std::vector<double> f, g;
  f.reserve(templ.data.size());
  g.reserve(templ.data.size());
  for (int z = 0; z < grid[2]; ++z)
    for (int y = 0; y < grid[1]; ++y)
      for (int x = 0; x < grid[0]; ++x) {
        double m;
        if (!sample(moving, map(x, y, z), m)) continue;
        f.push_back(templ.at(x, y, z));
        g.push_back(m);
      }
  return f.size() < 2 ? 0.0 : ncc(f, g);
}

}  // namespace

bool RigidTransform::is_identity() const {
  return std::all_of(angles.begin(), angles.end(), [](double a) { return a == 0.0; }) &&
         std::all_of(translation.begin(), translation.end(), [](double t) { return t == 0.0; });
}

double ncc(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) fail(ErrorCode::kInvalidArgument, "ncc: lengths differ");
  if (f.size() < 2) fail(ErrorCode::kInvalidArgument, "ncc: need at least 2 samples");
  const double n = static_cast<double>(f.size());
  double mf = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    mf += f[i];
    mg += g[i];
  }
  mf /= n;
  mg /= n;
  double sfg = 0.0, sff = 0.0, sgg = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double df = f[i] - mf, dg = g[i] - mg;
    sfg += df * dg;
    sff += df * df;
    sgg += dg * dg;
  }
  if (sff == 0.0 || sgg == 0.0) return 0.0;
  return sfg / std::sqrt(sff * sgg);
}

RegistrationResult register_rigid(const Volume& moving, const Volume& templ,
                                  const RegistrationOptions& o) {
  if (is_constant(templ)) fail(ErrorCode::kDegenerateInput, "register: template is constant");
  if (is_constant(moving)) fail(ErrorCode::kDegenerateInput, "register: moving volume is constant");

  NccObjective objective(moving, templ);
  const double deg = std::numbers::pi / 180.0;

  // Coarse grid over translations at zero rotation.
  RigidTransform best;
  double best_score = objective(best, o.coarse_stride);
  const int nt = static_cast<int>(std::floor(o.max_translation / o.translation_step + 1e-9));
  for (int iz = -nt; iz <= nt; ++iz)
    for (int iy = -nt; iy <= nt; ++iy)
      for (int ix = -nt; ix <= nt; ++ix) {
        if (ix == 0 && iy == 0 && iz == 0) continue;
        RigidTransform t;
        t.translation = {ix * o.translation_step, iy * o.translation_step, iz * o.translation_step};
        const double s = objective(t, o.coarse_stride);
        if (s > best_score) {
          best_score = s;
          best = t;
        }
      }

  // Coarse grid over each rotation axis in turn, two sweeps.
  const int na = static_cast<int>(std::floor(o.max_angle_deg / o.angle_step_deg + 1e-9));
  for (int sweep = 0; sweep < 2; ++sweep) {
    bool moved = false;
    for (int axis = 0; axis < 3; ++axis) {
      for (int ia = -na; ia <= na; ++ia) {
        RigidTransform t = best;
        t.angles[axis] = ia * o.angle_step_deg * deg;
        if (t.angles[axis] == best.angles[axis]) continue;
        const double s = objective(t, o.coarse_stride);
        if (s > best_score) {
          best_score = s;
          best = t;
          moved = true;
        }
      }
    }
    if (!moved) break;
  }

  // Local pattern search with step halving.
  best_score = objective(best, o.refine_stride);
  double tstep = o.translation_step / 2.0;
  double astep = o.angle_step_deg / 2.0;
  for (;;) {
    for (int iter = 0; iter < 50; ++iter) {
      RigidTransform cand_best = best;
      double cand_score = best_score;
      for (int param = 0; param < 6; ++param)
        for (int sign : {-1, 1}) {
          RigidTransform t = best;
          if (param < 3) {
            t.translation[param] += sign * tstep;
            if (std::abs(t.translation[param]) > o.max_translation + 1e-9) continue;
          } else {
            t.angles[param - 3] += sign * astep * deg;
            if (std::abs(t.angles[param - 3]) > o.max_angle_deg * deg + 1e-9) continue;
          }
          const double s = objective(t, o.refine_stride);
          if (s > cand_score) {
            cand_score = s;
            cand_best = t;
          }
        }
      if (cand_score - best_score <= o.min_gain) break;
      best = cand_best;
      best_score = cand_score;
    }
    if (tstep <= o.min_translation_step + 1e-12 && astep <= o.min_angle_step_deg + 1e-12) break;
    tstep = std::max(tstep / 2.0, o.min_translation_step);
    astep = std::max(astep / 2.0, o.min_angle_step_deg);
  }

  RegistrationResult r;
  r.identity_ncc = overlap_ncc(moving, templ, RigidTransform{});
  r.transform = best;
  r.ncc = best.is_identity() ? r.identity_ncc : overlap_ncc(moving, templ, best);
  if (r.ncc < r.identity_ncc) {
    r.transform = RigidTransform{};
    r.ncc = r.identity_ncc;
  }
  return r;
}

Volume resample(const Volume& v, const RigidTransform& t, std::array<int, 3> grid,
                std::array<float, 3> pixdim) {
  Volume out(grid[0], grid[1], grid[2], pixdim);
  InverseMapper map(t, grid, pixdim, v);
  for (int z = 0; z < grid[2]; ++z)
    for (int y = 0; y < grid[1]; ++y)
      for (int x = 0; x < grid[0]; ++x) {
        double s = 0.0;
        if (!sample(v, map(x, y, z), s)) s = 0.0;
        out.at(x, y, z) = static_cast<float>(s);
      }
  return out;
}

Image volume_slice(const Volume& v, int z) {
  if (z < 0 || z >= v.nz()) fail(ErrorCode::kInvalidArgument, "slice index out of range");
  Image img(static_cast<int>(v.ny()), static_cast<int>(v.nx()));
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) img.at(y, x) = v.at(x, y, z);
  return img;
}

std::vector<Image> trim_slices(const std::vector<Image>& slices) {
  if (slices.size() != static_cast<std::size_t>(kResampledSlices))
    fail(ErrorCode::kWrongSliceCount, "trim expects " + std::to_string(kResampledSlices) +
                                          " slices, got " + std::to_string(slices.size()));
  return {slices.begin() + kTrimmedPerEnd, slices.end() - kTrimmedPerEnd};
}

std::vector<Image> trim_slices(const Volume& grid) {
  if (grid.nz() != kResampledSlices)
    fail(ErrorCode::kWrongSliceCount, "trim expects " + std::to_string(kResampledSlices) +
                                          " slices, got " + std::to_string(grid.nz()));
  std::vector<Image> slices;
  for (int z = 0; z < kResampledSlices; ++z) slices.push_back(volume_slice(grid, z));
  return trim_slices(slices);
}

Image intensity_normalize(const Image& slice) {
  if (slice.px.empty()) return slice;
  const double mx = *std::max_element(slice.px.begin(), slice.px.end());
  if (!(mx > 0.0)) return slice;
  Image out = slice;
  for (auto& p : out.px) p /= mx;
  return out;
}

void validate(const SliceStack& stack) {
  if (stack.slices.size() != static_cast<std::size_t>(kStackSlices))
    fail(ErrorCode::kWrongSliceCount, "slice stack must hold " + std::to_string(kStackSlices) + " slices");
  for (const auto& s : stack.slices) {
    if (s.rows != kGridSize || s.cols != kGridSize || s.px.size() != static_cast<std::size_t>(kGridSize) * kGridSize)
      fail(ErrorCode::kBadDims, "slice stack slices must be 64x64");
    for (double p : s.px)
      if (!(p >= 0.0 && p <= 1.0))
        fail(ErrorCode::kInvalidArgument, "slice stack intensities must lie in [0,1]");
  }
}

PreprocessResult preprocess(const Volume& v, const Volume& templ, std::string patient_id,
                            const RegistrationOptions& opts) {
  if (templ.nx() != kGridSize || templ.ny() != kGridSize || templ.nz() != kResampledSlices)
    fail(ErrorCode::kBadDims, "template must be 64x64x16");
  PreprocessResult r;
  r.registration = register_rigid(v, templ, opts);
  const Volume grid = resample(v, r.registration.transform,
                               {kGridSize, kGridSize, kResampledSlices}, templ.header.pixdim);
  r.stack.patient_id = std::move(patient_id);
  for (auto& slice : trim_slices(grid)) {
    for (auto& p : slice.px) p = std::max(p, 0.0);
    r.stack.slices.push_back(intensity_normalize(slice));
  }
  return r;
}

Volume stack_to_volume(const SliceStack& stack, std::array<float, 3> pixdim) {
  if (stack.slices.empty()) fail(ErrorCode::kWrongSliceCount, "empty slice stack");
  const auto& first = stack.slices.front();
  Volume v(first.cols, first.rows, static_cast<std::int64_t>(stack.slices.size()), pixdim);
  for (std::size_t z = 0; z < stack.slices.size(); ++z) {
    const auto& s = stack.slices[z];
    if (s.rows != first.rows || s.cols != first.cols) fail(ErrorCode::kBadDims, "ragged slice stack");
    for (int y = 0; y < s.rows; ++y)
      for (int x = 0; x < s.cols; ++x) v.at(x, y, static_cast<std::int64_t>(z)) = static_cast<float>(s.at(y, x));
  }
  return v;
}

}  // namespace mrtumor
