#include "mrtumor/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mrtumor/error.hpp"
#include "mrtumor/parallel.hpp"
#include "mrtumor/rng.hpp"

namespace mrtumor {

namespace {

struct Blob {
  double cx, cy;   // in-plane center, voxel coordinates
  double rx, ry;   // in-plane semi-axes at the blob's central slice
  int z0, span;    // occupied slices [z0, z0 + span)
  double intensity;

  double zc() const { return z0 + (span - 1) / 2.0; }
  double rz() const { return span / 2.0 + 0.5; }
};

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::kInvalidSpec, what);
}

double brain_scale_at(const PhantomSpec& s, double z) {
  const double cz = (s.dims[2] - 1) / 2.0;
  const double t = (z - cz) / s.brain_semi_axes[2];
  return t * t >= 1.0 ? 0.0 : std::sqrt(1.0 - t * t);
}

Blob sample_blob(const PhantomSpec& s, Rng& rng) {
  const int z_lo = kTrimmedPerEnd;
  const int z_hi = s.dims[2] - 1 - kTrimmedPerEnd;
  const int span = rng.range(s.tumor_span_min, s.tumor_span_max);
  const int z0 = rng.range(z_lo, z_hi - span + 1);

  double rx = rng.uniform(s.tumor_radius_min, s.tumor_radius_max);
  double ry = rng.uniform(s.tumor_radius_min, s.tumor_radius_max);

  double fz = 1.0;
  for (int z = z0; z < z0 + span; ++z) fz = std::min(fz, brain_scale_at(s, z));
  const double bx = s.brain_semi_axes[0] * fz;
  const double by = s.brain_semi_axes[1] * fz;
  const double mid_x = (s.dims[0] - 1) / 2.0;
  const double mid_y = (s.dims[1] - 1) / 2.0;
  const double sign = s.laterality == Laterality::kLeft ? -1.0 : 1.0;

  for (int shrink = 0; shrink < 20; ++shrink) {
    const double d_lo = rx + 1.0;
    const double d_hi = bx - rx - 2.0;
    const double e_hi = by - ry - 2.0;
    if (d_hi > d_lo && e_hi > 0.0) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double d = rng.uniform(d_lo, d_hi);
        const double e = rng.uniform(-e_hi, e_hi);
        const double u = (d + rx) / bx;
        const double v = (std::abs(e) + ry) / by;
        if (u * u + v * v <= 1.0)
          return Blob{mid_x + sign * d, mid_y + e, rx, ry, z0, span, s.tumor};
      }
    }
    rx *= 0.9;
    ry *= 0.9;
  }
  fail(ErrorCode::kInvalidSpec, "tumor does not fit inside one hemisphere of the brain");
}

}  // namespace

void validate(const PhantomSpec& s) {
  require(s.dims[0] >= 8 && s.dims[1] >= 8 && s.dims[2] >= 2 * kTrimmedPerEnd + 2,
          "phantom dims too small");
  require(s.dims[0] % 2 == 0 && s.dims[1] % 2 == 0, "phantom in-plane dims must be even");
  for (int k = 0; k < 3; ++k) {
    require(s.pixdim[k] > 0.0f, "pixdim must be positive");
    require(s.brain_semi_axes[k] > 0.0, "brain semi-axes must be positive");
  }
  require(s.brain_semi_axes[0] <= s.dims[0] / 2.0 && s.brain_semi_axes[1] <= s.dims[1] / 2.0,
          "brain ellipsoid must fit in-plane");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(unit(s.background) && unit(s.tissue) && unit(s.tumor), "intensities must lie in [0,1]");
  require(s.noise_sigma >= 0.0 && std::isfinite(s.noise_sigma), "noise sigma must be >= 0");
  if (!s.has_tumor) return;
  require(s.tumor > s.tissue, "tumor intensity must exceed tissue intensity");
  require(s.tumor_count >= 1 && s.tumor_count <= 2, "tumor count must be 1 or 2");
  require(s.tumor_radius_min > 0.0 && s.tumor_radius_min <= s.tumor_radius_max,
          "tumor radius range invalid");
  require(s.tumor_radius_max * 2.0 + 3.0 <= s.brain_semi_axes[0],
          "tumor too wide to fit inside one hemisphere");
  require(s.tumor_span_min >= 2 && s.tumor_span_min <= s.tumor_span_max,
          "tumor slice span must be >= 2");
  require(s.tumor_span_max <= s.dims[2] - 2 * kTrimmedPerEnd, "tumor span exceeds kept slices");
}

std::vector<int> GroundTruth::stack_slices() const {
  std::vector<int> out;
  for (int z : tumor_slices) {
    const int s = z - kTrimmedPerEnd;
    if (s >= 0 && s < kStackSlices) out.push_back(s);
  }
  return out;
}

Patient generate_patient(const PhantomSpec& spec, std::uint64_t seed, std::string id) {
  validate(spec);
  Rng rng(seed);

  std::vector<Blob> blobs;
  if (spec.has_tumor)
    for (int b = 0; b < spec.tumor_count; ++b) blobs.push_back(sample_blob(spec, rng));

  const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
  Patient p;
  p.id = std::move(id);
  p.volume = Volume(nx, ny, nz, spec.pixdim);
  p.truth.masks.assign(nz, Mask(ny, nx));

  const double cx0 = (nx - 1) / 2.0, cy0 = (ny - 1) / 2.0, cz0 = (nz - 1) / 2.0;
  const auto& ax = spec.brain_semi_axes;
  for (int z = 0; z < nz; ++z) {
    const double zs = z - spec.shift[2];
    for (int y = 0; y < ny; ++y) {
      const double ys = y - spec.shift[1];
      for (int x = 0; x < nx; ++x) {
        const double xs = x - spec.shift[0];
        const double bx = (xs - cx0) / ax[0], by = (ys - cy0) / ax[1], bz = (zs - cz0) / ax[2];
        double value = spec.background;
        if (bx * bx + by * by + bz * bz <= 1.0) {
          value = spec.tissue;
          for (const auto& blob : blobs) {
            const double zi = std::round(zs);
            if (zs != zi || zi < blob.z0 || zi >= blob.z0 + blob.span) continue;
            const double tz = (zs - blob.zc()) / blob.rz();
            const double f = std::sqrt(1.0 - tz * tz);
            const double tx = (xs - blob.cx) / (blob.rx * f);
            const double ty = (ys - blob.cy) / (blob.ry * f);
            if (tx * tx + ty * ty <= 1.0) {
              value = std::max(value, blob.intensity);
              p.truth.masks[z].set(y, x);
            }
          }
        }
        p.volume.at(x, y, z) = static_cast<float>(value);
      }
    }
  }

  if (spec.noise_sigma > 0.0) {
    for (auto& v : p.volume.data) {
      // Truncated at 3 sigma so every voxel stays within 3 sigma of its mean.
      double z = rng.normal();
      while (std::abs(z) > 3.0) z = rng.normal();
      const double noisy = v + spec.noise_sigma * z;
      v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }

  for (int z = 0; z < nz; ++z)
    if (!p.truth.masks[z].empty()) p.truth.tumor_slices.push_back(z);
  p.truth.has_tumor = !p.truth.tumor_slices.empty();
  p.label = p.truth.has_tumor ? 1 : -1;
  return p;
}

Volume make_template(const PhantomSpec& spec) {
  PhantomSpec clean = spec;
  clean.noise_sigma = 0.0;
  clean.has_tumor = false;
  clean.shift = {0, 0, 0};
  return generate_patient(clean, 0, "template").volume;
}

void validate(const CohortSpec& c) {
  require(c.n_normal >= 1 && c.n_tumor >= 1, "cohort counts must be >= 1");
  require(c.contrast_min > 0.0 && c.contrast_min <= c.contrast_max, "contrast range invalid");
  require(c.base.tissue + c.contrast_max + c.tissue_jitter <= 1.0, "tumor intensity would exceed 1");
  require(c.brain_scale_jitter >= 0.0 && c.brain_scale_jitter < 0.5 && c.tissue_jitter >= 0.0, "jitter must be >= 0");
  require(c.base.tissue - c.tissue_jitter > c.base.background, "tissue must stay above background");
  require(c.two_blob_probability >= 0.0 && c.two_blob_probability <= 1.0,
          "two-blob probability must lie in [0,1]");
  PhantomSpec probe = c.base;
  probe.has_tumor = true;
  probe.tumor = std::min(1.0, c.base.tissue + c.contrast_min);
  probe.brain_semi_axes[0] *= 1.0 - c.brain_scale_jitter;
  probe.brain_semi_axes[1] *= 1.0 - c.brain_scale_jitter;
  validate(probe);
}

std::vector<Patient> generate_cohort(const CohortSpec& c, std::uint64_t seed, int workers) {
  validate(c);
  const int total = c.n_normal + c.n_tumor;
  std::vector<Patient> out(total);
  parallel_for(static_cast<std::size_t>(total), workers, [&](std::size_t k) {
    Rng jitter(derive_seed(seed, k));
    PhantomSpec s = c.base;
    const double scale = 1.0 + jitter.uniform(-c.brain_scale_jitter, c.brain_scale_jitter);
    s.brain_semi_axes[0] *= scale;
    s.brain_semi_axes[1] *= scale;
    s.brain_semi_axes[0] = std::min(s.brain_semi_axes[0], s.dims[0] / 2.0);
    s.brain_semi_axes[1] = std::min(s.brain_semi_axes[1], s.dims[1] / 2.0);
    s.tissue += jitter.uniform(-c.tissue_jitter, c.tissue_jitter);
    s.has_tumor = static_cast<int>(k) >= c.n_normal;
    if (s.has_tumor) {
      s.tumor = s.tissue + jitter.uniform(c.contrast_min, c.contrast_max);
      s.laterality = jitter.uniform() < 0.5 ? Laterality::kLeft : Laterality::kRight;
      s.tumor_count = jitter.uniform() < c.two_blob_probability ? 2 : 1;
    }
    char id[16];
    std::snprintf(id, sizeof(id), "P%04zu", k);
    out[k] = generate_patient(s, jitter.next(), id);
  });
  return out;
}

}  // namespace mrtumor
