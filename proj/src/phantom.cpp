#include "dani/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "dani/error.hpp"
#include "dani/rng.hpp"

namespace dani::phantom {

namespace {

constexpr double kVentricleIntensity = 0.1;
constexpr double kRatioEps = 0.1;

// stream tags for seed derivation
constexpr std::uint64_t kMorphStream = 0x4d4f5250;  // "MORP"
constexpr std::uint64_t kNoiseStream = 0x4e4f4953;  // "NOIS"
constexpr std::uint64_t kAgeStream = 0x41474553;    // "AGES"

double cortex_intensity(const SubjectMorphology& m, double age, int diagnosis,
                        const Config& cfg) {
  const double rate = cfg.atrophy_rate_base + cfg.atrophy_rate_per_dx * diagnosis;
  const double c = cfg.base_cortex_intensity + m.intensity_offset -
                   rate * (age - cfg.age_min);
  return std::clamp(c, 0.0, 1.0);
}

}  // namespace

SubjectMorphology sample_morphology(const Config& cfg, std::uint64_t subject_seed) {
  Rng rng(Rng::derive(cfg.seed, Rng::derive(subject_seed, kMorphStream)));
  const double g = cfg.grid_size;
  SubjectMorphology m;
  m.brain_a = rng.uniform(0.33, 0.40) * g;
  m.brain_b = rng.uniform(0.27, 0.34) * g;
  m.rotation = rng.uniform(-0.3, 0.3);
  m.vent_a = rng.uniform(0.06, 0.09) * g;
  m.vent_b = rng.uniform(0.05, 0.075) * g;
  m.intensity_offset = rng.uniform(-0.05, 0.05);

  // keep the brain inside the grid with a 2-voxel margin
  const double cap = g / 2.0 - 2.2;
  m.brain_a = std::min(m.brain_a, cap);
  m.brain_b = std::min(m.brain_b, cap);

  // keep the fully grown ventricle strictly inside the brain
  const double growth_max = (cfg.ventricle_growth_base + 3 * cfg.ventricle_growth_per_dx) *
                            (cfg.age_max - cfg.age_min);
  const double vent_cap_a = 0.7 * m.brain_a - growth_max;
  const double vent_cap_b = 0.7 * m.brain_b - growth_max;
  m.vent_a = std::clamp(m.vent_a, 1.0, std::max(1.0, vent_cap_a));
  m.vent_b = std::clamp(m.vent_b, 1.0, std::max(1.0, vent_cap_b));
  return m;
}

TensorF render_clean(const SubjectMorphology& m, double age, int diagnosis,
                     const Config& cfg) {
  if (age < cfg.age_min - 1e-9 || age > cfg.age_max + 1e-9)
    throw DataError("render_clean: age outside [age_min, age_max]");
  if (diagnosis < 0 || diagnosis > 3)
    throw DataError("render_clean: diagnosis must be 0..3");

  const int g = cfg.grid_size;
  const double c = cortex_intensity(m, age, diagnosis, cfg);
  // ventricle never brighter than cortex, so trajectories stay monotone even
  // for extreme configurations
  const double vent = std::min(kVentricleIntensity, c);

  const double grow = (cfg.ventricle_growth_base + cfg.ventricle_growth_per_dx * diagnosis) *
                      (age - cfg.age_min);
  const double va = std::min(m.vent_a + grow, 0.85 * m.brain_a);
  const double vb = std::min(m.vent_b + grow, 0.85 * m.brain_b);

  const double cx = (g - 1) / 2.0, cy = (g - 1) / 2.0;
  const double cs = std::cos(m.rotation), sn = std::sin(m.rotation);

  TensorF img({g, g});
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      const double u = x - cx, w = y - cy;
      const double ur = u * cs + w * sn;
      const double wr = -u * sn + w * cs;
      const double qb = (ur / m.brain_a) * (ur / m.brain_a) +
                        (wr / m.brain_b) * (wr / m.brain_b);
      double val = 0.0;
      if (qb <= 1.0) {
        const double qv = (ur / va) * (ur / va) + (wr / vb) * (wr / vb);
        val = qv <= 1.0 ? vent : c;
      }
      img[std::size_t(y) * g + x] = float(val);
    }
  }
  return img;
}

SubjectTrajectory sample_subject(const Config& cfg, std::uint64_t subject_seed,
                                 int diagnosis, double baseline_age, int n_visits,
                                 double interval) {
  if (n_visits < 1) throw DataError("sample_subject: n_visits must be >= 1");
  if (diagnosis < 0 || diagnosis > 3)
    throw DataError("sample_subject: diagnosis must be 0..3");
  const double last_age = baseline_age + (n_visits - 1) * interval;
  if (baseline_age < cfg.age_min - 1e-9 || last_age > cfg.age_max + 1e-9)
    throw DataError("sample_subject: visit ages exceed [age_min, age_max]");

  SubjectTrajectory t;
  t.subject_id = "s" + std::to_string(subject_seed);
  t.diagnosis = diagnosis;
  t.morphology = sample_morphology(cfg, subject_seed);

  Rng noise(Rng::derive(cfg.seed, Rng::derive(subject_seed, kNoiseStream)));
  const float lo = float(-5.0 * cfg.noise_sigma);
  const float hi = float(1.0 + 5.0 * cfg.noise_sigma);
  for (int j = 0; j < n_visits; ++j) {
    const double age = baseline_age + j * interval;
    t.visit_ages.push_back(age);
    TensorF img = render_clean(t.morphology, age, diagnosis, cfg);
    if (cfg.noise_sigma > 0) {
      for (auto& p : img.v) {
        p = std::clamp(p + float(cfg.noise_sigma * noise.gaussian()), lo, hi);
      }
    }
    t.slices.push_back(std::move(img));
  }
  return t;
}

double ground_truth_ratio(const SubjectMorphology& m, const TensorF& region_mask,
                          double age_early, double age_late, int diagnosis,
                          const Config& cfg) {
  if (age_early > age_late)
    throw DataError("ground_truth_ratio: age_early must not exceed age_late");
  const TensorF early = render_clean(m, age_early, diagnosis, cfg);
  const TensorF late = render_clean(m, age_late, diagnosis, cfg);
  if (!early.same_shape(region_mask))
    throw DataError("ground_truth_ratio: mask shape mismatch");
  double se = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < early.count(); ++i) {
    se += double(early[i]) * region_mask[i];
    sl += double(late[i]) * region_mask[i];
  }
  return (sl + kRatioEps) / (se + kRatioEps);
}

std::vector<SubjectTrajectory> make_cohort(const Config& cfg, int n_subjects,
                                           int n_visits, double interval,
                                           int first_subject_index) {
  std::vector<SubjectTrajectory> cohort;
  cohort.reserve(n_subjects);
  const double baseline_max = cfg.age_max - (n_visits - 1) * interval;
  if (baseline_max < cfg.age_min)
    throw DataError("make_cohort: visit span exceeds the age range");
  for (int i = 0; i < n_subjects; ++i) {
    const std::uint64_t subject_seed = std::uint64_t(first_subject_index + i);
    Rng rng(Rng::derive(cfg.seed, Rng::derive(subject_seed, kAgeStream)));
    const int diagnosis = int(subject_seed % 4);
    const double baseline = rng.uniform(cfg.age_min, baseline_max);
    cohort.push_back(
        sample_subject(cfg, subject_seed, diagnosis, baseline, n_visits, interval));
  }
  return cohort;
}

}  // namespace dani::phantom
