#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dani/config.hpp"
#include "dani/tensor.hpp"

// Procedural longitudinal brain phantoms: a rotated cortex ellipse with a
// nested ventricle. Cortex intensity decays linearly with age at a
// diagnosis-dependent rate, the ventricle grows linearly, so every clean
// voxel trajectory is non-increasing and regional progression ratios have a
// closed form.

namespace dani::phantom {

struct SubjectMorphology {
  double brain_a = 0, brain_b = 0;  // semi-axes, voxels
  double rotation = 0;              // radians
  double vent_a = 0, vent_b = 0;    // ventricle base semi-axes, voxels
  double intensity_offset = 0;      // per-subject cortex offset
};

struct SubjectTrajectory {
  std::string subject_id;
  int diagnosis = 0;  // 0..3
  SubjectMorphology morphology;
  std::vector<double> visit_ages;  // strictly increasing
  std::vector<TensorF> slices;     // noisy renders, one per visit
};

SubjectMorphology sample_morphology(const Config& cfg, std::uint64_t subject_seed);

// Clean render: background 0, ventricle 0.1, cortex
// c0 + offset - (r0 + r1*d)*(age - age_min). Values in [0,1].
TensorF render_clean(const SubjectMorphology& m, double age, int diagnosis,
                     const Config& cfg);

SubjectTrajectory sample_subject(const Config& cfg, std::uint64_t subject_seed,
                                 int diagnosis, double baseline_age, int n_visits,
                                 double interval);

// (sum clean(age_late)*mask + eps) / (sum clean(age_early)*mask + eps), eps=0.1
double ground_truth_ratio(const SubjectMorphology& m, const TensorF& region_mask,
                          double age_early, double age_late, int diagnosis,
                          const Config& cfg);

// Cohort synthesis: diagnosis cycles 0..3, baseline ages drawn uniformly so
// all visits fit in [age_min, age_max]. first_subject_index separates
// train/test populations under one config seed.
std::vector<SubjectTrajectory> make_cohort(const Config& cfg, int n_subjects,
                                           int n_visits, double interval,
                                           int first_subject_index = 0);

}  // namespace dani::phantom
