#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <vector>

#include "dani/error.hpp"
#include "dani/phantom.hpp"
#include "dani/preprocess.hpp"
#include "dani/regions.hpp"
#include "dani/rng.hpp"
#include "dani/svr.hpp"

#include "qp_oracle.hpp"

using namespace dani;
using namespace dani::testoracle;
namespace fs = std::filesystem;

namespace {

std::vector<svr::RatePair> random_pairs(Rng& rng, int n) {
  std::vector<svr::RatePair> pairs;
  for (int i = 0; i < n; ++i) {
    svr::RatePair p;
    p.age_baseline = rng.uniform(63.0, 80.0);
    p.age_followup = p.age_baseline + rng.uniform(0.5, 7.0);
    p.diagnosis = int(rng.below(4));
    p.target = rng.uniform(0.7, 1.0);
    pairs.push_back(p);
  }
  return pairs;
}

TensorF constant_mask(int g) {
  TensorF m({g, g});
  for (auto& v : m.v) v = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("regional_ratio definitions") {
  TensorF early({2, 2}), late({2, 2}), mask({2, 2});
  for (auto& v : mask.v) v = 1.0f;

  // identical slices
  for (std::size_t i = 0; i < 4; ++i) early[i] = late[i] = float(0.1 * double(i) - 0.2);
  CHECK(svr::regional_ratio(early, late, mask) == 1.0);

  // late everywhere -1 (maps to 0): eps / (S + eps)
  for (auto& v : late.v) v = -1.0f;
  double s = 0.0;
  for (auto v : early.v) s += (double(v) + 1.0) * 0.5;
  CHECK(svr::regional_ratio(early, late, mask) ==
        doctest::Approx(0.1 / (s + 0.1)).epsilon(1e-12));

  // hand case in [0,1] units: early 0.5 everywhere, late 0.0 everywhere
  for (auto& v : early.v) v = 0.0f;   // signed 0.0 == 0.5 in [0,1] units
  for (auto& v : late.v) v = -1.0f;   // signed -1 == 0.0 in [0,1] units
  CHECK(svr::regional_ratio(early, late, mask) ==
        doctest::Approx(0.1 / 2.1).epsilon(1e-12));

  TensorF wrong({3, 3});
  CHECK_THROWS_AS(svr::regional_ratio(early, late, wrong), DataError);
}

TEST_CASE("dataset construction and the monotone filter") {
  Config cfg;
  cfg.grid_size = 32;
  cfg.seed = 21;

  regions::RegionMaskSet masks;
  masks.masks.push_back(constant_mask(32));

  SUBCASE("clean trajectories drop nothing") {
    Config clean = cfg;
    clean.noise_sigma = 0.0;
    const auto cohort = phantom::make_cohort(clean, 6, 3, 2.0);
    std::vector<svr::NormalizedTrajectory> trajs;
    for (const auto& subj : cohort) {
      svr::NormalizedTrajectory t;
      t.diagnosis = subj.diagnosis;
      t.ages = subj.visit_ages;
      for (const auto& s : subj.slices)
        t.slices.push_back(preprocess::to_signed_units(s));
      trajs.push_back(std::move(t));
    }
    std::size_t kept = 0, dropped = 0;
    const auto ds = svr::build_svr_dataset(trajs, masks, &kept, &dropped);
    CHECK(dropped == 0);
    CHECK(kept == 6 * 3);  // 3 increasing pairs per 3-visit subject, 1 region
    for (const auto& p : ds[0]) {
      CHECK(p.target <= 1.0);
      CHECK(p.age_baseline < p.age_followup);
    }
  }

  SUBCASE("single-visit subjects contribute no pairs") {
    svr::NormalizedTrajectory t;
    t.diagnosis = 0;
    t.ages = {70.0};
    TensorF s({32, 32});
    for (auto& v : s.v) v = 0.1f;
    t.slices.push_back(s);
    std::size_t kept = 0, dropped = 0;
    const auto ds = svr::build_svr_dataset({t}, masks, &kept, &dropped);
    CHECK(kept == 0);
    CHECK(dropped == 0);
    CHECK(ds[0].empty());
  }

  SUBCASE("noisy cohort drops some but fewer than half") {
    const auto cohort = phantom::make_cohort(cfg, 40, 3, 1.0);
    std::vector<svr::NormalizedTrajectory> trajs;
    for (const auto& subj : cohort) {
      svr::NormalizedTrajectory t;
      t.diagnosis = subj.diagnosis;
      t.ages = subj.visit_ages;
      for (const auto& s : subj.slices)
        t.slices.push_back(preprocess::to_signed_units(s));
      trajs.push_back(std::move(t));
    }
    std::size_t kept = 0, dropped = 0;
    const auto ds = svr::build_svr_dataset(trajs, masks, &kept, &dropped);
    const double frac = double(dropped) / double(kept + dropped);
    CHECK(frac > 0.0);
    CHECK(frac < 0.5);
    for (const auto& p : ds[0]) CHECK(p.target <= 1.0);
  }
}

TEST_CASE("constant targets are reproduced within the epsilon tube") {
  Rng rng(31);
  std::vector<svr::RatePair> pairs;
  for (int i = 0; i < 12; ++i) {
    svr::RatePair p;
    p.age_baseline = rng.uniform(63.0, 80.0);
    p.age_followup = p.age_baseline + rng.uniform(1.0, 6.0);
    p.diagnosis = int(rng.below(4));
    p.target = 0.9;
    pairs.push_back(p);
  }
  const auto model = svr::fit_svr(pairs);
  for (int q = 0; q < 20; ++q) {
    const double ab = rng.uniform(63.0, 80.0);
    const double af = ab + rng.uniform(1.0, 6.0);
    CHECK(svr::predict_rate(model, ab, af, int(rng.below(4))) ==
          doctest::Approx(0.9).epsilon(0.015));
  }
}

TEST_CASE("SMO dual objective matches the dense QP oracle within 1e-6") {
  Rng rng(77);
  for (int n : {5, 10, 25, 50}) {
    const auto pairs = random_pairs(rng, n);
    const auto model = svr::fit_svr(pairs);
    const auto qp = build_dual(pairs, 1.0, 0.01, 1.0 / 3.0);
    const double oracle = solve_qp(qp);
    CHECK(model.dual_objective == doctest::Approx(oracle).epsilon(0).scale(1).epsilon(1e-9));
    CHECK(std::abs(model.dual_objective - oracle) < 1e-6);
  }
}

TEST_CASE("dual feasibility: coefficients sum to zero and stay in [-C, C]") {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pairs = random_pairs(rng, 20);
    const auto model = svr::fit_svr(pairs);
    double sum = 0.0;
    for (double b : model.dual_coef) {
      sum += b;
      CHECK(std::abs(b) <= 1.0 + 1e-12);
      CHECK(b != 0.0);  // only support vectors are stored
    }
    CHECK(std::abs(sum) < 1e-9);
  }
}

TEST_CASE("non-support training points are predicted within epsilon") {
  Rng rng(55);
  // smooth target surface so the fit has interior (non-support) points
  std::vector<svr::RatePair> pairs;
  for (int i = 0; i < 30; ++i) {
    svr::RatePair p;
    p.age_baseline = rng.uniform(63.0, 78.0);
    p.age_followup = p.age_baseline + rng.uniform(1.0, 8.0);
    p.diagnosis = int(rng.below(4));
    p.target = 1.0 - 0.004 * (p.age_followup - p.age_baseline);
    pairs.push_back(p);
  }
  const auto model = svr::fit_svr(pairs);
  int n_checked = 0;
  for (const auto& p : pairs) {
    bool is_support = false;
    for (const auto& sv : model.support)
      if (sv[0] == p.age_baseline && sv[1] == p.age_followup &&
          sv[2] == double(p.diagnosis))
        is_support = true;
    if (is_support) continue;
    ++n_checked;
    CHECK(std::abs(svr::predict_rate(model, p.age_baseline, p.age_followup,
                                     p.diagnosis) -
                   p.target) <= 0.01 + 1e-6);
  }
  CHECK(n_checked > 0);
}

TEST_CASE("prediction clamps and state errors") {
  svr::RegionSvrModel model;
  CHECK_THROWS_AS(svr::predict_rate(model, 65.0, 70.0, 1), std::logic_error);

  model.fitted = true;  // empty expansion: prediction = bias
  model.bias = 1.2;
  CHECK(svr::predict_rate(model, 65.0, 70.0, 1) == 1.0);
  model.bias = -0.3;
  CHECK(svr::predict_rate(model, 65.0, 70.0, 1) == 0.05);

  CHECK_THROWS_AS(svr::fit_svr({svr::RatePair{}}), DataError);
}

TEST_CASE("phantom cortex region: predictions track ground-truth ratios") {
  Config cfg;
  cfg.grid_size = 32;
  cfg.seed = 13;
  cfg.noise_sigma = 0.0;

  // cortex band mask: cortex voxels at age_max for a reference morphology
  const auto ref = phantom::sample_morphology(cfg, 0);
  const TensorF old = phantom::render_clean(ref, cfg.age_max, 3, cfg);
  TensorF mask({32, 32});
  for (std::size_t i = 0; i < old.count(); ++i)
    if (old[i] > 0.15f) mask[i] = 1.0f;
  regions::RegionMaskSet masks;
  masks.masks.push_back(mask);

  const auto cohort = phantom::make_cohort(cfg, 30, 4, 2.0);
  std::vector<svr::NormalizedTrajectory> trajs;
  for (const auto& subj : cohort) {
    svr::NormalizedTrajectory t;
    t.diagnosis = subj.diagnosis;
    t.ages = subj.visit_ages;
    for (const auto& s : subj.slices)
      t.slices.push_back(preprocess::to_signed_units(s));
    trajs.push_back(std::move(t));
  }
  const auto ds = svr::build_svr_dataset(trajs, masks);
  const auto model = svr::fit_svr(ds[0]);

  double mae = 0.0;
  int n = 0;
  for (double base : {64.0, 69.0, 74.0}) {
    for (double gap : {2.0, 5.0, 9.0}) {
      if (base + gap > cfg.age_max) continue;
      for (int d = 0; d < 4; ++d) {
        const double truth =
            phantom::ground_truth_ratio(ref, mask, base, base + gap, d, cfg);
        mae += std::abs(svr::predict_rate(model, base, base + gap, d) - truth);
        ++n;
      }
    }
  }
  CHECK(mae / n < 0.05);

  // more degeneration with higher diagnosis at a long gap
  CHECK(svr::predict_rate(model, 66.0, 76.0, 3) <
        svr::predict_rate(model, 66.0, 76.0, 0));
}

TEST_CASE("model persistence round trip preserves predictions") {
  Rng rng(91);
  const auto pairs = random_pairs(rng, 15);
  std::vector<svr::RegionSvrModel> models = {svr::fit_svr(pairs, 4),
                                             svr::fit_svr(random_pairs(rng, 8), 9)};
  const fs::path dir =
      fs::temp_directory_path() / ("dani_svr_" + std::to_string(rng.bits()));
  fs::create_directories(dir);
  const std::string path = (dir / "models.txt").string();
  svr::save_models(path, models);
  const auto back = svr::load_models(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].region_id == 4);
  CHECK(back[1].region_id == 9);
  for (int q = 0; q < 10; ++q) {
    const double ab = rng.uniform(63.0, 80.0);
    const double af = ab + rng.uniform(1.0, 5.0);
    const int d = int(rng.below(4));
    for (int k = 0; k < 2; ++k)
      CHECK(svr::predict_rate(back[k], ab, af, d) ==
            svr::predict_rate(models[k], ab, af, d));
  }
  CHECK_THROWS_AS(svr::load_models((dir / "missing.txt").string()), DataError);
  fs::remove_all(dir);
}
