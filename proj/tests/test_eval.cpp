#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dani/error.hpp"
#include "dani/eval.hpp"
#include "dani/phantom.hpp"
#include "dani/preprocess.hpp"
#include "dani/rng.hpp"

using namespace dani;
namespace fs = std::filesystem;

namespace {

// Independent SSIM oracle: explicit 2D Gaussian window and direct weighted
// moment sums per window position.
double ssim_oracle(const TensorF& x, const TensorF& y, int window = 11,
                   double sigma = 1.5) {
  const int rows = x.dims[0], cols = x.dims[1];
  const int half = window / 2;
  std::vector<double> w2(std::size_t(window) * window);
  double wsum = 0.0;
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) {
      const double dy = i - half, dx = j - half;
      w2[std::size_t(i) * window + j] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      wsum += w2[std::size_t(i) * window + j];
    }
  for (auto& v : w2) v /= wsum;

  const double c1 = (0.01 * 2.0) * (0.01 * 2.0);
  const double c2 = (0.03 * 2.0) * (0.03 * 2.0);
  double acc = 0.0;
  int n = 0;
  for (int wy = 0; wy + window <= rows; ++wy) {
    for (int wx = 0; wx + window <= cols; ++wx) {
      double mx = 0, my = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double w = w2[std::size_t(i) * window + j];
          mx += w * x[std::size_t(wy + i) * cols + (wx + j)];
          my += w * y[std::size_t(wy + i) * cols + (wx + j)];
        }
      double vx = 0, vy = 0, vxy = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double w = w2[std::size_t(i) * window + j];
          const double dx = x[std::size_t(wy + i) * cols + (wx + j)] - mx;
          const double dy = y[std::size_t(wy + i) * cols + (wx + j)] - my;
          vx += w * dx * dx;
          vy += w * dy * dy;
          vxy += w * dx * dy;
        }
      acc += ((2 * mx * my + c1) * (2 * vxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  }
  return acc / n;
}

TensorF random_img(int g, Rng& rng) {
  TensorF t({g, g});
  for (auto& v : t.v) v = float(rng.uniform(-1.0, 1.0));
  return t;
}

TensorF constant_img(int g, float value) {
  TensorF t({g, g});
  for (auto& v : t.v) v = value;
  return t;
}

}  // namespace

TEST_CASE("ssim: identity, symmetry, and the constant-image closed form") {
  Rng rng(61);
  const TensorF x = random_img(24, rng);
  const TensorF y = random_img(24, rng);
  CHECK(eval::ssim(x, x) == 1.0);
  CHECK(eval::ssim(x, y) == doctest::Approx(eval::ssim(y, x)).epsilon(1e-12));
  CHECK(eval::ssim(x, y) < 1.0);
  CHECK(eval::ssim(x, y) > -1.0);

  // mu1=0, mu2=0.5, zero variances: ssim = c1 / (0.25 + c1), c1 = 4e-4
  const TensorF a = constant_img(16, 0.0f);
  const TensorF b = constant_img(16, 0.5f);
  CHECK(eval::ssim(a, b) == doctest::Approx(4e-4 / 0.2504).epsilon(1e-6));

  TensorF tiny({8, 8});
  CHECK_THROWS_AS(eval::ssim(tiny, tiny), DataError);
  TensorF other({24, 25});
  CHECK_THROWS_AS(eval::ssim(x, other), DataError);
}

TEST_CASE("ssim matches an independent direct-formula oracle") {
  Rng rng(62);
  for (int trial = 0; trial < 4; ++trial) {
    const TensorF x = random_img(32, rng);
    TensorF y = x;
    // correlated perturbation so values span the interesting range
    for (auto& v : y.v) v = float(0.8 * v + 0.2 * rng.uniform(-1.0, 1.0));
    CHECK(eval::ssim(x, y) == doctest::Approx(ssim_oracle(x, y)).epsilon(1e-9));
  }
}

TEST_CASE("monotonicity violation rate counts exact events") {
  auto frame = [](float v) { return constant_img(2, v); };
  CHECK(eval::monotonicity_violation_rate({frame(0.5f), frame(0.4f), frame(0.1f)}) == 0.0);
  CHECK(eval::monotonicity_violation_rate({frame(0.1f), frame(0.2f), frame(0.3f)}) == 1.0);
  CHECK(eval::monotonicity_violation_rate({frame(0.5f), frame(0.6f), frame(0.4f)}) == 0.5);
  // tolerance parameter forgives small increases
  CHECK(eval::monotonicity_violation_rate({frame(0.5f), frame(0.6f), frame(0.4f)}, 0.2) == 0.0);
  // equality is not a violation
  CHECK(eval::monotonicity_violation_rate({frame(0.5f), frame(0.5f)}) == 0.0);

  CHECK_THROWS_AS(eval::monotonicity_violation_rate({frame(0.5f)}), DataError);
  CHECK_THROWS_AS(
      eval::monotonicity_violation_rate({frame(0.5f), constant_img(3, 0.4f)}),
      DataError);
}

TEST_CASE("regularized incomplete beta oracle identities") {
  for (double x : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    CHECK(eval::reg_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    CHECK(eval::reg_incomplete_beta(2.5, 1.5, x) ==
          doctest::Approx(1.0 - eval::reg_incomplete_beta(1.5, 2.5, 1.0 - x))
              .epsilon(1e-12));
    // arcsine law: I_x(1/2, 1/2) = (2/pi) asin(sqrt(x))
    CHECK(eval::reg_incomplete_beta(0.5, 0.5, x) ==
          doctest::Approx(2.0 / M_PI * std::asin(std::sqrt(x))).epsilon(1e-10));
  }
  CHECK(eval::reg_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(eval::reg_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("paired t-test: degenerate and hand-computed cases") {
  const std::vector<double> a = {0.3, 0.5, 0.7};
  const auto self = eval::paired_t_test(a, a);
  CHECK(self.t == 0.0);
  CHECK(self.p == 1.0);
  CHECK(self.n == 3);

  // diffs {1,2,3}: t = 2*sqrt(3); for nu=2, p = 1 - t/sqrt(t^2+2)
  const std::vector<double> x = {1.0, 2.0, 3.0};
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  const auto r = eval::paired_t_test(x, zero);
  const double t = 2.0 * std::sqrt(3.0);
  CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(1.0 - t / std::sqrt(t * t + 2.0)).epsilon(1e-9));

  // sign flip keeps the two-sided p
  const auto rneg = eval::paired_t_test(zero, x);
  CHECK(rneg.t == doctest::Approx(-t).epsilon(1e-12));
  CHECK(rneg.p == doctest::Approx(r.p).epsilon(1e-12));

  CHECK_THROWS_AS(eval::paired_t_test({1.0}, {2.0}), DataError);
  CHECK_THROWS_AS(eval::paired_t_test({1.0, 2.0}, {1.0}), DataError);
}

TEST_CASE("synthesize_at_age is the alpha blend of the frame sequence") {
  Config cfg;
  cfg.grid_size = 32;
  cfg.latent = 8;
  auto model = nets::Model<float>::init(cfg.grid_size, cfg.latent, cfg.bins, 3);
  Rng rng(63);
  const TensorF baseline = random_img(32, rng);

  const auto frames = eval::synthesize_sequence(model, baseline, 2, cfg);
  REQUIRE(int(frames.size()) == cfg.bins);

  const double target = 72.3;
  const preprocess::AgeBinning binning{cfg.bins, cfg.age_min, cfg.age_max};
  const auto [a, alpha] = preprocess::age_to_bin(target, binning);
  const TensorF synth =
      eval::synthesize_at_age(model, baseline, 65.0, 2, target, cfg);
  for (std::size_t i = 0; i < synth.count(); ++i) {
    const double blend =
        alpha * frames[a - 1][i] + (1.0 - alpha) * frames[a][i];
    CHECK(synth[i] == doctest::Approx(blend).epsilon(1e-6));
  }
}

TEST_CASE("subject evaluation and the eight-cell ablation structure") {
  Config cfg;
  cfg.grid_size = 32;
  cfg.latent = 8;
  cfg.enable_p = false;  // keep personalization in the T cells light
  cfg.seed = 5;

  auto model = nets::Model<float>::init(cfg.grid_size, cfg.latent, cfg.bins, cfg.seed);
  const io::Checkpoint ckpt_base = model.to_checkpoint(cfg.serialize());
  Config cfg_c = cfg;
  cfg_c.enable_c = false;
  auto model_c = nets::Model<float>::init(cfg.grid_size, cfg.latent, cfg.bins, 6);
  const io::Checkpoint ckpt_c = model_c.to_checkpoint(cfg_c.serialize());

  std::vector<eval::EvalSubject> subjects;
  for (const auto& subj : phantom::make_cohort(cfg, 3, 3, 2.0)) {
    eval::EvalSubject s;
    s.subject_id = subj.subject_id;
    s.diagnosis = subj.diagnosis;
    s.ages = subj.visit_ages;
    for (const auto& sl : subj.slices)
      s.slices.push_back(preprocess::normalize_intensity(sl));
    subjects.push_back(std::move(s));
  }

  // per-subject scores: one per eligible follow-up (visits at +2 and +4 years)
  const auto scores = eval::evaluate_subject(ckpt_base, subjects[0], false,
                                             nullptr, nullptr, 0);
  REQUIRE(scores.size() == 2);
  for (double v : scores) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }

  // a subject with no follow-up >= 2 years is skipped with an empty result
  eval::EvalSubject brief = subjects[0];
  brief.ages = {70.0, 70.5, 71.0};
  CHECK(eval::evaluate_subject(ckpt_base, brief, false, nullptr, nullptr, 0).empty());

  eval::AblationInputs inputs;
  inputs.ckpt_base = &ckpt_base;
  inputs.ckpt_c = &ckpt_c;
  const auto report = eval::run_ablation(inputs, subjects, nullptr, nullptr, 1);
  REQUIRE(report.cells.size() == 8);
  const char* order[8] = {"baseline", "C", "T", "C-T", "P", "P-C", "P-T", "P-C-T"};
  for (int i = 0; i < 8; ++i) CHECK(report.cells[i].config == order[i]);
  for (const char* name : {"baseline", "C", "T", "C-T"}) {
    const auto* cell = report.find(name);
    REQUIRE(cell != nullptr);
    CHECK(cell->present);
    CHECK(cell->n == 3);
    CHECK(cell->ssim_std >= 0.0);
  }
  for (const char* name : {"P", "P-C", "P-T", "P-C-T"}) {
    const auto* cell = report.find(name);
    REQUIRE(cell != nullptr);
    CHECK_FALSE(cell->present);
  }
  CHECK(report.find("baseline")->p_vs_baseline == 1.0);
  const double p_c = report.find("C")->p_vs_baseline;
  CHECK(p_c >= 0.0);
  CHECK(p_c <= 1.0);
  CHECK(report.find("nope") == nullptr);

  // report serialization
  const fs::path dir = fs::temp_directory_path() / "dani_eval_report";
  fs::create_directories(dir);
  const std::string path = (dir / "ablation.csv").string();
  eval::write_report(path, report);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("#", 0) == 0);
  std::getline(in, line);
  CHECK(line == "config,n,ssim_mean,ssim_std,p_vs_baseline");
  std::getline(in, line);
  CHECK(line.rfind("baseline,3,", 0) == 0);
  bool absent_row = false;
  while (std::getline(in, line)) absent_row |= (line == "P,absent,,,");
  CHECK(absent_row);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  fs::remove_all(dir);
}
