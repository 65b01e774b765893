#pragma once

#include <string>
#include <vector>

#include "dani/config.hpp"
#include "dani/io.hpp"
#include "dani/regions.hpp"
#include "dani/svr.hpp"
#include "dani/tensor.hpp"
#include "dani/train.hpp"

// Quantitative evaluation: Gaussian-windowed SSIM, exact-sign monotonicity
// violation rate, per-subject follow-up scoring with optional test-time
// personalization, and the eight-cell P/C/T ablation grid with paired
// t-tests against the baseline cell.

namespace dani::eval {

// Standard SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range L=2 (inputs in [-1,1]); mean over valid window positions only.
double ssim(const TensorF& x, const TensorF& y, int window = 11,
            double sigma = 1.5, double k1 = 0.01, double k2 = 0.03);

// Fraction of (consecutive pair, voxel) events with g_{i+1} > g_i + delta.
double monotonicity_violation_rate(const std::vector<TensorF>& frames,
                                   double delta = 0.0);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int n = 0;
};

// Two-sided paired t-test; zero-variance differences give t=0, p=1.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), exposed for oracle cross-checks.
double reg_incomplete_beta(double a, double b, double x);

// One subject's visit history in network units, first visit = baseline.
struct EvalSubject {
  std::string subject_id;
  int diagnosis = 0;
  std::vector<double> ages;      // strictly increasing
  std::vector<TensorF> slices;   // normalized, one per visit
};

// Encode the baseline, generate all A frames, alpha-blend at `target_age`.
TensorF synthesize_at_age(nets::Model<float>& model, const TensorF& baseline,
                          double baseline_age, int diagnosis, double target_age,
                          const Config& cfg);

// Generate the full g_1..g_A sequence from the baseline encoding.
std::vector<TensorF> synthesize_sequence(nets::Model<float>& model,
                                         const TensorF& baseline, int diagnosis,
                                         const Config& cfg);

// SSIM per eligible follow-up (>= min_followup_years after baseline).
// Optionally personalizes on the baseline slice first. An empty result means
// the subject had no eligible follow-up and was skipped.
std::vector<double> evaluate_subject(const io::Checkpoint& ckpt,
                                     const EvalSubject& subject, bool use_t,
                                     const regions::RegionMaskSet* masks,
                                     const std::vector<svr::RegionSvrModel>* models,
                                     int personalize_iters = 200,
                                     double min_followup_years = 2.0);

struct AblationCell {
  std::string config;  // baseline, C, T, C-T, P, P-C, P-T, P-C-T
  bool present = false;
  int n = 0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double p_vs_baseline = 1.0;
  std::vector<double> per_subject;  // per-subject mean SSIM
};

struct AblationReport {
  std::vector<AblationCell> cells;

  const AblationCell* find(const std::string& config) const;
};

// Checkpoints for the four training-time configurations; null = absent cell.
struct AblationInputs {
  const io::Checkpoint* ckpt_base = nullptr;  // neither P nor C
  const io::Checkpoint* ckpt_c = nullptr;
  const io::Checkpoint* ckpt_p = nullptr;
  const io::Checkpoint* ckpt_pc = nullptr;
};

AblationReport run_ablation(const AblationInputs& inputs,
                            const std::vector<EvalSubject>& subjects,
                            const regions::RegionMaskSet* masks,
                            const std::vector<svr::RegionSvrModel>* models,
                            int personalize_iters = 200);

// CSV: config,n,ssim_mean,ssim_std,p_vs_baseline (header comment documents
// the per-subject-mean-then-cohort aggregation).
void write_report(const std::string& path, const AblationReport& report);

}  // namespace dani::eval
