#include "dani/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dani/error.hpp"
#include "dani/personalize.hpp"
#include "dani/preprocess.hpp"

namespace dani::eval {

double ssim(const TensorF& x, const TensorF& y, int window, double sigma,
            double k1, double k2) {
  if (!x.same_shape(y)) throw DataError("ssim: shape mismatch");
  if (x.rank != 2) throw DataError("ssim: rank-2 images required");
  const int rows = x.dims[0], cols = x.dims[1];
  if (rows < window || cols < window)
    throw DataError("ssim: image smaller than the window");

  // separable Gaussian window, normalized to sum 1
  std::vector<double> g(window);
  const int half = window / 2;
  double gsum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;

  constexpr double L = 2.0;
  const double c1 = (k1 * L) * (k1 * L);
  const double c2 = (k2 * L) * (k2 * L);

  double acc = 0.0;
  int n_win = 0;
  for (int wy = 0; wy + window <= rows; ++wy) {
    for (int wx = 0; wx + window <= cols; ++wx) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          const double w = g[i] * g[j];
          const double vx = x[std::size_t(wy + i) * cols + (wx + j)];
          const double vy = y[std::size_t(wy + i) * cols + (wx + j)];
          mx += w * vx;
          my += w * vy;
          sxx += w * vx * vx;
          syy += w * vy * vy;
          sxy += w * vx * vy;
        }
      }
      const double vxx = sxx - mx * mx;
      const double vyy = syy - my * my;
      const double vxy = sxy - mx * my;
      acc += ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) /
             ((mx * mx + my * my + c1) * (vxx + vyy + c2));
      ++n_win;
    }
  }
  return acc / n_win;
}

double monotonicity_violation_rate(const std::vector<TensorF>& frames,
                                   double delta) {
  if (frames.size() < 2)
    throw DataError("monotonicity_violation_rate: need at least 2 frames");
  std::size_t violations = 0, events = 0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[i + 1]))
      throw DataError("monotonicity_violation_rate: frame shape mismatch");
    for (std::size_t k = 0; k < frames[i].count(); ++k) {
      if (double(frames[i + 1][k]) > double(frames[i][k]) + delta) ++violations;
      ++events;
    }
  }
  return double(violations) / double(events);
}

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // continued fraction (modified Lentz)
  auto betacf = [](double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
  };
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log(1.0 - x) + a * std::log(x)) *
                   betacf(b, a, 1.0 - x) / b;
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("paired_t_test: size mismatch");
  if (a.size() < 2) throw DataError("paired_t_test: need at least 2 pairs");
  const int n = int(a.size());
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= (n - 1);
  TTestResult r;
  r.n = n;
  if (var == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
    return r;
  }
  r.t = mean / std::sqrt(var / n);
  const double nu = n - 1;
  r.p = reg_incomplete_beta(nu / 2.0, 0.5, nu / (nu + r.t * r.t));
  return r;
}

std::vector<TensorF> synthesize_sequence(nets::Model<float>& model,
                                         const TensorF& baseline, int diagnosis,
                                         const Config& cfg) {
  nets::Encoder<float>::Trace etr;
  const TensorF z = model.enc.forward(baseline, etr);
  std::vector<TensorF> frames;
  for (int a = 1; a <= cfg.bins; ++a) {
    const TensorF cond =
        nets::make_conditioning<float>(a, diagnosis, cfg.bins, cfg.enable_c);
    nets::Generator<float>::Trace gtr;
    frames.push_back(model.gen.forward(nets::concat(z, cond), gtr));
  }
  return frames;
}

TensorF synthesize_at_age(nets::Model<float>& model, const TensorF& baseline,
                          double baseline_age, int diagnosis, double target_age,
                          const Config& cfg) {
  (void)baseline_age;  // encoding carries the baseline; age enters via the bin
  const preprocess::AgeBinning binning{cfg.bins, cfg.age_min, cfg.age_max};
  const auto [a, alpha] = preprocess::age_to_bin(target_age, binning);
  nets::Encoder<float>::Trace etr;
  const TensorF z = model.enc.forward(baseline, etr);
  nets::Generator<float>::Trace g1, g2;
  const TensorF fa = model.gen.forward(
      nets::concat(z, nets::make_conditioning<float>(a, diagnosis, cfg.bins,
                                                     cfg.enable_c)),
      g1);
  const TensorF fb = model.gen.forward(
      nets::concat(z, nets::make_conditioning<float>(a + 1, diagnosis, cfg.bins,
                                                     cfg.enable_c)),
      g2);
  TensorF out = fa;
  for (std::size_t i = 0; i < out.count(); ++i)
    out[i] = float(alpha * fa[i] + (1.0 - alpha) * fb[i]);
  return out;
}

std::vector<double> evaluate_subject(const io::Checkpoint& ckpt,
                                     const EvalSubject& subject, bool use_t,
                                     const regions::RegionMaskSet* masks,
                                     const std::vector<svr::RegionSvrModel>* models,
                                     int personalize_iters,
                                     double min_followup_years) {
  if (subject.slices.empty() || subject.slices.size() != subject.ages.size())
    throw DataError("evaluate_subject: malformed visit history");
  const Config cfg = Config::parse_text(ckpt.config_echo);

  std::vector<std::size_t> eligible;
  for (std::size_t v = 1; v < subject.ages.size(); ++v)
    if (subject.ages[v] - subject.ages[0] >= min_followup_years)
      eligible.push_back(v);
  if (eligible.empty()) {
    std::fprintf(stderr, "warning: subject %s has no follow-up >= %.3g years, skipped\n",
                 subject.subject_id.c_str(), min_followup_years);
    return {};
  }

  train::Sample baseline{subject.slices[0], subject.ages[0], subject.diagnosis};
  io::Checkpoint working;
  const io::Checkpoint* active = &ckpt;
  if (use_t) {
    working = personalize::personalize(ckpt, baseline, personalize_iters, masks,
                                       models);
    active = &working;
  }
  nets::Model<float> model = nets::Model<float>::from_checkpoint(
      *active, cfg.grid_size, cfg.latent, cfg.bins);

  std::vector<double> scores;
  for (std::size_t v : eligible) {
    const TensorF synth =
        synthesize_at_age(model, subject.slices[0], subject.ages[0],
                          subject.diagnosis, subject.ages[v], cfg);
    scores.push_back(ssim(synth, subject.slices[v]));
  }
  return scores;
}

const AblationCell* AblationReport::find(const std::string& config) const {
  for (const auto& c : cells)
    if (c.config == config) return &c;
  return nullptr;
}

AblationReport run_ablation(const AblationInputs& inputs,
                            const std::vector<EvalSubject>& subjects,
                            const regions::RegionMaskSet* masks,
                            const std::vector<svr::RegionSvrModel>* models,
                            int personalize_iters) {
  struct CellSpec {
    const char* name;
    const io::Checkpoint* ckpt;
    bool use_t;
  };
  const CellSpec specs[8] = {
      {"baseline", inputs.ckpt_base, false}, {"C", inputs.ckpt_c, false},
      {"T", inputs.ckpt_base, true},         {"C-T", inputs.ckpt_c, true},
      {"P", inputs.ckpt_p, false},           {"P-C", inputs.ckpt_pc, false},
      {"P-T", inputs.ckpt_p, true},          {"P-C-T", inputs.ckpt_pc, true},
  };

  AblationReport report;
  for (const auto& spec : specs) {
    AblationCell cell;
    cell.config = spec.name;
    if (spec.ckpt) {
      for (const auto& subject : subjects) {
        const std::vector<double> scores = evaluate_subject(
            *spec.ckpt, subject, spec.use_t, masks, models, personalize_iters);
        if (scores.empty()) continue;
        double mean = 0.0;
        for (double v : scores) mean += v;
        cell.per_subject.push_back(mean / double(scores.size()));
      }
      cell.present = true;
      cell.n = int(cell.per_subject.size());
      if (cell.n > 0) {
        for (double v : cell.per_subject) cell.ssim_mean += v;
        cell.ssim_mean /= cell.n;
        if (cell.n > 1) {
          for (double v : cell.per_subject) {
            const double d = v - cell.ssim_mean;
            cell.ssim_std += d * d;
          }
          cell.ssim_std = std::sqrt(cell.ssim_std / (cell.n - 1));
        }
      }
    }
    report.cells.push_back(std::move(cell));
  }

  const AblationCell* base = report.find("baseline");
  for (auto& cell : report.cells) {
    if (!cell.present || cell.config == "baseline" || !base || !base->present)
      continue;
    if (cell.per_subject.size() == base->per_subject.size() &&
        cell.per_subject.size() >= 2) {
      cell.p_vs_baseline =
          paired_t_test(cell.per_subject, base->per_subject).p;
    }
  }
  return report;
}

void write_report(const std::string& path, const AblationReport& report) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("write_report: cannot open " + tmp);
    out << "# SSIM aggregated per subject (mean over eligible follow-ups), "
           "then mean/std over the cohort\n";
    out << "config,n,ssim_mean,ssim_std,p_vs_baseline\n";
    for (const auto& cell : report.cells) {
      if (!cell.present) {
        out << cell.config << ",absent,,,\n";
        continue;
      }
      char line[256];
      std::snprintf(line, sizeof line, "%s,%d,%.17g,%.17g,%.17g\n",
                    cell.config.c_str(), cell.n, cell.ssim_mean, cell.ssim_std,
                    cell.p_vs_baseline);
      out << line;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dani::eval
