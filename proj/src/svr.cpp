#include "dani/svr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dani/error.hpp"

namespace dani::svr {

namespace {

double rbf(const std::array<double, 3>& a, const std::array<double, 3>& b,
           double gamma) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = a[k] - b[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double regional_ratio(const TensorF& early, const TensorF& late,
                      const TensorF& mask, double eps) {
  if (!early.same_shape(late) || !early.same_shape(mask))
    throw DataError("regional_ratio: shape mismatch");
  double se = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < mask.count(); ++i) {
    if (mask[i] == 0.0f) continue;
    se += (double(early[i]) + 1.0) * 0.5 * mask[i];
    sl += (double(late[i]) + 1.0) * 0.5 * mask[i];
  }
  return (sl + eps) / (se + eps);
}

std::vector<std::vector<RatePair>> build_svr_dataset(
    const std::vector<NormalizedTrajectory>& trajectories,
    const regions::RegionMaskSet& masks, std::size_t* n_kept,
    std::size_t* n_dropped) {
  std::vector<std::vector<RatePair>> per_region(masks.masks.size());
  std::size_t kept = 0, dropped = 0;
  for (const auto& traj : trajectories) {
    const std::size_t v = traj.slices.size();
    for (std::size_t p = 0; p < v; ++p) {
      for (std::size_t q = p + 1; q < v; ++q) {
        for (std::size_t r = 0; r < masks.masks.size(); ++r) {
          const double ratio =
              regional_ratio(traj.slices[p], traj.slices[q], masks.masks[r]);
          if (ratio > 1.0) {
            ++dropped;
            continue;
          }
          per_region[r].push_back(
              {traj.ages[p], traj.ages[q], traj.diagnosis, ratio});
          ++kept;
        }
      }
    }
  }
  if (n_kept) *n_kept = kept;
  if (n_dropped) *n_dropped = dropped;
  return per_region;
}

RegionSvrModel fit_svr(const std::vector<RatePair>& pairs, int region_id,
                       double c, double epsilon_svr, double gamma) {
  const int n = int(pairs.size());
  if (n < 2) throw DataError("fit_svr: need at least 2 pairs");

  RegionSvrModel model;
  model.region_id = region_id;
  model.gamma = gamma;
  model.c = c;
  model.epsilon = epsilon_svr;

  // standardize features
  std::array<double, 3> mean{0, 0, 0}, var{0, 0, 0};
  for (const auto& p : pairs) {
    mean[0] += p.age_baseline;
    mean[1] += p.age_followup;
    mean[2] += p.diagnosis;
  }
  for (auto& m : mean) m /= n;
  for (const auto& p : pairs) {
    const double f[3] = {p.age_baseline, p.age_followup, double(p.diagnosis)};
    for (int k = 0; k < 3; ++k) var[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
  }
  for (int k = 0; k < 3; ++k) {
    model.scaler.mean[k] = mean[k];
    model.scaler.std[k] = var[k] > 0 ? std::sqrt(var[k] / n) : 1.0;
  }

  std::vector<std::array<double, 3>> x(n);
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    x[i] = model.scaler.apply(pairs[i].age_baseline, pairs[i].age_followup,
                              pairs[i].diagnosis);
    z[i] = pairs[i].target;
  }

  // kernel cache
  std::vector<double> K(std::size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      K[std::size_t(i) * n + j] = K[std::size_t(j) * n + i] = rbf(x[i], x[j], gamma);

  // SMO on the 2n-variable dual: vars t<n are alpha_i (y=+1), t>=n are
  // alpha_i^* (y=-1); p_t = eps -/+ z; Q_st = y_s y_t K.
  const int m = 2 * n;
  std::vector<double> alpha(m, 0.0), grad(m), lin(m);
  std::vector<int> sign(m);
  for (int t = 0; t < m; ++t) {
    const int i = t % n;
    sign[t] = t < n ? 1 : -1;
    lin[t] = t < n ? epsilon_svr - z[i] : epsilon_svr + z[i];
    grad[t] = lin[t];
  }
  auto q = [&](int s, int t) {
    return sign[s] * sign[t] * K[std::size_t(s % n) * n + (t % n)];
  };

  // tight tolerance on small instances so the dual objective is comparable
  // to an independent QP solution at 1e-6
  const double tol = n <= 64 ? 1e-9 : 1e-3;
  const long max_iter = std::max(20000000L / m, 20000L);
  const double tau = 1e-12;

  for (long iter = 0; iter < max_iter; ++iter) {
    // maximal violating pair
    int i = -1, j = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (int t = 0; t < m; ++t) {
      const bool up = sign[t] > 0 ? alpha[t] < c : alpha[t] > 0;
      const bool low = sign[t] > 0 ? alpha[t] > 0 : alpha[t] < c;
      const double v = -sign[t] * grad[t];
      if (up && v > gmax) {
        gmax = v;
        i = t;
      }
      if (low && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) break;

    const double old_i = alpha[i], old_j = alpha[j];
    if (sign[i] != sign[j]) {
      double quad = q(i, i) + q(j, j) + 2 * K[std::size_t(i % n) * n + (j % n)];
      if (quad <= 0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0 && alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = diff;
      } else if (diff <= 0 && alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0 && alpha[i] > c) {
        alpha[i] = c;
        alpha[j] = c - diff;
      } else if (diff <= 0 && alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2 * K[std::size_t(i % n) * n + (j % n)];
      if (quad <= 0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c && alpha[i] > c) {
        alpha[i] = c;
        alpha[j] = sum - c;
      } else if (sum <= c && alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > c && alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = sum - c;
      } else if (sum <= c && alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }

    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    if (di == 0.0 && dj == 0.0) break;
    for (int t = 0; t < m; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // dual objective 1/2 a'Qa + p'a = 1/2 a'(grad + lin)
  double obj = 0.0;
  for (int t = 0; t < m; ++t) obj += alpha[t] * (grad[t] + lin[t]);
  model.dual_objective = 0.5 * obj;

  // bias from the KKT conditions (free SVs averaged, else midpoint)
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (int t = 0; t < m; ++t) {
    const double yg = sign[t] * grad[t];
    if (alpha[t] >= c) {
      if (sign[t] < 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (sign[t] > 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2;
  model.bias = -rho;

  for (int i = 0; i < n; ++i) {
    const double beta = alpha[i] - alpha[i + n];
    if (beta != 0.0) {
      model.support.push_back(
          {pairs[i].age_baseline, pairs[i].age_followup, double(pairs[i].diagnosis)});
      model.dual_coef.push_back(beta);
    }
  }
  model.fitted = true;
  return model;
}

double predict_rate(const RegionSvrModel& model, double age_baseline,
                    double age_followup, int diagnosis) {
  if (!model.fitted) throw std::logic_error("predict_rate: model not fitted");
  const auto q = model.scaler.apply(age_baseline, age_followup, diagnosis);
  double acc = model.bias;
  for (std::size_t i = 0; i < model.support.size(); ++i) {
    const auto s = model.scaler.apply(model.support[i][0], model.support[i][1],
                                      model.support[i][2]);
    acc += model.dual_coef[i] * rbf(s, q, model.gamma);
  }
  return std::clamp(acc, 0.05, 1.0);
}

void save_models(const std::string& path, const std::vector<RegionSvrModel>& models) {
  std::ostringstream out;
  for (const auto& mdl : models) {
    out << mdl.region_id << ' ' << fmt(mdl.gamma) << ' ' << fmt(mdl.c) << ' '
        << fmt(mdl.epsilon) << ' ' << fmt(mdl.bias) << ' ' << mdl.support.size()
        << '\n';
    for (std::size_t i = 0; i < mdl.support.size(); ++i) {
      out << fmt(mdl.support[i][0]) << ' ' << fmt(mdl.support[i][1]) << ' '
          << fmt(mdl.support[i][2]) << ' ' << fmt(mdl.dual_coef[i]) << '\n';
    }
    out << "scaler " << fmt(mdl.scaler.mean[0]) << ' ' << fmt(mdl.scaler.mean[1])
        << ' ' << fmt(mdl.scaler.mean[2]) << ' ' << fmt(mdl.scaler.std[0]) << ' '
        << fmt(mdl.scaler.std[1]) << ' ' << fmt(mdl.scaler.std[2]) << '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw DataError("cannot open for write: " + tmp);
    f << out.str();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + path);
}

std::vector<RegionSvrModel> load_models(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open svr model file: " + path);
  std::vector<RegionSvrModel> models;
  while (true) {
    RegionSvrModel mdl;
    std::size_t n_sv = 0;
    if (!(f >> mdl.region_id >> mdl.gamma >> mdl.c >> mdl.epsilon >> mdl.bias >> n_sv))
      break;
    mdl.support.resize(n_sv);
    mdl.dual_coef.resize(n_sv);
    for (std::size_t i = 0; i < n_sv; ++i) {
      if (!(f >> mdl.support[i][0] >> mdl.support[i][1] >> mdl.support[i][2] >>
            mdl.dual_coef[i]))
        throw DataError(path + ": truncated support vector block");
    }
    std::string tag;
    if (!(f >> tag) || tag != "scaler")
      throw DataError(path + ": missing scaler line");
    for (int k = 0; k < 3; ++k)
      if (!(f >> mdl.scaler.mean[k])) throw DataError(path + ": bad scaler line");
    for (int k = 0; k < 3; ++k)
      if (!(f >> mdl.scaler.std[k])) throw DataError(path + ": bad scaler line");
    mdl.fitted = true;
    models.push_back(std::move(mdl));
  }
  if (models.empty()) throw DataError(path + ": no models found");
  return models;
}

}  // namespace dani::svr
