#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dani/error.hpp"
#include "dani/svr.hpp"
#include "dani/tensor.hpp"

// The five training objectives and the weighted total. Value computation is
// separated from gradient accumulation so evaluation can use the exact sign
// form while training uses the smooth surrogate.

namespace dani::losses {

// Eq-weighted components; the summation order of the total is fixed.
struct LossBreakdown {
  double e_z = 0, g_b = 0, l_vox = 0, l_reg = 0, l_def = 0;
  double d_z_loss = 0, d_b_loss = 0;
  double l_tot = 0;

  static constexpr double kAdvWeight = 0.0003;
  static constexpr double kDefWeight = 0.2;

  void finalize() {
    l_tot = kAdvWeight * (e_z + g_b + l_vox + l_reg) + kDefWeight * l_def;
  }
};

constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

// --- voxel monotonicity (sign / tanh surrogate over the A-frame sequence) --

// frames: A rank-2 tensors; a is the 1-based reference bin.
// exact: S = sgn; smooth: S = tanh(u / tau).
template <typename T>
double loss_vox(const std::vector<Tensor<T>>& frames, int a, double tau = 0.01,
                bool exact = false) {
  const int A = int(frames.size());
  if (A < 2) throw DataError("loss_vox: need at least 2 frames");
  const std::size_t mn = frames[0].count();
  double acc = 0.0;
  for (int p = 0; p < A; ++p) {
    if (p == a - 1) continue;
    // p < a contributes S(g_a - g_p); p > a contributes S(g_p - g_a)
    const Tensor<T>& ga = frames[a - 1];
    const Tensor<T>& gp = frames[p];
    for (std::size_t i = 0; i < mn; ++i) {
      const double u = p < a - 1 ? double(ga[i]) - double(gp[i])
                                 : double(gp[i]) - double(ga[i]);
      if (exact) {
        acc += u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
      } else {
        acc += std::tanh(u / tau);
      }
    }
  }
  return acc / (double(mn) * (A - 1));
}

// accumulates d(loss_vox smooth)/d(frames) scaled by `weight`
template <typename T>
void loss_vox_grad(const std::vector<Tensor<T>>& frames, int a, double tau,
                   double weight, std::vector<Tensor<T>>& dframes) {
  const int A = int(frames.size());
  const std::size_t mn = frames[0].count();
  const double norm = weight / (double(mn) * (A - 1));
  const Tensor<T>& ga = frames[a - 1];
  for (int p = 0; p < A; ++p) {
    if (p == a - 1) continue;
    const Tensor<T>& gp = frames[p];
    for (std::size_t i = 0; i < mn; ++i) {
      const double u = p < a - 1 ? double(ga[i]) - double(gp[i])
                                 : double(gp[i]) - double(ga[i]);
      const double th = std::tanh(u / tau);
      const double dS = (1.0 - th * th) / tau * norm;
      if (p < a - 1) {
        dframes[a - 1][i] += T(dS);
        dframes[p][i] -= T(dS);
      } else {
        dframes[p][i] += T(dS);
        dframes[a - 1][i] -= T(dS);
      }
    }
  }
}

// --- regional SVR consistency ----------------------------------------------

// |SVR prediction - generated regional ratio| averaged over regions and
// frame pairs anchored at bin a; ages are bin centers.
template <typename T>
double loss_reg(const std::vector<Tensor<T>>& frames, int a, int diagnosis,
                const regions::RegionMaskSet& masks,
                const std::vector<svr::RegionSvrModel>& models,
                const std::vector<double>& bin_centers, double eps = 0.1) {
  const int A = int(frames.size());
  if (A < 2) throw DataError("loss_reg: need at least 2 frames");
  const int R = masks.count();
  if (R != int(models.size()))
    throw DataError("loss_reg: region count mismatch between masks and models");
  double acc = 0.0;
  for (int r = 0; r < R; ++r) {
    for (int p = 0; p < A; ++p) {
      if (p == a - 1) continue;
      const bool before = p < a - 1;
      const int early = before ? p : a - 1;
      const int late = before ? a - 1 : p;
      const double pred = svr::predict_rate(models[r], bin_centers[early],
                                            bin_centers[late], diagnosis);
      const TensorF& mask = masks.masks[r];
      double se = 0.0, sl = 0.0;
      for (std::size_t i = 0; i < mask.count(); ++i) {
        if (mask[i] == 0.0f) continue;
        se += (double(frames[early][i]) + 1.0) * 0.5 * mask[i];
        sl += (double(frames[late][i]) + 1.0) * 0.5 * mask[i];
      }
      acc += std::abs(pred - (sl + eps) / (se + eps));
    }
  }
  return acc / (double(R) * (A - 1));
}

template <typename T>
void loss_reg_grad(const std::vector<Tensor<T>>& frames, int a, int diagnosis,
                   const regions::RegionMaskSet& masks,
                   const std::vector<svr::RegionSvrModel>& models,
                   const std::vector<double>& bin_centers, double weight,
                   std::vector<Tensor<T>>& dframes, double eps = 0.1) {
  const int A = int(frames.size());
  const int R = masks.count();
  const double norm = weight / (double(R) * (A - 1));
  for (int r = 0; r < R; ++r) {
    const TensorF& mask = masks.masks[r];
    for (int p = 0; p < A; ++p) {
      if (p == a - 1) continue;
      const bool before = p < a - 1;
      const int early = before ? p : a - 1;
      const int late = before ? a - 1 : p;
      const double pred = svr::predict_rate(models[r], bin_centers[early],
                                            bin_centers[late], diagnosis);
      double se = 0.0, sl = 0.0;
      for (std::size_t i = 0; i < mask.count(); ++i) {
        if (mask[i] == 0.0f) continue;
        se += (double(frames[early][i]) + 1.0) * 0.5 * mask[i];
        sl += (double(frames[late][i]) + 1.0) * 0.5 * mask[i];
      }
      const double ratio = (sl + eps) / (se + eps);
      const double dabs = pred - ratio > 0 ? -1.0 : (pred - ratio < 0 ? 1.0 : 0.0);
      // d(ratio)/d(late pixel) = 0.5*mask/(se+eps);
      // d(ratio)/d(early pixel) = -ratio*0.5*mask/(se+eps)
      const double dl = dabs * norm * 0.5 / (se + eps);
      const double de = -dabs * norm * 0.5 * ratio / (se + eps);
      for (std::size_t i = 0; i < mask.count(); ++i) {
        if (mask[i] == 0.0f) continue;
        dframes[late][i] += T(dl * mask[i]);
        dframes[early][i] += T(de * mask[i]);
      }
    }
  }
}

// --- deformation loss --------------------------------------------------------

// mean squared error between x and alpha*g_a + (1-alpha)*g_next
template <typename T>
double loss_def(const Tensor<T>& x, const Tensor<T>& g_a, const Tensor<T>& g_next,
                double alpha) {
  if (!x.same_shape(g_a) || !x.same_shape(g_next))
    throw DataError("loss_def: shape mismatch");
  if (alpha < 0.0 || alpha > 1.0) throw DataError("loss_def: alpha outside [0,1]");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.count(); ++i) {
    const double d = alpha * double(g_a[i]) + (1.0 - alpha) * double(g_next[i]) -
                     double(x[i]);
    acc += d * d;
  }
  return acc / double(x.count());
}

template <typename T>
void loss_def_grad(const Tensor<T>& x, const Tensor<T>& g_a,
                   const Tensor<T>& g_next, double alpha, double weight,
                   Tensor<T>& dg_a, Tensor<T>& dg_next) {
  const double norm = 2.0 * weight / double(x.count());
  for (std::size_t i = 0; i < x.count(); ++i) {
    const double d = alpha * double(g_a[i]) + (1.0 - alpha) * double(g_next[i]) -
                     double(x[i]);
    dg_a[i] += T(norm * d * alpha);
    dg_next[i] += T(norm * d * (1.0 - alpha));
  }
}

// --- adversarial cross entropies --------------------------------------------

// Probabilities are clamped before the logs. Batch means.
// d_z_loss = -mean[log Dz(z*) + log(1 - Dz(E(x)))]
// e_z      = -mean log Dz(E(x))           (non-saturating)
// d_b_loss = -mean[log Db(x) + log(1 - Db(g))]
// g_b      = -mean log Db(g)
struct AdversarialLosses {
  double d_z_loss = 0, e_z = 0, d_b_loss = 0, g_b = 0;
};

inline AdversarialLosses adversarial_losses(const std::vector<double>& dz_prior,
                                            const std::vector<double>& dz_enc,
                                            const std::vector<double>& db_real,
                                            const std::vector<double>& db_fake) {
  if (dz_prior.empty() || dz_prior.size() != dz_enc.size() ||
      db_real.empty() || db_real.size() != db_fake.size())
    throw DataError("adversarial_losses: empty or mismatched batches");
  AdversarialLosses out;
  for (std::size_t i = 0; i < dz_prior.size(); ++i) {
    out.d_z_loss -= std::log(clamp_prob(dz_prior[i])) +
                    std::log(1.0 - clamp_prob(dz_enc[i]));
    out.e_z -= std::log(clamp_prob(dz_enc[i]));
  }
  for (std::size_t i = 0; i < db_real.size(); ++i) {
    out.d_b_loss -= std::log(clamp_prob(db_real[i])) +
                    std::log(1.0 - clamp_prob(db_fake[i]));
    out.g_b -= std::log(clamp_prob(db_fake[i]));
  }
  out.d_z_loss /= double(dz_prior.size());
  out.e_z /= double(dz_enc.size());
  out.d_b_loss /= double(db_real.size());
  out.g_b /= double(db_fake.size());
  return out;
}

// gradient helpers at the probability output (zero when clamped)
inline double dneg_log(double p) {  // d/dp of -log(clamp(p))
  return (p <= kProbClamp || p >= 1.0 - kProbClamp) ? 0.0 : -1.0 / p;
}
inline double dneg_log1m(double p) {  // d/dp of -log(1 - clamp(p))
  return (p <= kProbClamp || p >= 1.0 - kProbClamp) ? 0.0 : 1.0 / (1.0 - p);
}

// --- total -------------------------------------------------------------------

inline LossBreakdown total_loss(double e_z, double g_b, double l_vox,
                                double l_reg, double l_def) {
  LossBreakdown b;
  b.e_z = e_z;
  b.g_b = g_b;
  b.l_vox = l_vox;
  b.l_reg = l_reg;
  b.l_def = l_def;
  b.finalize();
  return b;
}

}  // namespace dani::losses
