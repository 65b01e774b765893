#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dani/config.hpp"
#include "dani/error.hpp"
#include "dani/io.hpp"
#include "dani/losses.hpp"
#include "dani/nets.hpp"
#include "dani/preprocess.hpp"
#include "dani/regions.hpp"
#include "dani/rng.hpp"
#include "dani/svr.hpp"

// Alternating adversarial training: per batch, one update each for D_z and
// D_b on their own objectives, then one joint ADAM step on E and G against
// the weighted total loss. The whole trajectory is a pure function of
// (config, dataset, masks, svr models).

namespace dani::train {

constexpr std::uint64_t kTrainStream = 20;
constexpr std::uint64_t kPersonalizeStream = 21;

struct Sample {
  TensorF x;  // normalized slice, rank 2, values in [-1, 1]
  double age = 0.0;
  int diagnosis = 0;
};

// Named-slot ADAM with bias correction. begin_step() advances the shared
// step counter once per optimizer step; update() is then called once per
// parameter tensor.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void begin_step() { ++t_; }
  long long step() const { return t_; }

  void update(const std::string& name, TensorF& w, const TensorF& g) {
    if (t_ < 1) throw DataError("adam: update before begin_step");
    auto& slot = slots_[name];
    if (slot.m.v.size() != w.count()) {
      slot.m.rank = w.rank;
      slot.m.dims = w.dims;
      slot.m.v.assign(w.count(), 0.0f);
      slot.v = slot.m;
    }
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    for (std::size_t i = 0; i < w.count(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw DataError("non-finite gradient in tensor " + name);
      const double m = b1_ * slot.m[i] + (1.0 - b1_) * gi;
      const double v = b2_ * slot.v[i] + (1.0 - b2_) * gi * gi;
      slot.m[i] = float(m);
      slot.v[i] = float(v);
      w[i] -= float(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
    }
  }

 private:
  struct Slot {
    TensorF m, v;
  };
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::map<std::string, Slot> slots_;
};

namespace detail {

template <typename Net>
void zero_net(Net& net) {
  net.visit([](const std::string&, TensorF&, TensorF& g) { g.zero(); });
}

template <typename Net>
void adam_net(Net& net, Adam& opt) {
  opt.begin_step();
  net.visit([&](const std::string& name, TensorF& w, TensorF& g) {
    opt.update(name, w, g);
  });
}

}  // namespace detail

// One alternating update on `batch`: (1) D_z, (2) D_b on a per-sample
// uniformly random age bin, (3) E+G jointly on L_tot. The same random bin
// feeds g_b in phase 3. Discriminator optimizers are separate so tests can
// freeze them (lr = 0).
inline losses::LossBreakdown train_step(
    nets::Model<float>& m, Adam& opt_dz, Adam& opt_db, Adam& opt_eg,
    const std::vector<const Sample*>& batch, const regions::RegionMaskSet* masks,
    const std::vector<svr::RegionSvrModel>* models, const Config& cfg,
    Rng& rng) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  if (cfg.enable_p) {
    if (!masks || !models) throw DataError("train_step: P enabled without masks/models");
    if (masks->count() != int(models->size()))
      throw DataError("train_step: mask/model region count mismatch");
  }
  const int B = int(batch.size());
  const int A = cfg.bins;
  const int s = cfg.latent;
  const preprocess::AgeBinning binning{cfg.bins, cfg.age_min, cfg.age_max};
  std::vector<double> centers(A);
  for (int a = 1; a <= A; ++a) centers[a - 1] = binning.center(a);

  losses::LossBreakdown out;

  // ---- phase 1: D_z --------------------------------------------------------
  detail::zero_net(m.dz);
  std::vector<TensorF> zs(B);
  for (int i = 0; i < B; ++i) {
    nets::Encoder<float>::Trace etr;
    zs[i] = m.enc.forward(batch[i]->x, etr);
  }
  for (int i = 0; i < B; ++i) {
    TensorF zstar({s});
    for (int k = 0; k < s; ++k) zstar[k] = float(rng.uniform(-1.0, 1.0));
    nets::DiscZ<float>::Trace tp, te;
    const double p_prior = m.dz.forward(zstar, tp);
    const double p_enc = m.dz.forward(zs[i], te);
    out.d_z_loss -= std::log(losses::clamp_prob(p_prior)) +
                    std::log(1.0 - losses::clamp_prob(p_enc));
    m.dz.backward(tp, float(losses::dneg_log(p_prior) / B));
    m.dz.backward(te, float(losses::dneg_log1m(p_enc) / B));
  }
  out.d_z_loss /= B;
  detail::adam_net(m.dz, opt_dz);

  // ---- phase 2: D_b --------------------------------------------------------
  detail::zero_net(m.db);
  std::vector<int> fake_bin(B);
  for (int i = 0; i < B; ++i) fake_bin[i] = int(rng.below(std::uint64_t(A))) + 1;
  for (int i = 0; i < B; ++i) {
    const TensorF cond = nets::make_conditioning<float>(
        fake_bin[i], batch[i]->diagnosis, A, cfg.enable_c);
    nets::Generator<float>::Trace gtr;
    const TensorF fake = m.gen.forward(nets::concat(zs[i], cond), gtr);
    nets::DiscB<float>::Trace tr_real, tr_fake;
    const double p_real = m.db.forward(batch[i]->x, tr_real);
    const double p_fake = m.db.forward(fake, tr_fake);
    out.d_b_loss -= std::log(losses::clamp_prob(p_real)) +
                    std::log(1.0 - losses::clamp_prob(p_fake));
    m.db.backward(tr_real, float(losses::dneg_log(p_real) / B));
    m.db.backward(tr_fake, float(losses::dneg_log1m(p_fake) / B));
  }
  out.d_b_loss /= B;
  detail::adam_net(m.db, opt_db);

  // ---- phase 3: E + G on L_tot --------------------------------------------
  detail::zero_net(m.enc);
  detail::zero_net(m.gen);
  const double w_adv = losses::LossBreakdown::kAdvWeight;
  const double w_def = losses::LossBreakdown::kDefWeight;
  for (int i = 0; i < B; ++i) {
    const Sample& smp = *batch[i];
    const auto [a, alpha] = preprocess::age_to_bin(smp.age, binning);

    nets::Encoder<float>::Trace etr;
    const TensorF z = m.enc.forward(smp.x, etr);

    // which frames of g_1..g_A are needed for this sample
    std::vector<char> need(A, cfg.enable_p ? 1 : 0);
    if (!cfg.enable_p) {
      need[a - 1] = 1;
      need[a] = 1;  // a is in 1..A-1, so frame a+1 exists
      need[fake_bin[i] - 1] = 1;
    }
    std::vector<TensorF> frames(A);
    std::vector<std::unique_ptr<nets::Generator<float>::Trace>> gtrs(A);
    for (int p = 1; p <= A; ++p) {
      if (!need[p - 1]) continue;
      const TensorF cond =
          nets::make_conditioning<float>(p, smp.diagnosis, A, cfg.enable_c);
      gtrs[p - 1] = std::make_unique<nets::Generator<float>::Trace>();
      frames[p - 1] = m.gen.forward(nets::concat(z, cond), *gtrs[p - 1]);
    }

    std::vector<TensorF> dframes(A);
    for (int p = 0; p < A; ++p)
      if (need[p]) {
        dframes[p].rank = 2;
        dframes[p].dims = frames[p].dims;
        dframes[p].v.assign(frames[p].count(), 0.0f);
      }

    // e_z against the (just updated) D_z
    nets::DiscZ<float>::Trace ztr;
    const double p_enc = m.dz.forward(z, ztr);
    out.e_z += -std::log(losses::clamp_prob(p_enc)) / B;
    TensorF dz = m.dz.backward(ztr, float(w_adv * losses::dneg_log(p_enc) / B));

    // g_b on the same random-bin frame as phase 2
    nets::DiscB<float>::Trace btr;
    const double p_fake = m.db.forward(frames[fake_bin[i] - 1], btr);
    out.g_b += -std::log(losses::clamp_prob(p_fake)) / B;
    {
      TensorF dimg =
          m.db.backward(btr, float(w_adv * losses::dneg_log(p_fake) / B));
      for (std::size_t k = 0; k < dimg.count(); ++k)
        dframes[fake_bin[i] - 1][k] += dimg[k];
    }

    // deformation target at the subject's own age
    out.l_def += losses::loss_def(smp.x, frames[a - 1], frames[a], alpha) / B;
    losses::loss_def_grad(smp.x, frames[a - 1], frames[a], alpha, w_def / B,
                          dframes[a - 1], dframes[a]);

    if (cfg.enable_p) {
      out.l_vox += losses::loss_vox(frames, a, cfg.vox_tau) / B;
      losses::loss_vox_grad(frames, a, cfg.vox_tau, w_adv / B, dframes);
      out.l_reg += losses::loss_reg(frames, a, smp.diagnosis, *masks, *models,
                                    centers) / B;
      losses::loss_reg_grad(frames, a, smp.diagnosis, *masks, *models, centers,
                            w_adv / B, dframes);
    }

    // frames -> generator params + dz; then the encoder
    for (int p = 0; p < A; ++p) {
      if (!need[p]) continue;
      const TensorF dzcond = m.gen.backward(*gtrs[p], dframes[p]);
      for (int k = 0; k < s; ++k) dz[k] += dzcond[k];
    }
    m.enc.backward(etr, dz);
  }
  opt_eg.begin_step();
  m.visit_eg([&](const std::string& name, TensorF& w, TensorF& g) {
    opt_eg.update(name, w, g);
  });

  out.finalize();
  return out;
}

// Full loop: seeded per-epoch shuffle, fixed batch partition (remainder kept),
// per-epoch mean LossBreakdown appended to `epoch_log` and the loss CSV.
inline nets::Model<float> train(
    const std::vector<Sample>& data, const regions::RegionMaskSet* masks,
    const std::vector<svr::RegionSvrModel>* models, const Config& cfg,
    const std::string& loss_csv_path = "",
    std::vector<losses::LossBreakdown>* epoch_log = nullptr,
    const io::Checkpoint* resume = nullptr) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (cfg.enable_p && (!masks || masks->count() == 0))
    throw DataError("train: P enabled but no region masks");
  for (const auto& smp : data)
    if (smp.x.dims[0] != cfg.grid_size || smp.x.dims[1] != cfg.grid_size)
      throw DataError("train: slice grid does not match config");
  if (cfg.enable_p)
    for (const auto& mask : masks->masks)
      if (mask.dims[0] != cfg.grid_size || mask.dims[1] != cfg.grid_size)
        throw DataError("train: region masks do not match config grid");

  nets::Model<float> model =
      resume ? nets::Model<float>::from_checkpoint(*resume, cfg.grid_size,
                                                   cfg.latent, cfg.bins)
             : nets::Model<float>::init(cfg.grid_size, cfg.latent, cfg.bins,
                                        cfg.seed);
  Adam opt_dz(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Adam opt_db(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Adam opt_eg(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Rng rng(Rng::derive(cfg.seed, kTrainStream));

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path, std::ios::trunc);
    if (!csv) throw DataError("train: cannot open " + loss_csv_path);
    csv << "epoch,e_z,g_b,l_vox,l_reg,l_def,l_tot,d_z_loss,d_b_loss\n";
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates on the shared stream
    for (std::size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[rng.below(k)]);

    losses::LossBreakdown mean;
    int n_steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(cfg.batch_size)) {
      std::vector<const Sample*> batch;
      for (std::size_t j = start;
           j < order.size() && j < start + std::size_t(cfg.batch_size); ++j)
        batch.push_back(&data[order[j]]);
      const losses::LossBreakdown b =
          train_step(model, opt_dz, opt_db, opt_eg, batch, masks, models, cfg, rng);
      mean.e_z += b.e_z;
      mean.g_b += b.g_b;
      mean.l_vox += b.l_vox;
      mean.l_reg += b.l_reg;
      mean.l_def += b.l_def;
      mean.d_z_loss += b.d_z_loss;
      mean.d_b_loss += b.d_b_loss;
      ++n_steps;
    }
    mean.e_z /= n_steps;
    mean.g_b /= n_steps;
    mean.l_vox /= n_steps;
    mean.l_reg /= n_steps;
    mean.l_def /= n_steps;
    mean.d_z_loss /= n_steps;
    mean.d_b_loss /= n_steps;
    mean.finalize();
    if (epoch_log) epoch_log->push_back(mean);
    if (csv.is_open()) {
      char line[512];
      std::snprintf(line, sizeof line,
                    "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    epoch, mean.e_z, mean.g_b, mean.l_vox, mean.l_reg,
                    mean.l_def, mean.l_tot, mean.d_z_loss, mean.d_b_loss);
      csv << line;
    }
  }
  return model;
}

}  // namespace dani::train
