#pragma once

#include <string>
#include <vector>

#include "dani/config.hpp"
#include "dani/error.hpp"
#include "dani/io.hpp"
#include "dani/train.hpp"

// Test-time transfer learning (T): fine-tune a trained model on a single
// baseline slice with fresh optimizer state. The P/C loss configuration is
// whatever the checkpoint's embedded config recorded; the source checkpoint
// is never mutated.

namespace dani::personalize {

// Returns a new checkpoint after `iterations` singleton-batch train steps.
// `masks`/`models` are required only when the checkpoint was trained with P.
inline io::Checkpoint personalize(const io::Checkpoint& source,
                                  const train::Sample& baseline, int iterations,
                                  const regions::RegionMaskSet* masks,
                                  const std::vector<svr::RegionSvrModel>* models) {
  if (iterations < 0) throw UsageError("personalize: negative iteration count");
  if (source.config_echo.empty())
    throw DataError("personalize: checkpoint carries no config echo");
  const Config cfg = Config::parse_text(source.config_echo);
  if (baseline.x.dims[0] != cfg.grid_size || baseline.x.dims[1] != cfg.grid_size)
    throw DataError("personalize: slice grid does not match checkpoint config");
  if (cfg.enable_p && (!masks || !models))
    throw DataError("personalize: checkpoint trained with P but masks/models missing");

  nets::Model<float> model = nets::Model<float>::from_checkpoint(
      source, cfg.grid_size, cfg.latent, cfg.bins);
  train::Adam opt_dz(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  train::Adam opt_db(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  train::Adam opt_eg(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Rng rng(Rng::derive(cfg.seed, train::kPersonalizeStream));

  const std::vector<const train::Sample*> batch{&baseline};
  for (int it = 0; it < iterations; ++it)
    train::train_step(model, opt_dz, opt_db, opt_eg, batch, masks, models, cfg,
                      rng);
  return model.to_checkpoint(source.config_echo);
}

}  // namespace dani::personalize
