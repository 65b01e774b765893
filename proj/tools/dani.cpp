// Single-binary pipeline driver. Subcommands cover the full experiment:
// phantom cohort synthesis, normalization, region building, SVR fitting,
// training (with --no-p / --no-c ablations), test-time personalization,
// sequence simulation, and the ablation report.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dani/config.hpp"
#include "dani/error.hpp"
#include "dani/eval.hpp"
#include "dani/io.hpp"
#include "dani/personalize.hpp"
#include "dani/phantom.hpp"
#include "dani/preprocess.hpp"
#include "dani/regions.hpp"
#include "dani/svr.hpp"
#include "dani/train.hpp"

namespace fs = std::filesystem;
using namespace dani;

namespace {

struct ConfigOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the file
  bool seed_set = false;
  std::uint64_t seed = 0;

  Config resolve() const {
    Config cfg;
    if (!config_path.empty()) cfg = Config::parse_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw UsageError("--set expects key=value, got: " + kv);
      std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      auto trim = [](std::string& s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
      };
      trim(key);
      trim(value);
      cfg.apply(key, value);
    }
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

void add_config_opts(CLI::App* cmd, ConfigOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
  cmd->add_option("--set", opts.overrides, "override a config key (key=value); repeatable");
  cmd->add_option("--seed", opts.seed, "random seed (overrides config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

std::string slice_filename(const std::string& subject_id, int visit) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_v%02d.dani", subject_id.c_str(), visit);
  return buf;
}

// Groups manifest rows by subject, ordered by visit index.
std::vector<std::vector<io::ManifestRow>> group_by_subject(
    const std::vector<io::ManifestRow>& rows) {
  std::vector<std::vector<io::ManifestRow>> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& row : rows) {
    auto [it, inserted] = index.try_emplace(row.subject_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(row);
  }
  for (auto& g : groups)
    std::sort(g.begin(), g.end(),
              [](const io::ManifestRow& a, const io::ManifestRow& b) {
                return a.visit_index < b.visit_index;
              });
  return groups;
}

// ---- phantom ---------------------------------------------------------------

int cmd_phantom(const ConfigOpts& copts, int subjects, int visits,
                double interval, int first_index, const std::string& out_dir) {
  const Config cfg = copts.resolve();
  if (subjects < 1) throw UsageError("--subjects must be >= 1");
  if (visits < 1) throw UsageError("--visits must be >= 1");
  fs::create_directories(out_dir);
  const auto cohort =
      phantom::make_cohort(cfg, subjects, visits, interval, first_index);
  std::vector<io::ManifestRow> rows;
  for (const auto& subj : cohort) {
    for (std::size_t v = 0; v < subj.slices.size(); ++v) {
      const std::string name = slice_filename(subj.subject_id, int(v));
      const std::string path = (fs::path(out_dir) / name).string();
      io::write_tensor(path, subj.slices[v]);
      rows.push_back({subj.subject_id, int(v), subj.visit_ages[v],
                      subj.diagnosis, name});
    }
  }
  io::write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows);
  std::printf("wrote %zu slices for %d subjects to %s\n", rows.size(), subjects,
              out_dir.c_str());
  return 0;
}

// ---- preprocess -------------------------------------------------------------

int cmd_preprocess(const std::string& manifest, const std::string& out_dir) {
  const auto rows = io::read_manifest(manifest);
  const fs::path src_dir = fs::path(manifest).parent_path();
  fs::create_directories(out_dir);
  std::vector<io::ManifestRow> out_rows;
  for (const auto& row : rows) {
    const TensorF raw = io::read_tensor((src_dir / row.path).string());
    const TensorF norm = preprocess::normalize_intensity(raw);
    io::write_tensor((fs::path(out_dir) / row.path).string(), norm);
    out_rows.push_back(row);
  }
  io::write_manifest((fs::path(out_dir) / "manifest.csv").string(), out_rows);
  std::printf("normalized %zu slices to %s\n", out_rows.size(), out_dir.c_str());
  return 0;
}

// ---- regions ----------------------------------------------------------------

int cmd_regions(const ConfigOpts& copts, const std::string& manifest,
                int dilation, const std::string& out_path) {
  const Config cfg = copts.resolve();
  const auto rows = io::read_manifest(manifest);
  const fs::path src_dir = fs::path(manifest).parent_path();
  std::vector<TensorF> slices;
  for (const auto& row : rows)
    slices.push_back(io::read_tensor((src_dir / row.path).string()));
  regions::RegionMaskSet masks =
      regions::build_region_masks(slices, cfg.regions, dilation);
  regions::save_masks(out_path, masks);
  std::printf("built %d region masks -> %s\n", masks.count(), out_path.c_str());
  return 0;
}

// ---- svr-fit ----------------------------------------------------------------

int cmd_svr_fit(const ConfigOpts& copts, const std::string& manifest,
                const std::string& masks_path, const std::string& out_path) {
  const Config cfg = copts.resolve();
  const auto masks = regions::load_masks(masks_path);
  const auto rows = io::read_manifest(manifest);
  const fs::path src_dir = fs::path(manifest).parent_path();
  std::vector<svr::NormalizedTrajectory> trajectories;
  for (const auto& group : group_by_subject(rows)) {
    svr::NormalizedTrajectory traj;
    traj.diagnosis = group.front().diagnosis;
    for (const auto& row : group) {
      const TensorF raw = io::read_tensor((src_dir / row.path).string());
      traj.slices.push_back(preprocess::to_signed_units(raw));
      traj.ages.push_back(row.age_years);
    }
    trajectories.push_back(std::move(traj));
  }
  std::size_t kept = 0, dropped = 0;
  const auto dataset = svr::build_svr_dataset(trajectories, masks, &kept, &dropped);
  std::vector<svr::RegionSvrModel> models;
  for (int r = 0; r < masks.count(); ++r)
    models.push_back(svr::fit_svr(dataset[r], r, cfg.svr_c, cfg.svr_epsilon,
                                  cfg.svr_gamma));
  svr::save_models(out_path, models);
  std::printf("fit %zu region SVRs (%zu pairs kept, %zu dropped) -> %s\n",
              models.size(), kept, dropped, out_path.c_str());
  return 0;
}

// ---- train ------------------------------------------------------------------

std::vector<train::Sample> load_samples(const std::string& manifest) {
  const auto rows = io::read_manifest(manifest);
  const fs::path src_dir = fs::path(manifest).parent_path();
  std::vector<train::Sample> samples;
  for (const auto& row : rows) {
    train::Sample smp;
    smp.x = io::read_tensor((src_dir / row.path).string());
    smp.age = row.age_years;
    smp.diagnosis = row.diagnosis;
    samples.push_back(std::move(smp));
  }
  return samples;
}

int cmd_train(ConfigOpts& copts, const std::string& manifest,
              const std::string& masks_path, const std::string& svr_path,
              bool no_p, bool no_c, int epochs_flag, const std::string& out_path,
              const std::string& loss_csv, const std::string& resume_path) {
  Config cfg = copts.resolve();
  if (no_p) cfg.enable_p = false;
  if (no_c) cfg.enable_c = false;
  if (epochs_flag >= 0) cfg.epochs = epochs_flag;
  cfg.validate();

  const auto samples = load_samples(manifest);
  regions::RegionMaskSet masks;
  std::vector<svr::RegionSvrModel> models;
  if (cfg.enable_p) {
    if (masks_path.empty() || svr_path.empty())
      throw UsageError("train with P enabled requires --masks and --svr");
    masks = regions::load_masks(masks_path);
    models = svr::load_models(svr_path);
  }
  io::Checkpoint resume;
  const io::Checkpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = io::read_checkpoint(resume_path);
    resume_ptr = &resume;
  }
  nets::Model<float> model =
      train::train(samples, cfg.enable_p ? &masks : nullptr,
                   cfg.enable_p ? &models : nullptr, cfg, loss_csv, nullptr,
                   resume_ptr);
  io::write_checkpoint(out_path, model.to_checkpoint(cfg.serialize()));
  std::printf("trained %d epochs on %zu slices -> %s\n", cfg.epochs,
              samples.size(), out_path.c_str());
  return 0;
}

// ---- personalize -------------------------------------------------------------

int cmd_personalize(const std::string& ckpt_path, const std::string& input_path,
                    double age, int dx, int iters, const std::string& masks_path,
                    const std::string& svr_path, const std::string& out_path) {
  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const Config cfg = Config::parse_text(ckpt.config_echo);
  train::Sample baseline{io::read_tensor(input_path), age, dx};
  regions::RegionMaskSet masks;
  std::vector<svr::RegionSvrModel> models;
  if (cfg.enable_p) {
    if (masks_path.empty() || svr_path.empty())
      throw UsageError("checkpoint was trained with P; --masks and --svr required");
    masks = regions::load_masks(masks_path);
    models = svr::load_models(svr_path);
  }
  const io::Checkpoint out = personalize::personalize(
      ckpt, baseline, iters, cfg.enable_p ? &masks : nullptr,
      cfg.enable_p ? &models : nullptr);
  io::write_checkpoint(out_path, out);
  std::printf("personalized %d iterations -> %s\n", iters, out_path.c_str());
  return 0;
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const std::string& ckpt_path, const std::string& input_path,
                 double age, int dx, const std::string& out_dir) {
  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const Config cfg = Config::parse_text(ckpt.config_echo);
  nets::Model<float> model = nets::Model<float>::from_checkpoint(
      ckpt, cfg.grid_size, cfg.latent, cfg.bins);
  const TensorF baseline = io::read_tensor(input_path);
  fs::create_directories(out_dir);

  const auto frames = eval::synthesize_sequence(model, baseline, dx, cfg);
  for (int a = 1; a <= cfg.bins; ++a) {
    char name[64];
    std::snprintf(name, sizeof name, "frame_%02d", a);
    io::write_tensor((fs::path(out_dir) / (std::string(name) + ".dani")).string(),
                     frames[a - 1]);
    io::write_pgm((fs::path(out_dir) / (std::string(name) + ".pgm")).string(),
                  frames[a - 1]);
  }
  const TensorF target =
      eval::synthesize_at_age(model, baseline, age, dx, age, cfg);
  io::write_tensor((fs::path(out_dir) / "target.dani").string(), target);
  io::write_pgm((fs::path(out_dir) / "target.pgm").string(), target);
  std::printf("simulated %d frames + target-age blend -> %s\n", cfg.bins,
              out_dir.c_str());
  return 0;
}

// ---- evaluate -----------------------------------------------------------------

int cmd_evaluate(const std::string& manifest, const std::string& base_path,
                 const std::string& c_path, const std::string& p_path,
                 const std::string& pc_path, const std::string& masks_path,
                 const std::string& svr_path, int iters,
                 const std::string& out_path) {
  const auto rows = io::read_manifest(manifest);
  const fs::path src_dir = fs::path(manifest).parent_path();
  std::vector<eval::EvalSubject> subjects;
  for (const auto& group : group_by_subject(rows)) {
    eval::EvalSubject subj;
    subj.subject_id = group.front().subject_id;
    subj.diagnosis = group.front().diagnosis;
    for (const auto& row : group) {
      subj.ages.push_back(row.age_years);
      subj.slices.push_back(io::read_tensor((src_dir / row.path).string()));
    }
    subjects.push_back(std::move(subj));
  }

  io::Checkpoint base, c, p, pc;
  eval::AblationInputs inputs;
  if (!base_path.empty()) {
    base = io::read_checkpoint(base_path);
    inputs.ckpt_base = &base;
  }
  if (!c_path.empty()) {
    c = io::read_checkpoint(c_path);
    inputs.ckpt_c = &c;
  }
  if (!p_path.empty()) {
    p = io::read_checkpoint(p_path);
    inputs.ckpt_p = &p;
  }
  if (!pc_path.empty()) {
    pc = io::read_checkpoint(pc_path);
    inputs.ckpt_pc = &pc;
  }

  regions::RegionMaskSet masks;
  std::vector<svr::RegionSvrModel> models;
  const regions::RegionMaskSet* masks_ptr = nullptr;
  const std::vector<svr::RegionSvrModel>* models_ptr = nullptr;
  if (!masks_path.empty() && !svr_path.empty()) {
    masks = regions::load_masks(masks_path);
    models = svr::load_models(svr_path);
    masks_ptr = &masks;
    models_ptr = &models;
  }

  const eval::AblationReport report =
      eval::run_ablation(inputs, subjects, masks_ptr, models_ptr, iters);
  eval::write_report(out_path, report);
  for (const auto& cell : report.cells) {
    if (cell.present)
      std::printf("%-8s n=%d ssim=%.4f +/- %.4f p=%.4g\n", cell.config.c_str(),
                  cell.n, cell.ssim_mean, cell.ssim_std, cell.p_vs_baseline);
    else
      std::printf("%-8s absent\n", cell.config.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"danisim: longitudinal brain-phantom degeneration pipeline"};
  app.require_subcommand(1);

  // phantom
  ConfigOpts phantom_cfg;
  int subjects = 200, visits = 4, first_index = 0;
  double interval = 1.0;
  std::string phantom_out;
  auto* sc_phantom = app.add_subcommand("phantom", "generate a phantom cohort + manifest");
  add_config_opts(sc_phantom, phantom_cfg);
  sc_phantom->add_option("--subjects", subjects, "number of subjects");
  sc_phantom->add_option("--visits", visits, "visits per subject");
  sc_phantom->add_option("--interval", interval, "years between visits");
  sc_phantom->add_option("--first-index", first_index, "first subject index (train/test split)");
  sc_phantom->add_option("--out", phantom_out, "output directory")->required();

  // preprocess
  std::string pre_manifest, pre_out;
  auto* sc_pre = app.add_subcommand("preprocess", "intensity-normalize a cohort");
  sc_pre->add_option("--manifest", pre_manifest, "input manifest CSV")->required();
  sc_pre->add_option("--out", pre_out, "output directory")->required();

  // regions
  ConfigOpts regions_cfg;
  std::string reg_manifest, reg_out;
  int dilation = 1;
  auto* sc_reg = app.add_subcommand("regions", "build clustered region masks");
  add_config_opts(sc_reg, regions_cfg);
  sc_reg->add_option("--manifest", reg_manifest, "normalized manifest CSV")->required();
  sc_reg->add_option("--dilation", dilation, "dilation passes for overlap");
  sc_reg->add_option("--out", reg_out, "output mask stack path")->required();

  // svr-fit
  ConfigOpts svr_cfg;
  std::string svr_manifest, svr_masks, svr_out;
  auto* sc_svr = app.add_subcommand("svr-fit", "fit per-region progression SVRs");
  add_config_opts(sc_svr, svr_cfg);
  sc_svr->add_option("--manifest", svr_manifest, "raw (phantom) manifest CSV")->required();
  sc_svr->add_option("--masks", svr_masks, "region mask stack")->required();
  sc_svr->add_option("--out", svr_out, "output model file")->required();

  // train
  ConfigOpts train_cfg;
  std::string train_manifest, train_masks, train_svr, train_out, train_csv,
      train_resume;
  bool no_p = false, no_c = false;
  int epochs_flag = -1;
  auto* sc_train = app.add_subcommand("train", "train the adversarial autoencoder");
  add_config_opts(sc_train, train_cfg);
  sc_train->add_option("--manifest", train_manifest, "normalized manifest CSV")->required();
  sc_train->add_option("--masks", train_masks, "region mask stack (needed with P)");
  sc_train->add_option("--svr", train_svr, "SVR model file (needed with P)");
  sc_train->add_flag("--no-p", no_p, "disable the progression losses (L_vox, L_reg)");
  sc_train->add_flag("--no-c", no_c, "disable diagnosis conditioning");
  sc_train->add_option("--epochs", epochs_flag, "epoch count (overrides config)");
  sc_train->add_option("--loss-csv", train_csv, "per-epoch loss CSV path");
  sc_train->add_option("--resume", train_resume, "checkpoint to resume from");
  sc_train->add_option("--out", train_out, "output checkpoint path")->required();

  // personalize
  std::string pers_ckpt, pers_input, pers_masks, pers_svr, pers_out;
  double pers_age = 0.0;
  int pers_dx = 0, pers_iters = 200;
  auto* sc_pers = app.add_subcommand("personalize", "fine-tune on one baseline slice");
  sc_pers->add_option("--ckpt", pers_ckpt, "trained checkpoint")->required();
  sc_pers->add_option("--input", pers_input, "normalized baseline slice")->required();
  sc_pers->add_option("--age", pers_age, "baseline age in years")->required();
  sc_pers->add_option("--dx", pers_dx, "diagnosis code 0-3")->required();
  sc_pers->add_option("--iters", pers_iters, "fine-tuning iterations");
  sc_pers->add_option("--masks", pers_masks, "region mask stack (needed with P)");
  sc_pers->add_option("--svr", pers_svr, "SVR model file (needed with P)");
  sc_pers->add_option("--out", pers_out, "output checkpoint path")->required();

  // simulate
  std::string sim_ckpt, sim_input, sim_out;
  double sim_age = 0.0;
  int sim_dx = 0;
  auto* sc_sim = app.add_subcommand("simulate", "emit the A frames + target-age blend");
  sc_sim->add_option("--ckpt", sim_ckpt, "checkpoint")->required();
  sc_sim->add_option("--input", sim_input, "normalized baseline slice")->required();
  sc_sim->add_option("--age", sim_age, "target age in years")->required();
  sc_sim->add_option("--dx", sim_dx, "diagnosis code 0-3")->required();
  sc_sim->add_option("--out", sim_out, "output directory")->required();

  // evaluate
  std::string ev_manifest, ev_base, ev_c, ev_p, ev_pc, ev_masks, ev_svr, ev_out;
  int ev_iters = 200;
  auto* sc_eval = app.add_subcommand("evaluate", "run the 8-cell P/C/T ablation");
  sc_eval->add_option("--manifest", ev_manifest, "normalized test manifest CSV")->required();
  sc_eval->add_option("--ckpt-base", ev_base, "checkpoint trained with neither P nor C");
  sc_eval->add_option("--ckpt-c", ev_c, "checkpoint trained with C only");
  sc_eval->add_option("--ckpt-p", ev_p, "checkpoint trained with P only");
  sc_eval->add_option("--ckpt-pc", ev_pc, "checkpoint trained with P and C");
  sc_eval->add_option("--masks", ev_masks, "region mask stack");
  sc_eval->add_option("--svr", ev_svr, "SVR model file");
  sc_eval->add_option("--iters", ev_iters, "personalization iterations for T cells");
  sc_eval->add_option("--out", ev_out, "report CSV path")->required();

  try {
    app.parse(argc, argv);
    if (*sc_phantom)
      return cmd_phantom(phantom_cfg, subjects, visits, interval, first_index,
                         phantom_out);
    if (*sc_pre) return cmd_preprocess(pre_manifest, pre_out);
    if (*sc_reg) return cmd_regions(regions_cfg, reg_manifest, dilation, reg_out);
    if (*sc_svr) return cmd_svr_fit(svr_cfg, svr_manifest, svr_masks, svr_out);
    if (*sc_train)
      return cmd_train(train_cfg, train_manifest, train_masks, train_svr, no_p,
                       no_c, epochs_flag, train_out, train_csv, train_resume);
    if (*sc_pers)
      return cmd_personalize(pers_ckpt, pers_input, pers_age, pers_dx,
                             pers_iters, pers_masks, pers_svr, pers_out);
    if (*sc_sim) return cmd_simulate(sim_ckpt, sim_input, sim_age, sim_dx, sim_out);
    if (*sc_eval)
      return cmd_evaluate(ev_manifest, ev_base, ev_c, ev_p, ev_pc, ev_masks,
                          ev_svr, ev_iters, ev_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
