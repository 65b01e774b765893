#include "dani/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dani/error.hpp"

namespace dani {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("bad numeric value for '" + key + "': " + v);
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw UsageError("bad integer value for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("bad boolean value for '" + key + "': " + v);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Config::validate() const {
  if (grid_size < 16) throw UsageError("grid_size must be >= 16");
  if (noise_sigma < 0) throw UsageError("noise_sigma must be >= 0");
  if (age_max <= age_min) throw UsageError("age_max must exceed age_min");
  if (bins < 2) throw UsageError("bins must be >= 2");
  if (latent < 1) throw UsageError("latent must be >= 1");
  if (regions < 2) throw UsageError("regions must be >= 2");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  // tissue must never vanish over the modelled age range
  const double worst = base_cortex_intensity -
                       (atrophy_rate_base + 3 * atrophy_rate_per_dx) * (age_max - age_min);
  if (worst <= 0.05)
    throw UsageError("atrophy rates too large: cortex intensity would vanish");
}

void Config::apply(const std::string& key, const std::string& value) {
  if (key == "grid_size") grid_size = int(parse_int(key, value));
  else if (key == "age_min") age_min = parse_double(key, value);
  else if (key == "age_max") age_max = parse_double(key, value);
  else if (key == "base_cortex_intensity") base_cortex_intensity = parse_double(key, value);
  else if (key == "atrophy_rate_base") atrophy_rate_base = parse_double(key, value);
  else if (key == "atrophy_rate_per_dx") atrophy_rate_per_dx = parse_double(key, value);
  else if (key == "ventricle_growth_base") ventricle_growth_base = parse_double(key, value);
  else if (key == "ventricle_growth_per_dx") ventricle_growth_per_dx = parse_double(key, value);
  else if (key == "noise_sigma") noise_sigma = parse_double(key, value);
  else if (key == "seed") seed = std::uint64_t(parse_int(key, value));
  else if (key == "bins") bins = int(parse_int(key, value));
  else if (key == "latent") latent = int(parse_int(key, value));
  else if (key == "regions") regions = int(parse_int(key, value));
  else if (key == "svr_c") svr_c = parse_double(key, value);
  else if (key == "svr_epsilon") svr_epsilon = parse_double(key, value);
  else if (key == "svr_gamma") svr_gamma = parse_double(key, value);
  else if (key == "epochs") epochs = int(parse_int(key, value));
  else if (key == "batch_size") batch_size = int(parse_int(key, value));
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "adam_eps") adam_eps = parse_double(key, value);
  else if (key == "enable_p") enable_p = parse_bool(key, value);
  else if (key == "enable_c") enable_c = parse_bool(key, value);
  else if (key == "vox_tau") vox_tau = parse_double(key, value);
  else throw UsageError("unknown config key: " + key);
}

std::string Config::serialize() const {
  std::ostringstream out;
  out << "grid_size = " << grid_size << "\n"
      << "age_min = " << fmt(age_min) << "\n"
      << "age_max = " << fmt(age_max) << "\n"
      << "base_cortex_intensity = " << fmt(base_cortex_intensity) << "\n"
      << "atrophy_rate_base = " << fmt(atrophy_rate_base) << "\n"
      << "atrophy_rate_per_dx = " << fmt(atrophy_rate_per_dx) << "\n"
      << "ventricle_growth_base = " << fmt(ventricle_growth_base) << "\n"
      << "ventricle_growth_per_dx = " << fmt(ventricle_growth_per_dx) << "\n"
      << "noise_sigma = " << fmt(noise_sigma) << "\n"
      << "seed = " << seed << "\n"
      << "bins = " << bins << "\n"
      << "latent = " << latent << "\n"
      << "regions = " << regions << "\n"
      << "svr_c = " << fmt(svr_c) << "\n"
      << "svr_epsilon = " << fmt(svr_epsilon) << "\n"
      << "svr_gamma = " << fmt(svr_gamma) << "\n"
      << "epochs = " << epochs << "\n"
      << "batch_size = " << batch_size << "\n"
      << "learning_rate = " << fmt(learning_rate) << "\n"
      << "beta1 = " << fmt(beta1) << "\n"
      << "beta2 = " << fmt(beta2) << "\n"
      << "adam_eps = " << fmt(adam_eps) << "\n"
      << "enable_p = " << (enable_p ? "true" : "false") << "\n"
      << "enable_c = " << (enable_c ? "true" : "false") << "\n"
      << "vox_tau = " << fmt(vox_tau) << "\n";
  return out.str();
}

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

}  // namespace dani
