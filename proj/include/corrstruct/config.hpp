#ifndef CORRSTRUCT_CONFIG_HPP_
#define CORRSTRUCT_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"
#include "corrstruct/imaging.hpp"
#include "corrstruct/learning.hpp"
#include "corrstruct/metric.hpp"

namespace corrstruct {

/// Everything a train/evaluate run needs. Defaults are the published values.
struct RunConfig {
  GridSpec probe_grid = canonical_probe_grid();
  GridSpec gallery_grid = canonical_gallery_grid();
  DescriptorConfig descriptor;
  LearnerConfig learner;
  MetricTrainConfig metric;
  int metric_pair_radius = 1;   // zig-zag window for metric pairs; 1 = co-located only
  std::uint64_t metric_seed = 1;
  std::uint64_t split_seed = 0;
  int repeats = 10;
  int split = 0;                // split used by `train`
  std::vector<int> cmc_ranks{1, 5, 10, 15, 20, 30, 50};
  int threads = 1;

  void validate() const {
    probe_grid.validate();
    gallery_grid.validate();
    if (probe_grid.image_width != gallery_grid.image_width || probe_grid.image_height != gallery_grid.image_height) {
      throw ConfigError("probe and gallery grids must share the canonical image size");
    }
    if (descriptor.color_bins < 1 || descriptor.gradient_bins < 1) throw ConfigError("bin counts must be positive");
    learner.validate();
    if (metric.ridge_scale <= 0.0) throw ConfigError("ridge_scale must be positive");
    if (metric_pair_radius < 1) throw ConfigError("metric_pair_radius must be at least 1");
    if (repeats < 1) throw ConfigError("repeats must be positive");
    if (split < 0 || split >= repeats) throw ConfigError("split must lie in [0, repeats)");
    if (cmc_ranks.empty()) throw ConfigError("cmc_ranks must not be empty");
    for (int r : cmc_ranks)
      if (r < 1) throw ConfigError("cmc_ranks must be >= 1");
    if (threads < 1) throw ConfigError("threads must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value for '" + key + "': " + text);
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': " + text);
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for '" + key + "'");
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  const std::map<std::string, std::function<void(const std::string&)>> setters{
      {"image_width", [&](const std::string& v) {
         cfg.probe_grid.image_width = cfg.gallery_grid.image_width = parse_number<int>(key, v);
       }},
      {"image_height", [&](const std::string& v) {
         cfg.probe_grid.image_height = cfg.gallery_grid.image_height = parse_number<int>(key, v);
       }},
      {"patch_width", [&](const std::string& v) {
         cfg.probe_grid.patch_width = cfg.gallery_grid.patch_width = parse_number<int>(key, v);
       }},
      {"patch_height", [&](const std::string& v) {
         cfg.probe_grid.patch_height = cfg.gallery_grid.patch_height = parse_number<int>(key, v);
       }},
      {"probe_stride_x", [&](const std::string& v) { cfg.probe_grid.stride_x = parse_number<int>(key, v); }},
      {"probe_stride_y", [&](const std::string& v) { cfg.probe_grid.stride_y = parse_number<int>(key, v); }},
      {"gallery_stride_x", [&](const std::string& v) { cfg.gallery_grid.stride_x = parse_number<int>(key, v); }},
      {"gallery_stride_y", [&](const std::string& v) { cfg.gallery_grid.stride_y = parse_number<int>(key, v); }},
      {"color_bins", [&](const std::string& v) { cfg.descriptor.color_bins = parse_number<int>(key, v); }},
      {"gradient_bins", [&](const std::string& v) { cfg.descriptor.gradient_bins = parse_number<int>(key, v); }},
      {"T_c", [&](const std::string& v) { cfg.learner.gate = parse_number<double>(key, v); }},
      {"T_d", [&](const std::string& v) { cfg.learner.max_distance = parse_number<int>(key, v); }},
      {"epsilon", [&](const std::string& v) { cfg.learner.rate = parse_number<double>(key, v); }},
      {"n_cmc", [&](const std::string& v) { cfg.learner.n_cmc = parse_number<int>(key, v); }},
      {"kappa", [&](const std::string& v) { cfg.learner.penalty = parse_number<double>(key, v); }},
      {"selection_count", [&](const std::string& v) { cfg.learner.selection_count = parse_number<int>(key, v); }},
      {"top_fraction", [&](const std::string& v) { cfg.learner.top_fraction = parse_number<double>(key, v); }},
      {"max_iterations", [&](const std::string& v) { cfg.learner.max_iterations = parse_number<int>(key, v); }},
      {"tolerance", [&](const std::string& v) { cfg.learner.tolerance = parse_number<double>(key, v); }},
      {"ranges", [&](const std::string& v) { cfg.learner.ranges = detail::parse_int_list(key, v); }},
      {"normalize_update", [&](const std::string& v) { cfg.learner.normalize_update = detail::parse_bool(key, v); }},
      {"seed", [&](const std::string& v) { cfg.learner.seed = parse_number<std::uint64_t>(key, v); }},
      {"ridge_scale", [&](const std::string& v) { cfg.metric.ridge_scale = parse_number<double>(key, v); }},
      {"project_psd", [&](const std::string& v) { cfg.metric.project_psd = detail::parse_bool(key, v); }},
      {"sigma_rule", [&](const std::string& v) {
         if (v == "likelihood") {
           cfg.metric.sigma_rule = SigmaRule::LikelihoodRatio;
         } else if (v == "mean") {
           cfg.metric.sigma_rule = SigmaRule::MeanSimilar;
         } else {
           throw ConfigError("sigma_rule must be 'likelihood' or 'mean', got '" + v + "'");
         }
       }},
      {"metric_pair_radius", [&](const std::string& v) { cfg.metric_pair_radius = parse_number<int>(key, v); }},
      {"metric_seed", [&](const std::string& v) { cfg.metric_seed = parse_number<std::uint64_t>(key, v); }},
      {"split_seed", [&](const std::string& v) { cfg.split_seed = parse_number<std::uint64_t>(key, v); }},
      {"repeats", [&](const std::string& v) { cfg.repeats = parse_number<int>(key, v); }},
      {"split", [&](const std::string& v) { cfg.split = parse_number<int>(key, v); }},
      {"cmc_ranks", [&](const std::string& v) { cfg.cmc_ranks = detail::parse_int_list(key, v); }},
      {"threads", [&](const std::string& v) {
         cfg.threads = parse_number<int>(key, v);
         cfg.learner.threads = cfg.metric.threads = cfg.threads;
       }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(value);
}

/// Flat `key = value` text; '#' starts a comment.
inline RunConfig parse_config(const std::string& text, RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_CONFIG_HPP_
