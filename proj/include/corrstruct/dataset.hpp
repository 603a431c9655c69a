#ifndef CORRSTRUCT_DATASET_HPP_
#define CORRSTRUCT_DATASET_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "corrstruct/config.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/learning.hpp"

namespace corrstruct {

enum class Camera { A, B };

struct ManifestEntry {
  std::string identity;
  Camera camera = Camera::A;
  std::filesystem::path path;  // resolved against the manifest directory
};

/// One camera pair. Identities keep first-appearance order; multi-image
/// identities are paired on their first image per camera.
struct DatasetManifest {
  std::string name;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> identities;
  std::vector<std::filesystem::path> probe_paths;    // camera A, per identity
  std::vector<std::filesystem::path> gallery_paths;  // camera B, per identity
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Checks cameras, duplicates and pairing, and derives the per-identity
/// probe/gallery lists.
inline DatasetManifest validate_manifest(std::string name, std::vector<ManifestEntry> entries, bool check_files = true) {
  if (entries.empty()) throw ValidationError("manifest has no entries");
  DatasetManifest m;
  m.name = std::move(name);
  std::map<std::string, std::size_t> index;
  std::set<std::tuple<std::string, int, std::string>> seen;
  std::vector<std::string> duplicates, missing_files;
  for (const auto& e : entries) {
    if (!seen.emplace(e.identity, static_cast<int>(e.camera), e.path.string()).second) {
      duplicates.push_back(e.identity + "/" + (e.camera == Camera::A ? "A" : "B"));
    }
    if (check_files && !std::filesystem::exists(e.path)) missing_files.push_back(e.path.string());
    if (index.emplace(e.identity, m.identities.size()).second) {
      m.identities.push_back(e.identity);
      m.probe_paths.emplace_back();
      m.gallery_paths.emplace_back();
    }
    auto& slot = e.camera == Camera::A ? m.probe_paths[index[e.identity]] : m.gallery_paths[index[e.identity]];
    if (slot.empty()) slot = e.path;
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!duplicates.empty()) throw ValidationError("duplicate manifest entries: " + join(duplicates));
  if (!missing_files.empty()) throw MissingFileError("manifest images not found: " + join(missing_files));
  std::vector<std::string> unpaired;
  for (std::size_t k = 0; k < m.identities.size(); ++k) {
    if (m.probe_paths[k].empty()) unpaired.push_back(m.identities[k] + " (no camera A image)");
    if (m.gallery_paths[k].empty()) unpaired.push_back(m.identities[k] + " (no camera B image)");
  }
  if (!unpaired.empty()) throw ValidationError("identities missing a camera: " + join(unpaired));
  m.entries = std::move(entries);
  return m;
}

/// CSV with header `identity,camera,path`; camera is A or B.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("manifest is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (detail::split_csv_line(line) != std::vector<std::string>{"identity", "camera", "path"}) {
    throw ValidationError("manifest header must be 'identity,camera,path'");
  }
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3 || cells[0].empty() || cells[2].empty()) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": expected identity,camera,path");
    }
    Camera cam;
    if (cells[1] == "A") {
      cam = Camera::A;
    } else if (cells[1] == "B") {
      cam = Camera::B;
    } else {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown camera '" + cells[1] + "'");
    }
    std::filesystem::path p(cells[2]);
    if (p.is_relative()) p = base / p;
    entries.push_back({cells[0], cam, p});
  }
  return validate_manifest(path.stem().string(), std::move(entries));
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "identity,camera,path\n";
  const auto base = path.parent_path();
  for (const auto& e : m.entries) {
    out << e.identity << ',' << (e.camera == Camera::A ? 'A' : 'B') << ','
        << e.path.lexically_relative(base).generic_string() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// --- Splits --------------------------------------------------------------------

struct Split {
  std::vector<int> train;  // identity indices, ascending
  std::vector<int> test;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  int repeats = 0;
  std::vector<Split> splits;
};

/// Seeded 50/50 partitions; an odd identity count puts the extra one in
/// training.
inline SplitPlan make_splits(int identities, std::uint64_t seed, int repeats) {
  if (identities < 4) throw ValidationError("at least 4 identities required, got " + std::to_string(identities));
  if (repeats < 1) throw ConfigError("repeats must be positive");
  SplitPlan plan{seed, repeats, {}};
  std::mt19937_64 rng(seed);
  const int n_train = (identities + 1) / 2;
  std::vector<int> all(static_cast<std::size_t>(identities));
  for (int k = 0; k < identities; ++k) all[static_cast<std::size_t>(k)] = k;
  for (int r = 0; r < repeats; ++r) {
    const auto order = detail::sample_without_replacement(all, all.size(), rng);
    Split s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.test.assign(order.begin() + n_train, order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    plan.splits.push_back(std::move(s));
  }
  return plan;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_DATASET_HPP_
