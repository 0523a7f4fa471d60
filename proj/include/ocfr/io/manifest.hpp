#pragma once

// Dataset manifest: every instance with its path (relative to the manifest), label,
// partition and generation seed.

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/io/volume.hpp"
#include "ocfr/types.hpp"

namespace ocfr::io {

enum class Partition { reference, train, test };

inline std::string_view to_string(Partition p) noexcept {
  switch (p) {
    case Partition::reference: return "reference";
    case Partition::train: return "train";
    case Partition::test: return "test";
  }
  return "?";
}

inline Partition parse_partition(std::string_view s) {
  if (s == "reference") return Partition::reference;
  if (s == "train") return Partition::train;
  if (s == "test") return Partition::test;
  throw InvalidArgument("unknown partition '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string id;
  std::string path;  ///< relative to the manifest directory
  Label label = Label::bonafide;
  Partition partition = Partition::test;
  std::uint64_t seed = 0;
  bool annotated = false;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  fs::path root;  ///< directory of the manifest file; not serialised

  fs::path resolve(const ManifestEntry& e) const { return root / e.path; }

  std::vector<const ManifestEntry*> select(Partition p, std::optional<Label> label = std::nullopt) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.partition == p && (!label || e.label == *label)) out.push_back(&e);
    return out;
  }

  /// Ids unique, partitions disjoint, annotated entries bonafide, PAs never reference or train.
  void validate() const {
    std::set<std::string> ids, paths;
    for (const auto& e : entries) {
      if (e.id.empty()) throw InvalidArgument("manifest: empty instance id");
      if (!ids.insert(e.id).second) throw InvalidArgument("manifest: instance '" + e.id + "' listed twice");
      if (!paths.insert(e.path).second) throw InvalidArgument("manifest: path '" + e.path + "' listed twice");
      if (e.label == Label::presentation_attack && e.partition != Partition::test)
        throw InvalidArgument("manifest: attack '" + e.id + "' outside the test partition");
      if (e.annotated && e.label != Label::bonafide) throw InvalidArgument("manifest: annotated attack '" + e.id + "'");
      if (e.partition == Partition::train && !e.annotated) throw InvalidArgument("manifest: training instance '" + e.id + "' lacks masks");
    }
  }
};

inline json to_json(const Manifest& m) {
  json arr = json::array();
  for (const auto& e : m.entries)
    arr.push_back({{"id", e.id}, {"path", e.path}, {"label", std::string(to_string(e.label))},
                   {"partition", std::string(to_string(e.partition))}, {"seed", e.seed}, {"annotated", e.annotated}});
  return json{{"version", 1}, {"seed", m.seed}, {"instances", std::move(arr)}};
}

inline void save_manifest(const fs::path& path, const Manifest& m) {
  m.validate();
  write_json(path, to_json(m));
}

inline Manifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  Manifest m;
  m.root = path.parent_path();
  try {
    if (j.at("version").get<int>() != 1) throw IoError(path.string() + ": unsupported manifest version");
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("instances")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.path = e.at("path").get<std::string>();
      me.label = parse_label(e.at("label").get<std::string>());
      me.partition = parse_partition(e.at("partition").get<std::string>());
      me.seed = e.at("seed").get<std::uint64_t>();
      me.annotated = e.value("annotated", false);
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace ocfr::io
