#pragma once

// Phantom datasets on disk: reference bonafides, test bonafides, test attacks and an
// annotated (masked) training set, each instance generated from its own derived seed.

#include <filesystem>
#include <string>

#include "ocfr/io/manifest.hpp"
#include "ocfr/io/png.hpp"
#include "ocfr/phantom.hpp"

namespace ocfr {

struct DatasetSpec {
  int reference = 2;
  int test_bonafide = 4;
  int test_pa = 4;
  int annotated = 4;
  bool mix_pa_types = true;  ///< alternate attack archetypes; otherwise use the config's pa_type

  int total() const noexcept { return reference + test_bonafide + test_pa + annotated; }

  void validate() const {
    if (reference < 1 || test_bonafide < 1 || test_pa < 1 || annotated < 1)
      throw InvalidArgument("dataset: every partition needs at least one instance");
  }
};

namespace detail {

inline std::string instance_id(std::string_view prefix, int i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*s_%03d", static_cast<int>(prefix.size()), prefix.data(), i);
  return buf;
}

}  // namespace detail

/// Renders one instance slice by slice into `dir` (bonafides also get ridge_map.png).
inline io::InstanceMeta write_phantom_instance(const std::filesystem::path& dir, const phantom::PhantomConfig& cfg, Label label,
                                               bool with_masks, const std::string& subject) {
  phantom::PhantomGenerator gen(cfg);
  io::InstanceWriter w(dir, {subject, "F01", 1, label});
  for (int j = 0; j < cfg.n_bscans; ++j) {
    auto s = label == Label::bonafide ? gen.bonafide_slice(j) : gen.attack_slice(j);
    w.add(s.bscan, with_masks ? &*s.mask : nullptr);
  }
  if (label == Label::bonafide) {
    auto rm = gen.ridge_map();
    for (auto& v : rm.ridges.values()) v = v ? 255 : 0;
    io::write_png(dir / "ridge_map.png", rm.ridges);
  }
  return w.finish();
}

/// Ids, paths, partitions and seeds for every instance, without rendering anything.
inline io::Manifest plan_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  io::Manifest m;
  m.seed = seed;
  int counter = 0;
  auto emit = [&](std::string_view prefix, int count, Label label, io::Partition part, bool annotated) {
    for (int i = 0; i < count; ++i) {
      const std::string id = detail::instance_id(prefix, i);
      m.entries.push_back({id, std::string(prefix) + "/" + id, label, part, derive_seed(seed, static_cast<std::uint64_t>(++counter)), annotated});
    }
  };
  emit("reference", spec.reference, Label::bonafide, io::Partition::reference, false);
  emit("test_bonafide", spec.test_bonafide, Label::bonafide, io::Partition::test, false);
  emit("test_pa", spec.test_pa, Label::presentation_attack, io::Partition::test, false);
  emit("annotated", spec.annotated, Label::bonafide, io::Partition::train, true);
  m.validate();
  return m;
}

/// Phantom configuration of one planned instance.
inline phantom::PhantomConfig instance_config(const DatasetSpec& spec, const phantom::PhantomConfig& base, const io::Manifest& m,
                                              std::size_t index) {
  phantom::PhantomConfig cfg = base;
  const auto& e = m.entries.at(index);
  cfg.seed = e.seed;
  if (e.label == Label::presentation_attack && spec.mix_pa_types) {
    std::size_t attack_rank = 0;
    for (std::size_t i = 0; i < index; ++i) attack_rank += m.entries[i].label == Label::presentation_attack;
    cfg.pa_type = attack_rank % 2 == 0 ? phantom::PaType::layered_2d : phantom::PaType::homogeneous_3d;
  }
  return cfg;
}

inline io::Manifest generate_dataset(const DatasetSpec& spec, const phantom::PhantomConfig& base, const std::filesystem::path& out_dir,
                                     const std::filesystem::path& manifest_name = "manifest.json") {
  base.validate();
  io::Manifest m = plan_dataset(spec, base.seed);
  m.root = out_dir;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    write_phantom_instance(m.resolve(e), instance_config(spec, base, m, i), e.label, e.annotated, "S" + std::to_string(i + 1));
  }
  io::save_manifest(out_dir / manifest_name, m);
  return m;
}

}  // namespace ocfr
