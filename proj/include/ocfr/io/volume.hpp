#pragma once

// On-disk instance layout: one directory per instance with
//   bscan_0001.png ... (16-bit grayscale, intensity * 65535)
//   mask_0001.png ...  (8-bit, values 0..3; optional)
//   meta.json          (subject_id, finger_id, session, label, n_bscans, height, width, has_masks)

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ocfr/error.hpp"
#include "ocfr/io/png.hpp"
#include "ocfr/types.hpp"

namespace ocfr::io {

namespace fs = std::filesystem;
using nlohmann::json;

struct InstanceMeta {
  std::string subject_id;
  std::string finger_id;
  int session = 1;
  Label label = Label::bonafide;
  int n_bscans = 0;
  int height = 0;
  int width = 0;
  bool has_masks = false;
};

inline json to_json(const InstanceMeta& m) {
  return json{{"subject_id", m.subject_id}, {"finger_id", m.finger_id}, {"session", m.session},
              {"label", std::string(to_string(m.label))}, {"n_bscans", m.n_bscans}, {"height", m.height},
              {"width", m.width}, {"has_masks", m.has_masks}};
}

inline std::string slice_name(std::string_view prefix, int slice_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*s_%04d.png", static_cast<int>(prefix.size()), prefix.data(), slice_index);
  return buf;
}

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Pretty-printed with a trailing newline; key order is insertion-independent (sorted).
inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError(path.string() + ": write failed");
}

inline Grid<std::uint16_t> to_u16(const Grid<float>& g) {
  Grid<std::uint16_t> out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i)
    out.values()[i] = static_cast<std::uint16_t>(std::lround(std::clamp(g.values()[i], 0.0f, 1.0f) * 65535.0f));
  return out;
}

/// Writes slices as they come; meta.json is written by finish().
class InstanceWriter {
 public:
  InstanceWriter(fs::path dir, InstanceMeta meta) : dir_(std::move(dir)), meta_(std::move(meta)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError(dir_.string() + ": cannot create directory (" + ec.message() + ")");
    meta_.n_bscans = 0;
  }

  void add(const BScan& b, const AnnotationMask* mask = nullptr) {
    if (meta_.n_bscans == 0) {
      meta_.height = b.pixels.rows();
      meta_.width = b.pixels.cols();
      meta_.has_masks = mask != nullptr;
    } else if (b.pixels.rows() != meta_.height || b.pixels.cols() != meta_.width) {
      throw ShapeError("slice " + std::to_string(meta_.n_bscans + 1) + " has size " + ocfr::detail::dims_str(b.pixels.rows(), b.pixels.cols()) +
                       ", instance uses " + ocfr::detail::dims_str(meta_.height, meta_.width));
    }
    if ((mask != nullptr) != meta_.has_masks) throw InvalidArgument("masks must be given for all slices or none");
    const int idx = ++meta_.n_bscans;
    write_png(dir_ / slice_name("bscan", idx), to_u16(b.pixels));
    if (mask) {
      if (!mask->labels.same_shape(b.pixels)) throw ShapeError("mask " + std::to_string(idx) + " does not match its B-scan");
      write_png(dir_ / slice_name("mask", idx), mask->labels);
    }
  }

  const InstanceMeta& finish() {
    write_json(dir_ / "meta.json", to_json(meta_));
    return meta_;
  }

 private:
  fs::path dir_;
  InstanceMeta meta_;
};

inline void write_instance(const fs::path& dir, const OctInstance& inst, const std::vector<AnnotationMask>* masks = nullptr) {
  if (masks && masks->size() != inst.bscans.size()) throw InvalidArgument("write_instance: mask count differs from B-scan count");
  InstanceWriter w(dir, {inst.subject_id, inst.finger_id, inst.session, inst.label});
  for (std::size_t j = 0; j < inst.bscans.size(); ++j) w.add(inst.bscans[j], masks ? &(*masks)[j] : nullptr);
  w.finish();
}

/// Random access to the slices of an instance directory.
class InstanceReader {
 public:
  explicit InstanceReader(fs::path dir) : dir_(std::move(dir)) {
    const json j = read_json(dir_ / "meta.json");
    try {
      meta_.subject_id = j.at("subject_id").get<std::string>();
      meta_.finger_id = j.at("finger_id").get<std::string>();
      meta_.session = j.at("session").get<int>();
      meta_.label = parse_label(j.at("label").get<std::string>());
      meta_.n_bscans = j.at("n_bscans").get<int>();
      meta_.height = j.at("height").get<int>();
      meta_.width = j.at("width").get<int>();
      meta_.has_masks = j.value("has_masks", false);
    } catch (const json::exception& e) {
      throw IoError((dir_ / "meta.json").string() + ": " + e.what());
    }
    if (meta_.n_bscans < 1) throw IoError((dir_ / "meta.json").string() + ": n_bscans must be >= 1");
  }

  const InstanceMeta& meta() const noexcept { return meta_; }
  const fs::path& dir() const noexcept { return dir_; }
  int size() const noexcept { return meta_.n_bscans; }

  /// `slice_index` is 1-based.
  BScan bscan(int slice_index) const {
    check(slice_index);
    const auto path = dir_ / slice_name("bscan", slice_index);
    const auto img = read_png(path);
    if (img.depth != 16) throw IoError(path.string() + ": B-scans must be 16-bit");
    check_size(path, img.pixels);
    BScan b{Grid<float>(img.pixels.rows(), img.pixels.cols()), slice_index};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) b.pixels.values()[i] = static_cast<float>(img.pixels.values()[i] / 65535.0);
    return b;
  }

  AnnotationMask mask(int slice_index) const {
    check(slice_index);
    const auto path = dir_ / slice_name("mask", slice_index);
    if (!meta_.has_masks) throw IoError(dir_.string() + ": instance has no masks");
    const auto img = read_png(path);
    if (img.depth != 8) throw IoError(path.string() + ": masks must be 8-bit");
    check_size(path, img.pixels);
    AnnotationMask m{Grid<std::uint8_t>(img.pixels.rows(), img.pixels.cols())};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      if (img.pixels.values()[i] > 3) throw IoError(path.string() + ": label " + std::to_string(img.pixels.values()[i]) + " outside {0,1,2,3}");
      m.labels.values()[i] = static_cast<std::uint8_t>(img.pixels.values()[i]);
    }
    return m;
  }

  OctInstance load() const {
    OctInstance inst;
    inst.subject_id = meta_.subject_id;
    inst.finger_id = meta_.finger_id;
    inst.session = meta_.session;
    inst.label = meta_.label;
    for (int j = 1; j <= size(); ++j) inst.bscans.push_back(bscan(j));
    return inst;
  }

 private:
  void check(int slice_index) const {
    if (slice_index < 1 || slice_index > meta_.n_bscans)
      throw InvalidArgument("slice " + std::to_string(slice_index) + " outside [1, " + std::to_string(meta_.n_bscans) + "]");
  }
  template <typename P>
  void check_size(const fs::path& path, const Grid<P>& g) const {
    if (g.rows() != meta_.height || g.cols() != meta_.width)
      throw IoError(path.string() + ": size " + ocfr::detail::dims_str(g.rows(), g.cols()) + " differs from meta.json " +
                    ocfr::detail::dims_str(meta_.height, meta_.width));
  }

  fs::path dir_;
  InstanceMeta meta_;
};

}  // namespace ocfr::io
