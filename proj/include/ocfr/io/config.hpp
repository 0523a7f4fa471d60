#pragma once

// Experiment configuration: one INI file with [phantom], [dataset], [network], [train],
// [pad] and [reconstruct] sections layered over a desk- or full-scale preset.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "ocfr/dataset.hpp"
#include "ocfr/nn/network.hpp"
#include "ocfr/phantom.hpp"
#include "ocfr/reconstruct.hpp"
#include "ocfr/train/trainer.hpp"

namespace ocfr::io {

enum class Scale { desk, full };

inline Scale parse_scale(std::string_view s) {
  if (s == "desk") return Scale::desk;
  if (s == "full") return Scale::full;
  throw InvalidArgument("unknown scale '" + std::string(s) + "' (expected desk or full)");
}

inline std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "full"; }

struct PadConfig {
  int encode_batch = 8;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  phantom::PhantomConfig phantom;
  DatasetSpec dataset;
  nn::NetworkConfig network;
  train::TrainConfig train;
  PadConfig pad;
  recon::ReconstructConfig reconstruct;

  void validate() const {
    phantom.validate();
    dataset.validate();
    network.validate();
    train.validate();
    if (pad.encode_batch < 1) throw InvalidArgument("pad: encode_batch must be >= 1");
    if (reconstruct.straighten.window < 1) throw InvalidArgument("reconstruct: window must be >= 1");
    if (dataset.annotated * phantom.n_bscans < train.fold_count)
      throw InvalidArgument("dataset: fewer annotated B-scans than folds");
  }
};

/// Desk scale: reduced width network on a short volume; full scale: the complete network,
/// 400-slice volumes and 16 annotated instances (6400 annotated B-scans).
inline ExperimentConfig preset(Scale scale) {
  ExperimentConfig c;
  if (scale == Scale::desk) {
    c.phantom.n_bscans = 64;
    c.network = {128, 384, 8};
    c.train.epochs = 12;
    c.train.batch_size = 8;
    c.train.learning_rate = 1e-3;
  } else {
    c.phantom.full_fidelity = true;
    c.dataset = {16, 8, 8, 16, true};
  }
  return c;
}

namespace detail {

struct KeyTable {
  std::map<std::string, std::function<void(const std::string&)>> setters;

  template <typename V>
  void bind(const std::string& key, V& target) {
    setters[key] = [&target, key](const std::string& text) {
      if constexpr (std::is_same_v<V, bool>) {
        if (text == "true" || text == "1" || text == "yes") target = true;
        else if (text == "false" || text == "0" || text == "no") target = false;
        else throw InvalidArgument("config: " + key + " expects a boolean, got '" + text + "'");
      } else {
        std::istringstream in(text);
        V v{};
        if (!(in >> v) || !(in >> std::ws).eof()) throw InvalidArgument("config: cannot parse " + key + " = '" + text + "'");
        target = v;
      }
    };
  }

  void bind(const std::string& key, std::function<void(const std::string&)> f) { setters[key] = std::move(f); }
};

inline std::map<std::string, KeyTable> key_tables(ExperimentConfig& c) {
  std::map<std::string, KeyTable> t;
  auto& g = t["general"];
  g.bind("general.seed", c.seed);

  auto& p = t["phantom"];
  p.bind("phantom.n_bscans", c.phantom.n_bscans);
  p.bind("phantom.height", c.phantom.height);
  p.bind("phantom.width", c.phantom.width);
  p.bind("phantom.depth_sc", c.phantom.layer_depths[0]);
  p.bind("phantom.depth_ve", c.phantom.layer_depths[1]);
  p.bind("phantom.depth_d", c.phantom.layer_depths[2]);
  p.bind("phantom.intensity_sc", c.phantom.layer_intensities[0]);
  p.bind("phantom.intensity_ve", c.phantom.layer_intensities[1]);
  p.bind("phantom.intensity_d", c.phantom.layer_intensities[2]);
  p.bind("phantom.ridge_period", c.phantom.ridge_period);
  p.bind("phantom.ridge_amplitude", c.phantom.ridge_amplitude);
  p.bind("phantom.ridge_sharpness", c.phantom.ridge_sharpness);
  p.bind("phantom.duct_density", c.phantom.duct_density);
  p.bind("phantom.noise_sigma", c.phantom.noise_sigma);
  p.bind("phantom.surface_tilt", c.phantom.surface_tilt);
  p.bind("phantom.full_fidelity", c.phantom.full_fidelity);
  p.bind("phantom.pa_type", [&c](const std::string& s) { c.phantom.pa_type = phantom::parse_pa_type(s); });

  auto& d = t["dataset"];
  d.bind("dataset.reference", c.dataset.reference);
  d.bind("dataset.test_bonafide", c.dataset.test_bonafide);
  d.bind("dataset.test_pa", c.dataset.test_pa);
  d.bind("dataset.annotated", c.dataset.annotated);
  d.bind("dataset.mix_pa_types", c.dataset.mix_pa_types);

  auto& n = t["network"];
  n.bind("network.input_height", c.network.input_height);
  n.bind("network.input_width", c.network.input_width);
  n.bind("network.width_divisor", c.network.width_divisor);

  auto& tr = t["train"];
  tr.bind("train.learning_rate", c.train.learning_rate);
  tr.bind("train.beta1", c.train.beta1);
  tr.bind("train.beta2", c.train.beta2);
  tr.bind("train.weight_decay", c.train.weight_decay);
  tr.bind("train.batch_size", c.train.batch_size);
  tr.bind("train.epochs", c.train.epochs);
  tr.bind("train.folds", c.train.fold_count);
  tr.bind("train.weight_reconstruction", c.train.loss_weights.reconstruction);
  tr.bind("train.weight_segmentation", c.train.loss_weights.segmentation);
  tr.bind("train.hflip", c.train.hflip);
  tr.bind("train.eval_batch", c.train.eval_batch);

  t["pad"].bind("pad.encode_batch", c.pad.encode_batch);

  auto& r = t["reconstruct"];
  r.bind("reconstruct.denoise", c.reconstruct.denoise);
  r.bind("reconstruct.window", c.reconstruct.straighten.window);
  r.bind("reconstruct.anchor_row", c.reconstruct.straighten.anchor_row);
  r.bind("reconstruct.intensity_fraction", c.reconstruct.straighten.intensity_fraction);
  r.bind("reconstruct.surface", [&c](const std::string& s) {
    if (s == "mask") c.reconstruct.straighten.source = recon::SurfaceSource::mask;
    else if (s == "intensity") c.reconstruct.straighten.source = recon::SurfaceSource::intensity;
    else throw InvalidArgument("config: reconstruct.surface must be mask or intensity, got '" + s + "'");
  });
  return t;
}

}  // namespace detail

/// Applies INI text on top of `base`. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base, const std::string& where = "<config>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(where + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  auto tables = detail::key_tables(base);
  for (const auto& [section, body] : tree) {
    auto it = tables.find(section);
    if (it == tables.end()) {
      if (!body.empty() || body.data().empty()) throw InvalidArgument(where + ": unknown section [" + section + "]");
      throw InvalidArgument(where + ": key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto setter = it->second.setters.find(full);
      if (setter == it->second.setters.end()) throw InvalidArgument(where + ": unknown key '" + full + "'");
      try {
        setter->second(value.data());
      } catch (const InvalidArgument& e) {
        throw InvalidArgument(where + ": " + e.what());
      }
    }
  }
  base.train.seed = base.seed;
  base.phantom.seed = base.seed;
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, Scale scale) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, preset(scale), path.string());
}

/// The effective configuration, in the same INI dialect parse_config reads.
inline std::string render_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  const auto& p = c.phantom;
  const auto& t = c.train;
  const auto& s = c.reconstruct.straighten;
  o << "[general]\nseed = " << c.seed << "\n\n";
  o << "[phantom]\nn_bscans = " << p.n_bscans << "\nheight = " << p.height << "\nwidth = " << p.width << "\ndepth_sc = "
    << p.layer_depths[0] << "\ndepth_ve = " << p.layer_depths[1] << "\ndepth_d = " << p.layer_depths[2]
    << "\nintensity_sc = " << p.layer_intensities[0] << "\nintensity_ve = " << p.layer_intensities[1]
    << "\nintensity_d = " << p.layer_intensities[2] << "\nridge_period = " << p.ridge_period
    << "\nridge_amplitude = " << p.ridge_amplitude << "\nridge_sharpness = " << p.ridge_sharpness
    << "\nduct_density = " << p.duct_density << "\nnoise_sigma = " << p.noise_sigma << "\nsurface_tilt = " << p.surface_tilt
    << "\nfull_fidelity = " << (p.full_fidelity ? "true" : "false") << "\npa_type = " << phantom::to_string(p.pa_type) << "\n\n";
  o << "[dataset]\nreference = " << c.dataset.reference << "\ntest_bonafide = " << c.dataset.test_bonafide
    << "\ntest_pa = " << c.dataset.test_pa << "\nannotated = " << c.dataset.annotated
    << "\nmix_pa_types = " << (c.dataset.mix_pa_types ? "true" : "false") << "\n\n";
  o << "[network]\ninput_height = " << c.network.input_height << "\ninput_width = " << c.network.input_width
    << "\nwidth_divisor = " << c.network.width_divisor << "\n\n";
  o << "[train]\nlearning_rate = " << t.learning_rate << "\nbeta1 = " << t.beta1 << "\nbeta2 = " << t.beta2
    << "\nweight_decay = " << t.weight_decay << "\nbatch_size = " << t.batch_size << "\nepochs = " << t.epochs
    << "\nfolds = " << t.fold_count << "\nweight_reconstruction = " << t.loss_weights.reconstruction
    << "\nweight_segmentation = " << t.loss_weights.segmentation << "\nhflip = " << (t.hflip ? "true" : "false")
    << "\neval_batch = " << t.eval_batch << "\n\n";
  o << "[pad]\nencode_batch = " << c.pad.encode_batch << "\n\n";
  o << "[reconstruct]\ndenoise = " << (c.reconstruct.denoise ? "true" : "false") << "\nwindow = " << s.window
    << "\nanchor_row = " << s.anchor_row << "\nintensity_fraction = " << s.intensity_fraction
    << "\nsurface = " << (s.source == recon::SurfaceSource::mask ? "mask" : "intensity") << "\n";
  return o.str();
}

}  // namespace ocfr::io
