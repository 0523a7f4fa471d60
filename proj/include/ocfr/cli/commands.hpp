#pragma once

// The five pipeline commands behind the `ocfr` tool. Each takes an explicit configuration
// and output directory, writes its artifacts there and returns what it wrote. Everything
// written is a function of (config, seed, inputs); wall-clock times only reach `log`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ocfr/dataset.hpp"
#include "ocfr/io/config.hpp"
#include "ocfr/io/manifest.hpp"
#include "ocfr/io/npy.hpp"
#include "ocfr/io/png.hpp"
#include "ocfr/io/volume.hpp"
#include "ocfr/metrics.hpp"
#include "ocfr/nn/checkpoint.hpp"
#include "ocfr/pad.hpp"
#include "ocfr/reconstruct.hpp"
#include "ocfr/train/folds.hpp"
#include "ocfr/train/trainer.hpp"

namespace ocfr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline pad::SliceSource slices_of(const io::InstanceReader& r) {
  return {r.size(), [&r](int j) { return r.bscan(j); }};
}

inline std::vector<const io::ManifestEntry*> require(const io::Manifest& m, io::Partition p, std::optional<Label> label = std::nullopt) {
  auto sel = m.select(p, label);
  if (sel.empty()) {
    std::string what(io::to_string(p));
    if (label) what += " " + std::string(to_string(*label));
    throw InvalidArgument("manifest has no instances in the " + what + " partition");
  }
  return sel;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// generate

struct GenerateResult {
  fs::path manifest;
  io::Manifest plan;
};

inline GenerateResult cmd_generate(const io::ExperimentConfig& cfg, const fs::path& out, std::ostream& log = std::cout) {
  cfg.validate();
  detail::make_dir(out);
  auto m = generate_dataset(cfg.dataset, cfg.phantom, out);
  detail::write_text(out / "config.ini", io::render_config(cfg));
  log << "generated " << m.entries.size() << " instances of " << cfg.phantom.n_bscans << " B-scans in " << out.string() << "\n";
  for (auto p : {io::Partition::reference, io::Partition::train, io::Partition::test}) {
    const auto b = m.select(p, Label::bonafide).size(), a = m.select(p, Label::presentation_attack).size();
    log << "  " << io::to_string(p) << ": " << b << " bonafide, " << a << " attack\n";
  }
  return {out / "manifest.json", std::move(m)};
}

// ---------------------------------------------------------------------------------------
// train

struct FoldSummary {
  int fold = 0;  ///< 1-based
  int best_epoch = 0;
  double miou = 0, pa = 0;
};

struct TrainResult {
  std::vector<FoldSummary> folds;
  double mean_miou = 0, std_miou = 0, mean_pa = 0, std_pa = 0;
  fs::path model;  ///< copy of the fold checkpoint with the highest test mIOU
};

/// Network-ready slices of every annotated training instance, in manifest order.
inline train::SegmentationDataset load_training_set(const io::Manifest& m, const nn::NetworkConfig& net) {
  train::SegmentationDataset data;
  for (const auto* e : detail::require(m, io::Partition::train)) {
    io::InstanceReader r(m.resolve(*e));
    if (!r.meta().has_masks) throw InvalidArgument("training instance '" + e->id + "' has no masks");
    for (int j = 1; j <= r.size(); ++j) data.add(r.bscan(j), r.mask(j), net);
  }
  return data;
}

inline std::string summary_csv(const TrainResult& r) {
  std::string s = "fold,best_epoch,mIOU,PA\n";
  for (const auto& f : r.folds) s += std::to_string(f.fold) + "," + std::to_string(f.best_epoch) + "," + detail::num(f.miou) + "," + detail::num(f.pa) + "\n";
  s += "Mean,," + detail::num(r.mean_miou) + "," + detail::num(r.mean_pa) + "\n";
  s += "Std,," + detail::num(r.std_miou) + "," + detail::num(r.std_pa) + "\n";
  return s;
}

/// k-fold cross-validation over the annotated B-scans. Writes train_log.csv, summary.csv,
/// fold_<k>.ckpt for every fold, model.ckpt and the effective config.
inline TrainResult cmd_train(const fs::path& manifest_path, const io::ExperimentConfig& cfg, const fs::path& out,
                             std::ostream& log = std::cout) {
  cfg.validate();
  const auto m = io::load_manifest(manifest_path);
  const auto data = load_training_set(m, cfg.network);
  const auto plan = train::make_folds(data.size(), static_cast<std::size_t>(cfg.train.fold_count), cfg.train.seed);
  detail::make_dir(out);
  detail::write_text(out / "config.ini", io::render_config(cfg));
  log << "training on " << data.size() << " B-scans, " << plan.fold_count() << " folds, " << cfg.train.epochs << " epochs\n";

  std::ofstream trace(out / "train_log.csv", std::ios::binary);
  if (!trace) throw IoError("cannot write " + (out / "train_log.csv").string());
  trace << "fold,epoch,L_D,L_S,L,test_mIOU,test_PA\n";

  TrainResult res;
  int best_fold = 0;
  for (std::size_t k = 0; k < plan.fold_count(); ++k) {
    const int fold = static_cast<int>(k) + 1;
    auto r = train::train_fold(data, plan.train(k), plan.test(k), cfg.network, cfg.train, fold, [&](const train::EpochRecord& e) {
      trace << e.fold << "," << e.epoch << "," << detail::num(e.l_d) << "," << detail::num(e.l_s) << "," << detail::num(e.l) << ","
            << detail::num(e.test_miou) << "," << detail::num(e.test_pa) << "\n";
      trace.flush();
      log << "fold " << e.fold << " epoch " << e.epoch << "  L_D " << detail::num(e.l_d) << "  L_S " << detail::num(e.l_s)
          << "  mIOU " << detail::num(e.test_miou) << "  PA " << detail::num(e.test_pa) << "  (" << detail::num(e.seconds) << " s)\n";
    });
    nn::save_checkpoint(out / ("fold_" + std::to_string(fold) + ".ckpt"), r.net);
    res.folds.push_back({fold, r.best_epoch, r.best_miou, r.best_pa});
    if (r.best_miou > res.folds[static_cast<std::size_t>(best_fold)].miou) best_fold = static_cast<int>(k);
  }
  if (!trace) throw IoError("cannot write " + (out / "train_log.csv").string());

  const double n = static_cast<double>(res.folds.size());
  for (const auto& f : res.folds) {
    res.mean_miou += f.miou / n;
    res.mean_pa += f.pa / n;
  }
  for (const auto& f : res.folds) {
    res.std_miou += (f.miou - res.mean_miou) * (f.miou - res.mean_miou) / n;
    res.std_pa += (f.pa - res.mean_pa) * (f.pa - res.mean_pa) / n;
  }
  res.std_miou = std::sqrt(res.std_miou);
  res.std_pa = std::sqrt(res.std_pa);
  detail::write_text(out / "summary.csv", summary_csv(res));
  res.model = out / "model.ckpt";
  fs::copy_file(out / ("fold_" + std::to_string(best_fold + 1) + ".ckpt"), res.model, fs::copy_options::overwrite_existing);
  log << "mean mIOU " << detail::num(res.mean_miou) << " +- " << detail::num(res.std_miou) << ", mean PA " << detail::num(res.mean_pa)
      << " +- " << detail::num(res.std_pa) << "; model.ckpt = fold " << best_fold + 1 << "\n";
  return res;
}

// ---------------------------------------------------------------------------------------
// pad

struct ReferenceFile {
  ReferenceCode code;
  double threshold = 0;  ///< largest leave-one-out reference-instance score
  nn::NetworkConfig network;
};

inline json to_json(const ReferenceFile& r) {
  return json{{"source_count", r.code.source_count},
              {"threshold", r.threshold},
              {"network", {{"input_height", r.network.input_height}, {"input_width", r.network.input_width}, {"width_divisor", r.network.width_divisor}}},
              {"pooled", r.code.pooled}};
}

inline ReferenceFile load_reference(const fs::path& path) {
  const json j = io::read_json(path);
  ReferenceFile r;
  try {
    r.code.source_count = j.at("source_count").get<std::size_t>();
    r.code.pooled = j.at("pooled").get<std::vector<double>>();
    r.threshold = j.at("threshold").get<double>();
    const auto& n = j.at("network");
    r.network = {n.at("input_height").get<int>(), n.at("input_width").get<int>(), n.at("width_divisor").get<int>()};
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  r.code.validate();
  return r;
}

/// Score of every reference instance against a reference code built from the others
/// (in-sample when there is only one).
inline std::vector<double> leave_one_out_scores(const std::vector<std::vector<pad::Code>>& per_instance) {
  std::vector<double> scores;
  for (std::size_t i = 0; i < per_instance.size(); ++i) {
    std::vector<pad::Code> rest;
    for (std::size_t k = 0; k < per_instance.size(); ++k)
      if (k != i || per_instance.size() == 1) rest.insert(rest.end(), per_instance[k].begin(), per_instance[k].end());
    scores.push_back(pad::spoof_score(per_instance[i], pad::build_reference(rest)).value);
  }
  return scores;
}

struct ScoredInstance {
  std::string id;
  Label label;
  double score;
};

struct PadResult {
  ReferenceFile reference;
  std::vector<ScoredInstance> scores;
  pad::PadMetrics metrics;
};

inline json to_json(const pad::PadMetrics& m) {
  json det = json::array();
  for (const auto& p : m.det)
    det.push_back({{"threshold", std::isfinite(p.threshold) ? json(p.threshold) : json(nullptr)}, {"apcer", p.apcer}, {"bpcer", p.bpcer}});
  return json{{"acc", m.acc},           {"acc_threshold", m.acc_threshold}, {"bpcer10", m.bpcer10}, {"bpcer20", m.bpcer20},
              {"d_eer", m.d_eer},       {"d_eer_threshold", m.d_eer_threshold}, {"det", std::move(det)}};
}

inline std::string scores_csv(const std::vector<ScoredInstance>& s) {
  std::string out = "instance_id,label,score\n";
  for (const auto& i : s) out += i.id + "," + std::string(to_string(i.label)) + "," + detail::num(i.score) + "\n";
  return out;
}

/// Reference code from the reference partition only, then one score per test instance.
/// Writes reference.json, scores.csv and metrics.json (percentages; DET from -inf upward).
inline PadResult cmd_pad(const fs::path& manifest_path, const fs::path& checkpoint, const io::ExperimentConfig& cfg, const fs::path& out,
                         std::ostream& log = std::cout) {
  const auto m = io::load_manifest(manifest_path);
  const auto refs = detail::require(m, io::Partition::reference);
  detail::require(m, io::Partition::test, Label::bonafide);
  detail::require(m, io::Partition::test, Label::presentation_attack);
  const auto net = nn::load_checkpoint(checkpoint);

  PadResult res;
  res.reference.network = net.config();
  std::vector<std::vector<pad::Code>> ref_codes;
  std::vector<pad::Code> all;
  for (const auto* e : refs) {
    io::InstanceReader r(m.resolve(*e));
    ref_codes.push_back(pad::encode_slices(net, detail::slices_of(r), cfg.pad.encode_batch));
    all.insert(all.end(), ref_codes.back().begin(), ref_codes.back().end());
  }
  res.reference.code = pad::build_reference(all);
  res.reference.threshold = pad::reference_threshold(leave_one_out_scores(ref_codes));

  std::vector<double> bona, atk;
  for (const auto* e : m.select(io::Partition::test)) {
    io::InstanceReader r(m.resolve(*e));
    const auto codes = pad::encode_slices(net, detail::slices_of(r), cfg.pad.encode_batch);
    const double s = pad::spoof_score(codes, res.reference.code).value;
    res.scores.push_back({e->id, e->label, s});
    (e->label == Label::bonafide ? bona : atk).push_back(s);
    log << "  " << e->id << " (" << to_string(e->label) << "): " << detail::num(s) << "\n";
  }
  res.metrics = pad::pad_metrics(bona, atk);

  detail::make_dir(out);
  io::write_json(out / "reference.json", to_json(res.reference));
  detail::write_text(out / "scores.csv", scores_csv(res.scores));
  json report = to_json(res.metrics);
  report["reference_threshold"] = res.reference.threshold;
  report["reference_threshold_acc"] = pad::accuracy_at(bona, atk, res.reference.threshold);
  report["n_bonafide"] = bona.size();
  report["n_attack"] = atk.size();
  io::write_json(out / "metrics.json", report);
  log << "Acc " << detail::num(res.metrics.acc) << "%  D-EER " << detail::num(res.metrics.d_eer) << "%  BPCER10 "
      << detail::num(res.metrics.bpcer10) << "%  BPCER20 " << detail::num(res.metrics.bpcer20) << "%\n";
  return res;
}

// ---------------------------------------------------------------------------------------
// reconstruct

/// Hard labels for one raw B-scan at rows x cols: probabilities are resized bilinearly
/// from the network grid before the argmax.
inline AnnotationMask predict_mask(const nn::SegmentationNet<float>& net, const BScan& raw, int rows, int cols) {
  const auto x = to_network_input<float>(train::prepare_input(raw, net.config()));
  const auto out = net.forward(x);
  return SegmentationOutput{nn::resize_forward(out.segmentation(), rows, cols)}.argmax();
}

struct ReconstructOptions {
  std::optional<fs::path> checkpoint;  ///< required unless use_gt_masks
  std::optional<fs::path> reference;   ///< reference.json from `pad`; enables the attack check
  bool use_gt_masks = false;
  bool force = false;
  int rows = kNetHeight;  ///< every slice is resampled to rows x cols before projection
  int cols = kNetWidth;
};

struct ReconstructResult {
  recon::Reconstruction images;
  std::optional<double> score;
  bool attack_flag = false;
  std::vector<fs::path> written;
};

/// Thrown when the instance scores as an attack and `force` is off.
class AttackSuspected : public Error {
 public:
  using Error::Error;
};

inline ReconstructResult cmd_reconstruct(const fs::path& instance_dir, const ReconstructOptions& opt, const io::ExperimentConfig& cfg,
                                         const fs::path& out, std::ostream& log = std::cout) {
  if (!opt.use_gt_masks && !opt.checkpoint) throw InvalidArgument("reconstruct needs a checkpoint unless ground-truth masks are used");
  if (opt.reference && !opt.checkpoint) throw InvalidArgument("the attack check needs a checkpoint");
  io::InstanceReader r(instance_dir);
  if (opt.use_gt_masks && !r.meta().has_masks) throw InvalidArgument(instance_dir.string() + " has no ground-truth masks");
  std::optional<nn::SegmentationNet<float>> net;
  if (opt.checkpoint) net.emplace(nn::load_checkpoint(*opt.checkpoint));

  ReconstructResult res;
  if (opt.reference) {
    const auto ref = load_reference(*opt.reference);
    if (!(ref.network == net->config())) throw InvalidArgument("reference.json was built with a different network than the checkpoint");
    const auto codes = pad::encode_slices(*net, detail::slices_of(r), cfg.pad.encode_batch);
    res.score = pad::spoof_score(codes, ref.code).value;
    res.attack_flag = *res.score > ref.threshold;
    if (res.attack_flag) {
      log << "warning: spoof score " << detail::num(*res.score) << " exceeds the reference threshold " << detail::num(ref.threshold) << "\n";
      if (!opt.force) throw AttackSuspected(instance_dir.string() + " scores as a presentation attack; rerun with --force to reconstruct anyway");
    }
  }

  recon::InstanceReconstructor rec(cfg.reconstruct);
  for (int j = 1; j <= r.size(); ++j) {
    const BScan raw = r.bscan(j);
    auto [img, mask] = opt.use_gt_masks ? resize_to_network(raw, r.mask(j), opt.rows, opt.cols)
                                        : resize_to_network(raw, std::nullopt, opt.rows, opt.cols);
    if (!opt.use_gt_masks) mask = predict_mask(*net, raw, opt.rows, opt.cols);
    rec.add(img, *mask);
  }
  res.images = rec.finish();

  detail::make_dir(out);
  for (auto h : {Layer::s, Layer::v, Layer::d}) {
    const std::string base = "R_" + std::string(layer_name(h));
    io::write_png(out / (base + ".png"), res.images[h].to_u8());
    io::write_npy(out / (base + ".raw.npy"), res.images[h].raw);
    res.written.push_back(out / (base + ".png"));
  }
  json meta{{"instance", instance_dir.filename().string()},
            {"n_bscans", r.size()},
            {"rows", res.images.layers[0].raw.rows()},
            {"cols", res.images.layers[0].raw.cols()},
            {"mask_source", opt.use_gt_masks ? "ground_truth" : "predicted"},
            {"attack_flag", res.attack_flag},
            {"spoof_score", res.score ? json(*res.score) : json(nullptr)}};
  io::write_json(out / "reconstruction.json", meta);
  log << "wrote R_s, R_v, R_d (" << res.images.layers[0].raw.rows() << "x" << res.images.layers[0].raw.cols() << ") to " << out.string()
      << (res.attack_flag ? " [attack flag set]" : "") << "\n";
  return res;
}

// ---------------------------------------------------------------------------------------
// metrics

/// Scores of a `pad` scores.csv, split by label.
inline std::pair<std::vector<double>, std::vector<double>> read_pad_scores(const fs::path& path) {
  std::istringstream in(detail::read_text(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("instance_id,label,score", 0) != 0) throw IoError(path.string() + ": missing header instance_id,label,score");
  std::vector<double> bona, atk;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    const Label l = parse_label(line.substr(c1 + 1, c2 - c1 - 1));
    double s = 0;
    try {
      std::size_t used = 0;
      s = std::stod(line.substr(c2 + 1), &used);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad score");
    }
    (l == Label::bonafide ? bona : atk).push_back(s);
  }
  return {std::move(bona), std::move(atk)};
}

/// One score per line (blank lines and '#' comments skipped).
inline std::vector<double> read_score_list(const fs::path& path) {
  std::istringstream in(detail::read_text(path));
  std::vector<double> v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      v.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad score '" + line + "'");
    }
  }
  return v;
}

struct MetricsOptions {
  std::optional<fs::path> pad_scores;
  std::optional<fs::path> genuine, impostor;
  double gmr_fmr = 5.0;  ///< FMR target (%) for GMR
};

inline json cmd_metrics(const MetricsOptions& opt, const std::optional<fs::path>& out, std::ostream& log = std::cout) {
  if (!opt.pad_scores && !(opt.genuine && opt.impostor)) throw InvalidArgument("metrics needs --scores or both --genuine and --impostor");
  if (opt.genuine.has_value() != opt.impostor.has_value()) throw InvalidArgument("--genuine and --impostor go together");
  json report = json::object();
  if (opt.pad_scores) {
    const auto [bona, atk] = read_pad_scores(*opt.pad_scores);
    report["pad"] = to_json(pad::pad_metrics(bona, atk));
  }
  if (opt.genuine) {
    const auto g = read_score_list(*opt.genuine), i = read_score_list(*opt.impostor);
    report["verification"] = {{"eer", metrics::eer(g, i)}, {"fmr100", metrics::fmr100(g, i)},
                              {"gmr", metrics::gmr_at_fmr(g, i, opt.gmr_fmr)}, {"gmr_fmr", opt.gmr_fmr}};
  }
  if (out) {
    if (out->has_parent_path()) detail::make_dir(out->parent_path());
    io::write_json(*out, report);
  }
  log << report.dump(2) << "\n";
  return report;
}

}  // namespace ocfr::cli
