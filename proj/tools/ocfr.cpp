// ocfr: generate phantom data, train the segmentation network, score presentation
// attacks, reconstruct subsurface fingerprints and compute metrics.
//
// Exit status: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "ocfr/cli/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scale = "desk";
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  app->add_option("--config", c.config, "INI file applied on top of the scale preset")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Seed overriding the config");
  app->add_option("--scale", c.scale, "Preset: desk (reduced network, 64-slice volumes) or full")
      ->check(CLI::IsMember({"desk", "full"}));
  auto* o = app->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ocfr::io::ExperimentConfig resolve(const Common& c) {
  try {
    const auto scale = ocfr::io::parse_scale(c.scale);
    std::istringstream empty;
    auto cfg = c.config.empty() ? ocfr::io::parse_config(empty, ocfr::io::preset(scale)) : ocfr::io::load_config(c.config, scale);
    if (c.seed) {
      cfg.seed = *c.seed;
      cfg.phantom.seed = cfg.train.seed = *c.seed;
    }
    return cfg;
  } catch (const ocfr::Error& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ocfr;
  CLI::App app{"OCT fingerprint pipeline: phantom data, segmentation training, attack detection, reconstruction"};
  app.require_subcommand(1);

  Common gen_c, train_c, pad_c, rec_c;
  auto* gen = app.add_subcommand("generate", "Write a phantom dataset and its manifest");
  add_common(gen, gen_c);

  std::string train_manifest;
  auto* trn = app.add_subcommand("train", "Cross-validated training on the annotated partition");
  add_common(trn, train_c);
  trn->add_option("--manifest", train_manifest, "manifest.json from generate")->required()->check(CLI::ExistingFile);

  std::string pad_manifest, pad_ckpt;
  auto* padc = app.add_subcommand("pad", "Score test instances against the reference partition");
  add_common(padc, pad_c);
  padc->add_option("--manifest", pad_manifest, "manifest.json from generate")->required()->check(CLI::ExistingFile);
  padc->add_option("--checkpoint", pad_ckpt, "Trained network (model.ckpt)")->required()->check(CLI::ExistingFile);

  std::string rec_instance, rec_ckpt, rec_ref;
  bool use_gt = false, force = false;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct R_s, R_v and R_d of one instance");
  add_common(rec, rec_c);
  rec->add_option("--instance", rec_instance, "Instance directory")->required()->check(CLI::ExistingDirectory);
  rec->add_option("--checkpoint", rec_ckpt, "Trained network; required unless --use-gt-masks")->check(CLI::ExistingFile);
  rec->add_option("--reference", rec_ref, "reference.json from pad; enables the attack check")->check(CLI::ExistingFile);
  rec->add_flag("--use-gt-masks", use_gt, "Use the instance's annotation masks instead of predictions");
  rec->add_flag("--force", force, "Reconstruct even if the instance scores as an attack");

  cli::MetricsOptions mopt;
  std::string m_scores, m_gen, m_imp, m_out;
  auto* met = app.add_subcommand("metrics", "PAD metrics from scores.csv and/or verification metrics from score lists");
  met->add_option("--scores", m_scores, "scores.csv from pad")->check(CLI::ExistingFile);
  met->add_option("--genuine", m_gen, "Genuine comparison scores, one per line")->check(CLI::ExistingFile);
  met->add_option("--impostor", m_imp, "Impostor comparison scores, one per line")->check(CLI::ExistingFile);
  met->add_option("--gmr-fmr", mopt.gmr_fmr, "FMR target in percent for GMR")->check(CLI::Range(0.0, 100.0));
  met->add_option("--out", m_out, "Write the report to this JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      cli::cmd_generate(resolve(gen_c), gen_c.out);
    } else if (trn->parsed()) {
      cli::cmd_train(train_manifest, resolve(train_c), train_c.out);
    } else if (padc->parsed()) {
      cli::cmd_pad(pad_manifest, pad_ckpt, resolve(pad_c), pad_c.out);
    } else if (rec->parsed()) {
      cli::ReconstructOptions o;
      if (!rec_ckpt.empty()) o.checkpoint = rec_ckpt;
      if (!rec_ref.empty()) o.reference = rec_ref;
      o.use_gt_masks = use_gt;
      o.force = force;
      cli::cmd_reconstruct(rec_instance, o, resolve(rec_c), rec_c.out);
    } else if (met->parsed()) {
      if (m_scores.empty() && (m_gen.empty() || m_imp.empty())) throw UsageError("metrics needs --scores or both --genuine and --impostor");
      if (!m_scores.empty()) mopt.pad_scores = m_scores;
      if (!m_gen.empty()) mopt.genuine = m_gen;
      if (!m_imp.empty()) mopt.impostor = m_imp;
      cli::cmd_metrics(mopt, m_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(m_out));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
