// avdf: corpus generation, MFCC extraction, training, scoring and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "avdf/avdf.hpp"

namespace fs = std::filesystem;
using namespace avdf;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string manifest;
  std::string out;
  bool disable_rho1 = false;
  bool disable_rho2 = false;
  std::string threshold_mode;
};

void add_common(CLI::App* cmd, Common& c, bool training, bool with_out = true) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "override the run seed");
  if (with_out) cmd->add_option("--out", c.out, "output path");
  if (training) {
    cmd->add_option("--manifest", c.manifest, "dataset manifest (avdf_manifest_v1)");
    cmd->add_option("--checkpoint", c.checkpoint, "checkpoint path");
    cmd->add_flag("--disable-rho1", c.disable_rho1, "drop the modality triplet loss");
    cmd->add_flag("--disable-rho2", c.disable_rho2, "drop the emotion triplet loss");
    cmd->add_option("--threshold-mode", c.threshold_mode, "midpoint | optimal");
  }
}

// Config file first, then flags.
RunConfig resolve(const Common& c) {
  RunConfig rc;
  if (!c.config.empty()) rc = load_run_config(c.config);
  if (c.seed) rc.apply_seed(*c.seed);
  if (!c.manifest.empty()) rc.paths.manifest = c.manifest;
  if (!c.checkpoint.empty()) rc.paths.checkpoint = c.checkpoint;
  if (!c.out.empty()) rc.paths.out = c.out;
  if (c.disable_rho1) rc.train.losses.rho1 = false;
  if (c.disable_rho2) rc.train.losses.rho2 = false;
  if (!c.threshold_mode.empty()) rc.train.threshold_mode = parse_threshold_mode(c.threshold_mode);
  rc.validate();
  return rc;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw InputError(InputErrorCode::MissingFile, std::string(what) + " not found: " + p.string());
}

Dataset load_manifest_dataset(const RunConfig& rc) {
  const fs::path manifest = rc.manifest_path();
  require_file(manifest, "manifest");
  log_info("loading " + manifest.string());
  return load_dataset(read_manifest(manifest), manifest.parent_path());
}

nlohmann::json epoch_json(const EpochStats& s) {
  return {{"epoch", s.epoch}, {"mean_loss", s.mean_loss}, {"mean_rho1", s.mean_rho1}, {"mean_rho2", s.mean_rho2}};
}

int cmd_gen_data(const Common& c) {
  RunConfig rc = resolve(c);
  const fs::path dir = c.out.empty() ? fs::path(rc.paths.data_dir) : fs::path(c.out);
  generate_corpus(rc.synth, dir);
  std::cout << (dir / "manifest.json").string() << '\n';
  return 0;
}

int cmd_extract_mfcc(const Common& c, const std::string& wav, const std::string& out) {
  RunConfig rc = resolve(c);
  const AudioClip clip = read_wav(wav);
  const SpeechFeatureSequence seq = mfcc(clip, rc.mfcc);
  save_speech_features(out, seq);
  log_info(wav + ": " + std::to_string(seq.length()) + " frames -> " + out);
  return 0;
}

int cmd_train(const Common& c, const std::string& metrics) {
  RunConfig rc = resolve(c);
  const Dataset data = load_manifest_dataset(rc);
  std::ofstream metrics_file;
  std::ostream* sink = &std::cout;
  if (!metrics.empty()) {
    metrics_file.open(metrics, std::ios::binary);
    if (!metrics_file) throw InputError(InputErrorCode::Io, metrics + ": cannot write");
    sink = &metrics_file;
  }
  Detector det(rc.model, rc.train.seed);
  if (const fs::path parent = fs::path(rc.paths.checkpoint).parent_path(); !parent.empty()) fs::create_directories(parent);
  fit(det, data.train, data.emotion, rc.train, [&](const EpochStats& s) { *sink << epoch_json(s).dump() << '\n'; });
  save_checkpoint(rc.paths.checkpoint, det, CheckpointExtras{to_json_value(rc.train)});
  log_info("checkpoint written to " + rc.paths.checkpoint + ", tau " + format_double(*det.threshold()));
  return 0;
}

int cmd_score(const Common& c, const std::string& face, const std::string& speech, const std::string& id,
              const std::string& label) {
  RunConfig rc = resolve(c);
  require_file(rc.paths.checkpoint, "checkpoint");
  const LoadedCheckpoint ck = load_checkpoint(rc.paths.checkpoint);
  if (!ck.detector.threshold()) throw InputError(InputErrorCode::Malformed, "checkpoint has no threshold");
  VideoFeatures v{id.empty() ? fs::path(face).stem().string() : id, load_face_features(face),
                  load_speech_features(speech), std::nullopt};
  if (!label.empty()) v.label = parse_label(label);
  const VideoScore s = score_video(ck.detector, v);
  nlohmann::json j{{"id", s.id}, {"d_m", s.d_m}, {"d_e", s.d_e}, {"score", s.score}};
  if (s.label) j["label"] = std::string(to_string(*s.label));
  j["verdict"] = std::string(to_string(classify(s.score, *ck.detector.threshold())));
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_eval(const Common& c, bool ablation) {
  RunConfig rc = resolve(c);
  const Dataset data = load_manifest_dataset(rc);
  ExperimentOptions options;
  options.ablation = ablation;
  Detector det(rc.model, rc.train.seed);
  const ExperimentReport report = run_experiment(data, rc.model, rc.train, options, &det, [](const EpochStats& s) {
    log_debug("epoch " + epoch_json(s).dump());
  });
  export_report(report, rc.paths.out);
  if (!c.checkpoint.empty()) save_checkpoint(c.checkpoint, det, CheckpointExtras{to_json_value(rc.train)});
  for (const auto& row : report.configurations) {
    std::cout << row.name << " auc " << format_double(row.auc) << '\n';
  }
  std::cout << (fs::path(rc.paths.out) / "report.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual deepfake detection via modality and emotion embeddings"};
  app.require_subcommand(1);

  Common gen, mf, tr, sc, ev, ab;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic corpus and manifest");
  add_common(gen_cmd, gen, false);

  std::string wav, mfcc_out;
  auto* mfcc_cmd = app.add_subcommand("extract-mfcc", "write 13-d MFCC features for a 16-bit PCM wav");
  add_common(mfcc_cmd, mf, false, false);
  mfcc_cmd->add_option("wav", wav, "input wav")->required();
  mfcc_cmd->add_option("output", mfcc_out, "output feature file")->required();

  std::string metrics;
  auto* train_cmd = app.add_subcommand("train", "train on the manifest's train split and write a checkpoint");
  add_common(train_cmd, tr, true);
  train_cmd->add_option("--metrics", metrics, "per-epoch JSON lines (default stdout)");

  std::string face, speech, id, label;
  auto* score_cmd = app.add_subcommand("score", "score one video against a checkpoint");
  add_common(score_cmd, sc, true);
  score_cmd->add_option("--face", face, "face feature file")->required();
  score_cmd->add_option("--speech", speech, "speech feature file")->required();
  score_cmd->add_option("--id", id, "video id (default: face file stem)");
  score_cmd->add_option("--label", label, "ground truth: real | fake");

  auto* eval_cmd = app.add_subcommand("eval", "train, score the test split and write the report");
  add_common(eval_cmd, ev, true);
  auto* ablate_cmd = app.add_subcommand("ablate", "eval for full, no_rho1 and no_rho2");
  add_common(ablate_cmd, ab, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*mfcc_cmd) return cmd_extract_mfcc(mf, wav, mfcc_out);
    if (*train_cmd) return cmd_train(tr, metrics);
    if (*score_cmd) return cmd_score(sc, face, speech, id, label);
    if (*eval_cmd) return cmd_eval(ev, false);
    if (*ablate_cmd) return cmd_eval(ab, true);
  } catch (const avdf::Error& e) {
    std::cerr << "avdf: " << e.what() << '\n';
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "avdf: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "avdf: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
