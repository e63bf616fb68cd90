// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface for the facesynth pipeline. Exit codes: 0 on success,
// 2 on usage or data errors, 1 on internal errors.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fsyn/evalkit.hpp"
#include "fsyn/synth.hpp"
#include "fsyn/synthetic.hpp"
#include "fsyn/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> sorted_pngs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw fsyn::DataError("directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

struct PrepareArgs {
  std::string frames, landmarks, out;
  int bank_size = 5;
  std::string mode = "nose-tip";
  int size = 64;
  bool demo = false;
  int demo_frames = 10;
  uint64_t seed = 1;
};

void run_prepare(const PrepareArgs& a) {
  if (a.demo) {
    fs::create_directories(a.frames);
    fsyn::SyntheticClip clip = fsyn::synthetic_clip(a.size, a.demo_frames, a.seed);
    for (size_t i = 0; i < clip.frames.size(); ++i) {
      const std::string name = fsyn::frame_name(static_cast<int>(i)) + ".png";
      fsyn::write_png_rgb((fs::path(a.frames) / name).string(),
                          fsyn::signed_to_u8(clip.frames[i]));
    }
    fs::create_directories(fs::path(a.landmarks).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(a.landmarks).parent_path());
    fsyn::write_landmarks_jsonl(a.landmarks, clip.landmarks);
    std::cout << "demo corpus: " << clip.frames.size() << " frames under " << a.frames << "\n";
  }

  const std::vector<fs::path> files = sorted_pngs(a.frames);
  if (files.empty()) throw fsyn::DataError("no PNG frames under " + a.frames);
  const std::vector<fsyn::LandmarkSet> lms = fsyn::read_landmarks_jsonl(a.landmarks);
  if (lms.size() != files.size())
    throw fsyn::DataError("corpus mismatch: " + std::to_string(files.size()) + " frames but " +
                          std::to_string(lms.size()) + " landmark records");
  if (a.bank_size > static_cast<int>(files.size()))
    throw fsyn::DataError("insufficient frames: bank needs " + std::to_string(a.bank_size) +
                          ", corpus has " + std::to_string(files.size()));

  const fsyn::CropMode mode =
      a.mode == "nose-tip" ? fsyn::CropMode::kNoseTip : fsyn::CropMode::kEyeCorners;
  std::vector<fsyn::Tensor<float>> cropped;
  std::vector<fsyn::LandmarkSet> cropped_lms;
  for (size_t i = 0; i < files.size(); ++i) {
    const fsyn::Tensor<float> img = fsyn::u8_to_signed(fsyn::read_png_rgb(files[i].string()));
    auto [ci, cl] = fsyn::crop_center(img, lms[i], mode, a.size);
    cropped.push_back(std::move(ci));
    cropped_lms.push_back(std::move(cl));
  }

  const fsyn::SourceBank<float> bank = fsyn::select_bank(cropped, cropped_lms, a.bank_size);
  // Difference-field precheck: every bank pose must produce a finite field.
  for (int i = 0; i < bank.count(); ++i) {
    const fsyn::Tensor<float> d = fsyn::difference_field<float>(
        bank.landmarks[static_cast<size_t>(i)], bank.landmarks[0], a.size, a.size);
    if (!d.all_finite()) throw fsyn::DataError("non-finite difference field for bank image " +
                                               std::to_string(i));
  }

  fs::create_directories(a.out);
  fsyn::write_bank_dir(a.out, bank);
  std::cout << "bank: " << bank.count() << " images " << a.size << "x" << a.size
            << ", openness " << bank.openness.front() << " .. " << bank.openness.back()
            << ", written to " << a.out << "\n";
}

struct TrainArgs {
  std::string config, data, out, resume;
};

void run_train(const TrainArgs& a) {
  const fsyn::TrainConfig cfg = fsyn::parse_train_config(a.config);
  std::vector<fsyn::Clip<float>> clips = fsyn::load_corpus(a.data);
  fsyn::Trainer<float> trainer(cfg, std::move(clips));
  if (!a.resume.empty()) trainer.resume(a.resume);

  fs::create_directories(a.out);
  const fs::path log_path = fs::path(a.out) / "train_log.csv";
  const bool append = !a.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw fsyn::DataError("cannot write training log: " + log_path.string());
  if (!append) log << fsyn::csv_header() << "\n";

  auto checkpoint = [&](const std::string& leaf) {
    const std::string path = (fs::path(a.out) / leaf).string();
    trainer.save_checkpoint(path);
    std::cout << "checkpoint: " << path << " (cycle " << trainer.cycle() << ")\n";
  };

  while (trainer.cycle() < cfg.steps) {
    const fsyn::CycleStats stats = trainer.run_cycle();
    log << fsyn::csv_row(stats) << "\n";
    if (trainer.cycle() % cfg.checkpoint_every == 0 && trainer.cycle() < cfg.steps) {
      char leaf[32];
      std::snprintf(leaf, sizeof leaf, "ckpt-%06lld.ckpt",
                    static_cast<long long>(trainer.cycle()));
      checkpoint(leaf);
    }
  }
  log.flush();
  checkpoint("latest.ckpt");
  std::cout << "trained " << trainer.cycle() << " cycles, log at " << log_path.string() << "\n";
}

struct SynthArgs {
  std::string ckpt, bank, landmarks, out, variant = "AW";
  double margin = 40.0;
  bool margin_set = false;
  bool diagnostics = false;
};

void run_synth(const SynthArgs& a) {
  const fsyn::VariantSpec variant = fsyn::parse_variant(a.variant);
  fsyn::LoadedGenerator<float> loaded = fsyn::load_generator<float>(a.ckpt);
  const fsyn::SourceBank<float> full_bank = fsyn::read_bank_dir(a.bank);
  const fsyn::SourceBank<float> bank = fsyn::truncate_bank(full_bank, variant.bank_limit);
  const std::vector<fsyn::LandmarkSet> targets = fsyn::read_landmarks_jsonl(a.landmarks);
  if (targets.empty()) throw fsyn::DataError("no landmark records in " + a.landmarks);

  const float margin = static_cast<float>(a.margin_set ? a.margin : loaded.margin);
  fs::create_directories(a.out);
  fsyn::synthesize_sequence(*loaded.gen, bank, targets, margin, variant.mode,
                                   [&](int index, const fsyn::SynthFrame<float>& frame) {
                                     fsyn::write_frame_outputs(a.out, index, frame, margin,
                                                               a.diagnostics);
                                   });
  std::cout << "synthesized " << targets.size() << " frames (variant " << variant.name
            << ", margin " << margin << ") to " << a.out << "\n";
}

struct EvalArgs {
  std::string pred, gt, metric, extractor = "stub", report;
};

std::unique_ptr<fsyn::FeatureExtractor<float>> make_extractor(const std::string& spec) {
  if (spec == "stub") return std::make_unique<fsyn::StubFeatureExtractor<float>>(7, 3);
  fsyn::TensorStore st = fsyn::TensorStore::load(spec);
  std::vector<fsyn::Tensor<float>> weights;
  for (auto& [name, t] : st.tensors) weights.push_back(std::move(t));
  return std::make_unique<fsyn::StubFeatureExtractor<float>>(std::move(weights));
}

void run_eval(const EvalArgs& a) {
  const std::vector<fs::path> pred_files = sorted_pngs(a.pred);
  const std::vector<fs::path> gt_files = sorted_pngs(a.gt);
  if (pred_files.empty() || gt_files.empty())
    throw fsyn::DataError("evaluation sets must be non-empty");
  {
    auto names = [](const std::vector<fs::path>& v) {
      std::vector<std::string> out;
      for (const fs::path& p : v) out.push_back(p.filename().string());
      return out;
    };
    const std::vector<std::string> pn = names(pred_files), gn = names(gt_files);
    for (const std::string& n : pn)
      if (std::find(gn.begin(), gn.end(), n) == gn.end())
        throw fsyn::DataError("unpaired file names: " + n + " only under " + a.pred);
    for (const std::string& n : gn)
      if (std::find(pn.begin(), pn.end(), n) == pn.end())
        throw fsyn::DataError("unpaired file names: " + n + " only under " + a.gt);
  }

  double value = 0.0;
  std::string extractor_id = "none";
  if (a.metric == "l1") {
    std::vector<fsyn::Tensor<float>> pred, gt;
    for (const fs::path& p : pred_files) pred.push_back(fsyn::read_png_rgb(p.string()));
    for (const fs::path& p : gt_files) gt.push_back(fsyn::read_png_rgb(p.string()));
    value = fsyn::l1_metric(pred, gt);
  } else {
    std::unique_ptr<fsyn::FeatureExtractor<float>> ext = make_extractor(a.extractor);
    extractor_id = a.extractor;
    auto embed = [&](const std::vector<fs::path>& files) {
      std::vector<std::vector<double>> feats;
      for (const fs::path& p : files)
        feats.push_back(
            fsyn::image_feature_vector(*ext, fsyn::u8_to_signed(fsyn::read_png_rgb(p.string()))));
      return feats;
    };
    value = fsyn::fid_metric(embed(pred_files), embed(gt_files));
  }

  std::ostringstream csv;
  csv << "metric,value,pred_count,gt_count,extractor\n";
  csv << a.metric << "," << std::setprecision(12) << value << "," << pred_files.size() << ","
      << gt_files.size() << "," << extractor_id << "\n";
  std::cout << csv.str();
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw fsyn::DataError("cannot write report: " + a.report);
    out << csv.str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"landmark-driven two-stream talking-face synthesis"};
  app.require_subcommand(1);

  PrepareArgs pa;
  CLI::App* prepare = app.add_subcommand("prepare-bank", "select a source bank from a corpus");
  prepare->add_option("--frames", pa.frames, "directory of frame PNGs")->required();
  prepare->add_option("--landmarks", pa.landmarks, "JSON-lines landmark file")->required();
  prepare->add_option("--bank-size", pa.bank_size, "images to keep")->default_val(5);
  prepare->add_option("--mode", pa.mode, "crop anchor")
      ->default_val("nose-tip")
      ->check(CLI::IsMember({"nose-tip", "eye-corners"}));
  prepare->add_option("--out", pa.out, "bank output directory")->required();
  prepare->add_option("--size", pa.size, "cropped image side")->default_val(64);
  prepare->add_flag("--demo", pa.demo, "generate a synthetic corpus first");
  prepare->add_option("--demo-frames", pa.demo_frames, "synthetic corpus length")->default_val(10);
  prepare->add_option("--seed", pa.seed, "synthetic corpus seed")->default_val(1);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "run the adversarial training loop");
  train->add_option("--config", ta.config, "key=value config file")->required();
  train->add_option("--data", ta.data, "corpus directory")->required();
  train->add_option("--out", ta.out, "checkpoint/log directory")->required();
  train->add_option("--resume", ta.resume, "checkpoint to continue from");

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "synthesize frames from landmarks");
  synth->add_option("--ckpt", sa.ckpt, "trained checkpoint")->required();
  synth->add_option("--bank", sa.bank, "prepared bank directory")->required();
  synth->add_option("--landmarks", sa.landmarks, "target landmark JSON-lines")->required();
  synth->add_option("--out", sa.out, "frame output directory")->required();
  synth->add_option("--warp-margin", sa.margin, "warp distance bound in pixels, default 40")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--variant", sa.variant, "1B|3B|5B|A|W|AW")->default_val("AW");
  synth->add_flag("--diagnostics", sa.diagnostics, "write per-frame diagnostic PNGs");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "score prediction directories");
  eval->add_option("--pred", ea.pred, "predicted frames")->required();
  eval->add_option("--gt", ea.gt, "ground-truth frames")->required();
  eval->add_option("--metric", ea.metric, "l1 or fid")
      ->required()
      ->check(CLI::IsMember({"l1", "fid"}));
  eval->add_option("--extractor", ea.extractor, "stub or a weight-stack file")->default_val("stub");
  eval->add_option("--report", ea.report, "also write the CSV report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  sa.margin_set = synth->count("--warp-margin") > 0;

  try {
    if (prepare->parsed()) run_prepare(pa);
    else if (train->parsed()) run_train(ta);
    else if (synth->parsed()) run_synth(sa);
    else if (eval->parsed()) run_eval(ea);
    return 0;
  } catch (const fsyn::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
