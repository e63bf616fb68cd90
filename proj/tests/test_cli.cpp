// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
//
// Drives the installed binary end-to-end through std::system. FSYN_CLI_PATH
// is injected by the build so the suite always tests the freshly built tool.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fsyn/image_io.hpp"
#include "fsyn/tensor.hpp"

namespace {

namespace fs = std::filesystem;

fs::path test_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "fsyn_cli_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log_dir) {
  const std::string cmd = std::string(FSYN_CLI_PATH) + " " + args + " > " +
                          (log_dir / "out.txt").string() + " 2> " +
                          (log_dir / "err.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

int count_pngs(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

void write_config(const fs::path& p, int steps, int extra_keys = 0) {
  std::ofstream out(p);
  out << "profile = desk\nimage_size = 32\nbank_size = 3\nbatch = 2\n"
      << "lr = 2e-4\nmargin = 8\nseed = 5\ncheckpoint_every = 2\n"
      << "steps = " << steps << "\n";
  if (extra_keys) out << "warp_margin = 40\n";
}

// One prepared demo workspace shared by the cases below.
struct Pipeline {
  fs::path root, corpus, bank, ckpt;

  explicit Pipeline(const std::string& leaf) : root(test_dir(leaf)) {
    corpus = root / "corpus";
    bank = root / "bank";
    REQUIRE(run("prepare-bank --demo --frames " + corpus.string() + " --landmarks " +
                    (corpus / "landmarks.jsonl").string() + " --bank-size 3 --out " +
                    bank.string() + " --size 32 --demo-frames 8 --seed 4",
                root) == 0);
    write_config(root / "cfg.txt", 3);
    REQUIRE(run("train --config " + (root / "cfg.txt").string() + " --data " + corpus.string() +
                    " --out " + (root / "run").string(),
                root) == 0);
    ckpt = root / "run" / "latest.ckpt";
    REQUIRE(fs::exists(ckpt));
  }

  std::string synth_args(const std::string& out_leaf, const std::string& extra = "") {
    return "synth --ckpt " + ckpt.string() + " --bank " + bank.string() + " --landmarks " +
           (corpus / "landmarks.jsonl").string() + " --out " + (root / out_leaf).string() + " " +
           extra;
  }
};

double report_value(const fs::path& report) {
  const std::vector<std::string> lines = lines_of(report);
  REQUIRE(lines.size() == 2);
  REQUIRE(lines[0] == "metric,value,pred_count,gt_count,extractor");
  std::istringstream row(lines[1]);
  std::string metric, value;
  std::getline(row, metric, ',');
  std::getline(row, value, ',');
  return std::stod(value);
}

}  // namespace

TEST_CASE("demo pipeline runs end-to-end") {
  Pipeline p("pipeline");

  REQUIRE(fs::exists(p.bank / "bank_002.png"));
  REQUIRE(fs::exists(p.bank / "manifest.json"));
  REQUIRE(fs::exists(p.root / "run" / "ckpt-000002.ckpt"));
  const std::vector<std::string> log = lines_of(p.root / "run" / "train_log.csv");
  REQUIRE(log.size() == 4);
  REQUIRE(log[0] ==
          "step,d_loss,sparsity,tv_v,tv_ww,tv_wm,rec_w,rec_o,perceptual,adv,total");
  REQUIRE(log[1].rfind("1,", 0) == 0);

  SECTION("synthesis produces one frame per landmark record") {
    REQUIRE(run(p.synth_args("frames"), p.root) == 0);
    REQUIRE(count_pngs(p.root / "frames") == 8);
    REQUIRE(fs::exists(p.root / "frames" / "000000.png"));
    REQUIRE(fs::exists(p.root / "frames" / "000007.png"));
    REQUIRE_FALSE(fs::exists(p.root / "frames" / "000000_appearance.png"));

    REQUIRE(run(p.synth_args("diag", "--diagnostics"), p.root) == 0);
    for (const char* leaf : {"000000_appearance.png", "000000_warped.png", "000000_merge.png",
                             "000000_mask_02.png", "000000_field_02.png"})
      REQUIRE(fs::exists(p.root / "diag" / leaf));

    // Identical directories score zero under both metrics.
    REQUIRE(run("eval --pred " + (p.root / "frames").string() + " --gt " +
                    (p.root / "frames").string() + " --metric l1 --report " +
                    (p.root / "l1.csv").string(),
                p.root) == 0);
    REQUIRE(report_value(p.root / "l1.csv") == 0.0);
    REQUIRE(run("eval --pred " + (p.root / "frames").string() + " --gt " +
                    (p.root / "frames").string() + " --metric fid --report " +
                    (p.root / "fid.csv").string(),
                p.root) == 0);
    REQUIRE(report_value(p.root / "fid.csv") < 1e-3);
    REQUIRE(lines_of(p.root / "fid.csv")[1].find("stub") != std::string::npos);

    // Synthesized frames against the corpus: positive, finite score.
    REQUIRE(run("eval --pred " + (p.root / "frames").string() + " --gt " + p.corpus.string() +
                    " --metric l1 --report " + (p.root / "l1b.csv").string(),
                p.root) == 0);
    const double v = report_value(p.root / "l1b.csv");
    REQUIRE(v > 0.0);
    REQUIRE(v < 255.0);
  }

  SECTION("variant A output equals the appearance diagnostic") {
    REQUIRE(run(p.synth_args("aw", "--diagnostics"), p.root) == 0);
    REQUIRE(run(p.synth_args("va", "--variant A"), p.root) == 0);
    REQUIRE(run(p.synth_args("vw", "--variant W"), p.root) == 0);
    const fsyn::Tensor<float> a = fsyn::read_png_rgb((p.root / "va" / "000000.png").string());
    const fsyn::Tensor<float> app =
        fsyn::read_png_rgb((p.root / "aw" / "000000_appearance.png").string());
    REQUIRE(fsyn::max_abs_diff(a, app) == 0.0f);
    const fsyn::Tensor<float> w = fsyn::read_png_rgb((p.root / "vw" / "000000.png").string());
    const fsyn::Tensor<float> warped =
        fsyn::read_png_rgb((p.root / "aw" / "000000_warped.png").string());
    REQUIRE(fsyn::max_abs_diff(w, warped) == 0.0f);
  }

  SECTION("seven landmark records give seven frames") {
    const std::vector<std::string> records = lines_of(p.corpus / "landmarks.jsonl");
    std::ofstream out(p.root / "seven.jsonl");
    for (int i = 0; i < 7; ++i) out << records[static_cast<size_t>(i)] << "\n";
    out.close();
    REQUIRE(run("synth --ckpt " + p.ckpt.string() + " --bank " + p.bank.string() +
                    " --landmarks " + (p.root / "seven.jsonl").string() + " --out " +
                    (p.root / "seven").string(),
                p.root) == 0);
    REQUIRE(count_pngs(p.root / "seven") == 7);
  }

  SECTION("resume reproduces the uninterrupted log") {
    write_config(p.root / "cfg5.txt", 5);
    REQUIRE(run("train --config " + (p.root / "cfg5.txt").string() + " --data " +
                    p.corpus.string() + " --out " + (p.root / "run").string() + " --resume " +
                    p.ckpt.string(),
                p.root) == 0);
    const std::vector<std::string> resumed = lines_of(p.root / "run" / "train_log.csv");
    REQUIRE(resumed.size() == 6);

    REQUIRE(run("train --config " + (p.root / "cfg5.txt").string() + " --data " +
                    p.corpus.string() + " --out " + (p.root / "run_once").string(),
                p.root) == 0);
    const std::vector<std::string> straight = lines_of(p.root / "run_once" / "train_log.csv");
    REQUIRE(straight.size() == 6);
    for (size_t i = 0; i < 6; ++i) REQUIRE(resumed[i] == straight[i]);
  }
}

TEST_CASE("exit codes follow the usage contract") {
  const fs::path root = test_dir("exitcodes");

  SECTION("usage errors") {
    REQUIRE(run("--help", root) == 0);
    REQUIRE(run("bogus-cmd", root) == 2);
    REQUIRE(run("synth --ckpt only", root) == 2);
    REQUIRE(run("eval --pred a --gt b --metric l2", root) == 2);
  }
  SECTION("data errors") {
    const fs::path corpus = root / "corpus";
    REQUIRE(run("prepare-bank --demo --frames " + corpus.string() + " --landmarks " +
                    (corpus / "landmarks.jsonl").string() + " --bank-size 3 --out " +
                    (root / "bank").string() + " --size 32 --demo-frames 8",
                root) == 0);

    REQUIRE(run("prepare-bank --frames " + corpus.string() + " --landmarks " +
                    (corpus / "landmarks.jsonl").string() + " --bank-size 99 --out " +
                    (root / "bank99").string(),
                root) == 2);
    REQUIRE(slurp(root / "err.txt").find("insufficient frames") != std::string::npos);

    write_config(root / "bad.txt", 2, 1);
    REQUIRE(run("train --config " + (root / "bad.txt").string() + " --data " + corpus.string() +
                    " --out " + (root / "run").string(),
                root) == 2);
    REQUIRE(slurp(root / "err.txt").find("unknown config key: warp_margin") != std::string::npos);

    REQUIRE(run("synth --ckpt " + (root / "missing.ckpt").string() + " --bank " +
                    (root / "bank").string() + " --landmarks " +
                    (corpus / "landmarks.jsonl").string() + " --out " + (root / "x").string(),
                root) == 2);

    // Unpaired evaluation sets.
    fs::create_directories(root / "half");
    fs::copy_file(corpus / "000000.png", root / "half" / "000000.png");
    REQUIRE(run("eval --pred " + (root / "half").string() + " --gt " + corpus.string() +
                    " --metric l1",
                root) == 2);
    REQUIRE(slurp(root / "err.txt").find("unpaired file names") != std::string::npos);

    // A checkpoint trained for bank 3 rejects a single-image bank variant.
    write_config(root / "cfg.txt", 1);
    REQUIRE(run("train --config " + (root / "cfg.txt").string() + " --data " + corpus.string() +
                    " --out " + (root / "run1").string(),
                root) == 0);
    REQUIRE(run("synth --ckpt " + (root / "run1" / "latest.ckpt").string() + " --bank " +
                    (root / "bank").string() + " --landmarks " +
                    (corpus / "landmarks.jsonl").string() + " --out " + (root / "y").string() +
                    " --variant 1B",
                root) == 2);
    REQUIRE(slurp(root / "err.txt").find("bank of 3 images but got 1") != std::string::npos);
  }
}
