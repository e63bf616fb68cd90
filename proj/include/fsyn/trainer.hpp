// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsyn/checkpoint.hpp"
#include "fsyn/facegeom.hpp"
#include "fsyn/image_io.hpp"
#include "fsyn/losses.hpp"
#include "fsyn/netarch.hpp"
#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {

template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, T lr, T beta1, T beta2, T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (Parameter<T>* p : params_) {
      if (p->m.empty()) p->m = Tensor<T>::zeros(p->value.shape);
      if (p->v.empty()) p->v = Tensor<T>::zeros(p->value.shape);
    }
  }

  void step() {
    ++t_;
    const T bc1 = static_cast<T>(1.0 - std::pow(static_cast<double>(b1_), static_cast<double>(t_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(static_cast<double>(b2_), static_cast<double>(t_)));
    for (Parameter<T>* p : params_) {
      for (int64_t i = 0; i < p->value.size(); ++i) {
        const T g = p->grad[i];
        p->m[i] = b1_ * p->m[i] + (T(1) - b1_) * g;
        p->v[i] = b2_ * p->v[i] + (T(1) - b2_) * g * g;
        const T mhat = p->m[i] / bc1;
        const T vhat = p->v[i] / bc2;
        p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  std::vector<Parameter<T>*> params_;
  T lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Replay pool of generated images. Each fresh fake is swapped for a stored
// one with probability 1/2, then inserted, evicting a uniformly random slot
// once the pool is full.
template <typename T>
class FakeHistoryBuffer {
 public:
  explicit FakeHistoryBuffer(int capacity = 50) : capacity_(capacity) {
    if (capacity < 1) throw DataError("FakeHistoryBuffer: capacity must be positive");
  }

  Tensor<T> push_and_sample(const Tensor<T>& fresh, RandomEngine& rng) {
    Tensor<T> out = fresh;
    if (!items_.empty() && rng.uniform() < 0.5)
      out = items_[static_cast<size_t>(rng.uniform_int(static_cast<int>(items_.size())))];
    if (static_cast<int>(items_.size()) < capacity_)
      items_.push_back(fresh);
    else
      items_[static_cast<size_t>(rng.uniform_int(capacity_))] = fresh;
    return out;
  }

  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return capacity_; }
  std::vector<Tensor<T>>& items() { return items_; }

 private:
  int capacity_;
  std::vector<Tensor<T>> items_;
};

struct TrainConfig {
  std::string profile = "desk";
  int image_size = 64;
  int bank_size = 5;
  int batch = 16;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int d_steps_per_g = 5;
  int64_t steps = 100;  // generator cycles; each runs d_steps_per_g D updates
  uint64_t seed = 1;
  double margin = 40.0;
  int target_frame = -1;  // >= 0 pins every batch slot to this frame
  int64_t checkpoint_every = 100;
  double lambda_s = 1.0;
  double lambda_tv = 1e-5;
  double lambda_rec = 250.0;
  double lambda_p = 1.0;
  double lambda_adv = 1.0;
  double tv_wm_scale = 0.1;
  double gamma = 0.95;
  double floor = 0.3;

  void validate() const {
    profile_by_name(profile);
    if (image_size < 16 || image_size % 16 != 0)
      throw DataError("config: image_size must be a positive multiple of 16");
    if (bank_size < 1) throw DataError("config: bank_size must be at least 1");
    if (batch < 1) throw DataError("config: batch must be at least 1");
    if (lr <= 0.0) throw DataError("config: lr must be positive");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw DataError("config: betas must lie in (0, 1)");
    if (d_steps_per_g < 1) throw DataError("config: d_steps_per_g must be at least 1");
    if (steps < 0) throw DataError("config: steps must be non-negative");
    if (margin < 0.0) throw DataError("config: margin must be non-negative");
    if (target_frame < -1) throw DataError("config: target_frame must be -1 or a frame index");
    if (checkpoint_every < 1) throw DataError("config: checkpoint_every must be positive");
    if (lambda_s < 0 || lambda_tv < 0 || lambda_rec < 0 || lambda_p < 0 || lambda_adv < 0 ||
        tv_wm_scale < 0)
      throw DataError("config: loss weights must be non-negative");
    if (gamma <= 0.0 || gamma >= 1.0) throw DataError("config: gamma must lie in (0, 1)");
    if (floor < 0.0 || floor > 1.0) throw DataError("config: floor must lie in [0, 1]");
  }

  template <typename T>
  LossWeights<T> loss_weights() const {
    LossWeights<T> w;
    w.lambda_s = static_cast<T>(lambda_s);
    w.lambda_tv = static_cast<T>(lambda_tv);
    w.lambda_rec = static_cast<T>(lambda_rec);
    w.lambda_p = static_cast<T>(lambda_p);
    w.lambda_adv = static_cast<T>(lambda_adv);
    w.tv_wm_scale = static_cast<T>(tv_wm_scale);
    w.gamma = gamma;
    w.floor = floor;
    w.margin = static_cast<T>(margin);
    w.n = bank_size;
    return w;
  }
};

// Flat key=value config text; '#' starts a comment. Unknown keys are errors
// so typos cannot silently fall back to defaults.
inline TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");

    auto as_ll = [&](int64_t& dst) {
      size_t pos = 0;
      try {
        dst = std::stoll(val, &pos);
      } catch (...) {
        throw DataError("config key " + key + ": invalid integer '" + val + "'");
      }
      if (pos != val.size()) throw DataError("config key " + key + ": invalid integer '" + val + "'");
    };
    auto as_int = [&](int& dst) {
      int64_t v;
      as_ll(v);
      dst = static_cast<int>(v);
    };
    auto as_double = [&](double& dst) {
      size_t pos = 0;
      try {
        dst = std::stod(val, &pos);
      } catch (...) {
        throw DataError("config key " + key + ": invalid number '" + val + "'");
      }
      if (pos != val.size()) throw DataError("config key " + key + ": invalid number '" + val + "'");
    };

    if (key == "profile") cfg.profile = val;
    else if (key == "image_size") as_int(cfg.image_size);
    else if (key == "bank_size") as_int(cfg.bank_size);
    else if (key == "batch") as_int(cfg.batch);
    else if (key == "lr") as_double(cfg.lr);
    else if (key == "beta1") as_double(cfg.beta1);
    else if (key == "beta2") as_double(cfg.beta2);
    else if (key == "d_steps_per_g") as_int(cfg.d_steps_per_g);
    else if (key == "steps") as_ll(cfg.steps);
    else if (key == "seed") { int64_t v; as_ll(v); cfg.seed = static_cast<uint64_t>(v); }
    else if (key == "margin") as_double(cfg.margin);
    else if (key == "target_frame") as_int(cfg.target_frame);
    else if (key == "checkpoint_every") as_ll(cfg.checkpoint_every);
    else if (key == "lambda_s") as_double(cfg.lambda_s);
    else if (key == "lambda_tv") as_double(cfg.lambda_tv);
    else if (key == "lambda_rec") as_double(cfg.lambda_rec);
    else if (key == "lambda_p") as_double(cfg.lambda_p);
    else if (key == "lambda_adv") as_double(cfg.lambda_adv);
    else if (key == "tv_wm_scale") as_double(cfg.tv_wm_scale);
    else if (key == "gamma") as_double(cfg.gamma);
    else if (key == "floor") as_double(cfg.floor);
    else throw DataError("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config_text(buf.str());
}

template <typename T>
struct Clip {
  std::vector<Tensor<T>> frames;  // (3, H, W) in [-1, 1]
  std::vector<LandmarkSet> landmarks;
};

// Corpus directory: either one clip (landmarks.jsonl + PNG frames) or a
// directory of such clip subdirectories. Frames pair with landmark records
// in sorted filename order.
inline std::vector<Clip<float>> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir);

  auto load_clip = [](const fs::path& cdir) {
    Clip<float> clip;
    std::vector<fs::path> pngs;
    for (const auto& e : fs::directory_iterator(cdir))
      if (e.is_regular_file() && e.path().extension() == ".png") pngs.push_back(e.path());
    std::sort(pngs.begin(), pngs.end());
    for (const fs::path& p : pngs) clip.frames.push_back(u8_to_signed(read_png_rgb(p.string())));
    clip.landmarks = read_landmarks_jsonl((cdir / "landmarks.jsonl").string());
    if (clip.frames.size() != clip.landmarks.size())
      throw DataError(cdir.string() + ": " + std::to_string(clip.frames.size()) + " frames but " +
                      std::to_string(clip.landmarks.size()) + " landmark records");
    if (clip.frames.empty()) throw DataError(cdir.string() + ": no PNG frames");
    return clip;
  };

  std::vector<Clip<float>> clips;
  if (fs::exists(fs::path(dir) / "landmarks.jsonl")) {
    clips.push_back(load_clip(dir));
    return clips;
  }
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "landmarks.jsonl")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const fs::path& d : subdirs) clips.push_back(load_clip(d));
  if (clips.empty()) throw DataError("no clips with landmarks.jsonl under " + dir);
  return clips;
}

struct CycleStats {
  int64_t cycle = 0;
  std::vector<double> d_losses;
  double d_loss_mean = 0.0;
  double sparsity = 0.0;
  double tv_v = 0.0;
  double tv_ww = 0.0;
  double tv_wm = 0.0;
  double rec_w = 0.0;
  double rec_o = 0.0;
  double perceptual = 0.0;
  double adv = 0.0;
  double total = 0.0;
};

inline std::string csv_header() {
  return "step,d_loss,sparsity,tv_v,tv_ww,tv_wm,rec_w,rec_o,perceptual,adv,total";
}

inline std::string csv_row(const CycleStats& s) {
  std::ostringstream out;
  out.precision(10);
  out << s.cycle << ',' << s.d_loss_mean << ',' << s.sparsity << ',' << s.tv_v << ',' << s.tv_ww
      << ',' << s.tv_wm << ',' << s.rec_w << ',' << s.rec_o << ',' << s.perceptual << ',' << s.adv
      << ',' << s.total;
  return out.str();
}

namespace detail {

template <typename T>
Tensor<T> batch_slice(const Tensor<T>& t, int b) {
  Tensor<T> out({t.dim(1), t.dim(2), t.dim(3)});
  std::copy_n(t.ptr() + static_cast<int64_t>(b) * out.size(), out.size(), out.ptr());
  return out;
}

template <typename T>
void batch_set(Tensor<T>& t, int b, const Tensor<T>& item) {
  std::copy_n(item.ptr(), item.size(), t.ptr() + static_cast<int64_t>(b) * item.size());
}

template <typename T>
Tensor<T> tile_batch(const Tensor<T>& chw, int b) {
  Tensor<T> out({b, chw.dim(0), chw.dim(1), chw.dim(2)});
  for (int i = 0; i < b; ++i) batch_set(out, i, chw);
  return out;
}

}  // namespace detail

// Adversarial trainer: per generator cycle, d_steps_per_g discriminator
// updates followed by one generator update, all deterministic for a seed.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Clip<T>> clips,
          std::shared_ptr<FeatureExtractor<T>> extractor = nullptr)
      : cfg_(std::move(cfg)),
        clips_(std::move(clips)),
        gen_(profile_by_name(cfg_.profile), cfg_.bank_size),
        disc_(profile_by_name(cfg_.profile)),
        extractor_(extractor ? std::move(extractor) : std::make_shared<StubFeatureExtractor<T>>()),
        rng_(cfg_.seed + 1) {
    cfg_.validate();
    weights_ = cfg_.template loss_weights<T>();
    if (clips_.empty()) throw DataError("trainer: no clips");
    for (const Clip<T>& c : clips_) {
      for (const Tensor<T>& f : c.frames)
        if (f.rank() != 3 || f.dim(0) != 3 || f.dim(1) != cfg_.image_size ||
            f.dim(2) != cfg_.image_size)
          throw DataError("trainer: frame shape " + shape_str(f.shape) + " does not match image_size " +
                          std::to_string(cfg_.image_size));
      if (cfg_.target_frame >= static_cast<int>(c.frames.size()))
        throw DataError("trainer: target_frame out of range for a clip");
      banks_.push_back(select_bank(c.frames, c.landmarks, cfg_.bank_size));
    }
    for (const SourceBank<T>& bank : banks_) {
      std::vector<Tensor<T>> tiled;
      for (const Tensor<T>& img : bank.images) tiled.push_back(detail::tile_batch(img, cfg_.batch));
      bank_tiled_.push_back(std::move(tiled));
    }
    RandomEngine init_rng(cfg_.seed);
    gen_.init(init_rng);
    disc_.init(init_rng);
    g_refs_ = gen_.collect();
    d_refs_ = disc_.collect();
    adam_g_ = std::make_unique<Adam<T>>(g_refs_.params, static_cast<T>(cfg_.lr),
                                        static_cast<T>(cfg_.beta1), static_cast<T>(cfg_.beta2));
    adam_d_ = std::make_unique<Adam<T>>(d_refs_.params, static_cast<T>(cfg_.lr),
                                        static_cast<T>(cfg_.beta1), static_cast<T>(cfg_.beta2));
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  CycleStats run_cycle() {
    CycleStats stats;
    for (int i = 0; i < cfg_.d_steps_per_g; ++i) stats.d_losses.push_back(d_step());
    double acc = 0.0;
    for (double d : stats.d_losses) acc += d;
    stats.d_loss_mean = acc / static_cast<double>(stats.d_losses.size());
    g_step(stats);
    ++cycle_;
    stats.cycle = cycle_;
    return stats;
  }

  void save_checkpoint(const std::string& path) {
    TensorStore st;
    st.manifest["kind"] = "train";
    st.manifest["profile"] = cfg_.profile;
    st.manifest["bank_size"] = cfg_.bank_size;
    st.manifest["image_size"] = cfg_.image_size;
    st.manifest["margin"] = cfg_.margin;
    st.manifest["cycle"] = cycle_;
    st.manifest["adam_g_t"] = adam_g_->t();
    st.manifest["adam_d_t"] = adam_d_->t();
    st.manifest["rng"] = rng_.serialize();
    st.manifest["buffer_count"] = buffer_.size();
    store_params(st, g_refs_, true);
    store_params(st, d_refs_, true);
    for (int i = 0; i < buffer_.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "buffer.%04d", i);
      st.add(name, buffer_.items()[static_cast<size_t>(i)].template cast<float>());
    }
    st.save(path);
  }

  void resume(const std::string& path) {
    TensorStore st = TensorStore::load(path);
    require_manifest(st, "profile", cfg_.profile);
    require_manifest(st, "bank_size", cfg_.bank_size);
    require_manifest(st, "image_size", cfg_.image_size);
    read_params(st, g_refs_, true);
    read_params(st, d_refs_, true);
    adam_g_->set_t(st.manifest.value("adam_g_t", int64_t{0}));
    adam_d_->set_t(st.manifest.value("adam_d_t", int64_t{0}));
    cycle_ = st.manifest.value("cycle", int64_t{0});
    rng_.deserialize(st.manifest.value("rng", std::string()));
    buffer_.items().clear();
    const int count = st.manifest.value("buffer_count", 0);
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "buffer.%04d", i);
      const Tensor<float>* t = st.find(name);
      if (!t) throw DataError("checkpoint is missing tensor " + std::string(name));
      buffer_.items().push_back(t->template cast<T>());
    }
  }

  Generator<T>& generator() { return gen_; }
  Discriminator<T>& discriminator() { return disc_; }
  const TrainConfig& config() const { return cfg_; }
  const LossWeights<T>& weights() const { return weights_; }
  const SourceBank<T>& bank(int clip) const { return banks_[static_cast<size_t>(clip)]; }
  int64_t cycle() const { return cycle_; }
  const std::vector<char>& update_log() const { return update_log_; }
  ParamRefs<T>& generator_refs() { return g_refs_; }
  ParamRefs<T>& discriminator_refs() { return d_refs_; }
  FakeHistoryBuffer<T>& buffer() { return buffer_; }

 private:
  struct BatchData {
    int clip = 0;
    Tensor<T> input;   // (B, 5N, H, W)
    Tensor<T> target;  // (B, 3, H, W)
    Tensor<T> k;       // (B, 1, H, W)
  };

  const Tensor<T>& cached_input(int clip, int frame) {
    const auto key = std::make_pair(clip, frame);
    auto it = input_cache_.find(key);
    if (it != input_cache_.end()) return it->second;
    const SourceBank<T>& bank = banks_[static_cast<size_t>(clip)];
    const Clip<T>& c = clips_[static_cast<size_t>(clip)];
    std::vector<Tensor<T>> fields;
    for (int i = 0; i < bank.count(); ++i)
      fields.push_back(difference_field<T>(bank.landmarks[static_cast<size_t>(i)],
                                           c.landmarks[static_cast<size_t>(frame)], bank.width(),
                                           bank.height()));
    return input_cache_.emplace(key, assemble_input(bank, fields)).first->second;
  }

  const Tensor<T>& cached_heatmap(int clip, int frame) {
    const auto key = std::make_pair(clip, frame);
    auto it = heat_cache_.find(key);
    if (it != heat_cache_.end()) return it->second;
    const Clip<T>& c = clips_[static_cast<size_t>(clip)];
    HeatmapWeights<T> hw = heatmap_weights<T>(c.landmarks[static_cast<size_t>(frame)],
                                              cfg_.image_size, cfg_.image_size, weights_.gamma,
                                              weights_.floor);
    return heat_cache_.emplace(key, std::move(hw.k)).first->second;
  }

  BatchData sample_batch() {
    BatchData b;
    b.clip = rng_.uniform_int(static_cast<int>(clips_.size()));
    const Clip<T>& clip = clips_[static_cast<size_t>(b.clip)];
    const int h = cfg_.image_size, w = cfg_.image_size;
    b.input = Tensor<T>({cfg_.batch, 5 * cfg_.bank_size, h, w});
    b.target = Tensor<T>({cfg_.batch, 3, h, w});
    b.k = Tensor<T>({cfg_.batch, 1, h, w});
    for (int i = 0; i < cfg_.batch; ++i) {
      const int frame = cfg_.target_frame >= 0
                            ? cfg_.target_frame
                            : rng_.uniform_int(static_cast<int>(clip.frames.size()));
      detail::batch_set(b.input, i, cached_input(b.clip, frame));
      detail::batch_set(b.target, i, clip.frames[static_cast<size_t>(frame)]);
      const Tensor<T>& k = cached_heatmap(b.clip, frame);
      std::copy_n(k.ptr(), k.size(), b.k.ptr() + static_cast<int64_t>(i) * k.size());
    }
    return b;
  }

  std::vector<Var> bank_vars(Graph<T>& g, int clip) {
    std::vector<Var> out;
    for (const Tensor<T>& t : bank_tiled_[static_cast<size_t>(clip)]) out.push_back(g.constant(t));
    return out;
  }

  void zero_grads() {
    for (Parameter<T>* p : g_refs_.params) p->zero_grad();
    for (Parameter<T>* p : d_refs_.params) p->zero_grad();
  }

 public:
  // One discriminator update: fresh fakes from a sampled batch, replay-mixed
  // through the history buffer, hinge loss, Adam step on D only.
  double d_step() {
    BatchData b = sample_batch();
    Tensor<T> fake;
    {
      Graph<T> gf;
      gf.grad_enabled = false;
      TwoStreamOut<T> ts = two_stream_forward(gf, gen_, gf.constant(b.input), bank_vars(gf, b.clip),
                                              static_cast<T>(cfg_.margin), false);
      fake = gf.val(ts.output);
    }
    Tensor<T> fake_mix(fake.shape);
    for (int i = 0; i < cfg_.batch; ++i) {
      Tensor<T> mixed = buffer_.push_and_sample(detail::batch_slice(fake, i), rng_);
      detail::batch_set(fake_mix, i, mixed);
    }
    Graph<T> g;
    Var real_scores = disc_.forward(g, g.constant(b.target), true);
    Var fake_scores = disc_.forward(g, g.constant(fake_mix), false);
    Var loss = hinge_d_loss(g, real_scores, fake_scores);
    const double value = static_cast<double>(g.val(loss)[0]);
    zero_grads();
    g.backward(loss);
    adam_d_->step();
    update_log_.push_back('D');
    return value;
  }

  // One generator update: full two-stream forward, every objective term,
  // Adam step on G only; the critic joins the graph frozen.
  void g_step(CycleStats& stats) {
    BatchData b = sample_batch();
    Graph<T> g;
    Var target = g.constant(b.target);
    TwoStreamOut<T> ts = two_stream_forward(g, gen_, g.constant(b.input), bank_vars(g, b.clip),
                                            static_cast<T>(cfg_.margin), true);
    LossTerms<Var> terms;
    terms.sparsity = sparsity_loss(g, ts.heads.merge_mask);
    terms.tv_v = tv_loss(g, ts.heads.merge_mask);
    terms.tv_ww = tv_loss(g, ts.heads.raw_fields);
    terms.tv_wm = tv_loss(g, ts.heads.masks);
    Var k = g.constant(b.k);
    Var rec_w = weighted_l1(g, ts.warped, target, k);
    Var rec_o = weighted_l1(g, ts.output, target, k);
    terms.rec = g.add(rec_w, rec_o);
    terms.perceptual = perceptual_loss(g, ts.output, target, *extractor_);
    terms.adv = hinge_g_loss(g, disc_.forward(g, ts.output, false, /*frozen=*/true));
    Var total = total_generator_loss(g, terms, weights_);

    const std::pair<const char*, Var> named[] = {
        {"sparsity", terms.sparsity}, {"tv_v", terms.tv_v},   {"tv_ww", terms.tv_ww},
        {"tv_wm", terms.tv_wm},       {"rec", terms.rec},     {"perceptual", terms.perceptual},
        {"adv", terms.adv},           {"total", total}};
    for (const auto& [name, var] : named)
      if (!std::isfinite(static_cast<double>(g.val(var)[0])))
        throw std::runtime_error(std::string("generator loss term is non-finite: ") + name);

    zero_grads();
    g.backward(total);
    adam_g_->step();
    update_log_.push_back('G');

    stats.sparsity = static_cast<double>(g.val(terms.sparsity)[0]);
    stats.tv_v = static_cast<double>(g.val(terms.tv_v)[0]);
    stats.tv_ww = static_cast<double>(g.val(terms.tv_ww)[0]);
    stats.tv_wm = static_cast<double>(g.val(terms.tv_wm)[0]);
    stats.rec_w = static_cast<double>(g.val(rec_w)[0]);
    stats.rec_o = static_cast<double>(g.val(rec_o)[0]);
    stats.perceptual = static_cast<double>(g.val(terms.perceptual)[0]);
    stats.adv = static_cast<double>(g.val(terms.adv)[0]);
    stats.total = static_cast<double>(g.val(total)[0]);
  }

 private:
  static void require_manifest(const TensorStore& st, const std::string& key,
                               const nlohmann::json& expected) {
    if (!st.manifest.contains(key) || st.manifest[key] != expected)
      throw DataError("checkpoint " + key + " " + st.manifest.value(key, nlohmann::json()).dump() +
                      " does not match configured " + expected.dump());
  }

  TrainConfig cfg_;
  LossWeights<T> weights_;
  std::vector<Clip<T>> clips_;
  std::vector<SourceBank<T>> banks_;
  std::vector<std::vector<Tensor<T>>> bank_tiled_;
  Generator<T> gen_;
  Discriminator<T> disc_;
  ParamRefs<T> g_refs_, d_refs_;
  std::unique_ptr<Adam<T>> adam_g_, adam_d_;
  std::shared_ptr<FeatureExtractor<T>> extractor_;
  FakeHistoryBuffer<T> buffer_;
  RandomEngine rng_;
  int64_t cycle_ = 0;
  std::vector<char> update_log_;
  std::map<std::pair<int, int>, Tensor<T>> input_cache_, heat_cache_;
};

// Reads only the generator (and its architecture facts) from a checkpoint;
// the inference-side loader.
template <typename T>
struct LoadedGenerator {
  ArchProfile prof = ArchProfile::desk();
  int bank_size = 0;
  int image_size = 0;
  double margin = 40.0;
  std::unique_ptr<Generator<T>> gen;
};

template <typename T>
LoadedGenerator<T> load_generator(const std::string& path) {
  TensorStore st = TensorStore::load(path);
  LoadedGenerator<T> out;
  if (!st.manifest.contains("profile") || !st.manifest.contains("bank_size"))
    throw DataError("checkpoint manifest lacks profile/bank_size: " + path);
  out.prof = profile_by_name(st.manifest["profile"].get<std::string>());
  out.bank_size = st.manifest["bank_size"].get<int>();
  out.image_size = st.manifest.value("image_size", 0);
  out.margin = st.manifest.value("margin", 40.0);
  out.gen = std::make_unique<Generator<T>>(out.prof, out.bank_size);
  ParamRefs<T> refs = out.gen->collect();
  read_params(st, refs, false);
  return out;
}

}  // namespace fsyn
