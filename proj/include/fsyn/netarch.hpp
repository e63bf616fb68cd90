// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fsyn/checkpoint.hpp"
#include "fsyn/conv.hpp"
#include "fsyn/graph.hpp"
#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"
#include "fsyn/warpkit.hpp"

namespace fsyn {

// Width presets. `full` matches the published layer widths; `desk` scales
// every width by 1/4 so the whole pipeline trains on one CPU core.
struct ArchProfile {
  std::string name;
  int base;       // generator encoder start width
  int d_base;     // discriminator start width
  int res_blocks; // residual blocks at the bottleneck

  static ArchProfile full() { return {"full", 64, 64, 6}; }
  static ArchProfile desk() { return {"desk", 16, 16, 6}; }
};

inline ArchProfile profile_by_name(const std::string& name) {
  if (name == "full") return ArchProfile::full();
  if (name == "desk") return ArchProfile::desk();
  throw DataError("unknown profile: " + name + " (expected full or desk)");
}

// Named views over a module's trainable tensors and persistent buffers,
// in a stable declaration order for optimizers and checkpoints.
template <typename T>
struct ParamRefs {
  std::vector<Parameter<T>*> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;
};

// Convolution with optional spectral weight normalization. The power
// iteration vectors u/v live outside the graph and advance only when
// `update_sn` is set; sigma = u^T W v enters the graph with u, v constant.
template <typename T>
class ConvSN {
 public:
  ConvSN(std::string name, int ic, int oc, int kh, int kw, int stride, int pl, int pr, int pt,
         int pb, bool use_bias, bool use_sn)
      : name_(std::move(name)),
        stride_(stride),
        pl_(pl),
        pr_(pr),
        pt_(pt),
        pb_(pb),
        use_bias_(use_bias),
        use_sn_(use_sn),
        w_(name_ + ".w", Tensor<T>::zeros({oc, ic, kh, kw})),
        b_(name_ + ".b", Tensor<T>::zeros({oc})) {
    if (use_sn_) {
      sn_u_ = Tensor<T>::zeros({oc});
      sn_v_ = Tensor<T>::zeros({ic * kh * kw});
    }
  }

  void init(RandomEngine& rng, double stdev = 0.02) {
    for (int64_t i = 0; i < w_.value.size(); ++i)
      w_.value[i] = static_cast<T>(rng.normal() * stdev);
    b_.value.fill(T(0));
    if (use_sn_) {
      double norm = 0.0;
      for (int64_t i = 0; i < sn_u_.size(); ++i) {
        sn_u_[i] = static_cast<T>(rng.normal());
        norm += static_cast<double>(sn_u_[i]) * sn_u_[i];
      }
      norm = std::sqrt(norm);
      if (norm > 1e-12)
        for (int64_t i = 0; i < sn_u_.size(); ++i) sn_u_[i] = static_cast<T>(sn_u_[i] / norm);
      sn_v_.fill(T(0));
      // One warm-up iteration so sigma is meaningful even before the first
      // updating forward pass.
      power_iterate();
    }
  }

  // `frozen` registers the weights as constants: no gradients reach this
  // layer, which is how the discriminator joins generator graphs.
  Var forward(Graph<T>& g, Var x, bool update_sn, bool frozen = false) {
    Var wv = frozen ? g.constant(w_.value) : g.param(w_);
    if (use_sn_) {
      if (update_sn) power_iterate();
      wv = g.smul(wv, g.recip(g.scale_add(g.vdot(wv, g.constant(outer_uv())), T(1), T(1e-12))));
    }
    Var bv{};
    if (use_bias_) bv = frozen ? g.constant(b_.value) : g.param(b_);
    return conv2d(g, x, wv, bv, stride_, pl_, pr_, pt_, pb_);
  }

  void collect(ParamRefs<T>& refs) {
    refs.params.push_back(&w_);
    if (use_bias_) refs.params.push_back(&b_);
    if (use_sn_) {
      refs.buffers.emplace_back(name_ + ".sn_u", &sn_u_);
      refs.buffers.emplace_back(name_ + ".sn_v", &sn_v_);
    }
  }

  const std::string& name() const { return name_; }
  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }

 private:
  void power_iterate() {
    const int oc = w_.value.dim(0);
    const int64_t k = w_.value.size() / oc;
    const T* w = w_.value.ptr();
    // v <- normalize(W^T u); u <- normalize(W v). Near-zero weights leave
    // the vectors untouched so sigma stays tiny and the eps guard rules.
    std::vector<double> v(static_cast<size_t>(k), 0.0);
    for (int o = 0; o < oc; ++o) {
      const double u = static_cast<double>(sn_u_[o]);
      const T* row = w + static_cast<int64_t>(o) * k;
      for (int64_t j = 0; j < k; ++j) v[static_cast<size_t>(j)] += u * row[j];
    }
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn < 1e-12) return;
    for (int64_t j = 0; j < k; ++j) sn_v_[j] = static_cast<T>(v[static_cast<size_t>(j)] / vn);
    std::vector<double> u(static_cast<size_t>(oc), 0.0);
    for (int o = 0; o < oc; ++o) {
      const T* row = w + static_cast<int64_t>(o) * k;
      double acc = 0.0;
      for (int64_t j = 0; j < k; ++j) acc += static_cast<double>(row[j]) * sn_v_[j];
      u[static_cast<size_t>(o)] = acc;
    }
    double un = 0.0;
    for (double x : u) un += x * x;
    un = std::sqrt(un);
    if (un < 1e-12) return;
    for (int o = 0; o < oc; ++o) sn_u_[o] = static_cast<T>(u[static_cast<size_t>(o)] / un);
  }

  Tensor<T> outer_uv() const {
    const int oc = w_.value.dim(0);
    const int64_t k = w_.value.size() / oc;
    Tensor<T> uv(w_.value.shape);
    for (int o = 0; o < oc; ++o)
      for (int64_t j = 0; j < k; ++j) uv[static_cast<int64_t>(o) * k + j] = sn_u_[o] * sn_v_[j];
    return uv;
  }

  std::string name_;
  int stride_, pl_, pr_, pt_, pb_;
  bool use_bias_, use_sn_;
  Parameter<T> w_, b_;
  Tensor<T> sn_u_, sn_v_;
};

template <typename T>
class InstanceNorm {
 public:
  InstanceNorm(std::string name, int channels)
      : gamma_(name + ".gamma", Tensor<T>::full({channels}, T(1))),
        beta_(name + ".beta", Tensor<T>::zeros({channels})) {}

  Var forward(Graph<T>& g, Var x) { return g.instance_norm(x, g.param(gamma_), g.param(beta_)); }

  void collect(ParamRefs<T>& refs) {
    refs.params.push_back(&gamma_);
    refs.params.push_back(&beta_);
  }

 private:
  Parameter<T> gamma_, beta_;
};

// conv -> IN -> ReLU twice, plus the identity skip.
template <typename T>
class ResBlock {
 public:
  ResBlock(const std::string& name, int ch)
      : c1_(name + ".c1", ch, ch, 3, 3, 1, 1, 1, 1, 1, false, true),
        n1_(name + ".n1", ch),
        c2_(name + ".c2", ch, ch, 3, 3, 1, 1, 1, 1, 1, false, true),
        n2_(name + ".n2", ch) {}

  void init(RandomEngine& rng) {
    c1_.init(rng);
    c2_.init(rng);
  }

  Var forward(Graph<T>& g, Var x, bool update_sn) {
    Var h = g.relu(n1_.forward(g, c1_.forward(g, x, update_sn)));
    h = g.relu(n2_.forward(g, c2_.forward(g, h, update_sn)));
    return g.add(x, h);
  }

  void collect(ParamRefs<T>& refs) {
    c1_.collect(refs);
    n1_.collect(refs);
    c2_.collect(refs);
    n2_.collect(refs);
  }

 private:
  ConvSN<T> c1_;
  InstanceNorm<T> n1_;
  ConvSN<T> c2_;
  InstanceNorm<T> n2_;
};

template <typename T>
struct GeneratorHeads {
  Var features;    // I_f (B, base, H, W)
  Var masks;       // (B, N, H, W), per-pixel softmax
  Var raw_fields;  // (B, 2N, H, W), tanh in (-1, 1)
  Var appearance;  // (B, 3, H, W), tanh
  Var merge_mask;  // (B, 1, H, W), sigmoid
};

// Master encoder-decoder plus the four single-convolution branch heads.
template <typename T>
class Generator {
 public:
  Generator(const ArchProfile& prof, int bank_size)
      : prof_(prof),
        n_(bank_size),
        enc1_("G.enc1", 5 * bank_size, prof.base, 7, 7, 1, 3, 3, 3, 3, false, true),
        inn1_("G.in1", prof.base),
        enc2_("G.enc2", prof.base, 2 * prof.base, 4, 4, 2, 1, 1, 1, 1, false, true),
        inn2_("G.in2", 2 * prof.base),
        enc3_("G.enc3", 2 * prof.base, 4 * prof.base, 4, 4, 2, 1, 1, 1, 1, false, true),
        inn3_("G.in3", 4 * prof.base),
        dec1_("G.dec1", 4 * prof.base, 2 * prof.base, 4, 4, 1, 1, 2, 1, 2, false, true),
        ind1_("G.dn1", 2 * prof.base),
        dec2_("G.dec2", 2 * prof.base, prof.base, 4, 4, 1, 1, 2, 1, 2, false, true),
        ind2_("G.dn2", prof.base),
        head_mask_("G.head_mask", prof.base, bank_size, 7, 7, 1, 3, 3, 3, 3, true, true),
        head_field_("G.head_field", prof.base, 2 * bank_size, 7, 7, 1, 3, 3, 3, 3, true, true),
        head_app_("G.head_app", prof.base, 3, 7, 7, 1, 3, 3, 3, 3, true, true),
        head_merge_("G.head_merge", prof.base, 1, 7, 7, 1, 3, 3, 3, 3, true, true) {
    if (bank_size < 1) throw DataError("Generator: bank size must be at least 1");
    for (int i = 0; i < prof.res_blocks; ++i)
      res_.push_back(std::make_unique<ResBlock<T>>("G.res" + std::to_string(i), 4 * prof.base));
  }

  void init(RandomEngine& rng) {
    enc1_.init(rng);
    enc2_.init(rng);
    enc3_.init(rng);
    for (auto& r : res_) r->init(rng);
    dec1_.init(rng);
    dec2_.init(rng);
    head_mask_.init(rng);
    head_field_.init(rng);
    head_app_.init(rng);
    head_merge_.init(rng);
  }

  Var master_forward(Graph<T>& g, Var x, bool update_sn) {
    const Tensor<T>& vx = g.val(x);
    if (vx.rank() != 4 || vx.dim(1) != 5 * n_)
      throw DataError("master_forward: input must be (B, 5N, H, W) with N = " + std::to_string(n_));
    if (vx.dim(2) % 4 != 0 || vx.dim(3) % 4 != 0)
      throw DataError("master_forward: spatial dims must be divisible by 4");
    Var h = g.relu(inn1_.forward(g, enc1_.forward(g, x, update_sn)));
    h = g.relu(inn2_.forward(g, enc2_.forward(g, h, update_sn)));
    h = g.relu(inn3_.forward(g, enc3_.forward(g, h, update_sn)));
    for (auto& r : res_) h = r->forward(g, h, update_sn);
    h = g.upsample2x(h);
    h = g.relu(ind1_.forward(g, dec1_.forward(g, h, update_sn)));
    h = g.upsample2x(h);
    h = g.relu(ind2_.forward(g, dec2_.forward(g, h, update_sn)));
    return h;
  }

  GeneratorHeads<T> forward(Graph<T>& g, Var x, bool update_sn) {
    GeneratorHeads<T> out;
    out.features = master_forward(g, x, update_sn);
    out.masks = g.softmax_ch(head_mask_.forward(g, out.features, update_sn));
    out.raw_fields = g.tanh_(head_field_.forward(g, out.features, update_sn));
    out.appearance = g.tanh_(head_app_.forward(g, out.features, update_sn));
    out.merge_mask = g.sigmoid_(head_merge_.forward(g, out.features, update_sn));
    return out;
  }

  ParamRefs<T> collect() {
    ParamRefs<T> refs;
    enc1_.collect(refs);
    inn1_.collect(refs);
    enc2_.collect(refs);
    inn2_.collect(refs);
    enc3_.collect(refs);
    inn3_.collect(refs);
    for (auto& r : res_) r->collect(refs);
    dec1_.collect(refs);
    ind1_.collect(refs);
    dec2_.collect(refs);
    ind2_.collect(refs);
    head_mask_.collect(refs);
    head_field_.collect(refs);
    head_app_.collect(refs);
    head_merge_.collect(refs);
    return refs;
  }

  const ArchProfile& profile() const { return prof_; }
  int bank_size() const { return n_; }

 private:
  ArchProfile prof_;
  int n_;
  ConvSN<T> enc1_;
  InstanceNorm<T> inn1_;
  ConvSN<T> enc2_;
  InstanceNorm<T> inn2_;
  ConvSN<T> enc3_;
  InstanceNorm<T> inn3_;
  std::vector<std::unique_ptr<ResBlock<T>>> res_;
  ConvSN<T> dec1_;
  InstanceNorm<T> ind1_;
  ConvSN<T> dec2_;
  InstanceNorm<T> ind2_;
  ConvSN<T> head_mask_, head_field_, head_app_, head_merge_;
};

// PatchGAN critic: four stride-2 convs, spectral norm, leaky ReLU, no
// instance or batch normalization; the final k3 map is the raw score.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const ArchProfile& prof, int in_ch = 3)
      : prof_(prof),
        c1_("D.c1", in_ch, prof.d_base, 4, 4, 2, 1, 1, 1, 1, true, true),
        c2_("D.c2", prof.d_base, 2 * prof.d_base, 4, 4, 2, 1, 1, 1, 1, true, true),
        c3_("D.c3", 2 * prof.d_base, 4 * prof.d_base, 4, 4, 2, 1, 1, 1, 1, true, true),
        c4_("D.c4", 4 * prof.d_base, 8 * prof.d_base, 4, 4, 2, 1, 1, 1, 1, true, true),
        c5_("D.c5", 8 * prof.d_base, 1, 3, 3, 1, 1, 1, 1, 1, true, true) {}

  void init(RandomEngine& rng) {
    c1_.init(rng);
    c2_.init(rng);
    c3_.init(rng);
    c4_.init(rng);
    c5_.init(rng);
  }

  Var forward(Graph<T>& g, Var x, bool update_sn, bool frozen = false) {
    const Tensor<T>& vx = g.val(x);
    if (vx.rank() != 4) throw DataError("discriminator: input must be (B, C, H, W)");
    if (vx.dim(2) % 16 != 0 || vx.dim(3) % 16 != 0)
      throw DataError("discriminator: spatial dims must be divisible by 16");
    const T slope = T(0.01);
    Var h = g.lrelu(c1_.forward(g, x, update_sn, frozen), slope);
    h = g.lrelu(c2_.forward(g, h, update_sn, frozen), slope);
    h = g.lrelu(c3_.forward(g, h, update_sn, frozen), slope);
    h = g.lrelu(c4_.forward(g, h, update_sn, frozen), slope);
    return c5_.forward(g, h, update_sn, frozen);
  }

  ParamRefs<T> collect() {
    ParamRefs<T> refs;
    c1_.collect(refs);
    c2_.collect(refs);
    c3_.collect(refs);
    c4_.collect(refs);
    c5_.collect(refs);
    return refs;
  }

 private:
  ArchProfile prof_;
  ConvSN<T> c1_, c2_, c3_, c4_, c5_;
};

template <typename T>
struct TwoStreamOut {
  GeneratorHeads<T> heads;
  Var fields_px;  // scaled displacements (B, 2N, H, W)
  Var warped;     // I_w
  Var output;     // I_o
};

// Full generator pipeline: heads, field scaling, mask-weighted warp merge,
// and the final appearance/warp blend.
template <typename T>
TwoStreamOut<T> two_stream_forward(Graph<T>& g, Generator<T>& gen, Var input,
                                   const std::vector<Var>& bank, T margin, bool update_sn) {
  if (static_cast<int>(bank.size()) != gen.bank_size())
    throw DataError("two_stream_forward: bank size differs from generator N");
  TwoStreamOut<T> out;
  out.heads = gen.forward(g, input, update_sn);
  out.fields_px = scale_field(g, out.heads.raw_fields, margin);
  out.warped = merge_warped(g, bank, out.heads.masks, out.fields_px);
  out.output = merge_final(g, out.heads.appearance, out.warped, out.heads.merge_mask);
  return out;
}

template <typename T>
int64_t count_params(const ParamRefs<T>& refs) {
  int64_t n = 0;
  for (const Parameter<T>* p : refs.params) n += p->value.size();
  return n;
}

// Serialize parameters (optionally with optimizer moments) and persistent
// buffers into a TensorStore, and back. Names are the declaration names;
// loading checks shapes and errors on absent or mismatched tensors.
template <typename T>
void store_params(TensorStore& store, ParamRefs<T>& refs, bool with_moments) {
  for (Parameter<T>* p : refs.params) {
    store.add(p->name, p->value.template cast<float>());
    if (with_moments) {
      store.add(p->name + ".adam_m", p->m.empty() ? Tensor<float>::zeros(p->value.shape)
                                                  : p->m.template cast<float>());
      store.add(p->name + ".adam_v", p->v.empty() ? Tensor<float>::zeros(p->value.shape)
                                                  : p->v.template cast<float>());
    }
  }
  for (auto& [name, buf] : refs.buffers) store.add(name, buf->template cast<float>());
}

template <typename T>
void read_params(const TensorStore& store, ParamRefs<T>& refs, bool with_moments) {
  auto fetch = [&store](const std::string& name, const std::vector<int>& shape) {
    const Tensor<float>* t = store.find(name);
    if (!t) throw DataError("checkpoint is missing tensor " + name);
    if (t->shape != shape)
      throw DataError("checkpoint tensor " + name + " has shape " + shape_str(t->shape) +
                      ", expected " + shape_str(shape));
    return t->template cast<T>();
  };
  for (Parameter<T>* p : refs.params) {
    p->value = fetch(p->name, p->value.shape);
    if (with_moments) {
      p->m = fetch(p->name + ".adam_m", p->value.shape);
      p->v = fetch(p->name + ".adam_v", p->value.shape);
    }
  }
  for (auto& [name, buf] : refs.buffers) *buf = fetch(name, buf->shape);
}

}  // namespace fsyn
