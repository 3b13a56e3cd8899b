#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "trisim/afe.hpp"
#include "trisim/attention.hpp"
#include "trisim/config.hpp"
#include "trisim/fusion.hpp"

namespace trisim {

// Per-pair activation record. Forward is const on the model and writes only
// here, so independent pairs can be evaluated concurrently with one cache
// each; backward needs exclusive access to the model's gradient buffers.
template <typename T>
struct ModelCache {
  AfeCache<T> afe_x, afe_y;
  Tensor3<T> x_sem, y_sem;        // semantic tensors X, Y
  SaCache<T> sa;
  FaCache<T> fa_x, fa_y;
  Tensor3<T> sa_x, sa_y;          // SA outputs
  Tensor3<T> fa_out_x, fa_out_y;  // FA outputs
  Tensor3<T> xp, yp;              // combined X', Y'
  RfmCache<T> rfm_x, rfm_y;
  PoolingFusionCache<T> pooling;
  HeadCache<T> head;
  std::vector<T> probs;
};

template <typename T>
class Model {
 public:
  explicit Model(const RunConfig& cfg) : cfg_(cfg) {
    const int d = cfg.encoder.d;
    const int d_prime = cfg.attention.d_prime;
    const int d_reduce = std::max(1, d / 4);
    Rng rng(cfg.train.seed ^ 0xA11CE5EDull);
    afe_.init(cfg.block_selection().indices(cfg.encoder.h), d, d_reduce,
              cfg.blocks.adaptive, rng);
    if (cfg.attention.sa) {
      sa_.emplace();
      sa_->init(d, d_prime, cfg.attention.scale_scores, rng);
    }
    if (cfg.attention.fa != "none") {
      const FaVariant v = cfg.attention.fa == "fa1"   ? FaVariant::fa1
                          : cfg.attention.fa == "fa2" ? FaVariant::fa2
                                                      : FaVariant::fa3;
      fa_.emplace();
      fa_->init(v, d, d_reduce, d_prime,
                rng, cfg.attention.fa_tied ? "fa." : "fa.x.");
      if (!cfg.attention.fa_tied) {
        fa_y_.emplace();
        fa_y_->init(v, d, d_reduce, d_prime, rng, "fa.y.");
      }
    }
    int head_in;
    if (cfg.fusion.mode == "rfm") {
      rfm_.emplace();
      rfm_->init(cfg.fusion.psi_sizes, cfg.fusion.phi_size, cfg.fusion.dilations, d_prime,
                 cfg.fusion.d_dprime, rng);
      head_in = 3 * rfm_->out_features();
    } else {
      head_in = 6 * d_prime;
    }
    head_.init(head_in, cfg.head.hidden, cfg.n_labels(), rng);
  }

  const RunConfig& config() const { return cfg_; }

  std::vector<T> forward(const BlockStack<T>& x_blocks, const BlockStack<T>& y_blocks,
                         ModelCache<T>& c) const {
    c.x_sem = afe_forward(x_blocks, afe_, c.afe_x);
    c.y_sem = afe_forward(y_blocks, afe_, c.afe_y);
    if (sa_) {
      auto [xs, ys] = sa_forward(c.x_sem, c.y_sem, *sa_, c.sa);
      c.sa_x = std::move(xs);
      c.sa_y = std::move(ys);
    }
    if (fa_) {
      c.fa_out_x = fa_forward(c.x_sem, *fa_, c.fa_x);
      c.fa_out_y = fa_forward(c.y_sem, fa_y_ ? *fa_y_ : *fa_, c.fa_y);
    }
    if (sa_ && fa_) {
      c.xp = combine(c.sa_x, c.fa_out_x);
      c.yp = combine(c.sa_y, c.fa_out_y);
    } else if (sa_) {
      c.xp = c.sa_x;
      c.yp = c.sa_y;
    } else if (fa_) {
      c.xp = c.fa_out_x;
      c.yp = c.fa_out_y;
    } else {
      throw ConfigError("model: at least one of SA/FA must be enabled");
    }
    std::vector<T> v;
    if (rfm_) {
      const Tensor3<T> xr = rfm_forward(c.xp, *rfm_, c.rfm_x);
      const Tensor3<T> yr = rfm_forward(c.yp, *rfm_, c.rfm_y);
      v = gap_concat(xr, yr);
    } else {
      v = pooling_fusion(c.xp, c.yp, c.pooling);
    }
    c.probs = classify_head(v, head_, c.head);
    return c.probs;
  }

  // Backward from the cross-entropy logit gradient (probs - onehot(label)).
  void backward(const std::vector<T>& d_logits, ModelCache<T>& c) {
    std::vector<T> dv = classify_head_bwd(d_logits, head_, c.head);
    Tensor3<T> dxp, dyp;
    if (rfm_) {
      Tensor3<T> dxr(c.rfm_x.out.h, c.rfm_x.out.l, c.rfm_x.out.d);
      Tensor3<T> dyr(c.rfm_y.out.h, c.rfm_y.out.l, c.rfm_y.out.d);
      gap_concat_bwd(dv, c.rfm_x.out, c.rfm_y.out, dxr, dyr);
      dxp = rfm_backward(dxr, *rfm_, c.rfm_x);
      dyp = rfm_backward(dyr, *rfm_, c.rfm_y);
    } else {
      auto [dx, dy] = pooling_fusion_bwd(dv, c.pooling);
      dxp = std::move(dx);
      dyp = std::move(dy);
    }
    Tensor3<T> dx_sem, dy_sem;
    if (sa_ && fa_) {
      const Tensor3<T> d_sa_x = hadamard(dxp, c.fa_out_x);
      const Tensor3<T> d_sa_y = hadamard(dyp, c.fa_out_y);
      const Tensor3<T> d_fa_x = hadamard(dxp, c.sa_x);
      const Tensor3<T> d_fa_y = hadamard(dyp, c.sa_y);
      dx_sem = fa_backward(d_fa_x, *fa_, c.fa_x);
      dy_sem = fa_backward(d_fa_y, fa_y_ ? *fa_y_ : *fa_, c.fa_y);
      auto [dxs, dys] = sa_backward(d_sa_x, d_sa_y, *sa_, c.sa);
      for (std::size_t i = 0; i < dx_sem.size(); ++i) dx_sem.data[i] += dxs.data[i];
      for (std::size_t i = 0; i < dy_sem.size(); ++i) dy_sem.data[i] += dys.data[i];
    } else if (sa_) {
      auto [dxs, dys] = sa_backward(dxp, dyp, *sa_, c.sa);
      dx_sem = std::move(dxs);
      dy_sem = std::move(dys);
    } else {
      dx_sem = fa_backward(dxp, *fa_, c.fa_x);
      dy_sem = fa_backward(dyp, fa_y_ ? *fa_y_ : *fa_, c.fa_y);
    }
    afe_backward(dx_sem, afe_, c.afe_x);
    afe_backward(dy_sem, afe_, c.afe_y);
  }

  void visit_params(const ParamVisitor<T>& f) {
    afe_.visit(f);
    if (sa_) sa_->visit(f);
    if (fa_) fa_->visit(f);
    if (fa_y_) fa_y_->visit(f);
    if (rfm_) rfm_->visit(f);
    head_.visit(f);
  }

  std::size_t param_count() {
    std::size_t n = 0;
    visit_params([&](const ParamRef<T>& p) { n += p.value->size(); });
    return n;
  }

  void zero_grads() {
    visit_params([](const ParamRef<T>& p) {
      std::fill(p.grad->begin(), p.grad->end(), T(0));
    });
  }

  std::vector<std::vector<T>> snapshot() {
    std::vector<std::vector<T>> s;
    visit_params([&](const ParamRef<T>& p) { s.push_back(*p.value); });
    return s;
  }

  void restore(const std::vector<std::vector<T>>& s) {
    std::size_t i = 0;
    visit_params([&](const ParamRef<T>& p) { *p.value = s[i++]; });
  }

  // Exposed for the attention-map export and the module-level tests.
  const SaCache<T>* sa_cache(const ModelCache<T>& c) const { return sa_ ? &c.sa : nullptr; }
  bool has_sa() const { return sa_.has_value(); }
  bool has_rfm() const { return rfm_.has_value(); }

 private:
  RunConfig cfg_;
  AfeParams<T> afe_;
  std::optional<SaParams<T>> sa_;
  std::optional<FaParams<T>> fa_;
  std::optional<FaParams<T>> fa_y_;  // only when fa_tied = false
  std::optional<RfmParams<T>> rfm_;
  HeadParams<T> head_;
};

// -----------------------------------------------------------------------------
// cross-entropy on the head's probability output

template <typename T>
T cross_entropy(const std::vector<T>& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size()))
    throw ArgumentError("cross_entropy: label out of range");
  const T p = std::max(probs[static_cast<std::size_t>(label)], T(1e-12));
  return -std::log(p);
}

template <typename T>
std::vector<T> cross_entropy_logit_grad(const std::vector<T>& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size()))
    throw ArgumentError("cross_entropy: label out of range");
  std::vector<T> g = probs;
  g[static_cast<std::size_t>(label)] -= T(1);
  return g;
}

}  // namespace trisim
