#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "trisim/dataset.hpp"
#include "trisim/model.hpp"

namespace trisim {

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  long t = 0;
};

// Standard bias-corrected Adam update on one flat parameter buffer.
template <typename T>
void adam_step(std::vector<T>& value, const std::vector<T>& grad, AdamState<T>& st, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (st.m.empty()) {
    st.m.assign(value.size(), T(0));
    st.v.assign(value.size(), T(0));
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = beta1 * static_cast<double>(st.m[i]) + (1.0 - beta1) * g;
    const double v = beta2 * static_cast<double>(st.v[i]) + (1.0 - beta2) * g * g;
    st.m[i] = static_cast<T>(m);
    st.v[i] = static_cast<T>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
  }
}

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Model<T>& model, double lr) {
    std::size_t i = 0;
    model.visit_params([&](const ParamRef<T>& p) {
      if (i >= states_.size()) states_.emplace_back();
      adam_step(*p.value, *p.grad, states_[i], lr, beta1_, beta2_, eps_);
      ++i;
    });
  }

 private:
  double beta1_, beta2_, eps_;
  std::vector<AdamState<T>> states_;
};

// ---------------------------------------------------------------------------
// learning-rate decay + early stopping
//
// Patience exhaustion on the validation metric fires one x-decay step; a
// second exhaustion stops the run.

class EarlyStopSchedule {
 public:
  explicit EarlyStopSchedule(int patience) : patience_(patience) {}

  enum class Action { none, decay, stop };

  Action observe(double metric) {
    if (metric > best_) {
      best_ = metric;
      since_improve_ = 0;
      return Action::none;
    }
    ++since_improve_;
    if (since_improve_ >= patience_) {
      since_improve_ = 0;
      if (!decayed_) {
        decayed_ = true;
        return Action::decay;
      }
      return Action::stop;
    }
    return Action::none;
  }

  double best() const { return best_; }

 private:
  int patience_;
  int since_improve_ = 0;
  bool decayed_ = false;
  double best_ = -std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// training, evaluation, latency

struct Metrics {
  double accuracy = 0.0;
  double loss = 0.0;
  double latency_ms_per_pair = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double elapsed_s = 0.0;
};

std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_acc = 0.0;
  int best_epoch = 0;
};

// Epoch loop with seeded shuffling, batch-mean gradients, one Adam step per
// batch, validation after each epoch, and the decay/early-stop schedule. The
// model is left holding the best-validation parameters. `log_stream`, when
// set, receives one JSON object per epoch.
TrainResult train_model(Model<float>& model, const std::vector<EncodedPair<float>>& train_set,
                        const std::vector<EncodedPair<float>>& val_set,
                        const RunConfig::Train& tc, std::ostream* log_stream = nullptr);

Metrics evaluate(const Model<float>& model, const std::vector<EncodedPair<float>>& split);

// Argmax predictions, exposed so accuracy can be recounted independently.
std::vector<int> predict(const Model<float>& model,
                         const std::vector<EncodedPair<float>>& split);

// Median over `reps` timing runs of (total forward wall time / pairs), with a
// warm-up pass excluded. Single-threaded.
double bench_latency_ms(const Model<float>& model,
                        const std::vector<EncodedPair<float>>& split, int reps = 5);

}  // namespace trisim
