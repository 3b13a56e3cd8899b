#include "trisim/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "json.hpp"

namespace trisim {

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["train_loss"] = log.train_loss;
  j["val_acc"] = log.val_acc;
  j["elapsed_s"] = log.elapsed_s;
  return j.dump();
}

namespace {

// Names the first non-finite parameter for the divergence diagnostic.
std::string first_nonfinite_param(Model<float>& model) {
  std::string name;
  model.visit_params([&](const ParamRef<float>& p) {
    if (!name.empty()) return;
    for (float v : *p.value)
      if (!std::isfinite(v)) {
        name = p.name;
        return;
      }
  });
  return name;
}

void clip_gradients(Model<float>& model, double max_norm) {
  double sq = 0.0;
  model.visit_params([&](const ParamRef<float>& p) {
    for (float g : *p.grad) sq += static_cast<double>(g) * g;
  });
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float scale = static_cast<float>(max_norm / norm);
  model.visit_params([&](const ParamRef<float>& p) {
    for (float& g : *p.grad) g *= scale;
  });
}

}  // namespace

TrainResult train_model(Model<float>& model, const std::vector<EncodedPair<float>>& train_set,
                        const std::vector<EncodedPair<float>>& val_set,
                        const RunConfig::Train& tc, std::ostream* log_stream) {
  if (train_set.empty() || val_set.empty())
    throw ArgumentError("train_model: empty split");
  AdamOptimizer<float> opt(tc.beta1, tc.beta2, tc.eps);
  EarlyStopSchedule schedule(tc.patience);
  TrainResult result;
  double lr = tc.lr;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> best_params = model.snapshot();
  ModelCache<float> cache;
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng shuffle_rng(tc.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      model.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t idx = start; idx < end; ++idx) {
        const auto& ex = train_set[order[idx]];
        const std::vector<float> probs = model.forward(ex.x, ex.y, cache);
        batch_loss += cross_entropy(probs, ex.label);
        std::vector<float> dlogits = cross_entropy_logit_grad(probs, ex.label);
        const float inv = 1.0f / static_cast<float>(end - start);
        for (auto& g : dlogits) g *= inv;
        model.backward(dlogits, cache);
      }
      batch_loss /= static_cast<double>(end - start);
      if (!std::isfinite(batch_loss)) {
        const std::string name = first_nonfinite_param(model);
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           (name.empty() ? std::string(": loss non-finite")
                                         : ": first non-finite parameter: " + name));
      }
      loss_sum += batch_loss * static_cast<double>(end - start);
      if (tc.clip_norm > 0) clip_gradients(model, tc.clip_norm);
      opt.step(model, lr);
    }
    const Metrics val = evaluate(model, val_set);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(train_set.size());
    log.val_acc = val.accuracy;
    log.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (log_stream) (*log_stream) << epoch_log_json(log) << "\n";
    if (val.accuracy > result.best_val_acc || result.best_epoch == 0) {
      result.best_val_acc = val.accuracy;
      result.best_epoch = epoch;
      best_params = model.snapshot();
    }
    const auto action = schedule.observe(val.accuracy);
    if (action == EarlyStopSchedule::Action::decay) {
      lr *= tc.decay;
    } else if (action == EarlyStopSchedule::Action::stop) {
      break;
    }
  }
  model.restore(best_params);
  return result;
}

Metrics evaluate(const Model<float>& model, const std::vector<EncodedPair<float>>& split) {
  if (split.empty()) throw ArgumentError("evaluate: empty split");
  Metrics metrics;
  ModelCache<float> cache;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (const auto& ex : split) {
    const std::vector<float> probs = model.forward(ex.x, ex.y, cache);
    loss_sum += cross_entropy(probs, ex.label);
    const int pred = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == ex.label) ++correct;
  }
  metrics.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  metrics.loss = loss_sum / static_cast<double>(split.size());
  return metrics;
}

std::vector<int> predict(const Model<float>& model,
                         const std::vector<EncodedPair<float>>& split) {
  std::vector<int> preds;
  preds.reserve(split.size());
  ModelCache<float> cache;
  for (const auto& ex : split) {
    const std::vector<float> probs = model.forward(ex.x, ex.y, cache);
    preds.push_back(static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin()));
  }
  return preds;
}

double bench_latency_ms(const Model<float>& model,
                        const std::vector<EncodedPair<float>>& split, int reps) {
  if (split.empty()) throw ArgumentError("bench_latency: empty split");
  if (reps < 1) throw ArgumentError("bench_latency: reps must be >= 1");
  ModelCache<float> cache;
  // warm-up pass, excluded from timing
  for (const auto& ex : split) model.forward(ex.x, ex.y, cache);
  std::vector<double> samples;
  samples.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& ex : split) model.forward(ex.x, ex.y, cache);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    samples.push_back(ms / static_cast<double>(split.size()));
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace trisim
