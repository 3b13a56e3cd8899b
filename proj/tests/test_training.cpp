#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "test_util.hpp"
#include "trisim/train.hpp"

using namespace trisim;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.encoder = {"synth", 2, 6, 8, 12, 5};
  cfg.attention.sa = true;
  cfg.attention.fa = "fa3";
  cfg.attention.d_prime = 4;
  cfg.fusion.mode = "rfm";
  cfg.fusion.k = 2;
  cfg.fusion.psi_sizes = {1, 3};
  cfg.fusion.phi_size = 3;
  cfg.fusion.dilations = {1, 2};
  cfg.fusion.d_dprime = 4;
  cfg.head.hidden = 16;
  cfg.head.labels = "binary";
  cfg.train.epochs = 15;
  cfg.train.batch_size = 8;
  cfg.train.lr = 0.01;  // small budget, tiny model
  cfg.train.seed = 3;
  return cfg;
}

// Trivially separable task: matches are identical low-token pairs, mismatches
// pair low tokens with high tokens.
std::vector<PairExample> separable_pairs(int n, Rng& rng) {
  std::vector<PairExample> out;
  for (int i = 0; i < n; ++i) {
    PairExample ex;
    TokenSequence seq;
    for (int t = 0; t < 5; ++t)
      seq.ids.push_back(1 + static_cast<int>(rng.next_below(5)));
    ex.x = seq;
    if (i % 2 == 0) {
      ex.y = seq;
      ex.label = 0;
    } else {
      for (int t = 0; t < 5; ++t)
        ex.y.ids.push_back(6 + static_cast<int>(rng.next_below(5)));
      ex.label = 1;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("cross entropy basics") {
  CHECK(cross_entropy<double>({0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy<double>({0.0, 1.0}, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(cross_entropy<double>({0.5, 0.5}, 2), ArgumentError);
  auto g = cross_entropy_logit_grad<double>({0.2, 0.3, 0.5}, 1);
  CHECK(g[0] == doctest::Approx(0.2));
  CHECK(g[1] == doctest::Approx(-0.7));
  CHECK(g[2] == doctest::Approx(0.5));
}

TEST_CASE("cross entropy logit gradient matches finite differences") {
  std::vector<double> logits{0.3, -0.8, 1.1};
  const int label = 1;
  auto loss_of = [&](const std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double v : z) sum += std::exp(v - mx);
    return -(z[label] - mx - std::log(sum));
  };
  std::vector<double> probs(3);
  {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double v : logits) sum += std::exp(v - mx);
    for (int i = 0; i < 3; ++i) probs[i] = std::exp(logits[i] - mx) / sum;
  }
  auto analytic = cross_entropy_logit_grad(probs, label);
  for (int i = 0; i < 3; ++i) {
    auto zp = logits, zm = logits;
    zp[i] += 1e-6;
    zm[i] -= 1e-6;
    const double numeric = (loss_of(zp) - loss_of(zm)) / 2e-6;
    CHECK(analytic[i] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("adam: zero gradients keep values, t increments") {
  std::vector<double> value{1.0, -2.0};
  AdamState<double> st;
  adam_step<double>(value, {0.0, 0.0}, st, 0.1);
  CHECK(value == std::vector<double>{1.0, -2.0});
  CHECK(st.t == 1);
}

TEST_CASE("adam first step matches the hand-computed scalar update") {
  std::vector<double> value{1.0};
  AdamState<double> st;
  const double g = 0.5, lr = 0.1, eps = 1e-8;
  adam_step<double>(value, {g}, st, lr, 0.9, 0.999, eps);
  // m_hat = g, v_hat = g^2 after bias correction, so the step is
  // -lr * g / (|g| + eps)
  const double want = 1.0 - lr * g / (std::abs(g) + eps);
  CHECK(value[0] == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("adam is deterministic across runs") {
  Rng rng(7);
  std::vector<double> g1(8), g2(8);
  for (int step = 0; step < 5; ++step)
    for (auto& v : g1) v = rng.uniform(-1.0, 1.0);
  std::vector<double> a(8, 0.5), b(8, 0.5);
  AdamState<double> sa, sb;
  for (int step = 0; step < 5; ++step) {
    Rng r2(11 + step);
    std::vector<double> g(8);
    for (auto& v : g) v = r2.uniform(-1.0, 1.0);
    adam_step(a, g, sa, 0.01);
    adam_step(b, g, sb, 0.01);
  }
  CHECK(a == b);
}

TEST_CASE("early-stop schedule: constant metric decays at 11 and stops at 21") {
  EarlyStopSchedule sched(10);
  int decay_at = 0, stop_at = 0;
  for (int epoch = 1; epoch <= 30; ++epoch) {
    const auto action = sched.observe(0.5);
    if (action == EarlyStopSchedule::Action::decay && decay_at == 0) decay_at = epoch;
    if (action == EarlyStopSchedule::Action::stop) {
      stop_at = epoch;
      break;
    }
  }
  CHECK(decay_at == 11);
  CHECK(stop_at == 21);
}

TEST_CASE("early-stop schedule resets on improvement and decays once") {
  EarlyStopSchedule sched(2);
  CHECK(sched.observe(0.5) == EarlyStopSchedule::Action::none);
  CHECK(sched.observe(0.6) == EarlyStopSchedule::Action::none);  // improved
  CHECK(sched.observe(0.6) == EarlyStopSchedule::Action::none);
  CHECK(sched.observe(0.6) == EarlyStopSchedule::Action::decay);
  CHECK(sched.observe(0.7) == EarlyStopSchedule::Action::none);  // improved again
  CHECK(sched.observe(0.7) == EarlyStopSchedule::Action::none);
  CHECK(sched.observe(0.7) == EarlyStopSchedule::Action::stop);
}

TEST_CASE("synthetic dataset: determinism, balance, split sizes") {
  auto a = gen_synth_dataset(2000, 50, 6, 12, 7);
  auto b = gen_synth_dataset(2000, 50, 6, 12, 7);
  CHECK(a.train.size() == 1600);
  CHECK(a.val.size() == 200);
  CHECK(a.test.size() == 200);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].x.ids == b.train[i].x.ids);
    CHECK(a.train[i].y.ids == b.train[i].y.ids);
    CHECK(a.train[i].label == b.train[i].label);
  }
  int histogram[2] = {0, 0};
  for (const auto* split : {&a.train, &a.val, &a.test})
    for (const auto& ex : *split) ++histogram[ex.label];
  CHECK(std::abs(histogram[0] - 1000) <= 1);
  CHECK(std::abs(histogram[1] - 1000) <= 1);
  CHECK_THROWS_AS(gen_synth_dataset(9, 50, 6, 12, 7), ArgumentError);
  CHECK_THROWS_AS(gen_synth_dataset(100, 3, 6, 12, 7), ArgumentError);
}

TEST_CASE("dataset files round-trip") {
  testutil::TempDir dir("ds");
  auto splits = gen_synth_dataset(50, 20, 4, 8, 3);
  write_dataset(dir.str(), splits);
  auto loaded = load_dataset(dir.str());
  REQUIRE(loaded.test.size() == splits.test.size());
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    CHECK(loaded.test[i].x.ids == splits.test[i].x.ids);
    CHECK(loaded.test[i].label == splits.test[i].label);
  }
}

// The task-difficulty oracle: averaged embedding vectors and a cosine
// threshold of 0.5 should already separate most pairs, confirming the task is
// learnable before any model training.
TEST_CASE("cosine-threshold oracle reaches 0.8 accuracy on the synthetic task") {
  auto splits = gen_synth_dataset(2000, 50, 6, 12, 7);
  SynthEncoder<double> enc(50, 16, 1, 1);
  auto embed_mean = [&](const TokenSequence& seq) {
    std::vector<double> mean(16, 0.0);
    for (int id : seq.ids)
      for (int k = 0; k < 16; ++k) mean[k] += enc.embedding().at(id, k);
    for (auto& v : mean) v /= static_cast<double>(seq.ids.size());
    return mean;
  };
  int correct = 0, total = 0;
  for (const auto* split : {&splits.train, &splits.val, &splits.test}) {
    for (const auto& ex : *split) {
      auto ux = embed_mean(ex.x);
      auto uy = embed_mean(ex.y);
      double dot = 0, nx = 0, ny = 0;
      for (int k = 0; k < 16; ++k) {
        dot += ux[k] * uy[k];
        nx += ux[k] * ux[k];
        ny += uy[k] * uy[k];
      }
      const double cosine = dot / std::max(1e-12, std::sqrt(nx) * std::sqrt(ny));
      const int pred = cosine >= 0.5 ? 0 : 1;
      correct += pred == ex.label;
      ++total;
    }
  }
  const double acc = static_cast<double>(correct) / total;
  INFO("cosine oracle accuracy ", acc);
  CHECK(acc >= 0.8);
}

TEST_CASE("training memorizes a trivially separable task") {
  RunConfig cfg = small_config();
  Rng rng(9);
  auto train_pairs = separable_pairs(40, rng);
  auto val_pairs = separable_pairs(8, rng);
  auto train_set = encode_examples<float>(cfg, train_pairs);
  auto val_set = encode_examples<float>(cfg, val_pairs);
  Model<float> model(cfg);
  auto result = train_model(model, train_set, val_set, cfg.train);
  CHECK(result.best_val_acc == doctest::Approx(1.0));
  // evaluating the memorized training split
  CHECK(evaluate(model, train_set).accuracy == doctest::Approx(1.0));
}

TEST_CASE("random-init models score near chance on a balanced split") {
  RunConfig cfg = small_config();
  auto splits = gen_synth_dataset(200, 12, 4, 8, 11);
  auto all = splits.train;
  auto test_set = encode_examples<float>(cfg, all);
  double mean = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.train.seed = seed;
    Model<float> model(cfg);
    mean += evaluate(model, test_set).accuracy;
  }
  mean /= 5.0;
  INFO("mean random-init accuracy ", mean);
  CHECK(mean > 0.4);
  CHECK(mean < 0.6);
}

TEST_CASE("evaluate agrees with an independent prediction recount") {
  RunConfig cfg = small_config();
  auto splits = gen_synth_dataset(60, 12, 4, 8, 13);
  auto test_set = encode_examples<float>(cfg, splits.train);
  Model<float> model(cfg);
  auto metrics = evaluate(model, test_set);
  auto preds = predict(model, test_set);
  REQUIRE(preds.size() == test_set.size());
  int confusion[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < preds.size(); ++i)
    ++confusion[test_set[i].label][preds[i]];
  const double recount =
      static_cast<double>(confusion[0][0] + confusion[1][1]) / preds.size();
  CHECK(metrics.accuracy == doctest::Approx(recount));
}

TEST_CASE("training is reproducible for a fixed seed") {
  RunConfig cfg = small_config();
  cfg.train.epochs = 3;
  auto splits = gen_synth_dataset(40, 12, 4, 8, 17);
  auto train_set = encode_examples<float>(cfg, splits.train);
  auto val_set = encode_examples<float>(cfg, splits.val);
  Model<float> m1(cfg), m2(cfg);
  auto r1 = train_model(m1, train_set, val_set, cfg.train);
  auto r2 = train_model(m2, train_set, val_set, cfg.train);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    CHECK(r1.log[i].val_acc == r2.log[i].val_acc);
  }
  auto s1 = m1.snapshot();
  auto s2 = m2.snapshot();
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
}

TEST_CASE("latency bench rejects an empty split and normalizes by size") {
  RunConfig cfg = small_config();
  Model<float> model(cfg);
  std::vector<EncodedPair<float>> empty;
  CHECK_THROWS_AS(bench_latency_ms(model, empty, 3), ArgumentError);

  auto splits = gen_synth_dataset(64, 12, 4, 8, 19);
  auto base = encode_examples<float>(cfg, splits.train);
  auto doubled = base;
  doubled.insert(doubled.end(), base.begin(), base.end());
  const double ms1 = bench_latency_ms(model, base, 5);
  const double ms2 = bench_latency_ms(model, doubled, 5);
  INFO("ms/pair ", ms1, " vs doubled ", ms2);
  CHECK(ms2 / ms1 > 0.8);
  CHECK(ms2 / ms1 < 1.25);
}
