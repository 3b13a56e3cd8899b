#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trisim/encoder.hpp"

namespace trisim {

// Architecture + training selections, loaded from a strict JSON schema
// (unknown keys are errors). Field defaults are applied at parse time.
struct RunConfig {
  struct Encoder {
    std::string mode = "synth";  // synth | file
    int h = 0, l = 0, d = 0, vocab = 0;
    std::uint64_t seed = 0;
  } encoder;

  struct Blocks {
    std::string strategy = "all";  // all | top_half | bottom_half | spaced_half | explicit
    std::vector<int> explicit_list;
    bool adaptive = true;
  } blocks;

  struct Attention {
    bool sa = true;
    std::string fa = "none";  // none | fa1 | fa2 | fa3
    int d_prime = 0;          // default d/2 (min 1)
    bool scale_scores = false;
    bool fa_tied = true;
  } attention;

  struct Fusion {
    std::string mode = "rfm";  // pooling | rfm
    int k = 3;
    std::vector<int> psi_sizes = {1, 3, 5};
    int phi_size = 3;
    std::vector<int> dilations = {1, 2, 3};
    int d_dprime = 16;
  } fusion;

  struct Head {
    int hidden = 64;
    std::string labels = "binary";  // binary | ternary
  } head;

  struct Train {
    int epochs = 15;
    int batch_size = 32;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int patience = 10;
    double decay = 0.1;
    std::uint64_t seed = 1;
    double clip_norm = 0.0;  // 0 = off
  } train;

  int n_labels() const { return head.labels == "ternary" ? 3 : 2; }

  BlockSelection block_selection() const {
    BlockSelection sel;
    if (blocks.strategy == "all") sel.strategy = BlockStrategy::all;
    else if (blocks.strategy == "top_half") sel.strategy = BlockStrategy::top_half;
    else if (blocks.strategy == "bottom_half") sel.strategy = BlockStrategy::bottom_half;
    else if (blocks.strategy == "spaced_half") sel.strategy = BlockStrategy::spaced_half;
    else {
      sel.strategy = BlockStrategy::explicit_list;
      sel.explicit_indices = blocks.explicit_list;
    }
    return sel;
  }

  std::vector<std::string> label_names() const {
    if (head.labels == "ternary") return {"entailment", "neutral", "contradiction"};
    return {"match", "not_match"};
  }
};

// Parse + validate. Throws ConfigError naming the offending key path.
RunConfig parse_config_json(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Canonical JSON echo (sorted keys, stable float formatting) used in
// checkpoints and config dumps.
std::string config_to_json(const RunConfig& cfg);

// True when the two configs agree on every architecture-relevant section
// (encoder, blocks, attention, fusion, head). Training settings may differ.
bool same_architecture(const RunConfig& a, const RunConfig& b);

}  // namespace trisim
