#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trisim/config.hpp"
#include "trisim/encoder.hpp"

namespace trisim {

struct PairExample {
  TokenSequence x, y;
  int label = 0;
};

struct DatasetSplits {
  std::vector<PairExample> train, val, test;
};

// Synthetic binary paraphrase task. A positive pair is a base sequence plus a
// perturbed copy (synonym-class substitution with probability 0.2, one
// adjacent swap); a negative pair is two independently sampled sequences.
// Labels are balanced 50/50; splits are 80/10/10 and disjoint by construction
// (every pair draws fresh base sequences). Label 0 = match, 1 = not_match.
DatasetSplits gen_synth_dataset(int n_pairs, int vocab, int min_len, int max_len,
                                std::uint64_t seed);

// JSONL persistence: one {"label":..,"x":[..],"y":[..]} object per line in
// train.jsonl / val.jsonl / test.jsonl under `dir`.
void write_dataset(const std::string& dir, const DatasetSplits& splits);
DatasetSplits load_dataset(const std::string& dir);
std::vector<PairExample> load_split(const std::string& path);

// Manifest for EmbeddingFile-backed datasets: CSV rows "path_x,path_y,label".
// Relative paths resolve against the manifest's directory.
struct ManifestRow {
  std::string path_x, path_y;
  int label = 0;
};
std::vector<ManifestRow> load_manifest(const std::string& path);

// A pair materialized as encoder block stacks, ready for the head.
template <typename T>
struct EncodedPair {
  BlockStack<T> x, y;
  int label = 0;
};

// Encode token-pair examples with the synth encoder + block selection.
template <typename T>
std::vector<EncodedPair<T>> encode_examples(const RunConfig& cfg,
                                            const std::vector<PairExample>& examples) {
  SynthEncoder<T> enc(cfg.encoder.vocab, cfg.encoder.d, cfg.encoder.h, cfg.encoder.seed);
  const BlockSelection sel = cfg.block_selection();
  std::vector<EncodedPair<T>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    EncodedPair<T> ep;
    ep.x = select_blocks(enc.encode(pad_to(ex.x, cfg.encoder.l)), sel);
    ep.y = select_blocks(enc.encode(pad_to(ex.y, cfg.encoder.l)), sel);
    ep.label = ex.label;
    out.push_back(std::move(ep));
  }
  return out;
}

// Load stack files referenced by a manifest, validating shared dims against
// the config.
std::vector<EncodedPair<float>> load_encoded_manifest(const RunConfig& cfg,
                                                      const std::string& manifest_path);

// Split loading dispatched on encoder.mode: "synth" reads <dir>/<split>.jsonl
// and encodes; "file" reads <dir>/<split>.csv manifests.
std::vector<EncodedPair<float>> load_encoded_split(const RunConfig& cfg,
                                                   const std::string& data_dir,
                                                   const std::string& split);

}  // namespace trisim
