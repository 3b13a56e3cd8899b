#include "trisim/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace trisim {

using nlohmann::json;

namespace {

TokenSequence random_sequence(Rng& rng, int vocab, int min_len, int max_len) {
  const int len = min_len + static_cast<int>(rng.next_below(max_len - min_len + 1));
  TokenSequence seq;
  seq.ids.reserve(len);
  // Token ids 1..V-1; id 0 is reserved for padding.
  for (int i = 0; i < len; ++i)
    seq.ids.push_back(1 + static_cast<int>(rng.next_below(vocab - 1)));
  return seq;
}

// Perturbed copy: synonym-class substitution with probability 0.2 plus one
// adjacent swap. Synonym classes partition ids 1..V-1 into bands.
TokenSequence perturb(const TokenSequence& base, Rng& rng, int vocab) {
  const int group = std::max(2, (vocab - 1) / 10);
  TokenSequence out = base;
  for (auto& t : out.ids) {
    if (rng.next_double() < 0.2) {
      const int cls = (t - 1) / group;
      const int lo = cls * group + 1;
      const int hi = std::min(vocab - 1, lo + group - 1);
      t = lo + static_cast<int>(rng.next_below(hi - lo + 1));
    }
  }
  if (out.ids.size() >= 2) {
    const std::size_t p = rng.next_below(out.ids.size() - 1);
    std::swap(out.ids[p], out.ids[p + 1]);
  }
  return out;
}

}  // namespace

DatasetSplits gen_synth_dataset(int n_pairs, int vocab, int min_len, int max_len,
                                std::uint64_t seed) {
  if (vocab < 4) throw ArgumentError("gen_synth_dataset: vocab must be >= 4");
  if (n_pairs < 10) throw ArgumentError("gen_synth_dataset: need at least 10 pairs");
  if (min_len < 1 || max_len < min_len)
    throw ArgumentError("gen_synth_dataset: bad length range");
  Rng rng(seed);
  std::vector<PairExample> pairs;
  pairs.reserve(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    PairExample ex;
    ex.x = random_sequence(rng, vocab, min_len, max_len);
    if (i % 2 == 0) {
      ex.y = perturb(ex.x, rng, vocab);
      ex.label = 0;  // match
    } else {
      ex.y = random_sequence(rng, vocab, min_len, max_len);
      ex.label = 1;  // not_match
    }
    pairs.push_back(std::move(ex));
  }
  rng.shuffle(pairs);
  const int n_train = (n_pairs * 8) / 10;
  const int n_val = n_pairs / 10;
  DatasetSplits splits;
  splits.train.assign(pairs.begin(), pairs.begin() + n_train);
  splits.val.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_val);
  splits.test.assign(pairs.begin() + n_train + n_val, pairs.end());
  return splits;
}

namespace {

void write_split(const std::string& path, const std::vector<PairExample>& split) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError(path + ": cannot open for writing");
  for (const auto& ex : split) {
    json j;
    j["label"] = ex.label;
    j["x"] = ex.x.ids;
    j["y"] = ex.y.ids;
    os << j.dump() << "\n";
  }
}

}  // namespace

void write_dataset(const std::string& dir, const DatasetSplits& splits) {
  std::filesystem::create_directories(dir);
  write_split(dir + "/train.jsonl", splits.train);
  write_split(dir + "/val.jsonl", splits.val);
  write_split(dir + "/test.jsonl", splits.test);
}

std::vector<PairExample> load_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(path + ": cannot open");
  std::vector<PairExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("label") || !j.contains("x") || !j.contains("y"))
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected {label, x, y} object");
    PairExample ex;
    ex.label = j["label"].get<int>();
    ex.x.ids = j["x"].get<std::vector<int>>();
    ex.y.ids = j["y"].get<std::vector<int>>();
    out.push_back(std::move(ex));
  }
  return out;
}

DatasetSplits load_dataset(const std::string& dir) {
  DatasetSplits splits;
  splits.train = load_split(dir + "/train.jsonl");
  splits.val = load_split(dir + "/val.jsonl");
  splits.test = load_split(dir + "/test.jsonl");
  return splits;
}

std::vector<ManifestRow> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(path + ": cannot open");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestRow row;
    std::string label;
    if (!std::getline(ss, row.path_x, ',') || !std::getline(ss, row.path_y, ',') ||
        !std::getline(ss, label))
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected \"path_x,path_y,label\"");
    try {
      row.label = std::stoi(label);
    } catch (...) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad label \"" + label + "\"");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    row.path_x = resolve(row.path_x);
    row.path_y = resolve(row.path_y);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EncodedPair<float>> load_encoded_manifest(const RunConfig& cfg,
                                                      const std::string& manifest_path) {
  const auto rows = load_manifest(manifest_path);
  const BlockSelection sel = cfg.block_selection();
  std::vector<EncodedPair<float>> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    EncodedPair<float> ep;
    BlockStack<float> sx = load_block_stack(row.path_x);
    BlockStack<float> sy = load_block_stack(row.path_y);
    auto check = [&](const BlockStack<float>& s, const std::string& p) {
      if (static_cast<int>(s.size()) != cfg.encoder.h || s[0].rows != cfg.encoder.l ||
          s[0].cols != cfg.encoder.d)
        throw FormatError(p + ": stack dims " + std::to_string(s.size()) + "x" +
                          std::to_string(s[0].rows) + "x" + std::to_string(s[0].cols) +
                          " disagree with config " + std::to_string(cfg.encoder.h) + "x" +
                          std::to_string(cfg.encoder.l) + "x" + std::to_string(cfg.encoder.d));
    };
    check(sx, row.path_x);
    check(sy, row.path_y);
    if (row.label < 0 || row.label >= cfg.n_labels())
      throw FormatError(manifest_path + ": label " + std::to_string(row.label) +
                        " out of range for " + cfg.head.labels + " labels");
    ep.x = select_blocks(sx, sel);
    ep.y = select_blocks(sy, sel);
    ep.label = row.label;
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<EncodedPair<float>> load_encoded_split(const RunConfig& cfg,
                                                   const std::string& data_dir,
                                                   const std::string& split) {
  if (cfg.encoder.mode == "file")
    return load_encoded_manifest(cfg, data_dir + "/" + split + ".csv");
  return encode_examples<float>(cfg, load_split(data_dir + "/" + split + ".jsonl"));
}

}  // namespace trisim
