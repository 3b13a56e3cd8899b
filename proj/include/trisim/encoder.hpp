#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trisim/common.hpp"
#include "trisim/ops.hpp"
#include "trisim/tensor.hpp"

namespace trisim {

inline constexpr int kPadId = 0;

// Token ids before padding. Ids must be < vocab size; id 0 is the pad token.
struct TokenSequence {
  std::vector<int> ids;
};

// A sequence padded/truncated to a fixed length, with per-position validity.
struct PaddedSequence {
  std::vector<int> ids;          // exactly L entries
  std::vector<std::uint8_t> mask;  // 1 = real token, 0 = padding
};

// Right-pad with the pad id or right-truncate to exactly L.
inline PaddedSequence pad_to(const TokenSequence& seq, int target_len) {
  if (target_len < 1) throw ArgumentError("pad_to: target length must be >= 1");
  PaddedSequence out;
  out.ids.assign(static_cast<std::size_t>(target_len), kPadId);
  out.mask.assign(static_cast<std::size_t>(target_len), 0);
  const int n = std::min<int>(target_len, static_cast<int>(seq.ids.size()));
  for (int i = 0; i < n; ++i) {
    out.ids[i] = seq.ids[i];
    out.mask[i] = 1;
  }
  return out;
}

// One encoded sentence: H matrices of shape L x D.
template <typename T>
using BlockStack = std::vector<Matrix<T>>;

template <typename T>
struct BlockStackPair {
  BlockStack<T> x_blocks, y_blocks;
  std::vector<std::uint8_t> mask_x, mask_y;
};

// -----------------------------------------------------------------------------
// Block-subset selection for the robustness protocol.

enum class BlockStrategy { all, top_half, bottom_half, spaced_half, explicit_list };

struct BlockSelection {
  BlockStrategy strategy = BlockStrategy::all;
  std::vector<int> explicit_indices;  // used only with explicit_list

  std::vector<int> indices(int h) const {
    std::vector<int> out;
    const int half = (h + 1) / 2;
    switch (strategy) {
      case BlockStrategy::all:
        for (int i = 0; i < h; ++i) out.push_back(i);
        break;
      case BlockStrategy::top_half:
        for (int i = h - half; i < h; ++i) out.push_back(i);
        break;
      case BlockStrategy::bottom_half:
        for (int i = 0; i < half; ++i) out.push_back(i);
        break;
      case BlockStrategy::spaced_half:
        for (int i = 0; i < h; i += 2) out.push_back(i);
        break;
      case BlockStrategy::explicit_list:
        out = explicit_indices;
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (out[i] < 0 || out[i] >= h)
            throw ArgumentError("select_blocks: explicit index out of range");
          if (i > 0 && out[i] <= out[i - 1])
            throw ArgumentError("select_blocks: explicit indices must be strictly increasing");
        }
        if (out.empty()) throw ArgumentError("select_blocks: empty selection");
        break;
    }
    return out;
  }
};

template <typename T>
BlockStack<T> select_blocks(const BlockStack<T>& stack, const BlockSelection& sel) {
  const auto idx = sel.indices(static_cast<int>(stack.size()));
  BlockStack<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(stack[static_cast<std::size_t>(i)]);
  return out;
}

// -----------------------------------------------------------------------------
// Deterministic synthetic hierarchical encoder, the desk-scale stand-in for a
// pre-trained Transformer stack. Block 0 is an embedding lookup; each deeper
// block applies an affine map + ReLU to a window-3 local average of the block
// below, so deeper blocks mix wider context. Padding rows stay zero in every
// block. Frozen: these parameters are not trained.

template <typename T>
class SynthEncoder {
 public:
  SynthEncoder(int vocab, int dims, int blocks, std::uint64_t seed)
      : vocab_(vocab), dims_(dims), blocks_(blocks) {
    if (vocab < 2 || dims < 1 || blocks < 1)
      throw ArgumentError("SynthEncoder: need vocab >= 2, dims >= 1, blocks >= 1");
    Rng rng(seed ^ 0x5E5E5E5Eu);
    embedding_ = Matrix<T>(vocab, dims);
    for (auto& x : embedding_.data) x = static_cast<T>(rng.uniform(-1.0, 1.0));
    // Pad embedding row is zero.
    std::fill(embedding_.row(kPadId), embedding_.row(kPadId) + dims, T(0));
    const double s = std::sqrt(3.0 / dims);
    for (int b = 1; b < blocks; ++b) {
      Matrix<T> w(dims, dims);
      for (int i = 0; i < dims; ++i)
        for (int j = 0; j < dims; ++j) {
          T v = static_cast<T>(0.3 * rng.uniform(-s, s));
          if (i == j) v += T(0.8);
          w.at(i, j) = v;
        }
      std::vector<T> bias(dims);
      for (auto& x : bias) x = static_cast<T>(rng.uniform(0.0, 0.1));
      mix_w_.push_back(std::move(w));
      mix_b_.push_back(std::move(bias));
    }
  }

  int vocab() const { return vocab_; }
  int dims() const { return dims_; }
  int blocks() const { return blocks_; }
  const Matrix<T>& embedding() const { return embedding_; }
  const Matrix<T>& mix_weight(int block) const { return mix_w_.at(block - 1); }
  const std::vector<T>& mix_bias(int block) const { return mix_b_.at(block - 1); }

  BlockStack<T> encode(const PaddedSequence& seq) const {
    const int len = static_cast<int>(seq.ids.size());
    BlockStack<T> stack;
    stack.reserve(blocks_);
    Matrix<T> cur(len, dims_);
    for (int i = 0; i < len; ++i) {
      const int id = seq.ids[i];
      if (id < 0 || id >= vocab_) throw ArgumentError("SynthEncoder: token id out of range");
      if (seq.mask[i]) {
        const T* src = embedding_.row(id);
        std::copy(src, src + dims_, cur.row(i));
      }
    }
    stack.push_back(cur);
    for (int b = 1; b < blocks_; ++b) {
      Matrix<T> mixed(len, dims_);
      for (int i = 0; i < len; ++i) {
        const int lo = std::max(0, i - 1), hi = std::min(len - 1, i + 1);
        T* dst = mixed.row(i);
        for (int w = lo; w <= hi; ++w) {
          const T* src = cur.row(w);
          for (int k = 0; k < dims_; ++k) dst[k] += src[k];
        }
        const T inv = T(1) / static_cast<T>(hi - lo + 1);
        for (int k = 0; k < dims_; ++k) dst[k] *= inv;
      }
      Matrix<T> nxt = linear_rows(mixed, mix_w_[b - 1], mix_b_[b - 1]);
      for (auto& x : nxt.data) x = x > T(0) ? x : T(0);
      for (int i = 0; i < len; ++i)
        if (!seq.mask[i]) std::fill(nxt.row(i), nxt.row(i) + dims_, T(0));
      stack.push_back(nxt);
      cur = stack.back();
    }
    return stack;
  }

 private:
  int vocab_, dims_, blocks_;
  Matrix<T> embedding_;
  std::vector<Matrix<T>> mix_w_;
  std::vector<std::vector<T>> mix_b_;
};

// -----------------------------------------------------------------------------
// EmbeddingFile persistence: magic "TSB1", u32 LE H, L, D, then H*L*D float32
// LE values in (h, l, d) row-major order. One file per sentence.

void write_block_stack(const std::string& path, const BlockStack<float>& stack);
BlockStack<float> load_block_stack(const std::string& path);

}  // namespace trisim
