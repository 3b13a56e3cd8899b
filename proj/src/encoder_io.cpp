#include <cstring>
#include <fstream>

#include "trisim/encoder.hpp"

namespace trisim {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'B', '1'};
// Dimension guard: rejects absurd headers before any allocation.
constexpr std::uint64_t kMaxElems = 1ull << 28;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is, const std::string& path, std::streamoff offset,
                      const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated " + what + " at byte offset " +
                      std::to_string(offset));
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_block_stack(const std::string& path, const BlockStack<float>& stack) {
  if (stack.empty()) throw ArgumentError("write_block_stack: empty stack");
  const int h = static_cast<int>(stack.size());
  const int l = stack[0].rows, d = stack[0].cols;
  for (const auto& m : stack)
    if (m.rows != l || m.cols != d)
      throw ShapeError("write_block_stack: blocks disagree on (L, D)");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(h));
  put_u32(os, static_cast<std::uint32_t>(l));
  put_u32(os, static_cast<std::uint32_t>(d));
  static_assert(sizeof(float) == 4);
  for (const auto& m : stack)
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!os) throw FormatError(path + ": write failed");
}

BlockStack<float> load_block_stack(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0 (expected \"TSB1\")");
  const std::uint32_t h = get_u32(is, path, 4, "header field H");
  const std::uint32_t l = get_u32(is, path, 8, "header field L");
  const std::uint32_t d = get_u32(is, path, 12, "header field D");
  if (h == 0 || l == 0 || d == 0)
    throw FormatError(path + ": zero dimension in header at byte offset 4");
  const std::uint64_t elems = static_cast<std::uint64_t>(h) * l * d;
  if (elems > kMaxElems)
    throw FormatError(path + ": dimension overflow in header at byte offset 4 (" +
                      std::to_string(h) + "x" + std::to_string(l) + "x" + std::to_string(d) +
                      ")");
  BlockStack<float> stack;
  stack.reserve(h);
  std::streamoff offset = 16;
  for (std::uint32_t b = 0; b < h; ++b) {
    Matrix<float> m(static_cast<int>(l), static_cast<int>(d));
    const std::streamsize bytes = static_cast<std::streamsize>(m.data.size() * sizeof(float));
    if (!is.read(reinterpret_cast<char*>(m.data.data()), bytes))
      throw FormatError(path + ": truncated payload at byte offset " +
                        std::to_string(offset + is.gcount()));
    offset += bytes;
    stack.push_back(std::move(m));
  }
  // Trailing bytes mean the header lied about the dims.
  char extra;
  if (is.read(&extra, 1))
    throw FormatError(path + ": trailing bytes after payload at byte offset " +
                      std::to_string(offset));
  return stack;
}

}  // namespace trisim
