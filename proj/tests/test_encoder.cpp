#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "test_util.hpp"
#include "trisim/encoder.hpp"
#include "trisim/ops.hpp"

using namespace trisim;

TEST_CASE("pad_to pads, truncates, and keeps exact lengths") {
  TokenSequence seq{{5, 6, 7}};
  auto padded = pad_to(seq, 5);
  CHECK(padded.ids == std::vector<int>{5, 6, 7, 0, 0});
  CHECK(padded.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0});

  TokenSequence longer{{1, 2, 3, 4, 5, 6, 7}};
  auto cut = pad_to(longer, 5);
  CHECK(cut.ids == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(cut.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1});

  TokenSequence exact{{1, 2, 3, 4, 5}};
  auto same = pad_to(exact, 5);
  CHECK(same.ids == exact.ids);

  CHECK_THROWS_AS(pad_to(seq, 0), ArgumentError);
}

TEST_CASE("padding positions are zero rows in every block") {
  SynthEncoder<float> enc(20, 8, 4, 42);
  auto stack = enc.encode(pad_to(TokenSequence{{3, 4}}, 6));
  REQUIRE(stack.size() == 4);
  for (const auto& block : stack)
    for (int i = 2; i < 6; ++i)
      for (int k = 0; k < 8; ++k) CHECK(block.at(i, k) == 0.0f);
}

TEST_CASE("synth encoding is deterministic") {
  SynthEncoder<float> a(20, 8, 3, 7);
  SynthEncoder<float> b(20, 8, 3, 7);
  auto sa = a.encode(pad_to(TokenSequence{{1, 5, 9}}, 4));
  auto sb = b.encode(pad_to(TokenSequence{{1, 5, 9}}, 4));
  for (std::size_t h = 0; h < sa.size(); ++h) CHECK(sa[h].data == sb[h].data);
}

TEST_CASE("single-token block 1 equals relu(affine(block 0)) by hand") {
  SynthEncoder<double> enc(10, 4, 2, 11);
  auto stack = enc.encode(pad_to(TokenSequence{{7}}, 1));
  REQUIRE(stack.size() == 2);
  // window-3 average over a single position is the position itself
  std::vector<double> block0(stack[0].row(0), stack[0].row(0) + 4);
  auto expected = relu(affine(block0, enc.mix_weight(1), enc.mix_bias(1)));
  for (int k = 0; k < 4; ++k)
    CHECK(stack[1].at(0, k) == doctest::Approx(expected[k]).epsilon(1e-12));
}

TEST_CASE("token id out of range is rejected") {
  SynthEncoder<float> enc(10, 4, 2, 11);
  CHECK_THROWS_AS(enc.encode(pad_to(TokenSequence{{10}}, 2)), ArgumentError);
}

TEST_CASE("block stack round-trip is bit-exact") {
  testutil::TempDir dir("tsb");
  Rng rng(5);
  BlockStack<float> stack;
  for (int h = 0; h < 3; ++h) {
    Matrix<float> m(4, 5);
    for (auto& v : m.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    stack.push_back(std::move(m));
  }
  write_block_stack(dir.file("s.tsb"), stack);
  auto loaded = load_block_stack(dir.file("s.tsb"));
  REQUIRE(loaded.size() == 3);
  for (int h = 0; h < 3; ++h) CHECK(loaded[h].data == stack[h].data);
}

TEST_CASE("a hand-written 1x1x2 file loads to its payload values") {
  testutil::TempDir dir("tsbfix");
  const std::string path = dir.file("fix.tsb");
  std::ofstream os(path, std::ios::binary);
  const unsigned char bytes[] = {
      'T', 'S', 'B', '1',
      1, 0, 0, 0,  // H
      1, 0, 0, 0,  // L
      2, 0, 0, 0,  // D
      0x00, 0x00, 0x80, 0x3F,   // 1.0f
      0x00, 0x00, 0x00, 0x40};  // 2.0f
  os.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
  os.close();
  auto stack = load_block_stack(path);
  REQUIRE(stack.size() == 1);
  CHECK(stack[0].at(0, 0) == 1.0f);
  CHECK(stack[0].at(0, 1) == 2.0f);
}

TEST_CASE("bad magic, truncation, and dim overflow are format errors") {
  testutil::TempDir dir("tsbbad");
  {
    std::ofstream os(dir.file("magic.tsb"), std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(load_block_stack(dir.file("magic.tsb")), FormatError);

  {
    // header says 12x32x768 but the payload is one float short
    std::ofstream os(dir.file("short.tsb"), std::ios::binary);
    os << "TSB1";
    const std::uint32_t dims[3] = {12, 32, 768};
    os.write(reinterpret_cast<const char*>(dims), 12);
    std::vector<float> payload(12u * 32 * 768 - 1, 0.5f);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * 4));
  }
  CHECK_THROWS_AS(load_block_stack(dir.file("short.tsb")), FormatError);

  {
    // the same header with a full payload loads
    std::ofstream os(dir.file("full.tsb"), std::ios::binary);
    os << "TSB1";
    const std::uint32_t dims[3] = {12, 32, 768};
    os.write(reinterpret_cast<const char*>(dims), 12);
    std::vector<float> payload(12u * 32 * 768, 0.5f);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * 4));
  }
  auto full = load_block_stack(dir.file("full.tsb"));
  CHECK(full.size() == 12);
  CHECK(full[0].rows == 32);
  CHECK(full[0].cols == 768);

  {
    std::ofstream os(dir.file("huge.tsb"), std::ios::binary);
    os << "TSB1";
    const std::uint32_t dims[3] = {0xFFFFFFFF, 0xFFFFFFFF, 16};
    os.write(reinterpret_cast<const char*>(dims), 12);
  }
  CHECK_THROWS_AS(load_block_stack(dir.file("huge.tsb")), FormatError);

  {
    // trailing garbage after the declared payload
    std::ofstream os(dir.file("trail.tsb"), std::ios::binary);
    os << "TSB1";
    const std::uint32_t dims[3] = {1, 1, 1};
    os.write(reinterpret_cast<const char*>(dims), 12);
    const float v = 1.0f;
    os.write(reinterpret_cast<const char*>(&v), 4);
    os << "junk";
  }
  CHECK_THROWS_AS(load_block_stack(dir.file("trail.tsb")), FormatError);
}

TEST_CASE("block selection strategies") {
  BlockStack<float> stack;
  for (int h = 0; h < 12; ++h) stack.emplace_back(2, 2, static_cast<float>(h));

  BlockSelection all;
  CHECK(select_blocks(stack, all).size() == 12);
  CHECK(select_blocks(stack, all)[3].data == stack[3].data);

  BlockSelection top{BlockStrategy::top_half, {}};
  auto t = select_blocks(stack, top);
  REQUIRE(t.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(t[i].at(0, 0) == static_cast<float>(6 + i));

  BlockSelection bottom{BlockStrategy::bottom_half, {}};
  auto b = select_blocks(stack, bottom);
  REQUIRE(b.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(b[i].at(0, 0) == static_cast<float>(i));

  BlockSelection spaced{BlockStrategy::spaced_half, {}};
  auto s = select_blocks(stack, spaced);
  REQUIRE(s.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(s[i].at(0, 0) == static_cast<float>(2 * i));

  BlockSelection expl{BlockStrategy::explicit_list, {1, 5, 11}};
  auto e = select_blocks(stack, expl);
  REQUIRE(e.size() == 3);
  CHECK(e[2].at(0, 0) == 11.0f);

  BlockSelection bad{BlockStrategy::explicit_list, {1, 12}};
  CHECK_THROWS_AS(select_blocks(stack, bad), ArgumentError);
  BlockSelection unsorted{BlockStrategy::explicit_list, {5, 1}};
  CHECK_THROWS_AS(select_blocks(stack, unsorted), ArgumentError);
}
