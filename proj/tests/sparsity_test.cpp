#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pit/error.hpp"
#include "pit/sparsity.hpp"
#include "test_util.hpp"

namespace pit {
namespace {

TEST(FromMask, IdentityBlocks) {
  auto mask = DenseTensor<float>::matrix({4, 4});
  for (int i = 0; i < 4; ++i) mask.at(i, i) = 1.0f;
  const auto ann = from_mask(mask, Dims2{2, 2});
  EXPECT_EQ(ann.grid(), (Dims2{2, 2}));
  EXPECT_TRUE(ann.test(0, 0));
  EXPECT_FALSE(ann.test(0, 1));
  EXPECT_FALSE(ann.test(1, 0));
  EXPECT_TRUE(ann.test(1, 1));
  EXPECT_DOUBLE_EQ(ann.sparsity_ratio(), 0.5);
}

TEST(FromMask, AllZero) {
  const auto ann = from_mask(DenseTensor<float>::matrix({8, 8}), Dims2{1, 1});
  EXPECT_EQ(ann.block_count(), 64);
  EXPECT_EQ(ann.nonzero_blocks(), 0);
  EXPECT_DOUBLE_EQ(ann.sparsity_ratio(), 1.0);
}

TEST(FromMask, NonDividingGranularityPads) {
  auto mask = DenseTensor<double>::matrix({5, 3});
  mask.at(4, 2) = -2.0;
  const auto ann = from_mask(mask, Dims2{2, 2});
  EXPECT_EQ(ann.grid(), (Dims2{3, 2}));
  EXPECT_EQ(ann.nonzero_blocks(), 1);
  EXPECT_TRUE(ann.test(2, 1));
}

TEST(FromMask, Errors) {
  DenseTensor<float> rank3({2, 2, 2});
  const std::int64_t g2[2] = {1, 1};
  const std::int64_t g1[1] = {1};
  EXPECT_THROW(from_mask(rank3, std::span<const std::int64_t>(g2, 2)), ShapeError);
  EXPECT_THROW(from_mask(DenseTensor<float>::matrix({2, 2}), std::span<const std::int64_t>(g1, 1)),
               ShapeError);
  EXPECT_THROW(from_mask(DenseTensor<float>::matrix({2, 2}), Dims2{0, 1}), std::invalid_argument);
}

TEST(FromMask, RandomMaskRatio) {
  // Binomial over 2048 * 4096 blocks: sd of the ratio is about 1.5e-4.
  const auto expected = random_annotation({4096, 4096}, {2, 1}, 0.95, 11);
  const auto mask = expected.materialize();
  const auto ann = from_mask(mask, Dims2{2, 1});
  EXPECT_EQ(ann, expected);
  EXPECT_NEAR(ann.sparsity_ratio(), 0.95, 0.005);
}

TEST(RaggedLengths, Rows) {
  const std::vector<std::int64_t> lengths{2, 4};
  const auto ann = from_ragged_lengths(lengths, {2, 4});
  std::ostringstream out;
  write_annotation(out, ann);
  EXPECT_EQ(out.str(), "shape 2 4\ngranularity 1 1\n1100\n1111\n");
}

TEST(RaggedLengths, EmptySequence) {
  const std::vector<std::int64_t> lengths{0};
  const auto ann = from_ragged_lengths(lengths, {1, 8});
  EXPECT_EQ(ann.nonzero_blocks(), 0);
}

TEST(RaggedLengths, RatioCountsBits) {
  const std::vector<std::int64_t> lengths{3, 1, 4};
  const auto ann = from_ragged_lengths(lengths, {3, 4});
  EXPECT_DOUBLE_EQ(ann.sparsity_ratio(), 1.0 - 8.0 / 12.0);
}

TEST(RaggedLengths, TooLong) {
  const std::vector<std::int64_t> lengths{5};
  EXPECT_THROW(from_ragged_lengths(lengths, {1, 4}), ShapeError);
}

TEST(RandomAnnotation, Extremes) {
  EXPECT_EQ(random_annotation({64, 64}, {2, 2}, 0.0, 1).nonzero_blocks(), 32 * 32);
  EXPECT_EQ(random_annotation({64, 64}, {2, 2}, 1.0, 1).nonzero_blocks(), 0);
  EXPECT_THROW(random_annotation({4, 4}, {1, 1}, 1.5, 1), std::invalid_argument);
}

TEST(RandomAnnotation, DeterministicAndCalibrated) {
  const auto a = random_annotation({4096, 4096}, {2, 1}, 0.95, 7);
  EXPECT_EQ(a, random_annotation({4096, 4096}, {2, 1}, 0.95, 7));
  EXPECT_NE(a, random_annotation({4096, 4096}, {2, 1}, 0.95, 8));
  EXPECT_NEAR(a.sparsity_ratio(), 0.95, 0.005);
}

TEST(Annotation, MaterializeIsIdempotent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Dims2 shape{static_cast<std::int64_t>(rng() % 40 + 1), static_cast<std::int64_t>(rng() % 40 + 1)};
    const Dims2 g{static_cast<std::int64_t>(rng() % 5 + 1), static_cast<std::int64_t>(rng() % 5 + 1)};
    const auto ann = random_annotation(shape, g, 0.6, seed);
    EXPECT_EQ(from_mask(ann.materialize(), g), ann);
  }
}

TEST(Annotation, CoarseningIsBlockwiseOr) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Dims2 shape{static_cast<std::int64_t>(rng() % 64 + 1), static_cast<std::int64_t>(rng() % 64 + 1)};
    const Dims2 g{static_cast<std::int64_t>(rng() % 3 + 1), static_cast<std::int64_t>(rng() % 3 + 1)};
    const std::int64_t a = static_cast<std::int64_t>(rng() % 4 + 1);
    const std::int64_t b = static_cast<std::int64_t>(rng() % 4 + 1);
    const auto fine = random_annotation(shape, g, 0.8, seed);
    const auto coarse = fine.coarsen(a, b);
    EXPECT_EQ(coarse.granularity(), (Dims2{g.rows * a, g.cols * b}));
    // Element-level oracle: re-annotating the fine mask at the coarse granularity.
    EXPECT_EQ(coarse, from_mask(fine.materialize(), coarse.granularity()));
  }
}

TEST(AnnotationFile, RoundTripIsBitExact) {
  const auto ann = random_annotation({37, 19}, {4, 3}, 0.5, 3);
  std::ostringstream out;
  write_annotation(out, ann);
  std::istringstream in(out.str());
  const auto back = read_annotation(in);
  EXPECT_EQ(back, ann);
  std::ostringstream again;
  write_annotation(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(AnnotationFile, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_annotation(in);
    } catch (const ParseError& e) {
      return e.location();
    }
    return 0;
  };
  EXPECT_EQ(line_of("shape 2\n"), 1u);
  EXPECT_EQ(line_of("shape 2 2\ngran 1 1\n"), 2u);
  EXPECT_EQ(line_of("shape 2 2\ngranularity 1 1\n11\n1x\n"), 4u);
  EXPECT_EQ(line_of("shape 2 2\ngranularity 1 1\n11\n"), 4u);
  EXPECT_EQ(line_of("shape 2 2\ngranularity 1 1\n111\n11\n"), 3u);
}

}  // namespace
}  // namespace pit
