#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "uibench/assignment.hpp"
#include "uibench/metrics.hpp"
#include "uibench/text_similarity.hpp"

using namespace uibench;

namespace {

Block blk(std::string text, double x = 0, double y = 0, double w = 10, double h = 10, color::Rgb c = {}) {
  return Block{std::move(text), x, y, w, h, c};
}

std::vector<Block> blocks(std::initializer_list<const char*> texts) {
  std::vector<Block> out;
  for (const char* t : texts) out.push_back(blk(t));
  return out;
}

std::string random_word(std::mt19937& rng) {
  static const std::vector<std::string> words = {"Home", "About", "Contact", "Login", "Sign up", "Pricing", "Blog",
                                                 "home", "about us", "Log in", "Price", "Blogs", "zzz", "Help", "a"};
  return words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
}

}  // namespace

TEST(Assignment, MatchesBruteForceOnRandomMatrices) {
  std::mt19937 rng(23);
  std::uniform_int_distribution<int> dim(0, 6);
  std::uniform_int_distribution<int> level(0, 4);  // coarse levels force ties
  for (int t = 0; t < 500; ++t) {
    const std::size_t r = dim(rng);
    const std::size_t c = dim(rng);
    std::vector<double> w(r * c);
    for (auto& x : w) x = level(rng) / 4.0;
    auto weight = [&](std::size_t i, std::size_t j) { return w[i * c + j]; };
    const Assignment a = max_weight_assignment(r, c, weight);
    EXPECT_NEAR(a.total, oracle::best_assignment(r, c, weight), 1e-9);
    double sum = 0.0;
    std::vector<bool> used(c, false);
    for (std::size_t i = 0; i < r; ++i) {
      if (!a.row_to_col[i]) continue;
      ASSERT_FALSE(used[*a.row_to_col[i]]);
      used[*a.row_to_col[i]] = true;
      sum += weight(i, *a.row_to_col[i]);
    }
    EXPECT_NEAR(sum, a.total, 1e-9);
  }
}

TEST(Assignment, TiesResolveLexicographically) {
  // All-equal weights: identity is the lexicographically smallest optimum.
  const Assignment a = max_weight_assignment(3, 3, [](std::size_t, std::size_t) { return 1.0; });
  ASSERT_EQ(a.row_to_col.size(), 3u);
  EXPECT_EQ(a.row_to_col[0], 0u);
  EXPECT_EQ(a.row_to_col[1], 1u);
  EXPECT_EQ(a.row_to_col[2], 2u);
}

TEST(Assignment, LexicographicAmongOptimaByEnumeration) {
  std::mt19937 rng(29);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_int_distribution<int> level(1, 3);  // strictly positive
  for (int t = 0; t < 300; ++t) {
    const std::size_t r = dim(rng);
    const std::size_t c = dim(rng);
    std::vector<double> w(r * c);
    for (auto& x : w) x = level(rng);
    auto weight = [&](std::size_t i, std::size_t j) { return w[i * c + j]; };
    const double best = oracle::best_assignment(r, c, weight);

    // Enumerate every partial assignment; keep the lexicographically smallest
    // optimal one with "unassigned" encoded as c (after every column).
    std::vector<std::size_t> cur(r), chosen;
    std::vector<bool> used(c, false);
    std::function<void(std::size_t, double)> go = [&](std::size_t i, double total) {
      if (i == r) {
        if (std::abs(total - best) < 1e-9 && (chosen.empty() || cur < chosen)) chosen = cur;
        return;
      }
      for (std::size_t j = 0; j <= c; ++j) {
        if (j < c && used[j]) continue;
        cur[i] = j;
        if (j < c) used[j] = true;
        go(i + 1, total + (j < c ? weight(i, j) : 0.0));
        if (j < c) used[j] = false;
      }
    };
    go(0, 0.0);

    const Assignment a = max_weight_assignment(r, c, weight);
    std::vector<std::size_t> got(r);
    for (std::size_t i = 0; i < r; ++i) got[i] = a.row_to_col[i] ? *a.row_to_col[i] : c;
    EXPECT_NEAR(a.total, best, 1e-9);
    EXPECT_EQ(got, chosen) << "case " << t;
  }
}

TEST(MatchBlocks, PermutationRecovery) {
  const auto ref = blocks({"Home", "About"});
  const auto gen = blocks({"About", "Home"});
  const BlockMatching m = match_blocks(ref, gen);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].ref, 0u);
  EXPECT_EQ(m.pairs[0].gen, 1u);
  EXPECT_EQ(m.pairs[1].ref, 1u);
  EXPECT_EQ(m.pairs[1].gen, 0u);
  EXPECT_DOUBLE_EQ(m.pairs[0].dice, 1.0);
  EXPECT_DOUBLE_EQ(m.pairs[1].dice, 1.0);
}

TEST(MatchBlocks, ThresholdDropsWeakPairs) {
  const BlockMatching m = match_blocks(blocks({"Login"}), blocks({"zzz"}));
  EXPECT_TRUE(m.pairs.empty());
  EXPECT_EQ(m.unmatched_ref, std::vector<std::size_t>{0});
  EXPECT_EQ(m.unmatched_gen, std::vector<std::size_t>{0});
}

TEST(MatchBlocks, EmptyInputs) {
  const BlockMatching m = match_blocks({}, {});
  EXPECT_TRUE(m.pairs.empty());
  EXPECT_DOUBLE_EQ(block_match_score(m, {}, {}), 1.0);
}

TEST(MatchBlocks, EqualsBruteForceOptimum) {
  std::mt19937 rng(31);
  std::uniform_int_distribution<int> n(0, 6);
  for (int t = 0; t < 200; ++t) {
    std::vector<Block> ref, gen;
    for (int i = n(rng); i > 0; --i) ref.push_back(blk(random_word(rng)));
    for (int i = n(rng); i > 0; --i) gen.push_back(blk(random_word(rng)));
    const BlockMatching m = match_blocks(ref, gen);
    const double best = oracle::best_assignment(ref.size(), gen.size(), [&](std::size_t i, std::size_t j) {
      return text::dice(ref[i].text, gen[j].text);
    });
    EXPECT_NEAR(m.objective, best, 1e-9);
    std::vector<bool> gen_used(gen.size(), false), ref_used(ref.size(), false);
    for (const auto& p : m.pairs) {
      EXPECT_GE(p.dice, 0.5);
      EXPECT_FALSE(ref_used[p.ref]);
      EXPECT_FALSE(gen_used[p.gen]);
      ref_used[p.ref] = gen_used[p.gen] = true;
    }
    EXPECT_EQ(m.pairs.size() + m.unmatched_ref.size(), ref.size());
    EXPECT_EQ(m.pairs.size() + m.unmatched_gen.size(), gen.size());
  }
}

TEST(BlockMatchScore, Examples) {
  // Identical sets.
  const auto same = blocks({"abcd", "abcdef"});
  EXPECT_DOUBLE_EQ(block_match_score(match_blocks(same, same), same, same), 1.0);
  // ref sizes {4,6} fully matched, gen has an extra size-10 block.
  auto gen = same;
  gen.push_back(blk("qqqqqqqqqq"));
  EXPECT_NEAR(block_match_score(match_blocks(same, gen), same, gen), 20.0 / 30.0, 1e-12);
  // No matches.
  const auto other = blocks({"zzzz"});
  EXPECT_DOUBLE_EQ(block_match_score(match_blocks(same, other), same, other), 0.0);
}

TEST(ColorScore, Examples) {
  std::vector<Block> ref{blk("Title", 0, 0, 10, 10, {12, 34, 56})};
  EXPECT_DOUBLE_EQ(*color_similarity_score(match_blocks(ref, ref), ref, ref), 1.0);
  std::vector<Block> black{blk("Title", 0, 0, 10, 10, {0, 0, 0})};
  std::vector<Block> white{blk("Title", 0, 0, 10, 10, {255, 255, 255})};
  const double expected = std::max(0.0, 1.0 - oracle::ciede2000(0, 0, 0, 100, 0, 0) / 100.0);
  EXPECT_NEAR(*color_similarity_score(match_blocks(black, white), black, white), expected, 1e-4);
  EXPECT_NEAR(*color_similarity_score(match_blocks(black, white), black, white), 0.0, 1e-4);
  EXPECT_FALSE(color_similarity_score(match_blocks(black, blocks({"zzz"})), black, blocks({"zzz"})));
}

TEST(ColorScore, ReferencePairSimilarity) {
  const double de = color::ciede2000(color::Lab{50, 2.6772, -79.7751}, color::Lab{50, 0, -82.7485});
  EXPECT_NEAR(1.0 - de / 100.0, 0.9796, 1e-4);
}

TEST(PositionScore, Examples) {
  const PageSize page{100, 100};
  std::vector<Block> a{blk("Item", 40, 40, 20, 20)};  // center (0.5, 0.5)
  EXPECT_DOUBLE_EQ(*position_similarity_score(match_blocks(a, a), a, a, page, page), 1.0);

  std::vector<Block> origin{blk("Item", 0, 0, 0, 0)};
  std::vector<Block> corner{blk("Item", 100, 100, 0, 0)};
  EXPECT_NEAR(*position_similarity_score(match_blocks(origin, corner), origin, corner, page, page), 0.0, 1e-12);

  std::vector<Block> top{blk("Item", 40, -10, 20, 20)};  // center (0.5, 0.0)
  EXPECT_NEAR(*position_similarity_score(match_blocks(a, top), a, top, page, page), 1.0 - 0.5 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(1.0 - 0.5 / std::sqrt(2.0), 0.6464, 1e-4);
}

TEST(PositionScore, NormalizesByEachPage) {
  std::vector<Block> ref{blk("Item", 40, 40, 20, 20)};   // (0.5,0.5) of 100x100
  std::vector<Block> gen{blk("Item", 90, 190, 20, 20)};  // (0.5,0.5) of 200x400
  EXPECT_DOUBLE_EQ(*position_similarity_score(match_blocks(ref, gen), ref, gen, {100, 100}, {200, 400}), 1.0);
}

TEST(CompositeScores, AlwaysInUnitInterval) {
  std::mt19937 rng(37);
  std::uniform_int_distribution<int> n(0, 6);
  std::uniform_real_distribution<double> coord(-50, 1500);
  std::uniform_int_distribution<int> ch(0, 255);
  for (int t = 0; t < 300; ++t) {
    std::vector<Block> ref, gen;
    auto make = [&] {
      return blk(random_word(rng), coord(rng), coord(rng), 10, 10,
                 {static_cast<std::uint8_t>(ch(rng)), static_cast<std::uint8_t>(ch(rng)),
                  static_cast<std::uint8_t>(ch(rng))});
    };
    for (int i = n(rng); i > 0; --i) ref.push_back(make());
    for (int i = n(rng); i > 0; --i) gen.push_back(make());
    const auto m = match_blocks(ref, gen);
    const double bm = block_match_score(m, ref, gen);
    EXPECT_GE(bm, 0.0);
    EXPECT_LE(bm, 1.0);
    for (auto v : {text_similarity_score(m), color_similarity_score(m, ref, gen),
                   position_similarity_score(m, ref, gen, {1280, 1400}, {1280, 900})}) {
      if (!v) continue;
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 1.0);
    }
  }
}
