#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ig/errors.hpp"
#include "ig/rng.hpp"
#include "ig/text_analysis.hpp"

using namespace ig;
using namespace ig::text;

namespace {
const LexiconTagger kTagger;
}

TEST_CASE("verb-object extraction on the canonical sentence") {
  const auto t = tokenize_and_tag("I want something to support my back", kTagger);
  // tokens: i want something to support my back + sentinel
  REQUIRE(t.tokens.size() == 8);
  CHECK(t.has_sentinel);
  CHECK(t.tokens.back() == kSentinelToken);
  CHECK(t.verb_positions == std::vector<char>{0, 1, 0, 0, 1, 0, 0, 0});
  REQUIRE(t.pairs.size() == 2);
  CHECK(t.pairs[0] == std::pair<int, int>{1, 2});  // want -> something
  CHECK(t.pairs[1] == std::pair<int, int>{4, 6});  // support -> back
}

TEST_CASE("six-token sentence with verbs at positions 2 and 4") {
  const auto t = tokenize_and_tag("I want to eat something good", kTagger);
  REQUIRE(t.tokens.size() == 7);  // 6 + sentinel
  const std::vector<char> expected = {0, 1, 0, 1, 0, 0, 0};
  CHECK(t.verb_positions == expected);
  // "want" is separated from any noun by the verb "eat": no pair for it
  REQUIRE(t.pairs.size() == 1);
  CHECK(t.pairs[0] == std::pair<int, int>{3, 4});  // eat -> something
}

TEST_CASE("verb with no object keeps its V_pos flag") {
  const auto t = tokenize_and_tag("I want to relax", kTagger);
  CHECK(t.verb_positions[1] == 1);  // want
  CHECK(t.verb_positions[3] == 1);  // relax
  CHECK(t.pairs.empty());
}

TEST_CASE("template stems are verbs, 'to' is not") {
  for (const std::string stem : {"want", "need", "intend", "aim"}) {
    const auto t = tokenize_and_tag("I " + stem + " to sleep", kTagger);
    CHECK(t.verb_positions[1] == 1);
    CHECK(t.verb_positions[2] == 0);  // to
  }
}

TEST_CASE("tagger is deterministic") {
  const std::string s = "I intend to draw diagrams during the lesson";
  const auto a = tokenize_and_tag(s, kTagger);
  const auto b = tokenize_and_tag(s, kTagger);
  CHECK(a.tokens == b.tokens);
  CHECK(a.verb_positions == b.verb_positions);
  CHECK(a.pairs == b.pairs);
}

TEST_CASE("tokenize splits punctuation and lowercases") {
  const auto toks = tokenize("I Want, to SIT.");
  CHECK(toks == std::vector<std::string>{"i", "want", ",", "to", "sit", "."});
}

TEST_CASE("empty text rejected") {
  CHECK_THROWS_AS(tokenize_and_tag("", kTagger), ValidationError);
  CHECK_THROWS_AS(tokenize_and_tag("   ", kTagger), ValidationError);
}

TEST_CASE("verb_distribution matches the closed form for 010100") {
  const std::vector<char> v_pos = {0, 1, 0, 1, 0, 0};
  const auto d = verb_distribution(v_pos);
  const double e = std::exp(1.0);
  const double verb_mass = e / (2 * e + 4);
  const double other_mass = 1 / (2 * e + 4);
  REQUIRE(d.size() == 6);
  CHECK(std::abs(d[1] - verb_mass) < 1e-9);
  CHECK(std::abs(d[3] - verb_mass) < 1e-9);
  for (int i : {0, 2, 4, 5}) CHECK(std::abs(d[i] - other_mass) < 1e-9);
  CHECK(std::abs(verb_mass - 0.2880) < 1e-4);
  CHECK(std::abs(other_mass - 0.1060) < 1e-4);
}

TEST_CASE("verb_distribution uniform when no verbs") {
  const auto d = verb_distribution({0, 0, 0, 0});
  for (double x : d) CHECK(x == doctest::Approx(0.25));
}

TEST_CASE("verb_distribution with padding mask") {
  const auto d = verb_distribution({1, 0, 0, 0}, {1, 0, 0, 0});
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(d[1] == 0.0);
  CHECK(d[2] == 0.0);
}

TEST_CASE("verb_distribution rejects all-masked input") {
  CHECK_THROWS_AS(verb_distribution({1, 0}, {0, 0}), ValidationError);
}

TEST_CASE("verb_distribution sums to one and is permutation-equivariant") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(10));
    std::vector<char> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform() < 0.4 ? 1 : 0;
    const auto d = verb_distribution(v);
    double total = 0;
    for (double x : d) total += x;
    CHECK(std::abs(total - 1.0) < 1e-9);

    // rotate and compare
    std::vector<char> rotated(v.begin() + 1, v.end());
    rotated.push_back(v[0]);
    const auto dr = verb_distribution(rotated);
    for (int i = 0; i < n; ++i) {
      CHECK(dr[static_cast<std::size_t>(i)] ==
            doctest::Approx(d[static_cast<std::size_t>((i + 1) % n)]).epsilon(1e-12));
    }
  }
}
