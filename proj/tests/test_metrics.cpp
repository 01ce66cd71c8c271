#include <gtest/gtest.h>

#include "support.hpp"

using namespace txray;
using namespace txray::testing;

namespace {

std::map<int, double> random_probs(std::mt19937_64& rng, int support, int universe) {
  std::map<int, double> raw;
  std::uniform_real_distribution<double> u(0.01, 1.0);
  while (static_cast<int>(raw.size()) < support) raw[static_cast<int>(rng() % static_cast<unsigned>(universe))] = u(rng);
  double s = 0;
  for (auto& [f, v] : raw) s += v;
  for (auto& [f, v] : raw) v /= s;
  return raw;
}

}  // namespace

TEST(Hellinger, IdenticalIsZero) {
  const auto p = dist(0, {{1, 0.3}, {4, 0.7}});
  EXPECT_EQ(hellinger(p, p), 0.0);
}

TEST(Hellinger, DisjointIsOne) { EXPECT_EQ(hellinger(dist(0, {{0, 1.0}}), dist(0, {{1, 1.0}})), 1.0); }

TEST(Hellinger, HandDerivedCase) {
  const double h = hellinger(dist(0, {{0, 1.0}}), dist(0, {{0, 0.5}, {1, 0.5}}));
  EXPECT_NEAR(h, 0.541196, 1e-6);
  EXPECT_NEAR(h, hellinger_oracle({{0, 1.0}}, {{0, 0.5}, {1, 0.5}}), 1e-15);
}

TEST(Hellinger, EmptySideIsIllDefined) {
  const auto p = dist(3, {{0, 1.0}});
  const auto empty = dist(3, {});
  EXPECT_THROW(hellinger(p, empty), IllDefinedError);
  EXPECT_THROW(hellinger(empty, p), IllDefinedError);
}

TEST(Hellinger, SymmetricBoundedAndMatchesOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_probs(rng, 1 + static_cast<int>(rng() % 8), 12);
    const auto b = random_probs(rng, 1 + static_cast<int>(rng() % 8), 12);
    const double ab = hellinger(dist(0, a), dist(0, b));
    EXPECT_EQ(ab, hellinger(dist(0, b), dist(0, a)));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, hellinger_oracle(a, b), 1e-12);
    bool overlap = false;
    for (const auto& [f, v] : a) overlap = overlap || b.count(f);
    if (!overlap) {
      EXPECT_EQ(ab, 1.0);
    } else {
      EXPECT_LT(ab, 1.0);
    }
    if (a != b) {
      EXPECT_GT(ab, 0.0);
    }
  }
}

TEST(ClassifyState, FourCases) {
  EXPECT_EQ(classify_state(5, 3), NeuronState::Shared);
  EXPECT_EQ(classify_state(5, 0), NeuronState::Avoided);
  EXPECT_EQ(classify_state(0, 2), NeuronState::Gained);
  EXPECT_EQ(classify_state(0, 0), NeuronState::Never);
}

TEST(ClassifyState, DependsOnlyOnEmptiness) {
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      const auto s = classify_state(a, b);
      EXPECT_EQ(s, classify_state(a ? 1 : 0, b ? 1 : 0));
      EXPECT_EQ(to_string(s), to_string(parse_state(to_string(s))));
    }
  EXPECT_THROW(parse_state("lost"), ParseError);
}

TEST(ActivationMass, SumsRecordsAndConserves) {
  TraceMatrix t;
  t.meta.hidden = 3;
  t.meta.vocab_size = 2;
  for (double a : {0.4, 0.8, 0.3}) t.records.push_back({0, 1, a, {}, {}, {}});
  EXPECT_DOUBLE_EQ(activation_mass(t, 1), 1.5);
  EXPECT_EQ(activation_mass(t, 0), 0.0);
  const auto mp = aggregate(t);
  EXPECT_DOUBLE_EQ(activation_mass(mp, 1), 1.5);
  EXPECT_EQ(activation_mass(mp, 2), 0.0);

  const auto big = random_trace(5, 5000, 16, 30);
  const auto agg = accumulate(big);
  ExactSum by_neuron, by_record;
  for (int n = 0; n < 16; ++n) by_neuron.merge(agg.neuron_mass(n));
  for (const auto& r : big.records) by_record.add(r.activation);
  EXPECT_EQ(by_neuron, by_record);
}

TEST(Compare, KnownLengthsGiveExactStateCounts) {
  // shared: 0,1  avoided: 2,3,4  gained: 5  never: 6,7
  const auto a = stage_with("a", {3, 1, 2, 5, 1, 0, 0, 0});
  const auto b = stage_with("b", {2, 1, 0, 0, 0, 4, 0, 0});
  const auto s = compare(a, b);
  EXPECT_EQ(s.count(NeuronState::Shared), 2u);
  EXPECT_EQ(s.count(NeuronState::Avoided), 3u);
  EXPECT_EQ(s.count(NeuronState::Gained), 1u);
  EXPECT_EQ(s.count(NeuronState::Never), 2u);
  std::size_t total = 0;
  for (const auto& [st, c] : s.counts) total += c;
  EXPECT_EQ(total, 8u);
  for (const auto& n : s.neurons) EXPECT_EQ(n.distance.has_value(), n.state == NeuronState::Shared);
  EXPECT_DOUBLE_EQ(s.mean_shared_length_a, 2.0);
  EXPECT_DOUBLE_EQ(s.mean_shared_length_b, 1.5);
  // neuron 0: {0,1,2} uniform vs {0,1} uniform; neuron 1: identical
  const double h0 = hellinger_oracle({{0, 1. / 3}, {1, 1. / 3}, {2, 1. / 3}}, {{0, .5}, {1, .5}});
  EXPECT_NEAR(*s.neurons[0].distance, h0, 1e-12);
  EXPECT_EQ(*s.neurons[1].distance, 0.0);
  EXPECT_NEAR(s.mean_distance, h0 / 2, 1e-12);
}

TEST(Compare, SelfComparisonHasNoChange) {
  const auto x = aggregate(random_trace(3, 2000, 20, 30));
  const auto s = compare(x, x);
  EXPECT_EQ(s.count(NeuronState::Avoided), 0u);
  EXPECT_EQ(s.count(NeuronState::Gained), 0u);
  for (const auto& n : s.neurons) {
    if (n.distance) {
      EXPECT_EQ(*n.distance, 0.0);
    }
  }
  EXPECT_EQ(s.mean_distance, 0.0);
}

TEST(Compare, MismatchedHOrModeIsAContractError) {
  const auto a = stage_with("a", {1, 1});
  const auto b = stage_with("b", {1, 1, 1});
  try {
    compare(a, b);
    FAIL();
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("h=2"), std::string::npos);
    EXPECT_NE(msg.find("h=3"), std::string::npos);
  }
  auto c = stage_with("c", {1, 1});
  c.meta.mode = MagnitudeMode::Raw;
  EXPECT_THROW(compare(a, c), ContractError);
}

TEST(TagMatch, CorpusFrequenciesAndL1) {
  TagAnnotation ann;
  ann.tags = {{"DT", "NN", "VBZ"}};
  TraceMatrix t;
  t.meta.hidden = 2;
  t.meta.vocab_size = 3;
  t.records.push_back({1, 0, 0.7, {}, {}, std::string("NN")});
  t.records.push_back({1, 1, 0.2, {}, {}, std::string("NN")});
  const auto m = tag_frequency_match(ann, t);
  ASSERT_EQ(m.rows.size(), 3u);
  for (const auto& r : m.rows) EXPECT_DOUBLE_EQ(r.corpus, 1.0 / 3.0);
  EXPECT_EQ(m.rows[1].tag, "NN");
  EXPECT_EQ(m.rows[1].activation, 1.0);
  EXPECT_NEAR(m.l1, 4.0 / 3.0, 1e-15);
}

TEST(TagMatch, IdenticalDistributionsGiveZero) {
  TagAnnotation ann;
  ann.tags = {{"DT", "NN"}};
  TraceMatrix t;
  t.meta.hidden = 1;
  t.meta.vocab_size = 2;
  t.records.push_back({0, 0, 0.5, {}, {}, std::string("DT")});
  t.records.push_back({1, 0, 0.5, {}, {}, std::string("NN")});
  EXPECT_EQ(tag_frequency_match(ann, t).l1, 0.0);
  t.records[0].tag.reset();
  t.records[1].tag.reset();
  EXPECT_THROW(tag_frequency_match(ann, t), DataError);
}

TEST(LengthShift, DirectionsAndSharedMeans) {
  EXPECT_EQ(length_direction(10, 15), LengthDirection::Longer);
  EXPECT_EQ(length_direction(10, 10), LengthDirection::Unchanged);
  EXPECT_EQ(length_direction(10, 4), LengthDirection::Shorter);
  const auto s = length_shift(stage_with("a", {10, 10, 6, 0}), stage_with("b", {15, 10, 2, 3}));
  EXPECT_EQ(s.longer, 2u);  // 10->15 and 0->3
  EXPECT_EQ(s.unchanged, 1u);
  EXPECT_EQ(s.shorter, 1u);
  EXPECT_DOUBLE_EQ(s.mean_shared_length_a, 26.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.mean_shared_length_b, 27.0 / 3.0);
}

TEST(Gini, ClosedFormsAndOracle) {
  EXPECT_DOUBLE_EQ(gini({0, 0, 0, 5}), 0.75);
  EXPECT_DOUBLE_EQ(gini({2, 2, 2, 2}), 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> xs(1 + rng() % 64);
    for (auto& x : xs) x = u(rng);
    const double g = gini(xs);
    EXPECT_NEAR(g, gini_oracle(xs), 1e-12);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
  }
}

TEST(Gini, AllZeroIsZeroWithWarning) {
  std::vector<std::string> warnings;
  ScopedWarningSink guard([&](const std::string& m) { warnings.push_back(m); });
  EXPECT_EQ(gini({0, 0, 0}), 0.0);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(MassCurve, SortedNonIncreasingWithStableTies) {
  const auto c = mass_curve({1.0, 5.0, 1.0, 3.0}, "s");
  ASSERT_EQ(c.points.size(), 4u);
  EXPECT_EQ(c.points[0].neuron, 1);
  EXPECT_EQ(c.points[1].neuron, 3);
  EXPECT_EQ(c.points[2].neuron, 0);
  EXPECT_EQ(c.points[3].neuron, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.points[i].rank, i);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(c.points[i - 1].mass, c.points[i].mass);
  EXPECT_NEAR(c.gini, gini_oracle({1.0, 5.0, 1.0, 3.0}), 1e-12);
}
