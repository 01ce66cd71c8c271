#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace txray;
using namespace txray::testing;

namespace {

struct Fixture {
  Vocabulary vocab;
  Snapshot snap;
  std::vector<TokenSequence> corpus;
};

Fixture make_fixture(int hidden = 16, std::size_t sentences = 12) {
  Fixture fx;
  const std::string text = "the dog runs . a cat sat on the mat . dogs chase cats";
  fx.vocab = build_vocab(std::string_view(text), 1);
  fx.snap.params = init_params(11, static_cast<int>(fx.vocab.size()), 6, hidden);
  fx.snap.stage_id = "fixture";
  fx.snap.vocab = fx.vocab.tokens();
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < sentences; ++i) {
    std::vector<std::string> toks;
    const int len = 2 + static_cast<int>(rng() % 9);
    for (int k = 0; k < len; ++k) toks.push_back(fx.vocab.tokens()[rng() % (fx.vocab.size() - 1)]);
    fx.corpus.push_back(encode(toks, fx.vocab));
  }
  return fx;
}

std::size_t tokens_in(const std::vector<TokenSequence>& c) {
  std::size_t n = 0;
  for (const auto& s : c) n += s.size();
  return n;
}

}  // namespace

TEST(PickMax, TiesGoToLowestIndex) {
  const std::vector<float> h{0.5f, 0.9f, 0.9f};
  const auto m = pick_max(h, MagnitudeMode::Absolute);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->neuron, 1);
  EXPECT_DOUBLE_EQ(m->activation, static_cast<double>(0.9f));
}

TEST(PickMax, AbsoluteModeUsesMagnitude) {
  const std::vector<float> h{-0.95f, 0.4f};
  const auto m = pick_max(h, MagnitudeMode::Absolute);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->neuron, 0);
  EXPECT_DOUBLE_EQ(m->activation, static_cast<double>(0.95f));
}

TEST(PickMax, RawModeUsesSignAndDropsNonPositive) {
  const std::vector<float> h{-0.95f, 0.4f};
  EXPECT_EQ(pick_max(h, MagnitudeMode::Raw)->neuron, 1);
  const std::vector<float> neg{-0.1f, -0.2f};
  EXPECT_FALSE(pick_max(neg, MagnitudeMode::Raw));
}

TEST(PickMax, SkipsMaskedUnits) {
  const std::vector<float> h{0.1f, 0.9f, 0.3f};
  const auto mask = PruneMask::pruning(3, std::vector<int>{1});
  EXPECT_EQ(pick_max(h, MagnitudeMode::Absolute, &mask)->neuron, 2);
}

TEST(RecordTrace, OneRecordPerTokenInCorpusOrder) {
  auto fx = make_fixture();
  const auto t = record_trace(fx.snap, fx.corpus, {});
  ASSERT_EQ(t.records.size(), tokens_in(fx.corpus));
  std::size_t k = 0;
  for (const auto& s : fx.corpus)
    for (auto id : s.ids) EXPECT_EQ(t.records[k++].feature, id);
  EXPECT_EQ(t.meta.hidden, 16);
  EXPECT_EQ(t.meta.stage_id, "fixture");
}

TEST(RecordTrace, HundredTokenCorpusGivesHundredRecords) {
  auto fx = make_fixture();
  std::vector<TokenId> ids;
  for (int i = 0; i < 100; ++i) ids.push_back(static_cast<TokenId>(i % (fx.vocab.size())));
  const std::vector<TokenSequence> corpus{{ids, 0}};
  EXPECT_EQ(record_trace(fx.snap, corpus, {}).records.size(), 100u);
}

TEST(RecordTrace, RerunningTheEncoderReproducesSampledRecords) {
  auto fx = make_fixture();
  const auto t = record_trace(fx.snap, fx.corpus, {});
  std::size_t k = 0;
  for (std::size_t s = 0; s < fx.corpus.size(); ++s) {
    const auto hs = forward_hidden(fx.snap.params, fx.corpus[s].ids);
    for (std::size_t pos = 0; pos < fx.corpus[s].size(); ++pos, ++k) {
      if ((k % 3) != 0) continue;
      Eigen::Index best = 0;
      hs.col(static_cast<Eigen::Index>(pos)).cwiseAbs().maxCoeff(&best);
      EXPECT_EQ(t.records[k].neuron, static_cast<int>(best));
      EXPECT_EQ(t.records[k].activation, static_cast<double>(std::fabs(hs(best, static_cast<Eigen::Index>(pos)))));
    }
  }
}

TEST(RecordTrace, MaskedModelNeverRecordsRemovedUnits) {
  auto fx = make_fixture();
  const auto full = record_trace(fx.snap, fx.corpus, {});
  std::set<int> used;
  for (const auto& r : full.records) used.insert(r.neuron);
  const std::vector<int> removed(used.begin(), used.end());
  ASSERT_LT(removed.size(), 16u);
  const auto mask = PruneMask::pruning(16, removed);
  RecordOptions opt;
  opt.mask = &mask;
  const auto cut = record_trace(fx.snap, fx.corpus, {}, opt);
  EXPECT_EQ(cut.records.size(), full.records.size());
  for (const auto& r : cut.records) EXPECT_TRUE(mask.keeps(r.neuron)) << r.neuron;
}

TEST(RecordTrace, ThreadCountDoesNotChangeOutput) {
  auto fx = make_fixture(16, 40);
  RecordOptions one;
  RecordOptions four;
  four.threads = 4;
  EXPECT_EQ(record_trace(fx.snap, fx.corpus, {}, one), record_trace(fx.snap, fx.corpus, {}, four));
}

TEST(RecordTrace, HeadAttachesPredictionAndLabelToEveryRecord) {
  auto fx = make_fixture(8, 3);
  fx.snap.params = init_params(11, static_cast<int>(fx.vocab.size()), 6, 8);
  fx.snap.head = init_head(1, 8);
  const std::vector<int> labels{1, 0, 1};
  RecordOptions opt;
  opt.labels = &labels;
  const auto t = record_trace(fx.snap, fx.corpus, {}, opt);
  std::size_t k = 0;
  for (std::size_t s = 0; s < fx.corpus.size(); ++s) {
    const double yhat = classify(fx.snap, fx.corpus[s].ids);
    for (std::size_t i = 0; i < fx.corpus[s].size(); ++i, ++k) {
      ASSERT_TRUE(t.records[k].predicted);
      EXPECT_EQ(*t.records[k].predicted, yhat);
      EXPECT_EQ(*t.records[k].truth, labels[s]);
    }
  }
}

TEST(RecordTrace, MisalignedAnnotationsAndEmptyCorpusAreRejected) {
  auto fx = make_fixture(8, 2);
  TagAnnotation ann;
  ann.tags = {{"NN"}};
  RecordOptions opt;
  opt.annotations = &ann;
  EXPECT_THROW(record_trace(fx.snap, fx.corpus, {}, opt), DataError);
  EXPECT_THROW(record_trace(fx.snap, {}, {}), DataError);
}

TEST(TraceFile, RoundTripsRecordForRecord) {
  auto t = random_trace(3, 500, 8, 20, {"NN", "VB", "DT"});
  t.records[0].predicted = 0.123456789012345678;
  t.records[0].truth = 1;
  t.records[1].activation = 1.0 / 3.0;
  std::stringstream ss;
  write_trace(ss, t);
  const auto back = read_trace(ss);
  EXPECT_EQ(back, t);
}

TEST(TraceFile, NeuronEqualToHIsRejected) {
  TraceMatrix t;
  t.meta.hidden = 4;
  t.meta.vocab_size = 3;
  std::stringstream ss;
  write_trace(ss, t);
  ss.seekp(0, std::ios::end);
  ss << R"({"f":0,"n":4,"a":0.5})" << '\n';
  try {
    read_trace(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("out of bounds"), std::string::npos);
  }
}

TEST(TraceFile, EmptyRecordsAreAccepted) {
  TraceMatrix t;
  t.meta.hidden = 4;
  t.meta.vocab_size = 3;
  std::stringstream ss;
  write_trace(ss, t);
  const auto back = read_trace(ss);
  EXPECT_TRUE(back.records.empty());
  EXPECT_EQ(back.meta, t.meta);
}

TEST(TraceFile, TruncationAndVersionMismatchAreParseErrors) {
  const auto t = random_trace(4, 10, 4, 5);
  std::stringstream ss;
  write_trace(ss, t);
  const std::string full = ss.str();
  std::istringstream cut(full.substr(0, full.size() - 6));
  EXPECT_THROW(read_trace(cut), ParseError);

  auto meta = meta_to_json(t.meta);
  meta["version"] = 99;
  std::istringstream wrong(meta.dump() + "\n");
  EXPECT_THROW(read_trace(wrong), ParseError);

  std::istringstream empty("");
  EXPECT_THROW(read_trace(empty), ParseError);
}

TEST(ThreadsFromEnv, ReadsVariable) {
  ::setenv("TXRAY_THREADS", "1", 1);
  EXPECT_EQ(threads_from_env(), 1u);
  ::setenv("TXRAY_THREADS", "0", 1);
  EXPECT_EQ(threads_from_env(), 1u);
  ::unsetenv("TXRAY_THREADS");
  EXPECT_GE(threads_from_env(), 1u);
}
