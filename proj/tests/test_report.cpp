#include <gtest/gtest.h>

#include <regex>

#include "support.hpp"

using namespace txray;
using namespace txray::testing;

namespace {

ModelPreference named_stage(std::uint64_t seed, const std::string& id) {
  auto t = random_trace(seed, 1500, 12, 30, {"DT", "JJ", "NN", "VB"});
  t.meta.stage_id = id;
  for (int i = 0; i < 30; ++i) t.meta.vocab.push_back("w" + std::to_string(i));
  return aggregate(t);
}

Report sample_report() {
  const auto a = named_stage(1, "epoch-1");
  const auto b = named_stage(2, "epoch-2");
  Report r;
  r.config = {{"seed", 7}};
  add_stage(r, a);
  add_stage(r, b);
  r.comparisons.push_back(comparison_section(compare(a, b)));
  r.length_shifts.push_back(length_shift_section(length_shift(a, b)));
  add_details(r, a);
  add_details(r, b);
  r.mass_curves.push_back(mass_curve_section(mass_curve(a)));
  r.mass_curves.push_back(mass_curve_section(mass_curve(b)));
  TagAnnotation ann;
  ann.tags = {{"DT", "NN", "NN", "VB", "JJ"}};
  auto t = random_trace(2, 200, 12, 30, {"DT", "JJ", "NN", "VB"});
  const auto m = tag_frequency_match(ann, t);
  r.tag_match.push_back({"epoch-2", m.rows, m.l1});
  PruneReport pr;
  pr.policy = "avoided";
  pr.neurons = {1, 4};
  pr.f1_train_before = 0.8;
  pr.f1_train_after = 0.77;
  pr.rel_train_change = relative_change(0.8, 0.77);
  r.prune_reports.push_back(pr);
  r.listings.push_back(gained_listing(a, b, {"w0"}));
  return r;
}

/// Neuron 0 with five features over three tags at two stages.
Report five_feature_report() {
  Report r;
  r.stages = {{"before", "toy", 4, MagnitudeMode::Absolute}, {"after", "toy", 4, MagnitudeMode::Absolute}};
  NeuronDetail before{0, "before", "token", {{"dog", "NN", 0.4}, {"cat", "NN", 0.2}, {"runs", "VBZ", 0.25}, {"the", "DT", 0.15}}};
  NeuronDetail after{0, "after", "token", {{"dog", "NN", 0.3}, {"mat", "NN", 0.3}, {"runs", "VBZ", 0.1}, {"the", "DT", 0.3}}};
  sort_detail(before.features);
  sort_detail(after.features);
  r.neuron_details = {before, after};
  return r;
}

std::vector<std::string> matches(const std::string& text, const std::string& pattern) {
  std::vector<std::string> out;
  const std::regex re(pattern);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) out.push_back((*it)[1]);
  return out;
}

}  // namespace

TEST(ReportJson, ExportParseIsIdentity) {
  const auto r = sample_report();
  validate(r);
  const std::string text = dump_report(r);
  const auto back = parse_report(text);
  EXPECT_EQ(back, r);
  EXPECT_EQ(dump_report(back), text);
}

TEST(ReportJson, FileRoundTripIsByteExact) {
  const auto dir = temp_dir("report");
  const auto r = sample_report();
  export_report((dir / "a.json").string(), r);
  export_report((dir / "b.json").string(), load_report((dir / "a.json").string()));
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
}

TEST(ReportJson, DetailProbabilitiesResumToOne) {
  const auto r = sample_report();
  ASSERT_FALSE(r.neuron_details.empty());
  for (const auto& d : r.neuron_details) {
    double s = 0;
    for (const auto& f : d.features) s += f.p;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ReportJson, InconsistentHiddenSizeIsRejected) {
  auto r = sample_report();
  r.stages[1].hidden = 16;
  EXPECT_THROW(validate(r), ContractError);
  EXPECT_THROW(export_report((temp_dir("bad") / "r.json").string(), r), ContractError);
}

TEST(ReportJson, UndeclaredStageAndOutOfRangeNeuronAreRejected) {
  auto r = sample_report();
  r.neuron_details[0].stage_id = "nowhere";
  EXPECT_THROW(validate(r), DataError);
  r = sample_report();
  r.comparisons[0].points[0].neuron = 12;
  EXPECT_THROW(validate(r), DataError);
}

TEST(ReportJson, MalformedTextIsAParseError) {
  EXPECT_THROW(parse_report("{"), ParseError);
  EXPECT_THROW(parse_report(R"({"format":"txray-report","version":9})"), ParseError);
}

TEST(Listing, FeaturesByDecreasingMassWithoutStopwords) {
  PreferenceMeta meta;
  meta.hidden = 2;
  meta.features = {"the", "good", "great", "plot"};
  PartialAggregation before(meta), after(meta);
  before.add(0, 0, 1.0);
  after.add(0, 0, 1.0);
  // neuron 1 gained: sums the 3.0, great 2.5, good 0.5 + 0.5, plot 0.1
  after.add(1, 0, 3.0);
  after.add(1, 2, 2.5);
  after.add(1, 1, 0.5);
  after.add(1, 1, 0.5);
  after.add(1, 3, 0.1);
  const auto l = gained_listing(before.finalize(), after.finalize(), {"the"});
  ASSERT_EQ(l.neurons.size(), 1u);
  EXPECT_EQ(l.neurons[0].neuron, 1);
  EXPECT_EQ(l.neurons[0].features, (std::vector<std::string>{"great", "good", "plot"}));
  EXPECT_EQ(l.neurons[0].total_features, 4u);
  EXPECT_TRUE(l.stopwords_filtered);
}

TEST(RenderScatter, OneGlyphPerSharedPoint) {
  Report r;
  r.stages = {{"a", "c", 4, MagnitudeMode::Absolute}, {"b", "c", 4, MagnitudeMode::Absolute}};
  ComparisonSection c;
  c.stage_a = "a";
  c.stage_b = "b";
  c.points = {{0, 5, 3, 0.2, NeuronState::Shared, 1, 1},
              {1, 40, 2, 0.9, NeuronState::Shared, 1, 1},
              {2, 1, 1, 0.0, NeuronState::Shared, 1, 1},
              {3, 4, 0, std::nullopt, NeuronState::Avoided, 1, 0}};
  c.shared = 3;
  c.avoided = 1;
  r.comparisons.push_back(c);
  const auto svg = render(r, FigureKind::Scatter);
  EXPECT_EQ(matches(svg, "<circle class=\"point\" data-neuron=\"(\\d+)\"").size(), 3u);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("<svg "), std::string::npos);
  EXPECT_NE(svg.find("Hellinger distance H"), std::string::npos);
}

TEST(RenderScatter, MissingComparisonIsNamed) {
  try {
    render(Report{}, FigureKind::Scatter);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no comparison section"), std::string::npos);
  }
}

TEST(RenderHistogram, MatchesGoldenFile) {
  const auto svg = render_histogram(five_feature_report(), 0);
  const auto golden = std::filesystem::path(TXRAY_TEST_DIR) / "golden" / "histogram_5_features.svg";
  if (std::getenv("TXRAY_UPDATE_GOLDEN")) spit(golden, svg);
  EXPECT_EQ(svg, slurp(golden));
}

TEST(RenderHistogram, OneGroupPerFeatureGroupedByTag) {
  const auto svg = render_histogram(five_feature_report(), 0);
  const auto features = matches(svg, "data-feature=\"([^\"]*)\"");
  const auto tags = matches(svg, "data-tag=\"([^\"]*)\"");
  EXPECT_EQ(features, (std::vector<std::string>{"the", "dog", "mat", "cat", "runs"}));
  EXPECT_EQ(tags, (std::vector<std::string>{"DT", "NN", "NN", "NN", "VBZ"}));
  // "the", "dog", "runs" appear in both stages, "mat" and "cat" in one each.
  EXPECT_EQ(matches(svg, "<rect class=\"bar\" data-stage=\"([^\"]*)\"").size(), 8u);
}

TEST(RenderHistogram, SingleStageOrderEqualsReportOrder) {
  const auto r = sample_report();
  const auto& d = r.neuron_details.front();
  Report one;
  one.stages = r.stages;
  one.neuron_details = {d};
  const auto svg = render_histogram(one, d.neuron);
  std::vector<std::string> expected;
  for (const auto& f : d.features) expected.push_back(f.token);
  EXPECT_EQ(matches(svg, "data-feature=\"([^\"]*)\""), expected);
}

TEST(RenderHistogram, MissingNeuronIsNamed) {
  try {
    render_histogram(five_feature_report(), 3);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("neuron 3"), std::string::npos);
  }
}

TEST(Render, DeterministicForEveryFigure) {
  const auto r = sample_report();
  for (const char* name : {"scatter", "histogram", "length-shift", "mass-curve", "tag-match"}) {
    const auto kind = parse_figure(name);
    EXPECT_EQ(render(r, kind), render(parse_report(dump_report(r)), kind)) << name;
  }
  EXPECT_THROW(parse_figure("pie"), UsageError);
}

TEST(Render, MissingSectionsAreNamed) {
  Report r;
  EXPECT_THROW(render(r, FigureKind::LengthShift), DataError);
  EXPECT_THROW(render(r, FigureKind::MassCurve), DataError);
  EXPECT_THROW(render(r, FigureKind::TagMatch), DataError);
}
