#pragma once

// Versioned JSON report: the single hand-off artifact for the explorer UI
// and the SVG renderer. Schema: docs/report.schema.json.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "txray/metrics.hpp"
#include "txray/preference.hpp"
#include "txray/pruning.hpp"

namespace txray {

struct StageInfo {
  std::string stage_id;
  std::string corpus_id;
  int hidden = 0;
  MagnitudeMode mode = MagnitudeMode::Absolute;
  friend bool operator==(const StageInfo&, const StageInfo&) = default;
};

struct ComparisonPoint {
  int neuron = 0;
  std::size_t length_a = 0, length_b = 0;
  std::optional<double> distance;
  NeuronState state = NeuronState::Never;
  double mass_a = 0, mass_b = 0;
  friend bool operator==(const ComparisonPoint&, const ComparisonPoint&) = default;
};

struct ComparisonSection {
  std::string stage_a, stage_b;
  std::size_t shared = 0, avoided = 0, gained = 0, never = 0;
  double mean_distance = 0, median_distance = 0;
  double mean_shared_length_a = 0, mean_shared_length_b = 0;
  std::vector<ComparisonPoint> points;
  friend bool operator==(const ComparisonSection&, const ComparisonSection&) = default;
};

struct DetailFeature {
  std::string token;
  std::string tag;
  double p = 0;
  friend bool operator==(const DetailFeature&, const DetailFeature&) = default;
};

/// One neuron's distribution at one stage; features sorted by tag, then
/// descending probability.
struct NeuronDetail {
  int neuron = 0;
  std::string stage_id;
  std::string kind = "token";  // "token" or "tag"
  std::vector<DetailFeature> features;
  friend bool operator==(const NeuronDetail&, const NeuronDetail&) = default;
};

struct TagMatchSection {
  std::string stage_id;
  std::vector<TagShare> rows;
  double l1 = 0;
  friend bool operator==(const TagMatchSection& a, const TagMatchSection& b) {
    if (a.stage_id != b.stage_id || a.l1 != b.l1 || a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      if (a.rows[i].tag != b.rows[i].tag || a.rows[i].corpus != b.rows[i].corpus ||
          a.rows[i].activation != b.rows[i].activation)
        return false;
    }
    return true;
  }
};

struct MassCurveSection {
  std::string stage_id;
  std::vector<MassPoint> points;
  double gini = 0;
  friend bool operator==(const MassCurveSection& a, const MassCurveSection& b) {
    if (a.stage_id != b.stage_id || a.gini != b.gini || a.points.size() != b.points.size()) return false;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      if (a.points[i].rank != b.points[i].rank || a.points[i].neuron != b.points[i].neuron ||
          a.points[i].mass != b.points[i].mass)
        return false;
    }
    return true;
  }
};

struct LengthShiftSection {
  std::string stage_a, stage_b;
  std::vector<LengthShiftRow> rows;
  std::size_t longer = 0, shorter = 0, unchanged = 0;
  double mean_shared_length_a = 0, mean_shared_length_b = 0;
  friend bool operator==(const LengthShiftSection& a, const LengthShiftSection& b) {
    if (a.stage_a != b.stage_a || a.stage_b != b.stage_b || a.longer != b.longer || a.shorter != b.shorter ||
        a.unchanged != b.unchanged || a.mean_shared_length_a != b.mean_shared_length_a ||
        a.mean_shared_length_b != b.mean_shared_length_b || a.rows.size() != b.rows.size())
      return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      if (a.rows[i].neuron != b.rows[i].neuron || a.rows[i].length_a != b.rows[i].length_a ||
          a.rows[i].length_b != b.rows[i].length_b || a.rows[i].direction != b.rows[i].direction)
        return false;
    }
    return true;
  }
};

/// Gained-neuron feature listing; stopwords removed for presentation only.
struct ListingNeuron {
  int neuron = 0;
  double mass = 0;
  std::vector<std::string> features;  // decreasing activation mass
  std::size_t total_features = 0;     // before stopword filtering
  friend bool operator==(const ListingNeuron&, const ListingNeuron&) = default;
};

struct ListingSection {
  std::string stage_id;
  std::string title;
  bool stopwords_filtered = true;
  std::vector<ListingNeuron> neurons;
  friend bool operator==(const ListingSection&, const ListingSection&) = default;
};

struct Report {
  static constexpr int kVersion = 1;

  int version = kVersion;
  nlohmann::json config = nlohmann::json::object();
  std::vector<StageInfo> stages;
  std::vector<ComparisonSection> comparisons;
  std::vector<NeuronDetail> neuron_details;
  std::vector<TagMatchSection> tag_match;
  std::vector<MassCurveSection> mass_curves;
  std::vector<LengthShiftSection> length_shifts;
  std::vector<PruneReport> prune_reports;
  std::vector<ListingSection> listings;

  const StageInfo* stage(const std::string& id) const {
    for (const auto& s : stages)
      if (s.stage_id == id) return &s;
    return nullptr;
  }
  friend bool operator==(const Report&, const Report&) = default;
};

// ---------------------------------------------------------------------------
// Building.

inline StageInfo stage_info(const ModelPreference& mp) {
  return {mp.meta.stage_id, mp.meta.corpus_id, mp.meta.hidden, mp.meta.mode};
}

inline void add_stage(Report& r, const ModelPreference& mp) {
  if (!r.stage(mp.meta.stage_id)) r.stages.push_back(stage_info(mp));
}

inline ComparisonSection comparison_section(const ComparisonSummary& s) {
  ComparisonSection c;
  c.stage_a = s.stage_a;
  c.stage_b = s.stage_b;
  c.shared = s.count(NeuronState::Shared);
  c.avoided = s.count(NeuronState::Avoided);
  c.gained = s.count(NeuronState::Gained);
  c.never = s.count(NeuronState::Never);
  c.mean_distance = s.mean_distance;
  c.median_distance = s.median_distance;
  c.mean_shared_length_a = s.mean_shared_length_a;
  c.mean_shared_length_b = s.mean_shared_length_b;
  for (const auto& n : s.neurons) c.points.push_back({n.neuron, n.length_a, n.length_b, n.distance, n.state, n.mass_a, n.mass_b});
  return c;
}

/// Sorted by tag, then descending p, then name for determinism.
inline void sort_detail(std::vector<DetailFeature>& fs) {
  std::sort(fs.begin(), fs.end(), [](const DetailFeature& a, const DetailFeature& b) {
    if (a.tag != b.tag) return a.tag < b.tag;
    if (a.p != b.p) return a.p > b.p;
    return a.token < b.token;
  });
}

inline NeuronDetail neuron_detail(const ModelPreference& mp, int n) {
  NeuronDetail d;
  d.neuron = n;
  d.stage_id = mp.meta.stage_id;
  d.kind = to_string(mp.meta.kind);
  for (const auto& e : mp[n].entries) {
    const std::string name = static_cast<std::size_t>(e.feature) < mp.meta.features.size()
                                 ? mp.meta.features[static_cast<std::size_t>(e.feature)]
                                 : std::to_string(e.feature);
    const std::string tag = mp.meta.kind == FeatureKind::Tag ? name : e.tag;
    d.features.push_back({name, tag, e.p});
  }
  sort_detail(d.features);
  return d;
}

/// Details for every preferred neuron of a stage.
inline void add_details(Report& r, const ModelPreference& mp) {
  for (int n = 0; n < mp.hidden(); ++n)
    if (!mp[n].empty()) r.neuron_details.push_back(neuron_detail(mp, n));
}

inline MassCurveSection mass_curve_section(const MassCurve& c) { return {c.stage_id, c.points, c.gini}; }

inline LengthShiftSection length_shift_section(const LengthShift& s) {
  return {s.stage_a, s.stage_b, s.rows, s.longer, s.shorter, s.unchanged, s.mean_shared_length_a, s.mean_shared_length_b};
}

/// Table-style listing of the `top` heaviest and `top` lightest neurons
/// gained between `before` and `after`, features by decreasing mass.
inline ListingSection gained_listing(const ModelPreference& before, const ModelPreference& after,
                                     const std::set<std::string>& stopwords, std::size_t top = 3,
                                     std::size_t max_features = 12) {
  auto gained = select(PrunePolicy::gained(), before, after);
  std::stable_sort(gained.begin(), gained.end(), [&](int a, int b) { return after[a].record_mass > after[b].record_mass; });
  std::vector<int> chosen;
  for (std::size_t i = 0; i < gained.size() && i < top; ++i) chosen.push_back(gained[i]);
  for (std::size_t i = std::max(top, gained.size() > top ? gained.size() - top : gained.size()); i < gained.size(); ++i) {
    chosen.push_back(gained[i]);
  }
  ListingSection out;
  out.stage_id = after.meta.stage_id;
  out.title = "neurons gained between " + before.meta.stage_id + " and " + after.meta.stage_id;
  out.stopwords_filtered = true;
  for (int n : chosen) {
    ListingNeuron ln;
    ln.neuron = n;
    ln.mass = after[n].record_mass;
    ln.total_features = after[n].length();
    auto entries = after[n].entries;
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.sum > b.sum; });
    for (const auto& e : entries) {
      const auto idx = static_cast<std::size_t>(e.feature);
      const std::string tok = idx < after.meta.features.size() ? after.meta.features[idx] : std::to_string(e.feature);
      if (stopwords.count(tok)) continue;
      ln.features.push_back(tok);
      if (ln.features.size() >= max_features) break;
    }
    out.neurons.push_back(std::move(ln));
  }
  return out;
}

inline std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword list " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.insert(line);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation and serialization.

/// Throws DataError when the report breaks an invariant.
inline void validate(const Report& r) {
  if (r.version != Report::kVersion) throw ParseError("unsupported report version " + std::to_string(r.version));
  int h = 0;
  for (const auto& s : r.stages) {
    if (s.hidden < 1) throw DataError("stage '" + s.stage_id + "' has invalid h");
    if (h && s.hidden != h) {
      throw ContractError("report stages disagree on h (" + std::to_string(h) + " vs " + std::to_string(s.hidden) + " in '" +
                          s.stage_id + "')");
    }
    h = s.hidden;
  }
  std::set<std::string> ids;
  for (const auto& s : r.stages)
    if (!ids.insert(s.stage_id).second) throw DataError("duplicate stage id '" + s.stage_id + "'");
  auto need_stage = [&](const std::string& id) {
    if (!ids.count(id)) throw DataError("report references undeclared stage '" + id + "'");
  };
  auto need_neuron = [&](int n) {
    if (n < 0 || n >= h) throw DataError("report references neuron " + std::to_string(n) + " outside 0.." + std::to_string(h - 1));
  };
  for (const auto& c : r.comparisons) {
    need_stage(c.stage_a);
    need_stage(c.stage_b);
    if (c.shared + c.avoided + c.gained + c.never != static_cast<std::size_t>(h)) {
      throw DataError("comparison " + c.stage_a + " vs " + c.stage_b + " state counts do not sum to h");
    }
    for (const auto& p : c.points) {
      need_neuron(p.neuron);
      if (p.distance.has_value() != (p.state == NeuronState::Shared)) {
        throw DataError("comparison point " + std::to_string(p.neuron) + ": distance must be present iff shared");
      }
      if (p.distance && (*p.distance < 0 || *p.distance > 1)) throw DataError("Hellinger distance outside [0,1]");
    }
  }
  for (const auto& d : r.neuron_details) {
    need_stage(d.stage_id);
    need_neuron(d.neuron);
    double sum = 0;
    for (const auto& f : d.features) sum += f.p;
    if (!d.features.empty() && std::fabs(sum - 1.0) > 1e-9) {
      throw DataError("neuron " + std::to_string(d.neuron) + " at stage '" + d.stage_id + "' probabilities sum to " +
                      std::to_string(sum));
    }
  }
  for (const auto& t : r.tag_match) need_stage(t.stage_id);
  for (const auto& m : r.mass_curves) {
    need_stage(m.stage_id);
    for (const auto& p : m.points) need_neuron(p.neuron);
  }
  for (const auto& l : r.length_shifts) {
    need_stage(l.stage_a);
    need_stage(l.stage_b);
    for (const auto& row : l.rows) need_neuron(row.neuron);
  }
  for (const auto& p : r.prune_reports) {
    for (int n : p.neurons) need_neuron(n);
    if (p.mass_share < 0 || p.mass_share > 100) throw DataError("prune mass_share outside [0,100]");
  }
  for (const auto& l : r.listings) {
    need_stage(l.stage_id);
    for (const auto& n : l.neurons) need_neuron(n.neuron);
  }
}

inline nlohmann::json to_json(const Report& r) {
  using nlohmann::json;
  json j;
  j["format"] = "txray-report";
  j["version"] = r.version;
  j["config"] = r.config;
  j["stages"] = json::array();
  for (const auto& s : r.stages) {
    j["stages"].push_back({{"stage_id", s.stage_id}, {"corpus_id", s.corpus_id}, {"h", s.hidden}, {"mode", to_string(s.mode)}});
  }
  j["comparisons"] = json::array();
  for (const auto& c : r.comparisons) {
    json pts = json::array();
    for (const auto& p : c.points) {
      pts.push_back({{"n", p.neuron},
                     {"l_a", p.length_a},
                     {"l_b", p.length_b},
                     {"H", p.distance ? json(*p.distance) : json(nullptr)},
                     {"state", to_string(p.state)},
                     {"mass_a", p.mass_a},
                     {"mass_b", p.mass_b}});
    }
    j["comparisons"].push_back(
        {{"pair", {c.stage_a, c.stage_b}},
         {"summary",
          {{"counts", {{"shared", c.shared}, {"avoided", c.avoided}, {"gained", c.gained}, {"never", c.never}}},
           {"mean_distance", c.mean_distance},
           {"median_distance", c.median_distance},
           {"mean_shared_length_a", c.mean_shared_length_a},
           {"mean_shared_length_b", c.mean_shared_length_b}}},
         {"points", std::move(pts)}});
  }
  j["neuron_details"] = json::array();
  for (const auto& d : r.neuron_details) {
    json fs = json::array();
    for (const auto& f : d.features) fs.push_back({{"token", f.token}, {"tag", f.tag}, {"p", f.p}});
    j["neuron_details"].push_back({{"n", d.neuron}, {"stage_id", d.stage_id}, {"kind", d.kind}, {"features", std::move(fs)}});
  }
  j["tag_match"] = json::array();
  for (const auto& t : r.tag_match) {
    json rows = json::array();
    for (const auto& row : t.rows) rows.push_back({{"tag", row.tag}, {"corpus", row.corpus}, {"activation", row.activation}});
    j["tag_match"].push_back({{"stage_id", t.stage_id}, {"rows", std::move(rows)}, {"l1", t.l1}});
  }
  j["mass_curves"] = json::array();
  for (const auto& m : r.mass_curves) {
    json pts = json::array();
    for (const auto& p : m.points) pts.push_back({{"rank", p.rank}, {"n", p.neuron}, {"mass", p.mass}});
    j["mass_curves"].push_back({{"stage_id", m.stage_id}, {"masses", std::move(pts)}, {"gini", m.gini}});
  }
  j["length_shifts"] = json::array();
  for (const auto& l : r.length_shifts) {
    json rows = json::array();
    for (const auto& row : l.rows) {
      rows.push_back({{"n", row.neuron}, {"l_a", row.length_a}, {"l_b", row.length_b}, {"direction", to_string(row.direction)}});
    }
    j["length_shifts"].push_back({{"pair", {l.stage_a, l.stage_b}},
                                  {"rows", std::move(rows)},
                                  {"longer", l.longer},
                                  {"shorter", l.shorter},
                                  {"unchanged", l.unchanged},
                                  {"mean_shared_length_a", l.mean_shared_length_a},
                                  {"mean_shared_length_b", l.mean_shared_length_b}});
  }
  j["prune_reports"] = json::array();
  for (const auto& p : r.prune_reports) j["prune_reports"].push_back(to_json(p));
  j["listings"] = json::array();
  for (const auto& l : r.listings) {
    json ns = json::array();
    for (const auto& n : l.neurons) {
      ns.push_back({{"n", n.neuron}, {"mass", n.mass}, {"features", n.features}, {"total_features", n.total_features}});
    }
    j["listings"].push_back(
        {{"stage_id", l.stage_id}, {"title", l.title}, {"stopwords_filtered", l.stopwords_filtered}, {"neurons", std::move(ns)}});
  }
  return j;
}

inline Report report_from_json(const nlohmann::json& j) {
  Report r;
  try {
    if (j.at("format").get<std::string>() != "txray-report") throw ParseError("not a report file");
    r.version = j.at("version").get<int>();
    r.config = j.at("config");
    for (const auto& s : j.at("stages")) {
      r.stages.push_back({s.at("stage_id").get<std::string>(), s.at("corpus_id").get<std::string>(), s.at("h").get<int>(),
                          parse_mode(s.at("mode").get<std::string>())});
    }
    for (const auto& c : j.at("comparisons")) {
      ComparisonSection sec;
      const auto& pair = c.at("pair");
      if (pair.size() != 2) throw ParseError("comparison pair must name two stages");
      sec.stage_a = pair[0].get<std::string>();
      sec.stage_b = pair[1].get<std::string>();
      const auto& s = c.at("summary");
      const auto& counts = s.at("counts");
      sec.shared = counts.at("shared").get<std::size_t>();
      sec.avoided = counts.at("avoided").get<std::size_t>();
      sec.gained = counts.at("gained").get<std::size_t>();
      sec.never = counts.at("never").get<std::size_t>();
      sec.mean_distance = s.at("mean_distance").get<double>();
      sec.median_distance = s.at("median_distance").get<double>();
      sec.mean_shared_length_a = s.at("mean_shared_length_a").get<double>();
      sec.mean_shared_length_b = s.at("mean_shared_length_b").get<double>();
      for (const auto& p : c.at("points")) {
        ComparisonPoint pt;
        pt.neuron = p.at("n").get<int>();
        pt.length_a = p.at("l_a").get<std::size_t>();
        pt.length_b = p.at("l_b").get<std::size_t>();
        if (!p.at("H").is_null()) pt.distance = p.at("H").get<double>();
        pt.state = parse_state(p.at("state").get<std::string>());
        pt.mass_a = p.at("mass_a").get<double>();
        pt.mass_b = p.at("mass_b").get<double>();
        sec.points.push_back(pt);
      }
      r.comparisons.push_back(std::move(sec));
    }
    for (const auto& d : j.at("neuron_details")) {
      NeuronDetail nd;
      nd.neuron = d.at("n").get<int>();
      nd.stage_id = d.at("stage_id").get<std::string>();
      nd.kind = d.at("kind").get<std::string>();
      for (const auto& f : d.at("features")) {
        nd.features.push_back({f.at("token").get<std::string>(), f.at("tag").get<std::string>(), f.at("p").get<double>()});
      }
      r.neuron_details.push_back(std::move(nd));
    }
    for (const auto& t : j.at("tag_match")) {
      TagMatchSection sec;
      sec.stage_id = t.at("stage_id").get<std::string>();
      sec.l1 = t.at("l1").get<double>();
      for (const auto& row : t.at("rows")) {
        sec.rows.push_back({row.at("tag").get<std::string>(), row.at("corpus").get<double>(), row.at("activation").get<double>()});
      }
      r.tag_match.push_back(std::move(sec));
    }
    for (const auto& m : j.at("mass_curves")) {
      MassCurveSection sec;
      sec.stage_id = m.at("stage_id").get<std::string>();
      sec.gini = m.at("gini").get<double>();
      for (const auto& p : m.at("masses")) {
        sec.points.push_back({p.at("rank").get<std::size_t>(), p.at("n").get<int>(), p.at("mass").get<double>()});
      }
      r.mass_curves.push_back(std::move(sec));
    }
    for (const auto& l : j.at("length_shifts")) {
      LengthShiftSection sec;
      const auto& pair = l.at("pair");
      if (pair.size() != 2) throw ParseError("length shift pair must name two stages");
      sec.stage_a = pair[0].get<std::string>();
      sec.stage_b = pair[1].get<std::string>();
      sec.longer = l.at("longer").get<std::size_t>();
      sec.shorter = l.at("shorter").get<std::size_t>();
      sec.unchanged = l.at("unchanged").get<std::size_t>();
      sec.mean_shared_length_a = l.at("mean_shared_length_a").get<double>();
      sec.mean_shared_length_b = l.at("mean_shared_length_b").get<double>();
      for (const auto& row : l.at("rows")) {
        const auto dir = row.at("direction").get<std::string>();
        LengthDirection d = LengthDirection::Unchanged;
        if (dir == "longer") d = LengthDirection::Longer;
        else if (dir == "shorter") d = LengthDirection::Shorter;
        else if (dir != "unchanged") throw ParseError("unknown length direction '" + dir + "'");
        sec.rows.push_back({row.at("n").get<int>(), row.at("l_a").get<std::size_t>(), row.at("l_b").get<std::size_t>(), d});
      }
      r.length_shifts.push_back(std::move(sec));
    }
    for (const auto& p : j.at("prune_reports")) r.prune_reports.push_back(prune_report_from_json(p));
    for (const auto& l : j.at("listings")) {
      ListingSection sec;
      sec.stage_id = l.at("stage_id").get<std::string>();
      sec.title = l.at("title").get<std::string>();
      sec.stopwords_filtered = l.at("stopwords_filtered").get<bool>();
      for (const auto& n : l.at("neurons")) {
        sec.neurons.push_back({n.at("n").get<int>(), n.at("mass").get<double>(), n.at("features").get<std::vector<std::string>>(),
                               n.at("total_features").get<std::size_t>()});
      }
      r.listings.push_back(std::move(sec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  } catch (const UsageError& e) {
    throw ParseError(e.what());
  }
  validate(r);
  return r;
}

inline std::string dump_report(const Report& r) { return to_json(r).dump(1) + "\n"; }

inline void export_report(const std::string& path, const Report& r) {
  validate(r);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report " + path);
  out << dump_report(r);
}

inline Report parse_report(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

inline Report load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open report " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_report(text);
}

}  // namespace txray
