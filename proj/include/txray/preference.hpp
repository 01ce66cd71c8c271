#pragma once

// Per-neuron feature preference distributions.
//
// For neuron n, every feature f it maximally fired on gets the mean of those
// maximum activations, mu_f. Dividing by the neuron's sum of means gives the
// preference distribution P_n. Neurons that never won an argmax have an empty
// distribution ("un-preferred").
//
// Preference file (JSON):
//   {meta, neurons: [{n, entries: [{f, sum, count, p, tag?}], length,
//                     mean_mass, record_mass}]}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "txray/exact_sum.hpp"
#include "txray/trace.hpp"

namespace txray {

enum class FeatureKind { Token, Tag };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::Token ? "token" : "tag"; }

struct PreferenceEntry {
  int feature = 0;
  double sum = 0;          // sum of max activations of this feature in this neuron
  std::int64_t count = 0;  // number of those activations
  double p = 0;            // mean / sum of means
  std::string tag;         // most frequent POS tag of the feature here; empty if untagged

  double mean() const { return sum / static_cast<double>(count); }
  friend bool operator==(const PreferenceEntry&, const PreferenceEntry&) = default;
};

/// P_n together with the activation distribution A_n it was normalized from
/// (the sum/count columns). Entries are sorted by feature id.
struct PreferenceDistribution {
  int neuron = 0;
  std::vector<PreferenceEntry> entries;
  double mean_mass = 0;    // sum of per-feature means
  double record_mass = 0;  // sum of raw max activations over the neuron's records

  std::size_t length() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  /// Probability of `feature`, 0 when absent.
  double prob(int feature) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), feature,
                               [](const PreferenceEntry& e, int f) { return e.feature < f; });
    return it != entries.end() && it->feature == feature ? it->p : 0.0;
  }
  friend bool operator==(const PreferenceDistribution&, const PreferenceDistribution&) = default;
};

struct PreferenceMeta {
  static constexpr int kVersion = 1;

  std::string stage_id;
  std::string corpus_id;
  int hidden = 0;
  MagnitudeMode mode = MagnitudeMode::Absolute;
  FeatureKind kind = FeatureKind::Token;
  std::vector<std::string> features;  // names by feature id (vocab tokens or tag inventory)
  double total_mass = 0;              // exact total of all record activations
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const PreferenceMeta&, const PreferenceMeta&) = default;
};

struct ModelPreference {
  PreferenceMeta meta;
  std::vector<PreferenceDistribution> neurons;  // exactly h, index = neuron id

  int hidden() const { return meta.hidden; }
  const PreferenceDistribution& operator[](int n) const { return neurons[static_cast<std::size_t>(n)]; }
  friend bool operator==(const ModelPreference&, const ModelPreference&) = default;
};

/// Mergeable aggregation state: exact (sum, count) per (neuron, feature).
class PartialAggregation {
 public:
  struct Cell {
    ExactSum sum;
    std::int64_t count = 0;
    std::map<std::string, std::int64_t> tags;
  };

  explicit PartialAggregation(PreferenceMeta meta) : meta_(std::move(meta)), cells_(static_cast<std::size_t>(meta_.hidden)), mass_(cells_.size()) {}

  /// Starts an aggregation keyed by token ids, carrying the trace's meta.
  static PartialAggregation for_trace(const TraceMeta& tm) {
    PreferenceMeta m;
    m.stage_id = tm.stage_id;
    m.corpus_id = tm.corpus_id;
    m.hidden = tm.hidden;
    m.mode = tm.mode;
    m.kind = FeatureKind::Token;
    m.features = tm.vocab;
    m.config = tm.config;
    return PartialAggregation(std::move(m));
  }

  void add(int neuron, int feature, double activation, const std::string* tag = nullptr) {
    if (neuron < 0 || neuron >= meta_.hidden) throw DataError("neuron index out of range in aggregation");
    auto& cell = cells_[static_cast<std::size_t>(neuron)][feature];
    cell.sum.add(activation);
    ++cell.count;
    if (tag) ++cell.tags[*tag];
    mass_[static_cast<std::size_t>(neuron)].add(activation);
    total_.add(activation);
  }

  void add(const TraceRecord& r) { add(r.neuron, r.feature, r.activation, r.tag ? &*r.tag : nullptr); }

  void merge(const PartialAggregation& other) {
    if (!compatible(other)) {
      throw ContractError("cannot merge aggregations with different meta (h " + std::to_string(meta_.hidden) + " vs " +
                          std::to_string(other.meta_.hidden) + ", mode " + to_string(meta_.mode) + " vs " +
                          to_string(other.meta_.mode) + ", stage '" + meta_.stage_id + "' vs '" +
                          other.meta_.stage_id + "')");
    }
    for (std::size_t n = 0; n < cells_.size(); ++n) {
      for (const auto& [f, c] : other.cells_[n]) {
        auto& mine = cells_[n][f];
        mine.sum.merge(c.sum);
        mine.count += c.count;
        for (const auto& [t, k] : c.tags) mine.tags[t] += k;
      }
      mass_[n].merge(other.mass_[n]);
    }
    total_.merge(other.total_);
  }

  bool compatible(const PartialAggregation& o) const {
    return meta_.hidden == o.meta_.hidden && meta_.mode == o.meta_.mode && meta_.stage_id == o.meta_.stage_id &&
           meta_.corpus_id == o.meta_.corpus_id && meta_.kind == o.meta_.kind && meta_.features == o.meta_.features;
  }

  const ExactSum& neuron_mass(int n) const { return mass_[static_cast<std::size_t>(n)]; }
  const ExactSum& total_mass() const { return total_; }
  const PreferenceMeta& meta() const { return meta_; }

  ModelPreference finalize() const {
    ModelPreference mp;
    mp.meta = meta_;
    mp.meta.total_mass = total_.value();
    mp.neurons.resize(cells_.size());
    for (std::size_t n = 0; n < cells_.size(); ++n) {
      auto& dist = mp.neurons[n];
      dist.neuron = static_cast<int>(n);
      dist.record_mass = mass_[n].value();
      double s_mu = 0;
      for (const auto& [f, c] : cells_[n]) {
        PreferenceEntry e;
        e.feature = f;
        e.sum = c.sum.value();
        e.count = c.count;
        e.tag = majority_tag(c.tags);
        s_mu += e.mean();
        dist.entries.push_back(std::move(e));
      }
      dist.mean_mass = s_mu;
      for (auto& e : dist.entries) e.p = s_mu > 0 ? e.mean() / s_mu : 1.0 / static_cast<double>(dist.entries.size());
    }
    return mp;
  }

 private:
  static std::string majority_tag(const std::map<std::string, std::int64_t>& tags) {
    std::string best;
    std::int64_t best_n = 0;
    for (const auto& [t, k] : tags) {
      if (k > best_n) {
        best = t;
        best_n = k;
      }
    }
    return best;
  }

  PreferenceMeta meta_;
  std::vector<std::map<int, Cell>> cells_;
  std::vector<ExactSum> mass_;
  ExactSum total_;
};

inline PartialAggregation accumulate(const TraceMatrix& trace) {
  auto agg = PartialAggregation::for_trace(trace.meta);
  for (const auto& r : trace.records) agg.add(r);
  return agg;
}

inline ModelPreference aggregate(const TraceMatrix& trace) { return accumulate(trace).finalize(); }

inline ModelPreference merge(const std::vector<PartialAggregation>& shards) {
  if (shards.empty()) throw DataError("merge needs at least one shard");
  PartialAggregation acc = shards.front();
  for (std::size_t i = 1; i < shards.size(); ++i) acc.merge(shards[i]);
  return acc.finalize();
}

/// POS-tag preference distributions: the same aggregate-then-normalize
/// pipeline with each record's tag standing in for its token.
inline ModelPreference project_to_tags(const TraceMatrix& trace) {
  if (!trace.tagged()) throw DataError("trace '" + trace.meta.stage_id + "' carries no POS tags");
  std::map<std::string, int> ids;
  for (const auto& r : trace.records) ids.emplace(*r.tag, 0);
  PreferenceMeta m;
  m.stage_id = trace.meta.stage_id;
  m.corpus_id = trace.meta.corpus_id;
  m.hidden = trace.meta.hidden;
  m.mode = trace.meta.mode;
  m.kind = FeatureKind::Tag;
  m.config = trace.meta.config;
  for (auto& [tag, id] : ids) {
    id = static_cast<int>(m.features.size());
    m.features.push_back(tag);
  }
  PartialAggregation agg(std::move(m));
  for (const auto& r : trace.records) agg.add(r.neuron, ids.at(*r.tag), r.activation);
  return agg.finalize();
}

/// Sums a token distribution's probabilities by tag. `tag_of` maps a token
/// feature id to its tag name.
template <class TagOf>
std::map<std::string, double> group_by_tag(const PreferenceDistribution& dist, TagOf&& tag_of) {
  std::map<std::string, double> out;
  for (const auto& e : dist.entries) out[tag_of(e.feature)] += e.p;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const ModelPreference& mp) {
  nlohmann::json neurons = nlohmann::json::array();
  for (const auto& d : mp.neurons) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : d.entries) {
      nlohmann::json je = {{"f", e.feature}, {"sum", e.sum}, {"count", e.count}, {"p", e.p}};
      if (!e.tag.empty()) je["tag"] = e.tag;
      entries.push_back(std::move(je));
    }
    neurons.push_back({{"n", d.neuron},
                       {"entries", std::move(entries)},
                       {"length", d.length()},
                       {"mean_mass", d.mean_mass},
                       {"record_mass", d.record_mass}});
  }
  const auto& m = mp.meta;
  return {{"meta",
           {{"format", "txray-preference"},
            {"version", PreferenceMeta::kVersion},
            {"stage_id", m.stage_id},
            {"corpus_id", m.corpus_id},
            {"h", m.hidden},
            {"mode", to_string(m.mode)},
            {"feature_kind", to_string(m.kind)},
            {"features", m.features},
            {"total_mass", m.total_mass},
            {"config", m.config}}},
          {"neurons", std::move(neurons)}};
}

inline ModelPreference preference_from_json(const nlohmann::json& j) {
  ModelPreference mp;
  try {
    const auto& jm = j.at("meta");
    if (jm.at("format").get<std::string>() != "txray-preference") throw ParseError("not a preference file");
    if (jm.at("version").get<int>() != PreferenceMeta::kVersion) throw ParseError("unsupported preference version");
    auto& m = mp.meta;
    m.stage_id = jm.at("stage_id").get<std::string>();
    m.corpus_id = jm.at("corpus_id").get<std::string>();
    m.hidden = jm.at("h").get<int>();
    m.mode = parse_mode(jm.at("mode").get<std::string>());
    const auto kind = jm.at("feature_kind").get<std::string>();
    if (kind != "token" && kind != "tag") throw ParseError("feature_kind must be 'token' or 'tag'");
    m.kind = kind == "token" ? FeatureKind::Token : FeatureKind::Tag;
    m.features = jm.at("features").get<std::vector<std::string>>();
    m.total_mass = jm.at("total_mass").get<double>();
    m.config = jm.at("config");
    const auto& jn = j.at("neurons");
    if (m.hidden < 1 || jn.size() != static_cast<std::size_t>(m.hidden)) {
      throw ParseError("preference file must list exactly h=" + std::to_string(m.hidden) + " neurons");
    }
    for (std::size_t i = 0; i < jn.size(); ++i) {
      PreferenceDistribution d;
      d.neuron = jn[i].at("n").get<int>();
      if (d.neuron != static_cast<int>(i)) throw ParseError("preference neurons must be listed in index order");
      d.mean_mass = jn[i].at("mean_mass").get<double>();
      d.record_mass = jn[i].at("record_mass").get<double>();
      int prev = -1;
      double psum = 0;
      for (const auto& je : jn[i].at("entries")) {
        PreferenceEntry e;
        e.feature = je.at("f").get<int>();
        e.sum = je.at("sum").get<double>();
        e.count = je.at("count").get<std::int64_t>();
        e.p = je.at("p").get<double>();
        if (je.contains("tag")) e.tag = je.at("tag").get<std::string>();
        if (e.feature <= prev) throw ParseError("preference entries must be sorted by feature id");
        if (!m.features.empty() && static_cast<std::size_t>(e.feature) >= m.features.size()) {
          throw ParseError("preference entry feature id out of range");
        }
        if (e.count < 1 || !(e.p > 0.0)) throw ParseError("preference entries need count >= 1 and p > 0");
        prev = e.feature;
        psum += e.p;
        d.entries.push_back(std::move(e));
      }
      if (jn[i].at("length").get<std::size_t>() != d.entries.size()) {
        throw ParseError("neuron " + std::to_string(i) + " length disagrees with its entries");
      }
      if (!d.entries.empty() && std::fabs(psum - 1.0) > 1e-9) {
        throw ParseError("neuron " + std::to_string(i) + " probabilities do not sum to 1");
      }
      mp.neurons.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed preference file: ") + e.what());
  } catch (const UsageError& e) {
    throw ParseError(e.what());
  }
  return mp;
}

inline void save_preference(const std::string& path, const ModelPreference& mp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write preference file " + path);
  out << to_json(mp).dump() << '\n';
}

inline ModelPreference load_preference(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open preference file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("preference file is not valid JSON: ") + e.what());
  }
  return preference_from_json(j);
}

}  // namespace txray
