#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "txray/error.hpp"
#include "txray/exact_sum.hpp"
#include "txray/log.hpp"
#include "txray/preference.hpp"

namespace txray {

/// Hellinger distance over the union of supports; absent features count as
/// probability 0. Throws IllDefinedError when either side is empty.
inline double hellinger(const PreferenceDistribution& p, const PreferenceDistribution& q) {
  if (p.empty() || q.empty()) {
    throw IllDefinedError("Hellinger distance is ill-defined: neuron " + std::to_string(p.empty() ? p.neuron : q.neuron) +
                          " has an empty preference distribution");
  }
  double acc = 0;
  bool overlap = false;
  auto a = p.entries.begin();
  auto b = q.entries.begin();
  while (a != p.entries.end() || b != q.entries.end()) {
    double pa = 0, qb = 0;
    if (b == q.entries.end() || (a != p.entries.end() && a->feature < b->feature)) {
      pa = (a++)->p;
    } else if (a == p.entries.end() || b->feature < a->feature) {
      qb = (b++)->p;
    } else {
      pa = (a++)->p;
      qb = (b++)->p;
      overlap = true;
    }
    const double d = std::sqrt(pa) - std::sqrt(qb);
    acc += d * d;
  }
  if (!overlap) return 1.0;
  return std::clamp(std::sqrt(acc) / std::sqrt(2.0), 0.0, 1.0);
}

enum class NeuronState { Shared, Avoided, Gained, Never };

inline std::string to_string(NeuronState s) {
  switch (s) {
    case NeuronState::Shared: return "shared";
    case NeuronState::Avoided: return "avoided";
    case NeuronState::Gained: return "gained";
    case NeuronState::Never: return "never";
  }
  return "never";
}

inline NeuronState parse_state(const std::string& s) {
  if (s == "shared") return NeuronState::Shared;
  if (s == "avoided") return NeuronState::Avoided;
  if (s == "gained") return NeuronState::Gained;
  if (s == "never") return NeuronState::Never;
  throw ParseError("unknown neuron state '" + s + "'");
}

/// Depends only on which of the two distributions are empty.
inline NeuronState classify_state(std::size_t length_before, std::size_t length_after) {
  if (length_before > 0 && length_after > 0) return NeuronState::Shared;
  if (length_before > 0) return NeuronState::Avoided;
  if (length_after > 0) return NeuronState::Gained;
  return NeuronState::Never;
}

inline NeuronState classify_state(const PreferenceDistribution& p, const PreferenceDistribution& q) {
  return classify_state(p.length(), q.length());
}

/// Sum of the neuron's recorded max activations; 0 for un-preferred neurons.
inline double activation_mass(const ModelPreference& mp, int neuron) { return mp[neuron].record_mass; }

inline double activation_mass(const TraceMatrix& trace, int neuron) {
  ExactSum s;
  for (const auto& r : trace.records)
    if (r.neuron == neuron) s.add(r.activation);
  return s.value();
}

struct NeuronComparison {
  int neuron = 0;
  std::optional<double> distance;  // present iff shared
  std::size_t length_a = 0;
  std::size_t length_b = 0;
  NeuronState state = NeuronState::Never;
  double mass_a = 0;
  double mass_b = 0;
};

struct ComparisonSummary {
  std::string stage_a, stage_b;
  std::map<NeuronState, std::size_t> counts;
  double mean_distance = 0;    // over shared neurons; 0 when none
  double median_distance = 0;
  double mean_shared_length_a = 0;
  double mean_shared_length_b = 0;
  std::vector<NeuronComparison> neurons;

  std::size_t count(NeuronState s) const {
    auto it = counts.find(s);
    return it == counts.end() ? 0 : it->second;
  }
};

inline void require_comparable(const ModelPreference& a, const ModelPreference& b) {
  if (a.meta.hidden != b.meta.hidden) {
    throw ContractError("stages have different hidden sizes: '" + a.meta.stage_id + "' h=" + std::to_string(a.meta.hidden) +
                        ", '" + b.meta.stage_id + "' h=" + std::to_string(b.meta.hidden));
  }
  if (a.meta.mode != b.meta.mode) {
    throw ContractError("stages use different magnitude modes: " + to_string(a.meta.mode) + " vs " + to_string(b.meta.mode));
  }
  if (a.meta.kind != b.meta.kind) throw ContractError("cannot compare token and tag distributions");
  if (!a.meta.features.empty() && !b.meta.features.empty() && a.meta.features != b.meta.features) {
    throw ContractError("stages index features with different vocabularies");
  }
}

inline ComparisonSummary compare(const ModelPreference& a, const ModelPreference& b) {
  require_comparable(a, b);
  ComparisonSummary s;
  s.stage_a = a.meta.stage_id;
  s.stage_b = b.meta.stage_id;
  for (auto st : {NeuronState::Shared, NeuronState::Avoided, NeuronState::Gained, NeuronState::Never}) s.counts[st] = 0;
  std::vector<double> dists;
  double len_a = 0, len_b = 0;
  for (int n = 0; n < a.hidden(); ++n) {
    NeuronComparison c;
    c.neuron = n;
    c.length_a = a[n].length();
    c.length_b = b[n].length();
    c.state = classify_state(a[n], b[n]);
    c.mass_a = a[n].record_mass;
    c.mass_b = b[n].record_mass;
    if (c.state == NeuronState::Shared) {
      c.distance = hellinger(a[n], b[n]);
      dists.push_back(*c.distance);
      len_a += static_cast<double>(c.length_a);
      len_b += static_cast<double>(c.length_b);
    }
    ++s.counts[c.state];
    s.neurons.push_back(c);
  }
  if (!dists.empty()) {
    double total = 0;
    for (double d : dists) total += d;
    const auto k = static_cast<double>(dists.size());
    s.mean_distance = total / k;
    s.mean_shared_length_a = len_a / k;
    s.mean_shared_length_b = len_b / k;
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size() / 2;
    s.median_distance = dists.size() % 2 ? dists[m] : 0.5 * (dists[m - 1] + dists[m]);
  }
  return s;
}

struct TagShare {
  std::string tag;
  double corpus = 0;      // relative frequency of the tag in the corpus
  double activation = 0;  // share of total activation mass on records with the tag
};

struct TagMatch {
  std::vector<TagShare> rows;  // sorted by tag
  double l1 = 0;
};

/// Corpus tag frequencies against per-tag shares of the stage's activation mass.
inline TagMatch tag_frequency_match(const TagAnnotation& corpus, const TraceMatrix& trace) {
  if (corpus.token_count() == 0) throw DataError("tag frequency match needs annotated tokens");
  if (!trace.tagged()) throw DataError("tag frequency match needs a tagged trace");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus.tags)
    for (const auto& t : s) ++freq[t];
  std::map<std::string, ExactSum> mass;
  ExactSum total;
  for (const auto& r : trace.records) {
    mass[*r.tag].add(r.activation);
    total.add(r.activation);
  }
  std::set<std::string> tags;
  for (const auto& [t, _] : freq) tags.insert(t);
  for (const auto& [t, _] : mass) tags.insert(t);
  const double n = static_cast<double>(corpus.token_count());
  const double m = total.value();
  TagMatch out;
  for (const auto& t : tags) {
    TagShare row{t, 0, 0};
    if (auto it = freq.find(t); it != freq.end()) row.corpus = static_cast<double>(it->second) / n;
    if (auto it = mass.find(t); it != mass.end() && m > 0) row.activation = it->second.value() / m;
    out.l1 += std::fabs(row.corpus - row.activation);
    out.rows.push_back(row);
  }
  return out;
}

enum class LengthDirection { Longer, Shorter, Unchanged };

inline std::string to_string(LengthDirection d) {
  switch (d) {
    case LengthDirection::Longer: return "longer";
    case LengthDirection::Shorter: return "shorter";
    case LengthDirection::Unchanged: return "unchanged";
  }
  return "unchanged";
}

struct LengthShiftRow {
  int neuron = 0;
  std::size_t length_a = 0;
  std::size_t length_b = 0;
  LengthDirection direction = LengthDirection::Unchanged;
};

struct LengthShift {
  std::string stage_a, stage_b;
  std::vector<LengthShiftRow> rows;
  std::size_t longer = 0, shorter = 0, unchanged = 0;
  double mean_shared_length_a = 0;
  double mean_shared_length_b = 0;
};

inline LengthDirection length_direction(std::size_t a, std::size_t b) {
  return b > a ? LengthDirection::Longer : (b < a ? LengthDirection::Shorter : LengthDirection::Unchanged);
}

inline LengthShift length_shift(const ModelPreference& a, const ModelPreference& b) {
  require_comparable(a, b);
  LengthShift out;
  out.stage_a = a.meta.stage_id;
  out.stage_b = b.meta.stage_id;
  double la = 0, lb = 0;
  std::size_t shared = 0;
  for (int n = 0; n < a.hidden(); ++n) {
    LengthShiftRow r{n, a[n].length(), b[n].length(), length_direction(a[n].length(), b[n].length())};
    switch (r.direction) {
      case LengthDirection::Longer: ++out.longer; break;
      case LengthDirection::Shorter: ++out.shorter; break;
      case LengthDirection::Unchanged: ++out.unchanged; break;
    }
    if (r.length_a > 0 && r.length_b > 0) {
      la += static_cast<double>(r.length_a);
      lb += static_cast<double>(r.length_b);
      ++shared;
    }
    out.rows.push_back(r);
  }
  if (shared) {
    out.mean_shared_length_a = la / static_cast<double>(shared);
    out.mean_shared_length_b = lb / static_cast<double>(shared);
  }
  return out;
}

struct MassPoint {
  std::size_t rank = 0;  // 0 = heaviest
  int neuron = 0;
  double mass = 0;
};

struct MassCurve {
  std::string stage_id;
  std::vector<MassPoint> points;  // non-increasing mass; ties by neuron index
  double gini = 0;
};

/// Gini coefficient of non-negative values; all-zero input is 0 with a warning.
inline double gini(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  double total = 0, weighted = 0;
  const auto n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += xs[i];
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * xs[i];
  }
  if (total <= 0) {
    warn("Gini undefined for all-zero activation masses; reporting 0");
    return 0.0;
  }
  return std::clamp(weighted / (n * total), 0.0, 1.0);
}

inline MassCurve mass_curve(const std::vector<double>& masses, std::string stage_id = {}) {
  MassCurve c;
  c.stage_id = std::move(stage_id);
  for (std::size_t n = 0; n < masses.size(); ++n) c.points.push_back({0, static_cast<int>(n), masses[n]});
  std::stable_sort(c.points.begin(), c.points.end(), [](const MassPoint& a, const MassPoint& b) { return a.mass > b.mass; });
  for (std::size_t r = 0; r < c.points.size(); ++r) c.points[r].rank = r;
  c.gini = gini(masses);
  return c;
}

inline std::vector<double> neuron_masses(const ModelPreference& mp) {
  std::vector<double> out;
  for (const auto& d : mp.neurons) out.push_back(d.record_mass);
  return out;
}

inline MassCurve mass_curve(const ModelPreference& mp) { return mass_curve(neuron_masses(mp), mp.meta.stage_id); }

}  // namespace txray
