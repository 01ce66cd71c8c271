#pragma once

// Pruning experiments over a fine-tuned encoder: pick a neuron set by
// policy, mask it out, and measure how train/test F1 move.

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "txray/encoder.hpp"
#include "txray/metrics.hpp"
#include "txray/preference.hpp"

namespace txray {

struct PrunePolicy {
  enum class Kind { Avoided, LeastActive, MostActive, GainedBySupervision, Explicit };

  Kind kind = Kind::Avoided;
  int k = 0;                 // LeastActive / MostActive
  std::vector<int> neurons;  // Explicit

  static PrunePolicy avoided() { return {Kind::Avoided, 0, {}}; }
  static PrunePolicy least_active(int k) { return {Kind::LeastActive, k, {}}; }
  static PrunePolicy most_active(int k) { return {Kind::MostActive, k, {}}; }
  static PrunePolicy gained() { return {Kind::GainedBySupervision, 0, {}}; }
  static PrunePolicy explicit_set(std::vector<int> ns) { return {Kind::Explicit, 0, std::move(ns)}; }

  std::string name() const {
    switch (kind) {
      case Kind::Avoided: return "avoided";
      case Kind::LeastActive: return "least:" + std::to_string(k);
      case Kind::MostActive: return "most:" + std::to_string(k);
      case Kind::GainedBySupervision: return "gained";
      case Kind::Explicit: return "explicit";
    }
    return "explicit";
  }
};

/// Newline-separated neuron indices (the explorer's export format). Blank
/// lines are ignored; duplicates collapse.
inline std::vector<int> read_neuron_list(std::istream& in) {
  std::set<int> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(line, &used);
    } catch (const std::exception&) {
      throw ParseError("neuron list entry '" + line + "' is not an integer", line_no);
    }
    if (used != line.size() || v < 0) throw ParseError("neuron list entry '" + line + "' is not a non-negative integer", line_no);
    out.insert(v);
  }
  return {out.begin(), out.end()};
}

inline std::vector<int> load_neuron_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open neuron list " + path);
  return read_neuron_list(in);
}

inline void write_neuron_list(std::ostream& out, std::vector<int> neurons) {
  std::sort(neurons.begin(), neurons.end());
  neurons.erase(std::unique(neurons.begin(), neurons.end()), neurons.end());
  for (int n : neurons) out << n << '\n';
}

/// Parses `avoided | least:k | most:k | gained | file:<path>`.
inline PrunePolicy parse_policy(const std::string& spec) {
  auto parse_k = [&](const std::string& v) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(v, &used);
    } catch (const std::exception&) {
      throw UsageError("policy '" + spec + "' needs an integer k");
    }
    if (used != v.size() || k < 1) throw UsageError("policy '" + spec + "' needs k >= 1");
    return k;
  };
  if (spec == "avoided") return PrunePolicy::avoided();
  if (spec == "gained") return PrunePolicy::gained();
  if (spec.rfind("least:", 0) == 0) return PrunePolicy::least_active(parse_k(spec.substr(6)));
  if (spec.rfind("most:", 0) == 0) return PrunePolicy::most_active(parse_k(spec.substr(5)));
  if (spec.rfind("file:", 0) == 0) return PrunePolicy::explicit_set(load_neuron_list(spec.substr(5)));
  throw UsageError("unknown prune policy '" + spec + "' (avoided|least:k|most:k|gained|file:<path>)");
}

/// Neuron set for a policy, sorted ascending. Activity ranks use the
/// `after` stage's activation masses; ties prefer the lower index.
inline std::vector<int> select(const PrunePolicy& policy, const ModelPreference& before, const ModelPreference& after) {
  require_comparable(before, after);
  const int h = after.hidden();
  std::vector<int> out;
  using K = PrunePolicy::Kind;
  switch (policy.kind) {
    case K::Avoided:
    case K::GainedBySupervision: {
      const auto want = policy.kind == K::Avoided ? NeuronState::Avoided : NeuronState::Gained;
      for (int n = 0; n < h; ++n)
        if (classify_state(before[n], after[n]) == want) out.push_back(n);
      break;
    }
    case K::LeastActive:
    case K::MostActive: {
      if (policy.k < 1) throw DataError("policy k must be >= 1");
      std::vector<int> active;
      for (int n = 0; n < h; ++n)
        if (after[n].record_mass > 0) active.push_back(n);
      if (static_cast<std::size_t>(policy.k) > active.size()) {
        throw DataError("policy " + policy.name() + " asks for " + std::to_string(policy.k) + " neurons but only " +
                        std::to_string(active.size()) + " have nonzero activation mass");
      }
      const bool most = policy.kind == K::MostActive;
      std::stable_sort(active.begin(), active.end(), [&](int a, int b) {
        return most ? after[a].record_mass > after[b].record_mass : after[a].record_mass < after[b].record_mass;
      });
      out.assign(active.begin(), active.begin() + policy.k);
      break;
    }
    case K::Explicit:
      for (int n : policy.neurons) {
        if (n < 0 || n >= h) throw DataError("explicit prune index " + std::to_string(n) + " outside 0.." + std::to_string(h - 1));
      }
      out = policy.neurons;
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Percentage change, 100 * (after - before) / before.
inline double relative_change(double before, double after) {
  if (before == 0.0) throw IllDefinedError("relative change is undefined for a zero baseline");
  return 100.0 * (after - before) / before;
}

struct PruneReport {
  std::string policy;
  std::vector<int> neurons;
  double mass_share = 0;  // % of the stage's total activation mass
  double f1_train_before = 0, f1_train_after = 0;
  double f1_test_before = 0, f1_test_after = 0;
  double rel_train_change = 0, rel_test_change = 0;

  std::size_t neuron_count() const { return neurons.size(); }
  friend bool operator==(const PruneReport&, const PruneReport&) = default;
};

/// Share of `stage` activation mass held by `neurons`, in percent.
inline double mass_share(const ModelPreference& stage, const std::vector<int>& neurons) {
  ExactSum sel, all;
  for (const auto& d : stage.neurons) all.add(d.record_mass);
  for (int n : neurons) sel.add(stage[n].record_mass);
  const double total = all.value();
  if (total <= 0) return 0.0;
  return 100.0 * sel.value() / total;
}

/// Pure ablation: the snapshot is never retrained after masking.
inline PruneReport run_experiment(const Snapshot& sup, const ModelPreference& before, const ModelPreference& after,
                                  const PrunePolicy& policy, std::span<const LabeledExample> train,
                                  std::span<const LabeledExample> test) {
  if (!sup.head) throw DataError("pruning experiments need a snapshot with a classifier head");
  if (after.hidden() != sup.params.hidden) {
    throw ContractError("stage h=" + std::to_string(after.hidden()) + " does not match snapshot h=" +
                        std::to_string(sup.params.hidden));
  }
  PruneReport r;
  r.policy = policy.name();
  r.neurons = select(policy, before, after);
  r.mass_share = mass_share(after, r.neurons);
  const PruneMask mask = PruneMask::pruning(sup.params.hidden, r.neurons);
  r.f1_train_before = evaluate_f1(sup, train);
  r.f1_test_before = evaluate_f1(sup, test);
  r.f1_train_after = evaluate_f1(sup, train, &mask);
  r.f1_test_after = evaluate_f1(sup, test, &mask);
  r.rel_train_change = relative_change(r.f1_train_before, r.f1_train_after);
  r.rel_test_change = relative_change(r.f1_test_before, r.f1_test_after);
  return r;
}

inline nlohmann::json to_json(const PruneReport& r) {
  return {{"policy", r.policy},
          {"neurons", r.neurons},
          {"neuron_count", r.neurons.size()},
          {"mass_share", r.mass_share},
          {"f1_train_before", r.f1_train_before},
          {"f1_train_after", r.f1_train_after},
          {"f1_test_before", r.f1_test_before},
          {"f1_test_after", r.f1_test_after},
          {"rel_train_change", r.rel_train_change},
          {"rel_test_change", r.rel_test_change}};
}

inline PruneReport prune_report_from_json(const nlohmann::json& j) {
  PruneReport r;
  r.policy = j.at("policy").get<std::string>();
  r.neurons = j.at("neurons").get<std::vector<int>>();
  if (j.at("neuron_count").get<std::size_t>() != r.neurons.size()) throw ParseError("prune report neuron_count mismatch");
  r.mass_share = j.at("mass_share").get<double>();
  if (r.mass_share < 0 || r.mass_share > 100) throw ParseError("prune report mass_share outside [0,100]");
  r.f1_train_before = j.at("f1_train_before").get<double>();
  r.f1_train_after = j.at("f1_train_after").get<double>();
  r.f1_test_before = j.at("f1_test_before").get<double>();
  r.f1_test_after = j.at("f1_test_after").get<double>();
  r.rel_train_change = j.at("rel_train_change").get<double>();
  r.rel_test_change = j.at("rel_test_change").get<double>();
  return r;
}

}  // namespace txray
