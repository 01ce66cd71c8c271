#pragma once

// Test helpers and independent reference implementations. The oracles here
// are written from the definitions, without reusing library code paths.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "txray/txray.hpp"

namespace txray::testing {

/// Distribution with explicit probabilities, keyed by feature id.
inline PreferenceDistribution dist(int neuron, const std::map<int, double>& probs) {
  PreferenceDistribution d;
  d.neuron = neuron;
  for (const auto& [f, p] : probs) {
    PreferenceEntry e;
    e.feature = f;
    e.sum = p;
    e.count = 1;
    e.p = p;
    d.entries.push_back(e);
    d.mean_mass += p;
    d.record_mass += p;
  }
  return d;
}

/// Stage whose neuron n has `lengths[n]` uniform features and mass `masses[n]`.
inline ModelPreference stage_with(const std::string& id, const std::vector<std::size_t>& lengths,
                                  const std::vector<double>& masses = {}) {
  ModelPreference mp;
  mp.meta.stage_id = id;
  mp.meta.corpus_id = "synthetic";
  mp.meta.hidden = static_cast<int>(lengths.size());
  for (std::size_t n = 0; n < lengths.size(); ++n) {
    std::map<int, double> probs;
    for (std::size_t f = 0; f < lengths[n]; ++f) probs[static_cast<int>(f)] = 1.0 / static_cast<double>(lengths[n]);
    auto d = dist(static_cast<int>(n), probs);
    d.record_mass = masses.empty() ? static_cast<double>(lengths[n]) : masses[n];
    if (lengths[n] == 0) d.record_mass = 0;
    mp.neurons.push_back(std::move(d));
  }
  return mp;
}

inline TraceMatrix random_trace(std::uint64_t seed, std::size_t records, int hidden, int vocab,
                                const std::vector<std::string>& tags = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> nd(0, hidden - 1), fd(0, vocab - 1);
  std::uniform_real_distribution<double> ad(0.0, 1.0);
  TraceMatrix t;
  t.meta.stage_id = "random";
  t.meta.corpus_id = "random";
  t.meta.hidden = hidden;
  t.meta.vocab_size = vocab;
  t.meta.token_budget = records;
  for (std::size_t i = 0; i < records; ++i) {
    TraceRecord r;
    r.feature = fd(rng);
    r.neuron = nd(rng);
    r.activation = ad(rng);
    if (!tags.empty()) r.tag = tags[static_cast<std::size_t>(r.feature) % tags.size()];
    t.records.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Oracles.

/// Hellinger distance over dense maps, straight from the definition.
inline double hellinger_oracle(const std::map<int, double>& p, const std::map<int, double>& q) {
  std::map<int, std::pair<double, double>> u;
  for (const auto& [f, v] : p) u[f].first = v;
  for (const auto& [f, v] : q) u[f].second = v;
  long double s = 0;
  for (const auto& [f, pq] : u) {
    const long double d = std::sqrt(static_cast<long double>(pq.first)) - std::sqrt(static_cast<long double>(pq.second));
    s += d * d;
  }
  return static_cast<double>(std::sqrt(s) / std::sqrt(2.0L));
}

struct OracleNeuron {
  std::map<int, double> probs;
  double record_mass = 0;
};

/// Single-pass brute-force aggregation in extended precision.
inline std::vector<OracleNeuron> aggregate_oracle(const TraceMatrix& t) {
  std::vector<std::map<int, std::pair<long double, long>>> acc(static_cast<std::size_t>(t.meta.hidden));
  std::vector<long double> mass(acc.size(), 0.0L);
  for (const auto& r : t.records) {
    auto& cell = acc[static_cast<std::size_t>(r.neuron)][r.feature];
    cell.first += r.activation;
    cell.second += 1;
    mass[static_cast<std::size_t>(r.neuron)] += r.activation;
  }
  std::vector<OracleNeuron> out(acc.size());
  for (std::size_t n = 0; n < acc.size(); ++n) {
    long double s_mu = 0;
    for (const auto& [f, c] : acc[n]) s_mu += c.first / c.second;
    for (const auto& [f, c] : acc[n]) out[n].probs[f] = static_cast<double>((c.first / c.second) / s_mu);
    out[n].record_mass = static_cast<double>(mass[n]);
  }
  return out;
}

/// Gini coefficient from the mean absolute difference definition.
inline double gini_oracle(const std::vector<double>& xs) {
  long double diff = 0, total = 0;
  for (double a : xs) {
    total += a;
    for (double b : xs) diff += std::fabs(static_cast<long double>(a) - b);
  }
  const auto n = static_cast<long double>(xs.size());
  return static_cast<double>(diff / (2.0L * n * total));
}

inline double f1_oracle(int tp, int fp, int fn) {
  const double precision = static_cast<double>(tp) / (tp + fp);
  const double recall = static_cast<double>(tp) / (tp + fn);
  return 2 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Files.

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("txray_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

/// Tiny labeled set where the label is the presence of token "good".
inline std::vector<LabeledExample> separable_dataset(const Vocabulary& vocab, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> filler{"the", "movie", "was", "plot", "a", "and"};
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> toks;
    const int len = 3 + static_cast<int>(rng() % 4);
    for (int k = 0; k < len; ++k) toks.push_back(filler[rng() % filler.size()]);
    const int label = static_cast<int>(i % 2);
    if (label) toks.insert(toks.begin() + static_cast<long>(rng() % toks.size()), "good");
    out.push_back({encode(toks, vocab), label});
  }
  return out;
}

}  // namespace txray::testing
