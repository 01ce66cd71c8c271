#pragma once

// Activation traces: one record per token occurrence naming the hidden unit
// that fired hardest on it.
//
// File format (JSON Lines): the first line is the meta object, every further
// line one record {"f":int,"n":int,"a":float,"yhat":float?,"y":int?,"t":string?}.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "txray/corpus.hpp"
#include "txray/encoder.hpp"
#include "txray/error.hpp"

namespace txray {

/// How "maximally active" treats signed LSTM outputs.
enum class MagnitudeMode {
  Absolute,  // argmax |a|, record |a|
  Raw,       // argmax a, drop the token when max a <= 0
};

inline std::string to_string(MagnitudeMode m) { return m == MagnitudeMode::Absolute ? "abs" : "raw"; }

inline MagnitudeMode parse_mode(const std::string& s) {
  if (s == "abs") return MagnitudeMode::Absolute;
  if (s == "raw") return MagnitudeMode::Raw;
  throw UsageError("magnitude mode must be 'abs' or 'raw', got '" + s + "'");
}

struct TraceRecord {
  TokenId feature = 0;
  int neuron = 0;
  double activation = 0;
  std::optional<double> predicted;
  std::optional<int> truth;
  std::optional<std::string> tag;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceMeta {
  static constexpr int kVersion = 1;

  std::string stage_id;
  std::string corpus_id;
  int hidden = 0;
  int vocab_size = 0;
  MagnitudeMode mode = MagnitudeMode::Absolute;
  std::size_t token_budget = 0;
  std::vector<std::string> vocab;  // token strings by id; may be empty
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

struct TraceMatrix {
  TraceMeta meta;
  std::vector<TraceRecord> records;

  bool tagged() const {
    return !records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) { return r.tag.has_value(); });
  }
  friend bool operator==(const TraceMatrix&, const TraceMatrix&) = default;
};

struct MaxActivation {
  int neuron = 0;
  double activation = 0;
};

/// Picks the maximally active unit; ties go to the lowest index. Units the
/// mask removes are never chosen. Returns nothing in raw mode when no kept
/// unit is positive.
template <class Range>
std::optional<MaxActivation> pick_max(const Range& hidden, MagnitudeMode mode, const PruneMask* mask = nullptr) {
  std::optional<MaxActivation> best;
  int n = 0;
  for (auto v : hidden) {
    if (!mask || mask->keeps(n)) {
      const double a = mode == MagnitudeMode::Absolute ? std::fabs(static_cast<double>(v)) : static_cast<double>(v);
      if (!best || a > best->activation) best = MaxActivation{n, a};
    }
    ++n;
  }
  if (best && mode == MagnitudeMode::Raw && best->activation <= 0.0) return std::nullopt;
  return best;
}

struct RecordOptions {
  MagnitudeMode mode = MagnitudeMode::Absolute;
  const TagAnnotation* annotations = nullptr;  // same shape as the corpus
  const std::vector<int>* labels = nullptr;    // one per sequence
  const PruneMask* mask = nullptr;
  unsigned threads = 1;
};

/// Worker count from TXRAY_THREADS, capped by the hardware.
inline unsigned threads_from_env() {
  const char* v = std::getenv("TXRAY_THREADS");
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (!v || !*v) return hw;
  const long n = std::strtol(v, nullptr, 10);
  if (n < 1) return 1;
  return std::min<unsigned>(static_cast<unsigned>(n), hw);
}

/// Runs the snapshot over every sequence and records one row per token.
/// Sequences may be split across workers; rows are stitched back in corpus
/// order, so the output does not depend on the thread count.
inline TraceMatrix record_trace(const Snapshot& snap, const std::vector<TokenSequence>& corpus, TraceMeta meta,
                                const RecordOptions& opt = {}) {
  if (corpus.empty()) throw DataError("cannot trace an empty corpus");
  if (opt.annotations) {
    if (opt.annotations->tags.size() != corpus.size()) {
      throw DataError("annotations cover " + std::to_string(opt.annotations->tags.size()) + " sequences, corpus has " +
                      std::to_string(corpus.size()));
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (opt.annotations->tags[i].size() != corpus[i].size()) {
        throw DataError("annotation misaligned with sequence " + std::to_string(i) + " (token offset " +
                        std::to_string(corpus[i].source_offset) + ")");
      }
    }
  }
  if (opt.labels && opt.labels->size() != corpus.size()) throw DataError("label count does not match sequence count");
  meta.hidden = snap.params.hidden;
  meta.vocab_size = snap.params.vocab;
  meta.mode = opt.mode;
  if (meta.stage_id.empty()) meta.stage_id = snap.stage_id;
  if (meta.vocab.empty()) meta.vocab = snap.vocab;

  std::vector<std::vector<TraceRecord>> per_seq(corpus.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& seq = corpus[i];
      const Mat<float> hs = forward_hidden(snap.params, seq.ids, opt.mask);
      std::optional<double> yhat;
      if (snap.head) {
        const float z = head_logit<float>(*snap.head, hs.col(hs.cols() - 1));
        yhat = 1.0 / (1.0 + std::exp(-static_cast<double>(z)));
      }
      auto& out = per_seq[i];
      out.reserve(seq.size());
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto col = hs.col(static_cast<Eigen::Index>(t));
        auto best = pick_max(std::span<const float>(col.data(), static_cast<std::size_t>(col.size())), opt.mode, opt.mask);
        if (!best) continue;
        TraceRecord r;
        r.feature = seq.ids[t];
        r.neuron = best->neuron;
        r.activation = best->activation;
        r.predicted = yhat;
        if (opt.labels) r.truth = (*opt.labels)[i];
        if (opt.annotations) r.tag = opt.annotations->tags[i][t];
        out.push_back(std::move(r));
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(corpus.size())));
  if (workers == 1) {
    work(0, corpus.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (corpus.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(corpus.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  TraceMatrix m{std::move(meta), {}};
  for (auto& v : per_seq) {
    m.records.insert(m.records.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json meta_to_json(const TraceMeta& m) {
  return {{"format", "txray-trace"},    {"version", TraceMeta::kVersion}, {"stage_id", m.stage_id},
          {"corpus_id", m.corpus_id},   {"h", m.hidden},                  {"vocab_size", m.vocab_size},
          {"mode", to_string(m.mode)},  {"token_budget", m.token_budget}, {"vocab", m.vocab},
          {"config", m.config}};
}

inline TraceMeta meta_from_json(const nlohmann::json& j) {
  TraceMeta m;
  try {
    if (j.at("format").get<std::string>() != "txray-trace") throw ParseError("not a trace file", 1);
    const int version = j.at("version").get<int>();
    if (version != TraceMeta::kVersion) {
      throw ParseError("unsupported trace version " + std::to_string(version) + " (expected " +
                           std::to_string(TraceMeta::kVersion) + ")",
                       1);
    }
    m.stage_id = j.at("stage_id").get<std::string>();
    m.corpus_id = j.at("corpus_id").get<std::string>();
    m.hidden = j.at("h").get<int>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.token_budget = j.at("token_budget").get<std::size_t>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    m.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed trace meta: ") + e.what(), 1);
  } catch (const UsageError& e) {
    throw ParseError(e.what(), 1);
  }
  if (m.hidden < 1) throw ParseError("trace meta h must be positive", 1);
  if (m.vocab_size < 1) throw ParseError("trace meta vocab_size must be positive", 1);
  if (!m.vocab.empty() && m.vocab.size() != static_cast<std::size_t>(m.vocab_size)) {
    throw ParseError("trace meta vocab list disagrees with vocab_size", 1);
  }
  return m;
}

inline nlohmann::json record_to_json(const TraceRecord& r) {
  nlohmann::json j = {{"f", r.feature}, {"n", r.neuron}, {"a", r.activation}};
  if (r.predicted) j["yhat"] = *r.predicted;
  if (r.truth) j["y"] = *r.truth;
  if (r.tag) j["t"] = *r.tag;
  return j;
}

inline TraceRecord record_from_json(const nlohmann::json& j, const TraceMeta& meta, std::size_t line) {
  TraceRecord r;
  try {
    r.feature = j.at("f").get<TokenId>();
    r.neuron = j.at("n").get<int>();
    r.activation = j.at("a").get<double>();
    if (j.contains("yhat")) r.predicted = j.at("yhat").get<double>();
    if (j.contains("y")) r.truth = j.at("y").get<int>();
    if (j.contains("t")) r.tag = j.at("t").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed trace record: ") + e.what(), line);
  }
  if (r.neuron < 0 || r.neuron >= meta.hidden) {
    throw ParseError("record neuron " + std::to_string(r.neuron) + " out of bounds for h=" + std::to_string(meta.hidden),
                     line);
  }
  if (r.feature < 0 || r.feature >= meta.vocab_size) {
    throw ParseError("record feature " + std::to_string(r.feature) + " out of bounds for vocab_size=" +
                         std::to_string(meta.vocab_size),
                     line);
  }
  if (!std::isfinite(r.activation) || r.activation < 0.0) {
    throw ParseError("record activation must be finite and non-negative", line);
  }
  if (r.predicted && !(*r.predicted >= 0.0 && *r.predicted <= 1.0)) throw ParseError("record yhat outside [0,1]", line);
  if (r.truth && *r.truth != 0 && *r.truth != 1) throw ParseError("record y must be 0 or 1", line);
  return r;
}

inline void write_trace(std::ostream& out, const TraceMatrix& m) {
  out << meta_to_json(m.meta).dump() << '\n';
  for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
}

inline TraceMatrix read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ParseError("trace file is empty", 1);
  TraceMatrix m;
  try {
    m.meta = meta_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("trace meta is not valid JSON: ") + e.what(), 1);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (in.eof()) throw ParseError("trace file truncated (last record lacks a newline)", line_no);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError("trace record is not valid JSON (truncated file?)", line_no);
    }
    m.records.push_back(record_from_json(j, m.meta, line_no));
  }
  return m;
}

inline void save_trace(const std::string& path, const TraceMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write trace " + path);
  write_trace(out, m);
}

inline TraceMatrix load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace " + path);
  return read_trace(in);
}

}  // namespace txray
