#pragma once

// End-to-end recipes over the bundled corpora: epoch comparison (rq1),
// zero-shot domain transfer (rq2) and supervision back-transfer with
// pruning (rq3). Each returns a report plus the intermediate stages.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "txray/config.hpp"
#include "txray/corpus.hpp"
#include "txray/encoder.hpp"
#include "txray/metrics.hpp"
#include "txray/preference.hpp"
#include "txray/pruning.hpp"
#include "txray/render.hpp"
#include "txray/report.hpp"
#include "txray/snapshot_io.hpp"
#include "txray/trace.hpp"

namespace txray {

/// A traced (snapshot, corpus) pair.
struct Stage {
  TraceMatrix trace;
  ModelPreference tokens;
  std::optional<ModelPreference> tags;
};

struct TracedCorpus {
  std::string id;
  TextCorpus text;
  std::vector<TokenSequence> encoded;
  std::optional<TagAnnotation> annotations;
  std::optional<std::vector<int>> labels;
};

/// The LM vocabulary spans the pretraining corpus and the target-domain
/// training text so zero-shot traces index the same feature ids.
inline Vocabulary workflow_vocab(const RunConfig& cfg) {
  VocabBuilder b;
  const auto wiki = load_text_corpus(cfg.corpus);
  for (const auto& s : wiki.sequences) b.add_tokens(s);
  if (!cfg.train_labels.empty()) {
    const auto reviews = load_labeled(cfg.train_labels);
    for (const auto& s : reviews.corpus.sequences) b.add_tokens(s);
  }
  return b.build(cfg.min_count);
}

inline TracedCorpus load_plain(const std::string& path, const std::string& tags_path, const std::string& id,
                               const Vocabulary& vocab, std::size_t budget) {
  TracedCorpus c;
  c.id = id;
  const auto full = load_text_corpus(path, id);
  c.text = slice_first_tokens(full, budget);
  if (!tags_path.empty()) c.annotations = slice_first_tokens(load_annotations(tags_path, full), budget);
  c.encoded = encode_corpus(c.text, vocab);
  return c;
}

inline TracedCorpus load_labeled_corpus(const std::string& path, const std::string& tags_path, const std::string& id,
                                        const Vocabulary& vocab, std::size_t budget) {
  TracedCorpus c;
  c.id = id;
  const auto full = load_labeled(path, id);
  c.text = slice_first_tokens(full.corpus, budget);
  if (!tags_path.empty()) c.annotations = slice_first_tokens(load_annotations(tags_path, full.corpus), budget);
  c.labels = std::vector<int>(full.labels.begin(), full.labels.begin() + static_cast<std::ptrdiff_t>(c.text.sequences.size()));
  c.encoded = encode_corpus(c.text, vocab);
  return c;
}

inline Stage trace_stage(const Snapshot& snap, const TracedCorpus& corpus, const std::string& stage_id, const RunConfig& cfg) {
  TraceMeta meta;
  meta.stage_id = stage_id;
  meta.corpus_id = corpus.id;
  meta.token_budget = cfg.token_budget;
  meta.config = cfg.to_json();
  RecordOptions opt;
  opt.mode = cfg.mode;
  opt.annotations = corpus.annotations ? &*corpus.annotations : nullptr;
  opt.labels = corpus.labels ? &*corpus.labels : nullptr;
  opt.threads = threads_from_env();
  Stage s;
  s.trace = record_trace(snap, corpus.encoded, std::move(meta), opt);
  s.tokens = aggregate(s.trace);
  if (s.trace.tagged()) s.tags = project_to_tags(s.trace);
  return s;
}

inline std::vector<Snapshot> pretrain(const RunConfig& cfg, const Vocabulary& vocab, std::vector<EpochLog>* log = nullptr) {
  const auto wiki = load_text_corpus(cfg.corpus);
  const auto stream = flatten(encode_corpus(wiki, vocab));
  auto params = init_params(cfg.seed, static_cast<int>(vocab.size()), cfg.embed, cfg.hidden);
  auto snaps = train_lm(std::move(params), stream, cfg.lm, cfg.snapshot_epochs, log);
  for (auto& s : snaps) {
    s.vocab = vocab.tokens();
    s.hyperparams["run_config"] = cfg.to_json();
  }
  return snaps;
}

/// Snapshot at the final requested epoch, training only that far.
inline Snapshot pretrain_final(const RunConfig& cfg, const Vocabulary& vocab) {
  RunConfig c = cfg;
  c.snapshot_epochs = {cfg.lm.epochs};
  return pretrain(c, vocab).back();
}

inline void add_comparison(Report& r, const ModelPreference& a, const ModelPreference& b) {
  r.comparisons.push_back(comparison_section(compare(a, b)));
  r.length_shifts.push_back(length_shift_section(length_shift(a, b)));
}

inline void add_stage_sections(Report& r, const Stage& s, const TracedCorpus& corpus) {
  add_stage(r, s.tokens);
  add_details(r, s.tokens);
  if (s.tags) add_details(r, *s.tags);
  r.mass_curves.push_back(mass_curve_section(mass_curve(s.tokens)));
  if (corpus.annotations && s.trace.tagged()) {
    const auto m = tag_frequency_match(*corpus.annotations, s.trace);
    r.tag_match.push_back({s.tokens.meta.stage_id, m.rows, m.l1});
  }
}

struct Rq1Result {
  Report report;
  std::vector<Snapshot> snapshots;
  std::vector<Stage> stages;
  std::vector<EpochLog> log;
};

/// Epoch comparison on the pretraining corpus: consecutive snapshot pairs.
inline Rq1Result run_rq1(const RunConfig& cfg) {
  cfg.validate();
  Rq1Result out;
  const auto vocab = workflow_vocab(cfg);
  out.snapshots = pretrain(cfg, vocab, &out.log);
  const auto wiki = load_plain(cfg.corpus, cfg.annotations, "wiki", vocab, cfg.token_budget);
  out.report.config = cfg.to_json();
  out.report.config["recipe"] = "rq1";
  for (const auto& snap : out.snapshots) {
    out.stages.push_back(trace_stage(snap, wiki, snap.stage_id, cfg));
    add_stage_sections(out.report, out.stages.back(), wiki);
  }
  for (std::size_t i = 1; i < out.stages.size(); ++i) add_comparison(out.report, out.stages[i - 1].tokens, out.stages[i].tokens);
  return out;
}

struct Rq2Result {
  Report report;
  Snapshot snapshot;
  Stage source, target;
};

/// Same encoder applied to its pretraining corpus and, untouched, to the
/// review domain.
inline Rq2Result run_rq2(const RunConfig& cfg) {
  cfg.validate();
  Rq2Result out;
  const auto vocab = workflow_vocab(cfg);
  out.snapshot = pretrain_final(cfg, vocab);
  const auto wiki = load_plain(cfg.corpus, cfg.annotations, "wiki", vocab, cfg.token_budget);
  const auto reviews = load_labeled_corpus(cfg.train_labels, cfg.train_annotations, "reviews", vocab, cfg.token_budget);
  out.source = trace_stage(out.snapshot, wiki, "wiki-" + out.snapshot.stage_id, cfg);
  out.target = trace_stage(out.snapshot, reviews, "reviews-zs", cfg);
  out.report.config = cfg.to_json();
  out.report.config["recipe"] = "rq2";
  add_stage_sections(out.report, out.source, wiki);
  add_stage_sections(out.report, out.target, reviews);
  add_comparison(out.report, out.source.tokens, out.target.tokens);
  return out;
}

struct Rq3Result {
  Report report;
  Snapshot pretrained, supervised;
  Stage source, zero_shot, supervised_stage;
  ComparisonSummary zero_shot_comparison;   // pretraining corpus vs. zero-shot
  ComparisonSummary supervision_comparison; // zero-shot vs. supervised
  std::vector<EpochLog> finetune_log;
};

inline Rq3Result run_rq3(const RunConfig& cfg) {
  cfg.validate();
  Rq3Result out;
  const auto vocab = workflow_vocab(cfg);
  out.pretrained = pretrain_final(cfg, vocab);
  const auto wiki = load_plain(cfg.corpus, cfg.annotations, "wiki", vocab, cfg.token_budget);
  const auto reviews = load_labeled_corpus(cfg.train_labels, cfg.train_annotations, "reviews", vocab, cfg.token_budget);
  const auto test = encode_labeled(load_labeled(cfg.test_labels, "reviews-test"), vocab);
  const auto train = encode_labeled(load_labeled(cfg.train_labels, "reviews"), vocab);

  Snapshot zs = out.pretrained;
  zs.stage_id = "reviews";
  out.supervised = finetune_classifier(zs, train, cfg.finetune, &out.finetune_log);
  out.supervised.hyperparams["run_config"] = cfg.to_json();

  out.source = trace_stage(out.pretrained, wiki, "wiki-" + out.pretrained.stage_id, cfg);
  out.zero_shot = trace_stage(out.pretrained, reviews, "reviews-zs", cfg);
  out.supervised_stage = trace_stage(out.supervised, reviews, out.supervised.stage_id, cfg);
  out.zero_shot_comparison = compare(out.source.tokens, out.zero_shot.tokens);
  out.supervision_comparison = compare(out.zero_shot.tokens, out.supervised_stage.tokens);

  auto& r = out.report;
  r.config = cfg.to_json();
  r.config["recipe"] = "rq3";
  add_stage_sections(r, out.source, wiki);
  add_stage_sections(r, out.zero_shot, reviews);
  add_stage_sections(r, out.supervised_stage, reviews);
  add_comparison(r, out.source.tokens, out.zero_shot.tokens);
  add_comparison(r, out.zero_shot.tokens, out.supervised_stage.tokens);
  const auto stop = load_stopwords(cfg.stopwords);
  r.listings.push_back(gained_listing(out.zero_shot.tokens, out.supervised_stage.tokens, stop));

  const int k = cfg.effective_prune_k();
  for (const auto& policy : {PrunePolicy::avoided(), PrunePolicy::least_active(k), PrunePolicy::most_active(k), PrunePolicy::gained()}) {
    r.prune_reports.push_back(run_experiment(out.supervised, out.zero_shot.tokens, out.supervised_stage.tokens, policy, train, test));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writing recipe outputs.

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << s;
}

inline void write_figures(const Report& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < r.comparisons.size(); ++i) {
    const auto& c = r.comparisons[i];
    write_text(dir / ("scatter_" + c.stage_a + "_vs_" + c.stage_b + ".svg"), render_scatter(r, i));
    write_text(dir / ("length_shift_" + c.stage_a + "_vs_" + c.stage_b + ".svg"), render_length_shift(r, i));
  }
  if (!r.mass_curves.empty()) write_text(dir / "mass_curves.svg", render_mass_curve(r));
  if (!r.tag_match.empty()) write_text(dir / "tag_match.svg", render_tag_match(r));
  // Histogram for the heaviest neuron of the last stage.
  if (!r.mass_curves.empty() && !r.mass_curves.back().points.empty()) {
    const int n = r.mass_curves.back().points.front().neuron;
    write_text(dir / ("neuron_" + std::to_string(n) + "_tokens.svg"), render_histogram(r, n, "token"));
    bool has_tags = false;
    for (const auto& d : r.neuron_details) has_tags |= d.kind == "tag" && d.neuron == n;
    if (has_tags) write_text(dir / ("neuron_" + std::to_string(n) + "_tags.svg"), render_histogram(r, n, "tag"));
  }
}

inline void write_stage(const Stage& s, const std::filesystem::path& dir) {
  save_trace((dir / (s.tokens.meta.stage_id + ".trace.jsonl")).string(), s.trace);
  save_preference((dir / (s.tokens.meta.stage_id + ".pref.json")).string(), s.tokens);
  if (s.tags) save_preference((dir / (s.tokens.meta.stage_id + ".tags.pref.json")).string(), *s.tags);
}

}  // namespace txray
