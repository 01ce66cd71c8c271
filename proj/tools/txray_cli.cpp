// txray: command-line entry point chaining training, tracing, aggregation,
// comparison, pruning and reporting.
//
// Exit codes: 0 success, 1 usage error, 2 data or contract error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "txray/txray.hpp"

namespace fs = std::filesystem;
using namespace txray;

namespace {

struct Common {
  RunConfig cfg;
  std::string snapshots = "1,9,10";
  std::string mode = "abs";
#ifdef TXRAY_DEFAULT_DATA
  std::string data_dir = TXRAY_DEFAULT_DATA;
#else
  std::string data_dir = "data";
#endif
};

void add_model_flags(CLI::App* app, Common& c) {
  app->add_option("--seed", c.cfg.seed, "random seed")->capture_default_str();
  app->add_option("--hidden", c.cfg.hidden, "LSTM hidden units h")->capture_default_str();
  app->add_option("--embed", c.cfg.embed, "embedding size d")->capture_default_str();
  app->add_option("--epochs", c.cfg.lm.epochs, "pretraining epochs")->capture_default_str();
  app->add_option("--snapshots", c.snapshots, "epochs to snapshot, e.g. 1,9,10")->capture_default_str();
  app->add_option("--lr", c.cfg.lm.learning_rate, "LM learning rate")->capture_default_str();
  app->add_option("--lr-decay", c.cfg.lm.lr_decay, "LM learning-rate decay per epoch")->capture_default_str();
  app->add_option("--batch", c.cfg.lm.batch, "TBPTT lanes")->capture_default_str();
  app->add_option("--bptt", c.cfg.lm.bptt, "TBPTT window")->capture_default_str();
}

void add_trace_flags(CLI::App* app, Common& c) {
  app->add_option("--budget", c.cfg.token_budget, "token budget per traced corpus")->capture_default_str();
  app->add_option("--mode", c.mode, "activation magnitude mode: abs|raw")->capture_default_str();
}

void add_finetune_flags(CLI::App* app, Common& c) {
  app->add_option("--ft-epochs", c.cfg.finetune.epochs, "fine-tuning epochs")->capture_default_str();
  app->add_option("--ft-lr", c.cfg.finetune.learning_rate, "fine-tuning learning rate")->capture_default_str();
  app->add_option("--ft-batch", c.cfg.finetune.batch, "fine-tuning batch size")->capture_default_str();
}

void finish_config(Common& c) {
  c.cfg.snapshot_epochs = parse_epoch_list(c.snapshots);
  c.cfg.mode = parse_mode(c.mode);
  c.cfg.finetune.seed = c.cfg.seed;
  if (!c.data_dir.empty()) {
    const fs::path d(c.data_dir);
    c.cfg.corpus = (d / "wiki.txt").string();
    c.cfg.annotations = (d / "wiki.tags").string();
    c.cfg.train_labels = (d / "reviews_train.tsv").string();
    c.cfg.train_annotations = (d / "reviews_train.tags").string();
    c.cfg.test_labels = (d / "reviews_test.tsv").string();
    c.cfg.stopwords = (d / "stopwords.txt").string();
  }
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void print_summary(const ComparisonSection& c) {
  std::cout << c.stage_a << " vs " << c.stage_b << ": shared " << c.shared << ", avoided " << c.avoided << ", gained "
            << c.gained << ", never " << c.never << ", mean H " << c.mean_distance << ", median H " << c.median_distance
            << ", mean shared length " << c.mean_shared_length_a << " -> " << c.mean_shared_length_b << "\n";
}

void print_prune(const PruneReport& p) {
  std::cout << "prune " << p.policy << ": " << p.neurons.size() << " neurons, mass " << p.mass_share << "%, train F1 "
            << p.f1_train_before << " -> " << p.f1_train_after << " (" << p.rel_train_change << "%), test F1 " << p.f1_test_before
            << " -> " << p.f1_test_after << " (" << p.rel_test_change << "%)\n";
}

void write_report(const Report& r, const fs::path& path) {
  ensure_parent(path.string());
  export_report(path.string(), r);
}

// ---------------------------------------------------------------------------

void cmd_train(const Common& c, const std::string& corpus, const std::string& extra, const std::string& out) {
  c.cfg.validate();
  VocabBuilder b;
  for (const auto& s : load_text_corpus(corpus).sequences) b.add_tokens(s);
  if (!extra.empty())
    for (const auto& s : load_labeled(extra).corpus.sequences) b.add_tokens(s);
  const auto vocab = b.build(c.cfg.min_count);
  RunConfig cfg = c.cfg;
  cfg.corpus = corpus;
  cfg.train_labels = extra;
  std::vector<EpochLog> log;
  auto snaps = pretrain(cfg, vocab, &log);
  for (const auto& e : log) std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << "\n";
  fs::create_directories(out);
  for (const auto& s : snaps) {
    const auto path = (fs::path(out) / (s.stage_id + ".snap")).string();
    save_snapshot(path, s);
    std::cout << "wrote " << path << "\n";
  }
}

void cmd_finetune(const Common& c, const std::string& snap_path, const std::string& train_path, const std::string& stage,
                  const std::string& out) {
  c.cfg.validate();
  Snapshot base = load_snapshot(snap_path);
  const Vocabulary vocab(base.vocab);
  const auto train = encode_labeled(load_labeled(train_path), vocab);
  base.stage_id = stage.empty() ? stem_of(train_path) : stage;
  std::vector<EpochLog> log;
  auto sup = finetune_classifier(base, train, c.cfg.finetune, &log);
  for (const auto& e : log) std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << "\n";
  RunConfig cfg = c.cfg;
  cfg.train_labels = train_path;
  sup.hyperparams["run_config"] = cfg.to_json();
  std::cout << "train F1 " << evaluate_f1(sup, train) << "\n";
  ensure_parent(out);
  save_snapshot(out, sup);
  std::cout << "wrote " << out << " (" << sup.stage_id << ")\n";
}

void cmd_trace(const Common& c, const std::string& snap_path, const std::string& corpus, const std::string& labeled,
               const std::string& tags, std::string stage, const std::string& out) {
  if (corpus.empty() == labeled.empty()) throw UsageError("trace needs exactly one of --corpus or --labeled");
  const Snapshot snap = load_snapshot(snap_path);
  const Vocabulary vocab(snap.vocab);
  RunConfig cfg = c.cfg;
  cfg.hidden = snap.params.hidden;
  cfg.embed = snap.params.embed;
  const auto tc = labeled.empty() ? load_plain(corpus, tags, stem_of(corpus), vocab, cfg.token_budget)
                                  : load_labeled_corpus(labeled, tags, stem_of(labeled), vocab, cfg.token_budget);
  if (stage.empty()) stage = snap.stage_id;
  TraceMeta meta;
  meta.stage_id = stage;
  meta.corpus_id = tc.id;
  meta.token_budget = cfg.token_budget;
  meta.config = {{"snapshot", snap_path},
                 {"corpus", labeled.empty() ? corpus : labeled},
                 {"annotations", tags},
                 {"budget", cfg.token_budget},
                 {"mode", to_string(cfg.mode)},
                 {"snapshot_config", snap.hyperparams}};
  RecordOptions opt;
  opt.mode = cfg.mode;
  opt.annotations = tc.annotations ? &*tc.annotations : nullptr;
  opt.labels = tc.labels ? &*tc.labels : nullptr;
  opt.threads = threads_from_env();
  const auto trace = record_trace(snap, tc.encoded, meta, opt);
  ensure_parent(out);
  save_trace(out, trace);
  std::cout << "wrote " << out << " (" << trace.records.size() << " records)\n";
}

void cmd_aggregate(const std::string& trace_path, bool tags, const std::string& out) {
  const auto trace = load_trace(trace_path);
  const auto mp = tags ? project_to_tags(trace) : aggregate(trace);
  ensure_parent(out);
  save_preference(out, mp);
  std::size_t preferred = 0;
  for (const auto& d : mp.neurons) preferred += !d.empty();
  std::cout << "wrote " << out << " (" << preferred << " of " << mp.hidden() << " neurons preferred)\n";
}

void cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& out) {
  const auto a = load_preference(a_path);
  const auto b = load_preference(b_path);
  Report r;
  r.config = {{"a", a_path}, {"b", b_path}, {"a_config", a.meta.config}, {"b_config", b.meta.config}};
  add_stage(r, a);
  add_stage(r, b);
  add_comparison(r, a, b);
  print_summary(r.comparisons.front());
  if (!out.empty()) {
    write_report(r, out);
    std::cout << "wrote " << out << "\n";
  }
}

void cmd_prune(const Common& c, const std::string& snap_path, const std::string& before_path, const std::string& after_path,
               const std::string& policy_spec, const std::string& train_path, const std::string& test_path, const std::string& out) {
  const auto policy = parse_policy(policy_spec);
  const Snapshot sup = load_snapshot(snap_path);
  const Vocabulary vocab(sup.vocab);
  const auto before = load_preference(before_path);
  const auto after = load_preference(after_path);
  const auto train = encode_labeled(load_labeled(train_path), vocab);
  const auto test = encode_labeled(load_labeled(test_path), vocab);
  const auto rep = run_experiment(sup, before, after, policy, train, test);
  print_prune(rep);
  if (!out.empty()) {
    ensure_parent(out);
    nlohmann::json j = to_json(rep);
    j["config"] = {{"snapshot", snap_path}, {"before", before_path}, {"after", after_path}, {"policy", policy_spec},
                   {"train", train_path},   {"test", test_path},     {"seed", c.cfg.seed}};
    write_text(out, j.dump(1) + "\n");
    std::cout << "wrote " << out << "\n";
  }
}

void cmd_report(const std::vector<std::string>& prefs, const std::vector<std::string>& prunes, const std::string& from,
                const std::string& out, const std::string& svg_dir, const std::string& figure, std::size_t index, int neuron,
                const std::string& kind) {
  Report r;
  if (!from.empty()) {
    if (!prefs.empty()) throw UsageError("--from cannot be combined with --pref");
    r = load_report(from);
  } else {
    if (prefs.empty()) throw UsageError("report needs --pref files or --from <report.json>");
    std::vector<ModelPreference> stages;
    for (const auto& p : prefs) stages.push_back(load_preference(p));
    r.config = {{"preferences", prefs}};
    for (const auto& s : stages) {
      add_stage(r, s);
      add_details(r, s);
      r.mass_curves.push_back(mass_curve_section(mass_curve(s)));
    }
    for (std::size_t i = 1; i < stages.size(); ++i) add_comparison(r, stages[i - 1], stages[i]);
    for (const auto& p : prunes) r.prune_reports.push_back(prune_report_from_json(nlohmann::json::parse(std::ifstream(p))));
    validate(r);
  }
  if (!out.empty()) {
    write_report(r, out);
    std::cout << "wrote " << out << "\n";
  }
  if (!svg_dir.empty()) {
    if (figure.empty()) {
      write_figures(r, svg_dir);
    } else {
      fs::create_directories(svg_dir);
      RenderOptions opt{index, neuron, kind};
      write_text(fs::path(svg_dir) / (figure + ".svg"), render(r, parse_figure(figure), opt));
    }
    std::cout << "wrote figures to " << svg_dir << "\n";
  }
}

void save_snapshots(const std::vector<Snapshot>& snaps, const fs::path& dir) {
  for (const auto& s : snaps) save_snapshot((dir / (s.stage_id + ".snap")).string(), s);
}

void cmd_demo(const std::string& which, Common& c) {
  finish_config(c);
  c.cfg.validate();
  const fs::path out(c.cfg.out_dir);
  fs::create_directories(out);
  Report report;
  if (which == "rq1") {
    auto res = run_rq1(c.cfg);
    for (const auto& e : res.log) std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << "\n";
    save_snapshots(res.snapshots, out);
    for (const auto& s : res.stages) write_stage(s, out);
    for (const auto& cmp : res.report.comparisons) print_summary(cmp);
    for (const auto& t : res.report.tag_match) std::cout << t.stage_id << " tag L1 " << t.l1 << "\n";
    report = std::move(res.report);
  } else if (which == "rq2") {
    auto res = run_rq2(c.cfg);
    save_snapshots({res.snapshot}, out);
    write_stage(res.source, out);
    write_stage(res.target, out);
    for (const auto& cmp : res.report.comparisons) print_summary(cmp);
    report = std::move(res.report);
  } else {
    auto res = run_rq3(c.cfg);
    save_snapshots({res.pretrained, res.supervised}, out);
    write_stage(res.source, out);
    write_stage(res.zero_shot, out);
    write_stage(res.supervised_stage, out);
    for (const auto& cmp : res.report.comparisons) print_summary(cmp);
    for (const auto& m : res.report.mass_curves) std::cout << m.stage_id << " Gini " << m.gini << "\n";
    for (const auto& p : res.report.prune_reports) print_prune(p);
    std::ofstream gained(out / "gained.neurons");
    write_neuron_list(gained, select(PrunePolicy::gained(), res.zero_shot.tokens, res.supervised_stage.tokens));
    report = std::move(res.report);
  }
  write_report(report, out / "report.json");
  write_figures(report, out / "figures");
  std::cout << "wrote " << (out / "report.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txray: neuron activation tracing and knowledge-change analysis for LSTM encoders"};
  app.require_subcommand(1);
  Common c;
  std::string corpus, labeled, extra, tags, stage, out, snap, trace_path, a, b, before, after, policy = "avoided", train, test;
  std::string from, svg_dir, figure, kind = "token";
  std::vector<std::string> prefs, prunes;
  bool tag_mode = false;
  std::size_t index = 0;
  int neuron = -1;

  auto* train_cmd = app.add_subcommand("train", "pretrain the LSTM language model and write epoch snapshots");
  add_model_flags(train_cmd, c);
  train_cmd->add_option("--corpus", corpus, "training text, one sequence per line")->required();
  train_cmd->add_option("--vocab-extra", extra, "labeled TSV whose text joins the vocabulary");
  train_cmd->add_option("--out", out, "output directory")->required();

  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a binary classifier head with a frozen embedding");
  ft_cmd->add_option("--seed", c.cfg.seed, "random seed")->capture_default_str();
  add_finetune_flags(ft_cmd, c);
  ft_cmd->add_option("--snapshot", snap, "pretrained snapshot")->required();
  ft_cmd->add_option("--train", train, "labeled TSV")->required();
  ft_cmd->add_option("--stage", stage, "base stage id (the result gets a -sup suffix)");
  ft_cmd->add_option("--out", out, "output snapshot path")->required();

  auto* trace_cmd = app.add_subcommand("trace", "record the maximally active neuron for every token");
  add_trace_flags(trace_cmd, c);
  trace_cmd->add_option("--snapshot", snap, "snapshot to run")->required();
  trace_cmd->add_option("--corpus", corpus, "plain text corpus");
  trace_cmd->add_option("--labeled", labeled, "labeled TSV corpus (attaches y)");
  trace_cmd->add_option("--annotations", tags, "token<TAB>tag file aligned with the corpus");
  trace_cmd->add_option("--stage", stage, "stage id (default: the snapshot's)");
  trace_cmd->add_option("--out", out, "trace JSONL path")->required();

  auto* agg_cmd = app.add_subcommand("aggregate", "build per-neuron preference distributions from a trace");
  agg_cmd->add_option("--trace", trace_path, "trace JSONL")->required();
  agg_cmd->add_flag("--tags", tag_mode, "aggregate over POS tags instead of tokens");
  agg_cmd->add_option("--out", out, "preference JSON path")->required();

  auto* cmp_cmd = app.add_subcommand("compare", "compare two stages: Hellinger distance, lengths and states");
  cmp_cmd->add_option("--a", a, "preference JSON of the earlier stage")->required();
  cmp_cmd->add_option("--b", b, "preference JSON of the later stage")->required();
  cmp_cmd->add_option("--out", out, "optional report JSON");

  auto* prune_cmd = app.add_subcommand("prune", "mask a neuron set and measure the F1 change");
  prune_cmd->add_option("--seed", c.cfg.seed, "random seed")->capture_default_str();
  prune_cmd->add_option("--snapshot", snap, "supervised snapshot")->required();
  prune_cmd->add_option("--before", before, "preference JSON before supervision")->required();
  prune_cmd->add_option("--after", after, "preference JSON after supervision")->required();
  prune_cmd->add_option("--policy", policy, "avoided|least:k|most:k|gained|file:<path>")->capture_default_str();
  prune_cmd->add_option("--train", train, "labeled training TSV")->required();
  prune_cmd->add_option("--test", test, "labeled test TSV")->required();
  prune_cmd->add_option("--out", out, "optional prune report JSON");

  auto* report_cmd = app.add_subcommand("report", "assemble a report from stage preferences and render SVG figures");
  report_cmd->add_option("--pref", prefs, "preference JSON, in stage order (repeatable)");
  report_cmd->add_option("--prune", prunes, "prune report JSON (repeatable)");
  report_cmd->add_option("--from", from, "existing report JSON to render");
  report_cmd->add_option("--out", out, "report JSON path");
  report_cmd->add_option("--svg-dir", svg_dir, "directory for SVG figures");
  report_cmd->add_option("--figure", figure, "single figure: scatter|histogram|length-shift|mass-curve|tag-match");
  report_cmd->add_option("--index", index, "comparison index for scatter/length-shift");
  report_cmd->add_option("--neuron", neuron, "neuron for histogram");
  report_cmd->add_option("--kind", kind, "histogram feature kind: token|tag");

  std::vector<CLI::App*> demos;
  for (const char* name : {"demo-rq1", "demo-rq2", "demo-rq3"}) {
    const std::string what = std::string(name) == "demo-rq1"   ? "epoch-to-epoch knowledge change on the bundled corpus"
                             : std::string(name) == "demo-rq2" ? "zero-shot transfer of the pretrained encoder to reviews"
                                                               : "supervision back-transfer and pruning experiments";
    auto* d = app.add_subcommand(name, what);
    add_model_flags(d, c);
    add_trace_flags(d, c);
    add_finetune_flags(d, c);
    d->add_option("--prune-k", c.cfg.prune_k, "k for least/most pruning (0: max(1, h/75))");
    d->add_option("--data", c.data_dir, "directory holding the bundled corpus files")->capture_default_str();
    d->add_option("--out", c.cfg.out_dir, "output directory")->capture_default_str();
    demos.push_back(d);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      finish_config(c);
      cmd_train(c, corpus, extra, out);
    } else if (*ft_cmd) {
      finish_config(c);
      cmd_finetune(c, snap, train, stage, out);
    } else if (*trace_cmd) {
      finish_config(c);
      cmd_trace(c, snap, corpus, labeled, tags, stage, out);
    } else if (*agg_cmd) {
      cmd_aggregate(trace_path, tag_mode, out);
    } else if (*cmp_cmd) {
      cmd_compare(a, b, out);
    } else if (*prune_cmd) {
      cmd_prune(c, snap, before, after, policy, train, test, out);
    } else if (*report_cmd) {
      cmd_report(prefs, prunes, from, out, svg_dir, figure, index, neuron, kind);
    } else {
      for (std::size_t i = 0; i < demos.size(); ++i)
        if (*demos[i]) cmd_demo("rq" + std::to_string(i + 1), c);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
