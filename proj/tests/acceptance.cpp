// Acceptance run: one PASS/FAIL line per headline criterion. Tolerances and
// seeds are fixed here. The desk replicas shell out to the built CLI so the
// determinism check covers the shipped binary.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

#include "support.hpp"

using namespace txray;
using namespace txray::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kHellingerCase = 0.541196;
constexpr double kHellingerCaseTol = 1e-6;
constexpr double kMergeTol = 1e-12;
constexpr double kGradTol = 1e-3;
constexpr double kGradEps = 1e-5;
constexpr double kHellingerBudgetSec = 1.0;
constexpr double kAggregationBudgetSec = 5.0;
constexpr double kRq1BudgetSec = 600.0;
constexpr std::uint64_t kRq1Seed = 7;
constexpr std::uint64_t kRq3Seeds[] = {1, 2, 3};

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << " :: " << detail << std::endl;
  if (!ok) ++failures;
}

/// Runs `body`, which returns (ok, detail); exceptions count as failures.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

std::pair<bool, std::string> hellinger_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  auto random_dist = [&](int universe) {
    std::map<int, double> m;
    const int support = 1 + static_cast<int>(rng() % 10);
    while (static_cast<int>(m.size()) < support) m[static_cast<int>(rng() % static_cast<unsigned>(universe))] = u(rng);
    double s = 0;
    for (auto& [f, v] : m) s += v;
    for (auto& [f, v] : m) v /= s;
    return m;
  };
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_dist(15), b = random_dist(15);
    const double ab = hellinger(dist(0, a), dist(0, b));
    const double ba = hellinger(dist(0, b), dist(0, a));
    bool overlap = false;
    for (const auto& [f, v] : a) overlap = overlap || b.count(f);
    ok = ok && ab == ba && ab >= 0 && ab <= 1;
    ok = ok && std::fabs(ab - hellinger_oracle(a, b)) < 1e-12;
    ok = ok && (overlap ? ab < 1.0 : ab == 1.0);
    ok = ok && hellinger(dist(0, a), dist(0, a)) == 0.0;
  }
  const double hand = hellinger(dist(0, {{0, 1.0}}), dist(0, {{0, 0.5}, {1, 0.5}}));
  ok = ok && std::fabs(hand - kHellingerCase) <= kHellingerCaseTol;
  ok = ok && hellinger(dist(0, {{0, 1.0}}), dist(0, {{1, 1.0}})) == 1.0;
  bool ill = false;
  try {
    hellinger(dist(0, {{0, 1.0}}), dist(0, {}));
  } catch (const IllDefinedError&) {
    ill = true;
  }
  const double secs = seconds_since(t0);
  ok = ok && ill && secs < kHellingerBudgetSec;
  return {ok, "2000 random pairs vs oracle, case value " + fmt(hand, 8) + ", empty side raises " + (ill ? "yes" : "no") +
                  ", " + fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> aggregation_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto t = random_trace(42, 10000, 32, 100);
  auto a = PartialAggregation::for_trace(t.meta);
  auto b = PartialAggregation::for_trace(t.meta);
  for (std::size_t i = 0; i < t.records.size(); ++i) (i < 6180 ? a : b).add(t.records[i]);
  const auto merged = merge({a, b});
  const auto single = aggregate(t);
  const auto oracle = aggregate_oracle(t);
  double worst = 0;
  bool ok = merged == single;
  for (int n = 0; n < 32; ++n) {
    ok = ok && merged[n].length() == oracle[static_cast<std::size_t>(n)].probs.size();
    for (const auto& e : merged[n].entries) {
      worst = std::max(worst, std::fabs(e.p - oracle[static_cast<std::size_t>(n)].probs.at(e.feature)));
    }
  }
  ExactSum direct, per_neuron;
  for (const auto& r : t.records) direct.add(r.activation);
  a.merge(b);
  for (int n = 0; n < 32; ++n) per_neuron.merge(a.neuron_mass(n));
  const bool conserved = per_neuron == direct && a.total_mass() == direct;
  const double secs = seconds_since(t0);
  ok = ok && worst <= kMergeTol && conserved && secs < kAggregationBudgetSec;
  return {ok, "max |p_merge - p_oracle| = " + fmt(worst, 3) + ", mass conserved exactly: " + (conserved ? "yes" : "no") + ", " +
                  fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> state_classification() {
  bool ok = classify_state(5, 3) == NeuronState::Shared && classify_state(5, 0) == NeuronState::Avoided &&
            classify_state(0, 2) == NeuronState::Gained && classify_state(0, 0) == NeuronState::Never;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) ok = ok && classify_state(a, b) == classify_state(a > 0, b > 0);
  const auto x = aggregate(random_trace(5, 4000, 40, 50));
  const auto s = compare(x, x);
  bool zero = true;
  for (const auto& n : s.neurons)
    if (n.distance) zero = zero && *n.distance == 0.0;
  ok = ok && zero && s.count(NeuronState::Avoided) == 0 && s.count(NeuronState::Gained) == 0;
  return {ok, "4-case table, compare(X,X): " + std::to_string(s.count(NeuronState::Shared)) + " shared all at H=0, avoided " +
                  std::to_string(s.count(NeuronState::Avoided)) + ", gained " + std::to_string(s.count(NeuronState::Gained))};
}

double rel_err(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-7}); }

std::pair<bool, std::string> gradient_check() {
  using P = EncoderParams<double>;
  auto blocks = [](P& p) {
    std::vector<std::pair<double*, Eigen::Index>> out;
    p.for_each_block([&](const char*, auto& m) { out.emplace_back(m.data(), m.size()); });
    return out;
  };
  double worst_lm = 0, worst_cls = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = init_params(seed, 2, 3, 4).cast<double>();
    const std::vector<TokenId> ids{0, 1, 1, 0, 1, 1, 0};
    auto g = P::zeros_like(p);
    lm_sequence_loss_grad<double>(p, ids, &g);
    auto pb = blocks(p), gb = blocks(g);
    for (std::size_t b = 0; b < pb.size(); ++b)
      for (Eigen::Index i = 0; i < pb[b].second; ++i) {
        double& w = pb[b].first[i];
        const double o = w;
        w = o + kGradEps;
        const double up = lm_sequence_loss_grad<double>(p, ids, nullptr);
        w = o - kGradEps;
        const double down = lm_sequence_loss_grad<double>(p, ids, nullptr);
        w = o;
        worst_lm = std::max(worst_lm, rel_err(gb[b].first[i], (up - down) / (2 * kGradEps)));
      }

    auto head = init_head(seed, 4).cast<double>();
    for (int label : {0, 1}) {
      auto cg = P::zeros_like(p);
      ClassifierHead<double> hg{Vec<double>::Zero(4), 0.0};
      classifier_loss_grad<double>(p, head, ids, label, &cg, &hg, true);
      auto loss = [&] { return classifier_loss_grad<double>(p, head, ids, label, nullptr, nullptr); };
      auto check = [&](double& w, double analytic) {
        const double o = w;
        w = o + kGradEps;
        const double up = loss();
        w = o - kGradEps;
        const double down = loss();
        w = o;
        worst_cls = std::max(worst_cls, rel_err(analytic, (up - down) / (2 * kGradEps)));
      };
      auto pb2 = blocks(p), cb = blocks(cg);
      for (std::size_t b = 0; b < pb2.size(); ++b)
        for (Eigen::Index i = 0; i < pb2[b].second; ++i) check(pb2[b].first[i], cb[b].first[i]);
      for (int i = 0; i < 4; ++i) check(head.weight(i), hg.weight(i));
      check(head.bias, hg.bias);
    }
  }
  return {worst_lm < kGradTol && worst_cls < kGradTol,
          "(|V|=2, d=3, h=4), 3 seeds, max rel error LM " + fmt(worst_lm, 3) + ", classifier " + fmt(worst_cls, 3) + " (< 1e-3)"};
}

// ---------------------------------------------------------------------------
// Desk replicas.

struct CliRun {
  fs::path dir;
  double seconds = 0;
  bool ok = false;
};

CliRun run_demo_rq1(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cmd = std::string("\"") + TXRAY_CLI + "\" demo-rq1 --seed " + std::to_string(kRq1Seed) + " --data \"" +
                          TXRAY_DATA_DIR + "\" --out \"" + (dir / "out").string() + "\" > \"" + (dir / "log.txt").string() + "\" 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  return {dir / "out", seconds_since(t0), rc == 0};
}

const ComparisonSection* find_pair(const Report& r, const std::string& a, const std::string& b) {
  for (const auto& c : r.comparisons)
    if (c.stage_a == a && c.stage_b == b) return &c;
  return nullptr;
}

const TagMatchSection* find_tags(const Report& r, const std::string& stage) {
  for (const auto& t : r.tag_match)
    if (t.stage_id == stage) return &t;
  return nullptr;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

RunConfig data_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.finetune.seed = seed;
  const fs::path d(TXRAY_DATA_DIR);
  cfg.corpus = (d / "wiki.txt").string();
  cfg.annotations = (d / "wiki.tags").string();
  cfg.train_labels = (d / "reviews_train.tsv").string();
  cfg.train_annotations = (d / "reviews_train.tags").string();
  cfg.test_labels = (d / "reviews_test.tsv").string();
  cfg.stopwords = (d / "stopwords.txt").string();
  return cfg;
}

}  // namespace

int main() {
  std::cout << "txray acceptance (tolerances: Hellinger case " << kHellingerCaseTol << ", merge " << kMergeTol << ", gradient "
            << kGradTol << ")" << std::endl;

  criterion("hellinger-suite", hellinger_suite);
  criterion("aggregation-oracle", aggregation_oracle);
  criterion("state-classification", state_classification);
  criterion("gradient-check", gradient_check);

  const fs::path work = temp_dir("acceptance");
  std::cout << "running demo-rq1 --seed " << kRq1Seed << " twice ..." << std::endl;
  const CliRun first = run_demo_rq1(work / "rq1_a");
  const CliRun second = run_demo_rq1(work / "rq1_b");

  Report rq1;
  bool rq1_loaded = false;
  try {
    if (first.ok) {
      rq1 = load_report((first.dir / "report.json").string());
      rq1_loaded = true;
    }
  } catch (const std::exception& e) {
    std::cout << "could not load rq1 report: " << e.what() << std::endl;
  }

  criterion("rq1-epoch-replica", [&]() -> std::pair<bool, std::string> {
    if (!rq1_loaded) return {false, "demo-rq1 failed, see " + (work / "rq1_a" / "log.txt").string()};
    const auto* early = find_pair(rq1, "epoch-1", "epoch-9");
    const auto* late = find_pair(rq1, "epoch-9", "epoch-10");
    if (!early || !late) return {false, "missing epoch comparisons in report"};
    const bool ok = late->mean_distance < early->mean_distance && late->shared >= early->shared && first.seconds < kRq1BudgetSec;
    return {ok, "mean H (1,9) " + fmt(early->mean_distance) + " > (9,10) " + fmt(late->mean_distance) + "; shared (1,9) " +
                    std::to_string(early->shared) + " <= (9,10) " + std::to_string(late->shared) + "; " + fmt(first.seconds, 3) +
                    " s"};
  });

  criterion("pos-replica", [&]() -> std::pair<bool, std::string> {
    if (!rq1_loaded) return {false, "demo-rq1 failed"};
    const auto* e1 = find_tags(rq1, "epoch-1");
    const auto* e10 = find_tags(rq1, "epoch-10");
    if (!e1 || !e10) return {false, "missing tag_match sections"};
    return {e10->l1 <= e1->l1, "tag L1 epoch-1 " + fmt(e1->l1) + " >= epoch-10 " + fmt(e10->l1)};
  });

  std::vector<Rq3Result> rq3;
  for (auto seed : kRq3Seeds) {
    std::cout << "running rq3 recipe with seed " << seed << " ..." << std::endl;
    try {
      rq3.push_back(run_rq3(data_config(seed)));
    } catch (const std::exception& e) {
      std::cout << "rq3 seed " << seed << " failed: " << e.what() << std::endl;
    }
  }

  criterion("rq3-supervision-replica", [&]() -> std::pair<bool, std::string> {
    if (rq3.size() != std::size(kRq3Seeds)) return {false, "not every seed completed"};
    double zs_shared = 0, sup_shared = 0, g_zs = 0, g_sup = 0;
    std::string per_seed;
    for (std::size_t i = 0; i < rq3.size(); ++i) {
      const auto& r = rq3[i];
      const double a = static_cast<double>(r.zero_shot_comparison.count(NeuronState::Shared));
      const double b = static_cast<double>(r.supervision_comparison.count(NeuronState::Shared));
      const double gz = mass_curve(r.zero_shot.tokens).gini;
      const double gs = mass_curve(r.supervised_stage.tokens).gini;
      zs_shared += a;
      sup_shared += b;
      g_zs += gz;
      g_sup += gs;
      per_seed += " [seed " + std::to_string(kRq3Seeds[i]) + ": shared " + fmt(a) + "->" + fmt(b) + ", Gini " + fmt(gz, 3) + "->" +
                  fmt(gs, 3) + "]";
    }
    const double n = static_cast<double>(rq3.size());
    zs_shared /= n;
    sup_shared /= n;
    g_zs /= n;
    g_sup /= n;
    const bool a_ok = sup_shared <= zs_shared;
    const bool b_ok = g_sup >= g_zs;
    return {a_ok && b_ok, std::string("(a) mean shared zero-shot cmp ") + fmt(zs_shared) + " >= supervision cmp " + fmt(sup_shared) +
                              (a_ok ? " ok" : " VIOLATED") + "; (b) mean Gini supervised " + fmt(g_sup, 3) + " >= zero-shot " +
                              fmt(g_zs, 3) + (b_ok ? " ok" : " VIOLATED") + ";" + per_seed};
  });

  criterion("pruning-harness", [&]() -> std::pair<bool, std::string> {
    const bool worked = relative_change(80, 77) == -3.75;
    if (rq3.empty()) return {false, "no rq3 run available"};
    const auto& r = rq3.front();
    bool avoided_zero = true;
    std::size_t avoided_runs = 0;
    for (const auto& run : rq3) {
      for (const auto& p : run.report.prune_reports) {
        if (p.policy == "avoided") {
          avoided_zero = avoided_zero && p.mass_share == 0.0;
          ++avoided_runs;
        }
      }
    }
    const auto cfg = data_config(kRq3Seeds[0]);
    const auto vocab = workflow_vocab(cfg);
    const auto train = encode_labeled(load_labeled(cfg.train_labels), vocab);
    const auto test = encode_labeled(load_labeled(cfg.test_labels), vocab);
    const auto empty = run_experiment(r.supervised, r.zero_shot.tokens, r.supervised_stage.tokens, PrunePolicy::explicit_set({}),
                                      train, test);
    const bool identity = empty.rel_train_change == 0.0 && empty.rel_test_change == 0.0 &&
                          empty.f1_test_before == empty.f1_test_after && empty.f1_train_before == empty.f1_train_after;
    return {worked && avoided_zero && avoided_runs == rq3.size() && identity,
            "relative_change(80,77) = " + fmt(relative_change(80, 77)) + "%; avoided mass_share 0% in " +
                std::to_string(avoided_runs) + " runs; empty explicit set rel change train " + fmt(empty.rel_train_change) +
                "%, test " + fmt(empty.rel_test_change) + "%"};
  });

  criterion("format-round-trips", [&]() -> std::pair<bool, std::string> {
    if (!first.ok || !second.ok) return {false, "demo-rq1 failed"};
    const auto a = tree_bytes(first.dir);
    const auto b = tree_bytes(second.dir);
    const bool deterministic = a == b && !a.empty();
    const fs::path rt = work / "roundtrip";
    fs::create_directories(rt);
    const auto src = first.dir;
    save_snapshot((rt / "epoch-10.snap").string(), load_snapshot((src / "epoch-10.snap").string()));
    save_trace((rt / "epoch-10.trace.jsonl").string(), load_trace((src / "epoch-10.trace.jsonl").string()));
    save_preference((rt / "epoch-10.pref.json").string(), load_preference((src / "epoch-10.pref.json").string()));
    export_report((rt / "report.json").string(), load_report((src / "report.json").string()));
    std::string bad;
    for (const char* f : {"epoch-10.snap", "epoch-10.trace.jsonl", "epoch-10.pref.json", "report.json"})
      if (slurp(src / f) != slurp(rt / f)) bad += std::string(" ") + f;
    return {deterministic && bad.empty(), std::to_string(a.size()) + " output files byte-identical across two demo-rq1 runs: " +
                                              (deterministic ? "yes" : "no") + "; snapshot/trace/preference/report re-save " +
                                              (bad.empty() ? "bit-exact" : "differs:" + bad)};
  });

  std::cout << (failures ? "ACCEPTANCE: " + std::to_string(failures) + " criterion(s) failed" : std::string("ACCEPTANCE: all passed"))
            << std::endl;
  return failures ? 1 : 0;
}
