#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "txray/encoder.hpp"
#include "txray/error.hpp"
#include "txray/trace.hpp"

namespace txray {

/// Everything that determines a run. Validated before any work starts and
/// copied into the meta of every file the run writes. The output directory
/// is left out of the echo so results do not depend on where they land.
struct RunConfig {
  std::uint64_t seed = 7;
  int embed = 32;
  int hidden = 64;
  std::vector<int> snapshot_epochs{1, 9, 10};
  std::size_t token_budget = 100000;
  MagnitudeMode mode = MagnitudeMode::Absolute;
  std::size_t min_count = 1;
  int prune_k = 0;  // 0 picks max(1, h / 75)

  LmHyperparams lm{};
  FinetuneHyperparams finetune{};

  std::string corpus = "data/wiki.txt";
  std::string annotations = "data/wiki.tags";
  std::string train_labels = "data/reviews_train.tsv";
  std::string train_annotations = "data/reviews_train.tags";
  std::string test_labels = "data/reviews_test.tsv";
  std::string stopwords = "data/stopwords.txt";
  std::string out_dir = "out";

  int effective_prune_k() const { return prune_k > 0 ? prune_k : std::max(1, hidden / 75); }
  int final_epoch() const { return lm.epochs; }

  void validate() const {
    if (embed < 1 || hidden < 1) throw UsageError("--embed and --hidden must be >= 1");
    if (lm.epochs < 1) throw UsageError("--epochs must be >= 1");
    if (token_budget < 1) throw UsageError("--budget must be >= 1");
    if (lm.batch < 1 || lm.bptt < 1) throw UsageError("batch and bptt must be >= 1");
    if (!(lm.learning_rate >= 0) || !(lm.clip > 0)) throw UsageError("learning rate must be >= 0 and clip > 0");
    if (finetune.epochs < 1 || finetune.batch < 1) throw UsageError("fine-tuning epochs and batch must be >= 1");
    if (snapshot_epochs.empty()) throw UsageError("--snapshots needs at least one epoch");
    for (std::size_t i = 0; i < snapshot_epochs.size(); ++i) {
      const int e = snapshot_epochs[i];
      if (e < 1 || e > lm.epochs) {
        throw UsageError("snapshot epoch " + std::to_string(e) + " outside 1.." + std::to_string(lm.epochs));
      }
      if (i && e <= snapshot_epochs[i - 1]) throw UsageError("--snapshots must be strictly increasing");
    }
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"embed", embed},
            {"hidden", hidden},
            {"epochs", lm.epochs},
            {"snapshot_epochs", snapshot_epochs},
            {"token_budget", token_budget},
            {"mode", to_string(mode)},
            {"min_count", min_count},
            {"prune_k", effective_prune_k()},
            {"lm", lm.to_json()},
            {"finetune", finetune.to_json()},
            {"paths",
             {{"corpus", corpus},
              {"annotations", annotations},
              {"train_labels", train_labels},
              {"train_annotations", train_annotations},
              {"test_labels", test_labels},
              {"stopwords", stopwords}}}};
  }
};

/// Parses "1,9,10".
inline std::vector<int> parse_epoch_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw UsageError("bad epoch list '" + s + "'");
    }
    if (used != item.size()) throw UsageError("bad epoch list '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty epoch list");
  return out;
}

}  // namespace txray
