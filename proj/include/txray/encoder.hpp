#pragma once

// Single-layer LSTM language model with an optional sigmoid classifier head.
//
// Gate layout in the stacked 4h weight rows: input, forget, cell, output.
// Hidden outputs are multiplied by the prune mask at every timestep, so a
// pruned unit contributes nothing to the recurrence, the LM projection or
// the classifier head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "txray/corpus.hpp"
#include "txray/error.hpp"
#include "txray/log.hpp"

namespace txray {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct EncoderParams {
  int vocab = 0;
  int embed = 0;
  int hidden = 0;
  std::uint64_t seed = 0;
  Mat<T> embedding;  // embed x vocab, one column per token
  Mat<T> w_input;    // 4h x embed
  Mat<T> w_hidden;   // 4h x h
  Vec<T> bias;       // 4h
  Mat<T> w_out;      // vocab x h
  Vec<T> b_out;      // vocab

  static EncoderParams zeros_like(const EncoderParams& p) {
    EncoderParams z;
    z.vocab = p.vocab;
    z.embed = p.embed;
    z.hidden = p.hidden;
    z.seed = p.seed;
    z.embedding = Mat<T>::Zero(p.embed, p.vocab);
    z.w_input = Mat<T>::Zero(4 * p.hidden, p.embed);
    z.w_hidden = Mat<T>::Zero(4 * p.hidden, p.hidden);
    z.bias = Vec<T>::Zero(4 * p.hidden);
    z.w_out = Mat<T>::Zero(p.vocab, p.hidden);
    z.b_out = Vec<T>::Zero(p.vocab);
    return z;
  }

  template <class U>
  EncoderParams<U> cast() const {
    EncoderParams<U> o;
    o.vocab = vocab;
    o.embed = embed;
    o.hidden = hidden;
    o.seed = seed;
    o.embedding = embedding.template cast<U>();
    o.w_input = w_input.template cast<U>();
    o.w_hidden = w_hidden.template cast<U>();
    o.bias = bias.template cast<U>();
    o.w_out = w_out.template cast<U>();
    o.b_out = b_out.template cast<U>();
    return o;
  }

  /// Visits every parameter block in serialization order.
  template <class F>
  void for_each_block(F&& f) {
    f("embedding", embedding);
    f("w_input", w_input);
    f("w_hidden", w_hidden);
    f("bias", bias);
    f("w_out", w_out);
    f("b_out", b_out);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f("embedding", embedding);
    f("w_input", w_input);
    f("w_hidden", w_hidden);
    f("bias", bias);
    f("w_out", w_out);
    f("b_out", b_out);
  }

  bool all_finite() const {
    bool ok = true;
    for_each_block([&](const char*, const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }
};

template <class T>
bool operator==(const EncoderParams<T>& a, const EncoderParams<T>& b) {
  return a.vocab == b.vocab && a.embed == b.embed && a.hidden == b.hidden && a.seed == b.seed &&
         a.embedding == b.embedding && a.w_input == b.w_input && a.w_hidden == b.w_hidden &&
         a.bias == b.bias && a.w_out == b.w_out && a.b_out == b.b_out;
}

template <class T>
struct ClassifierHead {
  Vec<T> weight;  // h
  T bias = 0;

  template <class U>
  ClassifierHead<U> cast() const {
    return {weight.template cast<U>(), static_cast<U>(bias)};
  }
  friend bool operator==(const ClassifierHead& a, const ClassifierHead& b) {
    return a.weight == b.weight && a.bias == b.bias;
  }
};

/// Per-unit keep flags. At least one unit stays active.
class PruneMask {
 public:
  static PruneMask keep_all(int hidden) { return PruneMask(std::vector<bool>(static_cast<std::size_t>(hidden), true)); }

  static PruneMask pruning(int hidden, std::span<const int> removed) {
    std::vector<bool> keep(static_cast<std::size_t>(hidden), true);
    for (int n : removed) {
      if (n < 0 || n >= hidden) {
        throw DataError("prune index " + std::to_string(n) + " outside 0.." + std::to_string(hidden - 1));
      }
      keep[static_cast<std::size_t>(n)] = false;
    }
    return PruneMask(std::move(keep));
  }

  explicit PruneMask(std::vector<bool> keep) : keep_(std::move(keep)) {
    if (std::none_of(keep_.begin(), keep_.end(), [](bool k) { return k; })) {
      throw DataError("prune mask must keep at least one hidden unit");
    }
  }

  int size() const { return static_cast<int>(keep_.size()); }
  bool keeps(int n) const { return keep_[static_cast<std::size_t>(n)]; }
  const std::vector<bool>& keep() const { return keep_; }

  template <class T>
  Vec<T> as_vector() const {
    Vec<T> v(size());
    for (int i = 0; i < size(); ++i) v(i) = keep_[static_cast<std::size_t>(i)] ? T(1) : T(0);
    return v;
  }

 private:
  std::vector<bool> keep_;
};

/// Versioned model state. `vocab` names the token ids the parameters index.
struct Snapshot {
  static constexpr int kFormatVersion = 1;

  EncoderParams<float> params;
  std::optional<ClassifierHead<float>> head;
  std::string stage_id;
  int format_version = kFormatVersion;
  std::vector<std::string> vocab;
  nlohmann::json hyperparams = nlohmann::json::object();

  friend bool operator==(const Snapshot& a, const Snapshot& b) {
    return a.params == b.params && a.head == b.head && a.stage_id == b.stage_id &&
           a.format_version == b.format_version && a.vocab == b.vocab && a.hyperparams == b.hyperparams;
  }
};

namespace detail {

/// Uniform draw in (-r, r) built from raw mt19937_64 output, so values do not
/// depend on the standard library's distribution implementation.
inline float uniform_symmetric(std::mt19937_64& rng, float r) {
  const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;  // (0, 1)
  auto v = static_cast<float>(-static_cast<double>(r) + 2.0 * static_cast<double>(r) * u);
  if (v >= r) v = std::nextafter(r, 0.0f);
  if (v <= -r) v = std::nextafter(-r, 0.0f);
  return v;
}

inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  // Lemire-style rejection keeps the draw unbiased and portable.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <class T>
void fill_uniform(Eigen::MatrixBase<T>& m, std::mt19937_64& rng, float r) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform_symmetric(rng, r);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace detail

/// Every parameter drawn from uniform(-r, r), r = 1/sqrt(h).
inline EncoderParams<float> init_params(std::uint64_t seed, int vocab, int embed, int hidden) {
  if (vocab < 1 || embed < 1 || hidden < 1) {
    throw DataError("encoder dimensions must be positive (vocab=" + std::to_string(vocab) +
                    ", embed=" + std::to_string(embed) + ", hidden=" + std::to_string(hidden) + ")");
  }
  EncoderParams<float> p;
  p.vocab = vocab;
  p.embed = embed;
  p.hidden = hidden;
  p.seed = seed;
  p.embedding.resize(embed, vocab);
  p.w_input.resize(4 * hidden, embed);
  p.w_hidden.resize(4 * hidden, hidden);
  p.bias.resize(4 * hidden);
  p.w_out.resize(vocab, hidden);
  p.b_out.resize(vocab);
  std::mt19937_64 rng(seed);
  const float r = 1.0f / std::sqrt(static_cast<float>(hidden));
  p.for_each_block([&](const char*, auto& m) { detail::fill_uniform(m, rng, r); });
  return p;
}

inline ClassifierHead<float> init_head(std::uint64_t seed, int hidden) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const float r = 1.0f / std::sqrt(static_cast<float>(hidden));
  ClassifierHead<float> h;
  h.weight.resize(hidden);
  detail::fill_uniform(h.weight, rng, r);
  h.bias = 0.0f;
  return h;
}

// ---------------------------------------------------------------------------
// Recurrent core, batched over columns.

template <class T>
struct StepCache {
  Mat<T> x;       // d x B inputs
  Mat<T> h_prev;  // h x B
  Mat<T> c_prev;
  Mat<T> i, f, g, o;
  Mat<T> c;
  Mat<T> tanh_c;
  Mat<T> h;  // masked output
};

template <class T>
class LstmCore {
 public:
  LstmCore(const EncoderParams<T>& p, const PruneMask* mask) : p_(p) {
    if (mask) {
      if (mask->size() != p.hidden) {
        throw DataError("prune mask length " + std::to_string(mask->size()) + " does not match hidden size " +
                        std::to_string(p.hidden));
      }
      mask_ = mask->as_vector<T>();
    }
  }

  bool masked() const { return mask_.size() > 0; }

  void check_ids(std::span<const TokenId> ids) const {
    for (TokenId id : ids) {
      if (id < 0 || id >= p_.vocab) {
        throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(p_.vocab));
      }
    }
  }

  /// One timestep for B parallel columns. `ids` has B entries.
  void step(std::span<const TokenId> ids, Mat<T>& h, Mat<T>& c, StepCache<T>* cache) const {
    const int H = p_.hidden;
    const auto B = static_cast<Eigen::Index>(ids.size());
    Mat<T> x(p_.embed, B);
    for (Eigen::Index b = 0; b < B; ++b) x.col(b) = p_.embedding.col(ids[static_cast<std::size_t>(b)]);
    Mat<T> z = p_.w_input * x + p_.w_hidden * h;
    z.colwise() += p_.bias;
    Mat<T> gi = z.topRows(H).unaryExpr([](T v) { return detail::sigmoid(v); });
    Mat<T> gf = z.middleRows(H, H).unaryExpr([](T v) { return detail::sigmoid(v); });
    Mat<T> gg = z.middleRows(2 * H, H).array().tanh().matrix();
    Mat<T> go = z.bottomRows(H).unaryExpr([](T v) { return detail::sigmoid(v); });
    Mat<T> c_new = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
    Mat<T> tc = c_new.array().tanh().matrix();
    Mat<T> h_new = (go.array() * tc.array()).matrix();
    if (masked()) h_new.array().colwise() *= mask_.array();
    if (cache) {
      cache->x = std::move(x);
      cache->h_prev = h;
      cache->c_prev = c;
      cache->i = std::move(gi);
      cache->f = std::move(gf);
      cache->g = std::move(gg);
      cache->o = std::move(go);
      cache->c = c_new;
      cache->tanh_c = std::move(tc);
      cache->h = h_new;
    }
    h = std::move(h_new);
    c = std::move(c_new);
  }

  /// Backward through one step. `dh`, `dc` hold gradients w.r.t. this step's
  /// outputs on entry and w.r.t. the previous step's state on exit.
  void step_backward(const StepCache<T>& s, std::span<const TokenId> ids, Mat<T>& dh, Mat<T>& dc,
                     EncoderParams<T>& grad, bool embedding_grad) const {
    const int H = p_.hidden;
    if (masked()) dh.array().colwise() *= mask_.array();
    Mat<T> d_o = (dh.array() * s.tanh_c.array()).matrix();
    dc.array() += dh.array() * s.o.array() * (T(1) - s.tanh_c.array().square());
    Mat<T> d_i = (dc.array() * s.g.array()).matrix();
    Mat<T> d_g = (dc.array() * s.i.array()).matrix();
    Mat<T> d_f = (dc.array() * s.c_prev.array()).matrix();
    const auto B = s.x.cols();
    Mat<T> dz(4 * H, B);
    dz.topRows(H) = (d_i.array() * s.i.array() * (T(1) - s.i.array())).matrix();
    dz.middleRows(H, H) = (d_f.array() * s.f.array() * (T(1) - s.f.array())).matrix();
    dz.middleRows(2 * H, H) = (d_g.array() * (T(1) - s.g.array().square())).matrix();
    dz.bottomRows(H) = (d_o.array() * s.o.array() * (T(1) - s.o.array())).matrix();
    grad.w_input.noalias() += dz * s.x.transpose();
    grad.w_hidden.noalias() += dz * s.h_prev.transpose();
    grad.bias += dz.rowwise().sum();
    if (embedding_grad) {
      Mat<T> dx = p_.w_input.transpose() * dz;
      for (Eigen::Index b = 0; b < B; ++b) grad.embedding.col(ids[static_cast<std::size_t>(b)]) += dx.col(b);
    }
    dc = (dc.array() * s.f.array()).matrix();
    dh = p_.w_hidden.transpose() * dz;
  }

  const EncoderParams<T>& params() const { return p_; }

 private:
  const EncoderParams<T>& p_;
  Vec<T> mask_;
};

// ---------------------------------------------------------------------------
// Inference.

template <class T>
struct LmOutput {
  Mat<T> hidden;  // h x T: column t is the hidden output after token t
  Mat<T> logits;  // vocab x T
};

/// Hidden outputs for one sequence from a zero initial state.
template <class T>
Mat<T> forward_hidden(const EncoderParams<T>& p, std::span<const TokenId> ids, const PruneMask* mask = nullptr) {
  if (ids.empty()) throw DataError("forward pass needs a non-empty sequence");
  LstmCore<T> core(p, mask);
  core.check_ids(ids);
  Mat<T> h = Mat<T>::Zero(p.hidden, 1);
  Mat<T> c = Mat<T>::Zero(p.hidden, 1);
  Mat<T> out(p.hidden, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    core.step(ids.subspan(t, 1), h, c, nullptr);
    out.col(static_cast<Eigen::Index>(t)) = h.col(0);
  }
  return out;
}

template <class T>
LmOutput<T> forward_lm(const EncoderParams<T>& p, std::span<const TokenId> ids, const PruneMask* mask = nullptr) {
  LmOutput<T> out;
  out.hidden = forward_hidden(p, ids, mask);
  out.logits = p.w_out * out.hidden;
  out.logits.colwise() += p.b_out;
  return out;
}

template <class T>
T head_logit(const ClassifierHead<T>& head, const Eigen::Ref<const Vec<T>>& h_last) {
  return head.weight.dot(h_last) + head.bias;
}

inline double classify(const Snapshot& snap, std::span<const TokenId> ids, const PruneMask* mask = nullptr) {
  if (!snap.head) throw DataError("snapshot '" + snap.stage_id + "' has no classifier head");
  const Mat<float> h = forward_hidden(snap.params, ids, mask);
  const float z = head_logit<float>(*snap.head, h.col(h.cols() - 1));
  return 1.0 / (1.0 + std::exp(-static_cast<double>(z)));
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// F1 of the positive class. Zero predicted and zero actual positives is
/// defined as 0 and reported through the warning sink.
inline double f1_score(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0 && c.tp + c.fn == 0) {
    warn("F1 undefined: no predicted and no actual positives; reporting 0");
    return 0.0;
  }
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) + static_cast<double>(c.fn);
  return 2.0 * static_cast<double>(c.tp) / denom;
}

/// Positive prediction when probability >= threshold.
inline double evaluate_f1(const Snapshot& snap, std::span<const LabeledExample> data, const PruneMask* mask = nullptr,
                          double threshold = 0.5) {
  if (data.empty()) throw DataError("cannot evaluate F1 on an empty dataset");
  ConfusionCounts c;
  for (const auto& ex : data) {
    const bool pred = classify(snap, ex.sequence.ids, mask) >= threshold;
    const bool truth = ex.label == 1;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return f1_score(c);
}

// ---------------------------------------------------------------------------
// Losses and gradients.

/// Softmax cross-entropy over columns; writes d(loss)/d(logits) scaled by
/// `scale` into `logits` and returns the summed loss.
template <class T>
double softmax_xent_inplace(Mat<T>& logits, std::span<const TokenId> targets, T scale) {
  double loss = 0.0;
  for (Eigen::Index col = 0; col < logits.cols(); ++col) {
    auto z = logits.col(col);
    const T mx = z.maxCoeff();
    z.array() = (z.array() - mx).exp();
    const T sum = z.sum();
    const auto tgt = targets[static_cast<std::size_t>(col)];
    loss -= std::log(static_cast<double>(z(tgt) / sum));
    z /= sum;
    z(tgt) -= T(1);
    z *= scale;
  }
  return loss;
}

/// Mean next-token cross-entropy over one window of B parallel streams.
/// `inputs[t]` and `targets[t]` hold the B ids of timestep t. `h`/`c` carry
/// the recurrent state in and out; gradients accumulate into `grad`.
template <class T>
double lm_window_loss_grad(const EncoderParams<T>& p, const std::vector<std::vector<TokenId>>& inputs,
                           const std::vector<std::vector<TokenId>>& targets, Mat<T>& h, Mat<T>& c,
                           EncoderParams<T>& grad, const PruneMask* mask = nullptr) {
  LstmCore<T> core(p, mask);
  const std::size_t steps = inputs.size();
  const auto B = static_cast<Eigen::Index>(inputs.front().size());
  std::vector<StepCache<T>> caches(steps);
  Mat<T> hs(p.hidden, static_cast<Eigen::Index>(steps) * B);
  std::vector<TokenId> flat_targets;
  flat_targets.reserve(steps * static_cast<std::size_t>(B));
  for (std::size_t t = 0; t < steps; ++t) {
    core.step(inputs[t], h, c, &caches[t]);
    hs.middleCols(static_cast<Eigen::Index>(t) * B, B) = h;
    flat_targets.insert(flat_targets.end(), targets[t].begin(), targets[t].end());
  }
  Mat<T> logits = p.w_out * hs;
  logits.colwise() += p.b_out;
  const T scale = T(1) / static_cast<T>(logits.cols());
  const double loss = softmax_xent_inplace(logits, flat_targets, scale) / static_cast<double>(logits.cols());
  grad.w_out.noalias() += logits * hs.transpose();
  grad.b_out += logits.rowwise().sum();
  const Mat<T> dhs = p.w_out.transpose() * logits;
  Mat<T> dh = Mat<T>::Zero(p.hidden, B);
  Mat<T> dc = Mat<T>::Zero(p.hidden, B);
  for (std::size_t t = steps; t-- > 0;) {
    dh += dhs.middleCols(static_cast<Eigen::Index>(t) * B, B);
    core.step_backward(caches[t], inputs[t], dh, dc, grad, true);
  }
  return loss;
}

/// Mean LM loss of one sequence from a zero state: token t predicts token t+1.
template <class T>
double lm_sequence_loss_grad(const EncoderParams<T>& p, std::span<const TokenId> ids, EncoderParams<T>* grad,
                             const PruneMask* mask = nullptr) {
  if (ids.size() < 2) throw DataError("LM loss needs at least two tokens");
  std::vector<std::vector<TokenId>> in, tg;
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    in.push_back({ids[t]});
    tg.push_back({ids[t + 1]});
  }
  Mat<T> h = Mat<T>::Zero(p.hidden, 1), c = Mat<T>::Zero(p.hidden, 1);
  EncoderParams<T> scratch;
  EncoderParams<T>& g = grad ? *grad : (scratch = EncoderParams<T>::zeros_like(p));
  return lm_window_loss_grad(p, in, tg, h, c, g, mask);
}

/// Binary cross-entropy of sigmoid(head . h_T) for one sequence. Gradients
/// for the recurrent weights, the embedding (when requested) and the head
/// accumulate into `grad` / `head_grad`.
template <class T>
double classifier_loss_grad(const EncoderParams<T>& p, const ClassifierHead<T>& head, std::span<const TokenId> ids,
                            int label, EncoderParams<T>* grad, ClassifierHead<T>* head_grad,
                            bool embedding_grad = true, const PruneMask* mask = nullptr) {
  if (ids.empty()) throw DataError("classifier needs a non-empty sequence");
  LstmCore<T> core(p, mask);
  core.check_ids(ids);
  std::vector<StepCache<T>> caches(ids.size());
  Mat<T> h = Mat<T>::Zero(p.hidden, 1), c = Mat<T>::Zero(p.hidden, 1);
  for (std::size_t t = 0; t < ids.size(); ++t) core.step(ids.subspan(t, 1), h, c, &caches[t]);
  const T z = head_logit<T>(head, h.col(0));
  // Stable log-sigmoid forms.
  const double zd = static_cast<double>(z);
  const double log1pexp = zd > 0 ? zd + std::log1p(std::exp(-zd)) : std::log1p(std::exp(zd));
  const double loss = label == 1 ? log1pexp - zd : log1pexp;
  if (grad || head_grad) {
    const T yhat = detail::sigmoid(z);
    const T dz = yhat - static_cast<T>(label);
    if (head_grad) {
      head_grad->weight += dz * h.col(0);
      head_grad->bias += dz;
    }
    if (grad) {
      Mat<T> dh = dz * head.weight;
      Mat<T> dc = Mat<T>::Zero(p.hidden, 1);
      for (std::size_t t = ids.size(); t-- > 0;) core.step_backward(caches[t], ids.subspan(t, 1), dh, dc, *grad, embedding_grad);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training.

struct LmHyperparams {
  int epochs = 10;
  double learning_rate = 1.0;
  double lr_decay = 1.0;  // multiplied into the rate after every epoch
  int batch = 20;
  int bptt = 35;
  double clip = 5.0;

  nlohmann::json to_json() const {
    return {{"objective", "lm"}, {"epochs", epochs}, {"learning_rate", learning_rate}, {"lr_decay", lr_decay},
            {"batch", batch},    {"bptt", bptt},     {"clip", clip}};
  }
};

struct FinetuneHyperparams {
  enum class Optimizer { Adam, Sgd };

  int epochs = 12;
  double learning_rate = 0.003;
  int batch = 16;
  double clip = 5.0;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::Adam;

  nlohmann::json to_json() const {
    return {{"objective", "classifier"}, {"epochs", epochs}, {"learning_rate", learning_rate},
            {"batch", batch},            {"clip", clip},     {"seed", seed},
            {"optimizer", optimizer == Optimizer::Adam ? "adam" : "sgd"}};
  }
};

namespace detail {

template <class T>
double squared_norm(const EncoderParams<T>& g, bool with_embedding, bool with_output) {
  double s = 0;
  if (with_embedding) s += static_cast<double>(g.embedding.squaredNorm());
  s += static_cast<double>(g.w_input.squaredNorm()) + static_cast<double>(g.w_hidden.squaredNorm()) +
       static_cast<double>(g.bias.squaredNorm());
  if (with_output) s += static_cast<double>(g.w_out.squaredNorm()) + static_cast<double>(g.b_out.squaredNorm());
  return s;
}

}  // namespace detail

namespace detail {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// First and second moment estimates for one parameter block.
struct AdamSlot {
  Mat<float> m, v;

  template <class M>
  explicit AdamSlot(const M& like) : m(Mat<float>::Zero(like.rows(), like.cols())), v(m) {}

  template <class M, class G>
  void update(M& param, const G& grad, float scale, float lr) {
    const auto b1 = static_cast<float>(kAdamBeta1), b2 = static_cast<float>(kAdamBeta2);
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      for (Eigen::Index i = 0; i < param.rows(); ++i) {
        const float g = grad(i, j) * scale;
        float& mi = m(i, j);
        float& vi = v(i, j);
        mi = b1 * mi + (1 - b1) * g;
        vi = b2 * vi + (1 - b2) * g * g;
        param(i, j) -= lr * mi / (std::sqrt(vi) + static_cast<float>(kAdamEps));
      }
    }
  }
};

}  // namespace detail

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0;
};

/// Truncated-BPTT language-model training with plain SGD and global-norm
/// clipping. The stream is split into `batch` contiguous lanes whose state
/// carries across windows. Snapshots are emitted after each requested epoch
/// with stage ids "epoch-N".
inline std::vector<Snapshot> train_lm(EncoderParams<float> params, std::span<const TokenId> stream,
                                      const LmHyperparams& hp, std::span<const int> snapshot_epochs,
                                      std::vector<EpochLog>* log = nullptr) {
  if (stream.size() < 2) throw DataError("LM training needs a corpus of at least two tokens");
  if (hp.epochs < 1 || hp.batch < 1 || hp.bptt < 1) throw DataError("epochs, batch and bptt must be positive");
  for (int e : snapshot_epochs) {
    if (e < 1 || e > hp.epochs) {
      throw DataError("snapshot epoch " + std::to_string(e) + " outside 1.." + std::to_string(hp.epochs));
    }
  }
  for (TokenId id : stream) {
    if (id < 0 || id >= params.vocab) throw DataError("training stream holds out-of-vocabulary id " + std::to_string(id));
  }
  const std::size_t lanes = std::min<std::size_t>(static_cast<std::size_t>(hp.batch), stream.size() - 1);
  const std::size_t lane_len = (stream.size() - 1) / lanes;
  std::vector<Snapshot> snaps;
  double lr = hp.learning_rate;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    Mat<float> h = Mat<float>::Zero(params.hidden, static_cast<Eigen::Index>(lanes));
    Mat<float> c = Mat<float>::Zero(params.hidden, static_cast<Eigen::Index>(lanes));
    double loss_sum = 0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < lane_len; start += static_cast<std::size_t>(hp.bptt)) {
      const std::size_t steps = std::min<std::size_t>(static_cast<std::size_t>(hp.bptt), lane_len - start);
      std::vector<std::vector<TokenId>> in(steps, std::vector<TokenId>(lanes)), tg(steps, std::vector<TokenId>(lanes));
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t b = 0; b < lanes; ++b) {
          const std::size_t pos = b * lane_len + start + t;
          in[t][b] = stream[pos];
          tg[t][b] = stream[pos + 1];
        }
      }
      auto grad = EncoderParams<float>::zeros_like(params);
      const double loss = lm_window_loss_grad(params, in, tg, h, c, grad);
      if (!std::isfinite(loss)) throw DivergenceError("language-model training", epoch);
      loss_sum += loss * static_cast<double>(steps * lanes);
      tokens += steps * lanes;
      const double norm = std::sqrt(detail::squared_norm(grad, true, true));
      const auto step = static_cast<float>(norm > hp.clip ? lr * hp.clip / norm : lr);
      params.embedding -= step * grad.embedding;
      params.w_input -= step * grad.w_input;
      params.w_hidden -= step * grad.w_hidden;
      params.bias -= step * grad.bias;
      params.w_out -= step * grad.w_out;
      params.b_out -= step * grad.b_out;
    }
    const double mean = loss_sum / static_cast<double>(tokens);
    if (!std::isfinite(mean) || !params.all_finite()) throw DivergenceError("language-model training", epoch);
    if (log) log->push_back({epoch, mean});
    if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
      Snapshot s;
      s.params = params;
      s.stage_id = "epoch-" + std::to_string(epoch);
      s.hyperparams = hp.to_json();
      s.hyperparams["epoch"] = epoch;
      snaps.push_back(std::move(s));
    }
    lr *= hp.lr_decay;
  }
  return snaps;
}

/// Supervised fine-tuning of the recurrent weights and the classifier head.
/// The embedding is frozen and the LM projection is untouched (no LM loss).
inline Snapshot finetune_classifier(const Snapshot& base, std::span<const LabeledExample> data,
                                    const FinetuneHyperparams& hp, std::vector<EpochLog>* log = nullptr) {
  if (data.empty()) throw DataError("fine-tuning needs labeled data");
  for (const auto& ex : data) {
    if (ex.label != 0 && ex.label != 1) throw DataError("labels must be binary, got " + std::to_string(ex.label));
  }
  if (hp.epochs < 1 || hp.batch < 1) throw DataError("epochs and batch must be positive");
  Snapshot out = base;
  if (!out.head) out.head = init_head(hp.seed, out.params.hidden);
  auto& params = out.params;
  auto& head = *out.head;
  std::mt19937_64 rng(hp.seed);
  detail::AdamSlot a_in(params.w_input), a_hid(params.w_hidden), a_bias(params.bias), a_head(head.weight);
  double m_hb = 0, v_hb = 0;
  std::int64_t adam_t = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[detail::bounded(rng, i)]);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch));
      auto grad = EncoderParams<float>::zeros_like(params);
      ClassifierHead<float> hgrad{Vec<float>::Zero(params.hidden), 0.0f};
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[order[k]];
        loss_sum += classifier_loss_grad<float>(params, head, ex.sequence.ids, ex.label, &grad, &hgrad, false);
      }
      const auto inv = 1.0f / static_cast<float>(end - start);
      double norm2 = detail::squared_norm(grad, false, false) * inv * inv;
      norm2 += (static_cast<double>(hgrad.weight.squaredNorm()) + static_cast<double>(hgrad.bias) * hgrad.bias) * inv * inv;
      const double norm = std::sqrt(norm2);
      if (hp.optimizer == FinetuneHyperparams::Optimizer::Sgd) {
        const auto step = static_cast<float>((norm > hp.clip ? hp.learning_rate * hp.clip / norm : hp.learning_rate)) * inv;
        params.w_input -= step * grad.w_input;
        params.w_hidden -= step * grad.w_hidden;
        params.bias -= step * grad.bias;
        head.weight -= step * hgrad.weight;
        head.bias -= step * hgrad.bias;
      } else {
        // Adam on the clipped batch-mean gradient.
        const auto scale = static_cast<float>(norm > hp.clip ? hp.clip / norm : 1.0) * inv;
        ++adam_t;
        const double c1 = 1.0 - std::pow(detail::kAdamBeta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(detail::kAdamBeta2, static_cast<double>(adam_t));
        const auto lr_t = static_cast<float>(hp.learning_rate * std::sqrt(c2) / c1);
        a_in.update(params.w_input, grad.w_input, scale, lr_t);
        a_hid.update(params.w_hidden, grad.w_hidden, scale, lr_t);
        a_bias.update(params.bias, grad.bias, scale, lr_t);
        a_head.update(head.weight, hgrad.weight, scale, lr_t);
        const double gb = static_cast<double>(hgrad.bias * scale);
        m_hb = detail::kAdamBeta1 * m_hb + (1 - detail::kAdamBeta1) * gb;
        v_hb = detail::kAdamBeta2 * v_hb + (1 - detail::kAdamBeta2) * gb * gb;
        head.bias -= static_cast<float>(lr_t * m_hb / (std::sqrt(v_hb) + detail::kAdamEps));
      }
    }
    const double mean = loss_sum / static_cast<double>(data.size());
    if (!std::isfinite(mean) || !params.all_finite() || !head.weight.allFinite()) {
      throw DivergenceError("classifier fine-tuning", epoch);
    }
    if (log) log->push_back({epoch, mean});
  }
  out.stage_id = base.stage_id + "-sup";
  out.hyperparams = hp.to_json();
  out.hyperparams["base_stage"] = base.stage_id;
  return out;
}

}  // namespace txray
