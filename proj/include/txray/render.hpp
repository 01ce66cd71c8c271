#pragma once

// Standalone SVG 1.1 plots for the figure families carried by a report.
// Output is a pure function of the report, so identical input gives
// byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "txray/report.hpp"

namespace txray {

enum class FigureKind { Scatter, Histogram, LengthShift, MassCurve, TagMatch };

inline FigureKind parse_figure(const std::string& s) {
  if (s == "scatter") return FigureKind::Scatter;
  if (s == "histogram") return FigureKind::Histogram;
  if (s == "length-shift") return FigureKind::LengthShift;
  if (s == "mass-curve") return FigureKind::MassCurve;
  if (s == "tag-match") return FigureKind::TagMatch;
  throw UsageError("unknown figure kind '" + s + "' (scatter|histogram|length-shift|mass-curve|tag-match)");
}

struct RenderOptions {
  std::size_t index = 0;  // which comparison / length shift section
  int neuron = -1;        // histogram target; -1 picks the first detailed neuron
  std::string kind = "token";
};

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Fixed palette so colors are stable across runs.
inline const char* color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  return kPalette[i % 6];
}

class Canvas {
 public:
  static constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

  Canvas(double width, double height, const std::string& title) : w_(width), h_(height) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(w_) << "\" height=\"" << num(h_)
         << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n"
         << "<rect x=\"0\" y=\"0\" width=\"" << num(w_) << "\" height=\"" << num(h_) << "\" fill=\"white\"/>\n";
    text(w_ / 2, 22, title, "middle", 15, "title");
  }

  double plot_w() const { return w_ - kLeft - kRight; }
  double plot_h() const { return h_ - kTop - kBottom; }
  double x0() const { return kLeft; }
  double y0() const { return h_ - kBottom; }

  void axes(const std::string& xlabel, const std::string& ylabel) {
    line(x0(), y0(), x0() + plot_w(), y0(), "black", 1, "axis x-axis");
    line(x0(), y0(), x0(), kTop, "black", 1, "axis y-axis");
    text(x0() + plot_w() / 2, h_ - 15, xlabel, "middle", 12, "axis-label x-label");
    out_ << "<text class=\"axis-label y-label\" x=\"18\" y=\"" << num(kTop + plot_h() / 2)
         << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
         << num(kTop + plot_h() / 2) << ")\">" << escape(ylabel) << "</text>\n";
  }

  void y_ticks(double lo, double hi, int steps, bool log_scale = false) {
    for (int i = 0; i <= steps; ++i) {
      const double f = static_cast<double>(i) / steps;
      const double v = lo + f * (hi - lo);
      const double y = y0() - f * plot_h();
      line(x0() - 4, y, x0(), y, "black", 1, "tick");
      text(x0() - 6, y + 4, log_scale ? num(std::pow(10.0, v)) : num(v), "end", 10, "tick-label");
    }
  }

  void x_ticks(double lo, double hi, int steps, bool log_scale = false) {
    for (int i = 0; i <= steps; ++i) {
      const double f = static_cast<double>(i) / steps;
      const double v = lo + f * (hi - lo);
      const double x = x0() + f * plot_w();
      line(x, y0(), x, y0() + 4, "black", 1, "tick");
      text(x, y0() + 16, log_scale ? num(std::pow(10.0, v)) : num(v), "middle", 10, "tick-label");
    }
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width, const std::string& cls,
            const std::string& dash = {}) {
    out_ << "<line class=\"" << cls << "\" x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
         << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << '"';
    if (!dash.empty()) out_ << " stroke-dasharray=\"" << dash << '"';
    out_ << "/>\n";
  }

  void text(double x, double y, const std::string& s, const char* anchor, int size, const std::string& cls) {
    out_ << "<text class=\"" << cls << "\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\""
         << size << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  void raw(const std::string& s) { out_ << s; }

  std::ostream& stream() { return out_; }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = kTop + 4;
    for (const auto& [label, fill] : entries) {
      out_ << "<rect class=\"legend-swatch\" x=\"" << num(w_ - kRight - 150) << "\" y=\"" << num(y) << "\" width=\"10\" height=\"10\" fill=\""
           << fill << "\"/>\n";
      text(w_ - kRight - 136, y + 9, label, "start", 10, "legend-label");
      y += 14;
    }
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  double w_, h_;
  std::ostringstream out_;
};

inline const char* state_color(NeuronState s) {
  switch (s) {
    case NeuronState::Shared: return "#1f77b4";
    case NeuronState::Avoided: return "#d62728";
    case NeuronState::Gained: return "#2ca02c";
    case NeuronState::Never: return "#7f7f7f";
  }
  return "#7f7f7f";
}

}  // namespace svg

/// Hellinger distance of shared neurons against the longer of the two lengths
/// (log scale). One circle per plotted neuron.
inline std::string render_scatter(const Report& r, std::size_t index) {
  if (r.comparisons.empty()) throw DataError("no comparison section in report");
  if (index >= r.comparisons.size()) throw DataError("comparison index " + std::to_string(index) + " out of range");
  const auto& c = r.comparisons[index];
  std::vector<const ComparisonPoint*> pts;
  for (const auto& p : c.points)
    if (p.distance) pts.push_back(&p);
  double max_len = 1;
  for (const auto* p : pts) max_len = std::max(max_len, static_cast<double>(std::max(p->length_a, p->length_b)));
  const double hi = std::ceil(std::log10(max_len) + 1e-9);
  const double xmax = std::max(hi, 1.0);

  svg::Canvas cv(640, 440, "Hellinger distance vs. neuron length: " + c.stage_a + " vs " + c.stage_b);
  cv.axes("neuron length l (max of both stages, log10)", "Hellinger distance H");
  cv.y_ticks(0, 1, 5);
  cv.x_ticks(0, xmax, static_cast<int>(xmax), true);
  for (const auto* p : pts) {
    const double l = static_cast<double>(std::max(p->length_a, p->length_b));
    const double x = cv.x0() + std::log10(l) / xmax * cv.plot_w();
    const double y = cv.y0() - *p->distance * cv.plot_h();
    cv.stream() << "<circle class=\"point\" data-neuron=\"" << p->neuron << "\" cx=\"" << svg::num(x) << "\" cy=\"" << svg::num(y)
                << "\" r=\"3.5\" fill=\"" << svg::state_color(p->state) << "\" fill-opacity=\"0.7\"/>\n";
  }
  cv.text(cv.x0() + 8, svg::Canvas::kTop + 12, "shared " + std::to_string(c.shared) + ", mean H " + svg::num(c.mean_distance), "start",
          11, "summary");
  return cv.finish();
}

/// Per-stage probability bars for one neuron, one group per feature, groups
/// ordered by tag then descending probability.
inline std::string render_histogram(const Report& r, int neuron, const std::string& kind = "token") {
  std::vector<const NeuronDetail*> details;
  for (const auto& d : r.neuron_details)
    if (d.kind == kind && (neuron < 0 || d.neuron == neuron)) {
      if (neuron < 0) neuron = d.neuron;
      if (d.neuron == neuron) details.push_back(&d);
    }
  if (details.empty()) {
    throw DataError("no neuron_details section for neuron " + std::to_string(neuron) + " (" + kind + ")");
  }
  // Stage order follows the report's stage list.
  std::vector<std::string> stages;
  for (const auto& s : r.stages)
    for (const auto* d : details)
      if (d->stage_id == s.stage_id) stages.push_back(s.stage_id);

  struct Group {
    std::string token, tag;
    double best = 0;
    std::map<std::string, double> p;
  };
  std::map<std::string, Group> groups;
  for (const auto* d : details) {
    for (const auto& f : d->features) {
      auto& g = groups[f.token];
      if (g.token.empty()) {
        g.token = f.token;
        g.tag = f.tag;
      }
      g.best = std::max(g.best, f.p);
      g.p[d->stage_id] = f.p;
    }
  }
  std::vector<Group> order;
  for (auto& [_, g] : groups) order.push_back(g);
  std::sort(order.begin(), order.end(), [](const Group& a, const Group& b) {
    if (a.tag != b.tag) return a.tag < b.tag;
    if (a.best != b.best) return a.best > b.best;
    return a.token < b.token;
  });
  double pmax = 0;
  for (const auto& g : order) pmax = std::max(pmax, g.best);
  pmax = std::max(pmax, 1e-12);

  const double slot = 28;
  const double width = std::max(640.0, svg::Canvas::kLeft + svg::Canvas::kRight + slot * static_cast<double>(order.size()) + 20);
  svg::Canvas cv(width, 440, "neuron " + std::to_string(neuron) + " " + kind + " preference by stage");
  cv.axes(kind == "tag" ? "tag" : "feature (grouped by tag)", "probability p");
  cv.y_ticks(0, pmax, 4);
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t s = 0; s < stages.size(); ++s) legend.emplace_back(stages[s], svg::color(s));
  cv.legend(legend);

  const double bar_w = (slot - 6) / static_cast<double>(std::max<std::size_t>(1, stages.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& g = order[i];
    const double gx = cv.x0() + 10 + slot * static_cast<double>(i);
    cv.stream() << "<g class=\"bar-group\" data-feature=\"" << svg::escape(g.token) << "\" data-tag=\"" << svg::escape(g.tag) << "\">\n";
    for (std::size_t s = 0; s < stages.size(); ++s) {
      auto it = g.p.find(stages[s]);
      if (it == g.p.end()) continue;
      const double hgt = it->second / pmax * cv.plot_h();
      cv.stream() << "<rect class=\"bar\" data-stage=\"" << svg::escape(stages[s]) << "\" x=\"" << svg::num(gx + bar_w * static_cast<double>(s))
                  << "\" y=\"" << svg::num(cv.y0() - hgt) << "\" width=\"" << svg::num(bar_w) << "\" height=\"" << svg::num(hgt)
                  << "\" fill=\"" << svg::color(s) << "\" fill-opacity=\"0.8\"/>\n";
    }
    const double cx = gx + (slot - 6) / 2;
    cv.stream() << "<text class=\"feature-label\" x=\"" << svg::num(cx) << "\" y=\"" << svg::num(cv.y0() + 12)
                << "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"end\" transform=\"rotate(-60 " << svg::num(cx) << ' '
                << svg::num(cv.y0() + 12) << ")\">" << svg::escape(kind == "tag" ? g.token : g.token + " /" + g.tag) << "</text>\n";
    cv.raw("</g>\n");
  }
  return cv.finish();
}

/// Per-neuron length at both stages joined by a line: blue when the neuron
/// grows longer, red when it shrinks, dotted grey when unchanged.
inline std::string render_length_shift(const Report& r, std::size_t index) {
  if (r.length_shifts.empty()) throw DataError("no length_shifts section in report");
  if (index >= r.length_shifts.size()) throw DataError("length shift index " + std::to_string(index) + " out of range");
  const auto& s = r.length_shifts[index];
  double max_len = 1;
  for (const auto& row : s.rows) max_len = std::max({max_len, static_cast<double>(row.length_a), static_cast<double>(row.length_b)});
  const double ymax = std::max(1.0, std::ceil(std::log10(max_len + 1) + 1e-9));
  auto ypos = [&](svg::Canvas& cv, std::size_t l) { return cv.y0() - std::log10(static_cast<double>(l) + 1) / ymax * cv.plot_h(); };

  svg::Canvas cv(480, 480, "neuron length shift: " + s.stage_a + " to " + s.stage_b);
  cv.axes("stage", "neuron length l + 1 (log10)");
  cv.y_ticks(0, ymax, static_cast<int>(ymax), true);
  const double xa = cv.x0() + cv.plot_w() * 0.2, xb = cv.x0() + cv.plot_w() * 0.8;
  cv.text(xa, cv.y0() + 16, s.stage_a, "middle", 11, "stage-label");
  cv.text(xb, cv.y0() + 16, s.stage_b, "middle", 11, "stage-label");
  for (const auto& row : s.rows) {
    const char* stroke = row.direction == LengthDirection::Longer ? "#1f77b4" : row.direction == LengthDirection::Shorter ? "#d62728" : "#7f7f7f";
    cv.line(xa, ypos(cv, row.length_a), xb, ypos(cv, row.length_b), stroke, 0.8, "shift " + to_string(row.direction),
            row.direction == LengthDirection::Unchanged ? "2,2" : "");
  }
  cv.legend({{"longer " + std::to_string(s.longer), "#1f77b4"},
             {"shorter " + std::to_string(s.shorter), "#d62728"},
             {"unchanged " + std::to_string(s.unchanged), "#7f7f7f"}});
  return cv.finish();
}

/// Sorted activation masses, one polyline per stage.
inline std::string render_mass_curve(const Report& r) {
  if (r.mass_curves.empty()) throw DataError("no mass_curves section in report");
  double mmax = 0;
  std::size_t n = 1;
  for (const auto& c : r.mass_curves) {
    n = std::max(n, c.points.size());
    for (const auto& p : c.points) mmax = std::max(mmax, p.mass);
  }
  mmax = std::max(mmax, 1e-12);
  svg::Canvas cv(640, 440, "sorted neuron activation masses");
  cv.axes("neuron rank", "activation mass");
  cv.y_ticks(0, mmax, 4);
  cv.x_ticks(0, static_cast<double>(n - 1), 4);
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t i = 0; i < r.mass_curves.size(); ++i) {
    const auto& c = r.mass_curves[i];
    cv.stream() << "<polyline class=\"mass-curve\" data-stage=\"" << svg::escape(c.stage_id) << "\" fill=\"none\" stroke=\""
                << svg::color(i) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < c.points.size(); ++k) {
      const double x = cv.x0() + (n > 1 ? static_cast<double>(c.points[k].rank) / static_cast<double>(n - 1) : 0) * cv.plot_w();
      const double y = cv.y0() - c.points[k].mass / mmax * cv.plot_h();
      cv.stream() << (k ? " " : "") << svg::num(x) << ',' << svg::num(y);
    }
    cv.raw("\"/>\n");
    legend.emplace_back(c.stage_id + " (Gini " + svg::num(c.gini) + ")", svg::color(i));
  }
  cv.legend(legend);
  return cv.finish();
}

/// Corpus tag frequency next to each stage's activation share per tag.
inline std::string render_tag_match(const Report& r) {
  if (r.tag_match.empty()) throw DataError("no tag_match section in report");
  std::set<std::string> tagset;
  std::map<std::string, double> corpus;
  double vmax = 0;
  for (const auto& t : r.tag_match) {
    for (const auto& row : t.rows) {
      tagset.insert(row.tag);
      corpus[row.tag] = row.corpus;
      vmax = std::max({vmax, row.corpus, row.activation});
    }
  }
  vmax = std::max(vmax, 1e-12);
  const std::vector<std::string> tags(tagset.begin(), tagset.end());
  const std::size_t series = r.tag_match.size() + 1;
  const double slot = 12.0 * static_cast<double>(series) + 10;
  const double width = std::max(640.0, svg::Canvas::kLeft + svg::Canvas::kRight + slot * static_cast<double>(tags.size()) + 20);
  svg::Canvas cv(width, 440, "corpus tag frequency vs. activation share per tag");
  cv.axes("tag", "share");
  cv.y_ticks(0, vmax, 4);
  std::vector<std::pair<std::string, std::string>> legend{{"corpus", "#000000"}};
  for (std::size_t s = 0; s < r.tag_match.size(); ++s) {
    legend.emplace_back(r.tag_match[s].stage_id + " (L1 " + svg::num(r.tag_match[s].l1) + ")", svg::color(s));
  }
  cv.legend(legend);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const double gx = cv.x0() + 10 + slot * static_cast<double>(i);
    auto bar = [&](std::size_t s, double v, const std::string& fill, const std::string& label) {
      const double hgt = v / vmax * cv.plot_h();
      cv.stream() << "<rect class=\"bar\" data-series=\"" << svg::escape(label) << "\" x=\"" << svg::num(gx + 12.0 * static_cast<double>(s))
                  << "\" y=\"" << svg::num(cv.y0() - hgt) << "\" width=\"11\" height=\"" << svg::num(hgt) << "\" fill=\"" << fill << "\"/>\n";
    };
    cv.stream() << "<g class=\"bar-group\" data-tag=\"" << svg::escape(tags[i]) << "\">\n";
    bar(0, corpus[tags[i]], "#000000", "corpus");
    for (std::size_t s = 0; s < r.tag_match.size(); ++s) {
      double v = 0;
      for (const auto& row : r.tag_match[s].rows)
        if (row.tag == tags[i]) v = row.activation;
      bar(s + 1, v, svg::color(s), r.tag_match[s].stage_id);
    }
    const double cx = gx + slot / 2 - 5;
    cv.stream() << "<text class=\"feature-label\" x=\"" << svg::num(cx) << "\" y=\"" << svg::num(cv.y0() + 12)
                << "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"end\" transform=\"rotate(-60 " << svg::num(cx) << ' '
                << svg::num(cv.y0() + 12) << ")\">" << svg::escape(tags[i]) << "</text>\n";
    cv.raw("</g>\n");
  }
  return cv.finish();
}

inline std::string render(const Report& r, FigureKind kind, const RenderOptions& opt = {}) {
  switch (kind) {
    case FigureKind::Scatter: return render_scatter(r, opt.index);
    case FigureKind::Histogram: return render_histogram(r, opt.neuron, opt.kind);
    case FigureKind::LengthShift: return render_length_shift(r, opt.index);
    case FigureKind::MassCurve: return render_mass_curve(r);
    case FigureKind::TagMatch: return render_tag_match(r);
  }
  throw UsageError("unknown figure kind");
}

}  // namespace txray
