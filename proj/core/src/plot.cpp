#include "prunescope/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "prunescope/archive.hpp"

namespace prunescope {
namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double left = 64, right = 150, top = 36, bottom = 48;
  double x0, x1, y0, y1;  // data range
  bool log_x;
  int w, h;

  double px(double x) const {
    double t;
    if (log_x) {
      // Descending: x0 (largest) maps to the left edge.
      t = x0 == x1 ? 0.5 : (std::log(x0) - std::log(x)) / (std::log(x0) - std::log(x1));
    } else {
      t = x0 == x1 ? 0.5 : (x - x0) / (x1 - x0);
    }
    return left + t * (w - left - right);
  }
  double py(double y) const {
    const double t = y0 == y1 ? 0.5 : (y - y0) / (y1 - y0);
    return h - bottom - t * (h - top - bottom);
  }
};

}  // namespace

std::string render_chart(const ChartSpec& spec, const std::vector<Series>& input) {
  std::vector<Series> series = input;
  if (spec.stacked) {
    for (std::size_t s = 1; s < series.size(); ++s) {
      for (std::size_t i = 0; i < series[s].y.size() && i < series[s - 1].y.size(); ++i) {
        series[s].y[i] += series[s - 1].y[i];
      }
    }
  }

  Frame f;
  f.w = spec.width;
  f.h = spec.height;
  f.log_x = spec.log_x_descending;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (f.log_x && !(s.x[i] > 0)) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = xmax = 1.0;
  if (!std::isfinite(ymin)) ymin = ymax = 0.0;
  if (spec.stacked) ymin = 0.0;
  ymin = spec.y_min.value_or(ymin);
  ymax = spec.y_max.value_or(ymax);
  if (ymin == ymax) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  if (f.log_x) {
    f.x0 = std::max(xmax, 1.0);
    f.x1 = xmin;
  } else {
    f.x0 = xmin;
    f.x1 = xmax;
  }
  f.y0 = ymin;
  f.y1 = ymax;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(f.w) + "\" height=\"" +
                    std::to_string(f.h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(f.w / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(spec.title) + "</text>\n";

  // Axes and ticks.
  const double ax_l = f.left, ax_r = f.w - f.right, ax_t = f.top, ax_b = f.h - f.bottom;
  svg += "<path d=\"M" + num(ax_l) + "," + num(ax_t) + " L" + num(ax_l) + "," + num(ax_b) + " L" + num(ax_r) + "," +
         num(ax_b) + "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double y = f.py(v);
    svg += "<line x1=\"" + num(ax_l - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(ax_l) + "\" y2=\"" + num(y) +
           "\" stroke=\"black\"/><text x=\"" + num(ax_l - 6) + "\" y=\"" + num(y + 4) +
           "\" text-anchor=\"end\">" + label_num(v) + "</text>\n";
  }
  std::vector<double> xticks;
  if (f.log_x) {
    for (double v = f.x0; v >= f.x1 * 0.999; v *= 0.5) xticks.push_back(v);
  } else {
    for (int i = 0; i <= 4; ++i) xticks.push_back(f.x0 + (f.x1 - f.x0) * i / 4.0);
  }
  for (double v : xticks) {
    const double x = f.px(v);
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(ax_b) + "\" x2=\"" + num(x) + "\" y2=\"" + num(ax_b + 4) +
           "\" stroke=\"black\"/><text x=\"" + num(x) + "\" y=\"" + num(ax_b + 16) +
           "\" text-anchor=\"middle\">" + label_num(v) + "</text>\n";
  }
  svg += "<text x=\"" + num((ax_l + ax_r) / 2) + "\" y=\"" + num(f.h - 10.0) + "\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text transform=\"translate(14," + num((ax_t + ax_b) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(spec.y_label) + "</text>\n";

  // Data, drawn last series first when stacked so lower bands stay visible.
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::size_t s = spec.stacked ? series.size() - 1 - k : k;
    const auto& ser = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string pts;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      if (f.log_x && !(ser.x[i] > 0)) continue;
      pts += (n++ ? " " : "") + num(f.px(ser.x[i])) + "," + num(f.py(ser.y[i]));
    }
    if (n == 0) continue;
    if (spec.stacked && n > 1) {
      const double xa = f.px(ser.x.front()), xb = f.px(ser.x.back());
      svg += "<polygon points=\"" + num(xa) + "," + num(f.py(f.y0)) + " " + pts + " " + num(xb) + "," +
             num(f.py(f.y0)) + "\" fill=\"" + color + "\" fill-opacity=\"0.8\" stroke=\"none\"/>\n";
    } else if (n > 1) {
      svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    }
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      if (f.log_x && !(ser.x[i] > 0)) continue;
      svg += "<circle cx=\"" + num(f.px(ser.x[i])) + "\" cy=\"" + num(f.py(ser.y[i])) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    }
  }

  // Legend.
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = ax_t + 14.0 * static_cast<double>(s);
    svg += "<rect x=\"" + num(ax_r + 12) + "\" y=\"" + num(y) + "\" width=\"10\" height=\"10\" fill=\"" +
           kPalette[s % std::size(kPalette)] + "\"/><text x=\"" + num(ax_r + 26) + "\" y=\"" + num(y + 9) + "\">" +
           escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_figures(const std::vector<TrialCurves>& trials, const std::vector<Category>& categories,
                   const std::filesystem::path& out_dir) {
  auto per_trial = [&](auto&& value) {
    std::vector<Series> out;
    for (const auto& t : trials) {
      Series s{t.label, {}, {}};
      for (const auto& row : t.summaries) {
        s.x.push_back(row.fraction_remaining);
        s.y.push_back(value(row));
      }
      out.push_back(std::move(s));
    }
    return out;
  };

  ChartSpec acc{"Top-1 accuracy", {}, "accuracy", true, std::nullopt, std::nullopt, false, 640, 400};
  acc.x_label = "fraction of weights remaining";
  write_file_atomic(out_dir / "fig1_accuracy.svg",
                    render_chart(acc, per_trial([](const InterpretabilitySummary& s) { return s.accuracy; })));

  ChartSpec units = acc;
  units.title = "Interpretable units";
  units.y_label = "units";
  units.y_min = 0.0;
  write_file_atomic(out_dir / "fig2_interpretable_units.svg",
                    render_chart(units, per_trial([](const InterpretabilitySummary& s) {
                                   return static_cast<double>(s.interpretable_units);
                                 })));

  ChartSpec concepts = units;
  concepts.title = "Unique concepts";
  concepts.y_label = "concepts";
  write_file_atomic(out_dir / "fig2_unique_concepts.svg",
                    render_chart(concepts, per_trial([](const InterpretabilitySummary& s) {
                                   return static_cast<double>(s.unique_concepts);
                                 })));

  ChartSpec stack = units;
  stack.title = "Unique concepts by category";
  stack.stacked = true;
  std::vector<Series> bands;
  if (!trials.empty()) {
    for (auto c : categories) {
      Series s{category_name(c), {}, {}};
      for (const auto& row : trials.front().summaries) {
        auto it = row.category_counts.find(c);
        s.x.push_back(row.fraction_remaining);
        s.y.push_back(it == row.category_counts.end() ? 0.0 : static_cast<double>(it->second));
      }
      bands.push_back(std::move(s));
    }
  }
  write_file_atomic(out_dir / "fig3_categories.svg", render_chart(stack, bands));

  ChartSpec cons = acc;
  cons.title = "Consistency with the unpruned network";
  cons.y_label = "fraction of units";
  cons.y_min = 0.0;
  cons.y_max = 1.0;
  std::vector<Series> lines;
  for (const auto& t : trials) {
    Series retained{t.label + " retained", {}, {}}, same{t.label + " same concept", {}, {}};
    for (const auto& row : t.consistency) {
      retained.x.push_back(row.fraction_remaining);
      retained.y.push_back(row.retained_fraction);
      same.x.push_back(row.fraction_remaining);
      same.y.push_back(row.same_concept_fraction);
    }
    lines.push_back(std::move(retained));
    lines.push_back(std::move(same));
  }
  write_file_atomic(out_dir / "fig4_consistency.svg", render_chart(cons, lines));
}

}  // namespace prunescope
