#include "riskadapt/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace riskadapt::harness {

namespace {

constexpr double kWidth = 800, kHeight = 500;
constexpr double kLeft = 80, kRight = 160, kTop = 50, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string escape(const std::string& s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  void finish() {
    if (empty()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

class Canvas {
 public:
  Canvas(const std::string& title) {
    out_ += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" width=\"{}\" height=\"{}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        kWidth, kHeight, kWidth, kHeight);
    out_ += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
    out_ += fmt::format("<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
                        kWidth / 2, escape(title));
  }

  void axes(const Range& x, const Range& y, const std::string& x_label, const std::string& y_label, bool x_ticks) {
    x_ = x;
    y_ = y;
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    out_ += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x1, y0);
    out_ += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x0, y1);
    for (int k = 0; k <= 4; ++k) {
      const double v = y.lo + (y.hi - y.lo) * k / 4.0;
      const double py = sy(v);
      out_ += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", x0 - 5, py,
                          x0, py);
      out_ += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", x0 - 8, py + 4, v);
      if (x_ticks) {
        const double u = x.lo + (x.hi - x.lo) * k / 4.0;
        const double px = sx(u);
        out_ += fmt::format("<line x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" stroke=\"black\"/>\n", px, y0,
                            px, y0 + 5);
        out_ += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px, y0 + 20, u);
      }
    }
    out_ += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (x0 + x1) / 2,
                        kHeight - 15, escape(x_label));
    out_ += fmt::format(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        (y0 + y1) / 2, (y0 + y1) / 2, escape(y_label));
  }

  double sx(double v) const { return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double sy(double v) const { return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom); }

  void legend(std::size_t i, const std::string& label) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 15;
    out_ += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", x, y - 10, color(i));
    out_ += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", x + 18, y, escape(label));
  }

  void no_data() {
    out_ += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#7f7f7f\">no data</text>\n",
                        (kLeft + kWidth - kRight) / 2, (kTop + kHeight - kBottom) / 2);
  }

  std::string& raw() { return out_; }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  std::string out_;
  Range x_, y_;
};

}  // namespace

std::string render_line_plot(const LinePlot& plot) {
  Range xr, yr;
  bool any = false;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      any = true;
      xr.add(s.x[i]);
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      yr.add(s.y[i] - e);
      yr.add(s.y[i] + e);
    }
  }
  xr.finish();
  yr.finish();
  Canvas c(plot.title);
  c.axes(xr, yr, plot.x_label, plot.y_label, true);
  if (!any) {
    c.no_data();
    return c.finish();
  }
  const double top = kTop, bottom = kHeight - kBottom;
  for (const auto& b : plot.shaded) {
    const double a = std::clamp(c.sx(b.x0), kLeft, kWidth - kRight);
    const double z = std::clamp(c.sx(b.x1), kLeft, kWidth - kRight);
    if (z <= a) continue;
    c.raw() += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"#bbbbbb\" fill-opacity=\"0.4\"/>\n", a,
        top, z - a, bottom - top);
  }
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.err.size() == n && n > 0) {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) pts += fmt::format("{:.2f},{:.2f} ", c.sx(s.x[i]), c.sy(s.y[i] + s.err[i]));
      for (std::size_t i = n; i-- > 0;) pts += fmt::format("{:.2f},{:.2f} ", c.sx(s.x[i]), c.sy(s.y[i] - s.err[i]));
      c.raw() += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", pts,
                             color(k));
    }
    std::string pts;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        pts += fmt::format("{:.2f},{:.2f} ", c.sx(s.x[i]), c.sy(s.y[i]));
    }
    c.raw() += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", pts,
                           color(k));
    c.legend(k, s.label);
  }
  return c.finish();
}

std::string render_bar_plot(const BarPlot& plot) {
  Range yr;
  yr.add(0.0);
  bool any = false;
  for (const auto& g : plot.groups)
    for (double v : g.values)
      if (std::isfinite(v)) {
        any = true;
        yr.add(v);
      }
  yr.finish();
  Range xr;
  xr.lo = 0.0;
  xr.hi = std::max<double>(1.0, static_cast<double>(plot.groups.size()));
  Canvas c(plot.title);
  c.axes(xr, yr, "", plot.y_label, false);
  if (!any) {
    c.no_data();
    return c.finish();
  }
  const std::size_t ns = std::max<std::size_t>(1, plot.series_labels.size());
  for (std::size_t g = 0; g < plot.groups.size(); ++g) {
    const double left = c.sx(static_cast<double>(g)), right = c.sx(static_cast<double>(g + 1));
    const double slot = (right - left) * 0.8 / static_cast<double>(ns);
    for (std::size_t k = 0; k < plot.groups[g].values.size() && k < ns; ++k) {
      const double v = plot.groups[g].values[k];
      if (!std::isfinite(v)) continue;
      const double x = left + (right - left) * 0.1 + slot * static_cast<double>(k);
      const double y0 = c.sy(0.0), y1 = c.sy(v);
      c.raw() += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n", x,
                             std::min(y0, y1), slot, std::abs(y0 - y1), color(k));
    }
    c.raw() += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (left + right) / 2,
                           kHeight - kBottom + 20, escape(plot.groups[g].label));
  }
  for (std::size_t k = 0; k < plot.series_labels.size(); ++k) c.legend(k, plot.series_labels[k]);
  return c.finish();
}

}  // namespace riskadapt::harness
