#include "kabi/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace kabi::svg {

namespace {

constexpr double kLeft = 52, kRight = 14, kTop = 28, kBottom = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e4))
    std::snprintf(buf, sizeof(buf), "%.1e", v);
  else
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

}  // namespace

Plot::Plot(double width, double height, std::string title, std::string x_label, std::string y_label)
    : width_(width), height_(height), title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void Plot::set_x_range(double lo, double hi) {
  x_lo_ = lo;
  x_hi_ = hi;
  x_fixed_ = true;
}

void Plot::set_y_range(double lo, double hi) {
  y_lo_ = lo;
  y_hi_ = hi;
  y_fixed_ = true;
}

void Plot::include(std::span<const double> xs, std::span<const double> ys) {
  for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    if (!any_data_) {
      if (!x_fixed_) x_lo_ = x_hi_ = xs[i];
      if (!y_fixed_) y_lo_ = y_hi_ = ys[i];
      any_data_ = true;
    }
    if (!x_fixed_) {
      x_lo_ = std::min(x_lo_, xs[i]);
      x_hi_ = std::max(x_hi_, xs[i]);
    }
    if (!y_fixed_) {
      y_lo_ = std::min(y_lo_, ys[i]);
      y_hi_ = std::max(y_hi_, ys[i]);
    }
  }
}

void Plot::points(std::span<const double> xs, std::span<const double> ys, const std::string& color, double radius,
                  double opacity) {
  include(xs, ys);
  items_.push_back({"points", {xs.begin(), xs.end()}, {ys.begin(), ys.end()}, {}, {}, color, radius, opacity, false});
}

void Plot::line(std::span<const double> xs, std::span<const double> ys, const std::string& color, double width,
                bool dashed) {
  include(xs, ys);
  items_.push_back({"line", {xs.begin(), xs.end()}, {ys.begin(), ys.end()}, {}, {}, color, width, 1.0, dashed});
}

void Plot::steps(std::span<const double> xs, std::span<const double> ys, const std::string& color, double width) {
  include(xs, ys);
  items_.push_back({"steps", {xs.begin(), xs.end()}, {ys.begin(), ys.end()}, {}, {}, color, width, 1.0, false});
}

void Plot::band(std::span<const double> xs, std::span<const double> lo, std::span<const double> hi,
                const std::string& color, double opacity) {
  include(xs, lo);
  include(xs, hi);
  items_.push_back({"band", {xs.begin(), xs.end()}, {lo.begin(), lo.end()}, {hi.begin(), hi.end()}, {}, color, 0, opacity, false});
}

void Plot::histogram(std::span<const double> edges, std::span<const double> counts, const std::string& color,
                     double opacity) {
  std::vector<double> zeros(edges.size(), 0.0);
  include(edges, zeros);
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) mids.push_back(edges[i]);
  include(mids, counts);
  items_.push_back({"hist", {edges.begin(), edges.end()}, {counts.begin(), counts.end()}, {}, {}, color, 0, opacity, false});
}

void Plot::vline(double x, const std::string& color, bool dashed) {
  items_.push_back({"vline", {x}, {}, {}, {}, color, 1.5, 1.0, dashed});
}

void Plot::segments(std::span<const double> x0, std::span<const double> y0, std::span<const double> x1,
                    std::span<const double> y1, const std::string& color, double width, double opacity) {
  include(x0, y0);
  include(x1, y1);
  items_.push_back({"segments", {x0.begin(), x0.end()}, {y0.begin(), y0.end()}, {x1.begin(), x1.end()},
                    {y1.begin(), y1.end()}, color, width, opacity, false});
}

void Plot::legend(const std::string& label, const std::string& color) { legend_.emplace_back(label, color); }

double Plot::px(double x) const { return kLeft + (x - x_lo_) / (x_hi_ - x_lo_) * (width_ - kLeft - kRight); }
double Plot::py(double y) const { return height_ - kBottom - (y - y_lo_) / (y_hi_ - y_lo_) * (height_ - kTop - kBottom); }

std::string Plot::render(double ox, double oy) const {
  Plot p = *this;
  if (!(p.x_hi_ > p.x_lo_)) {
    p.x_lo_ -= 0.5;
    p.x_hi_ += 0.5;
  }
  if (!(p.y_hi_ > p.y_lo_)) {
    p.y_lo_ -= 0.5;
    p.y_hi_ += 0.5;
  }
  if (!p.x_fixed_) {
    const double pad = 0.03 * (p.x_hi_ - p.x_lo_);
    p.x_lo_ -= pad;
    p.x_hi_ += pad;
  }
  if (!p.y_fixed_) {
    const double pad = 0.05 * (p.y_hi_ - p.y_lo_);
    p.y_lo_ = p.y_lo_ == 0.0 ? 0.0 : p.y_lo_ - pad;
    p.y_hi_ += pad;
  }
  if (p.equal_aspect_) {
    const double lo = std::min(p.x_lo_, p.y_lo_), hi = std::max(p.x_hi_, p.y_hi_);
    p.x_lo_ = p.y_lo_ = lo;
    p.x_hi_ = p.y_hi_ = hi;
  }

  std::ostringstream s;
  s << "<svg x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(width_) << "\" height=\"" << num(height_)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << num(width_) << "\" height=\"" << num(height_) << "\" fill=\"white\"/>\n";
  const double x0 = kLeft, x1 = width_ - kRight, y0 = kTop, y1 = height_ - kBottom;
  s << "<text x=\"" << num(width_ / 2) << "\" y=\"17\" text-anchor=\"middle\" font-size=\"13\">" << escape(title_)
    << "</text>\n";
  for (double t : nice_ticks(p.x_lo_, p.x_hi_)) {
    s << "<line x1=\"" << num(p.px(t)) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(p.px(t)) << "\" y2=\"" << num(y1)
      << "\" stroke=\"#e4e4e4\"/>\n";
    s << "<text x=\"" << num(p.px(t)) << "\" y=\"" << num(y1 + 14) << "\" text-anchor=\"middle\">" << tick_label(t)
      << "</text>\n";
  }
  for (double t : nice_ticks(p.y_lo_, p.y_hi_)) {
    s << "<line x1=\"" << num(x0) << "\" y1=\"" << num(p.py(t)) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(p.py(t))
      << "\" stroke=\"#e4e4e4\"/>\n";
    s << "<text x=\"" << num(x0 - 4) << "\" y=\"" << num(p.py(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0) << "\" height=\"" << num(y1 - y0)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!x_label_.empty())
    s << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(height_ - 6) << "\" text-anchor=\"middle\">"
      << escape(x_label_) << "</text>\n";
  if (!y_label_.empty())
    s << "<text transform=\"translate(12," << num((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label_) << "</text>\n";

  s << "<svg x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0) << "\" height=\"" << num(y1 - y0)
    << "\" overflow=\"hidden\"><g transform=\"translate(" << num(-x0) << "," << num(-y0) << ")\">\n";
  for (const auto& it : items_) {
    const std::string dash = it.dashed ? " stroke-dasharray=\"5,4\"" : "";
    if (it.kind == "points") {
      for (std::size_t i = 0; i < it.a.size(); ++i)
        s << "<circle cx=\"" << num(p.px(it.a[i])) << "\" cy=\"" << num(p.py(it.b[i])) << "\" r=\"" << num(it.width)
          << "\" fill=\"" << it.color << "\" fill-opacity=\"" << num(it.opacity) << "\"/>\n";
    } else if (it.kind == "line" || it.kind == "steps") {
      s << "<polyline fill=\"none\" stroke=\"" << it.color << "\" stroke-width=\"" << num(it.width) << "\"" << dash
        << " points=\"";
      for (std::size_t i = 0; i < it.a.size(); ++i) {
        if (it.kind == "steps" && i > 0) s << num(p.px(it.a[i])) << "," << num(p.py(it.b[i - 1])) << " ";
        s << num(p.px(it.a[i])) << "," << num(p.py(it.b[i])) << " ";
      }
      s << "\"/>\n";
    } else if (it.kind == "band") {
      s << "<polygon fill=\"" << it.color << "\" fill-opacity=\"" << num(it.opacity) << "\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < it.a.size(); ++i) s << num(p.px(it.a[i])) << "," << num(p.py(it.c[i])) << " ";
      for (std::size_t i = it.a.size(); i-- > 0;) s << num(p.px(it.a[i])) << "," << num(p.py(it.b[i])) << " ";
      s << "\"/>\n";
    } else if (it.kind == "hist") {
      for (std::size_t i = 0; i + 1 < it.a.size(); ++i) {
        const double left = p.px(it.a[i]), right = p.px(it.a[i + 1]), top = p.py(it.b[i]), base = p.py(std::max(0.0, p.y_lo_));
        s << "<rect x=\"" << num(left) << "\" y=\"" << num(std::min(top, base)) << "\" width=\"" << num(right - left)
          << "\" height=\"" << num(std::abs(base - top)) << "\" fill=\"" << it.color << "\" fill-opacity=\""
          << num(it.opacity) << "\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
      }
    } else if (it.kind == "vline") {
      s << "<line x1=\"" << num(p.px(it.a[0])) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(p.px(it.a[0])) << "\" y2=\""
        << num(y1) << "\" stroke=\"" << it.color << "\" stroke-width=\"" << num(it.width) << "\"" << dash << "/>\n";
    } else if (it.kind == "segments") {
      for (std::size_t i = 0; i < it.a.size(); ++i)
        s << "<line x1=\"" << num(p.px(it.a[i])) << "\" y1=\"" << num(p.py(it.b[i])) << "\" x2=\"" << num(p.px(it.c[i]))
          << "\" y2=\"" << num(p.py(it.d[i])) << "\" stroke=\"" << it.color << "\" stroke-width=\"" << num(it.width)
          << "\" stroke-opacity=\"" << num(it.opacity) << "\"/>\n";
    }
  }
  s << "</g></svg>\n";
  double ly = y0 + 14;
  for (const auto& [label, color] : legend_) {
    s << "<rect x=\"" << num(x1 - 110) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/><text x=\"" << num(x1 - 95) << "\" y=\"" << num(ly) << "\">" << escape(label) << "</text>\n";
    ly += 15;
  }
  s << "</svg>\n";
  return s.str();
}

std::string grid_document(const std::vector<Plot>& plots, std::size_t columns) {
  columns = std::max<std::size_t>(1, columns);
  double cell_w = 0, cell_h = 0;
  for (const auto& p : plots) {
    cell_w = std::max(cell_w, p.width());
    cell_h = std::max(cell_h, p.height());
  }
  const std::size_t rows = (plots.size() + columns - 1) / columns;
  const double total_w = cell_w * static_cast<double>(std::min(columns, std::max<std::size_t>(1, plots.size())));
  const double total_h = cell_h * static_cast<double>(std::max<std::size_t>(1, rows));
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(total_w)
    << "\" height=\"" << num(total_h) << "\" viewBox=\"0 0 " << num(total_w) << " " << num(total_h) << "\">\n";
  for (std::size_t i = 0; i < plots.size(); ++i)
    s << plots[i].render(cell_w * static_cast<double>(i % columns), cell_h * static_cast<double>(i / columns));
  s << "</svg>\n";
  return s.str();
}

std::string document(const Plot& plot) { return grid_document({plot}, 1); }

}  // namespace kabi::svg
