#pragma once

// Small self-contained SVG chart writer (no scripts, fonts or external references).

#include <span>
#include <string>
#include <vector>

namespace kabi::svg {

class Plot {
 public:
  Plot(double width, double height, std::string title, std::string x_label = "", std::string y_label = "");

  void set_x_range(double lo, double hi);
  void set_y_range(double lo, double hi);
  void set_aspect_equal(bool on) { equal_aspect_ = on; }

  void points(std::span<const double> xs, std::span<const double> ys, const std::string& color, double radius = 2.0,
              double opacity = 0.7);
  void line(std::span<const double> xs, std::span<const double> ys, const std::string& color, double width = 1.5,
            bool dashed = false);
  // Step function through (xs[i], ys[i]) held until xs[i+1].
  void steps(std::span<const double> xs, std::span<const double> ys, const std::string& color, double width = 1.5);
  void band(std::span<const double> xs, std::span<const double> lo, std::span<const double> hi,
            const std::string& color, double opacity = 0.25);
  // counts.size() == edges.size() - 1
  void histogram(std::span<const double> edges, std::span<const double> counts, const std::string& color,
                 double opacity = 0.55);
  void vline(double x, const std::string& color, bool dashed = true);
  void segments(std::span<const double> x0, std::span<const double> y0, std::span<const double> x1,
                std::span<const double> y1, const std::string& color, double width = 1.0, double opacity = 0.5);
  void legend(const std::string& label, const std::string& color);

  double width() const { return width_; }
  double height() const { return height_; }

  // <svg> element; x/y offset it inside a parent document.
  std::string render(double x = 0.0, double y = 0.0) const;

 private:
  struct Item {
    std::string kind;
    std::vector<double> a, b, c, d;
    std::string color;
    double width = 1.0;
    double opacity = 1.0;
    bool dashed = false;
  };

  void include(std::span<const double> xs, std::span<const double> ys);
  double px(double x) const;
  double py(double y) const;

  double width_, height_;
  std::string title_, x_label_, y_label_;
  double x_lo_ = 0, x_hi_ = 1, y_lo_ = 0, y_hi_ = 1;
  bool x_fixed_ = false, y_fixed_ = false, any_data_ = false, equal_aspect_ = false;
  std::vector<Item> items_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

// Lays plots out left to right, top to bottom, `columns` per row.
std::string grid_document(const std::vector<Plot>& plots, std::size_t columns);
std::string document(const Plot& plot);

}  // namespace kabi::svg
