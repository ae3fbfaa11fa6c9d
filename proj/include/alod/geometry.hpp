#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace alod {

/// Thrown when a value violates a domain invariant (bad box, bad distribution, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box in continuous image coordinates, origin top-left.
/// Valid boxes have finite coordinates and strictly positive extent on both axes.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  friend bool operator==(const BBox&, const BBox&) = default;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }

  bool is_valid() const noexcept {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_max > x_min && y_max > y_min;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << '(' << x_min << ',' << y_min << ',' << x_max << ',' << y_max << ')';
    return os.str();
  }
};

inline void validate(const BBox& b) {
  if (!b.is_valid()) {
    throw ValidationError("invalid box " + b.to_string());
  }
}

inline double area(const BBox& b) {
  validate(b);
  return b.width() * b.height();
}

/// Area of the intersection; zero for disjoint or edge-touching boxes.
inline double intersection_area(const BBox& a, const BBox& b) {
  validate(a);
  validate(b);
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union in [0, 1]. Exactly 1 for identical boxes.
inline double iou(const BBox& a, const BBox& b) {
  if (a == b) {
    validate(a);
    return 1.0;
  }
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Clamps a box into [0,width]x[0,height]. The result may be degenerate; callers validate.
inline BBox clamp_to_frame(const BBox& b, double width, double height) noexcept {
  return BBox{std::clamp(b.x_min, 0.0, width), std::clamp(b.y_min, 0.0, height),
              std::clamp(b.x_max, 0.0, width), std::clamp(b.y_max, 0.0, height)};
}

}  // namespace alod
