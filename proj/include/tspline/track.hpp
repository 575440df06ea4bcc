#ifndef TSPLINE_TRACK_HPP
#define TSPLINE_TRACK_HPP

#include <cstdint>
#include <vector>

#include "tspline/basis.hpp"
#include "tspline/error.hpp"

namespace tspline {

/// Two-dimensional track sampled at strictly increasing times. Coordinates
/// are projected meters, or latitude (x) and longitude (y) in degrees when
/// `geographic` is set. Synthetic tracks also carry the true path and the
/// indices drawn from the outlier distribution.
struct TrackSeries {
  std::vector<double> times;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> truth_x;
  std::vector<double> truth_y;
  std::vector<std::uint8_t> contaminated;
  bool geographic = false;

  std::size_t size() const { return times.size(); }
  bool has_truth() const { return !truth_x.empty(); }

  void validate() const {
    if (x.size() != times.size() || y.size() != times.size()) {
      throw invalid_input("track: times, x and y must have equal lengths");
    }
    if (has_truth() && (truth_x.size() != times.size() || truth_y.size() != times.size())) {
      throw invalid_input("track: truth must match the observation count");
    }
    if (!contaminated.empty() && contaminated.size() != times.size()) {
      throw invalid_input("track: contamination mask must match the observation count");
    }
    detail::require_strictly_increasing(times, "track");
  }
};

}  // namespace tspline

#endif  // TSPLINE_TRACK_HPP
