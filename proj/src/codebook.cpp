// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/codebook.hpp"

#include <algorithm>
#include <cmath>

#include "thdp/error.hpp"

namespace thdp {

Codebook build_codebook(std::uint32_t rows, std::uint32_t cols, const Rect& bounds,
                        double static_threshold) {
  if (rows < 1 || cols < 1) throw InvalidInput("codebook needs at least one row and column");
  if (!(bounds.max_x > bounds.min_x) || !(bounds.max_y > bounds.min_y))
    throw InvalidInput("codebook bounds are degenerate");
  if (!(static_threshold >= 0.0)) throw InvalidInput("static speed threshold must be >= 0");
  Codebook cb;
  cb.rows = rows;
  cb.cols = cols;
  cb.bounds = bounds;
  cb.static_speed_threshold = static_threshold;
  return cb;
}

Orientation orientation_bin(double vx, double vy, double static_threshold) {
  if (std::hypot(vx, vy) < static_threshold) return Orientation::Static;
  const double ax = std::abs(vx);
  const double ay = std::abs(vy);
  if (ax == 0.0 && ay == 0.0) return Orientation::East;
  const Orientation horizontal = vx > 0.0 ? Orientation::East : Orientation::West;
  const Orientation vertical = vy > 0.0 ? Orientation::North : Orientation::South;
  if (ax > ay) return horizontal;
  if (ay > ax) return vertical;
  return std::min(horizontal, vertical);
}

namespace {

std::uint32_t axis_bin(double v, double lo, double hi, std::uint32_t n, bool& clamped) {
  if (v < lo || v > hi) clamped = true;
  const double frac = (v - lo) / (hi - lo);
  const double scaled = std::floor(frac * static_cast<double>(n));
  if (!(scaled >= 0.0)) return 0;
  if (scaled >= static_cast<double>(n)) return n - 1;
  return static_cast<std::uint32_t>(scaled);
}

}  // namespace

TokenizeResult tokenize(double x, double y, double vx, double vy, const Codebook& cb,
                        OutOfBounds policy) {
  TokenizeResult out;
  const std::uint32_t col = axis_bin(x, cb.bounds.min_x, cb.bounds.max_x, cb.cols, out.clamped);
  const std::uint32_t row = axis_bin(y, cb.bounds.min_y, cb.bounds.max_y, cb.rows, out.clamped);
  if (out.clamped && policy == OutOfBounds::Reject)
    throw InvalidInput("position outside codebook bounds");
  out.cell = cb.cell_index(row, col, orientation_bin(vx, vy, cb.static_speed_threshold));
  return out;
}

CellCoords decode_cell(Cell cell, const Codebook& cb) {
  const std::uint32_t o = cell % kOrientationBins;
  const std::uint32_t rc = cell / kOrientationBins;
  return {rc / cb.cols, rc % cb.cols, static_cast<Orientation>(o)};
}

}  // namespace thdp
