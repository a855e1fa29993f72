// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>

namespace thdp {

using Cell = std::uint32_t;

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 1.0;
  double max_y = 1.0;
  bool operator==(const Rect&) const = default;
};

/// Orientation sub-domains of a grid cell. Cardinal sectors are 90 degrees
/// wide and centred on the axes; ties go to the lower index.
enum class Orientation : std::uint32_t { East = 0, North = 1, West = 2, South = 3, Static = 4 };

inline constexpr std::uint32_t kOrientationBins = 5;

enum class OutOfBounds { Clamp, Reject };

/// rows x cols x 5 discretisation of (position, heading).
struct Codebook {
  std::uint32_t rows = 1;
  std::uint32_t cols = 1;
  Rect bounds;
  double static_speed_threshold = 0.1;

  std::uint32_t vocabulary() const { return rows * cols * kOrientationBins; }

  Cell cell_index(std::uint32_t row, std::uint32_t col, Orientation o) const {
    return (row * cols + col) * kOrientationBins + static_cast<std::uint32_t>(o);
  }

  bool operator==(const Codebook&) const = default;
};

Codebook build_codebook(std::uint32_t rows, std::uint32_t cols, const Rect& bounds,
                        double static_threshold = 0.1);

Orientation orientation_bin(double vx, double vy, double static_threshold);

struct TokenizeResult {
  Cell cell = 0;
  bool clamped = false;
};

/// Throws InvalidInput for out-of-bounds positions under OutOfBounds::Reject.
TokenizeResult tokenize(double x, double y, double vx, double vy, const Codebook& cb,
                        OutOfBounds policy = OutOfBounds::Clamp);

struct CellCoords {
  std::uint32_t row;
  std::uint32_t col;
  Orientation orientation;
};

CellCoords decode_cell(Cell cell, const Codebook& cb);

}  // namespace thdp
