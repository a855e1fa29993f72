// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <vector>

#include "thdp/posterior.hpp"
#include "thdp/trajectory.hpp"

namespace toy {

// Two flows on a 2x2 grid (V = 20). Flow 0 lives on cells 0..4 around t = 10,
// flow 1 on cells 5..9 around t = 50. Speed modes at 1 and 3.
inline thdp::ThdpPosterior two_flows(double w0 = 0.6) {
  using namespace thdp;
  ThdpPosterior p;
  p.codebook = build_codebook(2, 2, {0, 0, 2, 2}, 0.1);
  const std::uint32_t V = p.codebook.vocabulary();
  p.time_modes = {{10.0, 4.0}, {50.0, 9.0}};
  p.time_mode_weights = {0.5, 0.5};
  p.speed_modes = {{1.0, 0.04}, {3.0, 0.09}};
  p.speed_mode_weights = {0.5, 0.5};
  for (int k = 0; k < 2; ++k) {
    Flow f;
    f.weight = k == 0 ? w0 : 1.0 - w0;
    f.cells.vocabulary = V;
    f.cells.background = 0.01;
    // five listed cells share what the 15 background cells leave
    for (Cell c = 0; c < 5; ++c) f.cells.entries.push_back({static_cast<Cell>(5 * k + c), (1.0 - 0.15) / 5.0});
    f.time_weights = k == 0 ? std::vector<double>{0.9, 0.1} : std::vector<double>{0.2, 0.8};
    f.speed_weights = k == 0 ? std::vector<double>{0.7, 0.3} : std::vector<double>{0.1, 0.9};
    p.flows.push_back(f);
  }
  return p;
}

inline thdp::Observation obs(thdp::Cell c, double t, double v) {
  thdp::Observation o;
  o.cell = c;
  o.time = t;
  o.speed = v;
  return o;
}

}  // namespace toy
