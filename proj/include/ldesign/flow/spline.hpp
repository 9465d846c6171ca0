#pragma once

#include <span>
#include <vector>

#include "ldesign/numerics/tape.hpp"

namespace ldesign::flow {

/// Monotone rational-quadratic spline on [0, 1] with B bins (Durkan et al.
/// style). Raw parameter vector has 3B-1 entries: B width logits, B height
/// logits, B-1 interior derivative logits. Widths/heights are softmaxed with
/// a minimum bin size; derivatives go through a softplus shifted so that a
/// zero raw vector decodes to the exact identity map. Boundary derivatives
/// are fixed to 1 at both ends, which simultaneously provides slope-matched
/// linear tails for interval dims and periodic derivative continuity for
/// circular dims.
inline constexpr double kMinBin = 1e-3;

inline int spline_raw_count(int bins) { return 3 * bins - 1; }

/// Decoded knots: x/y have B+1 entries (x[0]=y[0]=0, x[B]=y[B]=1), d has
/// B+1 derivatives with d[0] = d[B] = 1.
struct RqSpline {
  int bins;
  std::vector<double> x, y, d;
};

RqSpline decode_spline(std::span<const double> raw, int bins);

struct SplineResult {
  double value;
  double dlogdet;  // log |dy/du|
};

/// y(u) and log-derivative. Inputs outside [0,1] by more than 1e-9 raise a
/// domain error; within that slack they are clamped.
SplineResult spline_forward(const RqSpline& s, double u);

/// u(y) and log |du/dy| = -log |dy/du| at the preimage.
SplineResult spline_inverse(const RqSpline& s, double v);

/// Tape version of decode + forward: `raw_ids` are 3B-1 tape nodes, `u_id`
/// the input node. The active bin is selected from current values; the
/// emitted program is exact for inputs that keep the same bin.
struct SplineNodes {
  int value;
  int dlogdet;
};
SplineNodes spline_forward_tape(numerics::Tape& tape,
                                std::span<const int> raw_ids, int bins,
                                int u_id);

}  // namespace ldesign::flow
