#pragma once

#include <numeric>
#include <span>
#include <vector>

#include "ldesign/error.hpp"
#include "ldesign/numerics/rng.hpp"
#include "ldesign/numerics/tape.hpp"

namespace ldesign::numerics {

/// Fully connected ReLU network over a flat parameter vector.
/// Layout per layer: weights row-major [out][in], then biases [out].
struct MlpSpec {
  std::vector<int> widths;  // e.g. {6, 64, 47}

  int param_count() const {
    int n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      n += (widths[l] + 1) * widths[l + 1];
    return n;
  }
  int in_width() const { return widths.front(); }
  int out_width() const { return widths.back(); }
};

/// Forward pass on plain doubles. ReLU on hidden layers, linear output.
inline void mlp_apply(const MlpSpec& spec, std::span<const double> params,
                      std::span<const double> in, std::span<double> out) {
  if (static_cast<int>(in.size()) != spec.in_width())
    throw Error(ErrorKind::Shape, "mlp_apply: input width mismatch");
  if (static_cast<int>(out.size()) != spec.out_width())
    throw Error(ErrorKind::Shape, "mlp_apply: output width mismatch");
  std::vector<double> cur(in.begin(), in.end());
  std::vector<double> next;
  const double* p = params.data();
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int ni = spec.widths[l], no = spec.widths[l + 1];
    const double* w = p;
    const double* b = p + ni * no;
    next.assign(no, 0.0);
    for (int o = 0; o < no; ++o) {
      double acc = b[o];
      const double* wr = w + o * ni;
      for (int i = 0; i < ni; ++i) acc += wr[i] * cur[i];
      next[o] = (l + 2 < spec.widths.size() && acc < 0.0) ? 0.0 : acc;
    }
    cur.swap(next);
    p += (ni + 1) * no;
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

/// Tape forward pass. Parameters are tape leaves at ids
/// [param_base, param_base + param_count); inputs are existing tape nodes.
/// `dropout_mask` (optional, one entry per hidden unit across all hidden
/// layers) multiplies hidden activations, realizing train-time dropout.
inline void mlp_apply_tape(Tape& tape, const MlpSpec& spec, int param_base,
                           std::span<const int> in, std::span<int> out,
                           std::span<const double> dropout_mask = {}) {
  if (static_cast<int>(in.size()) != spec.in_width())
    throw Error(ErrorKind::Shape, "mlp_apply_tape: input width mismatch");
  std::vector<int> cur(in.begin(), in.end());
  std::vector<int> next, wids;
  int p = param_base;
  std::size_t mask_pos = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int ni = spec.widths[l], no = spec.widths[l + 1];
    int wbase = p, bbase = p + ni * no;
    next.resize(no);
    wids.resize(ni);
    bool hidden = l + 2 < spec.widths.size();
    for (int o = 0; o < no; ++o) {
      for (int i = 0; i < ni; ++i) wids[i] = wbase + o * ni + i;
      int a = tape.affine(bbase + o, wids, cur);
      if (hidden) {
        a = tape.relu(a);
        if (!dropout_mask.empty()) a = tape.mul_c(a, dropout_mask[mask_pos++]);
      }
      next[o] = a;
    }
    cur.swap(next);
    p += (ni + 1) * no;
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

/// He-normal hidden weights, zero biases, zero-initialized final layer so the
/// downstream spline starts as the identity map.
inline void mlp_init(const MlpSpec& spec, std::span<double> params, Rng& rng) {
  double* p = params.data();
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int ni = spec.widths[l], no = spec.widths[l + 1];
    bool final_layer = (l + 2 == spec.widths.size());
    double scale = final_layer ? 0.0 : std::sqrt(2.0 / ni);
    for (int k = 0; k < ni * no; ++k) p[k] = scale * rng.normal();
    for (int k = 0; k < no; ++k) p[ni * no + k] = 0.0;
    p += (ni + 1) * no;
  }
}

}  // namespace ldesign::numerics
