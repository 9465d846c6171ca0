#include "ldesign/flow/spline.hpp"

#include <algorithm>
#include <cmath>

#include "ldesign/error.hpp"

namespace ldesign::flow {

using numerics::Tape;
using numerics::Var;

namespace {

// Shift such that softplus(0 + shift) == 1, making zero raw params decode to
// unit derivatives.
const double kDerivShift = std::log(std::expm1(1.0));

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double clamp_unit(double u, const char* what) {
  if (u < -1e-9 || u > 1.0 + 1e-9)
    throw Error(ErrorKind::Domain, std::string(what) + ": input outside [0,1]");
  return std::clamp(u, 0.0, 1.0);
}

// Bin index k with knots[k] <= t < knots[k+1]; the last bin is closed.
int find_bin(const std::vector<double>& knots, double t) {
  int b = static_cast<int>(knots.size()) - 2;
  int k = static_cast<int>(std::upper_bound(knots.begin(), knots.end(), t) -
                           knots.begin()) -
          1;
  return std::clamp(k, 0, b);
}

void normalize_bins(std::span<const double> raw, int bins,
                    std::vector<double>& knots) {
  double m = *std::max_element(raw.begin(), raw.end());
  double sum = 0.0;
  std::vector<double> e(bins);
  for (int i = 0; i < bins; ++i) sum += e[i] = std::exp(raw[i] - m);
  knots.assign(bins + 1, 0.0);
  double scale = 1.0 - bins * kMinBin;
  double acc = 0.0;
  for (int i = 0; i < bins; ++i) {
    acc += kMinBin + scale * e[i] / sum;
    knots[i + 1] = acc;
  }
  knots[bins] = 1.0;  // close the telescoping sum exactly
}

}  // namespace

RqSpline decode_spline(std::span<const double> raw, int bins) {
  if (bins < 1 || static_cast<int>(raw.size()) != spline_raw_count(bins))
    throw Error(ErrorKind::Shape, "decode_spline: raw size != 3*bins-1");
  for (double r : raw)
    if (!std::isfinite(r))
      throw Error(ErrorKind::NumericalOverflow, "decode_spline: non-finite raw");
  RqSpline s;
  s.bins = bins;
  normalize_bins(raw.subspan(0, bins), bins, s.x);
  normalize_bins(raw.subspan(bins, bins), bins, s.y);
  s.d.assign(bins + 1, 1.0);
  for (int i = 1; i < bins; ++i)
    s.d[i] = softplus(raw[2 * bins + i - 1] + kDerivShift);
  return s;
}

SplineResult spline_forward(const RqSpline& s, double u) {
  u = clamp_unit(u, "spline_forward");
  int k = find_bin(s.x, u);
  double w = s.x[k + 1] - s.x[k], h = s.y[k + 1] - s.y[k];
  double sk = h / w;
  double xi = (u - s.x[k]) / w;
  double dsum = s.d[k + 1] + s.d[k] - 2.0 * sk;
  double den = sk + dsum * xi * (1.0 - xi);
  double num = h * (sk * xi * xi + s.d[k] * xi * (1.0 - xi));
  double y = s.y[k] + num / den;
  double deriv = sk * sk *
                 (s.d[k + 1] * xi * xi + 2.0 * sk * xi * (1.0 - xi) +
                  s.d[k] * (1.0 - xi) * (1.0 - xi)) /
                 (den * den);
  return {std::clamp(y, 0.0, 1.0), std::log(deriv)};
}

SplineResult spline_inverse(const RqSpline& s, double v) {
  v = clamp_unit(v, "spline_inverse");
  int k = find_bin(s.y, v);
  double w = s.x[k + 1] - s.x[k], h = s.y[k + 1] - s.y[k];
  double sk = h / w;
  double dv = v - s.y[k];
  double dsum = s.d[k + 1] + s.d[k] - 2.0 * sk;
  double a = h * (sk - s.d[k]) + dv * dsum;
  double b = h * s.d[k] - dv * dsum;
  double c = -sk * dv;
  double disc = b * b - 4.0 * a * c;
  if (disc < 0) disc = 0;
  double xi = 2.0 * c / (-b - std::sqrt(disc));
  xi = std::clamp(xi, 0.0, 1.0);
  double u = s.x[k] + xi * w;
  double den = sk + dsum * xi * (1.0 - xi);
  double deriv = sk * sk *
                 (s.d[k + 1] * xi * xi + 2.0 * sk * xi * (1.0 - xi) +
                  s.d[k] * (1.0 - xi) * (1.0 - xi)) /
                 (den * den);
  return {u, -std::log(deriv)};
}

SplineNodes spline_forward_tape(Tape& tape, std::span<const int> raw_ids,
                                int bins, int u_id) {
  if (static_cast<int>(raw_ids.size()) != spline_raw_count(bins))
    throw Error(ErrorKind::Shape, "spline_forward_tape: raw size != 3*bins-1");

  // Softmax-normalized cumulative knots on the tape (max treated as a
  // constant shift; softmax is invariant to it in value and gradient).
  auto cum_knots = [&](std::span<const int> ids) {
    double m = tape.value(ids[0]);
    for (int id : ids) m = std::max(m, tape.value(id));
    std::vector<Var> e(bins);
    Var sum{&tape, tape.constant(0.0)};
    for (int i = 0; i < bins; ++i) {
      e[i] = exp(Var{&tape, tape.add_c(ids[i], -m)});
      sum = sum + e[i];
    }
    // knots[0] = 0 implicit; return cumulative positions 1..bins.
    std::vector<Var> knots(bins + 1);
    knots[0] = Var{&tape, tape.constant(0.0)};
    Var acc{&tape, tape.constant(0.0)};
    double scale = 1.0 - bins * kMinBin;
    for (int i = 0; i < bins; ++i) {
      acc = acc + (e[i] / sum) * scale + kMinBin;
      knots[i + 1] = acc;
    }
    return knots;
  };

  std::vector<Var> xs = cum_knots(raw_ids.subspan(0, bins));
  std::vector<Var> ys = cum_knots(raw_ids.subspan(bins, bins));

  // Select the active bin from current values.
  std::vector<double> xv(bins + 1);
  for (int i = 0; i <= bins; ++i) xv[i] = xs[i].value();
  double uval = std::clamp(tape.value(u_id), 0.0, 1.0);
  int k = find_bin(xv, uval);

  auto deriv_at = [&](int knot) -> Var {
    if (knot == 0 || knot == bins) return Var{&tape, tape.constant(1.0)};
    Var r{&tape, tape.add_c(raw_ids[2 * bins + knot - 1], kDerivShift)};
    // Numerically stable softplus on both branches.
    Var pos = r + log(1.0 + exp(-r));
    Var neg = log(1.0 + exp(r));
    return select(r, pos, neg);
  };

  Var u{&tape, u_id};
  Var w = xs[k + 1] - xs[k], h = ys[k + 1] - ys[k];
  Var sk = h / w;
  Var dk = deriv_at(k), dk1 = deriv_at(k + 1);
  Var xi = (u - xs[k]) / w;
  Var om = 1.0 - xi;
  Var dsum = dk1 + dk - 2.0 * sk;
  Var den = sk + dsum * xi * om;
  Var num = h * (sk * xi * xi + dk * xi * om);
  Var y = ys[k] + num / den;
  Var deriv = sk * sk * (dk1 * xi * xi + 2.0 * sk * xi * om + dk * om * om) /
              (den * den);
  Var dld = log(deriv);
  return {y.id, dld.id};
}

}  // namespace ldesign::flow
