#include "ldesign/sensors/sensor_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "ldesign/flow/train.hpp"

namespace ldesign::sensors {

using design::kTwoPi;
using numerics::Rng;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

int dim_block(int dim) { return dim < 3 ? 0 : (dim < 5 ? 1 : 2); }

/// Difference d - mean along one dimension, wrapped to (-pi, pi] for
/// circular dims (period 2pi).
double dim_diff(double value, double mean, bool circular) {
  double d = value - mean;
  if (circular) {
    d = std::fmod(d, kTwoPi);
    if (d > kTwoPi / 2) d -= kTwoPi;
    if (d <= -kTwoPi / 2) d += kTwoPi;
  }
  return d;
}

struct FreeLayout {
  std::vector<int> dims;           // free dims, ascending
  std::vector<bool> circ;          // per free slot
  std::vector<std::pair<int, int>> blocks;  // [begin, end) free-slot ranges
};

FreeLayout make_layout(const DesignBounds& b) {
  FreeLayout lay;
  for (int i = 0; i < 6; ++i)
    if (!b.fixed[i]) {
      lay.dims.push_back(i);
      lay.circ.push_back(b.circular[i]);
    }
  int f = static_cast<int>(lay.dims.size());
  int s = 0;
  while (s < f) {
    int block = dim_block(lay.dims[s]);
    int e = s;
    while (e < f && dim_block(lay.dims[e]) == block) ++e;
    lay.blocks.emplace_back(s, e);
    s = e;
  }
  return lay;
}

Eigen::VectorXd free_diff(const FreeLayout& lay, const DesignPoint& d,
                          const std::array<double, 6>& mean) {
  Eigen::VectorXd out(lay.dims.size());
  for (size_t s = 0; s < lay.dims.size(); ++s)
    out[s] = dim_diff(d[lay.dims[s]], mean[lay.dims[s]], lay.circ[s]);
  return out;
}

/// Clamp the eigenvalues of each diagonal block to [floor, inf); also
/// symmetrizes and zeroes cross-block entries.
void floor_blocks(Eigen::MatrixXd& cov, const FreeLayout& lay, double floor) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (auto [s, e] : lay.blocks) {
    int n = e - s;
    Eigen::MatrixXd blk =
        0.5 * (cov.block(s, s, n, n) + cov.block(s, s, n, n).transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    out.block(s, s, n, n) =
        es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  cov = out;
}

struct CompCache {
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  double log_norm;  // -0.5 * (F log 2pi + logdet)
};

CompCache cache_component(const MixtureComponent& c) {
  CompCache cc;
  cc.ldlt.compute(c.cov);
  double logdet = 0;
  for (int i = 0; i < c.cov.rows(); ++i)
    logdet += std::log(std::max(cc.ldlt.vectorD()[i], 1e-300));
  cc.log_norm = -0.5 * (c.cov.rows() * kLog2Pi + logdet);
  return cc;
}

double comp_logpdf(const MixtureComponent& c, const CompCache& cc,
                   const FreeLayout& lay, const DesignPoint& d) {
  Eigen::VectorXd delta = free_diff(lay, d, c.mean);
  return cc.log_norm - 0.5 * delta.dot(cc.ldlt.solve(delta));
}

double wrapped_sq_dist(const FreeLayout& lay, const DesignPoint& a,
                       const std::array<double, 6>& b) {
  double s = 0;
  for (size_t i = 0; i < lay.dims.size(); ++i) {
    double d = dim_diff(a[lay.dims[i]], b[lay.dims[i]], lay.circ[i]);
    s += d * d;
  }
  return s;
}

std::array<double, 6> point_to_array(const DesignPoint& d) {
  return {d.x, d.y, d.z, d.phi, d.psi, d.tau};
}

}  // namespace

double SensorMixture::log_density(const DesignPoint& d) const {
  FreeLayout lay = make_layout(bounds);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(comps.size());
  for (const MixtureComponent& c : comps) {
    if (c.weight <= 0) {
      terms.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    CompCache cc = cache_component(c);
    double t = std::log(c.weight) + comp_logpdf(c, cc, lay, d);
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (!std::isfinite(best)) return best;
  double acc = 0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

void SensorMixture::validate() const {
  double wsum = 0;
  FreeLayout lay = make_layout(bounds);
  for (const MixtureComponent& c : comps) {
    if (c.weight < 0)
      throw Error(ErrorKind::Domain, "mixture: negative component weight");
    wsum += c.weight;
    if (c.cov.rows() != static_cast<long>(lay.dims.size()) ||
        c.cov.cols() != c.cov.rows())
      throw Error(ErrorKind::Shape, "mixture: covariance size mismatch");
    for (auto [s, e] : lay.blocks) {
      int n = e - s;
      Eigen::MatrixXd blk = c.cov.block(s, s, n, n);
      if ((blk - blk.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error(ErrorKind::Domain, "mixture: covariance not symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk);
      if (es.eigenvalues().minCoeff() < 1e-8 * (1 - 1e-9))
        throw Error(ErrorKind::Domain,
                    "mixture: covariance eigenvalue below floor");
    }
  }
  if (std::fabs(wsum - 1.0) > 1e-12)
    throw Error(ErrorKind::Domain, "mixture: weights must sum to 1");
}

// ---------------------------------------------------------------------------
// Constraint clamping

SensorMixture clamp_constraints(const SensorMixture& mix,
                                const ConstraintRegion& C) {
  SensorMixture out = mix;
  FreeLayout lay = make_layout(mix.bounds);
  const int F = static_cast<int>(lay.dims.size());
  for (MixtureComponent& c : out.comps) {
    // Mean: component-wise projection into the nearest constraint box
    // (free dims only; fixed dims stay pinned).
    if (!C.boxes.empty()) {
      double best = std::numeric_limits<double>::infinity();
      std::array<double, 6> best_mean = c.mean;
      for (const design::ConstraintBox& box : C.boxes) {
        std::array<double, 6> m = c.mean;
        double dist = 0;
        for (int s = 0; s < F; ++s) {
          int dim = lay.dims[s];
          double v = c.mean[dim];
          double lo = box.lo[dim], hi = box.hi[dim];
          double p;
          if (lay.circ[s]) {
            // Wrapped projection: if the wrapped value misses the arc,
            // move to the nearer endpoint by wrapped distance.
            double w = std::fmod(v, kTwoPi);
            if (w < 0) w += kTwoPi;
            if (w >= lo && w <= hi) {
              p = w;
            } else {
              double dlo = std::fabs(dim_diff(w, lo, true));
              double dhi = std::fabs(dim_diff(w, hi, true));
              p = dlo <= dhi ? lo : hi;
            }
            double dd = dim_diff(v, p, true);
            dist += dd * dd;
          } else {
            p = std::clamp(v, lo, hi);
            dist += (v - p) * (v - p);
          }
          m[dim] = p;
        }
        if (dist < best) {
          best = dist;
          best_mean = m;
        }
      }
      for (int s = 0; s < F; ++s) {
        int dim = lay.dims[s];
        if (std::fabs(best_mean[dim] - c.mean[dim]) > 1e-15)
          c.mean_clamped[dim] = true;
        c.mean[dim] = best_mean[dim];
      }
    }

    // Covariance: clip marginal sigmas, keep the correlation structure.
    Eigen::VectorXd ratio = Eigen::VectorXd::Ones(F);
    bool any = false;
    for (int s = 0; s < F; ++s) {
      int dim = lay.dims[s];
      double var = c.cov(s, s);
      double sigma = std::sqrt(std::max(var, 0.0));
      double lo = C.clamps.sigma_min[dim].value_or(0.0);
      double hi = C.clamps.sigma_max[dim].value_or(
          std::numeric_limits<double>::infinity());
      if (C.clamps.zero_extent_origin && dim < 3) hi = 0.0;
      double clipped = std::clamp(sigma, lo, hi);
      if (clipped != sigma) {
        c.sigma_clamped[dim] = true;
        any = true;
        ratio[s] = sigma > 0 ? clipped / sigma : 0.0;
        if (sigma == 0.0) c.cov(s, s) = clipped * clipped;
      }
    }
    if (any)
      c.cov = ratio.asDiagonal() * c.cov * ratio.asDiagonal();
    floor_blocks(c.cov, lay, 1e-8);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EM

EmResult em_fit(std::span<const DesignPoint> samples, int G,
                const DesignBounds& bounds, const ConstraintRegion& C,
                std::uint64_t seed, const EmOptions& opts) {
  bounds.validate();
  if (G < 1) throw Error(ErrorKind::Config, "em_fit: G must be >= 1");
  const long N = static_cast<long>(samples.size());
  if (N < 50L * G)
    throw Error(ErrorKind::Config,
                "em_fit: needs at least 50 samples per component, got " +
                    std::to_string(N) + " for G=" + std::to_string(G));
  FreeLayout lay = make_layout(bounds);
  const int F = static_cast<int>(lay.dims.size());
  if (F < 1) throw Error(ErrorKind::Config, "em_fit: no free dimensions");

  Rng rng = Rng(seed).substream("em-init");

  // Global mean (circular-aware) and block covariance for initialization.
  std::array<double, 6> gmean{};
  for (int i = 0; i < 6; ++i) gmean[i] = bounds.lo[i];
  for (int s = 0; s < F; ++s) {
    int dim = lay.dims[s];
    if (lay.circ[s]) {
      double cs = 0, sn = 0;
      for (const DesignPoint& d : samples) {
        cs += std::cos(d[dim]);
        sn += std::sin(d[dim]);
      }
      double m = std::atan2(sn, cs);
      if (m < 0) m += kTwoPi;
      gmean[dim] = m;
    } else {
      double acc = 0;
      for (const DesignPoint& d : samples) acc += d[dim];
      gmean[dim] = acc / N;
    }
  }
  Eigen::MatrixXd gcov = Eigen::MatrixXd::Zero(F, F);
  for (const DesignPoint& d : samples) {
    Eigen::VectorXd delta = free_diff(lay, d, gmean);
    gcov += delta * delta.transpose();
  }
  gcov /= static_cast<double>(N);
  floor_blocks(gcov, lay, opts.var_floor);

  // k-means++ seeding of the component means.
  EmResult res;
  res.mixture.bounds = bounds;
  res.mixture.free = lay.dims;
  res.mixture.comps.resize(G);
  std::vector<double> d2(N, std::numeric_limits<double>::infinity());
  for (int g = 0; g < G; ++g) {
    long pick;
    if (g == 0) {
      pick = static_cast<long>(rng.uniform_int(N));
    } else {
      double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      if (total <= 0) {
        pick = static_cast<long>(rng.uniform_int(N));
      } else {
        double r = rng.uniform() * total;
        pick = N - 1;
        for (long n = 0; n < N; ++n) {
          r -= d2[n];
          if (r <= 0) {
            pick = n;
            break;
          }
        }
      }
    }
    MixtureComponent& c = res.mixture.comps[g];
    c.weight = 1.0 / G;
    c.mean = point_to_array(samples[pick]);
    for (int i = 0; i < 6; ++i)
      if (bounds.fixed[i]) c.mean[i] = bounds.lo[i];
    c.cov = gcov;
    for (long n = 0; n < N; ++n)
      d2[n] = std::min(d2[n], wrapped_sq_dist(lay, samples[n], c.mean));
  }
  res.mixture = clamp_constraints(res.mixture, C);

  // EM iterations.
  Eigen::MatrixXd resp(N, G);
  std::vector<double> sample_ll(N);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // E-step (log-space responsibilities).
    std::vector<CompCache> caches(G);
    for (int g = 0; g < G; ++g)
      caches[g] = cache_component(res.mixture.comps[g]);
    double ll = 0;
    for (long n = 0; n < N; ++n) {
      double best = -std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g) {
        const MixtureComponent& c = res.mixture.comps[g];
        double t = (c.weight > 0 ? std::log(c.weight) : -745.0) +
                   comp_logpdf(c, caches[g], lay, samples[n]);
        resp(n, g) = t;
        best = std::max(best, t);
      }
      double acc = 0;
      for (int g = 0; g < G; ++g) acc += std::exp(resp(n, g) - best);
      double lse = best + std::log(acc);
      sample_ll[n] = lse;
      ll += lse;
      for (int g = 0; g < G; ++g) resp(n, g) = std::exp(resp(n, g) - lse);
    }
    ll /= N;
    res.loglik.push_back(ll);

    // Empty components: reinitialize at the lowest-likelihood sample.
    bool reinit = false;
    for (int g = 0; g < G; ++g) {
      double mass = resp.col(g).sum();
      if (mass / N >= 1e-8) continue;
      long worst = static_cast<long>(
          std::min_element(sample_ll.begin(), sample_ll.end()) -
          sample_ll.begin());
      MixtureComponent& c = res.mixture.comps[g];
      c.mean = point_to_array(samples[worst]);
      for (int i = 0; i < 6; ++i)
        if (bounds.fixed[i]) c.mean[i] = bounds.lo[i];
      c.cov = gcov;
      c.weight = 1.0 / G;
      double wsum = 0;
      for (const MixtureComponent& cc : res.mixture.comps) wsum += cc.weight;
      for (MixtureComponent& cc : res.mixture.comps) cc.weight /= wsum;
      res.events.push_back("iter " + std::to_string(iter) +
                           ": reinitialized empty component " +
                           std::to_string(g));
      reinit = true;
      for (long n = 0; n < N; ++n) resp(n, g) = 0;  // refit next E-step
    }

    // M-step: closed-form block-diagonal Gaussian updates.
    for (int g = 0; g < G; ++g) {
      double mass = resp.col(g).sum();
      if (mass <= 0) continue;
      MixtureComponent& c = res.mixture.comps[g];
      c.weight = mass / N;
      for (int s = 0; s < F; ++s) {
        int dim = lay.dims[s];
        if (lay.circ[s]) {
          double cs = 0, sn = 0;
          for (long n = 0; n < N; ++n) {
            cs += resp(n, g) * std::cos(samples[n][dim]);
            sn += resp(n, g) * std::sin(samples[n][dim]);
          }
          double m = std::atan2(sn, cs);
          if (m < 0) m += kTwoPi;
          c.mean[dim] = m;
        } else {
          double acc = 0;
          for (long n = 0; n < N; ++n) acc += resp(n, g) * samples[n][dim];
          c.mean[dim] = acc / mass;
        }
      }
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(F, F);
      for (long n = 0; n < N; ++n) {
        Eigen::VectorXd delta = free_diff(lay, samples[n], c.mean);
        cov += resp(n, g) * (delta * delta.transpose());
      }
      cov /= mass;
      floor_blocks(cov, lay, opts.var_floor);
      c.cov = cov;
    }
    double wsum = 0;
    for (const MixtureComponent& c : res.mixture.comps) wsum += c.weight;
    for (MixtureComponent& c : res.mixture.comps) c.weight /= wsum;

    SensorMixture before = res.mixture;
    res.mixture = clamp_constraints(res.mixture, C);
    bool fired = reinit;  // both clamps and reinits void the monotonicity bound
    for (int g = 0; g < G; ++g) {
      if ((res.mixture.comps[g].cov - before.comps[g].cov)
              .cwiseAbs()
              .maxCoeff() > 1e-12)
        fired = true;
      for (int i = 0; i < 6; ++i)
        if (std::fabs(res.mixture.comps[g].mean[i] - before.comps[g].mean[i]) >
            1e-12)
          fired = true;
    }
    res.clamp_fired.push_back(fired);

    if (iter > 0 &&
        std::fabs(ll - prev_ll) < opts.tol * (std::fabs(prev_ll) + 1e-12))
      break;
    prev_ll = ll;
  }
  res.mixture.validate();
  return res;
}

// ---------------------------------------------------------------------------
// Sensor extraction and ray sampling

std::vector<SensorSpec> extract_sensors(const SensorMixture& mix) {
  FreeLayout lay = make_layout(mix.bounds);
  std::vector<SensorSpec> out;
  out.reserve(mix.comps.size());
  int id = 0;
  for (const MixtureComponent& c : mix.comps) {
    std::array<double, 6> lo{}, hi{};
    for (int dim = 0; dim < 6; ++dim) {
      lo[dim] = c.mean[dim];
      hi[dim] = c.mean[dim];
    }
    for (size_t s = 0; s < lay.dims.size(); ++s) {
      int dim = lay.dims[s];
      double sigma = std::sqrt(std::max(c.cov(s, s), 0.0));
      double half = 1.96 * sigma;
      if (lay.circ[s]) {
        half = std::min(half, kTwoPi / 2);  // cap the azimuth width at 2pi
        lo[dim] = c.mean[dim] - half;
        hi[dim] = c.mean[dim] + half;
      } else {
        lo[dim] = std::max(c.mean[dim] - half, mix.bounds.lo[dim]);
        hi[dim] = std::min(c.mean[dim] + half, mix.bounds.hi[dim]);
      }
    }
    SensorSpec spec;
    spec.id = id++;
    spec.weight = c.weight;
    spec.origin_center = {(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2,
                          (lo[2] + hi[2]) / 2};
    spec.origin_half = {(hi[0] - lo[0]) / 2, (hi[1] - lo[1]) / 2,
                        (hi[2] - lo[2]) / 2};
    spec.phi_lo = lo[3];
    spec.phi_hi = hi[3];
    spec.psi_lo = lo[4];
    spec.psi_hi = hi[4];
    spec.tau_min = std::max(lo[5], 0.0);
    spec.tau_max = hi[5];
    if (spec.tau_max <= spec.tau_min) spec.tau_max = spec.tau_min + 1e-6;
    out.push_back(spec);
  }
  return out;
}

RaySet allocate_and_sample_rays(std::span<const SensorSpec> sensors, int budget,
                                std::uint64_t seed) {
  if (sensors.empty())
    throw Error(ErrorKind::Config, "allocate_and_sample_rays: no sensors");
  if (budget < 0)
    throw Error(ErrorKind::Config, "allocate_and_sample_rays: negative budget");
  const int G = static_cast<int>(sensors.size());
  double wsum = 0;
  for (const SensorSpec& s : sensors) {
    if (s.weight < 0)
      throw Error(ErrorKind::Domain, "allocate_and_sample_rays: negative weight");
    wsum += s.weight;
  }
  if (wsum <= 0)
    throw Error(ErrorKind::Domain, "allocate_and_sample_rays: zero total weight");

  // Largest-remainder apportionment of budget * weight.
  std::vector<int> counts(G, 0);
  std::vector<std::pair<double, int>> rem(G);
  int assigned = 0;
  for (int g = 0; g < G; ++g) {
    double quota = budget * sensors[g].weight / wsum;
    counts[g] = static_cast<int>(std::floor(quota));
    assigned += counts[g];
    rem[g] = {quota - counts[g], g};
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (int k = 0; k < budget - assigned; ++k) ++counts[rem[k].second];

  RaySet out;
  out.budget = budget;
  out.rays.reserve(budget);
  Rng root = Rng(seed).substream("ray-sampling");
  for (int g = 0; g < G; ++g) {
    Rng rng = root.substream(static_cast<std::uint64_t>(g));
    const SensorSpec& s = sensors[g];
    for (int k = 0; k < counts[g]; ++k) {
      Ray r;
      r.origin = {s.origin_center.x + s.origin_half.x * rng.uniform(-1.0, 1.0),
                  s.origin_center.y + s.origin_half.y * rng.uniform(-1.0, 1.0),
                  s.origin_center.z + s.origin_half.z * rng.uniform(-1.0, 1.0)};
      double phi = rng.uniform(s.phi_lo, s.phi_hi);
      phi = std::fmod(phi, kTwoPi);
      if (phi < 0) phi += kTwoPi;
      r.phi = phi;
      r.psi = rng.uniform(s.psi_lo, s.psi_hi);
      r.tau_min = s.tau_min;
      r.tau_max = s.tau_max;
      r.sensor = s.id;
      out.rays.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatially adaptive slices (Expt C)

std::vector<AdaptiveSlice> fit_adaptive_slices(
    const flow::FlowModel& model, std::span<const double> positions, int G,
    double delta, const ConstraintRegion& C, std::uint64_t seed,
    int samples_per_slice, const EmOptions& opts) {
  if (delta <= 0)
    throw Error(ErrorKind::Config, "fit_adaptive_slices: delta must be > 0");
  const DesignBounds& mb = model.bounds();
  std::vector<AdaptiveSlice> out;
  Rng root(seed);
  for (size_t i = 0; i < positions.size(); ++i) {
    double x0 = positions[i];
    ConstraintRegion slice_region = C.boxes.empty()
                                        ? ConstraintRegion::full(mb)
                                        : C;
    std::vector<design::ConstraintBox> boxes;
    for (design::ConstraintBox box : slice_region.boxes) {
      box.lo[0] = std::max(box.lo[0], x0 - delta);
      box.hi[0] = std::min(box.hi[0], x0 + delta);
      if (box.lo[0] <= box.hi[0]) boxes.push_back(box);
    }
    if (boxes.empty())
      throw Error(ErrorKind::ConstraintInfeasible,
                  "fit_adaptive_slices: slice " + std::to_string(i) +
                      " at x=" + std::to_string(x0) +
                      " has an empty admissible window");
    slice_region.boxes = boxes;

    Rng rng = root.substream(static_cast<std::uint64_t>(i));
    std::vector<DesignPoint> samples;
    try {
      samples = flow::sample_flow(model, samples_per_slice, rng, &slice_region);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConstraintInfeasible)
        throw Error(ErrorKind::ConstraintInfeasible,
                    "fit_adaptive_slices: slice " + std::to_string(i) + ": " +
                        e.what());
      throw;
    }

    // Pin the origin to the slice position; azimuth stays at its fixed
    // bound value. The per-slice fit is over the remaining free dims.
    DesignBounds sb = mb;
    sb.lo[0] = sb.hi[0] = x0;
    sb.fixed[0] = true;
    for (DesignPoint& d : samples) d.x = x0;

    std::uint64_t slice_seed = root.substream("em-init").substream(i).next_u64();
    out.push_back(
        {x0, em_fit(samples, G, sb, slice_region, slice_seed, opts).mixture});
  }
  return out;
}

double mean_visibility(const RaySet& rays, std::span<const SceneSdf> scenes,
                       double beta, int n_strat) {
  if (rays.rays.empty() || scenes.empty())
    throw Error(ErrorKind::Config, "mean_visibility: empty rays or scenes");
  double acc = 0;
  for (const Ray& r : rays.rays) {
    DesignPoint d;
    d.x = r.origin.x;
    d.y = r.origin.y;
    d.z = r.origin.z;
    d.phi = r.phi;
    d.psi = r.psi;
    d.tau = 0.5 * (r.tau_min + r.tau_max);
    for (const SceneSdf& s : scenes)
      acc += density::transmittance(s, d, beta, n_strat);
  }
  return acc / (static_cast<double>(rays.rays.size()) * scenes.size());
}

// ---------------------------------------------------------------------------
// CSV IO

void write_sensors_csv(const std::string& path,
                       std::span<const SensorSpec> sensors) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write sensors CSV: " + path);
  std::fprintf(f,
               "id,weight,cx,cy,cz,hx,hy,hz,phi_lo,phi_hi,psi_lo,psi_hi,"
               "tau_min,tau_max\n");
  for (const SensorSpec& s : sensors)
    std::fprintf(f,
                 "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                 "%.17g,%.17g,%.17g,%.17g\n",
                 s.id, s.weight, s.origin_center.x, s.origin_center.y,
                 s.origin_center.z, s.origin_half.x, s.origin_half.y,
                 s.origin_half.z, s.phi_lo, s.phi_hi, s.psi_lo, s.psi_hi,
                 s.tau_min, s.tau_max);
  std::fclose(f);
}

void write_rays_csv(const std::string& path, const RaySet& rays) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write rays CSV: " + path);
  std::fprintf(f, "x,y,z,phi,psi,tau_min,tau_max,sensor\n");
  for (const Ray& r : rays.rays)
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                 r.origin.x, r.origin.y, r.origin.z, r.phi, r.psi, r.tau_min,
                 r.tau_max, r.sensor);
  std::fclose(f);
}

RaySet read_rays_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorKind::Config, "cannot open rays CSV: " + path);
  RaySet out;
  char line[512];
  bool header = true;
  while (std::fgets(line, sizeof line, f)) {
    if (line[0] == '#') continue;  // e.g. the pipeline's config-hash stamp
    if (header) {
      header = false;
      continue;
    }
    Ray r;
    if (std::sscanf(line, "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d", &r.origin.x,
                    &r.origin.y, &r.origin.z, &r.phi, &r.psi, &r.tau_min,
                    &r.tau_max, &r.sensor) != 8) {
      std::fclose(f);
      throw Error(ErrorKind::Config, "malformed rays CSV line in " + path);
    }
    out.rays.push_back(r);
  }
  std::fclose(f);
  out.budget = static_cast<int>(out.rays.size());
  return out;
}

}  // namespace ldesign::sensors
