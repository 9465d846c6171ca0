#include "ldesign/flow/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace ldesign::flow {

using design::kTwoPi;
using numerics::MlpSpec;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;

namespace {

double wrap01(double u) {
  u -= std::floor(u);
  return u < 1.0 ? u : 0.0;
}

}  // namespace

FlowModel::FlowModel(DesignBounds bounds, FlowConfig cfg, std::uint64_t seed)
    : bounds_(std::move(bounds)), cfg_(cfg) {
  cfg_.validate();
  bounds_.validate();
  for (int dim : bounds_.free_dims()) {
    free_.push_back(dim);
    circ_.push_back(bounds_.circular[dim]);
  }
  f_ = static_cast<int>(free_.size());
  if (f_ < 1) throw Error(ErrorKind::Config, "flow: no free dimensions");
  cube_logdet_ = 0.0;
  for (int dim : free_) cube_logdet_ += std::log(bounds_.range(dim));

  Rng perm_rng = Rng(seed).substream("flow-init");
  perms_.resize(cfg_.layers);
  order_.resize(cfg_.layers);
  std::vector<int> cur(f_);
  for (int i = 0; i < f_; ++i) cur[i] = i;
  for (int k = 0; k < cfg_.layers; ++k) {
    order_[k] = cur;
    std::vector<int>& p = perms_[k];
    p.resize(f_);
    for (int i = 0; i < f_; ++i) p[i] = i;
    for (int i = f_ - 1; i > 0; --i)
      std::swap(p[i], p[perm_rng.uniform_int(i + 1)]);
    std::vector<int> next(f_);
    for (int i = 0; i < f_; ++i) next[i] = cur[p[i]];
    cur = next;
  }
  final_order_ = cur;

  build_layout();
  init_params(seed);
}

void FlowModel::build_layout() {
  const int raw = spline_raw_count(cfg_.bins);
  int off = 0;
  layers_.resize(cfg_.layers);
  for (int k = 0; k < cfg_.layers; ++k) {
    Layer& lay = layers_[k];
    lay.pre_shift = off;
    off += f_;
    for (int b = 0; b < 2; ++b) {
      lay.blocks[b].resize(f_);
      for (int i = 0; i < f_; ++i) {
        int embed = 0;
        for (int j = 0; j < f_; ++j) {
          bool conditions = (b == 0) ? (j < i) : (j > i);
          if (conditions) embed += circ_[order_[k][j]] ? 2 : 1;
        }
        Slot& slot = lay.blocks[b][i];
        slot.offset = off;
        slot.embed = embed;
        if (embed == 0) {
          off += raw;
        } else {
          slot.mlp = MlpSpec{{embed, cfg_.hidden, raw}};
          off += slot.mlp.param_count();
        }
      }
    }
    lay.post_shift = off;
    off += f_;
  }
  params_.assign(off, 0.0);
}

void FlowModel::init_params(std::uint64_t seed) {
  Rng rng = Rng(seed).substream("flow-init").substream("weights");
  for (const Layer& lay : layers_)
    for (const auto& block : lay.blocks)
      for (const Slot& slot : block)
        if (slot.embed > 0) {
          std::span<double> p(params_.data() + slot.offset,
                              slot.mlp.param_count());
          numerics::mlp_init(slot.mlp, p, rng);
        }
  // Direct slots and shifts stay zero: the flow starts as the identity.
}

std::vector<double> FlowModel::cond_raw(const Layer& lay, int block, int pos,
                                        std::span<const double> pre,
                                        int layer) const {
  const Slot& slot = lay.blocks[block][pos];
  const int raw = spline_raw_count(cfg_.bins);
  std::vector<double> out(raw);
  if (slot.embed == 0) {
    std::copy_n(params_.data() + slot.offset, raw, out.begin());
    return out;
  }
  std::vector<double> in;
  in.reserve(slot.embed);
  for (int j = 0; j < f_; ++j) {
    bool conditions = (block == 0) ? (j < pos) : (j > pos);
    if (!conditions) continue;
    if (circ_[order_[layer][j]]) {
      in.push_back(std::cos(kTwoPi * pre[j]));
      in.push_back(std::sin(kTwoPi * pre[j]));
    } else {
      in.push_back(pre[j] - 0.5);
    }
  }
  std::span<const double> p(params_.data() + slot.offset,
                            slot.mlp.param_count());
  numerics::mlp_apply(slot.mlp, p, in, out);
  return out;
}

FlowModel::Forward FlowModel::forward(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != f_)
    throw Error(ErrorKind::Shape, "flow forward: z size != free dims");
  std::vector<double> u(f_);
  for (int i = 0; i < f_; ++i) {
    if (z[i] < -1e-9 || z[i] > 1.0 + 1e-9)
      throw Error(ErrorKind::Domain, "flow forward: z outside unit cube");
    u[i] = std::clamp(z[i], 0.0, 1.0);
  }
  double logdet = 0.0;
  for (int k = 0; k < cfg_.layers; ++k) {
    const Layer& lay = layers_[k];
    for (int i = 0; i < f_; ++i)
      if (circ_[order_[k][i]])
        u[i] = wrap01(u[i] + params_[lay.pre_shift + i]);
    for (int b = 0; b < 2; ++b) {
      std::vector<double> pre = u;
      for (int i = 0; i < f_; ++i) {
        RqSpline s = decode_spline(cond_raw(lay, b, i, pre, k), cfg_.bins);
        SplineResult r = spline_forward(s, u[i]);
        u[i] = r.value;
        logdet += r.dlogdet;
      }
    }
    for (int i = 0; i < f_; ++i)
      if (circ_[order_[k][i]])
        u[i] = wrap01(u[i] + params_[lay.post_shift + i]);
    std::vector<double> next(f_);
    for (int i = 0; i < f_; ++i) next[i] = u[perms_[k][i]];
    u = next;
  }
  std::vector<double> v(f_);
  for (int i = 0; i < f_; ++i) v[final_order_[i]] = u[i];

  Forward out;
  for (int d = 0; d < 6; ++d) out.d[d] = bounds_.lo[d];
  for (int s = 0; s < f_; ++s) {
    int dim = free_[s];
    out.d[dim] = bounds_.lo[dim] + v[s] * bounds_.range(dim);
  }
  out.logdet = logdet + cube_logdet_;
  return out;
}

FlowModel::Inverse FlowModel::inverse(const DesignPoint& d) const {
  std::vector<double> v(f_);
  for (int s = 0; s < f_; ++s) {
    int dim = free_[s];
    double val = d[dim];
    if (val < bounds_.lo[dim] - 1e-9 || val > bounds_.hi[dim] + 1e-9)
      throw Error(ErrorKind::Domain,
                  std::string("flow inverse: design outside bounds in ") +
                      design::kDimNames[dim]);
    v[s] = std::clamp((val - bounds_.lo[dim]) / bounds_.range(dim), 0.0, 1.0);
  }
  std::vector<double> u(f_);
  for (int i = 0; i < f_; ++i) u[i] = v[final_order_[i]];

  double logdet = 0.0;
  for (int k = cfg_.layers - 1; k >= 0; --k) {
    const Layer& lay = layers_[k];
    std::vector<double> prev(f_);
    for (int i = 0; i < f_; ++i) prev[perms_[k][i]] = u[i];
    u = prev;
    for (int i = 0; i < f_; ++i)
      if (circ_[order_[k][i]])
        u[i] = wrap01(u[i] - params_[lay.post_shift + i]);
    for (int b = 1; b >= 0; --b) {
      // The block's conditioners read the *pre-block* vector, recovered
      // dimension by dimension in the autoregressive order.
      std::vector<double>& zrec = u;
      auto invert_at = [&](int i) {
        RqSpline s = decode_spline(cond_raw(lay, b, i, zrec, k), cfg_.bins);
        SplineResult r = spline_inverse(s, zrec[i]);
        zrec[i] = r.value;
        logdet += r.dlogdet;
      };
      if (b == 0) {
        for (int i = 0; i < f_; ++i) invert_at(i);
      } else {
        for (int i = f_ - 1; i >= 0; --i) invert_at(i);
      }
    }
    for (int i = 0; i < f_; ++i)
      if (circ_[order_[k][i]])
        u[i] = wrap01(u[i] - params_[lay.pre_shift + i]);
  }
  return {std::move(u), logdet - cube_logdet_};
}

double FlowModel::log_density(const DesignPoint& d) const {
  return inverse(d).logdet;  // uniform base: log pi = 0 on the unit cube
}

FlowModel::TapeForward FlowModel::forward_tape(Tape& tape,
                                               std::span<const double> z,
                                               int param_base,
                                               Rng* dropout_rng) const {
  if (static_cast<int>(z.size()) != f_)
    throw Error(ErrorKind::Shape, "flow forward_tape: z size != free dims");
  const int raw = spline_raw_count(cfg_.bins);
  std::vector<Var> u(f_);
  for (int i = 0; i < f_; ++i)
    u[i] = Var{&tape, tape.constant(std::clamp(z[i], 0.0, 1.0))};
  Var logdet{&tape, tape.constant(cube_logdet_)};

  double keep_scale = 1.0 / (1.0 - cfg_.dropout);
  std::vector<double> mask(cfg_.hidden);

  for (int k = 0; k < cfg_.layers; ++k) {
    const Layer& lay = layers_[k];
    auto shift = [&](int off) {
      for (int i = 0; i < f_; ++i) {
        if (!circ_[order_[k][i]]) continue;
        Var s{&tape, param_base + off + i};
        Var t = u[i] + s;
        u[i] = t - std::floor(t.value());  // wrapped shift, slope 1
      }
    };
    shift(lay.pre_shift);
    for (int b = 0; b < 2; ++b) {
      std::vector<Var> pre = u;
      for (int i = 0; i < f_; ++i) {
        const Slot& slot = lay.blocks[b][i];
        std::vector<int> raw_ids(raw);
        if (slot.embed == 0) {
          for (int r = 0; r < raw; ++r)
            raw_ids[r] = param_base + slot.offset + r;
        } else {
          std::vector<int> in;
          in.reserve(slot.embed);
          for (int j = 0; j < f_; ++j) {
            bool conditions = (b == 0) ? (j < i) : (j > i);
            if (!conditions) continue;
            if (circ_[order_[k][j]]) {
              in.push_back(tape.cos_(tape.mul_c(pre[j].id, kTwoPi)));
              in.push_back(tape.sin_(tape.mul_c(pre[j].id, kTwoPi)));
            } else {
              in.push_back(tape.add_c(pre[j].id, -0.5));
            }
          }
          std::span<const double> dmask;
          if (dropout_rng && cfg_.dropout > 0.0) {
            for (double& m : mask)
              m = dropout_rng->uniform() < cfg_.dropout ? 0.0 : keep_scale;
            dmask = mask;
          }
          numerics::mlp_apply_tape(tape, slot.mlp, param_base + slot.offset,
                                   in, raw_ids, dmask);
        }
        SplineNodes sn = spline_forward_tape(tape, raw_ids, cfg_.bins, u[i].id);
        u[i] = Var{&tape, sn.value};
        logdet = logdet + Var{&tape, sn.dlogdet};
      }
    }
    shift(lay.post_shift);
    std::vector<Var> next(f_);
    for (int i = 0; i < f_; ++i) next[i] = u[perms_[k][i]];
    u = next;
  }
  std::vector<Var> v(f_);
  for (int i = 0; i < f_; ++i) v[final_order_[i]] = u[i];

  TapeForward out;
  for (int dim = 0; dim < 6; ++dim) out.d_ids[dim] = -1;
  for (int s = 0; s < f_; ++s) {
    int dim = free_[s];
    Var scaled = v[s] * bounds_.range(dim) + bounds_.lo[dim];
    out.d_ids[dim] = scaled.id;
  }
  for (int dim = 0; dim < 6; ++dim)
    if (out.d_ids[dim] < 0) out.d_ids[dim] = tape.constant(bounds_.lo[dim]);
  out.logdet_id = logdet.id;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint IO: "LDFC", u32 version, config, bounds, permutations, params.

namespace {

void put_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, 4, 1, f); }
void put_f64(std::FILE* f, double v) { std::fwrite(&v, 8, 1, f); }
std::uint32_t get_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1)
    throw Error(ErrorKind::Config, "flow checkpoint: truncated file");
  return v;
}
double get_f64(std::FILE* f) {
  double v = 0;
  if (std::fread(&v, 8, 1, f) != 1)
    throw Error(ErrorKind::Config, "flow checkpoint: truncated file");
  return v;
}

}  // namespace

void FlowModel::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "flow checkpoint: cannot write " + path);
  std::fwrite("LDFC", 1, 4, f);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(cfg_.layers));
  put_u32(f, static_cast<std::uint32_t>(cfg_.hidden));
  put_u32(f, static_cast<std::uint32_t>(cfg_.bins));
  put_f64(f, cfg_.dropout);
  for (int i = 0; i < 6; ++i) put_f64(f, bounds_.lo[i]);
  for (int i = 0; i < 6; ++i) put_f64(f, bounds_.hi[i]);
  for (int i = 0; i < 6; ++i) put_u32(f, bounds_.fixed[i] ? 1 : 0);
  for (int i = 0; i < 6; ++i) put_u32(f, bounds_.circular[i] ? 1 : 0);
  for (const auto& p : perms_)
    for (int v : p) put_u32(f, static_cast<std::uint32_t>(v));
  put_u32(f, static_cast<std::uint32_t>(params_.size()));
  std::fwrite(params_.data(), 8, params_.size(), f);
  std::fclose(f);
}

FlowModel FlowModel::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorKind::Config, "flow checkpoint: cannot open " + path);
  char magic[4] = {};
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "LDFC", 4) != 0) {
    std::fclose(f);
    throw Error(ErrorKind::Config, "flow checkpoint: bad magic");
  }
  try {
    if (get_u32(f) != 1)
      throw Error(ErrorKind::Config, "flow checkpoint: unsupported version");
    FlowConfig cfg;
    cfg.layers = static_cast<int>(get_u32(f));
    cfg.hidden = static_cast<int>(get_u32(f));
    cfg.bins = static_cast<int>(get_u32(f));
    cfg.dropout = get_f64(f);
    DesignBounds b;
    for (int i = 0; i < 6; ++i) b.lo[i] = get_f64(f);
    for (int i = 0; i < 6; ++i) b.hi[i] = get_f64(f);
    for (int i = 0; i < 6; ++i) b.fixed[i] = get_u32(f) != 0;
    for (int i = 0; i < 6; ++i) b.circular[i] = get_u32(f) != 0;
    FlowModel m(b, cfg, /*seed=*/0);
    for (auto& p : m.perms_)
      for (int& v : p) v = static_cast<int>(get_u32(f));
    // Recompute the order bookkeeping from the loaded permutations.
    std::vector<int> cur(m.f_);
    for (int i = 0; i < m.f_; ++i) cur[i] = i;
    for (int k = 0; k < cfg.layers; ++k) {
      m.order_[k] = cur;
      std::vector<int> next(m.f_);
      for (int i = 0; i < m.f_; ++i) next[i] = cur[m.perms_[k][i]];
      cur = next;
    }
    m.final_order_ = cur;
    // The MLP input widths depend on which positions are circular in each
    // layer's order, so the layout must be rebuilt for the loaded perms.
    m.build_layout();
    std::uint32_t n = get_u32(f);
    if (n != m.params_.size())
      throw Error(ErrorKind::Config, "flow checkpoint: parameter count mismatch");
    if (std::fread(m.params_.data(), 8, n, f) != n)
      throw Error(ErrorKind::Config, "flow checkpoint: truncated parameters");
    std::fclose(f);
    return m;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace ldesign::flow
