#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ldesign/design/design_space.hpp"
#include "ldesign/numerics/mlp.hpp"
#include "ldesign/numerics/rng.hpp"
#include "ldesign/numerics/tape.hpp"
#include "ldesign/flow/spline.hpp"

namespace ldesign::flow {

using design::DesignBounds;
using design::DesignPoint;

/// Architecture of the spline flow. Each layer runs: wrapped pre-shift on
/// circular dims -> ascending autoregressive spline block -> descending
/// autoregressive spline block -> wrapped post-shift -> fixed permutation.
/// The inverse of the composed permutation is applied after the last layer,
/// so a zero-initialized model is exactly the identity on the unit cube.
struct FlowConfig {
  int layers = 8;
  int hidden = 64;  // conditioner MLP hidden width
  int bins = 16;
  double dropout = 0.05;  // conditioner hidden dropout during training

  void validate() const {
    if (layers < 1 || hidden < 1 || bins < 1)
      throw Error(ErrorKind::Config, "flow: layers/hidden/bins must be >= 1");
    if (dropout < 0 || dropout >= 1)
      throw Error(ErrorKind::Config, "flow: dropout must be in [0, 1)");
  }
};

class FlowModel {
 public:
  /// Builds layout, samples per-layer permutations, and initializes
  /// parameters so the flow starts as the identity (zero direct slots and
  /// shifts; He-normal hidden weights with zero final conditioner layers).
  FlowModel(DesignBounds bounds, FlowConfig cfg, std::uint64_t seed);

  struct Forward {
    DesignPoint d;
    double logdet;  // log |det df/dz|, including the cube -> bounds scaling
  };
  /// z in [0,1]^F over the free dims; fixed dims are injected as constants.
  Forward forward(std::span<const double> z) const;

  struct Inverse {
    std::vector<double> z;
    double logdet;  // log |det df^-1/dd| = -forward logdet at z
  };
  Inverse inverse(const DesignPoint& d) const;

  /// log p(d) under the flow (uniform base on the unit cube).
  double log_density(const DesignPoint& d) const;

  struct TapeForward {
    std::array<int, 6> d_ids;  // tape nodes for (x,y,z,phi,psi,tau)
    int logdet_id;
  };
  /// Emits the forward pass onto a tape whose first param_count() nodes are
  /// parameter leaves starting at `param_base` (contiguous ids, same order
  /// as params()). `dropout_rng`, if given, applies inverted dropout to the
  /// conditioner hidden units.
  TapeForward forward_tape(numerics::Tape& tape, std::span<const double> z,
                           int param_base,
                           numerics::Rng* dropout_rng = nullptr) const;

  int free_count() const { return f_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const DesignBounds& bounds() const { return bounds_; }
  const FlowConfig& config() const { return cfg_; }
  const std::vector<std::vector<int>>& permutations() const { return perms_; }

  /// Versioned binary checkpoint ("LDFC").
  void save(const std::string& path) const;
  static FlowModel load(const std::string& path);

 private:
  struct Slot {
    int offset;        // into the flat parameter vector
    int embed;         // conditioner input width (0 => direct raw vector)
    numerics::MlpSpec mlp;  // valid when embed > 0
  };
  struct Layer {
    int pre_shift, post_shift;        // offsets of F doubles each
    std::array<std::vector<Slot>, 2> blocks;  // [ascending, descending]
  };

  void build_layout();
  void init_params(std::uint64_t seed);
  std::vector<double> cond_raw(const Layer& lay, int block, int pos,
                               std::span<const double> pre, int layer) const;

  DesignBounds bounds_;
  FlowConfig cfg_;
  int f_ = 0;
  std::vector<int> free_;            // free slot -> design dim index
  std::vector<bool> circ_;           // per free slot
  std::vector<std::vector<int>> perms_;   // per layer, position permutation
  std::vector<std::vector<int>> order_;   // order_[k][pos] = free slot there
  std::vector<int> final_order_;          // after all permutations
  std::vector<Layer> layers_;
  std::vector<double> params_;
  double cube_logdet_ = 0.0;
};

}  // namespace ldesign::flow
