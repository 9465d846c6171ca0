#include "ldesign/flow/train.hpp"

#include <cmath>
#include <cstdio>

#include "ldesign/numerics/adam.hpp"

namespace ldesign::flow {

using numerics::Rng;
using numerics::Tape;

std::vector<TraceRow> train_flow(FlowModel& model,
                                 std::span<const SceneSdf> scenes,
                                 const DensityConfig& density_cfg,
                                 const TrainConfig& train_cfg) {
  train_cfg.validate();
  density_cfg.validate();
  if (scenes.empty())
    throw Error(ErrorKind::Config, "train_flow: needs at least one scene");

  const int P = model.param_count();
  Tape tape;
  for (double p : model.params()) tape.leaf(p);
  const Tape::Mark mark = tape.mark();

  numerics::AdamState adam(P, train_cfg.lr);
  Rng root(train_cfg.seed);
  Rng batch_root = root.substream("training-batch");
  Rng ray_root = root.substream("ray-sampling");

  std::vector<TraceRow> trace;
  trace.reserve(train_cfg.steps);
  std::vector<double> grads(P);
  std::vector<SceneSdf> minibatch;
  std::vector<double> jitter(density_cfg.n_strat);

  for (long step = 0; step < train_cfg.steps; ++step) {
    Rng step_rng = batch_root.substream(static_cast<std::uint64_t>(step));
    Rng jitter_rng = ray_root.substream(static_cast<std::uint64_t>(step));

    DensityConfig cfg = density_cfg;
    cfg.w_vis = train_cfg.ramp.weight(step);

    minibatch.clear();
    int sb = std::min<int>(train_cfg.scene_batch, scenes.size());
    if (sb == static_cast<int>(scenes.size())) {
      minibatch.assign(scenes.begin(), scenes.end());
    } else {
      for (int i = 0; i < sb; ++i)
        minibatch.push_back(scenes[step_rng.uniform_int(scenes.size())]);
    }
    for (double& j : jitter) j = jitter_rng.uniform();

    tape.zero_adjoints();
    double loss_sum = 0, logp_sum = 0, logdet_sum = 0;
    const double inv_batch = 1.0 / train_cfg.batch;
    for (int s = 0; s < train_cfg.batch; ++s) {
      std::vector<double> z(model.free_count());
      for (double& zi : z) zi = step_rng.uniform();

      FlowModel::TapeForward fwd =
          model.forward_tape(tape, z, 0, &step_rng);
      int logp = density::log_target_density_tape(tape, minibatch, fwd.d_ids,
                                                  cfg, jitter);
      // loss = (1 + eta) * (0 - logdet) - log p*
      int loss = tape.sub(tape.mul_c(fwd.logdet_id, -(1.0 + train_cfg.eta_entropy)),
                          logp);
      int bad = tape.first_nonfinite_value(mark.nodes);
      if (bad >= 0)
        throw Error(ErrorKind::NumericalOverflow,
                    "train_flow: non-finite value at step " +
                        std::to_string(step) + ", tape node " +
                        std::to_string(bad));
      loss_sum += tape.value(loss) * inv_batch;
      logp_sum += tape.value(logp) * inv_batch;
      logdet_sum += tape.value(fwd.logdet_id) * inv_batch;
      tape.backward(loss, inv_batch);
      tape.rewind(mark);
    }

    for (int i = 0; i < P; ++i) grads[i] = tape.adjoint(i);
    try {
      numerics::adam_step(adam, model.params(), grads);
    } catch (const Error& e) {
      throw Error(e.kind(), "train_flow: step " + std::to_string(step) + ": " +
                                e.what());
    }
    for (int i = 0; i < P; ++i) tape.set_leaf(i, model.params()[i]);

    trace.push_back({step, loss_sum, logp_sum, logdet_sum, cfg.w_vis});
  }
  return trace;
}

std::vector<DesignPoint> sample_flow(const FlowModel& model, int n,
                                     Rng& rng, const ConstraintRegion* region,
                                     std::vector<double>* log_densities) {
  std::vector<DesignPoint> out;
  out.reserve(n);
  if (log_densities) log_densities->clear();
  std::vector<double> z(model.free_count());
  long attempts = 0, accepted = 0;
  const long probe = 100000;
  while (static_cast<int>(out.size()) < n) {
    for (double& zi : z) zi = rng.uniform();
    FlowModel::Forward f = model.forward(z);
    ++attempts;
    if (region && !design::in_region(f.d, *region)) {
      if (attempts >= probe && accepted < attempts / 10000)
        throw Error(ErrorKind::ConstraintInfeasible,
                    "sample_flow: acceptance " +
                        std::to_string(static_cast<double>(accepted) /
                                       attempts) +
                        " below 1e-4 over " + std::to_string(attempts) +
                        " proposals");
      continue;
    }
    ++accepted;
    out.push_back(f.d);
    if (log_densities) log_densities->push_back(-f.logdet);
  }
  return out;
}

void write_trace_csv(const std::string& path, std::span<const TraceRow> trace) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write trace CSV: " + path);
  std::fprintf(f, "step,loss,mean_logp,mean_logdet,w_vis\n");
  for (const TraceRow& r : trace)
    std::fprintf(f, "%ld,%.10g,%.10g,%.10g,%.10g\n", r.step, r.loss,
                 r.mean_logp, r.mean_logdet, r.w_vis);
  std::fclose(f);
}

}  // namespace ldesign::flow
