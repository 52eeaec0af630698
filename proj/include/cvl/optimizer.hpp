#pragma once

#include <cstdint>
#include <vector>

#include "cvl/model.hpp"

namespace cvl {

struct TrainConfig {
  std::size_t batch_size = 80;
  double lr_dual = 1e-5;    // dual-stream groups and the heads
  double lr_single = 5e-5;  // single-stream groups
  std::size_t warmup_steps = 2000;
  std::size_t total_steps = 22000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double augment_prob = 0.0;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  std::size_t eval_every = 0;        // 0 = no validation passes
  std::size_t checkpoint_every = 0;  // 0 = only at the end

  void validate() const;
};

// Linear 0 -> base over [0, warmup], then linear base -> 0 over
// [warmup, total]. Steps past total clamp to 0.
double lr_at(std::size_t step, double base_lr, const TrainConfig& cfg);

// Bias-corrected Adam over the model's parameter registry. Frozen parameters
// are skipped; each group uses its stream's learning rate.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam> params, const TrainConfig& cfg);

  void zero_grad();
  void step(double lr_dual_now, double lr_single_now);
  std::size_t steps_taken() const { return step_count_; }

 private:
  struct Slot {
    NamedParam param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  TrainConfig cfg_;
  std::size_t step_count_ = 0;
};

}  // namespace cvl
