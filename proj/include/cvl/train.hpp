#pragma once

#include <functional>
#include <ostream>

#include "cvl/metrics.hpp"
#include "cvl/optimizer.hpp"

namespace cvl {

// Same-label visual re-pairing: with probability p a sample's visual
// features are swapped for those of another batch member with the same
// label. Texts, labels, and the underlying dataset are untouched; samples
// without a same-label partner pass through.
void augment_batch(std::vector<MemeSample>& batch, double p, Rng& rng);

// Untracked forward over a whole split.
PredictionSet predict_all(const std::vector<MemeSample>& samples, const CvlModel& model);

struct TrainResult {
  std::vector<std::string> trace;  // loss lines and validation lines, in order
  double first_loss = 0.0;
  double last_loss = 0.0;
};

// Runs cfg.total_steps optimizer steps over seeded shuffled batches. Loss
// lines are `step <n> loss <f> lr_dual <f> lr_single <f>`; validation lines
// (every eval_every steps when val_set is given) prepend `val step <n>`.
// on_checkpoint fires every checkpoint_every steps when set.
TrainResult train(CvlModel& model, const std::vector<MemeSample>& train_set,
                  const std::vector<MemeSample>* val_set, const TrainConfig& cfg,
                  Rng& rng, std::ostream* trace_out = nullptr,
                  const std::function<void(std::size_t)>& on_checkpoint = {});

}  // namespace cvl
