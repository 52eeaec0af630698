#include "cvl/train.hpp"

#include <map>
#include <numeric>
#include <stdexcept>

namespace cvl {

void augment_batch(std::vector<MemeSample>& batch, double p, Rng& rng) {
  if (p <= 0.0) return;
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch[i].label) by_label[*batch[i].label].push_back(i);

  // Partners always come from the pre-augmentation batch.
  std::vector<VisualFeatures> originals;
  originals.reserve(batch.size());
  for (const MemeSample& s : batch) originals.push_back(s.visual);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].label) continue;
    const std::vector<std::size_t>& group = by_label[*batch[i].label];
    if (group.size() < 2) continue;
    if (rng.uniform() >= p) continue;
    std::size_t pick = rng.below(group.size() - 1);
    std::size_t my_pos = 0;
    while (group[my_pos] != i) ++my_pos;
    if (pick >= my_pos) ++pick;  // uniform over the group minus self
    batch[i].visual = originals[group[pick]];
  }
}

PredictionSet predict_all(const std::vector<MemeSample>& samples, const CvlModel& model) {
  PredictionSet preds;
  preds.reserve(samples.size());
  for (const MemeSample& s : samples)
    preds.push_back({s.id, predict(s, model), s.label});
  return preds;
}

TrainResult train(CvlModel& model, const std::vector<MemeSample>& train_set,
                  const std::vector<MemeSample>* val_set, const TrainConfig& cfg,
                  Rng& rng, std::ostream* trace_out,
                  const std::function<void(std::size_t)>& on_checkpoint) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  for (const MemeSample& s : train_set)
    if (!s.label)
      throw std::invalid_argument("train: sample '" + s.id + "' has no label");

  TrainResult result;
  auto emit = [&](const std::string& line) {
    result.trace.push_back(line);
    if (trace_out) (*trace_out) << line << '\n';
  };

  AdamOptimizer optimizer(named_parameters(model), cfg);
  const std::size_t n = train_set.size();
  const std::size_t batch_size = std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle before the first batch

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    if (cursor + batch_size > n) {
      rng.shuffle(order);
      cursor = 0;
    }
    std::vector<MemeSample> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k)
      batch.push_back(train_set[order[cursor + k]]);
    cursor += batch_size;
    if (cfg.augment_prob > 0.0) augment_batch(batch, cfg.augment_prob, rng);

    const double lr_dual_now = lr_at(step, cfg.lr_dual, cfg);
    const double lr_single_now = lr_at(step, cfg.lr_single, cfg);

    double loss_value = 0.0;
    {
      Tape tape;
      const std::vector<ForwardOutput> outputs = forward_batch(batch, model);
      const Tensor loss = batch_loss(outputs, batch);
      loss_value = loss.item();
      optimizer.zero_grad();
      tape.backward_from(loss);
    }
    optimizer.step(lr_dual_now, lr_single_now);

    if (step == 1) result.first_loss = loss_value;
    result.last_loss = loss_value;

    if (step == 1 || step == cfg.total_steps ||
        (cfg.log_every > 0 && step % cfg.log_every == 0)) {
      emit("step " + std::to_string(step) + " loss " + format_double(loss_value) +
           " lr_dual " + format_double(lr_dual_now) + " lr_single " +
           format_double(lr_single_now));
    }
    if (val_set && cfg.eval_every > 0 &&
        (step % cfg.eval_every == 0 || step == cfg.total_steps)) {
      const MetricsReport report = compute_metrics(predict_all(*val_set, model));
      emit("val step " + std::to_string(step) + " " + format_metrics(report));
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      on_checkpoint(step);
  }
  return result;
}

}  // namespace cvl
