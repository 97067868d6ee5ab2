#include "clover/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace clover {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "melu") return TrainMode::melu;
  if (s == "clover") return TrainMode::clover;
  if (s == "clover_wo") return TrainMode::clover_wo;
  if (s == "clover_t2") return TrainMode::clover_t2;
  if (s == "clover_t1t2") return TrainMode::clover_t1t2;
  throw ConfigError("unknown mode: " + s);
}

std::string train_mode_to_string(TrainMode m) {
  switch (m) {
    case TrainMode::melu: return "melu";
    case TrainMode::clover: return "clover";
    case TrainMode::clover_wo: return "clover_wo";
    case TrainMode::clover_t2: return "clover_t2";
    case TrainMode::clover_t1t2: return "clover_t1t2";
  }
  return "?";
}

void TrainerConfig::validate() const {
  if (inner_lr <= 0.0 || outer_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (lambda < 0.0 || gamma < 0.0) throw ConfigError("lambda and gamma must be >= 0");
}

namespace {

struct InnerBehavior {
  bool rec_on_total = false;  // T2: recommender follows the full min-max loss
  bool train_disc = false;    // T1: discriminators updated
};

InnerBehavior inner_behavior(TrainMode mode) {
  switch (mode) {
    case TrainMode::melu:
    case TrainMode::clover_wo: return {false, false};
    case TrainMode::clover: return {false, true};
    case TrainMode::clover_t2: return {true, false};
    case TrainMode::clover_t1t2: return {true, true};
  }
  return {false, false};
}

LossOptions loss_options(const TrainerConfig& cfg, bool detach) {
  LossOptions o;
  o.lambda = cfg.lambda;
  o.gamma = cfg.gamma;
  const bool active = cfg.disc_active();
  o.want_disc_g = active && cfg.lambda > 0.0;
  o.want_disc_h = active && cfg.gamma > 0.0;
  o.detach_disc_inputs = detach;
  return o;
}

// One adaptation pass shared by training-time inner loops and test-time
// fine-tuning. A single backward pass serves every mode: when the
// discriminator inputs are detached (T1-only modes) the recommender
// gradients of rec + lambda*g + gamma*h reduce to the plain rec-loss
// gradients, and the discriminator gradients are the ascent direction of the
// min-max loss with the sign folded into the update.
AdaptedParams adapt_impl(const ModelParams& meta, const UserTask& task, const EncodedDataset& data,
                         const TrainerConfig& cfg, InnerBehavior behavior, bool allow_disc) {
  AdaptedParams adapted = meta.clone_adapted();
  if (task.support.empty()) return adapted;

  LossOptions opts = loss_options(cfg, /*detach=*/!behavior.rec_on_total);
  if (!allow_disc || (!behavior.train_disc && !behavior.rec_on_total)) {
    opts.want_disc_g = false;
    opts.want_disc_h = false;
  }

  const std::vector<Tensor> rec = adapted.rec_adaptable();
  const std::vector<Tensor> disc = adapted.disc_params();
  const std::vector<Tensor> all = adapted.all_params();
  Optimizer sgd = Optimizer::sgd(cfg.inner_lr);

  for (int step = 0; step < cfg.inner_steps; ++step) {
    Tape tape;
    const LossBundle loss = combined_loss(tape, adapted, data.users[task.user_idx], task.support,
                                          data, opts);
    Tensor root;
    if (behavior.rec_on_total) {
      root = loss.total;
    } else if (opts.want_disc_g || opts.want_disc_h) {
      // rec + lambda*g + gamma*h on detached inputs: one descent root for
      // both parameter groups
      root = loss.rec;
      if (opts.want_disc_g) root = add_scaled(tape, root, 1.0, loss.disc_g, cfg.lambda);
      if (opts.want_disc_h) root = add_scaled(tape, root, 1.0, loss.disc_h, cfg.gamma);
    } else {
      root = loss.rec;
    }
    tape.backward(root);

    clip_gradient_norm(rec, cfg.grad_clip);
    sgd.step(rec, StepDirection::descend);
    if (behavior.train_disc) {
      clip_gradient_norm(disc, cfg.grad_clip);
      // ascend on the min-max loss == descend on the weighted disc losses
      sgd.step(disc, behavior.rec_on_total ? StepDirection::ascend : StepDirection::descend);
    }
    zero_grads(all);
  }
  return adapted;
}

}  // namespace

AdaptedParams inner_adapt(const ModelParams& meta, const UserTask& task, const EncodedDataset& data,
                          const TrainerConfig& cfg) {
  return adapt_impl(meta, task, data, cfg, inner_behavior(cfg.mode), cfg.disc_active());
}

AdaptedParams finetune_test(const ModelParams& meta, const UserTask& task,
                            const EncodedDataset& data, const TrainerConfig& cfg) {
  return adapt_impl(meta, task, data, cfg, inner_behavior(TrainMode::melu), /*allow_disc=*/false);
}

MetaGradAccum accumulate_meta_grads(const ModelParams& meta, std::span<const UserTask> batch,
                                    const EncodedDataset& data, const TrainerConfig& cfg) {
  const std::vector<Tensor> meta_rec = meta.rec_params();
  const std::vector<Tensor> meta_disc = meta.disc_params();

  MetaGradAccum acc;
  acc.rec.resize(meta_rec.size());
  for (size_t i = 0; i < meta_rec.size(); ++i) acc.rec[i].assign(meta_rec[i].values().size(), 0.0);
  acc.disc.resize(meta_disc.size());
  for (size_t i = 0; i < meta_disc.size(); ++i)
    acc.disc[i].assign(meta_disc[i].values().size(), 0.0);

  const LossOptions opts = loss_options(cfg, /*detach=*/false);

  for (const UserTask& task : batch) {
    if (task.support.empty() || task.query.empty()) {
      ++acc.skipped;
      continue;
    }
    AdaptedParams adapted = inner_adapt(meta, task, data, cfg);
    const std::vector<Tensor> a_rec = adapted.rec_params();
    const std::vector<Tensor> a_disc = adapted.disc_params();
    zero_grads(adapted.all_params());  // clears inner-loop residue on shared tables

    Tape tape;
    const LossBundle loss = combined_loss(tape, adapted, data.users[task.user_idx], task.query,
                                          data, opts);
    tape.backward(loss.total);

    for (size_t i = 0; i < a_rec.size(); ++i) {
      const std::vector<double>& g = a_rec[i].grad();
      for (size_t j = 0; j < g.size(); ++j) acc.rec[i][j] += g[j];
    }
    for (size_t i = 0; i < a_disc.size(); ++i) {
      const std::vector<double>& g = a_disc[i].grad();
      for (size_t j = 0; j < g.size(); ++j) acc.disc[i][j] += g[j];
    }
    zero_grads(adapted.all_params());

    acc.sum_rec_loss += loss.rec.item();
    acc.sum_disc_g_loss += loss.disc_g.item();
    acc.sum_disc_h_loss += loss.disc_h.item();
    ++acc.tasks;
  }
  return acc;
}

OuterStats outer_step(ModelParams& meta, std::span<const UserTask> batch,
                      const EncodedDataset& data, const TrainerConfig& cfg, Optimizer& opt_r,
                      Optimizer& opt_d) {
  if (batch.empty()) throw ContractError("outer_step: empty batch");
  const MetaGradAccum acc = accumulate_meta_grads(meta, batch, data, cfg);

  OuterStats stats;
  stats.skipped = acc.skipped;
  if (acc.tasks == 0) return stats;
  stats.rec_loss = acc.sum_rec_loss / acc.tasks;
  stats.disc_g_loss = acc.sum_disc_g_loss / acc.tasks;
  stats.disc_h_loss = acc.sum_disc_h_loss / acc.tasks;

  const std::vector<Tensor> meta_rec = meta.rec_params();
  const std::vector<Tensor> meta_disc = meta.disc_params();
  for (size_t i = 0; i < meta_rec.size(); ++i) {
    meta_rec[i].zero_grad();
    std::copy(acc.rec[i].begin(), acc.rec[i].end(), meta_rec[i].grad().begin());
  }
  clip_gradient_norm(meta_rec, cfg.grad_clip);
  opt_r.step(meta_rec, StepDirection::descend);
  zero_grads(meta_rec);

  if (cfg.disc_active()) {
    for (size_t i = 0; i < meta_disc.size(); ++i) {
      meta_disc[i].zero_grad();
      std::copy(acc.disc[i].begin(), acc.disc[i].end(), meta_disc[i].grad().begin());
    }
    clip_gradient_norm(meta_disc, cfg.grad_clip);
    opt_d.step(meta_disc, StepDirection::ascend);
    zero_grads(meta_disc);
  }
  return stats;
}

double task_query_mae(const ModelParams& adapted, const UserTask& task, const EncodedDataset& data,
                      bool argmax_mode) {
  if (task.query.empty()) throw ContractError("task_query_mae: empty query");
  Tape tape;
  const EncodedProfile& user = data.users[task.user_idx];
  Tensor e_u = user_embed(tape, user, adapted);
  double acc = 0.0;
  for (const RatedItem& q : task.query) {
    Tensor e_i = item_embed(tape, data.items[q.item_idx], adapted);
    Tensor logits = predict_logits(tape, e_u, e_i, adapted);
    const double pred = argmax_mode ? argmax_rating(logits.values(), data.min_rating)
                                    : expected_rating(logits.values(), data.min_rating);
    acc += std::abs(pred - static_cast<double>(q.rating));
  }
  return acc / static_cast<double>(task.query.size());
}

TrainResult train(const EncodedDataset& data, const TaskSet& tasks, const TrainerConfig& cfg,
                  const EpochHook& on_epoch) {
  cfg.validate();
  if (tasks.train.empty()) throw ContractError("train: no training tasks");

  Rng init_rng(derive_seed(cfg.seed, 1));
  TrainResult result;
  result.params = ModelParams::init(data, cfg.model, init_rng);
  result.best_params = result.params.clone_full();
  result.best_epoch = 0;

  Optimizer opt_r = Optimizer::adam(cfg.outer_lr);
  Optimizer opt_d = Optimizer::adam(cfg.outer_lr);
  Rng shuffle_rng(derive_seed(cfg.seed, 2));

  std::vector<size_t> order(tasks.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_mae = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    double rec = 0.0, dg = 0.0, dh = 0.0;
    int n_batches = 0;
    std::vector<UserTask> batch;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      for (size_t i = start; i < end; ++i) batch.push_back(tasks.train[order[i]]);

      const OuterStats stats = outer_step(result.params, batch, data, cfg, opt_r, opt_d);
      if (!std::isfinite(stats.rec_loss) || !std::isfinite(stats.disc_g_loss) ||
          !std::isfinite(stats.disc_h_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << n_batches << " (rec="
            << stats.rec_loss << " disc_g=" << stats.disc_g_loss << " disc_h=" << stats.disc_h_loss
            << "; users";
        for (const UserTask& t : batch) msg << ' ' << t.user_id;
        msg << ")";
        throw TrainingDiverged(msg.str(), epoch, n_batches);
      }
      rec += stats.rec_loss;
      dg += stats.disc_g_loss;
      dh += stats.disc_h_loss;
      ++n_batches;
    }

    EpochStats es;
    es.epoch = epoch;
    es.rec_loss = rec / n_batches;
    es.disc_g_loss = dg / n_batches;
    es.disc_h_loss = dh / n_batches;

    if (!tasks.valid.empty()) {
      double mae = 0.0;
      for (const UserTask& task : tasks.valid) {
        const AdaptedParams adapted = finetune_test(result.params, task, data, cfg);
        mae += task_query_mae(adapted, task, data);
      }
      es.valid_mae = mae / static_cast<double>(tasks.valid.size());
    } else {
      es.valid_mae = std::numeric_limits<double>::quiet_NaN();
    }

    const bool is_best = !tasks.valid.empty() && es.valid_mae < best_mae;
    if (is_best) {
      best_mae = es.valid_mae;
      result.best_params = result.params.clone_full();
      result.best_epoch = epoch;
    }
    result.history.push_back(es);
    if (on_epoch) on_epoch(es, result.params, is_best);
  }
  return result;
}

uint64_t embedding_table_hash(const ModelParams& params) {
  uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](const std::vector<double>& values) {
    for (double v : values) {
      uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const Tensor& t : params.user_tables) mix(t.values());
  for (const Tensor& t : params.item_tables) mix(t.values());
  return h;
}

}  // namespace clover
