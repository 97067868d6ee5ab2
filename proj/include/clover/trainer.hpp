#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clover/model.hpp"
#include "clover/optim.hpp"

namespace clover {

// Inner-loop behavior per mode:
//   melu         rec on rec-loss, discriminators never touched
//   clover       rec on rec-loss, discriminators trained   (T1)
//   clover_wo    rec on rec-loss, discriminators frozen
//   clover_t2    rec on full min-max loss, discriminators frozen   (T2)
//   clover_t1t2  rec on full min-max loss, discriminators trained  (T1+T2)
// The outer loop always optimizes the full objective; melu reduces it to the
// plain recommender loss.
enum class TrainMode { melu, clover, clover_wo, clover_t2, clover_t1t2 };

TrainMode train_mode_from_string(const std::string& s);
std::string train_mode_to_string(TrainMode m);

struct TrainerConfig {
  double inner_lr = 1e-2;   // alpha
  double outer_lr = 1e-3;   // beta
  int inner_steps = 5;
  int batch_size = 32;
  int epochs = 50;
  double lambda = 1.0;
  double gamma = 0.1;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::clover;
  double grad_clip = 5.0;  // global-norm clip per parameter group; <= 0 disables
  ModelConfig model;

  void validate() const;
  bool disc_active() const {
    return mode != TrainMode::melu && (lambda > 0.0 || gamma > 0.0);
  }
};

// Deep copy of the meta parameters with the embedding tables shared
// read-only; only produced by inner adaptation.
using AdaptedParams = ModelParams;

AdaptedParams inner_adapt(const ModelParams& meta, const UserTask& task,
                          const EncodedDataset& data, const TrainerConfig& cfg);

// Test-time fine-tuning: recommender loss only, regardless of mode. Never
// reads the sensitive label.
AdaptedParams finetune_test(const ModelParams& meta, const UserTask& task,
                            const EncodedDataset& data, const TrainerConfig& cfg);

struct MetaGradAccum {
  std::vector<std::vector<double>> rec;   // aligned with meta.rec_params()
  std::vector<std::vector<double>> disc;  // aligned with meta.disc_params()
  double sum_rec_loss = 0.0;
  double sum_disc_g_loss = 0.0;
  double sum_disc_h_loss = 0.0;
  int tasks = 0;
  int skipped = 0;
};

// First-order meta-gradients: each task is adapted on its support set, the
// min-max loss is evaluated on its query set, and the query gradients at the
// adapted parameters are summed into the accumulator at the matching meta
// positions.
MetaGradAccum accumulate_meta_grads(const ModelParams& meta, std::span<const UserTask> batch,
                                    const EncodedDataset& data, const TrainerConfig& cfg);

struct OuterStats {
  double rec_loss = 0.0;     // mean over batch tasks
  double disc_g_loss = 0.0;
  double disc_h_loss = 0.0;
  int skipped = 0;
};

OuterStats outer_step(ModelParams& meta, std::span<const UserTask> batch,
                      const EncodedDataset& data, const TrainerConfig& cfg, Optimizer& opt_r,
                      Optimizer& opt_d);

struct EpochStats {
  int epoch = 0;
  double rec_loss = 0.0;
  double disc_g_loss = 0.0;
  double disc_h_loss = 0.0;
  double valid_mae = 0.0;
};

struct TrainResult {
  ModelParams params;       // after the last epoch
  ModelParams best_params;  // lowest validation MAE
  int best_epoch = 0;
  std::vector<EpochStats> history;
};

using EpochHook = std::function<void(const EpochStats&, const ModelParams&, bool is_best)>;

TrainResult train(const EncodedDataset& data, const TaskSet& tasks, const TrainerConfig& cfg,
                  const EpochHook& on_epoch = {});

// Mean absolute error of a fine-tuned model on one task's query set.
double task_query_mae(const ModelParams& adapted, const UserTask& task, const EncodedDataset& data,
                      bool argmax_mode = false);

// FNV-1a over the raw bytes of every embedding table; inner adaptation must
// leave it unchanged.
uint64_t embedding_table_hash(const ModelParams& params);

}  // namespace clover
