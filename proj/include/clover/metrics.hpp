#pragma once

#include <span>
#include <string>
#include <vector>

#include "clover/trainer.hpp"

namespace clover {

struct PerUserMetrics {
  int user_id = 0;
  double mae = 0.0;
  double ndcg3 = 0.0;
  double cf = 0.0;
  int group = 0;
};

struct MetricsReport {
  double mae = 0.0;
  double ndcg3 = 0.0;
  double auc = 0.0;  // NaN when undefined (single-class test labels)
  double cf = 0.0;
  double gf = 0.0;  // NaN when a group is empty
  int k = 3;
  int n_test_users = 0;
  std::vector<PerUserMetrics> per_user;

  std::string to_json() const;
  std::string to_csv() const;
};

double mae(std::span<const double> predictions, std::span<const double> truths);

// DCG over the true ratings of the top-k items by predicted score, divided by
// the ideal DCG; prediction ties break by ascending item id.
double ndcg_at_k(std::span<const double> predicted, std::span<const double> true_ratings,
                 std::span<const int> item_ids, int k);

// Mann-Whitney rank statistic; ties contribute 1/2. Labels must be 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct LabeledVectors {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

// Multinomial logistic regression, zero-initialized, full-batch gradient
// descent. L2 applies to weights only.
struct AttackerModel {
  int classes = 0;
  int dim = 0;
  std::vector<double> w;  // [classes x dim]
  std::vector<double> b;  // [classes]

  std::vector<double> class_probs(std::span<const double> x) const;
};

AttackerModel train_attacker(const LabeledVectors& train, int epochs = 500, double lr = 0.1,
                             double l2 = 1e-4);

// Trains on the first set, scores the second, returns AUC of the class-1
// probability. NaN when either set has a single class.
double attacker_auc(const LabeledVectors& train, const LabeledVectors& test);

// |mean MAE of group 0 - mean MAE of group 1|; NaN when a group is empty.
double group_gap(std::span<const PerUserMetrics> rows);

// Mean over the query items of |prediction(true profile) - prediction(flipped
// profile)|, weights fixed after fine-tuning on the true profile.
double counterfactual_user_gap(const ModelParams& adapted, const UserTask& task,
                               const EncodedDataset& data, bool argmax_mode = false);

// Full protocol: fine-tune every test user, score MAE/NDCG/CF per user, train
// the linear attacker on the train users' fine-tuned representations, report
// its AUC on the test users.
MetricsReport evaluate(const ModelParams& meta, const EncodedDataset& data, const TaskSet& tasks,
                       const TrainerConfig& cfg, bool argmax_mode = false);

void write_report(const MetricsReport& report, const std::string& json_path,
                  const std::string& csv_path);

}  // namespace clover
