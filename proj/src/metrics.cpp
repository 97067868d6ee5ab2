#include "clover/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace clover {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.empty() || predictions.size() != truths.size())
    throw ContractError("mae: inputs must be nonempty and equal length");
  double acc = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) acc += std::abs(predictions[i] - truths[i]);
  return acc / static_cast<double>(predictions.size());
}

double ndcg_at_k(std::span<const double> predicted, std::span<const double> true_ratings,
                 std::span<const int> item_ids, int k) {
  const size_t n = predicted.size();
  if (n != true_ratings.size() || n != item_ids.size())
    throw ContractError("ndcg_at_k: length mismatch");
  if (static_cast<int>(n) < k) throw ContractError("ndcg_at_k: fewer items than k");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (predicted[a] != predicted[b]) return predicted[a] > predicted[b];
    return item_ids[a] < item_ids[b];
  });

  double dcg = 0.0;
  for (int r = 0; r < k; ++r)
    dcg += (std::exp2(true_ratings[order[r]]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);

  std::vector<double> ideal(true_ratings.begin(), true_ratings.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (int r = 0; r < k; ++r) idcg += (std::exp2(ideal[r]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);

  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) throw ContractError("roc_auc: bad input");
  size_t n1 = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("roc_auc: labels must be 0/1");
    n1 += static_cast<size_t>(y);
  }
  const size_t n0 = labels.size() - n1;
  if (n0 == 0 || n1 == 0) throw ContractError("roc_auc: needs both classes");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // midranks over tie groups
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u1 = rank_sum_pos - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  return u1 / (static_cast<double>(n1) * static_cast<double>(n0));
}

std::vector<double> AttackerModel::class_probs(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim) throw ContractError("attacker: feature dim mismatch");
  std::vector<double> logits(classes);
  for (int c = 0; c < classes; ++c) {
    double acc = b[c];
    const double* row = w.data() + static_cast<size_t>(c) * dim;
    for (int j = 0; j < dim; ++j) acc += row[j] * x[j];
    logits[c] = acc;
  }
  return softmax(logits);
}

AttackerModel train_attacker(const LabeledVectors& train, int epochs, double lr, double l2) {
  if (train.x.empty() || train.x.size() != train.y.size())
    throw ContractError("train_attacker: bad input");
  int classes = 0;
  for (int y : train.y) {
    if (y < 0) throw ContractError("train_attacker: negative label");
    classes = std::max(classes, y + 1);
  }
  if (classes < 2) throw ContractError("train_attacker: needs >= 2 classes");

  AttackerModel m;
  m.classes = classes;
  m.dim = static_cast<int>(train.x.front().size());
  m.w.assign(static_cast<size_t>(classes) * m.dim, 0.0);
  m.b.assign(classes, 0.0);

  const size_t n = train.x.size();
  std::vector<double> gw(m.w.size());
  std::vector<double> gb(m.b.size());
  for (int e = 0; e < epochs; ++e) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (size_t s = 0; s < n; ++s) {
      const std::vector<double>& x = train.x[s];
      const std::vector<double> p = m.class_probs(x);
      for (int c = 0; c < classes; ++c) {
        const double d = p[c] - (c == train.y[s] ? 1.0 : 0.0);
        gb[c] += d;
        double* row = gw.data() + static_cast<size_t>(c) * m.dim;
        for (int j = 0; j < m.dim; ++j) row[j] += d * x[j];
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (size_t j = 0; j < m.w.size(); ++j) m.w[j] -= lr * (gw[j] * inv + l2 * m.w[j]);
    for (int c = 0; c < classes; ++c) m.b[c] -= lr * gb[c] * inv;
  }
  return m;
}

double attacker_auc(const LabeledVectors& train, const LabeledVectors& test) {
  bool train_two = false, test_two = false;
  for (int y : train.y)
    if (y != train.y.front()) train_two = true;
  for (int y : test.y)
    if (y != test.y.front()) test_two = true;
  if (train.y.empty() || !train_two) throw ContractError("attacker_auc: train set needs 2 classes");
  if (test.y.empty() || !test_two) return kNaN;

  const AttackerModel m = train_attacker(train);
  if (m.classes != 2) return kNaN;  // AUC defined for the binary case only

  std::vector<double> scores;
  scores.reserve(test.x.size());
  for (const auto& x : test.x) scores.push_back(m.class_probs(x)[1]);
  return roc_auc(scores, test.y);
}

double group_gap(std::span<const PerUserMetrics> rows) {
  double sum0 = 0.0, sum1 = 0.0;
  size_t n0 = 0, n1 = 0;
  for (const PerUserMetrics& r : rows) {
    if (r.group == 0) {
      sum0 += r.mae;
      ++n0;
    } else {
      sum1 += r.mae;
      ++n1;
    }
  }
  if (n0 == 0 || n1 == 0) return kNaN;
  return std::abs(sum0 / static_cast<double>(n0) - sum1 / static_cast<double>(n1));
}

double counterfactual_user_gap(const ModelParams& adapted, const UserTask& task,
                               const EncodedDataset& data, bool argmax_mode) {
  if (task.query.empty()) throw ContractError("counterfactual gap: empty query");
  const EncodedProfile& user = data.users[task.user_idx];
  const EncodedProfile flipped = user.flip_sensitive();

  Tape tape;
  Tensor e_u = user_embed(tape, user, adapted);
  Tensor e_u_flip = user_embed(tape, flipped, adapted);
  double acc = 0.0;
  for (const RatedItem& q : task.query) {
    Tensor e_i = item_embed(tape, data.items[q.item_idx], adapted);
    Tensor logits = predict_logits(tape, e_u, e_i, adapted);
    Tensor logits_flip = predict_logits(tape, e_u_flip, e_i, adapted);
    double a, b;
    if (argmax_mode) {
      a = argmax_rating(logits.values(), data.min_rating);
      b = argmax_rating(logits_flip.values(), data.min_rating);
    } else {
      a = expected_rating(logits.values(), data.min_rating);
      b = expected_rating(logits_flip.values(), data.min_rating);
    }
    acc += std::abs(a - b);
  }
  return acc / static_cast<double>(task.query.size());
}

namespace {

std::vector<double> finetuned_user_repr(const ModelParams& meta, const UserTask& task,
                                        const EncodedDataset& data, const TrainerConfig& cfg) {
  const AdaptedParams adapted = finetune_test(meta, task, data, cfg);
  Tape tape;
  const Tensor e_u = user_embed(tape, data.users[task.user_idx], adapted);
  return e_u.values();
}

}  // namespace

MetricsReport evaluate(const ModelParams& meta, const EncodedDataset& data, const TaskSet& tasks,
                       const TrainerConfig& cfg, bool argmax_mode) {
  if (tasks.test.empty()) throw ContractError("evaluate: no test users");

  MetricsReport report;
  report.n_test_users = static_cast<int>(tasks.test.size());

  LabeledVectors attacker_test;
  for (const UserTask& task : tasks.test) {
    const AdaptedParams adapted = finetune_test(meta, task, data, cfg);

    std::vector<double> preds, truths;
    std::vector<int> ids;
    Tape tape;
    const EncodedProfile& user = data.users[task.user_idx];
    const Tensor e_u = user_embed(tape, user, adapted);
    for (const RatedItem& q : task.query) {
      const Tensor e_i = item_embed(tape, data.items[q.item_idx], adapted);
      const Tensor logits = predict_logits(tape, e_u, e_i, adapted);
      preds.push_back(argmax_mode ? argmax_rating(logits.values(), data.min_rating)
                                  : expected_rating(logits.values(), data.min_rating));
      truths.push_back(static_cast<double>(q.rating));
      ids.push_back(data.item_ids[q.item_idx]);
    }

    PerUserMetrics row;
    row.user_id = task.user_id;
    row.mae = mae(preds, truths);
    row.ndcg3 = ndcg_at_k(preds, truths, ids, report.k);
    row.cf = counterfactual_user_gap(adapted, task, data, argmax_mode);
    row.group = user.sensitive_label();
    report.per_user.push_back(row);

    attacker_test.x.push_back(e_u.values());
    attacker_test.y.push_back(row.group);
  }

  LabeledVectors attacker_train;
  for (const UserTask& task : tasks.train) {
    attacker_train.x.push_back(finetuned_user_repr(meta, task, data, cfg));
    attacker_train.y.push_back(data.users[task.user_idx].sensitive_label());
  }

  double mae_sum = 0.0, ndcg_sum = 0.0, cf_sum = 0.0;
  for (const PerUserMetrics& r : report.per_user) {
    mae_sum += r.mae;
    ndcg_sum += r.ndcg3;
    cf_sum += r.cf;
  }
  const double inv = 1.0 / static_cast<double>(report.per_user.size());
  report.mae = mae_sum * inv;
  report.ndcg3 = ndcg_sum * inv;
  report.cf = cf_sum * inv;
  report.gf = group_gap(report.per_user);
  report.auc = attacker_train.x.empty() ? kNaN : attacker_auc(attacker_train, attacker_test);
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["mae"] = mae;
  j["ndcg3"] = ndcg3;
  j["auc"] = auc;
  j["cf"] = cf;
  j["gf"] = gf;
  j["k"] = k;
  j["n_test_users"] = n_test_users;
  nlohmann::json rows = nlohmann::json::array();
  for (const PerUserMetrics& r : per_user)
    rows.push_back({{"user_id", r.user_id},
                    {"mae", r.mae},
                    {"ndcg3", r.ndcg3},
                    {"cf", r.cf},
                    {"group", r.group}});
  j["per_user"] = std::move(rows);
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::string out = "scope,user_id,mae,ndcg3,auc,cf,gf,group\n";
  out += "overall,," + fmt_double(mae) + "," + fmt_double(ndcg3) + "," + fmt_double(auc) + "," +
         fmt_double(cf) + "," + fmt_double(gf) + ",\n";
  for (const PerUserMetrics& r : per_user) {
    out += "user," + std::to_string(r.user_id) + "," + fmt_double(r.mae) + "," +
           fmt_double(r.ndcg3) + ",," + fmt_double(r.cf) + ",," + std::to_string(r.group) + "\n";
  }
  return out;
}

void write_report(const MetricsReport& report, const std::string& json_path,
                  const std::string& csv_path) {
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path);
  js << report.to_json();
  std::ofstream cs(csv_path);
  if (!cs) throw IoError("cannot write " + csv_path);
  cs << report.to_csv();
}

}  // namespace clover
