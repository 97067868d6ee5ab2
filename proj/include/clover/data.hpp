#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clover/errors.hpp"
#include "clover/rng.hpp"

namespace clover {

enum class Schema { ml100k, ml1m, bookcrossing };

Schema schema_from_string(const std::string& s);
std::string schema_to_string(Schema s);

// One user or item record with its categorical content values. Multi-valued
// contents (genres) carry several values; everything else carries one.
struct RawRecord {
  int id = 0;
  std::vector<std::pair<std::string, std::vector<std::string>>> contents;

  const std::vector<std::string>* find(const std::string& content) const;
};

struct Interaction {
  int user_id = 0;
  int item_id = 0;
  int rating = 0;
  int64_t timestamp = 0;
};

struct RawDataset {
  Schema schema = Schema::ml100k;
  int min_rating = 1;
  int max_rating = 5;
  std::vector<RawRecord> users;
  std::vector<RawRecord> items;
  std::vector<Interaction> interactions;
  int rejected_rows = 0;
  std::vector<std::string> warnings;
};

// Rejects malformed rows (counted) unless they exceed 1% of a file, which is
// treated as a broken input. Missing files raise IoError.
RawDataset load_movielens(const std::string& directory, Schema schema);

void write_ml100k(const RawDataset& raw, const std::string& directory);

struct FeatureBlock {
  std::string content;
  int cardinality = 0;
  std::vector<int> active;  // sorted category indices; one entry unless multi-valued

  std::vector<double> to_dense() const;
};

class EncodedProfile {
 public:
  std::vector<FeatureBlock> blocks;
  int sensitive_block = -1;

  void set_sensitive_label(int label) { sensitive_label_ = label; }

  // Audited accessor: every read is counted so tests can prove that
  // test-time fine-tuning never touches the label.
  int sensitive_label() const;
  static uint64_t sensitive_label_reads();

  // Binary sensitive block flipped, everything else untouched.
  EncodedProfile flip_sensitive() const;

 private:
  int sensitive_label_ = -1;
};

struct BlockSpec {
  std::string content;
  int cardinality = 0;
};

struct EncodedDataset {
  std::vector<EncodedProfile> users;
  std::vector<EncodedProfile> items;
  std::vector<int> user_ids;  // index -> id
  std::vector<int> item_ids;
  std::unordered_map<int, int> user_index;  // id -> index
  std::unordered_map<int, int> item_index;
  std::vector<BlockSpec> user_blocks;
  std::vector<BlockSpec> item_blocks;
  std::string sensitive_content;
  int sensitive_classes = 0;
  int n_rating_levels = 0;
  int min_rating = 1;
  int skipped_users = 0;  // users without a usable sensitive value
};

// Deterministic one-hot/multi-hot encoding: block order is sorted content
// names, category order is sorted values, sensitive labels follow category
// order. ML-100K raw ages collapse into the seven MovieLens bands, zip codes
// into their first digit, and the BookCrossing age attribute binarizes at the
// median observed age.
EncodedDataset encode_dataset(const RawDataset& raw, const std::string& sensitive_content);

struct SplitSpec {
  std::vector<int> train_ids;
  std::vector<int> valid_ids;
  std::vector<int> test_ids;
  uint64_t seed = 0;
};

SplitSpec split_users(std::span<const int> user_ids, double train_ratio, double valid_ratio,
                      double test_ratio, uint64_t seed);

struct RatedItem {
  int item_idx = 0;
  int rating = 0;
  int64_t timestamp = 0;
};

struct UserTask {
  int user_id = 0;
  int user_idx = 0;
  std::vector<RatedItem> support;
  std::vector<RatedItem> query;
};

struct TaskSet {
  std::vector<UserTask> train;
  std::vector<UserTask> valid;
  std::vector<UserTask> test;
  int dropped_users = 0;
};

inline constexpr int kQuerySize = 10;
inline constexpr int kDefaultSupportCap = 64;
inline constexpr int kDefaultMinInteractions = 13;

// Per user: interactions sorted by (timestamp, item id); the last kQuerySize
// become the query, the most recent support_cap of the rest become the
// support. Users with fewer than min_interactions are dropped and counted.
TaskSet build_tasks(const RawDataset& raw, const EncodedDataset& encoded, const SplitSpec& split,
                    int support_cap = kDefaultSupportCap,
                    int min_interactions = kDefaultMinInteractions);

}  // namespace clover
