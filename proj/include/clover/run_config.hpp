#pragma once

#include <string>
#include <vector>

#include "clover/synth.hpp"
#include "clover/trainer.hpp"

namespace clover {

inline constexpr const char* kVersion = "clover 0.1.0";

// Flat key=value run configuration. Files use one `key = value` pair per
// line with '#' comments; CLI flags override file values. The resolved form
// is written into every run directory before training starts.
struct RunConfig {
  std::string dataset_dir;
  std::string schema = "ml100k";
  std::string sensitive = "gender";
  std::string out_dir = "run";
  std::string rating_mode = "expected";  // or "argmax"
  int support_cap = kDefaultSupportCap;
  int min_interactions = kDefaultMinInteractions;
  double train_ratio = 0.7, valid_ratio = 0.1, test_ratio = 0.2;
  bool keep_epoch_checkpoints = false;
  TrainerConfig trainer;
  std::vector<double> lambda_grid{1e-2, 1e-1, 1.0, 5.0};
  std::vector<double> gamma_grid{1e-2, 1e-1, 1.0, 5.0};

  static RunConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  std::string resolved() const;
  bool argmax_mode() const { return rating_mode == "argmax"; }
};

}  // namespace clover
