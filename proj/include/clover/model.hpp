#pragma once

#include <span>
#include <string>
#include <vector>

#include "clover/data.hpp"
#include "clover/rng.hpp"
#include "clover/tensor.hpp"

namespace clover {

struct ModelConfig {
  int embed_dim = 64;
  int decision_hidden = 64;
  int decision_layers = 2;
  int disc_hidden = 64;
  int disc_layers = 2;
};

// Full parameter set. The recommender side holds one embedding table per
// content block, one projection layer per side, and the rating decision
// network. The adversarial side holds the representation discriminator
// (user embedding + rating one-hot -> sensitive class) and the prediction
// discriminator (rating one-hot + rating logits + item embedding -> class).
struct ModelParams {
  ModelConfig cfg;
  int n_rating_levels = 0;
  int sensitive_classes = 0;
  std::vector<BlockSpec> user_blocks, item_blocks;

  std::vector<Tensor> user_tables, item_tables;  // [embed_dim x cardinality]
  DenseLayer user_proj, item_proj;
  std::vector<DenseLayer> decision;
  std::vector<DenseLayer> disc_repr;  // g
  std::vector<DenseLayer> disc_pred;  // h

  static ModelParams init(const EncodedDataset& data, const ModelConfig& cfg, Rng& rng);

  std::vector<Tensor> rec_params() const;     // tables + projections + decision
  std::vector<Tensor> rec_adaptable() const;  // rec_params minus embedding tables
  std::vector<Tensor> disc_params() const;
  std::vector<Tensor> all_params() const;

  // Inner-loop copy: embedding tables stay shared (they only move in the
  // outer loop), every other tensor is deep-copied.
  ModelParams clone_adapted() const;
  ModelParams clone_full() const;

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

Tensor user_embed(Tape& tape, const EncodedProfile& profile, const ModelParams& params);
Tensor item_embed(Tape& tape, const EncodedProfile& profile, const ModelParams& params);
Tensor predict_logits(Tape& tape, const Tensor& e_u, const Tensor& e_i, const ModelParams& params);

struct PairForward {
  Tensor e_u, e_i, logits;
};

PairForward forward_pair(Tape& tape, const EncodedProfile& user, const EncodedProfile& item,
                         const ModelParams& params);

double expected_rating(std::span<const double> logits, int min_rating);
int argmax_rating(std::span<const double> logits, int min_rating);

struct LossOptions {
  double lambda = 1.0;
  double gamma = 0.1;
  bool want_disc_g = true;
  bool want_disc_h = true;
  // Inner-loop discriminator training reads the recommender activations as
  // constants; the outer loop (and the T2 ablations) backpropagates through
  // them.
  bool detach_disc_inputs = false;
};

struct LossBundle {
  Tensor rec;     // mean cross-entropy of rating prediction
  Tensor disc_g;  // zero constant when the g term is disabled
  Tensor disc_h;
  Tensor total;   // rec - lambda*disc_g - gamma*disc_h
};

LossBundle combined_loss(Tape& tape, const ModelParams& params, const EncodedProfile& user,
                         std::span<const RatedItem> pairs, const EncodedDataset& data,
                         const LossOptions& opts);

// Zeroes the user-side embedding table of the sensitive content. A model
// blinded this way is invariant to sensitive-attribute flips by construction.
void blind_sensitive_content(ModelParams& params, const EncodedDataset& data);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace clover
