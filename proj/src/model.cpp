#include "clover/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace clover {

namespace {

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

DenseLayer make_layer(int out, int in, Rng& rng) {
  DenseLayer l;
  l.w = xavier({out, in}, in, out, rng);
  l.b = Tensor::zeros({out}, true);
  return l;
}

std::vector<DenseLayer> make_mlp(int in, int hidden, int n_hidden, int out, Rng& rng) {
  std::vector<DenseLayer> layers;
  int cur = in;
  for (int i = 0; i < n_hidden; ++i) {
    layers.push_back(make_layer(hidden, cur, rng));
    cur = hidden;
  }
  layers.push_back(make_layer(out, cur, rng));
  return layers;
}

Tensor onehot(int index, int n) {
  Tensor t = Tensor::zeros({n});
  t.values()[static_cast<size_t>(index)] = 1.0;
  return t;
}

void append(std::vector<Tensor>& out, const std::vector<DenseLayer>& layers) {
  for (const DenseLayer& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
}

std::vector<DenseLayer> clone_layers(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  out.reserve(layers.size());
  for (const DenseLayer& l : layers) out.push_back({l.w.clone(), l.b.clone()});
  return out;
}

}  // namespace

ModelParams ModelParams::init(const EncodedDataset& data, const ModelConfig& cfg, Rng& rng) {
  if (data.sensitive_classes < 2) throw ConfigError("model needs a sensitive attribute with >= 2 classes");
  if (data.n_rating_levels < 2) throw ConfigError("model needs >= 2 rating levels");

  ModelParams p;
  p.cfg = cfg;
  p.n_rating_levels = data.n_rating_levels;
  p.sensitive_classes = data.sensitive_classes;
  p.user_blocks = data.user_blocks;
  p.item_blocks = data.item_blocks;

  const int d = cfg.embed_dim;
  for (const BlockSpec& b : p.user_blocks) p.user_tables.push_back(xavier({d, b.cardinality}, b.cardinality, d, rng));
  for (const BlockSpec& b : p.item_blocks) p.item_tables.push_back(xavier({d, b.cardinality}, b.cardinality, d, rng));

  p.user_proj = make_layer(d, d * static_cast<int>(p.user_blocks.size()), rng);
  p.item_proj = make_layer(d, d * static_cast<int>(p.item_blocks.size()), rng);
  p.decision = make_mlp(2 * d, cfg.decision_hidden, cfg.decision_layers, p.n_rating_levels, rng);
  p.disc_repr = make_mlp(d + p.n_rating_levels, cfg.disc_hidden, cfg.disc_layers,
                         p.sensitive_classes, rng);
  p.disc_pred = make_mlp(2 * p.n_rating_levels + d, cfg.disc_hidden, cfg.disc_layers,
                         p.sensitive_classes, rng);
  return p;
}

std::vector<Tensor> ModelParams::rec_params() const {
  std::vector<Tensor> out;
  for (const Tensor& t : user_tables) out.push_back(t);
  for (const Tensor& t : item_tables) out.push_back(t);
  out.push_back(user_proj.w);
  out.push_back(user_proj.b);
  out.push_back(item_proj.w);
  out.push_back(item_proj.b);
  append(out, decision);
  return out;
}

std::vector<Tensor> ModelParams::rec_adaptable() const {
  std::vector<Tensor> out;
  out.push_back(user_proj.w);
  out.push_back(user_proj.b);
  out.push_back(item_proj.w);
  out.push_back(item_proj.b);
  append(out, decision);
  return out;
}

std::vector<Tensor> ModelParams::disc_params() const {
  std::vector<Tensor> out;
  append(out, disc_repr);
  append(out, disc_pred);
  return out;
}

std::vector<Tensor> ModelParams::all_params() const {
  std::vector<Tensor> out = rec_params();
  append(out, disc_repr);
  append(out, disc_pred);
  return out;
}

ModelParams ModelParams::clone_adapted() const {
  ModelParams p = *this;  // tables and metadata share storage
  p.user_proj = {user_proj.w.clone(), user_proj.b.clone()};
  p.item_proj = {item_proj.w.clone(), item_proj.b.clone()};
  p.decision = clone_layers(decision);
  p.disc_repr = clone_layers(disc_repr);
  p.disc_pred = clone_layers(disc_pred);
  return p;
}

ModelParams ModelParams::clone_full() const {
  ModelParams p = clone_adapted();
  p.user_tables.clear();
  p.item_tables.clear();
  for (const Tensor& t : user_tables) p.user_tables.push_back(t.clone());
  for (const Tensor& t : item_tables) p.item_tables.push_back(t.clone());
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < user_tables.size(); ++i)
    out.emplace_back("user_table." + user_blocks[i].content, user_tables[i]);
  for (size_t i = 0; i < item_tables.size(); ++i)
    out.emplace_back("item_table." + item_blocks[i].content, item_tables[i]);
  out.emplace_back("user_proj.w", user_proj.w);
  out.emplace_back("user_proj.b", user_proj.b);
  out.emplace_back("item_proj.w", item_proj.w);
  out.emplace_back("item_proj.b", item_proj.b);
  const auto add_mlp = [&out](const std::string& prefix, const std::vector<DenseLayer>& layers) {
    for (size_t i = 0; i < layers.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i) + ".w", layers[i].w);
      out.emplace_back(prefix + "." + std::to_string(i) + ".b", layers[i].b);
    }
  };
  add_mlp("decision", decision);
  add_mlp("disc_repr", disc_repr);
  add_mlp("disc_pred", disc_pred);
  return out;
}

namespace {

Tensor side_embed(Tape& tape, const EncodedProfile& profile, const std::vector<BlockSpec>& blocks,
                  const std::vector<Tensor>& tables, const DenseLayer& proj, const char* side) {
  if (profile.blocks.size() != blocks.size())
    throw ConfigError(std::string(side) + " profile has " + std::to_string(profile.blocks.size()) +
                      " blocks, model expects " + std::to_string(blocks.size()));
  std::vector<Tensor> parts;
  parts.reserve(blocks.size());
  for (size_t b = 0; b < blocks.size(); ++b) {
    const FeatureBlock& blk = profile.blocks[b];
    if (blk.content != blocks[b].content || blk.cardinality != blocks[b].cardinality)
      throw ConfigError(std::string(side) + " block " + blk.content + " does not match model layout");
    parts.push_back(embedding_mean(tape, tables[b], blk.active));
  }
  return relu(tape, affine(tape, proj, concat(tape, parts)));
}

}  // namespace

Tensor user_embed(Tape& tape, const EncodedProfile& profile, const ModelParams& params) {
  return side_embed(tape, profile, params.user_blocks, params.user_tables, params.user_proj, "user");
}

Tensor item_embed(Tape& tape, const EncodedProfile& profile, const ModelParams& params) {
  return side_embed(tape, profile, params.item_blocks, params.item_tables, params.item_proj, "item");
}

Tensor predict_logits(Tape& tape, const Tensor& e_u, const Tensor& e_i, const ModelParams& params) {
  const Tensor both[] = {e_u, e_i};
  return affine_relu_stack(tape, concat(tape, both), params.decision, /*final_linear=*/true);
}

PairForward forward_pair(Tape& tape, const EncodedProfile& user, const EncodedProfile& item,
                         const ModelParams& params) {
  PairForward f;
  f.e_u = user_embed(tape, user, params);
  f.e_i = item_embed(tape, item, params);
  f.logits = predict_logits(tape, f.e_u, f.e_i, params);
  return f;
}

double expected_rating(std::span<const double> logits, int min_rating) {
  const std::vector<double> p = softmax(logits);
  double r = 0.0;
  for (size_t c = 0; c < p.size(); ++c) r += p[c] * static_cast<double>(min_rating + static_cast<int>(c));
  return r;
}

int argmax_rating(std::span<const double> logits, int min_rating) {
  size_t best = 0;
  for (size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return min_rating + static_cast<int>(best);
}

LossBundle combined_loss(Tape& tape, const ModelParams& params, const EncodedProfile& user,
                         std::span<const RatedItem> pairs, const EncodedDataset& data,
                         const LossOptions& opts) {
  if (pairs.empty()) throw ContractError("combined_loss: no pairs");
  if (opts.lambda < 0.0 || opts.gamma < 0.0) throw ContractError("combined_loss: negative trade-off");

  const bool want_g = opts.want_disc_g;
  const bool want_h = opts.want_disc_h;

  Tensor e_u = user_embed(tape, user, params);
  Tensor e_u_for_g;
  int label = -1;
  if (want_g || want_h) label = user.sensitive_label();
  if (want_g) e_u_for_g = opts.detach_disc_inputs ? detach(e_u) : e_u;

  std::vector<Tensor> rec_losses, g_losses, h_losses;
  rec_losses.reserve(pairs.size());
  for (const RatedItem& pair : pairs) {
    const EncodedProfile& item = data.items.at(static_cast<size_t>(pair.item_idx));
    const int target = pair.rating - data.min_rating;
    if (target < 0 || target >= params.n_rating_levels)
      throw ContractError("rating outside declared range");

    Tensor e_i = item_embed(tape, item, params);
    Tensor logits = predict_logits(tape, e_u, e_i, params);
    rec_losses.push_back(softmax_cross_entropy(tape, logits, target));

    const Tensor y = onehot(target, params.n_rating_levels);
    if (want_g) {
      const Tensor gin[] = {e_u_for_g, y};
      Tensor glog = affine_relu_stack(tape, concat(tape, gin), params.disc_repr, true);
      g_losses.push_back(softmax_cross_entropy(tape, glog, label));
    }
    if (want_h) {
      const Tensor hin[] = {y, opts.detach_disc_inputs ? detach(logits) : logits,
                            opts.detach_disc_inputs ? detach(e_i) : e_i};
      Tensor hlog = affine_relu_stack(tape, concat(tape, hin), params.disc_pred, true);
      h_losses.push_back(softmax_cross_entropy(tape, hlog, label));
    }
  }

  LossBundle out;
  out.rec = mean_of(tape, rec_losses);
  out.disc_g = want_g ? mean_of(tape, g_losses) : Tensor::scalar(0.0);
  out.disc_h = want_h ? mean_of(tape, h_losses) : Tensor::scalar(0.0);

  out.total = out.rec;
  if (want_g) out.total = add_scaled(tape, out.total, 1.0, out.disc_g, -opts.lambda);
  if (want_h) out.total = add_scaled(tape, out.total, 1.0, out.disc_h, -opts.gamma);
  return out;
}

void blind_sensitive_content(ModelParams& params, const EncodedDataset& data) {
  bool found = false;
  for (size_t b = 0; b < params.user_blocks.size(); ++b) {
    if (params.user_blocks[b].content == data.sensitive_content) {
      std::fill(params.user_tables[b].values().begin(), params.user_tables[b].values().end(), 0.0);
      found = true;
    }
  }
  if (!found) throw ConfigError("sensitive content not present in model blocks");
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "clover-checkpoint";
  j["version"] = 1;
  j["embed_dim"] = params.cfg.embed_dim;
  j["decision_hidden"] = params.cfg.decision_hidden;
  j["decision_layers"] = params.cfg.decision_layers;
  j["disc_hidden"] = params.cfg.disc_hidden;
  j["disc_layers"] = params.cfg.disc_layers;
  j["n_rating_levels"] = params.n_rating_levels;
  j["sensitive_classes"] = params.sensitive_classes;
  const auto blocks_json = [](const std::vector<BlockSpec>& blocks) {
    nlohmann::json a = nlohmann::json::array();
    for (const BlockSpec& b : blocks) a.push_back({{"content", b.content}, {"cardinality", b.cardinality}});
    return a;
  };
  j["user_blocks"] = blocks_json(params.user_blocks);
  j["item_blocks"] = blocks_json(params.item_blocks);

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params.named_tensors()) {
    if (!all_finite(t.values())) throw ContractError("checkpoint tensor " + name + " is not finite");
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"values", t.values()}});
  }
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump();
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != std::string("clover-checkpoint"))
    throw ParseError("not a checkpoint file: " + path);

  ModelParams p;
  p.cfg.embed_dim = j.at("embed_dim").get<int>();
  p.cfg.decision_hidden = j.at("decision_hidden").get<int>();
  p.cfg.decision_layers = j.at("decision_layers").get<int>();
  p.cfg.disc_hidden = j.at("disc_hidden").get<int>();
  p.cfg.disc_layers = j.at("disc_layers").get<int>();
  p.n_rating_levels = j.at("n_rating_levels").get<int>();
  p.sensitive_classes = j.at("sensitive_classes").get<int>();
  for (const auto& b : j.at("user_blocks"))
    p.user_blocks.push_back({b.at("content").get<std::string>(), b.at("cardinality").get<int>()});
  for (const auto& b : j.at("item_blocks"))
    p.item_blocks.push_back({b.at("content").get<std::string>(), b.at("cardinality").get<int>()});

  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& tj : j.at("tensors")) {
    std::vector<int> shape = tj.at("shape").get<std::vector<int>>();
    std::vector<double> values = tj.at("values").get<std::vector<double>>();
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    if (!all_finite(t.values())) throw ParseError("checkpoint tensor is not finite");
    by_name.emplace(tj.at("name").get<std::string>(), std::move(t));
  }
  const auto take = [&by_name, &path](const std::string& name) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("checkpoint " + path + " missing tensor " + name);
    return it->second;
  };

  for (const BlockSpec& b : p.user_blocks) p.user_tables.push_back(take("user_table." + b.content));
  for (const BlockSpec& b : p.item_blocks) p.item_tables.push_back(take("item_table." + b.content));
  p.user_proj = {take("user_proj.w"), take("user_proj.b")};
  p.item_proj = {take("item_proj.w"), take("item_proj.b")};
  const auto take_mlp = [&take](const std::string& prefix, int n_hidden) {
    std::vector<DenseLayer> layers;
    for (int i = 0; i <= n_hidden; ++i)
      layers.push_back({take(prefix + "." + std::to_string(i) + ".w"),
                        take(prefix + "." + std::to_string(i) + ".b")});
    return layers;
  };
  p.decision = take_mlp("decision", p.cfg.decision_layers);
  p.disc_repr = take_mlp("disc_repr", p.cfg.disc_layers);
  p.disc_pred = take_mlp("disc_pred", p.cfg.disc_layers);

  // shape sanity against the declared layout
  for (size_t i = 0; i < p.user_tables.size(); ++i)
    if (p.user_tables[i].shape() != std::vector<int>{p.cfg.embed_dim, p.user_blocks[i].cardinality})
      throw ParseError("checkpoint user table shape mismatch: " + p.user_blocks[i].content);
  for (size_t i = 0; i < p.item_tables.size(); ++i)
    if (p.item_tables[i].shape() != std::vector<int>{p.cfg.embed_dim, p.item_blocks[i].cardinality})
      throw ParseError("checkpoint item table shape mismatch: " + p.item_blocks[i].content);
  return p;
}

}  // namespace clover
