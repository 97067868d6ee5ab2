#include "clover/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clover/rng.hpp"

namespace clover {

namespace {

const char* kGenreNames[19] = {
    "unknown",  "Action",    "Adventure", "Animation", "Children's", "Comedy",  "Crime",
    "Documentary", "Drama",  "Fantasy",   "Film-Noir", "Horror",     "Musical", "Mystery",
    "Romance",  "Sci-Fi",    "Thriller",  "War",       "Western"};

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 2 || n_items < 2) throw ConfigError("synth: need at least 2 users and items");
  if (ratings_per_user < kDefaultMinInteractions)
    throw ConfigError("synth: ratings_per_user below the pipeline floor of " +
                      std::to_string(kDefaultMinInteractions));
  if (ratings_per_user > n_items) throw ConfigError("synth: ratings_per_user exceeds n_items");
  if (bias_strength < 0.0 || bias_strength > 1.0) throw ConfigError("synth: bias_strength outside [0,1]");
  if (n_rating_levels < 2) throw ConfigError("synth: need >= 2 rating levels");
  if (latent_dim < 1 || latent_dim > 19) throw ConfigError("synth: latent_dim must be in [1,19]");
}

RawDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 11));

  RawDataset ds;
  ds.schema = Schema::ml100k;
  ds.min_rating = 1;
  ds.max_rating = cfg.n_rating_levels;

  const int k = cfg.latent_dim;
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));

  std::vector<double> bias_dir(k);
  double norm = 0.0;
  for (double& v : bias_dir) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : bias_dir) v /= norm;

  std::vector<std::vector<double>> taste(cfg.n_users, std::vector<double>(k));
  std::vector<int> attr(cfg.n_users);
  for (int u = 0; u < cfg.n_users; ++u) {
    attr[u] = u % 2;  // balanced
    for (double& v : taste[u]) v = rng.normal();

    RawRecord rec;
    rec.id = u + 1;
    rec.contents = {{"age", {std::to_string(18 + (u * 7) % 50)}},
                    {"gender", {attr[u] == 0 ? "F" : "M"}},
                    {"occupation", {"occ" + std::to_string(u % 5)}},
                    {"zip", {std::to_string(10000 + (u * 9973) % 90000)}}};
    ds.users.push_back(std::move(rec));
  }

  std::vector<std::vector<double>> latent(cfg.n_items, std::vector<double>(k));
  std::vector<double> item_bias_align(cfg.n_items);
  for (int i = 0; i < cfg.n_items; ++i) {
    double align = 0.0;
    for (int d = 0; d < k; ++d) {
      latent[i][d] = rng.normal();
      align += latent[i][d] * bias_dir[d];
    }
    item_bias_align[i] = align;

    // genres from the latent sign pattern
    std::vector<std::string> genres;
    int best = 0;
    for (int d = 0; d < k; ++d) {
      if (latent[i][d] > latent[i][best]) best = d;
      if (latent[i][d] > 0.0) genres.emplace_back(kGenreNames[d]);
    }
    if (genres.empty()) genres.emplace_back(kGenreNames[best]);

    RawRecord rec;
    rec.id = i + 1;
    rec.contents = {{"genre", std::move(genres)}, {"year", {std::to_string(1980 + i % 30)}}};
    ds.items.push_back(std::move(rec));
  }

  const double mid = (1.0 + static_cast<double>(cfg.n_rating_levels)) / 2.0;
  std::vector<int> pool(cfg.n_items);
  std::iota(pool.begin(), pool.end(), 0);
  for (int u = 0; u < cfg.n_users; ++u) {
    // partial Fisher-Yates: first ratings_per_user entries form the sample
    for (int j = 0; j < cfg.ratings_per_user; ++j) {
      const int pick = j + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n_items - j)));
      std::swap(pool[j], pool[pick]);
    }
    const double sign = attr[u] == 0 ? -1.0 : 1.0;
    for (int j = 0; j < cfg.ratings_per_user; ++j) {
      const int i = pool[j];
      double score = 0.0;
      for (int d = 0; d < k; ++d) score += taste[u][d] * latent[i][d];
      score *= inv_sqrt_k;  // ~N(0,1)
      score += cfg.bias_strength * sign * item_bias_align[i];  // align ~N(0,1), unit bias_dir
      score += 0.3 * rng.normal();

      const double scaled = mid + 1.1 * score;
      const int rating = std::clamp(static_cast<int>(std::lround(scaled)), 1, cfg.n_rating_levels);

      Interaction x;
      x.user_id = u + 1;
      x.item_id = i + 1;
      x.rating = rating;
      x.timestamp = 1000000 + static_cast<int64_t>(u) * 10000 + j;
      ds.interactions.push_back(x);
    }
  }
  return ds;
}

}  // namespace clover
