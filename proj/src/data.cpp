#include "clover/data.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace clover {

namespace {

namespace fs = std::filesystem;

const std::array<const char*, 19> kMl100kGenres = {
    "unknown",  "Action",    "Adventure", "Animation", "Children's", "Comedy",  "Crime",
    "Documentary", "Drama",  "Fantasy",   "Film-Noir", "Horror",     "Musical", "Mystery",
    "Romance",  "Sci-Fi",    "Thriller",  "War",       "Western"};

// MovieLens age bands; labels sort in band order.
const std::array<std::pair<int, const char*>, 7> kAgeBands = {{
    {1, "01"}, {18, "18"}, {25, "25"}, {35, "35"}, {45, "45"}, {50, "50"}, {56, "56"}}};

std::string age_band(int age) {
  const char* label = kAgeBands.front().second;
  for (const auto& [lo, name] : kAgeBands)
    if (age >= lo) label = name;
  return label;
}

std::string zip_bucket(const std::string& zip) {
  if (!zip.empty() && zip[0] >= '0' && zip[0] <= '9') return std::string(1, zip[0]);
  return "0";
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_char(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_seq(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return out;
}

// ';'-separated with optional double quotes, as in the BookCrossing dump
std::vector<std::string> split_csv(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_int(const std::string& s, int& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc{} && p == t.data() + t.size();
}

bool parse_i64(const std::string& s, int64_t& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc{} && p == t.data() + t.size();
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void check_reject_ratio(const std::string& file, size_t total, size_t rejected) {
  if (total > 0 && static_cast<double>(rejected) > 0.01 * static_cast<double>(total))
    throw ParseError(file + ": " + std::to_string(rejected) + " of " + std::to_string(total) +
                     " rows unparseable");
}

void finish_interactions(RawDataset& ds, const std::string& ratings_file, size_t total_rows,
                         size_t parse_rejected) {
  std::set<int> user_ids, item_ids;
  for (const auto& u : ds.users) user_ids.insert(u.id);
  for (const auto& i : ds.items) item_ids.insert(i.id);

  size_t rejected = parse_rejected;
  std::vector<Interaction> kept;
  kept.reserve(ds.interactions.size());
  for (const Interaction& x : ds.interactions) {
    if (user_ids.count(x.user_id) && item_ids.count(x.item_id)) {
      kept.push_back(x);
    } else {
      ++rejected;
    }
  }
  ds.interactions = std::move(kept);
  ds.rejected_rows += static_cast<int>(rejected);
  check_reject_ratio(ratings_file, total_rows, rejected);
  if (ds.interactions.empty())
    ds.warnings.push_back(ratings_file + ": no interactions loaded");
}

RawDataset load_ml100k(const fs::path& dir) {
  RawDataset ds;
  ds.schema = Schema::ml100k;
  ds.min_rating = 1;
  ds.max_rating = 5;

  size_t user_rejected = 0;
  const auto user_lines = read_lines(dir / "u.user");
  for (const std::string& line : user_lines) {
    const auto f = split_char(line, '|');
    int id = 0, age = 0;
    if (f.size() != 5 || !parse_int(f[0], id) || !parse_int(f[1], age)) {
      ++user_rejected;
      continue;
    }
    RawRecord u;
    u.id = id;
    u.contents = {{"age", {trim(f[1])}},
                  {"gender", {trim(f[2])}},
                  {"occupation", {trim(f[3])}},
                  {"zip", {trim(f[4])}}};
    ds.users.push_back(std::move(u));
  }
  ds.rejected_rows += static_cast<int>(user_rejected);
  check_reject_ratio("u.user", user_lines.size(), user_rejected);

  size_t item_rejected = 0;
  const auto item_lines = read_lines(dir / "u.item");
  for (const std::string& line : item_lines) {
    const auto f = split_char(line, '|');
    int id = 0;
    if (f.size() != 5 + kMl100kGenres.size() || !parse_int(f[0], id)) {
      ++item_rejected;
      continue;
    }
    RawRecord it;
    it.id = id;
    std::string year = "unknown";
    const std::string date = trim(f[2]);
    if (!date.empty()) {
      const size_t dash = date.rfind('-');
      int y = 0;
      if (dash != std::string::npos && parse_int(date.substr(dash + 1), y)) year = std::to_string(y);
    }
    std::vector<std::string> genres;
    bool ok = true;
    for (size_t g = 0; g < kMl100kGenres.size(); ++g) {
      int flag = 0;
      if (!parse_int(f[5 + g], flag) || flag < 0 || flag > 1) {
        ok = false;
        break;
      }
      if (flag == 1) genres.emplace_back(kMl100kGenres[g]);
    }
    if (!ok || genres.empty()) {
      ++item_rejected;
      continue;
    }
    it.contents = {{"genre", std::move(genres)}, {"year", {year}}};
    ds.items.push_back(std::move(it));
  }
  ds.rejected_rows += static_cast<int>(item_rejected);
  check_reject_ratio("u.item", item_lines.size(), item_rejected);

  size_t rating_rejected = 0;
  const auto rating_lines = read_lines(dir / "u.data");
  for (const std::string& line : rating_lines) {
    const auto f = split_char(line, '\t');
    Interaction x;
    if (f.size() != 4 || !parse_int(f[0], x.user_id) || !parse_int(f[1], x.item_id) ||
        !parse_int(f[2], x.rating) || !parse_i64(f[3], x.timestamp) || x.rating < ds.min_rating ||
        x.rating > ds.max_rating) {
      ++rating_rejected;
      continue;
    }
    ds.interactions.push_back(x);
  }
  finish_interactions(ds, "u.data", rating_lines.size(), rating_rejected);
  return ds;
}

RawDataset load_ml1m(const fs::path& dir) {
  RawDataset ds;
  ds.schema = Schema::ml1m;
  ds.min_rating = 1;
  ds.max_rating = 5;

  size_t user_rejected = 0;
  const auto user_lines = read_lines(dir / "users.dat");
  for (const std::string& line : user_lines) {
    const auto f = split_seq(line, "::");
    int id = 0, age = 0;
    if (f.size() != 5 || !parse_int(f[0], id) || !parse_int(f[2], age)) {
      ++user_rejected;
      continue;
    }
    RawRecord u;
    u.id = id;
    u.contents = {{"age", {trim(f[2])}},
                  {"gender", {trim(f[1])}},
                  {"occupation", {trim(f[3])}},
                  {"zip", {trim(f[4])}}};
    ds.users.push_back(std::move(u));
  }
  ds.rejected_rows += static_cast<int>(user_rejected);
  check_reject_ratio("users.dat", user_lines.size(), user_rejected);

  size_t item_rejected = 0;
  const auto item_lines = read_lines(dir / "movies.dat");
  for (const std::string& line : item_lines) {
    const auto f = split_seq(line, "::");
    int id = 0;
    if (f.size() != 3 || !parse_int(f[0], id)) {
      ++item_rejected;
      continue;
    }
    RawRecord it;
    it.id = id;
    std::string year = "unknown";
    const std::string title = trim(f[1]);
    const size_t close = title.rfind(')');
    const size_t open = title.rfind('(');
    if (open != std::string::npos && close == title.size() - 1 && close > open) {
      int y = 0;
      if (parse_int(title.substr(open + 1, close - open - 1), y)) year = std::to_string(y);
    }
    std::vector<std::string> genres;
    for (const std::string& g : split_char(f[2], '|')) {
      const std::string name = trim(g);
      if (!name.empty()) genres.push_back(name);
    }
    if (genres.empty()) {
      ++item_rejected;
      continue;
    }
    it.contents = {{"genre", std::move(genres)}, {"year", {year}}};
    ds.items.push_back(std::move(it));
  }
  ds.rejected_rows += static_cast<int>(item_rejected);
  check_reject_ratio("movies.dat", item_lines.size(), item_rejected);

  size_t rating_rejected = 0;
  const auto rating_lines = read_lines(dir / "ratings.dat");
  for (const std::string& line : rating_lines) {
    const auto f = split_seq(line, "::");
    Interaction x;
    if (f.size() != 4 || !parse_int(f[0], x.user_id) || !parse_int(f[1], x.item_id) ||
        !parse_int(f[2], x.rating) || !parse_i64(f[3], x.timestamp) || x.rating < ds.min_rating ||
        x.rating > ds.max_rating) {
      ++rating_rejected;
      continue;
    }
    ds.interactions.push_back(x);
  }
  finish_interactions(ds, "ratings.dat", rating_lines.size(), rating_rejected);
  return ds;
}

bool looks_like_header(const std::string& line) {
  return line.find("User-ID") != std::string::npos || line.find("ISBN") != std::string::npos;
}

RawDataset load_bookcrossing(const fs::path& dir) {
  RawDataset ds;
  ds.schema = Schema::bookcrossing;
  ds.min_rating = 1;
  ds.max_rating = 10;

  size_t user_rejected = 0;
  const auto user_lines = read_lines(dir / "BX-Users.csv");
  for (const std::string& line : user_lines) {
    if (looks_like_header(line)) continue;
    const auto f = split_csv(line, ';');
    int id = 0;
    if (f.size() < 3 || !parse_int(f[0], id)) {
      ++user_rejected;
      continue;
    }
    std::string country = "unknown";
    const auto parts = split_char(f[1], ',');
    if (!parts.empty() && !trim(parts.back()).empty()) country = trim(parts.back());
    RawRecord u;
    u.id = id;
    u.contents = {{"age", {trim(f[2])}}, {"location", {country}}};
    ds.users.push_back(std::move(u));
  }
  ds.rejected_rows += static_cast<int>(user_rejected);
  check_reject_ratio("BX-Users.csv", user_lines.size(), user_rejected);

  // ISBNs mapped to dense integer ids in file order
  std::unordered_map<std::string, int> isbn_to_id;
  size_t item_rejected = 0;
  const auto item_lines = read_lines(dir / "BX-Books.csv");
  for (const std::string& line : item_lines) {
    if (looks_like_header(line)) continue;
    const auto f = split_csv(line, ';');
    if (f.size() < 5 || trim(f[0]).empty()) {
      ++item_rejected;
      continue;
    }
    const std::string isbn = trim(f[0]);
    if (isbn_to_id.count(isbn)) {
      ++item_rejected;
      continue;
    }
    const int id = static_cast<int>(isbn_to_id.size()) + 1;
    isbn_to_id.emplace(isbn, id);
    int y = 0;
    const std::string year = parse_int(f[3], y) && y > 0 ? std::to_string(y) : "unknown";
    RawRecord it;
    it.id = id;
    it.contents = {{"author", {trim(f[2]).empty() ? "unknown" : trim(f[2])}},
                   {"publisher", {trim(f[4]).empty() ? "unknown" : trim(f[4])}},
                   {"year", {year}}};
    ds.items.push_back(std::move(it));
  }
  ds.rejected_rows += static_cast<int>(item_rejected);
  check_reject_ratio("BX-Books.csv", item_lines.size(), item_rejected);

  size_t rating_rejected = 0;
  size_t rating_rows = 0;
  const auto rating_lines = read_lines(dir / "BX-Book-Ratings.csv");
  for (const std::string& line : rating_lines) {
    if (looks_like_header(line)) continue;
    ++rating_rows;
    const auto f = split_csv(line, ';');
    Interaction x;
    if (f.size() != 3 || !parse_int(f[0], x.user_id) || !parse_int(f[2], x.rating) ||
        x.rating < ds.min_rating || x.rating > ds.max_rating) {
      ++rating_rejected;
      continue;
    }
    const auto it = isbn_to_id.find(trim(f[1]));
    if (it == isbn_to_id.end()) {
      ++rating_rejected;
      continue;
    }
    x.item_id = it->second;
    x.timestamp = static_cast<int64_t>(ds.interactions.size());  // dump carries no timestamps
    ds.interactions.push_back(x);
  }
  finish_interactions(ds, "BX-Book-Ratings.csv", rating_rows, rating_rejected);
  return ds;
}

}  // namespace

Schema schema_from_string(const std::string& s) {
  if (s == "ml100k") return Schema::ml100k;
  if (s == "ml1m") return Schema::ml1m;
  if (s == "bookcrossing") return Schema::bookcrossing;
  throw ConfigError("unknown schema: " + s);
}

std::string schema_to_string(Schema s) {
  switch (s) {
    case Schema::ml100k: return "ml100k";
    case Schema::ml1m: return "ml1m";
    case Schema::bookcrossing: return "bookcrossing";
  }
  return "?";
}

const std::vector<std::string>* RawRecord::find(const std::string& content) const {
  for (const auto& [name, values] : contents)
    if (name == content) return &values;
  return nullptr;
}

RawDataset load_movielens(const std::string& directory, Schema schema) {
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + directory);
  switch (schema) {
    case Schema::ml100k: return load_ml100k(dir);
    case Schema::ml1m: return load_ml1m(dir);
    case Schema::bookcrossing: return load_bookcrossing(dir);
  }
  throw ConfigError("unknown schema");
}

void write_ml100k(const RawDataset& raw, const std::string& directory) {
  const fs::path dir(directory);
  std::error_code ec;
  fs::create_directories(dir, ec);

  std::ofstream data(dir / "u.data");
  if (!data) throw IoError("cannot write " + (dir / "u.data").string());
  for (const Interaction& x : raw.interactions)
    data << x.user_id << '\t' << x.item_id << '\t' << x.rating << '\t' << x.timestamp << '\n';

  std::ofstream users(dir / "u.user");
  if (!users) throw IoError("cannot write " + (dir / "u.user").string());
  for (const RawRecord& u : raw.users) {
    const auto* age = u.find("age");
    const auto* gender = u.find("gender");
    const auto* occ = u.find("occupation");
    const auto* zip = u.find("zip");
    if (!age || !gender || !occ || !zip)
      throw ContractError("write_ml100k: user record lacks ml100k contents");
    users << u.id << '|' << age->front() << '|' << gender->front() << '|' << occ->front() << '|'
          << zip->front() << '\n';
  }

  std::ofstream items(dir / "u.item");
  if (!items) throw IoError("cannot write " + (dir / "u.item").string());
  for (const RawRecord& it : raw.items) {
    const auto* year = it.find("year");
    const auto* genre = it.find("genre");
    if (!year || !genre) throw ContractError("write_ml100k: item record lacks ml100k contents");
    items << it.id << "|item " << it.id << '|';
    if (year->front() != "unknown") items << "01-Jan-" << year->front();
    items << "||";
    for (const char* name : kMl100kGenres) {
      const bool flag = std::find(genre->begin(), genre->end(), name) != genre->end();
      items << '|' << (flag ? 1 : 0);
    }
    items << '\n';
  }
}

namespace {
std::atomic<uint64_t> g_sensitive_label_reads{0};
}

int EncodedProfile::sensitive_label() const {
  if (sensitive_label_ < 0) throw ContractError("profile has no sensitive label");
  g_sensitive_label_reads.fetch_add(1, std::memory_order_relaxed);
  return sensitive_label_;
}

uint64_t EncodedProfile::sensitive_label_reads() {
  return g_sensitive_label_reads.load(std::memory_order_relaxed);
}

EncodedProfile EncodedProfile::flip_sensitive() const {
  if (sensitive_block < 0) throw ContractError("profile has no sensitive block");
  const FeatureBlock& blk = blocks[sensitive_block];
  if (blk.cardinality != 2 || blk.active.size() != 1)
    throw ConfigError("flip_sensitive requires a binary sensitive attribute");
  EncodedProfile flipped = *this;
  flipped.blocks[sensitive_block].active = {blk.active[0] == 0 ? 1 : 0};
  flipped.sensitive_label_ = sensitive_label_;  // label describes the real user
  return flipped;
}

std::vector<double> FeatureBlock::to_dense() const {
  std::vector<double> v(cardinality, 0.0);
  for (int i : active) v[i] = 1.0;
  return v;
}

namespace {

struct ContentVocab {
  std::string name;
  std::vector<std::string> values;  // sorted
  bool multi = false;

  int index_of(const std::string& v) const {
    const auto it = std::lower_bound(values.begin(), values.end(), v);
    if (it == values.end() || *it != v) return -1;
    return static_cast<int>(it - values.begin());
  }
};

// Schema-aware value rewrite applied before vocabulary construction.
struct EncodePolicy {
  Schema schema;
  int bx_age_median_low = -1;  // only set for bookcrossing

  std::vector<std::string> transform(const std::string& content,
                                     const std::vector<std::string>& values, bool& drop_user) const {
    drop_user = false;
    if (content == "age") {
      int age = 0;
      if (!parse_int(values.front(), age) || age <= 0) {
        drop_user = true;
        return {};
      }
      if (schema == Schema::bookcrossing) return {age <= bx_age_median_low ? "young" : "old"};
      return {age_band(age)};
    }
    if (content == "zip") return {zip_bucket(values.front())};
    return values;
  }

  // zip and age have a fixed category space; everything else is data-driven
  std::vector<std::string> fixed_vocab(const std::string& content) const {
    if (content == "zip") {
      std::vector<std::string> v;
      for (char c = '0'; c <= '9'; ++c) v.emplace_back(1, c);
      return v;
    }
    if (content == "age") {
      if (schema == Schema::bookcrossing) return {"old", "young"};
      std::vector<std::string> v;
      for (const auto& [lo, name] : kAgeBands) v.emplace_back(name);
      std::sort(v.begin(), v.end());
      return v;
    }
    return {};
  }
};

std::vector<EncodedProfile> encode_records(const std::vector<RawRecord>& records,
                                           const EncodePolicy& policy,
                                           const std::string& sensitive_content,
                                           std::vector<BlockSpec>& block_specs,
                                           std::vector<int>& kept_indices, int& skipped) {
  // Pass 1: transformed values per record, content name -> vocabulary
  std::vector<std::vector<std::pair<std::string, std::vector<std::string>>>> transformed(
      records.size());
  std::vector<bool> dropped(records.size(), false);
  std::map<std::string, std::set<std::string>> observed;
  std::map<std::string, bool> multi;
  for (size_t r = 0; r < records.size(); ++r) {
    for (const auto& [name, values] : records[r].contents) {
      bool drop = false;
      std::vector<std::string> tv = policy.transform(name, values, drop);
      if (drop) {
        dropped[r] = true;
        break;
      }
      std::set<std::string> uniq(tv.begin(), tv.end());
      multi[name] = multi[name] || uniq.size() > 1;
      for (const auto& v : uniq) observed[name].insert(v);
      transformed[r].emplace_back(name, std::vector<std::string>(uniq.begin(), uniq.end()));
    }
  }

  std::vector<ContentVocab> vocabs;
  for (const auto& [name, values] : observed) {
    ContentVocab vb;
    vb.name = name;
    vb.values = policy.fixed_vocab(name);
    if (vb.values.empty()) vb.values.assign(values.begin(), values.end());
    vb.multi = multi[name];
    vocabs.push_back(std::move(vb));
  }

  block_specs.clear();
  int sensitive_idx = -1;
  for (size_t b = 0; b < vocabs.size(); ++b) {
    block_specs.push_back({vocabs[b].name, static_cast<int>(vocabs[b].values.size())});
    if (vocabs[b].name == sensitive_content) sensitive_idx = static_cast<int>(b);
  }
  if (!sensitive_content.empty() && sensitive_idx < 0)
    throw ConfigError("sensitive content not found: " + sensitive_content);
  if (sensitive_idx >= 0 && vocabs[sensitive_idx].values.size() < 2)
    throw ConfigError("sensitive content has fewer than 2 observed values");

  // Pass 2: profiles
  std::vector<EncodedProfile> profiles;
  kept_indices.clear();
  skipped = 0;
  for (size_t r = 0; r < records.size(); ++r) {
    if (dropped[r]) {
      ++skipped;
      continue;
    }
    EncodedProfile p;
    p.blocks.reserve(vocabs.size());
    bool ok = true;
    for (size_t b = 0; b < vocabs.size(); ++b) {
      const ContentVocab& vb = vocabs[b];
      FeatureBlock blk;
      blk.content = vb.name;
      blk.cardinality = static_cast<int>(vb.values.size());
      const std::vector<std::string>* values = nullptr;
      for (const auto& [name, tv] : transformed[r])
        if (name == vb.name) values = &tv;
      if (!values || values->empty()) {
        ok = false;
        break;
      }
      for (const auto& v : *values) {
        const int idx = vb.index_of(v);
        if (idx < 0) {
          ok = false;
          break;
        }
        blk.active.push_back(idx);
      }
      if (!ok) break;
      std::sort(blk.active.begin(), blk.active.end());
      p.blocks.push_back(std::move(blk));
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    if (sensitive_idx >= 0) {
      p.sensitive_block = sensitive_idx;
      p.set_sensitive_label(p.blocks[sensitive_idx].active.front());
    }
    profiles.push_back(std::move(p));
    kept_indices.push_back(static_cast<int>(r));
  }
  return profiles;
}

}  // namespace

EncodedDataset encode_dataset(const RawDataset& raw, const std::string& sensitive_content) {
  EncodePolicy policy{raw.schema, -1};
  if (raw.schema == Schema::bookcrossing) {
    std::vector<int> ages;
    for (const RawRecord& u : raw.users) {
      const auto* v = u.find("age");
      int age = 0;
      if (v && parse_int(v->front(), age) && age > 0) ages.push_back(age);
    }
    if (ages.empty()) throw ConfigError("bookcrossing: no parseable ages");
    std::sort(ages.begin(), ages.end());
    policy.bx_age_median_low = ages[(ages.size() - 1) / 2];
  }

  EncodedDataset out;
  out.sensitive_content = sensitive_content;
  out.min_rating = raw.min_rating;
  out.n_rating_levels = raw.max_rating - raw.min_rating + 1;

  std::vector<int> kept;
  out.users = encode_records(raw.users, policy, sensitive_content, out.user_blocks, kept,
                             out.skipped_users);
  for (int r : kept) {
    out.user_index.emplace(raw.users[r].id, static_cast<int>(out.user_ids.size()));
    out.user_ids.push_back(raw.users[r].id);
  }

  int skipped_items = 0;
  out.items = encode_records(raw.items, policy, "", out.item_blocks, kept, skipped_items);
  for (int r : kept) {
    out.item_index.emplace(raw.items[r].id, static_cast<int>(out.item_ids.size()));
    out.item_ids.push_back(raw.items[r].id);
  }

  for (const auto& spec : out.user_blocks)
    if (spec.content == sensitive_content) out.sensitive_classes = spec.cardinality;
  return out;
}

SplitSpec split_users(std::span<const int> user_ids, double train_ratio, double valid_ratio,
                      double test_ratio, uint64_t seed) {
  if (std::abs(train_ratio + valid_ratio + test_ratio - 1.0) > 1e-9)
    throw ContractError("split ratios must sum to 1");
  std::vector<int> ids(user_ids.begin(), user_ids.end());
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, 101));
  rng.shuffle(ids);

  const size_t n = ids.size();
  const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * train_ratio));
  const size_t n_valid = static_cast<size_t>(std::floor(static_cast<double>(n) * valid_ratio));

  SplitSpec split;
  split.seed = seed;
  split.train_ids.assign(ids.begin(), ids.begin() + n_train);
  split.valid_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  split.test_ids.assign(ids.begin() + n_train + n_valid, ids.end());
  return split;
}

namespace {

std::vector<UserTask> tasks_for_ids(const std::vector<int>& ids,
                                    const std::unordered_map<int, std::vector<RatedItem>>& by_user,
                                    const EncodedDataset& encoded, int support_cap,
                                    int min_interactions, int& dropped) {
  std::vector<int> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());

  std::vector<UserTask> tasks;
  for (int uid : sorted_ids) {
    const auto mit = by_user.find(uid);
    const int count = mit == by_user.end() ? 0 : static_cast<int>(mit->second.size());
    if (count < min_interactions) {
      ++dropped;
      continue;
    }
    std::vector<RatedItem> xs = mit->second;
    std::sort(xs.begin(), xs.end(), [&](const RatedItem& a, const RatedItem& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return encoded.item_ids[a.item_idx] < encoded.item_ids[b.item_idx];
    });

    UserTask t;
    t.user_id = uid;
    t.user_idx = encoded.user_index.at(uid);
    t.query.assign(xs.end() - kQuerySize, xs.end());
    const int rest = count - kQuerySize;
    const int keep = std::min(rest, support_cap);
    t.support.assign(xs.begin() + (rest - keep), xs.begin() + rest);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace

TaskSet build_tasks(const RawDataset& raw, const EncodedDataset& encoded, const SplitSpec& split,
                    int support_cap, int min_interactions) {
  if (min_interactions < kQuerySize + 3)
    throw ConfigError("min_interactions must be at least " + std::to_string(kQuerySize + 3));
  if (support_cap < 3) throw ConfigError("support_cap must be at least 3");

  std::unordered_map<int, std::vector<RatedItem>> by_user;
  for (const Interaction& x : raw.interactions) {
    const auto uit = encoded.user_index.find(x.user_id);
    const auto iit = encoded.item_index.find(x.item_id);
    if (uit == encoded.user_index.end() || iit == encoded.item_index.end()) continue;
    by_user[x.user_id].push_back({iit->second, x.rating, x.timestamp});
  }

  TaskSet ts;
  ts.train = tasks_for_ids(split.train_ids, by_user, encoded, support_cap, min_interactions,
                           ts.dropped_users);
  ts.valid = tasks_for_ids(split.valid_ids, by_user, encoded, support_cap, min_interactions,
                           ts.dropped_users);
  ts.test = tasks_for_ids(split.test_ids, by_user, encoded, support_cap, min_interactions,
                          ts.dropped_users);
  return ts;
}

}  // namespace clover
