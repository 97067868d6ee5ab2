#include "clover/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace clover {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": not an integer: " + v);
  return out;
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": not an integer: " + v);
  return out;
}

std::vector<double> to_grid(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(to_double(key, tok));
  }
  if (out.empty()) throw ConfigError(key + ": empty grid");
  return out;
}

std::string grid_str(const std::vector<double>& grid) {
  std::string s;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (i) s += ",";
    std::ostringstream os;
    os << grid[i];
    s += os.str();
  }
  return s;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset_dir = value;
  else if (key == "schema") { schema_from_string(value); schema = value; }
  else if (key == "sensitive") sensitive = value;
  else if (key == "out") out_dir = value;
  else if (key == "rating_mode") {
    if (value != "expected" && value != "argmax") throw ConfigError("rating_mode: expected|argmax");
    rating_mode = value;
  }
  else if (key == "support_cap") support_cap = to_int(key, value);
  else if (key == "min_interactions") min_interactions = to_int(key, value);
  else if (key == "train_ratio") train_ratio = to_double(key, value);
  else if (key == "valid_ratio") valid_ratio = to_double(key, value);
  else if (key == "test_ratio") test_ratio = to_double(key, value);
  else if (key == "keep_epoch_checkpoints") keep_epoch_checkpoints = to_int(key, value) != 0;
  else if (key == "mode") trainer.mode = train_mode_from_string(value);
  else if (key == "seed") trainer.seed = to_u64(key, value);
  else if (key == "epochs") trainer.epochs = to_int(key, value);
  else if (key == "batch_size") trainer.batch_size = to_int(key, value);
  else if (key == "inner_steps") trainer.inner_steps = to_int(key, value);
  else if (key == "inner_lr") trainer.inner_lr = to_double(key, value);
  else if (key == "outer_lr") trainer.outer_lr = to_double(key, value);
  else if (key == "lambda") trainer.lambda = to_double(key, value);
  else if (key == "gamma") trainer.gamma = to_double(key, value);
  else if (key == "grad_clip") trainer.grad_clip = to_double(key, value);
  else if (key == "embed_dim") trainer.model.embed_dim = to_int(key, value);
  else if (key == "decision_hidden") trainer.model.decision_hidden = to_int(key, value);
  else if (key == "decision_layers") trainer.model.decision_layers = to_int(key, value);
  else if (key == "disc_hidden") trainer.model.disc_hidden = to_int(key, value);
  else if (key == "disc_layers") trainer.model.disc_layers = to_int(key, value);
  else if (key == "lambda_grid") lambda_grid = to_grid(key, value);
  else if (key == "gamma_grid") gamma_grid = to_grid(key, value);
  else throw ConfigError("unknown config key: " + key);
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os << "dataset = " << dataset_dir << "\n";
  os << "schema = " << schema << "\n";
  os << "sensitive = " << sensitive << "\n";
  os << "out = " << out_dir << "\n";
  os << "rating_mode = " << rating_mode << "\n";
  os << "support_cap = " << support_cap << "\n";
  os << "min_interactions = " << min_interactions << "\n";
  os << "train_ratio = " << train_ratio << "\n";
  os << "valid_ratio = " << valid_ratio << "\n";
  os << "test_ratio = " << test_ratio << "\n";
  os << "keep_epoch_checkpoints = " << (keep_epoch_checkpoints ? 1 : 0) << "\n";
  os << "mode = " << train_mode_to_string(trainer.mode) << "\n";
  os << "seed = " << trainer.seed << "\n";
  os << "epochs = " << trainer.epochs << "\n";
  os << "batch_size = " << trainer.batch_size << "\n";
  os << "inner_steps = " << trainer.inner_steps << "\n";
  os << "inner_lr = " << trainer.inner_lr << "\n";
  os << "outer_lr = " << trainer.outer_lr << "\n";
  os << "lambda = " << trainer.lambda << "\n";
  os << "gamma = " << trainer.gamma << "\n";
  os << "grad_clip = " << trainer.grad_clip << "\n";
  os << "embed_dim = " << trainer.model.embed_dim << "\n";
  os << "decision_hidden = " << trainer.model.decision_hidden << "\n";
  os << "decision_layers = " << trainer.model.decision_layers << "\n";
  os << "disc_hidden = " << trainer.model.disc_hidden << "\n";
  os << "disc_layers = " << trainer.model.disc_layers << "\n";
  os << "lambda_grid = " << grid_str(lambda_grid) << "\n";
  os << "gamma_grid = " << grid_str(gamma_grid) << "\n";
  return os.str();
}

}  // namespace clover
