#include <fstream>
#include <sstream>
#include <stdexcept>

#include "imprg/harness.hpp"

namespace imprg::harness {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    parts.push_back(trim(item));
  }
  return parts;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw std::invalid_argument("config key repeated: " + key);
    }
    cfg.entries_[key] = value;
    cfg.consumed_[key] = false;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

const std::string* ConfigFile::lookup(const std::string& key) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  consumed_[key] = true;
  return &it->second;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) {
  const std::string* v = lookup(key);
  return v != nullptr ? *v : fallback;
}

std::string ConfigFile::require_string(const std::string& key) {
  const std::string* v = lookup(key);
  if (v == nullptr) {
    throw std::invalid_argument("config key missing: " + key);
  }
  return *v;
}

std::int64_t ConfigFile::get_int(const std::string& key, std::int64_t fallback) {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  try {
    std::size_t pos = 0;
    const std::int64_t out = std::stoll(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": not an integer: " + *v);
  }
}

double ConfigFile::get_real(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  try {
    std::size_t pos = 0;
    const double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": not a number: " + *v);
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw std::invalid_argument("config key " + key + ": not a bool: " + *v);
}

std::optional<double> ConfigFile::get_optional_real(const std::string& key) {
  const std::string* v = lookup(key);
  if (v == nullptr) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": not a number: " + *v);
  }
}

std::vector<int> ConfigFile::get_int_list(const std::string& key,
                                          const std::vector<int>& fallback) {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  std::vector<int> out;
  for (const std::string& part : split_csv(*v)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(part, &pos));
      if (pos != part.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key +
                                  ": not an integer list: " + *v);
    }
  }
  return out;
}

std::vector<double> ConfigFile::get_real_list(
    const std::string& key, const std::vector<double>& fallback) {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  std::vector<double> out;
  for (const std::string& part : split_csv(*v)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(part, &pos));
      if (pos != part.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key +
                                  ": not a number list: " + *v);
    }
  }
  return out;
}

void ConfigFile::reject_unknown_keys() const {
  std::string unknown;
  for (const auto& [key, used] : consumed_) {
    if (!used) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
  }
  if (!unknown.empty()) {
    throw std::invalid_argument("unknown config keys: " + unknown);
  }
}

void ExperimentConfig::validate() const {
  net.validate();
  task.validate();
  imp.validate();
  if (net.output_dim != task.arity()) {
    throw std::invalid_argument("net output dim does not match task arity");
  }
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (imp.train.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (out_dir.empty()) throw std::invalid_argument("out_dir must be set");
  if (!(analysis.ticket_tolerance >= 1.0)) {
    throw std::invalid_argument("ticket tolerance must be >= 1");
  }
  if (!(analysis.region_tolerance > 1.0)) {
    throw std::invalid_argument("region tolerance must be > 1");
  }
  if (analysis.region_d_l.has_value() != analysis.region_d_c.has_value()) {
    throw std::invalid_argument(
        "manual region override needs both analysis.region_dl and analysis.region_dc");
  }
}

ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    std::optional<std::uint64_t> seed_override) {
  ConfigFile file = ConfigFile::parse_file(path);
  ExperimentConfig cfg;

  const std::string task_name = file.require_string("task");
  const hnn_tasks::TaskId task_id = hnn_tasks::parse_task(task_name);
  cfg.task = task_id == hnn_tasks::TaskId::kNlOscillator
                 ? hnn_tasks::make_nl_task()
                 : hnn_tasks::make_hh_task();
  cfg.task.t0 = file.get_real("task.t0", cfg.task.t0);
  cfg.task.t_max = file.get_real("task.t_max", cfg.task.t_max);
  cfg.task.ic_constraint = file.get_bool("task.ic_constraint",
                                         cfg.task.ic_constraint);
  {
    std::vector<double> ic(cfg.task.initial_conditions.begin(),
                           cfg.task.initial_conditions.begin() +
                               cfg.task.arity());
    ic = file.get_real_list("task.ic", ic);
    if (static_cast<int>(ic.size()) != cfg.task.arity()) {
      throw std::invalid_argument("task.ic arity mismatch");
    }
    cfg.task.initial_conditions = {0.0, 0.0, 0.0, 0.0};
    std::copy(ic.begin(), ic.end(), cfg.task.initial_conditions.begin());
  }

  cfg.net.input_dim = 1;
  cfg.net.hidden_dims = file.get_int_list("net.hidden", {50, 50});
  cfg.net.output_dim = cfg.task.arity();
  cfg.net.activation =
      nn_core::parse_activation(file.get_string("net.activation", "tanh"));

  cfg.imp.x = file.get_real("imp.x", 0.01);
  cfg.imp.iterations = static_cast<int>(file.get_int("imp.iterations", 0));
  cfg.imp.scope = imp::PruneScope::parse(file.get_string("imp.scope", "full"));
  cfg.imp.train.epochs = static_cast<int>(file.get_int("train.epochs", 0));
  cfg.imp.train.lr = file.get_real("train.lr", cfg.imp.train.lr);
  cfg.imp.train.k_points =
      static_cast<int>(file.get_int("train.k_points", cfg.imp.train.k_points));
  cfg.imp.train.divergence_threshold = file.get_real(
      "train.divergence_threshold", cfg.imp.train.divergence_threshold);
  cfg.imp.train.backend =
      kernels::parse_backend(file.get_string("train.backend", "auto").c_str());

  cfg.runs = static_cast<int>(file.get_int("runs", 1));
  cfg.base_seed = static_cast<std::uint64_t>(file.get_int("seed", 1));
  if (seed_override.has_value()) {
    cfg.base_seed = *seed_override;
  }
  cfg.imp.seed = cfg.base_seed;
  cfg.out_dir = file.require_string("out_dir");

  cfg.analysis.power_law = file.get_bool("analysis.power_law", true);
  cfg.analysis.sigma = file.get_bool("analysis.sigma", true);
  cfg.analysis.tickets = file.get_bool("analysis.tickets", true);
  cfg.analysis.ticket_tolerance =
      file.get_real("analysis.ticket_tolerance", 1.0);
  cfg.analysis.region_tolerance =
      file.get_real("analysis.region_tolerance", 2.0);
  cfg.analysis.region_d_l = file.get_optional_real("analysis.region_dl");
  cfg.analysis.region_d_c = file.get_optional_real("analysis.region_dc");

  file.reject_unknown_keys();
  cfg.validate();
  return cfg;
}

}  // namespace imprg::harness
