#include "run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace hinet::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw UsageError(key + ": expected a non-negative integer, got '" + value + "'");
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw UsageError(key + ": expected a number, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + value + "'");
}

std::string format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_run_key(RunConfig& rc, const std::string& key, const std::string& value) {
  if (key == "cohort") rc.cohort = value;
  else if (key == "out") rc.out = value;
  else if (key == "checkpoint") rc.checkpoint = value;
  else if (key == "input") rc.input = value;
  else if (key == "split") {
    if (value != "train" && value != "validation" && value != "test" && value != "all")
      throw UsageError("split: expected train, validation, test or all, got '" + value + "'");
    rc.split = value;
  } else if (key == "split_seed") rc.split_seed = to_unsigned(key, value);
  else if (key == "lambda_grid") {
    rc.lambda_grid.clear();
    if (value == "default") rc.lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    else
      for (const auto& item : split_list(value)) rc.lambda_grid.push_back(to_double(key, item));
  } else if (key == "max_epochs") rc.max_epochs = to_unsigned(key, value);
  else if (key == "patience") rc.patience = to_unsigned(key, value);
  else if (key == "surgeries_per_batch") rc.surgeries_per_batch = to_unsigned(key, value);
  else if (key == "micro_batch") rc.micro_batch = to_unsigned(key, value);
  else if (key == "max_batches_per_epoch") rc.max_batches_per_epoch = to_unsigned(key, value);
  else if (key == "learning_rate") rc.learning_rate = to_double(key, value);
  else if (key == "alarms_labeled_only") rc.alarms_labeled_only = to_bool(key, value);
  else if (key == "baseline") rc.baseline = to_bool(key, value);
  else if (key == "seeds") {
    rc.seeds.clear();
    for (const auto& item : split_list(value)) rc.seeds.push_back(to_unsigned(key, item));
    if (rc.seeds.empty()) throw UsageError("seeds: empty list");
  } else if (key == "variants") {
    rc.variants.clear();
    try {
      for (const auto& item : split_list(value)) rc.variants.push_back(parse_variant(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("variants: ") + e.what());
    }
    if (rc.variants.empty()) throw UsageError("variants: empty list");
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

}  // namespace

const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys{
      "cohort",      "out",        "checkpoint",          "input",      "split",
      "split_seed",  "lambda_grid", "max_epochs",         "patience",   "surgeries_per_batch",
      "micro_batch", "max_batches_per_epoch", "learning_rate", "alarms_labeled_only", "baseline",
      "seeds",       "variants"};
  return keys;
}

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{
      "outcome",      "variant", "observation_window", "prediction_horizon", "forecast_horizon", "persistent_minutes",
      "channels",     "spo2_channel", "memory_bases",  "filters",            "kernel_size",      "dilations",
      "fc_hidden",    "lambda",  "dropout",            "seed"};
  return keys;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(number) + " has no '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

RunConfig resolve(const KeyValues& file, const KeyValues& command_line) {
  KeyValues merged = file;
  for (const auto& [k, v] : command_line) merged[k] = v;

  RunConfig rc;
  Outcome outcome = Outcome::general;
  if (auto it = merged.find("outcome"); it != merged.end()) {
    try {
      outcome = parse_outcome(it->second);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  rc.model = HiNetConfig::defaults_for(outcome);
  const auto& mk = model_keys();
  for (const auto& [key, value] : merged) {
    if (std::find(mk.begin(), mk.end(), key) != mk.end()) {
      try {
        rc.model.set(key, value);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else {
      apply_run_key(rc, key, value);
    }
  }
  // The forecast horizon follows a changed prediction horizon unless given.
  if (merged.count("prediction_horizon") && !merged.count("forecast_horizon")) {
    const auto d = HiNetConfig::defaults_for(outcome);
    rc.model.forecast_horizon = rc.model.prediction_horizon + (d.forecast_horizon - d.prediction_horizon);
  }
  try {
    rc.model.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (rc.micro_batch == 0 || rc.surgeries_per_batch == 0) throw UsageError("batch sizes must be positive");
  if (!(rc.learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  return rc;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.max_epochs = max_epochs;
  o.patience = patience;
  o.surgeries_per_batch = surgeries_per_batch;
  o.micro_batch = micro_batch;
  o.max_batches_per_epoch = max_batches_per_epoch;
  o.adam.learning_rate = learning_rate;
  o.diagnostics_dir = out.empty() ? std::filesystem::path(".") : out;
  return o;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << model.to_text();
  os << "cohort=" << cohort.string() << '\n'
     << "out=" << out.string() << '\n'
     << "checkpoint=" << checkpoint.string() << '\n'
     << "input=" << input.string() << '\n'
     << "split=" << split << '\n'
     << "split_seed=" << split_seed << '\n'
     << "lambda_grid=";
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) os << (i ? "," : "") << format(lambda_grid[i]);
  os << '\n'
     << "max_epochs=" << max_epochs << '\n'
     << "patience=" << patience << '\n'
     << "surgeries_per_batch=" << surgeries_per_batch << '\n'
     << "micro_batch=" << micro_batch << '\n'
     << "max_batches_per_epoch=" << max_batches_per_epoch << '\n'
     << "learning_rate=" << format(learning_rate) << '\n'
     << "alarms_labeled_only=" << (alarms_labeled_only ? "true" : "false") << '\n'
     << "baseline=" << (baseline ? "true" : "false") << '\n'
     << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\nvariants=";
  for (std::size_t i = 0; i < variants.size(); ++i) os << (i ? "," : "") << to_string(variants[i]);
  os << '\n';
  return os.str();
}

}  // namespace hinet::cli
