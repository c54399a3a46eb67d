#include "dpcwt/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dpcwt/errors.hpp"

namespace dpcwt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) fail(path, "unknown key '" + item.key() + "'");
  }
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& need(const json& obj, const std::string& path, const char* key) {
  const json* v = find(obj, key);
  if (!v) fail(path, std::string("missing required key '") + key + "'");
  return *v;
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> as_double_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_double(e, path));
  return out;
}

SyntheticSiteConfig parse_site(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
  check_keys(v, path, {"name", "n", "feature_shift_scale", "feature_shift", "label_bias",
                       "positive_fraction"});
  SyntheticSiteConfig site;
  site.name = as_string(need(v, path, "name"), path + ".name");
  site.n = as_int(need(v, path, "n"), path + ".n");
  if (const json* s = find(v, "feature_shift_scale"))
    site.feature_shift_scale = as_double(*s, path + ".feature_shift_scale");
  if (const json* s = find(v, "feature_shift"))
    site.feature_shift = as_double_array(*s, path + ".feature_shift");
  if (const json* s = find(v, "label_bias")) site.label_bias = as_double(*s, path + ".label_bias");
  if (const json* s = find(v, "positive_fraction"))
    site.positive_fraction = as_double(*s, path + ".positive_fraction");
  return site;
}

DataConfig parse_data(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
  const std::string type = as_string(need(v, path, "type"), path + ".type");
  DataConfig data;
  if (type == "synthetic") {
    check_keys(v, path,
               {"type", "dimension", "weight_scale", "global_weights", "informative_features",
                "data_seed", "train_sites", "test_sites", "holdout_fraction",
                "top_variance_features"});
    SyntheticDataConfig syn;
    syn.dimension = as_int(need(v, path, "dimension"), path + ".dimension");
    if (const json* s = find(v, "weight_scale"))
      syn.weight_scale = as_double(*s, path + ".weight_scale");
    if (const json* s = find(v, "informative_features"))
      syn.informative_features = as_int(*s, path + ".informative_features");
    if (const json* s = find(v, "data_seed")) {
      if (!s->is_number_integer()) fail(path + ".data_seed", "expected an integer");
      syn.data_seed = s->get<std::uint64_t>();
    }
    if (const json* s = find(v, "global_weights"))
      syn.global_weights = as_double_array(*s, path + ".global_weights");
    const json& train = need(v, path, "train_sites");
    if (!train.is_array()) fail(path + ".train_sites", "expected an array");
    for (std::size_t i = 0; i < train.size(); ++i)
      syn.train_sites.push_back(
          parse_site(train[i], path + ".train_sites[" + std::to_string(i) + "]"));
    if (const json* t = find(v, "test_sites")) {
      if (!t->is_array()) fail(path + ".test_sites", "expected an array");
      for (std::size_t i = 0; i < t->size(); ++i)
        syn.test_sites.push_back(
            parse_site((*t)[i], path + ".test_sites[" + std::to_string(i) + "]"));
    }
    if (const json* h = find(v, "holdout_fraction"))
      syn.holdout_fraction = as_double(*h, path + ".holdout_fraction");
    data.source = std::move(syn);
  } else if (type == "csv") {
    check_keys(v, path,
               {"type", "path", "label_column", "site_column", "holdout_fraction",
                "top_variance_features"});
    CsvDataConfig csv;
    csv.path = as_string(need(v, path, "path"), path + ".path");
    csv.label_column = as_string(need(v, path, "label_column"), path + ".label_column");
    if (const json* s = find(v, "site_column"))
      csv.site_column = as_string(*s, path + ".site_column");
    if (const json* h = find(v, "holdout_fraction"))
      csv.holdout_fraction = as_double(*h, path + ".holdout_fraction");
    data.source = std::move(csv);
  } else {
    fail(path + ".type", "must be 'synthetic' or 'csv'");
  }
  if (const json* k = find(v, "top_variance_features"))
    data.top_variance_features = as_int(*k, path + ".top_variance_features");
  return data;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source_name + ": not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError(source_name + ": top level must be an object");
  check_keys(root, source_name,
             {"arms", "epochs", "site_counts", "architecture", "dp", "budget", "data",
              "output_dir", "seed", "clip_sigma_over_b", "postcheck_exhaustion",
              "convergence_delta"});

  ExperimentConfig cfg;

  const json& arms = need(root, source_name, "arms");
  if (!arms.is_array() || arms.empty()) fail("arms", "expected a non-empty array of modes");
  for (const auto& a : arms) {
    try {
      cfg.arms.push_back(training_mode_from_string(as_string(a, "arms")));
    } catch (const std::invalid_argument& e) {
      fail("arms", e.what());
    }
  }

  cfg.epochs = as_int(need(root, source_name, "epochs"), "epochs");

  if (const json* sc = find(root, "site_counts")) {
    if (!sc->is_array() || sc->empty()) fail("site_counts", "expected a non-empty array");
    std::vector<int> counts;
    for (const auto& c : *sc) counts.push_back(as_int(c, "site_counts"));
    cfg.site_counts = std::move(counts);
  }

  if (const json* arch = find(root, "architecture")) {
    if (!arch->is_object()) fail("architecture", "expected an object");
    check_keys(*arch, "architecture", {"hidden_sizes", "hidden_activation"});
    if (const json* h = find(*arch, "hidden_sizes")) {
      if (!h->is_array()) fail("architecture.hidden_sizes", "expected an array");
      cfg.hidden_sizes.clear();
      for (const auto& s : *h)
        cfg.hidden_sizes.push_back(as_int(s, "architecture.hidden_sizes"));
    }
    if (const json* a = find(*arch, "hidden_activation")) {
      try {
        cfg.hidden_activation =
            activation_from_string(as_string(*a, "architecture.hidden_activation"));
      } catch (const std::invalid_argument& e) {
        fail("architecture.hidden_activation", e.what());
      }
    }
  }

  const json& dp = need(root, source_name, "dp");
  if (!dp.is_object()) fail("dp", "expected an object");
  check_keys(dp, "dp",
             {"noise_multiplier", "batch_size", "learning_rate", "clip_norm", "sampling"});
  cfg.dp.noise_multiplier = as_double(need(dp, "dp", "noise_multiplier"), "dp.noise_multiplier");
  cfg.dp.batch_size = as_int(need(dp, "dp", "batch_size"), "dp.batch_size");
  cfg.dp.learning_rate = as_double(need(dp, "dp", "learning_rate"), "dp.learning_rate");
  if (const json* c = find(dp, "clip_norm")) cfg.dp.clip_norm = as_double(*c, "dp.clip_norm");
  if (const json* s = find(dp, "sampling")) {
    try {
      cfg.dp.sampling = sampling_mode_from_string(as_string(*s, "dp.sampling"));
    } catch (const std::invalid_argument& e) {
      fail("dp.sampling", e.what());
    }
  }

  const json& budget = need(root, source_name, "budget");
  if (!budget.is_object()) fail("budget", "expected an object");
  check_keys(budget, "budget", {"epsilon", "delta"});
  const json& eps = need(budget, "budget", "epsilon");
  if (eps.is_string()) {
    if (eps.get<std::string>() != "unlimited")
      fail("budget.epsilon", "expected a number or the string 'unlimited'");
    cfg.budget.epsilon_target = std::numeric_limits<double>::infinity();
  } else {
    cfg.budget.epsilon_target = as_double(eps, "budget.epsilon");
  }
  cfg.budget.delta = as_double(need(budget, "budget", "delta"), "budget.delta");

  cfg.data = parse_data(need(root, source_name, "data"), "data");

  cfg.output_dir = as_string(need(root, source_name, "output_dir"), "output_dir");

  const json& seed = need(root, source_name, "seed");
  if (!seed.is_number_integer()) fail("seed", "expected an integer");
  cfg.seed = seed.get<std::uint64_t>();

  if (const json* f = find(root, "clip_sigma_over_b"))
    cfg.clip_sigma_over_b = as_bool(*f, "clip_sigma_over_b");
  if (const json* f = find(root, "postcheck_exhaustion"))
    cfg.postcheck_exhaustion = as_bool(*f, "postcheck_exhaustion");
  if (const json* f = find(root, "convergence_delta"))
    cfg.convergence_delta = as_double(*f, "convergence_delta");

  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (arms.empty()) fail("arms", "at least one arm required");
  if (epochs < 1) fail("epochs", "must be >= 1");

  if (hidden_sizes.empty()) fail("architecture.hidden_sizes", "at least one hidden layer size");
  for (const int h : hidden_sizes)
    if (h < 1) fail("architecture.hidden_sizes", "sizes must be >= 1");

  try {
    dp.validate();
  } catch (const std::invalid_argument& e) {
    fail("dp", e.what());
  }
  try {
    budget.validate();
  } catch (const std::invalid_argument& e) {
    fail("budget", e.what());
  }
  if (clip_sigma_over_b && dp.noise_multiplier <= 0.0)
    fail("clip_sigma_over_b", "requires a positive noise multiplier");
  if (output_dir.empty()) fail("output_dir", "must not be empty");

  std::size_t n_train = 0;
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&data.source)) {
    if (syn->dimension < 1) fail("data.dimension", "must be >= 1");
    if (syn->train_sites.empty()) fail("data.train_sites", "at least one site required");
    if (syn->global_weights &&
        static_cast<int>(syn->global_weights->size()) != syn->dimension)
      fail("data.global_weights", "length must equal data.dimension");
    if (!(syn->weight_scale > 0.0)) fail("data.weight_scale", "must be > 0");
    if (syn->informative_features &&
        (*syn->informative_features < 1 || *syn->informative_features > syn->dimension))
      fail("data.informative_features", "must lie in [1, data.dimension]");

    std::set<std::string> names;
    auto check_sites = [&](const std::vector<SyntheticSiteConfig>& sites, const std::string& where) {
      for (const auto& s : sites) {
        const std::string path = "data." + where + " site '" + s.name + "'";
        if (s.name.empty()) fail("data." + where, "site name must not be empty");
        if (!names.insert(s.name).second) fail(path, "duplicate site name");
        if (s.n < 1) fail(path, "n must be >= 1");
        if (s.feature_shift &&
            static_cast<int>(s.feature_shift->size()) != syn->dimension)
          fail(path, "feature_shift length must equal data.dimension");
        if (s.feature_shift_scale < 0.0) fail(path, "feature_shift_scale must be >= 0");
        if (s.positive_fraction &&
            (*s.positive_fraction <= 0.0 || *s.positive_fraction >= 1.0))
          fail(path, "positive_fraction must lie in (0, 1)");
      }
    };
    check_sites(syn->train_sites, "train_sites");
    check_sites(syn->test_sites, "test_sites");

    const bool has_test = !syn->test_sites.empty();
    const bool has_holdout = syn->holdout_fraction.has_value();
    if (has_test == has_holdout)
      fail("data", "exactly one of test_sites or holdout_fraction must be given");
    if (has_holdout && (*syn->holdout_fraction <= 0.0 || *syn->holdout_fraction >= 1.0))
      fail("data.holdout_fraction", "must lie in (0, 1)");
    if (data.top_variance_features && *data.top_variance_features > syn->dimension)
      fail("data.top_variance_features", "must not exceed data.dimension");
    n_train = syn->train_sites.size();
  } else {
    const auto& csv = std::get<CsvDataConfig>(data.source);
    if (csv.path.empty()) fail("data.path", "must not be empty");
    if (csv.label_column.empty()) fail("data.label_column", "must not be empty");
    if (csv.holdout_fraction <= 0.0 || csv.holdout_fraction >= 1.0)
      fail("data.holdout_fraction", "must lie in (0, 1)");
    n_train = 0;  // unknown until the file is read
  }
  if (data.top_variance_features && *data.top_variance_features < 1)
    fail("data.top_variance_features", "must be >= 1");

  if (site_counts) {
    for (const int k : *site_counts) {
      if (k < 1) fail("site_counts", "counts must be >= 1");
      if (n_train > 0 && k > static_cast<int>(n_train))
        fail("site_counts", "count " + std::to_string(k) + " exceeds the number of train sites");
    }
  }
}

namespace {

// Five training institutions with eICU-like size ratios, five held-out test
// institutions, 50 features. The data seed pins the benchmark task; --seed
// varies initialization, batch sampling and noise.
constexpr const char* kEicuLike = R"json({
  "arms": ["central", "central_private", "distributed", "distributed_private"],
  "epochs": 3,
  "architecture": {"hidden_sizes": [64], "hidden_activation": "relu"},
  "dp": {"noise_multiplier": 0.5, "batch_size": 100, "learning_rate": 0.12,
         "clip_norm": 4.0, "sampling": "poisson"},
  "budget": {"epsilon": 24.0, "delta": 1e-5},
  "data": {
    "type": "synthetic",
    "dimension": 50,
    "weight_scale": 2.5,
    "data_seed": 1337,
    "train_sites": [
      {"name": "site1", "n": 8000, "feature_shift_scale": 0.5, "label_bias": 0.2},
      {"name": "site2", "n": 6000, "feature_shift_scale": 0.5, "label_bias": -0.1},
      {"name": "site3", "n": 5000, "feature_shift_scale": 0.5, "label_bias": 0.1},
      {"name": "site4", "n": 4500, "feature_shift_scale": 0.5, "label_bias": -0.2},
      {"name": "site5", "n": 4000, "feature_shift_scale": 0.5, "label_bias": 0.0}
    ],
    "test_sites": [
      {"name": "test1", "n": 5000, "feature_shift_scale": 0.5, "label_bias": 0.1},
      {"name": "test2", "n": 4500, "feature_shift_scale": 0.5, "label_bias": -0.1},
      {"name": "test3", "n": 4000, "feature_shift_scale": 0.5, "label_bias": 0.0},
      {"name": "test4", "n": 3500, "feature_shift_scale": 0.5, "label_bias": 0.2},
      {"name": "test5", "n": 3000, "feature_shift_scale": 0.5, "label_bias": -0.2}
    ]
  },
  "output_dir": "out/eicu_like",
  "seed": 42
})json";

// Three small sites totalling 994 records, 500 expression-like features with
// a sparse signal and the top-variance panel step, within-site 80/20
// evaluation split. Small noisy epochs bounce, so early stopping is off.
constexpr const char* kTcgaLike = R"json({
  "arms": ["central", "central_private", "distributed", "distributed_private"],
  "epochs": 30,
  "architecture": {"hidden_sizes": [32], "hidden_activation": "tanh"},
  "dp": {"noise_multiplier": 1.0, "batch_size": 16, "learning_rate": 0.1,
         "clip_norm": 2.0, "sampling": "poisson"},
  "budget": {"epsilon": 16.0, "delta": 1e-5},
  "data": {
    "type": "synthetic",
    "dimension": 500,
    "weight_scale": 12.0,
    "informative_features": 10,
    "data_seed": 2024,
    "train_sites": [
      {"name": "site1", "n": 500, "feature_shift_scale": 0.2, "label_bias": 0.1},
      {"name": "site2", "n": 300, "feature_shift_scale": 0.2, "label_bias": -0.1},
      {"name": "site3", "n": 194, "feature_shift_scale": 0.2, "label_bias": 0.0}
    ],
    "holdout_fraction": 0.2,
    "top_variance_features": 500
  },
  "convergence_delta": -1.0,
  "output_dir": "out/tcga_like",
  "seed": 7
})json";

}  // namespace

std::optional<std::string> preset_text(const std::string& name) {
  if (name == "eicu_like") return std::string(kEicuLike);
  if (name == "tcga_like") return std::string(kTcgaLike);
  return std::nullopt;
}

std::vector<std::string> preset_names() { return {"eicu_like", "tcga_like"}; }

ExperimentConfig load_config(const std::string& path_or_preset) {
  if (const auto preset = preset_text(path_or_preset))
    return parse_config_text(*preset, "preset " + path_or_preset);

  std::ifstream in(path_or_preset);
  if (!in) {
    if (!std::filesystem::exists(path_or_preset))
      throw ConfigError("no such config file or preset: " + path_or_preset);
    throw IoError("cannot read " + path_or_preset);
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path_or_preset);
}

}  // namespace dpcwt
