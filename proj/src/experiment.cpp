#include "dpcwt/experiment.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dpcwt/checkpoint.hpp"
#include "dpcwt/errors.hpp"

namespace dpcwt {

namespace {

using nlohmann::json;

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string format_double(double v, const char* fmt) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<SiteDataSpec> build_site_specs(const SyntheticDataConfig& syn,
                                           const std::vector<SyntheticSiteConfig>& sites,
                                           std::uint64_t seed) {
  std::vector<SiteDataSpec> specs;
  specs.reserve(sites.size());
  for (const auto& s : sites) {
    SiteDataSpec spec;
    spec.id = s.name;
    spec.n = s.n;
    spec.label_bias = s.label_bias;
    spec.positive_fraction = s.positive_fraction;
    if (s.feature_shift) {
      spec.feature_shift = *s.feature_shift;
    } else {
      spec.feature_shift.resize(static_cast<std::size_t>(syn.dimension));
      NoiseSource rng(derive_seed(seed, "shift:" + s.name));
      for (double& v : spec.feature_shift) v = s.feature_shift_scale * rng.gaussian();
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

struct CellArtifacts {
  RunRecord record;
  ReportRow row;
};

// One (arm, site count) cell: preprocess, train, evaluate, write artifacts.
CellArtifacts run_cell(const ExperimentConfig& config, const PreparedData& data,
                       TrainingMode arm, int k, const std::filesystem::path& cell_dir) {
  std::vector<SiteDataset> train(data.train_sites.begin(), data.train_sites.begin() + k);
  std::vector<SiteDataset> test =
      data.test_per_site
          ? std::vector<SiteDataset>(data.test_sites.begin(), data.test_sites.begin() + k)
          : data.test_sites;

  // Feature selection on the pooled training split only, then min-max bounds
  // from the same pool; the test set reuses both.
  if (config.data.top_variance_features) {
    const FeatureSelection sel = top_variance_features(train, *config.data.top_variance_features);
    train = sel.filtered;
    std::vector<SiteDataset> filtered_test;
    for (const SiteDataset& t : test) {
      SiteDataset f = t;
      f.features = Matrix(t.size(), sel.columns.size());
      for (std::size_t r = 0; r < t.size(); ++r)
        for (std::size_t c = 0; c < sel.columns.size(); ++c)
          f.features(r, c) = t.features(r, static_cast<std::size_t>(sel.columns[c]));
      filtered_test.push_back(std::move(f));
    }
    test = std::move(filtered_test);
  }
  const ColumnBounds bounds = min_max_normalize(pool_sites(train, "bounds-pool")).second;
  for (SiteDataset& s : train) s = min_max_normalize(s, bounds).first;
  for (SiteDataset& s : test) s = min_max_normalize(s, bounds).first;

  const DpSgdConfig dp = effective_dp(config);

  TrainingPlan plan;
  plan.mode = arm;
  plan.epochs = config.epochs;
  plan.dp = dp;
  plan.arch.layer_sizes.push_back(static_cast<int>(train.front().dim()));
  for (const int h : config.hidden_sizes) plan.arch.layer_sizes.push_back(h);
  plan.arch.layer_sizes.push_back(1);
  plan.arch.hidden_activation = config.hidden_activation;
  plan.master_seed = config.seed;
  plan.postcheck_exhaustion = config.postcheck_exhaustion;
  plan.convergence_delta = config.convergence_delta;

  std::vector<Site> sites;
  for (SiteDataset& s : train) {
    std::string id = s.site_id;
    plan.site_order.push_back(id);
    sites.push_back(make_site(std::move(id), std::move(s), dp, config.budget));
  }

  CellArtifacts out;
  out.record = (arm == TrainingMode::central || arm == TrainingMode::central_private)
                   ? central_train(std::move(sites), plan)
                   : cyclical_train(std::move(sites), plan);
  out.row = summarize_run(out.record, test);

  std::filesystem::create_directories(cell_dir);

  std::ostringstream metrics;
  for (const SiteEpochRecord& rec : out.record.trace) {
    json j;
    j["arm"] = to_string(arm);
    j["n_sites"] = k;
    j["epoch"] = rec.epoch;
    j["site"] = rec.site_id;
    j["steps"] = rec.steps;
    j["loss_samples"] = rec.loss_samples;
    j["mean_loss"] = number_or_null(rec.mean_loss);
    j["epsilon"] = number_or_null(rec.epsilon);
    j["order"] = rec.epsilon_order;
    j["active"] = rec.active_after;
    metrics << j.dump() << "\n";
  }
  write_text_atomic(cell_dir / "metrics.jsonl", metrics.str());

  std::ostringstream ledgers;
  for (const SiteSummary& s : out.record.sites) {
    json j;
    j["site"] = s.site_id;
    j["n"] = s.dataset_size;
    j["q"] = s.sampling_rate;
    j["sigma"] = s.noise_multiplier;
    j["delta"] = s.delta;
    j["steps"] = s.steps;
    j["epsilon"] = number_or_null(s.epsilon);
    j["order"] = s.epsilon_order;
    j["deactivated"] = s.deactivated;
    ledgers << j.dump() << "\n";
  }
  write_text_atomic(cell_dir / "ledger.jsonl", ledgers.str());

  for (std::size_t e = 0; e < out.record.epoch_params.size(); ++e) {
    char name[40];
    std::snprintf(name, sizeof name, "checkpoint_epoch%03zu.bin", e + 1);
    save_checkpoint(cell_dir / name, out.record.epoch_params[e]);
  }
  save_checkpoint(cell_dir / "checkpoint_final.bin", out.record.final_params);

  json summary;
  summary["arm"] = out.row.mode;
  summary["n_sites"] = out.row.n_sites;
  summary["auroc"] = out.row.auroc_value;
  summary["max_epsilon"] = number_or_null(out.row.max_epsilon);
  summary["steps"] = out.row.steps;
  summary["epochs_completed"] = out.record.epochs_completed;
  summary["converged_early"] = out.record.converged_early;
  write_text_atomic(cell_dir / "summary.json", summary.dump(2) + "\n");

  return out;
}

// Rows for one arm across all site counts; written to the arm directory so a
// worker process and the sequential path produce identical artifacts.
void run_arm(const ExperimentConfig& config, const PreparedData& data, TrainingMode arm,
             const std::vector<int>& site_counts, const std::filesystem::path& arm_dir) {
  std::ostringstream rows;
  for (const int k : site_counts) {
    const auto cell = run_cell(config, data, arm, k, arm_dir / ("sites" + std::to_string(k)));
    rows << to_string(arm) << '\t' << k << '\t' << format_double(cell.row.auroc_value, "%.17g")
         << '\t'
         << (std::isfinite(cell.row.max_epsilon) ? format_double(cell.row.max_epsilon, "%.17g")
                                                 : "inf")
         << '\t' << cell.row.steps << "\n";
  }
  write_text_atomic(arm_dir / "rows.tsv", rows.str());
}

std::vector<ReportRow> read_arm_rows(const std::filesystem::path& arm_dir) {
  std::ifstream in(arm_dir / "rows.tsv");
  if (!in) throw IoError("missing " + (arm_dir / "rows.tsv").string());
  std::vector<ReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ReportRow row;
    std::string eps;
    fields >> row.mode >> row.n_sites >> row.auroc_value >> eps >> row.steps;
    if (!fields) throw IoError("malformed row in " + (arm_dir / "rows.tsv").string());
    row.max_epsilon =
        eps == "inf" ? std::numeric_limits<double>::infinity() : std::stod(eps);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_grid(const std::vector<ReportRow>& rows, const std::vector<int>& site_counts,
                        const std::vector<TrainingMode>& arms, bool epsilon_block) {
  std::map<std::pair<int, std::string>, const ReportRow*> cell;
  for (const ReportRow& r : rows) cell[{r.n_sites, r.mode}] = &r;

  std::ostringstream out;
  out << std::setw(6) << "sites";
  for (const TrainingMode m : arms) out << "  " << std::setw(19) << to_string(m);
  out << "\n";
  for (const int k : site_counts) {
    out << std::setw(6) << k;
    for (const TrainingMode m : arms) {
      const auto it = cell.find({k, to_string(m)});
      std::string text = "n/a";
      if (it != cell.end()) {
        const double v = epsilon_block ? it->second->max_epsilon : it->second->auroc_value;
        if (std::isfinite(v)) text = format_double(v, "%.6f");
      }
      out << "  " << std::setw(19) << text;
    }
    out << "\n";
  }
  return out.str();
}

std::string render_report_tsv(const std::vector<ReportRow>& rows,
                              const std::vector<int>& site_counts) {
  std::map<std::pair<int, std::string>, double> cell;
  for (const ReportRow& r : rows) cell[{r.n_sites, r.mode}] = r.auroc_value;
  static const char* kArms[] = {"central", "central_private", "distributed",
                                "distributed_private"};
  std::ostringstream out;
  out << "n_sites";
  for (const char* a : kArms) out << '\t' << a;
  out << "\n";
  for (const int k : site_counts) {
    out << k;
    for (const char* a : kArms) {
      const auto it = cell.find({k, a});
      out << '\t' << (it == cell.end() ? "n/a" : format_double(it->second, "%.6f"));
    }
    out << "\n";
  }
  return out.str();
}

std::vector<int> resolved_site_counts(const ExperimentConfig& config, std::size_t n_train) {
  if (config.site_counts) return *config.site_counts;
  std::vector<int> counts(n_train);
  std::iota(counts.begin(), counts.end(), 1);
  return counts;
}

void print_dry_run(const ExperimentConfig& config, const PreparedData& data,
                   const std::vector<int>& site_counts) {
  const DpSgdConfig dp = effective_dp(config);
  std::cout << "resolved plan (dry run, nothing written)\n";
  std::cout << "  arms:";
  for (const TrainingMode m : config.arms) std::cout << ' ' << to_string(m);
  std::cout << "\n  site counts:";
  for (const int k : site_counts) std::cout << ' ' << k;
  std::cout << "\n  epochs: " << config.epochs << "\n";
  std::cout << "  optimizer: sigma=" << dp.noise_multiplier << " b=" << dp.batch_size
            << " eta=" << dp.learning_rate << " C=" << dp.clip_norm << " sampling="
            << to_string(dp.sampling) << "\n";
  std::cout << "  budget: epsilon="
            << (config.budget.is_unlimited() ? std::string("unlimited")
                                             : format_double(config.budget.epsilon_target, "%g"))
            << " delta=" << format_double(config.budget.delta, "%g") << "\n";
  std::cout << "  train sites:";
  for (const SiteDataset& s : data.train_sites)
    std::cout << ' ' << s.site_id << "(n=" << s.size()
              << ", steps/epoch=" << s.size() / static_cast<std::size_t>(dp.batch_size) << ")";
  std::cout << "\n  test rows: ";
  std::size_t test_rows = 0;
  for (const SiteDataset& s : data.test_sites) test_rows += s.size();
  std::cout << test_rows << (data.test_per_site ? " (within-site holdout)" : " (held-out sites)")
            << "\n";
  std::cout << "  feature dimension: " << data.train_sites.front().dim();
  if (config.data.top_variance_features)
    std::cout << " -> top " << *config.data.top_variance_features << " by variance";
  std::cout << "\n  output dir: " << config.output_dir.string() << "\n";
}

}  // namespace

DpSgdConfig effective_dp(const ExperimentConfig& config) {
  DpSgdConfig dp = config.dp;
  if (config.clip_sigma_over_b)
    dp.clip_norm = dp.noise_multiplier / static_cast<double>(dp.batch_size);
  return dp;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData data;
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&config.data.source)) {
    const std::uint64_t data_seed = syn->data_seed.value_or(config.seed);
    std::vector<double> weights;
    if (syn->global_weights) {
      weights = *syn->global_weights;
    } else {
      weights.assign(static_cast<std::size_t>(syn->dimension), 0.0);
      NoiseSource rng(derive_seed(data_seed, "weights"));
      if (!syn->informative_features) {
        const double scale = syn->weight_scale / std::sqrt(static_cast<double>(syn->dimension));
        for (double& w : weights) w = scale * rng.gaussian();
      } else {
        // Signal concentrated on a random subset of columns.
        const int active = *syn->informative_features;
        std::vector<std::size_t> columns(weights.size());
        std::iota(columns.begin(), columns.end(), 0);
        for (std::size_t i = columns.size() - 1; i > 0; --i)
          std::swap(columns[i], columns[rng.uniform_index(i + 1)]);
        const double scale = syn->weight_scale / std::sqrt(static_cast<double>(active));
        for (int i = 0; i < active; ++i)
          weights[columns[static_cast<std::size_t>(i)]] = scale * rng.gaussian();
      }
    }

    const auto train_specs = build_site_specs(*syn, syn->train_sites, data_seed);
    data.train_sites = generate_multisite(syn->dimension, weights, train_specs, data_seed);

    if (!syn->test_sites.empty()) {
      const auto test_specs = build_site_specs(*syn, syn->test_sites, data_seed);
      data.test_sites = generate_multisite(syn->dimension, weights, test_specs, data_seed);
      data.test_per_site = false;
    } else {
      data.test_per_site = true;
      std::vector<SiteDataset> split_train;
      for (const SiteDataset& s : data.train_sites) {
        auto [train_part, test_part] =
            split_holdout(s, *syn->holdout_fraction, derive_seed(data_seed, "split:" + s.site_id));
        split_train.push_back(std::move(train_part));
        data.test_sites.push_back(std::move(test_part));
      }
      data.train_sites = std::move(split_train);
    }
  } else {
    const auto& csv = std::get<CsvDataConfig>(config.data.source);
    CsvLoadResult loaded = load_csv(csv.path, csv.label_column, csv.site_column);
    if (!loaded.rejected_rows.empty()) {
      std::cerr << "warning: rejected " << loaded.rejected_rows.size()
                << " row(s) with unparsable features:";
      for (const std::size_t r : loaded.rejected_rows) std::cerr << ' ' << r;
      std::cerr << "\n";
    }
    data.test_per_site = true;
    for (const SiteDataset& s : loaded.sites) {
      auto [train_part, test_part] =
          split_holdout(s, csv.holdout_fraction, derive_seed(config.seed, "split:" + s.site_id));
      data.train_sites.push_back(std::move(train_part));
      data.test_sites.push_back(std::move(test_part));
    }
  }
  return data;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (options.parallel_arms < 1) throw ConfigError("parallel_arms: must be >= 1");

  const PreparedData data = prepare_data(config);
  const std::vector<int> site_counts = resolved_site_counts(config, data.train_sites.size());
  for (const int k : site_counts)
    if (k > static_cast<int>(data.train_sites.size()))
      throw ConfigError("site_counts: count " + std::to_string(k) +
                        " exceeds the number of train sites");

  ExperimentResult result;
  result.output_dir = config.output_dir;

  if (options.dry_run) {
    print_dry_run(config, data, site_counts);
    return result;
  }

  std::filesystem::create_directories(config.output_dir);

  auto arm_dir = [&](TrainingMode m) { return config.output_dir / "arms" / to_string(m); };

  if (options.parallel_arms <= 1 || config.arms.size() <= 1) {
    for (const TrainingMode arm : config.arms)
      run_arm(config, data, arm, site_counts, arm_dir(arm));
  } else {
    // One worker process per arm, at most parallel_arms at a time. Each arm
    // writes only its own subtree; the parent composes the report afterward.
    std::vector<pid_t> running;
    auto reap_one = [&]() {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      running.erase(std::remove(running.begin(), running.end(), pid), running.end());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw std::runtime_error("arm worker process failed");
    };
    for (const TrainingMode arm : config.arms) {
      while (static_cast<int>(running.size()) >= options.parallel_arms) reap_one();
      const pid_t pid = fork();
      if (pid < 0) throw IoError("fork failed");
      if (pid == 0) {
        try {
          run_arm(config, data, arm, site_counts, arm_dir(arm));
          _exit(0);
        } catch (const std::exception& e) {
          std::cerr << "arm " << to_string(arm) << ": " << e.what() << "\n";
          _exit(1);
        }
      }
      running.push_back(pid);
    }
    while (!running.empty()) reap_one();
  }

  for (const TrainingMode arm : config.arms) {
    const auto rows = read_arm_rows(arm_dir(arm));
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }

  std::string report = "AUROC by number of training sites\n";
  report += render_grid(result.rows, site_counts, config.arms, false);
  report += "\nMax per-site epsilon (delta = " + format_double(config.budget.delta, "%g") + ")\n";
  report += render_grid(result.rows, site_counts, config.arms, true);
  write_text_atomic(config.output_dir / "report.txt", report);
  write_text_atomic(config.output_dir / "report.tsv",
                    render_report_tsv(result.rows, site_counts));
  return result;
}

}  // namespace dpcwt
