#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "dpcwt/checkpoint.hpp"
#include "dpcwt/errors.hpp"
#include "dpcwt/experiment.hpp"

using namespace dpcwt;

namespace {

namespace fs = std::filesystem;

std::string small_config_text(const std::string& out_dir) {
  return R"({
  "arms": ["central", "central_private", "distributed", "distributed_private"],
  "epochs": 2,
  "architecture": {"hidden_sizes": [8], "hidden_activation": "relu"},
  "dp": {"noise_multiplier": 0.8, "batch_size": 25, "learning_rate": 0.2,
         "clip_norm": 2.0, "sampling": "poisson"},
  "budget": {"epsilon": 20.0, "delta": 1e-5},
  "data": {
    "type": "synthetic",
    "dimension": 8,
    "weight_scale": 2.0,
    "data_seed": 5,
    "train_sites": [
      {"name": "alpha", "n": 300, "feature_shift_scale": 0.3, "label_bias": 0.1},
      {"name": "beta", "n": 200, "feature_shift_scale": 0.3, "label_bias": -0.1}
    ],
    "test_sites": [{"name": "gamma", "n": 400, "feature_shift_scale": 0.3, "label_bias": 0.0}]
  },
  "output_dir": ")" +
         out_dir + R"(",
  "seed": 11
})";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("dry run validates and touches nothing") {
  const fs::path dir = fresh_dir("dpcwt_dry");
  const ExperimentConfig cfg = parse_config_text(small_config_text(dir.string()), "test");
  RunOptions options;
  options.dry_run = true;
  const ExperimentResult result = run_experiment(cfg, options);
  CHECK(result.rows.empty());
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("the grid runs, reports and checkpoints land on disk") {
  const fs::path dir = fresh_dir("dpcwt_grid");
  const ExperimentConfig cfg = parse_config_text(small_config_text(dir.string()), "test");
  const ExperimentResult result = run_experiment(cfg);

  CHECK(result.rows.size() == 4 * 2);  // four arms, site counts 1 and 2
  for (const ReportRow& row : result.rows) {
    CHECK(row.auroc_value >= 0.0);
    CHECK(row.auroc_value <= 1.0);
    CHECK(row.steps > 0);
    const bool priv = row.mode == "central_private" || row.mode == "distributed_private";
    CHECK(std::isfinite(row.max_epsilon) == priv);
  }

  CHECK(fs::exists(dir / "report.txt"));
  const std::string tsv = read_file(dir / "report.tsv");
  CHECK(tsv.find("n_sites\tcentral\tcentral_private\tdistributed\tdistributed_private") == 0);
  CHECK(tsv.find("\nn/a") == std::string::npos);  // every cell filled here

  for (const std::string arm :
       {"central", "central_private", "distributed", "distributed_private"}) {
    for (int k = 1; k <= 2; ++k) {
      const fs::path cell = dir / "arms" / arm / ("sites" + std::to_string(k));
      CHECK(fs::exists(cell / "metrics.jsonl"));
      CHECK(fs::exists(cell / "ledger.jsonl"));
      CHECK(fs::exists(cell / "summary.json"));
      CHECK(fs::exists(cell / "checkpoint_final.bin"));
      CHECK(fs::exists(cell / "checkpoint_epoch001.bin"));
      // Checkpoints load back with the right shape.
      const ModelParams params = load_checkpoint(cell / "checkpoint_final.bin");
      CHECK(params.arch.layer_sizes == std::vector<int>{8, 8, 1});
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("identical config and seed reproduce identical bytes") {
  const fs::path a = fresh_dir("dpcwt_rep_a");
  const fs::path b = fresh_dir("dpcwt_rep_b");
  run_experiment(parse_config_text(small_config_text(a.string()), "test"));
  run_experiment(parse_config_text(small_config_text(b.string()), "test"));

  CHECK(read_file(a / "report.txt") == read_file(b / "report.txt"));
  CHECK(read_file(a / "report.tsv") == read_file(b / "report.tsv"));
  for (const std::string arm : {"central", "distributed_private"}) {
    const fs::path cell_a = a / "arms" / arm / "sites2";
    const fs::path cell_b = b / "arms" / arm / "sites2";
    CHECK(read_file(cell_a / "checkpoint_final.bin") == read_file(cell_b / "checkpoint_final.bin"));
    CHECK(read_file(cell_a / "metrics.jsonl") == read_file(cell_b / "metrics.jsonl"));
    CHECK(read_file(cell_a / "ledger.jsonl") == read_file(cell_b / "ledger.jsonl"));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a different seed changes the outputs") {
  const fs::path a = fresh_dir("dpcwt_seed_a");
  const fs::path b = fresh_dir("dpcwt_seed_b");
  ExperimentConfig cfg_a = parse_config_text(small_config_text(a.string()), "test");
  ExperimentConfig cfg_b = parse_config_text(small_config_text(b.string()), "test");
  cfg_b.seed = 12;
  run_experiment(cfg_a);
  run_experiment(cfg_b);
  CHECK(read_file(a / "report.tsv") != read_file(b / "report.tsv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("parallel arm workers produce the sequential bytes") {
  const fs::path a = fresh_dir("dpcwt_par_a");
  const fs::path b = fresh_dir("dpcwt_par_b");
  run_experiment(parse_config_text(small_config_text(a.string()), "test"));
  RunOptions options;
  options.parallel_arms = 4;
  run_experiment(parse_config_text(small_config_text(b.string()), "test"), options);

  CHECK(read_file(a / "report.txt") == read_file(b / "report.txt"));
  CHECK(read_file(a / "report.tsv") == read_file(b / "report.tsv"));
  CHECK(read_file(a / "arms" / "central_private" / "sites2" / "checkpoint_final.bin") ==
        read_file(b / "arms" / "central_private" / "sites2" / "checkpoint_final.bin"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("csv-backed experiments run through the same pipeline") {
  const fs::path dir = fresh_dir("dpcwt_csv_run");
  const fs::path csv = fs::temp_directory_path() / "dpcwt_experiment.csv";
  {
    std::ofstream out(csv);
    out << "site,x1,x2,label\n";
    NoiseSource rng(3);
    for (int i = 0; i < 240; ++i) {
      const double x1 = rng.gaussian(), x2 = rng.gaussian();
      out << (i % 2 ? "south" : "north") << ',' << x1 << ',' << x2 << ','
          << (x1 + x2 > 0 ? 1 : 0) << "\n";
    }
  }
  const std::string text = R"({
  "arms": ["central", "distributed"],
  "epochs": 2,
  "architecture": {"hidden_sizes": [4], "hidden_activation": "relu"},
  "dp": {"noise_multiplier": 0.0, "batch_size": 20, "learning_rate": 0.3,
         "clip_norm": 1e30, "sampling": "with_replacement"},
  "budget": {"epsilon": "unlimited", "delta": 1e-5},
  "data": {"type": "csv", "path": ")" + csv.string() +
                           R"(", "label_column": "label", "site_column": "site",
           "holdout_fraction": 0.25},
  "output_dir": ")" + dir.string() + R"(",
  "seed": 2
})";
  const ExperimentResult result = run_experiment(parse_config_text(text, "test"));
  CHECK(result.rows.size() == 4);  // 2 arms x 2 site counts
  for (const ReportRow& row : result.rows) CHECK(row.auroc_value > 0.6);
  fs::remove_all(dir);
  fs::remove(csv);
}

TEST_CASE("the feature panel selection runs inside the pipeline") {
  const fs::path dir = fresh_dir("dpcwt_panel");
  std::string text = small_config_text(dir.string());
  const auto pos = text.find("\"weight_scale\": 2.0,");
  REQUIRE(pos != std::string::npos);
  text.insert(pos, "\"top_variance_features\": 5,\n    ");
  const ExperimentResult result = run_experiment(parse_config_text(text, "test"));
  CHECK(result.rows.size() == 8);
  const ModelParams params =
      load_checkpoint(dir / "arms" / "central" / "sites1" / "checkpoint_final.bin");
  CHECK(params.arch.layer_sizes == std::vector<int>{5, 8, 1});
  fs::remove_all(dir);
}
