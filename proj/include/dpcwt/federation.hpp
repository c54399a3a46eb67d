#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpcwt/accountant.hpp"
#include "dpcwt/dataset.hpp"
#include "dpcwt/dp_sgd.hpp"
#include "dpcwt/nn.hpp"
#include "dpcwt/rng.hpp"

namespace dpcwt {

enum class TrainingMode { central, central_private, distributed, distributed_private };

TrainingMode training_mode_from_string(const std::string& name);
std::string to_string(TrainingMode m);
bool is_private(TrainingMode m);

// One institution: its local data, its own privacy ledger and budget, and
// whether it still participates in the rotation.
struct Site {
  std::string id;
  SiteDataset dataset;
  RdpLedger ledger;
  PrivacyBudget budget;
  bool active = true;
};

struct TrainingPlan {
  TrainingMode mode = TrainingMode::distributed;
  int epochs = 1;
  std::vector<std::string> site_order;  // every site exactly once, fixed across epochs
  DpSgdConfig dp;
  ArchitectureSpec arch;
  std::uint64_t master_seed = 0;
  // When true, the budget check runs after each step instead of projecting
  // ahead, so the final ledger may overshoot the target by one step.
  bool postcheck_exhaustion = false;
  // Stop after an epoch whose mean training loss improved by less than this.
  double convergence_delta = 1e-4;

  void validate() const;
};

struct SiteEpochRecord {
  int epoch = 0;
  std::string site_id;
  int steps = 0;          // accounting steps this epoch (empty batches included)
  int loss_samples = 0;   // batches that contributed a loss value
  double mean_loss = 0.0; // NaN when no batch produced one
  double epsilon = 0.0;   // +inf when the run is not privacy-accounted
  int epsilon_order = 0;
  bool active_after = true;
};

struct SiteSummary {
  std::string site_id;
  std::size_t dataset_size = 0;
  double sampling_rate = 0.0;
  double noise_multiplier = 0.0;
  double delta = 0.0;
  std::int64_t steps = 0;
  double epsilon = 0.0;  // +inf when not accounted
  int epsilon_order = 0;
  bool deactivated = false;
};

struct RunRecord {
  TrainingMode mode = TrainingMode::central;
  int n_sites = 0;
  ArchitectureSpec arch;
  ModelParams final_params;
  std::vector<ModelParams> epoch_params;  // snapshot after each completed epoch
  std::vector<SiteEpochRecord> trace;     // one record per (epoch, visited site)
  std::vector<SiteSummary> sites;
  int epochs_completed = 0;
  bool converged_early = false;
  double wall_seconds = 0.0;
};

// Runs floor(|D_s| / b) steps on one site. Private modes clip, noise, charge
// the ledger each step, and stop the step before the budget would be crossed,
// marking the site inactive. Weights update in place.
SiteEpochRecord train_site_epoch(ModelParams& params, Site& site, const TrainingPlan& plan,
                                 NoiseSource& rng, int epoch);

// The full rotation: for every epoch, every active site in order trains for
// one local epoch and hands the weights to the next site. Stops early when
// every site is inactive or the loss converges.
RunRecord cyclical_train(std::vector<Site> sites, const TrainingPlan& plan);

// Pools all site data into one dataset and trains it as a single site; the
// private variant accounts with q = b / |pool| on a single ledger.
RunRecord central_train(std::vector<Site> sites, const TrainingPlan& plan);

// Site construction helper: builds the ledger from the dataset size and batch
// size (q = min(1, b/|D|)).
Site make_site(std::string id, SiteDataset dataset, const DpSgdConfig& dp,
               const PrivacyBudget& budget, const OrderGrid& grid = OrderGrid::defaults());

}  // namespace dpcwt
