#include "dpcwt/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace dpcwt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join_ids(const std::vector<Site>& sites) {
  std::string id;
  for (const Site& s : sites) {
    if (!id.empty()) id += '+';
    id += s.id;
  }
  return id;
}

}  // namespace

TrainingMode training_mode_from_string(const std::string& name) {
  if (name == "central") return TrainingMode::central;
  if (name == "central_private") return TrainingMode::central_private;
  if (name == "distributed") return TrainingMode::distributed;
  if (name == "distributed_private") return TrainingMode::distributed_private;
  throw std::invalid_argument("unknown training mode: " + name);
}

std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::central: return "central";
    case TrainingMode::central_private: return "central_private";
    case TrainingMode::distributed: return "distributed";
    case TrainingMode::distributed_private: return "distributed_private";
  }
  return "unknown";
}

bool is_private(TrainingMode m) {
  return m == TrainingMode::central_private || m == TrainingMode::distributed_private;
}

void TrainingPlan::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  dp.validate();
  arch.validate();
  if (site_order.empty()) throw std::invalid_argument("site order must not be empty");
  std::set<std::string> seen(site_order.begin(), site_order.end());
  if (seen.size() != site_order.size())
    throw std::invalid_argument("site order repeats a site id");
}

Site make_site(std::string id, SiteDataset dataset, const DpSgdConfig& dp,
               const PrivacyBudget& budget, const OrderGrid& grid) {
  if (dataset.size() == 0) throw std::invalid_argument("site dataset must not be empty: " + id);
  budget.validate();
  const double q =
      std::min(1.0, static_cast<double>(dp.batch_size) / static_cast<double>(dataset.size()));
  RdpLedger ledger(grid, q, dp.noise_multiplier);
  return Site{std::move(id), std::move(dataset), std::move(ledger), budget, true};
}

SiteEpochRecord train_site_epoch(ModelParams& params, Site& site, const TrainingPlan& plan,
                                 NoiseSource& rng, int epoch) {
  if (!site.active) throw std::invalid_argument("inactive site passed to train_site_epoch");
  const bool priv = is_private(plan.mode);
  const int steps_per_epoch =
      static_cast<int>(site.dataset.size()) / plan.dp.batch_size;

  SiteEpochRecord rec;
  rec.epoch = epoch;
  rec.site_id = site.id;

  double loss_sum = 0.0;
  for (int t = 0; t < steps_per_epoch; ++t) {
    if (priv && !plan.postcheck_exhaustion) {
      // Stop the step before the budget would be crossed.
      if (budget_exhausted(site.ledger, site.budget).next_step_would_exceed) {
        site.active = false;
        break;
      }
    }

    Batch batch = sample_batch(site.dataset, plan.dp, rng);
    if (batch.size() == 0) {
      // Empty Poisson batch: no update, but the step is still charged.
      if (priv) site.ledger.accumulate(1);
      ++rec.steps;
      continue;
    }

    loss_sum += mean_batch_loss(params, batch);
    ++rec.loss_samples;

    const auto grads = per_example_gradients(params, batch);
    params = priv ? noisy_step(params, grads, plan.dp, rng) : plain_step(params, grads, plan.dp);
    ++rec.steps;

    if (priv) {
      site.ledger.accumulate(1);
      if (plan.postcheck_exhaustion && budget_exhausted(site.ledger, site.budget).exhausted) {
        site.active = false;
        break;
      }
    }
  }

  rec.mean_loss = rec.loss_samples > 0 ? loss_sum / rec.loss_samples
                                       : std::numeric_limits<double>::quiet_NaN();
  if (priv) {
    const EpsilonResult eps = site.ledger.to_epsilon(site.budget.delta);
    rec.epsilon = eps.epsilon;
    rec.epsilon_order = eps.order;
  } else {
    rec.epsilon = kInf;
  }
  rec.active_after = site.active;
  return rec;
}

RunRecord cyclical_train(std::vector<Site> sites, const TrainingPlan& plan) {
  plan.validate();
  if (sites.empty()) throw std::invalid_argument("at least one site required");
  if (std::none_of(sites.begin(), sites.end(), [](const Site& s) { return s.active; }))
    throw std::invalid_argument("all sites inactive at start");
  {
    std::set<std::string> ids;
    for (const Site& s : sites) ids.insert(s.id);
    for (const std::string& id : plan.site_order)
      if (!ids.count(id)) throw std::invalid_argument("site order names unknown site: " + id);
    if (ids.size() != plan.site_order.size())
      throw std::invalid_argument("site order must cover every site exactly once");
  }

  const auto start = std::chrono::steady_clock::now();

  RunRecord record;
  record.mode = plan.mode;
  record.n_sites = static_cast<int>(sites.size());
  record.arch = plan.arch;

  ModelParams params = init_params(plan.arch, derive_seed(plan.master_seed, "init"));

  // One persistent substream per site; batch order continues across epochs.
  std::vector<NoiseSource> streams;
  std::vector<Site*> ordered;
  streams.reserve(plan.site_order.size());
  for (const std::string& id : plan.site_order) {
    streams.emplace_back(derive_seed(plan.master_seed, "site:" + id));
    ordered.push_back(
        &*std::find_if(sites.begin(), sites.end(), [&](const Site& s) { return s.id == id; }));
  }

  double prev_cycle_loss = kInf;
  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    double cycle_loss_sum = 0.0;
    int cycle_loss_samples = 0;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      Site& site = *ordered[i];
      if (!site.active) continue;  // removed from the rotation; never touched again
      SiteEpochRecord rec = train_site_epoch(params, site, plan, streams[i], epoch);
      if (rec.loss_samples > 0) {
        cycle_loss_sum += rec.mean_loss * rec.loss_samples;
        cycle_loss_samples += rec.loss_samples;
      }
      record.trace.push_back(std::move(rec));
    }
    record.epoch_params.push_back(params);
    record.epochs_completed = epoch;

    if (std::none_of(sites.begin(), sites.end(), [](const Site& s) { return s.active; })) break;

    if (cycle_loss_samples > 0) {
      const double cycle_loss = cycle_loss_sum / cycle_loss_samples;
      if (prev_cycle_loss - cycle_loss < plan.convergence_delta && epoch >= 2) {
        record.converged_early = true;
        break;
      }
      prev_cycle_loss = cycle_loss;
    }
  }

  record.final_params = std::move(params);
  std::map<std::string, std::int64_t> steps_by_site;
  for (const SiteEpochRecord& rec : record.trace) steps_by_site[rec.site_id] += rec.steps;
  for (const Site& site : sites) {
    SiteSummary sum;
    sum.site_id = site.id;
    sum.dataset_size = site.dataset.size();
    sum.sampling_rate = site.ledger.sampling_rate();
    sum.noise_multiplier = site.ledger.noise_multiplier();
    sum.delta = site.budget.delta;
    sum.steps = steps_by_site[site.id];
    if (is_private(plan.mode)) {
      const EpsilonResult eps = site.ledger.to_epsilon(site.budget.delta);
      sum.epsilon = eps.epsilon;
      sum.epsilon_order = eps.order;
    } else {
      sum.epsilon = kInf;
    }
    sum.deactivated = !site.active;
    record.sites.push_back(std::move(sum));
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

RunRecord central_train(std::vector<Site> sites, const TrainingPlan& plan) {
  if (sites.empty()) throw std::invalid_argument("at least one site required");

  std::vector<SiteDataset> datasets;
  datasets.reserve(sites.size());
  for (const Site& s : sites) datasets.push_back(s.dataset);
  const std::string pool_id = join_ids(sites);
  SiteDataset pooled = pool_sites(datasets, pool_id);
  if (pooled.size() == 0) throw std::invalid_argument("pooled dataset is empty");

  Site pool = make_site(pool_id, std::move(pooled), plan.dp, sites.front().budget,
                        sites.front().ledger.grid());

  TrainingPlan pooled_plan = plan;
  pooled_plan.site_order = {pool.id};
  std::vector<Site> pool_sites_vec;
  pool_sites_vec.push_back(std::move(pool));
  RunRecord record = cyclical_train(std::move(pool_sites_vec), pooled_plan);
  record.n_sites = static_cast<int>(sites.size());
  return record;
}

}  // namespace dpcwt
