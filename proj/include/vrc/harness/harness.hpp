#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrc/geometry/completion_sample.hpp"
#include "vrc/metrics/metrics.hpp"
#include "vrc/networks/networks.hpp"

namespace vrc::harness {

namespace fs = std::filesystem;
using geo::PointCloud;

struct OptimizerConfig {
  double lr = 1e-4;
  double decay_factor = 0.7;
  std::size_t decay_interval = 40;  // epochs
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunConfig {
  net::ModelConfig model;
  OptimizerConfig optimizer;
  net::LossWeights loss;
  double kl_warmup_frac = 0.1;  // linear ramp of lambda_kl over this share of all steps
  std::size_t epochs = 100;
  std::size_t max_steps = 0;     // 0: no cap
  std::size_t train_slot = 0;    // ground-truth resolution the fine stage is trained against
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir = "runs/default";

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const fs::path& path);

// lr0 * factor^floor(epoch / interval)
double learning_rate(const OptimizerConfig& o, std::size_t epoch);

// Adam with bias correction; moments are kept per parameter name.
class Adam {
 public:
  explicit Adam(OptimizerConfig config) : config_(config) {}
  // Applies one update using the gradients currently held by the store.
  void step(diff::ParamStore& store, double lr);
  std::size_t steps() const noexcept { return t_; }

  // Moments as a store ("m/<name>", "v/<name>") for checkpointing.
  diff::ParamStore export_state() const;
  void import_state(const diff::ParamStore& state, std::size_t steps);

 private:
  OptimizerConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, diff::Tensor> m_, v_;
};

struct TrainPair {
  PointCloud x;  // partial input
  PointCloud y;  // complete target
  std::string category;
};

std::vector<TrainPair> make_pairs(const std::vector<geo::CompletionSample>& samples,
                                  std::size_t slot, const std::string& split = "train");

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double lambda_kl = 0.0;
  double total = 0.0;
  double rec = 0.0, com = 0.0, fine = 0.0;
  double kl_rec = 0.0, kl_com = 0.0, cd_rec = 0.0, cd_com = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // steps completed at the boundary
  double mean_total = 0.0;
  std::optional<metrics::MetricReport> validation;
};

// Append-only. Wall-clock time is kept apart so the remaining content is a
// deterministic function of the run configuration.
struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;

  void append(const StepRecord& r);
  nlohmann::json deterministic_json() const;
  nlohmann::json to_json() const;
  static TrainLog from_json(const nlohmann::json& j);
};

nlohmann::json report_json(const metrics::MetricReport& r);

// Per-sample generator for (seed, step, sample slot); resuming needs only
// the step counter.
std::mt19937_64 step_rng(std::uint64_t seed, std::size_t step, std::size_t sample);

class Trainer {
 public:
  Trainer(RunConfig config, std::vector<TrainPair> train, std::vector<TrainPair> validation = {});

  net::CompletionModel& model() noexcept { return model_; }
  const TrainLog& log() const noexcept { return log_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::size_t total_steps() const;

  // One optimizer step on the batch the schedule assigns to the current step.
  StepRecord train_step();
  // Trains until `epochs` or `max_steps`; with a checkpoint directory, writes
  // checkpoint and log at every epoch boundary (and at the end).
  void run(const std::optional<fs::path>& checkpoint_dir = std::nullopt,
           const std::function<void(const StepRecord&)>& on_step = {});

  void save(const fs::path& dir) const;
  // Restores parameters, optimizer moments, step counter and log.
  void resume(const fs::path& dir);

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  void close_epoch(std::size_t epoch);

  RunConfig config_;
  std::vector<TrainPair> train_, validation_;
  net::CompletionModel model_;
  Adam adam_;
  TrainLog log_;
  std::size_t step_ = 0;
  std::size_t steps_per_epoch_ = 1;
  double epoch_loss_ = 0.0;
  std::size_t epoch_count_ = 0;
};

// Loads a checkpoint written by Trainer::save (model config from metadata).
net::CompletionModel load_model(const fs::path& checkpoint_dir);

struct ResolutionReport {
  std::size_t points = 0;
  std::optional<metrics::MetricReport> report;  // empty when unavailable
};

// For every requested point count present in the dataset: infer at that
// count and score against the matching ground truth.
std::vector<ResolutionReport> evaluate(net::CompletionModel& model,
                                       const std::vector<geo::CompletionSample>& samples,
                                       const std::vector<std::size_t>& resolutions,
                                       std::uint64_t seed);
// Ground truth scored against itself (sanity baseline).
std::vector<ResolutionReport> evaluate_identity(const std::vector<geo::CompletionSample>& samples,
                                                const std::vector<std::size_t>& resolutions);
std::string format_reports(const std::vector<ResolutionReport>& reports, const std::string& method,
                           char delimiter = ',');

struct GradCheckRow {
  std::string scope;
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  double seconds = 0.0;
  bool pass = false;
  std::string worst;
};

inline constexpr double kGradTolerance = 1e-4;

// scope: "kernels", "losses", "end2end" or "all".
std::vector<GradCheckRow> run_gradcheck(const std::string& scope, std::uint64_t seed);
std::string format_gradcheck(const std::vector<GradCheckRow>& rows);

// Small problem instance used by the end-to-end check: 32-point partial,
// 32-point coarse stage, 64-point target.
net::ModelConfig tiny_model_config();

struct AblationResult {
  std::string variant;
  std::size_t parameters = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;  // mean over the final tenth of steps
  TrainLog log;
  std::optional<metrics::MetricReport> report;
};

// Variants: full, psa off, dual_path off, kernel_selection off.
std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<TrainPair>& train,
                                         const std::vector<geo::CompletionSample>& eval_samples,
                                         std::size_t steps);
std::string format_ablation(const std::vector<AblationResult>& results);

}  // namespace vrc::harness
