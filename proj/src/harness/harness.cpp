#include "vrc/harness/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <set>

#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/diffcore/grad_check.hpp"
#include "vrc/diffcore/ops.hpp"
#include "vrc/errors.hpp"

namespace vrc::harness {

using diff::ParamStore;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using nlohmann::json;

// ---- configuration ----

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  const OptimizerConfig& o = optimizer;
  if (!(o.lr > 0.0) || !std::isfinite(o.lr)) throw ConfigError("optimizer.lr must be > 0");
  if (!(o.decay_factor > 0.0 && o.decay_factor <= 1.0))
    throw ConfigError("optimizer.decay_factor must lie in (0, 1]");
  if (o.decay_interval < 1) throw ConfigError("optimizer.decay_interval must be >= 1");
  if (o.batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0 && o.eps > 0.0))
    throw ConfigError("optimizer moments must satisfy 0 <= beta < 1 and eps > 0");
  if (!(kl_warmup_frac >= 0.0 && kl_warmup_frac <= 1.0))
    throw ConfigError("kl_warmup_frac must lie in [0, 1]");
  if (train_slot >= geo::kResolutionMultiples.size())
    throw ConfigError("train_slot must index one of the 4 ground-truth resolutions");
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& item : j.items())
    if (!names.count(item.key()))
      throw ConfigError(std::string("unknown ") + what + " key '" + item.key() + "'");
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  const OptimizerConfig& o = c.optimizer;
  j = json{{"model", c.model},
           {"optimizer",
            {{"lr", o.lr},
             {"decay_factor", o.decay_factor},
             {"decay_interval", o.decay_interval},
             {"batch_size", o.batch_size},
             {"beta1", o.beta1},
             {"beta2", o.beta2},
             {"eps", o.eps}}},
           {"loss", c.loss},
           {"kl_warmup_frac", c.kl_warmup_frac},
           {"epochs", c.epochs},
           {"max_steps", c.max_steps},
           {"train_slot", c.train_slot},
           {"seed", c.seed},
           {"data_dir", c.data_dir},
           {"out_dir", c.out_dir}};
}

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j,
                 {"model", "optimizer", "loss", "kl_warmup_frac", "epochs", "max_steps",
                  "train_slot", "seed", "data_dir", "out_dir"},
                 "run");
  if (j.contains("model")) net::from_json(j.at("model"), c.model);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"lr", "decay_factor", "decay_interval", "batch_size", "beta1", "beta2", "eps"},
                   "optimizer");
    read_key(o, "lr", c.optimizer.lr);
    read_key(o, "decay_factor", c.optimizer.decay_factor);
    read_key(o, "decay_interval", c.optimizer.decay_interval);
    read_key(o, "batch_size", c.optimizer.batch_size);
    read_key(o, "beta1", c.optimizer.beta1);
    read_key(o, "beta2", c.optimizer.beta2);
    read_key(o, "eps", c.optimizer.eps);
  }
  if (j.contains("loss")) net::from_json(j.at("loss"), c.loss);
  read_key(j, "kl_warmup_frac", c.kl_warmup_frac);
  read_key(j, "epochs", c.epochs);
  read_key(j, "max_steps", c.max_steps);
  read_key(j, "train_slot", c.train_slot);
  read_key(j, "seed", c.seed);
  read_key(j, "data_dir", c.data_dir);
  read_key(j, "out_dir", c.out_dir);
  c.validate();
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = diff::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<RunConfig>();
}

double learning_rate(const OptimizerConfig& o, std::size_t epoch) {
  return o.lr * std::pow(o.decay_factor, static_cast<double>(epoch / o.decay_interval));
}

// ---- Adam ----

void Adam::step(ParamStore& store, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, p] : store.entries()) {
    if (p.grad.size() != p.value.size()) p.zero_grad();
    auto [mit, m_new] = m_.try_emplace(name, p.value.shape());
    auto [vit, v_new] = v_.try_emplace(name, p.value.shape());
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto g = p.grad.data();
    auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

ParamStore Adam::export_state() const {
  ParamStore s;
  for (const auto& [name, t] : m_) s.assign("m/" + name, t);
  for (const auto& [name, t] : v_) s.assign("v/" + name, t);
  return s;
}

void Adam::import_state(const ParamStore& state, std::size_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& [name, p] : state.entries()) {
    if (name.rfind("m/", 0) == 0) m_[name.substr(2)] = p.value;
    else if (name.rfind("v/", 0) == 0) v_[name.substr(2)] = p.value;
    else throw DataError(DataErrorCode::parse, "optimizer state entry '" + name + "' is unknown");
  }
  t_ = steps;
}

// ---- data ----

std::vector<TrainPair> make_pairs(const std::vector<geo::CompletionSample>& samples,
                                  std::size_t slot, const std::string& split) {
  VRC_REQUIRE(slot < geo::kResolutionMultiples.size(), "make_pairs: bad resolution slot");
  std::vector<TrainPair> out;
  for (const auto& s : samples)
    if (split.empty() || s.split == split) out.push_back({s.partial, s.complete[slot], s.category});
  return out;
}

// ---- log ----

namespace {

json step_json(const StepRecord& r) {
  return json{{"step", r.step},     {"epoch", r.epoch},   {"lr", r.lr},
              {"lambda_kl", r.lambda_kl}, {"total", r.total}, {"rec", r.rec},
              {"com", r.com},       {"fine", r.fine},     {"kl_rec", r.kl_rec},
              {"kl_com", r.kl_com}, {"cd_rec", r.cd_rec}, {"cd_com", r.cd_com}};
}

StepRecord step_from(const json& j) {
  StepRecord r;
  r.step = j.at("step");
  r.epoch = j.at("epoch");
  r.lr = j.at("lr");
  r.lambda_kl = j.at("lambda_kl");
  r.total = j.at("total");
  r.rec = j.at("rec");
  r.com = j.at("com");
  r.fine = j.at("fine");
  r.kl_rec = j.at("kl_rec");
  r.kl_com = j.at("kl_com");
  r.cd_rec = j.at("cd_rec");
  r.cd_com = j.at("cd_com");
  return r;
}

metrics::MetricReport report_from(const json& j) {
  metrics::MetricReport r;
  r.points = j.at("points");
  r.cd_e4 = j.at("cd_e4");
  r.fscore = j.at("fscore");
  r.count = j.at("count");
  for (const auto& [name, s] : j.at("per_category").items())
    r.per_category[name] = {s.at("cd_e4"), s.at("fscore"), s.at("count")};
  r.flagged_categories = j.at("flagged_categories").get<std::vector<std::string>>();
  return r;
}

}  // namespace

json report_json(const metrics::MetricReport& r) {
  json cats = json::object();
  for (const auto& [name, s] : r.per_category)
    cats[name] = {{"cd_e4", s.cd_e4}, {"fscore", s.fscore}, {"count", s.count}};
  return json{{"points", r.points},   {"cd_e4", r.cd_e4},         {"fscore", r.fscore},
              {"count", r.count},     {"per_category", cats},
              {"flagged_categories", r.flagged_categories}};
}

void TrainLog::append(const StepRecord& r) {
  if (!steps.empty() && r.step <= steps.back().step)
    throw ContractError("TrainLog: step " + std::to_string(r.step) + " does not follow step " +
                        std::to_string(steps.back().step));
  steps.push_back(r);
}

json TrainLog::deterministic_json() const {
  json s = json::array();
  for (const auto& r : steps) s.push_back(step_json(r));
  json e = json::array();
  for (const auto& r : epochs) {
    json item{{"epoch", r.epoch}, {"step", r.step}, {"mean_total", r.mean_total}};
    if (r.validation) item["validation"] = report_json(*r.validation);
    e.push_back(item);
  }
  return json{{"steps", s}, {"epochs", e}};
}

json TrainLog::to_json() const {
  json j = deterministic_json();
  j["wall_seconds"] = wall_seconds;
  return j;
}

TrainLog TrainLog::from_json(const json& j) {
  TrainLog log;
  for (const auto& s : j.at("steps")) log.append(step_from(s));
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch");
    r.step = e.at("step");
    r.mean_total = e.at("mean_total");
    if (e.contains("validation")) r.validation = report_from(e.at("validation"));
    log.epochs.push_back(r);
  }
  log.wall_seconds = j.value("wall_seconds", 0.0);
  return log;
}

std::mt19937_64 step_rng(std::uint64_t seed, std::size_t step, std::size_t sample) {
  return std::mt19937_64(
      diff::mix_seed(seed, "step/" + std::to_string(step) + "/" + std::to_string(sample)));
}

// ---- trainer ----

Trainer::Trainer(RunConfig config, std::vector<TrainPair> train, std::vector<TrainPair> validation)
    : config_(std::move(config)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      model_((config_.validate(), config_.model), config_.seed),
      adam_(config_.optimizer) {
  if (train_.empty()) throw DataError(DataErrorCode::count_mismatch, "no training pairs");
  for (const TrainPair& p : train_) {
    if (p.x.size() != config_.model.partial_n)
      throw DataError(DataErrorCode::count_mismatch,
                      "training partial has " + std::to_string(p.x.size()) +
                          " points but the model expects " + std::to_string(config_.model.partial_n));
    if (p.y.empty()) throw DataError(DataErrorCode::count_mismatch, "empty training target");
  }
  const std::size_t b = std::min(config_.optimizer.batch_size, train_.size());
  steps_per_epoch_ = (train_.size() + b - 1) / b;
}

std::size_t Trainer::total_steps() const {
  const std::size_t all = config_.epochs * steps_per_epoch_;
  return config_.max_steps ? std::min(all, config_.max_steps) : all;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(diff::mix_seed(config_.seed, "epoch/" + std::to_string(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

StepRecord Trainer::train_step() {
  const std::size_t epoch = step_ / steps_per_epoch_;
  const std::size_t within = step_ % steps_per_epoch_;
  const std::size_t b = std::min(config_.optimizer.batch_size, train_.size());
  const auto order = epoch_order(epoch);
  const std::size_t begin = within * b;
  const std::size_t end = std::min(begin + b, order.size());

  net::LossWeights w = config_.loss;
  const double warm = config_.kl_warmup_frac * static_cast<double>(total_steps());
  if (warm > 0.0) w.lambda_kl *= std::min(1.0, static_cast<double>(step_ + 1) / warm);

  StepRecord rec;
  rec.step = step_;
  rec.epoch = epoch;
  rec.lr = learning_rate(config_.optimizer, epoch);
  rec.lambda_kl = w.lambda_kl;
  model_.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const TrainPair& pair = train_[order[i]];
    auto rng = step_rng(config_.seed, step_, i - begin);
    Tape tape;
    net::LossBreakdown loss;
    try {
      loss = model_.joint_loss(tape, pair.x, pair.y, w, rng);
    } catch (const ContractError&) {
      // Non-finite coordinates trip the point-cloud checks; report the node.
      tape.check_finite();
      throw;
    }
    if (!std::isfinite(loss.total.value().item())) {
      tape.check_finite();
      throw NumericError("non-finite loss at step " + std::to_string(step_));
    }
    tape.backward(diff::scale(loss.total, inv));
    rec.total += inv * loss.total.value().item();
    rec.rec += inv * loss.rec;
    rec.com += inv * loss.com;
    rec.fine += inv * loss.fine;
    rec.kl_rec += inv * loss.kl_rec;
    rec.kl_com += inv * loss.kl_com;
    rec.cd_rec += inv * loss.cd_rec;
    rec.cd_com += inv * loss.cd_com;
  }
  for (const auto& [name, p] : model_.params().entries())
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  adam_.step(model_.params(), rec.lr);
  log_.append(rec);
  epoch_loss_ += rec.total;
  ++epoch_count_;
  ++step_;
  return rec;
}

void Trainer::close_epoch(std::size_t epoch) {
  EpochRecord e;
  e.epoch = epoch;
  e.step = step_;
  e.mean_total = epoch_count_ ? epoch_loss_ / static_cast<double>(epoch_count_) : 0.0;
  if (!validation_.empty()) {
    std::vector<PointCloud> preds;
    std::vector<geo::CompletionSample> gts;
    for (std::size_t i = 0; i < validation_.size(); ++i) {
      const TrainPair& p = validation_[i];
      auto rng = step_rng(config_.seed, std::numeric_limits<std::size_t>::max(), i);
      preds.push_back(model_.infer(p.x, p.y.size(), rng).fine);
      geo::CompletionSample s;
      s.partial = p.x;
      s.complete[0] = p.y;
      s.category = p.category;
      gts.push_back(std::move(s));
    }
    e.validation = metrics::evaluate_dataset(preds, gts, 0);
  }
  log_.epochs.push_back(e);
  epoch_loss_ = 0.0;
  epoch_count_ = 0;
}

void Trainer::run(const std::optional<fs::path>& checkpoint_dir,
                  const std::function<void(const StepRecord&)>& on_step) {
  const auto start = std::chrono::steady_clock::now();
  const double wall_before = log_.wall_seconds;
  const std::size_t total = total_steps();
  auto stamp = [&] {
    log_.wall_seconds =
        wall_before + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  while (step_ < total) {
    const StepRecord r = train_step();
    if (on_step) on_step(r);
    if (step_ % steps_per_epoch_ == 0) {
      close_epoch(r.epoch);
      stamp();
      if (checkpoint_dir) save(*checkpoint_dir);
    }
  }
  stamp();
  if (checkpoint_dir) save(*checkpoint_dir);
}

void Trainer::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(DataErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
  json meta{{"step", step_}, {"model_config", config_.model}, {"run_config", config_}};
  diff::save_checkpoint(model_.params(), dir / "model.json", meta);
  diff::save_checkpoint(adam_.export_state(), dir / "optimizer.json",
                        json{{"step", step_}, {"adam_steps", adam_.steps()}});
  diff::write_file_atomic(dir / "train_log.json", log_.to_json().dump(2) + "\n");
  // Written last: a crash before this point leaves the previous state file,
  // whose step no longer matches and is rejected on resume.
  diff::write_file_atomic(dir / "state.json", json{{"step", step_},
                                                   {"epoch_loss", epoch_loss_},
                                                   {"epoch_count", epoch_count_}}
                                                      .dump(2) +
                                                  "\n");
}

void Trainer::resume(const fs::path& dir) {
  json state;
  try {
    state = json::parse(diff::read_file(dir / "state.json"));
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, (dir / "state.json").string() + ": " + e.what());
  }
  const std::size_t step = state.at("step");
  const json meta = diff::read_checkpoint_metadata(dir / "model.json");
  if (meta.at("step").get<std::size_t>() != step)
    throw DataError(DataErrorCode::count_mismatch, dir.string() + ": checkpoint step mismatch");
  if (meta.at("model_config") != json(config_.model))
    throw ConfigError("checkpoint in '" + dir.string() + "' was trained with a different model config");
  diff::load_checkpoint(model_.params(), dir / "model.json");
  ParamStore opt;
  const json opt_meta = diff::load_checkpoint(opt, dir / "optimizer.json");
  if (opt_meta.at("step").get<std::size_t>() != step)
    throw DataError(DataErrorCode::count_mismatch, dir.string() + ": optimizer step mismatch");
  adam_.import_state(opt, opt_meta.at("adam_steps"));
  try {
    log_ = TrainLog::from_json(json::parse(diff::read_file(dir / "train_log.json")));
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, (dir / "train_log.json").string() + ": " + e.what());
  }
  step_ = step;
  epoch_loss_ = state.at("epoch_loss");
  epoch_count_ = state.at("epoch_count");
}

net::CompletionModel load_model(const fs::path& dir) {
  const json meta = diff::read_checkpoint_metadata(dir / "model.json");
  net::ModelConfig cfg;
  try {
    cfg = meta.at("model_config").get<net::ModelConfig>();
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, (dir / "model.json").string() + ": " + e.what());
  }
  net::CompletionModel model(cfg, 0);
  diff::load_checkpoint(model.params(), dir / "model.json");
  return model;
}

// ---- evaluation ----

namespace {

int slot_for_points(const std::vector<geo::CompletionSample>& samples, std::size_t points) {
  if (samples.empty()) return -1;
  for (std::size_t r = 0; r < geo::kResolutionMultiples.size(); ++r) {
    bool all = true;
    for (const auto& s : samples) all = all && s.complete[r].size() == points;
    if (all) return static_cast<int>(r);
  }
  return -1;
}

}  // namespace

std::vector<ResolutionReport> evaluate(net::CompletionModel& model,
                                       const std::vector<geo::CompletionSample>& samples,
                                       const std::vector<std::size_t>& resolutions,
                                       std::uint64_t seed) {
  std::vector<ResolutionReport> out;
  for (std::size_t points : resolutions) {
    ResolutionReport rr;
    rr.points = points;
    const int slot = slot_for_points(samples, points);
    if (slot >= 0) {
      std::vector<PointCloud> preds(samples.size());
      std::vector<std::exception_ptr> errors(samples.size());
      const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
          auto rng = step_rng(seed, points, i);
          preds[i] = model.infer(samples[i].partial, points, rng).fine;
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
      rr.report = metrics::evaluate_dataset(preds, samples, static_cast<std::size_t>(slot));
    }
    out.push_back(std::move(rr));
  }
  return out;
}

std::vector<ResolutionReport> evaluate_identity(const std::vector<geo::CompletionSample>& samples,
                                                const std::vector<std::size_t>& resolutions) {
  std::vector<ResolutionReport> out;
  for (std::size_t points : resolutions) {
    ResolutionReport rr;
    rr.points = points;
    const int slot = slot_for_points(samples, points);
    if (slot >= 0) {
      std::vector<PointCloud> preds;
      for (const auto& s : samples) preds.push_back(s.complete[static_cast<std::size_t>(slot)]);
      rr.report = metrics::evaluate_dataset(preds, samples, static_cast<std::size_t>(slot));
    }
    out.push_back(std::move(rr));
  }
  return out;
}

std::string format_reports(const std::vector<ResolutionReport>& reports, const std::string& method,
                           char delimiter) {
  std::vector<metrics::MetricReport> available;
  std::string unavailable;
  for (const auto& r : reports) {
    if (r.report) available.push_back(*r.report);
    else unavailable += (unavailable.empty() ? "" : " ") + std::to_string(r.points);
  }
  std::string out = available.empty() ? "" : metrics::to_table(available, method, delimiter);
  if (!unavailable.empty()) out += "unavailable resolutions: " + unavailable + "\n";
  return out;
}

// ---- gradient checks ----

net::ModelConfig tiny_model_config() {
  net::ModelConfig c;
  c.d_z = 8;
  c.encoder_widths = {16, 32};
  c.decoder_widths = {32};
  c.partial_n = 32;
  c.coarse_n = 32;
  c.renet_widths = {8, 8, 8};
  c.k_a = 4;
  c.k_b = 8;
  c.pool_k = 8;
  c.unpool_k = 3;
  c.efe_k = 8;
  c.max_out_n = 128;
  return c;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Values bounded away from zero, so relu kinks sit far from every probe.
Tensor off_zero_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data()) if (sign(rng)) v = -v;
  return t;
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  return PointCloud(random_tensor(Shape{n, 3}, rng));
}

// Weighted sum with fixed random weights: a generic scalar read-out. The
// small scale keeps roundoff in the loss value far below the 1e-8 error
// floor, which matters for coordinates whose true gradient is exactly zero
// (softmax shift invariance, saturated units).
Var readout(Var x, std::mt19937_64& rng) {
  Tensor w = random_tensor(x.shape(), rng, -1e-3, 1e-3);
  return diff::sum(diff::mul(x, x.tape().constant(std::move(w))));
}

// Zero-initialized biases put ReLU inputs exactly on the kink (both
// projections zero); a small random shift makes the configuration generic.
void jitter(ParamStore& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& [name, p] : store.entries())
    for (double& v : p.value.data()) v += u(rng);
}

struct Case {
  std::string scope;
  std::string name;
  std::function<diff::GradCheckReport(std::mt19937_64&)> run;
};

diff::GradCheckReport worse(const diff::GradCheckReport& a, const diff::GradCheckReport& b) {
  diff::GradCheckReport r = a.max_rel_error >= b.max_rel_error ? a : b;
  r.checked = a.checked + b.checked;
  return r;
}

// Checks the input leaves and every parameter of the store.
diff::GradCheckReport check_both(const std::function<Var(Tape&, Var)>& f, Tensor input,
                                 ParamStore& store, std::uint64_t readout_seed) {
  auto leaf = diff::grad_check(
      [&](Tape& t, std::span<const Var> in) {
        std::mt19937_64 r(readout_seed);
        return readout(f(t, in[0]), r);
      },
      {input});
  const auto probes = diff::all_probes(store);
  auto params = diff::grad_check_params(
      [&](Tape& t) {
        std::mt19937_64 r(readout_seed);
        return readout(f(t, t.constant(input)), r);
      },
      store, probes);
  return worse(leaf, params);
}

std::vector<Case> all_cases() {
  std::vector<Case> cases;
  auto leaves = [](std::function<Var(Tape&, std::span<const Var>, std::mt19937_64&)> f,
                   std::vector<Shape> shapes, bool off_zero = false) {
    return [f, shapes, off_zero](std::mt19937_64& rng) {
      std::vector<Tensor> in;
      for (const Shape& s : shapes) in.push_back(off_zero ? off_zero_tensor(s, rng) : random_tensor(s, rng));
      const std::uint64_t rs = rng();
      return diff::grad_check(
          [&](Tape& t, std::span<const Var> v) {
            std::mt19937_64 r(rs);
            return f(t, v, r);
          },
          in);
    };
  };

  cases.push_back({"kernels", "linear",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     return readout(diff::square(diff::linear(v[0], v[1], v[2])), r);
                   }, {{5, 4}, {4, 3}, {3}})});
  cases.push_back({"kernels", "relu",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     return readout(diff::square(diff::relu(v[0])), r);
                   }, {{6, 5}}, true)});
  cases.push_back({"kernels", "exp/clamp",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     return readout(diff::exp(diff::clamp(v[0], -0.5, 0.5)), r);
                   }, {{4, 4}}, true)});
  cases.push_back({"kernels", "softmax_pair",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     auto [a, b] = diff::softmax_pair(v[0], v[1]);
                     return diff::add(readout(a, r), readout(diff::square(b), r));
                   }, {{7}, {7}})});
  cases.push_back({"kernels", "reduce_mean",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     return readout(diff::square(diff::reduce(v[0], diff::Reduce::mean)), r);
                   }, {{6, 4}})});
  cases.push_back({"kernels", "reduce_max",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     return readout(diff::square(diff::reduce(v[0], diff::Reduce::max)), r);
                   }, {{6, 4}})});
  cases.push_back({"kernels", "row ops",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64& r) {
                     Var m = diff::mul_row(diff::add_row(v[0], v[1]), v[1]);
                     Var c = diff::concat_cols(m, v[0]);
                     const std::uint32_t idx[] = {2, 0, 2, 1};
                     const Var parts[] = {c, diff::scale(c, 0.5)};
                     return readout(diff::square(diff::gather_rows(diff::interleave_rows(parts), idx)), r);
                   }, {{3, 4}, {4}})});

  cases.push_back({"kernels", "psa", [](std::mt19937_64& rng) {
                     ParamStore store(rng());
                     const auto p = rel::make_psa(store, "psa", 4, 5);
                     jitter(store, rng);
                     const PointCloud cloud = random_cloud(12, rng);
                     const auto nbr = geo::knn_index(cloud, 4);
                     return check_both([&](Tape& t, Var x) { return rel::psa_forward(t, store, x, nbr, p); },
                                       random_tensor({12, 4}, rng), store, rng());
                   }});
  cases.push_back({"kernels", "psk", [](std::mt19937_64& rng) {
                     ParamStore store(rng());
                     const auto p = rel::make_psk(store, "psk", 4, 6, {3, 5, false, false});
                     jitter(store, rng);
                     const PointCloud cloud = random_cloud(12, rng);
                     return check_both([&](Tape& t, Var x) { return rel::psk_forward(t, store, x, cloud, p).v; },
                                       random_tensor({12, 4}, rng), store, rng());
                   }});
  cases.push_back({"kernels", "r-psk", [](std::mt19937_64& rng) {
                     ParamStore store(rng());
                     const auto p = rel::make_rpsk(store, "rpsk", 4, 6, {3, 5, false, false});
                     jitter(store, rng);
                     jitter(store, rng);
                     const PointCloud cloud = random_cloud(12, rng);
                     return check_both([&](Tape& t, Var x) { return rel::rpsk_forward(t, store, x, cloud, p); },
                                       random_tensor({12, 4}, rng), store, rng());
                   }});
  cases.push_back({"kernels", "ep/eu", [](std::mt19937_64& rng) {
                     ParamStore store(rng());
                     const PointCloud cloud = random_cloud(16, rng);
                     const std::uint64_t seed = rng();
                     // Positions are leaves as well, so the interpolation
                     // weights are checked along with the features.
                     auto leaf = diff::grad_check(
                         [&](Tape&, std::span<const Var> v) {
                           std::mt19937_64 r(seed);
                           const PointCloud moved(v[1].value());
                           auto fine = rel::make_level(moved, v[0], 4);
                           fine.position = v[1];
                           auto coarse = rel::ep_pool(fine, 0.5, 4, seed);
                           coarse.features = diff::square(coarse.features);
                           const PointCloud query = cloud;
                           return diff::add(readout(rel::eu_unpool(coarse, moved, 3, v[1]), r),
                                            readout(rel::eu_unpool(coarse, query, 3), r));
                         },
                         {random_tensor({16, 3}, rng), cloud.xyz()});
                     return leaf;
                   }});
  cases.push_back({"kernels", "efe", [](std::mt19937_64& rng) {
                     ParamStore store(rng());
                     const auto p = rel::make_efe(store, "efe", 4, 2, 3);
                     jitter(store, rng);
                     const PointCloud cloud = random_cloud(6, rng);
                     return check_both([&](Tape& t, Var x) { return rel::efe_expand(t, store, x, cloud, p); },
                                       random_tensor({6, 4}, rng), store, rng());
                   }});

  cases.push_back({"losses", "chamfer",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64&) {
                     return metrics::chamfer(v[0], v[1]);
                   }, {{16, 3}, {24, 3}})});
  cases.push_back({"losses", "gaussian_kl",
                   leaves([](Tape&, std::span<const Var> v, std::mt19937_64&) {
                     return metrics::gaussian_kl(v[0], v[1], v[2], v[3]);
                   }, {{6}, {6}, {6}, {6}})});

  cases.push_back({"end2end", "joint_loss", [](std::mt19937_64& rng) {
                     net::CompletionModel model(tiny_model_config(), rng());
                     jitter(model.params(), rng);
                     const PointCloud y = random_cloud(64, rng);
                     std::vector<std::uint32_t> first(32);
                     std::iota(first.begin(), first.end(), 0u);
                     const PointCloud x = y.subset(first);
                     const std::uint64_t seed = rng();
                     const auto probes = diff::sample_probes(model.params(), 64, rng());
                     // Posterior of the target at the unperturbed parameters.
                     Tensor gf, mean, logvar;
                     {
                       Tape t;
                       const auto q = model.encode(t, y, net::Head::complete_q_phi);
                       gf = q.global_feature.value();
                       mean = q.mean.value();
                       logvar = q.logvar.value();
                     }
                     return diff::grad_check_params(
                         [&](Tape& t) {
                           std::mt19937_64 r(seed);
                           const net::Encoded fixed{t.constant(gf), t.constant(mean), t.constant(logvar)};
                           // Scaled for the same reason as readout().
                           return diff::scale(
                               model.joint_loss(t, x, y, net::LossWeights{}, r, 0, &fixed).total, 1e-3);
                         },
                         model.params(), probes);
                   }});
  return cases;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(const std::string& scope, std::uint64_t seed) {
  if (scope != "all" && scope != "kernels" && scope != "losses" && scope != "end2end")
    throw ConfigError("unknown gradcheck scope '" + scope + "' (kernels, losses, end2end, all)");
  std::vector<GradCheckRow> rows;
  for (const Case& c : all_cases()) {
    if (scope != "all" && c.scope != scope) continue;
    std::mt19937_64 rng(diff::mix_seed(seed, c.name));
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = c.run(rng);
    GradCheckRow row;
    row.scope = c.scope;
    row.name = c.name;
    row.max_rel_error = r.max_rel_error;
    row.checked = r.checked;
    row.worst = r.worst;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.pass = r.checked > 0 && r.max_rel_error < kGradTolerance;
    rows.push_back(row);
  }
  return rows;
}

std::string format_gradcheck(const std::vector<GradCheckRow>& rows) {
  std::string out = "scope     check          coords  max_rel_err  seconds  result\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-9s %-14s %6zu  %11.3e  %7.2f  %s\n", r.scope.c_str(),
                  r.name.c_str(), r.checked, r.max_rel_error, r.seconds, r.pass ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

// ---- ablation ----

std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<TrainPair>& train,
                                         const std::vector<geo::CompletionSample>& eval_samples,
                                         std::size_t steps) {
  struct Variant {
    const char* name;
    bool psa, dual, select;
  };
  const Variant variants[] = {{"full", true, true, true},
                              {"no_psa", false, true, true},
                              {"no_dual_path", true, false, true},
                              {"no_kernel_selection", true, true, false}};
  std::vector<AblationResult> out;
  for (const Variant& v : variants) {
    RunConfig cfg = base;
    cfg.model.psa = v.psa;
    cfg.model.dual_path = v.dual;
    cfg.model.kernel_selection = v.select;
    cfg.max_steps = steps;
    cfg.epochs = std::max<std::size_t>(cfg.epochs, steps);
    Trainer trainer(cfg, train);
    trainer.run();
    AblationResult r;
    r.variant = v.name;
    r.parameters = trainer.model().params().scalar_count();
    r.log = trainer.log();
    const auto& s = r.log.steps;
    if (!s.empty()) {
      r.first_loss = s.front().total;
      const std::size_t tail = std::max<std::size_t>(1, s.size() / 10);
      double sum = 0.0;
      for (std::size_t i = s.size() - tail; i < s.size(); ++i) sum += s[i].total;
      r.last_loss = sum / static_cast<double>(tail);
    }
    if (!eval_samples.empty()) {
      const std::size_t points = eval_samples.front().complete[0].size();
      auto reports = evaluate(trainer.model(), eval_samples, {points}, cfg.seed);
      r.report = reports.front().report;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_ablation(const std::vector<AblationResult>& results) {
  std::string out = "variant,parameters,first_loss,last_loss,cd_e4,f1\n";
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%s,%zu,%.6f,%.6f,", r.variant.c_str(), r.parameters,
                  r.first_loss, r.last_loss);
    out += line;
    if (r.report) {
      std::snprintf(line, sizeof line, "%.4f,%.4f\n", r.report->cd_e4, r.report->fscore);
      out += line;
    } else {
      out += "-,-\n";
    }
  }
  return out;
}

}  // namespace vrc::harness
