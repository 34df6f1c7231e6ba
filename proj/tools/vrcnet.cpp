// vrcnet: dataset generation, training, evaluation and diagnostics.
//
// Exit codes: 0 ok, 2 configuration or usage error, 3 data error,
// 4 numeric failure (including a failed gradient check).

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/errors.hpp"
#include "vrc/harness/harness.hpp"
#include "vrc/mvpgen/mvpgen.hpp"

namespace {

using namespace vrc;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
};

harness::RunConfig run_config(const Globals& g) {
  harness::RunConfig c = g.config.empty() ? harness::RunConfig{} : harness::load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  std::size_t w = 0, h = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || w == 0 || h == 0)
    throw ConfigError("--grid expects WxH, got '" + text + "'");
  return {w, h};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  diff::write_file_atomic(path, text);
}

// ---- gen-data ----

struct GenArgs {
  std::string models;
  std::size_t synthetic = 0;
  std::size_t synthetic_points = 0;
  std::string out;
  std::size_t base_n = 512;
  std::string grid = "200x150";
  double split_frac = 0.1;
  int jobs = 1;
};

int gen_data(const Globals& g, const GenArgs& a) {
  if (a.models.empty() == (a.synthetic == 0))
    throw ConfigError("gen-data needs exactly one of --models and --synthetic");
  mvp::GenerationOptions o;
  o.base_n = a.base_n;
  std::tie(o.grid_w, o.grid_h) = parse_grid(a.grid);
  o.seed = g.seed.value_or(0);
  o.split_frac = a.split_frac;
  const std::size_t dense_n = a.synthetic_points ? a.synthetic_points : 32 * a.base_n;
  const auto models =
      a.models.empty() ? mvp::synthetic_models(a.synthetic, dense_n, o.seed) : mvp::load_models(a.models);
  const mvp::Dataset d = mvp::generate_dataset(models, o, a.jobs);
  mvp::write_dataset(a.out, d, o);
  std::printf("models %zu  samples %zu  skipped views %zu  -> %s\n", models.size(), d.samples.size(),
              d.skipped.size(), a.out.c_str());
  for (const auto& s : d.skipped)
    std::printf("  skipped %s view %d: %s\n", s.model_id.c_str(), s.view_index, s.reason.c_str());
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
  bool resume = false;
  std::size_t print_every = 50;
};

int train(const Globals& g, const TrainArgs& a) {
  harness::RunConfig c = run_config(g);
  if (!a.data.empty()) c.data_dir = a.data;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.max_steps) c.max_steps = *a.max_steps;
  if (c.data_dir.empty()) throw ConfigError("no dataset: pass --data or set data_dir in the config");
  const mvp::Dataset d = mvp::read_dataset(c.data_dir);
  auto train_pairs = harness::make_pairs(d.samples, c.train_slot, "train");
  auto val_pairs = harness::make_pairs(d.samples, c.train_slot, "test");
  if (!train_pairs.empty() && train_pairs.front().x.size() != c.model.partial_n)
    throw ConfigError("dataset partials have " + std::to_string(train_pairs.front().x.size()) +
                      " points but model.partial_n is " + std::to_string(c.model.partial_n));
  harness::Trainer trainer(c, std::move(train_pairs), std::move(val_pairs));
  const fs::path ckpt = fs::path(c.out_dir) / "checkpoint";
  if (a.resume) trainer.resume(ckpt);
  write_text(fs::path(c.out_dir) / "run_config.json", nlohmann::json(c).dump(2) + "\n");
  std::printf("parameters %zu  steps/epoch %zu  total steps %zu  starting at %zu\n",
              trainer.model().params().scalar_count(), trainer.steps_per_epoch(), trainer.total_steps(),
              trainer.step());
  trainer.run(ckpt, [&](const harness::StepRecord& r) {
    if (a.print_every && (r.step + 1) % a.print_every == 0)
      std::printf("step %6zu  epoch %4zu  lr %.3g  total %.6f  fine %.6f  kl_com %.4f\n", r.step + 1,
                  r.epoch, r.lr, r.total, r.fine, r.kl_com);
  });
  const auto& log = trainer.log();
  if (!log.epochs.empty()) {
    const auto& e = log.epochs.back();
    std::printf("epoch %zu  mean loss %.6f", e.epoch, e.mean_total);
    if (e.validation) std::printf("  val cd_e4 %.3f  f1 %.4f", e.validation->cd_e4, e.validation->fscore);
    std::printf("\n");
  }
  std::printf("checkpoint -> %s (%.1f s)\n", ckpt.c_str(), log.wall_seconds);
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::size_t> resolutions;
  std::string split = "test";
  bool identity = false;
  bool tsv = false;
  std::string out;
};

int eval(const Globals& g, const EvalArgs& a) {
  if (a.data.empty()) throw ConfigError("eval needs --data");
  if (!a.identity && a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --identity)");
  mvp::Dataset d = mvp::read_dataset(a.data);
  std::vector<geo::CompletionSample> samples;
  for (auto& s : d.samples)
    if (a.split == "all" || s.split == a.split) samples.push_back(std::move(s));
  if (samples.empty()) throw DataError(DataErrorCode::count_mismatch, "no samples in split '" + a.split + "'");
  std::vector<std::size_t> res = a.resolutions;
  if (res.empty())
    for (std::size_t m : geo::kResolutionMultiples) res.push_back(m * samples.front().partial.size());
  const char delim = a.tsv ? '\t' : ',';
  std::string table;
  if (a.identity) {
    table = harness::format_reports(harness::evaluate_identity(samples, res), "ground-truth", delim);
  } else {
    net::CompletionModel model = harness::load_model(a.checkpoint);
    table = harness::format_reports(harness::evaluate(model, samples, res, g.seed.value_or(0)), "vrcnet", delim);
  }
  std::fputs(table.c_str(), stdout);
  if (!a.out.empty()) write_text(a.out, table);
  return kOk;
}

// ---- gradcheck ----

int gradcheck(const Globals& g, const std::string& scope) {
  const auto rows = harness::run_gradcheck(scope, g.seed.value_or(0));
  std::fputs(harness::format_gradcheck(rows).c_str(), stdout);
  for (const auto& r : rows)
    if (!r.pass) {
      std::printf("worst coordinate of %s: %s\n", r.name.c_str(), r.worst.c_str());
      return kNumeric;
    }
  return kOk;
}

// ---- ablate ----

struct AblateArgs {
  std::string data;
  std::size_t steps = 500;
  std::string out;
};

int ablate(const Globals& g, const AblateArgs& a) {
  harness::RunConfig c = run_config(g);
  if (!a.data.empty()) c.data_dir = a.data;
  if (c.data_dir.empty()) throw ConfigError("no dataset: pass --data or set data_dir in the config");
  const mvp::Dataset d = mvp::read_dataset(c.data_dir);
  const auto train_pairs = harness::make_pairs(d.samples, c.train_slot, "train");
  std::vector<geo::CompletionSample> eval_samples;
  for (const auto& s : d.samples)
    if (s.split == "test") eval_samples.push_back(s);
  const auto results = harness::run_ablation(c, train_pairs, eval_samples, a.steps);
  const std::string table = harness::format_ablation(results);
  std::fputs(table.c_str(), stdout);
  if (!a.out.empty()) {
    nlohmann::json logs = nlohmann::json::object();
    for (const auto& r : results) logs[r.variant] = r.log.to_json();
    write_text(fs::path(a.out) / "ablation.csv", table);
    write_text(fs::path(a.out) / "ablation_logs.json", logs.dump(2) + "\n");
  }
  return kOk;
}

// ---- infer ----

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::size_t points = 0;
};

int infer(const Globals& g, const InferArgs& a) {
  net::CompletionModel model = harness::load_model(a.checkpoint);
  const geo::PointCloud x = mvp::read_xyz(a.input);
  if (x.size() != model.config().partial_n)
    throw DataError(DataErrorCode::count_mismatch,
                    a.input + " has " + std::to_string(x.size()) + " points, the model takes " +
                        std::to_string(model.config().partial_n));
  std::mt19937_64 rng(diff::mix_seed(g.seed.value_or(0), "infer"));
  const std::size_t n = a.points ? a.points : 4 * x.size();
  const auto r = model.infer(x, n, rng);
  mvp::write_xyz(a.out, r.fine);
  std::printf("coarse %zu  fine %zu -> %s\n", r.coarse.size(), r.fine.size(), a.out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud completion: data, training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for all randomness");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render partial views and sample ground truth");
  auto* models_opt = gen_cmd->add_option("--models", gen.models, "<dir>/<category>/<id>.xyz dense clouds");
  gen_cmd->add_option("--synthetic", gen.synthetic, "Use N synthetic analytic shapes instead")->excludes(models_opt);
  gen_cmd->add_option("--synthetic-points", gen.synthetic_points, "Dense points per synthetic shape");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--base-n", gen.base_n, "Partial size and 1x ground-truth size");
  gen_cmd->add_option("--grid", gen.grid, "Z-buffer grid WxH");
  gen_cmd->add_option("--split-frac", gen.split_frac, "Share of models in the test split");
  gen_cmd->add_option("--jobs", gen.jobs, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train and checkpoint at every epoch boundary");
  train_cmd->add_option("--data", tr.data, "Dataset directory");
  train_cmd->add_option("--out", tr.out, "Results directory");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--max-steps", tr.max_steps);
  train_cmd->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint");
  train_cmd->add_option("--print-every", tr.print_every, "Steps between progress lines (0: quiet)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint per category and resolution");
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--resolutions", ev.resolutions, "Point counts (default: all four)");
  eval_cmd->add_option("--split", ev.split, "train, test or all");
  eval_cmd->add_flag("--identity", ev.identity, "Score the ground truth against itself");
  eval_cmd->add_flag("--tsv", ev.tsv, "Tab-separated output");
  eval_cmd->add_option("--out", ev.out, "Also write the table here");

  std::string scope = "all";
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc_cmd->add_option("--scope", scope)->check(CLI::IsMember({"kernels", "losses", "end2end", "all"}));

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Train each module-toggle variant with shared seeds");
  ab_cmd->add_option("--data", ab.data, "Dataset directory");
  ab_cmd->add_option("--steps", ab.steps, "Training steps per variant");
  ab_cmd->add_option("--out", ab.out, "Results directory");

  InferArgs in;
  auto* infer_cmd = app.add_subcommand("infer", "Complete one partial cloud");
  infer_cmd->add_option("--checkpoint", in.checkpoint)->required();
  infer_cmd->add_option("--input", in.input, "Partial cloud (.xyz)")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", in.out, "Output cloud (.xyz)")->required();
  infer_cmd->add_option("--points", in.points, "Output size (default 4x input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen_cmd) return gen_data(g, gen);
    if (*train_cmd) return train(g, tr);
    if (*eval_cmd) return eval(g, ev);
    if (*gc_cmd) return gradcheck(g, scope);
    if (*ab_cmd) return ablate(g, ab);
    if (*infer_cmd) return infer(g, in);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ContractError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
