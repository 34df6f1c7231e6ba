#include "vrc/networks/networks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vrc/diffcore/ops.hpp"
#include "vrc/errors.hpp"
#include "vrc/geometry/geometry.hpp"

namespace vrc::net {

using diff::Shape;
using diff::Tensor;
using nlohmann::json;

namespace {

void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("model config: " + what);
}

rel::PskOptions psk_options(const ModelConfig& c) {
  rel::PskOptions o;
  o.k_a = c.k_a;
  o.k_b = c.k_b;
  o.single_branch = !c.kernel_selection;
  o.uniform_alpha = !c.psa;
  return o;
}

std::size_t neighbourhood_size(const ModelConfig& c) {
  return c.kernel_selection ? std::max(c.k_a, c.k_b) : c.k_a;
}

}  // namespace

// ---- config ----

void ModelConfig::validate() const {
  require_config(d_z >= 1, "d_z must be positive");
  require_config(!encoder_widths.empty() && !decoder_widths.empty() && !renet_widths.empty(),
                 "layer width lists must not be empty");
  for (auto list : {&encoder_widths, &decoder_widths, &renet_widths})
    for (std::size_t w : *list) require_config(w >= 1, "layer widths must be positive");
  require_config(coarse_n >= 1 && partial_n >= 1, "point counts must be positive");
  require_config(pool_ratio > 0.0 && pool_ratio < 1.0, "pool_ratio must lie in (0, 1)");
  require_config(k_a >= 1 && k_b >= 1 && pool_k >= 1 && unpool_k >= 1 && efe_k >= 1,
                 "neighbourhood sizes must be positive");
  require_config(max_factor >= 2, "max_factor must be at least 2");
  require_config(max_out_n >= 1, "max_out_n must be positive");
  require_config(expansion_factor(renet_input_n(), max_out_n) <= max_factor,
                 "max_out_n " + std::to_string(max_out_n) + " needs expansion factor " +
                     std::to_string(expansion_factor(renet_input_n(), max_out_n)) +
                     " above max_factor " + std::to_string(max_factor));
  double n = static_cast<double>(renet_input_n());
  for (std::size_t l = 1; l < renet_widths.size(); ++l) {
    n = std::ceil(pool_ratio * n);
    require_config(n >= 4, "too many pyramid levels for " + std::to_string(renet_input_n()) +
                               " input points");
  }
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.partial_n = 512;
  c.coarse_n = 256;
  c.max_out_n = 4096;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.d_z = 32;
  c.encoder_widths = {32, 64, 128};
  c.decoder_widths = {128, 128};
  c.partial_n = 256;
  c.coarse_n = 256;
  c.renet_widths = {16, 32, 64};
  c.max_out_n = 2048;
  return c;
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"d_z", c.d_z},
           {"encoder_widths", c.encoder_widths},
           {"decoder_widths", c.decoder_widths},
           {"coarse_n", c.coarse_n},
           {"partial_n", c.partial_n},
           {"renet_widths", c.renet_widths},
           {"pool_ratio", c.pool_ratio},
           {"k_a", c.k_a},
           {"k_b", c.k_b},
           {"pool_k", c.pool_k},
           {"unpool_k", c.unpool_k},
           {"efe_k", c.efe_k},
           {"max_out_n", c.max_out_n},
           {"max_factor", c.max_factor},
           {"psa", c.psa},
           {"dual_path", c.dual_path},
           {"kernel_selection", c.kernel_selection}};
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

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j,
                 {"d_z", "encoder_widths", "decoder_widths", "coarse_n", "partial_n",
                  "renet_widths", "pool_ratio", "k_a", "k_b", "pool_k", "unpool_k", "efe_k",
                  "max_out_n", "max_factor", "psa", "dual_path", "kernel_selection", "preset"},
                 "model");
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "full") c = ModelConfig::full_scale();
    else if (preset == "desk") c = ModelConfig::desk();
    else if (preset == "toy") c = ModelConfig::toy();
    else throw ConfigError("unknown model preset '" + preset + "'");
  }
  read_key(j, "d_z", c.d_z);
  read_key(j, "encoder_widths", c.encoder_widths);
  read_key(j, "decoder_widths", c.decoder_widths);
  read_key(j, "coarse_n", c.coarse_n);
  read_key(j, "partial_n", c.partial_n);
  read_key(j, "renet_widths", c.renet_widths);
  read_key(j, "pool_ratio", c.pool_ratio);
  read_key(j, "k_a", c.k_a);
  read_key(j, "k_b", c.k_b);
  read_key(j, "pool_k", c.pool_k);
  read_key(j, "unpool_k", c.unpool_k);
  read_key(j, "efe_k", c.efe_k);
  read_key(j, "max_out_n", c.max_out_n);
  read_key(j, "max_factor", c.max_factor);
  read_key(j, "psa", c.psa);
  read_key(j, "dual_path", c.dual_path);
  read_key(j, "kernel_selection", c.kernel_selection);
  c.validate();
}

void LossWeights::validate() const {
  for (double v : {lambda_rec, lambda_com, lambda_fine, lambda_kl})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  if (lambda_rec == 0.0 && lambda_com == 0.0 && lambda_fine == 0.0)
    throw ConfigError("loss weights: lambda_rec, lambda_com and lambda_fine are all zero");
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"lambda_rec", w.lambda_rec},
           {"lambda_com", w.lambda_com},
           {"lambda_fine", w.lambda_fine},
           {"lambda_kl", w.lambda_kl}};
}

void from_json(const json& j, LossWeights& w) {
  reject_unknown(j, {"lambda_rec", "lambda_com", "lambda_fine", "lambda_kl"}, "loss");
  read_key(j, "lambda_rec", w.lambda_rec);
  read_key(j, "lambda_com", w.lambda_com);
  read_key(j, "lambda_fine", w.lambda_fine);
  read_key(j, "lambda_kl", w.lambda_kl);
  w.validate();
}

// ---- latent helpers ----

metrics::GaussianParams Encoded::gaussian() const {
  auto m = mean.value().data();
  auto l = logvar.value().data();
  return metrics::GaussianParams({m.begin(), m.end()}, {l.begin(), l.end()});
}

std::vector<double> reparameterize(const metrics::GaussianParams& g, std::span<const double> eps) {
  VRC_REQUIRE(eps.size() == g.dim(), "reparameterize: eps length does not match the latent width");
  std::vector<double> z(g.dim());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = g.mean()[i] + std::exp(0.5 * g.logvar()[i]) * eps[i];
  return z;
}

std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = normal(rng);
  return out;
}

std::size_t expansion_factor(std::size_t input_n, std::size_t out_n) {
  VRC_REQUIRE(input_n >= 1, "expansion_factor: empty input");
  return std::max<std::size_t>(2, (out_n + input_n - 1) / input_n);
}

double LossBreakdown::weighted_sum() const {
  return weights.lambda_rec * rec + weights.lambda_com * com + weights.lambda_fine * fine;
}

// ---- model ----

CompletionModel::CompletionModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), store_(seed) {
  config_.validate();
  const ModelConfig& c = config_;
  std::size_t in = 3;
  for (std::size_t l = 0; l < c.encoder_widths.size(); ++l) {
    trunk_.push_back(diff::make_linear(store_, "pmnet.trunk.l" + std::to_string(l), in,
                                       c.encoder_widths[l]));
    in = c.encoder_widths[l];
  }
  const std::size_t gf = in;
  p_mean_ = diff::make_linear(store_, "pmnet.p.mean", gf, c.d_z);
  if (c.dual_path) {
    p_logvar_ = diff::make_linear(store_, "pmnet.p.logvar", gf, c.d_z);
    q_mean_ = diff::make_linear(store_, "pmnet.q.mean", gf, c.d_z);
    q_logvar_ = diff::make_linear(store_, "pmnet.q.logvar", gf, c.d_z);
  }
  in = c.d_z + gf;
  for (std::size_t l = 0; l < c.decoder_widths.size(); ++l) {
    decoder_.push_back(
        diff::make_linear(store_, "pmnet.dec.l" + std::to_string(l), in, c.decoder_widths[l]));
    in = c.decoder_widths[l];
  }
  decoder_.push_back(diff::make_linear(store_, "pmnet.dec.out", in, c.coarse_n * 3));

  const auto& w = c.renet_widths;
  const auto opts = psk_options(c);
  lift_ = diff::make_linear(store_, "renet.lift", 3, w[0]);
  for (std::size_t l = 0; l < w.size(); ++l)
    down_.push_back(rel::make_rpsk(store_, "renet.down" + std::to_string(l),
                                   l == 0 ? w[0] : w[l - 1], w[l], opts));
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    up_.push_back(
        rel::make_rpsk(store_, "renet.up" + std::to_string(l), w[l + 1] + w[l], w[l], opts));
  efe_ = rel::make_efe(store_, "renet.efe", w[0],
                       expansion_factor(c.renet_input_n(), c.max_out_n), c.efe_k);
  coord_hidden_ = diff::make_linear(store_, "renet.coord.hidden", w[0], w[0]);
  coord_out_ = diff::make_linear(store_, "renet.coord.out", w[0], 3);
}

Encoded CompletionModel::encode(Tape& tape, const PointCloud& cloud, Head head) {
  VRC_REQUIRE(!cloud.empty(), "encode: empty point cloud");
  Var h = tape.constant(cloud.xyz());
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    h = trunk_[l](tape, store_, h);
    if (l + 1 < trunk_.size()) h = diff::relu(h);
  }
  Encoded e;
  e.global_feature = diff::reduce(h, diff::Reduce::max);
  const bool q = head == Head::complete_q_phi;
  VRC_REQUIRE(!q || config_.dual_path, "encode: the complete-shape head is disabled");
  e.mean = (q ? q_mean_ : p_mean_)(tape, store_, e.global_feature);
  if (config_.dual_path) {
    e.logvar = diff::clamp((q ? q_logvar_ : p_logvar_)(tape, store_, e.global_feature),
                           metrics::GaussianParams::kLogvarMin,
                           metrics::GaussianParams::kLogvarMax);
  } else {
    e.logvar = tape.constant(Tensor(Shape{config_.d_z}));
  }
  return e;
}

LatentSample CompletionModel::sample_latent(Tape& tape, const Encoded& e,
                                            std::span<const double> eps, LatentSource source) {
  VRC_REQUIRE(eps.size() == config_.d_z, "sample_latent: eps length does not match d_z");
  LatentSample s;
  s.eps.assign(eps.begin(), eps.end());
  s.source = source;
  Var sd = diff::exp(diff::scale(e.logvar, 0.5));
  s.z = diff::add(e.mean, diff::mul(sd, tape.constant(Tensor::vector(s.eps))));
  return s;
}

Var CompletionModel::decode_coarse(Tape& tape, Var z, Var global_feature) {
  VRC_REQUIRE(z.size() == config_.d_z, "decode_coarse: latent width mismatch");
  Var h = diff::concat_cols(z, global_feature);
  for (std::size_t l = 0; l + 1 < decoder_.size(); ++l) h = diff::relu(decoder_[l](tape, store_, h));
  h = decoder_.back()(tape, store_, h);
  return diff::reshape(h, Shape{config_.coarse_n, 3});
}

RenetOutput CompletionModel::renet_forward(Tape& tape, const PointCloud& x, Var coarse,
                                           std::size_t out_n, std::uint64_t fps_seed) {
  VRC_REQUIRE(!x.empty(), "renet_forward: empty partial input");
  VRC_REQUIRE(coarse.value().rank() == 2 && coarse.cols() == 3,
              "renet_forward: coarse cloud must be N x 3");
  VRC_REQUIRE(out_n >= 1, "renet_forward: out_n must be positive");
  const ModelConfig& c = config_;
  const std::vector<Var> inputs{tape.constant(x.xyz()), coarse};
  Var p0 = diff::concat_rows(inputs);
  const std::size_t n0 = p0.rows();
  const std::size_t factor = expansion_factor(n0, out_n);
  if (factor > efe_.branches.size())
    throw ConfigError("renet_forward: " + std::to_string(out_n) + " output points need expansion " +
                      std::to_string(factor) + " from " + std::to_string(n0) +
                      " inputs, capacity is " + std::to_string(efe_.branches.size()));
  PointCloud cloud0(p0.value());
  const std::size_t k = neighbourhood_size(c);

  std::vector<rel::LevelState> levels;
  levels.push_back(rel::make_level(cloud0, diff::relu(lift_(tape, store_, p0)), k));
  levels[0].position = p0;
  levels[0].features = rel::rpsk_forward(tape, store_, levels[0].features, levels[0].nbr, down_[0]);
  for (std::size_t l = 1; l < down_.size(); ++l) {
    rel::LevelState next = rel::ep_pool(levels.back(), c.pool_ratio, c.pool_k,
                                        diff::mix_seed(fps_seed, "ep" + std::to_string(l)), k);
    next.features = rel::rpsk_forward(tape, store_, next.features, next.nbr, down_[l]);
    levels.push_back(std::move(next));
  }
  rel::LevelState current = levels.back();
  for (std::size_t l = up_.size(); l-- > 0;) {
    rel::LevelState& skip = levels[l];
    Var up = rel::eu_unpool(current, skip.points, std::min(c.unpool_k, current.points.size()),
                            skip.position);
    Var joined = diff::concat_cols(up, skip.features);
    rel::LevelState decoded = skip;
    decoded.features = rel::rpsk_forward(tape, store_, joined, skip.nbr, up_[l]);
    current = std::move(decoded);
  }

  rel::EfeParams efe = efe_;
  efe.branches.resize(factor);
  Var expanded = rel::efe_expand(tape, store_, current.features, cloud0, efe);
  Var offsets = coord_out_(tape, store_, diff::relu(coord_hidden_(tape, store_, expanded)));
  std::vector<std::uint32_t> repeat(n0 * factor);
  for (std::size_t i = 0; i < repeat.size(); ++i) repeat[i] = static_cast<std::uint32_t>(i / factor);
  Var dense = diff::add(diff::gather_rows(p0, repeat), offsets);

  RenetOutput out;
  out.expanded = dense.rows();
  out.factor = factor;
  const auto pick = geo::fps_indices(PointCloud(dense.value()), out_n,
                                     diff::mix_seed(fps_seed, "renet.out"));
  out.fine = diff::gather_rows(dense, pick);
  return out;
}

CompletionModel::PathLoss CompletionModel::reconstruction_path_loss(Tape& tape, const PointCloud& y,
                                                                    const LossWeights& w,
                                                                    std::mt19937_64& rng,
                                                                    Encoded* q_out) {
  VRC_REQUIRE(config_.dual_path, "reconstruction path is disabled in this configuration");
  Encoded q = encode(tape, y, Head::complete_q_phi);
  const auto eps = standard_normal(rng, config_.d_z);
  LatentSample s = sample_latent(tape, q, eps, LatentSource::posterior_complete);
  PathLoss out;
  out.cloud = decode_coarse(tape, s.z, q.global_feature);
  Var zero = tape.constant(Tensor(Shape{config_.d_z}));
  out.kl = metrics::gaussian_kl(q.mean, q.logvar, zero, zero);
  out.cd = metrics::chamfer(out.cloud, tape.constant(y.xyz()));
  out.loss = diff::add(diff::scale(out.kl, w.lambda_kl), out.cd);
  if (q_out) *q_out = q;
  return out;
}

CompletionModel::PathLoss CompletionModel::completion_path_loss(Tape& tape, const PointCloud& x,
                                                                const PointCloud& y,
                                                                const LossWeights& w,
                                                                std::mt19937_64& rng,
                                                                const Encoded* q_of_y) {
  Encoded p = encode(tape, x, Head::partial_p_psi);
  PathLoss out;
  Var z = p.mean;
  if (config_.dual_path) {
    Encoded q = q_of_y ? *q_of_y : encode(tape, y, Head::complete_q_phi);
    const auto eps = standard_normal(rng, config_.d_z);
    z = sample_latent(tape, p, eps, LatentSource::posterior_partial).z;
    // The complete-shape posterior is the teacher: no gradient flows into it.
    out.kl = metrics::gaussian_kl(diff::detach(q.mean), diff::detach(q.logvar), p.mean, p.logvar);
  }
  out.cloud = decode_coarse(tape, z, p.global_feature);
  out.cd = metrics::chamfer(out.cloud, tape.constant(y.xyz()));
  out.loss = out.kl.valid() ? diff::add(diff::scale(out.kl, w.lambda_kl), out.cd) : out.cd;
  return out;
}

LossBreakdown CompletionModel::joint_loss(Tape& tape, const PointCloud& x, const PointCloud& y,
                                          const LossWeights& w, std::mt19937_64& rng,
                                          std::size_t out_n, const Encoded* fixed_q) {
  LossBreakdown b;
  b.weights = w;
  Var rec_loss = tape.constant(Tensor::scalar(0.0));
  Encoded q;
  const Encoded* q_ptr = nullptr;
  if (config_.dual_path) {
    PathLoss rec = reconstruction_path_loss(tape, y, w, rng, &q);
    q_ptr = &q;
    rec_loss = rec.loss;
    b.reconstructed = rec.cloud;
    b.kl_rec = rec.kl.value().item();
    b.cd_rec = rec.cd.value().item();
  }
  if (fixed_q && config_.dual_path) q_ptr = fixed_q;
  PathLoss com = completion_path_loss(tape, x, y, w, rng, q_ptr);
  b.coarse = com.cloud;
  b.kl_com = com.kl.valid() ? com.kl.value().item() : 0.0;
  b.cd_com = com.cd.value().item();

  RenetOutput fine = renet_forward(tape, x, com.cloud, out_n ? out_n : y.size(),
                                   diff::mix_seed(store_.seed(), "renet.fps"));
  b.fine_cloud = fine.fine;
  Var fine_cd = metrics::chamfer(fine.fine, tape.constant(y.xyz()));

  b.rec = rec_loss.value().item();
  b.com = com.loss.value().item();
  b.fine = fine_cd.value().item();
  b.total = diff::add(diff::add(diff::scale(rec_loss, w.lambda_rec), diff::scale(com.loss, w.lambda_com)),
                      diff::scale(fine_cd, w.lambda_fine));
  return b;
}

InferResult CompletionModel::infer(const PointCloud& x, std::size_t out_n, std::mt19937_64& rng) {
  Tape tape;
  Encoded p = encode(tape, x, Head::partial_p_psi);
  Var z = p.mean;
  if (config_.dual_path) {
    const auto eps = standard_normal(rng, config_.d_z);
    z = sample_latent(tape, p, eps, LatentSource::posterior_partial).z;
  }
  Var coarse = decode_coarse(tape, z, p.global_feature);
  RenetOutput fine =
      renet_forward(tape, x, coarse, out_n, diff::mix_seed(store_.seed(), "renet.fps"));
  InferResult r;
  r.coarse = PointCloud(coarse.value(), geo::CloudRole::coarse);
  r.fine = PointCloud(fine.fine.value(), geo::CloudRole::fine);
  return r;
}

}  // namespace vrc::net
