#pragma once

#include <cstdint>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "vrc/diffcore/param_store.hpp"
#include "vrc/geometry/point_cloud.hpp"
#include "vrc/metrics/metrics.hpp"
#include "vrc/relation/relation.hpp"

namespace vrc::net {

using diff::ParamStore;
using diff::Tape;
using diff::Var;
using geo::PointCloud;

struct ModelConfig {
  std::size_t d_z = 128;
  std::vector<std::size_t> encoder_widths{64, 128, 256};
  std::vector<std::size_t> decoder_widths{256, 256};
  std::size_t coarse_n = 1024;
  std::size_t partial_n = 2048;
  std::vector<std::size_t> renet_widths{64, 128, 256};  // one per level
  double pool_ratio = 0.5;
  std::size_t k_a = 8;
  std::size_t k_b = 16;
  std::size_t pool_k = 16;  // EP grouping size
  std::size_t unpool_k = 3;
  std::size_t efe_k = 16;
  std::size_t max_out_n = 16384;  // largest output the EFE branches must serve
  std::size_t max_factor = 8;
  // Ablation switches (all true for the full model).
  bool psa = true;               // learned attention weights
  bool dual_path = true;         // reconstruction path + both KL terms
  bool kernel_selection = true;  // two-branch selective kernel

  std::size_t renet_input_n() const { return partial_n + coarse_n; }
  void validate() const;  // throws ConfigError

  static ModelConfig full_scale();
  // Desk-scale defaults: 512-point partials.
  static ModelConfig desk();
  // Small widths for fast CPU runs on 256-point partials / 512-point targets.
  static ModelConfig toy();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LossWeights {
  double lambda_rec = 1.0;
  double lambda_com = 1.0;
  double lambda_fine = 1.0;
  double lambda_kl = 0.1;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

enum class Head { complete_q_phi, partial_p_psi };
enum class LatentSource { prior, posterior_complete, posterior_partial };

struct Encoded {
  Var global_feature;  // vector, last encoder width
  Var mean, logvar;    // vectors of d_z; logvar clamped to [-10, 10]

  metrics::GaussianParams gaussian() const;
};

struct LatentSample {
  Var z;
  std::vector<double> eps;
  LatentSource source = LatentSource::prior;
};

// z = mean + exp(logvar / 2) * eps, on plain numbers.
std::vector<double> reparameterize(const metrics::GaussianParams& g, std::span<const double> eps);
std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n);

struct RenetOutput {
  Var fine;                 // out_n x 3
  std::size_t expanded = 0;  // rows before the final farthest-point sampling
  std::size_t factor = 0;
};

struct LossBreakdown {
  Var total;
  double rec = 0.0;  // L_rec = lambda_kl * kl_rec + cd_rec
  double com = 0.0;  // L_com = lambda_kl * kl_com + cd_com
  double fine = 0.0;
  double kl_rec = 0.0, kl_com = 0.0, cd_rec = 0.0, cd_com = 0.0;
  double weighted_sum() const;  // lambda_rec*rec + lambda_com*com + lambda_fine*fine
  LossWeights weights;
  Var coarse, fine_cloud, reconstructed;
};

struct InferResult {
  PointCloud coarse;
  PointCloud fine;
};

// Smallest factor >= 2 with input_n * factor >= out_n.
std::size_t expansion_factor(std::size_t input_n, std::size_t out_n);

// Probabilistic modelling network plus relational enhancement network. All
// learnable state lives in the ParamStore; the model only keeps layer
// descriptors. Names under "pmnet.q." belong to the reconstruction path.
class CompletionModel {
 public:
  CompletionModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }

  static constexpr const char* kReconstructionPrefix = "pmnet.q.";

  Encoded encode(Tape& tape, const PointCloud& cloud, Head head);
  LatentSample sample_latent(Tape& tape, const Encoded& e, std::span<const double> eps,
                             LatentSource source);
  // [z || global feature] -> coarse_n x 3.
  Var decode_coarse(Tape& tape, Var z, Var global_feature);
  RenetOutput renet_forward(Tape& tape, const PointCloud& x, Var coarse, std::size_t out_n,
                            std::uint64_t fps_seed = 0);

  // Returns (loss, Y'_r) and (loss, Y'_c) with the KL term reported apart.
  struct PathLoss {
    Var loss;
    Var cloud;
    Var kl;
    Var cd;
  };
  PathLoss reconstruction_path_loss(Tape& tape, const PointCloud& y, const LossWeights& w,
                                    std::mt19937_64& rng, Encoded* q_out = nullptr);
  // q_of_y: the complete-shape encoding when the caller already has it.
  PathLoss completion_path_loss(Tape& tape, const PointCloud& x, const PointCloud& y,
                                const LossWeights& w, std::mt19937_64& rng,
                                const Encoded* q_of_y = nullptr);
  // fixed_q, when given, stands in for q in the link term. Holding constants
  // equal to the live encoding leaves the gradient unchanged while making the
  // loss an ordinary function of the parameters (finite differences cannot
  // see a stop-gradient otherwise).
  LossBreakdown joint_loss(Tape& tape, const PointCloud& x, const PointCloud& y,
                           const LossWeights& w, std::mt19937_64& rng, std::size_t out_n = 0,
                           const Encoded* fixed_q = nullptr);

  // Completion path only: p_psi sample, coarse decode, refinement.
  InferResult infer(const PointCloud& x, std::size_t out_n, std::mt19937_64& rng);

 private:
  ModelConfig config_;
  ParamStore store_;
  std::vector<diff::Linear> trunk_;
  diff::Linear q_mean_, q_logvar_, p_mean_, p_logvar_;
  std::vector<diff::Linear> decoder_;
  diff::Linear lift_;
  std::vector<rel::RpskParams> down_;  // per level
  std::vector<rel::RpskParams> up_;    // per decoder level, coarse to fine
  rel::EfeParams efe_;
  diff::Linear coord_hidden_, coord_out_;
};

}  // namespace vrc::net
