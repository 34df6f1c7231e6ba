#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrc/diffcore/param_store.hpp"
#include "vrc/geometry/geometry.hpp"

namespace vrc::rel {

using diff::Linear;
using diff::ParamStore;
using diff::Tape;
using diff::Var;
using geo::NeighborhoodIndex;
using geo::PointCloud;

// ---- neighbourhood primitives (differentiable in the feature inputs) ----

// out row i*k + j = p_i + q_{nbr(i, j)}; p, q are N x C.
Var pair_sum(Var p, Var q, const NeighborhoodIndex& nbr);
// logits is (rows*k) x C, values M x C. alpha = softmax over j per channel,
// out_i = sum_j alpha_ij * values_{nbr(i, j)}, summed in neighbour order.
Var neighbor_softmax_sum(Var logits, Var values, const NeighborhoodIndex& nbr);
// out_i = channelwise max over values_{nbr(i, .)}; ties go to the first.
Var neighbor_max(Var values, const NeighborhoodIndex& nbr);
// out_i = sum_j w[i*k + j] * values_{nbr(i, j)}; weights are constants.
Var weighted_gather(Var values, const NeighborhoodIndex& nbr, std::vector<double> weights);
// As above with learnable weights, a (N*k) x 1 column.
Var weighted_gather(Var values, const NeighborhoodIndex& nbr, Var weights);

// Normalized inverse-distance weights 1/(d^2 + 1e-8) of each query row over
// its neighbours in ref, as a (N*k) x 1 column. A query that coincides with a
// neighbour gets a one-hot row (held constant). Either position may be an
// invalid Var, meaning constant coordinates taken from the cloud.
Var idw_weights(const PointCloud& ref, Var ref_position, const PointCloud& query,
                Var query_position, const NeighborhoodIndex& nbr);

// ---- point self-attention ----

struct PsaParams {
  std::size_t in = 0;
  std::size_t out = 0;
  bool uniform_alpha = false;  // ablation: fixed 1/k weights, no gamma
  Linear sigma, xi, beta;
  Linear gamma1;  // 2*out -> out, rows [0, out) act on sigma, [out, 2*out) on xi
  Linear gamma2;  // out -> out
};

PsaParams make_psa(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   bool uniform_alpha = false);

// x is N x in; nbr lists neighbours of every point among the same N points.
Var psa_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                const PsaParams& params);

// ---- selective kernel over two PSA branches ----

struct PskParams {
  std::size_t k_a = 8;
  std::size_t k_b = 16;
  std::size_t channels = 0;  // output width C
  std::size_t reduced = 0;   // d
  bool single_branch = false;
  PsaParams branch_a, branch_b;
  Linear fuse;            // C -> d
  Linear gate_a, gate_b;  // d -> C
};

// d = max(C/4, 8), or C/2 when that would not reduce.
std::size_t reduction_width(std::size_t channels);

struct PskOptions {
  std::size_t k_a = 8;
  std::size_t k_b = 16;
  bool single_branch = false;  // ablation: branch a alone
  bool uniform_alpha = false;
};

PskParams make_psk(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   const PskOptions& options);

struct PskOutput {
  Var v;
  Var u_a, u_b;  // branch outputs
  Var a, b;      // gate vectors (C); invalid for single-branch kernels
};

// nbr must hold at least max(k_a, k_b) neighbours per point (self first).
PskOutput psk_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                      const PskParams& params);
PskOutput psk_forward(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
                      const PskParams& params);

// ---- residual kernel ----

struct RpskParams {
  PskParams psk;
  Linear post;                // main path: post(relu(psk(x)))
  bool project_residual = false;
  Linear residual;            // only when in != out
};

RpskParams make_rpsk(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                     const PskOptions& options);

// The main path alone, i.e. the output minus the residual branch.
Var rpsk_main(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
              const RpskParams& params);
Var rpsk_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                 const RpskParams& params);
Var rpsk_forward(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
                 const RpskParams& params);

// ---- pyramid levels ----

struct LevelState {
  PointCloud points;
  Var features;                           // points.size() x C
  std::vector<std::uint32_t> parent_index;  // point i of this level is point parent_index[i] of the finer one
  NeighborhoodIndex nbr;                  // knn over `points`, self first
  Var position;  // optional differentiable copy of `points`

  void check() const;
};

// Builds the level with its neighbourhood (k clipped to the point count).
LevelState make_level(PointCloud points, Var features, std::size_t k,
                      std::vector<std::uint32_t> parent_index = {});

// Farthest-point decimation to ceil(ratio*N) points, each carrying the
// channelwise max over its k nearest fine points.
LevelState ep_pool(const LevelState& level, double ratio, std::size_t k, std::uint64_t seed,
                   std::size_t nbr_k = 16);

// Inverse-distance interpolation of coarse features onto fine points. When
// positions are differentiable the weights are too.
Var eu_unpool(const LevelState& coarse, const PointCloud& fine_points, std::size_t k,
              Var fine_position = {});

// ---- edge-aware feature expansion ----

struct EfeParams {
  std::size_t channels = 0;
  std::size_t k = 16;
  std::vector<Linear> branches;  // each 2C -> C
};

EfeParams make_efe(ParamStore& store, const std::string& prefix, std::size_t channels,
                   std::size_t factor, std::size_t k = 16);

// N x C -> (N*factor) x C; row i*factor + b comes from branch b of point i.
Var efe_expand(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
               const EfeParams& params);

}  // namespace vrc::rel
