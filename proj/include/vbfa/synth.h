// vbfa/synth.h

// Copyright 2026  The vbfa authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VBFA_SYNTH_H_
#define VBFA_SYNTH_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "vbfa/ard.h"
#include "vbfa/stats.h"

namespace vbfa {

// Deterministic generator: 64-bit engine driving a Box-Muller normal.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // in (0, 1]
  double normal();
  int categorical(const Eigen::VectorXd &weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Splits a seed into a per-stream seed (splitmix64 step).
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

// Full description of a synthetic corpus: x = m_z + W_true y + noise with
// y ~ N(0, I) per session and z drawn from `weights` per frame.
struct SynthSpec {
  int num_components = 1;
  int feature_dim = 1;
  int factor_dim_true = 1;
  int num_sessions = 1;
  int frames_per_session = 1;
  std::uint64_t seed = 0;
  GmmBackend backend;
  Eigen::MatrixXd w_true;    // (K d) x factor_dim_true, feature space
  Eigen::VectorXd weights;   // K, sums to 1
  bool soft_responsibilities = false;  // emit GMM posteriors instead of one-hot

  void validate() const;
};

// Reference spec used across the test corpus: backend means on a coarse
// binary lattice, unit precisions, uniform weights, Gaussian w_true.
SynthSpec default_spec(int num_components, int feature_dim, int factor_dim_true,
                       int num_sessions, int frames_per_session,
                       std::uint64_t seed);

struct SynthData {
  std::vector<SessionData> sessions;
  Eigen::MatrixXd y_true;                   // H x factor_dim_true
  std::vector<std::vector<int>> components; // drawn component per frame
};

// Deterministic under spec.seed; sessions use split sub-seeds.
SynthData generate(const SynthSpec &spec);

// w_true mapped to normalized-statistics space (rows scaled by sqrt(Lambda)).
std::vector<Eigen::MatrixXd> normalized_loading(const GmmBackend &backend,
                                                const Eigen::MatrixXd &w_true);

// Classical fixed-W posterior: L = I + sum_k N_k W_k^T W_k,
// mean = L^{-1} W^T Fbar.  Oracle for update_y with a point-mass loading.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> exact_y_posterior(
    const NormStats &stats, const std::vector<Eigen::MatrixXd> &w_blocks);

// ln p(X | a, b) for the scalar model (K = d = ny = 1, at most 3 sessions)
// by nested quadrature: y integrated analytically per session, W on a
// symmetric grid with inverse-variable tail panels, alpha on a log grid
// against its Gamma prior.  grid_scale doubles every node count, so
// grid_scale 1 vs 2 gives a refinement certificate.
double quadrature_evidence(const std::vector<NormStats> &sessions,
                           const Eigen::VectorXd &sbar_per_session,
                           const Hyper &hyper, int grid_scale = 1);

}  // namespace vbfa

#endif  // VBFA_SYNTH_H_
