// vbfa/stats.h

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

#ifndef VBFA_STATS_H_
#define VBFA_STATS_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vbfa {

// Fixed diagonal-covariance Gaussian mixture backend.  Rows of `means` and
// `precisions` are the per-component mean and inverse-variance vectors.
struct GmmBackend {
  Eigen::MatrixXd means;       // K x d
  Eigen::MatrixXd precisions;  // K x d, all entries > 0

  int num_components() const { return static_cast<int>(means.rows()); }
  int feature_dim() const { return static_cast<int>(means.cols()); }

  void validate() const;     // throws std::invalid_argument on bad shapes/values
  std::uint64_t hash() const;  // FNV-1a over dims and raw parameter bytes
};

// Zero- and first-order statistics of one session.
struct RawStats {
  std::string session_id;
  Eigen::VectorXd occupancy;    // N_k, length K
  Eigen::MatrixXd first_order;  // F_k rows, K x d
};

// Statistics whitened by the backend; first-order part kept as the stacked
// component-major vector (component k occupies entries [k*d, (k+1)*d)).
struct NormStats {
  std::string session_id;
  Eigen::VectorXd occupancy;  // length K
  Eigen::VectorXd fbar;       // length K*d

  int num_components() const { return static_cast<int>(occupancy.size()); }
  int feature_dim() const {
    return static_cast<int>(fbar.size() / occupancy.size());
  }
  Eigen::VectorBlock<const Eigen::VectorXd> fbar_block(int k) const {
    const int d = feature_dim();
    return fbar.segment(k * d, d);
  }
};

// Corpus-level statistics.
struct GlobalStats {
  Eigen::VectorXd sbar_trace;       // tr(Sbar_k), length K
  Eigen::VectorXd total_occupancy;  // sum_i N_ik, length K
  int num_sessions = 0;
};

// One session of observations: frames are rows, resp[t][k] is the fixed
// posterior responsibility of component k for frame t.
struct SessionData {
  Eigen::MatrixXd frames;  // T x d
  Eigen::MatrixXd resp;    // T x K
};

// Per-session statistics plus the global ones, ready for the trainers.
struct TrainingData {
  std::vector<NormStats> sessions;
  GlobalStats global;
};

// N_k = sum_t resp[t][k], F_k = sum_t resp[t][k] x_t.  Responsibility rows
// must sum to 1 within 1e-6 and be non-negative.
RawStats accumulate_stats(const Eigen::MatrixXd &frames,
                          const Eigen::MatrixXd &resp,
                          const std::string &session_id = "");

// Fbar_k = Lambda_k^{1/2} (F_k - N_k m_k).
NormStats normalize_stats(const RawStats &raw, const GmmBackend &backend);

// Sbar_k = sum_i sum_t resp (x - m_k)^T Lambda_k (x - m_k), total occupancies
// and the session count.
GlobalStats global_stats(const std::vector<SessionData> &sessions,
                         const GmmBackend &backend);

// Convenience: full pipeline from sessions to trainer-ready statistics.
TrainingData compute_training_data(const std::vector<SessionData> &sessions,
                                   const GmmBackend &backend);

// GMM posterior responsibilities for each frame.  Mixture weights are not
// part of the backend; components are weighted equally unless log_weights
// is given.
Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd &frames,
                                     const GmmBackend &backend,
                                     const Eigen::VectorXd *log_weights = nullptr);

}  // namespace vbfa

#endif  // VBFA_STATS_H_
