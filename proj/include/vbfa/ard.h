// vbfa/ard.h

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

#ifndef VBFA_ARD_H_
#define VBFA_ARD_H_

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "vbfa/linalg.h"
#include "vbfa/stats.h"

namespace vbfa {

// Gamma prior hyperparameters shared by all factor-precision variables.
struct Hyper {
  double shape = 1e-3;
  double rate = 1e-3;
  void validate() const;
};

// Independent Gamma posteriors q(alpha_q) = Gamma(a', b'_q), one per factor
// dimension, with the expectations the updates and the bound need.
class AlphaPosterior {
 public:
  AlphaPosterior(double a_post, Eigen::VectorXd b_post);
  static AlphaPosterior from_prior(const Hyper &hyper, int factor_dim);

  double a_post() const { return a_post_; }
  const Eigen::VectorXd &b_post() const { return b_post_; }
  const Eigen::VectorXd &e_alpha() const { return e_alpha_; }      // a'/b'_q
  const Eigen::VectorXd &e_log_alpha() const { return e_log_alpha_; }
  int factor_dim() const { return static_cast<int>(b_post_.size()); }

 private:
  double a_post_;
  Eigen::VectorXd b_post_;
  Eigen::VectorXd e_alpha_;
  Eigen::VectorXd e_log_alpha_;  // psi(a') - ln b'_q
};

// Gaussian posterior of one session's latent factor vector.  The i-vector is
// `mean`.  Covariance and second moment are cached alongside the precision.
struct LatentPosterior {
  Eigen::VectorXd mean;
  SymPosDef prec;
  Eigen::MatrixXd cov;            // prec^{-1}
  Eigen::MatrixXd second_moment;  // cov + mean mean^T

  LatentPosterior(Eigen::VectorXd mean_in, SymPosDef prec_in);
};

// Posterior over the loading matrix: per-component row means Wbar_k (d x ny)
// and one shared row precision L_Wk per component, plus the cached gram
// E[W_k^T W_k] = d L_Wk^{-1} + Wbar_k^T Wbar_k.
//
// A point-mass instance (exact W, zero row covariance) supports the oracle
// path; it carries no row precision and cannot enter entropy computations.
class LoadingPosterior {
 public:
  LoadingPosterior(std::vector<Eigen::MatrixXd> wbar,
                   std::vector<SymPosDef> row_prec);
  static LoadingPosterior point_mass(std::vector<Eigen::MatrixXd> wbar);
  static LoadingPosterior random_init(int num_components, int feature_dim,
                                      int factor_dim, const Hyper &hyper,
                                      std::mt19937_64 &engine);

  int num_components() const { return static_cast<int>(wbar_.size()); }
  int feature_dim() const { return static_cast<int>(wbar_[0].rows()); }
  int factor_dim() const { return static_cast<int>(wbar_[0].cols()); }
  bool has_row_uncertainty() const { return !row_prec_.empty(); }

  const Eigen::MatrixXd &wbar(int k) const { return wbar_[k]; }
  const SymPosDef &row_prec(int k) const { return row_prec_[k]; }
  const Eigen::MatrixXd &row_cov(int k) const { return row_cov_[k]; }
  const Eigen::MatrixXd &gram(int k) const { return gram_[k]; }

  // Stacked E[W], (K d) x ny.
  Eigen::MatrixXd stacked_mean() const;

  // Row-space change of basis g (rows w <- g w): wbar_k <- wbar_k g^T,
  // row covariance <- g cov g^T.  Used by the minimum-divergence step.
  LoadingPosterior row_transformed(const Eigen::MatrixXd &g) const;

 private:
  LoadingPosterior() = default;
  void refresh_caches();

  std::vector<Eigen::MatrixXd> wbar_;
  std::vector<SymPosDef> row_prec_;
  std::vector<Eigen::MatrixXd> row_cov_;
  std::vector<Eigen::MatrixXd> gram_;
};

// Sufficient moments of the latent posteriors against the statistics:
// c = sum_i Fbar_i ybar_i^T, r_k = sum_i N_ik E[y y^T], rho = sum_i E[y y^T],
// plus the mean sum and the summed log-determinant of the precisions that the
// bound needs.
struct Accumulators {
  Eigen::MatrixXd c;               // (K d) x ny
  std::vector<Eigen::MatrixXd> r;  // K of ny x ny
  Eigen::MatrixXd rho;             // ny x ny
  Eigen::VectorXd sum_mean;        // ny
  int num_sessions = 0;
  double sum_logdet_prec = 0.0;    // sum_i ln|L_yi|
};

// The bound and its additive pieces; total is the exact sum of the terms.
struct ElboReport {
  double total = 0.0;
  double data = 0.0;
  double prior_y = 0.0;
  double prior_w = 0.0;
  double prior_alpha = 0.0;
  double entropy_y = 0.0;      // -E[ln q(Y)]
  double entropy_w = 0.0;      // -E[ln q(W)]
  double entropy_alpha = 0.0;  // -E[ln q(alpha)]

  void finalize() {
    total = data + prior_y + prior_w + prior_alpha + entropy_y + entropy_w +
            entropy_alpha;
  }
};

// Latent population summary produced by the minimum-divergence step.
// `offset` is E[W] mu in normalized supervector space; callers fold it into
// the backend means (the trainer folds it into its working statistics).
struct MinDivStats {
  Eigen::VectorXd mean;   // mu_y
  Eigen::MatrixXd cov;    // Sigma_y
  Eigen::VectorXd offset; // K d
};

struct TrainConfig {
  int factor_dim = 2;
  int iterations = 10;
  std::uint64_t seed = 0;
  bool optimize_hyper = false;
  bool min_divergence = false;
  int burn_in = 3;     // cycles before the optional steps engage
  int partitions = 1;  // used by the block trainer
  Hyper hyper;
};

struct TrainResult {
  LoadingPosterior loadings;
  std::optional<AlphaPosterior> alpha;
  Hyper hyper;
  std::vector<ElboReport> history;
  std::optional<MinDivStats> min_div;  // last application
  Eigen::VectorXd mean_offset;         // cumulative, K d (zeros when unused)
};

// --- coordinate updates (model section 5) ---

// q(y_i): L_yi = I + sum_k N_ik E[W_k^T W_k], ybar = L^{-1} E[W]^T Fbar.
LatentPosterior update_y_one(const NormStats &stats,
                             const LoadingPosterior &loadings);
std::vector<LatentPosterior> update_y(const std::vector<NormStats> &stats,
                                      const LoadingPosterior &loadings);

Accumulators accumulate_moments(const std::vector<NormStats> &stats,
                                const std::vector<LatentPosterior> &latents);

// Empty accumulator of the right shape (the H = 0 path of the trainers).
Accumulators zero_accumulators(int num_components, int feature_dim,
                               int factor_dim);

// q(W): L_Wk = diag(E[alpha]) + R_k, rows solved in one factorization per
// component.  A failing factorization is retried once with jitter and then
// reported with the component index.
LoadingPosterior update_w(const Accumulators &acc, const AlphaPosterior &alpha);

// q(alpha): a' = a + K d / 2, b'_q = b + E[w_q^T w_q] / 2.
AlphaPosterior update_alpha(const LoadingPosterior &loadings, const Hyper &hyper);

// The seven-term bound, evaluated from accumulators coherent with `loadings`.
ElboReport elbo(const GlobalStats &global, const Accumulators &acc,
                const LoadingPosterior &loadings, const AlphaPosterior &alpha,
                const Hyper &hyper);

// Data term only (shared with the adaptation variant's bound).
double elbo_data_term(const GlobalStats &global, const Accumulators &acc,
                      const LoadingPosterior &loadings);

// Gamma-prior stationarity: solves psi(a) = ln b + c with b = a / dtilde by
// the exponentially reparameterized Newton iteration (a stays positive).
Hyper optimize_hyper(const AlphaPosterior &alpha, const Hyper &current);

// Re-parameterizes q(W) so the aggregate latent posterior matches the
// standard normal prior; returns the transformed posterior and the
// (mu_y, Sigma_y, offset) record.  Requires at least two sessions.
std::pair<LoadingPosterior, MinDivStats> min_divergence(
    const Accumulators &acc, const LoadingPosterior &loadings);

// Subtracts the supervector offset from every session's statistics and keeps
// the global Mahalanobis statistic consistent with the shifted means.
void apply_mean_offset(const Eigen::VectorXd &offset,
                       std::vector<NormStats> *sessions, GlobalStats *global);

// Full training loop: per cycle update_y -> accumulate_moments -> update_w ->
// update_alpha, bound recorded, then the optional hyperparameter and
// minimum-divergence steps after burn-in.
TrainResult train_ard(const TrainingData &data, const TrainConfig &config);

// Posterior of a held-out session under a trained model; same computation as
// update_y_one.  `mean_offset` (if any) is folded into the statistics first.
LatentPosterior extract_ivector(const NormStats &stats,
                                const LoadingPosterior &loadings,
                                const Eigen::VectorXd *mean_offset = nullptr);

}  // namespace vbfa

#endif  // VBFA_ARD_H_
