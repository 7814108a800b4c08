// vbfa/adapt.cc

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

#include "vbfa/adapt.h"

#include <cmath>
#include <string>
#include <utility>

namespace vbfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void LoadingPrior::validate() const {
  if (wbar0.empty() || wbar0.size() != prec0.size())
    throw std::invalid_argument("LoadingPrior: component count mismatch");
  for (const auto &w : wbar0)
    if (w.rows() != wbar0[0].rows() || w.cols() != wbar0[0].cols())
      throw std::invalid_argument("LoadingPrior: inconsistent block shapes");
  for (const auto &p : prec0)
    if (p.dim() != factor_dim())
      throw std::invalid_argument("LoadingPrior: precision dimension mismatch");
}

LoadingPrior LoadingPrior::from_posterior(const LoadingPosterior &posterior) {
  if (!posterior.has_row_uncertainty())
    throw std::invalid_argument("LoadingPrior: point-mass posterior has no precision");
  LoadingPrior prior;
  prior.wbar0.reserve(posterior.num_components());
  prior.prec0.reserve(posterior.num_components());
  for (int k = 0; k < posterior.num_components(); ++k) {
    prior.wbar0.push_back(posterior.wbar(k));
    prior.prec0.push_back(posterior.row_prec(k));
  }
  return prior;
}

LoadingPosterior update_w_map(const Accumulators &acc, const LoadingPrior &prior) {
  prior.validate();
  const int k_num = prior.num_components();
  const int d = prior.feature_dim();
  const int ny = prior.factor_dim();
  if (acc.c.rows() != k_num * d || acc.c.cols() != ny ||
      static_cast<int>(acc.r.size()) != k_num)
    throw std::invalid_argument("update_w_map: accumulator shape mismatch");
  std::vector<Eigen::MatrixXd> wbar;
  std::vector<SymPosDef> prec;
  wbar.reserve(k_num);
  prec.reserve(k_num);
  for (int k = 0; k < k_num; ++k) {
    Eigen::MatrixXd lmat = prior.prec0[k].matrix() + acc.r[k];
    try {
      prec.push_back(make_spd_jittered(lmat));
    } catch (const NumericError &) {
      throw NumericError("update_w_map: degenerate row precision for component " +
                         std::to_string(k));
    }
    // rhs per row r: L0 wbar0_kr + C_kr^T, all rows in one factorization
    Eigen::MatrixXd rhs = prior.prec0[k].matrix() * prior.wbar0[k].transpose() +
                          acc.c.middleRows(k * d, d).transpose();
    wbar.push_back(prec.back().solve(rhs).transpose());
  }
  return LoadingPosterior(std::move(wbar), std::move(prec));
}

double elbo_prior_term(const LoadingPosterior &loadings, const LoadingPrior &prior) {
  prior.validate();
  const int k_num = prior.num_components();
  const int d = prior.feature_dim();
  const int ny = prior.factor_dim();
  if (loadings.num_components() != k_num || loadings.feature_dim() != d ||
      loadings.factor_dim() != ny)
    throw std::invalid_argument("elbo_prior_term: shape mismatch");
  double term = -0.5 * ny * k_num * d * kLog2Pi;
  for (int k = 0; k < k_num; ++k) {
    const Eigen::MatrixXd &l0 = prior.prec0[k].matrix();
    term += 0.5 * d * prior.prec0[k].log_det();
    term -= 0.5 * d * l0.cwiseProduct(loadings.row_cov(k)).sum();
    const Eigen::MatrixXd diff = loadings.wbar(k) - prior.wbar0[k];
    // sum_r (w - w0)^T L0 (w - w0)
    term -= 0.5 * (diff * l0).cwiseProduct(diff).sum();
  }
  return term;
}

ElboReport elbo_adapt(const GlobalStats &global, const Accumulators &acc,
                      const LoadingPosterior &loadings, const LoadingPrior &prior) {
  const int k_num = loadings.num_components();
  const int d = loadings.feature_dim();
  const int ny = loadings.factor_dim();
  const int h = acc.num_sessions;

  double sum_logdet_w = 0.0;
  for (int k = 0; k < k_num; ++k) sum_logdet_w += loadings.row_prec(k).log_det();

  ElboReport rep;
  rep.data = elbo_data_term(global, acc, loadings);
  rep.prior_y = -0.5 * h * ny * kLog2Pi - 0.5 * acc.rho.trace();
  rep.prior_w = elbo_prior_term(loadings, prior);
  rep.entropy_y = 0.5 * h * ny * (kLog2Pi + 1.0) - 0.5 * acc.sum_logdet_prec;
  rep.entropy_w = 0.5 * k_num * d * ny * (kLog2Pi + 1.0) - 0.5 * d * sum_logdet_w;
  rep.finalize();
  return rep;
}

TrainResult train_adapt(const TrainingData &data, const LoadingPrior &prior,
                        const TrainConfig &config) {
  prior.validate();
  const int k_num = prior.num_components();
  const int d = prior.feature_dim();
  if (config.factor_dim != prior.factor_dim())
    throw std::invalid_argument("train_adapt: factor dimension must match the prior");
  for (const NormStats &s : data.sessions)
    if (s.num_components() != k_num || s.feature_dim() != d)
      throw std::invalid_argument("train_adapt: statistics do not match the prior");

  LoadingPosterior loadings(prior.wbar0, prior.prec0);
  std::vector<NormStats> work = data.sessions;
  GlobalStats global = data.global;
  Eigen::VectorXd offset_total = Eigen::VectorXd::Zero(k_num * d);
  std::optional<MinDivStats> last_min_div;
  std::vector<ElboReport> history;
  history.reserve(config.iterations);

  for (int it = 0; it < config.iterations; ++it) {
    Accumulators acc = zero_accumulators(k_num, d, config.factor_dim);
    if (!work.empty()) {
      std::vector<LatentPosterior> latents = update_y(work, loadings);
      acc = accumulate_moments(work, latents);
      loadings = update_w_map(acc, prior);
    }
    ElboReport rep = elbo_adapt(global, acc, loadings, prior);
    if (!std::isfinite(rep.total))
      throw NumericError("train_adapt: non-finite bound at iteration " +
                         std::to_string(it));
    history.push_back(rep);

    if (config.min_divergence && it >= config.burn_in &&
        acc.num_sessions >= 2) {
      auto [transformed, md] = min_divergence(acc, loadings);
      loadings = std::move(transformed);
      apply_mean_offset(md.offset, &work, &global);
      offset_total += md.offset;
      last_min_div = std::move(md);
    }
  }

  return TrainResult{std::move(loadings), std::nullopt, config.hyper,
                     std::move(history), std::move(last_min_div),
                     std::move(offset_total)};
}

}  // namespace vbfa
