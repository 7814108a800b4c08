// vbfa/adapt.h

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

#ifndef VBFA_ADAPT_H_
#define VBFA_ADAPT_H_

#include <vector>

#include "vbfa/ard.h"

namespace vbfa {

// Informative Gaussian prior over the loading rows: per-component row means
// and full row precisions, typically the posterior of a large-corpus run.
struct LoadingPrior {
  std::vector<Eigen::MatrixXd> wbar0;  // K of d x ny
  std::vector<SymPosDef> prec0;        // K of ny x ny

  int num_components() const { return static_cast<int>(wbar0.size()); }
  int feature_dim() const { return static_cast<int>(wbar0[0].rows()); }
  int factor_dim() const { return static_cast<int>(wbar0[0].cols()); }
  void validate() const;

  // The posterior of a trained model used directly as a prior.
  static LoadingPrior from_posterior(const LoadingPosterior &posterior);
};

// q(W) under the informative prior: L_Wk = L0_k + R_k,
// wbar_kr = L_Wk^{-1} (L0_k wbar0_kr + C_kr^T).
LoadingPosterior update_w_map(const Accumulators &acc, const LoadingPrior &prior);

// E[ln P(W)] under q(W) for the informative prior (closed form).
double elbo_prior_term(const LoadingPosterior &loadings, const LoadingPrior &prior);

// Bound for the adaptation variant: no alpha factor, prior_w from
// elbo_prior_term; the remaining terms match the ARD bound.
ElboReport elbo_adapt(const GlobalStats &global, const Accumulators &acc,
                      const LoadingPosterior &loadings, const LoadingPrior &prior);

// Training loop with update_w_map substituted and no q(alpha) factor.
// With zero sessions the posterior equals the prior exactly.
TrainResult train_adapt(const TrainingData &data, const LoadingPrior &prior,
                        const TrainConfig &config);

}  // namespace vbfa

#endif  // VBFA_ADAPT_H_
