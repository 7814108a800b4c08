// vbfa/linalg.h

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

#ifndef VBFA_LINALG_H_
#define VBFA_LINALG_H_

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <stdexcept>

namespace vbfa {

// Numerical failure inside an otherwise valid computation (degenerate
// factorization, non-convergence, NaN propagation).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Symmetric positive-definite matrix with a cached Cholesky factor.
// The stored matrix is canonicalized from the lower triangle of the input,
// so matrix() == matrix().transpose() holds exactly.  Construction fails
// with NumericError unless all pivots are strictly positive.
class SymPosDef {
 public:
  explicit SymPosDef(const Eigen::MatrixXd &m);

  int dim() const { return static_cast<int>(mat_.rows()); }
  const Eigen::MatrixXd &matrix() const { return mat_; }
  const Eigen::LLT<Eigen::MatrixXd> &llt() const { return llt_; }

  // X such that (*this) * X = b.
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd> &b) const;
  Eigen::MatrixXd inverse() const;
  double log_det() const;

 private:
  Eigen::MatrixXd mat_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Solves A X = B.  Rejects non-finite B or a row-count mismatch.
Eigen::MatrixXd chol_solve(const SymPosDef &a,
                           const Eigen::Ref<const Eigen::MatrixXd> &b);

// ln det A, from the cached triangular factor.
double logdet(const SymPosDef &a);

// Constructs a SymPosDef from m, retrying once with a small diagonal bump
// (jitter_rel * trace / dim) if the first factorization fails.  Throws
// NumericError when the jittered attempt fails as well.
SymPosDef make_spd_jittered(const Eigen::MatrixXd &m, double jitter_rel = 1e-8);

// Special functions on x > 0 (domain_error otherwise).  Upward recurrence
// shifts the argument into the asymptotic regime, then a Bernoulli-series
// expansion is evaluated; absolute error is below 1e-10 on [1e-3, 1e6].
double digamma(double x);
double trigamma(double x);
double log_gamma(double x);

}  // namespace vbfa

#endif  // VBFA_LINALG_H_
