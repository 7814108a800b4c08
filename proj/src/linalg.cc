// vbfa/linalg.cc

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

#include "vbfa/linalg.h"

#include <cmath>
#include <string>

namespace vbfa {

SymPosDef::SymPosDef(const Eigen::MatrixXd &m) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw std::invalid_argument("SymPosDef: matrix must be square and non-empty");
  if (!m.allFinite())
    throw NumericError("SymPosDef: non-finite entries");
  mat_ = m.selfadjointView<Eigen::Lower>();
  llt_.compute(mat_);
  if (llt_.info() != Eigen::Success)
    throw NumericError("SymPosDef: matrix is not positive definite");
  // Eigen can report Success on a semi-definite input; insist on positive pivots.
  if ((llt_.matrixLLT().diagonal().array() <= 0.0).any())
    throw NumericError("SymPosDef: non-positive pivot");
}

Eigen::MatrixXd SymPosDef::solve(const Eigen::Ref<const Eigen::MatrixXd> &b) const {
  if (b.rows() != mat_.rows())
    throw std::invalid_argument("SymPosDef::solve: row count mismatch");
  return llt_.solve(b);
}

Eigen::MatrixXd SymPosDef::inverse() const {
  return llt_.solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

double SymPosDef::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Eigen::MatrixXd chol_solve(const SymPosDef &a,
                           const Eigen::Ref<const Eigen::MatrixXd> &b) {
  if (!b.allFinite())
    throw std::invalid_argument("chol_solve: right-hand side has non-finite entries");
  return a.solve(b);
}

double logdet(const SymPosDef &a) { return a.log_det(); }

SymPosDef make_spd_jittered(const Eigen::MatrixXd &m, double jitter_rel) {
  try {
    return SymPosDef(m);
  } catch (const NumericError &) {
    const double bump = jitter_rel * m.trace() / static_cast<double>(m.rows());
    Eigen::MatrixXd fixed = m;
    fixed.diagonal().array() += bump;
    return SymPosDef(fixed);  // second failure propagates
  }
}

namespace {

void check_positive(double x, const char *name) {
  if (!(x > 0.0))
    throw std::domain_error(std::string(name) + ": argument must be positive");
}

}  // namespace

double digamma(double x) {
  check_positive(x, "digamma");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n)
  const double r = 1.0 / (x * x);
  double series = r * (-1.0 / 12.0 +
                  r * (1.0 / 120.0 +
                  r * (-1.0 / 252.0 +
                  r * (1.0 / 240.0 +
                  r * (-1.0 / 132.0 +
                  r * (691.0 / 32760.0 +
                  r * (-1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 / x + series;
}

double trigamma(double x) {
  check_positive(x, "trigamma");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  // psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^(2n+1)
  const double r = 1.0 / (x * x);
  double series = 1.0 / 6.0 +
                  r * (-1.0 / 30.0 +
                  r * (1.0 / 42.0 +
                  r * (-1.0 / 30.0 +
                  r * (5.0 / 66.0 +
                  r * (-691.0 / 2730.0 +
                  r * (7.0 / 6.0))))));
  return acc + 1.0 / x + 0.5 * r + r / x * series;
}

double log_gamma(double x) {
  check_positive(x, "log_gamma");
  double acc = 0.0;
  while (x < 7.0) {
    acc -= std::log(x);
    x += 1.0;
  }
  // Stirling: (x - 1/2) ln x - x + ln sqrt(2 pi) + sum a_k x^-(2k-1)
  static const double kHalfLog2Pi = 0.91893853320467274178;
  const double r = 1.0 / (x * x);
  double series = (1.0 / 12.0 +
                  r * (-1.0 / 360.0 +
                  r * (1.0 / 1260.0 +
                  r * (-1.0 / 1680.0 +
                  r * (1.0 / 1188.0 +
                  r * (-691.0 / 360360.0 +
                  r * (1.0 / 156.0))))))) / x;
  return acc + (x - 0.5) * std::log(x) - x + kHalfLog2Pi + series;
}

}  // namespace vbfa
