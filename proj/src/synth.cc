// vbfa/synth.cc

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

#include "vbfa/synth.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vbfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double Rng::uniform() {
  // 53-bit mantissa draw mapped to (0, 1]
  return 1.0 - (engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

int Rng::categorical(const Eigen::VectorXd &weights) {
  const double u = uniform();
  double cum = 0.0;
  for (int k = 0; k < weights.size(); ++k) {
    cum += weights(k);
    if (u <= cum) return k;
  }
  return static_cast<int>(weights.size()) - 1;
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void SynthSpec::validate() const {
  backend.validate();
  if (backend.num_components() != num_components ||
      backend.feature_dim() != feature_dim)
    throw std::invalid_argument("SynthSpec: backend shape mismatch");
  if (w_true.rows() != num_components * feature_dim ||
      w_true.cols() != factor_dim_true)
    throw std::invalid_argument("SynthSpec: w_true shape mismatch");
  if (weights.size() != num_components ||
      std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() < 0.0).any())
    throw std::invalid_argument("SynthSpec: weights must form a simplex");
  if (num_sessions < 1 || frames_per_session < 1)
    throw std::invalid_argument("SynthSpec: empty corpus");
}

SynthSpec default_spec(int num_components, int feature_dim, int factor_dim_true,
                       int num_sessions, int frames_per_session,
                       std::uint64_t seed) {
  SynthSpec spec;
  spec.num_components = num_components;
  spec.feature_dim = feature_dim;
  spec.factor_dim_true = factor_dim_true;
  spec.num_sessions = num_sessions;
  spec.frames_per_session = frames_per_session;
  spec.seed = seed;
  // well-separated binary lattice, unit precisions
  spec.backend.means.resize(num_components, feature_dim);
  for (int k = 0; k < num_components; ++k)
    for (int j = 0; j < feature_dim; ++j)
      spec.backend.means(k, j) = 10.0 * ((k >> (j % 31)) & 1);
  spec.backend.precisions =
      Eigen::MatrixXd::Ones(num_components, feature_dim);
  Rng rng(split_seed(seed, 0x100000000ull));
  spec.w_true.resize(num_components * feature_dim, factor_dim_true);
  for (Eigen::Index r = 0; r < spec.w_true.rows(); ++r)
    for (Eigen::Index c = 0; c < spec.w_true.cols(); ++c)
      spec.w_true(r, c) = rng.normal();
  spec.weights =
      Eigen::VectorXd::Constant(num_components, 1.0 / num_components);
  return spec;
}

SynthData generate(const SynthSpec &spec) {
  spec.validate();
  const int d = spec.feature_dim;
  SynthData data;
  data.sessions.resize(spec.num_sessions);
  data.y_true.resize(spec.num_sessions, spec.factor_dim_true);
  data.components.resize(spec.num_sessions);
  for (int i = 0; i < spec.num_sessions; ++i) {
    Rng rng(split_seed(spec.seed, static_cast<std::uint64_t>(i)));
    Eigen::VectorXd y(spec.factor_dim_true);
    for (int q = 0; q < spec.factor_dim_true; ++q) y(q) = rng.normal();
    data.y_true.row(i) = y;

    SessionData &session = data.sessions[i];
    session.frames.resize(spec.frames_per_session, d);
    session.resp = Eigen::MatrixXd::Zero(spec.frames_per_session,
                                         spec.num_components);
    data.components[i].resize(spec.frames_per_session);
    for (int t = 0; t < spec.frames_per_session; ++t) {
      const int z = rng.categorical(spec.weights);
      data.components[i][t] = z;
      Eigen::VectorXd x = spec.backend.means.row(z).transpose() +
                          spec.w_true.middleRows(z * d, d) * y;
      for (int j = 0; j < d; ++j)
        x(j) += rng.normal() / std::sqrt(spec.backend.precisions(z, j));
      session.frames.row(t) = x;
      session.resp(t, z) = 1.0;
    }
    if (spec.soft_responsibilities)
      session.resp = gmm_responsibilities(session.frames, spec.backend);
  }
  return data;
}

std::vector<Eigen::MatrixXd> normalized_loading(const GmmBackend &backend,
                                                const Eigen::MatrixXd &w_true) {
  const int d = backend.feature_dim();
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(backend.num_components());
  for (int k = 0; k < backend.num_components(); ++k)
    blocks.push_back(backend.precisions.row(k).array().sqrt().matrix().asDiagonal() *
                     w_true.middleRows(k * d, d));
  return blocks;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> exact_y_posterior(
    const NormStats &stats, const std::vector<Eigen::MatrixXd> &w_blocks) {
  const int ny = static_cast<int>(w_blocks[0].cols());
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(ny, ny);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ny);
  for (std::size_t k = 0; k < w_blocks.size(); ++k) {
    prec += stats.occupancy(k) * w_blocks[k].transpose() * w_blocks[k];
    rhs += w_blocks[k].transpose() * stats.fbar_block(static_cast<int>(k));
  }
  // deliberately a different solver family than the trainer path
  Eigen::VectorXd mean = prec.colPivHouseholderQr().solve(rhs);
  return {mean, prec};
}

namespace {

// Composite Simpson log-weights for n intervals (n even) of width h.
std::vector<double> simpson_log_weights(int n, double h) {
  std::vector<double> w(n + 1, std::log(h / 3.0));
  for (int j = 1; j < n; ++j) w[j] += std::log(j % 2 == 1 ? 4.0 : 2.0);
  return w;
}

// Streaming log-sum-exp.
struct LogSum {
  double max_term = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  void add(double t) {
    if (t == -std::numeric_limits<double>::infinity()) return;
    if (t > max_term) {
      sum = sum * std::exp(max_term - t) + 1.0;
      max_term = t;
    } else {
      sum += std::exp(t - max_term);
    }
  }
  double value() const { return max_term + std::log(sum); }
};

}  // namespace

double quadrature_evidence(const std::vector<NormStats> &sessions,
                           const Eigen::VectorXd &sbar_per_session,
                           const Hyper &hyper, int grid_scale) {
  hyper.validate();
  if (sessions.size() > 3)
    throw std::invalid_argument("quadrature_evidence: at most 3 sessions");
  if (grid_scale < 1)
    throw std::invalid_argument("quadrature_evidence: grid_scale must be >= 1");
  if (sessions.empty()) return 0.0;  // empty product
  if (sbar_per_session.size() != static_cast<Eigen::Index>(sessions.size()))
    throw std::invalid_argument("quadrature_evidence: one Sbar per session");
  for (const NormStats &s : sessions)
    if (s.num_components() != 1 || s.fbar.size() != 1)
      throw std::invalid_argument("quadrature_evidence: scalar model only");

  const int h_num = static_cast<int>(sessions.size());
  Eigen::VectorXd n_i(h_num), fbar_i(h_num);
  for (int i = 0; i < h_num; ++i) {
    n_i(i) = sessions[i].occupancy(0);
    fbar_i(i) = sessions[i].fbar(0);
  }

  // y integrated analytically per session
  auto log_lik = [&](double w) {
    const double w2 = w * w;
    double acc = 0.0;
    for (int i = 0; i < h_num; ++i) {
      const double denom = 1.0 + n_i(i) * w2;
      acc += -0.5 * n_i(i) * kLog2Pi - 0.5 * sbar_per_session(i) -
             0.5 * std::log(denom) + 0.5 * w2 * fbar_i(i) * fbar_i(i) / denom;
    }
    return acc;
  };

  const double w_cut = 32.0;
  const int n_inner = 1000 * grid_scale;  // resolves the prior peak, width 1/sqrt(alpha)
  const int n_outer = 400 * grid_scale;
  const int n_tail = 200 * grid_scale;
  const int n_u = 3000 * grid_scale;
  const double u_lo = -60.0, u_hi = 35.0;
  const double log2 = std::log(2.0);

  const double a = hyper.shape, b = hyper.rate;
  const double log_prior_const = a * std::log(b) - log_gamma(a);
  const double hu = (u_hi - u_lo) / n_u;
  std::vector<double> lu = simpson_log_weights(n_u, hu);

  // The integrand is even in w (only w^2 enters the likelihood and the
  // prior), so each panel covers w >= 0 and counts twice.
  LogSum total;
  for (int iu = 0; iu <= n_u; ++iu) {
    const double u = u_lo + iu * hu;
    const double alpha = std::exp(u);
    const double base = log_prior_const + (a - 1.0) * u - b * alpha + u +
                        0.5 * u - 0.5 * kLog2Pi + lu[iu] + log2;
    const double half_alpha = 0.5 * alpha;

    // inner panel [0, l]: prior-scaled
    const double l = std::min(8.0 / std::sqrt(alpha), w_cut);
    {
      const double h = l / n_inner;
      std::vector<double> lw = simpson_log_weights(n_inner, h);
      for (int j = 0; j <= n_inner; ++j) {
        const double w = j * h;
        total.add(base + log_lik(w) - half_alpha * w * w + lw[j]);
      }
    }
    // outer panel [l, w_cut]: likelihood-scaled
    if (l < w_cut) {
      const double h = (w_cut - l) / n_outer;
      std::vector<double> lw = simpson_log_weights(n_outer, h);
      for (int j = 0; j <= n_outer; ++j) {
        const double w = l + j * h;
        total.add(base + log_lik(w) - half_alpha * w * w + lw[j]);
      }
    }
    // tail [w_cut, inf) in v = 1/w
    {
      const double hv = (1.0 / w_cut) / n_tail;
      std::vector<double> lv = simpson_log_weights(n_tail, hv);
      for (int j = 1; j <= n_tail; ++j) {  // v = 0 contributes nothing
        const double v = j * hv;
        const double w = 1.0 / v;
        total.add(base + log_lik(w) - half_alpha * w * w - 2.0 * std::log(v) +
                  lv[j]);
      }
    }
  }
  return total.value();
}

}  // namespace vbfa
