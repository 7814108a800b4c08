// vbfa/ard.cc

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

#include "vbfa/ard.h"

#include <cmath>
#include <string>
#include <utility>

namespace vbfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void Hyper::validate() const {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("Hyper: shape and rate must be positive");
}

AlphaPosterior::AlphaPosterior(double a_post, Eigen::VectorXd b_post)
    : a_post_(a_post), b_post_(std::move(b_post)) {
  if (!(a_post_ > 0.0) || !(b_post_.array() > 0.0).all())
    throw std::invalid_argument("AlphaPosterior: parameters must be positive");
  e_alpha_ = a_post_ / b_post_.array();
  e_log_alpha_ = digamma(a_post_) - b_post_.array().log();
}

AlphaPosterior AlphaPosterior::from_prior(const Hyper &hyper, int factor_dim) {
  hyper.validate();
  return AlphaPosterior(hyper.shape,
                        Eigen::VectorXd::Constant(factor_dim, hyper.rate));
}

LatentPosterior::LatentPosterior(Eigen::VectorXd mean_in, SymPosDef prec_in)
    : mean(std::move(mean_in)), prec(std::move(prec_in)) {
  if (mean.size() != prec.dim())
    throw std::invalid_argument("LatentPosterior: mean/precision size mismatch");
  cov = prec.inverse();
  second_moment = cov + mean * mean.transpose();
}

LoadingPosterior::LoadingPosterior(std::vector<Eigen::MatrixXd> wbar,
                                   std::vector<SymPosDef> row_prec)
    : wbar_(std::move(wbar)), row_prec_(std::move(row_prec)) {
  if (wbar_.empty() || wbar_.size() != row_prec_.size())
    throw std::invalid_argument("LoadingPosterior: component count mismatch");
  for (const auto &w : wbar_)
    if (w.rows() != wbar_[0].rows() || w.cols() != wbar_[0].cols())
      throw std::invalid_argument("LoadingPosterior: inconsistent block shapes");
  for (const auto &p : row_prec_)
    if (p.dim() != factor_dim())
      throw std::invalid_argument("LoadingPosterior: row precision dimension mismatch");
  refresh_caches();
}

LoadingPosterior LoadingPosterior::point_mass(std::vector<Eigen::MatrixXd> wbar) {
  if (wbar.empty())
    throw std::invalid_argument("LoadingPosterior: no components");
  LoadingPosterior out;
  out.wbar_ = std::move(wbar);
  const int ny = static_cast<int>(out.wbar_[0].cols());
  out.row_cov_.assign(out.wbar_.size(), Eigen::MatrixXd::Zero(ny, ny));
  out.gram_.reserve(out.wbar_.size());
  for (const auto &w : out.wbar_)
    out.gram_.push_back(w.transpose() * w);
  return out;
}

LoadingPosterior LoadingPosterior::random_init(int num_components, int feature_dim,
                                               int factor_dim, const Hyper &hyper,
                                               std::mt19937_64 &engine) {
  hyper.validate();
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(factor_dim));
  std::vector<Eigen::MatrixXd> wbar(num_components,
                                    Eigen::MatrixXd(feature_dim, factor_dim));
  for (int k = 0; k < num_components; ++k)
    for (int r = 0; r < feature_dim; ++r)
      for (int q = 0; q < factor_dim; ++q) wbar[k](r, q) = gauss(engine);
  const double e_alpha = hyper.shape / hyper.rate;
  std::vector<SymPosDef> prec(
      num_components,
      SymPosDef(e_alpha *
                Eigen::MatrixXd::Identity(factor_dim, factor_dim)));
  return LoadingPosterior(std::move(wbar), std::move(prec));
}

void LoadingPosterior::refresh_caches() {
  const int d = feature_dim();
  row_cov_.clear();
  gram_.clear();
  row_cov_.reserve(wbar_.size());
  gram_.reserve(wbar_.size());
  for (std::size_t k = 0; k < wbar_.size(); ++k) {
    row_cov_.push_back(row_prec_[k].inverse());
    gram_.push_back(d * row_cov_[k] + wbar_[k].transpose() * wbar_[k]);
  }
}

Eigen::MatrixXd LoadingPosterior::stacked_mean() const {
  const int d = feature_dim();
  Eigen::MatrixXd out(num_components() * d, factor_dim());
  for (int k = 0; k < num_components(); ++k) out.middleRows(k * d, d) = wbar_[k];
  return out;
}

LoadingPosterior LoadingPosterior::row_transformed(const Eigen::MatrixXd &g) const {
  if (!has_row_uncertainty())
    throw std::logic_error("LoadingPosterior: cannot transform a point mass");
  if (g.rows() != factor_dim() || g.cols() != factor_dim())
    throw std::invalid_argument("LoadingPosterior: transform shape mismatch");
  // Precisions change by congruence with g^{-1}: L' = g^{-T} L g^{-1}.
  Eigen::PartialPivLU<Eigen::MatrixXd> gt_lu(g.transpose());
  std::vector<Eigen::MatrixXd> wbar_new;
  std::vector<SymPosDef> prec_new;
  wbar_new.reserve(wbar_.size());
  prec_new.reserve(wbar_.size());
  for (std::size_t k = 0; k < wbar_.size(); ++k) {
    wbar_new.push_back(wbar_[k] * g.transpose());
    Eigen::MatrixXd m1 = gt_lu.solve(row_prec_[k].matrix());
    Eigen::MatrixXd lnew = gt_lu.solve(m1.transpose());
    prec_new.emplace_back(0.5 * (lnew + lnew.transpose()));
  }
  return LoadingPosterior(std::move(wbar_new), std::move(prec_new));
}

LatentPosterior update_y_one(const NormStats &stats,
                             const LoadingPosterior &loadings) {
  const int k_num = loadings.num_components();
  const int d = loadings.feature_dim();
  const int ny = loadings.factor_dim();
  if (stats.num_components() != k_num || stats.fbar.size() != k_num * d)
    throw std::invalid_argument("update_y: statistics do not match the model");
  Eigen::MatrixXd prec_mat = Eigen::MatrixXd::Identity(ny, ny);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ny);
  for (int k = 0; k < k_num; ++k) {
    prec_mat.noalias() += stats.occupancy(k) * loadings.gram(k);
    rhs.noalias() += loadings.wbar(k).transpose() * stats.fbar_block(k);
  }
  SymPosDef prec(prec_mat);
  Eigen::VectorXd mean = prec.solve(rhs);
  return LatentPosterior(std::move(mean), std::move(prec));
}

std::vector<LatentPosterior> update_y(const std::vector<NormStats> &stats,
                                      const LoadingPosterior &loadings) {
  std::vector<LatentPosterior> out;
  out.reserve(stats.size());
  for (const NormStats &s : stats) out.push_back(update_y_one(s, loadings));
  return out;
}

Accumulators zero_accumulators(int num_components, int feature_dim,
                               int factor_dim) {
  Accumulators acc;
  acc.c = Eigen::MatrixXd::Zero(num_components * feature_dim, factor_dim);
  acc.r.assign(num_components, Eigen::MatrixXd::Zero(factor_dim, factor_dim));
  acc.rho = Eigen::MatrixXd::Zero(factor_dim, factor_dim);
  acc.sum_mean = Eigen::VectorXd::Zero(factor_dim);
  return acc;
}

Accumulators accumulate_moments(const std::vector<NormStats> &stats,
                                const std::vector<LatentPosterior> &latents) {
  if (stats.size() != latents.size())
    throw std::invalid_argument("accumulate_moments: one latent per session required");
  if (stats.empty())
    throw std::invalid_argument("accumulate_moments: no sessions");
  const int k_num = stats[0].num_components();
  const int d = stats[0].feature_dim();
  const int ny = static_cast<int>(latents[0].mean.size());
  Accumulators acc = zero_accumulators(k_num, d, ny);
  acc.num_sessions = static_cast<int>(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const NormStats &s = stats[i];
    const LatentPosterior &l = latents[i];
    acc.c.noalias() += s.fbar * l.mean.transpose();
    for (int k = 0; k < k_num; ++k)
      acc.r[k].noalias() += s.occupancy(k) * l.second_moment;
    acc.rho += l.second_moment;
    acc.sum_mean += l.mean;
    acc.sum_logdet_prec += l.prec.log_det();
  }
  return acc;
}

LoadingPosterior update_w(const Accumulators &acc, const AlphaPosterior &alpha) {
  const int k_num = static_cast<int>(acc.r.size());
  const int ny = static_cast<int>(acc.c.cols());
  const int d = static_cast<int>(acc.c.rows()) / k_num;
  if (alpha.factor_dim() != ny)
    throw std::invalid_argument("update_w: alpha dimension mismatch");
  if (!(alpha.e_alpha().array() > 0.0).all())
    throw std::invalid_argument("update_w: non-positive E[alpha]");
  std::vector<Eigen::MatrixXd> wbar;
  std::vector<SymPosDef> prec;
  wbar.reserve(k_num);
  prec.reserve(k_num);
  for (int k = 0; k < k_num; ++k) {
    Eigen::MatrixXd lmat = acc.r[k];
    lmat.diagonal() += alpha.e_alpha();
    try {
      prec.push_back(make_spd_jittered(lmat));
    } catch (const NumericError &) {
      throw NumericError("update_w: degenerate row precision for component " +
                         std::to_string(k));
    }
    // all d rows of the component share one factorization
    wbar.push_back(
        prec.back().solve(acc.c.middleRows(k * d, d).transpose()).transpose());
  }
  return LoadingPosterior(std::move(wbar), std::move(prec));
}

AlphaPosterior update_alpha(const LoadingPosterior &loadings, const Hyper &hyper) {
  hyper.validate();
  const int ny = loadings.factor_dim();
  Eigen::VectorXd eww = Eigen::VectorXd::Zero(ny);
  for (int k = 0; k < loadings.num_components(); ++k)
    eww += loadings.gram(k).diagonal();
  const double a_post =
      hyper.shape + 0.5 * loadings.num_components() * loadings.feature_dim();
  return AlphaPosterior(a_post, hyper.rate + 0.5 * eww.array());
}

double elbo_data_term(const GlobalStats &global, const Accumulators &acc,
                      const LoadingPosterior &loadings) {
  const int d = loadings.feature_dim();
  double term = -0.5 * d * kLog2Pi * global.total_occupancy.sum() -
                0.5 * global.sbar_trace.sum();
  for (int k = 0; k < loadings.num_components(); ++k) {
    term += loadings.wbar(k).cwiseProduct(acc.c.middleRows(k * d, d)).sum();
    term -= 0.5 * loadings.gram(k).cwiseProduct(acc.r[k]).sum();
  }
  return term;
}

ElboReport elbo(const GlobalStats &global, const Accumulators &acc,
                const LoadingPosterior &loadings, const AlphaPosterior &alpha,
                const Hyper &hyper) {
  hyper.validate();
  const int k_num = loadings.num_components();
  const int d = loadings.feature_dim();
  const int ny = loadings.factor_dim();
  const int h = acc.num_sessions;
  const double a = hyper.shape, b = hyper.rate;
  const double ap = alpha.a_post();

  Eigen::VectorXd eww = Eigen::VectorXd::Zero(ny);
  double sum_logdet_w = 0.0;
  for (int k = 0; k < k_num; ++k) {
    eww += loadings.gram(k).diagonal();
    sum_logdet_w += loadings.row_prec(k).log_det();
  }

  ElboReport rep;
  rep.data = elbo_data_term(global, acc, loadings);
  rep.prior_y = -0.5 * h * ny * kLog2Pi - 0.5 * acc.rho.trace();
  rep.prior_w = -0.5 * ny * k_num * d * kLog2Pi +
                0.5 * k_num * d * alpha.e_log_alpha().sum() -
                0.5 * alpha.e_alpha().dot(eww);
  rep.prior_alpha = ny * (a * std::log(b) - log_gamma(a)) +
                    (a - 1.0) * alpha.e_log_alpha().sum() -
                    b * alpha.e_alpha().sum();
  rep.entropy_y = 0.5 * h * ny * (kLog2Pi + 1.0) - 0.5 * acc.sum_logdet_prec;
  rep.entropy_w = 0.5 * k_num * d * ny * (kLog2Pi + 1.0) - 0.5 * d * sum_logdet_w;
  rep.entropy_alpha = ny * (ap + log_gamma(ap) - (ap - 1.0) * digamma(ap)) -
                      alpha.b_post().array().log().sum();
  rep.finalize();
  return rep;
}

Hyper optimize_hyper(const AlphaPosterior &alpha, const Hyper &current) {
  current.validate();
  const double c = alpha.e_log_alpha().mean();
  const double dtilde = alpha.e_alpha().mean();
  if (!(dtilde > 0.0) || !std::isfinite(c) || !std::isfinite(dtilde))
    throw NumericError("optimize_hyper: invalid alpha moments");
  const double log_dtilde = std::log(dtilde);

  auto residual = [&](double a) { return digamma(a) - std::log(a) + log_dtilde - c; };

  double a = current.shape;
  double f = residual(a);
  int iter = 0;
  for (; iter < 200 && std::abs(f) > 1e-12; ++iter) {
    const double denom = a * trigamma(a) - 1.0;  // positive for a > 0
    double step = -f / denom;
    double a_next = a * std::exp(step);
    double f_next = residual(a_next);
    // damp the log-step while the residual grows
    for (int half = 0; half < 60 && std::abs(f_next) > std::abs(f); ++half) {
      step *= 0.5;
      a_next = a * std::exp(step);
      f_next = residual(a_next);
    }
    a = a_next;
    f = f_next;
  }
  if (std::abs(f) > 1e-10)
    throw NumericError("optimize_hyper: no convergence after " +
                       std::to_string(iter) + " iterations, residual " +
                       std::to_string(f));
  return Hyper{a, a / dtilde};
}

std::pair<LoadingPosterior, MinDivStats> min_divergence(
    const Accumulators &acc, const LoadingPosterior &loadings) {
  if (acc.num_sessions < 2)
    throw std::invalid_argument("min_divergence: needs at least two sessions");
  const double h = acc.num_sessions;
  MinDivStats md;
  md.mean = acc.sum_mean / h;
  md.cov = acc.rho / h - md.mean * md.mean.transpose();
  SymPosDef cov_spd = [&] {
    try {
      return SymPosDef(md.cov);
    } catch (const NumericError &) {
      throw NumericError(
          "min_divergence: aggregate latent covariance is singular; "
          "use more sessions or a smaller factor dimension");
    }
  }();
  // Factor with g^T g = Sigma_y, so the re-standardized latents have unit
  // aggregate covariance.
  Eigen::MatrixXd g = cov_spd.llt().matrixU();
  md.offset.resize(loadings.num_components() * loadings.feature_dim());
  for (int k = 0; k < loadings.num_components(); ++k)
    md.offset.segment(k * loadings.feature_dim(), loadings.feature_dim()) =
        loadings.wbar(k) * md.mean;
  return {loadings.row_transformed(g), std::move(md)};
}

void apply_mean_offset(const Eigen::VectorXd &offset,
                       std::vector<NormStats> *sessions, GlobalStats *global) {
  if (sessions->empty()) return;
  const int k_num = (*sessions)[0].num_components();
  const int d = (*sessions)[0].feature_dim();
  if (offset.size() != k_num * d)
    throw std::invalid_argument("apply_mean_offset: offset size mismatch");
  Eigen::VectorXd fbar_sum = Eigen::VectorXd::Zero(k_num * d);
  for (const NormStats &s : *sessions) fbar_sum += s.fbar;
  for (NormStats &s : *sessions)
    for (int k = 0; k < k_num; ++k)
      s.fbar.segment(k * d, d) -= s.occupancy(k) * offset.segment(k * d, d);
  for (int k = 0; k < k_num; ++k) {
    const auto o = offset.segment(k * d, d);
    global->sbar_trace(k) += -2.0 * o.dot(fbar_sum.segment(k * d, d)) +
                             global->total_occupancy(k) * o.squaredNorm();
  }
}

TrainResult train_ard(const TrainingData &data, const TrainConfig &config) {
  config.hyper.validate();
  if (config.factor_dim < 1)
    throw std::invalid_argument("train_ard: factor dimension must be positive");
  if (data.sessions.empty())
    throw std::invalid_argument("train_ard: no sessions");
  const int k_num = data.sessions[0].num_components();
  const int d = data.sessions[0].feature_dim();

  std::mt19937_64 engine(config.seed);
  LoadingPosterior loadings = LoadingPosterior::random_init(
      k_num, d, config.factor_dim, config.hyper, engine);
  AlphaPosterior alpha =
      AlphaPosterior::from_prior(config.hyper, config.factor_dim);
  Hyper hyper = config.hyper;

  std::vector<NormStats> work = data.sessions;
  GlobalStats global = data.global;
  Eigen::VectorXd offset_total = Eigen::VectorXd::Zero(k_num * d);
  std::optional<MinDivStats> last_min_div;
  std::vector<ElboReport> history;
  history.reserve(config.iterations);

  for (int it = 0; it < config.iterations; ++it) {
    std::vector<LatentPosterior> latents = update_y(work, loadings);
    Accumulators acc = accumulate_moments(work, latents);
    loadings = update_w(acc, alpha);
    alpha = update_alpha(loadings, hyper);
    ElboReport rep = elbo(global, acc, loadings, alpha, hyper);
    if (!std::isfinite(rep.total))
      throw NumericError("train_ard: non-finite bound at iteration " +
                         std::to_string(it));
    history.push_back(rep);

    if (config.optimize_hyper && it >= config.burn_in)
      hyper = optimize_hyper(alpha, hyper);
    if (config.min_divergence && it >= config.burn_in &&
        acc.num_sessions >= 2) {
      auto [transformed, md] = min_divergence(acc, loadings);
      loadings = std::move(transformed);
      apply_mean_offset(md.offset, &work, &global);
      offset_total += md.offset;
      last_min_div = std::move(md);
    }
  }

  return TrainResult{std::move(loadings), std::move(alpha), hyper,
                     std::move(history), std::move(last_min_div),
                     std::move(offset_total)};
}

LatentPosterior extract_ivector(const NormStats &stats,
                                const LoadingPosterior &loadings,
                                const Eigen::VectorXd *mean_offset) {
  if (!mean_offset) return update_y_one(stats, loadings);
  if (mean_offset->size() != stats.fbar.size())
    throw std::invalid_argument("extract_ivector: offset size mismatch");
  NormStats shifted = stats;
  const int d = stats.feature_dim();
  for (int k = 0; k < stats.num_components(); ++k)
    shifted.fbar.segment(k * d, d) -=
        stats.occupancy(k) * mean_offset->segment(k * d, d);
  return update_y_one(shifted, loadings);
}

}  // namespace vbfa
