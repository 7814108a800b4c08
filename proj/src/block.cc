// vbfa/block.cc

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

#include "vbfa/block.h"

#include <cmath>
#include <string>
#include <utility>

namespace vbfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

struct AuditState {
  bool active = false;
  int max_dim = 0;
  long exempt_rows = 0;
  long exempt_cols = 0;
  int violations = 0;
  long max_square_dim = 0;
};
AuditState g_audit;
}  // namespace

void AllocationAudit::begin(int max_dim, long exempt_rows, long exempt_cols) {
  g_audit = AuditState{true, max_dim, exempt_rows, exempt_cols, 0, 0};
}
void AllocationAudit::end() { g_audit.active = false; }
bool AllocationAudit::active() { return g_audit.active; }
int AllocationAudit::violations() { return g_audit.violations; }
long AllocationAudit::max_square_dim() { return g_audit.max_square_dim; }

void AllocationAudit::note(long rows, long cols) {
  if (!g_audit.active) return;
  const long square = rows < cols ? rows : cols;
  if (square > g_audit.max_square_dim) g_audit.max_square_dim = square;
  const bool exempt = (rows == g_audit.exempt_rows && cols == g_audit.exempt_cols) ||
                      (rows == g_audit.exempt_cols && cols == g_audit.exempt_rows);
  if (rows > g_audit.max_dim && cols > g_audit.max_dim && !exempt)
    ++g_audit.violations;
}

BlockPartition BlockPartition::make(int factor_dim, int partitions) {
  if (partitions < 1 || factor_dim < 1 || factor_dim % partitions != 0)
    throw std::invalid_argument(
        "BlockPartition: partitions must divide the factor dimension");
  return BlockPartition{factor_dim, partitions, factor_dim / partitions};
}

BlockState init_block_state(const std::vector<NormStats> &stats, int factor_dim,
                            int partitions, const Hyper &hyper,
                            std::uint64_t seed) {
  if (stats.empty()) throw std::invalid_argument("init_block_state: no sessions");
  BlockState state;
  state.part = BlockPartition::make(factor_dim, partitions);
  state.num_components = stats[0].num_components();
  state.feature_dim = stats[0].feature_dim();

  std::mt19937_64 engine(seed);
  LoadingPosterior full = LoadingPosterior::random_init(
      state.num_components, state.feature_dim, factor_dim, hyper, engine);
  if (partitions == 1) {
    state.loadings.push_back(full);
  } else {
    const int nb = state.part.block_dim;
    const double e_alpha = hyper.shape / hyper.rate;
    for (int p = 0; p < partitions; ++p) {
      std::vector<Eigen::MatrixXd> wbar;
      wbar.reserve(state.num_components);
      for (int k = 0; k < state.num_components; ++k) {
        AllocationAudit::note(state.feature_dim, nb);
        wbar.push_back(full.wbar(k).middleCols(state.part.col_start(p), nb));
      }
      AllocationAudit::note(nb, nb);
      std::vector<SymPosDef> prec(
          state.num_components,
          SymPosDef(e_alpha * Eigen::MatrixXd::Identity(nb, nb)));
      state.loadings.emplace_back(std::move(wbar), std::move(prec));
    }
  }

  const int nb = state.part.block_dim;
  state.latents.resize(partitions);
  for (int p = 0; p < partitions; ++p) {
    state.latents[p].reserve(stats.size());
    SymPosDef unit(Eigen::MatrixXd::Identity(nb, nb));
    for (std::size_t i = 0; i < stats.size(); ++i)
      state.latents[p].emplace_back(Eigen::VectorXd::Zero(nb), unit);
  }
  if (partitions > 1) recompute_residuals(stats, &state);
  return state;
}

void recompute_residuals(const std::vector<NormStats> &stats, BlockState *state) {
  if (state->part.partitions == 1) return;
  const int k_num = state->num_components;
  const int d = state->feature_dim;
  state->residual.resize(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    AllocationAudit::note(static_cast<long>(k_num) * d, 1);
    Eigen::VectorXd res = stats[i].fbar;
    for (int p = 0; p < state->part.partitions; ++p)
      for (int k = 0; k < k_num; ++k)
        res.segment(k * d, d).noalias() -=
            stats[i].occupancy(k) *
            (state->loadings[p].wbar(k) * state->latents[p][i].mean);
    state->residual[i] = std::move(res);
  }
}

void update_y_block(int p, const std::vector<NormStats> &stats,
                    BlockState *state) {
  if (state->part.partitions == 1) {
    state->latents[0] = update_y(stats, state->loadings[0]);
    return;
  }
  const int k_num = state->num_components;
  const int d = state->feature_dim;
  const int nb = state->part.block_dim;
  const LoadingPosterior &load = state->loadings[p];
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const NormStats &s = stats[i];
    Eigen::VectorXd &res = state->residual[i];
    // add the block's own current reconstruction back: res + own = residual
    // of all *other* blocks
    for (int k = 0; k < k_num; ++k)
      res.segment(k * d, d).noalias() +=
          s.occupancy(k) * (load.wbar(k) * state->latents[p][i].mean);
    AllocationAudit::note(nb, nb);
    Eigen::MatrixXd prec_mat = Eigen::MatrixXd::Identity(nb, nb);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
    for (int k = 0; k < k_num; ++k) {
      prec_mat.noalias() += s.occupancy(k) * load.gram(k);
      rhs.noalias() += load.wbar(k).transpose() * res.segment(k * d, d);
    }
    SymPosDef prec(prec_mat);
    Eigen::VectorXd mean = prec.solve(rhs);
    state->latents[p][i] = LatentPosterior(std::move(mean), std::move(prec));
    for (int k = 0; k < k_num; ++k)
      res.segment(k * d, d).noalias() -=
          s.occupancy(k) * (load.wbar(k) * state->latents[p][i].mean);
  }
}

void update_w_block(int p, const std::vector<NormStats> &stats,
                    BlockState *state, const AlphaPosterior &alpha) {
  if (state->part.partitions == 1) {
    Accumulators acc = accumulate_moments(stats, state->latents[0]);
    state->loadings[0] = update_w(acc, alpha);
    return;
  }
  const int k_num = state->num_components;
  const int d = state->feature_dim;
  const int nb = state->part.block_dim;
  const LoadingPosterior &load = state->loadings[p];

  AllocationAudit::note(static_cast<long>(k_num) * d, nb);
  Accumulators acc = zero_accumulators(k_num, d, nb);
  acc.num_sessions = static_cast<int>(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const NormStats &s = stats[i];
    const LatentPosterior &lat = state->latents[p][i];
    Eigen::VectorXd &res = state->residual[i];
    // residualized statistic including this block's own contribution
    for (int k = 0; k < k_num; ++k)
      res.segment(k * d, d).noalias() +=
          s.occupancy(k) * (load.wbar(k) * lat.mean);
    acc.c.noalias() += res * lat.mean.transpose();
    for (int k = 0; k < k_num; ++k)
      acc.r[k].noalias() += s.occupancy(k) * lat.second_moment;
  }

  AlphaPosterior alpha_block(
      alpha.a_post(),
      alpha.b_post().segment(state->part.col_start(p), nb));
  state->loadings[p] = update_w(acc, alpha_block);

  const LoadingPosterior &fresh = state->loadings[p];
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const NormStats &s = stats[i];
    Eigen::VectorXd &res = state->residual[i];
    for (int k = 0; k < k_num; ++k)
      res.segment(k * d, d).noalias() -=
          s.occupancy(k) * (fresh.wbar(k) * state->latents[p][i].mean);
  }
}

AlphaPosterior update_alpha_blocks(const std::vector<LoadingPosterior> &blocks,
                                   const Hyper &hyper) {
  hyper.validate();
  if (blocks.size() == 1) return update_alpha(blocks[0], hyper);
  int ny = 0;
  for (const auto &b : blocks) ny += b.factor_dim();
  Eigen::VectorXd eww(ny);
  int at = 0;
  for (const auto &b : blocks) {
    Eigen::VectorXd part = Eigen::VectorXd::Zero(b.factor_dim());
    for (int k = 0; k < b.num_components(); ++k) part += b.gram(k).diagonal();
    eww.segment(at, b.factor_dim()) = part;
    at += b.factor_dim();
  }
  const double a_post = hyper.shape + 0.5 * blocks[0].num_components() *
                                          blocks[0].feature_dim();
  return AlphaPosterior(a_post, hyper.rate + 0.5 * eww.array());
}

Eigen::MatrixXd block_cross_moment(const std::vector<NormStats> &stats,
                                   const BlockState &state, int k, int m, int n) {
  const int nb = state.part.block_dim;
  AllocationAudit::note(nb, nb);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nb, nb);
  for (std::size_t i = 0; i < stats.size(); ++i)
    out.noalias() += stats[i].occupancy(k) * state.latents[m][i].mean *
                     state.latents[n][i].mean.transpose();
  return out;
}

ElboReport elbo_block(const GlobalStats &global,
                      const std::vector<NormStats> &stats,
                      const BlockState &state, const AlphaPosterior &alpha,
                      const Hyper &hyper) {
  hyper.validate();
  if (state.part.partitions == 1) {
    Accumulators acc = accumulate_moments(stats, state.latents[0]);
    return elbo(global, acc, state.loadings[0], alpha, hyper);
  }
  const int k_num = state.num_components;
  const int d = state.feature_dim;
  const int nb = state.part.block_dim;
  const int p_num = state.part.partitions;
  const int ny = state.part.total_dim;
  const int h = static_cast<int>(stats.size());
  const double a = hyper.shape, b = hyper.rate;
  const double ap = alpha.a_post();

  double data = -0.5 * d * kLog2Pi * global.total_occupancy.sum() -
                0.5 * global.sbar_trace.sum();
  double rho_trace = 0.0;
  double sum_logdet_y = 0.0;
  double sum_logdet_w = 0.0;
  Eigen::VectorXd eww(ny);

  for (int p = 0; p < p_num; ++p) {
    const LoadingPosterior &load = state.loadings[p];
    // per-block plain accumulators against the unresidualized statistics
    AllocationAudit::note(static_cast<long>(k_num) * d, nb);
    Eigen::MatrixXd c_plain = Eigen::MatrixXd::Zero(k_num * d, nb);
    std::vector<Eigen::MatrixXd> r_block(k_num, Eigen::MatrixXd::Zero(nb, nb));
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const LatentPosterior &lat = state.latents[p][i];
      c_plain.noalias() += stats[i].fbar * lat.mean.transpose();
      for (int k = 0; k < k_num; ++k)
        r_block[k].noalias() += stats[i].occupancy(k) * lat.second_moment;
      rho_trace += lat.second_moment.trace();
      sum_logdet_y += lat.prec.log_det();
    }
    Eigen::VectorXd eww_p = Eigen::VectorXd::Zero(nb);
    for (int k = 0; k < k_num; ++k) {
      data += load.wbar(k).cwiseProduct(c_plain.middleRows(k * d, d)).sum();
      data -= 0.5 * load.gram(k).cwiseProduct(r_block[k]).sum();
      eww_p += load.gram(k).diagonal();
      sum_logdet_w += load.row_prec(k).log_det();
    }
    eww.segment(state.part.col_start(p), nb) = eww_p;
  }
  // cross products between blocks, means only
  for (int n = 0; n < p_num; ++n) {
    for (int m = n + 1; m < p_num; ++m) {
      for (int k = 0; k < k_num; ++k) {
        Eigen::MatrixXd r_mn = block_cross_moment(stats, state, k, m, n);
        data -= (state.loadings[n].wbar(k).transpose() *
                 state.loadings[m].wbar(k))
                    .cwiseProduct(r_mn.transpose())
                    .sum();
      }
    }
  }

  ElboReport rep;
  rep.data = data;
  rep.prior_y = -0.5 * h * ny * kLog2Pi - 0.5 * rho_trace;
  rep.prior_w = -0.5 * ny * k_num * d * kLog2Pi +
                0.5 * k_num * d * alpha.e_log_alpha().sum() -
                0.5 * alpha.e_alpha().dot(eww);
  rep.prior_alpha = ny * (a * std::log(b) - log_gamma(a)) +
                    (a - 1.0) * alpha.e_log_alpha().sum() -
                    b * alpha.e_alpha().sum();
  rep.entropy_y = 0.5 * h * ny * (kLog2Pi + 1.0) - 0.5 * sum_logdet_y;
  rep.entropy_w = 0.5 * k_num * d * ny * (kLog2Pi + 1.0) - 0.5 * d * sum_logdet_w;
  rep.entropy_alpha = ny * (ap + log_gamma(ap) - (ap - 1.0) * digamma(ap)) -
                      alpha.b_post().array().log().sum();
  rep.finalize();
  return rep;
}

LoadingPosterior assemble_full_posterior(const BlockState &state) {
  if (state.part.partitions == 1) return state.loadings[0];
  const int k_num = state.num_components;
  const int d = state.feature_dim;
  const int nb = state.part.block_dim;
  const int ny = state.part.total_dim;
  std::vector<Eigen::MatrixXd> wbar(k_num, Eigen::MatrixXd(d, ny));
  std::vector<SymPosDef> prec;
  prec.reserve(k_num);
  for (int k = 0; k < k_num; ++k) {
    Eigen::MatrixXd prec_full = Eigen::MatrixXd::Zero(ny, ny);
    for (int p = 0; p < state.part.partitions; ++p) {
      const int at = state.part.col_start(p);
      wbar[k].middleCols(at, nb) = state.loadings[p].wbar(k);
      prec_full.block(at, at, nb, nb) = state.loadings[p].row_prec(k).matrix();
    }
    prec.emplace_back(prec_full);
  }
  return LoadingPosterior(std::move(wbar), std::move(prec));
}

TrainResult train_block(const TrainingData &data, const TrainConfig &config) {
  if (config.partitions == 1) return train_ard(data, config);
  config.hyper.validate();
  if (data.sessions.empty())
    throw std::invalid_argument("train_block: no sessions");
  const BlockPartition part =
      BlockPartition::make(config.factor_dim, config.partitions);
  const int k_num = data.sessions[0].num_components();
  const int d = data.sessions[0].feature_dim();
  const int nb = part.block_dim;

  std::vector<NormStats> work = data.sessions;
  GlobalStats global = data.global;
  BlockState state = init_block_state(work, config.factor_dim,
                                      config.partitions, config.hyper,
                                      config.seed);
  AlphaPosterior alpha =
      AlphaPosterior::from_prior(config.hyper, config.factor_dim);
  Hyper hyper = config.hyper;
  Eigen::VectorXd offset_total = Eigen::VectorXd::Zero(k_num * d);
  bool have_min_div = false;
  Eigen::VectorXd last_mean(config.factor_dim);
  Eigen::VectorXd last_offset(k_num * d);
  std::vector<Eigen::MatrixXd> last_covs(part.partitions);
  std::vector<ElboReport> history;
  history.reserve(config.iterations);

  for (int it = 0; it < config.iterations; ++it) {
    if (it > 0 && it % 10 == 0) recompute_residuals(work, &state);  // drift repair
    for (int p = 0; p < part.partitions; ++p) {
      update_y_block(p, work, &state);
      update_w_block(p, work, &state, alpha);
    }
    alpha = update_alpha_blocks(state.loadings, hyper);
    ElboReport rep = elbo_block(global, work, state, alpha, hyper);
    if (!std::isfinite(rep.total))
      throw NumericError("train_block: non-finite bound at iteration " +
                         std::to_string(it));
    history.push_back(rep);

    if (config.optimize_hyper && it >= config.burn_in)
      hyper = optimize_hyper(alpha, hyper);
    if (config.min_divergence && it >= config.burn_in &&
        static_cast<int>(work.size()) >= 2) {
      last_offset.setZero();
      for (int p = 0; p < part.partitions; ++p) {
        AllocationAudit::note(static_cast<long>(k_num) * d, nb);
        Accumulators acc = zero_accumulators(k_num, d, nb);
        acc.num_sessions = static_cast<int>(work.size());
        for (std::size_t i = 0; i < work.size(); ++i) {
          acc.rho += state.latents[p][i].second_moment;
          acc.sum_mean += state.latents[p][i].mean;
        }
        auto [transformed, md] = min_divergence(acc, state.loadings[p]);
        state.loadings[p] = std::move(transformed);
        apply_mean_offset(md.offset, &work, &global);
        offset_total += md.offset;
        last_mean.segment(part.col_start(p), nb) = md.mean;
        last_covs[p] = std::move(md.cov);
        last_offset += md.offset;
      }
      have_min_div = true;
      recompute_residuals(work, &state);
    }
  }

  std::optional<MinDivStats> last_min_div;
  if (have_min_div) {
    // assembled outside the iteration path: the record is block-diagonal
    MinDivStats md;
    md.mean = last_mean;
    md.offset = last_offset;
    md.cov = Eigen::MatrixXd::Zero(config.factor_dim, config.factor_dim);
    for (int p = 0; p < part.partitions; ++p)
      md.cov.block(part.col_start(p), part.col_start(p), nb, nb) = last_covs[p];
    last_min_div = std::move(md);
  }

  return TrainResult{assemble_full_posterior(state), std::move(alpha), hyper,
                     std::move(history), std::move(last_min_div),
                     std::move(offset_total)};
}

}  // namespace vbfa
