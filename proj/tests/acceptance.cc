// vbfa/tests/acceptance.cc

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

// End-to-end acceptance checks, one line of output per criterion.  The
// reference corpus is K = 8 components, d = 4 features, true rank 3,
// 200 sessions of 100 frames, factor dimension 10, fixed seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vbfa/adapt.h"
#include "vbfa/block.h"
#include "vbfa/cli.h"
#include "vbfa/model_io.h"
#include "vbfa/synth.h"

using namespace vbfa;

namespace {

int g_failures = 0;

void report(int criterion, const char *name, bool pass, const std::string &detail) {
  std::printf("[%s] C%-2d %-28s %s\n", pass ? "PASS" : "FAIL", criterion, name,
              detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(const char *f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

bool monotone(const std::vector<ElboReport> &history, double *worst_drop) {
  *worst_drop = 0.0;
  bool ok = true;
  for (std::size_t t = 1; t < history.size(); ++t) {
    const double prev = history[t - 1].total;
    const double drop = prev - history[t].total;
    if (drop > *worst_drop) *worst_drop = drop;
    if (!(history[t].total >= prev - 1e-6 * std::abs(prev))) ok = false;
  }
  return ok;
}

struct Reference {
  SynthSpec spec;
  SynthData data;
  TrainingData stats;
};

Reference make_reference() {
  Reference ref;
  ref.spec = default_spec(8, 4, 3, 200, 100, 20240817);
  ref.data = generate(ref.spec);
  ref.stats = compute_training_data(ref.data.sessions, ref.spec.backend);
  return ref;
}

std::vector<int> by_relevance(const Eigen::VectorXd &e_alpha) {
  std::vector<int> idx(e_alpha.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return e_alpha(a) < e_alpha(b); });
  return idx;
}

}  // namespace

// C1: bound histories of all three trainers are non-decreasing over the
// 50-iteration reference run.
static void criterion_1(const Reference &ref) {
  TrainConfig config;
  config.factor_dim = 10;
  config.iterations = 50;
  config.seed = 1;
  config.optimize_hyper = true;

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult ard = train_ard(ref.stats, config);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  TrainConfig block_cfg = config;
  block_cfg.partitions = 2;
  TrainResult block = train_block(ref.stats, block_cfg);

  TrainConfig prior_cfg = config;
  prior_cfg.iterations = 30;
  prior_cfg.seed = 2;
  LoadingPrior prior =
      LoadingPrior::from_posterior(train_ard(ref.stats, prior_cfg).loadings);
  TrainConfig adapt_cfg;
  adapt_cfg.factor_dim = 10;
  adapt_cfg.iterations = 50;
  TrainResult adapt = train_adapt(ref.stats, prior, adapt_cfg);

  double drop_ard, drop_block, drop_adapt;
  const bool ok = monotone(ard.history, &drop_ard) &&
                  monotone(block.history, &drop_block) &&
                  monotone(adapt.history, &drop_adapt);
  report(1, "bound monotonicity", ok,
         fmt("worst drop ard %.2e / block %.2e / adapt %.2e; 50 iters in %.2f s",
             drop_ard, drop_block, drop_adapt, seconds));
}

// C2: on the scalar model the bound never exceeds the quadrature evidence and
// the gap contracts over the first 10 iterations.
static void criterion_2() {
  int bounded = 0, shrinking = 0;
  double worst_excess = -1e300;
  for (int seed = 1; seed <= 10; ++seed) {
    SynthSpec tiny = default_spec(1, 1, 1, 2, 8, seed);
    SynthData data = generate(tiny);
    TrainingData stats = compute_training_data(data.sessions, tiny.backend);
    Eigen::VectorXd sbar(2);
    for (int i = 0; i < 2; ++i)
      sbar(i) = global_stats({data.sessions[i]}, tiny.backend).sbar_trace(0);
    const double evidence = quadrature_evidence(stats.sessions, sbar, Hyper{});

    TrainConfig config;
    config.factor_dim = 1;
    config.iterations = 10;
    config.seed = seed;
    TrainResult run = train_ard(stats, config);
    bool ok = true, shrink = true;
    double prev_gap = 1e300;
    for (const ElboReport &rep : run.history) {
      worst_excess = std::max(worst_excess, rep.total - evidence);
      if (!(rep.total <= evidence + 1e-6)) ok = false;
      const double gap = evidence - rep.total;
      if (gap > prev_gap + 1e-12) shrink = false;
      prev_gap = gap;
    }
    bounded += ok;
    shrinking += shrink;
  }
  report(2, "evidence bound", bounded == 10 && shrinking >= 9,
         fmt("bounded %d/10, worst overshoot %.2e, gap shrinking %d/10 seeds",
             bounded, worst_excess, shrinking));
}

// C3: the trainer's posterior matches the exact fixed-loading oracle, and the
// moment accumulation matches a naive per-session loop.
static void criterion_3() {
  std::mt19937_64 eng(33);
  std::normal_distribution<double> gauss(0.0, 1.5);
  std::uniform_real_distribution<double> unif(0.0, 30.0);
  const int k_num = 6, d = 3, ny = 8;
  std::vector<Eigen::MatrixXd> blocks(k_num, Eigen::MatrixXd(d, ny));
  for (auto &b : blocks)
    for (int r = 0; r < d; ++r)
      for (int q = 0; q < ny; ++q) b(r, q) = gauss(eng);
  LoadingPosterior point = LoadingPosterior::point_mass(blocks);

  double worst_posterior = 0.0;
  std::vector<NormStats> sessions;
  for (int rep = 0; rep < 100; ++rep) {
    NormStats s;
    s.occupancy.resize(k_num);
    s.fbar.resize(k_num * d);
    for (int k = 0; k < k_num; ++k) s.occupancy(k) = unif(eng);
    for (int j = 0; j < k_num * d; ++j) s.fbar(j) = gauss(eng);
    LatentPosterior lat = update_y_one(s, point);
    auto [mean, prec] = exact_y_posterior(s, blocks);
    worst_posterior = std::max(worst_posterior,
                               (lat.mean - mean).cwiseAbs().maxCoeff());
    worst_posterior = std::max(
        worst_posterior, (lat.prec.matrix() - prec).cwiseAbs().maxCoeff());
    sessions.push_back(std::move(s));
  }

  std::vector<LatentPosterior> latents = update_y(sessions, point);
  Accumulators fast = accumulate_moments(sessions, latents);
  Accumulators slow = zero_accumulators(k_num, d, ny);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const Eigen::MatrixXd second =
        latents[i].cov + latents[i].mean * latents[i].mean.transpose();
    for (int row = 0; row < k_num * d; ++row)
      for (int col = 0; col < ny; ++col)
        slow.c(row, col) += sessions[i].fbar(row) * latents[i].mean(col);
    for (int k = 0; k < k_num; ++k) slow.r[k] += sessions[i].occupancy(k) * second;
    slow.rho += second;
  }
  double worst_acc = (fast.c - slow.c).cwiseAbs().maxCoeff();
  for (int k = 0; k < k_num; ++k)
    worst_acc = std::max(worst_acc, (fast.r[k] - slow.r[k]).cwiseAbs().maxCoeff());
  worst_acc = std::max(worst_acc, (fast.rho - slow.rho).cwiseAbs().maxCoeff());

  report(3, "oracle equivalence", worst_posterior <= 1e-10 && worst_acc <= 1e-12,
         fmt("posterior max dev %.2e (tol 1e-10), moments max dev %.2e (tol 1e-12)",
             worst_posterior, worst_acc));
}

// C4, C5 and C7 share one converged reference run with the hyperparameter
// and minimum-divergence steps enabled.
static TrainResult converged_reference_run(const Reference &ref) {
  TrainConfig config;
  config.factor_dim = 10;
  config.iterations = 500;
  config.seed = 1;
  config.optimize_hyper = true;
  config.min_divergence = true;
  return train_ard(ref.stats, config);
}

static void criteria_4_5(const Reference &ref, const TrainResult &run) {
  const Eigen::VectorXd e_alpha = run.alpha->e_alpha();
  const Eigen::MatrixXd w_full = run.loadings.stacked_mean();
  const Eigen::VectorXd col_norm = w_full.colwise().norm();
  const std::vector<int> order = by_relevance(e_alpha);
  const double median_active = e_alpha(order[1]);  // median of the 3 most active
  const double max_norm = col_norm.maxCoeff();

  int shut = 0;
  bool norms_ok = true;
  for (int q = 0; q < 10; ++q) {
    if (e_alpha(q) > 1e3 * median_active) {
      ++shut;
      if (col_norm(q) > 1e-3 * max_norm) norms_ok = false;
    }
  }
  report(4, "ARD pruning", shut >= 6 && norms_ok,
         fmt("%d columns shut off (need >= 6), largest shut-off norm ratio %.2e",
             shut,
             [&] {
               double worst = 0.0;
               for (int q = 0; q < 10; ++q)
                 if (e_alpha(q) > 1e3 * median_active)
                   worst = std::max(worst, col_norm(q) / max_norm);
               return worst;
             }()));

  // C5: principal angle between the recovered and generating subspaces
  Eigen::MatrixXd active(w_full.rows(), 3);
  for (int j = 0; j < 3; ++j) active.col(j) = w_full.col(order[j]);
  Eigen::MatrixXd truth(w_full.rows(), 3);
  const auto true_blocks = normalized_loading(ref.spec.backend, ref.spec.w_true);
  for (int k = 0; k < 8; ++k) truth.middleRows(k * 4, 4) = true_blocks[k];
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(active), qt(truth);
  const Eigen::MatrixXd ortho_a =
      qa.householderQ() * Eigen::MatrixXd::Identity(w_full.rows(), 3);
  const Eigen::MatrixXd ortho_t =
      qt.householderQ() * Eigen::MatrixXd::Identity(w_full.rows(), 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ortho_a.transpose() * ortho_t);
  const double angle =
      std::acos(std::min(1.0, svd.singularValues().minCoeff())) * 180.0 / M_PI;
  report(5, "subspace recovery", angle <= 10.0,
         fmt("largest principal angle %.3f deg (tol 10)", angle));
}

// C7: the data term survives one more minimum-divergence application and the
// re-derived latents have unit aggregate second moments.
static void criterion_7(const Reference &ref, const TrainResult &run) {
  std::vector<NormStats> work = ref.stats.sessions;
  GlobalStats global = ref.stats.global;
  apply_mean_offset(run.mean_offset, &work, &global);
  std::vector<LatentPosterior> latents = update_y(work, run.loadings);
  Accumulators acc = accumulate_moments(work, latents);
  const double before = elbo_data_term(global, acc, run.loadings);
  auto [transformed, md] = min_divergence(acc, run.loadings);
  apply_mean_offset(md.offset, &work, &global);
  std::vector<LatentPosterior> rederived = update_y(work, transformed);
  Accumulators acc2 = accumulate_moments(work, rederived);
  const double after = elbo_data_term(global, acc2, transformed);
  const double rel = std::abs(before - after) / std::abs(before);

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(10);
  for (const LatentPosterior &l : rederived) diag += l.second_moment.diagonal();
  diag /= static_cast<double>(rederived.size());
  const bool unit = (diag.array() >= 0.95).all() && (diag.array() <= 1.05).all();
  report(7, "minimum divergence", rel <= 1e-8 && unit,
         fmt("data term rel change %.2e (tol 1e-8), second-moment diag in [%.4f, %.4f]",
             rel, diag.minCoeff(), diag.maxCoeff()));
}

// C6: hyperparameter stationarity solved to 1e-10 on a fixed point and on
// 1000 random instances.
static void criterion_6() {
  AlphaPosterior self(2.0, Eigen::VectorXd::Constant(5, 2.0));
  Hyper recovered = optimize_hyper(self, Hyper{});
  const bool self_ok = std::abs(recovered.shape - 2.0) <= 1e-8 &&
                       std::abs(recovered.rate - 2.0) <= 1e-8;

  std::mt19937_64 eng(66);
  std::uniform_real_distribution<double> log_a(std::log(0.1), std::log(100.0));
  std::uniform_real_distribution<double> log_b(std::log(1e-3), std::log(1e3));
  int solved = 0;
  bool positive = true;
  double worst_residual = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int ny = 1 + static_cast<int>(eng() % 8);
    Eigen::VectorXd b(ny);
    for (int q = 0; q < ny; ++q) b(q) = std::exp(log_b(eng));
    AlphaPosterior alpha(std::exp(log_a(eng)), b);
    Hyper out = optimize_hyper(alpha, Hyper{1.0, 1.0});
    if (!(out.shape > 0.0) || !(out.rate > 0.0)) positive = false;
    const double residual = digamma(out.shape) - std::log(out.rate) -
                            alpha.e_log_alpha().mean();
    worst_residual = std::max(worst_residual, std::abs(residual));
    if (std::abs(residual) <= 1e-10) ++solved;
  }
  report(6, "hyperparameter solver", self_ok && solved == 1000 && positive,
         fmt("self-consistent pair recovered %d, residual <= 1e-10 on %d/1000, worst %.2e",
             self_ok, solved, worst_residual));
}

// C8: single-partition equivalence, block-family bound ordering at
// convergence, and the allocation audit.
static void criterion_8(const Reference &ref) {
  TrainConfig config;
  config.factor_dim = 10;
  config.iterations = 50;
  config.seed = 1;
  config.optimize_hyper = true;
  config.min_divergence = true;

  config.partitions = 1;
  TrainResult block_one = train_block(ref.stats, config);
  TrainResult joint = train_ard(ref.stats, config);
  bool bit_identical = block_one.history.size() == joint.history.size();
  for (std::size_t t = 0; bit_identical && t < joint.history.size(); ++t)
    bit_identical =
        std::memcmp(&block_one.history[t], &joint.history[t], sizeof(ElboReport)) == 0;
  for (int k = 0; bit_identical && k < 8; ++k)
    bit_identical = std::memcmp(block_one.loadings.wbar(k).data(),
                                joint.loadings.wbar(k).data(),
                                sizeof(double) * joint.loadings.wbar(k).size()) == 0;

  // bound comparison at convergence of both families
  config.iterations = 300;
  config.partitions = 1;
  TrainResult one = train_block(ref.stats, config);
  config.partitions = 2;
  TrainResult two = train_block(ref.stats, config);
  const double l1 = one.history.back().total;
  const double l2 = two.history.back().total;
  const bool ordered = l2 <= l1 + 1e-6;
  const bool close = std::abs(l1 - l2) <= 0.005 * std::abs(l1);

  // allocation audit on a fresh partitioned run
  config.iterations = 20;
  AllocationAudit::begin(std::max(5, 4), 8 * 4, 5);
  TrainResult audited = train_block(ref.stats, config);
  AllocationAudit::end();
  const bool no_wide = AllocationAudit::violations() == 0;

  report(8, "block family", bit_identical && ordered && close && no_wide,
         fmt("P1 bitwise %d; L2-L1 %.3e (<= 1e-6), rel gap %.2e (<= 5e-3); audit violations %d, max square dim %ld",
             bit_identical, l2 - l1, std::abs(l1 - l2) / std::abs(l1),
             AllocationAudit::violations(), AllocationAudit::max_square_dim()));
  (void)audited;
}

// C9: adaptation limit behavior on random instances.
static void criterion_9() {
  std::mt19937_64 eng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_mat = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gauss(eng);
    return m;
  };
  auto random_spd = [&](int n) {
    Eigen::MatrixXd m = random_mat(n, n);
    return Eigen::MatrixXd(m * m.transpose() +
                           0.5 * n * Eigen::MatrixXd::Identity(n, n));
  };

  double worst_pin = 0.0, worst_ridge = 0.0, worst_eig = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int k_num = 1 + static_cast<int>(eng() % 3);
    const int d = 1 + static_cast<int>(eng() % 3);
    const int ny = 1 + static_cast<int>(eng() % 4);
    Accumulators acc = zero_accumulators(k_num, d, ny);
    acc.num_sessions = 5;
    acc.c = random_mat(k_num * d, ny);
    for (auto &r : acc.r) r = random_spd(ny);
    LoadingPrior prior;
    for (int k = 0; k < k_num; ++k) {
      prior.wbar0.push_back(random_mat(d, ny));
      prior.prec0.emplace_back(random_spd(ny));
    }

    LoadingPrior heavy = prior;
    for (int k = 0; k < k_num; ++k)
      heavy.prec0[k] = SymPosDef(1e9 * prior.prec0[k].matrix());
    LoadingPosterior pinned = update_w_map(acc, heavy);
    for (int k = 0; k < k_num; ++k)
      worst_pin = std::max(worst_pin, (pinned.wbar(k) - prior.wbar0[k]).norm() /
                                          prior.wbar0[k].norm());

    LoadingPrior weak;
    for (int k = 0; k < k_num; ++k) {
      weak.wbar0.push_back(prior.wbar0[k]);
      weak.prec0.emplace_back(1e-9 * Eigen::MatrixXd::Identity(ny, ny));
    }
    LoadingPosterior ridge = update_w_map(acc, weak);
    for (int k = 0; k < k_num; ++k) {
      const Eigen::MatrixXd direct =
          acc.r[k]
              .colPivHouseholderQr()
              .solve(acc.c.middleRows(k * d, d).transpose())
              .transpose();
      worst_ridge = std::max(worst_ridge,
                             (ridge.wbar(k) - direct).norm() / (1.0 + direct.norm()));
    }

    LoadingPosterior post = update_w_map(acc, prior);
    for (int k = 0; k < k_num; ++k) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          post.row_prec(k).matrix() - prior.prec0[k].matrix());
      worst_eig = std::min(worst_eig, es.eigenvalues().minCoeff());
    }
  }
  report(9, "adaptation limits",
         worst_pin <= 1e-6 && worst_ridge <= 1e-5 && worst_eig >= -1e-10,
         fmt("prior-pin dev %.2e (tol 1e-6), ridge dev %.2e (tol 1e-5), min eig of L-L0 %.2e",
             worst_pin, worst_ridge, worst_eig));
}

// C10: two seeded end-to-end pipeline runs produce byte-identical artifacts.
static void criterion_10() {
  namespace fs = std::filesystem;
  auto read_bytes = [](const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  bool ran = true;
  std::string dirs[2] = {"acceptance_run_a", "acceptance_run_b"};
  for (const std::string &dir : dirs) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    ran = ran && run_cli({"synth", "--components", "8", "--dim", "4", "--rank",
                          "3", "--sessions", "60", "--frames", "40", "--seed",
                          "20240817", "--out-dir", dir}) == 0;
    ran = ran && run_cli({"acc-stats", "--data", dir + "/data.vbt", "--backend",
                          dir + "/backend.vbt", "--out", dir + "/stats.vbt"}) == 0;
    ran = ran &&
          run_cli({"train", "--stats", dir + "/stats.vbt", "--ny", "10",
                   "--iters", "25", "--seed", "4", "--hyper-opt", "--min-div",
                   "--out", dir + "/model.vbt"}) == 0;
    ran = ran && run_cli({"extract", "--model", dir + "/model.vbt", "--stats",
                          dir + "/stats.vbt", "--with-cov", "--out",
                          dir + "/ivectors.vbt"}) == 0;
  }
  const bool model_same =
      ran && read_bytes(dirs[0] + "/model.vbt") == read_bytes(dirs[1] + "/model.vbt");
  const bool iv_same = ran && read_bytes(dirs[0] + "/ivectors.vbt") ==
                                  read_bytes(dirs[1] + "/ivectors.vbt");
  report(10, "pipeline determinism", ran && model_same && iv_same,
         fmt("pipelines ran %d, model files identical %d, i-vector files identical %d",
             ran, model_same, iv_same));
}

int main() {
  std::printf("reference config: K=8 d=4 rank=3 H=200x100 ny=10\n");
  Reference ref = make_reference();
  TrainResult converged = converged_reference_run(ref);
  criterion_1(ref);
  criterion_2();
  criterion_3();
  criteria_4_5(ref, converged);
  criterion_6();
  criterion_7(ref, converged);
  criterion_8(ref);
  criterion_9();
  criterion_10();
  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
