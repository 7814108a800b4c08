// vbfa/cli.cc

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

#include "vbfa/cli.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vbfa/adapt.h"
#include "vbfa/ard.h"
#include "vbfa/block.h"
#include "vbfa/model_io.h"
#include "vbfa/synth.h"

namespace vbfa {

namespace {

void run_synth(int components, int dim, int rank, int sessions, int frames,
               std::uint64_t seed, bool soft, const std::string &out_dir) {
  SynthSpec spec = default_spec(components, dim, rank, sessions, frames, seed);
  spec.soft_responsibilities = soft;
  SynthData data = generate(spec);
  std::filesystem::create_directories(out_dir);
  const std::string hash = hash_string(spec.backend);
  save_backend(spec.backend, out_dir + "/backend.vbt");
  save_dataset(data.sessions, hash, out_dir + "/data.vbt");

  TensorContainer truth;
  truth.set_meta("kind", "truth");
  truth.set_meta("backend_hash", hash);
  truth.add_matrix("y_true", data.y_true);
  truth.add_matrix("w_true", spec.w_true);
  Eigen::MatrixXd comp(sessions, frames);
  for (int i = 0; i < sessions; ++i)
    for (int t = 0; t < frames; ++t) comp(i, t) = data.components[i][t];
  truth.add_matrix("components", comp);
  truth.save(out_dir + "/truth.vbt");
}

void run_acc_stats(const std::string &data_path, const std::string &backend_path,
                   const std::string &out_path) {
  GmmBackend backend = load_backend(backend_path);
  DatasetFile dataset = load_dataset(data_path);
  const std::string hash = hash_string(backend);
  if (!dataset.backend_hash.empty() && dataset.backend_hash != hash)
    throw HashMismatch("dataset was generated against a different backend");
  TrainingData data = compute_training_data(dataset.sessions, backend);
  save_training_data(data, hash, out_path);
}

void run_train(const std::string &stats_path, const std::string &variant, int ny,
               int iters, std::uint64_t seed, bool hyper_opt, bool min_div,
               int partitions, const std::string &prior_path,
               const std::string &out_path) {
  std::string backend_hash;
  TrainingData data = load_training_data(stats_path, "", &backend_hash);

  TrainConfig config;
  config.factor_dim = ny;
  config.iterations = iters;
  config.seed = seed;
  config.optimize_hyper = hyper_opt;
  config.min_divergence = min_div;
  config.partitions = partitions;

  std::map<std::string, std::string> echo{
      {"variant", variant},
      {"ny", std::to_string(ny)},
      {"iters", std::to_string(iters)},
      {"seed", std::to_string(seed)},
      {"hyper_opt", hyper_opt ? "1" : "0"},
      {"min_div", min_div ? "1" : "0"},
      {"partitions", std::to_string(partitions)},
  };

  TrainResult result = [&] {
    if (variant == "ard") return train_ard(data, config);
    if (variant == "block") return train_block(data, config);
    if (variant == "adapt") {
      if (prior_path.empty())
        throw CLI::ValidationError("--prior is required for --variant adapt");
      std::string prior_hash;
      Eigen::VectorXd prior_offset;
      LoadingPrior prior = load_prior(prior_path, &prior_hash, &prior_offset);
      if (!prior_hash.empty() && !backend_hash.empty() &&
          prior_hash != backend_hash)
        throw HashMismatch("prior was trained against a different backend");
      config.factor_dim = prior.factor_dim();
      echo["ny"] = std::to_string(prior.factor_dim());
      echo["prior"] = std::filesystem::path(prior_path).filename().string();
      // statistics must see the prior model's folded mean shift
      TrainingData shifted = data;
      apply_mean_offset(prior_offset, &shifted.sessions, &shifted.global);
      TrainResult r = train_adapt(shifted, prior, config);
      r.mean_offset += prior_offset;
      return r;
    }
    throw CLI::ValidationError("unknown variant '" + variant + "'");
  }();

  ModelBundle bundle = ModelBundle::from_result(result, backend_hash, echo);
  save_model(bundle, out_path);
}

void run_extract(const std::string &model_path, const std::string &stats_path,
                 bool with_cov, const std::string &out_path) {
  ModelBundle bundle = load_model(model_path);
  TrainingData data = load_training_data(stats_path, bundle.backend_hash);
  LoadingPosterior posterior = bundle.posterior();
  std::vector<LatentPosterior> ivectors;
  ivectors.reserve(data.sessions.size());
  for (const NormStats &s : data.sessions)
    ivectors.push_back(extract_ivector(s, posterior, &bundle.mean_offset));
  save_ivectors(ivectors, with_cov, bundle.backend_hash, out_path);
}

void run_lb_report(const std::string &model_path, const std::string &csv_path) {
  ModelBundle bundle = load_model(model_path);
  const char *names[8] = {"total",   "data",      "prior_y", "prior_w",
                          "prior_a", "entropy_y", "entropy_w", "entropy_a"};
  auto row_values = [](const ElboReport &r) {
    return std::array<double, 8>{r.total,   r.data,      r.prior_y, r.prior_w,
                                 r.prior_alpha, r.entropy_y, r.entropy_w,
                                 r.entropy_alpha};
  };
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw ContainerError("cannot open '" + csv_path + "'");
    csv << "iter";
    for (const char *n : names) csv << "," << n;
    csv << "\n";
    for (std::size_t i = 0; i < bundle.history.size(); ++i) {
      csv << i;
      for (double v : row_values(bundle.history[i])) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        csv << "," << buf;
      }
      csv << "\n";
    }
  }
  std::printf("%4s %18s %18s %14s %14s %14s %14s %14s %14s\n", "iter", names[0],
              names[1], names[2], names[3], names[4], names[5], names[6],
              names[7]);
  for (std::size_t i = 0; i < bundle.history.size(); ++i) {
    const auto v = row_values(bundle.history[i]);
    std::printf("%4zu %18.6f %18.6f %14.6f %14.6f %14.6f %14.6f %14.6f %14.6f\n",
                i, v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
  }
}

}  // namespace

int run_cli(int argc, const char *const *argv) {
  if (const char *threads = std::getenv("VBFA_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));

  CLI::App app{"variational factor-analysis i-vector trainer"};
  app.require_subcommand(1);

  // synth
  auto *synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int s_components = 8, s_dim = 4, s_rank = 3, s_sessions = 200, s_frames = 100;
  std::uint64_t s_seed = 0;
  bool s_soft = false;
  std::string s_out_dir;
  synth->add_option("--components", s_components, "mixture components")
      ->check(CLI::PositiveNumber);
  synth->add_option("--dim", s_dim, "feature dimension")->check(CLI::PositiveNumber);
  synth->add_option("--rank", s_rank, "true factor rank")->check(CLI::PositiveNumber);
  synth->add_option("--sessions", s_sessions, "session count")
      ->check(CLI::PositiveNumber);
  synth->add_option("--frames", s_frames, "frames per session")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", s_seed, "random seed");
  synth->add_flag("--soft-resp", s_soft,
                  "emit GMM posterior responsibilities instead of one-hot");
  synth->add_option("--out-dir", s_out_dir, "output directory")->required();

  // acc-stats
  auto *acc = app.add_subcommand("acc-stats", "accumulate sufficient statistics");
  std::string a_data, a_backend, a_out;
  acc->add_option("--data", a_data, "dataset container")->required();
  acc->add_option("--backend", a_backend, "backend container")->required();
  acc->add_option("--out", a_out, "statistics output path")->required();

  // train
  auto *train = app.add_subcommand("train", "train a factor loading model");
  std::string t_stats, t_variant = "ard", t_prior, t_out;
  int t_ny = 10, t_iters = 20, t_partitions = 1;
  std::uint64_t t_seed = 0;
  bool t_hyper = false, t_min_div = false;
  train->add_option("--stats", t_stats, "statistics container")->required();
  train->add_option("--variant", t_variant, "ard | adapt | block")
      ->check(CLI::IsMember({"ard", "adapt", "block"}));
  train->add_option("--ny", t_ny, "factor dimension")->check(CLI::PositiveNumber);
  train->add_option("--iters", t_iters, "training iterations")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", t_seed, "random seed");
  train->add_flag("--hyper-opt", t_hyper, "optimize the Gamma prior after burn-in");
  train->add_flag("--min-div", t_min_div,
                  "apply minimum-divergence re-estimation after burn-in");
  train->add_option("--partitions", t_partitions,
                    "posterior-independent factor groups (block variant)")
      ->check(CLI::PositiveNumber);
  train->add_option("--prior", t_prior, "prior container (adapt variant)");
  train->add_option("--out", t_out, "model output path")->required();

  // extract
  auto *extract = app.add_subcommand("extract", "extract i-vectors");
  std::string e_model, e_stats, e_out;
  bool e_with_cov = false;
  extract->add_option("--model", e_model, "model container")->required();
  extract->add_option("--stats", e_stats, "statistics container")->required();
  extract->add_flag("--with-cov", e_with_cov, "also store posterior precisions");
  extract->add_option("--out", e_out, "i-vector output path")->required();

  // lb-report
  auto *report = app.add_subcommand("lb-report", "per-term bound history");
  std::string r_model, r_csv;
  report->add_option("--model", r_model, "model container")->required();
  report->add_option("--csv", r_csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth)
      run_synth(s_components, s_dim, s_rank, s_sessions, s_frames, s_seed,
                s_soft, s_out_dir);
    else if (*acc)
      run_acc_stats(a_data, a_backend, a_out);
    else if (*train)
      run_train(t_stats, t_variant, t_ny, t_iters, t_seed, t_hyper, t_min_div,
                t_partitions, t_prior, t_out);
    else if (*extract)
      run_extract(e_model, e_stats, e_with_cov, e_out);
    else if (*report)
      run_lb_report(r_model, r_csv);
  } catch (const CLI::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run_cli(const std::vector<std::string> &args) {
  std::vector<const char *> argv;
  argv.push_back("vbfa");
  for (const std::string &a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace vbfa
