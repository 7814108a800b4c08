// vbfa/model_io.cc

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

#include "vbfa/model_io.h"

#include <cinttypes>
#include <cstdio>

namespace vbfa {

namespace {

std::string to_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

int checked_dim(const TensorContainer &c, const char *name) {
  const double v = c.scalar(name);
  const int n = static_cast<int>(v);
  if (n < 1 || static_cast<double>(n) != v)
    throw ShapeMismatch(std::string("bad dimension entry '") + name + "'");
  return n;
}

}  // namespace

std::string hash_string(const GmmBackend &backend) { return to_hex(backend.hash()); }

LoadingPosterior ModelBundle::posterior() const {
  std::vector<Eigen::MatrixXd> w = wbar;
  std::vector<SymPosDef> prec;
  prec.reserve(row_prec.size());
  for (const Eigen::MatrixXd &m : row_prec) prec.emplace_back(m);
  return LoadingPosterior(std::move(w), std::move(prec));
}

ModelBundle ModelBundle::from_result(const TrainResult &result,
                                     const std::string &backend_hash,
                                     std::map<std::string, std::string> config_echo) {
  ModelBundle b;
  b.backend_hash = backend_hash;
  b.num_components = result.loadings.num_components();
  b.feature_dim = result.loadings.feature_dim();
  b.factor_dim = result.loadings.factor_dim();
  for (int k = 0; k < b.num_components; ++k) {
    b.wbar.push_back(result.loadings.wbar(k));
    b.row_prec.push_back(result.loadings.row_prec(k).matrix());
  }
  if (result.alpha) {
    b.alpha_a = result.alpha->a_post();
    b.alpha_b = result.alpha->b_post();
  }
  b.hyper = result.hyper;
  b.min_div = result.min_div;
  b.mean_offset = result.mean_offset;
  b.config_echo = std::move(config_echo);
  b.history = result.history;
  return b;
}

void save_backend(const GmmBackend &backend, const std::string &path) {
  backend.validate();
  TensorContainer c;
  c.set_meta("kind", "backend");
  c.set_meta("backend_hash", hash_string(backend));
  c.add_matrix("means", backend.means);
  c.add_matrix("precisions", backend.precisions);
  c.save(path);
}

GmmBackend load_backend(const std::string &path) {
  TensorContainer c = TensorContainer::load(path);
  GmmBackend backend{c.matrix("means"), c.matrix("precisions")};
  backend.validate();
  if (c.has_meta("backend_hash") && c.meta("backend_hash") != hash_string(backend))
    throw HashMismatch("backend file '" + path + "' fails its own hash");
  return backend;
}

void save_dataset(const std::vector<SessionData> &sessions,
                  const std::string &backend_hash, const std::string &path) {
  if (sessions.empty()) throw std::invalid_argument("save_dataset: no sessions");
  std::int64_t total = 0;
  for (const SessionData &s : sessions) total += s.frames.rows();
  const int d = static_cast<int>(sessions[0].frames.cols());
  const int k_num = static_cast<int>(sessions[0].resp.cols());
  Eigen::MatrixXd frames(total, d), resp(total, k_num);
  Eigen::VectorXd counts(sessions.size());
  std::int64_t at = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto rows = sessions[i].frames.rows();
    frames.middleRows(at, rows) = sessions[i].frames;
    resp.middleRows(at, rows) = sessions[i].resp;
    counts(static_cast<Eigen::Index>(i)) = static_cast<double>(rows);
    at += rows;
  }
  TensorContainer c;
  c.set_meta("kind", "dataset");
  if (!backend_hash.empty()) c.set_meta("backend_hash", backend_hash);
  c.add_matrix("frames", frames);
  c.add_matrix("resp", resp);
  c.add_vector("frame_counts", counts);
  c.save(path);
}

DatasetFile load_dataset(const std::string &path) {
  TensorContainer c = TensorContainer::load(path);
  const Eigen::MatrixXd frames = c.matrix("frames");
  const Eigen::MatrixXd resp = c.matrix("resp");
  const Eigen::VectorXd counts = c.vector("frame_counts");
  if (frames.rows() != resp.rows())
    throw ShapeMismatch("dataset '" + path + "': frames/resp row mismatch");
  DatasetFile out;
  if (c.has_meta("backend_hash")) out.backend_hash = c.meta("backend_hash");
  std::int64_t at = 0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    const auto rows = static_cast<std::int64_t>(counts(i));
    if (rows < 0 || at + rows > frames.rows())
      throw ShapeMismatch("dataset '" + path + "': bad frame counts");
    out.sessions.push_back(
        {frames.middleRows(at, rows), resp.middleRows(at, rows)});
    at += rows;
  }
  if (at != frames.rows())
    throw ShapeMismatch("dataset '" + path + "': frame counts do not cover payload");
  return out;
}

void save_training_data(const TrainingData &data, const std::string &backend_hash,
                        const std::string &path) {
  if (data.sessions.empty())
    throw std::invalid_argument("save_training_data: no sessions");
  const int h = static_cast<int>(data.sessions.size());
  const int k_num = data.sessions[0].num_components();
  const int kd = static_cast<int>(data.sessions[0].fbar.size());
  Eigen::MatrixXd occupancy(h, k_num), fbar(h, kd);
  for (int i = 0; i < h; ++i) {
    occupancy.row(i) = data.sessions[i].occupancy;
    fbar.row(i) = data.sessions[i].fbar;
  }
  TensorContainer c;
  c.set_meta("kind", "stats");
  if (!backend_hash.empty()) c.set_meta("backend_hash", backend_hash);
  c.add_matrix("occupancy", occupancy);
  c.add_matrix("fbar", fbar);
  c.add_vector("sbar", data.global.sbar_trace);
  c.add_vector("total_occupancy", data.global.total_occupancy);
  c.save(path);
}

TrainingData load_training_data(const std::string &path,
                                const std::string &expected_backend_hash,
                                std::string *backend_hash_out) {
  TensorContainer c = TensorContainer::load(path);
  std::string stored;
  if (c.has_meta("backend_hash")) stored = c.meta("backend_hash");
  if (!expected_backend_hash.empty() && !stored.empty() &&
      stored != expected_backend_hash)
    throw HashMismatch("statistics '" + path + "' were computed against a different backend");
  if (backend_hash_out) *backend_hash_out = stored;

  const Eigen::MatrixXd occupancy = c.matrix("occupancy");
  const Eigen::MatrixXd fbar = c.matrix("fbar");
  TrainingData data;
  data.global.sbar_trace = c.vector("sbar");
  data.global.total_occupancy = c.vector("total_occupancy");
  data.global.num_sessions = static_cast<int>(occupancy.rows());
  if (occupancy.rows() != fbar.rows())
    throw ShapeMismatch("stats '" + path + "': occupancy/fbar row mismatch");
  if (data.global.sbar_trace.size() != occupancy.cols() ||
      data.global.total_occupancy.size() != occupancy.cols() ||
      fbar.cols() % occupancy.cols() != 0)
    throw ShapeMismatch("stats '" + path + "': inconsistent component counts");
  for (Eigen::Index i = 0; i < occupancy.rows(); ++i) {
    NormStats s;
    char id[32];
    std::snprintf(id, sizeof(id), "session-%04lld", static_cast<long long>(i));
    s.session_id = id;
    s.occupancy = occupancy.row(i);
    s.fbar = fbar.row(i);
    data.sessions.push_back(std::move(s));
  }
  return data;
}

void save_model(const ModelBundle &bundle, const std::string &path) {
  TensorContainer c;
  c.set_meta("kind", "model");
  c.set_meta("backend_hash", bundle.backend_hash);
  for (const auto &[key, value] : bundle.config_echo)
    c.set_meta("cfg." + key, value);
  c.add_scalar("num_components", bundle.num_components);
  c.add_scalar("feature_dim", bundle.feature_dim);
  c.add_scalar("factor_dim", bundle.factor_dim);

  const int d = bundle.feature_dim, ny = bundle.factor_dim;
  Eigen::MatrixXd wbar(bundle.num_components * d, ny);
  Eigen::MatrixXd prec(bundle.num_components * ny, ny);
  for (int k = 0; k < bundle.num_components; ++k) {
    wbar.middleRows(k * d, d) = bundle.wbar[k];
    prec.middleRows(k * ny, ny) = bundle.row_prec[k];
  }
  c.add_matrix("wbar", wbar);
  c.add_matrix("L_W", prec);
  if (bundle.alpha_a) {
    c.add_scalar("alpha_a", *bundle.alpha_a);
    c.add_vector("alpha_b", *bundle.alpha_b);
  }
  c.add_vector("hyper", Eigen::Vector2d(bundle.hyper.shape, bundle.hyper.rate));
  c.add_vector("mean_offset", bundle.mean_offset);
  if (bundle.min_div) {
    c.add_vector("mindiv_mu", bundle.min_div->mean);
    c.add_matrix("mindiv_sigma", bundle.min_div->cov);
  }
  if (!bundle.history.empty()) {
    Eigen::MatrixXd h(bundle.history.size(), 8);
    for (std::size_t i = 0; i < bundle.history.size(); ++i) {
      const ElboReport &r = bundle.history[i];
      h.row(static_cast<Eigen::Index>(i)) << r.total, r.data, r.prior_y,
          r.prior_w, r.prior_alpha, r.entropy_y, r.entropy_w, r.entropy_alpha;
    }
    c.add_matrix("elbo_history", h);
  }
  c.save(path);
}

ModelBundle load_model(const std::string &path) {
  TensorContainer c = TensorContainer::load(path);
  ModelBundle b;
  b.backend_hash = c.has_meta("backend_hash") ? c.meta("backend_hash") : "";
  for (const auto &[key, value] : c.all_meta())
    if (key.rfind("cfg.", 0) == 0) b.config_echo[key.substr(4)] = value;
  b.num_components = checked_dim(c, "num_components");
  b.feature_dim = checked_dim(c, "feature_dim");
  b.factor_dim = checked_dim(c, "factor_dim");

  const Eigen::MatrixXd wbar = c.matrix("wbar");
  const Eigen::MatrixXd prec = c.matrix("L_W");
  const int d = b.feature_dim, ny = b.factor_dim;
  if (wbar.rows() != b.num_components * d || wbar.cols() != ny ||
      prec.rows() != b.num_components * ny || prec.cols() != ny)
    throw ShapeMismatch("model '" + path + "': block shapes are inconsistent");
  for (int k = 0; k < b.num_components; ++k) {
    b.wbar.push_back(wbar.middleRows(k * d, d));
    b.row_prec.push_back(prec.middleRows(k * ny, ny));
  }
  if (c.has("alpha_a")) {
    b.alpha_a = c.scalar("alpha_a");
    b.alpha_b = c.vector("alpha_b");
    if (b.alpha_b->size() != ny)
      throw ShapeMismatch("model '" + path + "': alpha dimension mismatch");
  }
  const Eigen::VectorXd hyper = c.vector("hyper");
  if (hyper.size() != 2) throw ShapeMismatch("model '" + path + "': bad hyper entry");
  b.hyper = Hyper{hyper(0), hyper(1)};
  b.mean_offset = c.vector("mean_offset");
  if (b.mean_offset.size() != b.num_components * d)
    throw ShapeMismatch("model '" + path + "': mean offset size mismatch");
  if (c.has("mindiv_mu")) {
    MinDivStats md;
    md.mean = c.vector("mindiv_mu");
    md.cov = c.matrix("mindiv_sigma");
    md.offset = b.mean_offset;
    b.min_div = std::move(md);
  }
  if (c.has("elbo_history")) {
    const Eigen::MatrixXd h = c.matrix("elbo_history");
    if (h.cols() != 8) throw ShapeMismatch("model '" + path + "': bad history");
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      ElboReport r;
      r.total = h(i, 0);
      r.data = h(i, 1);
      r.prior_y = h(i, 2);
      r.prior_w = h(i, 3);
      r.prior_alpha = h(i, 4);
      r.entropy_y = h(i, 5);
      r.entropy_w = h(i, 6);
      r.entropy_alpha = h(i, 7);
      b.history.push_back(r);
    }
  }
  return b;
}

void save_prior(const LoadingPrior &prior, const std::string &backend_hash,
                const std::string &path) {
  prior.validate();
  TensorContainer c;
  c.set_meta("kind", "prior");
  if (!backend_hash.empty()) c.set_meta("backend_hash", backend_hash);
  const int k_num = prior.num_components();
  const int d = prior.feature_dim(), ny = prior.factor_dim();
  c.add_scalar("num_components", k_num);
  c.add_scalar("feature_dim", d);
  c.add_scalar("factor_dim", ny);
  Eigen::MatrixXd w0(k_num * d, ny), l0(k_num * ny, ny);
  for (int k = 0; k < k_num; ++k) {
    w0.middleRows(k * d, d) = prior.wbar0[k];
    l0.middleRows(k * ny, ny) = prior.prec0[k].matrix();
  }
  c.add_matrix("w0", w0);
  c.add_matrix("L0", l0);
  c.save(path);
}

LoadingPrior load_prior(const std::string &path, std::string *backend_hash_out,
                        Eigen::VectorXd *mean_offset_out) {
  TensorContainer c = TensorContainer::load(path);
  LoadingPrior prior;
  if (c.has("w0")) {
    const int k_num = checked_dim(c, "num_components");
    const int d = checked_dim(c, "feature_dim");
    const int ny = checked_dim(c, "factor_dim");
    const Eigen::MatrixXd w0 = c.matrix("w0");
    const Eigen::MatrixXd l0 = c.matrix("L0");
    if (w0.rows() != k_num * d || w0.cols() != ny || l0.rows() != k_num * ny ||
        l0.cols() != ny)
      throw ShapeMismatch("prior '" + path + "': block shapes are inconsistent");
    for (int k = 0; k < k_num; ++k) {
      prior.wbar0.push_back(w0.middleRows(k * d, d));
      prior.prec0.emplace_back(l0.middleRows(k * ny, ny));
    }
    if (backend_hash_out)
      *backend_hash_out = c.has_meta("backend_hash") ? c.meta("backend_hash") : "";
    if (mean_offset_out) *mean_offset_out = Eigen::VectorXd::Zero(k_num * d);
  } else {
    // a trained model: its posterior becomes the prior
    ModelBundle bundle = load_model(path);
    prior = LoadingPrior::from_posterior(bundle.posterior());
    if (backend_hash_out) *backend_hash_out = bundle.backend_hash;
    if (mean_offset_out) *mean_offset_out = bundle.mean_offset;
  }
  prior.validate();
  return prior;
}

void save_ivectors(const std::vector<LatentPosterior> &posteriors,
                   bool with_precisions, const std::string &model_hash,
                   const std::string &path) {
  if (posteriors.empty()) throw std::invalid_argument("save_ivectors: nothing to save");
  const int ny = static_cast<int>(posteriors[0].mean.size());
  Eigen::MatrixXd means(posteriors.size(), ny);
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    means.row(static_cast<Eigen::Index>(i)) = posteriors[i].mean;
  TensorContainer c;
  c.set_meta("kind", "ivectors");
  if (!model_hash.empty()) c.set_meta("backend_hash", model_hash);
  c.add_matrix("mean", means);
  if (with_precisions) {
    Eigen::MatrixXd prec(posteriors.size() * ny, ny);
    for (std::size_t i = 0; i < posteriors.size(); ++i)
      prec.middleRows(static_cast<Eigen::Index>(i) * ny, ny) =
          posteriors[i].prec.matrix();
    c.add_matrix("precision", prec);
  }
  c.save(path);
}

}  // namespace vbfa
