// vbfa/stats.cc

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

#include "vbfa/stats.h"

#include <cmath>
#include <stdexcept>

namespace vbfa {

void GmmBackend::validate() const {
  if (means.rows() < 1 || means.cols() < 1)
    throw std::invalid_argument("GmmBackend: empty mixture");
  if (precisions.rows() != means.rows() || precisions.cols() != means.cols())
    throw std::invalid_argument("GmmBackend: means/precisions shape mismatch");
  if (!(precisions.array() > 0.0).all())
    throw std::invalid_argument("GmmBackend: precisions must be positive");
  if (!means.allFinite() || !precisions.allFinite())
    throw std::invalid_argument("GmmBackend: non-finite parameters");
}

namespace {

std::uint64_t fnv1a(const void *data, std::size_t bytes, std::uint64_t h) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::uint64_t GmmBackend::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  const std::int64_t dims[2] = {means.rows(), means.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  h = fnv1a(means.data(), sizeof(double) * means.size(), h);
  h = fnv1a(precisions.data(), sizeof(double) * precisions.size(), h);
  return h;
}

RawStats accumulate_stats(const Eigen::MatrixXd &frames,
                          const Eigen::MatrixXd &resp,
                          const std::string &session_id) {
  if (frames.rows() != resp.rows())
    throw std::invalid_argument("accumulate_stats: frame/responsibility count mismatch");
  if ((resp.array() < 0.0).any())
    throw std::invalid_argument("accumulate_stats: negative responsibilities");
  for (Eigen::Index t = 0; t < resp.rows(); ++t) {
    if (std::abs(resp.row(t).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("accumulate_stats: responsibility row does not sum to 1");
  }
  RawStats out;
  out.session_id = session_id;
  out.occupancy = resp.colwise().sum();
  out.first_order = resp.transpose() * frames;
  return out;
}

NormStats normalize_stats(const RawStats &raw, const GmmBackend &backend) {
  const int k_num = backend.num_components();
  const int d = backend.feature_dim();
  if (raw.occupancy.size() != k_num || raw.first_order.rows() != k_num ||
      raw.first_order.cols() != d)
    throw std::invalid_argument("normalize_stats: stats do not match backend");
  NormStats out;
  out.session_id = raw.session_id;
  out.occupancy = raw.occupancy;
  out.fbar.resize(k_num * d);
  for (int k = 0; k < k_num; ++k) {
    out.fbar.segment(k * d, d) =
        backend.precisions.row(k).array().sqrt() *
        (raw.first_order.row(k) - raw.occupancy(k) * backend.means.row(k)).array();
  }
  if (!out.fbar.allFinite())
    throw std::invalid_argument("normalize_stats: non-finite normalized statistics");
  return out;
}

GlobalStats global_stats(const std::vector<SessionData> &sessions,
                         const GmmBackend &backend) {
  const int k_num = backend.num_components();
  GlobalStats out;
  out.sbar_trace = Eigen::VectorXd::Zero(k_num);
  out.total_occupancy = Eigen::VectorXd::Zero(k_num);
  out.num_sessions = static_cast<int>(sessions.size());
  for (const SessionData &s : sessions) {
    if (s.frames.cols() != backend.feature_dim() || s.resp.cols() != k_num ||
        s.frames.rows() != s.resp.rows())
      throw std::invalid_argument("global_stats: session does not match backend");
    if ((s.resp.array() < 0.0).any())
      throw std::invalid_argument("global_stats: negative responsibilities");
    for (int k = 0; k < k_num; ++k) {
      // rows of sq: Lambda_k-weighted squared deviation of each frame from m_k
      Eigen::VectorXd sq =
          ((s.frames.rowwise() - backend.means.row(k)).array().square().rowwise() *
           backend.precisions.row(k).array())
              .rowwise()
              .sum();
      out.sbar_trace(k) += s.resp.col(k).dot(sq);
      out.total_occupancy(k) += s.resp.col(k).sum();
    }
  }
  return out;
}

TrainingData compute_training_data(const std::vector<SessionData> &sessions,
                                   const GmmBackend &backend) {
  TrainingData data;
  data.sessions.reserve(sessions.size());
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "session-%04zu", i);
    RawStats raw = accumulate_stats(sessions[i].frames, sessions[i].resp, id);
    data.sessions.push_back(normalize_stats(raw, backend));
  }
  data.global = global_stats(sessions, backend);
  return data;
}

Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd &frames,
                                     const GmmBackend &backend,
                                     const Eigen::VectorXd *log_weights) {
  const int k_num = backend.num_components();
  const int d = backend.feature_dim();
  if (frames.cols() != d)
    throw std::invalid_argument("gmm_responsibilities: dimension mismatch");
  if (log_weights && log_weights->size() != k_num)
    throw std::invalid_argument("gmm_responsibilities: weight count mismatch");

  Eigen::VectorXd log_const(k_num);
  for (int k = 0; k < k_num; ++k) {
    log_const(k) = 0.5 * backend.precisions.row(k).array().log().sum() -
                   0.5 * d * std::log(2.0 * M_PI) +
                   (log_weights ? (*log_weights)(k) : 0.0);
  }
  Eigen::MatrixXd log_post(frames.rows(), k_num);
  for (int k = 0; k < k_num; ++k) {
    log_post.col(k) =
        log_const(k) -
        0.5 * ((frames.rowwise() - backend.means.row(k)).array().square().rowwise() *
               backend.precisions.row(k).array())
                  .rowwise()
                  .sum();
  }
  for (Eigen::Index t = 0; t < log_post.rows(); ++t) {
    const double m = log_post.row(t).maxCoeff();
    Eigen::ArrayXd e = (log_post.row(t).array() - m).exp();
    log_post.row(t) = e / e.sum();
  }
  return log_post;
}

}  // namespace vbfa
