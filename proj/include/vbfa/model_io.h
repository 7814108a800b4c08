// vbfa/model_io.h

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

#ifndef VBFA_MODEL_IO_H_
#define VBFA_MODEL_IO_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vbfa/adapt.h"
#include "vbfa/ard.h"
#include "vbfa/stats.h"
#include "vbfa/tensor_io.h"

namespace vbfa {

// Everything a trained run leaves behind, keyed to the backend it was
// computed against.
struct ModelBundle {
  std::string backend_hash;
  int num_components = 0;
  int feature_dim = 0;
  int factor_dim = 0;
  std::vector<Eigen::MatrixXd> wbar;      // K of d x ny
  std::vector<Eigen::MatrixXd> row_prec;  // K of ny x ny
  std::optional<double> alpha_a;
  std::optional<Eigen::VectorXd> alpha_b;
  Hyper hyper;
  std::optional<MinDivStats> min_div;
  Eigen::VectorXd mean_offset;  // K d, zeros when no offset was folded
  std::map<std::string, std::string> config_echo;
  std::vector<ElboReport> history;

  LoadingPosterior posterior() const;

  static ModelBundle from_result(const TrainResult &result,
                                 const std::string &backend_hash,
                                 std::map<std::string, std::string> config_echo);
};

std::string hash_string(const GmmBackend &backend);

void save_backend(const GmmBackend &backend, const std::string &path);
GmmBackend load_backend(const std::string &path);

// Session observations (concatenated frames + responsibilities + per-session
// frame counts), plus the backend hash when the file came out of `synth`.
struct DatasetFile {
  std::vector<SessionData> sessions;
  std::string backend_hash;  // empty when unknown
};
void save_dataset(const std::vector<SessionData> &sessions,
                  const std::string &backend_hash, const std::string &path);
DatasetFile load_dataset(const std::string &path);

void save_training_data(const TrainingData &data, const std::string &backend_hash,
                        const std::string &path);
// Verifies the stored backend hash when expected_backend_hash is non-empty.
TrainingData load_training_data(const std::string &path,
                                const std::string &expected_backend_hash,
                                std::string *backend_hash_out = nullptr);

void save_model(const ModelBundle &bundle, const std::string &path);
ModelBundle load_model(const std::string &path);

// Prior for the adaptation variant: either a dedicated prior file (entries
// `w0`, `L0`) or any trained model, whose posterior becomes the prior.
LoadingPrior load_prior(const std::string &path,
                        std::string *backend_hash_out = nullptr,
                        Eigen::VectorXd *mean_offset_out = nullptr);
void save_prior(const LoadingPrior &prior, const std::string &backend_hash,
                const std::string &path);

void save_ivectors(const std::vector<LatentPosterior> &posteriors,
                   bool with_precisions, const std::string &model_hash,
                   const std::string &path);

}  // namespace vbfa

#endif  // VBFA_MODEL_IO_H_
