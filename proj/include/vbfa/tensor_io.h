// vbfa/tensor_io.h

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

#ifndef VBFA_TENSOR_IO_H_
#define VBFA_TENSOR_IO_H_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vbfa {

struct ContainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptContainer : ContainerError {
  using ContainerError::ContainerError;
};
struct ShapeMismatch : ContainerError {
  using ContainerError::ContainerError;
};
struct HashMismatch : ContainerError {
  using ContainerError::ContainerError;
};

// Single-file container: a text header naming the entries (shape + byte
// offset into the payload) followed by raw little-endian float64 data in
// row-major order.  Writes go through a temp file and a rename.
class TensorContainer {
 public:
  struct Entry {
    std::vector<std::int64_t> shape;
    std::vector<double> data;  // shape product elements, row-major
    std::int64_t size() const;
  };

  void set_meta(const std::string &key, const std::string &value);
  const std::string &meta(const std::string &key) const;  // throws if missing
  bool has_meta(const std::string &key) const;
  const std::map<std::string, std::string> &all_meta() const { return meta_; }

  void add(const std::string &name, std::vector<std::int64_t> shape,
           std::vector<double> data);
  void add_matrix(const std::string &name, const Eigen::MatrixXd &m);
  void add_vector(const std::string &name, const Eigen::VectorXd &v);
  void add_scalar(const std::string &name, double v);

  bool has(const std::string &name) const;
  const Entry &entry(const std::string &name) const;  // throws if missing
  Eigen::MatrixXd matrix(const std::string &name) const;  // rank-2 entries
  Eigen::VectorXd vector(const std::string &name) const;  // rank-1 entries
  double scalar(const std::string &name) const;
  const std::vector<std::string> &names() const { return order_; }

  void save(const std::string &path) const;
  static TensorContainer load(const std::string &path);

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> meta_;
};

}  // namespace vbfa

#endif  // VBFA_TENSOR_IO_H_
