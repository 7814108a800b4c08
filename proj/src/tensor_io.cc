// vbfa/tensor_io.cc

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

#include "vbfa/tensor_io.h"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

static_assert(std::endian::native == std::endian::little,
              "payloads are written little-endian");

namespace vbfa {

namespace {
const char *kMagic = "vbfa-container";
const char *kVersion = "1";
}  // namespace

std::int64_t TensorContainer::Entry::size() const {
  std::int64_t n = 1;
  for (std::int64_t s : shape) n *= s;
  return n;
}

void TensorContainer::set_meta(const std::string &key, const std::string &value) {
  if (key.find_first_of(" \n\t") != std::string::npos)
    throw std::invalid_argument("TensorContainer: meta key must not contain spaces");
  meta_[key] = value;
}

const std::string &TensorContainer::meta(const std::string &key) const {
  auto it = meta_.find(key);
  if (it == meta_.end())
    throw CorruptContainer("missing metadata key '" + key + "'");
  return it->second;
}

bool TensorContainer::has_meta(const std::string &key) const {
  return meta_.count(key) > 0;
}

void TensorContainer::add(const std::string &name,
                          std::vector<std::int64_t> shape,
                          std::vector<double> data) {
  if (name.empty() || name.find_first_of(" \n\t") != std::string::npos)
    throw std::invalid_argument("TensorContainer: bad entry name '" + name + "'");
  Entry e{std::move(shape), std::move(data)};
  for (std::int64_t s : e.shape)
    if (s < 0) throw std::invalid_argument("TensorContainer: negative dimension");
  if (e.size() != static_cast<std::int64_t>(e.data.size()))
    throw std::invalid_argument("TensorContainer: shape does not match data size");
  if (entries_.count(name) == 0) order_.push_back(name);
  entries_[name] = std::move(e);
}

void TensorContainer::add_matrix(const std::string &name, const Eigen::MatrixXd &m) {
  std::vector<double> data(m.size());
  // row-major serialization
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), m.rows(), m.cols()) = m;
  add(name, {m.rows(), m.cols()}, std::move(data));
}

void TensorContainer::add_vector(const std::string &name, const Eigen::VectorXd &v) {
  add(name, {v.size()}, std::vector<double>(v.data(), v.data() + v.size()));
}

void TensorContainer::add_scalar(const std::string &name, double v) {
  add(name, {1}, {v});
}

bool TensorContainer::has(const std::string &name) const {
  return entries_.count(name) > 0;
}

const TensorContainer::Entry &TensorContainer::entry(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw CorruptContainer("missing entry '" + name + "'");
  return it->second;
}

Eigen::MatrixXd TensorContainer::matrix(const std::string &name) const {
  const Entry &e = entry(name);
  if (e.shape.size() != 2)
    throw ShapeMismatch("entry '" + name + "' is not a matrix");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      e.data.data(), e.shape[0], e.shape[1]);
}

Eigen::VectorXd TensorContainer::vector(const std::string &name) const {
  const Entry &e = entry(name);
  if (e.shape.size() != 1)
    throw ShapeMismatch("entry '" + name + "' is not a vector");
  return Eigen::Map<const Eigen::VectorXd>(e.data.data(), e.shape[0]);
}

double TensorContainer::scalar(const std::string &name) const {
  const Entry &e = entry(name);
  if (e.size() != 1)
    throw ShapeMismatch("entry '" + name + "' is not a scalar");
  return e.data[0];
}

void TensorContainer::save(const std::string &path) const {
  std::ostringstream header;
  header << kMagic << " " << kVersion << "\n";
  for (const auto &[key, value] : meta_) header << "meta " << key << " " << value << "\n";
  std::int64_t offset = 0;
  for (const std::string &name : order_) {
    const Entry &e = entries_.at(name);
    header << "tensor " << name << " f64 " << e.shape.size();
    for (std::int64_t s : e.shape) header << " " << s;
    header << " " << offset << "\n";
    offset += e.size() * static_cast<std::int64_t>(sizeof(double));
  }
  header << "end\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot open '" + tmp + "' for writing");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const std::string &name : order_) {
      const Entry &e = entries_.at(name);
      out.write(reinterpret_cast<const char *>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    }
    if (!out) throw ContainerError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ContainerError("cannot rename '" + tmp + "' to '" + path + "'");
}

TensorContainer TensorContainer::load(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw CorruptContainer("empty container '" + path + "'");
  {
    std::istringstream ls(line);
    std::string magic, version;
    ls >> magic >> version;
    if (magic != kMagic)
      throw CorruptContainer("bad magic in '" + path + "'");
    if (version != kVersion)
      throw CorruptContainer("unsupported container version '" + version + "'");
  }

  struct PendingEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::int64_t offset = 0;
    std::int64_t bytes = 0;
  };
  std::vector<PendingEntry> pending;
  TensorContainer c;
  bool closed = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      closed = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key.empty()) throw CorruptContainer("bad meta line");
      c.meta_[key] = value;
    } else if (tag == "tensor") {
      PendingEntry p;
      std::string dtype;
      std::size_t ndim = 0;
      ls >> p.name >> dtype >> ndim;
      if (!ls || dtype != "f64" || ndim > 8)
        throw CorruptContainer("bad tensor line: " + line);
      p.shape.resize(ndim);
      std::int64_t n = 1;
      for (std::size_t i = 0; i < ndim; ++i) {
        ls >> p.shape[i];
        if (!ls || p.shape[i] < 0) throw CorruptContainer("bad shape: " + line);
        n *= p.shape[i];
      }
      ls >> p.offset;
      if (!ls || p.offset < 0) throw CorruptContainer("bad offset: " + line);
      p.bytes = n * static_cast<std::int64_t>(sizeof(double));
      pending.push_back(std::move(p));
    } else {
      throw CorruptContainer("unknown header line: " + line);
    }
  }
  if (!closed) throw CorruptContainer("header not terminated in '" + path + "'");

  const std::streampos payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::int64_t payload_bytes =
      static_cast<std::int64_t>(in.tellg() - payload_start);

  // offsets must be in range and non-overlapping
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
  for (const PendingEntry &p : pending) {
    if (p.offset + p.bytes > payload_bytes)
      throw CorruptContainer("entry '" + p.name + "' exceeds payload");
    ranges.emplace_back(p.offset, p.offset + p.bytes);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second)
      throw CorruptContainer("overlapping entries in '" + path + "'");

  for (const PendingEntry &p : pending) {
    std::vector<double> data(p.bytes / sizeof(double));
    in.seekg(payload_start + static_cast<std::streamoff>(p.offset));
    in.read(reinterpret_cast<char *>(data.data()),
            static_cast<std::streamsize>(p.bytes));
    if (!in) throw CorruptContainer("truncated payload for '" + p.name + "'");
    c.add(p.name, p.shape, std::move(data));
  }
  return c;
}

}  // namespace vbfa
