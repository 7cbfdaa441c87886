/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "sfda/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>

#include "sfda/error.hpp"

namespace sfda {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive format assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'F', 'D', 'A', 'A', 'R', 'C', '1'};

template <class T>
void put_pod(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put_pod<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw SchemaError("archive is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Archive::meta(const std::string& key) const {
  auto it = metadata_.find(key);
  if (it == metadata_.end())
    throw SchemaError("archive is missing metadata '" + key + "'");
  return it->second;
}

long Archive::meta_int(const std::string& key) const {
  const std::string& v = meta(key);
  char* end = nullptr;
  const long out = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0')
    throw SchemaError("archive metadata '" + key + "' is not an integer");
  return out;
}

void Archive::put(const std::string& name, Matrix value) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    tensors_[it->second].second = std::move(value);
    return;
  }
  index_[name] = tensors_.size();
  tensors_.emplace_back(name, std::move(value));
}

bool Archive::has(const std::string& name) const {
  return index_.count(name) != 0;
}

const Matrix& Archive::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw SchemaError("archive is missing tensor '" + name + "'");
  return tensors_[it->second].second;
}

std::string Archive::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_pod<std::uint32_t>(out, kSchemaVersion);
  put_pod<std::uint64_t>(out, metadata_.size());
  for (const auto& [k, v] : metadata_) {
    put_str(out, k);
    put_str(out, v);
  }
  put_pod<std::uint64_t>(out, tensors_.size());
  for (const auto& [name, m] : tensors_) {
    put_str(out, name);
    put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

Archive Archive::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw SchemaError("not a checkpoint archive (bad magic)");
  Reader r(bytes);
  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  const auto schema = r.pod<std::uint32_t>();
  if (schema != kSchemaVersion)
    throw SchemaError("unsupported archive schema " + std::to_string(schema));
  Archive a;
  const auto nmeta = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    a.set(k, r.str());
  }
  const auto ntensors = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ntensors; ++i) {
    std::string name = r.str();
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    if (rows > (1u << 28) || cols > (1u << 28))
      throw SchemaError("archive tensor '" + name + "' has absurd shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    a.put(name, std::move(m));
  }
  if (!r.done()) throw SchemaError("archive has trailing bytes");
  return a;
}

void save_archive(const fs::path& path, const Archive& archive) {
  write_file_atomic(path, archive.serialize());
}

Archive load_archive(const fs::path& path) {
  return Archive::deserialize(read_file(path));
}

void store_encoder(Archive& archive, const std::string& prefix,
                   const EncoderParams& params) {
  EncoderParams::each(params, [&](const std::string& name, const Matrix& m,
                                  TensorRole) { archive.put(prefix + name, m); });
}

EncoderParams restore_encoder(const Archive& archive, const std::string& prefix,
                              const EncoderShape& shape) {
  std::mt19937_64 unused(0);
  EncoderParams p = EncoderParams::initialize(shape, unused);
  EncoderParams::each(p, [&](const std::string& name, Matrix& m, TensorRole) {
    const Matrix& stored = archive.get(prefix + name);
    if (stored.rows() != m.rows() || stored.cols() != m.cols())
      throw SchemaError("tensor '" + prefix + name + "' has shape " +
                        std::to_string(stored.rows()) + "x" +
                        std::to_string(stored.cols()) + ", expected " +
                        std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    m = stored;
  });
  return p;
}

void store_adam(Archive& archive, const std::string& prefix, const Adam& adam) {
  archive.set(prefix + "steps", std::to_string(adam.steps()));
  EncoderTensors<Matrix>::each(adam.first_moment(),
                               [&](const std::string& name, const Matrix& m,
                                   TensorRole) {
                                 archive.put(prefix + "m." + name, m);
                               });
  EncoderTensors<Matrix>::each(adam.second_moment(),
                               [&](const std::string& name, const Matrix& m,
                                   TensorRole) {
                                 archive.put(prefix + "v." + name, m);
                               });
}

Adam restore_adam(const Archive& archive, const std::string& prefix,
                  const EncoderParams& like) {
  Adam adam(like);
  adam.set_steps(archive.meta_int(prefix + "steps"));
  EncoderTensors<Matrix>::each(adam.first_moment(),
                               [&](const std::string& name, Matrix& m,
                                   TensorRole) {
                                 m = archive.get(prefix + "m." + name);
                               });
  EncoderTensors<Matrix>::each(adam.second_moment(),
                               [&](const std::string& name, Matrix& m,
                                   TensorRole) {
                                 m = archive.get(prefix + "v." + name);
                               });
  return adam;
}

}  // namespace sfda
