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
#pragma once

// Named-tensor archive used for checkpoints.
//
// Layout (little-endian):
//   magic "SFDAARC1" | u32 schema
//   u64 metadata count | { str key | str value }*
//   u64 tensor count   | { str name | u64 rows | u64 cols | f64[rows*cols] }*
// where str is a u64 length followed by bytes and tensors are column-major.
// Metadata is written in key order and tensors in insertion order, so equal
// archives serialize to equal bytes.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sfda/data.hpp"
#include "sfda/encoder.hpp"
#include "sfda/optimizer.hpp"

namespace sfda {

class Archive {
 public:
  static constexpr std::uint32_t kSchemaVersion = 1;

  void set(const std::string& key, std::string value) {
    metadata_[key] = std::move(value);
  }
  bool has_meta(const std::string& key) const {
    return metadata_.count(key) != 0;
  }
  // Throws SchemaError for missing keys.
  const std::string& meta(const std::string& key) const;
  long meta_int(const std::string& key) const;
  const std::map<std::string, std::string>& metadata() const {
    return metadata_;
  }

  void put(const std::string& name, Matrix value);
  bool has(const std::string& name) const;
  // Throws SchemaError for missing tensors.
  const Matrix& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Matrix>>& tensors() const {
    return tensors_;
  }

  std::string serialize() const;
  static Archive deserialize(const std::string& bytes);

 private:
  std::map<std::string, std::string> metadata_;
  std::vector<std::pair<std::string, Matrix>> tensors_;
  std::map<std::string, std::size_t> index_;
};

void save_archive(const fs::path& path, const Archive& archive);
Archive load_archive(const fs::path& path);

// Stores every tensor under `prefix` + canonical name.
void store_encoder(Archive& archive, const std::string& prefix,
                   const EncoderParams& params);
// Throws SchemaError if a tensor is missing or has the wrong shape.
EncoderParams restore_encoder(const Archive& archive, const std::string& prefix,
                              const EncoderShape& shape);

void store_adam(Archive& archive, const std::string& prefix, const Adam& adam);
Adam restore_adam(const Archive& archive, const std::string& prefix,
                  const EncoderParams& like);

}  // namespace sfda
