// Copyright 2026 The mobfed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoints are a JSON manifest `<prefix>.json` listing
//   {name, shape, dtype, offset, trainable}
// per tensor, plus `<prefix>.bin`: little-endian IEEE-754 float32 values
// concatenated in manifest order. `offset` is in bytes into the blob.

#ifndef MOBFED_CHECKPOINT_H_
#define MOBFED_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mobfed/nn.h"

namespace mobfed {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::string dtype = "f32";
  std::uint64_t offset = 0;
  bool trainable = true;
};

struct CheckpointManifest {
  std::vector<CheckpointEntry> tensors;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t TotalParameters() const;
  std::size_t TrainableParameters() const;
};

// Little-endian f32 bytes of all parameter values, in list order.
std::string SerializeParams(const ParamList& params);
// Inverse of SerializeParams for the same list layout.
void DeserializeParams(std::string_view bytes, const ParamList& params);

void SaveCheckpoint(const std::filesystem::path& prefix, const ParamList& params,
                    const nlohmann::json& meta = nlohmann::json::object());
CheckpointManifest ReadManifest(const std::filesystem::path& prefix);
// Loads values by name into `params` (shapes must match) and applies the
// stored trainable flags. Returns the manifest.
CheckpointManifest LoadCheckpoint(const std::filesystem::path& prefix, const ParamList& params);

}  // namespace mobfed

#endif  // MOBFED_CHECKPOINT_H_
