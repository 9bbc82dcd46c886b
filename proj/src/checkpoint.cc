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

#include "mobfed/checkpoint.h"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "mobfed/errors.h"

namespace mobfed {
namespace {

std::filesystem::path WithSuffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

void AppendF32(std::string& out, double v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float ReadF32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::size_t CheckpointManifest::TotalParameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += NumElements(t.shape);
  return n;
}

std::size_t CheckpointManifest::TrainableParameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (t.trainable) n += NumElements(t.shape);
  }
  return n;
}

std::string SerializeParams(const ParamList& params) {
  std::string out;
  std::size_t total = CountParameters(params);
  out.reserve(total * 4);
  for (const Parameter* p : params) {
    for (double v : p->value.span()) AppendF32(out, v);
  }
  return out;
}

void DeserializeParams(std::string_view bytes, const ParamList& params) {
  if (bytes.size() != CountParameters(params) * 4) throw DimensionError("parameter byte count mismatch");
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i, base += 4) p->value[i] = ReadF32(base);
  }
}

void SaveCheckpoint(const std::filesystem::path& prefix, const ParamList& params, const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["dtype"] = "f32";
  manifest["blob"] = WithSuffix(prefix, ".bin").filename().string();
  manifest["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name},
                       {"shape", p->value.shape()},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"trainable", p->trainable}});
    offset += p->value.size() * 4;
  }
  manifest["tensors"] = std::move(tensors);

  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::ofstream blob(WithSuffix(prefix, ".bin"), std::ios::binary);
  std::string bytes = SerializeParams(params);
  blob.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!blob) throw std::runtime_error("failed to write checkpoint blob " + prefix.string());
  std::ofstream mf(WithSuffix(prefix, ".json"));
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("failed to write checkpoint manifest " + prefix.string());
}

CheckpointManifest ReadManifest(const std::filesystem::path& prefix) {
  std::ifstream in(WithSuffix(prefix, ".json"));
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + prefix.string() + ".json");
  nlohmann::json j = nlohmann::json::parse(in);
  CheckpointManifest m;
  m.meta = j.value("meta", nlohmann::json::object());
  for (const auto& t : j.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    e.dtype = t.at("dtype").get<std::string>();
    e.offset = t.at("offset").get<std::uint64_t>();
    e.trainable = t.at("trainable").get<bool>();
    if (e.dtype != "f32") throw std::runtime_error("unsupported checkpoint dtype " + e.dtype);
    m.tensors.push_back(std::move(e));
  }
  return m;
}

CheckpointManifest LoadCheckpoint(const std::filesystem::path& prefix, const ParamList& params) {
  CheckpointManifest m = ReadManifest(prefix);
  std::ifstream in(WithSuffix(prefix, ".bin"), std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint blob " + prefix.string() + ".bin");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : m.tensors) by_name[e.name] = &e;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint has no tensor '" + p->name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.shape != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + p->name + "' has shape " + ShapeString(e.shape) +
                           ", expected " + ShapeString(p->value.shape()));
    }
    if (e.offset + p->value.size() * 4 > blob.size()) throw std::runtime_error("checkpoint blob truncated");
    const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + e.offset;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = ReadF32(base + 4 * i);
    p->trainable = e.trainable;
    if (!p->grad.SameShape(p->value)) p->grad = Tensor(p->value.shape());
  }
  return m;
}

}  // namespace mobfed
