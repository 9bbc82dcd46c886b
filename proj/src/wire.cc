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

#include "mobfed/wire.h"

#include <bit>

#include "mobfed/errors.h"

namespace mobfed {
namespace {

template <typename U>
void PutLe(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutF32(std::string& out, float f) { PutLe(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U Le() {
    Need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  float F32() { return std::bit_cast<float>(Le<std::uint32_t>()); }
  std::string_view Take(std::size_t n) {
    Need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ProtocolError("client update truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EncodeClientUpdate(const ClientUpdate& u) {
  if (u.client_id.size() > 0xffff) throw ProtocolError("client id too long");
  std::size_t dd = static_cast<std::size_t>(u.d) * u.d;
  if (u.payload.size() != dd) {
    throw ProtocolError("payload length " + std::to_string(u.payload.size()) + " != d^2 = " + std::to_string(dd));
  }
  std::string out;
  out.reserve(2 + u.client_id.size() + 4 + 4 + 2 + 4 + 4 + 4 * dd);
  PutLe<std::uint16_t>(out, static_cast<std::uint16_t>(u.client_id.size()));
  out += u.client_id;
  PutLe<std::uint32_t>(out, u.round);
  PutLe<std::uint32_t>(out, u.window_count);
  PutLe<std::uint16_t>(out, u.d);
  PutF32(out, u.sigma);
  PutF32(out, u.clip);
  for (double v : u.payload) PutF32(out, static_cast<float>(v));
  return out;
}

ClientUpdate DecodeClientUpdate(std::string_view bytes) {
  Reader r(bytes);
  ClientUpdate u;
  auto n = r.Le<std::uint16_t>();
  u.client_id = std::string(r.Take(n));
  u.round = r.Le<std::uint32_t>();
  u.window_count = r.Le<std::uint32_t>();
  u.d = r.Le<std::uint16_t>();
  u.sigma = r.F32();
  u.clip = r.F32();
  std::size_t dd = static_cast<std::size_t>(u.d) * u.d;
  u.payload.resize(dd);
  for (std::size_t i = 0; i < dd; ++i) u.payload[i] = r.F32();
  if (!r.done()) throw ProtocolError("trailing bytes after client update");
  return u;
}

}  // namespace mobfed
