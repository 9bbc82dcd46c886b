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

// ClientUpdate wire form, all integers and floats little-endian:
//
//   u16  client_id length n
//   n    client_id bytes (UTF-8)
//   u32  round
//   u32  window_count
//   u16  d
//   f32  sigma
//   f32  clip
//   d²   f32 payload (row-major vec of the d×d summary)

#ifndef MOBFED_WIRE_H_
#define MOBFED_WIRE_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mobfed {

struct ClientUpdate {
  std::string client_id;
  std::uint32_t round = 0;
  // Number of outer-product records averaged into `payload`.
  std::uint32_t window_count = 0;
  std::uint16_t d = 0;
  float sigma = 0.0f;
  float clip = 0.0f;
  std::vector<double> payload;  // length d²
};

// Payload entries are narrowed to f32. Throws ProtocolError if the payload
// length is not d² or the id does not fit.
std::string EncodeClientUpdate(const ClientUpdate& u);
// Throws ProtocolError on truncated or trailing bytes.
ClientUpdate DecodeClientUpdate(std::string_view bytes);

}  // namespace mobfed

#endif  // MOBFED_WIRE_H_
