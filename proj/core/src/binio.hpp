// Copyright (c) 2026, UQR contributors. All rights reserved.
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

// Little-endian helpers shared by the flat binary file formats.

#ifndef UQR_SRC_BINIO_HPP_
#define UQR_SRC_BINIO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <string>

namespace uqr::binio {

inline void append_u32(std::string& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  char raw[4];
  std::memcpy(raw, &v, 4);
  out.append(raw, 4);
}

inline void append_u64(std::string& out, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  char raw[8];
  std::memcpy(raw, &v, 8);
  out.append(raw, 8);
}

inline void append_f64(std::string& out, double v) {
  append_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& in) {
  char raw[4];
  in.read(raw, 4);
  std::uint32_t v;
  std::memcpy(&v, raw, 4);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  char raw[8];
  in.read(raw, 8);
  std::uint64_t v;
  std::memcpy(&v, raw, 8);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

}  // namespace uqr::binio

#endif  // UQR_SRC_BINIO_HPP_
