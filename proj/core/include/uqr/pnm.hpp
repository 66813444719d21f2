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

#ifndef UQR_PNM_HPP_
#define UQR_PNM_HPP_

#include <filesystem>

#include "uqr/mask.hpp"

namespace uqr {

// Binary masks serialize as PBM (P4); soft masks as PGM (P5, maxval 255)
// with values clamped to [0,1] and scaled.

void write_pbm(const BinaryMask& m, const std::filesystem::path& path);
BinaryMask read_pbm(const std::filesystem::path& path);

void write_pgm(const SoftMask& s, const std::filesystem::path& path);
SoftMask read_pgm(const std::filesystem::path& path);

}  // namespace uqr

#endif  // UQR_PNM_HPP_
