/*
 * Copyright 2026 The ecunlearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ECU_CHECKPOINT_HPP
#define ECU_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "ecu/nn.hpp"

namespace ecu {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout: "ULCK", u16 version, u32 manifest length, JSON manifest
// (parameter names, shapes, offsets in doubles, module layout, metadata),
// then the blob of little-endian f64 values.
std::string encode_checkpoint(const ModelBundle& bundle);
ModelBundle decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace ecu

#endif  // ECU_CHECKPOINT_HPP
