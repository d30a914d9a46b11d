// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kernelforge {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

/// First 8 bytes of the SHA-256, for stable seeding from strings.
std::uint64_t stable_hash64(std::string_view data);

}  // namespace kernelforge
