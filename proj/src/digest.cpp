// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/digest.hpp"

#include <openssl/sha.h>

#include <array>

namespace kernelforge {

namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> sha256(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md.data());
  return md;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (auto b : sha256(data)) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::uint64_t stable_hash64(std::string_view data) {
  const auto md = sha256(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | md[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace kernelforge
