// Copyright 2026 The Keylock Authors.
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

#include "keylock/shuffle/secret_key.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <openssl/sha.h>

#include "keylock/errors.hpp"

namespace keylock::shuffle {
namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char ch) {
  if (ch >= '0' && ch <= '9') return ch - '0';
  if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
  return -1;
}

std::string to_hex(const std::uint8_t* bytes, std::size_t len) {
  std::string out;
  out.reserve(2 * len);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(kHexDigits[bytes[i] >> 4]);
    out.push_back(kHexDigits[bytes[i] & 0x0f]);
  }
  return out;
}

}  // namespace

SecretKey SecretKey::from_hex(std::string_view hex, std::string label) {
  if (hex.size() != 2 * kSeedBytes) {
    throw std::invalid_argument("secret key must be " +
                                std::to_string(2 * kSeedBytes) +
                                " hex characters, got " +
                                std::to_string(hex.size()));
  }
  Seed seed{};
  for (std::size_t i = 0; i < kSeedBytes; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw std::invalid_argument(
          "secret key must be lowercase hex [0-9a-f]");
    }
    seed[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return SecretKey(seed, std::move(label));
}

SecretKey SecretKey::generate(std::string label) {
  std::random_device device;
  return random(device, std::move(label));
}

std::string SecretKey::hex() const { return to_hex(seed_.data(), seed_.size()); }

std::string SecretKey::fingerprint() const {
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(seed_.data(), seed_.size(), digest);
  return to_hex(digest, 4);
}

SecretKey parse_key_file(std::string_view text) {
  const auto first_nl = text.find('\n');
  std::string_view hex_line = text.substr(0, first_nl);
  if (!hex_line.empty() && hex_line.back() == '\r') hex_line.remove_suffix(1);
  std::string label;
  if (first_nl != std::string_view::npos) {
    std::string_view rest = text.substr(first_nl + 1);
    rest = rest.substr(0, rest.find('\n'));
    if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
    label = std::string(rest);
  }
  try {
    return SecretKey::from_hex(hex_line, std::move(label));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad key file: ") + e.what());
  }
}

std::string format_key_file(const SecretKey& key) {
  std::string out = key.hex() + "\n";
  if (!key.label().empty()) out += key.label() + "\n";
  return out;
}

SecretKey load_key_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open key file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_key_file(buffer.str());
}

void save_key_file(const std::filesystem::path& path, const SecretKey& key) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write key file " + path.string());
  out << format_key_file(key);
}

}  // namespace keylock::shuffle
