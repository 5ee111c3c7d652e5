#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace infodemic {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: missing columns, unknown keys, bad hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input at a known line of a text file.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Tensor or feature dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a forward or backward computation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(master ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, 64 bit. Content hashes for caches and model containers.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

/// Reads a whole file; throws Error if it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace infodemic
