#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmsense/waveform.hpp"

namespace pmsense {

namespace fs = std::filesystem;

// Ordered `key = value` records; the human-readable sidecar format used for IQ
// metadata, sample descriptions and manifests.
class KeyValues {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::int64_t value);
  void set(std::string key, std::uint64_t value);

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  // Throw InputError naming the key (and `origin`, if set) when missing or malformed.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  static KeyValues parse(std::string_view text, std::string origin = {});

  std::string origin;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest decimal form that reads back to the identical double.
std::string format_double(double v);

// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

KeyValues read_key_values(const fs::path& path);
void write_key_values(const fs::path& path, const KeyValues& kv);

// IQ files: `<path>` holds little-endian interleaved float32 (I, Q) pairs and
// `<path>.meta` is the key-value sidecar (sample_rate, t0, count, tag.*).
struct IqFile {
  IqTrace trace;
  KeyValues tags;
};

fs::path iq_sidecar_path(const fs::path& iq_path);
void write_iq(const fs::path& iq_path, const IqTrace& trace, const KeyValues& tags = {});
IqFile read_iq(const fs::path& iq_path);

// 64-bit FNV-1a, used for config hashes in manifests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace pmsense
