#include "pmsense/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pmsense/error.hpp"

namespace pmsense {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string describe(const KeyValues& kv, std::string_view key) {
  std::string msg = "key '" + std::string(key) + "'";
  if (!kv.origin.empty()) msg += " in " + kv.origin;
  return msg;
}

template <typename T>
T parse_number(const KeyValues& kv, std::string_view key) {
  const std::string& text = kv.get(key);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InputError("malformed value '" + text + "' for " + describe(kv, key));
  return value;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}

}  // namespace

void KeyValues::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValues::set(std::string key, double value) { set(std::move(key), format_double(value)); }
void KeyValues::set(std::string key, std::int64_t value) {
  set(std::move(key), std::to_string(value));
}
void KeyValues::set(std::string key, std::uint64_t value) {
  set(std::move(key), std::to_string(value));
}

bool KeyValues::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValues::find(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

const std::string& KeyValues::get(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw InputError("missing " + describe(*this, key));
}

double KeyValues::get_double(std::string_view key) const { return parse_number<double>(*this, key); }
std::int64_t KeyValues::get_int(std::string_view key) const {
  return parse_number<std::int64_t>(*this, key);
}
std::uint64_t KeyValues::get_uint(std::string_view key) const {
  return parse_number<std::uint64_t>(*this, key);
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

KeyValues KeyValues::parse(std::string_view text, std::string origin) {
  KeyValues kv;
  kv.origin = std::move(origin);
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw InputError("line " + std::to_string(line_no) + " of " +
                       (kv.origin.empty() ? std::string("key-value text") : kv.origin) +
                       ": expected 'key = value'");
    kv.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

KeyValues read_key_values(const fs::path& path) {
  return KeyValues::parse(read_file(path), path.string());
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
  write_file_atomic(path, kv.serialize());
}

fs::path iq_sidecar_path(const fs::path& iq_path) {
  fs::path p = iq_path;
  p += ".meta";
  return p;
}

void write_iq(const fs::path& iq_path, const IqTrace& trace, const KeyValues& tags) {
  std::string bytes;
  bytes.reserve(trace.size() * 8);
  for (const cdouble& s : trace.samples()) {
    put_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(s.real())));
    put_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(s.imag())));
  }
  KeyValues meta;
  meta.set("format", std::string("pmsense-iq-1"));
  meta.set("sample_rate", trace.sample_rate());
  meta.set("t0", trace.t0());
  meta.set("count", static_cast<std::uint64_t>(trace.size()));
  for (const auto& [k, v] : tags.entries()) meta.set("tag." + k, v);
  write_file_atomic(iq_path, bytes);
  write_key_values(iq_sidecar_path(iq_path), meta);
}

IqFile read_iq(const fs::path& iq_path) {
  const KeyValues meta = read_key_values(iq_sidecar_path(iq_path));
  if (meta.get("format") != "pmsense-iq-1")
    throw IoError("unsupported IQ format '" + meta.get("format") + "' in " + meta.origin);
  const std::uint64_t count = meta.get_uint("count");
  const std::string bytes = read_file(iq_path);
  if (count == 0 || bytes.size() != count * 8)
    throw IoError(iq_path.string() + ": expected " + std::to_string(count * 8) + " bytes, found " +
                  std::to_string(bytes.size()));
  std::vector<cdouble> samples(count);
  for (std::size_t k = 0; k < count; ++k) {
    const char* p = bytes.data() + 8 * k;
    samples[k] = {std::bit_cast<float>(get_u32_le(p)), std::bit_cast<float>(get_u32_le(p + 4))};
  }
  KeyValues tags;
  for (const auto& [k, v] : meta.entries())
    if (k.rfind("tag.", 0) == 0) tags.set(k.substr(4), v);
  return {IqTrace(std::move(samples), meta.get_double("sample_rate"), meta.get_double("t0")),
          std::move(tags)};
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* kDigits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return s;
}

}  // namespace pmsense
