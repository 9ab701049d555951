#include "pmsense/spectrogram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "pmsense/error.hpp"
#include "pmsense/io.hpp"

namespace pmsense {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'S', 'G'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}
void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t get_u32(const std::string& bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
  return v;
}
float get_f32(const std::string& bytes, std::size_t off) { return std::bit_cast<float>(get_u32(bytes, off)); }

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

}  // namespace

std::size_t Spectrogram::row_argmax(std::size_t window, double exclude_hz) const {
  std::size_t best = n_freq;
  double best_value = -1.0;
  for (std::size_t f = 0; f < n_freq; ++f) {
    if (std::abs(freq_axis[f]) <= exclude_hz) continue;
    if (at(window, f) > best_value) {
      best_value = at(window, f);
      best = f;
    }
  }
  return best;
}

double Spectrogram::max_value() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

void Spectrogram::validate() const {
  if (n_windows == 0 || n_freq == 0) throw InputError("spectrogram: empty");
  if (values.size() != n_windows * n_freq || time_axis.size() != n_windows || freq_axis.size() != n_freq)
    throw InputError("spectrogram: dimensions inconsistent with axes");
  if (!strictly_increasing(time_axis) || !strictly_increasing(freq_axis))
    throw InputError("spectrogram: axes must be strictly increasing");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("spectrogram: values must be finite and >= 0");
}

void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  s.validate();
  std::string bytes(kMagic, 4);
  put_u32(bytes, static_cast<std::uint32_t>(s.n_windows));
  put_u32(bytes, static_cast<std::uint32_t>(s.n_freq));
  put_u32(bytes, s.one_sided ? 1u : 0u);
  put_f32(bytes, s.cit);
  put_f32(bytes, s.hop);
  put_f32(bytes, s.freq_axis.front());
  put_f32(bytes, s.freq_axis.back());
  bytes.reserve(kSpectrogramHeaderBytes + 4 * s.values.size());
  for (double v : s.values) put_f32(bytes, v);
  write_file_atomic(path, bytes);
}

Spectrogram read_spectrogram(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kSpectrogramHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError(path.string() + ": not a spectrogram file");
  Spectrogram s;
  s.n_windows = get_u32(bytes, 4);
  s.n_freq = get_u32(bytes, 8);
  s.one_sided = (get_u32(bytes, 12) & 1u) != 0;
  s.cit = get_f32(bytes, 16);
  s.hop = get_f32(bytes, 20);
  const double f_min = get_f32(bytes, 24);
  const double f_max = get_f32(bytes, 28);
  if (bytes.size() != kSpectrogramHeaderBytes + 4 * s.n_windows * s.n_freq)
    throw IoError(path.string() + ": size does not match header");
  s.values.resize(s.n_windows * s.n_freq);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = get_f32(bytes, kSpectrogramHeaderBytes + 4 * i);
  s.time_axis.resize(s.n_windows);
  for (std::size_t w = 0; w < s.n_windows; ++w) s.time_axis[w] = static_cast<double>(w) * s.hop;
  s.freq_axis.resize(s.n_freq);
  for (std::size_t f = 0; f < s.n_freq; ++f)
    s.freq_axis[f] = s.n_freq == 1 ? f_min
                                   : f_min + (f_max - f_min) * static_cast<double>(f) /
                                                 static_cast<double>(s.n_freq - 1);
  try {
    s.validate();
  } catch (const InputError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return s;
}

void write_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& s) {
  std::string out = "time_s,freq_hz,magnitude\n";
  for (std::size_t w = 0; w < s.n_windows; ++w)
    for (std::size_t f = 0; f < s.n_freq; ++f)
      out += format_double(s.time_axis[w]) + "," + format_double(s.freq_axis[f]) + "," +
             format_double(s.at(w, f)) + "\n";
  write_file_atomic(path, out);
}

void write_spectrogram_pgm(const std::filesystem::path& path, const Spectrogram& s,
                           double dynamic_range_db) {
  s.validate();
  const double peak = s.max_value();
  std::string out = "P5\n" + std::to_string(s.n_windows) + " " + std::to_string(s.n_freq) + "\n255\n";
  for (std::size_t row = 0; row < s.n_freq; ++row) {
    const std::size_t f = s.n_freq - 1 - row;
    for (std::size_t w = 0; w < s.n_windows; ++w) {
      double level = 0.0;
      if (peak > 0.0 && s.at(w, f) > 0.0) {
        const double db = 20.0 * std::log10(s.at(w, f) / peak);
        level = std::clamp(1.0 + db / dynamic_range_db, 0.0, 1.0);
      }
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(level * 255.0))));
    }
  }
  write_file_atomic(path, out);
}

}  // namespace pmsense
