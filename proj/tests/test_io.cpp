#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "pmsense/error.hpp"
#include "pmsense/io.hpp"
#include "pmsense/spectrogram.hpp"

using namespace pmsense;

TEST_CASE("key-value records round-trip") {
  KeyValues kv;
  kv.set("name", std::string("nlos_push_001"));
  kv.set("rate", 1e6);
  kv.set("count", std::int64_t{-3});
  kv.set("seed", std::uint64_t{18446744073709551615ULL});
  kv.set("x", 0.1 + 0.2);
  const KeyValues back = KeyValues::parse(kv.serialize());
  CHECK(back.get("name") == "nlos_push_001");
  CHECK(back.get_double("rate") == 1e6);
  CHECK(back.get_int("count") == -3);
  CHECK(back.get_uint("seed") == 18446744073709551615ULL);
  CHECK(back.get_double("x") == 0.1 + 0.2);
  CHECK_THROWS_AS(back.get("missing"), InputError);
  CHECK_THROWS_AS(back.get_int("name"), InputError);
}

TEST_CASE("format_double is shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e-7}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.25) == "0.25");
}

TEST_CASE("IQ files round-trip bit-exactly") {
  const auto dir = test::scratch_dir("iq");
  // float32-representable samples survive the round trip exactly.
  std::vector<cdouble> v;
  for (int k = 0; k < 1000; ++k) v.emplace_back(static_cast<float>(std::sin(0.01 * k)), static_cast<float>(-0.5 * k));
  const IqTrace t(v, 1e6, 0.25);
  KeyValues tags;
  tags.set("tag.label", std::string("push"));
  write_iq(dir / "a.iq", t, tags);
  const IqFile back = read_iq(dir / "a.iq");
  CHECK(back.trace == t);
  CHECK(back.tags.get("tag.label") == "push");
  CHECK(std::filesystem::file_size(dir / "a.iq") == 8000);

  // Arbitrary doubles: the file contents are reproduced byte for byte.
  write_iq(dir / "b.iq", test::random_trace(777, 2e6, 3));
  write_iq(dir / "c.iq", read_iq(dir / "b.iq").trace);
  CHECK(read_file(dir / "b.iq") == read_file(dir / "c.iq"));
  CHECK(read_file(iq_sidecar_path(dir / "b.iq")) == read_file(iq_sidecar_path(dir / "c.iq")));
}

TEST_CASE("IQ sidecar carries rate, start time and count") {
  const auto dir = test::scratch_dir("iq_meta");
  write_iq(dir / "x.iq", test::random_trace(10, 5e5, 1, 1.5));
  const KeyValues meta = read_key_values(dir / "x.iq.meta");
  CHECK(meta.get_double("sample_rate") == 5e5);
  CHECK(meta.get_double("t0") == 1.5);
  CHECK(meta.get_uint("count") == 10);
}

TEST_CASE("corrupt or missing IQ files are I/O errors") {
  const auto dir = test::scratch_dir("iq_bad");
  CHECK_THROWS_AS(read_iq(dir / "none.iq"), IoError);
  write_iq(dir / "t.iq", test::random_trace(10, 1e6, 1));
  write_file_atomic(dir / "t.iq", "short");
  CHECK_THROWS_AS(read_iq(dir / "t.iq"), IoError);
}

TEST_CASE("spectrogram binary file round-trips with a 32-byte header") {
  const auto dir = test::scratch_dir("spec");
  Spectrogram s;
  s.n_windows = 3;
  s.n_freq = 5;
  s.cit = 0.1;
  s.hop = 0.05;
  s.time_axis = {0.0, 0.05, 0.1};
  s.freq_axis = {-20, -10, 0, 10, 20};
  for (int i = 0; i < 15; ++i) s.values.push_back(0.5 * i);
  write_spectrogram(dir / "s.pmsg", s);
  const std::string bytes = read_file(dir / "s.pmsg");
  CHECK(bytes.size() == kSpectrogramHeaderBytes + 15 * 4);
  CHECK(bytes.substr(0, 4) == "PMSG");
  const Spectrogram back = read_spectrogram(dir / "s.pmsg");
  CHECK(back.n_windows == 3);
  CHECK(back.n_freq == 5);
  CHECK(back.values == s.values);
  CHECK(back.freq_axis.front() == doctest::Approx(-20));
  CHECK(back.freq_axis.back() == doctest::Approx(20));
  CHECK(back.time_axis[2] == doctest::Approx(0.1));
  CHECK_FALSE(back.one_sided);

  write_spectrogram_csv(dir / "s.csv", s);
  CHECK(read_file(dir / "s.csv").rfind("time_s,freq_hz,magnitude\n", 0) == 0);
  write_spectrogram_pgm(dir / "s.pgm", s);
  CHECK(read_file(dir / "s.pgm").rfind("P5\n", 0) == 0);

  write_file_atomic(dir / "bad.pmsg", "PMSGxx");
  CHECK_THROWS_AS(read_spectrogram(dir / "bad.pmsg"), IoError);
}

TEST_CASE("spectrogram validation rejects negative values and bad axes") {
  Spectrogram s;
  s.n_windows = 1;
  s.n_freq = 2;
  s.values = {1.0, -1.0};
  s.time_axis = {0.0};
  s.freq_axis = {0.0, 1.0};
  CHECK_THROWS_AS(s.validate(), InputError);
  s.values = {1.0, 1.0};
  s.freq_axis = {1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), InputError);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}
