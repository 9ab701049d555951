#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pmsense/waveform.hpp"

namespace pmsense {

enum class Gesture { push, thumb, rub };
enum class Scenario { los, nlos };

inline constexpr Gesture kAllGestures[] = {Gesture::push, Gesture::thumb, Gesture::rub};

std::string to_string(Gesture g);
std::string to_string(Scenario s);
// Throw InputError on unknown names. Accept "push"/"thumb"/"rub" and "LoS"/"NLoS"
// (case-insensitive).
Gesture parse_gesture(std::string_view name);
Scenario parse_scenario(std::string_view name);

// Instantaneous Doppler f(t) of one propagation path, in Hz.
class DopplerTrajectory {
 public:
  struct Constant {
    double f0 = 0.0;
  };
  struct Sinusoid {
    double peak = 200.0;   // F_p
    double period = 1.0;   // T_g
    double phase = 0.0;    // rad; f(t) = peak * sin(2 pi t / period + phase)
  };
  struct ImpulseTrain {
    double peak = 150.0;   // F_p
    double width = 0.03;   // Gaussian sigma, s
    std::vector<double> times;
    std::vector<int> signs;  // +1 / -1, same length as times
  };
  // Sum of slow sinusoids with non-negative weights summing to one, scaled by
  // band_limit, so |f(t)| <= band_limit everywhere.
  struct Jitter {
    double band_limit = 60.0;  // F_j
    std::uint64_t seed = 0;
  };

  enum class Kind { constant, sinusoid, impulse_train, jitter };

  DopplerTrajectory() : DopplerTrajectory(Constant{}) {}
  DopplerTrajectory(Constant c);
  DopplerTrajectory(Sinusoid s);
  DopplerTrajectory(ImpulseTrain t);
  DopplerTrajectory(Jitter j);

  Kind kind() const noexcept;
  double frequency(double t) const;
  bool is_static() const noexcept;  // constant zero Doppler

  const auto& params() const noexcept { return params_; }

 private:
  struct JitterComponent {
    double weight, rate, phase;
  };
  std::variant<Constant, Sinusoid, ImpulseTrain, Jitter> params_;
  std::vector<JitterComponent> jitter_;
};

// phi_k = -2 pi * integral_0^{t_k} f(u) du at t_k = t0 + k / sample_rate,
// by cumulative trapezoid at sample resolution.
std::vector<double> accumulated_phase(const DopplerTrajectory& traj, double t0, double sample_rate,
                                      std::size_t count);

struct Path {
  cdouble gain{1.0, 0.0};
  double delay = 0.0;  // seconds
  DopplerTrajectory doppler;
};

struct ChannelConfig {
  std::vector<Path> paths;
  double freq_offset = 0.0;  // Hz, common to every path
  double noise_power = 0.0;  // per complex sample
  std::uint64_t noise_seed = 0;
};

// Multipath channel with per-path Doppler, a common frequency offset and additive
// circular Gaussian noise. Fractional delays use linear interpolation; the input is
// taken as zero before its first sample.
IqTrace apply_channel(const IqTrace& tx, const ChannelConfig& cfg);

// Parametric Doppler trajectories for the three gestures. Randomness (phase, impulse
// timing, jitter rates) comes from `seed`; peak values follow the defaults below.
struct GestureDefaults {
  double push_peak = 200.0;
  double push_period = 1.0;
  double thumb_peak = 150.0;
  double thumb_width = 0.03;
  double rub_band = 60.0;
};

DopplerTrajectory gesture_trajectory(Gesture label, double duration, std::uint64_t seed,
                                     const GestureDefaults& defaults = {});

struct ScenarioPreset {
  Scenario scenario = Scenario::los;
  Gesture gesture = Gesture::push;
  bool with_gesture = true;
  cdouble reference_gain{1.0, 0.0};
  double reference_delay = 1e-6;
  std::vector<Path> clutter;  // static surveillance paths
  cdouble gesture_gain{1.0, 0.0};
  double gesture_delay = 5e-6;
  GestureDefaults gesture_defaults;
};

// LoS: strong direct reference. NLoS: the weaker wall-reflected reference and a
// weaker surveillance return; geometry (delays) is shared.
ScenarioPreset make_preset(Scenario scenario, Gesture gesture);

struct GestureSample {
  IqTrace reference;
  IqTrace surveillance;
  Gesture label;
  Scenario scenario;
  double snr_db;
  double offset_hz;
  std::uint64_t seed;
};

// Both channels see the same burst and offset. Noise power is set per channel so its
// strongest path has the requested SNR (snr_db = +inf disables noise).
GestureSample synthesize_sample(const FrameSpec& spec, std::int64_t n_frames,
                                const ScenarioPreset& preset, double snr_db, double offset_hz,
                                std::uint64_t seed);

}  // namespace pmsense
