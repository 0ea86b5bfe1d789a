#pragma once

// Log-mel front-end: 16 kHz PCM clips to (frames x bands) log energies.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace kwscl {

inline constexpr int kSampleRateHz = 16000;
inline constexpr std::size_t kClipSamples = 16000;

struct PcmClip {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = kSampleRateHz;
};

struct FrontendConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 64;
  double fmin_hz = 50.0;
  double fmax_hz = 7500.0;
  int fft_size = 512;
  double log_floor = 1e-6;
  int sample_rate_hz = kSampleRateHz;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  // Throws ConfigError on any violated invariant.
  void validate() const;
};

struct LogMelSpectrogram {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<double> values;  // row-major frames x bands

  double at(std::size_t frame, std::size_t band) const { return values[frame * bands + band]; }
};

// Dense n_mels x (fft_size/2 + 1) triangular filter matrix.
struct FilterBank {
  std::size_t bands = 0;
  std::size_t bins = 0;
  std::vector<double> weights;   // row-major bands x bins
  std::vector<double> center_hz;  // per band

  double at(std::size_t band, std::size_t bin) const { return weights[band * bins + bin]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Pads with zeros or truncates to kClipSamples. Channels are averaged.
PcmClip load_wav(const std::filesystem::path& path);

// Any-length mono PCM16 read (used for background-noise files). Rejects
// non-16 kHz input like load_wav.
std::vector<std::int16_t> load_wav_samples(const std::filesystem::path& path);
void save_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
              int sample_rate_hz = kSampleRateHz);

// Samples 0..kClipSamples of `samples` starting at `offset`, zero padded.
PcmClip crop_clip(std::span<const std::int16_t> samples, std::size_t offset);

FilterBank mel_filterbank(const FrontendConfig& cfg);

std::size_t frame_count(std::size_t clip_samples, const FrontendConfig& cfg);

// Stateless per call; the filterbank and FFT plan are shared read-only.
class LogMelFrontend {
 public:
  explicit LogMelFrontend(const FrontendConfig& cfg);
  ~LogMelFrontend();
  LogMelFrontend(const LogMelFrontend&) = delete;
  LogMelFrontend& operator=(const LogMelFrontend&) = delete;

  const FrontendConfig& config() const { return cfg_; }
  const FilterBank& filterbank() const { return bank_; }

  LogMelSpectrogram compute(std::span<const std::int16_t> samples) const;

 private:
  struct Plan;
  FrontendConfig cfg_;
  FilterBank bank_;
  std::vector<double> window_;
  std::unique_ptr<Plan> plan_;
};

LogMelSpectrogram log_mel(const PcmClip& clip, const FrontendConfig& cfg);

// LMEL0001 cache: magic, frames u32, bands u32, frames*bands float32 row-major.
void save_spectrogram(const std::filesystem::path& path, const LogMelSpectrogram& spec);
LogMelSpectrogram load_spectrogram(const std::filesystem::path& path);

}  // namespace kwscl
