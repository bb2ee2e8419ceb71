/// @file
/// @brief Input representations: frame/onset/velocity rolls from MIDI and
///        log-mel spectrograms from audio.

#ifndef CID_FEATURES_H
#define CID_FEATURES_H

#include <cstdint>
#include <string>
#include <vector>

#include "cid/midi.h"

namespace cid {

inline constexpr int kPitchCount = 88;   // piano keys, MIDI 21..108
inline constexpr int kLowestPitch = 21;
inline constexpr double kClipSeconds = 30.0;
inline constexpr double kDefaultFps = 100.0;
inline constexpr int kSampleRate = 16000;
inline constexpr int kStftWindow = 1024;
inline constexpr int kStftHop = 160;
inline constexpr int kNumMels = 64;
inline constexpr double kMelFmin = 30.0;
inline constexpr double kMelFmax = 8000.0;
inline constexpr double kLogFloor = 1e-10;

/// Stacked binary/real-valued rolls for one clip, all T x 88.
struct RollSet {
  int64_t frames = 0;            // T
  double fps = kDefaultFps;
  std::vector<float> frame;      // {0,1}
  std::vector<float> onset;      // {0,1}
  std::vector<float> velocity;   // [0,1], velocity/127 over active frames

  size_t idx(int64_t t, int k) const {
    return static_cast<size_t>(t) * kPitchCount + static_cast<size_t>(k);
  }
};

struct MelSpectrogram {
  int64_t frames = 0;  // T
  int bins = kNumMels;
  double frame_rate = 0.0;
  std::vector<float> values;  // T x bins, natural log magnitude
};

enum class InputVariant { kFrame, kOnset, kFrameOnset, kFrameOnsetVelocity, kLogMel };

InputVariant variant_from_string(const std::string& s);
const char* variant_name(InputVariant v);
int variant_channels(InputVariant v);

/// Multi-channel model input: channels x T x K, channel order
/// (frame, onset, velocity) for MIDI, a single channel for audio.
struct InputStack {
  int channels = 0;
  int64_t frames = 0;  // T
  int64_t bins = 0;    // K (88) or F (64)
  std::vector<float> data;  // channels x T x bins, row-major
};

/// Rasterizes the notes of a piece overlapping [start, start+duration) at
/// the given frame rate; T = round(duration * fps). Overlapping notes on one
/// pitch take the max velocity per frame; notes shorter than one frame are
/// extended to a single frame so onset evidence survives.
RollSet extract_rolls(const MidiPiece& piece, double start, double duration,
                      double fps);

InputStack stack_channels(const RollSet& rolls, InputVariant variant);

/// n_mels + 2 triangle boundary frequencies, equally spaced on
/// mel(f) = 2595 log10(1 + f/700).
std::vector<double> mel_frequencies(int n_mels, double f_min, double f_max);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filterbank, n_mels x (window/2 + 1), peak weight 1.
std::vector<double> mel_filterbank(int n_mels, int sample_rate, int window_size,
                                   double f_min, double f_max);

/// Magnitude STFT with Hann window, centered frames, reflection padding.
/// Output is T x (window/2 + 1) with T = floor(len/hop) + 1 (0 when empty).
std::vector<float> stft_magnitude(const std::vector<float>& samples,
                                  int window_size, int hop, int64_t* out_frames);

/// values = ln(max(spec . filterbank^T, 1e-10)).
MelSpectrogram log_mel(const std::vector<float>& spec, int64_t spec_frames,
                       int n_bins, const std::vector<double>& filterbank,
                       int n_mels, double frame_rate);

/// Full audio front end for one clip of samples (zero-padded by the caller).
InputStack audio_to_stack(const std::vector<float>& samples);

}  // namespace cid

#endif  // CID_FEATURES_H
