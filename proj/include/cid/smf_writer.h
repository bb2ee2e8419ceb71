/// @file
/// @brief Format-0 SMF assembly from tick-domain events.

#ifndef CID_SMF_WRITER_H
#define CID_SMF_WRITER_H

#include <cstdint>
#include <vector>

#include "cid/midi.h"

namespace cid {

struct TickNoteEvent {
  int pitch = 60;
  int velocity = 64;
  int64_t on_tick = 0;
  int64_t off_tick = 0;
  int channel = 0;
};

struct SmfWriteOptions {
  /// Emit note-offs as note-on velocity 0 instead of 0x80 events.
  bool velocity_zero_noteoff = false;
};

/// Serializes tick-domain notes and tempo changes as a single-track SMF.
/// At equal ticks, offs of earlier notes precede ons, which precede offs of
/// zero-length notes, so FIFO matching re-pairs them exactly.
std::vector<uint8_t> write_smf(const std::vector<TickNoteEvent>& notes,
                               const std::vector<TempoEntry>& tempos,
                               int ticks_per_quarter,
                               const SmfWriteOptions& opts = {});

/// Quantizes a seconds-domain piece onto the grid of the given tempo map and
/// serializes it. Times move by up to half a tick.
std::vector<uint8_t> write_smf_quantized(const MidiPiece& piece,
                                         const TempoMap& map,
                                         const SmfWriteOptions& opts = {});

}  // namespace cid

#endif  // CID_SMF_WRITER_H
