/// @file
/// @brief Standard MIDI File parsing into absolute-time note events.

#ifndef CID_MIDI_H
#define CID_MIDI_H

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cid {

/// One note: pitch 21-108 after keyboard filtering, times in seconds.
struct NoteEvent {
  int pitch = 0;
  double onset = 0.0;
  double offset = 0.0;
  int velocity = 0;

  bool operator==(const NoteEvent&) const = default;
};

struct MidiPiece {
  std::vector<NoteEvent> notes;  // sorted by (onset, pitch), stable
  double duration = 0.0;         // max offset, 0 when empty
  std::string source_id;
  std::string composer;
};

struct TempoEntry {
  int64_t tick = 0;
  int64_t us_per_quarter = 500000;
};

struct TempoMap {
  std::vector<TempoEntry> entries;  // strictly increasing tick; entry at 0
  int ticks_per_quarter = 480;
};

/// Malformed-file error carrying the byte offset of the offending data.
class MidiError : public std::runtime_error {
 public:
  MidiError(const std::string& msg, size_t offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  size_t byte_offset;
};

/// Reads a variable-length quantity (big-endian, 7 bits per byte, at most
/// 4 bytes). Returns the value and the position after the last byte.
std::pair<uint32_t, size_t> read_varlen(const std::vector<uint8_t>& bytes,
                                        size_t pos);

/// Appends the variable-length encoding of value (< 2^28) to out.
void write_varlen(uint32_t value, std::vector<uint8_t>& out);

/// Piecewise-linear tick-to-seconds conversion over the tempo map.
double ticks_to_seconds(int64_t tick, const TempoMap& map);

/// Inverse of ticks_to_seconds, rounded to the nearest tick.
int64_t seconds_to_ticks(double seconds, const TempoMap& map);

/// Parses an SMF format 0/1 file with metrical division. Note-on/off pairs
/// are matched FIFO per (channel, pitch); velocity-0 note-ons are note-offs;
/// unmatched note-ons close at end of track; pitches outside 21-108 are
/// dropped.
MidiPiece parse_midi(const std::vector<uint8_t>& bytes);

MidiPiece parse_midi_file(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace cid

#endif  // CID_MIDI_H
