#include "cid/smf_writer.h"

#include <algorithm>
#include <stdexcept>

namespace cid {

namespace {

enum EventKind { kTempo = 0, kNoteOff = 1, kNoteOn = 2, kZeroLenOff = 3 };

struct WireEvent {
  int64_t tick;
  int kind;
  size_t seq;
  int pitch = 0;
  int velocity = 0;
  int channel = 0;
  int64_t us_per_quarter = 0;
};

void be32_push(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void be16_push(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

}  // namespace

std::vector<uint8_t> write_smf(const std::vector<TickNoteEvent>& notes,
                               const std::vector<TempoEntry>& tempos,
                               int ticks_per_quarter,
                               const SmfWriteOptions& opts) {
  if (ticks_per_quarter <= 0 || ticks_per_quarter > 0x7FFF)
    throw std::invalid_argument("write_smf: ticks_per_quarter out of range");

  std::vector<WireEvent> events;
  events.reserve(notes.size() * 2 + tempos.size());
  size_t seq = 0;
  for (const TempoEntry& t : tempos)
    events.push_back({t.tick, kTempo, seq++, 0, 0, 0, t.us_per_quarter});
  for (const TickNoteEvent& n : notes) {
    if (n.off_tick < n.on_tick)
      throw std::invalid_argument("write_smf: note ends before it starts");
    events.push_back({n.on_tick, kNoteOn, seq++, n.pitch, n.velocity, n.channel, 0});
    const int off_kind = n.off_tick == n.on_tick ? kZeroLenOff : kNoteOff;
    events.push_back({n.off_tick, off_kind, seq++, n.pitch, n.velocity, n.channel, 0});
  }
  std::sort(events.begin(), events.end(), [](const WireEvent& a, const WireEvent& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.seq < b.seq;
  });

  std::vector<uint8_t> track;
  int64_t last_tick = 0;
  for (const WireEvent& e : events) {
    write_varlen(static_cast<uint32_t>(e.tick - last_tick), track);
    last_tick = e.tick;
    switch (e.kind) {
      case kTempo:
        track.push_back(0xFF);
        track.push_back(0x51);
        track.push_back(0x03);
        track.push_back(static_cast<uint8_t>(e.us_per_quarter >> 16));
        track.push_back(static_cast<uint8_t>(e.us_per_quarter >> 8));
        track.push_back(static_cast<uint8_t>(e.us_per_quarter));
        break;
      case kNoteOn:
        track.push_back(static_cast<uint8_t>(0x90 | e.channel));
        track.push_back(static_cast<uint8_t>(e.pitch));
        track.push_back(static_cast<uint8_t>(e.velocity));
        break;
      default:  // note off
        if (opts.velocity_zero_noteoff) {
          track.push_back(static_cast<uint8_t>(0x90 | e.channel));
          track.push_back(static_cast<uint8_t>(e.pitch));
          track.push_back(0x00);
        } else {
          track.push_back(static_cast<uint8_t>(0x80 | e.channel));
          track.push_back(static_cast<uint8_t>(e.pitch));
          track.push_back(0x40);
        }
        break;
    }
  }
  // End of track.
  write_varlen(0, track);
  track.push_back(0xFF);
  track.push_back(0x2F);
  track.push_back(0x00);

  std::vector<uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  be32_push(out, 6);
  be16_push(out, 0);  // format 0
  be16_push(out, 1);  // one track
  be16_push(out, static_cast<uint16_t>(ticks_per_quarter));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  be32_push(out, static_cast<uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

std::vector<uint8_t> write_smf_quantized(const MidiPiece& piece,
                                         const TempoMap& map,
                                         const SmfWriteOptions& opts) {
  std::vector<TickNoteEvent> notes;
  notes.reserve(piece.notes.size());
  for (const NoteEvent& ev : piece.notes) {
    TickNoteEvent tn;
    tn.pitch = ev.pitch;
    tn.velocity = ev.velocity;
    tn.on_tick = seconds_to_ticks(ev.onset, map);
    tn.off_tick = std::max(tn.on_tick, seconds_to_ticks(ev.offset, map));
    notes.push_back(tn);
  }
  return write_smf(notes, map.entries, map.ticks_per_quarter, opts);
}

}  // namespace cid
