/// @file
/// @brief SMF parser implementation.

#include "cid/midi.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>

namespace cid {

namespace {

uint16_t be16(const std::vector<uint8_t>& b, size_t pos) {
  return static_cast<uint16_t>((b[pos] << 8) | b[pos + 1]);
}

uint32_t be32(const std::vector<uint8_t>& b, size_t pos) {
  return (static_cast<uint32_t>(b[pos]) << 24) |
         (static_cast<uint32_t>(b[pos + 1]) << 16) |
         (static_cast<uint32_t>(b[pos + 2]) << 8) | b[pos + 3];
}

struct TickNote {
  int pitch;
  int velocity;
  int64_t on_tick;
  int64_t off_tick;
};

}  // namespace

std::pair<uint32_t, size_t> read_varlen(const std::vector<uint8_t>& bytes,
                                        size_t pos) {
  uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    if (pos >= bytes.size()) throw MidiError("truncated variable-length quantity", pos);
    const uint8_t b = bytes[pos++];
    value = (value << 7) | (b & 0x7Fu);
    if ((b & 0x80u) == 0) return {value, pos};
  }
  throw MidiError("variable-length quantity longer than 4 bytes", pos);
}

void write_varlen(uint32_t value, std::vector<uint8_t>& out) {
  uint8_t stack[4];
  int n = 0;
  do {
    stack[n++] = static_cast<uint8_t>(value & 0x7Fu);
    value >>= 7;
  } while (value != 0 && n < 4);
  for (int i = n - 1; i >= 0; --i)
    out.push_back(static_cast<uint8_t>(stack[i] | (i > 0 ? 0x80u : 0u)));
}

double ticks_to_seconds(int64_t tick, const TempoMap& map) {
  double seconds = 0.0;
  int64_t seg_tick = 0;
  int64_t uspq = 500000;  // implicit default until the first entry
  const double denom = static_cast<double>(map.ticks_per_quarter) * 1e6;
  for (const TempoEntry& e : map.entries) {
    if (e.tick >= tick) break;
    if (e.tick > seg_tick)
      seconds += static_cast<double>(e.tick - seg_tick) * static_cast<double>(uspq) / denom;
    seg_tick = std::max(seg_tick, e.tick);
    uspq = e.us_per_quarter;
  }
  if (tick > seg_tick)
    seconds += static_cast<double>(tick - seg_tick) * static_cast<double>(uspq) / denom;
  return seconds;
}

int64_t seconds_to_ticks(double seconds, const TempoMap& map) {
  const double denom = static_cast<double>(map.ticks_per_quarter) * 1e6;
  double seg_sec = 0.0;
  int64_t seg_tick = 0;
  int64_t uspq = 500000;
  for (const TempoEntry& e : map.entries) {
    const double next_sec =
        seg_sec + static_cast<double>(e.tick - seg_tick) * static_cast<double>(uspq) / denom;
    if (e.tick > seg_tick && next_sec > seconds) break;
    if (e.tick > seg_tick) {
      seg_sec = next_sec;
      seg_tick = e.tick;
    }
    uspq = e.us_per_quarter;
  }
  const double ticks = (seconds - seg_sec) * denom / static_cast<double>(uspq);
  return seg_tick + static_cast<int64_t>(std::llround(ticks));
}

MidiPiece parse_midi(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 14 || bytes[0] != 'M' || bytes[1] != 'T' ||
      bytes[2] != 'h' || bytes[3] != 'd')
    throw MidiError("missing MThd header", 0);
  const uint32_t hdr_len = be32(bytes, 4);
  if (hdr_len < 6 || 8 + static_cast<size_t>(hdr_len) > bytes.size())
    throw MidiError("bad MThd chunk length", 4);
  const uint16_t format = be16(bytes, 8);
  const uint16_t ntrks = be16(bytes, 10);
  const uint16_t division = be16(bytes, 12);
  if (format > 1) throw MidiError("unsupported SMF format " + std::to_string(format), 8);
  if (division & 0x8000u) throw MidiError("SMPTE division not supported", 12);
  if (division == 0) throw MidiError("zero ticks per quarter", 12);

  std::vector<TempoEntry> tempo_events;
  std::vector<TickNote> tick_notes;
  size_t pos = 8 + hdr_len;
  uint16_t tracks_seen = 0;

  while (tracks_seen < ntrks) {
    if (pos + 8 > bytes.size()) throw MidiError("truncated chunk header", pos);
    const bool is_track = bytes[pos] == 'M' && bytes[pos + 1] == 'T' &&
                          bytes[pos + 2] == 'r' && bytes[pos + 3] == 'k';
    const uint32_t len = be32(bytes, pos + 4);
    const size_t body = pos + 8;
    const size_t end = body + len;
    if (end > bytes.size()) throw MidiError("chunk length exceeds file size", pos + 4);
    if (!is_track) {  // alien chunk, skip
      pos = end;
      continue;
    }
    ++tracks_seen;

    // Per-track FIFO matching of note-ons to note-offs per (channel, pitch).
    std::map<std::pair<int, int>, std::deque<std::pair<int64_t, int>>> open;
    int64_t tick = 0;
    uint8_t running = 0;
    size_t p = body;
    bool ended = false;
    while (p < end && !ended) {
      auto [delta, np] = read_varlen(bytes, p);
      p = np;
      tick += delta;
      if (p >= end) throw MidiError("truncated event", p);
      uint8_t status;
      if (bytes[p] & 0x80u) {
        status = bytes[p++];
      } else {
        if (running == 0) throw MidiError("data byte without running status", p);
        status = running;
      }
      if (status == 0xFF) {
        running = 0;
        if (p >= end) throw MidiError("truncated meta event", p);
        const uint8_t type = bytes[p++];
        auto [mlen, mp] = read_varlen(bytes, p);
        p = mp;
        if (p + mlen > end) throw MidiError("meta event length exceeds track", p);
        if (type == 0x51) {
          if (mlen != 3) throw MidiError("bad tempo meta length", p);
          const int64_t uspq = (static_cast<int64_t>(bytes[p]) << 16) |
                               (static_cast<int64_t>(bytes[p + 1]) << 8) |
                               bytes[p + 2];
          if (uspq <= 0) throw MidiError("non-positive tempo", p);
          tempo_events.push_back({tick, uspq});
        } else if (type == 0x2F) {
          ended = true;
        }
        p += mlen;
      } else if (status == 0xF0 || status == 0xF7) {
        running = 0;
        auto [slen, sp] = read_varlen(bytes, p);
        p = sp;
        if (p + slen > end) throw MidiError("sysex length exceeds track", p);
        p += slen;
      } else {
        const uint8_t hi = status & 0xF0u;
        const int channel = status & 0x0Fu;
        const int ndata = (hi == 0xC0 || hi == 0xD0) ? 1 : 2;
        if (p + static_cast<size_t>(ndata) > end) throw MidiError("truncated channel event", p);
        const uint8_t d1 = bytes[p];
        const uint8_t d2 = ndata == 2 ? bytes[p + 1] : 0;
        if ((d1 & 0x80u) || (d2 & 0x80u)) throw MidiError("invalid data byte", p);
        p += static_cast<size_t>(ndata);
        running = status;
        if (hi == 0x90 && d2 > 0) {
          open[{channel, d1}].push_back({tick, d2});
        } else if (hi == 0x80 || (hi == 0x90 && d2 == 0)) {
          auto it = open.find({channel, d1});
          if (it != open.end() && !it->second.empty()) {
            auto [on_tick, vel] = it->second.front();
            it->second.pop_front();
            tick_notes.push_back({d1, vel, on_tick, tick});
          }
          // A stray note-off with no matching note-on is ignored.
        }
      }
    }
    // Close anything still sounding at end of track.
    for (auto& [key, queue] : open)
      for (auto& [on_tick, vel] : queue)
        tick_notes.push_back({key.second, vel, on_tick, tick});
    pos = end;
  }

  // Tempo map over all tracks: stable order per tick, last entry wins.
  std::stable_sort(tempo_events.begin(), tempo_events.end(),
                   [](const TempoEntry& a, const TempoEntry& b) { return a.tick < b.tick; });
  TempoMap map;
  map.ticks_per_quarter = division;
  for (const TempoEntry& e : tempo_events) {
    if (!map.entries.empty() && map.entries.back().tick == e.tick)
      map.entries.back().us_per_quarter = e.us_per_quarter;
    else
      map.entries.push_back(e);
  }
  if (map.entries.empty() || map.entries.front().tick != 0)
    map.entries.insert(map.entries.begin(), {0, 500000});

  MidiPiece piece;
  piece.notes.reserve(tick_notes.size());
  for (const TickNote& tn : tick_notes) {
    if (tn.pitch < 21 || tn.pitch > 108) continue;
    NoteEvent ev;
    ev.pitch = tn.pitch;
    ev.velocity = tn.velocity;
    ev.onset = ticks_to_seconds(tn.on_tick, map);
    ev.offset = ticks_to_seconds(tn.off_tick, map);
    piece.notes.push_back(ev);
  }
  std::stable_sort(piece.notes.begin(), piece.notes.end(),
                   [](const NoteEvent& a, const NoteEvent& b) {
                     if (a.onset != b.onset) return a.onset < b.onset;
                     return a.pitch < b.pitch;
                   });
  for (const NoteEvent& ev : piece.notes)
    piece.duration = std::max(piece.duration, ev.offset);
  return piece;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(size > 0 ? static_cast<size_t>(size) : 0);
  if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw std::runtime_error("short read: " + path);
  }
  std::fclose(f);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write file: " + path);
  if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw std::runtime_error("short write: " + path);
  }
  std::fclose(f);
}

MidiPiece parse_midi_file(const std::string& path) {
  MidiPiece piece = parse_midi(read_file_bytes(path));
  piece.source_id = path;
  return piece;
}

}  // namespace cid
