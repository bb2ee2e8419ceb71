#include "cid/feature_cache.h"

#include <cstring>
#include <stdexcept>

namespace cid {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'F', '1'};

void put_u32(std::FILE* f, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("feature cache: write failed");
}

uint32_t get_u32(std::FILE* f) {
  uint8_t b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("feature cache: truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

FeatureCacheWriter::FeatureCacheWriter(const std::string& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw std::runtime_error("feature cache: cannot open for writing: " + path);
  if (std::fwrite(kMagic, 1, 4, file_) != 4)
    throw std::runtime_error("feature cache: write failed: " + path);
}

FeatureCacheWriter::~FeatureCacheWriter() {
  if (file_) std::fclose(file_);
}

void FeatureCacheWriter::append(const std::string& source_id, uint32_t label,
                                const InputStack& stack) {
  if (!file_) throw std::runtime_error("feature cache: writer closed");
  put_u32(file_, static_cast<uint32_t>(source_id.size()));
  if (!source_id.empty() &&
      std::fwrite(source_id.data(), 1, source_id.size(), file_) != source_id.size())
    throw std::runtime_error("feature cache: write failed");
  put_u32(file_, label);
  put_u32(file_, static_cast<uint32_t>(stack.channels));
  put_u32(file_, static_cast<uint32_t>(stack.frames));
  put_u32(file_, static_cast<uint32_t>(stack.bins));
  // Floats as little-endian 32-bit words.
  for (float v : stack.data) {
    uint32_t w;
    std::memcpy(&w, &v, 4);
    put_u32(file_, w);
  }
}

void FeatureCacheWriter::close() {
  if (file_) {
    if (std::fclose(file_) != 0) throw std::runtime_error("feature cache: close failed: " + path_);
    file_ = nullptr;
  }
}

FeatureCache::FeatureCache(const std::string& path) {
  file_ = std::fopen(path.c_str(), "rb");
  if (!file_) throw std::runtime_error("feature cache: cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, file_) != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("feature cache: bad magic: " + path);
  std::fseek(file_, 0, SEEK_END);
  const uint64_t file_size = static_cast<uint64_t>(std::ftell(file_));
  std::fseek(file_, 4, SEEK_SET);
  uint64_t pos = 4;
  while (pos < file_size) {
    ClipMeta meta;
    const uint32_t id_len = get_u32(file_);
    meta.source_id.resize(id_len);
    if (id_len && std::fread(meta.source_id.data(), 1, id_len, file_) != id_len)
      throw std::runtime_error("feature cache: truncated record");
    meta.label = get_u32(file_);
    meta.channels = get_u32(file_);
    meta.frames = get_u32(file_);
    meta.bins = get_u32(file_);
    pos += 4 + id_len + 16;
    meta.data_offset = pos;
    const uint64_t payload =
        4ull * meta.channels * meta.frames * meta.bins;
    if (pos + payload > file_size)
      throw std::runtime_error("feature cache: record extends past end of file");
    records_.push_back(std::move(meta));
    pos += payload;
    std::fseek(file_, static_cast<long>(pos), SEEK_SET);
  }
}

FeatureCache::~FeatureCache() {
  if (file_) std::fclose(file_);
}

InputStack FeatureCache::load(size_t i) const {
  return load_channels(i, records_.at(i).channels);
}

InputStack FeatureCache::load_channels(size_t i, uint32_t n_channels) const {
  const ClipMeta& meta = records_.at(i);
  if (n_channels > meta.channels)
    throw std::runtime_error("feature cache: record has " +
                             std::to_string(meta.channels) + " channels, need " +
                             std::to_string(n_channels));
  InputStack stack;
  stack.channels = static_cast<int>(n_channels);
  stack.frames = meta.frames;
  stack.bins = meta.bins;
  const size_t n = static_cast<size_t>(n_channels) * meta.frames * meta.bins;
  stack.data.resize(n);
  std::fseek(file_, static_cast<long>(meta.data_offset), SEEK_SET);
  std::vector<uint8_t> raw(n * 4);
  if (!raw.empty() && std::fread(raw.data(), 1, raw.size(), file_) != raw.size())
    throw std::runtime_error("feature cache: truncated payload");
  for (size_t j = 0; j < n; ++j) {
    const uint32_t w = static_cast<uint32_t>(raw[4 * j]) |
                       (static_cast<uint32_t>(raw[4 * j + 1]) << 8) |
                       (static_cast<uint32_t>(raw[4 * j + 2]) << 16) |
                       (static_cast<uint32_t>(raw[4 * j + 3]) << 24);
    std::memcpy(&stack.data[j], &w, 4);
  }
  return stack;
}

}  // namespace cid
