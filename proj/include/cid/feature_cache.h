/// @file
/// @brief Binary feature cache ("CCF1"): one record per clip.
///
/// Layout after the 4-byte magic, all integers unsigned 32-bit little-endian:
///   source_id length, source_id bytes, composer index, channel count,
///   T, K, then channel-major rows of 32-bit little-endian floats.

#ifndef CID_FEATURE_CACHE_H
#define CID_FEATURE_CACHE_H

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "cid/features.h"

namespace cid {

struct ClipMeta {
  std::string source_id;
  uint32_t label = 0;
  uint32_t channels = 0;
  uint32_t frames = 0;  // T
  uint32_t bins = 0;    // K or F
  uint64_t data_offset = 0;
};

class FeatureCacheWriter {
 public:
  explicit FeatureCacheWriter(const std::string& path);
  ~FeatureCacheWriter();
  FeatureCacheWriter(const FeatureCacheWriter&) = delete;
  FeatureCacheWriter& operator=(const FeatureCacheWriter&) = delete;

  void append(const std::string& source_id, uint32_t label,
              const InputStack& stack);
  void close();

 private:
  std::FILE* file_ = nullptr;
  std::string path_;
};

class FeatureCache {
 public:
  explicit FeatureCache(const std::string& path);
  ~FeatureCache();
  FeatureCache(const FeatureCache&) = delete;
  FeatureCache& operator=(const FeatureCache&) = delete;

  size_t size() const { return records_.size(); }
  const ClipMeta& meta(size_t i) const { return records_.at(i); }
  const std::vector<ClipMeta>& records() const { return records_; }

  /// Reads one clip's channels from disk.
  InputStack load(size_t i) const;

  /// Reads a channel subset (prefix order: frame, onset, velocity).
  InputStack load_channels(size_t i, uint32_t n_channels) const;

 private:
  std::FILE* file_ = nullptr;
  std::vector<ClipMeta> records_;
};

}  // namespace cid

#endif  // CID_FEATURE_CACHE_H
