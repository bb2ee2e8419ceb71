/// @file
/// @brief Corpus assembly: composer selection, stratified piece-level
///        splitting, 30-second segmentation, batching.

#ifndef CID_DATASET_H
#define CID_DATASET_H

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cid/feature_cache.h"
#include "cid/tensor.h"

namespace cid {

struct CatalogEntry {
  std::string source_id;
  std::string composer;
  double duration = 0.0;
};

/// Piece inventory. composer_index maps composer -> ordinal label, assigned
/// in descending order of piece count, ties broken lexicographically.
struct Catalog {
  std::vector<CatalogEntry> pieces;
  std::map<std::string, int> composer_index;

  void rebuild_index();
  std::vector<std::string> class_names() const;  // ordered by index
};

enum class Subset { kTrain, kValidation, kTest };

const char* subset_name(Subset s);
Subset subset_from_string(const std::string& s);

/// Piece-level split: every clip of a piece shares the subset.
struct SplitAssignment {
  std::map<std::string, Subset> by_source;
};

struct Clip {
  std::string source_id;
  double start = 0.0;
  double duration = 30.0;
  int label = 0;
};

/// Keeps the k composers with the most pieces (ties lexicographic) and
/// renumbers composer_index 0..k-1 by descending count.
Catalog select_top_k(const Catalog& catalog, int k);

/// Largest-remainder apportionment of (0.8, 0.1, 0.1) per composer, with a
/// minimum of one validation and one test piece when the composer has at
/// least three. Piece order is shuffled by a generator seeded with
/// (seed, composer).
SplitAssignment stratified_split(const Catalog& catalog, uint64_t seed);

/// Clip windows tiling [0, duration): full 30-second windows, a final
/// partial window kept (zero-padded) iff it is at least 15 s, and pieces
/// shorter than 15 s yielding one clip iff they are at least 5 s.
std::vector<double> segment(double piece_duration, double clip_len = 30.0);

// --- manifest / split file formats (UTF-8, tab-separated) ---

void write_manifest(const std::string& path, const Catalog& catalog);
Catalog read_manifest(const std::string& path);

void write_split(const std::string& path, const SplitAssignment& split);
SplitAssignment read_split(const std::string& path);

// --- batching ---

/// Deterministic shuffled batches over feature-cache records. Each batch is
/// a B x C x T x K tensor plus labels; the final short batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const FeatureCache& cache, std::vector<size_t> record_indices,
                int batch_size, uint64_t seed, int64_t epoch, int channels);

  /// Returns false when exhausted.
  bool next(Tensor& x, std::vector<int>& labels);

  size_t num_batches() const;
  void reset(int64_t epoch);

 private:
  const FeatureCache& cache_;
  std::vector<size_t> indices_;
  std::vector<size_t> order_;
  int batch_size_;
  uint64_t seed_;
  int channels_;
  size_t cursor_ = 0;
};

}  // namespace cid

#endif  // CID_DATASET_H
