#pragma once
// Chunk grids, chunk-width randomization, and the attention-pattern family
// (dual-path intra/inter plus strided, block, and axial for comparison),
// with graph checks on the resulting attention patterns.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "surt/tape.hpp"
#include "surt/tensor.hpp"

namespace surt {

inline constexpr double kFrameMillis = 10.0;

inline double latency_millis(std::size_t chunk_width) { return static_cast<double>(chunk_width) * kFrameMillis; }

struct ChunkGrid {
  std::size_t length = 0;  // l, frames
  std::size_t width = 1;   // W
  std::size_t hop = 1;
  std::size_t chunks = 1;  // C
  std::size_t pad = 0;     // zero frames appended to fill the final chunk

  std::size_t chunk_start(std::size_t c) const { return c * hop; }
  // Chunk-domain row c*W + o -> frame index, or -1 for padding.
  std::vector<std::ptrdiff_t> frame_index() const;
};

ChunkGrid make_chunk_grid(std::size_t length, std::size_t width, std::size_t hop);
ChunkGrid make_chunk_grid(std::size_t length, std::size_t width);

// [l, F] -> [C*W, F] with zero padding; merge averages over coverage counts.
template <class T>
Tensor<T> split_chunks(const Tensor<T>& frames, const ChunkGrid& grid);
template <class T>
Tensor<T> merge_chunks(const Tensor<T>& chunked, const ChunkGrid& grid);

struct CwrConfig {
  std::size_t w_min = 15;
  std::size_t w_max = 45;
  std::size_t decode_w = 35;

  void validate() const;
};

// Uniform integer in [w_min, w_max]; drawn once per mini-batch.
std::size_t sample_chunk_width(const CwrConfig& cfg, std::mt19937_64& rng);

enum class MaskPattern {
  DualPathIntra,
  DualPathInterStreaming,
  DualPathInterOffline,
  Strided,
  Block,
  Axial,
};

std::string to_string(MaskPattern p);
MaskPattern parse_mask_pattern(const std::string& tag);

// Boolean l x l adjacency, row i attends to column j. Rows are bit-packed.
class AttentionMask {
 public:
  AttentionMask(std::size_t length, MaskPattern pattern);

  std::size_t length() const { return length_; }
  MaskPattern pattern() const { return pattern_; }
  bool at(std::size_t i, std::size_t j) const { return (bits_[i * words_ + j / 64] >> (j % 64)) & 1U; }
  void set(std::size_t i, std::size_t j) { bits_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64); }
  std::size_t nonzeros() const;
  std::size_t row_nonzeros(std::size_t i) const;

  const std::uint64_t* row_bits(std::size_t i) const { return bits_.data() + i * words_; }
  std::uint64_t* row_bits(std::size_t i) { return bits_.data() + i * words_; }
  std::size_t words_per_row() const { return words_; }

  std::vector<bool> dense() const;
  NeighborLists neighbors() const;

 private:
  std::size_t length_;
  MaskPattern pattern_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

// Dual-path tags encode their own causality; `streaming` makes the strided,
// block, and axial patterns causal (j <= i).
AttentionMask build_mask(MaskPattern pattern, std::size_t length, std::size_t width, bool streaming = false);

AttentionMask mask_union(const AttentionMask& a, const AttentionMask& b);

// Boolean product (A u I)(B u I): out[i][j] iff some k has A[i][k] and B[k][j].
AttentionMask reach_product(const AttentionMask& a, const AttentionMask& b);

bool all_true(const AttentionMask& m);

struct PatternReport {
  bool self_loops = false;
  bool hamiltonian_path = false;
  bool two_layer_full_reach = false;
  std::size_t nonzeros = 0;  // entries of the intra/inter union
  std::vector<std::size_t> path;
};

PatternReport analyze_pattern(const AttentionMask& intra, const AttentionMask& inter, std::size_t width);

// Direct (mask-free) neighbor construction used by the encoders.
NeighborLists intra_neighbors(std::size_t length, std::size_t width);
NeighborLists inter_neighbors(std::size_t length, std::size_t width, bool streaming);

}  // namespace surt
