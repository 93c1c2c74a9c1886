#include "surt/dualpath.hpp"

#include <algorithm>
#include <bit>

namespace surt {

ChunkGrid make_chunk_grid(std::size_t length, std::size_t width, std::size_t hop) {
  if (length < 1) fail(ErrorKind::BadConfig, "chunk grid needs at least one frame");
  if (width < 1) fail(ErrorKind::BadConfig, "chunk width must be >= 1");
  if (hop < 1 || hop > width) fail(ErrorKind::BadHop, "hop " + std::to_string(hop) + " not in 1.." + std::to_string(width));
  ChunkGrid g;
  g.length = length;
  g.width = width;
  g.hop = hop;
  const std::size_t over = length > width ? length - width : 0;
  g.chunks = (over + hop - 1) / hop + 1;
  g.pad = g.chunk_start(g.chunks - 1) + width - length;
  return g;
}

ChunkGrid make_chunk_grid(std::size_t length, std::size_t width) { return make_chunk_grid(length, width, width); }

std::vector<std::ptrdiff_t> ChunkGrid::frame_index() const {
  std::vector<std::ptrdiff_t> idx(chunks * width, -1);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t o = 0; o < width; ++o) {
      const std::size_t t = chunk_start(c) + o;
      if (t < length) idx[c * width + o] = static_cast<std::ptrdiff_t>(t);
    }
  }
  return idx;
}

template <class T>
Tensor<T> split_chunks(const Tensor<T>& frames, const ChunkGrid& grid) {
  if (frames.rows() != grid.length) fail(ErrorKind::ShapeMismatch, "split_chunks length");
  const std::size_t f = frames.cols();
  const auto idx = grid.frame_index();
  Tensor<T> out = Tensor<T>::matrix(idx.size(), f);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= 0) std::copy_n(frames.row(static_cast<std::size_t>(idx[r])), f, out.row(r));
  }
  return out;
}

template <class T>
Tensor<T> merge_chunks(const Tensor<T>& chunked, const ChunkGrid& grid) {
  const auto idx = grid.frame_index();
  if (chunked.rows() != idx.size()) fail(ErrorKind::ShapeMismatch, "merge_chunks rows");
  const std::size_t f = chunked.cols();
  std::vector<std::size_t> coverage(grid.length, 0);
  for (auto t : idx) {
    if (t >= 0) ++coverage[static_cast<std::size_t>(t)];
  }
  Tensor<T> out = Tensor<T>::matrix(grid.length, f);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    const auto t = static_cast<std::size_t>(idx[r]);
    const T w = T(1) / static_cast<T>(coverage[t]);
    for (std::size_t j = 0; j < f; ++j) out.at(t, j) += w * chunked.at(r, j);
  }
  return out;
}

void CwrConfig::validate() const {
  if (!(w_min >= 1 && w_min <= w_max)) fail(ErrorKind::BadConfig, "chunk width range needs 1 <= w_min <= w_max");
  if (decode_w < 1) fail(ErrorKind::BadConfig, "decode width must be >= 1");
}

std::size_t sample_chunk_width(const CwrConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<std::size_t> dist(cfg.w_min, cfg.w_max);
  return dist(rng);
}

std::string to_string(MaskPattern p) {
  switch (p) {
    case MaskPattern::DualPathIntra: return "dualpath-intra";
    case MaskPattern::DualPathInterStreaming: return "dualpath-inter-streaming";
    case MaskPattern::DualPathInterOffline: return "dualpath-inter-offline";
    case MaskPattern::Strided: return "strided";
    case MaskPattern::Block: return "block";
    case MaskPattern::Axial: return "axial";
  }
  return "unknown";
}

MaskPattern parse_mask_pattern(const std::string& tag) {
  for (auto p : {MaskPattern::DualPathIntra, MaskPattern::DualPathInterStreaming, MaskPattern::DualPathInterOffline,
                 MaskPattern::Strided, MaskPattern::Block, MaskPattern::Axial}) {
    if (to_string(p) == tag) return p;
  }
  fail(ErrorKind::BadPattern, "unknown attention pattern '" + tag + "'");
}

AttentionMask::AttentionMask(std::size_t length, MaskPattern pattern)
    : length_(length), pattern_(pattern), words_((length + 63) / 64), bits_(length * words_, 0) {}

std::size_t AttentionMask::row_nonzeros(std::size_t i) const {
  std::size_t n = 0;
  for (std::size_t w = 0; w < words_; ++w) n += static_cast<std::size_t>(std::popcount(bits_[i * words_ + w]));
  return n;
}

std::size_t AttentionMask::nonzeros() const {
  std::size_t n = 0;
  for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<bool> AttentionMask::dense() const {
  std::vector<bool> out(length_ * length_);
  for (std::size_t i = 0; i < length_; ++i) {
    for (std::size_t j = 0; j < length_; ++j) out[i * length_ + j] = at(i, j);
  }
  return out;
}

NeighborLists AttentionMask::neighbors() const {
  NeighborLists out(length_);
  for (std::size_t i = 0; i < length_; ++i) {
    for (std::size_t j = 0; j < length_; ++j) {
      if (at(i, j)) out[i].push_back(j);
    }
  }
  return out;
}

AttentionMask build_mask(MaskPattern pattern, std::size_t length, std::size_t width, bool streaming) {
  if (width < 1 || width > length) {
    fail(ErrorKind::BadConfig, "mask width " + std::to_string(width) + " must be in 1..l=" + std::to_string(length));
  }
  AttentionMask m(length, pattern);
  const std::size_t blocks = (length + width - 1) / width;
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t ci = i / width, oi = i % width;
    for (std::size_t j = 0; j < length; ++j) {
      const std::size_t cj = j / width, oj = j % width;
      bool on = false;
      switch (pattern) {
        case MaskPattern::DualPathIntra:
          on = ci == cj;
          break;
        case MaskPattern::DualPathInterStreaming:
          on = oi == oj && cj <= ci;
          break;
        case MaskPattern::DualPathInterOffline:
          on = oi == oj;
          break;
        case MaskPattern::Strided: {
          // Local window of W plus every W-th earlier/later token.
          const std::size_t dist = i > j ? i - j : j - i;
          on = dist < width || dist % width == 0;
          if (streaming) on = on && j <= i;
          break;
        }
        case MaskPattern::Block:
          // Own block plus one partner block (next block, wrapping; the
          // previous block when streaming).
          if (streaming) {
            on = (ci == cj && j <= i) || (ci > 0 && cj == ci - 1);
          } else {
            on = ci == cj || cj == (ci + 1) % blocks;
          }
          break;
        case MaskPattern::Axial:
          // Row and column of the (l/W) x W grid.
          on = ci == cj || oi == oj;
          if (streaming) on = on && j <= i;
          break;
      }
      if (on) m.set(i, j);
    }
  }
  return m;
}

AttentionMask mask_union(const AttentionMask& a, const AttentionMask& b) {
  if (a.length() != b.length()) fail(ErrorKind::ShapeMismatch, "mask lengths differ");
  AttentionMask out(a.length(), a.pattern());
  for (std::size_t i = 0; i < a.length(); ++i) {
    for (std::size_t w = 0; w < a.words_per_row(); ++w) out.row_bits(i)[w] = a.row_bits(i)[w] | b.row_bits(i)[w];
  }
  return out;
}

AttentionMask reach_product(const AttentionMask& a, const AttentionMask& b) {
  if (a.length() != b.length()) fail(ErrorKind::ShapeMismatch, "mask lengths differ");
  const std::size_t l = a.length(), words = a.words_per_row();
  AttentionMask out(l, a.pattern());
  for (std::size_t i = 0; i < l; ++i) {
    std::uint64_t* dst = out.row_bits(i);
    // Identity on A: i reaches B's row i directly.
    for (std::size_t w = 0; w < words; ++w) dst[w] |= b.row_bits(i)[w];
    dst[i / 64] |= std::uint64_t{1} << (i % 64);
    for (std::size_t k = 0; k < l; ++k) {
      if (!a.at(i, k)) continue;
      const std::uint64_t* src = b.row_bits(k);
      for (std::size_t w = 0; w < words; ++w) dst[w] |= src[w];
      dst[k / 64] |= std::uint64_t{1} << (k % 64);
    }
  }
  return out;
}

bool all_true(const AttentionMask& m) { return m.nonzeros() == m.length() * m.length(); }

namespace {

// Visits every chunk in order; inside a chunk all offsets are visited,
// entering at the offset where the previous chunk was left. Entry and exit
// offsets alternate between 0 and 1, chosen backwards from the last chunk so
// a partial final chunk is always entered at an offset it has.
std::vector<std::size_t> chunk_walk(std::size_t length, std::size_t width) {
  const std::size_t chunks = (length + width - 1) / width;
  auto chunk_len = [&](std::size_t c) { return std::min(width, length - c * width); };
  std::vector<std::size_t> entry(chunks, 0), exit(chunks, 0);
  if (width > 1) {
    exit[chunks - 1] = chunk_len(chunks - 1) > 1 ? 1 : 0;
    for (std::size_t c = chunks - 1; c-- > 0;) {
      exit[c] = entry[c + 1];
      entry[c] = 1 - exit[c];
    }
  }
  std::vector<std::size_t> path;
  path.reserve(length);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t base = c * width, n = chunk_len(c);
    path.push_back(base + entry[c]);
    for (std::size_t o = 0; o < n; ++o) {
      if (o != entry[c] && o != exit[c]) path.push_back(base + o);
    }
    if (exit[c] != entry[c]) path.push_back(base + exit[c]);
  }
  return path;
}

}  // namespace

PatternReport analyze_pattern(const AttentionMask& intra, const AttentionMask& inter, std::size_t width) {
  if (intra.length() != inter.length()) fail(ErrorKind::ShapeMismatch, "intra/inter masks differ in length");
  const std::size_t l = intra.length();
  const AttentionMask both = mask_union(intra, inter);
  PatternReport r;
  r.nonzeros = both.nonzeros();
  r.self_loops = true;
  for (std::size_t i = 0; i < l; ++i) r.self_loops = r.self_loops && both.at(i, i);

  // Information flows along the path: each token attends to its predecessor.
  r.path = chunk_walk(l, width);
  std::vector<bool> visited(l, false);
  bool ok = r.path.size() == l;
  for (std::size_t k = 0; ok && k < r.path.size(); ++k) {
    ok = r.path[k] < l && !visited[r.path[k]];
    if (ok) visited[r.path[k]] = true;
    if (ok && k > 0) ok = both.at(r.path[k], r.path[k - 1]);
  }
  r.hamiltonian_path = ok;

  // Two layers in either order: intra then inter, and inter then intra.
  r.two_layer_full_reach = all_true(reach_product(inter, intra)) && all_true(reach_product(intra, inter));
  return r;
}

NeighborLists intra_neighbors(std::size_t length, std::size_t width) {
  NeighborLists out(length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t start = (i / width) * width;
    const std::size_t end = std::min(length, start + width);
    for (std::size_t j = start; j < end; ++j) out[i].push_back(j);
  }
  return out;
}

NeighborLists inter_neighbors(std::size_t length, std::size_t width, bool streaming) {
  NeighborLists out(length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t limit = streaming ? i + 1 : length;
    for (std::size_t j = i % width; j < limit; j += width) out[i].push_back(j);
  }
  return out;
}

template Tensor<float> split_chunks(const Tensor<float>&, const ChunkGrid&);
template Tensor<double> split_chunks(const Tensor<double>&, const ChunkGrid&);
template Tensor<float> merge_chunks(const Tensor<float>&, const ChunkGrid&);
template Tensor<double> merge_chunks(const Tensor<double>&, const ChunkGrid&);

}  // namespace surt
