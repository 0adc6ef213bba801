#pragma once

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "deephums/encoder.hpp"
#include "deephums/params_io.hpp"

namespace deephums {

/// One stored signature with its id and optional class label.
struct IndexEntry {
    std::string id;
    std::optional<int> label;
    MotionSignature signature;
};

/// Immutable store of motion signatures supporting exact k-nearest-neighbour
/// queries (plain linear scan — the repository sizes this artifact targets
/// make exactness cheap). Entries are kept sorted by id so ties and files
/// are reproducible regardless of insertion order.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    explicit EmbeddingIndex(int dim) : dim_(dim) {
        if (dim <= 0) throw ArgumentError("index: dimension must be positive");
    }

    int dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<IndexEntry>& entries() const { return entries_; }

    void add(IndexEntry entry) {
        if (static_cast<int>(entry.signature.size()) != dim_)
            throw ShapeError("index: signature of dim " + std::to_string(entry.signature.size()) +
                             " added to index of dim " + std::to_string(dim_));
        if (!entry.signature.allFinite())
            throw ValidationError("index: non-finite signature for id '" + entry.id + "'");
        const auto pos = std::lower_bound(
            entries_.begin(), entries_.end(), entry.id,
            [](const IndexEntry& e, const std::string& id) { return e.id < id; });
        if (pos != entries_.end() && pos->id == entry.id)
            throw ValidationError("index: duplicate id '" + entry.id + "'");
        entries_.insert(pos, std::move(entry));
    }

    bool operator==(const EmbeddingIndex& other) const {
        if (dim_ != other.dim_ || entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& a = entries_[i];
            const auto& b = other.entries_[i];
            if (a.id != b.id || a.label != b.label || a.signature != b.signature) return false;
        }
        return true;
    }

private:
    int dim_ = 0;
    std::vector<IndexEntry> entries_;
};

struct QueryHit {
    std::string id;
    double distance = 0.0;
    std::optional<int> label;
};

/// Ranked query answer; distances are non-decreasing and ties are broken by
/// ascending id.
struct QueryResult {
    std::vector<QueryHit> hits;
};

namespace detail {

/// Fixed-order accumulation keeps distances identical across scan orders.
inline double squared_distance(const MotionSignature& a, const MotionSignature& b) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return sum;
}

}  // namespace detail

/// Exact k smallest Euclidean distances over the whole index. k larger than
/// the index simply returns the full ranking.
inline QueryResult query(const EmbeddingIndex& index, const MotionSignature& sig, int k) {
    if (static_cast<int>(sig.size()) != index.dim())
        throw ShapeError("query: signature dim " + std::to_string(sig.size()) +
                         " does not match index dim " + std::to_string(index.dim()));
    if (k < 1) throw ArgumentError("query: k must be at least 1");

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        scored.emplace_back(detail::squared_distance(index.entries()[i].signature, sig), i);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    // entries are sorted by id, so (distance, position) orders ties by id
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end());
    QueryResult result;
    result.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& entry = index.entries()[scored[i].second];
        result.hits.push_back({entry.id, std::sqrt(scored[i].first), entry.label});
    }
    return result;
}

/// Leave-one-out variant: same ranking with one id removed.
inline QueryResult query_excluding(const EmbeddingIndex& index, const MotionSignature& sig, int k,
                                   const std::string& exclude_id) {
    const int k_padded = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(k) + 1, std::max<std::size_t>(index.size(), 1)));
    QueryResult full = query(index, sig, k_padded);
    QueryResult out;
    for (auto& hit : full.hits) {
        if (hit.id == exclude_id) continue;
        out.hits.push_back(std::move(hit));
        if (static_cast<int>(out.hits.size()) == k) break;
    }
    return out;
}

/// Encodes every sequence of a dataset slice into a fresh index.
inline EmbeddingIndex build_index(const EncoderParams<float>& params,
                                  const std::vector<const SkeletonSequence*>& sequences,
                                  bool with_mask) {
    EmbeddingIndex index(params.config().embedding_dim);
    for (const auto* seq : sequences) {
        IndexEntry entry;
        entry.id = seq->id;
        entry.label = seq->class_label;
        entry.signature = encode(params, build_encoder_input(*seq, with_mask));
        index.add(std::move(entry));
    }
    return index;
}

// ---------------------------------------------------------------------------
// Persistence: header (magic, version, dim, count) then per entry the id,
// an optional label (INT32_MIN = absent) and dim little-endian floats.
// ---------------------------------------------------------------------------

namespace detail {
constexpr char kIndexMagic[4] = {'D', 'H', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::int32_t kNoLabel = std::numeric_limits<std::int32_t>::min();
}  // namespace detail

inline void save_index(const std::filesystem::path& path, const EmbeddingIndex& index) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write index file: " + path.string());
    out.write(detail::kIndexMagic, 4);
    detail::write_pod(out, detail::kIndexVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(index.dim()));
    detail::write_pod(out, static_cast<std::uint64_t>(index.size()));
    for (const auto& entry : index.entries()) {
        detail::write_pod(out, static_cast<std::uint32_t>(entry.id.size()));
        out.write(entry.id.data(), static_cast<std::streamsize>(entry.id.size()));
        detail::write_pod(out, entry.label ? static_cast<std::int32_t>(*entry.label)
                                           : detail::kNoLabel);
        out.write(reinterpret_cast<const char*>(entry.signature.data()),
                  static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(index.dim())));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline EmbeddingIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open index file: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kIndexMagic, 4) != 0)
        throw ParseError(path.string() + ": not an index file (bad magic)");
    std::uint32_t version = 0;
    detail::read_pod(in, version, "index version");
    if (version != detail::kIndexVersion)
        throw ParseError(path.string() + ": unsupported index version " + std::to_string(version));
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    detail::read_pod(in, dim, "index dim");
    detail::read_pod(in, count, "index count");
    if (dim == 0) throw ParseError(path.string() + ": header declares dimension 0");

    EmbeddingIndex index(static_cast<int>(dim));
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t id_len = 0;
        detail::read_pod(in, id_len, "entry id length");
        std::string id(id_len, '\0');
        in.read(id.data(), id_len);
        std::int32_t label = detail::kNoLabel;
        detail::read_pod(in, label, "entry label");
        MotionSignature sig(dim);
        in.read(reinterpret_cast<char*>(sig.data()),
                static_cast<std::streamsize>(sizeof(float) * dim));
        if (!in)
            throw ParseError(path.string() + ": truncated payload at entry " + std::to_string(i) +
                          " (header count mismatch?)");
        IndexEntry entry;
        entry.id = std::move(id);
        if (label != detail::kNoLabel) entry.label = label;
        entry.signature = std::move(sig);
        index.add(std::move(entry));
    }
    in.peek();
    if (!in.eof()) throw ParseError(path.string() + ": trailing data after declared entries");
    return index;
}

// ---------------------------------------------------------------------------
// Query latency measurement
// ---------------------------------------------------------------------------

struct LatencyStats {
    double mean_ms = 0.0;
    double p95_ms = 0.0;
    std::vector<double> per_query_ms;
    std::size_t index_size = 0;
};

/// Wall-clock per-query latency over a query set (k = 1 retrieval). Latency
/// grows with index size, so the index size is reported alongside.
inline LatencyStats benchmark_query_latency(const EmbeddingIndex& index,
                                            const std::vector<MotionSignature>& queries, int k = 1) {
    if (index.size() == 0) throw ArgumentError("latency benchmark: empty index");
    if (queries.empty()) throw ArgumentError("latency benchmark: empty query set");
    LatencyStats stats;
    stats.index_size = index.size();
    stats.per_query_ms.reserve(queries.size());
    for (const auto& q : queries) {
        const auto start = std::chrono::steady_clock::now();
        volatile double sink = query(index, q, k).hits.front().distance;
        (void)sink;
        const auto stop = std::chrono::steady_clock::now();
        stats.per_query_ms.push_back(
            std::chrono::duration<double, std::milli>(stop - start).count());
    }
    double total = 0.0;
    for (double ms : stats.per_query_ms) total += ms;
    stats.mean_ms = total / static_cast<double>(stats.per_query_ms.size());
    std::vector<double> sorted = stats.per_query_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t p95_pos =
        std::min(sorted.size() - 1,
                 static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1);
    stats.p95_ms = sorted[p95_pos];
    return stats;
}

}  // namespace deephums
