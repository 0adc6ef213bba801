#pragma once

#include <cmath>
#include <functional>
#include <span>

#include "deephums/dtw.hpp"
#include "deephums/index.hpp"

namespace deephums {

struct LabeledQuery {
    std::string id;
    int label = 0;
    MotionSignature signature;
};

namespace detail {

inline void require_labeled(const EmbeddingIndex& index) {
    for (const auto& e : index.entries())
        if (!e.label)
            throw ValidationError("metric: index entry '" + e.id + "' has no class label");
}

}  // namespace detail

/// Mean over queries of (same-class hits in the top n) / n. exclude_self
/// drops an index entry whose id equals the query id (leave-one-out).
inline double topn_accuracy(const EmbeddingIndex& index, std::span<const LabeledQuery> queries,
                            int n, bool exclude_self = false) {
    if (n < 1) throw ArgumentError("topn_accuracy: n must be at least 1");
    detail::require_labeled(index);
    if (queries.empty()) throw ArgumentError("topn_accuracy: empty query set");
    double total = 0.0;
    for (const auto& q : queries) {
        const QueryResult result = exclude_self ? query_excluding(index, q.signature, n, q.id)
                                                : query(index, q.signature, n);
        int same = 0;
        for (const auto& hit : result.hits)
            if (hit.label && *hit.label == q.label) ++same;
        total += static_cast<double>(same) / static_cast<double>(n);
    }
    return total / static_cast<double>(queries.size());
}

/// Leave-one-out top-n accuracy over the index's own entries.
inline double loo_topn_accuracy(const EmbeddingIndex& index, int n) {
    detail::require_labeled(index);
    if (index.size() < 2) throw DatasetError("leave-one-out accuracy needs at least 2 entries");
    std::vector<LabeledQuery> queries;
    queries.reserve(index.size());
    for (const auto& e : index.entries()) queries.push_back({e.id, *e.label, e.signature});
    return topn_accuracy(index, queries, n, /*exclude_self=*/true);
}

struct PRPoint {
    double recall = 0.0;
    double precision = 0.0;
};

/// Micro-averaged precision/recall swept over the rank cutoff: each query
/// ranks the whole index, and cutoff c pools same-class hits across queries.
/// The precision at cutoff 1 equals top-1 accuracy by construction.
struct PRCurve {
    std::vector<PRPoint> points;
};

inline PRCurve pr_curve(const EmbeddingIndex& index, std::span<const LabeledQuery> queries,
                        bool exclude_self = false) {
    detail::require_labeled(index);
    if (queries.empty()) throw ArgumentError("pr_curve: empty query set");
    if (index.size() == 0) throw ArgumentError("pr_curve: empty index");

    const int depth = static_cast<int>(index.size()) - (exclude_self ? 1 : 0);
    if (depth < 1) throw ArgumentError("pr_curve: nothing to rank");
    std::size_t total_relevant = 0;
    // rows of hit flags, one per query, in rank order
    std::vector<std::vector<char>> relevant(queries.size());
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto& q = queries[qi];
        const QueryResult result = exclude_self
                                       ? query_excluding(index, q.signature, depth, q.id)
                                       : query(index, q.signature, depth);
        relevant[qi].reserve(result.hits.size());
        for (const auto& hit : result.hits) {
            const bool same = hit.label && *hit.label == q.label;
            relevant[qi].push_back(same ? 1 : 0);
            if (same) ++total_relevant;
        }
    }
    if (total_relevant == 0)
        throw ValidationError("pr_curve: no query class occurs in the index");

    PRCurve curve;
    curve.points.reserve(static_cast<std::size_t>(depth));
    std::vector<std::size_t> cumulative(queries.size(), 0);
    std::size_t pooled_hits = 0;
    for (int c = 1; c <= depth; ++c) {
        for (std::size_t qi = 0; qi < queries.size(); ++qi)
            if (static_cast<std::size_t>(c - 1) < relevant[qi].size() && relevant[qi][c - 1])
                ++pooled_hits, ++cumulative[qi];
        const double precision = static_cast<double>(pooled_hits) /
                                 (static_cast<double>(queries.size()) * static_cast<double>(c));
        const double recall =
            static_cast<double>(pooled_hits) / static_cast<double>(total_relevant);
        curve.points.push_back({recall, precision});
    }
    return curve;
}

struct QueryReportRow {
    std::string query_id;
    std::vector<std::string> retrieved_ids;
    bool top1_correct = false;
    double topn_fraction = 0.0;
    double mean_dtw_mm = std::numeric_limits<double>::quiet_NaN();
};

struct RetrievalReport {
    int n = 10;
    std::vector<QueryReportRow> rows;
    double top1 = 0.0;
    double topn = 0.0;
    double mean_dtw_mm = std::numeric_limits<double>::quiet_NaN();
};

/// Per-query retrieval rows plus aggregates. resolve_sequence maps a
/// retrieved id to its frames for the DTW column and may return nullptr,
/// in which case that pair is left out of the DTW means. Rows are
/// independent, so they may be computed on several threads; aggregation
/// happens afterwards in query order and the result is thread-count
/// independent.
inline RetrievalReport build_retrieval_report(
    const EmbeddingIndex& index, std::span<const LabeledQuery> queries,
    const std::function<const SkeletonSequence*(const std::string&)>& resolve_sequence, int n,
    bool exclude_self = false, const DtwOptions& dtw_opts = {}, int threads = 1) {
    if (n < 1) throw ArgumentError("retrieval report: n must be at least 1");
    detail::require_labeled(index);
    RetrievalReport report;
    report.n = n;
    report.rows.resize(queries.size());

    parallel_for(static_cast<int>(queries.size()), threads, [&](int qi) {
        const auto& q = queries[static_cast<std::size_t>(qi)];
        const QueryResult result = exclude_self ? query_excluding(index, q.signature, n, q.id)
                                                : query(index, q.signature, n);
        QueryReportRow row;
        row.query_id = q.id;
        int same = 0;
        CompensatedSum row_dtw;
        std::size_t row_dtw_count = 0;
        const SkeletonSequence* query_seq = resolve_sequence ? resolve_sequence(q.id) : nullptr;
        for (const auto& hit : result.hits) {
            row.retrieved_ids.push_back(hit.id);
            if (hit.label && *hit.label == q.label) ++same;
            if (query_seq && resolve_sequence) {
                if (const SkeletonSequence* other = resolve_sequence(hit.id)) {
                    row_dtw.add(dtw_distance(*query_seq, *other, dtw_opts));
                    ++row_dtw_count;
                }
            }
        }
        row.top1_correct = !result.hits.empty() && result.hits.front().label &&
                           *result.hits.front().label == q.label;
        row.topn_fraction = static_cast<double>(same) / static_cast<double>(n);
        if (row_dtw_count > 0)
            row.mean_dtw_mm = row_dtw.value() / static_cast<double>(row_dtw_count);
        report.rows[static_cast<std::size_t>(qi)] = std::move(row);
    });

    double top1_sum = 0.0, topn_sum = 0.0;
    CompensatedSum dtw_sum;
    std::size_t dtw_count = 0;
    for (const auto& row : report.rows) {
        top1_sum += row.top1_correct ? 1.0 : 0.0;
        topn_sum += row.topn_fraction;
        if (!std::isnan(row.mean_dtw_mm)) {
            dtw_sum.add(row.mean_dtw_mm);
            ++dtw_count;
        }
    }
    if (!report.rows.empty()) {
        report.top1 = top1_sum / static_cast<double>(report.rows.size());
        report.topn = topn_sum / static_cast<double>(report.rows.size());
    }
    if (dtw_count > 0) report.mean_dtw_mm = dtw_sum.value() / static_cast<double>(dtw_count);
    return report;
}

namespace detail {

inline std::string format_sig6(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace detail

/// Writes report.csv, pr_curve.csv and summary.txt into out_dir. Output is
/// deterministic for identical inputs (all decimals at 6 significant digits).
inline void emit_report(const RetrievalReport& report, const PRCurve& curve,
                        const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    {
        std::ofstream out(out_dir / "report.csv");
        if (!out) throw IoError("cannot write " + (out_dir / "report.csv").string());
        out << "query_id,retrieved_ids,top1_correct,top" << report.n << "_fraction,mean_dtw_mm\n";
        for (const auto& row : report.rows) {
            out << row.query_id << ",";
            for (std::size_t i = 0; i < row.retrieved_ids.size(); ++i)
                out << (i ? ";" : "") << row.retrieved_ids[i];
            out << "," << (row.top1_correct ? 1 : 0) << ","
                << detail::format_sig6(row.topn_fraction) << ","
                << detail::format_sig6(row.mean_dtw_mm) << "\n";
        }
        if (!out) throw IoError("write failed: report.csv");
    }
    {
        std::ofstream out(out_dir / "pr_curve.csv");
        if (!out) throw IoError("cannot write " + (out_dir / "pr_curve.csv").string());
        out << "recall,precision\n";
        for (const auto& p : curve.points)
            out << detail::format_sig6(p.recall) << "," << detail::format_sig6(p.precision) << "\n";
        if (!out) throw IoError("write failed: pr_curve.csv");
    }
    {
        std::ofstream out(out_dir / "summary.txt");
        if (!out) throw IoError("cannot write " + (out_dir / "summary.txt").string());
        out << "queries=" << report.rows.size() << "\n";
        out << "top1_accuracy=" << detail::format_sig6(report.top1) << "\n";
        out << "top" << report.n << "_accuracy=" << detail::format_sig6(report.topn) << "\n";
        out << "mean_dtw_mm=" << detail::format_sig6(report.mean_dtw_mm) << "\n";
        if (!out) throw IoError("write failed: summary.txt");
    }
}

}  // namespace deephums
