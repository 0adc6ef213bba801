#pragma once

#include <filesystem>
#include <fstream>
#include <optional>

#include "deephums/numeric.hpp"
#include "deephums/sequence_io.hpp"
#include "deephums/skeleton.hpp"

namespace deephums {

/// Joint-wise 3D displacement between two frames, in meters.
struct MotionField {
    Eigen::MatrixX3d displacements;  // joint_count x 3
};

/// Per-joint total Euclidean path length over a sequence, in meters. A
/// joint's entry is zero exactly when it never moves.
struct MotionDistanceProfile {
    Eigen::VectorXd distances;  // joint_count
};

/// Whole-sequence trajectory summary: the first-to-last-frame motion field
/// plus the per-joint travel profile. This pair is the self-supervision
/// oracle — two sequences count as similar when both components are close.
struct TrajectorySummary {
    MotionField whole_video_mf;
    MotionDistanceProfile md_profile;
    int joint_count() const { return static_cast<int>(md_profile.distances.size()); }
};

enum class PairLabel { Similar, Dissimilar };

/// Displacement of frame i relative to frame j (F[i] - F[j]).
inline MotionField frame_motion_field(const SkeletonSequence& seq, int i, int j) {
    const int n = seq.frame_count();
    if (i < 0 || i >= n || j < 0 || j >= n)
        throw ArgumentError("frame_motion_field: frame index out of range (" + std::to_string(i) +
                            ", " + std::to_string(j) + " of " + std::to_string(n) + ")");
    return {seq.frames[static_cast<std::size_t>(i)] - seq.frames[static_cast<std::size_t>(j)]};
}

/// Per-joint sum of consecutive-frame displacements. Accumulated with a
/// compensated sum so the result is the correctly rounded total; linear
/// subdivision of the sequence leaves the profile bit-identical.
inline MotionDistanceProfile motion_distance_profile(const SkeletonSequence& seq) {
    const int n = seq.frame_count();
    if (n < 2) throw ArgumentError("motion_distance_profile: need at least 2 frames");
    const int joints = seq.joint_count();
    MotionDistanceProfile profile;
    profile.distances.resize(joints);
    for (int j = 0; j < joints; ++j) {
        CompensatedSum sum;
        for (int t = 0; t + 1 < n; ++t)
            sum.add(point_distance(seq.frames[static_cast<std::size_t>(t + 1)].row(j),
                                   seq.frames[static_cast<std::size_t>(t)].row(j)));
        profile.distances[j] = sum.value();
    }
    return profile;
}

inline TrajectorySummary trajectory_summary(const SkeletonSequence& seq) {
    if (seq.frame_count() < 2) throw ArgumentError("trajectory_summary: need at least 2 frames");
    return {frame_motion_field(seq, seq.frame_count() - 1, 0), motion_distance_profile(seq)};
}

struct SimilarityWeights {
    double alpha = 1.0;  // motion-field term
    double beta = 1.0;   // motion-distance term
};

/// Trajectory distance between two summaries:
///   alpha * |mf_a - mf_b|_F / J  +  beta * |md_a - md_b|_1 / J.
/// Normalizing by the joint count keeps thresholds topology-independent.
/// Zero exactly on identical summaries; symmetric; a pseudometric.
inline double trajectory_similarity(const TrajectorySummary& a, const TrajectorySummary& b,
                                    const SimilarityWeights& w = {}) {
    if (a.joint_count() != b.joint_count())
        throw ArgumentError("trajectory_similarity: joint count mismatch (" +
                            std::to_string(a.joint_count()) + " vs " +
                            std::to_string(b.joint_count()) + ")");
    const double joints = static_cast<double>(a.joint_count());
    const double mf_term =
        (a.whole_video_mf.displacements - b.whole_video_mf.displacements).norm() / joints;
    const double md_term =
        (a.md_profile.distances - b.md_profile.distances).lpNorm<1>() / joints;
    return w.alpha * mf_term + w.beta * md_term;
}

/// Thresholded pair labelling for self-supervision. Scores at or below
/// tau_sim are Similar, at or above tau_dis Dissimilar; the band in between
/// abstains (nullopt) and such pairs are excluded from training.
inline std::optional<PairLabel> pair_label_from_summaries(const TrajectorySummary& a,
                                                          const TrajectorySummary& b,
                                                          double tau_sim, double tau_dis,
                                                          const SimilarityWeights& w = {}) {
    if (!(tau_sim < tau_dis))
        throw ArgumentError("pair_label: tau_sim must be strictly below tau_dis");
    const double score = trajectory_similarity(a, b, w);
    if (score <= tau_sim) return PairLabel::Similar;
    if (score >= tau_dis) return PairLabel::Dissimilar;
    return std::nullopt;
}

inline std::optional<PairLabel> pair_label(const SkeletonSequence& a, const SkeletonSequence& b,
                                           double tau_sim, double tau_dis,
                                           const SimilarityWeights& w = {}) {
    return pair_label_from_summaries(trajectory_summary(a), trajectory_summary(b), tau_sim, tau_dis,
                                     w);
}

/// Per-frame encoder features: each row is the frame's joint coordinates
/// followed by the motion field to the next frame (zeros on the final row),
/// optionally followed by one missing bit per joint. Stored column-major
/// with one column per frame.
struct EncoderInput {
    Eigen::MatrixXd values;  // width x N, column t = features of frame t
    int joint_count = 0;
    bool has_mask = false;

    int width() const { return static_cast<int>(values.rows()); }
    int frames() const { return static_cast<int>(values.cols()); }
};

inline int encoder_input_width(int joint_count, bool with_mask) {
    return 6 * joint_count + (with_mask ? joint_count : 0);
}

inline EncoderInput build_encoder_input(const SkeletonSequence& seq, bool with_mask) {
    const int n = seq.frame_count();
    const int joints = seq.joint_count();
    EncoderInput input;
    input.joint_count = joints;
    input.has_mask = with_mask;
    input.values = Eigen::MatrixXd::Zero(encoder_input_width(joints, with_mask), n);
    for (int t = 0; t < n; ++t) {
        auto col = input.values.col(t);
        const auto& frame = seq.frames[static_cast<std::size_t>(t)];
        for (int j = 0; j < joints; ++j) col.segment<3>(3 * j) = frame.row(j).transpose();
        if (t + 1 < n) {
            const auto& next = seq.frames[static_cast<std::size_t>(t + 1)];
            for (int j = 0; j < joints; ++j)
                col.segment<3>(3 * joints + 3 * j) = (next.row(j) - frame.row(j)).transpose();
        }
        if (with_mask && seq.missing_mask)
            for (int j = 0; j < joints; ++j)
                col[6 * joints + j] = seq.missing_mask->at(t, j) ? 1.0 : 0.0;
    }
    return input;
}

/// Mask bits are included exactly when the sequence carries a mask.
inline EncoderInput build_encoder_input(const SkeletonSequence& seq) {
    return build_encoder_input(seq, seq.missing_mask.has_value());
}

/// Debug dump: one CSV row per frame (x0,y0,z0,...,mfx0,mfy0,mfz0,...).
inline void write_feature_csv(const std::filesystem::path& path, const EncoderInput& input) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write feature csv: " + path.string());
    const int joints = input.joint_count;
    for (int j = 0; j < joints; ++j) out << (j ? "," : "") << "x" << j << ",y" << j << ",z" << j;
    for (int j = 0; j < joints; ++j) out << ",mfx" << j << ",mfy" << j << ",mfz" << j;
    if (input.has_mask)
        for (int j = 0; j < joints; ++j) out << ",miss" << j;
    out << "\n";
    for (int t = 0; t < input.frames(); ++t) {
        for (int r = 0; r < input.width(); ++r)
            out << (r ? "," : "") << detail::format_double(input.values(r, t));
        out << "\n";
    }
}

/// Debug dump: one CSV row per joint (mfx,mfy,mfz,md) of a summary.
inline void write_summary_csv(const std::filesystem::path& path, const TrajectorySummary& summary) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write summary csv: " + path.string());
    out << "mfx,mfy,mfz,md\n";
    for (int j = 0; j < summary.joint_count(); ++j) {
        for (int k = 0; k < 3; ++k)
            out << (k ? "," : "") << detail::format_double(summary.whole_video_mf.displacements(j, k));
        out << "," << detail::format_double(summary.md_profile.distances[j]) << "\n";
    }
}

}  // namespace deephums
