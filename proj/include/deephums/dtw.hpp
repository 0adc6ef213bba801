#pragma once

#include <limits>
#include <vector>

#include "deephums/numeric.hpp"
#include "deephums/skeleton.hpp"

namespace deephums {

struct DtwOptions {
    /// Sakoe-Chiba band half-width; negative means unconstrained (exact).
    int band = -1;
    /// Linearly resample the shorter sequence to the longer's frame count
    /// before aligning. Interpolated frames of a slowed-down copy then land
    /// exactly on the original samples, so pure speed differences cost zero.
    bool equalize_lengths = true;
};

namespace detail {

/// Frames resampled to target_n by linear interpolation on the frame index.
/// Sample positions that hit integers return the source frame unchanged.
inline std::vector<JointMatrix> resample_frames(const std::vector<JointMatrix>& frames,
                                                int target_n) {
    const int n = static_cast<int>(frames.size());
    if (target_n == n) return frames;
    std::vector<JointMatrix> out;
    out.reserve(static_cast<std::size_t>(target_n));
    if (n == 1 || target_n == 1) {
        for (int k = 0; k < target_n; ++k) out.push_back(frames.front());
        return out;
    }
    for (int k = 0; k < target_n; ++k) {
        const double u = static_cast<double>(k) * static_cast<double>(n - 1) /
                         static_cast<double>(target_n - 1);
        int i0 = static_cast<int>(u);
        if (i0 >= n - 1) i0 = n - 2;
        const double t = u - static_cast<double>(i0);
        out.push_back(lerp_frames(frames[static_cast<std::size_t>(i0)],
                                  frames[static_cast<std::size_t>(i0 + 1)], t));
    }
    return out;
}

inline double mean_joint_distance(const JointMatrix& a, const JointMatrix& b) {
    double sum = 0.0;
    const int joints = static_cast<int>(a.rows());
    for (int j = 0; j < joints; ++j) sum += point_distance(a.row(j), b.row(j));
    return sum / static_cast<double>(joints);
}

struct PathValue {
    double cost = std::numeric_limits<double>::infinity();
    int length = 0;
    /// Minimal cost first; among equal costs the shorter path, which keeps
    /// the per-frame normalization deterministic.
    bool better_than(const PathValue& other) const {
        return cost < other.cost || (cost == other.cost && length < other.length);
    }
};

}  // namespace detail

/// Per-frame mean joint distance after dynamic time warping, in millimeters:
/// the optimal monotone alignment's total cost divided by its path length.
/// Symmetric, zero on identical sequences.
inline double dtw_distance(const std::vector<JointMatrix>& frames_a,
                           const std::vector<JointMatrix>& frames_b,
                           const DtwOptions& opts = {}) {
    if (frames_a.empty() || frames_b.empty())
        throw ArgumentError("dtw_distance: sequences must have at least 1 frame");
    if (frames_a.front().rows() != frames_b.front().rows())
        throw ArgumentError("dtw_distance: joint count mismatch (" +
                            std::to_string(frames_a.front().rows()) + " vs " +
                            std::to_string(frames_b.front().rows()) + ")");

    const std::vector<JointMatrix>* a = &frames_a;
    const std::vector<JointMatrix>* b = &frames_b;
    std::vector<JointMatrix> resampled;
    if (opts.equalize_lengths && frames_a.size() != frames_b.size()) {
        const int target = static_cast<int>(std::max(frames_a.size(), frames_b.size()));
        if (frames_a.size() < frames_b.size()) {
            resampled = detail::resample_frames(frames_a, target);
            a = &resampled;
        } else {
            resampled = detail::resample_frames(frames_b, target);
            b = &resampled;
        }
    }

    const int na = static_cast<int>(a->size());
    const int nb = static_cast<int>(b->size());
    std::vector<detail::PathValue> dp(static_cast<std::size_t>(na) * static_cast<std::size_t>(nb));
    auto at = [&](int i, int j) -> detail::PathValue& {
        return dp[static_cast<std::size_t>(i) * static_cast<std::size_t>(nb) +
                  static_cast<std::size_t>(j)];
    };
    for (int i = 0; i < na; ++i) {
        int j_lo = 0, j_hi = nb - 1;
        if (opts.band >= 0) {
            // keep the corridor feasible when lengths differ
            const double center = na > 1 ? static_cast<double>(i) * (nb - 1) / (na - 1)
                                         : 0.0;
            j_lo = std::max(0, static_cast<int>(center) - opts.band);
            j_hi = std::min(nb - 1, static_cast<int>(center) + opts.band);
        }
        for (int j = j_lo; j <= j_hi; ++j) {
            const double c = detail::mean_joint_distance((*a)[static_cast<std::size_t>(i)],
                                                         (*b)[static_cast<std::size_t>(j)]);
            if (i == 0 && j == 0) {
                at(i, j) = {c, 1};
                continue;
            }
            detail::PathValue best;
            if (i > 0 && at(i - 1, j).length > 0 && at(i - 1, j).better_than(best))
                best = at(i - 1, j);
            if (j > 0 && at(i, j - 1).length > 0 && at(i, j - 1).better_than(best))
                best = at(i, j - 1);
            if (i > 0 && j > 0 && at(i - 1, j - 1).length > 0 && at(i - 1, j - 1).better_than(best))
                best = at(i - 1, j - 1);
            if (best.length == 0) continue;  // unreachable inside the band
            at(i, j) = {best.cost + c, best.length + 1};
        }
    }
    const detail::PathValue& goal = at(na - 1, nb - 1);
    if (goal.length == 0)
        throw ArgumentError("dtw_distance: band too narrow, no feasible alignment");
    return 1000.0 * (goal.cost / static_cast<double>(goal.length));
}

inline double dtw_distance(const SkeletonSequence& a, const SkeletonSequence& b,
                           const DtwOptions& opts = {}) {
    if (a.joint_count() != b.joint_count())
        throw ArgumentError("dtw_distance: sequences have different joint counts");
    return dtw_distance(a.frames, b.frames, opts);
}

}  // namespace deephums
