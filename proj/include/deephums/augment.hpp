#pragma once

#include <cmath>

#include "deephums/numeric.hpp"
#include "deephums/rng.hpp"
#include "deephums/skeleton.hpp"

namespace deephums {

/// Faster variant: keeps frames 0, 2, 4, ... (the final frame survives when
/// N is odd, so the whole-sequence endpoints are preserved). The nominal fps
/// is left untouched; with half the frames over the same playback rate the
/// motion appears twice as fast.
inline SkeletonSequence speed_double(const SkeletonSequence& seq) {
    const int n = seq.frame_count();
    if (n < 3) throw ArgumentError("speed_double: sequence '" + seq.id + "' too short (" +
                                   std::to_string(n) + " frames, need at least 3)");
    SkeletonSequence out = seq;
    out.id = seq.id + "_fast";
    out.frames.clear();
    const int m = (n + 1) / 2;
    out.frames.reserve(static_cast<std::size_t>(m));
    for (int t = 0; t < n; t += 2) out.frames.push_back(seq.frames[static_cast<std::size_t>(t)]);
    if (seq.missing_mask) {
        MissingMask mask(m, seq.joint_count());
        for (int t = 0; t < n; t += 2)
            for (int j = 0; j < seq.joint_count(); ++j)
                if (seq.missing_mask->at(t, j)) mask.set(t / 2, j);
        out.missing_mask = std::move(mask);
    }
    return out;
}

/// Slower variant: inserts the joint-wise linear midpoint between every pair
/// of consecutive frames, giving 2N-1 frames. Midpoints use the shared
/// lerp_frames helper, so subdivision is exactly reversible by speed_double
/// and preserves per-joint path lengths.
inline SkeletonSequence speed_half(const SkeletonSequence& seq) {
    const int n = seq.frame_count();
    if (n < 2) throw ArgumentError("speed_half: sequence '" + seq.id + "' too short");
    SkeletonSequence out = seq;
    out.id = seq.id + "_slow";
    out.frames.clear();
    out.frames.reserve(static_cast<std::size_t>(2 * n - 1));
    for (int t = 0; t < n - 1; ++t) {
        out.frames.push_back(seq.frames[static_cast<std::size_t>(t)]);
        out.frames.push_back(lerp_frames(seq.frames[static_cast<std::size_t>(t)],
                                         seq.frames[static_cast<std::size_t>(t + 1)], 0.5));
    }
    out.frames.push_back(seq.frames.back());
    if (seq.missing_mask) {
        // a midpoint is imputed if either endpoint was
        MissingMask mask(2 * n - 1, seq.joint_count());
        for (int j = 0; j < seq.joint_count(); ++j)
            for (int t = 0; t < n; ++t) {
                if (!seq.missing_mask->at(t, j)) continue;
                mask.set(2 * t, j);
                if (t > 0) mask.set(2 * t - 1, j);
                if (t < n - 1) mask.set(2 * t + 1, j);
            }
        out.missing_mask = std::move(mask);
    }
    return out;
}

/// Masks a random subset of round(fraction * J) joints across all frames,
/// simulating sensor dropout. The same joints are masked in every frame;
/// coordinates are replaced via apply_missing_fill and flagged in the mask.
/// Deterministic for a given seed.
inline SkeletonSequence drop_joints(const SkeletonSequence& seq, double fraction,
                                    std::uint64_t seed) {
    if (!(fraction > 0.0) || !(fraction < 1.0))
        throw ArgumentError("drop_joints: fraction must lie in (0, 1)");
    const int joints = seq.joint_count();
    if (fraction * joints < 1.0)
        throw ArgumentError("drop_joints: fraction " + std::to_string(fraction) + " selects no joint");
    const int k = static_cast<int>(std::lround(fraction * joints));

    Rng rng(seed);
    const auto dropped = rng.sample_without_replacement(joints, k);

    SkeletonSequence out = seq;
    MissingMask mask = seq.missing_mask ? *seq.missing_mask
                                        : MissingMask(seq.frame_count(), joints);
    for (int j : dropped)
        for (int t = 0; t < seq.frame_count(); ++t) mask.set(t, j);
    apply_missing_fill(out.frames, mask, seq.topology.root_joint);
    out.missing_mask = std::move(mask);
    return out;
}

}  // namespace deephums
