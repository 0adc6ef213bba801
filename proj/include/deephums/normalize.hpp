#pragma once

#include <vector>

#include "deephums/numeric.hpp"
#include "deephums/skeleton.hpp"

namespace deephums {

/// Per-bone mean length over all frames of the given sequences, in
/// topology.bone_edges order. The usual source of canonical lengths for
/// normalize_bone_lengths is the training split's mean skeleton.
inline std::vector<double> compute_canonical_lengths(const std::vector<SkeletonSequence>& sequences) {
    if (sequences.empty()) throw ArgumentError("canonical lengths: no sequences given");
    const auto& topo = sequences.front().topology;
    std::vector<CompensatedSum> sums(topo.bone_edges.size());
    std::size_t frames = 0;
    for (const auto& seq : sequences) {
        if (seq.topology.bone_edges != topo.bone_edges)
            throw ArgumentError("canonical lengths: sequences disagree on topology");
        for (const auto& frame : seq.frames) {
            for (std::size_t b = 0; b < topo.bone_edges.size(); ++b) {
                const auto& [p, c] = topo.bone_edges[b];
                sums[b].add(point_distance(frame.row(c), frame.row(p)));
            }
            ++frames;
        }
    }
    std::vector<double> lengths(sums.size());
    for (std::size_t b = 0; b < sums.size(); ++b)
        lengths[b] = sums[b].value() / static_cast<double>(frames);
    return lengths;
}

/// Retargets every bone to its canonical length, frame by frame, walking the
/// bone tree from the root. Bone directions and the root position are kept;
/// only lengths change, which removes performer scale from the data.
///
/// Requires fully observed frames (normalize before any dropout) and rejects
/// zero-length bones, whose direction is undefined.
inline SkeletonSequence normalize_bone_lengths(const SkeletonSequence& seq,
                                               const std::vector<double>& canonical_lengths) {
    if (canonical_lengths.size() != seq.topology.bone_edges.size())
        throw ArgumentError("normalize: expected " + std::to_string(seq.topology.bone_edges.size()) +
                            " canonical lengths, got " + std::to_string(canonical_lengths.size()));
    for (std::size_t b = 0; b < canonical_lengths.size(); ++b)
        if (!(canonical_lengths[b] > 0.0))
            throw ArgumentError("normalize: canonical length for bone " + std::to_string(b) +
                                " must be positive");
    if (seq.missing_mask && seq.missing_mask->any())
        throw ValidationError("normalize: sequence '" + seq.id +
                              "' has missing joints; normalize before dropout");

    const auto order = seq.topology.edges_in_traversal_order();
    // canonical_lengths is aligned with bone_edges order; map to traversal order
    std::vector<double> length_of_child(static_cast<std::size_t>(seq.joint_count()), 0.0);
    for (std::size_t b = 0; b < seq.topology.bone_edges.size(); ++b)
        length_of_child[static_cast<std::size_t>(seq.topology.bone_edges[b].second)] =
            canonical_lengths[b];

    SkeletonSequence out = seq;
    for (int t = 0; t < seq.frame_count(); ++t) {
        const JointMatrix& src = seq.frames[static_cast<std::size_t>(t)];
        JointMatrix& dst = out.frames[static_cast<std::size_t>(t)];
        dst.row(seq.topology.root_joint) = src.row(seq.topology.root_joint);
        for (const auto& [p, c] : order) {
            const Eigen::RowVector3d bone = src.row(c) - src.row(p);
            const double len = bone.norm();
            if (len == 0.0)
                throw ValidationError("normalize: degenerate zero-length bone " + std::to_string(p) +
                                      "->" + std::to_string(c) + " in frame " + std::to_string(t) +
                                      " of sequence '" + seq.id + "'");
            dst.row(c) = dst.row(p) + bone * (length_of_child[static_cast<std::size_t>(c)] / len);
        }
    }
    return out;
}

}  // namespace deephums
