#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "deephums/common.hpp"

namespace deephums {

/// One skeleton frame: joint_count rows of (x, y, z) in meters.
using JointMatrix = Eigen::MatrixX3d;

/// Bone tree shared by every frame of a sequence. Edges are (parent, child)
/// joint indices and must span all joints as a tree rooted at root_joint.
struct SkeletonTopology {
    int joint_count = 0;
    std::vector<std::pair<int, int>> bone_edges;
    int root_joint = 0;
    std::vector<std::string> joint_names;  // optional, not persisted

    void validate() const {
        if (joint_count <= 0) throw ValidationError("topology: joint_count must be positive");
        if (root_joint < 0 || root_joint >= joint_count)
            throw ValidationError("topology: root joint index out of range");
        if (static_cast<int>(bone_edges.size()) != joint_count - 1)
            throw ValidationError("topology: expected " + std::to_string(joint_count - 1) +
                                  " bone edges, got " + std::to_string(bone_edges.size()));
        std::vector<int> parent(static_cast<std::size_t>(joint_count), -1);
        std::vector<char> has_parent(static_cast<std::size_t>(joint_count), 0);
        for (const auto& [p, c] : bone_edges) {
            if (p < 0 || p >= joint_count || c < 0 || c >= joint_count)
                throw ValidationError("topology: bone index out of range");
            if (c == root_joint) throw ValidationError("topology: root joint cannot be a bone child");
            if (has_parent[static_cast<std::size_t>(c)])
                throw ValidationError("topology: joint " + std::to_string(c) + " has two parents");
            has_parent[static_cast<std::size_t>(c)] = 1;
            parent[static_cast<std::size_t>(c)] = p;
        }
        // every non-root joint must reach the root without cycles
        for (int j = 0; j < joint_count; ++j) {
            if (j == root_joint) continue;
            int cur = j;
            int hops = 0;
            while (cur != root_joint) {
                if (cur < 0 || !has_parent[static_cast<std::size_t>(cur)] || ++hops > joint_count)
                    throw ValidationError("topology: bones do not form a tree rooted at " +
                                          std::to_string(root_joint));
                cur = parent[static_cast<std::size_t>(cur)];
            }
        }
    }

    /// Bone edges reordered so parents always precede children (BFS from root).
    std::vector<std::pair<int, int>> edges_in_traversal_order() const {
        std::vector<std::vector<std::pair<int, int>>> children(static_cast<std::size_t>(joint_count));
        for (const auto& e : bone_edges) children[static_cast<std::size_t>(e.first)].push_back(e);
        std::vector<std::pair<int, int>> order;
        order.reserve(bone_edges.size());
        std::vector<int> frontier{root_joint};
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            for (const auto& e : children[static_cast<std::size_t>(frontier[i])]) {
                order.push_back(e);
                frontier.push_back(e.second);
            }
        }
        return order;
    }
};

/// Per-frame, per-joint missing flags (true = missing). Missing joints keep
/// a filled coordinate value in the frame; the mask records which entries
/// are imputed rather than observed.
class MissingMask {
public:
    MissingMask() = default;
    MissingMask(int frames, int joints)
        : frames_(frames), joints_(joints),
          bits_(static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints), 0) {}

    bool at(int frame, int joint) const {
        return bits_[static_cast<std::size_t>(frame) * static_cast<std::size_t>(joints_) +
                     static_cast<std::size_t>(joint)] != 0;
    }
    void set(int frame, int joint, bool missing = true) {
        bits_[static_cast<std::size_t>(frame) * static_cast<std::size_t>(joints_) +
              static_cast<std::size_t>(joint)] = missing ? 1 : 0;
    }
    int frames() const { return frames_; }
    int joints() const { return joints_; }
    bool any() const {
        for (auto b : bits_)
            if (b) return true;
        return false;
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }
    bool operator==(const MissingMask&) const = default;

private:
    int frames_ = 0;
    int joints_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// An ordered 3D skeletal motion sequence: the unit of ingestion,
/// augmentation, training and retrieval.
struct SkeletonSequence {
    std::string id;
    std::vector<JointMatrix> frames;
    SkeletonTopology topology;
    double fps = 30.0;
    std::optional<int> class_label;
    std::optional<std::string> performer_id;
    std::optional<MissingMask> missing_mask;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int joint_count() const { return topology.joint_count; }
};

/// Replaces masked coordinates with the joint's last known value. A joint
/// that has never been seen takes the current frame's root position (zero
/// if the root itself starts masked); the filled value is then carried
/// forward, so a joint masked everywhere sits still instead of injecting
/// motion. The root column is resolved first so other joints can borrow it.
inline void apply_missing_fill(std::vector<JointMatrix>& frames, const MissingMask& mask,
                               int root_joint) {
    const int n = static_cast<int>(frames.size());
    const int joints = mask.joints();
    {
        std::optional<Eigen::RowVector3d> carried;
        for (int t = 0; t < n; ++t) {
            if (mask.at(t, root_joint)) {
                const Eigen::RowVector3d v = carried ? *carried : Eigen::RowVector3d::Zero();
                frames[static_cast<std::size_t>(t)].row(root_joint) = v;
                carried = v;
            } else {
                carried = frames[static_cast<std::size_t>(t)].row(root_joint);
            }
        }
    }
    for (int j = 0; j < joints; ++j) {
        if (j == root_joint) continue;
        std::optional<Eigen::RowVector3d> carried;
        for (int t = 0; t < n; ++t) {
            auto& frame = frames[static_cast<std::size_t>(t)];
            if (mask.at(t, j)) {
                const Eigen::RowVector3d v =
                    carried ? *carried : Eigen::RowVector3d(frame.row(root_joint));
                frame.row(j) = v;
                carried = v;
            } else {
                carried = frame.row(j);
            }
        }
    }
}

/// Checks every structural invariant of a sequence; throws ValidationError.
inline void validate_sequence(const SkeletonSequence& seq) {
    seq.topology.validate();
    if (seq.frame_count() < 2)
        throw ValidationError("sequence '" + seq.id + "': needs at least 2 frames, has " +
                              std::to_string(seq.frame_count()));
    if (!(seq.fps > 0.0)) throw ValidationError("sequence '" + seq.id + "': fps must be positive");
    for (int t = 0; t < seq.frame_count(); ++t) {
        const auto& f = seq.frames[static_cast<std::size_t>(t)];
        if (f.rows() != seq.joint_count())
            throw ValidationError("sequence '" + seq.id + "': frame " + std::to_string(t) + " has " +
                                  std::to_string(f.rows()) + " joints, topology expects " +
                                  std::to_string(seq.joint_count()));
        if (!f.allFinite())
            throw ValidationError("sequence '" + seq.id + "': non-finite coordinate in frame " +
                                  std::to_string(t) + " without a missing flag");
    }
    if (seq.missing_mask) {
        if (seq.missing_mask->frames() != seq.frame_count() ||
            seq.missing_mask->joints() != seq.joint_count())
            throw ValidationError("sequence '" + seq.id + "': missing mask shape mismatch");
    }
}

}  // namespace deephums
