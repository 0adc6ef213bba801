#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deephums/rng.hpp"
#include "deephums/skeleton.hpp"

namespace deephums {

/// One sinusoidal component of a synthetic motion class. whole_body terms
/// translate every joint (root motion); otherwise only `joint` moves.
struct JointOscillation {
    int joint = 0;
    Eigen::RowVector3d axis = Eigen::RowVector3d::UnitY();
    double amplitude = 0.1;  // meters
    double cycles = 2.0;     // oscillation periods over the whole sequence
    double phase = 0.0;      // radians
    bool whole_body = false;
};

/// A parametric motion class: oscillators plus an optional whole-body
/// displacement accumulated linearly over the sequence (walking-style drift).
struct SynthClassSpec {
    std::string name;
    std::vector<JointOscillation> oscillators;
    Eigen::RowVector3d drift = Eigen::RowVector3d::Zero();
};

/// Desk-scale dataset generator specification. Jitters are per-sequence:
/// amplitudes and cycle counts get multiplicative noise, phases additive
/// noise, and every joint a small static pose offset. Performer scale is
/// tied to the performer id so bone-length normalization has real work to do.
struct SynthSpec {
    SkeletonTopology topology;
    JointMatrix base_pose;
    std::vector<SynthClassSpec> classes;
    int min_frames = 15;
    int max_frames = 600;
    double amplitude_jitter = 0.15;
    double cycles_jitter = 0.10;
    double phase_jitter = 0.40;
    // static per-joint offsets give each sequence a postural fingerprint
    // without touching its trajectory features
    double pose_jitter = 0.08;
    double scale_min = 0.90;
    double scale_max = 1.10;
    int performers = 5;
    double fps = 30.0;
};

/// 16-joint stick figure: pelvis root, spine/neck/head column, two
/// three-joint arms and two three-joint legs.
inline SkeletonTopology default_synth_topology() {
    SkeletonTopology topo;
    topo.joint_count = 16;
    topo.root_joint = 0;
    topo.bone_edges = {{0, 1}, {1, 2}, {2, 3},  {2, 4},   {4, 5},   {5, 6},   {2, 7},  {7, 8},
                       {8, 9}, {0, 10}, {10, 11}, {11, 12}, {0, 13}, {13, 14}, {14, 15}};
    topo.joint_names = {"pelvis",     "spine",   "neck",    "head",   "l_shoulder", "l_elbow",
                        "l_hand",     "r_shoulder", "r_elbow", "r_hand", "l_hip",   "l_knee",
                        "l_foot",     "r_hip",   "r_knee",  "r_foot"};
    return topo;
}

inline JointMatrix default_synth_pose() {
    JointMatrix pose(16, 3);
    pose << 0.00, 1.00, 0.00,   // pelvis
            0.00, 1.25, 0.00,   // spine
            0.00, 1.50, 0.00,   // neck
            0.00, 1.65, 0.00,   // head
           -0.20, 1.45, 0.00,   // l_shoulder
           -0.45, 1.45, 0.00,   // l_elbow
           -0.70, 1.45, 0.00,   // l_hand
            0.20, 1.45, 0.00,   // r_shoulder
            0.45, 1.45, 0.00,   // r_elbow
            0.70, 1.45, 0.00,   // r_hand
           -0.10, 0.95, 0.00,   // l_hip
           -0.10, 0.50, 0.00,   // l_knee
           -0.10, 0.05, 0.00,   // l_foot
            0.10, 0.95, 0.00,   // r_hip
            0.10, 0.50, 0.00,   // r_knee
            0.10, 0.05, 0.00;   // r_foot
    return pose;
}

/// Eight desk-scale classes with distinct moving-joint sets and whole-body
/// signatures, so per-joint travel separates them cleanly.
inline SynthSpec default_synth_spec() {
    const Eigen::RowVector3d X = Eigen::RowVector3d::UnitX();
    const Eigen::RowVector3d Y = Eigen::RowVector3d::UnitY();
    const Eigen::RowVector3d Z = Eigen::RowVector3d::UnitZ();
    constexpr double kPi = 3.14159265358979323846;

    SynthSpec spec;
    spec.topology = default_synth_topology();
    spec.base_pose = default_synth_pose();

    SynthClassSpec wave_left{"wave_left",
                             {{6, Y, 0.30, 3.0, 0.0},
                              {6, X, 0.15, 3.0, kPi / 2},
                              {5, Y, 0.15, 3.0, 0.3}}};
    SynthClassSpec wave_right{"wave_right",
                              {{9, Y, 0.30, 3.0, 0.0},
                               {9, X, 0.15, 3.0, kPi / 2},
                               {8, Y, 0.15, 3.0, 0.3}}};
    SynthClassSpec walk{"walk",
                        {{12, Z, 0.25, 4.0, 0.0},
                         {15, Z, 0.25, 4.0, kPi},
                         {11, Z, 0.15, 4.0, 0.0},
                         {14, Z, 0.15, 4.0, kPi},
                         {6, Z, 0.10, 4.0, kPi},
                         {9, Z, 0.10, 4.0, 0.0}}};
    walk.drift = Eigen::RowVector3d(0.0, 0.0, 1.2);
    SynthClassSpec jump{"jump",
                        {{0, Y, 0.20, 3.0, 0.0, /*whole_body=*/true},
                         {11, Y, 0.10, 3.0, kPi},
                         {14, Y, 0.10, 3.0, kPi}}};
    SynthClassSpec squat{"squat",
                         {{0, Y, 0.18, 1.5, -kPi / 2, true},
                          {6, Z, 0.15, 1.5, 0.0},
                          {9, Z, 0.15, 1.5, 0.0},
                          {11, X, 0.08, 1.5, 0.0},
                          {14, X, 0.08, 1.5, kPi}}};
    SynthClassSpec punch_right{"punch_right",
                               {{9, Z, 0.45, 2.5, 0.0},
                                {8, Z, 0.25, 2.5, 0.4},
                                {7, Z, 0.10, 2.5, 0.6},
                                {0, Z, 0.06, 2.5, 0.8, true}}};
    SynthClassSpec kick_left{"kick_left",
                             {{12, Z, 0.40, 2.0, 0.0},
                              {11, Z, 0.22, 2.0, 0.5},
                              {0, X, 0.05, 2.0, 0.0, true}}};
    SynthClassSpec sway{"sway",
                        {{0, X, 0.25, 2.0, 0.0, true}, {3, X, 0.08, 2.0, kPi / 3}}};

    spec.classes = {wave_left, wave_right, walk, jump, squat, punch_right, kick_left, sway};
    return spec;
}

/// Generates `per_class` sequences for every class in the spec. Sequences
/// differ by seeded jitter; two runs with the same seed are identical.
inline std::vector<SkeletonSequence> synth_generate(const SynthSpec& spec, int per_class,
                                                    std::uint64_t seed) {
    if (spec.classes.empty()) throw ArgumentError("synth_generate: spec has no classes");
    if (per_class <= 0) throw ArgumentError("synth_generate: per-class count must be positive");
    spec.topology.validate();
    if (spec.base_pose.rows() != spec.topology.joint_count)
        throw ArgumentError("synth_generate: base pose does not match topology");
    if (spec.min_frames < 2 || spec.max_frames < spec.min_frames)
        throw ArgumentError("synth_generate: bad frame count range");

    const Eigen::RowVector3d base_root = spec.base_pose.row(spec.topology.root_joint);
    std::vector<SkeletonSequence> out;
    out.reserve(spec.classes.size() * static_cast<std::size_t>(per_class));

    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const auto& cls = spec.classes[c];
        for (int k = 0; k < per_class; ++k) {
            const int global_index = static_cast<int>(c) * per_class + k;
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(global_index)));

            const int n = rng.uniform_int(spec.min_frames, spec.max_frames);
            const int performer = global_index % std::max(1, spec.performers);
            const double performer_t =
                spec.performers > 1 ? static_cast<double>(performer) / (spec.performers - 1) : 0.5;
            const double scale = spec.scale_min + performer_t * (spec.scale_max - spec.scale_min);

            struct Drawn {
                double amplitude, cycles, phase;
            };
            std::vector<Drawn> drawn;
            drawn.reserve(cls.oscillators.size());
            for (const auto& osc : cls.oscillators)
                drawn.push_back({osc.amplitude * rng.uniform(1.0 - spec.amplitude_jitter,
                                                             1.0 + spec.amplitude_jitter),
                                 osc.cycles * rng.uniform(1.0 - spec.cycles_jitter,
                                                          1.0 + spec.cycles_jitter),
                                 osc.phase + rng.uniform(-spec.phase_jitter, spec.phase_jitter)});
            JointMatrix pose_offset = JointMatrix::Zero(spec.topology.joint_count, 3);
            if (spec.pose_jitter > 0.0)
                for (int j = 0; j < spec.topology.joint_count; ++j)
                    for (int a = 0; a < 3; ++a)
                        pose_offset(j, a) = rng.uniform(-spec.pose_jitter, spec.pose_jitter);

            SkeletonSequence seq;
            seq.id = cls.name + "_" + std::to_string(k);
            seq.topology = spec.topology;
            seq.fps = spec.fps;
            seq.class_label = static_cast<int>(c);
            seq.performer_id = "p" + std::to_string(performer);
            seq.frames.reserve(static_cast<std::size_t>(n));
            for (int t = 0; t < n; ++t) {
                const double u = n > 1 ? static_cast<double>(t) / (n - 1) : 0.0;
                JointMatrix frame = spec.base_pose + pose_offset;
                for (std::size_t o = 0; o < cls.oscillators.size(); ++o) {
                    const auto& osc = cls.oscillators[o];
                    const auto& d = drawn[o];
                    const double value =
                        d.amplitude * std::sin(2.0 * 3.14159265358979323846 * d.cycles * u + d.phase);
                    if (osc.whole_body)
                        frame.rowwise() += value * osc.axis;
                    else
                        frame.row(osc.joint) += value * osc.axis;
                }
                frame.rowwise() += u * cls.drift;
                // performer scale about the base root
                for (int j = 0; j < spec.topology.joint_count; ++j)
                    frame.row(j) = base_root + scale * (frame.row(j) - base_root);
                seq.frames.push_back(std::move(frame));
            }
            validate_sequence(seq);
            out.push_back(std::move(seq));
        }
    }
    return out;
}

}  // namespace deephums
