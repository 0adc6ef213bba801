#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "deephums/augment.hpp"
#include "deephums/features.hpp"
#include "deephums/normalize.hpp"
#include "deephums/sequence_io.hpp"
#include "deephums/synth.hpp"
#include "test_util.hpp"

using namespace deephums;
using testutil::TempDir;
using testutil::chain_topology;
using testutil::random_dyadic_sequence;
using testutil::random_smooth_sequence;

namespace {

std::string sequence_text(int joints, const std::vector<std::string>& frame_lines,
                          const std::string& header_extra = "") {
    std::ostringstream out;
    out << "#skeleton v1 joints=" << joints << " fps=30" << header_extra << "\n";
    for (const auto& line : frame_lines) out << line << "\n";
    return out.str();
}

SkeletonSequence parse_text(const std::string& text, const SkeletonTopology& topo,
                            const std::string& id = "t") {
    std::istringstream in(text);
    return parse_sequence(in, "inline", topo, id);
}

}  // namespace

TEST_CASE("sequence files load and validate", "[motion_data]") {
    const auto topo25 = chain_topology(25);
    SECTION("well-formed two-frame file") {
        std::string zeros;
        for (int i = 0; i < 75; ++i) zeros += i ? " 0" : "0";
        std::string ones;
        for (int i = 0; i < 75; ++i) ones += i ? " 1" : "1";
        const auto seq = parse_text(sequence_text(25, {zeros, ones}), topo25);
        REQUIRE(seq.frame_count() == 2);
        REQUIRE(seq.joint_count() == 25);
        REQUIRE(seq.fps == 30.0);
        REQUIRE_FALSE(seq.missing_mask.has_value());
    }
    SECTION("frame with wrong joint count is rejected with its line number") {
        std::string zeros;
        for (int i = 0; i < 75; ++i) zeros += i ? " 0" : "0";
        std::string short_line;
        for (int i = 0; i < 72; ++i) short_line += i ? " 0" : "0";
        try {
            parse_text(sequence_text(25, {zeros, short_line}), topo25);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(std::string(e.what()).find(":3:") != std::string::npos);
        }
    }
    SECTION("header/topology joint mismatch") {
        std::string zeros;
        for (int i = 0; i < 72; ++i) zeros += i ? " 0" : "0";
        REQUIRE_THROWS_AS(parse_text(sequence_text(24, {zeros, zeros}), topo25), ValidationError);
    }
    SECTION("NaN coordinate without a missing flag is rejected") {
        const auto topo = chain_topology(2);
        REQUIRE_THROWS_AS(
            parse_text(sequence_text(2, {"nan nan nan 0 0 0", "0 0 0 0 0 0"}), topo),
            ValidationError);
    }
    SECTION("NaN coordinates with a #missing flag are filled and masked") {
        const auto topo = chain_topology(2);
        const std::string text = "#skeleton v1 joints=2 fps=30\n#missing 0:1\n"
                                 "1 2 3 nan nan nan\n1 2 3 4 5 6\n";
        const auto seq = parse_text(text, topo);
        REQUIRE(seq.missing_mask.has_value());
        REQUIRE(seq.missing_mask->at(0, 1));
        REQUIRE_FALSE(seq.missing_mask->at(1, 1));
        // filled with the current frame's root position (never observed before)
        REQUIRE(seq.frames[0].row(1) == seq.frames[0].row(0));
        REQUIRE(seq.frames[0].allFinite());
    }
    SECTION("missing entry out of range") {
        const auto topo = chain_topology(2);
        const std::string text = "#skeleton v1 joints=2 fps=30\n#missing 5:0\n"
                                 "0 0 0 0 0 0\n0 0 0 1 1 1\n";
        REQUIRE_THROWS_AS(parse_text(text, topo), ValidationError);
    }
    SECTION("one-frame files violate the minimum length") {
        const auto topo = chain_topology(2);
        REQUIRE_THROWS_AS(parse_text(sequence_text(2, {"0 0 0 1 1 1"}), topo), ValidationError);
    }
    SECTION("masked sequences round-trip with filled values plus #missing lines") {
        TempDir dir;
        Rng rng(91);
        const auto noisy = drop_joints(random_smooth_sequence(rng, 8, 7, "noisy"), 0.25, 4);
        save_sequence(dir.path() / "n.seq", noisy);
        const auto loaded = load_sequence(dir.path() / "n.seq", noisy.topology);
        REQUIRE(loaded.missing_mask.has_value());
        REQUIRE(*loaded.missing_mask == *noisy.missing_mask);
        for (int t = 0; t < noisy.frame_count(); ++t)
            REQUIRE(loaded.frames[static_cast<std::size_t>(t)] ==
                    noisy.frames[static_cast<std::size_t>(t)]);
        // the written file holds finite fill values, not nan tokens
        std::ifstream in(dir.path() / "n.seq");
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        REQUIRE(content.find("#missing") != std::string::npos);
        REQUIRE(content.find("nan") == std::string::npos);
    }
    SECTION("save/load round-trip preserves coordinates bit-exactly") {
        TempDir dir;
        Rng rng(17);
        auto seq = random_smooth_sequence(rng, 6, 9, "roundtrip");
        seq.class_label = 4;
        seq.performer_id = "p2";
        save_sequence(dir.path() / "s.seq", seq);
        const auto loaded = load_sequence(dir.path() / "s.seq", seq.topology);
        REQUIRE(loaded.frame_count() == seq.frame_count());
        for (int t = 0; t < seq.frame_count(); ++t)
            REQUIRE(loaded.frames[static_cast<std::size_t>(t)] ==
                    seq.frames[static_cast<std::size_t>(t)]);
        REQUIRE(loaded.class_label == 4);
        REQUIRE(loaded.performer_id == "p2");
        REQUIRE(loaded.id == "s");
    }
}

TEST_CASE("topology files and validation", "[motion_data]") {
    TempDir dir;
    SECTION("round-trip") {
        const auto topo = default_synth_topology();
        save_topology(dir.path() / "t.txt", topo);
        const auto loaded = load_topology(dir.path() / "t.txt");
        REQUIRE(loaded.joint_count == topo.joint_count);
        REQUIRE(loaded.root_joint == topo.root_joint);
        REQUIRE(loaded.bone_edges == topo.bone_edges);
    }
    SECTION("cycle is rejected") {
        SkeletonTopology bad;
        bad.joint_count = 3;
        bad.root_joint = 0;
        bad.bone_edges = {{1, 2}, {2, 1}};
        REQUIRE_THROWS_AS(bad.validate(), ValidationError);
    }
    SECTION("missing edge is rejected") {
        SkeletonTopology bad;
        bad.joint_count = 3;
        bad.root_joint = 0;
        bad.bone_edges = {{0, 1}};
        REQUIRE_THROWS_AS(bad.validate(), ValidationError);
    }
}

TEST_CASE("manifest files", "[motion_data]") {
    TempDir dir;
    DatasetManifest manifest;
    manifest.entries.push_back({"a.seq", "a", 0, std::string("p0"), "train", std::nullopt});
    manifest.entries.push_back({"b.seq", "b", std::nullopt, std::nullopt, "test",
                                std::string("fast")});
    save_manifest(dir.path() / "m.tsv", manifest);
    const auto loaded = load_manifest(dir.path() / "m.tsv");
    REQUIRE(loaded.entries.size() == 2);
    REQUIRE(loaded.entries[0].label == 0);
    REQUIRE(loaded.entries[1].label == std::nullopt);
    REQUIRE(loaded.entries[1].provenance == "fast");

    SECTION("duplicate ids rejected") {
        DatasetManifest dup = manifest;
        dup.entries.push_back({"c.seq", "a", std::nullopt, std::nullopt, "train", std::nullopt});
        REQUIRE_THROWS_AS(dup.validate(), ValidationError);
    }
    SECTION("unknown split rejected") {
        DatasetManifest bad = manifest;
        bad.entries[0].split = "holdout";
        REQUIRE_THROWS_AS(bad.validate(), ValidationError);
    }
}

TEST_CASE("bone length normalization", "[motion_data]") {
    const auto spec = default_synth_spec();
    auto sequences = synth_generate(spec, 2, 99);
    const auto canonical = compute_canonical_lengths(sequences);

    SECTION("every output bone hits its canonical length") {
        const auto norm = normalize_bone_lengths(sequences[0], canonical);
        for (const auto& frame : norm.frames)
            for (std::size_t b = 0; b < norm.topology.bone_edges.size(); ++b) {
                const auto& [p, c] = norm.topology.bone_edges[b];
                const double len = (frame.row(c) - frame.row(p)).norm();
                REQUIRE(len == Catch::Approx(canonical[b]).epsilon(1e-6));
            }
    }
    SECTION("root position and bone directions are preserved") {
        const auto& seq = sequences[1];
        const auto norm = normalize_bone_lengths(seq, canonical);
        for (int t = 0; t < seq.frame_count(); ++t) {
            const auto& src = seq.frames[static_cast<std::size_t>(t)];
            const auto& dst = norm.frames[static_cast<std::size_t>(t)];
            REQUIRE(dst.row(0) == src.row(0));
            for (const auto& [p, c] : seq.topology.bone_edges) {
                const Eigen::RowVector3d a = (src.row(c) - src.row(p)).normalized();
                const Eigen::RowVector3d b = (dst.row(c) - dst.row(p)).normalized();
                REQUIRE((a - b).norm() <= 1e-9);
            }
        }
    }
    SECTION("idempotence within 1e-6") {
        const auto once = normalize_bone_lengths(sequences[0], canonical);
        const auto twice = normalize_bone_lengths(once, canonical);
        for (int t = 0; t < once.frame_count(); ++t)
            REQUIRE((once.frames[static_cast<std::size_t>(t)] -
                     twice.frames[static_cast<std::size_t>(t)])
                        .cwiseAbs()
                        .maxCoeff() <= 1e-6);
    }
    SECTION("uniform performer scale is removed") {
        const auto& seq = sequences[0];
        for (double scale : {0.5, 0.8, 1.2, 2.0}) {
            SkeletonSequence scaled = seq;
            const Eigen::RowVector3d root = seq.frames[0].row(seq.topology.root_joint);
            for (auto& f : scaled.frames)
                for (int j = 0; j < f.rows(); ++j) f.row(j) = root + scale * (f.row(j) - root);
            const auto a = normalize_bone_lengths(seq, canonical);
            const auto b = normalize_bone_lengths(scaled, canonical);
            for (int t = 0; t < a.frame_count(); ++t) {
                // align roots before comparing; drift classes translate the root
                const Eigen::RowVector3d shift = b.frames[static_cast<std::size_t>(t)].row(0) -
                                                 a.frames[static_cast<std::size_t>(t)].row(0);
                JointMatrix bb = b.frames[static_cast<std::size_t>(t)];
                bb.rowwise() -= shift;
                REQUIRE((a.frames[static_cast<std::size_t>(t)] - bb).cwiseAbs().maxCoeff() <= 1e-6);
            }
        }
    }
    SECTION("identically posed performers at 0.8x and 1.2x normalize together") {
        const auto& seq = sequences[0];
        auto make_scaled = [&](double scale) {
            SkeletonSequence s = seq;
            const Eigen::RowVector3d root = seq.frames[0].row(0);
            for (auto& f : s.frames)
                for (int j = 0; j < f.rows(); ++j) f.row(j) = root + scale * (f.row(j) - root);
            return normalize_bone_lengths(s, canonical);
        };
        const auto a = make_scaled(0.8);
        const auto b = make_scaled(1.2);
        for (int t = 0; t < a.frame_count(); ++t) {
            const Eigen::RowVector3d shift = b.frames[static_cast<std::size_t>(t)].row(0) -
                                             a.frames[static_cast<std::size_t>(t)].row(0);
            JointMatrix bb = b.frames[static_cast<std::size_t>(t)];
            bb.rowwise() -= shift;
            REQUIRE((a.frames[static_cast<std::size_t>(t)] - bb).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
    SECTION("zero-length bone names the offender") {
        auto seq = sequences[0];
        for (auto& f : seq.frames) f.row(1) = f.row(0);
        try {
            normalize_bone_lengths(seq, canonical);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            REQUIRE(std::string(e.what()).find("0->1") != std::string::npos);
        }
    }
    SECTION("missing joints must be handled before normalization") {
        auto seq = drop_joints(sequences[0], 0.2, 5);
        REQUIRE_THROWS_AS(normalize_bone_lengths(seq, canonical), ValidationError);
    }
}

TEST_CASE("speed augmentation", "[motion_data]") {
    Rng rng(12);
    SECTION("speed_double keeps frames 0, 2, 4, ...") {
        const auto s = random_dyadic_sequence(rng, 4, 4, "s");
        const auto fast = speed_double(s);
        REQUIRE(fast.frame_count() == 2);
        REQUIRE(fast.frames[0] == s.frames[0]);
        REQUIRE(fast.frames[1] == s.frames[2]);
        REQUIRE(fast.id == "s_fast");
    }
    SECTION("odd length keeps the final frame") {
        const auto s = random_dyadic_sequence(rng, 4, 5, "s");
        const auto fast = speed_double(s);
        REQUIRE(fast.frame_count() == 3);
        REQUIRE(fast.frames[2] == s.frames[4]);
    }
    SECTION("too-short input is rejected") {
        const auto s = random_dyadic_sequence(rng, 4, 2, "s");
        REQUIRE_THROWS_AS(speed_double(s), ArgumentError);
    }
    SECTION("speed_half inserts exact midpoints") {
        SkeletonSequence s;
        s.id = "two";
        s.topology = chain_topology(2);
        s.fps = 30;
        JointMatrix f0 = JointMatrix::Zero(2, 3), f1 = JointMatrix::Zero(2, 3);
        f1(1, 0) = 1.0;
        s.frames = {f0, f1};
        const auto slow = speed_half(s);
        REQUIRE(slow.frame_count() == 3);
        REQUIRE(slow.frames[1](1, 0) == 0.5);
        REQUIRE(slow.id == "two_slow");
    }
    SECTION("2N-1 length contract") {
        const auto s = random_dyadic_sequence(rng, 3, 10, "s");
        REQUIRE(speed_half(s).frame_count() == 19);
    }
    SECTION("half then double recovers the original frames bit-exactly") {
        for (int n : {2, 3, 4, 7, 10, 11}) {
            const auto s = random_smooth_sequence(rng, 5, n, "s");
            const auto rebuilt = speed_double(speed_half(s));
            REQUIRE(rebuilt.frame_count() == s.frame_count());
            for (int t = 0; t < n; ++t)
                REQUIRE(rebuilt.frames[static_cast<std::size_t>(t)] ==
                        s.frames[static_cast<std::size_t>(t)]);
        }
    }
    SECTION("static content stays static") {
        auto s = random_dyadic_sequence(rng, 3, 1, "s");
        for (int t = 1; t < 8; ++t) s.frames.push_back(s.frames.front());
        const auto fast = speed_double(s);
        for (const auto& f : fast.frames) REQUIRE(f == s.frames.front());
    }
    SECTION("metadata is preserved") {
        auto s = random_dyadic_sequence(rng, 3, 6, "s");
        s.class_label = 2;
        s.performer_id = "p1";
        for (const auto& v : {speed_double(s), speed_half(s)}) {
            REQUIRE(v.class_label == 2);
            REQUIRE(v.performer_id == "p1");
            REQUIRE(v.topology.bone_edges == s.topology.bone_edges);
        }
    }
}

TEST_CASE("joint dropout", "[motion_data]") {
    Rng rng(33);
    const auto s = random_smooth_sequence(rng, 25, 12, "s");
    SECTION("20% of 25 joints masks exactly 5 in every frame") {
        const auto noisy = drop_joints(s, 0.2, 7);
        REQUIRE(noisy.missing_mask.has_value());
        for (int t = 0; t < noisy.frame_count(); ++t) {
            int masked = 0;
            for (int j = 0; j < 25; ++j) masked += noisy.missing_mask->at(t, j) ? 1 : 0;
            REQUIRE(masked == 5);
        }
        for (int j = 0; j < 25; ++j)
            for (int t = 1; t < noisy.frame_count(); ++t)
                REQUIRE(noisy.missing_mask->at(t, j) == noisy.missing_mask->at(0, j));
    }
    SECTION("deterministic per seed") {
        const auto a = drop_joints(s, 0.2, 99);
        const auto b = drop_joints(s, 0.2, 99);
        for (int t = 0; t < a.frame_count(); ++t)
            REQUIRE(a.frames[static_cast<std::size_t>(t)] == b.frames[static_cast<std::size_t>(t)]);
        REQUIRE(*a.missing_mask == *b.missing_mask);
        const auto c = drop_joints(s, 0.2, 100);
        REQUIRE_FALSE(*a.missing_mask == *c.missing_mask);
    }
    SECTION("small fraction still masks one joint") {
        const auto noisy = drop_joints(s, 0.04, 3);
        REQUIRE(noisy.missing_mask->count() ==
                static_cast<std::size_t>(noisy.frame_count()));
    }
    SECTION("shape and metadata are untouched") {
        const auto noisy = drop_joints(s, 0.2, 1);
        REQUIRE(noisy.frame_count() == s.frame_count());
        REQUIRE(noisy.joint_count() == s.joint_count());
        REQUIRE(noisy.id == s.id);
    }
    SECTION("masked joints hold still (fill policy)") {
        const auto noisy = drop_joints(s, 0.2, 42);
        const auto md = motion_distance_profile(noisy).distances;
        for (int j = 0; j < 25; ++j)
            if (noisy.missing_mask->at(0, j)) REQUIRE(md[j] == 0.0);
    }
    SECTION("bad fractions") {
        REQUIRE_THROWS_AS(drop_joints(s, 0.0, 1), ArgumentError);
        REQUIRE_THROWS_AS(drop_joints(s, 1.0, 1), ArgumentError);
        REQUIRE_THROWS_AS(drop_joints(s, 0.01, 1), ArgumentError);
    }
}

TEST_CASE("synthetic generator", "[motion_data]") {
    auto spec = default_synth_spec();
    spec.min_frames = 15;
    spec.max_frames = 40;
    SECTION("cardinality and labels") {
        const auto seqs = synth_generate(spec, 5, 7);
        REQUIRE(seqs.size() == 40);
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            REQUIRE(seqs[i].class_label == static_cast<int>(i / 5));
            REQUIRE(seqs[i].frame_count() >= 15);
            REQUIRE(seqs[i].frame_count() <= 40);
        }
    }
    SECTION("determinism and seed sensitivity") {
        const auto a = synth_generate(spec, 2, 7);
        const auto b = synth_generate(spec, 2, 7);
        const auto c = synth_generate(spec, 2, 8);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].frame_count() == b[i].frame_count());
            for (int t = 0; t < a[i].frame_count(); ++t)
                REQUIRE(a[i].frames[static_cast<std::size_t>(t)] ==
                        b[i].frames[static_cast<std::size_t>(t)]);
        }
        bool any_difference = false;
        for (std::size_t i = 0; i < a.size() && !any_difference; ++i)
            any_difference = a[i].frame_count() != c[i].frame_count() ||
                             a[i].frames[0] != c[i].frames[0];
        REQUIRE(any_difference);
    }
    SECTION("zero jitter collapses a class to identical sequences") {
        spec.amplitude_jitter = 0.0;
        spec.cycles_jitter = 0.0;
        spec.phase_jitter = 0.0;
        spec.pose_jitter = 0.0;
        spec.scale_min = spec.scale_max = 1.0;
        spec.min_frames = spec.max_frames = 20;
        const auto seqs = synth_generate(spec, 3, 1);
        for (int k = 1; k < 3; ++k)
            for (int t = 0; t < 20; ++t)
                REQUIRE(seqs[static_cast<std::size_t>(k)].frames[static_cast<std::size_t>(t)] ==
                        seqs[0].frames[static_cast<std::size_t>(t)]);
    }
    SECTION("empty spec is rejected") {
        SynthSpec empty = spec;
        empty.classes.clear();
        REQUIRE_THROWS_AS(synth_generate(empty, 3, 1), ArgumentError);
    }
}

TEST_CASE("dataset loading resolves manifests", "[motion_data]") {
    TempDir dir;
    auto spec = default_synth_spec();
    spec.min_frames = 15;
    spec.max_frames = 25;
    const auto seqs = synth_generate(spec, 2, 3);
    DatasetManifest manifest;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        save_sequence(dir.path() / (seqs[i].id + ".seq"), seqs[i]);
        manifest.entries.push_back({seqs[i].id + ".seq", seqs[i].id, seqs[i].class_label,
                                    seqs[i].performer_id, i % 4 == 0 ? "test" : "train",
                                    std::nullopt});
    }
    save_manifest(dir.path() / "manifest.tsv", manifest);
    const auto ds = load_dataset(load_manifest(dir.path() / "manifest.tsv"), dir.path(),
                                 spec.topology);
    REQUIRE(ds.sequences.size() == seqs.size());
    REQUIRE(ds.split_indices("test").size() == 4);
    REQUIRE(ds.split_indices("train").size() == 12);
    REQUIRE(ds.id_to_index.at(seqs[3].id) == 3);
}
