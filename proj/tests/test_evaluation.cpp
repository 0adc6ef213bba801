#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "deephums/augment.hpp"
#include "deephums/evaluation.hpp"
#include "test_util.hpp"

using namespace deephums;
using testutil::TempDir;
using testutil::chain_topology;
using testutil::random_smooth_sequence;

namespace {

// Same local-cost definition as the implementation, written out explicitly;
// the enumeration below is what independently checks the DP optimization.
double oracle_mean_joint_distance(const JointMatrix& a, const JointMatrix& b) {
    double sum = 0.0;
    for (int j = 0; j < a.rows(); ++j) {
        const double dx = a(j, 0) - b(j, 0);
        const double dy = a(j, 1) - b(j, 1);
        const double dz = a(j, 2) - b(j, 2);
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return sum / static_cast<double>(a.rows());
}

struct OraclePath {
    double cost = std::numeric_limits<double>::infinity();
    long length = 0;
};

/// Exhaustive enumeration of every monotone alignment path, accumulating
/// cost in path order and minimizing (cost, length) lexicographically.
void enumerate_paths(const std::vector<JointMatrix>& a, const std::vector<JointMatrix>& b, int i,
                     int j, double cost, long length, OraclePath& best) {
    cost += oracle_mean_joint_distance(a[static_cast<std::size_t>(i)],
                                       b[static_cast<std::size_t>(j)]);
    ++length;
    const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
    if (i == na - 1 && j == nb - 1) {
        if (cost < best.cost || (cost == best.cost && length < best.length)) {
            best.cost = cost;
            best.length = length;
        }
        return;
    }
    if (i + 1 < na) enumerate_paths(a, b, i + 1, j, cost, length, best);
    if (j + 1 < nb) enumerate_paths(a, b, i, j + 1, cost, length, best);
    if (i + 1 < na && j + 1 < nb) enumerate_paths(a, b, i + 1, j + 1, cost, length, best);
}

double oracle_dtw_mm(const std::vector<JointMatrix>& a, const std::vector<JointMatrix>& b) {
    // same length-equalization rule as the implementation, then independent search
    const std::vector<JointMatrix>* pa = &a;
    const std::vector<JointMatrix>* pb = &b;
    std::vector<JointMatrix> resampled;
    if (a.size() != b.size()) {
        const int target = static_cast<int>(std::max(a.size(), b.size()));
        if (a.size() < b.size()) {
            resampled = detail::resample_frames(a, target);
            pa = &resampled;
        } else {
            resampled = detail::resample_frames(b, target);
            pb = &resampled;
        }
    }
    OraclePath best;
    enumerate_paths(*pa, *pb, 0, 0, 0.0, 0, best);
    return 1000.0 * (best.cost / static_cast<double>(best.length));
}

std::vector<JointMatrix> random_frames(Rng& rng, int joints, int n) {
    std::vector<JointMatrix> frames;
    for (int t = 0; t < n; ++t) {
        JointMatrix f(joints, 3);
        for (int j = 0; j < joints; ++j)
            for (int k = 0; k < 3; ++k) f(j, k) = rng.uniform(-1.0, 1.0);
        frames.push_back(std::move(f));
    }
    return frames;
}

MotionSignature make_sig(std::initializer_list<float> values) {
    MotionSignature sig(static_cast<int>(values.size()));
    int i = 0;
    for (float v : values) sig[i++] = v;
    return sig;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("dtw matches exhaustive path enumeration", "[evaluation]") {
    Rng rng(2025);
    for (int trial = 0; trial < 50; ++trial) {
        const int joints = rng.uniform_int(1, 5);
        const auto a = random_frames(rng, joints, rng.uniform_int(1, 6));
        const auto b = random_frames(rng, joints, rng.uniform_int(1, 6));
        REQUIRE(dtw_distance(a, b) == oracle_dtw_mm(a, b));
    }
}

TEST_CASE("dtw closed forms and identities", "[evaluation]") {
    Rng rng(4);
    SECTION("identical sequences cost nothing") {
        const auto s = random_smooth_sequence(rng, 5, 20);
        REQUIRE(dtw_distance(s, s) == 0.0);
    }
    SECTION("single-cell alignment reads the joint offset in millimeters") {
        std::vector<JointMatrix> a(1, JointMatrix::Zero(1, 3));
        std::vector<JointMatrix> b(1, JointMatrix::Zero(1, 3));
        b[0](0, 0) = 0.01;  // 10 mm
        REQUIRE(dtw_distance(a, b) == Catch::Approx(10.0).margin(1e-9));
    }
    SECTION("slowed-down copies align at zero cost") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto s = random_smooth_sequence(rng, 4, rng.uniform_int(2, 40));
            REQUIRE(dtw_distance(s, speed_half(s)) <= 1e-6);
        }
    }
    SECTION("symmetric in its arguments") {
        for (int trial = 0; trial < 10; ++trial) {
            const auto a = random_frames(rng, 3, rng.uniform_int(2, 12));
            const auto b = random_frames(rng, 3, rng.uniform_int(2, 12));
            REQUIRE(dtw_distance(a, b) == dtw_distance(b, a));
        }
    }
    SECTION("uniform translation of a static pair reads back the shift") {
        const Eigen::RowVector3d v(0.003, -0.004, 0.012);  // 13 mm
        std::vector<JointMatrix> a(6, JointMatrix::Zero(1, 3));
        std::vector<JointMatrix> b(9, JointMatrix::Zero(1, 3));
        for (auto& f : b) f.row(0) = v;
        REQUIRE(dtw_distance(a, b) == Catch::Approx(1000.0 * v.norm()).margin(1e-9));
    }
    SECTION("non-negative on random pairs") {
        const auto a = random_frames(rng, 4, 15);
        const auto b = random_frames(rng, 4, 22);
        REQUIRE(dtw_distance(a, b) >= 0.0);
    }
    SECTION("joint count mismatch is rejected") {
        const auto a = random_frames(rng, 3, 5);
        const auto b = random_frames(rng, 4, 5);
        REQUIRE_THROWS_AS(dtw_distance(a, b), ArgumentError);
    }
    SECTION("a generous band reproduces the unconstrained value") {
        const auto a = random_frames(rng, 3, 10);
        const auto b = random_frames(rng, 3, 14);
        DtwOptions wide;
        wide.band = 20;
        REQUIRE(dtw_distance(a, b, wide) == dtw_distance(a, b));
    }
}

TEST_CASE("top-n accuracy", "[evaluation]") {
    MotionSignature base = make_sig({0.f, 0.f});
    SECTION("single-class index scores 1 for any n") {
        EmbeddingIndex index(2);
        for (int i = 0; i < 6; ++i)
            index.add({"e" + std::to_string(i), 3, make_sig({static_cast<float>(i), 1.f})});
        std::vector<LabeledQuery> queries{{"q", 3, base}};
        for (int n : {1, 3, 6}) REQUIRE(topn_accuracy(index, queries, n) == 1.0);
    }
    SECTION("absent query class scores 0") {
        EmbeddingIndex index(2);
        for (int i = 0; i < 4; ++i)
            index.add({"e" + std::to_string(i), i % 2, make_sig({static_cast<float>(i), 0.f})});
        std::vector<LabeledQuery> queries{{"q", 9, base}};
        REQUIRE(topn_accuracy(index, queries, 2) == 0.0);
    }
    SECTION("insertion order does not matter") {
        std::vector<std::pair<std::string, int>> items = {{"a", 0}, {"b", 1}, {"c", 0}, {"d", 1}};
        EmbeddingIndex forward(2), backward(2);
        Rng rng(5);
        std::vector<MotionSignature> sigs;
        for (std::size_t i = 0; i < items.size(); ++i)
            sigs.push_back(make_sig({static_cast<float>(rng.uniform(-1, 1)),
                                     static_cast<float>(rng.uniform(-1, 1))}));
        for (std::size_t i = 0; i < items.size(); ++i)
            forward.add({items[i].first, items[i].second, sigs[i]});
        for (std::size_t i = items.size(); i-- > 0;)
            backward.add({items[i].first, items[i].second, sigs[i]});
        std::vector<LabeledQuery> queries{{"q", 0, base}, {"r", 1, make_sig({1.f, 1.f})}};
        REQUIRE(topn_accuracy(forward, queries, 2) == topn_accuracy(backward, queries, 2));
    }
    SECTION("unlabeled index entries are a metric error") {
        EmbeddingIndex index(2);
        index.add({"a", std::nullopt, base});
        std::vector<LabeledQuery> queries{{"q", 0, base}};
        REQUIRE_THROWS_AS(topn_accuracy(index, queries, 1), ValidationError);
    }
}

TEST_CASE("precision-recall curves", "[evaluation]") {
    SECTION("perfect embedding pins precision at 1 until full recall") {
        EmbeddingIndex index(1);
        for (int i = 0; i < 5; ++i)
            index.add({"pos" + std::to_string(i), 1, make_sig({static_cast<float>(i) * 0.01f})});
        for (int i = 0; i < 5; ++i)
            index.add({"neg" + std::to_string(i), 0, make_sig({10.f + static_cast<float>(i)})});
        std::vector<LabeledQuery> queries{{"q", 1, make_sig({0.f})}};
        const auto curve = pr_curve(index, queries);
        REQUIRE(curve.points.size() == 10);
        for (std::size_t c = 0; c < 5; ++c) REQUIRE(curve.points[c].precision == 1.0);
        REQUIRE(curve.points[4].recall == 1.0);
        REQUIRE(curve.points.back().recall == 1.0);
        // recall never decreases, everything inside the unit square
        for (std::size_t c = 1; c < curve.points.size(); ++c)
            REQUIRE(curve.points[c].recall >= curve.points[c - 1].recall);
        for (const auto& p : curve.points) {
            REQUIRE(p.precision >= 0.0);
            REQUIRE(p.precision <= 1.0);
            REQUIRE(p.recall >= 0.0);
            REQUIRE(p.recall <= 1.0);
        }
    }
    SECTION("random embeddings track the class prior") {
        Rng rng(808);
        const double prior = 0.3;
        EmbeddingIndex index(8);
        for (int i = 0; i < 400; ++i) {
            MotionSignature sig(8);
            for (int k = 0; k < 8; ++k) sig[k] = static_cast<float>(rng.uniform(-1, 1));
            index.add({"e" + std::to_string(i), i < 120 ? 1 : 0, sig});
        }
        std::vector<LabeledQuery> queries;
        for (int i = 0; i < 50; ++i) {
            MotionSignature sig(8);
            for (int k = 0; k < 8; ++k) sig[k] = static_cast<float>(rng.uniform(-1, 1));
            queries.push_back({"q" + std::to_string(i), 1, sig});
        }
        const auto curve = pr_curve(index, queries);
        // precision pooled over 50 queries x 40 ranks has standard error ~0.01
        REQUIRE(curve.points[39].precision == Catch::Approx(prior).margin(0.05));
        REQUIRE(curve.points.back().precision == Catch::Approx(prior).margin(0.01));
    }
    SECTION("precision at cutoff one equals top-1 accuracy") {
        Rng rng(11);
        EmbeddingIndex index(4);
        for (int i = 0; i < 30; ++i) {
            MotionSignature sig(4);
            for (int k = 0; k < 4; ++k) sig[k] = static_cast<float>(rng.uniform(-1, 1));
            index.add({"e" + std::to_string(i), i % 3, sig});
        }
        std::vector<LabeledQuery> queries;
        for (int i = 0; i < 20; ++i) {
            MotionSignature sig(4);
            for (int k = 0; k < 4; ++k) sig[k] = static_cast<float>(rng.uniform(-1, 1));
            queries.push_back({"q" + std::to_string(i), i % 3, sig});
        }
        const auto curve = pr_curve(index, queries);
        REQUIRE(curve.points.front().precision ==
                Catch::Approx(topn_accuracy(index, queries, 1)).margin(1e-12));
    }
}

TEST_CASE("retrieval report and emission", "[evaluation]") {
    TempDir dir;
    Rng rng(55);
    // small labeled corpus with resolvable sequences for the DTW column
    std::vector<SkeletonSequence> corpus;
    EmbeddingIndex index(3);
    for (int i = 0; i < 9; ++i) {
        auto s = random_smooth_sequence(rng, 4, 12 + i, "s" + std::to_string(i));
        s.class_label = i % 3;
        corpus.push_back(s);
        MotionSignature sig(3);
        for (int k = 0; k < 3; ++k)
            sig[k] = static_cast<float>(i % 3) + 0.1f * static_cast<float>(rng.uniform(-1, 1));
        index.add({s.id, s.class_label, sig});
    }
    auto resolve = [&](const std::string& id) -> const SkeletonSequence* {
        for (const auto& s : corpus)
            if (s.id == id) return &s;
        return nullptr;
    };
    std::vector<LabeledQuery> queries;
    for (int i = 0; i < 9; i += 3) {
        LabeledQuery q;
        q.id = corpus[static_cast<std::size_t>(i)].id;
        q.label = *corpus[static_cast<std::size_t>(i)].class_label;
        q.signature = index.entries()[static_cast<std::size_t>(0)].signature;
        for (const auto& e : index.entries())
            if (e.id == q.id) q.signature = e.signature;
        queries.push_back(q);
    }

    const auto report = build_retrieval_report(index, queries, resolve, 3, /*exclude_self=*/true);
    const auto curve = pr_curve(index, queries, true);

    SECTION("aggregates equal recomputation from the rows") {
        double top1 = 0.0, topn = 0.0;
        for (const auto& row : report.rows) {
            top1 += row.top1_correct ? 1.0 : 0.0;
            topn += row.topn_fraction;
        }
        REQUIRE(report.top1 ==
                Catch::Approx(top1 / static_cast<double>(report.rows.size())).margin(1e-12));
        REQUIRE(report.topn ==
                Catch::Approx(topn / static_cast<double>(report.rows.size())).margin(1e-12));
        for (const auto& row : report.rows) REQUIRE(std::isfinite(row.mean_dtw_mm));
    }
    SECTION("emission is deterministic and parseable") {
        emit_report(report, curve, dir.path());
        const auto first = slurp(dir.path() / "report.csv") + slurp(dir.path() / "pr_curve.csv") +
                           slurp(dir.path() / "summary.txt");
        emit_report(report, curve, dir.path());
        const auto second = slurp(dir.path() / "report.csv") + slurp(dir.path() / "pr_curve.csv") +
                            slurp(dir.path() / "summary.txt");
        REQUIRE(first == second);
        REQUIRE(first.find("query_id") != std::string::npos);
        REQUIRE(first.find("recall,precision") != std::string::npos);
        REQUIRE(first.find("top1_accuracy=") != std::string::npos);
    }
    SECTION("empty query set emits header-only files") {
        RetrievalReport empty;
        empty.n = 10;
        emit_report(empty, PRCurve{}, dir.path());
        REQUIRE(slurp(dir.path() / "report.csv") ==
                "query_id,retrieved_ids,top1_correct,top10_fraction,mean_dtw_mm\n");
        REQUIRE(slurp(dir.path() / "pr_curve.csv") == "recall,precision\n");
    }
}
