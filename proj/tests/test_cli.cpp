#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deephums/sequence_io.hpp"
#include "test_util.hpp"

// End-to-end exercises of the command-line binary (path injected by CMake).

using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CommandResult run_cli(const std::string& args, const fs::path& cwd) {
    const fs::path log = cwd / "cmd_output.txt";
    const std::string command = "cd '" + cwd.string() + "' && '" + DEEPHUMS_CLI_PATH + "' " +
                                args + " > '" + log.string() + "' 2>&1";
    const int raw = std::system(command.c_str());
    CommandResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    std::ostringstream out;
    out << in.rdbuf();
    result.output = out.str();
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("cli pipeline runs end to end and is reproducible", "[cli]") {
    TempDir dir("deephums_cli");
    const auto& root = dir.path();

    // synth -> ingest --normalize -> augment -> train -> index -> query -> evaluate
    auto synth = run_cli("synth --out raw --classes 3 --per-class 6 --seed 5 "
                         "--min-frames 15 --max-frames 30",
                         root);
    INFO(synth.output);
    REQUIRE(synth.exit_code == 0);
    REQUIRE(fs::exists(root / "raw" / "manifest.tsv"));
    REQUIRE(fs::exists(root / "raw" / "topology.txt"));
    REQUIRE(fs::exists(root / "raw" / "run.lock"));

    auto ingest = run_cli("ingest raw/manifest.tsv --out norm --normalize", root);
    INFO(ingest.output);
    REQUIRE(ingest.exit_code == 0);
    REQUIRE(fs::exists(root / "norm" / "bone_lengths.txt"));

    SECTION("ingest re-runs are byte-identical") {
        const auto first = slurp(root / "norm" / "manifest.tsv") +
                           slurp(root / "norm" / "wave_left_0.seq");
        auto again = run_cli("ingest raw/manifest.tsv --out norm --normalize", root);
        REQUIRE(again.exit_code == 0);
        const auto second = slurp(root / "norm" / "manifest.tsv") +
                            slurp(root / "norm" / "wave_left_0.seq");
        REQUIRE(first == second);
    }

    auto augment = run_cli("augment norm/manifest.tsv --out aug --dropout 0.2 --seed 3", root);
    INFO(augment.output);
    REQUIRE(augment.exit_code == 0);
    {
        // originals + fast + slow + noisy
        const auto manifest = deephums::load_manifest(root / "aug" / "manifest.tsv");
        REQUIRE(manifest.entries.size() == 18 * 4);
        std::size_t fast = 0, slow = 0, noisy = 0;
        for (const auto& e : manifest.entries) {
            if (e.provenance == "fast") ++fast;
            if (e.provenance == "slow") ++slow;
            if (e.provenance == "noisy") ++noisy;
        }
        REQUIRE(fast == 18);
        REQUIRE(slow == 18);
        REQUIRE(noisy == 18);
    }
    SECTION("speeds-only augmentation triples the manifest") {
        auto speeds = run_cli("augment norm/manifest.tsv --out aug_speeds", root);
        REQUIRE(speeds.exit_code == 0);
        REQUIRE(deephums::load_manifest(root / "aug_speeds" / "manifest.tsv").entries.size() ==
                18 * 3);
    }

    auto train = run_cli("train norm/manifest.tsv --regime supervised --out params.bin "
                         "--epochs 2 --batch-size 4 --hidden 12 --layers 1 --embedding 6 --seed 9",
                         root);
    INFO(train.output);
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(root / "params.bin"));
    REQUIRE(fs::exists(root / "params.bin.log.csv"));
    REQUIRE(fs::exists(root / "params.bin.run.lock"));

    SECTION("training refuses to overwrite without --force") {
        auto refuse = run_cli("train norm/manifest.tsv --regime supervised --out params.bin "
                              "--epochs 1 --hidden 12 --layers 1 --embedding 6",
                              root);
        REQUIRE(refuse.exit_code == 1);
        REQUIRE(refuse.output.find("ERROR:") != std::string::npos);
        auto forced = run_cli("train norm/manifest.tsv --regime supervised --out params.bin "
                              "--epochs 1 --batch-size 4 --hidden 12 --layers 1 --embedding 6 "
                              "--seed 9 --force",
                              root);
        REQUIRE(forced.exit_code == 0);
    }
    SECTION("supervised training on unlabeled data is a configuration error") {
        // strip labels from both the manifest and the sequence files
        const auto topo = deephums::load_topology(root / "norm" / "topology.txt");
        const auto manifest = deephums::load_manifest(root / "norm" / "manifest.tsv");
        fs::create_directories(root / "unlabeled");
        deephums::DatasetManifest unlabeled = manifest;
        for (auto& e : unlabeled.entries) {
            auto seq = deephums::load_sequence(root / "norm" / e.path, topo);
            seq.class_label.reset();
            deephums::save_sequence(root / "unlabeled" / e.path, seq);
            e.label.reset();
        }
        deephums::save_manifest(root / "unlabeled" / "manifest.tsv", unlabeled);
        deephums::save_topology(root / "unlabeled" / "topology.txt", topo);
        auto bad = run_cli("train unlabeled/manifest.tsv --regime supervised --out u.bin "
                           "--epochs 1",
                           root);
        REQUIRE(bad.exit_code == 1);
        REQUIRE(bad.output.find("ERROR:") != std::string::npos);
        auto ok = run_cli("train unlabeled/manifest.tsv --regime self --out u.bin --epochs 1 "
                          "--batch-size 4 --hidden 12 --layers 1 --embedding 6",
                          root);
        REQUIRE(ok.exit_code == 0);
    }
    SECTION("config files feed defaults and flags override them") {
        {
            std::ofstream cfg(root / "train.cfg");
            cfg << "regime=supervised\nmax_epochs=1\nhidden_size=12\nnum_layers=1\n"
                   "embedding_dim=6\nbatch_size=4\nseed=9\n";
        }
        auto from_cfg = run_cli("train norm/manifest.tsv --config train.cfg --out cfg.bin", root);
        REQUIRE(from_cfg.exit_code == 0);
        const auto lock = slurp(root / "cfg.bin.run.lock");
        REQUIRE(lock.find("regime=supervised") != std::string::npos);
        REQUIRE(lock.find("max_epochs=1") != std::string::npos);
        auto overridden =
            run_cli("train norm/manifest.tsv --config train.cfg --out cfg2.bin --epochs 2", root);
        REQUIRE(overridden.exit_code == 0);
        REQUIRE(slurp(root / "cfg2.bin.run.lock").find("max_epochs=2") != std::string::npos);
    }

    auto index = run_cli("index params.bin norm/manifest.tsv --split train --out index.bin", root);
    INFO(index.output);
    REQUIRE(index.exit_code == 0);

    SECTION("index rebuilds are byte-identical") {
        const auto first = slurp(root / "index.bin");
        auto again =
            run_cli("index params.bin norm/manifest.tsv --split train --out index.bin", root);
        REQUIRE(again.exit_code == 0);
        REQUIRE(slurp(root / "index.bin") == first);
    }

    auto query = run_cli("query index.bin params.bin norm/wave_left_0.seq "
                         "--topology norm/topology.txt -k 3",
                         root);
    INFO(query.output);
    REQUIRE(query.exit_code == 0);
    // self-retrieval at rank 1, distance 0
    REQUIRE(query.output.find("1  wave_left_0  0") != std::string::npos);
    REQUIRE(fs::exists(root / "query_results.csv"));

    SECTION("querying with parameters of a different width than the index fails") {
        auto other = run_cli("train norm/manifest.tsv --regime self --out wide.bin --epochs 1 "
                             "--batch-size 4 --hidden 12 --layers 1 --embedding 9",
                             root);
        REQUIRE(other.exit_code == 0);
        auto mismatch = run_cli("query index.bin wide.bin norm/wave_left_0.seq "
                                "--topology norm/topology.txt",
                                root);
        REQUIRE(mismatch.exit_code == 1);
        REQUIRE(mismatch.output.find("ERROR:") != std::string::npos);
    }
    SECTION("a malformed query file exits with a parse error") {
        std::ofstream bad(root / "broken.seq");
        bad << "#skeleton v1 joints=16 fps=30\n1 2 3\n";
        bad.close();
        auto broken = run_cli("query index.bin params.bin broken.seq "
                              "--topology norm/topology.txt",
                              root);
        REQUIRE(broken.exit_code == 1);
        REQUIRE(broken.output.find("ERROR:") != std::string::npos);
    }

    auto evaluate =
        run_cli("evaluate index.bin params.bin norm/manifest.tsv --out eval -n 5", root);
    INFO(evaluate.output);
    REQUIRE(evaluate.exit_code == 0);
    for (const char* name : {"report.csv", "pr_curve.csv", "summary.txt", "latency.txt",
                             "run.lock"})
        REQUIRE(fs::exists(root / "eval" / name));

    SECTION("evaluate re-runs give byte-identical primary outputs") {
        const auto first = slurp(root / "eval" / "report.csv") +
                           slurp(root / "eval" / "pr_curve.csv") +
                           slurp(root / "eval" / "summary.txt");
        auto again = run_cli("evaluate index.bin params.bin norm/manifest.tsv --out eval -n 5",
                             root);
        REQUIRE(again.exit_code == 0);
        const auto second = slurp(root / "eval" / "report.csv") +
                            slurp(root / "eval" / "pr_curve.csv") +
                            slurp(root / "eval" / "summary.txt");
        REQUIRE(first == second);
    }
    SECTION("evaluate with --threads matches single-threaded output") {
        auto threaded = run_cli(
            "evaluate index.bin params.bin norm/manifest.tsv --out eval_mt -n 5 --threads 2",
            root);
        REQUIRE(threaded.exit_code == 0);
        REQUIRE(slurp(root / "eval_mt" / "report.csv") == slurp(root / "eval" / "report.csv"));
    }

    auto sub_train = run_cli("submotion train --full-params params.bin norm/manifest.tsv "
                             "--out sub.bin --epochs 1 --batch-size 4 --fractions 0.5",
                             root);
    INFO(sub_train.output);
    REQUIRE(sub_train.exit_code == 0);
    REQUIRE(fs::exists(root / "sub.bin"));

    SECTION("submotion query returns parent candidates; full params are rejected") {
        // cut a window file out of an indexed sequence
        const auto topo = deephums::load_topology(root / "norm" / "topology.txt");
        auto parent = deephums::load_sequence(root / "norm" / "walk_1.seq", topo);
        deephums::SkeletonSequence window = parent;
        window.frames.assign(parent.frames.begin(), parent.frames.begin() + 15);
        deephums::save_sequence(root / "window.seq", window);

        auto sq = run_cli("submotion query index.bin --sub-params sub.bin window.seq "
                          "--topology norm/topology.txt -k 5",
                          root);
        INFO(sq.output);
        REQUIRE(sq.exit_code == 0);
        REQUIRE_FALSE(sq.output.empty());

        auto wrong = run_cli("submotion query index.bin --sub-params params.bin window.seq "
                             "--topology norm/topology.txt -k 5",
                             root);
        REQUIRE(wrong.exit_code == 1);
        auto wrong_full = run_cli("submotion train --full-params sub.bin norm/manifest.tsv "
                                  "--out sub2.bin --epochs 1",
                                  root);
        REQUIRE(wrong_full.exit_code == 1);
    }
}

TEST_CASE("cli usage errors", "[cli]") {
    TempDir dir("deephums_cli_err");
    SECTION("missing topology file") {
        std::ofstream manifest(dir.path() / "m.tsv");
        manifest << "a.seq\ta\t-\t-\ttrain\n";
        manifest.close();
        auto r = run_cli("ingest m.tsv --out out", dir.path());
        REQUIRE(r.exit_code == 1);
        REQUIRE(r.output.find("ERROR:") != std::string::npos);
    }
    SECTION("unknown subcommand") {
        auto r = run_cli("frobnicate", dir.path());
        REQUIRE(r.exit_code != 0);
    }
    SECTION("DEEPHUMS_SEED feeds the default seed") {
        const std::string cmd = "cd '" + dir.path().string() + "' && DEEPHUMS_SEED=421 '" +
                                DEEPHUMS_CLI_PATH +
                                "' synth --out seeded --classes 2 --per-class 2 "
                                "--min-frames 15 --max-frames 16 > /dev/null 2>&1";
        REQUIRE(std::system(cmd.c_str()) == 0);
        REQUIRE(slurp(dir.path() / "seeded" / "run.lock").find("seed=421") != std::string::npos);
    }
}
