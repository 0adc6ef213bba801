// deephums - motion signature toolkit for 3D skeletal sequences.
//
// Subcommands cover the whole pipeline: synthesize or ingest data, augment,
// train the Siamese encoder, build and query the signature index, evaluate
// retrieval quality, and run sub-motion search. Every run writes a run.lock
// snapshot of its fully resolved configuration next to its primary output.
//
// Exit codes: 0 success, 1 validation/configuration/usage error,
// 2 runtime or numerical failure. Errors print as "ERROR: ..." on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <thread>

#include "deephums/deephums.hpp"

using namespace deephums;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// resolved-run bookkeeping
// ---------------------------------------------------------------------------

struct RunConfig {
    std::map<std::string, std::string> values;

    void set(const std::string& key, const std::string& value) { values[key] = value; }
    void set(const std::string& key, double value) { values[key] = detail::format_double(value); }
    void set(const std::string& key, std::int64_t value) { values[key] = std::to_string(value); }

    void write_lock(const fs::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write run lock: " + path.string());
        for (const auto& [k, v] : values) out << k << "=" << v << "\n";
    }
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("DEEPHUMS_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config file " + path.string() + ": expected key=value, got '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

fs::path default_topology_path(const fs::path& manifest) {
    return manifest.parent_path() / "topology.txt";
}

void refuse_overwrite(const fs::path& out, bool force) {
    if (!force && fs::exists(out))
        throw ConfigError(out.string() + " already exists; pass --force to overwrite");
}

// ---------------------------------------------------------------------------
// shared option bundles
// ---------------------------------------------------------------------------

struct TrainCliOptions {
    std::string config_path;
    std::string regime = "self";
    int batch_size = 8;
    double learning_rate = 1e-3;
    int max_epochs = 50;
    std::uint64_t seed = default_seed();
    double margin = 1.0;
    double contrastive_weight = 1.0;
    double classification_weight = -1.0;  // negative: by regime
    int patience = 10;
    double validation_fraction = 0.10;
    double tau_sim_pct = 10.0;
    double tau_dis_pct = 50.0;
    int hidden = 256;
    int layers = 2;
    int embedding = 512;
    std::string cell = "gru";
    std::string readout = "final";
    bool use_mask = false;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file (flags override it)");
        cmd->add_option("--regime", regime, "training regime: supervised or self")
            ->check(CLI::IsMember({"supervised", "self"}));
        cmd->add_option("--batch-size", batch_size);
        cmd->add_option("--lr", learning_rate, "learning rate");
        cmd->add_option("--epochs", max_epochs, "maximum training epochs");
        cmd->add_option("--seed", seed, "random seed (default: DEEPHUMS_SEED or 0)");
        cmd->add_option("--margin", margin, "contrastive margin");
        cmd->add_option("--contrastive-weight", contrastive_weight);
        cmd->add_option("--classification-weight", classification_weight,
                        "negative selects the regime default (supervised 1, self 0)");
        cmd->add_option("--patience", patience, "early-stopping patience in epochs");
        cmd->add_option("--validation-fraction", validation_fraction);
        cmd->add_option("--tau-sim-pct", tau_sim_pct, "similar-threshold percentile");
        cmd->add_option("--tau-dis-pct", tau_dis_pct, "dissimilar-threshold percentile");
        cmd->add_option("--hidden", hidden, "recurrent hidden size");
        cmd->add_option("--layers", layers, "recurrent layer count");
        cmd->add_option("--embedding", embedding, "signature dimension");
        cmd->add_option("--cell", cell)->check(CLI::IsMember({"gru", "tanh"}));
        cmd->add_option("--readout", readout)->check(CLI::IsMember({"final", "mean"}));
        cmd->add_flag("--mask", use_mask, "append missing-joint mask bits to encoder input");
    }

    /// Config file values fill in everything the command line left untouched.
    void apply_config_file(const CLI::App* cmd) {
        if (config_path.empty()) return;
        const auto kv = read_config_file(config_path);
        auto pull = [&](const char* flag, const char* key, auto& target) {
            const auto it = kv.find(key);
            if (it == kv.end() || cmd->count(flag) > 0) return;
            std::istringstream in(it->second);
            in >> target;
            if (in.fail()) throw ConfigError("config: bad value for " + std::string(key));
        };
        pull("--regime", "regime", regime);
        pull("--batch-size", "batch_size", batch_size);
        pull("--lr", "learning_rate", learning_rate);
        pull("--epochs", "max_epochs", max_epochs);
        pull("--seed", "seed", seed);
        pull("--margin", "margin", margin);
        pull("--contrastive-weight", "contrastive_weight", contrastive_weight);
        pull("--classification-weight", "classification_weight", classification_weight);
        pull("--patience", "patience", patience);
        pull("--validation-fraction", "validation_fraction", validation_fraction);
        pull("--tau-sim-pct", "tau_sim_percentile", tau_sim_pct);
        pull("--tau-dis-pct", "tau_dis_percentile", tau_dis_pct);
        pull("--hidden", "hidden_size", hidden);
        pull("--layers", "num_layers", layers);
        pull("--embedding", "embedding_dim", embedding);
        pull("--cell", "cell", cell);
        pull("--readout", "readout", readout);
        if (kv.count("use_mask") && cmd->count("--mask") == 0)
            use_mask = kv.at("use_mask") == "1" || kv.at("use_mask") == "true";
    }

    TrainConfig train_config() const {
        TrainConfig tc;
        tc.regime = regime_from_string(regime);
        tc.batch_size = batch_size;
        tc.learning_rate = learning_rate;
        tc.max_epochs = max_epochs;
        tc.seed = seed;
        tc.margin = margin;
        tc.contrastive_weight = contrastive_weight;
        if (classification_weight >= 0.0) tc.classification_weight = classification_weight;
        tc.patience = patience;
        tc.validation_fraction = validation_fraction;
        tc.tau_sim_percentile = tau_sim_pct;
        tc.tau_dis_percentile = tau_dis_pct;
        return tc;
    }

    EncoderConfig encoder_config(int joints, std::optional<int> class_count) const {
        EncoderConfig ec;
        ec.input_width = encoder_input_width(joints, use_mask);
        ec.hidden_size = hidden;
        ec.num_layers = layers;
        ec.embedding_dim = embedding;
        ec.class_count = class_count;
        ec.cell = cell_from_string(cell);
        ec.readout = readout_from_string(readout);
        return ec;
    }

    void record(RunConfig& run) const {
        run.set("regime", regime);
        run.set("batch_size", std::int64_t{batch_size});
        run.set("learning_rate", learning_rate);
        run.set("max_epochs", std::int64_t{max_epochs});
        run.set("seed", static_cast<std::int64_t>(seed));
        run.set("margin", margin);
        run.set("contrastive_weight", contrastive_weight);
        run.set("classification_weight", classification_weight);
        run.set("patience", std::int64_t{patience});
        run.set("validation_fraction", validation_fraction);
        run.set("tau_sim_percentile", tau_sim_pct);
        run.set("tau_dis_percentile", tau_dis_pct);
        run.set("hidden_size", std::int64_t{hidden});
        run.set("num_layers", std::int64_t{layers});
        run.set("embedding_dim", std::int64_t{embedding});
        run.set("cell", cell);
        run.set("readout", readout);
        run.set("use_mask", std::int64_t{use_mask ? 1 : 0});
    }
};

Dataset load_dataset_cli(const fs::path& manifest_path, const fs::path& topology_path) {
    const auto manifest = load_manifest(manifest_path);
    const auto topology = load_topology(topology_path);
    return load_dataset(manifest, manifest_path.parent_path(), topology);
}

bool params_use_mask(const EncoderParams<float>& params, int joints) {
    if (params.config().input_width == encoder_input_width(joints, false)) return false;
    if (params.config().input_width == encoder_input_width(joints, true)) return true;
    throw ConfigError("parameter file does not match the dataset topology (input width " +
                      std::to_string(params.config().input_width) + ", joints " +
                      std::to_string(joints) + ")");
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

int cmd_synth(const fs::path& out_dir, int classes, int per_class, std::uint64_t seed,
              int min_frames, int max_frames, double test_fraction) {
    SynthSpec spec = default_synth_spec();
    if (classes < 1 || classes > static_cast<int>(spec.classes.size()))
        throw ArgumentError("synth: classes must lie in [1, " +
                            std::to_string(spec.classes.size()) + "]");
    spec.classes.resize(static_cast<std::size_t>(classes));
    spec.min_frames = min_frames;
    spec.max_frames = max_frames;
    const auto sequences = synth_generate(spec, per_class, seed);

    fs::create_directories(out_dir);
    save_topology(out_dir / "topology.txt", spec.topology);
    DatasetManifest manifest;
    const int test_every = test_fraction > 0.0 ? std::max(2, static_cast<int>(1.0 / test_fraction))
                                               : std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const auto& seq = sequences[i];
        save_sequence(out_dir / (seq.id + ".seq"), seq);
        manifest.entries.push_back({seq.id + ".seq", seq.id, seq.class_label, seq.performer_id,
                                    static_cast<int>(i) % test_every == test_every - 1 ? "test"
                                                                                       : "train",
                                    std::nullopt});
    }
    save_manifest(out_dir / "manifest.tsv", manifest);

    RunConfig run;
    run.set("command", "synth");
    run.set("classes", std::int64_t{classes});
    run.set("per_class", std::int64_t{per_class});
    run.set("seed", static_cast<std::int64_t>(seed));
    run.set("min_frames", std::int64_t{min_frames});
    run.set("max_frames", std::int64_t{max_frames});
    run.set("test_fraction", test_fraction);
    run.set("out", out_dir.string());
    run.write_lock(out_dir / "run.lock");
    std::cout << "wrote " << sequences.size() << " sequences to " << out_dir.string() << "\n";
    return 0;
}

int cmd_ingest(const fs::path& manifest_path, const fs::path& topology_path,
               const fs::path& out_dir, bool normalize, const std::string& canonical_path) {
    const auto manifest = load_manifest(manifest_path);
    const auto topology = load_topology(topology_path);
    fs::create_directories(out_dir);

    // load + validate, collecting failures instead of stopping at the first
    std::vector<std::pair<ManifestEntry, SkeletonSequence>> loaded;
    std::vector<std::string> failures;
    for (const auto& entry : manifest.entries) {
        try {
            fs::path p(entry.path);
            if (p.is_relative()) p = manifest_path.parent_path() / p;
            SkeletonSequence seq = load_sequence(p, topology);
            seq.id = entry.id;
            if (entry.label) seq.class_label = entry.label;
            if (entry.performer) seq.performer_id = entry.performer;
            loaded.emplace_back(entry, std::move(seq));
        } catch (const Error& e) {
            failures.push_back(entry.id + ": " + e.what());
        }
    }

    std::vector<double> canonical;
    if (normalize) {
        if (!canonical_path.empty()) {
            canonical = load_bone_lengths(canonical_path, topology);
        } else {
            std::vector<SkeletonSequence> train_seqs;
            for (const auto& [entry, seq] : loaded)
                if (entry.split == "train") train_seqs.push_back(seq);
            if (train_seqs.empty())
                throw DatasetError("ingest --normalize: no loadable train sequences to take "
                                   "canonical bone lengths from");
            canonical = compute_canonical_lengths(train_seqs);
        }
        save_bone_lengths(out_dir / "bone_lengths.txt", topology, canonical);
    }

    DatasetManifest out_manifest;
    for (auto& [entry, seq] : loaded) {
        try {
            const SkeletonSequence processed =
                normalize ? normalize_bone_lengths(seq, canonical) : seq;
            save_sequence(out_dir / (entry.id + ".seq"), processed);
            ManifestEntry e = entry;
            e.path = entry.id + ".seq";
            out_manifest.entries.push_back(std::move(e));
        } catch (const Error& e) {
            failures.push_back(entry.id + ": " + e.what());
        }
    }
    save_manifest(out_dir / "manifest.tsv", out_manifest);
    save_topology(out_dir / "topology.txt", topology);

    RunConfig run;
    run.set("command", "ingest");
    run.set("manifest", manifest_path.string());
    run.set("topology", topology_path.string());
    run.set("normalize", std::int64_t{normalize ? 1 : 0});
    run.set("canonical_lengths", canonical_path.empty() ? "(train-split mean)" : canonical_path);
    run.set("out", out_dir.string());
    run.write_lock(out_dir / "run.lock");

    if (!failures.empty()) {
        std::ofstream err(out_dir / "errors.txt");
        for (const auto& f : failures) err << f << "\n";
        std::cerr << "ERROR: " << failures.size() << " sequence(s) failed validation; see "
                  << (out_dir / "errors.txt").string() << "\n";
        return 1;
    }
    std::cout << "ingested " << out_manifest.entries.size() << " sequences into "
              << out_dir.string() << "\n";
    return 0;
}

int cmd_augment(const fs::path& manifest_path, const fs::path& topology_path,
                const fs::path& out_dir, bool speeds, double dropout, std::uint64_t seed) {
    const auto manifest = load_manifest(manifest_path);
    const auto topology = load_topology(topology_path);
    fs::create_directories(out_dir);

    DatasetManifest out_manifest;
    std::size_t written = 0;
    for (const auto& entry : manifest.entries) {
        fs::path p(entry.path);
        if (p.is_relative()) p = manifest_path.parent_path() / p;
        SkeletonSequence seq = load_sequence(p, topology);
        seq.id = entry.id;
        if (entry.label) seq.class_label = entry.label;
        if (entry.performer) seq.performer_id = entry.performer;

        ManifestEntry original = entry;
        original.path = fs::absolute(p).string();
        original.provenance = entry.provenance.value_or("orig");
        out_manifest.entries.push_back(original);

        auto emit = [&](const SkeletonSequence& variant, const char* provenance) {
            save_sequence(out_dir / (variant.id + ".seq"), variant);
            out_manifest.entries.push_back({variant.id + ".seq", variant.id, variant.class_label,
                                            variant.performer_id, entry.split,
                                            std::string(provenance)});
            ++written;
        };
        if (speeds) {
            emit(seq.frame_count() >= 3 ? speed_double(seq) : speed_half(seq), "fast");
            emit(speed_half(seq), "slow");
        }
        if (dropout > 0.0) {
            SkeletonSequence noisy =
                drop_joints(seq, dropout, derive_seed(seed, out_manifest.entries.size()));
            noisy.id = entry.id + "_noisy";
            emit(noisy, "noisy");
        }
    }
    save_manifest(out_dir / "manifest.tsv", out_manifest);
    save_topology(out_dir / "topology.txt", topology);

    RunConfig run;
    run.set("command", "augment");
    run.set("manifest", manifest_path.string());
    run.set("speeds", std::int64_t{speeds ? 1 : 0});
    run.set("dropout", dropout);
    run.set("seed", static_cast<std::int64_t>(seed));
    run.set("out", out_dir.string());
    run.write_lock(out_dir / "run.lock");
    std::cout << "wrote " << written << " augmented sequences; manifest has "
              << out_manifest.entries.size() << " entries\n";
    return 0;
}

int cmd_train(const fs::path& manifest_path, const fs::path& topology_path, const fs::path& out,
              TrainCliOptions& opts, bool force) {
    refuse_overwrite(out, force);
    const Dataset dataset = load_dataset_cli(manifest_path, topology_path);
    const TrainConfig tc = opts.train_config();

    std::optional<int> class_count;
    if (tc.effective_loss().classification_weight > 0.0 || tc.regime == TrainRegime::Supervised) {
        int max_label = -1;
        for (int i : dataset.split_indices("train")) {
            const auto& seq = dataset.sequences[static_cast<std::size_t>(i)];
            if (!seq.class_label)
                throw ConfigError("train: supervised regime but sequence '" + seq.id +
                                  "' has no class label");
            max_label = std::max(max_label, *seq.class_label);
        }
        class_count = max_label + 1;
    }
    const EncoderConfig ec = opts.encoder_config(dataset.topology.joint_count, class_count);

    const TrainResult result = train(dataset, ec, tc);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_params(out, result.params);
    result.log.save_csv(out.string() + ".log.csv");

    RunConfig run;
    run.set("command", "train");
    run.set("manifest", manifest_path.string());
    run.set("topology", topology_path.string());
    run.set("out", out.string());
    run.set("tau_sim", result.thresholds.tau_sim);
    run.set("tau_dis", result.thresholds.tau_dis);
    opts.record(run);
    run.write_lock(out.string() + ".run.lock");

    const double final_val = result.log.rows.empty() ? 0.0 : result.log.rows.back().val_top1;
    std::cout << "trained " << result.log.rows.size() << " epochs; best params written to "
              << out.string() << " (last val_top1 " << final_val << ")\n";
    return 0;
}

int cmd_index(const fs::path& params_path, const fs::path& manifest_path,
              const fs::path& topology_path, const std::string& split, const fs::path& out,
              int threads) {
    const auto loaded = load_params(params_path);
    const Dataset dataset = load_dataset_cli(manifest_path, topology_path);
    const bool with_mask = params_use_mask(loaded.params, dataset.topology.joint_count);

    std::vector<const SkeletonSequence*> selected;
    for (std::size_t i = 0; i < dataset.sequences.size(); ++i)
        if (split == "all" || dataset.splits[i] == split) selected.push_back(&dataset.sequences[i]);

    // parallel encode, deterministic placement, ordered insert
    std::vector<MotionSignature> sigs(selected.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(static_cast<int>(selected.size()), threads, [&](int i) {
        try {
            sigs[static_cast<std::size_t>(i)] = encode(
                loaded.params, build_encoder_input(*selected[static_cast<std::size_t>(i)], with_mask));
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);

    EmbeddingIndex index(loaded.params.config().embedding_dim);
    for (std::size_t i = 0; i < selected.size(); ++i)
        index.add({selected[i]->id, selected[i]->class_label, sigs[i]});

    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_index(out, index);

    RunConfig run;
    run.set("command", "index");
    run.set("params", params_path.string());
    run.set("manifest", manifest_path.string());
    run.set("split", split);
    run.set("out", out.string());
    run.set("threads", std::int64_t{threads});
    run.write_lock(out.string() + ".run.lock");
    std::cout << "indexed " << index.size() << " sequences (dim " << index.dim() << ") into "
              << out.string() << "\n";
    return 0;
}

int cmd_query(const fs::path& index_path, const fs::path& params_path, const fs::path& seq_path,
              const fs::path& topology_path, int k, const fs::path& out_csv) {
    const auto index = load_index(index_path);
    const auto loaded = load_params(params_path);
    const auto topology = load_topology(topology_path);
    const SkeletonSequence seq = load_sequence(seq_path, topology);
    const bool with_mask = params_use_mask(loaded.params, topology.joint_count);
    const MotionSignature sig = encode(loaded.params, build_encoder_input(seq, with_mask));
    const QueryResult result = query(index, sig, k);

    std::ofstream csv(out_csv);
    if (!csv) throw IoError("cannot write " + out_csv.string());
    csv << "rank,id,distance,label\n";
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
        const auto& hit = result.hits[i];
        std::cout << (i + 1) << "  " << hit.id << "  " << hit.distance;
        if (hit.label) std::cout << "  label=" << *hit.label;
        std::cout << "\n";
        csv << (i + 1) << "," << hit.id << "," << detail::format_sig6(hit.distance) << ","
            << (hit.label ? std::to_string(*hit.label) : "-") << "\n";
    }

    RunConfig run;
    run.set("command", "query");
    run.set("index", index_path.string());
    run.set("params", params_path.string());
    run.set("sequence", seq_path.string());
    run.set("k", std::int64_t{k});
    run.set("out", out_csv.string());
    run.write_lock(out_csv.string() + ".run.lock");
    return 0;
}

int cmd_evaluate(const fs::path& index_path, const fs::path& params_path,
                 const fs::path& manifest_path, const fs::path& topology_path,
                 const std::string& data_manifest, const fs::path& out_dir, int n, int threads) {
    const auto index = load_index(index_path);
    const auto loaded = load_params(params_path);
    const Dataset dataset = load_dataset_cli(manifest_path, topology_path);
    const bool with_mask = params_use_mask(loaded.params, dataset.topology.joint_count);

    // sequences usable for the DTW column: the test manifest plus (optionally)
    // the corpus the index was built from
    std::map<std::string, const SkeletonSequence*> resolvable;
    for (const auto& seq : dataset.sequences) resolvable[seq.id] = &seq;
    Dataset data_corpus;
    if (!data_manifest.empty()) {
        data_corpus = load_dataset_cli(data_manifest, topology_path);
        for (const auto& seq : data_corpus.sequences) resolvable.emplace(seq.id, &seq);
    }

    const auto test_idx = dataset.split_indices("test");
    std::vector<LabeledQuery> queries(test_idx.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(static_cast<int>(test_idx.size()), threads, [&](int qi) {
        try {
            const auto& seq =
                dataset.sequences[static_cast<std::size_t>(test_idx[static_cast<std::size_t>(qi)])];
            if (!seq.class_label)
                throw ValidationError("evaluate: sequence '" + seq.id + "' has no class label");
            queries[static_cast<std::size_t>(qi)] = {
                seq.id, *seq.class_label, encode(loaded.params, build_encoder_input(seq, with_mask))};
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);

    fs::create_directories(out_dir);
    if (queries.empty()) {
        emit_report(RetrievalReport{n, {}, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN()},
                    PRCurve{}, out_dir);
        std::cout << "empty test split; wrote header-only reports to " << out_dir.string() << "\n";
    } else {
        auto resolve = [&](const std::string& id) -> const SkeletonSequence* {
            const auto it = resolvable.find(id);
            return it == resolvable.end() ? nullptr : it->second;
        };
        const auto report = build_retrieval_report(index, queries, resolve, n,
                                                   /*exclude_self=*/true, DtwOptions{}, threads);
        const auto curve = pr_curve(index, queries, /*exclude_self=*/true);
        emit_report(report, curve, out_dir);

        // latency is a measurement, not a deterministic artifact; it gets its
        // own file so the primary outputs stay byte-reproducible
        std::vector<MotionSignature> latency_queries;
        for (const auto& q : queries) latency_queries.push_back(q.signature);
        while (latency_queries.size() < 100)
            latency_queries.push_back(latency_queries[latency_queries.size() % queries.size()]);
        const auto latency = benchmark_query_latency(index, latency_queries);
        std::ofstream lat(out_dir / "latency.txt");
        lat << "index_size=" << latency.index_size << "\n"
            << "queries=" << latency.per_query_ms.size() << "\n"
            << "mean_ms=" << detail::format_sig6(latency.mean_ms) << "\n"
            << "p95_ms=" << detail::format_sig6(latency.p95_ms) << "\n";
        std::cout << "top1=" << detail::format_sig6(report.top1)
                  << " top" << n << "=" << detail::format_sig6(report.topn)
                  << " mean_dtw_mm=" << detail::format_sig6(report.mean_dtw_mm)
                  << " mean_query_ms=" << detail::format_sig6(latency.mean_ms) << "\n";
    }

    RunConfig run;
    run.set("command", "evaluate");
    run.set("index", index_path.string());
    run.set("params", params_path.string());
    run.set("manifest", manifest_path.string());
    run.set("data", data_manifest.empty() ? "-" : data_manifest);
    run.set("n", std::int64_t{n});
    run.set("threads", std::int64_t{threads});
    run.set("out", out_dir.string());
    run.write_lock(out_dir / "run.lock");
    return 0;
}

int cmd_submotion_train(const fs::path& full_params_path, const fs::path& manifest_path,
                        const fs::path& topology_path, const fs::path& out,
                        TrainCliOptions& opts, const std::string& fractions_csv, double stride,
                        bool warm, bool force) {
    refuse_overwrite(out, force);
    const auto full = load_params(full_params_path);
    if (full.submotion)
        throw ConfigError("submotion train: " + full_params_path.string() +
                          " already holds sub-motion parameters, expected the full encoder");
    const Dataset dataset = load_dataset_cli(manifest_path, topology_path);

    SubmotionWindows windows;
    if (!fractions_csv.empty()) {
        windows.window_fractions.clear();
        std::istringstream in(fractions_csv);
        std::string tok;
        while (std::getline(in, tok, ','))
            windows.window_fractions.push_back(std::stod(tok));
    }
    windows.stride_fraction = stride;

    const SubmotionTrainResult result =
        train_submotion(full.params, dataset, opts.train_config(), windows, warm);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_params(out, result.params, /*submotion=*/true);
    result.log.save_csv(out.string() + ".log.csv");

    RunConfig run;
    run.set("command", "submotion train");
    run.set("full_params", full_params_path.string());
    run.set("manifest", manifest_path.string());
    run.set("out", out.string());
    run.set("window_fractions", fractions_csv.empty() ? "0.25,0.5,0.75" : fractions_csv);
    run.set("stride_fraction", stride);
    run.set("warm_start", std::int64_t{warm ? 1 : 0});
    opts.record(run);
    run.write_lock(out.string() + ".run.lock");
    std::cout << "sub-motion encoder trained for " << result.log.rows.size()
              << " epochs; written to " << out.string() << "\n";
    return 0;
}

int cmd_submotion_query(const fs::path& index_path, const fs::path& sub_params_path,
                        const fs::path& window_path, const fs::path& topology_path, int k,
                        const fs::path& out_csv) {
    const auto index = load_index(index_path);
    const auto loaded = load_params(sub_params_path);
    if (!loaded.submotion)
        throw ConfigError("submotion query: " + sub_params_path.string() +
                          " is not a sub-motion parameter file");
    const auto topology = load_topology(topology_path);
    const SkeletonSequence window = load_sequence(window_path, topology);
    const QueryResult result = query_submotion(loaded.params, window, index, k);

    std::ofstream csv(out_csv);
    if (!csv) throw IoError("cannot write " + out_csv.string());
    csv << "rank,id,distance,label\n";
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
        const auto& hit = result.hits[i];
        std::cout << (i + 1) << "  " << hit.id << "  " << hit.distance;
        if (hit.label) std::cout << "  label=" << *hit.label;
        std::cout << "\n";
        csv << (i + 1) << "," << hit.id << "," << detail::format_sig6(hit.distance) << ","
            << (hit.label ? std::to_string(*hit.label) : "-") << "\n";
    }

    RunConfig run;
    run.set("command", "submotion query");
    run.set("index", index_path.string());
    run.set("sub_params", sub_params_path.string());
    run.set("window", window_path.string());
    run.set("k", std::int64_t{k});
    run.write_lock(out_csv.string() + ".run.lock");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deephums - learned motion signatures for 3D skeletal sequence retrieval"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic desk-scale dataset");
    std::string synth_out = "synth_data";
    int synth_classes = 8, synth_per_class = 40, synth_min = 15, synth_max = 120;
    std::uint64_t synth_seed = default_seed();
    double synth_test_fraction = 0.2;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", synth_classes);
    synth->add_option("--per-class", synth_per_class);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--min-frames", synth_min);
    synth->add_option("--max-frames", synth_max);
    synth->add_option("--test-fraction", synth_test_fraction);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate (and normalize) a sequence corpus");
    std::string ingest_manifest, ingest_topology, ingest_out = "ingested", ingest_canonical;
    bool ingest_normalize = false;
    ingest->add_option("manifest", ingest_manifest)->required();
    ingest->add_option("--topology", ingest_topology, "topology file (default: <manifest dir>/topology.txt)");
    ingest->add_option("--out", ingest_out)->required();
    ingest->add_flag("--normalize", ingest_normalize, "retarget bones to canonical lengths");
    ingest->add_option("--canonical-lengths", ingest_canonical,
                       "bone length file (default: mean over the train split)");

    // augment
    auto* augment = app.add_subcommand("augment", "emit speed and dropout variants");
    std::string augment_manifest, augment_topology, augment_out = "augmented";
    bool augment_no_speeds = false;
    double augment_dropout = 0.0;
    std::uint64_t augment_seed = default_seed();
    augment->add_option("manifest", augment_manifest)->required();
    augment->add_option("--topology", augment_topology);
    augment->add_option("--out", augment_out)->required();
    augment->add_flag("--no-speeds", augment_no_speeds, "skip the fast/slow variants");
    augment->add_option("--dropout", augment_dropout, "joint dropout fraction (0 disables)");
    augment->add_option("--seed", augment_seed);

    // train
    auto* train_cmd = app.add_subcommand("train", "train the Siamese signature encoder");
    std::string train_manifest, train_topology, train_out = "params.bin";
    bool train_force = false;
    TrainCliOptions train_opts;
    train_cmd->add_option("manifest", train_manifest)->required();
    train_cmd->add_option("--topology", train_topology);
    train_cmd->add_option("--out", train_out);
    train_cmd->add_flag("--force", train_force, "overwrite an existing parameter file");
    train_opts.add_flags(train_cmd);

    // index
    auto* index_cmd = app.add_subcommand("index", "encode a split into a signature index");
    std::string index_params, index_manifest, index_topology, index_split = "train",
                index_out = "index.bin";
    int index_threads = 1;
    index_cmd->add_option("params", index_params)->required();
    index_cmd->add_option("manifest", index_manifest)->required();
    index_cmd->add_option("--topology", index_topology);
    index_cmd->add_option("--split", index_split)->check(CLI::IsMember({"train", "test", "all"}));
    index_cmd->add_option("--out", index_out);
    index_cmd->add_option("--threads", index_threads);

    // query
    auto* query_cmd = app.add_subcommand("query", "retrieve nearest sequences for one query");
    std::string query_index, query_params, query_seq, query_topology,
                query_out = "query_results.csv";
    int query_k = 10;
    query_cmd->add_option("index", query_index)->required();
    query_cmd->add_option("params", query_params)->required();
    query_cmd->add_option("sequence", query_seq)->required();
    query_cmd->add_option("--topology", query_topology)->required();
    query_cmd->add_option("-k,--k", query_k);
    query_cmd->add_option("--out", query_out);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "retrieval metrics over a test manifest");
    std::string eval_index, eval_params, eval_manifest, eval_topology, eval_data,
                eval_out = "evaluation";
    int eval_n = 10, eval_threads = 1;
    eval_cmd->add_option("index", eval_index)->required();
    eval_cmd->add_option("params", eval_params)->required();
    eval_cmd->add_option("manifest", eval_manifest, "manifest whose test split becomes the query set")
        ->required();
    eval_cmd->add_option("--topology", eval_topology);
    eval_cmd->add_option("--data", eval_data,
                         "extra manifest used to resolve retrieved ids for the DTW column");
    eval_cmd->add_option("--out", eval_out);
    eval_cmd->add_option("-n,--n", eval_n, "retrieval depth for top-n accuracy");
    eval_cmd->add_option("--threads", eval_threads);

    // submotion
    auto* sub = app.add_subcommand("submotion", "sub-motion search (second encoder)");
    sub->require_subcommand(1);
    auto* sub_train = sub->add_subcommand("train", "regress windows onto frozen full signatures");
    std::string st_full, st_manifest, st_topology, st_out = "subparams.bin", st_fractions;
    double st_stride = 0.5;
    bool st_warm = false, st_force = false;
    TrainCliOptions sub_opts;
    sub_train->add_option("--full-params", st_full)->required();
    sub_train->add_option("manifest", st_manifest)->required();
    sub_train->add_option("--topology", st_topology);
    sub_train->add_option("--out", st_out);
    sub_train->add_option("--fractions", st_fractions, "window fractions, e.g. 0.25,0.5,0.75");
    sub_train->add_option("--stride", st_stride, "stride as a fraction of the window");
    sub_train->add_flag("--warm", st_warm, "start from the full encoder's weights");
    sub_train->add_flag("--force", st_force);
    sub_opts.add_flags(sub_train);

    auto* sub_query = sub->add_subcommand("query", "retrieve parents of a window");
    std::string sq_index, sq_params, sq_window, sq_topology, sq_out = "submotion_results.csv";
    int sq_k = 5;
    sub_query->add_option("index", sq_index)->required();
    sub_query->add_option("--sub-params", sq_params)->required();
    sub_query->add_option("window", sq_window)->required();
    sub_query->add_option("--topology", sq_topology)->required();
    sub_query->add_option("-k,--k", sq_k);
    sub_query->add_option("--out", sq_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth)
            return cmd_synth(synth_out, synth_classes, synth_per_class, synth_seed, synth_min,
                             synth_max, synth_test_fraction);
        if (*ingest)
            return cmd_ingest(ingest_manifest,
                              ingest_topology.empty() ? default_topology_path(ingest_manifest)
                                                      : fs::path(ingest_topology),
                              ingest_out, ingest_normalize, ingest_canonical);
        if (*augment)
            return cmd_augment(augment_manifest,
                               augment_topology.empty() ? default_topology_path(augment_manifest)
                                                        : fs::path(augment_topology),
                               augment_out, !augment_no_speeds, augment_dropout, augment_seed);
        if (*train_cmd) {
            train_opts.apply_config_file(train_cmd);
            return cmd_train(train_manifest,
                             train_topology.empty() ? default_topology_path(train_manifest)
                                                    : fs::path(train_topology),
                             train_out, train_opts, train_force);
        }
        if (*index_cmd)
            return cmd_index(index_params, index_manifest,
                             index_topology.empty() ? default_topology_path(index_manifest)
                                                    : fs::path(index_topology),
                             index_split, index_out, index_threads);
        if (*query_cmd)
            return cmd_query(query_index, query_params, query_seq, query_topology, query_k,
                             query_out);
        if (*eval_cmd)
            return cmd_evaluate(eval_index, eval_params, eval_manifest,
                                eval_topology.empty() ? default_topology_path(eval_manifest)
                                                      : fs::path(eval_topology),
                                eval_data, eval_out, eval_n, eval_threads);
        if (*sub_train) {
            sub_opts.apply_config_file(sub_train);
            return cmd_submotion_train(st_full, st_manifest,
                                       st_topology.empty() ? default_topology_path(st_manifest)
                                                           : fs::path(st_topology),
                                       st_out, sub_opts, st_fractions, st_stride, st_warm,
                                       st_force);
        }
        if (*sub_query)
            return cmd_submotion_query(sq_index, sq_params, sq_window, sq_topology, sq_k, sq_out);
    } catch (const Error& e) {
        std::cerr << "ERROR: " << e.what() << "\n";
        // validation/config/usage problems exit 1; runtime failures exit 2
        return e.kind() == ErrorKind::Numeric || e.kind() == ErrorKind::Io ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "ERROR: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
