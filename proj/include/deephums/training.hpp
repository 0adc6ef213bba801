#pragma once

#include <algorithm>
#include <chrono>
#include <unordered_map>

#include "deephums/augment.hpp"
#include "deephums/evaluation.hpp"
#include "deephums/losses.hpp"
#include "deephums/sequence_io.hpp"

namespace deephums {

enum class TrainRegime { Supervised, SelfSupervised };

inline std::string to_string(TrainRegime r) {
    return r == TrainRegime::Supervised ? "supervised" : "self";
}
inline TrainRegime regime_from_string(const std::string& s) {
    if (s == "supervised") return TrainRegime::Supervised;
    if (s == "self" || s == "self_supervised" || s == "self-supervised")
        return TrainRegime::SelfSupervised;
    throw ConfigError("unknown regime '" + s + "' (expected supervised or self)");
}

/// Similarity score thresholds for self-supervised labelling: at most
/// tau_sim is a positive, at least tau_dis a negative, in between abstain.
struct PairThresholds {
    double tau_sim = 0.0;
    double tau_dis = 0.0;
};

/// Percentile calibration of the pair thresholds from the score distribution
/// of random sequence pairs, so thresholds track the dataset's scale.
inline PairThresholds calibrate_thresholds(const std::vector<TrajectorySummary>& summaries,
                                           double sim_percentile, double dis_percentile,
                                           int sample_pairs, std::uint64_t seed,
                                           const SimilarityWeights& weights = {}) {
    if (summaries.size() < 2) throw DatasetError("threshold calibration needs at least 2 sequences");
    if (!(sim_percentile < dis_percentile))
        throw ArgumentError("threshold calibration: sim percentile must be below dis percentile");
    Rng rng(seed);
    std::vector<double> scores;
    scores.reserve(static_cast<std::size_t>(sample_pairs));
    const std::uint64_t n = summaries.size();
    for (int s = 0; s < sample_pairs; ++s) {
        const auto i = rng.uniform_index(n);
        auto j = rng.uniform_index(n - 1);
        if (j >= i) ++j;
        scores.push_back(trajectory_similarity(summaries[i], summaries[j], weights));
    }
    std::sort(scores.begin(), scores.end());
    auto percentile = [&](double p) {
        const auto rank = static_cast<std::size_t>(
            std::clamp(p / 100.0 * static_cast<double>(scores.size() - 1), 0.0,
                       static_cast<double>(scores.size() - 1)));
        return scores[rank];
    };
    PairThresholds t{percentile(sim_percentile), percentile(dis_percentile)};
    if (!(t.tau_sim < t.tau_dis)) t.tau_dis = t.tau_sim + 1e-12;  // degenerate score spread
    return t;
}

enum class PairSource { ClassLabels, Trajectory, Augmentation };

/// One training pair by id. Augmentation positives reference the on-the-fly
/// speed variants ("<id>_fast" / "<id>_slow") of their first member.
struct PairSample {
    std::string a_id;
    std::string b_id;
    PairLabel label = PairLabel::Similar;
    PairSource source = PairSource::Trajectory;
};

/// Pool of candidate sequences for pair sampling.
struct PairingPool {
    std::vector<std::string> ids;
    std::vector<std::optional<int>> labels;
    std::vector<TrajectorySummary> summaries;
    SimilarityWeights weights;
};

/// Draws one epoch of labelled pairs. Every sequence contributes one speed
/// augmentation positive; content positives come from class labels
/// (supervised, plus trajectory positives half the time) or trajectory
/// similarity (self-supervised); each positive is matched by one negative,
/// and the stream is interleaved so any batch window is balanced within one
/// pair. Deterministic given the seed; abstain-band pairs never appear.
inline std::vector<PairSample> sample_pairs(const PairingPool& pool, TrainRegime regime,
                                            const PairThresholds& thresholds, std::uint64_t seed) {
    const int n = static_cast<int>(pool.ids.size());
    if (regime == TrainRegime::SelfSupervised && n < 2)
        throw DatasetError("self-supervised pair sampling needs at least 2 sequences");
    if (n < 1) throw DatasetError("pair sampling: empty pool");
    constexpr int kTries = 48;

    std::vector<std::vector<int>> by_class;
    if (regime == TrainRegime::Supervised) {
        int max_label = -1;
        for (const auto& l : pool.labels) {
            if (!l) throw ConfigError("supervised pair sampling requires class labels everywhere");
            max_label = std::max(max_label, *l);
        }
        by_class.resize(static_cast<std::size_t>(max_label + 1));
        for (int i = 0; i < n; ++i)
            by_class[static_cast<std::size_t>(*pool.labels[static_cast<std::size_t>(i)])].push_back(i);
    }

    auto trajectory_label = [&](int i, int j) {
        return pair_label_from_summaries(pool.summaries[static_cast<std::size_t>(i)],
                                         pool.summaries[static_cast<std::size_t>(j)],
                                         thresholds.tau_sim, thresholds.tau_dis, pool.weights);
    };

    std::vector<PairSample> similar;
    std::vector<PairSample> dissimilar;
    Rng rng(derive_seed(seed, 0x5041495253ULL));
    for (int i = 0; i < n; ++i) {
        const std::string& id = pool.ids[static_cast<std::size_t>(i)];
        int positives = 0;

        similar.push_back({id, id + (rng.uniform() < 0.5 ? "_fast" : "_slow"), PairLabel::Similar,
                           PairSource::Augmentation});
        ++positives;

        auto draw_other = [&]() {
            auto j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - 1)));
            if (j >= i) ++j;
            return j;
        };

        if (regime == TrainRegime::Supervised) {
            const auto& mates = by_class[static_cast<std::size_t>(*pool.labels[static_cast<std::size_t>(i)])];
            if (mates.size() > 1) {
                auto k = rng.uniform_index(mates.size() - 1);
                int j = mates[k];
                if (j == i) j = mates[mates.size() - 1];
                similar.push_back({id, pool.ids[static_cast<std::size_t>(j)], PairLabel::Similar,
                                   PairSource::ClassLabels});
                ++positives;
            }
            if (n > 1 && rng.uniform() < 0.5 && !pool.summaries.empty()) {
                for (int attempt = 0; attempt < kTries; ++attempt) {
                    const int j = draw_other();
                    if (trajectory_label(i, j) == PairLabel::Similar) {
                        similar.push_back({id, pool.ids[static_cast<std::size_t>(j)],
                                           PairLabel::Similar, PairSource::Trajectory});
                        ++positives;
                        break;
                    }
                }
            }
        } else {
            for (int attempt = 0; attempt < kTries; ++attempt) {
                const int j = draw_other();
                if (trajectory_label(i, j) == PairLabel::Similar) {
                    similar.push_back({id, pool.ids[static_cast<std::size_t>(j)], PairLabel::Similar,
                                       PairSource::Trajectory});
                    ++positives;
                    break;
                }
            }
        }

        for (int p = 0; p < positives && n > 1; ++p) {
            if (regime == TrainRegime::Supervised) {
                for (int attempt = 0; attempt < kTries; ++attempt) {
                    const int j = draw_other();
                    if (*pool.labels[static_cast<std::size_t>(j)] !=
                        *pool.labels[static_cast<std::size_t>(i)]) {
                        dissimilar.push_back({id, pool.ids[static_cast<std::size_t>(j)],
                                              PairLabel::Dissimilar, PairSource::ClassLabels});
                        break;
                    }
                }
            } else {
                for (int attempt = 0; attempt < kTries; ++attempt) {
                    const int j = draw_other();
                    if (trajectory_label(i, j) == PairLabel::Dissimilar) {
                        dissimilar.push_back({id, pool.ids[static_cast<std::size_t>(j)],
                                              PairLabel::Dissimilar, PairSource::Trajectory});
                        break;
                    }
                }
            }
        }
    }

    // equalize and interleave so every batch window stays balanced
    rng.shuffle(similar);
    rng.shuffle(dissimilar);
    const std::size_t common = std::min(similar.size(), dissimilar.size());
    std::vector<PairSample> epoch;
    epoch.reserve(similar.size() + common);
    for (std::size_t k = 0; k < std::max(similar.size(), common); ++k) {
        if (k < similar.size()) epoch.push_back(std::move(similar[k]));
        if (k < common) epoch.push_back(std::move(dissimilar[k]));
    }
    return epoch;
}

/// Convenience overload over a dataset split (summaries computed here).
inline std::vector<PairSample> sample_pairs(const Dataset& dataset, const std::string& split,
                                            TrainRegime regime, const PairThresholds& thresholds,
                                            std::uint64_t seed,
                                            const SimilarityWeights& weights = {}) {
    PairingPool pool;
    pool.weights = weights;
    for (int i : dataset.split_indices(split)) {
        const auto& seq = dataset.sequences[static_cast<std::size_t>(i)];
        pool.ids.push_back(seq.id);
        pool.labels.push_back(seq.class_label);
        pool.summaries.push_back(trajectory_summary(seq));
    }
    if (pool.ids.empty()) throw DatasetError("pair sampling: split '" + split + "' is empty");
    return sample_pairs(pool, regime, thresholds, seed);
}

/// Adaptive-moment gradient descent over the flat parameter buffer.
template <typename Scalar>
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(size, 0.0),
          v_(size, 0.0) {}

    void step(std::vector<Scalar>& params, const std::vector<Scalar>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("optimizer: parameter size changed between steps");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grads[i]);
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            const double update = lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - update);
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

struct TrainingLogRow {
    int epoch = 0;
    double mean_contrastive = 0.0;
    double mean_classification = 0.0;
    double val_top1 = 0.0;
    double wall_seconds = 0.0;
};

struct TrainingLog {
    std::vector<TrainingLogRow> rows;

    void save_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write training log: " + path.string());
        out << "epoch,mean_contrastive,mean_classification,val_top1,wall_seconds\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                          r.mean_contrastive, r.mean_classification, r.val_top1, r.wall_seconds);
            out << buf;
        }
        if (!out) throw IoError("write failed: " + path.string());
    }
};

struct TrainConfig {
    TrainRegime regime = TrainRegime::SelfSupervised;
    int batch_size = 8;
    double learning_rate = 1e-3;
    int max_epochs = 50;
    std::uint64_t seed = 0;
    double margin = 1.0;
    double contrastive_weight = 1.0;
    std::optional<double> classification_weight;  // default: 1 supervised, 0 self-supervised
    int patience = 10;
    double validation_fraction = 0.10;
    double tau_sim_percentile = 10.0;
    double tau_dis_percentile = 50.0;
    int calibration_pairs = 1000;
    SimilarityWeights similarity;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
        if (max_epochs < 0) throw ConfigError("train: max_epochs must be non-negative");
        if (!(margin > 0.0)) throw ConfigError("train: margin must be positive");
        if (patience < 1) throw ConfigError("train: patience must be at least 1");
        if (validation_fraction < 0.0 || validation_fraction >= 1.0)
            throw ConfigError("train: validation_fraction must lie in [0, 1)");
    }

    LossConfig effective_loss() const {
        LossConfig loss;
        loss.margin = margin;
        loss.contrastive_weight = contrastive_weight;
        loss.classification_weight = classification_weight.value_or(
            regime == TrainRegime::Supervised ? 1.0 : 0.0);
        return loss;
    }
};

/// Leave-one-out top-1 over a slice: supervised correctness is a class
/// match, self-supervised correctness a trajectory similarity at or below
/// tau_sim between query and neighbour.
inline double evaluate_validation(const EncoderParams<float>& params,
                                  const std::vector<const SkeletonSequence*>& slice,
                                  TrainRegime regime, const PairThresholds& thresholds,
                                  bool with_mask, const SimilarityWeights& weights = {}) {
    if (slice.size() < 2) throw DatasetError("validation: slice needs at least 2 sequences");
    std::vector<TrajectorySummary> summaries;
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < slice.size(); ++i) {
        if (regime == TrainRegime::Supervised && !slice[i]->class_label)
            throw ConfigError("validation: sequence '" + slice[i]->id + "' has no class label");
        position[slice[i]->id] = i;
        if (regime == TrainRegime::SelfSupervised)
            summaries.push_back(trajectory_summary(*slice[i]));
    }
    const EmbeddingIndex index = build_index(params, slice, with_mask);
    int correct = 0;
    for (std::size_t i = 0; i < slice.size(); ++i) {
        const auto result =
            query_excluding(index, encode(params, build_encoder_input(*slice[i], with_mask)), 1,
                            slice[i]->id);
        if (result.hits.empty()) continue;
        if (regime == TrainRegime::Supervised) {
            if (result.hits.front().label &&
                *result.hits.front().label == *slice[i]->class_label)
                ++correct;
        } else {
            const std::size_t j = position.at(result.hits.front().id);
            if (trajectory_similarity(summaries[i], summaries[j], weights) <= thresholds.tau_sim)
                ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(slice.size());
}

struct TrainResult {
    EncoderParams<float> params;
    TrainingLog log;
    PairThresholds thresholds;
};

/// Trains the Siamese encoder on the dataset's train split and returns the
/// best-validation parameters. Single-threaded and bit-reproducible for a
/// fixed seed.
inline TrainResult train(const Dataset& dataset, const EncoderConfig& encoder_config,
                         const TrainConfig& cfg) {
    using Matrix = EncoderParams<float>::Matrix;
    cfg.validate();
    encoder_config.validate();

    const auto train_idx = dataset.split_indices("train");
    if (train_idx.empty()) throw DatasetError("train: no sequences in the train split");
    if (cfg.regime == TrainRegime::SelfSupervised && train_idx.size() < 2)
        throw DatasetError("train: self-supervised regime needs at least 2 train sequences");

    const int joints = dataset.topology.joint_count;
    bool with_mask;
    if (encoder_config.input_width == encoder_input_width(joints, false))
        with_mask = false;
    else if (encoder_config.input_width == encoder_input_width(joints, true))
        with_mask = true;
    else
        throw ConfigError("train: encoder input_width " + std::to_string(encoder_config.input_width) +
                          " matches neither " + std::to_string(encoder_input_width(joints, false)) +
                          " nor " + std::to_string(encoder_input_width(joints, true)) +
                          " for this topology");

    const LossConfig loss = cfg.effective_loss();
    if (loss.classification_weight > 0.0) {
        if (!encoder_config.class_count)
            throw ConfigError("train: classification loss requested but encoder has no class head");
        for (int i : train_idx) {
            const auto& seq = dataset.sequences[static_cast<std::size_t>(i)];
            if (!seq.class_label)
                throw ConfigError("train: supervised regime but sequence '" + seq.id +
                                  "' has no class label");
            if (*seq.class_label < 0 || *seq.class_label >= *encoder_config.class_count)
                throw ConfigError("train: label of '" + seq.id + "' outside configured class count");
        }
    }
    if (cfg.regime == TrainRegime::Supervised)
        for (int i : train_idx)
            if (!dataset.sequences[static_cast<std::size_t>(i)].class_label)
                throw ConfigError("train: supervised regime but sequence '" +
                                  dataset.sequences[static_cast<std::size_t>(i)].id +
                                  "' has no class label");

    // validation slice: performer-disjoint where performer ids exist
    std::vector<int> val_idx, fit_idx;
    if (cfg.validation_fraction > 0.0 && train_idx.size() >= 10) {
        const auto want = static_cast<std::size_t>(
            std::max(2.0, cfg.validation_fraction * static_cast<double>(train_idx.size())));
        Rng split_rng(derive_seed(cfg.seed, 0x56414cULL));
        bool have_performers = true;
        for (int i : train_idx)
            have_performers &= dataset.sequences[static_cast<std::size_t>(i)].performer_id.has_value();
        if (have_performers) {
            std::map<std::string, std::vector<int>> groups;
            for (int i : train_idx)
                groups[*dataset.sequences[static_cast<std::size_t>(i)].performer_id].push_back(i);
            std::vector<std::string> names;
            for (const auto& [name, _] : groups) names.push_back(name);
            split_rng.shuffle(names);
            for (const auto& name : names) {
                const auto& group = groups[name];
                if (val_idx.size() < want &&
                    val_idx.size() + group.size() <= train_idx.size() - 2)
                    val_idx.insert(val_idx.end(), group.begin(), group.end());
            }
        }
        if (val_idx.size() < 2) {
            val_idx.clear();
            std::vector<int> shuffled = train_idx;
            split_rng.shuffle(shuffled);
            val_idx.assign(shuffled.begin(),
                           shuffled.begin() + static_cast<std::ptrdiff_t>(
                                                  std::min(want, shuffled.size() - 2)));
        }
        std::sort(val_idx.begin(), val_idx.end());
    }
    for (int i : train_idx)
        if (!std::binary_search(val_idx.begin(), val_idx.end(), i)) fit_idx.push_back(i);
    if (fit_idx.empty()) {
        fit_idx = train_idx;
        val_idx.clear();
    }

    // pairing pool + feature caches over the fitting subset
    PairingPool pool;
    pool.weights = cfg.similarity;
    std::unordered_map<std::string, Matrix> inputs;
    std::unordered_map<std::string, std::optional<int>> labels;
    for (int i : fit_idx) {
        const auto& seq = dataset.sequences[static_cast<std::size_t>(i)];
        pool.ids.push_back(seq.id);
        pool.labels.push_back(seq.class_label);
        pool.summaries.push_back(trajectory_summary(seq));
        inputs[seq.id] = build_encoder_input(seq, with_mask).values.cast<float>();
        labels[seq.id] = seq.class_label;
        const SkeletonSequence fast = seq.frame_count() >= 3 ? speed_double(seq) : speed_half(seq);
        const SkeletonSequence slow = speed_half(seq);
        // a too-short sequence reuses its slow variant for the "_fast" pairing
        inputs[seq.id + "_fast"] = build_encoder_input(fast, with_mask).values.cast<float>();
        inputs[seq.id + "_slow"] = build_encoder_input(slow, with_mask).values.cast<float>();
        labels[seq.id + "_fast"] = seq.class_label;
        labels[seq.id + "_slow"] = seq.class_label;
    }

    PairThresholds thresholds{0.0, 1e-12};
    if (pool.ids.size() >= 2)
        thresholds = calibrate_thresholds(pool.summaries, cfg.tau_sim_percentile,
                                          cfg.tau_dis_percentile, cfg.calibration_pairs,
                                          derive_seed(cfg.seed, 0x434154ULL), cfg.similarity);

    std::vector<const SkeletonSequence*> val_slice;
    for (int i : val_idx) val_slice.push_back(&dataset.sequences[static_cast<std::size_t>(i)]);

    EncoderParams<float> params =
        EncoderParams<float>::random_init(encoder_config, derive_seed(cfg.seed, 0x494e4954ULL));
    TrainResult result{params, {}, thresholds};
    if (cfg.max_epochs == 0) return result;

    AdamOptimizer<float> optimizer(params.size(), cfg.learning_rate);
    EncoderParams<float> grads(encoder_config);
    double best_val = -1.0;
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const auto pairs =
            sample_pairs(pool, cfg.regime, thresholds, derive_seed(cfg.seed, 1000 + epoch));

        double contrastive_sum = 0.0, classification_sum = 0.0;
        std::size_t pair_count = 0;
        for (std::size_t start = 0; start < pairs.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<TrainingPair<float>> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const auto& p = pairs[k];
                TrainingPair<float> tp;
                tp.input_a = &inputs.at(p.a_id);
                tp.input_b = &inputs.at(p.b_id);
                tp.label = p.label;
                tp.class_a = labels.at(p.a_id);
                tp.class_b = labels.at(p.b_id);
                batch.push_back(tp);
            }
            const BatchStats stats =
                loss_gradients<float>(params, std::span<const TrainingPair<float>>(batch), loss, grads);
            if (!std::isfinite(stats.weighted_total(loss)))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) +
                                   ", batch starting at pair " + std::to_string(start));
            optimizer.step(params.data(), grads.data());
            contrastive_sum += stats.contrastive * static_cast<double>(stop - start);
            classification_sum += stats.classification * static_cast<double>(stop - start);
            pair_count += stop - start;
        }

        TrainingLogRow row;
        row.epoch = epoch;
        row.mean_contrastive = pair_count ? contrastive_sum / static_cast<double>(pair_count) : 0.0;
        row.mean_classification =
            pair_count ? classification_sum / static_cast<double>(pair_count) : 0.0;
        if (!val_slice.empty())
            row.val_top1 = evaluate_validation(params, val_slice, cfg.regime, thresholds, with_mask,
                                               cfg.similarity);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        result.log.rows.push_back(row);

        if (val_slice.empty() || row.val_top1 > best_val) {
            best_val = row.val_top1;
            best_epoch = epoch;
            result.params = params;
        }
        if (!val_slice.empty() && epoch - best_epoch >= cfg.patience) break;
    }
    return result;
}

}  // namespace deephums
