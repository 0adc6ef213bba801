#pragma once

#include "deephums/index.hpp"
#include "deephums/training.hpp"

namespace deephums {

/// A window cut out of a parent sequence. Windows shorter than 15 frames
/// (the minimum sequence length the encoder contract supports) are never
/// produced.
struct SubsequenceSample {
    std::string parent_id;
    int start_frame = 0;
    int end_frame = 0;  // exclusive
    SkeletonSequence window;
};

constexpr int kMinWindowFrames = 15;

struct SubmotionWindows {
    std::vector<double> window_fractions = {0.25, 0.5, 0.75};
    double stride_fraction = 0.5;
};

/// Extracts [start, end) as a standalone sequence, slicing the mask along.
inline SkeletonSequence extract_window(const SkeletonSequence& seq, int start, int end) {
    if (start < 0 || end > seq.frame_count() || end - start < 2)
        throw ArgumentError("extract_window: bad range [" + std::to_string(start) + ", " +
                            std::to_string(end) + ") for " + std::to_string(seq.frame_count()) +
                            " frames");
    SkeletonSequence window = seq;
    window.id = seq.id + "_w" + std::to_string(start) + "_" + std::to_string(end);
    window.frames.assign(seq.frames.begin() + start, seq.frames.begin() + end);
    if (seq.missing_mask) {
        MissingMask mask(end - start, seq.joint_count());
        for (int t = start; t < end; ++t)
            for (int j = 0; j < seq.joint_count(); ++j)
                if (seq.missing_mask->at(t, j)) mask.set(t - start, j);
        window.missing_mask = std::move(mask);
    }
    return window;
}

/// Sliding windows at each fraction of the parent length with stride
/// stride_fraction * window. The grid is fully deterministic; the seed is
/// accepted for interface stability but no stochastic scheme is in use.
inline std::vector<SubsequenceSample> sample_subsequences(const SkeletonSequence& seq,
                                                          const std::vector<double>& window_fractions,
                                                          double stride_fraction,
                                                          std::uint64_t /*seed*/ = 0) {
    for (double f : window_fractions)
        if (!(f > 0.0) || !(f < 1.0))
            throw ArgumentError("sample_subsequences: window fractions must lie in (0, 1)");
    if (!(stride_fraction > 0.0) || stride_fraction > 1.0)
        throw ArgumentError("sample_subsequences: stride fraction must lie in (0, 1]");
    const int n = seq.frame_count();
    std::vector<SubsequenceSample> out;
    for (double f : window_fractions) {
        const int w = static_cast<int>(std::lround(f * n));
        if (w < kMinWindowFrames || w > n) continue;
        const int stride = std::max(1, static_cast<int>(std::lround(stride_fraction * w)));
        for (int start = 0; start + w <= n; start += stride)
            out.push_back({seq.id, start, start + w, extract_window(seq, start, start + w)});
    }
    return out;
}

struct SubmotionLogRow {
    int epoch = 0;
    double mean_l2 = 0.0;
    double val_l2 = 0.0;
    double wall_seconds = 0.0;
};

struct SubmotionLog {
    std::vector<SubmotionLogRow> rows;

    void save_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write submotion log: " + path.string());
        out << "epoch,mean_l2,val_l2,wall_seconds\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.epoch, r.mean_l2, r.val_l2,
                          r.wall_seconds);
            out << buf;
        }
        if (!out) throw IoError("write failed: " + path.string());
    }
};

struct SubmotionTrainResult {
    EncoderParams<float> params;
    SubmotionLog log;
};

namespace detail {

struct SubmotionSample {
    EncoderParams<float>::Matrix input;
    MotionSignature target;
};

/// Mean 0.5 * |f(window) - target|^2 over the batch plus its gradients.
inline double submotion_batch_gradients(const EncoderParams<float>& params,
                                        std::span<const SubmotionSample* const> batch,
                                        EncoderParams<float>& grads) {
    grads.set_zero();
    double loss = 0.0;
    for (const auto* sample : batch) {
        auto fwd = encoder_forward(params, sample->input, /*want_cache=*/true);
        const Eigen::VectorXf diff = fwd.embedding - sample->target;
        loss += 0.5 * static_cast<double>(diff.squaredNorm());
        encoder_backward<float>(params, fwd, diff, grads);
    }
    const float inv = 1.0f / static_cast<float>(batch.size());
    for (auto& g : grads.data()) g *= inv;
    return loss / static_cast<double>(batch.size());
}

}  // namespace detail

/// Trains the sub-motion encoder: an encoder of the same architecture
/// (classification head dropped) regressed with squared-Euclidean loss onto
/// the frozen full encoder's signature of each window's parent. The full
/// parameters are read, never written. `warm_start` seeds the sub-motion
/// encoder from the full encoder's weights instead of a random init; full
/// windows then reproduce their parent signature from step zero and
/// fine-tuning only has to absorb the truncation, which converges far
/// tighter than a cold start at this data scale.
inline SubmotionTrainResult train_submotion(const EncoderParams<float>& full_params,
                                            const Dataset& dataset, const TrainConfig& cfg,
                                            const SubmotionWindows& windows = {},
                                            bool warm_start = false) {
    cfg.validate();
    bool all_zero = true;
    for (float v : full_params.data())
        if (v != 0.0f) {
            all_zero = false;
            break;
        }
    if (all_zero)
        throw ConfigError("train_submotion: full encoder parameters are all zero (untrained)");

    EncoderConfig sub_config = full_params.config();
    sub_config.class_count.reset();

    const int joints = dataset.topology.joint_count;
    bool with_mask;
    if (full_params.config().input_width == encoder_input_width(joints, false))
        with_mask = false;
    else if (full_params.config().input_width == encoder_input_width(joints, true))
        with_mask = true;
    else
        throw ConfigError("train_submotion: full encoder width does not match the dataset topology");

    const auto train_idx = dataset.split_indices("train");
    if (train_idx.empty()) throw DatasetError("train_submotion: no sequences in the train split");

    std::vector<detail::SubmotionSample> samples;
    for (int i : train_idx) {
        const auto& seq = dataset.sequences[static_cast<std::size_t>(i)];
        const MotionSignature parent_sig =
            encode(full_params, build_encoder_input(seq, with_mask));
        for (auto& sub : sample_subsequences(seq, windows.window_fractions, windows.stride_fraction,
                                             cfg.seed)) {
            detail::SubmotionSample sample;
            sample.input = build_encoder_input(sub.window, with_mask).values.cast<float>();
            sample.target = parent_sig;
            samples.push_back(std::move(sample));
        }
    }
    if (samples.empty())
        throw DatasetError("train_submotion: no windows could be sampled (sequences too short)");

    // hold out a slice of windows for early stopping
    std::vector<const detail::SubmotionSample*> fit, val;
    {
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(cfg.seed, 0x535542ULL));
        rng.shuffle(order);
        const std::size_t val_count =
            samples.size() >= 20
                ? static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(samples.size()))
                : 0;
        for (std::size_t k = 0; k < order.size(); ++k)
            (k < val_count ? val : fit).push_back(&samples[order[k]]);
        if (fit.empty()) std::swap(fit, val);
    }

    EncoderParams<float> params =
        EncoderParams<float>::random_init(sub_config, derive_seed(cfg.seed, 0x53494e49ULL));
    if (warm_start) {
        // copy the recurrent and projection tensors; the dropped class head
        // (if any) sits at the end of the full buffer and is skipped
        std::copy_n(full_params.data().begin(), params.size(), params.data().begin());
    }
    SubmotionTrainResult result{params, {}};
    if (cfg.max_epochs == 0) return result;

    AdamOptimizer<float> optimizer(params.size(), cfg.learning_rate);
    EncoderParams<float> grads(sub_config);
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    std::vector<const detail::SubmotionSample*> shuffled = fit;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, 2000 + epoch));
        rng.shuffle(shuffled);
        double loss_sum = 0.0;
        std::size_t count = 0;
        for (std::size_t start = 0; start < shuffled.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(shuffled.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double loss = detail::submotion_batch_gradients(
                params, std::span<const detail::SubmotionSample* const>(shuffled.data() + start,
                                                                        stop - start),
                grads);
            if (!std::isfinite(loss))
                throw NumericError("train_submotion: non-finite loss in epoch " +
                                   std::to_string(epoch) + ", batch starting at " +
                                   std::to_string(start));
            optimizer.step(params.data(), grads.data());
            loss_sum += loss * static_cast<double>(stop - start);
            count += stop - start;
        }

        SubmotionLogRow row;
        row.epoch = epoch;
        row.mean_l2 = count ? loss_sum / static_cast<double>(count) : 0.0;
        if (!val.empty()) {
            double val_sum = 0.0;
            for (const auto* sample : val) {
                const Eigen::VectorXf diff =
                    encoder_forward(params, sample->input, false).embedding - sample->target;
                val_sum += 0.5 * static_cast<double>(diff.squaredNorm());
            }
            row.val_l2 = val_sum / static_cast<double>(val.size());
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        result.log.rows.push_back(row);

        if (val.empty() || row.val_l2 < best_val) {
            best_val = row.val_l2;
            best_epoch = epoch;
            result.params = params;
        }
        if (!val.empty() && epoch - best_epoch >= cfg.patience) break;
    }
    return result;
}

/// Encodes a window with the sub-motion encoder and searches the
/// full-sequence index for the parents it most plausibly came from.
inline QueryResult query_submotion(const EncoderParams<float>& submotion_params,
                                   const SkeletonSequence& window, const EmbeddingIndex& index,
                                   int k) {
    const bool with_mask = submotion_params.config().input_width ==
                           encoder_input_width(window.joint_count(), true);
    const MotionSignature sig =
        encode(submotion_params, build_encoder_input(window, with_mask));
    return query(index, sig, k);
}

}  // namespace deephums
