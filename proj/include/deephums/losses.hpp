#pragma once

#include <optional>
#include <span>

#include "deephums/encoder.hpp"

namespace deephums {

/// Weights of the composite training objective. classification_weight is 0
/// for the self-supervised regime; setting it to 0 in the supervised regime
/// recovers the self-supervised objective exactly on the same pair stream.
struct LossConfig {
    double margin = 1.0;
    double contrastive_weight = 1.0;
    double classification_weight = 0.0;

    void validate() const {
        if (!(margin > 0.0)) throw ArgumentError("loss: margin must be positive");
        if (contrastive_weight < 0.0 || classification_weight < 0.0)
            throw ArgumentError("loss: weights must be non-negative");
    }
};

/// Margin contrastive loss on two signatures: similar pairs pay half the
/// squared distance, dissimilar pairs half the squared margin shortfall.
/// Evaluated in double regardless of the signature scalar type.
template <typename DerivedA, typename DerivedB>
double contrastive_loss(const Eigen::MatrixBase<DerivedA>& sig_a,
                        const Eigen::MatrixBase<DerivedB>& sig_b, PairLabel label, double margin) {
    if (sig_a.size() != sig_b.size())
        throw ShapeError("contrastive_loss: signature dims differ (" + std::to_string(sig_a.size()) +
                         " vs " + std::to_string(sig_b.size()) + ")");
    if (!(margin > 0.0)) throw ArgumentError("contrastive_loss: margin must be positive");
    const double d =
        (sig_a.template cast<double>() - sig_b.template cast<double>()).norm();
    if (label == PairLabel::Similar) return 0.5 * d * d;
    const double shortfall = std::max(0.0, margin - d);
    return 0.5 * shortfall * shortfall;
}

/// Negative log-likelihood of the true class under softmax-normalized logits.
inline double classification_loss(const Eigen::VectorXd& logits, int true_class) {
    const int classes = static_cast<int>(logits.size());
    if (true_class < 0 || true_class >= classes)
        throw ArgumentError("classification_loss: class " + std::to_string(true_class) +
                            " out of range [0, " + std::to_string(classes) + ")");
    const double max_logit = logits.maxCoeff();
    const double lse = std::log((logits.array() - max_logit).exp().sum());
    return lse - (logits[true_class] - max_logit);
}

/// One resolved training pair: encoder inputs (already cast to the training
/// scalar), the pair label, and optional class labels for the heads.
template <typename Scalar>
struct TrainingPair {
    const typename EncoderParams<Scalar>::Matrix* input_a = nullptr;
    const typename EncoderParams<Scalar>::Matrix* input_b = nullptr;
    PairLabel label = PairLabel::Similar;
    std::optional<int> class_a;
    std::optional<int> class_b;
};

struct BatchStats {
    double contrastive = 0.0;      // mean raw contrastive loss
    double classification = 0.0;   // mean raw cross-entropy (0 if unused)
    double weighted_total(const LossConfig& cfg) const {
        return cfg.contrastive_weight * contrastive + cfg.classification_weight * classification;
    }
};

/// Exact gradients of the batch-mean weighted loss with respect to every
/// parameter, accumulated through both Siamese towers (one shared parameter
/// set). Returns the raw per-term batch means for logging.
template <typename Scalar>
BatchStats loss_gradients(const EncoderParams<Scalar>& params,
                          std::span<const TrainingPair<Scalar>> batch, const LossConfig& cfg,
                          EncoderParams<Scalar>& grads) {
    using Vector = typename EncoderParams<Scalar>::Vector;
    cfg.validate();
    if (batch.empty()) throw ArgumentError("loss_gradients: empty batch");
    const auto& config = params.config();
    const bool classify = cfg.classification_weight > 0.0 && config.class_count.has_value();

    grads.set_zero();
    BatchStats stats;
    for (const auto& pair : batch) {
        auto fwd_a = encoder_forward(params, *pair.input_a, /*want_cache=*/true);
        auto fwd_b = encoder_forward(params, *pair.input_b, /*want_cache=*/true);
        const Vector diff = fwd_a.embedding - fwd_b.embedding;
        const double dist = diff.template cast<double>().norm();

        Vector dsig_a = Vector::Zero(config.embedding_dim);
        Vector dsig_b = Vector::Zero(config.embedding_dim);
        if (pair.label == PairLabel::Similar) {
            stats.contrastive += 0.5 * dist * dist;
            dsig_a = Scalar(cfg.contrastive_weight) * diff;
            dsig_b = -dsig_a;
        } else {
            const double shortfall = cfg.margin - dist;
            if (shortfall > 0.0) {
                stats.contrastive += 0.5 * shortfall * shortfall;
                if (dist > 0.0) {
                    const Scalar coef = static_cast<Scalar>(-cfg.contrastive_weight * shortfall / dist);
                    dsig_a = coef * diff;
                    dsig_b = -dsig_a;
                }
            }
        }

        if (classify) {
            const auto head_w = params.matrix(params.classifier_w());
            const auto head_b = params.vec(params.classifier_b());
            auto tower = [&](const Vector& emb, std::optional<int> label, Vector& dsig) {
                if (!label) return;
                Vector logits = head_w * emb + head_b;
                const Eigen::VectorXd ld = logits.template cast<double>();
                stats.classification += 0.5 * classification_loss(ld, *label);
                const double max_logit = ld.maxCoeff();
                Eigen::VectorXd p = (ld.array() - max_logit).exp();
                p /= p.sum();
                p[*label] -= 1.0;
                const Vector dlogits =
                    (0.5 * cfg.classification_weight * p).template cast<Scalar>();
                grads.matrix(grads.classifier_w()).noalias() += dlogits * emb.transpose();
                grads.vec(grads.classifier_b()) += dlogits;
                dsig.noalias() += head_w.transpose() * dlogits;
            };
            tower(fwd_a.embedding, pair.class_a, dsig_a);
            tower(fwd_b.embedding, pair.class_b, dsig_b);
        }

        encoder_backward(params, fwd_a, dsig_a, grads);
        encoder_backward(params, fwd_b, dsig_b, grads);
    }

    const Scalar inv = Scalar(1) / static_cast<Scalar>(batch.size());
    for (auto& g : grads.data()) g *= inv;
    stats.contrastive /= static_cast<double>(batch.size());
    stats.classification /= static_cast<double>(batch.size());
    return stats;
}

/// Class logits for one embedding (supervised head).
template <typename Scalar>
typename EncoderParams<Scalar>::Vector class_logits(const EncoderParams<Scalar>& params,
                                                    const Signature<Scalar>& sig) {
    if (!params.config().class_count)
        throw ConfigError("class_logits: encoder has no classification head");
    return params.matrix(params.classifier_w()) * sig + params.vec(params.classifier_b());
}

}  // namespace deephums
