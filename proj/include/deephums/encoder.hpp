#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "deephums/common.hpp"
#include "deephums/features.hpp"
#include "deephums/rng.hpp"

namespace deephums {

enum class CellType { Gru, Tanh };
enum class Readout { FinalState, MeanPool };

inline std::string to_string(CellType c) { return c == CellType::Gru ? "gru" : "tanh"; }
inline std::string to_string(Readout r) { return r == Readout::FinalState ? "final" : "mean"; }
inline CellType cell_from_string(const std::string& s) {
    if (s == "gru") return CellType::Gru;
    if (s == "tanh") return CellType::Tanh;
    throw ConfigError("unknown cell type '" + s + "' (expected gru or tanh)");
}
inline Readout readout_from_string(const std::string& s) {
    if (s == "final") return Readout::FinalState;
    if (s == "mean") return Readout::MeanPool;
    throw ConfigError("unknown readout '" + s + "' (expected final or mean)");
}

/// Architecture of the sequence encoder. The embedding is read out of the
/// top recurrent layer's final hidden state (or mean over time) through a
/// linear projection; an optional linear head on the embedding provides
/// class logits for the supervised regime.
struct EncoderConfig {
    int input_width = 0;
    int hidden_size = 256;
    int num_layers = 2;
    int embedding_dim = 512;
    std::optional<int> class_count;
    CellType cell = CellType::Gru;
    Readout readout = Readout::FinalState;

    bool operator==(const EncoderConfig&) const = default;

    void validate() const {
        if (input_width <= 0) throw ConfigError("encoder: input_width must be positive");
        if (hidden_size <= 0) throw ConfigError("encoder: hidden_size must be positive");
        if (num_layers <= 0) throw ConfigError("encoder: num_layers must be positive");
        if (embedding_dim <= 0) throw ConfigError("encoder: embedding_dim must be positive");
        if (class_count && *class_count <= 0)
            throw ConfigError("encoder: class_count must be positive when set");
    }
};

/// Shape and flat-buffer location of one named parameter tensor.
struct TensorInfo {
    std::string name;
    int rows = 0;
    int cols = 0;  // 1 for bias vectors
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// All encoder parameters in one flat, contiguous buffer with a declared
/// tensor layout. Gradients use the same type, so optimizer steps and
/// finite-difference probes are plain elementwise passes over the buffer.
template <typename Scalar>
class EncoderParams {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatMap = Eigen::Map<Matrix>;
    using ConstMatMap = Eigen::Map<const Matrix>;
    using VecMap = Eigen::Map<Vector>;
    using ConstVecMap = Eigen::Map<const Vector>;

    EncoderParams() = default;

    explicit EncoderParams(const EncoderConfig& config) : config_(config) {
        config.validate();
        std::size_t offset = 0;
        auto add = [&](const std::string& name, int rows, int cols) {
            tensors_.push_back({name, rows, cols, offset});
            offset += tensors_.back().size();
        };
        const int h = config.hidden_size;
        for (int l = 0; l < config.num_layers; ++l) {
            const int in = l == 0 ? config.input_width : h;
            const std::string p = "layer" + std::to_string(l) + ".";
            if (config.cell == CellType::Gru) {
                add(p + "w_r", h, in);
                add(p + "w_z", h, in);
                add(p + "w_n", h, in);
                add(p + "u_r", h, h);
                add(p + "u_z", h, h);
                add(p + "u_n", h, h);
                add(p + "b_r", h, 1);
                add(p + "b_z", h, 1);
                add(p + "b_n", h, 1);
            } else {
                add(p + "w", h, in);
                add(p + "u", h, h);
                add(p + "b", h, 1);
            }
        }
        add("proj.w", config.embedding_dim, h);
        add("proj.b", config.embedding_dim, 1);
        if (config.class_count) {
            add("classifier.w", *config.class_count, config.embedding_dim);
            add("classifier.b", *config.class_count, 1);
        }
        data_.assign(offset, Scalar(0));
    }

    /// Uniform init in (-1/sqrt(fan), 1/sqrt(fan)); recurrent tensors use the
    /// hidden size as fan, linear layers their input width.
    static EncoderParams random_init(const EncoderConfig& config, std::uint64_t seed) {
        EncoderParams params(config);
        Rng rng(seed);
        for (const auto& t : params.tensors_) {
            const bool linear = t.name.rfind("proj.", 0) == 0 || t.name.rfind("classifier.", 0) == 0;
            const int fan = linear ? (t.cols > 1 ? t.cols : config.hidden_size) : config.hidden_size;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
            Scalar* p = params.data_.data() + t.offset;
            for (std::size_t i = 0; i < t.size(); ++i)
                p[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        }
        return params;
    }

    const EncoderConfig& config() const { return config_; }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }
    std::vector<Scalar>& data() { return data_; }
    const std::vector<Scalar>& data() const { return data_; }
    std::size_t size() const { return data_.size(); }

    MatMap matrix(std::size_t idx) {
        const auto& t = tensors_[idx];
        return MatMap(data_.data() + t.offset, t.rows, t.cols);
    }
    ConstMatMap matrix(std::size_t idx) const {
        const auto& t = tensors_[idx];
        return ConstMatMap(data_.data() + t.offset, t.rows, t.cols);
    }
    VecMap vec(std::size_t idx) {
        const auto& t = tensors_[idx];
        return VecMap(data_.data() + t.offset, t.rows);
    }
    ConstVecMap vec(std::size_t idx) const {
        const auto& t = tensors_[idx];
        return ConstVecMap(data_.data() + t.offset, t.rows);
    }

    // tensor indices by role
    std::size_t per_layer() const { return config_.cell == CellType::Gru ? 9 : 3; }
    std::size_t layer_base(int l) const { return static_cast<std::size_t>(l) * per_layer(); }
    std::size_t proj_w() const { return static_cast<std::size_t>(config_.num_layers) * per_layer(); }
    std::size_t proj_b() const { return proj_w() + 1; }
    std::size_t classifier_w() const { return proj_w() + 2; }
    std::size_t classifier_b() const { return proj_w() + 3; }

    void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }

    template <typename Other>
    EncoderParams<Other> cast() const {
        EncoderParams<Other> out(config_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out.data()[i] = static_cast<Other>(data_[i]);
        return out;
    }

    bool operator==(const EncoderParams& other) const {
        return config_ == other.config_ && data_ == other.data_;
    }

private:
    EncoderConfig config_;
    std::vector<TensorInfo> tensors_;
    std::vector<Scalar> data_;
};

/// Per-layer activations kept for backpropagation through time.
template <typename Scalar>
struct LayerCache {
    using Matrix = typename EncoderParams<Scalar>::Matrix;
    Matrix x;                 // input to the layer, I x T
    Matrix h;                 // hidden states, H x T
    Matrix r, z, n, unh;      // GRU gate activations (unused for tanh cells)
};

template <typename Scalar>
struct ForwardResult {
    typename EncoderParams<Scalar>::Vector embedding;  // E
    typename EncoderParams<Scalar>::Vector readout;    // H, the projected state
    std::vector<LayerCache<Scalar>> caches;            // empty unless requested
};

namespace detail {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
    return 1.0 / (1.0 + (-a).exp());
}

}  // namespace detail

/// Runs the recurrent stack over a (width x T) input. With want_cache the
/// per-step activations are retained for encoder_backward.
template <typename Scalar>
ForwardResult<Scalar> encoder_forward(const EncoderParams<Scalar>& params,
                                      const typename EncoderParams<Scalar>::Matrix& input,
                                      bool want_cache) {
    using Matrix = typename EncoderParams<Scalar>::Matrix;
    using Vector = typename EncoderParams<Scalar>::Vector;
    const auto& cfg = params.config();
    if (static_cast<int>(input.rows()) != cfg.input_width)
        throw ShapeError("encoder: input width " + std::to_string(input.rows()) +
                         " does not match configured width " + std::to_string(cfg.input_width));
    const int t_len = static_cast<int>(input.cols());
    if (t_len < 1) throw ArgumentError("encoder: empty input");

    ForwardResult<Scalar> result;
    if (want_cache) result.caches.resize(static_cast<std::size_t>(cfg.num_layers));

    Matrix x = input;
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::size_t base = params.layer_base(l);
        Matrix h(cfg.hidden_size, t_len);
        Matrix r, z, n, unh;
        if (cfg.cell == CellType::Gru) {
            const auto wr = params.matrix(base + 0), wz = params.matrix(base + 1),
                       wn = params.matrix(base + 2);
            const auto ur = params.matrix(base + 3), uz = params.matrix(base + 4),
                       un = params.matrix(base + 5);
            const auto br = params.vec(base + 6), bz = params.vec(base + 7),
                       bn = params.vec(base + 8);
            // input contributions for all steps at once
            Matrix wxr = (wr * x).colwise() + br;
            Matrix wxz = (wz * x).colwise() + bz;
            Matrix wxn = (wn * x).colwise() + bn;
            r.resize(cfg.hidden_size, t_len);
            z.resize(cfg.hidden_size, t_len);
            n.resize(cfg.hidden_size, t_len);
            unh.resize(cfg.hidden_size, t_len);
            Vector h_prev = Vector::Zero(cfg.hidden_size);
            for (int t = 0; t < t_len; ++t) {
                r.col(t) = detail::sigmoid((wxr.col(t) + ur * h_prev).array());
                z.col(t) = detail::sigmoid((wxz.col(t) + uz * h_prev).array());
                unh.col(t).noalias() = un * h_prev;
                n.col(t) = (wxn.col(t).array() + r.col(t).array() * unh.col(t).array()).tanh();
                h.col(t) = (Scalar(1) - z.col(t).array()) * n.col(t).array() +
                           z.col(t).array() * h_prev.array();
                h_prev = h.col(t);
            }
        } else {
            const auto w = params.matrix(base + 0);
            const auto u = params.matrix(base + 1);
            const auto b = params.vec(base + 2);
            Matrix wx = (w * x).colwise() + b;
            Vector h_prev = Vector::Zero(cfg.hidden_size);
            for (int t = 0; t < t_len; ++t) {
                h.col(t) = (wx.col(t) + u * h_prev).array().tanh();
                h_prev = h.col(t);
            }
        }
        if (want_cache) {
            auto& cache = result.caches[static_cast<std::size_t>(l)];
            cache.x = std::move(x);
            cache.h = h;
            cache.r = std::move(r);
            cache.z = std::move(z);
            cache.n = std::move(n);
            cache.unh = std::move(unh);
        }
        x = std::move(h);
    }

    if (cfg.readout == Readout::FinalState)
        result.readout = x.col(t_len - 1);
    else
        result.readout = x.rowwise().mean();
    result.embedding = params.matrix(params.proj_w()) * result.readout + params.vec(params.proj_b());
    return result;
}

/// Backpropagates d(loss)/d(embedding) through the projection and the
/// recurrent stack, accumulating into `grads` (same layout as the params).
/// Exactness against central finite differences is part of the test suite.
template <typename Scalar>
void encoder_backward(const EncoderParams<Scalar>& params, const ForwardResult<Scalar>& fwd,
                      const typename EncoderParams<Scalar>::Vector& dembedding,
                      EncoderParams<Scalar>& grads) {
    using Matrix = typename EncoderParams<Scalar>::Matrix;
    using Vector = typename EncoderParams<Scalar>::Vector;
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    const auto& cfg = params.config();
    if (fwd.caches.empty())
        throw ArgumentError("encoder_backward: forward pass was run without cache");
    const int t_len = static_cast<int>(fwd.caches.front().x.cols());

    grads.matrix(grads.proj_w()).noalias() += dembedding * fwd.readout.transpose();
    grads.vec(grads.proj_b()) += dembedding;
    Vector dreadout = params.matrix(params.proj_w()).transpose() * dembedding;

    Matrix dh_out = Matrix::Zero(cfg.hidden_size, t_len);
    if (cfg.readout == Readout::FinalState)
        dh_out.col(t_len - 1) = dreadout;
    else
        dh_out.colwise() += Vector(dreadout / Scalar(t_len));

    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        const auto& cache = fwd.caches[static_cast<std::size_t>(l)];
        const std::size_t base = params.layer_base(l);
        Matrix dx = Matrix::Zero(cache.x.rows(), t_len);
        if (cfg.cell == CellType::Gru) {
            const auto ur = params.matrix(base + 3), uz = params.matrix(base + 4),
                       un = params.matrix(base + 5);
            Matrix dar(cfg.hidden_size, t_len), daz(cfg.hidden_size, t_len),
                dan(cfg.hidden_size, t_len);
            Vector carry = Vector::Zero(cfg.hidden_size);
            for (int t = t_len - 1; t >= 0; --t) {
                const Array dh = (dh_out.col(t) + carry).array();
                const Array r = cache.r.col(t).array();
                const Array z = cache.z.col(t).array();
                const Array n = cache.n.col(t).array();
                const Array unh = cache.unh.col(t).array();
                const Array h_prev = t > 0 ? Array(cache.h.col(t - 1).array())
                                           : Array(Array::Zero(cfg.hidden_size));
                const Array dn = dh * (Scalar(1) - z);
                const Array dz = dh * (h_prev - n);
                Array dh_prev = dh * z;
                const Array dan_t = dn * (Scalar(1) - n.square());
                const Array dr = dan_t * unh;
                const Array dan_r = dan_t * r;  // gradient into (u_n h_prev)
                dh_prev += (un.transpose() * dan_r.matrix()).array();
                const Array dar_t = dr * r * (Scalar(1) - r);
                dh_prev += (ur.transpose() * dar_t.matrix()).array();
                const Array daz_t = dz * z * (Scalar(1) - z);
                dh_prev += (uz.transpose() * daz_t.matrix()).array();
                dar.col(t) = dar_t;
                daz.col(t) = daz_t;
                dan.col(t) = dan_t;
                if (t > 0) {
                    grads.matrix(base + 3).noalias() += dar_t.matrix() * h_prev.matrix().transpose();
                    grads.matrix(base + 4).noalias() += daz_t.matrix() * h_prev.matrix().transpose();
                    grads.matrix(base + 5).noalias() += dan_r.matrix() * h_prev.matrix().transpose();
                }
                carry = dh_prev.matrix();
            }
            grads.matrix(base + 0).noalias() += dar * cache.x.transpose();
            grads.matrix(base + 1).noalias() += daz * cache.x.transpose();
            grads.matrix(base + 2).noalias() += dan * cache.x.transpose();
            grads.vec(base + 6) += dar.rowwise().sum();
            grads.vec(base + 7) += daz.rowwise().sum();
            grads.vec(base + 8) += dan.rowwise().sum();
            const auto wr = params.matrix(base + 0), wz = params.matrix(base + 1),
                       wn = params.matrix(base + 2);
            dx.noalias() += wr.transpose() * dar;
            dx.noalias() += wz.transpose() * daz;
            dx.noalias() += wn.transpose() * dan;
        } else {
            const auto w = params.matrix(base + 0);
            const auto u = params.matrix(base + 1);
            Matrix da(cfg.hidden_size, t_len);
            Vector carry = Vector::Zero(cfg.hidden_size);
            for (int t = t_len - 1; t >= 0; --t) {
                const Array dh = (dh_out.col(t) + carry).array();
                const Array h = cache.h.col(t).array();
                const Array da_t = dh * (Scalar(1) - h.square());
                da.col(t) = da_t;
                if (t > 0)
                    grads.matrix(base + 1).noalias() +=
                        da_t.matrix() * cache.h.col(t - 1).transpose();
                carry = u.transpose() * da_t.matrix();
            }
            grads.matrix(base + 0).noalias() += da * cache.x.transpose();
            grads.vec(base + 2) += da.rowwise().sum();
            dx.noalias() += w.transpose() * da;
        }
        dh_out = std::move(dx);
    }
}

/// The fixed-length motion signature of one sequence.
template <typename Scalar>
using Signature = typename EncoderParams<Scalar>::Vector;

using MotionSignature = Eigen::VectorXf;

/// Encodes a feature matrix into a motion signature. Deterministic given the
/// parameters; accepts any sequence length of at least two frames.
template <typename Scalar>
Signature<Scalar> encode(const EncoderParams<Scalar>& params, const EncoderInput& input) {
    if (input.frames() < 2)
        throw ArgumentError("encode: sequence must have at least 2 frames");
    if (input.width() != params.config().input_width)
        throw ShapeError("encode: input width " + std::to_string(input.width()) +
                         " does not match configured width " +
                         std::to_string(params.config().input_width));
    if (!input.values.allFinite()) throw ValidationError("encode: non-finite encoder input");
    const typename EncoderParams<Scalar>::Matrix x = input.values.template cast<Scalar>();
    return encoder_forward(params, x, /*want_cache=*/false).embedding;
}

}  // namespace deephums
