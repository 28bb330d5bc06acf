#pragma once

// Toy two-layer encoder with a softmax classifier head, plus its mean-teacher pair.

#include "ncplr/common.hpp"
#include "ncplr/data.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

namespace ncplr {

struct Dense {
    RowMatrix weight;  // out × in
    Vector bias;       // out

    Index in() const { return static_cast<Index>(weight.cols()); }
    Index out() const { return static_cast<Index>(weight.rows()); }
};

/// input -> ReLU hidden -> L2-normalized embedding -> softmax over K clusters.
struct EncoderModel {
    Dense hidden;
    Dense embed;
    Dense head;

    Index input_dim() const { return hidden.in(); }
    Index hidden_dim() const { return hidden.out(); }
    Index embed_dim() const { return embed.out(); }
    Index num_classes() const { return head.out(); }

    /// He-normal backbone, zero biases, empty head (set per epoch).
    static EncoderModel random(Index d_in, Index h, Index d, std::mt19937_64& rng) {
        if (d_in < 1 || h < 1 || d < 2) throw ConfigError("encoder dimensions must be positive (embedding >= 2)");
        auto init = [&](Index out, Index in) {
            std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(in)));
            Dense layer;
            layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = gauss(rng);
            }
            layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
            return layer;
        };
        EncoderModel m;
        m.hidden = init(h, d_in);
        m.embed = init(d, h);
        m.head.weight.resize(0, static_cast<Eigen::Index>(d));
        m.head.bias.resize(0);
        return m;
    }

    /// Starts as the identity map on unit inputs: hidden units come in ±x
    /// pairs and the embedding layer recombines them, so the first epoch
    /// clusters the raw geometry (the toy stand-in for a pretrained
    /// backbone). Hidden units beyond the 2·d_in pairs are He-random with
    /// zero outgoing weights.
    static EncoderModel identity(Index d_in, Index h, std::mt19937_64& rng) {
        if (h < 2 * d_in) throw ConfigError("identity init needs hidden_dim >= 2 x input dim");
        EncoderModel m = random(d_in, h, d_in, rng);
        const auto d = static_cast<Eigen::Index>(d_in);
        m.hidden.weight.topRows(2 * d).setZero();
        m.embed.weight.setZero();
        for (Eigen::Index i = 0; i < d; ++i) {
            m.hidden.weight(i, i) = 1.0;
            m.hidden.weight(d + i, i) = -1.0;
            m.embed.weight(i, i) = 1.0;
            m.embed.weight(i, d + i) = -1.0;
        }
        return m;
    }

    /// Classifier rows initialized to centroids / τ, so the head starts out
    /// agreeing with the memory-bank softmax.
    void reset_head(const RowMatrix& centroids, double tau) {
        head.weight = centroids / tau;
        head.bias = Vector::Zero(centroids.rows());
    }
};

/// Intermediates kept for the backward pass.
struct ForwardResult {
    RowMatrix input;
    RowMatrix hidden_pre;
    RowMatrix hidden;
    RowMatrix embed_pre;
    RowMatrix embeddings;  // unit rows
    RowMatrix logits;
    RowMatrix preds;       // simplex rows
};

inline ForwardResult forward(const EncoderModel& model, const RowMatrix& inputs) {
    if (static_cast<Index>(inputs.cols()) != model.input_dim()) throw UsageError("forward: input width differs from model");
    if (!inputs.allFinite()) throw NumericError("forward: non-finite input");
    ForwardResult r;
    r.input = inputs;
    r.hidden_pre = (inputs * model.hidden.weight.transpose()).rowwise() + model.hidden.bias.transpose();
    r.hidden = r.hidden_pre.cwiseMax(0.0);
    r.embed_pre = (r.hidden * model.embed.weight.transpose()).rowwise() + model.embed.bias.transpose();
    r.embeddings = r.embed_pre;
    for (Eigen::Index i = 0; i < r.embeddings.rows(); ++i) {
        double norm = r.embeddings.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("forward: embedding row " + std::to_string(i) + " has zero or non-finite norm");
        r.embeddings.row(i) /= norm;
    }
    if (model.num_classes() > 0) {
        r.logits = (r.embeddings * model.head.weight.transpose()).rowwise() + model.head.bias.transpose();
        r.preds = softmax_rows(r.logits);
    } else {
        r.logits.resize(inputs.rows(), 0);
        r.preds.resize(inputs.rows(), 0);
    }
    if (!r.logits.allFinite() || !r.preds.allFinite()) throw NumericError("forward: non-finite classifier output");
    return r;
}

/// Parameter gradients, same layout as the model.
struct EncoderGrads {
    Dense hidden;
    Dense embed;
    Dense head;
    RowMatrix input;  // gradient w.r.t. the inputs
};

/// Backpropagates gradients w.r.t. logits (B×K) and unit embeddings (B×d).
/// The embedding gradient from the head is added to `grad_embeddings`.
inline EncoderGrads backward(const EncoderModel& model, const ForwardResult& fr, const RowMatrix& grad_logits,
                             const RowMatrix& grad_embeddings) {
    EncoderGrads g;
    RowMatrix d_emb = grad_embeddings;
    if (model.num_classes() > 0 && grad_logits.size() > 0) {
        g.head.weight = grad_logits.transpose() * fr.embeddings;
        g.head.bias = grad_logits.colwise().sum().transpose();
        d_emb += grad_logits * model.head.weight;
    } else {
        g.head.weight = RowMatrix::Zero(model.head.weight.rows(), model.head.weight.cols());
        g.head.bias = Vector::Zero(model.head.bias.size());
    }
    // Through f = u / |u|.
    RowMatrix d_pre(d_emb.rows(), d_emb.cols());
    for (Eigen::Index i = 0; i < d_emb.rows(); ++i) {
        double norm = fr.embed_pre.row(i).norm();
        auto f = fr.embeddings.row(i);
        d_pre.row(i) = (d_emb.row(i) - f * f.dot(d_emb.row(i))) / norm;
    }
    g.embed.weight = d_pre.transpose() * fr.hidden;
    g.embed.bias = d_pre.colwise().sum().transpose();
    RowMatrix d_hidden = d_pre * model.embed.weight;
    d_hidden = d_hidden.cwiseProduct((fr.hidden_pre.array() > 0.0).cast<double>().matrix());
    g.hidden.weight = d_hidden.transpose() * fr.input;
    g.hidden.bias = d_hidden.colwise().sum().transpose();
    g.input = d_hidden * model.hidden.weight;
    return g;
}

/// Plain gradient descent step.
inline void apply_gradients(EncoderModel& model, const EncoderGrads& g, double lr) {
    model.hidden.weight -= lr * g.hidden.weight;
    model.hidden.bias -= lr * g.hidden.bias;
    model.embed.weight -= lr * g.embed.weight;
    model.embed.bias -= lr * g.embed.bias;
    model.head.weight -= lr * g.head.weight;
    model.head.bias -= lr * g.head.bias;
}

struct TeacherStudentPair {
    EncoderModel student;
    EncoderModel teacher;
    double ema_momentum = 0.99;
};

/// θ′ ← m θ′ + (1−m) θ for every parameter.
inline void ema_update(TeacherStudentPair& pair) {
    const double m = pair.ema_momentum;
    auto blend = [m](Dense& t, const Dense& s) {
        if (t.weight.rows() != s.weight.rows() || t.weight.cols() != s.weight.cols()) {
            throw UsageError("ema_update: teacher and student architectures differ");
        }
        t.weight = m * t.weight + (1.0 - m) * s.weight;
        t.bias = m * t.bias + (1.0 - m) * s.bias;
    };
    blend(pair.teacher.hidden, pair.student.hidden);
    blend(pair.teacher.embed, pair.student.embed);
    blend(pair.teacher.head, pair.student.head);
}

/// Embeds every row of a feature set with the model's backbone.
inline FeatureSet embed_features(const EncoderModel& model, const FeatureSet& fs) {
    FeatureSet out;
    out.features = forward(model, fs.features).embeddings;
    out.true_ids = fs.true_ids;
    out.cam_ids = fs.cam_ids;
    return out;
}

// Model file: "NCPM", u32 version, u64 d_in, h, d, K, then float32
// hidden.W, hidden.b, embed.W, embed.b, head.W, head.b (row-major).
namespace detail {
inline constexpr std::array<char, 4> kModelMagic{'N', 'C', 'P', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;
}  // namespace detail

inline void save_model(const EncoderModel& model, const std::filesystem::path& path) {
    std::string bytes(detail::kModelMagic.data(), 4);
    detail::put_le<std::uint32_t>(bytes, detail::kModelVersion);
    for (Index dim : {model.input_dim(), model.hidden_dim(), model.embed_dim(), model.num_classes()}) {
        detail::put_le<std::uint64_t>(bytes, dim);
    }
    auto put = [&](const Dense& layer) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::put_le<float>(bytes, static_cast<float>(layer.weight(r, c)));
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) detail::put_le<float>(bytes, static_cast<float>(layer.bias(r)));
    };
    put(model.hidden);
    put(model.embed);
    put(model.head);
    detail::write_file(path, bytes);
}

inline EncoderModel load_model(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    auto fail = [&](std::size_t offset, const std::string& what) {
        throw FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
    };
    constexpr std::size_t header = 4 + 4 + 4 * 8;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kModelMagic.data(), 4) != 0) fail(0, "bad magic");
    if (bytes.size() < header) fail(bytes.size(), "truncated header");
    if (detail::get_le<std::uint32_t>(bytes, 4) != detail::kModelVersion) fail(4, "unsupported version");
    std::array<std::uint64_t, 4> dims{};
    for (std::size_t i = 0; i < 4; ++i) dims[i] = detail::get_le<std::uint64_t>(bytes, 8 + 8 * i);
    const auto [d_in, h, d, k] = dims;
    for (auto v : dims) {
        if (v > bytes.size()) fail(8, "implausible dimension");
    }
    const std::uint64_t floats = h * d_in + h + d * h + d + k * d + k;
    if (bytes.size() != header + floats * 4) fail(bytes.size(), "payload size mismatch");
    std::size_t offset = header;
    auto take = [&](Index out, Index in) {
        Dense layer;
        layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        layer.bias.resize(static_cast<Eigen::Index>(out));
        auto next = [&]() {
            float v = detail::get_le<float>(bytes, offset);
            if (!std::isfinite(v)) fail(offset, "non-finite parameter");
            offset += 4;
            return static_cast<double>(v);
        };
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = next();
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = next();
        return layer;
    };
    EncoderModel m;
    m.hidden = take(h, d_in);
    m.embed = take(d, h);
    m.head = take(k, d);
    return m;
}

}  // namespace ncplr
