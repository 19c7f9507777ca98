#pragma once

// Gated-recurrent-unit forecaster for the per-frame mixture feature vectors.
//
// Orientation: the input-side matrices are stored D_q x D_h and the output
// matrix D_h x D_q, so a column input q enters as W^T q and the prediction is
// W_o^T h. The square recurrent matrices act as U h.
//
//   r  = sigmoid(W_r^T q + U_r h_prev)
//   z  = sigmoid(W_z^T q + U_z h_prev)
//   c  = tanh(W_c^T q + U_c (r .* h_prev))
//   h  = z .* h_prev + (1 - z) .* c
//   y  = W_o^T h                       (prediction of the next input)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vlcuav/error.hpp"

namespace vlcuav::gru {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The seven trainable matrices. Also used for gradients.
struct Weights {
    MatrixXd w_reset, u_reset;
    MatrixXd w_update, u_update;
    MatrixXd w_candidate, u_candidate;
    MatrixXd w_out;

    template <typename Fn>
    void for_each(Fn&& fn)
    {
        fn("W_r", w_reset);
        fn("U_r", u_reset);
        fn("W_z", w_update);
        fn("U_z", u_update);
        fn("W_h", w_candidate);
        fn("U_h", u_candidate);
        fn("W_o", w_out);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        fn("W_r", w_reset);
        fn("U_r", u_reset);
        fn("W_z", w_update);
        fn("U_z", u_update);
        fn("W_h", w_candidate);
        fn("U_h", u_candidate);
        fn("W_o", w_out);
    }

    static Weights zeros(Eigen::Index input_dim, Eigen::Index hidden_dim)
    {
        Weights w;
        w.w_reset = w.w_update = w.w_candidate = MatrixXd::Zero(input_dim, hidden_dim);
        w.u_reset = w.u_update = w.u_candidate = MatrixXd::Zero(hidden_dim, hidden_dim);
        w.w_out = MatrixXd::Zero(hidden_dim, input_dim);
        return w;
    }

    /// this += factor * other
    void add_scaled(double factor, const Weights& other)
    {
        w_reset += factor * other.w_reset;
        u_reset += factor * other.u_reset;
        w_update += factor * other.w_update;
        u_update += factor * other.u_update;
        w_candidate += factor * other.w_candidate;
        u_candidate += factor * other.u_candidate;
        w_out += factor * other.w_out;
    }

    double squared_norm() const
    {
        double s = 0.0;
        for_each([&](const char*, const MatrixXd& m) { s += m.squaredNorm(); });
        return s;
    }

    bool all_finite() const
    {
        bool ok = true;
        for_each([&](const char*, const MatrixXd& m) { ok = ok && m.allFinite(); });
        return ok;
    }

    friend bool operator==(const Weights& a, const Weights& b)
    {
        auto same = [](const MatrixXd& x, const MatrixXd& y) {
            return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
        };
        return same(a.w_reset, b.w_reset) && same(a.u_reset, b.u_reset) && same(a.w_update, b.w_update) &&
               same(a.u_update, b.u_update) && same(a.w_candidate, b.w_candidate) &&
               same(a.u_candidate, b.u_candidate) && same(a.w_out, b.w_out);
    }
};

struct Model {
    Eigen::Index input_dim = 0;  // D_q
    Eigen::Index hidden_dim = 0; // D_h
    std::uint64_t seed = 0;
    Weights weights;

    friend bool operator==(const Model&, const Model&) = default;
};

/// Entries i.i.d. uniform on [-1/sqrt(D_h), 1/sqrt(D_h)].
inline Model init_model(Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed)
{
    if (input_dim < 1 || hidden_dim < 1)
        throw Error(ErrorKind::invalid_argument, "GRU dimensions must be positive");
    Model m{input_dim, hidden_dim, seed, Weights::zeros(input_dim, hidden_dim)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    m.weights.for_each([&](const char*, MatrixXd& w) {
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w.data()[i] = dist(rng);
    });
    return m;
}

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Everything one recurrence step produces; kept for backpropagation.
struct StepCache {
    VectorXd reset;
    VectorXd update;
    VectorXd candidate;
    VectorXd hidden_prev;
    VectorXd hidden;
    VectorXd prediction;
};

inline StepCache step(const Model& model, const VectorXd& input, const VectorXd& hidden_prev)
{
    if (input.size() != model.input_dim || hidden_prev.size() != model.hidden_dim)
        throw Error(ErrorKind::shape_mismatch, "GRU step input does not match model dimensions");
    const auto& w = model.weights;
    StepCache s;
    s.hidden_prev = hidden_prev;
    s.reset = (w.w_reset.transpose() * input + w.u_reset * hidden_prev).unaryExpr(&sigmoid);
    s.update = (w.w_update.transpose() * input + w.u_update * hidden_prev).unaryExpr(&sigmoid);
    s.candidate = (w.w_candidate.transpose() * input + w.u_candidate * s.reset.cwiseProduct(hidden_prev))
                      .array()
                      .tanh()
                      .matrix();
    s.hidden = s.update.cwiseProduct(hidden_prev) +
               (VectorXd::Ones(model.hidden_dim) - s.update).cwiseProduct(s.candidate);
    s.prediction = w.w_out.transpose() * s.hidden;
    return s;
}

struct ForwardTrace {
    std::vector<StepCache> steps;
    MatrixXd predictions; // column t predicts input column t + 1; the last one is the forecast

    VectorXd forecast() const { return predictions.col(predictions.cols() - 1); }
};

/// Runs the recurrence over the columns of `series` starting from h_0 = 0.
inline ForwardTrace forward(const Model& model, const MatrixXd& series)
{
    if (series.cols() < 2)
        throw Error(ErrorKind::series_too_short, "at least two time steps are required");
    if (series.rows() != model.input_dim)
        throw Error(ErrorKind::shape_mismatch, "series feature count does not match the model");
    ForwardTrace trace;
    trace.steps.reserve(static_cast<std::size_t>(series.cols()));
    trace.predictions.resize(model.input_dim, series.cols());
    VectorXd h = VectorXd::Zero(model.hidden_dim);
    for (Eigen::Index t = 0; t < series.cols(); ++t) {
        trace.steps.push_back(step(model, series.col(t), h));
        h = trace.steps.back().hidden;
        trace.predictions.col(t) = trace.steps.back().prediction;
    }
    return trace;
}

/// Sum over time of half the squared Euclidean error; columns are time steps.
inline double loss(const MatrixXd& predictions, const MatrixXd& targets)
{
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
        throw Error(ErrorKind::shape_mismatch, "predictions and targets differ in shape");
    return 0.5 * (targets - predictions).squaredNorm();
}

/// Teacher-forced next-step loss of a forward pass over `series`.
inline double series_loss(const ForwardTrace& trace, const MatrixXd& series)
{
    const auto n = series.cols() - 1;
    return loss(trace.predictions.leftCols(n), series.rightCols(n));
}

/// Exact gradient of series_loss() with respect to all seven matrices by
/// reverse accumulation through the unrolled recurrence.
inline Weights backward(const Model& model, const MatrixXd& series, const ForwardTrace& trace)
{
    const auto& w = model.weights;
    const Eigen::Index steps = series.cols();
    Weights g = Weights::zeros(model.input_dim, model.hidden_dim);
    VectorXd dh_next = VectorXd::Zero(model.hidden_dim);
    const VectorXd ones = VectorXd::Ones(model.hidden_dim);

    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto& s = trace.steps[static_cast<std::size_t>(t)];
        VectorXd dh = dh_next;
        if (t + 1 < steps) {
            const VectorXd dy = s.prediction - series.col(t + 1);
            g.w_out.noalias() += s.hidden * dy.transpose();
            dh.noalias() += w.w_out * dy;
        }
        const auto q = series.col(t);

        const VectorXd dz = dh.cwiseProduct(s.hidden_prev - s.candidate);
        const VectorXd dc = dh.cwiseProduct(ones - s.update);
        VectorXd dh_prev = dh.cwiseProduct(s.update);

        const VectorXd da_c = dc.cwiseProduct(ones - s.candidate.cwiseProduct(s.candidate));
        const VectorXd gated = s.reset.cwiseProduct(s.hidden_prev);
        g.w_candidate.noalias() += q * da_c.transpose();
        g.u_candidate.noalias() += da_c * gated.transpose();
        const VectorXd dgated = w.u_candidate.transpose() * da_c;
        const VectorXd dr = dgated.cwiseProduct(s.hidden_prev);
        dh_prev += dgated.cwiseProduct(s.reset);

        const VectorXd da_z = dz.cwiseProduct(s.update.cwiseProduct(ones - s.update));
        g.w_update.noalias() += q * da_z.transpose();
        g.u_update.noalias() += da_z * s.hidden_prev.transpose();
        dh_prev.noalias() += w.u_update.transpose() * da_z;

        const VectorXd da_r = dr.cwiseProduct(s.reset.cwiseProduct(ones - s.reset));
        g.w_reset.noalias() += q * da_r.transpose();
        g.u_reset.noalias() += da_r * s.hidden_prev.transpose();
        dh_prev.noalias() += w.u_reset.transpose() * da_r;

        dh_next = std::move(dh_prev);
    }
    return g;
}

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 100;
    double gradient_clip = 5.0; // global L2 norm; <= 0 disables
    std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c)
{
    if (!(c.learning_rate > 0.0))
        throw Error(ErrorKind::invalid_argument, "learning rate must be positive");
    if (c.epochs < 1)
        throw Error(ErrorKind::invalid_argument, "at least one epoch is required");
}

struct TrainResult {
    Model model;
    std::vector<double> loss_history; // loss at the start of each epoch
};

/// Full-batch gradient descent, one update per epoch, with global-norm clipping.
inline TrainResult train(Model model, const MatrixXd& series, const TrainConfig& config)
{
    validate(config);
    TrainResult out;
    out.loss_history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto trace = forward(model, series);
        const double e = series_loss(trace, series);
        if (!std::isfinite(e))
            throw Error(ErrorKind::diverged, "non-finite loss at epoch " + std::to_string(epoch));
        out.loss_history.push_back(e);
        Weights grad = backward(model, series, trace);
        double scale = config.learning_rate;
        if (config.gradient_clip > 0.0) {
            const double norm = std::sqrt(grad.squared_norm());
            if (norm > config.gradient_clip)
                scale *= config.gradient_clip / norm;
        }
        model.weights.add_scaled(-scale, grad);
        if (!model.weights.all_finite())
            throw Error(ErrorKind::diverged, "non-finite weights after epoch " + std::to_string(epoch));
    }
    out.model = std::move(model);
    return out;
}

/// Per-feature min-max scaling onto [0, 1]; constant features map to 0.5.
struct Normalization {
    VectorXd min;
    VectorXd max;

    static Normalization fit(const MatrixXd& series)
    {
        return {series.rowwise().minCoeff(), series.rowwise().maxCoeff()};
    }

    MatrixXd apply(const MatrixXd& raw) const
    {
        MatrixXd out(raw.rows(), raw.cols());
        for (Eigen::Index f = 0; f < raw.rows(); ++f) {
            const double span = max(f) - min(f);
            for (Eigen::Index t = 0; t < raw.cols(); ++t)
                out(f, t) = span > 0.0 ? (raw(f, t) - min(f)) / span : 0.5;
        }
        return out;
    }

    VectorXd invert(const VectorXd& scaled) const
    {
        VectorXd out(scaled.size());
        for (Eigen::Index f = 0; f < scaled.size(); ++f)
            out(f) = min(f) + scaled(f) * (max(f) - min(f));
        return out;
    }

    friend bool operator==(const Normalization& a, const Normalization& b)
    {
        return a.min.size() == b.min.size() && a.max.size() == b.max.size() && a.min == b.min && a.max == b.max;
    }
};

/// Forecast of the column following `raw_series`, on the raw feature scale.
inline VectorXd predict_next(const Model& model, const MatrixXd& raw_series, const Normalization& norm)
{
    if (norm.min.size() != raw_series.rows())
        throw Error(ErrorKind::shape_mismatch, "normalisation does not match the series");
    return norm.invert(forward(model, norm.apply(raw_series)).forecast());
}

/// Root-mean-square one-step error over prediction columns [first, last),
/// each predicting the next series column. Averaged over features and steps.
inline double one_step_rmse(const ForwardTrace& trace, const MatrixXd& series, Eigen::Index first, Eigen::Index last)
{
    if (last <= first)
        return std::numeric_limits<double>::quiet_NaN();
    const auto n = last - first;
    const MatrixXd diff = trace.predictions.middleCols(first, n) - series.middleCols(first + 1, n);
    return std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
}

} // namespace vlcuav::gru
