#pragma once

// Small dense feed-forward networks with exact backpropagation and Adam.
// Networks are column-batched: an input matrix has one sample per column.

#include <Eigen/Core>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrmb/rng.hpp"

namespace mrrmb {

enum class Activation { relu, tanh, identity };

template <typename Scalar>
struct MlpParams {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<Matrix> weights; // weights[l] is out_l x in_l
    std::vector<Vector> biases;
    Activation hidden = Activation::relu; // output layer is always linear

    std::size_t num_layers() const { return weights.size(); }
    Eigen::Index input_size() const { return weights.front().cols(); }
    Eigen::Index output_size() const { return weights.back().rows(); }

    /// Zero parameters with the given layer sizes (in, hidden..., out).
    static MlpParams zeros(const std::vector<int>& sizes, Activation act = Activation::relu) {
        if (sizes.size() < 2) throw std::invalid_argument("MlpParams: need at least two layer sizes");
        MlpParams p;
        p.hidden = act;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            p.weights.push_back(Matrix::Zero(sizes[l + 1], sizes[l]));
            p.biases.push_back(Vector::Zero(sizes[l + 1]));
        }
        return p;
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    static MlpParams random(const std::vector<int>& sizes, Rng& rng,
                            Activation act = Activation::relu) {
        MlpParams p = zeros(sizes, act);
        for (std::size_t l = 0; l < p.num_layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.weights[l].cols()));
            for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
                p.weights[l].data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
            for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
                p.biases[l](i) = static_cast<Scalar>(rng.uniform(-bound, bound));
        }
        return p;
    }

    bool same_shape(const MlpParams& o) const {
        if (o.weights.size() != weights.size()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (o.weights[l].rows() != weights[l].rows() || o.weights[l].cols() != weights[l].cols())
                return false;
        return true;
    }

    MlpParams zeros_like() const {
        MlpParams p;
        p.hidden = hidden;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            p.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
            p.biases.push_back(Vector::Zero(biases[l].size()));
        }
        return p;
    }

    double squared_norm() const {
        double s = 0.0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            s += static_cast<double>(weights[l].squaredNorm() + biases[l].squaredNorm());
        return s;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }

    MlpParams& operator*=(Scalar c) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] *= c;
            biases[l] *= c;
        }
        return *this;
    }

    MlpParams& operator+=(const MlpParams& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] += o.weights[l];
            biases[l] += o.biases[l];
        }
        return *this;
    }
};

/// Pre- and post-activation values of every layer for one batch.
template <typename Scalar>
struct ForwardTrace {
    using Matrix = typename MlpParams<Scalar>::Matrix;
    std::vector<Matrix> inputs;      // inputs[l] feeds layer l; inputs[0] is x
    std::vector<Matrix> preacts;     // z_l = W_l inputs[l] + b_l
    Matrix output;
};

namespace detail {

template <typename Derived>
auto activate(const Eigen::MatrixBase<Derived>& z, Activation act) {
    using S = typename Derived::Scalar;
    using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    switch (act) {
    case Activation::relu: return M(z.cwiseMax(S(0)));
    case Activation::tanh: return M(z.array().tanh().matrix());
    default: return M(z);
    }
}

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>
activation_slope(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& z, Activation act) {
    using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    switch (act) {
    case Activation::relu: return M((z.array() > S(0)).template cast<S>());
    case Activation::tanh: return M((S(1) - z.array().tanh().square()).matrix());
    default: return M::Ones(z.rows(), z.cols());
    }
}

template <typename Scalar>
void check_input(const MlpParams<Scalar>& p, Eigen::Index rows) {
    if (p.weights.empty()) throw std::invalid_argument("mlp: empty network");
    if (rows != p.input_size())
        throw std::invalid_argument("mlp: input has " + std::to_string(rows) + " rows, expected " +
                                    std::to_string(p.input_size()));
}

} // namespace detail

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward_trace(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
    detail::check_input(p, x.rows());
    ForwardTrace<Scalar> t;
    typename MlpParams<Scalar>::Matrix h = x.template cast<Scalar>();
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        t.inputs.push_back(h);
        typename MlpParams<Scalar>::Matrix z = p.weights[l] * h;
        z.colwise() += p.biases[l];
        const bool last = l + 1 == p.num_layers();
        h = last ? z : detail::activate(z, p.hidden);
        t.preacts.push_back(std::move(z));
    }
    t.output = std::move(h);
    return t;
}

/// Network output for a batch (one column per sample).
template <typename Scalar, typename Derived>
typename MlpParams<Scalar>::Matrix forward(const MlpParams<Scalar>& p,
                                           const Eigen::MatrixBase<Derived>& x) {
    detail::check_input(p, x.rows());
    typename MlpParams<Scalar>::Matrix h = x.template cast<Scalar>();
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        typename MlpParams<Scalar>::Matrix z = p.weights[l] * h;
        z.colwise() += p.biases[l];
        h = l + 1 == p.num_layers() ? z : detail::activate(z, p.hidden);
    }
    return h;
}

/// Gradient of sum_b upstream(:, b) . output(:, b) with respect to every
/// parameter, summed over the batch.
template <typename Scalar, typename Derived>
MlpParams<Scalar> backward(const MlpParams<Scalar>& p, const ForwardTrace<Scalar>& t,
                           const Eigen::MatrixBase<Derived>& upstream) {
    if (upstream.rows() != p.output_size() || upstream.cols() != t.output.cols())
        throw std::invalid_argument("mlp backward: upstream gradient shape mismatch");
    MlpParams<Scalar> g = p.zeros_like();
    typename MlpParams<Scalar>::Matrix delta = upstream.template cast<Scalar>();
    for (std::size_t l = p.num_layers(); l-- > 0;) {
        if (l + 1 != p.num_layers())
            delta = delta.cwiseProduct(detail::activation_slope<Scalar>(t.preacts[l], p.hidden));
        g.weights[l].noalias() = delta * t.inputs[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > 0) delta = p.weights[l].transpose() * delta;
    }
    return g;
}

template <typename Scalar, typename DerivedX, typename DerivedU>
MlpParams<Scalar> backward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<DerivedX>& x,
                           const Eigen::MatrixBase<DerivedU>& upstream) {
    return backward(p, forward_trace(p, x), upstream);
}

/// Adam moments and hyperparameters for one network.
template <typename Scalar>
struct AdamState {
    MlpParams<Scalar> m;
    MlpParams<Scalar> v;
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 10.0; // <= 0 disables gradient-norm clipping

    AdamState() = default;
    explicit AdamState(const MlpParams<Scalar>& like, double lr = 1e-3)
        : m(like.zeros_like()), v(like.zeros_like()), learning_rate(lr) {}
};

/// One Adam update. `maximize` ascends the gradient instead of descending.
template <typename Scalar>
void adam_step(MlpParams<Scalar>& params, AdamState<Scalar>& st, const MlpParams<Scalar>& grad,
               bool maximize) {
    if (!params.same_shape(grad) || !params.same_shape(st.m))
        throw std::invalid_argument("adam_step: shape mismatch");
    ++st.step;
    double scale = maximize ? -1.0 : 1.0;
    if (st.clip_norm > 0.0) {
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > st.clip_norm) scale *= st.clip_norm / norm;
    }
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    const auto b1 = static_cast<Scalar>(st.beta1), b2 = static_cast<Scalar>(st.beta2);
    const auto lr = static_cast<Scalar>(st.learning_rate * std::sqrt(c2) / c1);
    const auto eps = static_cast<Scalar>(st.epsilon * std::sqrt(c2));
    const auto s = static_cast<Scalar>(scale);

    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m.array() = b1 * m.array() + (Scalar(1) - b1) * s * g.array();
        v.array() = b2 * v.array() + (Scalar(1) - b2) * (s * g.array()).square();
        param.array() -= lr * m.array() / (v.array().sqrt() + eps);
    };
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        update(params.weights[l], st.m.weights[l], st.v.weights[l], grad.weights[l]);
        update(params.biases[l], st.m.biases[l], st.v.biases[l], grad.biases[l]);
    }
}

/// target <- tau * source + (1 - tau) * target
template <typename Scalar>
void soft_update(MlpParams<Scalar>& target, const MlpParams<Scalar>& source, double tau) {
    if (!target.same_shape(source)) throw std::invalid_argument("soft_update: shape mismatch");
    const auto t = static_cast<Scalar>(tau);
    for (std::size_t l = 0; l < target.num_layers(); ++l) {
        target.weights[l] = t * source.weights[l] + (Scalar(1) - t) * target.weights[l];
        target.biases[l] = t * source.biases[l] + (Scalar(1) - t) * target.biases[l];
    }
}

// Checkpoint text format, version 1:
//   mlp 1 <activation> <num_layers>
//   then per layer: "dense <rows> <cols>", rows*cols weights (row-major), rows biases.
template <typename Scalar>
void save_params(std::ostream& os, const MlpParams<Scalar>& p) {
    const char* act = p.hidden == Activation::relu ? "relu" : p.hidden == Activation::tanh ? "tanh" : "identity";
    const auto old = os.precision(std::numeric_limits<Scalar>::max_digits10);
    os << "mlp 1 " << act << ' ' << p.num_layers() << '\n';
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        const auto& w = p.weights[l];
        os << "dense " << w.rows() << ' ' << w.cols() << '\n';
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) os << (j ? " " : "") << w(i, j);
            os << '\n';
        }
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) os << (i ? " " : "") << p.biases[l](i);
        os << '\n';
    }
    os.precision(old);
}

template <typename Scalar>
MlpParams<Scalar> load_params(std::istream& is) {
    std::string tag, act;
    int version = 0;
    std::size_t layers = 0;
    if (!(is >> tag >> version >> act >> layers) || tag != "mlp" || version != 1)
        throw std::runtime_error("load_params: bad checkpoint header");
    MlpParams<Scalar> p;
    if (act == "relu") p.hidden = Activation::relu;
    else if (act == "tanh") p.hidden = Activation::tanh;
    else if (act == "identity") p.hidden = Activation::identity;
    else throw std::runtime_error("load_params: unknown activation " + act);
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::Index rows = 0, cols = 0;
        if (!(is >> tag >> rows >> cols) || tag != "dense" || rows < 1 || cols < 1)
            throw std::runtime_error("load_params: bad layer header");
        typename MlpParams<Scalar>::Matrix w(rows, cols);
        typename MlpParams<Scalar>::Vector b(rows);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) is >> w(i, j);
        for (Eigen::Index i = 0; i < rows; ++i) is >> b(i);
        if (!is) throw std::runtime_error("load_params: truncated layer data");
        if (l > 0 && cols != p.weights.back().rows())
            throw std::runtime_error("load_params: inconsistent layer sizes");
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

} // namespace mrrmb
