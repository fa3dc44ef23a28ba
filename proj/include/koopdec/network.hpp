#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "koopdec/matrix_io.hpp"
#include "koopdec/numerics.hpp"

namespace koopdec {

enum class Activation { elu, tanh, identity };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::elu: return "elu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "elu";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "elu") return Activation::elu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    detail::fail("invalid_argument", "unknown activation '" + s + "'");
}

/// Weights and biases of a plain feedforward stack h_L o ... o h_1 with
/// h_l(v) = act(W_l v + b_l). When `linear_output` is set the last layer
/// skips the activation.
struct NetworkParams {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Activation activation = Activation::elu;
    bool linear_output = false;

    std::size_t depth() const { return weights.size(); }
    Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
    Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().rows(); }
    Eigen::Index width() const {
        Eigen::Index w = 0;
        for (std::size_t l = 0; l + 1 < weights.size(); ++l) w = std::max(w, weights[l].rows());
        return w;
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    void validate() const {
        detail::require(!weights.empty(), "invalid_network", "network has no layers");
        detail::require(weights.size() == biases.size(), "invalid_network",
                        "weights and biases differ in layer count");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            detail::require(biases[l].size() == weights[l].rows(), "invalid_network",
                            "bias length does not match layer " + std::to_string(l));
            if (l > 0) {
                detail::require(weights[l].cols() == weights[l - 1].rows(), "invalid_network",
                                "layer " + std::to_string(l) + " does not chain");
            }
            numerics::require_finite(weights[l], "network weights");
            numerics::require_finite(biases[l], "network biases");
        }
    }
};

/// Same layout as NetworkParams; holds d(objective)/d(parameter).
struct NetworkGradient {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static NetworkGradient zeros_like(const NetworkParams& p) {
        NetworkGradient g;
        for (std::size_t l = 0; l < p.depth(); ++l) {
            g.weights.push_back(Matrix::Zero(p.weights[l].rows(), p.weights[l].cols()));
            g.biases.push_back(Vector::Zero(p.biases[l].size()));
        }
        return g;
    }

    NetworkGradient& operator+=(const NetworkGradient& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] += o.weights[l];
            biases[l] += o.biases[l];
        }
        return *this;
    }
    NetworkGradient& operator-=(const NetworkGradient& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] -= o.weights[l];
            biases[l] -= o.biases[l];
        }
        return *this;
    }
};

namespace nn {

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::elu: return x > 0.0 ? x : std::expm1(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

inline double activate_derivative(Activation a, double x) {
    switch (a) {
        case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

inline Activation layer_activation(const NetworkParams& p, std::size_t layer) {
    return (p.linear_output && layer + 1 == p.depth()) ? Activation::identity : p.activation;
}

/// Pre-activations per layer, kept for the backward pass. Column j of every
/// matrix belongs to input column j.
struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[l] feeds layer l
    std::vector<Matrix> pre;     // W_l * inputs[l] + b_l
};

inline Matrix forward(const NetworkParams& p, const Matrix& inputs, ForwardCache* cache = nullptr) {
    Matrix a = inputs;
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    for (std::size_t l = 0; l < p.depth(); ++l) {
        Matrix z = p.weights[l] * a;
        z.colwise() += p.biases[l];
        if (cache) {
            cache->inputs.push_back(a);
            cache->pre.push_back(z);
        }
        const Activation act = layer_activation(p, l);
        a = z.unaryExpr([act](double x) { return activate(act, x); });
    }
    return a;
}

/// Reverse pass: given upstream = d(objective)/d(output) (out x B), returns
/// the parameter gradient summed over the batch. When `input_grad` is given
/// it receives d(objective)/d(inputs).
inline NetworkGradient backward(const NetworkParams& p, const ForwardCache& cache,
                                const Matrix& upstream, Matrix* input_grad = nullptr) {
    NetworkGradient g = NetworkGradient::zeros_like(p);
    Matrix delta = upstream;
    for (std::size_t l = p.depth(); l-- > 0;) {
        const Activation act = layer_activation(p, l);
        delta = delta.cwiseProduct(
            cache.pre[l].unaryExpr([act](double x) { return activate_derivative(act, x); }));
        g.weights[l] = delta * cache.inputs[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > 0 || input_grad) delta = p.weights[l].transpose() * delta;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

/// Jacobian of the network output at a single input, accumulated from the
/// output layer backwards: J = D_L W_L D_{L-1} W_{L-1} ... D_1 W_1.
inline Matrix jacobian(const NetworkParams& p, const Vector& v) {
    ForwardCache cache;
    forward(p, v, &cache);
    Matrix j;
    for (std::size_t l = p.depth(); l-- > 0;) {
        const Activation act = layer_activation(p, l);
        Vector d = cache.pre[l].col(0).unaryExpr([act](double x) { return activate_derivative(act, x); });
        Matrix layer = d.asDiagonal() * p.weights[l];
        j = (l + 1 == p.depth()) ? layer : Matrix(j * layer);
    }
    return j;
}

/// Random initialization: weights N(0, 1/fan_in), biases N(0, 0.1^2).
/// `depth` counts weight layers; hidden layers have `width` units.
inline NetworkParams make_network(Eigen::Index input_dim, Eigen::Index output_dim, Eigen::Index width,
                                  std::size_t depth, Activation activation, std::uint64_t seed,
                                  bool linear_output = false) {
    detail::require(input_dim >= 1 && output_dim >= 1 && width >= 1 && depth >= 1, "invalid_network",
                    "network dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    NetworkParams p;
    p.activation = activation;
    p.linear_output = linear_output;
    Eigen::Index in = input_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        const Eigen::Index out = (l + 1 == depth) ? output_dim : width;
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        Matrix w(out, in);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
        Vector b(out);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.1 * normal(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
        in = out;
    }
    return p;
}

inline io::json to_json(const NetworkParams& p) {
    io::json layers = io::json::array();
    for (std::size_t l = 0; l < p.depth(); ++l) {
        io::json rows = io::json::array();
        for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) {
            io::json row = io::json::array();
            for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) row.push_back(p.weights[l](i, j));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"weights", std::move(rows)}, {"bias", io::vector_to_json(p.biases[l])}});
    }
    return {{"activation", to_string(p.activation)}, {"linear_output", p.linear_output}, {"layers", layers}};
}

inline NetworkParams network_from_json(const io::json& j) {
    NetworkParams p;
    p.activation = activation_from_string(j.at("activation").get<std::string>());
    p.linear_output = j.value("linear_output", false);
    for (const auto& layer : j.at("layers")) {
        const auto& rows = layer.at("weights");
        detail::require(rows.is_array() && !rows.empty(), "parse_error", "empty weight matrix");
        Matrix w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            detail::require(rows[i].size() == static_cast<std::size_t>(w.cols()), "parse_error",
                            "ragged weight matrix");
            for (std::size_t k = 0; k < rows[i].size(); ++k)
                w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k].get<double>();
        }
        p.weights.push_back(std::move(w));
        p.biases.push_back(io::vector_from_json(layer.at("bias")));
    }
    p.validate();
    return p;
}

}  // namespace nn
}  // namespace koopdec
