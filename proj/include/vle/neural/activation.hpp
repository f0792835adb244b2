/**
 * @file activation.hpp
 * @brief The twelve hidden-layer activations, elementwise and layer-wise.
 */
#pragma once

#include "vle/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

namespace vle::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation {
    linear,
    relu,
    relu6,
    leaky_relu,
    prelu,
    crelu,
    elu,
    selu,
    tanh,
    sigmoid,
    softplus,
    softsign
};

inline constexpr std::array<Activation, 12> all_activations{
    Activation::linear, Activation::relu,    Activation::relu6,   Activation::leaky_relu,
    Activation::prelu,  Activation::crelu,   Activation::elu,     Activation::selu,
    Activation::tanh,   Activation::sigmoid, Activation::softplus, Activation::softsign};

inline constexpr std::array<std::string_view, 12> activation_labels{
    "linear", "relu", "relu6", "leaky_relu", "prelu", "crelu",
    "elu",    "selu", "tanh",  "sigmoid",    "softplus", "softsign"};

inline std::string_view to_string(Activation a)
{
    return activation_labels[static_cast<std::size_t>(a)];
}

inline Activation parse_activation(std::string_view s)
{
    std::string low(s);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::replace(low.begin(), low.end(), '-', '_');
    if (low == "leaky" || low == "leakyrelu")
        low = "leaky_relu";
    for (std::size_t i = 0; i < activation_labels.size(); ++i)
        if (activation_labels[i] == low)
            return all_activations[i];
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

/// Output rows per input row (CReLU concatenates both signs).
inline std::size_t width_factor(Activation a) { return a == Activation::crelu ? 2 : 1; }

inline constexpr double leaky_slope = 0.1;
inline constexpr double selu_lambda = 1.0507009873554804934193349852946;
inline constexpr double selu_alpha = 1.6732632423543772848170429916717;
inline constexpr double prelu_initial_slope = 0.25;

namespace detail {

inline double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Overflow-free logistic of an array: exp of -|x| only.
template <class Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& x)
{
    using Plain = typename Derived::PlainObject;
    using S = typename Derived::Scalar;
    const Plain e = (-x.abs()).exp();
    return Plain((x >= S(0)).select(S(1) / (S(1) + e), e / (S(1) + e)));
}

/// tanh through exp(-2|x|), which Eigen vectorizes (its own tanh does not
/// for double).
template <class Derived>
auto tanh_array(const Eigen::ArrayBase<Derived>& x)
{
    using Plain = typename Derived::PlainObject;
    using S = typename Derived::Scalar;
    const Plain e = (S(-2) * x.abs()).exp();
    const Plain t = (S(1) - e) / (S(1) + e);
    return Plain((x < S(0)).select(-t, t));
}

} // namespace detail

/// f(x) for every elementwise kind; `slope` is the PReLU parameter.
inline double activation_apply(Activation a, double x, double slope = prelu_initial_slope)
{
    switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::relu6: return std::clamp(x, 0.0, 6.0);
    case Activation::leaky_relu: return x > 0.0 ? x : leaky_slope * x;
    case Activation::prelu: return x > 0.0 ? x : slope * x;
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::selu: return selu_lambda * (x > 0.0 ? x : selu_alpha * std::expm1(x));
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return detail::sigmoid(x);
    case Activation::softplus: return detail::softplus(x);
    case Activation::softsign: return x / (1.0 + std::abs(x));
    case Activation::crelu: break;
    }
    throw ConfigError("crelu is not elementwise; apply it to a layer");
}

/// df/dx.
inline double activation_grad(Activation a, double x, double slope = prelu_initial_slope)
{
    switch (a) {
    case Activation::linear: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::relu6: return (x > 0.0 && x < 6.0) ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : leaky_slope;
    case Activation::prelu: return x > 0.0 ? 1.0 : slope;
    case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::selu: return selu_lambda * (x > 0.0 ? 1.0 : selu_alpha * std::exp(x));
    case Activation::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case Activation::sigmoid: {
        const double s = detail::sigmoid(x);
        return s * (1.0 - s);
    }
    case Activation::softplus: return detail::sigmoid(x);
    case Activation::softsign: {
        const double d = 1.0 + std::abs(x);
        return 1.0 / (d * d);
    }
    case Activation::crelu: break;
    }
    throw ConfigError("crelu is not elementwise; apply it to a layer");
}

/// Elementwise kinds applied to a whole array at once.
template <class Derived>
typename Derived::PlainObject activate_array(Activation a, const Eigen::ArrayBase<Derived>& x,
                                             typename Derived::Scalar slope)
{
    using S = typename Derived::Scalar;
    switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return x.max(S(0));
    case Activation::relu6: return x.max(S(0)).min(S(6));
    case Activation::leaky_relu: return x.max(S(leaky_slope) * x);
    case Activation::prelu: return (x > S(0)).select(x, slope * x);
    case Activation::elu: return (x > S(0)).select(x, x.min(S(0)).exp() - S(1));
    case Activation::selu:
        return S(selu_lambda) * (x > S(0)).select(x, S(selu_alpha) * (x.min(S(0)).exp() - S(1)));
    case Activation::tanh: return detail::tanh_array(x);
    case Activation::sigmoid: return detail::sigmoid_array(x);
    case Activation::softplus: return x.max(S(0)) + (S(1) + (-x.abs()).exp()).log();
    case Activation::softsign: return x / (S(1) + x.abs());
    case Activation::crelu: break;
    }
    throw ConfigError("crelu is not elementwise; apply it to a layer");
}

/// Layer form: rows of `z` are units, columns samples.
inline Matrix activate(Activation a, const Matrix& z, double slope = prelu_initial_slope)
{
    if (a == Activation::crelu) {
        Matrix out(2 * z.rows(), z.cols());
        out.topRows(z.rows()) = z.cwiseMax(0.0);
        out.bottomRows(z.rows()) = (-z).cwiseMax(0.0);
        return out;
    }
    return activate_array(a, z.array(), slope).matrix();
}

/// dL/dz from dL/d(activate(z)). For PReLU, `dslope` receives dL/dslope.
inline Matrix activation_backward(Activation a, const Matrix& z, const Matrix& grad_out, double slope = prelu_initial_slope,
                                  double* dslope = nullptr)
{
    if (a == Activation::crelu) {
        const Matrix pos = (z.array() > 0.0).cast<double>();
        const Matrix neg = (z.array() < 0.0).cast<double>();
        return grad_out.topRows(z.rows()).cwiseProduct(pos) - grad_out.bottomRows(z.rows()).cwiseProduct(neg);
    }
    if (a == Activation::linear)
        return grad_out;
    if (a == Activation::prelu && dslope)
        *dslope = (z.array() < 0.0).select(z.array() * grad_out.array(), 0.0).sum();
    const auto x = z.array();
    const auto g = grad_out.array();
    switch (a) {
    case Activation::relu: return (x > 0.0).select(g, 0.0).matrix();
    case Activation::elu: return (x > 0.0).select(g, g * x.min(0.0).exp()).matrix();
    case Activation::selu: return (selu_lambda * (x > 0.0).select(g, selu_alpha * g * x.min(0.0).exp())).matrix();
    case Activation::tanh: {
        const Eigen::ArrayXXd t = detail::tanh_array(x);
        return (g * (1.0 - t.square())).matrix();
    }
    case Activation::sigmoid: {
        const Eigen::ArrayXXd s = detail::sigmoid_array(x);
        return (g * s * (1.0 - s)).matrix();
    }
    case Activation::softplus: return (g * detail::sigmoid_array(x)).matrix();
    case Activation::softsign: return (g / (1.0 + x.abs()).square()).matrix();
    default: break;
    }
    return grad_out.cwiseProduct(z.unaryExpr([a, slope](double v) { return activation_grad(a, v, slope); }));
}

} // namespace vle::nn
