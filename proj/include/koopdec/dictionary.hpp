#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "koopdec/matrix_io.hpp"
#include "koopdec/network.hpp"
#include "koopdec/numerics.hpp"

namespace koopdec {

enum class DictionaryKind { identity, polynomial, thin_plate_rbf, neural, mixed_polynomial };

inline std::string to_string(DictionaryKind k) {
    switch (k) {
        case DictionaryKind::identity: return "identity";
        case DictionaryKind::polynomial: return "polynomial";
        case DictionaryKind::thin_plate_rbf: return "thin_plate_rbf";
        case DictionaryKind::neural: return "neural";
        case DictionaryKind::mixed_polynomial: return "mixed_polynomial";
    }
    return "identity";
}

/// A monomial as the sorted list of variable indices it multiplies, e.g.
/// {0, 0, 1} is v0^2 v1.
using Monomial = std::vector<int>;

namespace detail {

/// Monomials of total degree 1..max_degree in graded lexicographic order:
/// degree-major, then lexicographic in the sorted index list
/// (n = 2, degree 2: v0^2, v0 v1, v1^2).
inline std::vector<Monomial> graded_monomials(int n, int max_degree) {
    std::vector<Monomial> out;
    for (int degree = 1; degree <= max_degree; ++degree) {
        Monomial m(static_cast<std::size_t>(degree), 0);
        while (true) {
            out.push_back(m);
            int pos = degree - 1;
            while (pos >= 0 && m[static_cast<std::size_t>(pos)] == n - 1) --pos;
            if (pos < 0) break;
            const int next = m[static_cast<std::size_t>(pos)] + 1;
            for (int k = pos; k < degree; ++k) m[static_cast<std::size_t>(k)] = next;
        }
    }
    return out;
}

inline double eval_monomial(const Monomial& m, const Vector& v) {
    double p = 1.0;
    for (int i : m) p *= v(i);
    return p;
}

/// d/dv_j of the monomial.
inline double monomial_partial(const Monomial& m, const Vector& v, int j) {
    double total = 0.0;
    for (std::size_t skip = 0; skip < m.size(); ++skip) {
        if (m[skip] != j) continue;
        double p = 1.0;
        for (std::size_t k = 0; k < m.size(); ++k)
            if (k != skip) p *= v(m[k]);
        total += p;
    }
    return total;
}

/// Thin-plate spline r^2 log r (0 at r = 0).
inline double thin_plate(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

}  // namespace detail

/// A finite observable basis psi mapping vectors of `input_dim` entries to
/// `lifted_dim` entries.
///
/// State-type kinds (identity, polynomial, thin_plate_rbf, neural) are
/// state-inclusive: lift(v) starts with a verbatim copy of v, followed by the
/// nonlinear features. The mixed_polynomial kind acts on a concatenated
/// (x, w) and yields only monomials containing both an x and a w factor.
///
/// Feature order after the copied input:
///   polynomial:       graded-lex monomials of degree 2..d, then 1 if constant
///   thin_plate_rbf:   one feature per center, in center order
///   neural:           network outputs (minus network(0) when anchored)
///   mixed_polynomial: graded-lex monomials of degree 2..d in (x, w) that
///                     involve at least one x and one w index
class ObservableDictionary {
   public:
    static ObservableDictionary identity(Eigen::Index n) {
        koopdec::detail::require(n >= 1, "invalid_argument", "dictionary input_dim must be positive");
        ObservableDictionary d;
        d.kind_ = DictionaryKind::identity;
        d.input_dim_ = n;
        d.lifted_dim_ = n;
        return d;
    }

    static ObservableDictionary polynomial(Eigen::Index n, int max_degree, bool include_constant = false) {
        koopdec::detail::require(n >= 1 && max_degree >= 1, "invalid_argument",
                                 "polynomial dictionary needs n >= 1 and degree >= 1");
        ObservableDictionary d;
        d.kind_ = DictionaryKind::polynomial;
        d.input_dim_ = n;
        d.max_degree_ = max_degree;
        d.include_constant_ = include_constant;
        for (auto& m : detail::graded_monomials(static_cast<int>(n), max_degree))
            if (m.size() >= 2) d.monomials_.push_back(std::move(m));
        d.lifted_dim_ = n + static_cast<Eigen::Index>(d.monomials_.size()) + (include_constant ? 1 : 0);
        return d;
    }

    /// centers: n x c, one center per column.
    static ObservableDictionary thin_plate_rbf(const Matrix& centers, double scale) {
        koopdec::detail::require(centers.rows() >= 1 && centers.cols() >= 1, "invalid_argument",
                                 "thin-plate dictionary needs at least one center");
        koopdec::detail::require(scale > 0.0 && std::isfinite(scale), "invalid_argument",
                                 "thin-plate scale must be positive");
        numerics::require_finite(centers, "thin-plate centers");
        ObservableDictionary d;
        d.kind_ = DictionaryKind::thin_plate_rbf;
        d.input_dim_ = centers.rows();
        d.centers_ = centers;
        d.scale_ = scale;
        d.lifted_dim_ = centers.rows() + centers.cols();
        return d;
    }

    /// Centers drawn by uniform subsampling (without replacement) of the
    /// columns of `states`, with a fixed seed.
    static ObservableDictionary thin_plate_rbf_from_data(const Matrix& states, Eigen::Index count,
                                                         double scale, std::uint64_t seed) {
        koopdec::detail::require(count >= 1 && count <= states.cols(), "invalid_argument",
                                 "thin-plate center count must be in [1, #samples]");
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(states.cols()));
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(seed);
        for (Eigen::Index i = 0; i < count; ++i) {
            std::uniform_int_distribution<Eigen::Index> pick(i, states.cols() - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        Matrix centers(states.rows(), count);
        for (Eigen::Index i = 0; i < count; ++i) centers.col(i) = states.col(idx[static_cast<std::size_t>(i)]);
        return thin_plate_rbf(centers, scale);
    }

    /// Neural dictionary psi(v) = (v, net(v)) or, with anchor_at_zero,
    /// (v, net(v) - net(0)) so that psi(0) = 0.
    static ObservableDictionary neural(NetworkParams params, bool anchor_at_zero = false) {
        params.validate();
        ObservableDictionary d;
        d.kind_ = DictionaryKind::neural;
        d.input_dim_ = params.input_dim();
        d.lifted_dim_ = params.input_dim() + params.output_dim();
        d.anchor_ = anchor_at_zero;
        d.network_ = std::make_shared<const NetworkParams>(std::move(params));
        return d;
    }

    static ObservableDictionary neural(Eigen::Index n, Eigen::Index features, Eigen::Index width,
                                       std::size_t depth, Activation activation, std::uint64_t seed,
                                       bool anchor_at_zero = false) {
        return neural(nn::make_network(n, features, width, depth, activation, seed), anchor_at_zero);
    }

    /// Features over the concatenation (x, w) with x of length state_dim.
    static ObservableDictionary mixed_polynomial(Eigen::Index state_dim, Eigen::Index input_dim,
                                                 int max_degree) {
        koopdec::detail::require(state_dim >= 1 && input_dim >= 1 && max_degree >= 2, "invalid_argument",
                                 "mixed dictionary needs state/input dims >= 1 and degree >= 2");
        ObservableDictionary d;
        d.kind_ = DictionaryKind::mixed_polynomial;
        d.input_dim_ = state_dim + input_dim;
        d.state_dim_ = state_dim;
        d.max_degree_ = max_degree;
        const int sd = static_cast<int>(state_dim);
        for (auto& m : detail::graded_monomials(static_cast<int>(d.input_dim_), max_degree)) {
            const bool has_x = std::any_of(m.begin(), m.end(), [sd](int i) { return i < sd; });
            const bool has_w = std::any_of(m.begin(), m.end(), [sd](int i) { return i >= sd; });
            if (has_x && has_w) d.monomials_.push_back(std::move(m));
        }
        d.lifted_dim_ = static_cast<Eigen::Index>(d.monomials_.size());
        return d;
    }

    DictionaryKind kind() const { return kind_; }
    Eigen::Index input_dim() const { return input_dim_; }
    Eigen::Index lifted_dim() const { return lifted_dim_; }
    Eigen::Index feature_count() const {
        return kind_ == DictionaryKind::mixed_polynomial ? lifted_dim_ : lifted_dim_ - input_dim_;
    }
    bool state_inclusive() const { return kind_ != DictionaryKind::mixed_polynomial; }
    int max_degree() const { return max_degree_; }
    bool include_constant() const { return include_constant_; }
    bool anchored() const { return anchor_; }
    Eigen::Index state_dim() const { return state_dim_; }
    const std::vector<Monomial>& monomials() const { return monomials_; }
    const Matrix& centers() const { return centers_; }
    double scale() const { return scale_; }

    const NetworkParams& network() const {
        koopdec::detail::require(kind_ == DictionaryKind::neural, "wrong_kind",
                                 "dictionary is not neural");
        return *network_;
    }

    /// Copy of this neural dictionary with replaced parameters.
    ObservableDictionary with_network(NetworkParams params) const {
        koopdec::detail::require(kind_ == DictionaryKind::neural, "wrong_kind",
                                 "dictionary is not neural");
        return neural(std::move(params), anchor_);
    }

    Vector lift(const Vector& v) const {
        check_input(v);
        return lift_batch(v).col(0);
    }

    /// Lifts every column of `inputs` (input_dim x B) to lifted_dim x B.
    Matrix lift_batch(const Matrix& inputs) const {
        koopdec::detail::require(inputs.rows() == input_dim_, "dimension_mismatch",
                                 "lift: expected " + std::to_string(input_dim_) + " rows, got " +
                                     std::to_string(inputs.rows()));
        numerics::require_finite(inputs, "lift input");
        Matrix out(lifted_dim_, inputs.cols());
        switch (kind_) {
            case DictionaryKind::identity: out = inputs; break;
            case DictionaryKind::polynomial:
            case DictionaryKind::mixed_polynomial: {
                const Eigen::Index offset = state_inclusive() ? input_dim_ : 0;
                if (state_inclusive()) out.topRows(input_dim_) = inputs;
                for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
                    const Vector v = inputs.col(c);
                    for (std::size_t f = 0; f < monomials_.size(); ++f)
                        out(offset + static_cast<Eigen::Index>(f), c) = detail::eval_monomial(monomials_[f], v);
                }
                if (include_constant_) out.row(lifted_dim_ - 1).setOnes();
                break;
            }
            case DictionaryKind::thin_plate_rbf: {
                out.topRows(input_dim_) = inputs;
                for (Eigen::Index c = 0; c < inputs.cols(); ++c)
                    for (Eigen::Index k = 0; k < centers_.cols(); ++k)
                        out(input_dim_ + k, c) =
                            detail::thin_plate((inputs.col(c) - centers_.col(k)).norm() / scale_);
                break;
            }
            case DictionaryKind::neural: {
                out.topRows(input_dim_) = inputs;
                Matrix features = nn::forward(*network_, inputs);
                if (anchor_) features.colwise() -= network_at_zero();
                out.bottomRows(features.rows()) = features;
                break;
            }
        }
        return out;
    }

    /// Exact d lift / d v (lifted_dim x input_dim).
    Matrix lift_jacobian(const Vector& v) const {
        check_input(v);
        Matrix j = Matrix::Zero(lifted_dim_, input_dim_);
        switch (kind_) {
            case DictionaryKind::identity: j.setIdentity(); break;
            case DictionaryKind::polynomial:
            case DictionaryKind::mixed_polynomial: {
                const Eigen::Index offset = state_inclusive() ? input_dim_ : 0;
                if (state_inclusive()) j.topRows(input_dim_).setIdentity();
                for (std::size_t f = 0; f < monomials_.size(); ++f)
                    for (Eigen::Index k = 0; k < input_dim_; ++k)
                        j(offset + static_cast<Eigen::Index>(f), k) =
                            detail::monomial_partial(monomials_[f], v, static_cast<int>(k));
                break;
            }
            case DictionaryKind::thin_plate_rbf: {
                j.topRows(input_dim_).setIdentity();
                // d/dv [r^2 log r] with r = |v - c| / s is (2 log r + 1)(v - c) / s^2.
                for (Eigen::Index k = 0; k < centers_.cols(); ++k) {
                    const Vector diff = v - centers_.col(k);
                    const double r = diff.norm() / scale_;
                    if (r > 0.0)
                        j.row(input_dim_ + k) = ((2.0 * std::log(r) + 1.0) / (scale_ * scale_)) * diff.transpose();
                }
                break;
            }
            case DictionaryKind::neural:
                j.topRows(input_dim_).setIdentity();
                j.bottomRows(network_->output_dim()) = nn::jacobian(*network_, v);
                break;
        }
        return j;
    }

    /// Gradient of <upstream, lift(v)> with respect to every network weight
    /// and bias.
    NetworkGradient parameter_gradient(const Vector& v, const Vector& upstream) const {
        koopdec::detail::require(kind_ == DictionaryKind::neural, "wrong_kind",
                                 "parameter_gradient needs a neural dictionary");
        check_input(v);
        koopdec::detail::require(upstream.size() == lifted_dim_, "dimension_mismatch",
                                 "upstream length must equal lifted_dim");
        return parameter_gradient_batch(v, upstream);
    }

    /// Batched form: inputs input_dim x B, upstream lifted_dim x B; returns the
    /// gradient summed over the batch.
    NetworkGradient parameter_gradient_batch(const Matrix& inputs, const Matrix& upstream) const {
        koopdec::detail::require(kind_ == DictionaryKind::neural, "wrong_kind",
                                 "parameter_gradient needs a neural dictionary");
        const Matrix feature_up = upstream.bottomRows(network_->output_dim());
        nn::ForwardCache cache;
        nn::forward(*network_, inputs, &cache);
        NetworkGradient g = nn::backward(*network_, cache, feature_up);
        if (anchor_) {
            nn::ForwardCache zero_cache;
            nn::forward(*network_, Matrix::Zero(input_dim_, 1), &zero_cache);
            g -= nn::backward(*network_, zero_cache, feature_up.rowwise().sum());
        }
        return g;
    }

    io::json to_json() const {
        io::json j{{"kind", to_string(kind_)}, {"input_dim", input_dim_}};
        switch (kind_) {
            case DictionaryKind::identity: break;
            case DictionaryKind::polynomial:
                j["max_degree"] = max_degree_;
                j["include_constant"] = include_constant_;
                break;
            case DictionaryKind::thin_plate_rbf:
                j["centers"] = io::matrix_to_json_exact(centers_);
                j["scale"] = scale_;
                break;
            case DictionaryKind::neural:
                j["anchor_at_zero"] = anchor_;
                j["network"] = nn::to_json(*network_);
                break;
            case DictionaryKind::mixed_polynomial:
                j["state_dim"] = state_dim_;
                j["max_degree"] = max_degree_;
                break;
        }
        return j;
    }

    static ObservableDictionary from_json(const io::json& j) {
        koopdec::detail::require(j.is_object() && j.contains("kind"), "parse_error",
                                 "dictionary spec needs a 'kind'");
        const auto kind = j.at("kind").get<std::string>();
        const auto n = j.at("input_dim").get<Eigen::Index>();
        if (kind == "identity") return identity(n);
        if (kind == "polynomial")
            return polynomial(n, j.at("max_degree").get<int>(), j.value("include_constant", false));
        if (kind == "thin_plate_rbf") {
            auto d = thin_plate_rbf(io::matrix_from_json(j.at("centers")), j.at("scale").get<double>());
            koopdec::detail::require(d.input_dim() == n, "parse_error", "centers do not match input_dim");
            return d;
        }
        if (kind == "neural") {
            auto d = neural(nn::network_from_json(j.at("network")), j.value("anchor_at_zero", false));
            koopdec::detail::require(d.input_dim() == n, "parse_error", "network does not match input_dim");
            return d;
        }
        if (kind == "mixed_polynomial") {
            const auto sd = j.at("state_dim").get<Eigen::Index>();
            return mixed_polynomial(sd, n - sd, j.at("max_degree").get<int>());
        }
        koopdec::detail::fail("parse_error", "unknown dictionary kind '" + kind + "'");
    }

   private:
    ObservableDictionary() = default;

    void check_input(const Vector& v) const {
        koopdec::detail::require(v.size() == input_dim_, "dimension_mismatch",
                                 "lift: expected length " + std::to_string(input_dim_) + ", got " +
                                     std::to_string(v.size()));
        numerics::require_finite(v, "lift input");
    }

    Vector network_at_zero() const { return nn::forward(*network_, Matrix::Zero(input_dim_, 1)).col(0); }

    DictionaryKind kind_ = DictionaryKind::identity;
    Eigen::Index input_dim_ = 0;
    Eigen::Index lifted_dim_ = 0;
    Eigen::Index state_dim_ = 0;
    int max_degree_ = 1;
    bool include_constant_ = false;
    bool anchor_ = false;
    std::vector<Monomial> monomials_;
    Matrix centers_;
    double scale_ = 1.0;
    std::shared_ptr<const NetworkParams> network_;
};

}  // namespace koopdec
