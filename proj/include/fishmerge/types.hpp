#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fishmerge {

/// Malformed files, incompatible shapes, invalid domain values.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values, diverging optimizers and the like.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Array = Eigen::ArrayXd;

/// Dense n-d tensor stored flat in row-major order, 64-bit reals only.
struct Tensor {
    std::vector<std::int64_t> shape;
    Array data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, Array d) : shape(std::move(s)), data(std::move(d)) {}

    std::int64_t size() const {
        std::int64_t n = 1;
        for (const auto d : shape) n *= d;
        return n;
    }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    /// Row-major matrix view of a rank-2 tensor.
    auto matrix() const {
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        return Eigen::Map<const RowMajor>(data.data(), shape.at(0), shape.at(1));
    }
    auto matrix() {
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        return Eigen::Map<RowMajor>(data.data(), shape.at(0), shape.at(1));
    }
    auto vector() const { return Eigen::Map<const Vector>(data.data(), data.size()); }
};

inline Tensor make_tensor(std::vector<std::int64_t> shape) {
    std::int64_t n = 1;
    for (const auto d : shape) {
        if (d <= 0) throw DataError("tensor shape: dimensions must be positive");
        n *= d;
    }
    return Tensor(std::move(shape), Array::Zero(n));
}

/// Named tensors in canonical (name-sorted) order; the common shape of
/// parameters, gradients and Fisher diagonals.
using NamedTensors = std::map<std::string, Tensor>;

enum class Role { Body, Head };
using RoleTags = std::map<std::string, Role>;

inline std::string role_name(Role r) { return r == Role::Body ? "body" : "head"; }
inline Role role_from_name(const std::string& s) {
    if (s == "body") return Role::Body;
    if (s == "head") return Role::Head;
    throw DataError("unknown role tag: " + s);
}

/// The home of a model's parameters. lineage_id identifies the shared
/// initialization; merging across lineages is an error.
struct ParameterSet {
    NamedTensors entries;
    std::string lineage_id;

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : entries) n += t.size();
        return n;
    }
};

/// Throws unless every element of every tensor is finite and names are valid.
void validate(const ParameterSet& params);

/// True iff both maps have identical names and shapes.
bool congruent(const NamedTensors& a, const NamedTensors& b);

/// Elementwise congruence check with a diagnostic error.
void require_congruent(const NamedTensors& a, const NamedTensors& b, const std::string& what);

}  // namespace fishmerge
