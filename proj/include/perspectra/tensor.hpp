#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace perspectra {

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

} // namespace detail

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major tensor of doubles. A rank-0 tensor (empty shape) is a scalar.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_product(shape) != data.size())
            throw std::invalid_argument(detail::concat(
                "tensor: shape ", shape_str(shape), " implies ", shape_product(shape),
                " values but ", data.size(), " were given"));
        for (std::size_t dim : shape)
            if (dim == 0) throw std::invalid_argument("tensor: zero-sized dimension");
    }

    static Tensor zeros(Shape s) {
        std::size_t n = shape_product(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape s, double v) {
        std::size_t n = shape_product(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return shape.empty(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-d access, row-major
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Throws if the tensor holds a NaN or infinity. `where` names the producing op.
inline void check_finite(const Tensor& t, const std::string& where) {
    if (!all_finite(t))
        throw std::runtime_error(detail::concat(where, ": non-finite value in tensor ",
                                                shape_str(t.shape)));
}

} // namespace perspectra
