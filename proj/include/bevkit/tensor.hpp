#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bevkit {

// Dense row-major N-d array of doubles, rank <= 5, all extents >= 1.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(count(), fill);
        compute_strides();
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (data.size() != t.count()) {
            throw std::invalid_argument(
                "Tensor::from_data: data length " + std::to_string(data.size()) +
                " does not match shape product " + std::to_string(t.count()));
        }
        t.data_ = std::move(data);
        t.compute_strides();
        return t;
    }

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Ix>
    double& operator()(Ix... ix) {
        return data_[offset(ix...)];
    }
    template <typename... Ix>
    double operator()(Ix... ix) const {
        return data_[offset(ix...)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ',';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

private:
    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t e : shape_) n *= e;
        return n;
    }

    void validate_shape() const {
        if (shape_.empty() || shape_.size() > 5) {
            throw std::invalid_argument("Tensor: rank must be in [1,5], got " +
                                        std::to_string(shape_.size()));
        }
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] < 1) {
                throw std::invalid_argument("Tensor: extent of axis " + std::to_string(i) +
                                            " must be >= 1");
            }
        }
    }

    void compute_strides() {
        strides_.assign(shape_.size(), 1);
        for (std::size_t i = shape_.size(); i-- > 1;) {
            strides_[i - 1] = strides_[i] * shape_[i];
        }
    }

    template <typename... Ix>
    std::size_t offset(Ix... ix) const {
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        std::size_t off = 0;
        for (std::size_t i = 0; i < sizeof...(Ix); ++i) off += idx[i] * strides_[i];
        return off;
    }

    std::vector<std::size_t> shape_;
    std::vector<std::size_t> strides_;
    std::vector<double> data_;
};

// Value plus an accumulated cotangent of identical shape.
struct DualTensor {
    Tensor value;
    Tensor grad;

    explicit DualTensor(Tensor v) : value(std::move(v)), grad(value.shape(), 0.0) {}
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

inline void require_rank(const Tensor& t, std::size_t r, const char* what) {
    if (t.rank() != r) {
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(r) +
                                    ", got " + std::to_string(t.rank()));
    }
}

}  // namespace bevkit
