#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdiff/rng.hpp"

namespace sdiff {

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
}

// Dense row-major float64 tensor. Treated as an immutable value once built:
// library operations allocate fresh storage and never write through a shared
// handle, so copies are cheap and safe to share across threads.
class Tensor {
public:
    Tensor() : shape_{}, data_(std::make_shared<std::vector<double>>()) {}

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(checked_numel(shape_), 0.0)) {}

    Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)) {
        if (data.size() != checked_numel(shape_))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + sdiff::shape_str(shape_));
        data_ = std::make_shared<std::vector<double>>(std::move(data));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = v;
        return t;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor gaussian(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = stddev * rng.normal();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return int(shape_.size()); }
    int dim(int i) const { return shape_.at(size_t(i)); }
    size_t size() const { return data_->size(); }

    double operator[](size_t i) const { return (*data_)[i]; }
    const double* data() const { return data_->data(); }

    // Only valid while this handle is the sole owner (construction time).
    double* mutable_data() { return data_->data(); }

    double item() const {
        if (size() != 1)
            throw std::invalid_argument("item(): tensor of shape " + sdiff::shape_str(shape_) +
                                        " is not scalar");
        return (*data_)[0];
    }

    // fresh storage, for call sites that go on to mutate
    Tensor clone() const { return Tensor(shape_, std::vector<double>(*data_)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const { return sdiff::shape_str(shape_); }

    bool all_finite() const {
        for (double x : *data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    // index of first non-finite entry, or size() if all finite
    size_t first_nonfinite() const {
        for (size_t i = 0; i < data_->size(); ++i)
            if (!std::isfinite((*data_)[i])) return i;
        return data_->size();
    }

    // default-constructed tensors act as an "absent" placeholder
    bool defined() const { return !data_->empty(); }

private:
    static size_t checked_numel(const std::vector<int>& shape) {
        for (int d : shape)
            if (d < 1)
                throw std::invalid_argument("Tensor: non-positive extent in shape " +
                                            sdiff::shape_str(shape));
        return numel_of(shape);
    }

    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

}  // namespace sdiff
