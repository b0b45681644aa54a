#include "calad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "calad/errors.hpp"

namespace calad {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::scalar(double v) {
    Tensor t(Shape{});
    t.data.assign(1, v);
    return t;
}

Tensor Tensor::full(Shape s, double v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
}

double Tensor::scalar_value() const {
    if (data.size() != 1) {
        throw UsageError("scalar_value() on tensor of shape " + shape_str(shape));
    }
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

}  // namespace calad
