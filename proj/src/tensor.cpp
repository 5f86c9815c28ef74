#include "tensor.hpp"

#include <cmath>

namespace pxf {

int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (T v : data) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

void require_same_shape(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace pxf
