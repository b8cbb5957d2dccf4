#include "fsl/tensor.hpp"

#include <cmath>
#include <sstream>

namespace fsl {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

namespace {

void validate(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw ShapeError("tensor shape components must be >= 1, got " + s.str());
    }
}

}  // namespace

template <typename T>
Tensor4<T>::Tensor4(Shape shape, T fill) : shape_(shape) {
    validate(shape);
    data_.assign(shape.numel(), fill);
}

template <typename T>
Tensor4<T>::Tensor4(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    validate(shape);
    if (data_.size() != shape.numel()) {
        throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not match shape " +
                         shape.str());
    }
}

template <typename T>
T Tensor4<T>::item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
}

template <typename T>
void Tensor4<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor4<T>& Tensor4<T>::operator+=(const Tensor4& other) {
    check_same_shape(shape_, other.shape_, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

template <typename T>
Tensor4<T>& Tensor4<T>::operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
}

template <typename T>
bool Tensor4<T>::all_finite() const {
    for (auto v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template <typename T>
Tensor4<T> Tensor4<T>::reshaped(Shape s) const {
    if (s.numel() != shape_.numel()) {
        throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    }
    return Tensor4(s, data_);
}

template <typename T>
ComplexTensor4<T>::ComplexTensor4(Tensor4<T> r, Tensor4<T> i) : re(std::move(r)), im(std::move(i)) {
    check_same_shape(re.shape(), im.shape(), "ComplexTensor4");
}

template class Tensor4<float>;
template class Tensor4<double>;
template struct ComplexTensor4<float>;
template struct ComplexTensor4<double>;

}  // namespace fsl
