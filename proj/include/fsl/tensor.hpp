#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsl {

/// Raised for any shape contract violation. The message names the shapes involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// (batch, channels, rows, cols)
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    [[nodiscard]] std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    [[nodiscard]] std::string str() const;
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense rank-4 array in NCHW order. Value type; copies are deep.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;
    explicit Tensor4(Shape shape, T fill = T(0));
    Tensor4(Shape shape, std::vector<T> data);

    static Tensor4 zeros(Shape shape) { return Tensor4(shape); }
    static Tensor4 full(Shape shape, T v) { return Tensor4(shape, v); }
    static Tensor4 scalar(T v) { return Tensor4(Shape{1, 1, 1, 1}, v); }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] int n() const { return shape_.n; }
    [[nodiscard]] int c() const { return shape_.c; }
    [[nodiscard]] int h() const { return shape_.h; }
    [[nodiscard]] int w() const { return shape_.w; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::span<T> data() { return data_; }
    [[nodiscard]] std::span<const T> data() const { return data_; }
    [[nodiscard]] T* ptr() { return data_.data(); }
    [[nodiscard]] const T* ptr() const { return data_.data(); }

    [[nodiscard]] std::size_t index(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
    const T& operator()(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Pointer to the (b, ch) image plane.
    T* plane(int b, int ch) { return data_.data() + index(b, ch, 0, 0); }
    const T* plane(int b, int ch) const { return data_.data() + index(b, ch, 0, 0); }

    [[nodiscard]] T item() const;
    void fill(T v);
    Tensor4& operator+=(const Tensor4& other);
    Tensor4& operator*=(T s);

    [[nodiscard]] bool all_finite() const;
    /// Same data viewed under another shape with identical element count.
    [[nodiscard]] Tensor4 reshaped(Shape s) const;

    template <typename U>
    [[nodiscard]] Tensor4<U> cast() const {
        Tensor4<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

/// Paired real and imaginary planes of a (half-)spectrum.
template <typename T>
struct ComplexTensor4 {
    Tensor4<T> re;
    Tensor4<T> im;

    ComplexTensor4() = default;
    explicit ComplexTensor4(Shape s) : re(s), im(s) {}
    ComplexTensor4(Tensor4<T> r, Tensor4<T> i);

    [[nodiscard]] const Shape& shape() const { return re.shape(); }
};

void check_same_shape(const Shape& a, const Shape& b, const char* op);

extern template class Tensor4<float>;
extern template class Tensor4<double>;
extern template struct ComplexTensor4<float>;
extern template struct ComplexTensor4<double>;

}  // namespace fsl
