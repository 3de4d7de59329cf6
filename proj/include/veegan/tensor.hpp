#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace veegan::nd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes do not conform. The message names the op and both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN or Inf.
class NonFiniteError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

namespace detail {

void* buffer_alloc(std::size_t bytes);
void buffer_free(void* p, std::size_t bytes) noexcept;

/// Recycles freed buffers per size on the calling thread and skips value-initialization.
template <class T>
struct BufferAllocator {
    using value_type = T;
    BufferAllocator() = default;
    template <class U>
    BufferAllocator(const BufferAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(buffer_alloc(n * sizeof(T))); }
    void deallocate(T* p, std::size_t n) noexcept { buffer_free(p, n * sizeof(T)); }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0) ::new (static_cast<void*>(p)) U;
        else ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
    template <class U>
    friend bool operator==(const BufferAllocator&, const BufferAllocator<U>&) noexcept { return true; }
};

}  // namespace detail

using Buffer = std::vector<double, detail::BufferAllocator<double>>;

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one scalar.
class Tensor {
public:
    Tensor() : shape_{0} {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    /// Tensor whose contents are unspecified until written.
    static Tensor uninitialized(Shape shape);
    static Tensor scalar(double value);
    /// Builds a 2D tensor from nested rows; all rows must have equal length.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Leading extent (batch size). Rank-0 tensors report 1.
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
    /// Number of elements per leading-dim slice.
    std::size_t cols() const noexcept { return rows() == 0 ? 0 : size() / rows(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::vector<double> values() const { return {data_.begin(), data_.end()}; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    /// Value of a single-element tensor.
    double item() const;

    Tensor reshaped(Shape shape) const;
    Tensor row(std::size_t r) const;

    bool all_finite() const noexcept;

    /// Exact elementwise comparison of shape and data (no tolerance).
    friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

private:
    Shape shape_;
    Buffer data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace veegan::nd
